//! Small closed-form expression trees with symbolic differentiation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    Const { value: f64 },
    Var { index: usize },
    Add { args: Vec<Expr> },
    Mul { args: Vec<Expr> },
    Pow { base: Box<Expr>, exp: f64 },
    Log { arg: Box<Expr> },
    Exp { arg: Box<Expr> },
}

impl Expr {
    pub fn c(value: f64) -> Expr {
        Expr::Const { value }
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var { index }
    }

    pub fn zero() -> Expr {
        Expr::c(0.0)
    }

    pub fn add(args: Vec<Expr>) -> Expr {
        Expr::Add { args }.simplify()
    }

    pub fn mul(args: Vec<Expr>) -> Expr {
        Expr::Mul { args }.simplify()
    }

    pub fn pow(base: Expr, exp: f64) -> Expr {
        Expr::Pow { base: Box::new(base), exp }.simplify()
    }

    pub fn log(arg: Expr) -> Expr {
        Expr::Log { arg: Box::new(arg) }.simplify()
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::Exp { arg: Box::new(arg) }.simplify()
    }

    /// `⟨b,x⟩ + c`.
    pub fn affine(b: &[f64], c: f64) -> Expr {
        let mut args = vec![Expr::c(c)];
        for (i, bi) in b.iter().enumerate() {
            args.push(Expr::mul(vec![Expr::c(*bi), Expr::var(i)]));
        }
        Expr::add(args)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const { value } => Some(*value),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const { value } => *value,
            Expr::Var { index } => x[*index],
            Expr::Add { args } => args.iter().map(|a| a.eval(x)).sum(),
            Expr::Mul { args } => args.iter().map(|a| a.eval(x)).product(),
            Expr::Pow { base, exp } => {
                let b = base.eval(x);
                if exp.fract() == 0.0 && exp.abs() < 64.0 {
                    b.powi(*exp as i32)
                } else {
                    b.powf(*exp)
                }
            }
            Expr::Log { arg } => arg.eval(x).ln(),
            Expr::Exp { arg } => arg.eval(x).exp(),
        }
    }

    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Expr::Const { .. } => Expr::zero(),
            Expr::Var { index } => Expr::c(if *index == i { 1.0 } else { 0.0 }),
            Expr::Add { args } => Expr::add(args.iter().map(|a| a.diff(i)).collect()),
            Expr::Mul { args } => {
                let mut terms = Vec::new();
                for k in 0..args.len() {
                    let dk = args[k].diff(i);
                    if dk.is_zero() {
                        continue;
                    }
                    let mut f: Vec<Expr> = args.clone();
                    f[k] = dk;
                    terms.push(Expr::mul(f));
                }
                Expr::add(terms)
            }
            Expr::Pow { base, exp } => {
                let db = base.diff(i);
                if db.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(vec![Expr::c(*exp), Expr::pow((**base).clone(), exp - 1.0), db])
            }
            Expr::Log { arg } => {
                let da = arg.diff(i);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(vec![da, Expr::pow((**arg).clone(), -1.0)])
            }
            Expr::Exp { arg } => {
                let da = arg.diff(i);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(vec![da, self.clone()])
            }
        }
    }

    /// Constant folding and flattening; removes additive zeros and multiplicative ones.
    pub fn simplify(self) -> Expr {
        match self {
            Expr::Add { args } => {
                let mut out = Vec::new();
                let mut k = 0.0;
                for a in args {
                    match a.simplify() {
                        Expr::Const { value } => k += value,
                        Expr::Add { args: inner } => out.extend(inner),
                        e => out.push(e),
                    }
                }
                if k != 0.0 {
                    out.insert(0, Expr::c(k));
                }
                match out.len() {
                    0 => Expr::zero(),
                    1 => out.pop().unwrap(),
                    _ => Expr::Add { args: out },
                }
            }
            Expr::Mul { args } => {
                let mut out = Vec::new();
                let mut k = 1.0;
                for a in args {
                    match a.simplify() {
                        Expr::Const { value } => k *= value,
                        Expr::Mul { args: inner } => {
                            for e in inner {
                                match e {
                                    Expr::Const { value } => k *= value,
                                    e => out.push(e),
                                }
                            }
                        }
                        e => out.push(e),
                    }
                }
                if k == 0.0 {
                    return Expr::zero();
                }
                if k != 1.0 {
                    out.insert(0, Expr::c(k));
                }
                match out.len() {
                    0 => Expr::c(1.0),
                    1 => out.pop().unwrap(),
                    _ => Expr::Mul { args: out },
                }
            }
            Expr::Pow { base, exp } => {
                let b = base.simplify();
                if exp == 0.0 {
                    return Expr::c(1.0);
                }
                if exp == 1.0 {
                    return b;
                }
                match b {
                    Expr::Const { value } => Expr::c(value.powf(exp)),
                    Expr::Pow { base: inner, exp: e2 } => Expr::Pow { base: inner, exp: e2 * exp },
                    b => Expr::Pow { base: Box::new(b), exp },
                }
            }
            Expr::Log { arg } => match arg.simplify() {
                Expr::Const { value } => Expr::c(value.ln()),
                a => Expr::Log { arg: Box::new(a) },
            },
            Expr::Exp { arg } => match arg.simplify() {
                Expr::Const { value } => Expr::c(value.exp()),
                a => Expr::Exp { arg: Box::new(a) },
            },
            e => e,
        }
    }
}

/// All partial derivatives up to a fixed order, keyed by sorted index lists.
#[derive(Clone, Debug)]
pub struct DerivTable {
    pub dim: usize,
    pub table: BTreeMap<Vec<usize>, Expr>,
}

impl DerivTable {
    pub fn new(e: &Expr, dim: usize, order: usize) -> Self {
        let mut table = BTreeMap::new();
        table.insert(vec![], e.clone());
        let mut frontier = vec![vec![]];
        for _ in 0..order {
            let mut next = Vec::new();
            for idx in &frontier {
                let start = idx.last().copied().unwrap_or(0);
                let base = table[idx].clone();
                for i in start..dim {
                    let mut k: Vec<usize> = idx.clone();
                    k.push(i);
                    table.insert(k.clone(), base.diff(i));
                    next.push(k);
                }
            }
            frontier = next;
        }
        Self { dim, table }
    }

    pub fn eval(&self, idx: &[usize], x: &[f64]) -> f64 {
        let mut k = idx.to_vec();
        k.sort_unstable();
        self.table.get(&k).map_or(0.0, |e| e.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_x_log_x() {
        let x = Expr::var(0);
        let e = Expr::mul(vec![x.clone(), Expr::log(x)]);
        let t = DerivTable::new(&e, 1, 4);
        let at = [2.0];
        assert!((t.eval(&[], &at) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((t.eval(&[0], &at) - (2f64.ln() + 1.0)).abs() < 1e-15);
        assert!((t.eval(&[0, 0], &at) - 0.5).abs() < 1e-15);
        assert!((t.eval(&[0, 0, 0], &at) + 0.25).abs() < 1e-15);
        assert!((t.eval(&[0, 0, 0, 0], &at) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let e = Expr::exp(Expr::mul(vec![Expr::c(-1.0), Expr::var(1)]));
        let s = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }
}
