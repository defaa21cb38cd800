//! Sparse multivariate polynomials with rational coefficients, univariate
//! helpers and Sturm sequences.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::rational::{q, to_f64, Q};

/// Multi-index → coefficient. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, Q>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Q::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, Q::one());
        p
    }

    /// `⟨b,x⟩ + c`.
    pub fn affine(b: &[Q], c: &Q) -> Self {
        let n = b.len();
        let mut p = Self::constant(n, c.clone());
        for (i, bi) in b.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            p.add_term(e, bi.clone());
        }
        p
    }

    pub fn monomial(exps: Vec<u32>, c: Q) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn add_term(&mut self, e: Vec<u32>, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(e.clone()).or_insert_with(Q::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> Q {
        self.terms.get(&vec![0; self.nvars]).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(e.clone(), c.clone());
        }
        r
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, k: &Q) -> Poly {
        if k.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * k)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut r = Poly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                r.add_term(e, c1 * c2);
            }
        }
        r
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut r = Poly::one(self.nvars);
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    pub fn diff(&self, i: usize) -> Poly {
        let mut r = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                r.add_term(e2, c * q(e[i] as i64));
            }
        }
        r
    }

    pub fn eval_q(&self, x: &[Q]) -> Q {
        let mut s = Q::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            s += t;
        }
        s
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self.terms.iter().map(|(e, c)| (e.clone(), to_f64(c))).collect(),
        }
    }

    /// Σ|c_α| r^{|α|} coefficients by total degree: bounds |p(x)| for |x| ≤ r.
    pub fn radial_bound(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.degree() as usize + 1];
        for (e, c) in &self.terms {
            let d: u32 = e.iter().sum();
            out[d as usize] += to_f64(&c.abs());
        }
        out
    }

    /// True when p = c + Σ (positive coefficient)·(even monomial) with c > 0.
    pub fn is_positive_even_plus_constant(&self) -> bool {
        self.constant_term().is_positive()
            && self.terms.iter().all(|(e, c)| e.iter().all(|k| k % 2 == 0) && c.is_positive())
    }

    /// Coefficient vector of a univariate polynomial.
    pub fn to_univariate(&self) -> UPoly {
        assert_eq!(self.nvars, 1);
        let mut v = vec![Q::zero(); self.degree() as usize + 1];
        for (e, c) in &self.terms {
            v[e[0] as usize] = c.clone();
        }
        UPoly::new(v)
    }

    pub fn from_univariate(p: &UPoly) -> Poly {
        let mut r = Poly::zero(1);
        for (k, c) in p.coeffs.iter().enumerate() {
            r.add_term(vec![k as u32], c.clone());
        }
        r
    }

    pub fn leading_coefficient(&self) -> Q {
        self.terms.iter().next_back().map(|(_, c)| c.clone()).unwrap_or_else(Q::zero)
    }
}

/// Float evaluation form.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= xi.powi(k as i32);
                }
            }
            s += t;
        }
        s
    }
}

/// Dense univariate polynomial, coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct UPoly {
    pub coeffs: Vec<Q>,
}

impl UPoly {
    pub fn new(mut coeffs: Vec<Q>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        (!self.coeffs.is_empty()).then(|| self.coeffs.len() - 1)
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.coeffs.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + to_f64(c))
    }

    pub fn deriv(&self) -> UPoly {
        UPoly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c * q(k as i64)).collect())
    }

    pub fn lead(&self) -> Q {
        self.coeffs.last().cloned().unwrap_or_else(Q::zero)
    }

    pub fn neg(&self) -> UPoly {
        UPoly::new(self.coeffs.iter().map(|c| -c).collect())
    }

    /// Polynomial division: (quotient, remainder).
    pub fn divrem(&self, d: &UPoly) -> (UPoly, UPoly) {
        let dd = d.degree().expect("division by zero polynomial");
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return (UPoly::new(vec![]), self.clone());
        }
        let mut quo = vec![Q::zero(); r.len() - dd];
        let lc = d.lead();
        for k in (0..quo.len()).rev() {
            let c = &r[k + dd] / &lc;
            for (j, dc) in d.coeffs.iter().enumerate() {
                let t = &c * dc;
                r[k + j] -= t;
            }
            quo[k] = c;
        }
        r.truncate(dd);
        (UPoly::new(quo), UPoly::new(r))
    }

    pub fn sturm_sequence(&self) -> Vec<UPoly> {
        let mut seq = vec![self.clone(), self.deriv()];
        while !seq.last().unwrap().is_zero() && seq.last().unwrap().degree().unwrap() > 0 {
            let n = seq.len();
            let (_, r) = seq[n - 2].divrem(&seq[n - 1]);
            if r.is_zero() {
                break;
            }
            seq.push(r.neg());
        }
        seq.retain(|p| !p.is_zero());
        seq
    }

    /// Number of distinct real roots in (a, b]; `None` bounds mean ∓∞.
    pub fn count_roots(&self, a: Option<&Q>, b: Option<&Q>) -> usize {
        let seq = self.sturm_sequence();
        sign_changes(&seq, a, true) - sign_changes(&seq, b, false)
    }

    /// Smallest real root in the open interval (a, ∞), located to within `tol`.
    pub fn first_root_above(&self, a: &Q, tol: &Q) -> Option<Q> {
        let total = self.count_roots(Some(a), None);
        if total == 0 {
            return None;
        }
        // Cauchy bound for the upper end.
        let lc = self.lead().abs();
        let bound = self.coeffs.iter().map(|c| c.abs() / &lc).fold(Q::zero(), |m, c| if c > m { c } else { m })
            + Q::one();
        let mut lo = a.clone();
        let mut hi = if &bound > a { bound } else { a + Q::one() };
        while &hi - &lo > *tol {
            let mid = (&lo + &hi) / q(2);
            if self.count_roots(Some(&lo), Some(&mid)) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

fn sign_at(p: &UPoly, x: Option<&Q>, minus_inf: bool) -> i32 {
    let v = match x {
        Some(x) => p.eval(x),
        None => {
            let d = p.degree().unwrap_or(0);
            let l = p.lead();
            if minus_inf && d % 2 == 1 {
                -l
            } else {
                l
            }
        }
    };
    if v.is_positive() {
        1
    } else if v.is_negative() {
        -1
    } else {
        0
    }
}

fn sign_changes(seq: &[UPoly], x: Option<&Q>, minus_inf: bool) -> usize {
    let signs: Vec<i32> = seq.iter().map(|p| sign_at(p, x, minus_inf)).filter(|&s| s != 0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{qr, vec_q};

    #[test]
    fn arithmetic_and_derivatives() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let q1 = x.pow(2).mul(&y.pow(2)).add(&Poly::one(2));
        assert_eq!(q1.eval_q(&vec_q(&[0, 0])), q(1));
        assert_eq!(q1.eval_q(&vec_q(&[2, 3])), q(37));
        assert_eq!(q1.diff(0).eval_q(&vec_q(&[2, 3])), q(36));
        assert!(q1.sub(&q1).is_zero());
        assert_eq!(q1.radial_bound(), vec![1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn sturm_counts_roots() {
        // (x-1)(x+2)(x-3)
        let p = UPoly::new(vec_q(&[6, -5, -2, 1]));
        assert_eq!(p.count_roots(None, None), 3);
        assert_eq!(p.count_roots(Some(&q(-1)), None), 2);
        assert_eq!(p.count_roots(Some(&q(0)), Some(&q(2))), 1);
        let r = p.first_root_above(&q(-1), &qr(1, 1 << 30)).unwrap();
        assert!((to_f64(&r) - 1.0).abs() < 1e-8);
        // x^2 + 1 has no real roots.
        assert_eq!(UPoly::new(vec_q(&[1, 0, 1])).count_roots(None, None), 0);
    }

    #[test]
    fn division() {
        let p = UPoly::new(vec_q(&[-1, 0, 1]));
        let (quo, r) = p.divrem(&UPoly::new(vec_q(&[1, 1])));
        assert_eq!(quo, UPoly::new(vec_q(&[-1, 1])));
        assert!(r.is_zero());
    }
}
