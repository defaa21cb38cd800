//! Symbolic weights: sums of polynomial × Π(factor)^k × exp(κ − ⟨λ,x⟩).

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::geometry::{HPoly, LpOutcome, Polyhedron};
use crate::poly::{CompiledPoly, Poly, UPoly};
use crate::quadrature::{EnvTerm, Envelope};
use crate::rational::{self, dot, fmt_vec, q, to_f64, Q};
use crate::sampling;

/// `⟨b,x⟩ + c`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AffineForm {
    #[serde(with = "rational::serde_vec_q")]
    pub b: Vec<Q>,
    #[serde(with = "rational::serde_q")]
    pub c: Q,
}

impl AffineForm {
    pub fn new(b: Vec<Q>, c: Q) -> Self {
        Self { b, c }
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        dot(&self.b, x) + &self.c
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.b.iter().zip(x).map(|(b, x)| to_f64(b) * x).sum::<f64>() + to_f64(&self.c)
    }

    pub fn to_poly(&self) -> Poly {
        Poly::affine(&self.b, &self.c)
    }

    pub fn sub(&self, o: &AffineForm) -> AffineForm {
        AffineForm {
            b: self.b.iter().zip(&o.b).map(|(a, b)| a - b).collect(),
            c: &self.c - &o.c,
        }
    }

    pub fn scale(&self, k: &Q) -> AffineForm {
        AffineForm { b: self.b.iter().map(|x| x * k).collect(), c: &self.c * k }
    }

    pub fn is_constant(&self) -> bool {
        self.b.iter().all(|x| x.is_zero())
    }
}

/// A factor `base^exp`; after normalization only negative exponents remain.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub base: Poly,
    pub exp: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightTerm {
    pub poly: Poly,
    pub factors: Vec<Factor>,
    pub decay: Vec<Q>,
    /// Constant exponent shift κ: the term carries e^{κ}.
    pub shift: Q,
}

impl WeightTerm {
    pub fn new(poly: Poly, factors: Vec<Factor>, decay: Vec<Q>) -> Self {
        Self { poly, factors, decay, shift: Q::zero() }
    }

    fn mul(&self, o: &WeightTerm) -> WeightTerm {
        let mut factors = self.factors.clone();
        factors.extend(o.factors.iter().cloned());
        WeightTerm {
            poly: self.poly.mul(&o.poly),
            factors,
            decay: self.decay.iter().zip(&o.decay).map(|(a, b)| a + b).collect(),
            shift: &self.shift + &o.shift,
        }
    }
}

/// A finite sum of [`WeightTerm`]s kept in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Weight {
    pub nvars: usize,
    pub terms: Vec<WeightTerm>,
}

fn canonical_base(base: &Poly) -> (Poly, Q) {
    let lc = base.leading_coefficient();
    (base.scale(&lc.recip()), lc)
}

fn qpow(x: &Q, k: i32) -> Q {
    let mut r = Q::one();
    for _ in 0..k.unsigned_abs() {
        r *= x;
    }
    if k < 0 {
        r.recip()
    } else {
        r
    }
}

impl Weight {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: vec![] }
    }

    pub fn from_terms(nvars: usize, terms: Vec<WeightTerm>) -> Self {
        let mut w = Self { nvars, terms };
        w.normalize();
        w
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        Self::from_terms(nvars, vec![WeightTerm::new(Poly::constant(nvars, c), vec![], vec![Q::zero(); nvars])])
    }

    pub fn from_poly(p: Poly) -> Self {
        let n = p.nvars;
        Self::from_terms(n, vec![WeightTerm::new(p, vec![], vec![Q::zero(); n])])
    }

    /// `p(x) e^{-⟨λ,x⟩}`.
    pub fn poly_exp(p: Poly, decay: Vec<Q>) -> Self {
        let n = p.nvars;
        Self::from_terms(n, vec![WeightTerm::new(p, vec![], decay)])
    }

    /// `e^{-⟨λ,x⟩}`.
    pub fn exp(decay: Vec<Q>) -> Self {
        let n = decay.len();
        Self::poly_exp(Poly::one(n), decay)
    }

    /// `base^exp` with no exponential part.
    pub fn factor(base: Poly, exp: i32) -> Self {
        let n = base.nvars;
        Self::from_terms(n, vec![WeightTerm::new(Poly::one(n), vec![Factor { base, exp }], vec![Q::zero(); n])])
    }

    pub fn affine(f: &AffineForm) -> Self {
        Self::from_poly(f.to_poly())
    }

    /// Canonical form: positive powers expanded, bases monic, like terms merged, sorted.
    pub fn normalize(&mut self) {
        let mut grouped: BTreeMap<(Vec<Q>, Q, Vec<Factor>), Poly> = BTreeMap::new();
        for t in self.terms.drain(..) {
            let mut poly = t.poly;
            let mut facs: BTreeMap<Poly, i32> = BTreeMap::new();
            for f in t.factors {
                if f.exp == 0 {
                    continue;
                }
                if f.base.degree() == 0 {
                    poly = poly.scale(&qpow(&f.base.constant_term(), f.exp));
                    continue;
                }
                if f.exp > 0 {
                    poly = poly.mul(&f.base.pow(f.exp as u32));
                    continue;
                }
                let (b, lc) = canonical_base(&f.base);
                poly = poly.scale(&qpow(&lc, f.exp));
                *facs.entry(b).or_insert(0) += f.exp;
            }
            // Cancel exact univariate divisibility.
            if self.nvars == 1 {
                for (b, e) in facs.iter_mut() {
                    while *e < 0 && !poly.is_zero() {
                        let (quo, rem) = poly.to_univariate().divrem(&b.to_univariate());
                        if !rem.is_zero() {
                            break;
                        }
                        poly = Poly::from_univariate(&quo);
                        *e += 1;
                    }
                }
            }
            if poly.is_zero() {
                continue;
            }
            let factors: Vec<Factor> =
                facs.into_iter().filter(|(_, e)| *e != 0).map(|(base, exp)| Factor { base, exp }).collect();
            let key = (t.decay, t.shift, factors);
            let e = grouped.entry(key).or_insert_with(|| Poly::zero(self.nvars));
            *e = e.add(&poly);
        }
        self.terms = grouped
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|((decay, shift, factors), poly)| WeightTerm { poly, factors, decay, shift })
            .collect();
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &Weight) -> Weight {
        let mut t = self.terms.clone();
        t.extend(o.terms.iter().cloned());
        Weight::from_terms(self.nvars, t)
    }

    pub fn sub(&self, o: &Weight) -> Weight {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, k: &Q) -> Weight {
        Weight::from_terms(
            self.nvars,
            self.terms.iter().map(|t| WeightTerm { poly: t.poly.scale(k), ..t.clone() }).collect(),
        )
    }

    pub fn mul(&self, o: &Weight) -> Weight {
        let mut out = Vec::new();
        for a in &self.terms {
            for b in &o.terms {
                out.push(a.mul(b));
            }
        }
        Weight::from_terms(self.nvars, out)
    }

    pub fn mul_poly(&self, p: &Poly) -> Weight {
        self.mul(&Weight::from_poly(p.clone()))
    }

    /// Multiplies by e^{κ}.
    pub fn shift_exp(&self, k: &Q) -> Weight {
        Weight::from_terms(
            self.nvars,
            self.terms.iter().map(|t| WeightTerm { shift: &t.shift + k, ..t.clone() }).collect(),
        )
    }

    /// ∂/∂x_i, staying inside the class.
    pub fn differentiate(&self, i: usize) -> Weight {
        let mut out = Vec::new();
        for t in &self.terms {
            out.push(WeightTerm { poly: t.poly.diff(i), ..t.clone() });
            if !t.decay[i].is_zero() {
                out.push(WeightTerm { poly: t.poly.scale(&-t.decay[i].clone()), ..t.clone() });
            }
            for (j, f) in t.factors.iter().enumerate() {
                let db = f.base.diff(i);
                if db.is_zero() {
                    continue;
                }
                let mut factors = t.factors.clone();
                factors[j] = Factor { base: f.base.clone(), exp: f.exp - 1 };
                out.push(WeightTerm {
                    poly: t.poly.mul(&db).scale(&q(f.exp as i64)),
                    factors,
                    decay: t.decay.clone(),
                    shift: t.shift.clone(),
                });
            }
        }
        Weight::from_terms(self.nvars, out)
    }

    pub fn has_negative_factors(&self) -> bool {
        self.terms.iter().any(|t| !t.factors.is_empty())
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.poly.degree()).max().unwrap_or(0)
    }

    pub fn compile(&self) -> CompiledWeight {
        CompiledWeight {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|t| CompiledTerm {
                    poly: t.poly.compile(),
                    factors: t.factors.iter().map(|f| (f.base.compile(), f.exp)).collect(),
                    decay: rational::vec_f64(&t.decay),
                    shift: to_f64(&t.shift),
                })
                .collect(),
        }
    }

    /// Float evaluation; errors if a negative-exponent factor vanishes at x.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let c = self.compile();
        for t in &c.terms {
            for (b, _) in &t.factors {
                if b.eval(x) == 0.0 {
                    return Err(Error::PoleOnDomain(format!("{x:?}")));
                }
            }
        }
        Ok(c.eval(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.nvars).map(|i| self.differentiate(i).eval(x)).collect()
    }

    pub fn hess(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.nvars)
            .map(|i| {
                let di = self.differentiate(i);
                (0..self.nvars).map(|j| di.differentiate(j).eval(x)).collect()
            })
            .collect()
    }

    /// Exact value at a rational point as a sum of rational multiples of exponentials.
    pub fn eval_exact(&self, x: &[Q]) -> Result<ExpSum> {
        let mut s = ExpSum::zero();
        for t in &self.terms {
            let mut c = t.poly.eval_q(x);
            for f in &t.factors {
                let b = f.base.eval_q(x);
                if b.is_zero() {
                    return Err(Error::PoleOnDomain(fmt_vec(x)));
                }
                c *= qpow(&b, f.exp);
            }
            s.add_term(c, &t.shift - dot(&t.decay, x));
        }
        Ok(s)
    }

    /// Restriction to the affine line/chart x = origin + M y (M columns = basis).
    pub fn pullback(&self, origin: &[Q], basis: &[Vec<Q>]) -> Weight {
        let k = basis.len();
        let sub: Vec<Poly> = (0..self.nvars)
            .map(|i| {
                let b: Vec<Q> = basis.iter().map(|bj| bj[i].clone()).collect();
                Poly::affine(&b, &origin[i])
            })
            .collect();
        let compose = |p: &Poly| -> Poly {
            let mut r = Poly::zero(k);
            for (e, c) in &p.terms {
                let mut t = Poly::constant(k, c.clone());
                for (i, &ei) in e.iter().enumerate() {
                    if ei > 0 {
                        t = t.mul(&sub[i].pow(ei));
                    }
                }
                r = r.add(&t);
            }
            r
        };
        let terms = self
            .terms
            .iter()
            .map(|t| WeightTerm {
                poly: compose(&t.poly),
                factors: t.factors.iter().map(|f| Factor { base: compose(&f.base), exp: f.exp }).collect(),
                decay: basis.iter().map(|bj| dot(&t.decay, bj)).collect(),
                shift: &t.shift - dot(&t.decay, origin),
            })
            .collect();
        Weight::from_terms(k, terms)
    }

    /// Pointwise bound |W(x)| ≤ Σ P_t(|x|) e^{-⟨λ_t,x⟩} valid on `domain`.
    pub fn envelope(&self, domain: &HPoly) -> Result<Envelope> {
        let mut terms = Vec::new();
        for t in &self.terms {
            let mut mult = to_f64(&t.shift).exp();
            let mut certified = true;
            for f in &t.factors {
                let (lb, cert) = factor_lower_bound(&f.base, domain)?;
                certified &= cert;
                mult *= lb.powi(f.exp);
            }
            terms.push(EnvTerm {
                radial: t.poly.radial_bound().into_iter().map(|c| c * mult).collect(),
                decay: rational::vec_f64(&t.decay),
                certified,
            });
        }
        Ok(Envelope { terms })
    }

    /// Univariate view of a one-variable term: (poly, decay, shift). Requires no factors.
    pub fn univariate_terms(&self) -> Option<Vec<(UPoly, Q, Q)>> {
        if self.nvars != 1 || self.has_negative_factors() {
            return None;
        }
        Some(self.terms.iter().map(|t| (t.poly.to_univariate(), t.decay[0].clone(), t.shift.clone())).collect())
    }

    /// Render as a human-readable string.
    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|t| {
                let mut s = format!("[{}]", render_poly(&t.poly));
                for f in &t.factors {
                    s += &format!("·({})^{}", render_poly(&f.base), f.exp);
                }
                if t.decay.iter().any(|x| !x.is_zero()) || !t.shift.is_zero() {
                    s += &format!("·exp({} - <{},x>)", rational::fmt_q(&t.shift), fmt_vec(&t.decay));
                }
                s
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

pub fn render_poly(p: &Poly) -> String {
    if p.is_zero() {
        return "0".into();
    }
    p.terms
        .iter()
        .map(|(e, c)| {
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| if k == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, k) })
                .collect();
            if mono.is_empty() {
                rational::fmt_q(c)
            } else {
                format!("{}*{}", rational::fmt_q(c), mono.join("*"))
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Lower bound of a factor base on a domain, and whether it is rigorous.
pub fn factor_lower_bound(base: &Poly, domain: &HPoly) -> Result<(f64, bool)> {
    if base.degree() <= 1 {
        let n = base.nvars;
        let b: Vec<Q> = (0..n).map(|i| base.diff(i).constant_term()).collect();
        let c = base.constant_term();
        return match domain.minimize(&b) {
            LpOutcome::Optimal { value, argmax } => {
                let m = value + c;
                if m.is_positive() {
                    Ok((to_f64(&m), true))
                } else {
                    Err(Error::FactorNotPositive(fmt_vec(&argmax)))
                }
            }
            LpOutcome::Unbounded => Err(Error::FactorNotPositive("unbounded below".into())),
            LpOutcome::Empty => Ok((1.0, true)),
        };
    }
    if base.is_positive_even_plus_constant() {
        return Ok((to_f64(&base.constant_term()), true));
    }
    let pts = sampling::domain_samples(domain, 40.0, 6);
    let c = base.compile();
    let m = pts.iter().map(|x| c.eval(x)).fold(f64::INFINITY, f64::min);
    if !(m > 0.0) {
        return Err(Error::FactorNotPositive("sampled minimum is not positive".into()));
    }
    Ok((0.5 * m, false))
}

#[derive(Clone, Debug)]
pub struct CompiledTerm {
    pub poly: CompiledPoly,
    pub factors: Vec<(CompiledPoly, i32)>,
    pub decay: Vec<f64>,
    pub shift: f64,
}

#[derive(Clone, Debug)]
pub struct CompiledWeight {
    pub nvars: usize,
    pub terms: Vec<CompiledTerm>,
}

impl CompiledWeight {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            let ex = t.shift - t.decay.iter().zip(x).map(|(l, x)| l * x).sum::<f64>();
            if ex < -745.0 {
                continue;
            }
            let mut v = t.poly.eval(x);
            for (b, k) in &t.factors {
                v *= b.eval(x).powi(*k);
            }
            s += v * ex.exp();
        }
        s
    }
}

/// Report of sampled positivity.
#[derive(Clone, Debug, PartialEq)]
pub struct PositivityReport {
    pub positive: bool,
    pub witness: Option<Vec<f64>>,
    pub qualifier: &'static str,
}

/// Positivity at vertices, along recession rays and on a sample grid of a truncation.
pub fn check_positive(w: &Weight, p: &HPoly) -> PositivityReport {
    let c = w.compile();
    let pts = sampling::domain_samples(p, 30.0, 8);
    for x in pts {
        let v = c.eval(&x);
        if !(v > 0.0) && v.is_finite() {
            // Far along a ray exp underflow gives 0; treat only strict sign violations as failures.
            if v < 0.0 || x.iter().map(|t| t.abs()).sum::<f64>() < 50.0 {
                return PositivityReport { positive: false, witness: Some(x), qualifier: "sampled" };
            }
        }
    }
    PositivityReport { positive: true, witness: None, qualifier: "sampled" }
}

/// `w = 2(n v + ⟨∇v, x⟩)`.
pub fn soliton_weight_w(v: &Weight, n: usize) -> Weight {
    let mut acc = v.scale(&q(n as i64));
    for i in 0..v.nvars {
        acc = acc.add(&v.differentiate(i).mul_poly(&Poly::var(v.nvars, i)));
    }
    acc.scale(&q(2))
}

/// One fibration factor (p_a, c_a, n_a, s_a).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FibrationFactor {
    #[serde(with = "rational::serde_vec_q")]
    pub p: Vec<Q>,
    #[serde(with = "rational::serde_q")]
    pub c: Q,
    pub n: u32,
    #[serde(with = "rational::serde_q", default = "Q::zero")]
    pub s: Q,
}

fn check_affine_positive(form: &AffineForm, p: &Polyhedron) -> Result<()> {
    match p.hpoly().minimize(&form.b) {
        LpOutcome::Optimal { value, argmax } => {
            if (value + &form.c).is_positive() {
                Ok(())
            } else {
                Err(Error::FactorNotPositive(fmt_vec(&argmax)))
            }
        }
        LpOutcome::Unbounded => Err(Error::FactorNotPositive("factor unbounded below along a ray".into())),
        LpOutcome::Empty => Ok(()),
    }
}

/// `(ṽ, w̃) = (p v, p w − v Σ_a s_a (⟨p_a,x⟩+c_a)^{n_a−1} Π_{b≠a} (⟨p_b,x⟩+c_b)^{n_b})`.
pub fn fibration_transform(v: &Weight, w: &Weight, data: &[FibrationFactor], p: &Polyhedron) -> Result<(Weight, Weight)> {
    let n = v.nvars;
    let forms: Vec<AffineForm> = data.iter().map(|d| AffineForm::new(d.p.clone(), d.c.clone())).collect();
    for f in &forms {
        check_affine_positive(f, p)?;
    }
    let pw: Vec<Poly> = forms.iter().zip(data).map(|(f, d)| f.to_poly().pow(d.n)).collect();
    let prod = pw.iter().fold(Poly::one(n), |a, b| a.mul(b));
    let mut corr = Poly::zero(n);
    for (a, d) in data.iter().enumerate() {
        if d.s.is_zero() || d.n == 0 {
            continue;
        }
        let mut t = forms[a].to_poly().pow(d.n - 1).scale(&d.s);
        for (b, pb) in pw.iter().enumerate() {
            if b != a {
                t = t.mul(pb);
            }
        }
        corr = corr.add(&t);
    }
    let vt = v.mul_poly(&prod);
    let wt = w.mul_poly(&prod).sub(&v.mul_poly(&corr));
    Ok((vt, wt))
}

/// `v = Π(⟨p_a,x⟩+k_a)^{n_a} e^{-⟨b_W,x⟩}`.
pub fn krs_fibration_weight(data: &[FibrationFactor], b_w: &[Q], p: &Polyhedron) -> Result<Weight> {
    let n = b_w.len();
    let mut prod = Poly::one(n);
    for d in data {
        let f = AffineForm::new(d.p.clone(), d.c.clone());
        check_affine_positive(&f, p)?;
        prod = prod.mul(&f.to_poly().pow(d.n));
    }
    Ok(Weight::poly_exp(prod, b_w.to_vec()))
}

/// Growth verdict for one supremum estimate.
#[derive(Clone, Debug, Serialize)]
pub struct SupEstimate {
    pub label: String,
    /// Maximum per nested truncation level.
    pub shell_max: Vec<f64>,
    pub growth_exponent: f64,
    pub bounded: bool,
}

/// Class-𝒲 report (numerical evidence, not proof).
#[derive(Clone, Debug, Serialize)]
pub struct ClassReport {
    pub decay_rate: f64,
    pub expected_rate: Option<f64>,
    pub decay_pass: bool,
    pub v_log_derivatives: Vec<SupEstimate>,
    pub w_weighted: Vec<SupEstimate>,
    pub pass: bool,
    pub caveat: &'static str,
}

pub const SHELL_LEVELS: [f64; 5] = [10.0, 20.0, 40.0, 80.0, 160.0];

/// Bounded iff the log-log growth between the last two shells is ≤ 0.05.
pub fn shell_verdict(label: &str, shell_max: Vec<f64>) -> SupEstimate {
    let k = shell_max.len();
    let (a, b) = (shell_max[k - 2], shell_max[k - 1]);
    let growth = if b <= 0.0 || !b.is_finite() && b.is_nan() {
        0.0
    } else if a <= 0.0 {
        f64::INFINITY
    } else {
        (b / a).ln() / (SHELL_LEVELS[k - 1] / SHELL_LEVELS[k - 2]).ln()
    };
    SupEstimate { label: label.to_string(), bounded: growth <= 0.05 && b.is_finite(), growth_exponent: growth, shell_max }
}

fn multi_indices(n: usize, k_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..k_max {
        let mut next = Vec::new();
        for a in &frontier {
            let start = a.last().copied().unwrap_or(0);
            for i in start..n {
                let mut b: Vec<usize> = a.clone();
                b.push(i);
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Numerical class-𝒲 check on nested truncations.
pub fn check_class_w(v: &Weight, w: &Weight, p: &Polyhedron, beta_star: f64, k_max: usize) -> Result<ClassReport> {
    let hp = p.hpoly();
    let cv = v.compile();
    let b_plus = p.auto_b_plus();
    let bp: Vec<f64> = rational::vec_f64(&b_plus);
    // Decay-rate fit on truncations up to 40.
    let mut pts_fit = Vec::new();
    for d in [10.0, 20.0, 40.0] {
        pts_fit.extend(sampling::domain_samples(&hp, d, 10));
    }
    let decay_rate = fit_decay_rate(&pts_fit, |x| cv.eval(x));
    let expected_rate = single_exp_rate(v, p);
    let decay_pass = decay_rate > 1e-3
        && expected_rate.is_none_or(|r| (decay_rate - r).abs() <= 0.1 * r);
    let samples: Vec<Vec<Vec<f64>>> = shell_samples(&hp, &bp);
    let idx = multi_indices(v.nvars, k_max);
    let mut v_logd = Vec::new();
    let mut w_wt = Vec::new();
    for alpha in &idx {
        let dv = alpha.iter().fold(v.clone(), |acc, &i| acc.differentiate(i)).compile();
        let dw = alpha.iter().fold(w.clone(), |acc, &i| acc.differentiate(i)).compile();
        let mut sv = Vec::new();
        let mut sw = Vec::new();
        for shell in &samples {
            let mut mv: f64 = 0.0;
            let mut mw: f64 = 0.0;
            for x in shell {
                let vx = cv.eval(x);
                if vx <= 0.0 {
                    continue;
                }
                if !alpha.is_empty() {
                    mv = mv.max((dv.eval(x) / vx).abs());
                }
                mw = mw.max(dw.eval(x).abs() * vx.powf(-beta_star));
            }
            sv.push(mv);
            sw.push(mw);
        }
        let lbl = format!("d{:?}", alpha);
        if !alpha.is_empty() {
            v_logd.push(shell_verdict(&format!("v^-1 {lbl} v"), sv));
        }
        w_wt.push(shell_verdict(&format!("v^-beta {lbl} w"), sw));
    }
    let pass = decay_pass && v_logd.iter().all(|s| s.bounded) && w_wt.iter().all(|s| s.bounded);
    Ok(ClassReport {
        decay_rate,
        expected_rate,
        decay_pass,
        v_log_derivatives: v_logd,
        w_weighted: w_wt,
        pass,
        caveat: "numerical evidence, not proof",
    })
}

/// Samples grouped by nested truncation shells ⟨b₊,x⟩ ∈ (δ_{k-1}, δ_k].
pub fn shell_samples(hp: &HPoly, bp: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for &d in SHELL_LEVELS.iter() {
        let pts = sampling::domain_samples(hp, d, 12);
        let shell: Vec<Vec<f64>> = pts
            .into_iter()
            .filter(|x| {
                let t: f64 = x.iter().zip(bp).map(|(a, b)| a * b).sum();
                t > prev || prev == f64::NEG_INFINITY
            })
            .collect();
        out.push(shell);
        prev = d;
    }
    out
}

/// For single-exponential v: min over recession rays of ⟨λ, ĝ⟩.
fn single_exp_rate(v: &Weight, p: &Polyhedron) -> Option<f64> {
    let d0 = &v.terms.first()?.decay;
    if v.terms.iter().any(|t| &t.decay != d0) {
        return None;
    }
    let cone = p.recession_cone();
    cone.rays
        .iter()
        .map(|r| {
            let rf = rational::vec_f64(r);
            rf.iter().zip(d0).map(|(a, b)| a * to_f64(b)).sum::<f64>() / rational::norm_f64(&rf)
        })
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

/// Slope fit of max log|f| against |x| in radial bins; returns the decay rate (−slope).
pub fn fit_decay_rate(pts: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> f64 {
    let data: Vec<(f64, f64)> = pts
        .iter()
        .filter_map(|x| {
            let v = f(x).abs();
            (v > 0.0).then(|| (rational::norm_f64(x), v.ln()))
        })
        .collect();
    if data.is_empty() {
        return 0.0;
    }
    let rmax = data.iter().map(|d| d.0).fold(0.0, f64::max);
    let nb = 12;
    let r0 = rmax * 0.25;
    let width = (rmax - r0) / nb as f64;
    let mut bins: Vec<Option<(f64, f64)>> = vec![None; nb];
    for &(r, l) in &data {
        if r < r0 {
            continue;
        }
        let k = (((r - r0) / width) as usize).min(nb - 1);
        let e = bins[k].get_or_insert((r, l));
        if l > e.1 {
            *e = (r, l);
        }
    }
    let pts: Vec<(f64, f64)> = bins.into_iter().flatten().collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -(sxy / sxx)
}

// ---- JSON -------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PolyJson {
    coeffs: Vec<(Vec<u32>, String)>,
}

#[derive(Serialize, Deserialize)]
struct FactorJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<PolyJson>,
    exp: i32,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    poly: PolyJson,
    #[serde(default)]
    factors: Vec<FactorJson>,
    decay: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WeightJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    terms: Vec<TermJson>,
}

fn json_q(v: &serde_json::Value) -> std::result::Result<Q, String> {
    match v {
        serde_json::Value::String(s) => rational::parse_q(s).map_err(|e| e.to_string()),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(q(i))
            } else {
                rational::from_f64(n.as_f64().unwrap()).map_err(|e| e.to_string())
            }
        }
        _ => Err(format!("expected rational, got {v}")),
    }
}

fn poly_from_json(p: &PolyJson, n: usize) -> std::result::Result<Poly, String> {
    let mut out = Poly::zero(n);
    for (e, c) in &p.coeffs {
        if e.len() != n {
            return Err(format!("multi-index {e:?} has wrong length"));
        }
        out.add_term(e.clone(), rational::parse_q(c).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn poly_to_json(p: &Poly) -> PolyJson {
    PolyJson { coeffs: p.terms.iter().map(|(e, c)| (e.clone(), rational::fmt_q(c))).collect() }
}

impl Serialize for Weight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let j = WeightJson {
            dim: Some(self.nvars),
            terms: self
                .terms
                .iter()
                .map(|t| TermJson {
                    poly: poly_to_json(&t.poly),
                    factors: t
                        .factors
                        .iter()
                        .map(|f| FactorJson { b: None, c: None, poly: Some(poly_to_json(&f.base)), exp: f.exp })
                        .collect(),
                    decay: t.decay.iter().map(|d| serde_json::Value::String(rational::fmt_q(d))).collect(),
                    shift: (!t.shift.is_zero()).then(|| rational::fmt_q(&t.shift)),
                })
                .collect(),
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = WeightJson::deserialize(d)?;
        let n = j.dim.or_else(|| j.terms.first().map(|t| t.decay.len())).unwrap_or(1);
        let mut terms = Vec::new();
        for t in &j.terms {
            if t.decay.len() != n {
                return Err(D::Error::custom("decay vector has wrong length"));
            }
            let decay = t.decay.iter().map(json_q).collect::<std::result::Result<Vec<_>, _>>().map_err(D::Error::custom)?;
            let poly = poly_from_json(&t.poly, n).map_err(D::Error::custom)?;
            let mut factors = Vec::new();
            for f in &t.factors {
                let base = match (&f.poly, &f.b, &f.c) {
                    (Some(p), _, _) => poly_from_json(p, n).map_err(D::Error::custom)?,
                    (None, Some(b), Some(c)) => {
                        let b = b.iter().map(json_q).collect::<std::result::Result<Vec<_>, _>>().map_err(D::Error::custom)?;
                        if b.len() != n {
                            return Err(D::Error::custom("factor has wrong dimension"));
                        }
                        Poly::affine(&b, &json_q(c).map_err(D::Error::custom)?)
                    }
                    _ => return Err(D::Error::custom("factor needs either poly or b and c")),
                };
                factors.push(Factor { base, exp: f.exp });
            }
            let shift = match &t.shift {
                Some(s) => rational::parse_q(s).map_err(D::Error::custom)?,
                None => Q::zero(),
            };
            terms.push(WeightTerm { poly, factors, decay, shift });
        }
        Ok(Weight::from_terms(n, terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{qr, vec_q};

    fn x1() -> Poly {
        Poly::var(1, 0)
    }

    #[test]
    fn eval_examples() {
        let v = Weight::exp(vec![q(1)]);
        assert_eq!(v.eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(v.grad(&[0.0]).unwrap(), vec![-1.0]);
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let q1 = x.pow(2).mul(&y.pow(2)).add(&Poly::one(2));
        assert_eq!(Weight::poly_exp(q1, vec_q(&[1, 1])).eval(&[0.0, 0.0]).unwrap(), 1.0);
        let r = Weight::factor(x1().add(&Poly::constant(1, q(2))), -1).mul(&Weight::exp(vec![q(1)]));
        assert!((r.eval(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((r.grad(&[0.0]).unwrap()[0] + 0.75).abs() < 1e-15);
        assert!(matches!(r.eval(&[-2.0]), Err(Error::PoleOnDomain(_))));
    }

    #[test]
    fn differentiate_examples() {
        let e = Weight::exp(vec![q(1)]);
        assert_eq!(e.differentiate(0), e.scale(&q(-1)));
        let xe = Weight::poly_exp(x1(), vec![q(1)]);
        let expect = Weight::poly_exp(Poly::one(1).sub(&x1()), vec![q(1)]);
        assert_eq!(xe.differentiate(0), expect);
        let inv = Weight::factor(x1().add(&Poly::constant(1, q(2))), -1);
        assert_eq!(inv.differentiate(0), Weight::factor(x1().add(&Poly::constant(1, q(2))), -2).scale(&q(-1)));
    }

    #[test]
    fn factor_bases_are_canonical() {
        let a = Weight::factor(Poly::affine(&[q(2)], &q(4)), -1);
        let b = Weight::factor(Poly::affine(&[q(1)], &q(2)), -1).scale(&qr(1, 2));
        assert_eq!(a, b);
        let c = Weight::from_poly(Poly::affine(&[q(1)], &q(2))).mul(&Weight::factor(Poly::affine(&[q(1)], &q(2)), -1));
        assert_eq!(c, Weight::constant(1, q(1)));
    }

    #[test]
    fn soliton_weights() {
        let v = Weight::exp(vec![q(1)]);
        let w = soliton_weight_w(&v, 1);
        assert_eq!(w, Weight::poly_exp(Poly::affine(&[q(-2)], &q(2)), vec![q(1)]));
        let v2 = Weight::exp(vec_q(&[1, 1]));
        let w2 = soliton_weight_w(&v2, 2);
        assert_eq!(w2, Weight::poly_exp(Poly::affine(&vec_q(&[-2, -2]), &q(4)), vec_q(&[1, 1])));
        assert_eq!(soliton_weight_w(&Weight::constant(1, q(1)), 1), Weight::constant(1, q(2)));
    }

    #[test]
    fn fibration_examples() {
        let p = Polyhedron::half_line(q(-1));
        let c = qr(3, 2);
        let (vt, wt) = fibration_transform(
            &Weight::constant(1, q(1)),
            &Weight::constant(1, c.clone()),
            &[FibrationFactor { p: vec![q(1)], c: q(2), n: 1, s: q(2) }],
            &p,
        )
        .unwrap();
        assert_eq!(vt, Weight::from_poly(Poly::affine(&[q(1)], &q(2))));
        assert_eq!(wt, Weight::from_poly(Poly::affine(std::slice::from_ref(&c), &(q(2) * &c - q(2)))));
        let bad = fibration_transform(
            &Weight::constant(1, q(1)),
            &Weight::constant(1, q(1)),
            &[FibrationFactor { p: vec![q(1)], c: q(1), n: 1, s: q(0) }],
            &p,
        );
        assert!(matches!(bad, Err(Error::FactorNotPositive(_))));
        let krs = krs_fibration_weight(&[FibrationFactor { p: vec![q(1)], c: q(2), n: 1, s: q(0) }], &[q(1)], &p).unwrap();
        assert_eq!(krs, Weight::poly_exp(Poly::affine(&[q(1)], &q(2)), vec![q(1)]));
    }

    #[test]
    fn exact_evaluation() {
        let v = Weight::poly_exp(x1(), vec![q(1)]);
        let s = v.eval_exact(&[q(-1)]).unwrap();
        assert_eq!(s, ExpSum::term(q(-1), q(1)));
    }

    #[test]
    fn json_round_trip() {
        let w = Weight::factor(Poly::affine(&[q(1)], &q(2)), -1)
            .mul(&Weight::poly_exp(x1().pow(2), vec![qr(1, 2)]))
            .shift_exp(&q(1));
        let s = serde_json::to_string(&w).unwrap();
        let back: Weight = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        let spec_form = r#"{"terms":[{"poly":{"coeffs":[[[0],"1"]]},"factors":[{"b":["1"],"c":"2","exp":-1}],"decay":["1"]}]}"#;
        let w2: Weight = serde_json::from_str(spec_form).unwrap();
        assert!((w2.eval(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
    }
}
