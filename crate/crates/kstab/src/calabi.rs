//! Line-bundle profiles on P = [−1, ∞) and the Li soliton profile.

use nalgebra::DMatrix;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::geometry::{HPoly, Polyhedron};
use crate::pl;
use crate::poly::{Poly, UPoly};
use crate::potentials::{HJet, HessianSource};
use crate::quadrature::{integrate_fn, IntegralResult, QuadOptions};
use crate::rational::{from_f64, q, to_f64, Q};
use crate::stability::{futaki, futaki_affine, futaki_exact_1d};
use crate::weights::{self, fibration_transform, FibrationFactor, Weight, WeightTerm};

pub fn half_line() -> Polyhedron {
    Polyhedron::half_line(q(-1))
}

fn unit_interval() -> HPoly {
    Polyhedron::cube(1, Q::zero(), Q::one()).hpoly()
}

/// `∫_a^b f` by adaptive cubature on the unit interval.
pub fn integrate_interval(f: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64, opts: &QuadOptions) -> Result<IntegralResult> {
    let len = b - a;
    let g = |s: &[f64]| f(a + len * s[0]) * len;
    integrate_fn(&g, None, &unit_interval(), opts)
}

fn poly_antiderivative(p: &UPoly) -> UPoly {
    let mut c = vec![Q::zero()];
    for (k, a) in p.coeffs.iter().enumerate() {
        c.push(a / q(k as i64 + 1));
    }
    UPoly::new(c)
}

/// An antiderivative inside the class: `p e^{κ−λx} ↦ −e^{κ−λx} Σ_j p^{(j)}/λ^{j+1}`.
pub fn antiderivative(w: &Weight) -> Result<Weight> {
    let terms = w
        .univariate_terms()
        .ok_or_else(|| Error::Malformed("antiderivative needs a factor-free weight in one variable".into()))?;
    let mut out = Vec::new();
    for (p, lam, kappa) in terms {
        let poly = if lam.is_zero() {
            poly_antiderivative(&p)
        } else {
            let mut acc = UPoly::new(vec![]);
            let (mut d, mut lp) = (p.clone(), lam.clone());
            while !d.is_zero() {
                let t = UPoly::new(d.coeffs.iter().map(|c| -c / &lp).collect());
                acc = add_upoly(&acc, &t);
                d = d.deriv();
                lp *= &lam;
            }
            acc
        };
        out.push(WeightTerm { poly: Poly::from_univariate(&poly), factors: vec![], decay: vec![lam], shift: kappa });
    }
    Ok(Weight::from_terms(1, out))
}

fn add_upoly(a: &UPoly, b: &UPoly) -> UPoly {
    let n = a.coeffs.len().max(b.coeffs.len());
    UPoly::new(
        (0..n)
            .map(|i| a.coeffs.get(i).cloned().unwrap_or_else(Q::zero) + b.coeffs.get(i).cloned().unwrap_or_else(Q::zero))
            .collect(),
    )
}

fn mul_upoly(a: &UPoly, b: &UPoly) -> UPoly {
    if a.is_zero() || b.is_zero() {
        return UPoly::new(vec![]);
    }
    let mut c = vec![Q::zero(); a.coeffs.len() + b.coeffs.len() - 1];
    for (i, x) in a.coeffs.iter().enumerate() {
        for (j, y) in b.coeffs.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    UPoly::new(c)
}

fn scale_upoly(a: &UPoly, k: &Q) -> UPoly {
    UPoly::new(a.coeffs.iter().map(|c| c * k).collect())
}

/// A constant Σ c_k e^{r_k} as a weight.
pub fn constant_weight(s: &ExpSum) -> Weight {
    Weight::from_terms(
        1,
        s.terms
            .iter()
            .map(|(e, c)| WeightTerm { poly: Poly::constant(1, c.clone()), factors: vec![], decay: vec![Q::zero()], shift: e.clone() })
            .collect(),
    )
}

fn x_poly() -> Poly {
    Poly::var(1, 0)
}

/// Single (decay, shift) group: `vθ = Q(x) e^{κ−λx}`.
fn single_group(w: &Weight) -> Option<(UPoly, Q, Q)> {
    let t = w.univariate_terms()?;
    match t.as_slice() {
        [(p, lam, kappa)] => Some((p.clone(), lam.clone(), kappa.clone())),
        _ => None,
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind")]
pub enum Existence {
    Exists,
    FailsPositivityAt { x: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistenceReport {
    pub verdict: Existence,
    /// "sturm" when decided by exact root isolation, "sampled" otherwise.
    pub method: &'static str,
    pub x_max: f64,
}

/// Solution of `(ṽΘ)″ = −w̃` with `Θ(−1) = 0`, `Θ′(−1) = 2`.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSolution {
    pub v: Weight,
    pub w: Weight,
    /// Closed form of ṽΘ when w̃ lies in the polynomial×exp class.
    pub vtheta: Option<Weight>,
    pub vtheta_rendered: Option<String>,
    /// Θ as num/den when ṽ and ṽΘ share one exponential.
    pub theta_rendered: Option<String>,
    #[serde(skip)]
    pub theta_rational: Option<(UPoly, UPoly)>,
    /// `(Θ(−1), Θ′(−1) − 2)`.
    pub boundary_residuals: (f64, f64),
    pub boundary_exact: bool,
    /// `(ṽΘ)″ + w̃ ≡ 0` term by term.
    pub ode_exact: bool,
    pub positivity: ExistenceReport,
    /// Max deviation from the other assembly, when it was run.
    pub agreement: Option<f64>,
    #[serde(skip)]
    v_start: f64,
}

impl ProfileSolution {
    pub fn vtheta_at(&self, x: f64) -> Result<f64> {
        match &self.vtheta {
            Some(e) => e.eval(&[x]),
            None => numeric_vtheta(self.v_start, &self.w, x),
        }
    }

    pub fn theta_at(&self, x: f64) -> Result<f64> {
        if let Some((n, d)) = &self.theta_rational {
            return Ok(n.eval_f64(x) / d.eval_f64(x));
        }
        Ok(self.vtheta_at(x)? / self.v.eval(&[x])?)
    }

    /// (Θ, Θ′, Θ″) by the quotient rule.
    pub fn theta_jet(&self, x: f64) -> Result<(f64, f64, f64)> {
        let Some(vt) = &self.vtheta else {
            let h = 1e-4;
            let (a, b, c) = (self.theta_at(x - h)?, self.theta_at(x)?, self.theta_at(x + h)?);
            return Ok((b, (c - a) / (2.0 * h), (c - 2.0 * b + a) / (h * h)));
        };
        let (n1, n2) = (vt.differentiate(0), vt.differentiate(0).differentiate(0));
        let (d1, d2) = (self.v.differentiate(0), self.v.differentiate(0).differentiate(0));
        let at = |w: &Weight| w.eval(&[x]);
        let d = at(&self.v)?;
        let t = self.theta_at(x)?;
        let t1 = (at(&n1)? - t * at(&d1)?) / d;
        let t2 = (at(&n2)? - 2.0 * t1 * at(&d1)? - t * at(&d2)?) / d;
        Ok((t, t1, t2))
    }
}

fn numeric_vtheta(v_start: f64, w: &Weight, x: f64) -> Result<f64> {
    let cw = w.compile();
    let f = |t: f64| (x - t) * cw.eval(&[t]);
    let r = integrate_interval(&f, -1.0, x, &QuadOptions::with_tol(1e-12))?;
    Ok(2.0 * v_start * (1.0 + x) - r.value)
}

fn check_v_positive(v: &Weight) -> Result<()> {
    let v0 = v.eval(&[-1.0])?;
    if !(v0 > 0.0) {
        return Err(Error::PoleOnDomain("ṽ(−1) ≤ 0".into()));
    }
    if let Some((p, _, _)) = single_group(v) {
        if let Some(r) = p.first_root_above(&q(-1), &Q::new(1.into(), 1_000_000_000i64.into())) {
            return Err(Error::PoleOnDomain(format!("ṽ vanishes near x = {}", to_f64(&r))));
        }
        return Ok(());
    }
    let rep = weights::check_positive(v, &half_line().hpoly());
    match rep.witness {
        Some(x) if !rep.positive => Err(Error::PoleOnDomain(format!("ṽ ≤ 0 at {x:?}"))),
        _ => Ok(()),
    }
}

fn theta_rational(vtheta: &Weight, v: &Weight) -> Option<(UPoly, UPoly)> {
    let (n, ln, kn) = single_group(vtheta)?;
    let (d, ld, kd) = single_group(v)?;
    if ln != ld || kn != kd {
        return None;
    }
    let (quo, rem) = n.divrem(&d);
    if rem.is_zero() {
        Some((quo, UPoly::new(vec![Q::one()])))
    } else {
        Some((n, d))
    }
}

fn render_upoly(p: &UPoly) -> String {
    weights::render_poly(&Poly::from_univariate(p))
}

/// `ṽΘ(x) = 2ṽ(−1)(1+x) − x∫_{−1}^x w̃ + ∫_{−1}^x t w̃(t) dt`.
pub fn profile_solve(v: &Weight, w: &Weight) -> Result<ProfileSolution> {
    profile_solve_with(v, w, 50.0)
}

pub fn profile_solve_with(v: &Weight, w: &Weight, x_max: f64) -> Result<ProfileSolution> {
    if v.nvars != 1 || w.nvars != 1 {
        return Err(Error::Malformed("profile weights must be univariate".into()));
    }
    check_v_positive(v)?;
    let v_start = v.eval(&[-1.0])?;
    if w.univariate_terms().is_none() {
        return Ok(finish(v, w, None, v_start, x_max));
    }
    let m1 = q(-1);
    let a0 = antiderivative(w)?;
    let a1 = antiderivative(&w.mul_poly(&x_poly()))?;
    let big_w = a0.sub(&constant_weight(&a0.eval_exact(std::slice::from_ref(&m1))?));
    let big_u = a1.sub(&constant_weight(&a1.eval_exact(std::slice::from_ref(&m1))?));
    let boundary = constant_weight(&v.eval_exact(&[m1])?.scale(&q(2))).mul_poly(&Poly::affine(&[q(1)], &q(1)));
    let vt = boundary.sub(&big_w.mul_poly(&x_poly())).add(&big_u);
    Ok(finish(v, w, Some(vt), v_start, x_max))
}

fn finish(v: &Weight, w: &Weight, vt: Option<Weight>, v_start: f64, x_max: f64) -> ProfileSolution {
    let mut sol = ProfileSolution {
        v: v.clone(),
        w: w.clone(),
        vtheta_rendered: vt.as_ref().map(Weight::render),
        theta_rational: vt.as_ref().and_then(|e| theta_rational(e, v)),
        theta_rendered: None,
        vtheta: vt,
        boundary_residuals: (0.0, 0.0),
        boundary_exact: false,
        ode_exact: false,
        positivity: ExistenceReport { verdict: Existence::Exists, method: "sampled", x_max },
        agreement: None,
        v_start,
    };
    sol.theta_rendered = sol.theta_rational.as_ref().map(|(n, d)| {
        if d.degree() == Some(0) && d.coeffs[0].is_one() {
            render_upoly(n)
        } else {
            format!("({}) / ({})", render_upoly(n), render_upoly(d))
        }
    });
    if let Some(e) = &sol.vtheta {
        let m1 = [q(-1)];
        let val = e.eval_exact(&m1).unwrap_or_default();
        let d1 = e.differentiate(0).eval_exact(&m1).unwrap_or_default();
        let target = v.eval_exact(&m1).map(|s| s.scale(&q(2))).unwrap_or_default();
        sol.boundary_exact = val.is_zero() && d1.sub(&target).is_zero();
        sol.boundary_residuals = (val.to_f64() / v_start, d1.sub(&target).to_f64() / v_start);
        sol.ode_exact = e.differentiate(0).differentiate(0).add(w).is_zero();
    } else {
        let h = 1e-4;
        let a = sol.vtheta_at(-1.0).unwrap_or(f64::NAN);
        let b = sol.vtheta_at(-1.0 + h).unwrap_or(f64::NAN);
        let c = sol.vtheta_at(-1.0 + 2.0 * h).unwrap_or(f64::NAN);
        sol.boundary_residuals = (a / v_start, (-3.0 * a + 4.0 * b - c) / (2.0 * h) / v_start - 2.0);
    }
    sol.positivity = positivity(&sol, x_max);
    sol
}

fn positivity(sol: &ProfileSolution, x_max: f64) -> ExistenceReport {
    if let Some((p, _, _)) = sol.vtheta.as_ref().and_then(single_group) {
        let tol = Q::new(1.into(), 1_000_000_000_000i64.into());
        let verdict = match p.first_root_above(&q(-1), &tol) {
            Some(r) => Existence::FailsPositivityAt { x: to_f64(&r) },
            None if p.eval(&Q::zero()).is_positive() => Existence::Exists,
            None => Existence::FailsPositivityAt { x: -1.0 },
        };
        return ExistenceReport { verdict, method: "sturm", x_max };
    }
    // Sign scan, then bisection on the first nonpositive sample.
    let n = 4000;
    let xs: Vec<f64> = (1..=n).map(|i| -1.0 + (x_max + 1.0) * (i as f64 / n as f64).powi(2)).collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| sol.vtheta_at(x).unwrap_or(f64::NAN)).collect();
    let mut prev = -1.0;
    for (x, val) in xs.iter().zip(&vals) {
        if !(*val > 0.0) {
            let (mut lo, mut hi) = (prev, *x);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sol.vtheta_at(mid).is_ok_and(|y| y > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return ExistenceReport { verdict: Existence::FailsPositivityAt { x: hi }, method: "sampled", x_max };
        }
        prev = *x;
    }
    ExistenceReport { verdict: Existence::Exists, method: "sampled", x_max }
}

/// `ṽΘ(x) = −∫_x^∞ (t − x) w̃(t) dt`, valid once the affine Futaki invariant vanishes.
pub fn profile_solve_decaying(v: &Weight, w: &Weight, opts: &QuadOptions) -> Result<ProfileSolution> {
    let aff = futaki_affine(&half_line(), v, w, opts)?;
    if !aff.vanishes {
        return Err(Error::AffineFutakiNonzero(aff.values));
    }
    let terms = w
        .univariate_terms()
        .ok_or_else(|| Error::Malformed("decaying assembly needs a factor-free weight".into()))?;
    if terms.iter().any(|(p, lam, _)| !p.is_zero() && !lam.is_positive()) {
        return Err(Error::DivergentIntegral("w̃ does not decay".into()));
    }
    check_v_positive(v)?;
    let hat_w = antiderivative(w)?;
    let hat_u = antiderivative(&w.mul_poly(&x_poly()))?;
    let vt = hat_u.sub(&hat_w.mul_poly(&x_poly()));
    let mut sol = finish(v, w, Some(vt), v.eval(&[-1.0])?, 50.0);
    let other = profile_solve(v, w)?;
    let mut dev = 0.0f64;
    for i in 0..=60 {
        let x = -1.0 + i as f64 * 0.25;
        let (a, b) = (sol.vtheta_at(x)?, other.vtheta_at(x)?);
        dev = dev.max((a - b).abs() / (1.0 + b.abs()));
    }
    sol.agreement = Some(dev);
    if dev > 1e-10 {
        return Err(Error::RegressionMismatch(format!("decaying and direct profiles differ by {dev:e}")));
    }
    Ok(sol)
}

pub fn existence_verdict(v: &Weight, w: &Weight, x_max: f64) -> Result<ExistenceReport> {
    Ok(profile_solve_with(v, w, x_max)?.positivity)
}

#[derive(Clone, Debug, Serialize)]
pub struct CreaseProfileRow {
    pub x0: f64,
    pub futaki: f64,
    pub futaki_error: f64,
    pub vtheta: f64,
    pub residual: f64,
    /// Both sides agree as closed forms.
    pub exact_match: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CreaseProfileReport {
    pub rows: Vec<CreaseProfileRow>,
    pub max_residual: f64,
}

/// `max_{x₀} |F_{ṽ,w̃}(f_{x₀}) − ṽ(x₀)Θ(x₀)|` with `f_{x₀} = max{x₀ − x, 0}`.
pub fn crease_profile_identity(v: &Weight, w: &Weight, x0s: &[Q], opts: &QuadOptions) -> Result<CreaseProfileReport> {
    let sol = profile_solve(v, w)?;
    let p = half_line();
    let mut rows = Vec::new();
    for x0 in x0s {
        let f = pl::f_x0(x0.clone());
        let x = to_f64(x0);
        let exact = futaki_exact_1d(&p, v, w, &f);
        let row = match (&exact, &sol.vtheta) {
            (Some(fe), Some(vt)) => {
                let rhs = vt.eval_exact(std::slice::from_ref(x0))?;
                let diff = fe.sub(&rhs);
                let (fv, ferr) = fe.value();
                CreaseProfileRow {
                    x0: x,
                    futaki: fv,
                    futaki_error: ferr,
                    vtheta: rhs.to_f64(),
                    residual: diff.to_f64().abs(),
                    exact_match: diff.is_zero(),
                }
            }
            _ => {
                let r = futaki(&p, v, w, &f, opts)?;
                let vt = sol.vtheta_at(x)?;
                CreaseProfileRow {
                    x0: x,
                    futaki: r.value,
                    futaki_error: r.total_error(),
                    vtheta: vt,
                    residual: (r.value - vt).abs(),
                    exact_match: false,
                }
            }
        };
        rows.push(row);
    }
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(CreaseProfileReport { rows, max_residual })
}

/// `(ṽ, w̃)` for the bundle built from factors (p_a, c_a, n_a, s_a).
pub fn line_bundle_weights(v: &Weight, w: &Weight, data: &[FibrationFactor]) -> Result<(Weight, Weight)> {
    if data.iter().any(|d| d.p.len() != 1) {
        return Err(Error::Malformed("line bundle factors must be univariate".into()));
    }
    fibration_transform(v, w, data, &half_line())
}

/// The profile metric as a source of H = Θ.
pub struct ProfileHessian<'a>(pub &'a ProfileSolution);

impl HessianSource for ProfileHessian<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn jet(&self, x: &[f64]) -> Result<HJet> {
        let (t, t1, t2) = self.0.theta_jet(x[0])?;
        let m = |a: f64| DMatrix::from_element(1, 1, a);
        Ok(HJet { h: m(t), dh: vec![m(t1)], d2h: vec![vec![m(t2)]] })
    }

    fn potential_value(&self, _: &[f64]) -> Option<f64> {
        None
    }

    fn potential_hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let t = self.0.theta_at(x[0]).ok()?;
        Some(DMatrix::from_element(1, 1, 1.0 / t))
    }
}

/// `F(φ) = (1+κφ)^{−d} φ^{1−k} Σ_j h^{(j)}(φ)/μ^{j+1}` with
/// `h(φ) = τ(1+κφ)^d φ^k − k(1+κφ)^{d+1} φ^{k−1}`.
#[derive(Clone, Debug, Serialize)]
pub struct LiProfile {
    pub d: u32,
    pub k: u32,
    pub tau: f64,
    pub kappa: f64,
    pub mu: f64,
    pub p: f64,
    pub h: String,
    pub f: String,
    /// F(φ) = slope·φ + c + O(1/φ).
    pub slope: f64,
    pub c: f64,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub exact: LiExact,
}

#[derive(Clone, Debug, Default)]
pub struct LiExact {
    pub p: Q,
    pub mu: Q,
    pub h: UPoly,
    pub num: UPoly,
    pub den: UPoly,
    pub slope: Q,
    pub c: Q,
    /// `pφ·den − num`, so that pφ − F = r/den.
    pub r: UPoly,
}

fn upow(p: &UPoly, k: u32) -> UPoly {
    (0..k).fold(UPoly::new(vec![Q::one()]), |acc, _| mul_upoly(&acc, p))
}

pub fn li_profile(d: u32, k: u32, tau: f64, kappa: f64, mu: f64) -> Result<LiProfile> {
    if d < 1 || k < 1 || !(tau > 0.0 && kappa > 0.0 && mu > 0.0) {
        return Err(Error::Malformed("need d, k ≥ 1 and τ, κ, μ > 0".into()));
    }
    let (tq, kq, mq) = (from_f64(tau)?, from_f64(kappa)?, from_f64(mu)?);
    let lin = UPoly::new(vec![Q::one(), kq.clone()]);
    let phi = UPoly::new(vec![Q::zero(), Q::one()]);
    let kk = q(k as i64);
    let h = add_upoly(
        &scale_upoly(&mul_upoly(&upow(&lin, d), &upow(&phi, k)), &tq),
        &scale_upoly(&mul_upoly(&upow(&lin, d + 1), &upow(&phi, k - 1)), &-kk.clone()),
    );
    let mut num = UPoly::new(vec![]);
    let mut hj = h.clone();
    let mut mp = mq.clone();
    for _ in 0..=(d + k) {
        num = add_upoly(&num, &scale_upoly(&hj, &mp.recip()));
        hj = hj.deriv();
        mp *= &mq;
    }
    let den = mul_upoly(&upow(&lin, d), &upow(&phi, k - 1));
    let (quo, _) = num.divrem(&den);
    let slope = quo.coeffs.get(1).cloned().unwrap_or_else(Q::zero);
    let c = quo.coeffs.first().cloned().unwrap_or_else(Q::zero);
    let pq = &tq - &kk * &kq;
    let r = add_upoly(&scale_upoly(&mul_upoly(&phi, &den), &pq), &num.neg());
    let mut flags = Vec::new();
    if !mq.is_one() {
        flags.push("mu_literal: μ ≠ 1 uses the literal formula; F/φ tends to p/μ".into());
    }
    if k >= 2 {
        flags.push("k_unproven: k ≥ 2 is conjectural".into());
    }
    if !pq.is_positive() {
        flags.push("p_nonpositive: outside the shrinker regime".into());
    }
    Ok(LiProfile {
        d,
        k,
        tau,
        kappa,
        mu,
        p: to_f64(&pq),
        h: render_upoly(&h),
        f: format!("({}) / ({})", render_upoly(&num), render_upoly(&den)),
        slope: to_f64(&slope),
        c: to_f64(&c),
        flags,
        exact: LiExact { p: pq, mu: mq, h, num, den, slope, c, r },
    })
}

impl LiProfile {
    pub fn f_at(&self, phi: f64) -> f64 {
        self.exact.num.eval_f64(phi) / self.exact.den.eval_f64(phi)
    }

    pub fn f_exact(&self, phi: &Q) -> Q {
        self.exact.num.eval(phi) / self.exact.den.eval(phi)
    }

    /// (leading coefficient of F·μ^{d+k+1}(1+κφ)^dφ^{k−1}, (τ−kκ)κ^dμ^{d+k}).
    pub fn leading_audit(&self) -> (Q, Q, usize) {
        let e = &self.exact;
        let m = e.mu.clone();
        let mut mpow = Q::one();
        for _ in 0..(self.d + self.k + 1) {
            mpow *= &m;
        }
        let scaled = scale_upoly(&e.num, &mpow);
        let kap = from_f64(self.kappa).unwrap_or_default();
        let mut expect = e.p.clone();
        for _ in 0..self.d {
            expect *= &kap;
        }
        for _ in 0..(self.d + self.k) {
            expect *= &m;
        }
        (scaled.lead(), expect, scaled.degree().unwrap_or(0))
    }

    /// Errors unless F > 0 on [a, b] (b = ∞ allowed).
    pub fn check_positive_on(&self, a: f64, b: Option<f64>) -> Result<()> {
        if !(a > 0.0) {
            return Err(Error::PoleOnDomain("φ must be positive".into()));
        }
        let aq = from_f64(a)?;
        let bq = b.map(from_f64).transpose()?;
        let num = &self.exact.num;
        if !num.eval(&aq).is_positive() || num.count_roots(Some(&aq), bq.as_ref()) > 0 {
            return Err(Error::PoleOnDomain(format!("F vanishes in [{a}, {}]", b.map_or("∞".into(), |x| x.to_string()))));
        }
        Ok(())
    }

    /// The integrand of G in the variable t = 1/u; smooth at t = 0 when μ = 1.
    fn tail_integrand(&self) -> Result<impl Fn(f64) -> f64 + Sync> {
        let e = &self.exact;
        let m = e.num.degree().unwrap_or(0);
        if e.r.degree().is_some_and(|dr| dr + 1 > m) {
            return Err(Error::DivergentIntegral("G diverges: F/φ does not tend to p".into()));
        }
        let rev = |p: &UPoly, deg: usize| -> Vec<f64> {
            (0..=deg).map(|i| p.coeffs.get(deg - i).map_or(0.0, to_f64)).collect()
        };
        let (rr, nr, p) = (rev(&e.r, m - 1), rev(&e.num, m), to_f64(&e.p));
        let horner = |c: &[f64], t: f64| c.iter().rev().fold(0.0, |a, x| a * t + x);
        Ok(move |t: f64| horner(&rr, t) / (p * horner(&nr, t)))
    }

    /// `∫_φ^∞ (pu − F)/(puF) du`.
    pub fn tail(&self, phi: f64, opts: &QuadOptions) -> Result<IntegralResult> {
        let g = self.tail_integrand()?;
        integrate_interval(&g, 0.0, 1.0 / phi, opts)
    }

    /// `(1/p)|log((pφ − C)/(pφ))|`.
    pub fn tail_envelope(&self, phi: f64) -> f64 {
        let pp = self.p * phi;
        if pp <= self.c {
            return f64::INFINITY;
        }
        (((pp - self.c) / pp).ln() / self.p).abs()
    }
}

/// `G(φ₀, φ) = ∫_{φ₀}^φ (pu − F(u))/(puF(u)) du`.
pub fn li_g(prof: &LiProfile, phi0: f64, phi: f64, opts: &QuadOptions) -> Result<IntegralResult> {
    let (a, b) = if phi0 <= phi { (phi0, phi) } else { (phi, phi0) };
    prof.check_positive_on(a, Some(b))?;
    if a == b {
        return Ok(IntegralResult::zero());
    }
    let e = &prof.exact;
    let (r, num, p) = (e.r.clone(), e.num.clone(), prof.p);
    // u = e^s
    let g = move |s: f64| {
        let u = s.exp();
        r.eval_f64(u) / (p * num.eval_f64(u))
    };
    let res = integrate_interval(&g, a.ln(), b.ln(), opts)?;
    Ok(if phi0 <= phi { res } else { res.scaled(-1.0) })
}

#[derive(Clone, Debug, Serialize)]
pub struct LiC0 {
    pub c0: f64,
    pub error: f64,
    /// Cut-off Φ at which the envelope is compared.
    pub cut: f64,
    pub g_at_cut: f64,
    pub envelope: f64,
    pub envelope_holds: bool,
}

/// `C₀ = G(φ₀, ∞)` with the analytic envelope at Φ = `cut`.
pub fn li_c0(prof: &LiProfile, phi0: f64, cut: f64, opts: &QuadOptions) -> Result<LiC0> {
    prof.check_positive_on(phi0, None)?;
    let g = prof.tail_integrand()?;
    let c0 = integrate_interval(&g, 0.0, 1.0 / phi0, opts)?;
    let gc = li_g(prof, phi0, cut, opts)?;
    let envelope = prof.tail_envelope(cut);
    Ok(LiC0 {
        c0: c0.value,
        error: c0.total_error(),
        cut,
        g_at_cut: gc.value,
        envelope,
        envelope_holds: (c0.value - gc.value).abs() <= envelope + c0.total_error() + gc.total_error(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CauchyRow {
    pub phi: f64,
    /// |G(φ₀, 2Φ) − G(φ₀, Φ)|.
    pub increment: f64,
    pub envelope: f64,
    pub holds: bool,
}

pub fn li_cauchy(prof: &LiProfile, phi0: f64, cuts: &[f64], opts: &QuadOptions) -> Result<Vec<CauchyRow>> {
    cuts.iter()
        .map(|&phi| {
            let a = li_g(prof, phi0, phi, opts)?;
            let b = li_g(prof, phi0, 2.0 * phi, opts)?;
            let increment = (b.value - a.value).abs();
            let envelope = prof.tail_envelope(phi);
            Ok(CauchyRow { phi, increment, envelope, holds: increment <= envelope + a.total_error() + b.total_error() })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub s: f64,
    pub phi: f64,
    pub e: f64,
    /// Relative fixed-point residual.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiDecayReport {
    pub p: f64,
    pub c0: f64,
    pub d0: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of log e against log ρ, ρ = s^{p/2}.
    pub slope: f64,
    pub target: f64,
    pub monotone: bool,
    pub max_residual: f64,
    pub flags: Vec<String>,
}

/// Reconstructs φ(s) from `φ = φ₀ s₀^{−p} s^p e^{−G(φ₀,φ)}` and measures the distance to the cone.
///
/// With T(φ) = C₀ − G(φ₀, φ) the equation reads φ = B s^p e^{T(φ)}, B = φ₀ s₀^{−p} e^{−C₀}, and
/// e(s) = |s⁻¹F − (2p−1)D₀s^{p−1}| / ((2p−1)D₀s^{p−1}) = |e^{T}F/(pφ) − 1|.
pub fn li_decay_check(
    prof: &LiProfile,
    phi0: f64,
    s0: f64,
    s_range: (f64, f64),
    points: usize,
    opts: &QuadOptions,
) -> Result<LiDecayReport> {
    let p = prof.p;
    if p <= 0.5 {
        return Err(Error::Malformed(format!("p = {p} must exceed 1/2")));
    }
    let mut flags = prof.flags.clone();
    if prof.k != 1 {
        flags.push("decay statement proved only for k = 1".into());
    }
    let c0 = li_c0(prof, phi0, 1e4 * phi0.max(1.0), opts)?;
    let b = phi0 * s0.powf(-p) * (-c0.c0).exp();
    let d0 = p / (2.0 * p - 1.0) * b;
    let e = &prof.exact;
    let n = points.max(2);
    let (l0, l1) = (s_range.0.ln(), s_range.1.ln());
    let ss: Vec<f64> = (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect();
    let rows: Vec<DecayRow> = ss
        .par_iter()
        .map(|&s| -> Result<DecayRow> {
            let target = b * s.powf(p);
            let mut phi = target;
            let mut iterations = 0;
            let mut residual = f64::INFINITY;
            while iterations < 200 {
                prof.check_positive_on(phi, None).map_err(|_| Error::FixedPointDiverged(s))?;
                let t = prof.tail(phi, opts)?.value;
                let rhs = target * t.exp();
                residual = (phi - rhs).abs() / phi;
                if !residual.is_finite() {
                    return Err(Error::FixedPointDiverged(s));
                }
                if residual < 1e-14 {
                    break;
                }
                phi = 0.5 * phi + 0.5 * rhs;
                iterations += 1;
            }
            if residual >= 1e-12 {
                return Err(Error::FixedPointDiverged(s));
            }
            let t = prof.tail(phi, opts)?.value;
            let delta = -e.r.eval_f64(phi) / (p * phi * e.den.eval_f64(phi));
            let err = (t.exp_m1() + delta * t.exp()).abs();
            Ok(DecayRow { s, phi, e: err, residual, iterations })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| 0.5 * p * r.s.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n as f64, ys.iter().sum::<f64>() / n as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let monotone = rows.windows(2).all(|w| w[1].e < w[0].e);
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(LiDecayReport { p, c0: c0.c0, d0, rows, slope: sxy / sxx, target: -2.0, monotone, max_residual, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qr;

    fn flat() -> (Weight, Weight) {
        let v = Weight::exp(vec![q(1)]);
        let w = weights::soliton_weight_w(&v, 1);
        (v, w)
    }

    #[test]
    fn flat_profile_is_linear() {
        let (v, w) = flat();
        let s = profile_solve(&v, &w).unwrap();
        let (n, d) = s.theta_rational.clone().unwrap();
        assert_eq!(n, UPoly::new(vec![q(2), q(2)]));
        assert_eq!(d, UPoly::new(vec![q(1)]));
        assert!(s.boundary_exact && s.ode_exact);
        assert!(matches!(s.positivity.verdict, Existence::Exists));
        let dec = profile_solve_decaying(&v, &w, &QuadOptions::default()).unwrap();
        assert!(dec.agreement.unwrap() < 1e-14);
        let (_, w2) = (v.clone(), w.scale(&q(2)));
        assert!(matches!(profile_solve_decaying(&v, &w2, &QuadOptions::default()), Err(Error::AffineFutakiNonzero(_))));
    }

    #[test]
    fn trivial_and_failing_profiles() {
        let one = Weight::constant(1, q(1));
        let s = profile_solve(&one, &Weight::zero(1)).unwrap();
        assert_eq!(s.theta_rational.unwrap().0, UPoly::new(vec![q(2), q(2)]));
        let v = Weight::from_poly(Poly::affine(&[q(1)], &q(2)));
        let s = profile_solve(&v, &Weight::constant(1, q(2))).unwrap();
        match s.positivity.verdict {
            Existence::FailsPositivityAt { x } => assert!((x - 1.0).abs() < 1e-9),
            _ => panic!("expected failure"),
        }
        assert!((s.theta_at(0.0).unwrap() - 0.5).abs() < 1e-15);
        let neg = Weight::exp(vec![q(1)]).scale(&q(-3));
        assert!(matches!(existence_verdict(&one, &neg, 50.0).unwrap().verdict, Existence::Exists));
    }

    #[test]
    fn crease_profile_values() {
        let (v, w) = flat();
        let r = crease_profile_identity(&v, &w, &[q(0), q(1), q(2), qr(-1, 2)], &QuadOptions::default()).unwrap();
        let e = 1f64.exp();
        for (row, want) in r.rows.iter().zip([2.0, 4.0 / e, 6.0 / (e * e)]) {
            assert!((row.futaki - want).abs() < 1e-12);
            assert!(row.exact_match);
        }
        assert!(r.max_residual < 1e-14);
    }

    #[test]
    fn numeric_fallback_matches() {
        let v = Weight::constant(1, q(1));
        let w = Weight::factor(Poly::affine(&[q(1)], &q(3)), -2).scale(&q(-1));
        let s = profile_solve(&v, &w).unwrap();
        assert!(s.vtheta.is_none());
        let x = 1.5f64;
        let want = 2.0 * (1.0 + x) + 0.5 * (x + 1.0) - ((x + 3.0) / 2.0).ln();
        assert!((s.vtheta_at(x).unwrap() - want).abs() < 1e-10);
        assert!(s.boundary_residuals.0.abs() < 1e-12 && s.boundary_residuals.1.abs() < 1e-6);
    }

    #[test]
    fn li_profile_expansion() {
        let li = li_profile(1, 1, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(li.exact.h, UPoly::new(vec![q(-1), q(1), q(2)]));
        assert_eq!(li.exact.num, UPoly::new(vec![q(4), q(5), q(2)]));
        assert_eq!(li.exact.den, UPoly::new(vec![q(1), q(1)]));
        assert_eq!(li.f_exact(&q(1)), qr(11, 2));
        assert_eq!((li.slope, li.c), (2.0, 3.0));
        let (lead, want, deg) = li.leading_audit();
        assert_eq!((lead, deg), (want, 2));
        assert!(li.flags.is_empty());
        assert!((li.f_at(1e4) / 1e4 - 2.0).abs() < 0.01);
    }

    #[test]
    fn li_g_and_tail() {
        let li = li_profile(1, 1, 3.0, 1.0, 1.0).unwrap();
        let o = QuadOptions::with_tol(1e-12);
        assert_eq!(li_g(&li, 1.0, 1.0, &o).unwrap().value, 0.0);
        let c = li_c0(&li, 1.0, 1e4, &o).unwrap();
        assert!(c.envelope_holds);
        for r in li_cauchy(&li, 1.0, &[1e2, 1e3, 1e4], &o).unwrap() {
            assert!(r.holds, "{r:?}");
        }
        // Both routes to G(1, 50) agree.
        let direct = li_g(&li, 1.0, 50.0, &o).unwrap().value;
        let via_tail = c.c0 - li.tail(50.0, &o).unwrap().value;
        assert!((direct - via_tail).abs() < 1e-11);
    }

    #[test]
    fn li_decay_rate() {
        let li = li_profile(1, 1, 3.0, 1.0, 1.0).unwrap();
        let r = li_decay_check(&li, 1.0, 1.0, (1e2, 1e6), 21, &QuadOptions::with_tol(1e-12)).unwrap();
        assert!((r.slope + 2.0).abs() < 1e-3 && r.monotone && r.max_residual < 1e-12);
        // e·φ → C(p−1)/p² = 3/4
        let last = r.rows.last().unwrap();
        assert!((last.e * last.phi - 0.75).abs() < 1e-3);
    }
}
