//! Weighted Futaki invariants, destabilizer searches and related identities.

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::geometry::{HPoly, Polyhedron, Row};
use crate::pl::{self, PiecewiseLinearConvex};
use crate::poly::Poly;
use crate::potentials::{abreu_scal_v, HessianSource, WeightJet};
use crate::quadrature::{
    integrate_fn, integrate_fn_on_chart, integrate_weight, integrate_weight_exact_1d, integrate_weight_on_chart,
    IntegralResult, QuadOptions,
};
use crate::rational::{self, from_f64, q, to_f64, Q};
use crate::sampling;
use crate::weights::{soliton_weight_w, AffineForm, Weight};

/// `Σ_a ∫_{∂P ∩ Δ_a} ℓ_a v dσ`.
pub fn boundary_integral(p: &Polyhedron, v: &Weight, f: &PiecewiseLinearConvex, opts: &QuadOptions) -> Result<IntegralResult> {
    let f = f.irredundant_on(p);
    let (regions, _) = f.regions_and_creases(p);
    let mut acc = IntegralResult::zero();
    for facet in p.facet_atlas() {
        for r in &regions {
            let rows: Vec<Row> = facet.domain.rows.iter().cloned().chain(r.domain.rows.iter().map(|x| facet.chart.pull_row(x))).collect();
            let dom = HPoly::new(facet.chart.dim(), rows);
            let full = if facet.chart.dim() == 0 { !dom.is_empty() } else { dom.interior_point().is_some() };
            if !full {
                continue;
            }
            let g = v.mul_poly(&f.pieces[r.piece].to_poly());
            acc = acc.combine(1.0, &integrate_weight_on_chart(&g, &facet.chart, &dom, opts)?, 1.0);
            if facet.chart.dim() == 0 {
                break;
            }
        }
    }
    Ok(acc)
}

/// `Σ_a ∫_{Δ_a} ℓ_a w dx`.
pub fn interior_integral(p: &Polyhedron, w: &Weight, f: &PiecewiseLinearConvex, opts: &QuadOptions) -> Result<IntegralResult> {
    let f = f.irredundant_on(p);
    let (regions, _) = f.regions_and_creases(p);
    let mut acc = IntegralResult::zero();
    for r in &regions {
        let g = w.mul_poly(&f.pieces[r.piece].to_poly());
        acc = acc.combine(1.0, &integrate_weight(&g, &r.domain, opts)?, 1.0);
    }
    Ok(acc)
}

/// `F_{v,w}(f) = 2∫_{∂P} f v dσ − ∫_P f w dx`.
pub fn futaki(p: &Polyhedron, v: &Weight, w: &Weight, f: &PiecewiseLinearConvex, opts: &QuadOptions) -> Result<IntegralResult> {
    let b = boundary_integral(p, v, f, opts)?;
    let i = interior_integral(p, w, f, opts)?;
    let mut r = b.combine(2.0, &i, -1.0);
    if let Some(e) = futaki_exact_1d(p, v, w, f) {
        r.exact = Some(e.render());
    }
    if !r.value.is_finite() {
        return Err(Error::DivergentIntegral("Futaki value is not finite".into()));
    }
    Ok(r)
}

/// Closed form of F in one variable for factor-free weights.
pub fn futaki_exact_1d(p: &Polyhedron, v: &Weight, w: &Weight, f: &PiecewiseLinearConvex) -> Option<ExpSum> {
    if p.dim != 1 {
        return None;
    }
    let f = f.irredundant_on(p);
    let (regions, _) = f.regions_and_creases(p);
    let mut acc = ExpSum::zero();
    for h in &p.halfspaces {
        let x = vec![-&h.offset / Q::from_integer(h.normal[0].into())];
        let scale = Q::from_integer(h.normal[0].abs().into()).recip();
        let fx = f.eval(&x);
        acc = acc.add(&v.eval_exact(&x).ok()?.scale(&(fx * scale * q(2))));
    }
    for r in &regions {
        let g = w.mul_poly(&f.pieces[r.piece].to_poly());
        acc = acc.sub(&integrate_weight_exact_1d(&g, &r.domain)?.ok()?);
    }
    Some(acc)
}

/// F for a continuous function f with `|f(x)| ≤ Σ_k growth[k]|x|^k`.
pub fn futaki_fn(
    p: &Polyhedron,
    v: &Weight,
    w: &Weight,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    growth: &[f64],
    certified: bool,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let hp = p.hpoly();
    let (cv, cw) = (v.compile(), w.compile());
    let env_v = v.envelope(&hp)?.inflate(growth, certified);
    let env_w = w.envelope(&hp)?.inflate(growth, certified);
    let fv = |x: &[f64]| f(x) * cv.eval(x);
    let fw = |x: &[f64]| f(x) * cw.eval(x);
    let mut b = IntegralResult::zero();
    for facet in p.facet_atlas() {
        b = b.combine(1.0, &integrate_fn_on_chart(&fv, Some(&env_v), &facet.chart, &facet.domain, opts)?, 1.0);
    }
    let i = integrate_fn(&fw, Some(&env_w), &hp, opts)?;
    let r = b.combine(2.0, &i, -1.0);
    if !r.value.is_finite() {
        return Err(Error::DivergentIntegral("Futaki value is not finite".into()));
    }
    Ok(r)
}

fn affine_basis(n: usize) -> Vec<PiecewiseLinearConvex> {
    let mut out = vec![PiecewiseLinearConvex::affine(AffineForm::new(vec![Q::zero(); n], q(1)))];
    for i in 0..n {
        let mut b = vec![Q::zero(); n];
        b[i] = q(1);
        out.push(PiecewiseLinearConvex::affine(AffineForm::new(b, Q::zero())));
    }
    out
}

/// `(F(1), F(x¹), …, F(xⁿ))` with a vanishing verdict.
#[derive(Clone, Debug, Serialize)]
pub struct AffineFutaki {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub scales: Vec<f64>,
    pub exact: Vec<Option<String>>,
    pub vanishes: bool,
}

pub fn futaki_affine(p: &Polyhedron, v: &Weight, w: &Weight, opts: &QuadOptions) -> Result<AffineFutaki> {
    let mut out = AffineFutaki { values: vec![], errors: vec![], scales: vec![], exact: vec![], vanishes: true };
    for f in affine_basis(p.dim) {
        let b = boundary_integral(p, v, &f, opts)?;
        let i = interior_integral(p, w, &f, opts)?;
        let r = b.combine(2.0, &i, -1.0);
        let scale = 2.0 * b.magnitude + i.magnitude;
        let ex = futaki_exact_1d(p, v, w, &f);
        let value = ex.as_ref().map_or(r.value, |e| e.to_f64());
        out.vanishes &= value.abs() <= (1e-8 * scale).max(r.total_error()).max(1e-300);
        out.values.push(value);
        out.errors.push(r.total_error());
        out.scales.push(scale);
        out.exact.push(ex.map(|e| e.render()));
    }
    Ok(out)
}

/// `(∫_P xᵢ v dx)_i`.
pub fn futaki_v_vector(p: &Polyhedron, v: &Weight, opts: &QuadOptions) -> Result<Vec<IntegralResult>> {
    let hp = p.hpoly();
    (0..p.dim).map(|i| integrate_weight(&v.mul_poly(&Poly::var(p.dim, i)), &hp, opts)).collect()
}

/// One row of the soliton Futaki identity.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub ell: String,
    pub lhs: f64,
    pub rhs: f64,
    pub error: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolitonIdentityReport {
    pub rows: Vec<IdentityRow>,
    pub holds: bool,
    pub anticanonical: bool,
    pub consistent: bool,
}

/// Checks `∫ℓw = 2∫_{∂P} ℓv dσ − 2∫_P (ℓ − ℓ(0)) v dx` for ℓ ∈ {1, x¹, …, xⁿ} with w the soliton weight.
pub fn soliton_futaki_identity_check(p: &Polyhedron, v: &Weight, opts: &QuadOptions) -> Result<SolitonIdentityReport> {
    let n = p.dim;
    let w = soliton_weight_w(v, n);
    let hp = p.hpoly();
    let mut rows = Vec::new();
    for (k, f) in affine_basis(n).into_iter().enumerate() {
        let lhs = interior_integral(p, &w, &f, opts)?;
        let bd = boundary_integral(p, v, &f, opts)?;
        let vol = if k == 0 {
            IntegralResult::zero()
        } else {
            integrate_weight(&v.mul_poly(&Poly::var(n, k - 1)), &hp, opts)?
        };
        let rhs = bd.combine(2.0, &vol, -2.0);
        let err = lhs.total_error() + rhs.total_error();
        let scale = lhs.magnitude + rhs.magnitude;
        let holds = (lhs.value - rhs.value).abs() <= (1e-8 * scale).max(4.0 * err);
        rows.push(IdentityRow {
            ell: if k == 0 { "1".into() } else { format!("x{k}") },
            lhs: lhs.value,
            rhs: rhs.value,
            error: err,
            holds,
        });
    }
    let holds = rows.iter().all(|r| r.holds);
    let anticanonical = p.is_anticanonical();
    Ok(SolitonIdentityReport { rows, holds, anticanonical, consistent: holds == anticanonical })
}

#[derive(Clone, Debug, Serialize)]
pub struct WScale {
    pub a: f64,
    #[serde(with = "rational::serde_q")]
    pub a_rational: Q,
    pub boundary_mass: IntegralResult,
    pub w_mass: IntegralResult,
}

/// `a = 2∫_{∂P} v dσ / ∫_P w dx`, so that F_{v,aw}(1) = 0.
pub fn normalize_w_scale(p: &Polyhedron, v: &Weight, w: &Weight, opts: &QuadOptions) -> Result<WScale> {
    let one = &affine_basis(p.dim)[0];
    let b = boundary_integral(p, v, one, opts)?;
    let i = interior_integral(p, w, one, opts)?;
    if i.value.abs() <= i.total_error() || i.value == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let a = 2.0 * b.value / i.value;
    Ok(WScale { a, a_rational: from_f64(a)?, boundary_mass: b, w_mass: i })
}

/// `x e^{−λx} / (c + x⁴)` on the line.
fn c_lambda_integrand(lambda: &Q, c: &Q) -> Weight {
    let base = Poly::monomial(vec![4], q(1)).add(&Poly::constant(1, c.clone()));
    Weight::poly_exp(Poly::var(1, 0), vec![lambda.clone()]).mul(&Weight::factor(base, -1))
}

#[derive(Clone, Debug, Serialize)]
pub struct CLambda {
    pub lambda: f64,
    pub c: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Root in c of `∫_{−1}^∞ x e^{−λx}/(c + x⁴) dx`.
pub fn find_c_lambda(lambda: f64, opts: &QuadOptions) -> Result<CLambda> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Malformed(format!("lambda = {lambda} is not in (0,1)")));
    }
    let lq = from_f64(lambda)?;
    let hp = Polyhedron::half_line(q(-1)).hpoly();
    let o = QuadOptions { rel_tol: opts.rel_tol.min(1e-12), ..opts.clone() };
    let eval = |c: f64| -> Result<f64> { Ok(integrate_weight(&c_lambda_integrand(&lq, &from_f64(c)?), &hp, &o)?.value) };
    let mut hi = 1e6;
    let mut f_hi = eval(hi)?;
    let mut lo = None;
    for k in (-6..6).rev() {
        let c = 10f64.powi(k);
        let fc = eval(c)?;
        if fc.signum() != f_hi.signum() {
            lo = Some((c, fc));
            break;
        }
        hi = c;
        f_hi = fc;
    }
    let (mut a, mut fa) = lo.ok_or(Error::NoSignChange)?;
    let bracket = (a, hi);
    let (mut b, mut fb) = (hi, f_hi);
    let mut it = 0;
    let (mut c, mut fc) = (a, fa);
    // Bisection in log c, switching to secant steps once the bracket is tight.
    while it < 200 {
        it += 1;
        let mid = if (b / a) < 1.01 {
            let s = b - fb * (b - a) / (fb - fa);
            if s > a && s < b { s } else { 0.5 * (a + b) }
        } else {
            (a * b).sqrt()
        };
        c = mid;
        fc = eval(c)?;
        if fc.abs() < 1e-13 || (b - a) < 1e-15 * b {
            break;
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
    }
    Ok(CLambda { lambda, c, residual: fc.abs(), bracket, iterations: it })
}

/// `v = (x₁²x₂²+1)e^{−x₁−x₂}` and unscaled `w = e^{−λ(x₁+x₂)}/((c+x₁⁴)(c+x₂⁴))`.
pub fn c2_example_weights(lambda: &Q, c: &Q) -> (Weight, Weight) {
    let x1 = Poly::var(2, 0);
    let x2 = Poly::var(2, 1);
    let q1 = x1.pow(2).mul(&x2.pow(2)).add(&Poly::one(2));
    let v = Weight::poly_exp(q1, vec![q(1), q(1)]);
    let f1 = x1.pow(4).add(&Poly::constant(2, c.clone()));
    let f2 = x2.pow(4).add(&Poly::constant(2, c.clone()));
    let w = Weight::exp(vec![lambda.clone(), lambda.clone()]).mul(&Weight::factor(f1, -1)).mul(&Weight::factor(f2, -1));
    (v, w)
}

/// One evaluated member of a search family.
#[derive(Clone, Debug, Serialize)]
pub struct ScanEntry {
    pub family: String,
    pub params: Vec<f64>,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind")]
pub enum StabilityKind {
    NoDestabilizerFound,
    Destabilizer { f: PiecewiseLinearConvex, value: f64, error: f64, params: Vec<f64>, family: String },
    AffineObstruction { vector: Vec<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityVerdict {
    pub kind: StabilityKind,
    pub affine: AffineFutaki,
    pub search_log: Vec<ScanEntry>,
}

/// Parameters of the destabilizer search.
#[derive(Clone, Debug, Serialize)]
pub struct ScanConfig {
    /// Offsets a for simple creases max{⟨b,x⟩ + a, 0}.
    pub offsets: Vec<f64>,
    /// Number of slope samples on the unit sphere (ignored in one variable).
    pub sphere_samples: usize,
    /// R values for the ray family f_R.
    pub r_values: Vec<f64>,
    /// Golden-section steps refining the best offset.
    pub refine_steps: usize,
    /// Coordinate-descent sweeps over two-crease combinations.
    pub two_crease_sweeps: usize,
    /// Destabilizer threshold: value + error < −tol.
    pub tol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            offsets: (-8..=16).map(|k| k as f64 * 0.5).collect(),
            sphere_samples: 16,
            r_values: vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 60.0],
            refine_steps: 12,
            two_crease_sweeps: 1,
            tol: 0.0,
        }
    }
}

/// Rational points on S^{n−1} from a stereographic grid, in deterministic order.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<Q>> {
    match n {
        1 => vec![vec![q(1)], vec![q(-1)]],
        _ => {
            let mut out = Vec::new();
            let m = (count as f64).powf(1.0 / (n - 1) as f64).ceil().max(2.0) as i64;
            let ts: Vec<Q> = (0..m).map(|k| Q::new((2 * k - m + 1).into(), m.into())).collect();
            let mut idx = vec![0usize; n - 1];
            loop {
                // Inverse stereographic projection of t from the pole e_n.
                let t: Vec<&Q> = idx.iter().map(|&i| &ts[i]).collect();
                let s: Q = t.iter().map(|x| *x * *x).fold(Q::zero(), |a, b| a + b);
                let den = &s + q(1);
                let mut p: Vec<Q> = t.iter().map(|x| q(2) * *x / &den).collect();
                p.push((&s - q(1)) / &den);
                out.push(p.clone());
                out.push(p.iter().map(|x| -x).collect());
                let mut k = 0;
                while k < n - 1 {
                    idx[k] += 1;
                    if idx[k] < ts.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == n - 1 {
                    break;
                }
            }
            let mut uniq: Vec<Vec<Q>> = Vec::new();
            for d in out {
                if !uniq.contains(&d) {
                    uniq.push(d);
                }
            }
            uniq
        }
    }
}

fn eval_member(p: &Polyhedron, v: &Weight, w: &Weight, family: &str, params: Vec<f64>, f: PiecewiseLinearConvex, opts: &QuadOptions) -> Result<(ScanEntry, PiecewiseLinearConvex)> {
    let r = futaki(p, v, w, &f, opts)?;
    Ok((ScanEntry { family: family.into(), params, value: r.value, error: r.total_error() }, f))
}

fn golden_min(mut a: f64, mut b: f64, steps: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..steps {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { c } else { d })
}

/// One-sided search for a PL destabilizer; never certifies stability.
pub fn semistability_scan(p: &Polyhedron, v: &Weight, w: &Weight, cfg: &ScanConfig, opts: &QuadOptions) -> Result<StabilityVerdict> {
    let affine = futaki_affine(p, v, w, opts)?;
    if !affine.vanishes {
        return Ok(StabilityVerdict {
            kind: StabilityKind::AffineObstruction { vector: affine.values.clone() },
            affine,
            search_log: vec![],
        });
    }
    let n = p.dim;
    let gens = p.recession_cone().generators();
    let mut candidates: Vec<(String, Vec<f64>, PiecewiseLinearConvex)> = Vec::new();
    // Ray family along the recession directions and b₊.
    let mut dirs: Vec<Vec<Q>> = vec![p.auto_b_plus()];
    for g in &gens {
        if let Some(prim) = rational::primitive(g) {
            let d: Vec<Q> = prim.into_iter().map(Q::from_integer).collect();
            if !dirs.contains(&d) {
                dirs.push(d);
            }
        }
    }
    for d in &dirs {
        for &r in &cfg.r_values {
            let mut params = rational::vec_f64(d);
            params.push(r);
            candidates.push(("f_R".into(), params, pl::f_r(d.clone(), from_f64(r)?)));
        }
    }
    // Simple creases with admissible unit slopes.
    let slopes: Vec<Vec<Q>> = sphere_directions(n, cfg.sphere_samples)
        .into_iter()
        .filter(|b| gens.iter().all(|g| !rational::dot(b, g).is_positive()))
        .collect();
    for b in &slopes {
        for &a in &cfg.offsets {
            let mut params = rational::vec_f64(b);
            params.push(a);
            candidates.push(("crease".into(), params, pl::simple_crease(b.clone(), from_f64(a)?)));
        }
    }
    let run = || -> Result<Vec<(ScanEntry, PiecewiseLinearConvex)>> {
        candidates
            .par_iter()
            .map(|(fam, params, f)| eval_member(p, v, w, fam, params.clone(), f.clone(), opts))
            .collect()
    };
    let evaluated = run()?;
    let mut log: Vec<ScanEntry> = evaluated.iter().map(|e| e.0.clone()).collect();
    let found = |entries: &[(ScanEntry, PiecewiseLinearConvex)]| {
        entries.iter().find(|(e, _)| e.value + e.error < -cfg.tol).cloned()
    };
    let finish = |hit: (ScanEntry, PiecewiseLinearConvex), log: Vec<ScanEntry>, affine: AffineFutaki| StabilityVerdict {
        kind: StabilityKind::Destabilizer {
            f: hit.1,
            value: hit.0.value,
            error: hit.0.error,
            params: hit.0.params.clone(),
            family: hit.0.family.clone(),
        },
        affine,
        search_log: log,
    };
    if let Some(hit) = found(&evaluated) {
        return Ok(finish(hit, log, affine));
    }
    // Golden-section refinement of the offset for each crease slope's best grid point.
    let mut best_per_slope: Vec<(Vec<Q>, f64, f64)> = Vec::new();
    for b in &slopes {
        let pb = rational::vec_f64(b);
        let best = evaluated
            .iter()
            .filter(|(e, _)| e.family == "crease" && e.params[..n] == pb[..])
            .min_by(|x, y| x.0.value.partial_cmp(&y.0.value).unwrap());
        if let Some((e, _)) = best {
            best_per_slope.push((b.clone(), e.params[n], e.value));
        }
    }
    let step = cfg.offsets.windows(2).map(|w| w[1] - w[0]).fold(0.5f64, f64::max);
    for (b, a0, _) in &best_per_slope {
        let mut extra = Vec::new();
        let a_star = golden_min(a0 - step, a0 + step, cfg.refine_steps, |a| {
            let f = pl::simple_crease(b.clone(), from_f64(a)?);
            let (e, f) = eval_member(p, v, w, "crease-refined", [rational::vec_f64(b), vec![a]].concat(), f, opts)?;
            let val = e.value;
            extra.push((e, f));
            Ok(val)
        })?;
        let _ = a_star;
        log.extend(extra.iter().map(|e| e.0.clone()));
        if let Some(hit) = found(&extra) {
            return Ok(finish(hit, log, affine));
        }
    }
    // Two-crease combinations max{ℓ₁, ℓ₂, 0} by coordinate descent on the offsets.
    best_per_slope.sort_by(|x, y| x.2.partial_cmp(&y.2).unwrap());
    if best_per_slope.len() >= 2 {
        let (b1, mut a1, _) = best_per_slope[0].clone();
        let (b2, mut a2, _) = best_per_slope[1].clone();
        let make = |a1: f64, a2: f64| -> Result<PiecewiseLinearConvex> {
            PiecewiseLinearConvex::new(vec![
                AffineForm::new(b1.clone(), from_f64(a1)?),
                AffineForm::new(b2.clone(), from_f64(a2)?),
                AffineForm::new(vec![Q::zero(); n], Q::zero()),
            ])
        };
        for _ in 0..cfg.two_crease_sweeps {
            for which in 0..2 {
                let mut extra = Vec::new();
                let center = if which == 0 { a1 } else { a2 };
                let best = golden_min(center - step, center + step, cfg.refine_steps / 2, |a| {
                    let (x1, x2) = if which == 0 { (a, a2) } else { (a1, a) };
                    let (e, f) = eval_member(p, v, w, "two-crease", vec![x1, x2], make(x1, x2)?, opts)?;
                    let val = e.value;
                    extra.push((e, f));
                    Ok(val)
                })?;
                if which == 0 {
                    a1 = best;
                } else {
                    a2 = best;
                }
                log.extend(extra.iter().map(|e| e.0.clone()));
                if let Some(hit) = found(&extra) {
                    return Ok(finish(hit, log, affine));
                }
            }
        }
    }
    Ok(StabilityVerdict { kind: StabilityKind::NoDestabilizerFound, affine, search_log: log })
}

/// One family member in the uniform-stability estimate.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaMember {
    pub index: usize,
    pub futaki: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// max over the δ* grid of δ*·∫_{⟨b₊,x⟩ ≥ δ*} f v^β.
    pub k_constant: f64,
    pub in_class: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub members: Vec<LambdaMember>,
    pub delta_grid: Vec<f64>,
    pub note: &'static str,
}

/// `∫_D f g` region by region for a PL f and a closure g bounded by `env`.
fn pl_times_closure(
    f: &PiecewiseLinearConvex,
    p: &Polyhedron,
    extra: Option<Row>,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    env: &crate::quadrature::Envelope,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let (regions, _) = f.regions_and_creases(p);
    let mut acc = IntegralResult::zero();
    for r in &regions {
        let dom = match &extra {
            Some(row) => r.domain.with_row(row.clone()),
            None => r.domain.clone(),
        };
        if dom.interior_point().is_none() {
            continue;
        }
        let piece = &f.pieces[r.piece];
        let pb = rational::vec_f64(&piece.b);
        let pc = to_f64(&piece.c);
        let h = |x: &[f64]| (pc + pb.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()) * g(x);
        let e = env.inflate(&[pc.abs(), rational::norm_f64(&pb)], true);
        acc = acc.combine(1.0, &integrate_fn(&h, Some(&e), &dom, opts)?, 1.0);
    }
    Ok(acc)
}

/// Upper bound for λ_{K,β,γ}: min over star-normalized members in 𝒞*_β(K) of F(f)/∫ f v^γ.
#[allow(clippy::too_many_arguments)]
pub fn uniform_lambda_estimate(
    p: &Polyhedron,
    v: &Weight,
    w: &Weight,
    beta: f64,
    gamma: f64,
    k: f64,
    family: &[PiecewiseLinearConvex],
    delta_grid: &[f64],
    opts: &QuadOptions,
) -> Result<LambdaEstimate> {
    let hp = p.hpoly();
    let cv = v.compile();
    let env = v.envelope(&hp)?;
    let bp = p.auto_b_plus();
    let t_min = sampling::min_linear(&hp, &bp);
    let vb = |x: &[f64]| cv.eval(x).max(0.0).powf(beta);
    let vg = |x: &[f64]| cv.eval(x).max(0.0).powf(gamma);
    let env_b = if beta == 1.0 { env.clone() } else { env.power_decay(beta) };
    let env_g = if gamma == 1.0 { env.clone() } else { env.power_decay(gamma) };
    let mut members = Vec::new();
    for (index, f) in family.iter().enumerate() {
        let fs = f.normalize_star().irredundant_on(p);
        if fs.pieces.iter().all(|pc| pc.b.iter().all(|x| x.is_zero()) && pc.c.is_zero()) {
            continue;
        }
        let fut = futaki(p, v, w, &fs, opts)?;
        let den = pl_times_closure(&fs, p, None, &vg, &env_g, opts)?;
        if den.value.abs() <= den.total_error() {
            continue;
        }
        let mut kc = 0.0f64;
        for &d in delta_grid {
            let level = from_f64(t_min + d)?;
            let row = Row { a: bp.clone(), c: -level };
            let tail = pl_times_closure(&fs, p, Some(row), &vb, &env_b, opts)?;
            kc = kc.max(d * tail.value);
        }
        members.push(LambdaMember {
            index,
            futaki: fut.value,
            denominator: den.value,
            ratio: fut.value / den.value,
            k_constant: kc,
            in_class: kc <= k,
        });
    }
    let lambda = members.iter().filter(|m| m.in_class).map(|m| m.ratio).fold(f64::INFINITY, f64::min);
    if !lambda.is_finite() {
        return Err(Error::EmptyFamily);
    }
    Ok(LambdaEstimate {
        lambda,
        members,
        delta_grid: delta_grid.to_vec(),
        note: "upper bound from a finite family on a finite delta* grid",
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CreaseIdentity {
    pub futaki: f64,
    pub crease_sum: f64,
    pub residual: f64,
    pub abreu_residual: f64,
    pub error_bound: f64,
}

/// `|F_{v,w}(f) − Σ_{a<b} ∫_{F_ab} v H(Δb, Δb) dσ|` for a solution u of Scal_v = w.
pub fn crease_identity_check(
    p: &Polyhedron,
    v: &Weight,
    w: &Weight,
    u: &dyn HessianSource,
    f: &PiecewiseLinearConvex,
    opts: &QuadOptions,
) -> Result<CreaseIdentity> {
    let hp = p.hpoly();
    let vj = WeightJet::new(v);
    let cw = w.compile();
    let mut abreu_residual = 0.0f64;
    for x in sampling::domain_samples(&hp, 4.0, 6) {
        if hp.rows.iter().any(|r| r.value_f64(&x) <= 1e-9) {
            continue;
        }
        let s = abreu_scal_v(u, &vj, &x)?;
        let wx = cw.eval(&x);
        abreu_residual = abreu_residual.max((s - wx).abs() / (1.0 + wx.abs()));
    }
    if abreu_residual > 1e-6 {
        return Err(Error::NotASolution(abreu_residual));
    }
    let f = f.irredundant_on(p);
    let fut = futaki(p, v, w, &f, opts)?;
    let (_, creases) = f.regions_and_creases(p);
    let cv = v.compile();
    let env = v.envelope(&hp)?;
    let mut sum = IntegralResult::zero();
    for c in &creases {
        let db = rational::vec_f64(&c.diff.b);
        let g = |x: &[f64]| -> f64 {
            let Ok(h) = u.h_matrix(x) else { return f64::NAN };
            let n = db.len();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += db[i] * h[(i, j)] * db[j];
                }
            }
            cv.eval(x) * s
        };
        let grow = h_growth(u, &hp);
        let e = env.inflate(&[grow.0 * rational::norm_f64(&db).powi(2), grow.1 * rational::norm_f64(&db).powi(2)], false);
        sum = sum.combine(1.0, &integrate_fn_on_chart(&g, Some(&e), &c.chart, &c.domain, opts)?, 1.0);
    }
    let residual = (fut.value - sum.value).abs();
    if !residual.is_finite() {
        return Err(Error::DivergentIntegral("crease integrand is not finite".into()));
    }
    Ok(CreaseIdentity {
        futaki: fut.value,
        crease_sum: sum.value,
        residual,
        abreu_residual,
        error_bound: fut.total_error() + sum.total_error(),
    })
}

/// Heuristic linear bound ‖H(x)‖ ≤ A + B|x| from samples.
fn h_growth(u: &dyn HessianSource, hp: &HPoly) -> (f64, f64) {
    let mut a = 1.0f64;
    let mut b = 1.0f64;
    for x in sampling::domain_samples(hp, 40.0, 6) {
        if hp.rows.iter().any(|r| r.value_f64(&x) <= 1e-9) {
            continue;
        }
        if let Ok(h) = u.h_matrix(&x) {
            let r = rational::norm_f64(&x);
            let nrm = h.norm();
            if r < 1.0 {
                a = a.max(2.0 * nrm);
            } else {
                b = b.max(2.0 * nrm / r);
            }
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::SymplecticPotential;
    use crate::rational::{qr, vec_q};

    fn flat_1d() -> (Polyhedron, Weight, Weight) {
        let v = Weight::exp(vec![q(1)]);
        let w = soliton_weight_w(&v, 1);
        (Polyhedron::half_line(q(-1)), v, w)
    }

    #[test]
    fn flat_line_futaki_values() {
        let (p, v, w) = flat_1d();
        let o = QuadOptions::default();
        for x0 in [0i64, 1, 2] {
            let r = futaki(&p, &v, &w, &pl::f_x0(q(x0)), &o).unwrap();
            let want = 2.0 * (x0 as f64 + 1.0) * (-(x0 as f64)).exp();
            assert!((r.value - want).abs() < 1e-12, "{x0}: {r:?}");
            let e = futaki_exact_1d(&p, &v, &w, &pl::f_x0(q(x0))).unwrap();
            assert!((e.to_f64() - want).abs() < 1e-14);
        }
        let a = futaki_affine(&p, &v, &w, &o).unwrap();
        assert!(a.vanishes && a.values.iter().all(|x| x.abs() < 1e-12), "{a:?}");
        let a2 = futaki_affine(&p, &v, &w.scale(&q(2)), &o).unwrap();
        assert!(!a2.vanishes);
        assert!((a2.values[0] + 2.0 * std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn v_vectors_and_identity() {
        let o = QuadOptions::default();
        let (p, v, _) = flat_1d();
        assert!(futaki_v_vector(&p, &v, &o).unwrap()[0].value.abs() < 1e-14);
        let p0 = Polyhedron::half_line(q(0));
        assert!((futaki_v_vector(&p0, &v, &o).unwrap()[0].value - 1.0).abs() < 1e-14);
        let r = soliton_futaki_identity_check(&p, &v, &o).unwrap();
        assert!(r.holds && r.consistent);
        let r0 = soliton_futaki_identity_check(&p0, &v, &o).unwrap();
        assert!(!r0.holds && r0.consistent);
        let v2 = Weight::poly_exp(Poly::var(1, 0).pow(2).add(&Poly::one(1)), vec![q(1)]);
        assert!(soliton_futaki_identity_check(&p, &v2, &o).unwrap().holds);
        let p2 = Polyhedron::shifted_orthant(2);
        let v22 = Weight::exp(vec_q(&[1, 1]));
        assert!(soliton_futaki_identity_check(&p2, &v22, &o).unwrap().holds);
        assert!(futaki_v_vector(&p2, &v22, &o).unwrap().iter().all(|r| r.value.abs() < 1e-8));
    }

    #[test]
    fn w_scale() {
        let (p, v, w) = flat_1d();
        let o = QuadOptions::default();
        assert!((normalize_w_scale(&p, &v, &w.scale(&qr(1, 2)), &o).unwrap().a - 2.0).abs() < 1e-12);
        assert!((normalize_w_scale(&p, &v, &v, &o).unwrap().a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_line_scan_and_crease_identity() {
        let (p, v, w) = flat_1d();
        let o = QuadOptions::default();
        let cfg = ScanConfig { two_crease_sweeps: 0, refine_steps: 4, ..ScanConfig::default() };
        let s = semistability_scan(&p, &v, &w, &cfg, &o).unwrap();
        assert!(matches!(s.kind, StabilityKind::NoDestabilizerFound));
        let bad = semistability_scan(&p, &v, &w.scale(&q(2)), &cfg, &o).unwrap();
        assert!(matches!(bad.kind, StabilityKind::AffineObstruction { .. }));
        let u = SymplecticPotential::guillemin(&p);
        let c = crease_identity_check(&p, &v, &w, &u, &pl::f_x0(q(1)), &o).unwrap();
        assert!(c.residual < 1e-10, "{c:?}");
        assert!((c.crease_sum - 4.0 / std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn sphere_points_are_unit() {
        for d in sphere_directions(3, 16) {
            let s: Q = d.iter().map(|x| x * x).fold(Q::zero(), |a, b| a + b);
            assert_eq!(s, q(1));
        }
    }
}
