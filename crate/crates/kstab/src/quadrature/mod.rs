//! Certified-where-possible integration over polyhedra, facets and creases.

mod adaptive;
mod exact1d;
mod simplex;
mod summation;
mod tail;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use serde::Serialize;

pub use adaptive::{integrate_simplices, AdaptiveOutcome};
pub use exact1d::integrate_exact;
pub use simplex::GmRule;
pub use summation::pairwise_sum;
pub use tail::{tail_bound, unit_ball_volume, TailGeometry};

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::geometry::{Chart, HPoly, LpOutcome, Row};
use crate::rational::{self, dot, from_f64, to_f64, Q};
use crate::weights::Weight;

/// `|f(x)| ≤ Σ_t P_t(|x|) e^{-⟨λ_t,x⟩}` with `P_t(r) = Σ_k radial[k] r^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvTerm {
    pub radial: Vec<f64>,
    pub decay: Vec<f64>,
    pub certified: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Envelope {
    pub terms: Vec<EnvTerm>,
}

impl Envelope {
    pub fn certified(&self) -> bool {
        self.terms.iter().all(|t| t.certified)
    }

    pub fn scale(mut self, k: f64) -> Envelope {
        for t in &mut self.terms {
            t.radial.iter_mut().for_each(|c| *c *= k.abs());
        }
        self
    }

    /// Bound on `sup |f|` over a simplex whose diameter times some decay rate exceeds `width`.
    pub fn coarse_cell_sup(&self, verts: &[Vec<f64>], width: f64) -> Option<f64> {
        let mut diam2: f64 = 0.0;
        for (i, a) in verts.iter().enumerate() {
            for b in &verts[i + 1..] {
                diam2 = diam2.max(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum());
            }
        }
        let live = || self.terms.iter().filter(|t| t.radial.iter().any(|c| *c != 0.0));
        let rate = live().map(|t| t.decay.iter().map(|d| d * d).sum::<f64>().sqrt()).fold(0.0, f64::max);
        if rate * diam2.sqrt() <= width {
            return None;
        }
        let r = verts.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let sup = live()
            .map(|t| {
                let p: f64 = t.radial.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum();
                let e = verts.iter().map(|v| -t.decay.iter().zip(v).map(|(d, x)| d * x).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
                p * e.exp()
            })
            .sum();
        Some(sup)
    }

    /// Envelope of g·f given `|g(x)| ≤ Σ_k poly[k]|x|^k`.
    pub fn inflate(&self, poly: &[f64], certified: bool) -> Envelope {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut radial = vec![0.0; t.radial.len() + poly.len().max(1) - 1];
                for (i, a) in t.radial.iter().enumerate() {
                    for (j, b) in poly.iter().enumerate() {
                        radial[i + j] += a * b.abs();
                    }
                }
                EnvTerm { radial, decay: t.decay.clone(), certified: t.certified && certified }
            })
            .collect();
        Envelope { terms }
    }

    /// Same decay rates multiplied by k, for bounds on powers v^k.
    pub fn power_decay(&self, k: f64) -> Envelope {
        let terms = self
            .terms
            .iter()
            .map(|t| EnvTerm {
                radial: t.radial.iter().map(|c| c.abs().powf(k).max(c.abs())).collect(),
                decay: t.decay.iter().map(|d| d * k).collect(),
                certified: false,
            })
            .collect();
        Envelope { terms }
    }

    /// Envelope of f∘chart in chart coordinates, given that of f in ambient ones.
    pub fn pull_back(&self, chart: &Chart) -> Envelope {
        let c = chart.to_f64();
        let p0 = rational::norm_f64(&c.origin);
        let mnorm = c.basis.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                // P(|p0| + ‖M‖ r), expanded binomially.
                let deg = t.radial.len();
                let mut radial = vec![0.0; deg];
                for (k, ck) in t.radial.iter().enumerate() {
                    let mut binom = 1.0;
                    for j in 0..=k {
                        radial[j] += ck * binom * p0.powi((k - j) as i32) * mnorm.powi(j as i32);
                        binom = binom * (k - j) as f64 / (j + 1) as f64;
                    }
                }
                let shift: f64 = t.decay.iter().zip(&c.origin).map(|(a, b)| a * b).sum();
                let decay = c.basis.iter().map(|b| b.iter().zip(&t.decay).map(|(x, y)| x * y).sum()).collect();
                EnvTerm { radial: radial.into_iter().map(|r| r * (-shift).exp()).collect(), decay, certified: t.certified }
            })
            .collect();
        Envelope { terms }
    }
}

/// Tuning knobs shared by all integrators.
#[derive(Clone, Debug, Serialize)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_cells: usize,
    pub workers: Option<usize>,
    #[serde(skip)]
    pub b_plus: Option<Vec<Q>>,
    /// Largest allowed truncation excess δ* − t_min.
    pub max_excess: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_cells: 400_000, workers: None, b_plus: None, max_excess: 200.0 }
    }
}

impl QuadOptions {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralResult {
    pub value: f64,
    pub abs_error_bound: f64,
    pub tail_bound: f64,
    pub cells_used: usize,
    pub certified: bool,
    pub tolerance_met: bool,
    /// L1 magnitude estimate Σ|w||f|.
    pub magnitude: f64,
    /// Closed form, when the exact path was used.
    pub exact: Option<String>,
}

impl IntegralResult {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            abs_error_bound: 0.0,
            tail_bound: 0.0,
            cells_used: 0,
            certified: true,
            tolerance_met: true,
            magnitude: 0.0,
            exact: None,
        }
    }

    pub fn total_error(&self) -> f64 {
        self.abs_error_bound + self.tail_bound
    }

    pub fn from_exact(s: &ExpSum) -> Self {
        let (value, err) = s.value();
        Self { value, abs_error_bound: err, magnitude: value.abs(), exact: Some(s.render()), ..Self::zero() }
    }

    /// `a·self + b·other`, with errors combined in absolute value.
    pub fn combine(&self, a: f64, other: &IntegralResult, b: f64) -> IntegralResult {
        IntegralResult {
            value: a * self.value + b * other.value,
            abs_error_bound: a.abs() * self.abs_error_bound + b.abs() * other.abs_error_bound,
            tail_bound: a.abs() * self.tail_bound + b.abs() * other.tail_bound,
            cells_used: self.cells_used + other.cells_used,
            certified: self.certified && other.certified,
            tolerance_met: self.tolerance_met && other.tolerance_met,
            magnitude: a.abs() * self.magnitude + b.abs() * other.magnitude,
            exact: None,
        }
    }

    pub fn scaled(&self, k: f64) -> IntegralResult {
        IntegralResult::zero().combine(0.0, self, k)
    }
}

fn pool(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let map = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = map.lock().unwrap();
    g.entry(workers)
        .or_insert_with(|| Arc::new(rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")))
        .clone()
}

fn run_in_pool<T: Send>(opts: &QuadOptions, f: impl FnOnce() -> T + Send) -> T {
    match opts.workers {
        Some(w) if w > 0 => pool(w).install(f),
        _ => f(),
    }
}

fn simplices_f64(hp: &HPoly) -> Vec<Vec<Vec<f64>>> {
    hp.triangulate().into_iter().map(|s| s.iter().map(|v| rational::vec_f64(v)).collect()).collect()
}

/// Cells with diameter × decay rate above this fall back to the envelope error bound.
const COARSE_WIDTH: f64 = 4.0;

fn integrate_bounded(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &HPoly,
    rel_tol: f64,
    abs_floor: f64,
    max_cells: usize,
    env: Option<&Envelope>,
) -> AdaptiveOutcome {
    let s = simplices_f64(domain);
    let guard = env.map(|e| move |v: &[Vec<f64>]| e.coarse_cell_sup(v, COARSE_WIDTH));
    match &guard {
        Some(g) => integrate_simplices(&s, f, rel_tol, abs_floor, max_cells, Some(g)),
        None => integrate_simplices(&s, f, rel_tol, abs_floor, max_cells, None),
    }
}

/// Integrates `f` over a full-dimensional domain; unbounded domains are truncated along b₊
/// with the tail controlled by `env` (heuristically when `env` is `None`).
pub fn integrate_fn(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    env: Option<&Envelope>,
    domain: &HPoly,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    if domain.dim == 0 {
        if domain.is_empty() {
            return Ok(IntegralResult::zero());
        }
        let v = f(&[]);
        return Ok(IntegralResult { value: v, magnitude: v.abs(), cells_used: 1, ..IntegralResult::zero() });
    }
    if domain.is_empty() {
        return Ok(IntegralResult::zero());
    }
    run_in_pool(opts, || integrate_inner(f, env, domain, opts))
}

fn integrate_inner(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    env: Option<&Envelope>,
    domain: &HPoly,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let env_cert = env.is_some_and(|e| e.certified());
    if domain.is_bounded() {
        let o = integrate_bounded(f, domain, opts.rel_tol, 0.0, opts.max_cells, env);
        return Ok(IntegralResult {
            value: o.value,
            abs_error_bound: o.err,
            tail_bound: 0.0,
            cells_used: o.cells,
            certified: o.converged,
            tolerance_met: o.converged,
            magnitude: o.l1,
            exact: None,
        });
    }
    let cone = domain.recession_cone();
    let b = match &opts.b_plus {
        Some(b) => b.clone(),
        None => cone.auto_direction(),
    };
    let geo = TailGeometry::new(domain, &b)?.ok_or(Error::NotInteriorDirection)?;
    let t_min = match domain.minimize(&b) {
        LpOutcome::Optimal { value, .. } => value,
        _ => return Err(Error::NotInteriorDirection),
    };
    let s_min = env
        .map(|e| {
            e.terms
                .iter()
                .filter(|t| t.radial.iter().any(|c| *c != 0.0))
                .map(|t| geo.rate(&t.decay))
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(1.0);
    if !(s_min > 0.0) {
        return Err(Error::DivergentIntegral("integrand does not decay along the recession cone".into()));
    }
    let neg_b: Vec<Q> = b.iter().map(|x| -x).collect();
    let mut excess = (8.0 / s_min).clamp(1.0, opts.max_excess);
    let mut prev: Option<Q> = None;
    let mut acc = IntegralResult { certified: env_cert, ..IntegralResult::zero() };
    loop {
        let level = &t_min + from_f64(excess)?;
        let mut slab = domain.with_row(Row { a: neg_b.clone(), c: level.clone() });
        if let Some(p) = &prev {
            slab = slab.with_row(Row { a: b.clone(), c: -p.clone() });
        }
        let floor = 0.25 * opts.rel_tol * acc.magnitude;
        let o = integrate_bounded(f, &slab, opts.rel_tol, floor, opts.max_cells, env);
        acc.value += o.value;
        acc.abs_error_bound += o.err;
        acc.magnitude += o.l1;
        acc.cells_used += o.cells;
        acc.tolerance_met &= o.converged;
        let tail = match env {
            Some(e) => tail_bound(&geo, e, to_f64(&level))?,
            None => 2.0 * o.value.abs(),
        };
        let target = 0.5 * opts.rel_tol * acc.value.abs().max(acc.magnitude);
        if (prev.is_some() || env.is_some())
            && tail <= target {
                acc.tail_bound = tail;
                acc.certified &= acc.tolerance_met;
                return Ok(acc);
            }
        if excess >= opts.max_excess {
            acc.tail_bound = tail;
            return Err(Error::ToleranceNotMet { value: acc.value, error: acc.total_error() });
        }
        prev = Some(level);
        excess = (2.0 * excess).min(opts.max_excess);
    }
}

/// Integral of a weight over a full-dimensional domain; exact in one variable without factors.
pub fn integrate_weight(w: &Weight, domain: &HPoly, opts: &QuadOptions) -> Result<IntegralResult> {
    if w.is_zero() || domain.is_empty() {
        return Ok(IntegralResult::zero());
    }
    if domain.dim == 1 {
        if let Some(terms) = w.univariate_terms() {
            let (lo, hi) = interval(domain);
            return Ok(IntegralResult::from_exact(&integrate_exact(&terms, lo.as_ref(), hi.as_ref())?));
        }
    }
    let env = w.envelope(domain)?;
    let c = w.compile();
    let f = move |x: &[f64]| c.eval(x);
    integrate_fn(&f, Some(&env), domain, opts)
}

/// Exact integral of a factor-free weight on a 1D domain.
pub fn integrate_weight_exact_1d(w: &Weight, domain: &HPoly) -> Option<Result<ExpSum>> {
    if domain.dim != 1 {
        return None;
    }
    let terms = w.univariate_terms()?;
    let (lo, hi) = interval(domain);
    Some(integrate_exact(&terms, lo.as_ref(), hi.as_ref()))
}

/// `∫_{chart(domain)} w dσ` with dσ given by the chart's measure scale.
pub fn integrate_weight_on_chart(w: &Weight, chart: &Chart, domain: &HPoly, opts: &QuadOptions) -> Result<IntegralResult> {
    let pulled = w.pullback(&chart.origin, &chart.basis);
    let mut o = opts.clone();
    if let Some(b) = &opts.b_plus {
        o.b_plus = Some(chart.basis.iter().map(|bj| dot(b, bj)).collect());
        if o.b_plus.as_ref().unwrap().iter().all(|x| x.is_zero()) {
            o.b_plus = None;
        }
    }
    let mut r = integrate_weight(&pulled, domain, &o)?;
    let k = to_f64(&chart.measure_scale);
    if !chart.measure_scale.is_one() {
        r = r.scaled(k);
        if let Some(Ok(s)) = integrate_weight_exact_1d(&pulled, domain) {
            r.exact = Some(s.scale(&chart.measure_scale).render());
        }
    }
    Ok(r)
}

/// `∫_{chart(domain)} f dσ` for a closure f in ambient coordinates; `env` bounds f ambiently.
pub fn integrate_fn_on_chart(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    env: Option<&Envelope>,
    chart: &Chart,
    domain: &HPoly,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let c = chart.to_f64();
    let n = c.origin.len();
    let g = move |y: &[f64]| {
        let mut x = vec![0.0; n];
        c.map(y, &mut x);
        f(&x)
    };
    let pulled = env.map(|e| e.pull_back(chart));
    let mut o = opts.clone();
    if let Some(b) = &opts.b_plus {
        let bp: Vec<Q> = chart.basis.iter().map(|bj| dot(b, bj)).collect();
        o.b_plus = (!bp.iter().all(|x| x.is_zero())).then_some(bp);
    }
    let r = integrate_fn(&g, pulled.as_ref(), domain, &o)?;
    Ok(r.scaled(to_f64(&chart.measure_scale)))
}

/// Endpoints of a 1D domain (`None` for infinite ends).
pub fn interval(domain: &HPoly) -> (Option<Q>, Option<Q>) {
    let lo = match domain.minimize(&[Q::one()]) {
        LpOutcome::Optimal { value, .. } => Some(value),
        _ => None,
    };
    let hi = match domain.maximize(&[Q::one()]) {
        LpOutcome::Optimal { value, .. } => Some(value),
        _ => None,
    };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;
    use crate::poly::Poly;
    use crate::rational::{q, vec_q};

    #[test]
    fn orthant_exponential_2d() {
        let p = Polyhedron::shifted_orthant(2);
        let w = Weight::exp(vec_q(&[1, 1]));
        let r = integrate_weight(&w, &p.hpoly(), &QuadOptions::default()).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((r.value - e2).abs() < 1e-7 * e2, "{:?}", r);
        assert!(r.certified && r.tolerance_met);
        assert!(r.total_error() <= 1e-8 * r.magnitude, "{:?}", r);
    }

    #[test]
    fn steep_decay_bound_holds_at_every_tolerance() {
        let p = Polyhedron::shifted_orthant(2);
        let w = Weight::poly_exp(Poly::constant(2, q(2) / q(9)), vec_q(&[3, 1]));
        let env = w.envelope(&p.hpoly()).unwrap();
        let f = |x: &[f64]| w.eval(x).unwrap();
        let exact = 2.0 / 27.0 * 4f64.exp();
        for tol in [1e-7, 1e-8, 1e-9] {
            let opts = QuadOptions { rel_tol: tol, ..QuadOptions::default() };
            let r = integrate_fn(&f, Some(&env), &p.hpoly(), &opts).unwrap();
            assert!((r.value - exact).abs() <= r.total_error(), "{tol}: {:?}", r);
        }
    }

    #[test]
    fn exact_1d_path() {
        let p = Polyhedron::half_line(q(-1));
        let w = Weight::poly_exp(Poly::var(1, 0).pow(3), vec![q(1)]);
        let r = integrate_weight(&w, &p.hpoly(), &QuadOptions::default()).unwrap();
        assert!((r.value - 2.0 * 1f64.exp()).abs() < 1e-13);
        assert!(r.exact.is_some());
    }

    #[test]
    fn facet_of_orthant_boundary_mass() {
        let p = Polyhedron::shifted_orthant(2);
        let v = Weight::exp(vec_q(&[1, 1]));
        let total: f64 = p
            .facet_atlas()
            .iter()
            .map(|f| integrate_weight_on_chart(&v, &f.chart, &f.domain, &QuadOptions::default()).unwrap().value)
            .sum();
        let e2 = 1f64.exp().powi(2);
        assert!((total - 2.0 * e2).abs() < 1e-12);
    }
}
