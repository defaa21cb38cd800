//! Boundary behaviour, ℋ^ε-class evidence and the weighted Mabuchi energy.

use serde::Serialize;

use super::{HessianSource, SymplecticPotential};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Polyhedron;
use crate::quadrature::{integrate_fn, IntegralResult, QuadOptions};
use crate::rational::{self, to_f64};
use crate::stability;
use crate::weights::{self, shell_verdict, SupEstimate, Weight};

/// Limits observed while approaching one facet point.
#[derive(Clone, Debug, Serialize)]
pub struct FacetApproach {
    pub facet: usize,
    pub normal: Vec<f64>,
    pub point: Vec<f64>,
    pub distances: Vec<f64>,
    /// ‖H ν‖ at each distance.
    pub h_nu: Vec<f64>,
    /// The vector (∂_k H(ν,ν))_k at the closest distance.
    pub dh_nu_nu: Vec<f64>,
    /// dH(ν,ν)/ν, componentwise along ν.
    pub observed_multiple: f64,
    /// Log-log slope of ‖Hν‖ against the distance.
    pub h_rate: f64,
    /// Log-log slope of ‖dH(ν,ν) − 2ν‖ against the distance.
    pub dh_rate: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub facets: Vec<FacetApproach>,
    pub pass: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Default facet sample: an interior point of each facet.
pub fn facet_points(p: &Polyhedron) -> Vec<(usize, Vec<f64>)> {
    p.facet_atlas()
        .iter()
        .filter_map(|f| {
            let y = if f.chart.dim() == 0 { vec![] } else { f.domain.interior_point()? };
            Some((f.parent_index, rational::vec_f64(&f.chart.map(&y))))
        })
        .collect()
}

/// Approaches each facet point y along its normal, `x = y + t ν/|ν|²`, for t in `approach`.
pub fn boundary_checks(
    u: &dyn HessianSource,
    p: &Polyhedron,
    points: Option<Vec<(usize, Vec<f64>)>>,
    approach: &[f64],
) -> Result<BoundaryReport> {
    let points = points.unwrap_or_else(|| facet_points(p));
    let mut facets = Vec::new();
    for (fi, y) in points {
        let nu: Vec<f64> = p.halfspaces[fi].normal.iter().map(|&a| a as f64).collect();
        let nn: f64 = nu.iter().map(|a| a * a).sum();
        let n = nu.len();
        let mut h_nu = Vec::new();
        let mut dev = Vec::new();
        let mut last = vec![0.0; n];
        for &t in approach {
            let x: Vec<f64> = y.iter().zip(&nu).map(|(a, b)| a + t * b / nn).collect();
            let jet = u.jet(&x)?;
            let hn: f64 = (0..n).map(|i| (0..n).map(|j| jet.h[(i, j)] * nu[j]).sum::<f64>().powi(2)).sum::<f64>().sqrt();
            h_nu.push(hn);
            let d: Vec<f64> = (0..n)
                .map(|k| (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| nu[i] * jet.dh[k][(i, j)] * nu[j]).sum())
                .collect();
            dev.push(d.iter().zip(&nu).map(|(a, b)| (a - 2.0 * b).powi(2)).sum::<f64>().sqrt());
            last = d;
        }
        let observed_multiple = last.iter().zip(&nu).map(|(a, b)| a * b).sum::<f64>() / nn;
        let tol = 1e-3;
        let pass = h_nu.last().is_some_and(|h| *h < tol) && dev.last().is_some_and(|d| *d < tol * nn.sqrt().max(1.0));
        facets.push(FacetApproach {
            facet: fi,
            normal: nu,
            point: y,
            distances: approach.to_vec(),
            h_rate: slope(approach, &h_nu),
            dh_rate: slope(approach, &dev),
            h_nu,
            dh_nu_nu: last,
            observed_multiple,
            pass,
        });
    }
    let pass = facets.iter().all(|f| f.pass);
    Ok(BoundaryReport { facets, pass })
}

/// Numerical ℋ^ε evidence; verdicts are growth fits, never proofs.
#[derive(Clone, Debug, Serialize)]
pub struct HClassReport {
    pub epsilon: f64,
    pub delta_bar: f64,
    /// sup v^ε ‖H‖².
    pub cond1: SupEstimate,
    /// sup v^ε ‖dH‖².
    pub cond2: SupEstimate,
    /// sup over the boundary strip of |∂²H|².
    pub cond4: SupEstimate,
    /// ‖u‖ in C⁰_ε(P) and C²_ε(P_δ̄), when u is available.
    pub cond3: Option<Vec<SupEstimate>>,
    pub pass: bool,
    pub caveat: &'static str,
}

fn strip_points(p: &Polyhedron, shell: &[Vec<f64>], delta_bar: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for x in shell {
        for h in &p.halfspaces {
            let nu: Vec<f64> = h.normal.iter().map(|&a| a as f64).collect();
            let nn: f64 = nu.iter().map(|a| a * a).sum();
            let l = to_f64(&h.offset) + nu.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            for s in [1e-4, 0.1, 0.5, 1.0] {
                let d = s * delta_bar * nn.sqrt();
                let y: Vec<f64> = x.iter().zip(&nu).map(|(a, b)| a - (l - d) * b / nn).collect();
                let inside = p
                    .halfspaces
                    .iter()
                    .all(|g| to_f64(&g.offset) + g.normal.iter().zip(&y).map(|(a, b)| *a as f64 * b).sum::<f64>() > 0.0);
                if inside {
                    out.push(y);
                }
            }
        }
    }
    out
}

fn fd_gradient(u: &dyn HessianSource, x: &[f64]) -> Option<Vec<f64>> {
    let h = 1e-6;
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let a = u.potential_value(&y)?;
            y[i] = x[i] - h;
            let b = u.potential_value(&y)?;
            y[i] = x[i];
            Some((a - b) / (2.0 * h))
        })
        .collect()
}

pub fn h_class_check(u: &dyn HessianSource, v: &Weight, p: &Polyhedron, epsilon: f64, delta_bar: f64) -> Result<HClassReport> {
    let hp = p.hpoly();
    let bp = rational::vec_f64(&p.auto_b_plus());
    let shells = weights::shell_samples(&hp, &bp);
    let inner = p.interior_polyhedron(delta_bar)?;
    let cv = v.compile();
    let (mut s1, mut s2, mut s4) = (vec![], vec![], vec![]);
    let (mut c0, mut c2) = (vec![], vec![]);
    let mut have_u = true;
    for shell in &shells {
        let (mut m1, mut m2, mut m4) = (0.0f64, 0.0f64, 0.0f64);
        let (mut m0, mut mc2) = (0.0f64, 0.0f64);
        for x in shell {
            if !p.contains_f64(x) || hp.rows.iter().any(|r| r.value_f64(x) <= 0.0) {
                continue;
            }
            let ve = cv.eval(x).powf(epsilon);
            let jet = u.jet(x)?;
            m1 = m1.max(ve * jet.h.norm_squared());
            m2 = m2.max(ve * jet.dh.iter().map(|d| d.norm_squared()).sum::<f64>());
            match u.potential_value(x) {
                Some(val) => {
                    m0 = m0.max(ve * val.abs());
                    if inner.contains_f64(x) {
                        let g = fd_gradient(u, x).unwrap_or_default();
                        let hs = u.potential_hessian(x).map_or(0.0, |h| h.iter().map(|a| a.abs()).sum());
                        let tot = val.abs() + g.iter().map(|a| a.abs()).sum::<f64>() + hs;
                        mc2 = mc2.max(ve * tot);
                    }
                }
                None => have_u = false,
            }
        }
        for y in strip_points(p, shell, delta_bar) {
            let jet = u.jet(&y)?;
            let m = jet.d2h.iter().flatten().flat_map(|d| d.iter().map(|a| a * a)).fold(0.0, f64::max);
            m4 = m4.max(m);
        }
        s1.push(m1);
        s2.push(m2);
        s4.push(m4);
        c0.push(m0);
        c2.push(mc2);
    }
    let cond1 = shell_verdict("v^eps |H|^2", s1);
    let cond2 = shell_verdict("v^eps |dH|^2", s2);
    let cond4 = shell_verdict("strip |d2H|^2", s4);
    let cond3 = have_u.then(|| vec![shell_verdict("C0_eps(P) u", c0), shell_verdict("C2_eps(P_delta) u", c2)]);
    let pass = cond1.bounded
        && cond2.bounded
        && cond4.bounded
        && cond3.as_ref().is_none_or(|c| c.iter().all(|s| s.bounded));
    Ok(HClassReport { epsilon, delta_bar, cond1, cond2, cond4, cond3, pass, caveat: "numerical evidence, not proof" })
}

/// Weighted Mabuchi energy relative to u₀.
#[derive(Clone, Debug, Serialize)]
pub struct MabuchiReport {
    pub value: f64,
    pub futaki: IntegralResult,
    /// `∫_P log det(G₀⁻¹G) v dx`.
    pub log_det: IntegralResult,
    pub error_bound: f64,
    pub note: &'static str,
}

pub fn mabuchi_energy(
    p: &Polyhedron,
    v: &Weight,
    w: &Weight,
    u: &SymplecticPotential,
    u0: &SymplecticPotential,
    opts: &QuadOptions,
) -> Result<MabuchiReport> {
    let (growth, cert) = u.growth_bound();
    let fu = |x: &[f64]| u.value(x).unwrap_or(f64::NAN);
    let futaki = stability::futaki_fn(p, v, w, &fu, &growth, cert, opts)?;
    let log_det = if u.log_terms == u0.log_terms && same_smooth_hessian(u, u0) {
        IntegralResult::zero()
    } else {
        let hp = p.hpoly();
        let env = v.envelope(&hp)?.inflate(&[1.0, 1.0], false);
        let f = |x: &[f64]| -> f64 {
            let (Ok(g), Ok(g0)) = (u.g(x), u0.g(x)) else { return f64::NAN };
            let (d, d0) = (g.determinant(), g0.determinant());
            (d / d0).ln() * v.eval(x).unwrap_or(f64::NAN)
        };
        integrate_fn(&f, Some(&env), &hp, opts)?
    };
    if !futaki.value.is_finite() || !log_det.value.is_finite() {
        return Err(Error::DivergentIntegral("Mabuchi integrand is not finite".into()));
    }
    Ok(MabuchiReport {
        value: futaki.value - log_det.value,
        error_bound: futaki.total_error() + log_det.total_error(),
        futaki,
        log_det,
        note: "uses log det(Identity) = 0 at u = u0",
    })
}

/// Smooth parts differ by an affine function.
fn same_smooth_hessian(u: &SymplecticPotential, u0: &SymplecticPotential) -> bool {
    let d = Expr::add(vec![u.smooth.clone(), Expr::mul(vec![Expr::c(-1.0), u0.smooth.clone()])]);
    let n = u.dim;
    (0..n).all(|i| (0..n).all(|j| d.diff(i).diff(j).is_zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, vec_q};

    #[test]
    fn guillemin_boundary_limits() {
        let p = Polyhedron::shifted_orthant(2);
        let u = SymplecticPotential::guillemin(&p);
        let r = boundary_checks(&u, &p, None, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert!(r.pass);
        for f in &r.facets {
            assert!((f.observed_multiple - 2.0).abs() < 1e-9);
            assert!((f.h_rate - 1.0).abs() < 1e-6);
        }
        let bad = u.scale_log_terms(&q(2));
        let rb = boundary_checks(&bad, &p, None, &[1e-2, 1e-3]).unwrap();
        assert!(!rb.pass);
        assert!((rb.facets[0].observed_multiple - 1.0).abs() < 1e-9);
    }

    #[test]
    fn h_class_flat_and_control() {
        let p = Polyhedron::shifted_orthant(2);
        let u = SymplecticPotential::guillemin(&p);
        let v = Weight::exp(vec_q(&[1, 1]));
        let r = h_class_check(&u, &v, &p, 0.1, 0.5).unwrap();
        assert!(r.pass, "{r:?}");
        let one = Weight::constant(2, q(1));
        let c = h_class_check(&u, &one, &p, 0.1, 0.5).unwrap();
        assert!(!c.cond1.bounded);
    }

    #[test]
    fn mabuchi_flat_line() {
        let p = Polyhedron::half_line(q(-1));
        let v = Weight::exp(vec![q(1)]);
        let w = weights::soliton_weight_w(&v, 1);
        let u = SymplecticPotential::guillemin(&p);
        let m = mabuchi_energy(&p, &v, &w, &u, &u, &QuadOptions::with_tol(1e-9)).unwrap();
        assert_eq!(m.log_det.value, 0.0);
        assert!((m.value - std::f64::consts::E).abs() < 1e-7, "{m:?}");
        let shifted = u.add_affine(&[0.5], 1.0);
        let m2 = mabuchi_energy(&p, &v, &w, &shifted, &u, &QuadOptions::with_tol(1e-9)).unwrap();
        assert!((m2.value - m.value).abs() < 1e-7);
    }
}
