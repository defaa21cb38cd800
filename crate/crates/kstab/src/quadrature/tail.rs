//! Rigorous (given the envelope) bounds for integrals beyond a truncation level.

use num_traits::Signed;

use super::Envelope;
use crate::error::{Error, Result};
use crate::geometry::HPoly;
use crate::rational::{dot, norm_f64, vec_f64, Q};

/// Geometry of a pointed polyhedron relative to a truncation direction b.
#[derive(Clone, Debug)]
pub struct TailGeometry {
    pub dim: usize,
    pub b: Vec<f64>,
    pub b_norm: f64,
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
    /// max |v| over vertices.
    pub a_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// max |r| / ⟨b,r⟩ over extreme rays.
    pub rho: f64,
}

fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TailGeometry {
    /// `None` for bounded domains.
    pub fn new(domain: &HPoly, b: &[Q]) -> Result<Option<Self>> {
        let dd = domain.dd();
        if !dd.lineality.is_empty() {
            return Err(Error::NotInteriorDirection);
        }
        if dd.rays.is_empty() {
            return Ok(None);
        }
        if dd.rays.iter().any(|r| !dot(b, r).is_positive()) {
            return Err(Error::NotInteriorDirection);
        }
        let bf = vec_f64(b);
        let vertices: Vec<Vec<f64>> = dd.vertices.iter().map(|v| vec_f64(v)).collect();
        let rays: Vec<Vec<f64>> = dd.rays.iter().map(|r| vec_f64(r)).collect();
        let betas: Vec<f64> = vertices.iter().map(|v| dotf(&bf, v)).collect();
        let rho = rays.iter().map(|r| norm_f64(r) / dotf(&bf, r)).fold(0.0, f64::max);
        Ok(Some(Self {
            dim: domain.dim,
            b_norm: norm_f64(&bf),
            a_max: vertices.iter().map(|v| norm_f64(v)).fold(0.0, f64::max),
            beta_min: betas.iter().copied().fold(f64::INFINITY, f64::min),
            beta_max: betas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            b: bf,
            vertices,
            rays,
            rho,
        }))
    }

    /// Smallest decay rate of e^{-⟨λ,x⟩} per unit of ⟨b,x⟩ along the recession cone.
    pub fn rate(&self, decay: &[f64]) -> f64 {
        self.rays.iter().map(|r| dotf(decay, r) / dotf(&self.b, r)).fold(f64::INFINITY, f64::min)
    }

    fn radius(&self, t: f64) -> f64 {
        self.a_max + (t - self.beta_min).max(0.0) * self.rho + 1e-300
    }
}

/// Volume of the unit ball in ℝ^k.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * std::f64::consts::PI / k as f64,
    }
}

/// Bound on ∫ over {x ∈ P : ⟨b,x⟩ ≥ t0} of the envelope.
pub fn tail_bound(geo: &TailGeometry, env: &Envelope, t0: f64) -> Result<f64> {
    let n = geo.dim;
    let slice = unit_ball_volume(n.saturating_sub(1)) / geo.b_norm;
    let mut total = 0.0;
    for term in &env.terms {
        if term.radial.iter().all(|c| *c == 0.0) {
            continue;
        }
        let s = geo.rate(&term.decay);
        if !(s > 0.0) {
            return Err(Error::DivergentIntegral(format!("envelope decay {:?} does not decay on the cone", term.decay)));
        }
        let m = geo.vertices.iter().map(|v| dotf(&term.decay, v)).fold(f64::INFINITY, f64::min);
        let deg = term.radial.iter().rposition(|c| *c != 0.0).unwrap_or(0) + n - 1;
        let w = 0.25 / s;
        let log_poly = |r: f64| -> f64 {
            let v: f64 = term.radial.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum();
            v.ln()
        };
        let expo = |t: f64| m + s * (t - geo.beta_max).max(0.0);
        let mut acc = 0.0;
        let mut j = 0usize;
        loop {
            let tj = t0 + j as f64 * w;
            let r1 = geo.radius(tj + w);
            let log_term = (w * slice).ln() + (n as f64 - 1.0) * r1.ln() + log_poly(r1) - expo(tj);
            let term_j = log_term.exp();
            let r2 = geo.radius(tj + 2.0 * w);
            let q = (r2 / r1).powi(deg as i32) * (-(expo(tj + w) - expo(tj))).exp();
            if q < 0.9 && tj >= geo.beta_max {
                acc += term_j / (1.0 - q);
                break;
            }
            acc += term_j;
            j += 1;
            if j > 4_000_000 {
                return Ok(f64::INFINITY);
            }
        }
        total += acc;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;
    use crate::quadrature::EnvTerm;
    use crate::rational::q;

    #[test]
    fn half_line_tail_dominates_exact() {
        let p = Polyhedron::half_line(q(-1));
        let geo = TailGeometry::new(&p.hpoly(), &[q(1)]).unwrap().unwrap();
        let env = Envelope { terms: vec![EnvTerm { radial: vec![1.0], decay: vec![1.0], certified: true }] };
        for t0 in [0.0, 5.0, 20.0] {
            let b = tail_bound(&geo, &env, t0).unwrap();
            let exact = (-t0).exp();
            assert!(b >= exact && b < 3.0 * exact, "{b} {exact}");
        }
    }
}
