//! Discrete Legendre transform on tensor grids.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// A tensor grid over the box [lo, hi] with spacing close to h.
#[derive(Clone, Debug)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BoxGrid {
    pub fn new(lo: &[f64], hi: &[f64], h: f64) -> Self {
        let counts: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (((b - a) / h).round() as usize).max(2) + 1).collect();
        let step = lo.iter().zip(hi).zip(&counts).map(|((a, b), m)| (b - a) / (*m - 1) as f64).collect();
        Self { lo: lo.to_vec(), step, counts }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi(&self, mut k: usize) -> Vec<usize> {
        let mut m = Vec::with_capacity(self.dim());
        for &c in &self.counts {
            m.push(k % c);
            k /= c;
        }
        m
    }

    pub fn flat(&self, m: &[usize]) -> usize {
        let mut k = 0;
        for (i, &c) in self.counts.iter().enumerate().rev() {
            k = k * c + m[i];
        }
        k
    }

    pub fn point(&self, m: &[usize]) -> Vec<f64> {
        m.iter().enumerate().map(|(i, &mi)| self.lo[i] + mi as f64 * self.step[i]).collect()
    }

    pub fn is_interior(&self, m: &[usize]) -> bool {
        m.iter().zip(&self.counts).all(|(&mi, &c)| mi > 0 && mi + 1 < c)
    }
}

/// Sampled conjugate u = L(φ) at the discrete-gradient image points.
#[derive(Clone, Debug)]
pub struct LegendreSample {
    pub xi: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    /// Grid index of the maximizer for each image point.
    pub argmax: Vec<usize>,
    /// Grid index of each image point's own node.
    pub node: Vec<usize>,
}

impl LegendreSample {
    /// `L(u)(ξ) = max_k ⟨ξ,x_k⟩ − u_k`.
    pub fn inverse_at(&self, xi: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(&self.u)
            .map(|(x, u)| x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() - u)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fraction of image points whose conjugate maximizer is their own node (gradient-inverse property).
    pub fn gradient_inverse_rate(&self) -> f64 {
        let hits = self.argmax.iter().zip(&self.node).filter(|(a, b)| a == b).count();
        hits as f64 / self.node.len().max(1) as f64
    }
}

fn discrete_hessian(grid: &BoxGrid, vals: &[f64], m: &[usize]) -> DMatrix<f64> {
    let n = grid.dim();
    let f = |d: &[(usize, isize)]| -> f64 {
        let mut mm: Vec<usize> = m.to_vec();
        for &(i, s) in d {
            mm[i] = (mm[i] as isize + s) as usize;
        }
        vals[grid.flat(&mm)]
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (f(&[(i, 1)]) - 2.0 * f(&[]) + f(&[(i, -1)])) / (grid.step[i] * grid.step[i])
        } else {
            (f(&[(i, 1), (j, 1)]) - f(&[(i, 1), (j, -1)]) - f(&[(i, -1), (j, 1)]) + f(&[(i, -1), (j, -1)]))
                / (4.0 * grid.step[i] * grid.step[j])
        }
    })
}

/// Discrete Legendre transform of φ sampled on `grid`.
pub fn legendre_grid(phi: &dyn Fn(&[f64]) -> f64, grid: &BoxGrid) -> Result<LegendreSample> {
    let n = grid.dim();
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.point(&grid.multi(k))).collect();
    let vals: Vec<f64> = nodes.iter().map(|p| phi(p)).collect();
    let mut out = LegendreSample { xi: vec![], x: vec![], u: vec![], argmax: vec![], node: vec![] };
    for k in 0..grid.len() {
        let m = grid.multi(k);
        if !grid.is_interior(&m) {
            continue;
        }
        if nalgebra::Cholesky::new(discrete_hessian(grid, &vals, &m)).is_none() {
            return Err(Error::NotConvexGrid);
        }
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let mut p = m.clone();
                p[i] += 1;
                let fp = vals[grid.flat(&p)];
                p[i] -= 2;
                let fm = vals[grid.flat(&p)];
                (fp - fm) / (2.0 * grid.step[i])
            })
            .collect();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for (j, (xj, fj)) in nodes.iter().zip(&vals).enumerate() {
            let t = xj.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - fj;
            if t > best {
                best = t;
                arg = j;
            }
        }
        out.xi.push(nodes[k].clone());
        out.x.push(x);
        out.u.push(best);
        out.argmax.push(arg);
        out.node.push(k);
    }
    Ok(out)
}

/// Round-trip study for one resolution.
#[derive(Clone, Debug, Serialize)]
pub struct RoundTrip {
    pub h: f64,
    /// max |L(L(φ)) − φ| at grid nodes.
    pub node_error: f64,
    /// max |L(L(φ)) − φ| at cell midpoints between interior nodes.
    pub midpoint_error: f64,
    pub gradient_inverse_rate: f64,
}

pub fn legendre_round_trip(phi: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], h: f64) -> Result<RoundTrip> {
    let grid = BoxGrid::new(lo, hi, h);
    let s = legendre_grid(phi, &grid)?;
    let node_error = s.xi.iter().map(|xi| (s.inverse_at(xi) - phi(xi)).abs()).fold(0.0, f64::max);
    let mut mid = 0.0f64;
    for k in 0..grid.len() {
        let m = grid.multi(k);
        // Midpoints of cells whose corners are at least two nodes from the boundary.
        if m.iter().zip(&grid.counts).any(|(&mi, &c)| mi < 2 || mi + 3 >= c) {
            continue;
        }
        let p: Vec<f64> = grid.point(&m).iter().zip(&grid.step).map(|(a, s)| a + 0.5 * s).collect();
        mid = mid.max((s.inverse_at(&p) - phi(&p)).abs());
    }
    Ok(RoundTrip { h, node_error, midpoint_error: mid, gradient_inverse_rate: s.gradient_inverse_rate() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_self_dual() {
        let phi = |x: &[f64]| 0.5 * x.iter().map(|t| t * t).sum::<f64>();
        let grid = BoxGrid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.1);
        let s = legendre_grid(&phi, &grid).unwrap();
        for (x, u) in s.x.iter().zip(&s.u) {
            assert!((u - phi(x)).abs() < 1e-10);
        }
        assert_eq!(s.gradient_inverse_rate(), 1.0);
    }

    #[test]
    fn exponential_conjugate_and_refinement() {
        let phi = |x: &[f64]| x[0].exp();
        let grid = BoxGrid::new(&[-1.0], &[1.0], 0.01);
        let s = legendre_grid(&phi, &grid).unwrap();
        for (x, u) in s.x.iter().zip(&s.u) {
            let exact = x[0] * x[0].ln() - x[0];
            assert!((u - exact).abs() < 1e-4);
        }
        let a = legendre_round_trip(&phi, &[-1.0], &[1.0], 0.05).unwrap();
        let b = legendre_round_trip(&phi, &[-1.0], &[1.0], 0.025).unwrap();
        assert!(a.node_error < 1e-12);
        assert!(b.midpoint_error < 0.6 * a.midpoint_error);
    }

    #[test]
    fn concave_grid_is_rejected() {
        let phi = |x: &[f64]| -x[0] * x[0];
        assert!(matches!(legendre_grid(&phi, &BoxGrid::new(&[0.0], &[1.0], 0.1)), Err(Error::NotConvexGrid)));
    }
}
