//! Grundmann–Möller rules on simplices, degree 7 with an embedded degree-5 estimate.

use crate::sampling::compositions;

/// One level of the rule: all barycentric points `(2β_j+1)/m` with |β| = (m−d−1)/2.
#[derive(Clone, Debug)]
struct Level {
    points: Vec<Vec<f64>>,
}

/// Precomputed barycentric points and weights for dimension `d`.
#[derive(Clone, Debug)]
pub struct GmRule {
    pub dim: usize,
    levels: Vec<Level>,
    /// Weights for the degree-7 and degree-5 rules, per level.
    w7: Vec<f64>,
    w5: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn gm_weight(d: usize, s: usize, i: usize) -> f64 {
    let deg = 2 * s + 1;
    let m = (deg + d - 2 * i) as f64;
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 2f64.powi(-2 * s as i32) * m.powi(deg as i32) / (factorial(i) * factorial(deg + d - i))
}

impl GmRule {
    pub fn new(dim: usize) -> Self {
        // Level ℓ has denominator m = dim + 1 + 2ℓ and |β| = ℓ, ℓ = 0..=3.
        let levels: Vec<Level> = (0..=3)
            .map(|l| {
                let m = (dim + 1 + 2 * l) as f64;
                Level {
                    points: compositions(dim + 1, l)
                        .into_iter()
                        .map(|b| b.into_iter().map(|bj| (2 * bj + 1) as f64 / m).collect())
                        .collect(),
                }
            })
            .collect();
        // Degree 7 (s = 3): i = 3 − ℓ. Degree 5 (s = 2): i = 2 − ℓ.
        let w7 = (0..=3).map(|l| gm_weight(dim, 3, 3 - l)).collect();
        let w5 = (0..=3).map(|l| if l <= 2 { gm_weight(dim, 2, 2 - l) } else { 0.0 }).collect();
        Self { dim, levels, w7, w5 }
    }

    pub fn num_points(&self) -> usize {
        self.levels.iter().map(|l| l.points.len()).sum()
    }

    /// Applies both rules on a simplex; returns (Q7, Q5, Σ|w||f|) including the volume factor.
    pub fn apply(&self, verts: &[Vec<f64>], jac: f64, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> (f64, f64, f64) {
        let mut x = vec![0.0; verts.first().map_or(0, |v| v.len())];
        let (mut q7, mut q5, mut l1) = (0.0, 0.0, 0.0);
        for (l, lev) in self.levels.iter().enumerate() {
            let mut s = 0.0;
            let mut sa = 0.0;
            for bary in &lev.points {
                x.iter_mut().for_each(|xi| *xi = 0.0);
                for (bj, v) in bary.iter().zip(verts) {
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += bj * vi;
                    }
                }
                let fx = f(&x);
                s += fx;
                sa += fx.abs();
            }
            q7 += self.w7[l] * s;
            q5 += self.w5[l] * s;
            l1 += self.w7[l].abs() * sa;
        }
        (q7 * jac, q5 * jac, l1 * jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_monomials_up_to_degree_seven() {
        let rule = GmRule::new(2);
        let verts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        for a in 0..=7 {
            for b in 0..=(7 - a) {
                let f = move |x: &[f64]| x[0].powi(a) * x[1].powi(b);
                let (q7, _, _) = rule.apply(&verts, 1.0, &f);
                let exact = factorial(a as usize) * factorial(b as usize) / factorial(a as usize + b as usize + 2);
                assert!((q7 - exact).abs() < 1e-14, "a={a} b={b} {q7} {exact}");
            }
        }
        let rule1 = GmRule::new(1);
        let (q7, q5, _) = rule1.apply(&[vec![0.0], vec![2.0]], 2.0, &|x: &[f64]| x[0].powi(5));
        assert!((q7 - 64.0 / 6.0).abs() < 1e-12);
        assert!((q5 - 64.0 / 6.0).abs() < 1e-12);
    }
}
