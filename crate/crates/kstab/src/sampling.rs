//! Deterministic sample points on truncations of a polyhedron.

use num_traits::Zero;

use crate::geometry::{truncate_hpoly, HPoly, LpOutcome, Row};
use crate::rational::{self, from_f64, q, to_f64, Q};

/// The bounded part of `hp` used for sampling: truncated at `⟨b₊,x⟩ ≤ t_min + delta`
/// for pointed recession cones, otherwise intersected with the box `|x_i| ≤ delta`.
pub fn bounded_part(hp: &HPoly, delta: f64) -> HPoly {
    if hp.is_bounded() {
        return hp.clone();
    }
    let d = from_f64(delta).unwrap_or_else(|_| q(10));
    let cone = hp.recession_cone();
    if cone.is_pointed() {
        let b = cone.auto_direction();
        if let LpOutcome::Optimal { value, .. } = hp.minimize(&b) {
            if let Ok(t) = truncate_hpoly(hp, Some(&b), &(value + &d)) {
                return t;
            }
        }
    }
    let mut rows = hp.rows.clone();
    for i in 0..hp.dim {
        let mut e = vec![Q::zero(); hp.dim];
        e[i] = q(1);
        rows.push(Row { a: e.clone(), c: d.clone() });
        rows.push(Row { a: e.iter().map(|x| -x).collect(), c: d.clone() });
    }
    HPoly::new(hp.dim, rows)
}

/// Vertices plus barycentric lattice points of resolution `m` on each simplex of a
/// triangulation of the bounded part.
pub fn domain_samples(hp: &HPoly, delta: f64, m: usize) -> Vec<Vec<f64>> {
    let b = bounded_part(hp, delta);
    let simplices = b.triangulate();
    let mut out = Vec::new();
    let m = m.max(1);
    for s in simplices {
        let vs: Vec<Vec<f64>> = s.iter().map(|v| rational::vec_f64(v)).collect();
        for beta in compositions(vs.len(), m) {
            let mut x = vec![0.0; hp.dim];
            for (bj, v) in beta.iter().zip(&vs) {
                let w = *bj as f64 / m as f64;
                for i in 0..hp.dim {
                    x[i] += w * v[i];
                }
            }
            out.push(x);
        }
    }
    out
}

/// All `k`-tuples of nonnegative integers summing to `m`.
pub fn compositions(k: usize, m: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return if m == 0 { vec![vec![]] } else { vec![] };
    }
    if k == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in compositions(k - 1, m - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Minimum of `⟨c,x⟩` over `hp` as f64 (−∞ if unbounded below).
pub fn min_linear(hp: &HPoly, c: &[Q]) -> f64 {
    match hp.minimize(c) {
        LpOutcome::Optimal { value, .. } => to_f64(&value),
        LpOutcome::Unbounded => f64::NEG_INFINITY,
        LpOutcome::Empty => f64::INFINITY,
    }
}
