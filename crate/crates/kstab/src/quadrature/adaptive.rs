//! Globally adaptive simplex cubature with longest-edge bisection.

use rayon::prelude::*;

use super::simplex::GmRule;
use super::summation::pairwise_sum;

#[derive(Clone, Debug)]
pub struct Cell {
    pub verts: Vec<Vec<f64>>,
    pub jac: f64,
    pub value: f64,
    pub err: f64,
    pub l1: f64,
}

fn jacobian(verts: &[Vec<f64>]) -> f64 {
    let d = verts.len() - 1;
    let m: Vec<f64> = (1..=d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| verts[i][j] - verts[0][j]).collect();
    nalgebra::DMatrix::from_row_slice(d, d, &m).determinant().abs()
}

/// Sup of `|f|` over a cell, returned only for cells too coarse for the embedded estimate.
pub type Guard<'a> = &'a (dyn Fn(&[Vec<f64>]) -> Option<f64> + Sync);

fn eval_cell(rule: &GmRule, verts: Vec<Vec<f64>>, jac: f64, f: &(dyn Fn(&[f64]) -> f64 + Sync), guard: Option<Guard>) -> Cell {
    let (q7, q5, l1) = rule.apply(&verts, jac, f);
    let mut err = (q7 - q5).abs().max(64.0 * f64::EPSILON * l1);
    if let Some(sup) = guard.and_then(|g| g(&verts)) {
        let vol = jac / (1..verts.len()).map(|k| k as f64).product::<f64>();
        err = err.max(vol * sup + q7.abs());
    }
    let (value, err) = if q7.is_finite() && q5.is_finite() { (q7, err) } else { (f64::NAN, f64::INFINITY) };
    Cell { verts, jac, value, err, l1 }
}

fn bisect(c: &Cell) -> [(Vec<Vec<f64>>, f64); 2] {
    let k = c.verts.len();
    let (mut bi, mut bj, mut best) = (0, 1, -1.0);
    for i in 0..k {
        for j in i + 1..k {
            let d2: f64 = c.verts[i].iter().zip(&c.verts[j]).map(|(a, b)| (a - b).powi(2)).sum();
            if d2 > best {
                best = d2;
                bi = i;
                bj = j;
            }
        }
    }
    let mid: Vec<f64> = c.verts[bi].iter().zip(&c.verts[bj]).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut a = c.verts.clone();
    a[bj] = mid.clone();
    let mut b = c.verts.clone();
    b[bi] = mid;
    [(a, 0.5 * c.jac), (b, 0.5 * c.jac)]
}

/// Outcome of one adaptive run over a union of simplices.
#[derive(Clone, Debug)]
pub struct AdaptiveOutcome {
    pub value: f64,
    pub err: f64,
    pub l1: f64,
    pub cells: usize,
    pub converged: bool,
}

const PAR_THRESHOLD: usize = 8;

fn eval_many(
    rule: &GmRule,
    items: Vec<(Vec<Vec<f64>>, f64)>,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    guard: Option<Guard>,
) -> Vec<Cell> {
    if items.len() >= PAR_THRESHOLD {
        items.into_par_iter().map(|(v, j)| eval_cell(rule, v, j, f, guard)).collect()
    } else {
        items.into_iter().map(|(v, j)| eval_cell(rule, v, j, f, guard)).collect()
    }
}

/// Refines until Σerr ≤ max(rel_tol·Σ|f|/2, abs_floor) or `max_cells` is reached.
pub fn integrate_simplices(
    simplices: &[Vec<Vec<f64>>],
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    rel_tol: f64,
    abs_floor: f64,
    max_cells: usize,
    guard: Option<Guard>,
) -> AdaptiveOutcome {
    if simplices.is_empty() {
        return AdaptiveOutcome { value: 0.0, err: 0.0, l1: 0.0, cells: 0, converged: true };
    }
    let d = simplices[0].len() - 1;
    let rule = GmRule::new(d);
    let init: Vec<(Vec<Vec<f64>>, f64)> = simplices
        .iter()
        .map(|s| (s.clone(), jacobian(s)))
        .filter(|(_, j)| *j > 0.0)
        .collect();
    let mut cells = eval_many(&rule, init, f, guard);
    loop {
        let err: f64 = pairwise_sum(&cells.iter().map(|c| c.err).collect::<Vec<_>>());
        let l1: f64 = pairwise_sum(&cells.iter().map(|c| c.l1).collect::<Vec<_>>());
        let budget = (0.5 * rel_tol * l1).max(abs_floor);
        let done = err <= budget;
        if done || cells.len() >= max_cells || !err.is_finite() && cells.len() * 2 > max_cells {
            let value = pairwise_sum(&cells.iter().map(|c| c.value).collect::<Vec<_>>());
            return AdaptiveOutcome { value, err, l1, cells: cells.len(), converged: done };
        }
        let per = budget / cells.len() as f64;
        let worst = (0..cells.len())
            .max_by(|&a, &b| cells[a].err.partial_cmp(&cells[b].err).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        let room = max_cells.saturating_sub(cells.len()).max(1);
        let mut split: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].err > per || i == worst).collect();
        if split.len() > room {
            split.sort_by(|&a, &b| cells[b].err.partial_cmp(&cells[a].err).unwrap_or(std::cmp::Ordering::Equal));
            split.truncate(room);
            split.sort_unstable();
        }
        let mut kids = Vec::with_capacity(2 * split.len());
        let mut keep = vec![true; cells.len()];
        for &i in &split {
            keep[i] = false;
            kids.extend(bisect(&cells[i]));
        }
        let mut next: Vec<Cell> = cells.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
        next.extend(eval_many(&rule, kids, f, guard));
        cells = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integral_on_square() {
        let tri = vec![
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
        ];
        let f = |x: &[f64]| (x[0] + 2.0 * x[1]).exp();
        let out = integrate_simplices(&tri, &f, 1e-12, 0.0, 100_000, None);
        let exact = (1f64.exp() - 1.0) * (2f64.exp() - 1.0) / 2.0;
        assert!(out.converged);
        assert!((out.value - exact).abs() < 1e-11 * exact);
        assert!(out.err < 1e-11 * exact);
    }
}
