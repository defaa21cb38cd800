//! Exact linear algebra over the rationals and a few integer lattice helpers.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rational::Q;

/// Reduced row echelon form in place; returns pivot columns.
pub fn rref(m: &mut [Vec<Q>]) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return vec![];
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for x in m[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let t = &f * &m[r][j];
                    m[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(rows: &[Vec<Q>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m = rows.to_vec();
    rref(&mut m).len()
}

/// Basis of the null space {x : A x = 0} for A with `ncols` columns.
pub fn nullspace(rows: &[Vec<Q>], ncols: usize) -> Vec<Vec<Q>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![Q::zero(); ncols];
            x[f] = Q::one();
            for (r, &pc) in pivots.iter().enumerate() {
                x[pc] = -m[r][f].clone();
            }
            x
        })
        .collect()
}

/// Unique solution of A x = b, or `None` when A is singular or the system is inconsistent.
pub fn solve(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let n = a.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut row = r.clone();
            row.push(bi.clone());
            row
        })
        .collect();
    let pivots = rref(&mut m);
    if pivots.contains(&n) || pivots.len() != n {
        return None;
    }
    Some((0..n).map(|i| m[i][n].clone()).collect())
}

/// Any solution of A x = b (free variables zero), or `None` if inconsistent.
pub fn solve_any(a: &[Vec<Q>], b: &[Q], ncols: usize) -> Option<Vec<Q>> {
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut row = r.clone();
            row.push(bi.clone());
            row
        })
        .collect();
    let pivots = rref(&mut m);
    if pivots.contains(&ncols) {
        return None;
    }
    let mut x = vec![Q::zero(); ncols];
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = m[r][ncols].clone();
    }
    Some(x)
}

pub fn det(a: &[Vec<Q>]) -> Q {
    let n = a.len();
    let mut m = a.to_vec();
    let mut d = Q::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !m[i][c].is_zero()) else {
            return Q::zero();
        };
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= &m[c][c];
        for i in c + 1..n {
            if !m[i][c].is_zero() {
                let f = &m[i][c] / &m[c][c];
                for j in c..n {
                    let t = &f * &m[c][j];
                    m[i][j] -= t;
                }
            }
        }
    }
    d
}

pub fn det_i64(a: &[Vec<i64>]) -> i64 {
    let m: Vec<Vec<Q>> = a.iter().map(|r| crate::rational::vec_q(r)).collect();
    let d = det(&m);
    use num_traits::ToPrimitive;
    d.to_integer().to_i64().expect("determinant overflow")
}

pub fn inverse(a: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let n = a.len();
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { Q::one() } else { Q::zero() }));
            row
        })
        .collect();
    let piv = rref(&mut m);
    if piv.len() < n || piv[n - 1] != n - 1 {
        return None;
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Integer matrix W (columns w_1..w_n) with det ±1 and ν·W = e_1 for primitive ν.
/// Columns 2..n then form a lattice basis of ν^⊥ ∩ ℤⁿ.
pub fn unimodular_completion(nu: &[i64]) -> Vec<Vec<i64>> {
    let n = nu.len();
    let mut w: Vec<Vec<BigInt>> = (0..n)
        .map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect())
        .collect();
    let mut r: Vec<BigInt> = nu.iter().map(|&x| BigInt::from(x)).collect();
    // Column operations: col_j -= k col_i acts on r as r_j -= k r_i.
    loop {
        let nz: Vec<usize> = (0..n).filter(|&i| !r[i].is_zero()).collect();
        if nz.len() <= 1 {
            break;
        }
        let i = *nz.iter().min_by_key(|&&i| r[i].abs()).unwrap();
        for &j in &nz {
            if j == i {
                continue;
            }
            let k = r[j].div_floor(&r[i]);
            r[j] = &r[j] - &k * &r[i];
            for row in w.iter_mut() {
                let t = &k * &row[i];
                row[j] -= t;
            }
        }
    }
    let i = (0..n).find(|&i| !r[i].is_zero()).expect("zero normal");
    assert!(r[i].abs().is_one(), "normal is not primitive");
    if r[i].is_negative() {
        for row in w.iter_mut() {
            row[i] = -row[i].clone();
        }
    }
    if i != 0 {
        for row in w.iter_mut() {
            row.swap(0, i);
        }
    }
    use num_traits::ToPrimitive;
    w.into_iter()
        .map(|row| row.into_iter().map(|x| x.to_i64().expect("overflow")).collect())
        .collect()
}

pub fn gcd_big(v: &[BigInt]) -> BigInt {
    v.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, vec_q};

    #[test]
    fn nullspace_and_solve() {
        let a = vec![vec_q(&[1, 2, 3]), vec_q(&[2, 4, 6])];
        let ns = nullspace(&a, 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(crate::rational::dot(&a[0], v).is_zero());
        }
        let x = solve(&[vec_q(&[2, 1]), vec_q(&[1, 3])], &[q(3), q(4)]).unwrap();
        assert_eq!(x, vec![q(1), q(1)]);
        assert!(solve(&[vec_q(&[1, 1]), vec_q(&[2, 2])], &[q(1), q(2)]).is_none());
    }

    #[test]
    fn determinants() {
        assert_eq!(det_i64(&[vec![0, 1], vec![2, -1]]), -2);
        assert_eq!(det_i64(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]), 1);
    }

    #[test]
    fn completion_maps_normal_to_e1() {
        for nu in [vec![1, 2], vec![3, -5, 7], vec![0, 0, -1], vec![6, 10, 15]] {
            let w = unimodular_completion(&nu);
            let n = nu.len();
            for j in 0..n {
                let s: i64 = (0..n).map(|i| nu[i] * w[i][j]).sum();
                assert_eq!(s, (j == 0) as i64);
            }
            assert_eq!(det_i64(&w).abs(), 1);
        }
    }
}
