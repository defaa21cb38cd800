//! Convex piecewise-linear functions, their regions and creases, admissibility and
//! test-configuration polytopes.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Chart, HPoly, HalfSpace, LpOutcome, Polyhedron, Row};
use crate::rational::{self, dot, q, Q};
use crate::weights::AffineForm;

/// `f = max_a ℓ_a` with `ℓ_a(x) = ⟨b_a,x⟩ + c_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearConvex {
    pub pieces: Vec<AffineForm>,
}

/// A region Δ_a where piece `piece` is maximal.
#[derive(Clone, Debug)]
pub struct Region {
    pub piece: usize,
    pub domain: HPoly,
}

/// Crease F_ab = Δ_a ∩ Δ_b, parametrized by a chart whose measure is dσ = dA/|b_a − b_b|.
#[derive(Clone, Debug)]
pub struct Crease {
    pub a: usize,
    pub b: usize,
    /// ℓ_a − ℓ_b.
    pub diff: AffineForm,
    pub chart: Chart,
    pub domain: HPoly,
}

/// Result of the D-admissibility test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DAdmissibility {
    pub admissible: bool,
    pub witness: Option<usize>,
}

fn row_ge(a: &AffineForm, b: &AffineForm) -> Row {
    let d = a.sub(b);
    Row { a: d.b, c: d.c }
}

impl PiecewiseLinearConvex {
    pub fn new(pieces: Vec<AffineForm>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::Malformed("piecewise-linear function needs at least one piece".into()));
        };
        let n = first.b.len();
        if pieces.iter().any(|p| p.b.len() != n) {
            return Err(Error::Malformed("pieces have different dimensions".into()));
        }
        let mut uniq: Vec<AffineForm> = Vec::new();
        for p in pieces {
            if !uniq.contains(&p) {
                uniq.push(p);
            }
        }
        Ok(Self { pieces: uniq })
    }

    pub fn affine(form: AffineForm) -> Self {
        Self { pieces: vec![form] }
    }

    pub fn zero(n: usize) -> Self {
        Self::affine(AffineForm::new(vec![Q::zero(); n], Q::zero()))
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].b.len()
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        self.pieces.iter().map(|p| p.eval(x)).max().unwrap()
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval_f64(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_affine(&self) -> bool {
        self.pieces.len() == 1
    }

    pub fn scale(&self, k: &Q) -> Self {
        assert!(k.is_positive(), "scaling must preserve convexity");
        Self { pieces: self.pieces.iter().map(|p| p.scale(k)).collect() }
    }

    fn region(&self, a: usize, p: &HPoly) -> HPoly {
        let mut rows = p.rows.clone();
        for (b, pb) in self.pieces.iter().enumerate() {
            if b != a {
                rows.push(row_ge(&self.pieces[a], pb));
            }
        }
        HPoly::new(p.dim, rows)
    }

    /// Drops pieces that are not the maximizer on any full-dimensional subset of P.
    pub fn irredundant_on(&self, p: &Polyhedron) -> Self {
        let hp = p.hpoly();
        let keep: Vec<AffineForm> = (0..self.pieces.len())
            .filter(|&a| self.region(a, &hp).interior_point().is_some())
            .map(|a| self.pieces[a].clone())
            .collect();
        Self { pieces: keep }
    }

    /// Regions Δ_a and creases F_ab of an irredundant f on P.
    pub fn regions_and_creases(&self, p: &Polyhedron) -> (Vec<Region>, Vec<Crease>) {
        let hp = p.hpoly();
        let regions: Vec<Region> = (0..self.pieces.len())
            .map(|a| Region { piece: a, domain: self.region(a, &hp) })
            .filter(|r| r.domain.interior_point().is_some())
            .collect();
        let mut creases = Vec::new();
        for (i, ra) in regions.iter().enumerate() {
            for rb in &regions[i + 1..] {
                let diff = self.pieces[ra.piece].sub(&self.pieces[rb.piece]);
                let chart = Chart::crease(&diff.b, &diff.c);
                let rows: Vec<Row> =
                    ra.domain.rows.iter().chain(&rb.domain.rows).map(|r| chart.pull_row(r)).collect();
                let domain = HPoly::new(chart.dim(), rows);
                let full = if chart.dim() == 0 { !domain.is_empty() } else { domain.interior_point().is_some() };
                if full {
                    creases.push(Crease { a: ra.piece, b: rb.piece, diff, chart, domain });
                }
            }
        }
        (regions, creases)
    }

    /// Every slope lies in −C*(P).
    pub fn is_admissible(&self, p: &Polyhedron) -> bool {
        let gens = p.recession_cone().generators();
        self.pieces.iter().all(|piece| gens.iter().all(|g| !dot(&piece.b, g).is_positive()))
    }

    /// Sup of f over `region`, `None` if unbounded, `Some(None)` if empty.
    fn sup_over(&self, region: &HPoly) -> Option<Option<Q>> {
        let mut best: Option<Q> = None;
        for piece in &self.pieces {
            match region.maximize(&piece.b) {
                LpOutcome::Empty => return Some(None),
                LpOutcome::Unbounded => return None,
                LpOutcome::Optimal { value, .. } => {
                    let v = value + &piece.c;
                    if best.as_ref().is_none_or(|b| v > *b) {
                        best = Some(v);
                    }
                }
            }
        }
        Some(best)
    }

    pub fn sup_on(&self, p: &Polyhedron) -> Option<Q> {
        self.sup_over(&p.hpoly()).flatten()
    }

    /// Some piece ℓ_j active at 0 with −b_j ∈ int C*, |b_j| ≤ D and f ≤ c_j + D on
    /// P ∩ {⟨x,−b_j⟩ ≥ 1}.
    pub fn is_d_admissible(&self, p: &Polyhedron, d: f64) -> DAdmissibility {
        let no = DAdmissibility { admissible: false, witness: None };
        if !self.is_admissible(p) {
            return no;
        }
        let zero = vec![Q::zero(); self.dim()];
        let f0 = self.eval(&zero);
        let hp = p.hpoly();
        let cone = p.recession_cone();
        for (j, piece) in self.pieces.iter().enumerate() {
            let b_plus: Vec<Q> = piece.b.iter().map(|x| -x).collect();
            if piece.c != f0 || !cone.is_strictly_positive(&b_plus) {
                continue;
            }
            let norm = rational::norm_f64(&rational::vec_f64(&piece.b));
            if norm > d {
                continue;
            }
            let region = hp.with_row(Row { a: b_plus, c: q(-1) });
            let ok = match self.sup_over(&region) {
                None => false,
                Some(None) => true,
                Some(Some(s)) => rational::to_f64(&(s - &piece.c)) <= d,
            };
            if ok {
                return DAdmissibility { admissible: true, witness: Some(j) };
            }
        }
        no
    }

    /// `f − ℓ_j`.
    pub fn normalize_plus(&self, j: usize) -> Self {
        let lj = self.pieces[j].clone();
        Self { pieces: self.pieces.iter().map(|p| p.sub(&lj)).collect() }
    }

    /// Subgradient at 0: the active slope of minimum Euclidean norm, ties broken lexicographically.
    pub fn subgradient_at_zero(&self) -> Vec<Q> {
        let zero = vec![Q::zero(); self.dim()];
        let f0 = self.eval(&zero);
        self.pieces
            .iter()
            .filter(|p| p.c == f0)
            .map(|p| (dot(&p.b, &p.b), p.b.clone()))
            .min()
            .unwrap()
            .1
    }

    /// `f − f(0) − ⟨g₀,x⟩`.
    pub fn normalize_star(&self) -> Self {
        let zero = vec![Q::zero(); self.dim()];
        let g = AffineForm::new(self.subgradient_at_zero(), self.eval(&zero));
        let pieces: Vec<AffineForm> = self.pieces.iter().map(|p| p.sub(&g)).collect();
        Self::new(pieces).unwrap()
    }

    /// Q_{f,R} = {(x,y) : x ∈ P, 0 ≤ y ≤ R − f(x)} ⊂ ℝ^{n+1}.
    pub fn test_config_polytope(&self, p: &Polyhedron, r: &Q) -> Result<Polyhedron> {
        if !self.is_admissible(p) {
            return Err(Error::NotAdmissible);
        }
        let sup = self.sup_on(p).ok_or(Error::NotAdmissible)?;
        if *r < sup {
            return Err(Error::RTooSmall(format!("R = {} < sup f = {}", rational::fmt_q(r), rational::fmt_q(&sup))));
        }
        let n = p.dim;
        let mut rows: Vec<Row> = p
            .halfspaces
            .iter()
            .map(|h| {
                let mut a = h.normal_q();
                a.push(Q::zero());
                Row { a, c: h.offset.clone() }
            })
            .collect();
        let mut ey = vec![Q::zero(); n + 1];
        ey[n] = q(1);
        rows.push(Row { a: ey, c: Q::zero() });
        for piece in &self.pieces {
            let mut a: Vec<Q> = piece.b.iter().map(|x| -x).collect();
            a.push(q(-1));
            rows.push(Row { a, c: r - &piece.c });
        }
        let hp = HPoly::new(n + 1, rows);
        let hs = hp
            .rows
            .iter()
            .map(|row| {
                let normal: Vec<i64> = row.a.iter().map(|x| num_traits::ToPrimitive::to_i64(&x.to_integer()).unwrap()).collect();
                HalfSpace::new(normal, row.c.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Polyhedron::new(n + 1, hs)
    }
}

/// `max{⟨b,x⟩ + a, 0}`.
pub fn simple_crease(b: Vec<Q>, a: Q) -> PiecewiseLinearConvex {
    let n = b.len();
    PiecewiseLinearConvex::new(vec![AffineForm::new(b, a), AffineForm::new(vec![Q::zero(); n], Q::zero())]).unwrap()
}

/// `f_R = max{⟨g,x⟩ − R, 0}`.
pub fn f_r(direction: Vec<Q>, r: Q) -> PiecewiseLinearConvex {
    simple_crease(direction, -r)
}

/// `f_{x₀} = max{x₀ − x, 0}` on the line.
pub fn f_x0(x0: Q) -> PiecewiseLinearConvex {
    simple_crease(vec![q(-1)], x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{qr, vec_q};

    fn line() -> Polyhedron {
        Polyhedron::half_line(q(-1))
    }

    #[test]
    fn regions_of_simple_crease() {
        let f = f_x0(qr(1, 2));
        let (regions, creases) = f.regions_and_creases(&line());
        assert_eq!(regions.len(), 2);
        assert_eq!(creases.len(), 1);
        assert_eq!(creases[0].chart.origin, vec![qr(1, 2)]);
        assert_eq!(creases[0].chart.measure_scale, q(1));
        let (r, c) = PiecewiseLinearConvex::zero(1).regions_and_creases(&line());
        assert_eq!((r.len(), c.len()), (1, 0));
    }

    #[test]
    fn crease_measure_scales_inversely() {
        let p = Polyhedron::shifted_orthant(2);
        let f = f_r(vec_q(&[1, 1]), q(5));
        let (_, c) = f.regions_and_creases(&p);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].chart.measure_scale, q(1));
        let (_, c2) = f.scale(&q(2)).regions_and_creases(&p);
        assert_eq!(c2[0].chart.measure_scale, qr(1, 2));
        assert!(c[0].domain.is_bounded());
    }

    #[test]
    fn admissibility() {
        assert!(simple_crease(vec![q(-1)], q(1)).is_admissible(&line()));
        assert!(!simple_crease(vec![q(1)], q(0)).is_admissible(&line()));
        assert!(!f_r(vec_q(&[1, 1]), q(3)).is_admissible(&Polyhedron::shifted_orthant(2)));
    }

    #[test]
    fn d_admissibility() {
        let r = f_x0(qr(1, 2)).is_d_admissible(&line(), 1.0);
        assert!(r.admissible);
        assert!(!simple_crease(vec![q(-10)], q(0)).is_d_admissible(&line(), 1.0).admissible);
        let aff = PiecewiseLinearConvex::affine(AffineForm::new(vec![q(-1)], q(0)));
        assert_eq!(aff.is_d_admissible(&line(), 2.0), DAdmissibility { admissible: true, witness: Some(0) });
    }

    #[test]
    fn normalizations() {
        let x0 = qr(1, 2);
        let f = f_x0(x0.clone());
        let zero_idx = f.pieces.iter().position(|p| p.b[0].is_zero()).unwrap();
        assert_eq!(f.normalize_plus(zero_idx), f);
        let other = 1 - zero_idx;
        let g = f.normalize_plus(other);
        let mut got = g.pieces.clone();
        got.sort();
        let mut want = vec![AffineForm::new(vec![q(0)], q(0)), AffineForm::new(vec![q(1)], -x0)];
        want.sort();
        assert_eq!(got, want);
        let aff0 = PiecewiseLinearConvex::affine(AffineForm::new(vec![q(3)], q(2)));
        assert_eq!(aff0.normalize_plus(0), PiecewiseLinearConvex::zero(1));
        let aff = PiecewiseLinearConvex::affine(AffineForm::new(vec![q(1)], q(0)));
        assert_eq!(aff.normalize_star(), PiecewiseLinearConvex::zero(1));
        let kink = simple_crease(vec![q(-1)], q(0));
        assert_eq!(kink.normalize_star(), kink);
    }

    #[test]
    fn test_configuration_polytopes() {
        let unit = Polyhedron::from_ints(1, &[vec![1], vec![-1]], &[q(0), q(1)]).unwrap();
        let sq = PiecewiseLinearConvex::zero(1).test_config_polytope(&unit, &q(1)).unwrap();
        assert_eq!(sq.vertices().len(), 4);
        let f = simple_crease(vec![q(-1)], q(1));
        let qf = f.test_config_polytope(&line(), &q(2)).unwrap();
        assert!(!qf.is_bounded());
        assert!(matches!(f.test_config_polytope(&line(), &q(1)), Err(Error::RTooSmall(_))));
        let bad = simple_crease(vec![q(1)], q(0));
        assert!(matches!(bad.test_config_polytope(&line(), &q(5)), Err(Error::NotAdmissible)));
        let p2 = Polyhedron::shifted_orthant(2);
        let g = simple_crease(vec_q(&[-1, -1]), q(0));
        let q3 = g.test_config_polytope(&p2, &q(3)).unwrap();
        let c = q3.recession_cone();
        assert_eq!(c.rays.len(), 2);
        assert!(c.rays.iter().all(|r| r[2].is_zero()));
    }
}
