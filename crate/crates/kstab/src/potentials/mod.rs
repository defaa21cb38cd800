//! Symplectic potentials u = Σ c·L log L + smooth part, their Hessian data and the
//! weighted Abreu operator.

pub mod checks;
mod legendre;

pub use checks::*;
pub use legendre::*;

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{DerivTable, Expr};
use crate::geometry::{Cone, Polyhedron};
use crate::rational::{self, qr, to_f64, Q};
use crate::weights::{AffineForm, CompiledWeight, Weight};

/// `coeff · L log L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogTerm {
    #[serde(rename = "L")]
    pub l: AffineForm,
    #[serde(with = "rational::serde_q")]
    pub coeff: Q,
}

#[derive(Clone, Debug)]
struct LogTermF64 {
    b: Vec<f64>,
    c: f64,
    k: f64,
}

#[derive(Serialize, Deserialize)]
struct PotentialJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default)]
    log_terms: Vec<LogTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    smooth: Option<Expr>,
}

/// A symplectic potential with symbolic derivatives up to order four.
#[derive(Clone, Debug)]
pub struct SymplecticPotential {
    pub dim: usize,
    pub log_terms: Vec<LogTerm>,
    pub smooth: Expr,
    lt: Vec<LogTermF64>,
    derivs: DerivTable,
}

impl PartialEq for SymplecticPotential {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim && self.log_terms == o.log_terms && self.smooth == o.smooth
    }
}

impl Serialize for SymplecticPotential {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PotentialJson {
            dim: Some(self.dim),
            log_terms: self.log_terms.clone(),
            smooth: (!self.smooth.is_zero()).then(|| self.smooth.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymplecticPotential {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PotentialJson::deserialize(d)?;
        let dim = j
            .dim
            .or_else(|| j.log_terms.first().map(|t| t.l.b.len()))
            .ok_or_else(|| serde::de::Error::custom("potential needs dim or log_terms"))?;
        if j.log_terms.iter().any(|t| t.l.b.len() != dim) {
            return Err(serde::de::Error::custom("log term has wrong dimension"));
        }
        Ok(SymplecticPotential::new(dim, j.log_terms, j.smooth.unwrap_or_else(Expr::zero)))
    }
}

/// G = Hess u and H = G⁻¹ at a point.
#[derive(Clone, Debug)]
pub struct HessianData {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

/// H with its first and second derivatives at a point.
#[derive(Clone, Debug)]
pub struct HJet {
    pub h: DMatrix<f64>,
    /// ∂_k H.
    pub dh: Vec<DMatrix<f64>>,
    /// ∂_l ∂_k H.
    pub d2h: Vec<Vec<DMatrix<f64>>>,
}

/// Anything that can supply H = G⁻¹ and its derivatives.
pub trait HessianSource: Sync {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64]) -> Result<HJet>;
    /// u(x), when a potential is available.
    fn potential_value(&self, x: &[f64]) -> Option<f64>;
    /// Hess u(x), when available.
    fn potential_hessian(&self, x: &[f64]) -> Option<DMatrix<f64>>;
    /// H alone.
    fn h_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.jet(x)?.h)
    }
}

impl SymplecticPotential {
    pub fn new(dim: usize, log_terms: Vec<LogTerm>, smooth: Expr) -> Self {
        let lt = log_terms
            .iter()
            .map(|t| LogTermF64 { b: rational::vec_f64(&t.l.b), c: to_f64(&t.l.c), k: to_f64(&t.coeff) })
            .collect();
        let derivs = DerivTable::new(&smooth, dim, 4);
        Self { dim, log_terms, smooth, lt, derivs }
    }

    /// `½ Σ_i L_i log L_i` over the facets of P.
    pub fn guillemin(p: &Polyhedron) -> Self {
        let terms = p
            .halfspaces
            .iter()
            .map(|h| LogTerm { l: AffineForm::new(h.normal_q(), h.offset.clone()), coeff: qr(1, 2) })
            .collect();
        Self::new(p.dim, terms, Expr::zero())
    }

    /// `u_C = ½ Σ L_ν log L_ν`, plus `½ L_b log L_b − ½ L_∞ log L_∞` when b is given.
    pub fn cone_potential(c: &Cone, b: Option<&[Q]>) -> Result<Self> {
        let n = c.dim;
        let mut terms: Vec<LogTerm> = c
            .normals
            .iter()
            .map(|nu| LogTerm { l: AffineForm::new(rational::vec_q(nu), Q::zero()), coeff: qr(1, 2) })
            .collect();
        if let Some(b) = b {
            if !c.is_strictly_positive(b) {
                return Err(Error::NotInteriorDirection);
            }
            let mut l_inf = vec![Q::zero(); n];
            for nu in &c.normals {
                for i in 0..n {
                    l_inf[i] += Q::from_integer(nu[i].into());
                }
            }
            if l_inf.as_slice() != b {
                terms.push(LogTerm { l: AffineForm::new(b.to_vec(), Q::zero()), coeff: qr(1, 2) });
                terms.push(LogTerm { l: AffineForm::new(l_inf, Q::zero()), coeff: qr(-1, 2) });
            }
        }
        Ok(Self::new(n, terms, Expr::zero()))
    }

    /// `½|x|²`.
    pub fn quadratic(n: usize) -> Self {
        let smooth = Expr::add((0..n).map(|i| Expr::mul(vec![Expr::c(0.5), Expr::pow(Expr::var(i), 2.0)])).collect());
        Self::new(n, vec![], smooth)
    }

    /// `u + ⟨b,x⟩ + c`.
    pub fn add_affine(&self, b: &[f64], c: f64) -> Self {
        let smooth = Expr::add(vec![self.smooth.clone(), Expr::affine(b, c)]);
        Self::new(self.dim, self.log_terms.clone(), smooth)
    }

    /// Scales every log-term coefficient by k.
    pub fn scale_log_terms(&self, k: &Q) -> Self {
        let terms = self.log_terms.iter().map(|t| LogTerm { l: t.l.clone(), coeff: &t.coeff * k }).collect();
        Self::new(self.dim, terms, self.smooth.clone())
    }

    fn l_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.lt
            .iter()
            .map(|t| {
                let l = t.c + t.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if l > 0.0 {
                    Ok(l)
                } else {
                    Err(Error::NotConvexHere(format!("{x:?} lies outside the domain of a log term")))
                }
            })
            .collect()
    }

    /// u(x); continuous up to the boundary, where `L log L` is read as 0.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let mut s = self.smooth.eval(x);
        for t in &self.lt {
            let l = t.c + t.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if l > 0.0 {
                s += t.k * l * l.ln();
            } else if l < -1e-12 * (1.0 + t.c.abs()) {
                return Err(Error::NotConvexHere(format!("{x:?} lies outside the domain of a log term")));
            }
        }
        Ok(s)
    }

    /// `|u(x)| ≤ Σ_k radial[k]|x|^k`; certified when the smooth part vanishes.
    pub fn growth_bound(&self) -> (Vec<f64>, bool) {
        let mut r = vec![0.0; 3];
        for t in &self.lt {
            let bb: f64 = t.b.iter().map(|x| x * x).sum();
            r[0] += t.k.abs() * (1.0 / std::f64::consts::E + 2.0 * t.c * t.c);
            r[2] += t.k.abs() * 2.0 * bb;
        }
        let certified = self.smooth.is_zero();
        if !certified {
            r[0] += self.smooth.eval(&vec![0.0; self.dim]).abs() + 1.0;
            r[2] += 1.0;
        }
        (r, certified)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let ls = self.l_values(x)?;
        let mut g = DVector::from_fn(self.dim, |i, _| self.derivs.eval(&[i], x));
        for (t, l) in self.lt.iter().zip(&ls) {
            for i in 0..self.dim {
                g[i] += t.k * (l.ln() + 1.0) * t.b[i];
            }
        }
        Ok(g)
    }

    pub fn g(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let ls = self.l_values(x)?;
        let n = self.dim;
        let mut g = DMatrix::from_fn(n, n, |i, j| self.derivs.eval(&[i, j], x));
        for (t, l) in self.lt.iter().zip(&ls) {
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += t.k * t.b[i] * t.b[j] / l;
                }
            }
        }
        Ok(g)
    }

    /// `G_k = ∂_k G`.
    pub fn third(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let ls = self.l_values(x)?;
        let n = self.dim;
        Ok((0..n)
            .map(|k| {
                let mut m = DMatrix::from_fn(n, n, |i, j| self.derivs.eval(&[i, j, k], x));
                for (t, l) in self.lt.iter().zip(&ls) {
                    for i in 0..n {
                        for j in 0..n {
                            m[(i, j)] -= t.k * t.b[i] * t.b[j] * t.b[k] / (l * l);
                        }
                    }
                }
                m
            })
            .collect())
    }

    /// `G_kl = ∂_k ∂_l G`.
    pub fn fourth(&self, x: &[f64]) -> Result<Vec<Vec<DMatrix<f64>>>> {
        let ls = self.l_values(x)?;
        let n = self.dim;
        Ok((0..n)
            .map(|k| {
                (0..n)
                    .map(|l_| {
                        let mut m = DMatrix::from_fn(n, n, |i, j| self.derivs.eval(&[i, j, k, l_], x));
                        for (t, l) in self.lt.iter().zip(&ls) {
                            for i in 0..n {
                                for j in 0..n {
                                    m[(i, j)] += 2.0 * t.k * t.b[i] * t.b[j] * t.b[k] * t.b[l_] / (l * l * l);
                                }
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect())
    }

    pub fn hessian_data(&self, x: &[f64]) -> Result<HessianData> {
        let g = self.g(x)?;
        let h = invert_spd(&g, x)?;
        Ok(HessianData { g, h })
    }
}

pub fn invert_spd(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let sym = (g + g.transpose()) * 0.5;
    let ch = nalgebra::Cholesky::new(sym).ok_or_else(|| Error::NotConvexHere(format!("{x:?}")))?;
    Ok(ch.inverse())
}

/// H-jet from G and its derivatives: ∂_k H = −H G_k H and
/// ∂_l∂_k H = −(∂_l H) G_k H − H G_kl H − H G_k (∂_l H).
pub fn jet_from_g(g: &DMatrix<f64>, g3: &[DMatrix<f64>], g4: &[Vec<DMatrix<f64>>], x: &[f64]) -> Result<HJet> {
    let h = invert_spd(g, x)?;
    let n = g.nrows();
    let dh: Vec<DMatrix<f64>> = (0..n).map(|k| -(&h * &g3[k] * &h)).collect();
    let d2h = (0..n)
        .map(|l| {
            (0..n)
                .map(|k| -(&dh[l] * &g3[k] * &h) - &h * &g4[k][l] * &h - &h * &g3[k] * &dh[l])
                .collect()
        })
        .collect();
    Ok(HJet { h, dh, d2h })
}

impl HessianSource for SymplecticPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: &[f64]) -> Result<HJet> {
        jet_from_g(&self.g(x)?, &self.third(x)?, &self.fourth(x)?, x)
    }

    fn potential_value(&self, x: &[f64]) -> Option<f64> {
        self.value(x).ok()
    }

    fn potential_hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.g(x).ok()
    }

    fn h_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.hessian_data(x)?.h)
    }
}

/// v with its gradient and Hessian compiled for fast evaluation.
#[derive(Clone, Debug)]
pub struct WeightJet {
    pub dim: usize,
    v: CompiledWeight,
    grad: Vec<CompiledWeight>,
    hess: Vec<Vec<CompiledWeight>>,
}

impl WeightJet {
    pub fn new(v: &Weight) -> Self {
        let n = v.nvars;
        let d1: Vec<Weight> = (0..n).map(|i| v.differentiate(i)).collect();
        Self {
            dim: n,
            v: v.compile(),
            grad: d1.iter().map(|w| w.compile()).collect(),
            hess: d1.iter().map(|w| (0..n).map(|j| w.differentiate(j).compile()).collect()).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        (
            self.v.eval(x),
            DVector::from_fn(n, |i, _| self.grad[i].eval(x)),
            DMatrix::from_fn(n, n, |i, j| self.hess[i][j].eval(x)),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.v.eval(x)
    }
}

/// `Σ_ij ∂_i∂_j (v H_ij)` from a jet.
pub fn abreu_sum(jet: &HJet, v: f64, dv: &DVector<f64>, d2v: &DMatrix<f64>) -> f64 {
    let n = jet.h.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += d2v[(i, j)] * jet.h[(i, j)];
            s += 2.0 * dv[i] * jet.dh[j][(i, j)];
            s += v * jet.d2h[i][j][(i, j)];
        }
    }
    s
}

/// `Scal_v(u)(x) = −Σ_ij (v H_ij)_{ij}`.
pub fn abreu_scal_v(u: &dyn HessianSource, v: &WeightJet, x: &[f64]) -> Result<f64> {
    let jet = u.jet(x)?;
    let (v0, dv, d2v) = v.eval(x);
    Ok(-abreu_sum(&jet, v0, &dv, &d2v))
}

/// Nested central-difference evaluation of `−Σ_ij ∂_i∂_j (v H_ij)`.
pub fn abreu_scal_v_fd(u: &SymplecticPotential, v: &WeightJet, x: &[f64], h: f64) -> Result<f64> {
    let n = u.dim;
    let f = |y: &[f64], i: usize, j: usize| -> Result<f64> { Ok(v.value(y) * u.hessian_data(y)?.h[(i, j)]) };
    let mut s = 0.0;
    let mut y = x.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                y[i] = x[i] + h;
                let p = f(&y, i, i)?;
                y[i] = x[i] - h;
                let m = f(&y, i, i)?;
                y[i] = x[i];
                s += (p - 2.0 * f(&y, i, i)? + m) / (h * h);
            } else {
                let mut acc = 0.0;
                for (si, sj, sg) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    y[i] = x[i] + si * h;
                    y[j] = x[j] + sj * h;
                    acc += sg * f(&y, i, j)?;
                }
                y[i] = x[i];
                y[j] = x[j];
                s += acc / (4.0 * h * h);
            }
        }
    }
    Ok(-s)
}

/// Outcome of [`soliton_residual`].
#[derive(Clone, Debug, Serialize)]
pub struct SolitonResidual {
    pub max_deviation: f64,
    /// (α, β₁, …, βₙ) of the least-squares affine fit α + ⟨β,x⟩.
    pub fit: Vec<f64>,
}

/// `ρ_u = 2(⟨∇u,x⟩ − u) − log det Hess u`.
pub fn rho(u: &SymplecticPotential, x: &[f64]) -> Result<f64> {
    let g = u.g(x)?;
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Error::NotConvexHere(format!("{x:?}")));
    }
    let grad = u.gradient(x)?;
    let gx: f64 = grad.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(2.0 * (gx - u.value(x)?) - det.ln())
}

/// Deviation of ρ_u + log v from its best affine fit over the samples.
pub fn soliton_residual(u: &SymplecticPotential, v: &Weight, samples: &[Vec<f64>]) -> Result<SolitonResidual> {
    let n = u.dim;
    let cv = v.compile();
    let mut rows = Vec::with_capacity(samples.len() * (n + 1));
    let mut rhs = Vec::with_capacity(samples.len());
    for x in samples {
        let vx = cv.eval(x);
        if !(vx > 0.0) {
            return Err(Error::NotConvexHere(format!("v is not positive at {x:?}")));
        }
        rhs.push(rho(u, x)? + vx.ln());
        rows.push(1.0);
        rows.extend_from_slice(x);
    }
    let a = DMatrix::from_row_slice(samples.len(), n + 1, &rows);
    let b = DVector::from_vec(rhs);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).map_err(|e| Error::NotConvexHere(e.to_string()))?;
    let resid = &a * &coef - &b;
    let max_deviation = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(SolitonResidual { max_deviation, fit: coef.iter().copied().collect() })
}

/// `u(x) − u(0) − ⟨∇u(0), x⟩` as a potential with an adjusted smooth part.
pub fn normalize_star_potential(u: &SymplecticPotential) -> Result<SymplecticPotential> {
    let z = vec![0.0; u.dim];
    let g = u.gradient(&z)?;
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    Ok(u.add_affine(&neg, -u.value(&z)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, vec_q};

    #[test]
    fn guillemin_examples() {
        let u = SymplecticPotential::guillemin(&Polyhedron::half_line(q(-1)));
        assert_eq!(u.log_terms.len(), 1);
        assert_eq!(u.log_terms[0].l, AffineForm::new(vec![q(1)], q(1)));
        let hd = u.hessian_data(&[0.0]).unwrap();
        assert!((hd.g[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((hd.h[(0, 0)] - 2.0).abs() < 1e-15);
        let u2 = SymplecticPotential::guillemin(&Polyhedron::shifted_orthant(2));
        let h2 = u2.hessian_data(&[0.0, 0.0]).unwrap().h;
        assert!((h2 - DMatrix::from_diagonal_element(2, 2, 2.0)).norm() < 1e-14);
        let quad = SymplecticPotential::quadratic(3);
        assert!((quad.hessian_data(&[0.3, -1.0, 2.0]).unwrap().h - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn abreu_flat_models() {
        let p2 = Polyhedron::shifted_orthant(2);
        let u2 = SymplecticPotential::guillemin(&p2);
        let v2 = WeightJet::new(&Weight::exp(vec_q(&[1, 1])));
        assert!((abreu_scal_v(&u2, &v2, &[0.0, 0.0]).unwrap() - 4.0).abs() < 1e-12);
        let u1 = SymplecticPotential::guillemin(&Polyhedron::half_line(q(-1)));
        let v1 = WeightJet::new(&Weight::exp(vec![q(1)]));
        assert!(abreu_scal_v(&u1, &v1, &[1.0]).unwrap().abs() < 1e-14);
        let orth = Polyhedron::from_ints(2, &[vec![1, 0], vec![0, 1]], &[q(0), q(0)]).unwrap();
        let uo = SymplecticPotential::guillemin(&orth);
        let one = WeightJet::new(&Weight::constant(2, q(1)));
        assert!(abreu_scal_v(&uo, &one, &[0.7, 2.5]).unwrap().abs() < 1e-13);
    }

    #[test]
    fn abreu_matches_finite_differences() {
        let p = Polyhedron::from_ints(2, &[vec![1, 0], vec![0, 1], vec![1, 1]], &[q(1), q(1), q(1)]).unwrap();
        let u = SymplecticPotential::guillemin(&p).add_affine(&[0.3, -0.2], 1.0);
        let v = WeightJet::new(&Weight::poly_exp(
            crate::poly::Poly::affine(&vec_q(&[1, 2]), &q(5)),
            vec![qr(1, 2), qr(1, 3)],
        ));
        let x = [0.4, 0.9];
        let exact = abreu_scal_v(&u, &v, &x).unwrap();
        let fd = abreu_scal_v_fd(&u, &v, &x, 1e-3).unwrap();
        assert!((exact - fd).abs() < 1e-4 * exact.abs().max(1.0), "{exact} {fd}");
    }

    #[test]
    fn soliton_residuals() {
        let u = SymplecticPotential::guillemin(&Polyhedron::shifted_orthant(2));
        let v = Weight::exp(vec_q(&[1, 1]));
        let samples = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 3.0], vec![-0.5, 4.0]];
        let r = soliton_residual(&u, &v, &samples).unwrap();
        assert!(r.max_deviation < 1e-12);
        assert!((r.fit[0] - 2.0 * 2f64.ln()).abs() < 1e-12);
        let u1 = SymplecticPotential::guillemin(&Polyhedron::half_line(q(-1)));
        let s1: Vec<Vec<f64>> = (0..6).map(|k| vec![-0.5 + k as f64]).collect();
        assert!(soliton_residual(&u1, &Weight::exp(vec![q(1)]), &s1).unwrap().max_deviation < 1e-12);
        let bad = Weight::poly_exp(crate::poly::Poly::affine(&[q(1)], &q(2)), vec![q(1)]);
        assert!(soliton_residual(&u1, &bad, &s1).unwrap().max_deviation > 1e-3);
        let shifted = u.add_affine(&[0.7, -1.1], 3.0);
        let r2 = soliton_residual(&shifted, &v, &samples).unwrap();
        assert!((r2.max_deviation - r.max_deviation).abs() < 1e-12);
    }

    #[test]
    fn cone_potentials() {
        let c = Cone::from_normals(2, vec![vec![1, 0], vec![0, 1]]);
        let u = SymplecticPotential::cone_potential(&c, Some(&vec_q(&[1, 1]))).unwrap();
        assert_eq!(u.log_terms.len(), 2);
        let x = [0.3, 1.7];
        let h1 = u.hessian_data(&x).unwrap().h;
        for t in [2.0, 5.0] {
            let ht = u.hessian_data(&[t * x[0], t * x[1]]).unwrap().h;
            assert!((ht - &h1 * t).norm() < 1e-10);
        }
        let c3 = Cone::from_normals(2, vec![vec![1, 0], vec![1, 2]]);
        let u3 = SymplecticPotential::cone_potential(&c3, Some(&vec_q(&[3, 1]))).unwrap();
        let h = u3.hessian_data(&[1.0, 0.5]).unwrap().h;
        let h5 = u3.hessian_data(&[5.0, 2.5]).unwrap().h;
        assert!((h5 - h * 5.0).norm() < 1e-10);
        assert!(matches!(SymplecticPotential::cone_potential(&c, Some(&vec_q(&[1, -1]))), Err(Error::NotInteriorDirection)));
    }
}
