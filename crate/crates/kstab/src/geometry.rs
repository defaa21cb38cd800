//! Rational polyhedra: half-space descriptions, vertex/ray enumeration, cones,
//! Delzant checks, truncations, facet charts and triangulation.

use std::collections::BTreeSet;

use itertools::Itertools;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rational::{self, dot, fmt_vec, from_f64, primitive, primitive_scale, q, to_f64, Q};

/// `{x : ⟨ν,x⟩ + a ≥ 0}` with a primitive integer normal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<i64>,
    #[serde(with = "rational::serde_q")]
    pub offset: Q,
}

impl HalfSpace {
    pub fn new(normal: Vec<i64>, offset: Q) -> Result<Self> {
        if normal.iter().all(|&x| x == 0) {
            return Err(Error::Malformed("zero normal".into()));
        }
        if rational::gcd_i64(&normal) != 1 {
            return Err(Error::NonPrimitiveNormal(normal));
        }
        Ok(Self { normal, offset })
    }

    pub fn value(&self, x: &[Q]) -> Q {
        rational::dot_i(&self.normal, x) + &self.offset
    }

    pub fn normal_q(&self) -> Vec<Q> {
        rational::vec_q(&self.normal)
    }

    pub fn row(&self) -> Row {
        Row { a: self.normal_q(), c: self.offset.clone() }
    }
}

/// General rational inequality `⟨a,x⟩ + c ≥ 0`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Row {
    pub a: Vec<Q>,
    pub c: Q,
}

impl Row {
    pub fn value(&self, x: &[Q]) -> Q {
        dot(&self.a, x) + &self.c
    }

    pub fn value_f64(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| to_f64(a) * x).sum::<f64>() + to_f64(&self.c)
    }

    pub fn neg(&self) -> Row {
        Row { a: self.a.iter().map(|x| -x).collect(), c: -self.c.clone() }
    }
}

/// Vertices, extreme rays and a lineality basis of a polyhedron.
#[derive(Clone, Debug, Default)]
pub struct DoubleDescription {
    pub vertices: Vec<Vec<Q>>,
    pub rays: Vec<Vec<Q>>,
    pub lineality: Vec<Vec<Q>>,
}

/// Result of maximizing a linear functional.
#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Empty,
    Unbounded,
    Optimal { value: Q, argmax: Vec<Q> },
}

/// A rational polyhedron given by arbitrary inequalities. Rows are scaled to
/// primitive integer normals and deduplicated; constant rows are folded away.
#[derive(Clone, Debug, PartialEq)]
pub struct HPoly {
    pub dim: usize,
    pub rows: Vec<Row>,
    infeasible: bool,
}

impl HPoly {
    pub fn new(dim: usize, rows: Vec<Row>) -> Self {
        let mut out: Vec<Row> = Vec::new();
        let mut infeasible = false;
        for r in rows {
            assert_eq!(r.a.len(), dim, "row dimension mismatch");
            match primitive_scale(&r.a) {
                None => {
                    if r.c.is_negative() {
                        infeasible = true;
                    }
                }
                Some(k) => {
                    let row = Row { a: r.a.iter().map(|x| x / &k).collect(), c: &r.c / &k };
                    if !out.contains(&row) {
                        out.push(row);
                    }
                }
            }
        }
        Self { dim, rows: out, infeasible }
    }

    pub fn with_row(&self, r: Row) -> Self {
        let mut rows = self.rows.clone();
        rows.push(r);
        let mut p = HPoly::new(self.dim, rows);
        p.infeasible |= self.infeasible;
        p
    }

    pub fn contains(&self, x: &[Q]) -> bool {
        !self.infeasible && self.rows.iter().all(|r| !r.value(x).is_negative())
    }

    pub fn contains_strictly(&self, x: &[Q]) -> bool {
        !self.infeasible && self.rows.iter().all(|r| r.value(x).is_positive())
    }

    /// Vertex/ray enumeration by active-set search.
    pub fn dd(&self) -> DoubleDescription {
        let n = self.dim;
        if self.infeasible {
            return DoubleDescription::default();
        }
        if n == 0 {
            return DoubleDescription { vertices: vec![vec![]], ..Default::default() };
        }
        let normals: Vec<Vec<Q>> = self.rows.iter().map(|r| r.a.clone()).collect();
        let lineality = linalg::nullspace(&normals, n);
        let k = n - lineality.len();
        let m = self.rows.len();
        let mut vertices: Vec<Vec<Q>> = Vec::new();
        for subset in (0..m).combinations(k) {
            let mut a: Vec<Vec<Q>> = subset.iter().map(|&i| self.rows[i].a.clone()).collect();
            let mut b: Vec<Q> = subset.iter().map(|&i| -self.rows[i].c.clone()).collect();
            a.extend(lineality.iter().cloned());
            b.extend(lineality.iter().map(|_| Q::zero()));
            if let Some(x) = linalg::solve(&a, &b) {
                if self.contains(&x) && !vertices.contains(&x) {
                    vertices.push(x);
                }
            }
        }
        vertices.sort();
        let mut rays: Vec<Vec<Q>> = Vec::new();
        if !vertices.is_empty() && k >= 1 {
            for subset in (0..m).combinations(k - 1) {
                let mut a: Vec<Vec<Q>> = subset.iter().map(|&i| self.rows[i].a.clone()).collect();
                a.extend(lineality.iter().cloned());
                let ns = linalg::nullspace(&a, n);
                if ns.len() != 1 {
                    continue;
                }
                for sign in [1i64, -1] {
                    let d: Vec<Q> = ns[0].iter().map(|x| x * q(sign)).collect();
                    if normals.iter().all(|nu| !dot(nu, &d).is_negative()) {
                        let p = canonical_ray(&d);
                        if !rays.contains(&p) {
                            rays.push(p);
                        }
                    }
                }
            }
        }
        rays.sort();
        DoubleDescription { vertices, rays, lineality }
    }

    pub fn is_empty(&self) -> bool {
        self.dd().vertices.is_empty()
    }

    /// A strictly interior point, if the polyhedron is full-dimensional.
    pub fn interior_point(&self) -> Option<Vec<Q>> {
        let dd = self.dd();
        interior_point_from(self, &dd)
    }

    pub fn recession_cone(&self) -> Cone {
        let normals: Vec<Vec<i64>> = self
            .rows
            .iter()
            .map(|r| r.a.iter().map(|x| x.to_integer().to_i64().expect("normal overflow")).collect())
            .collect();
        Cone::from_normals(self.dim, normals)
    }

    pub fn is_bounded(&self) -> bool {
        let dd = self.dd();
        dd.rays.is_empty() && dd.lineality.is_empty()
    }

    /// Indices of rows that define facets (assumes full dimension).
    pub fn facet_rows(&self) -> Vec<usize> {
        let dd = self.dd();
        facet_rows_from(self, &dd)
    }

    /// Drops redundant rows (assumes full dimension).
    pub fn irredundant(&self) -> HPoly {
        let keep = self.facet_rows();
        HPoly {
            dim: self.dim,
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            infeasible: self.infeasible,
        }
    }

    pub fn maximize(&self, c: &[Q]) -> LpOutcome {
        let dd = self.dd();
        if dd.vertices.is_empty() {
            return LpOutcome::Empty;
        }
        if dd.lineality.iter().any(|l| !dot(c, l).is_zero()) || dd.rays.iter().any(|r| dot(c, r).is_positive()) {
            return LpOutcome::Unbounded;
        }
        let best = dd.vertices.iter().max_by(|a, b| dot(c, a).cmp(&dot(c, b))).unwrap();
        LpOutcome::Optimal { value: dot(c, best), argmax: best.clone() }
    }

    pub fn minimize(&self, c: &[Q]) -> LpOutcome {
        let neg: Vec<Q> = c.iter().map(|x| -x).collect();
        match self.maximize(&neg) {
            LpOutcome::Optimal { value, argmax } => LpOutcome::Optimal { value: -value, argmax },
            o => o,
        }
    }

    /// Pulling triangulation of a bounded full-dimensional polyhedron.
    /// Simplices are returned as lists of `dim + 1` vertices in a deterministic order.
    pub fn triangulate(&self) -> Vec<Vec<Vec<Q>>> {
        let dd = self.dd();
        assert!(dd.rays.is_empty() && dd.lineality.is_empty(), "triangulate needs a bounded polyhedron");
        let verts = dd.vertices;
        if verts.is_empty() {
            return vec![];
        }
        if self.dim == 0 {
            return vec![vec![vec![]]];
        }
        let tight: Vec<BTreeSet<usize>> = verts
            .iter()
            .map(|v| (0..self.rows.len()).filter(|&i| self.rows[i].value(v).is_zero()).collect())
            .collect();
        let all: Vec<usize> = (0..verts.len()).collect();
        if affine_dim(&verts, &all) < self.dim {
            return vec![];
        }
        let mut out = Vec::new();
        pull(&verts, &tight, &all, self.dim, &mut Vec::new(), &mut out);
        out.into_iter()
            .map(|s| s.into_iter().map(|i| verts[i].clone()).collect())
            .collect()
    }
}

fn pull(
    verts: &[Vec<Q>],
    tight: &[BTreeSet<usize>],
    face: &[usize],
    d: usize,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if d == 0 {
        let mut s = prefix.clone();
        s.push(face[0]);
        out.push(s);
        return;
    }
    let apex = face[0];
    let common: BTreeSet<usize> = face
        .iter()
        .map(|&v| tight[v].clone())
        .reduce(|a, b| a.intersection(&b).cloned().collect())
        .unwrap_or_default();
    let rows: BTreeSet<usize> = face.iter().flat_map(|&v| tight[v].iter().cloned()).collect();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for r in rows {
        if common.contains(&r) {
            continue;
        }
        let sub: Vec<usize> = face.iter().cloned().filter(|&v| tight[v].contains(&r)).collect();
        if sub.contains(&apex) || seen.contains(&sub) {
            continue;
        }
        if affine_dim(verts, &sub) != d - 1 {
            continue;
        }
        seen.push(sub.clone());
        prefix.push(apex);
        pull(verts, tight, &sub, d - 1, prefix, out);
        prefix.pop();
    }
}

fn affine_dim(verts: &[Vec<Q>], idx: &[usize]) -> usize {
    if idx.is_empty() {
        return 0;
    }
    let p0 = &verts[idx[0]];
    let diffs: Vec<Vec<Q>> = idx[1..]
        .iter()
        .map(|&i| verts[i].iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    linalg::rank(&diffs)
}

fn canonical_ray(d: &[Q]) -> Vec<Q> {
    primitive(d)
        .expect("zero ray")
        .into_iter()
        .map(Q::from_integer)
        .collect()
}

fn interior_point_from(p: &HPoly, dd: &DoubleDescription) -> Option<Vec<Q>> {
    if dd.vertices.is_empty() {
        return None;
    }
    let n = p.dim;
    let k = Q::from_integer(BigInt::from(dd.vertices.len()));
    let mut x = vec![Q::zero(); n];
    for v in &dd.vertices {
        for i in 0..n {
            x[i] += &v[i] / &k;
        }
    }
    for r in &dd.rays {
        for i in 0..n {
            x[i] += &r[i];
        }
    }
    p.contains_strictly(&x).then_some(x)
}

fn facet_rows_from(p: &HPoly, dd: &DoubleDescription) -> Vec<usize> {
    let n = p.dim;
    (0..p.rows.len())
        .filter(|&i| {
            let r = &p.rows[i];
            let tv: Vec<&Vec<Q>> = dd.vertices.iter().filter(|v| r.value(v).is_zero()).collect();
            if tv.is_empty() {
                return false;
            }
            let mut dirs: Vec<Vec<Q>> = tv[1..]
                .iter()
                .map(|v| v.iter().zip(tv[0]).map(|(a, b)| a - b).collect())
                .collect();
            dirs.extend(dd.rays.iter().filter(|d| dot(&r.a, d).is_zero()).cloned());
            dirs.extend(dd.lineality.iter().cloned());
            linalg::rank(&dirs) + 1 == n
        })
        .collect()
}

/// Diagnostics from [`Polyhedron::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub witness: Vec<Q>,
    pub irredundant: Vec<usize>,
    pub bounded: bool,
}

/// An H-described lattice polyhedron with primitive normals, nonempty interior
/// and an irredundant description.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    pub dim: usize,
    pub halfspaces: Vec<HalfSpace>,
    pub origin_interior: bool,
}

#[derive(Serialize, Deserialize)]
struct PolyhedronJson {
    dim: usize,
    halfspaces: Vec<HalfSpace>,
}

impl Serialize for Polyhedron {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyhedronJson { dim: self.dim, halfspaces: self.halfspaces.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polyhedron {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PolyhedronJson::deserialize(d)?;
        Polyhedron::new(raw.dim, raw.halfspaces).map_err(serde::de::Error::custom)
    }
}

impl Polyhedron {
    /// Validates and keeps only facet-defining half-spaces (in input order).
    pub fn new(dim: usize, halfspaces: Vec<HalfSpace>) -> Result<Self> {
        let report = Self::validate_parts(dim, &halfspaces)?;
        let hs: Vec<HalfSpace> = report.irredundant.iter().map(|&i| halfspaces[i].clone()).collect();
        let origin_interior = hs.iter().all(|h| h.offset.is_positive());
        Ok(Self { dim, halfspaces: hs, origin_interior })
    }

    /// Convenience constructor from integer normals and offsets.
    pub fn from_ints(dim: usize, normals: &[Vec<i64>], offsets: &[Q]) -> Result<Self> {
        let hs = normals
            .iter()
            .zip(offsets)
            .map(|(n, a)| HalfSpace::new(n.clone(), a.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, hs)
    }

    /// `ℝⁿ_{≥ -1}`.
    pub fn shifted_orthant(n: usize) -> Self {
        let normals: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i64).collect()).collect();
        Self::from_ints(n, &normals, &vec![q(1); n]).unwrap()
    }

    /// The box `Π [lo_i, hi_i]`.
    pub fn cube(n: usize, lo: Q, hi: Q) -> Self {
        let mut normals = Vec::new();
        let mut offs = Vec::new();
        for i in 0..n {
            let e: Vec<i64> = (0..n).map(|j| (i == j) as i64).collect();
            normals.push(e.clone());
            offs.push(-lo.clone());
            normals.push(e.iter().map(|x| -x).collect());
            offs.push(hi.clone());
        }
        Self::from_ints(n, &normals, &offs).unwrap()
    }

    /// `[a, ∞)` in one dimension.
    pub fn half_line(a: Q) -> Self {
        Self::from_ints(1, &[vec![1]], &[-a]).unwrap()
    }

    pub fn validate_parts(dim: usize, halfspaces: &[HalfSpace]) -> Result<ValidationReport> {
        if dim == 0 || halfspaces.is_empty() {
            return Err(Error::Malformed("need n ≥ 1 and at least one half-space".into()));
        }
        for h in halfspaces {
            if h.normal.len() != dim {
                return Err(Error::Malformed(format!("normal {:?} has wrong dimension", h.normal)));
            }
            HalfSpace::new(h.normal.clone(), h.offset.clone())?;
        }
        let rows: Vec<Row> = halfspaces.iter().map(|h| h.row()).collect();
        // Keep raw indices: build HPoly without dedup side effects on indexing.
        let hp = HPoly { dim, rows: rows.clone(), infeasible: false };
        let dd = hp.dd();
        let witness = interior_point_from(&hp, &dd).ok_or(Error::EmptyInterior)?;
        let mut irredundant = facet_rows_from(&hp, &dd);
        let mut seen: Vec<&Row> = Vec::new();
        irredundant.retain(|&i| {
            if seen.contains(&&rows[i]) {
                false
            } else {
                seen.push(&rows[i]);
                true
            }
        });
        let bounded = dd.rays.is_empty() && dd.lineality.is_empty();
        Ok(ValidationReport { witness, irredundant, bounded })
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        Self::validate_parts(self.dim, &self.halfspaces)
    }

    pub fn hpoly(&self) -> HPoly {
        HPoly::new(self.dim, self.halfspaces.iter().map(|h| h.row()).collect())
    }

    pub fn dd(&self) -> DoubleDescription {
        self.hpoly().dd()
    }

    pub fn vertices(&self) -> Vec<Vec<Q>> {
        self.dd().vertices
    }

    pub fn is_bounded(&self) -> bool {
        self.hpoly().is_bounded()
    }

    pub fn contains(&self, x: &[Q]) -> bool {
        self.halfspaces.iter().all(|h| !h.value(x).is_negative())
    }

    pub fn contains_f64(&self, x: &[f64]) -> bool {
        self.halfspaces.iter().all(|h| h.row().value_f64(x) >= 0.0)
    }

    /// Delzant test with a per-vertex certificate.
    pub fn is_delzant(&self) -> Result<DelzantReport> {
        let dd = self.dd();
        let n = self.dim;
        let mut certs = Vec::new();
        let need = n - dd.lineality.len();
        for v in &dd.vertices {
            let active: Vec<usize> =
                (0..self.halfspaces.len()).filter(|&i| self.halfspaces[i].value(v).is_zero()).collect();
            if active.len() != need {
                return Err(Error::NotSimple { vertex: fmt_vec(v), facets: active.len() });
            }
            let normals: Vec<Vec<i64>> = active.iter().map(|&i| self.halfspaces[i].normal.clone()).collect();
            if need == n {
                let nq: Vec<Vec<Q>> = normals.iter().map(|r| rational::vec_q(r)).collect();
                let inv = linalg::inverse(&nq).ok_or_else(|| Error::NotSimple {
                    vertex: fmt_vec(v),
                    facets: active.len(),
                })?;
                let mut edges: Vec<Vec<i64>> = (0..n)
                    .map(|j| {
                        let col: Vec<Q> = (0..n).map(|i| inv[i][j].clone()).collect();
                        rational::primitive_i64(&col).unwrap()
                    })
                    .collect();
                edges.sort();
                let det = linalg::det_i64(&edges);
                certs.push(VertexCertificate { vertex: v.clone(), active, edges, det });
            } else {
                // Minimal face of positive dimension: normals must extend to a lattice basis,
                // i.e. the gcd of maximal minors is 1.
                let g = maximal_minor_gcd(&normals, n);
                certs.push(VertexCertificate { vertex: v.clone(), active, edges: vec![], det: g });
            }
        }
        let delzant = certs.iter().all(|c| c.det.abs() == 1);
        Ok(DelzantReport { delzant, vertices: certs })
    }

    pub fn recession_cone(&self) -> Cone {
        Cone::from_normals(self.dim, self.halfspaces.iter().map(|h| h.normal.clone()).collect())
    }

    /// `P_δ`: every facet moved inward by Euclidean distance δ.
    pub fn interior_polyhedron(&self, delta: f64) -> Result<Polyhedron> {
        let hs = self
            .halfspaces
            .iter()
            .map(|h| {
                let nrm = h.normal.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                let shift = from_f64(delta * nrm)?;
                HalfSpace::new(h.normal.clone(), &h.offset - shift)
            })
            .collect::<Result<Vec<_>>>()?;
        Polyhedron::new(self.dim, hs)
    }

    /// The default truncation direction: sum of primitive generators of C*.
    pub fn auto_b_plus(&self) -> Vec<Q> {
        self.recession_cone().auto_direction()
    }

    /// `P ∩ {⟨b₊,x⟩ ≤ δ*}`.
    pub fn truncate(&self, b_plus: Option<&[Q]>, delta_star: &Q) -> Result<HPoly> {
        truncate_hpoly(&self.hpoly(), b_plus, delta_star)
    }

    pub fn is_anticanonical(&self) -> bool {
        self.halfspaces.iter().all(|h| h.offset.is_one())
    }

    /// The polyhedron translated by `t`.
    pub fn translate(&self, t: &[Q]) -> Polyhedron {
        let hs = self
            .halfspaces
            .iter()
            .map(|h| HalfSpace { normal: h.normal.clone(), offset: &h.offset - rational::dot_i(&h.normal, t) })
            .collect();
        Polyhedron::new(self.dim, hs).expect("translation preserves validity")
    }

    /// Facets parametrized by lattice-adapted affine charts.
    pub fn facet_atlas(&self) -> Vec<Facet> {
        let rows: Vec<Row> = self.halfspaces.iter().map(|h| h.row()).collect();
        self.halfspaces
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let chart = Chart::hyperplane(&h.normal, &h.offset, Q::one());
                let others: Vec<Row> =
                    rows.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| chart.pull_row(r)).collect();
                Facet { parent_index: i, domain: HPoly::new(self.dim - 1, others), chart }
            })
            .collect()
    }

    pub fn product_cylindrical_check(&self) -> ProductReport {
        product_check(self)
    }
}

pub fn truncate_hpoly(p: &HPoly, b_plus: Option<&[Q]>, delta_star: &Q) -> Result<HPoly> {
    let cone = p.recession_cone();
    let b: Vec<Q> = match b_plus {
        Some(b) => b.to_vec(),
        None => cone.auto_direction(),
    };
    if !cone.is_strictly_positive(&b) {
        return Err(Error::NotInteriorDirection);
    }
    let row = Row { a: b.iter().map(|x| -x).collect(), c: delta_star.clone() };
    Ok(p.with_row(row))
}

fn maximal_minor_gcd(rows: &[Vec<i64>], n: usize) -> i64 {
    let k = rows.len();
    let mut g = BigInt::zero();
    for cols in (0..n).combinations(k) {
        let m: Vec<Vec<i64>> = rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
        g = num_integer::Integer::gcd(&g, &BigInt::from(linalg::det_i64(&m)));
    }
    g.to_i64().unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexCertificate {
    pub vertex: Vec<Q>,
    pub active: Vec<usize>,
    /// Primitive edge directions (sorted); empty for minimal faces of positive dimension.
    pub edges: Vec<Vec<i64>>,
    /// Edge-matrix determinant, or gcd of maximal minors of the active normals.
    pub det: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelzantReport {
    pub delzant: bool,
    pub vertices: Vec<VertexCertificate>,
}

/// A polyhedral cone `{x : ⟨ν_i,x⟩ ≥ 0}` with its generators.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub dim: usize,
    pub normals: Vec<Vec<i64>>,
    pub rays: Vec<Vec<Q>>,
    pub lineality: Vec<Vec<Q>>,
}

impl Cone {
    pub fn from_normals(dim: usize, normals: Vec<Vec<i64>>) -> Cone {
        let mut ns: Vec<Vec<i64>> = Vec::new();
        for nu in normals {
            if nu.iter().all(|&x| x == 0) {
                continue;
            }
            let p = rational::primitive_i64(&rational::vec_q(&nu)).unwrap();
            if !ns.contains(&p) {
                ns.push(p);
            }
        }
        let hp = HPoly::new(dim, ns.iter().map(|nu| Row { a: rational::vec_q(nu), c: Q::zero() }).collect());
        let dd = hp.dd();
        Cone { dim, normals: ns, rays: dd.rays, lineality: dd.lineality }
    }

    /// Cone generated by the given vectors (computed via the dual description).
    pub fn from_generators(dim: usize, gens: &[Vec<Q>]) -> Cone {
        let dual = Cone::from_normals(dim, gens.iter().filter_map(|g| rational::primitive_i64(g)).collect());
        dual.dual()
    }

    pub fn generators(&self) -> Vec<Vec<Q>> {
        let mut g = self.rays.clone();
        for l in &self.lineality {
            g.push(canonical_ray(l));
            g.push(canonical_ray(&l.iter().map(|x| -x).collect::<Vec<_>>()));
        }
        g
    }

    pub fn dual(&self) -> Cone {
        Cone::from_normals(self.dim, self.generators().iter().filter_map(|g| rational::primitive_i64(g)).collect())
    }

    pub fn is_pointed(&self) -> bool {
        self.lineality.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.rays.is_empty() && self.lineality.is_empty()
    }

    pub fn contains(&self, x: &[Q]) -> bool {
        self.normals.iter().all(|nu| !rational::dot_i(nu, x).is_negative())
    }

    /// ⟨b, g⟩ > 0 for all nonzero g in the cone.
    pub fn is_strictly_positive(&self, b: &[Q]) -> bool {
        self.is_pointed() && self.rays.iter().all(|r| dot(b, r).is_positive())
    }

    /// Sum of primitive generators of the dual cone.
    pub fn auto_direction(&self) -> Vec<Q> {
        let d = self.dual();
        let mut b = vec![Q::zero(); self.dim];
        for g in d.generators() {
            for i in 0..self.dim {
                b[i] += &g[i];
            }
        }
        b
    }

    /// Same set: identical extreme rays and the same lineality space.
    pub fn same_set(&self, other: &Cone) -> bool {
        let mut a = self.rays.clone();
        let mut b = other.rays.clone();
        a.sort();
        b.sort();
        if a != b || self.lineality.len() != other.lineality.len() {
            return false;
        }
        let mut all = self.lineality.clone();
        all.extend(other.lineality.iter().cloned());
        linalg::rank(&all) == self.lineality.len()
    }
}

/// Affine chart `y ↦ origin + Σ y_j basis_j` with a density factor for dσ.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub origin: Vec<Q>,
    pub basis: Vec<Vec<Q>>,
    pub measure_scale: Q,
}

impl Chart {
    pub fn identity(n: usize) -> Chart {
        Chart {
            origin: vec![Q::zero(); n],
            basis: (0..n).map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect()).collect(),
            measure_scale: Q::one(),
        }
    }

    /// Chart of `{⟨ν,x⟩ + a = 0}` for primitive ν with a lattice basis of ν^⊥.
    pub fn hyperplane(nu: &[i64], a: &Q, scale: Q) -> Chart {
        let n = nu.len();
        let w = linalg::unimodular_completion(nu);
        let origin: Vec<Q> = (0..n).map(|i| -a * q(w[i][0])).collect();
        let basis: Vec<Vec<Q>> = (1..n).map(|j| (0..n).map(|i| q(w[i][j])).collect()).collect();
        Chart { origin, basis, measure_scale: scale }
    }

    /// Chart of `{⟨b,x⟩ + c = 0}` for rational b; dσ = surface measure / |b|.
    pub fn crease(b: &[Q], c: &Q) -> Chart {
        let k = primitive_scale(b).expect("zero crease normal");
        let nu = rational::primitive_i64(b).unwrap();
        Chart::hyperplane(&nu, &(c / &k), k.recip())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn map(&self, y: &[Q]) -> Vec<Q> {
        let mut x = self.origin.clone();
        for (yj, bj) in y.iter().zip(&self.basis) {
            for i in 0..x.len() {
                x[i] += yj * &bj[i];
            }
        }
        x
    }

    pub fn pull_row(&self, r: &Row) -> Row {
        Row { a: self.basis.iter().map(|bj| dot(&r.a, bj)).collect(), c: r.value(&self.origin) }
    }

    pub fn to_f64(&self) -> ChartF64 {
        ChartF64 {
            origin: rational::vec_f64(&self.origin),
            basis: self.basis.iter().map(|b| rational::vec_f64(b)).collect(),
            scale: to_f64(&self.measure_scale),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChartF64 {
    pub origin: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub scale: f64,
}

impl ChartF64 {
    pub fn map(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.origin);
        for (yj, bj) in y.iter().zip(&self.basis) {
            for i in 0..out.len() {
                out[i] += yj * bj[i];
            }
        }
    }
}

/// A facet with its chart and its own (n−1)-dimensional domain.
#[derive(Clone, Debug)]
pub struct Facet {
    pub parent_index: usize,
    pub chart: Chart,
    pub domain: HPoly,
}

impl Facet {
    pub fn measure_scale(&self) -> &Q {
        &self.chart.measure_scale
    }
}

/// Outcome of [`Polyhedron::product_cylindrical_check`].
#[derive(Clone, Debug)]
pub struct ProductReport {
    pub verdict: bool,
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3: Vec<usize>,
    pub cone: Cone,
    /// Basis of the complement t_V (columns of the splitting).
    pub v_basis: Vec<Vec<Q>>,
    /// P_V in coordinates of `v_basis`.
    pub p_v: Option<HPoly>,
    pub translation: Option<Vec<Q>>,
    pub product: Option<HPoly>,
    /// P and the product agree outside the ball of this radius.
    pub compact_radius: Option<f64>,
    pub witness: Option<usize>,
    pub reason: String,
}

fn product_check(p: &Polyhedron) -> ProductReport {
    let n = p.dim;
    let cone = p.recession_cone();
    let gens = cone.generators();
    let (mut i1, mut i2, mut i3) = (vec![], vec![], vec![]);
    for (i, h) in p.halfspaces.iter().enumerate() {
        let vals: Vec<Q> = gens.iter().map(|g| rational::dot_i(&h.normal, g)).collect();
        if vals.iter().all(|v| v.is_zero()) {
            i1.push(i);
        } else if vals.iter().all(|v| v.is_positive()) {
            i2.push(i);
        } else {
            i3.push(i);
        }
    }
    let mut rep = ProductReport {
        verdict: false,
        i1: i1.clone(),
        i2: i2.clone(),
        i3: i3.clone(),
        cone: cone.clone(),
        v_basis: vec![],
        p_v: None,
        translation: None,
        product: None,
        compact_radius: None,
        witness: None,
        reason: String::new(),
    };
    if !cone.is_pointed() {
        rep.reason = "recession cone has a lineality space".into();
        return rep;
    }
    let span_c = {
        let mut m = gens.clone();
        linalg::rref(&mut m);
        m.retain(|r| r.iter().any(|x| !x.is_zero()));
        m
    };
    let k = span_c.len();
    // W = ∩_{I3} ν^⊥; need W + span C = ℝⁿ.
    let i3_normals: Vec<Vec<Q>> = i3.iter().map(|&i| p.halfspaces[i].normal_q()).collect();
    let w_basis = linalg::nullspace(&i3_normals, n);
    let mut sum = w_basis.clone();
    sum.extend(span_c.iter().cloned());
    if linalg::rank(&sum) < n {
        rep.witness = i3.first().copied();
        rep.reason = "non-compact facets are not cylindrical over the cone directions".into();
        return rep;
    }
    // V = W ∩ (W ∩ span C)^⊥.
    let span_c_perp = linalg::nullspace(&span_c, n);
    let w_perp = linalg::nullspace(&w_basis, n);
    let mut rows_wc = span_c_perp.clone();
    rows_wc.extend(w_perp.iter().cloned());
    let wc = linalg::nullspace(&rows_wc, n);
    let mut rows_v = w_perp.clone();
    rows_v.extend(wc.iter().cloned());
    let v_basis = linalg::nullspace(&rows_v, n);
    if v_basis.len() != n - k {
        rep.reason = "no complementary splitting found".into();
        return rep;
    }
    rep.v_basis = v_basis.clone();
    let pv_rows: Vec<Row> = i1
        .iter()
        .map(|&i| {
            let h = &p.halfspaces[i];
            Row { a: v_basis.iter().map(|b| rational::dot_i(&h.normal, b)).collect(), c: h.offset.clone() }
        })
        .collect();
    let p_v = HPoly::new(n - k, pv_rows);
    if !p_v.is_bounded() || p_v.is_empty() {
        rep.witness = i1.first().copied();
        rep.reason = "I1 half-spaces do not cut out a polytope".into();
        return rep;
    }
    rep.p_v = Some(p_v);
    // Translation inside span C.
    let translation: Vec<Q> = if k == 0 {
        vec![Q::zero(); n]
    } else if k == 1 {
        let g = &cone.rays[0];
        let LpOutcome::Optimal { value, .. } = p.hpoly().minimize(g) else {
            rep.reason = "cone direction unbounded below".into();
            return rep;
        };
        let gg = dot(g, g);
        g.iter().map(|x| x * &value / &gg).collect()
    } else {
        let a: Vec<Vec<Q>> = i3_normals.iter().map(|nu| span_c.iter().map(|b| dot(nu, b)).collect()).collect();
        let b: Vec<Q> = i3.iter().map(|&i| -p.halfspaces[i].offset.clone()).collect();
        match linalg::solve_any(&a, &b, k) {
            Some(s) => {
                let mut t = vec![Q::zero(); n];
                for (sj, bj) in s.iter().zip(&span_c) {
                    for i in 0..n {
                        t[i] += sj * &bj[i];
                    }
                }
                t
            }
            None => {
                rep.witness = i3.first().copied();
                rep.reason = "non-compact facets have no common apex".into();
                return rep;
            }
        }
    };
    let mut prod_rows: Vec<Row> = i1.iter().chain(i3.iter()).map(|&i| p.halfspaces[i].row()).collect();
    if k == 1 {
        let g = &cone.rays[0];
        prod_rows.push(Row { a: g.clone(), c: -dot(g, &translation) });
    }
    let product = HPoly::new(n, prod_rows);
    let pdd = product.dd();
    let prod_cone = Cone { dim: n, normals: vec![], rays: pdd.rays.clone(), lineality: pdd.lineality.clone() };
    if !prod_cone.same_set(&cone) {
        rep.witness = i2.first().copied();
        rep.reason = "compact facets are needed to cut the recession cone".into();
        return rep;
    }
    let mut radius = 0.0f64;
    for &i in &i2 {
        let r = p.halfspaces[i].row().neg();
        let piece = product.with_row(r);
        for v in piece.dd().vertices {
            radius = radius.max(rational::norm_f64(&rational::vec_f64(&v)));
        }
    }
    rep.verdict = true;
    rep.translation = Some(translation);
    rep.product = Some(product);
    rep.compact_radius = Some(radius);
    rep.reason = "product outside a compact set".into();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{qr, vec_q};

    #[test]
    fn validate_examples() {
        let p = Polyhedron::half_line(q(-1));
        let r = p.validate().unwrap();
        assert!(!r.bounded);
        assert!(p.contains(&r.witness));
        let bad = Polyhedron::from_ints(1, &[vec![1], vec![-1]], &[q(0), q(-1)]);
        assert_eq!(bad.unwrap_err(), Error::EmptyInterior);
        assert!(!Polyhedron::shifted_orthant(2).validate().unwrap().bounded);
    }

    #[test]
    fn redundant_halfspaces_are_dropped() {
        let p = Polyhedron::from_ints(2, &[vec![1, 0], vec![0, 1], vec![1, 1]], &[q(1), q(1), q(5)]).unwrap();
        assert_eq!(p.halfspaces.len(), 2);
        let blow = Polyhedron::from_ints(2, &[vec![1, 0], vec![0, 1], vec![1, 1]], &[q(1), q(1), q(1)]).unwrap();
        assert_eq!(blow.halfspaces.len(), 3);
    }

    #[test]
    fn vertex_examples() {
        assert_eq!(Polyhedron::shifted_orthant(2).vertices(), vec![vec_q(&[-1, -1])]);
        assert_eq!(Polyhedron::half_line(q(-1)).vertices(), vec![vec_q(&[-1])]);
        assert_eq!(Polyhedron::cube(2, q(0), q(1)).vertices().len(), 4);
    }

    #[test]
    fn delzant_examples() {
        assert!(Polyhedron::shifted_orthant(3).is_delzant().unwrap().delzant);
        assert!(Polyhedron::half_line(q(-1)).is_delzant().unwrap().delzant);
        let wedge = Polyhedron::from_ints(2, &[vec![1, 0], vec![1, 2]], &[q(0), q(0)]).unwrap();
        let rep = wedge.is_delzant().unwrap();
        assert!(!rep.delzant);
        assert_eq!(rep.vertices[0].edges, vec![vec![0, 1], vec![2, -1]]);
        assert_eq!(rep.vertices[0].det, -2);
    }

    #[test]
    fn not_simple_is_an_error() {
        // Square pyramid apex meets four facets.
        let p = Polyhedron::from_ints(
            3,
            &[vec![1, 0, 1], vec![-1, 0, 1], vec![0, 1, 1], vec![0, -1, 1]],
            &[q(0), q(0), q(0), q(0)],
        )
        .unwrap();
        assert!(matches!(p.is_delzant(), Err(Error::NotSimple { .. })));
    }

    #[test]
    fn cones_and_duals() {
        let c = Polyhedron::shifted_orthant(2).recession_cone();
        assert_eq!(c.rays, vec![vec_q(&[0, 1]), vec_q(&[1, 0])]);
        assert!(c.dual().same_set(&c));
        let zero = Polyhedron::cube(2, q(0), q(1)).recession_cone();
        assert!(zero.is_zero());
        assert_eq!(zero.dual().lineality.len(), 2);
        let ray = Cone::from_generators(2, &[vec_q(&[1, 0])]);
        let half = ray.dual();
        assert_eq!(half.rays, vec![vec_q(&[1, 0])]);
        assert_eq!(half.lineality.len(), 1);
    }

    #[test]
    fn interior_and_truncation() {
        let p = Polyhedron::half_line(q(-1)).interior_polyhedron(0.5).unwrap();
        assert_eq!(p.halfspaces[0].offset, qr(1, 2));
        let o = Polyhedron::shifted_orthant(2).interior_polyhedron(1.0).unwrap();
        assert!(o.halfspaces.iter().all(|h| h.offset.is_zero()));
        assert!(Polyhedron::half_line(q(-1)).interior_polyhedron(5.0).is_ok());
        let c = Polyhedron::cube(1, q(-1), q(1));
        assert_eq!(c.interior_polyhedron(1.5).unwrap_err(), Error::EmptyInterior);
        let t = Polyhedron::shifted_orthant(2).truncate(None, &q(6)).unwrap();
        assert!(t.is_bounded());
        assert_eq!(t.dd().vertices.len(), 3);
        let r = Polyhedron::shifted_orthant(2).truncate(Some(&vec_q(&[1, 0])), &q(6));
        assert_eq!(r.unwrap_err(), Error::NotInteriorDirection);
    }

    #[test]
    fn anticanonical() {
        assert!(Polyhedron::shifted_orthant(3).is_anticanonical());
        assert!(!Polyhedron::half_line(q(0)).is_anticanonical());
        assert!(Polyhedron::cube(1, q(-1), q(1)).is_anticanonical());
    }

    #[test]
    fn product_examples() {
        let r = Polyhedron::shifted_orthant(2).product_cylindrical_check();
        assert!(r.verdict);
        assert_eq!(r.translation.unwrap(), vec_q(&[-1, -1]));
        let strip = Polyhedron::from_ints(2, &[vec![1, 0], vec![-1, 0], vec![0, 1]], &[q(1), q(1), q(1)]).unwrap();
        let r = strip.product_cylindrical_check();
        assert!(r.verdict);
        assert_eq!(r.p_v.unwrap().dd().vertices.len(), 2);
        assert_eq!(r.translation.unwrap(), vec_q(&[0, -1]));
        let blow = Polyhedron::from_ints(2, &[vec![1, 0], vec![0, 1], vec![1, 1]], &[q(1), q(1), q(1)]).unwrap();
        let r = blow.product_cylindrical_check();
        assert!(r.verdict);
        assert_eq!(r.i2, vec![2]);
        assert!(r.compact_radius.unwrap() > 0.0);
        let skew = Polyhedron::from_ints(
            3,
            &[vec![1, 0, 0], vec![-1, 0, 0], vec![1, 1, 0], vec![0, 0, 1]],
            &[q(1), q(1), q(1), q(1)],
        )
        .unwrap();
        assert!(skew.product_cylindrical_check().verdict);
        let bent = Polyhedron::from_ints(
            3,
            &[vec![1, 0, 0], vec![-1, 0, 0], vec![1, 1, 0], vec![-1, 1, 0], vec![0, 0, 1]],
            &[q(1), q(1), q(1), q(1), q(1)],
        )
        .unwrap();
        let r = bent.product_cylindrical_check();
        assert!(!r.verdict, "{}", r.reason);
    }

    #[test]
    fn facet_measures() {
        let p = Polyhedron::half_line(q(-1));
        let f = p.facet_atlas();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].chart.origin, vec_q(&[-1]));
        assert_eq!(f[0].domain.dim, 0);
        let w = Polyhedron::from_ints(2, &[vec![1, 2], vec![0, 1]], &[q(0), q(0)]).unwrap();
        for fa in w.facet_atlas() {
            assert!(fa.measure_scale().is_one());
            let h = &w.halfspaces[fa.parent_index];
            assert!(h.value(&fa.chart.map(&[q(3)])).is_zero());
        }
        let c = Chart::crease(&vec_q(&[2, 2]), &q(-4));
        assert_eq!(c.measure_scale, qr(1, 2));
    }

    #[test]
    fn triangulation_covers_volume() {
        let t = Polyhedron::cube(3, q(0), q(2)).hpoly().triangulate();
        let vol: Q = t
            .iter()
            .map(|s| {
                let m: Vec<Vec<Q>> =
                    s[1..].iter().map(|v| v.iter().zip(&s[0]).map(|(a, b)| a - b).collect()).collect();
                linalg::det(&m).abs() / q(6)
            })
            .fold(Q::zero(), |a, b| a + b);
        assert_eq!(vol, q(8));
    }
}
