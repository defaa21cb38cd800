//! Problem files and run artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyhedron;
use crate::pl::{self, PiecewiseLinearConvex};
use crate::potentials::SymplecticPotential;
use crate::rational::{self, Q};
use crate::weights::{self, FibrationFactor, Weight};

/// Weight pair, either explicit or built by a constructor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Explicit {
        v: Weight,
        w: Weight,
    },
    /// `w = 2(n v + ⟨∇v, x⟩)`.
    Soliton {
        v: Weight,
    },
    Fibration {
        v: Weight,
        w: Weight,
        factors: Vec<FibrationFactor>,
    },
    /// v from the fibration product, w its soliton weight.
    Krs {
        factors: Vec<FibrationFactor>,
        #[serde(with = "rational::serde_vec_q")]
        b_w: Vec<Q>,
    },
    LineBundle {
        v: Weight,
        w: Weight,
        factors: Vec<FibrationFactor>,
    },
}

impl WeightSpec {
    pub fn build(&self, p: &Polyhedron) -> Result<(Weight, Weight)> {
        let check = |v: &Weight, w: &Weight| -> Result<()> {
            if v.nvars != p.dim || w.nvars != p.dim {
                return Err(Error::SchemaError(format!("weights must have {} variables", p.dim)));
            }
            Ok(())
        };
        let (v, w) = match self {
            WeightSpec::Explicit { v, w } => (v.clone(), w.clone()),
            WeightSpec::Soliton { v } => (v.clone(), weights::soliton_weight_w(v, p.dim)),
            WeightSpec::Fibration { v, w, factors } => {
                check(v, w)?;
                weights::fibration_transform(v, w, factors, p)?
            }
            WeightSpec::Krs { factors, b_w } => {
                let v = weights::krs_fibration_weight(factors, b_w, p)?;
                let w = weights::soliton_weight_w(&v, p.dim);
                (v, w)
            }
            WeightSpec::LineBundle { v, w, factors } => {
                if p.dim != 1 {
                    return Err(Error::SchemaError("line_bundle needs a one-dimensional polyhedron".into()));
                }
                check(v, w)?;
                crate::calabi::line_bundle_weights(v, w, factors)?
            }
        };
        check(&v, &w)?;
        Ok((v, w))
    }
}

/// A test function: explicit pieces or a named family member.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Pieces {
        pieces: PiecewiseLinearConvex,
    },
    SimpleCrease {
        #[serde(with = "rational::serde_vec_q")]
        b: Vec<Q>,
        #[serde(with = "rational::serde_q")]
        a: Q,
    },
    #[serde(rename = "f_R")]
    FR {
        #[serde(with = "rational::serde_vec_q")]
        direction: Vec<Q>,
        #[serde(with = "rational::serde_q")]
        r: Q,
    },
    #[serde(rename = "f_x0")]
    FX0 {
        #[serde(with = "rational::serde_q")]
        x0: Q,
    },
}

impl FunctionSpec {
    pub fn build(&self) -> PiecewiseLinearConvex {
        match self {
            FunctionSpec::Pieces { pieces } => pieces.clone(),
            FunctionSpec::SimpleCrease { b, a } => pl::simple_crease(b.clone(), a.clone()),
            FunctionSpec::FR { direction, r } => pl::f_r(direction.clone(), r.clone()),
            FunctionSpec::FX0 { x0 } => pl::f_x0(x0.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FunctionSpec::Pieces { .. } => "pieces".into(),
            FunctionSpec::SimpleCrease { b, a } => format!("simple_crease(b={}, a={})", rational::fmt_vec(b), rational::fmt_q(a)),
            FunctionSpec::FR { direction, r } => format!("f_R(g={}, R={})", rational::fmt_vec(direction), rational::fmt_q(r)),
            FunctionSpec::FX0 { x0 } => format!("f_x0({})", rational::fmt_q(x0)),
        }
    }
}

/// Evenly spaced grid `from..=to` with `n` points.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![self.from];
        }
        (0..self.n).map(|i| self.from + (self.to - self.from) * i as f64 / (self.n - 1) as f64).collect()
    }
}

fn default_scan_offsets() -> Option<Vec<f64>> {
    None
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Validate,
    Futaki {
        #[serde(default)]
        functions: Vec<FunctionSpec>,
        /// Rational x₀ values for the f_x0 family.
        #[serde(default, with = "rational::serde_vec_q")]
        x0: Vec<Q>,
    },
    Scan {
        #[serde(default = "default_scan_offsets")]
        offsets: Option<Vec<f64>>,
        #[serde(default)]
        r_values: Option<Vec<f64>>,
        #[serde(default)]
        sphere_samples: Option<usize>,
        #[serde(default)]
        two_crease_sweeps: Option<usize>,
    },
    Profile {
        grid: Grid,
        #[serde(default, with = "rational::serde_vec_q")]
        crease_x0: Vec<Q>,
    },
    Li {
        d: u32,
        k: u32,
        tau: f64,
        kappa: f64,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default = "one")]
        phi0: f64,
        #[serde(default = "one")]
        s0: f64,
        #[serde(default = "li_range")]
        s_range: (f64, f64),
        #[serde(default = "li_points")]
        points: usize,
    },
    Mabuchi {
        u: SymplecticPotential,
        u0: SymplecticPotential,
    },
    AbreuCheck {
        u: SymplecticPotential,
        #[serde(default = "abreu_samples")]
        samples: usize,
    },
    ClassCheck {
        beta_star: f64,
        #[serde(default = "k_max")]
        k_max: usize,
        #[serde(default)]
        u: Option<SymplecticPotential>,
        #[serde(default = "epsilon")]
        epsilon: f64,
        #[serde(default = "one")]
        delta_bar: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn li_range() -> (f64, f64) {
    (1e2, 1e6)
}
fn li_points() -> usize {
    41
}
fn abreu_samples() -> usize {
    100
}
fn k_max() -> usize {
    2
}
fn epsilon() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "rel_tol")]
    pub rel_tol: f64,
}

fn rel_tol() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel_tol: rel_tol() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub polyhedron: Option<Polyhedron>,
    #[serde(default)]
    pub weights: Option<WeightSpec>,
    pub task: Task,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::SchemaError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn polyhedron(&self) -> Result<&Polyhedron> {
        self.polyhedron.as_ref().ok_or_else(|| Error::SchemaError("task needs a polyhedron".into()))
    }

    pub fn weights(&self) -> Result<(Weight, Weight)> {
        let p = self.polyhedron()?;
        self.weights.as_ref().ok_or_else(|| Error::SchemaError("task needs weights".into()))?.build(p)
    }
}

/// Files written for one run, listed in `manifest.json`.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, usize)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    task: &'a str,
    exit_code: i32,
    files: Vec<ManifestEntry<'a>>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    name: &'a str,
    bytes: usize,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::SchemaError(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), bytes.len()));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_vec_pretty(value).map_err(|e| Error::SchemaError(e.to_string()))?;
        s.push(b'\n');
        self.write(name, s)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(vec![]);
        let err = |e: csv::Error| Error::SchemaError(e.to_string());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::SchemaError(e.to_string()))?;
        self.write(name, bytes)
    }

    pub fn finish(mut self, task: &str, exit_code: i32) -> Result<()> {
        let files: Vec<(String, usize)> = self.files.clone();
        let m = Manifest {
            tool: "kstab",
            version: env!("CARGO_PKG_VERSION"),
            task,
            exit_code,
            files: files.iter().map(|(n, b)| ManifestEntry { name: n, bytes: *b }).collect(),
        };
        self.json("manifest.json", &m)
    }
}

/// Shortest round-trip representation of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_problem() {
        let text = r#"{
            "polyhedron": {"dim": 1, "halfspaces": [{"normal": [1], "offset": "1"}]},
            "weights": {"kind": "soliton", "v": {"terms": [{"poly": {"coeffs": [[[0], "1"]]}, "decay": ["1"]}]}},
            "task": {"kind": "futaki", "x0": ["0", "1", "2"]}
        }"#;
        let p = ProblemFile::parse(text).unwrap();
        let (v, w) = p.weights().unwrap();
        assert_eq!(w, weights::soliton_weight_w(&v, 1));
        assert!(matches!(p.task, Task::Futaki { ref x0, .. } if x0.len() == 3));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = r#"{"task": {"kind": "validate"}, "bogus": 1}"#;
        assert!(matches!(ProblemFile::parse(text), Err(Error::SchemaError(_))));
    }
}
