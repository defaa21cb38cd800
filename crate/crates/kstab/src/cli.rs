//! Batch front-end: problem files in, verdicts and tables out.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::calabi;
use crate::error::{Error, Result};
use crate::geometry::Polyhedron;
use crate::io::{num, Artifacts, ProblemFile, Task};
use crate::potentials::{self, checks, HessianSource, SymplecticPotential, WeightJet};
use crate::quadrature::QuadOptions;
use crate::rational::{self, from_f64, q, qr};
use crate::stability::{self, ScanConfig, StabilityKind};
use crate::weights::{self, Weight};

#[derive(Parser, Debug)]
#[command(name = "kstab", version, about = "Weighted K-stability toolkit for toric polyhedra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one problem file.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-run a named worked example and compare with stored values.
    Reproduce {
        #[arg(long = "case", value_enum)]
        case: Case,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Case {
    #[value(name = "flat_1d")]
    Flat1d,
    FlatC2Soliton,
    C2Nonexistence,
    LiProfileK1,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERIC
    }
}

fn error_json(e: &Error) -> Value {
    json!({ "error": { "code": e.code(), "message": e.to_string() } })
}

pub fn main_with(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { input, out, rel_tol, threads } => run_path(&input, &out, rel_tol, threads),
        Command::Reproduce { case, out, threads } => {
            let opts = QuadOptions { workers: threads, ..QuadOptions::default() };
            match reproduce(case, &opts) {
                Ok(report) => {
                    let code = if report["pass"] == json!(true) { EXIT_OK } else { EXIT_NUMERIC };
                    emit_report(out.as_deref(), case, &report, code)
                }
                Err(e) => {
                    eprintln!("error [{}]: {e}", e.code());
                    emit_report(out.as_deref(), case, &error_json(&e), exit_code(&e))
                }
            }
        }
    }
}

fn emit_report(out: Option<&Path>, case: Case, report: &Value, code: i32) -> i32 {
    match out {
        Some(dir) => {
            let res = Artifacts::new(dir).and_then(|mut a| {
                a.json("report.json", report)?;
                a.finish(&format!("reproduce:{case:?}"), code)
            });
            if let Err(e) = res {
                eprintln!("error [{}]: {e}", e.code());
                return EXIT_INPUT;
            }
        }
        None => println!("{}", serde_json::to_string_pretty(report).unwrap_or_default()),
    }
    code
}

/// Loads, runs and writes artifacts; returns the process exit code.
pub fn run_path(input: &Path, out: &Path, rel_tol: Option<f64>, threads: Option<usize>) -> i32 {
    let mut art = match Artifacts::new(out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            return EXIT_INPUT;
        }
    };
    let (code, task) = match ProblemFile::load(input) {
        Ok(problem) => {
            let task = task_name(&problem.task);
            let code = match run(&problem, &mut art, rel_tol, threads) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error [{}]: {e}", e.code());
                    let _ = art.json("error.json", &error_json(&e));
                    exit_code(&e)
                }
            };
            (code, task)
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            let _ = art.json("error.json", &error_json(&e));
            (exit_code(&e), "unparsed")
        }
    };
    if let Err(e) = art.finish(task, code) {
        eprintln!("error [{}]: {e}", e.code());
        return EXIT_INPUT;
    }
    code
}

pub fn task_name(t: &Task) -> &'static str {
    match t {
        Task::Validate => "validate",
        Task::Futaki { .. } => "futaki",
        Task::Scan { .. } => "scan",
        Task::Profile { .. } => "profile",
        Task::Li { .. } => "li",
        Task::Mabuchi { .. } => "mabuchi",
        Task::AbreuCheck { .. } => "abreu-check",
        Task::ClassCheck { .. } => "class-check",
    }
}

/// Executes one problem, writing `verdict.json` and any tables into `art`.
pub fn run(problem: &ProblemFile, art: &mut Artifacts, rel_tol: Option<f64>, threads: Option<usize>) -> Result<()> {
    let rel_tol = rel_tol.unwrap_or(problem.tolerances.rel_tol);
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::SchemaError(format!("rel_tol = {rel_tol} is not in (0, 1)")));
    }
    let opts = QuadOptions { rel_tol, workers: threads, ..QuadOptions::default() };
    let verdict = match &problem.task {
        Task::Validate => task_validate(problem, &opts)?,
        Task::Futaki { functions, x0 } => {
            let p = problem.polyhedron()?;
            let (v, w) = problem.weights()?;
            let mut specs = functions.clone();
            specs.extend(x0.iter().map(|x| crate::io::FunctionSpec::FX0 { x0: x.clone() }));
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for s in &specs {
                let f = s.build();
                if f.dim() != p.dim {
                    return Err(Error::SchemaError(format!("{} has the wrong dimension", s.label())));
                }
                let r = stability::futaki(p, &v, &w, &f, &opts)?;
                rows.push(vec![s.label(), num(r.value), num(r.total_error()), r.exact.clone().unwrap_or_default()]);
                out.push(json!({ "function": s.label(), "value": r.value, "error": r.total_error(), "exact": r.exact }));
            }
            art.csv("futaki.csv", &["function", "value", "error", "exact"], &rows)?;
            let affine = stability::futaki_affine(p, &v, &w, &opts)?;
            json!({ "affine": affine, "values": out })
        }
        Task::Scan { offsets, r_values, sphere_samples, two_crease_sweeps } => {
            let p = problem.polyhedron()?;
            let (v, w) = problem.weights()?;
            let mut cfg = ScanConfig::default();
            if let Some(o) = offsets {
                cfg.offsets = o.clone();
            }
            if let Some(r) = r_values {
                cfg.r_values = r.clone();
            }
            if let Some(s) = sphere_samples {
                cfg.sphere_samples = *s;
            }
            if let Some(t) = two_crease_sweeps {
                cfg.two_crease_sweeps = *t;
            }
            let verdict = stability::semistability_scan(p, &v, &w, &cfg, &opts)?;
            let rows: Vec<Vec<String>> = verdict
                .search_log
                .iter()
                .map(|e| {
                    vec![
                        e.family.clone(),
                        e.params.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";"),
                        num(e.value),
                        num(e.error),
                    ]
                })
                .collect();
            art.csv("scan.csv", &["family", "params", "value", "error"], &rows)?;
            scan_json(&verdict)
        }
        Task::Profile { grid, crease_x0 } => {
            let (v, w) = profile_weights(problem)?;
            let x_max = grid.to.max(50.0);
            let sol = calabi::profile_solve_with(&v, &w, x_max)?;
            let mut rows = Vec::new();
            for x in grid.points() {
                if x < -1.0 {
                    return Err(Error::SchemaError("profile grid must lie in [−1, ∞)".into()));
                }
                rows.push(vec![num(x), num(sol.theta_at(x)?), num(sol.vtheta_at(x)?)]);
            }
            art.csv("profile.csv", &["x", "theta", "vtheta"], &rows)?;
            let mut out = json!({ "profile": sol });
            if !crease_x0.is_empty() {
                let rep = calabi::crease_profile_identity(&v, &w, crease_x0, &opts)?;
                let rows: Vec<Vec<String>> = rep
                    .rows
                    .iter()
                    .map(|r| vec![num(r.x0), num(r.futaki), num(r.vtheta), num(r.residual)])
                    .collect();
                art.csv("crease_profile.csv", &["x0", "futaki", "vtheta", "residual"], &rows)?;
                out["crease_profile"] = json!(rep);
            }
            out
        }
        Task::Li { d, k, tau, kappa, mu, phi0, s0, s_range, points } => {
            let prof = calabi::li_profile(*d, *k, *tau, *kappa, *mu)?;
            let lo = QuadOptions { rel_tol: rel_tol.min(1e-12), ..opts.clone() };
            let c0 = calabi::li_c0(&prof, *phi0, 1e4 * phi0.max(1.0), &lo)?;
            let cuts: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|c| c * phi0.max(1.0)).collect();
            let cauchy = calabi::li_cauchy(&prof, *phi0, &cuts, &lo)?;
            let decay = calabi::li_decay_check(&prof, *phi0, *s0, *s_range, *points, &lo)?;
            let rows: Vec<Vec<String>> = decay
                .rows
                .iter()
                .map(|r| vec![num(r.s), num(r.phi), num(r.e), num(r.residual)])
                .collect();
            art.csv("li.csv", &["s", "phi", "e", "residual"], &rows)?;
            let (lead, expect, deg) = prof.leading_audit();
            json!({
                "profile": prof,
                "f_at_1": rational::fmt_q(&prof.f_exact(&q(1))),
                "leading_audit": { "degree": deg, "computed": rational::fmt_q(&lead), "expected": rational::fmt_q(&expect), "pass": lead == expect },
                "c0": c0,
                "cauchy": cauchy,
                "decay": { "slope": decay.slope, "target": decay.target, "monotone": decay.monotone,
                           "max_residual": decay.max_residual, "d0": decay.d0, "flags": decay.flags },
            })
        }
        Task::Mabuchi { u, u0 } => {
            let p = problem.polyhedron()?;
            let (v, w) = problem.weights()?;
            check_potential_dim(u, p)?;
            check_potential_dim(u0, p)?;
            json!(checks::mabuchi_energy(p, &v, &w, u, u0, &opts)?)
        }
        Task::AbreuCheck { u, samples } => {
            let p = problem.polyhedron()?;
            let (v, w) = problem.weights()?;
            check_potential_dim(u, p)?;
            let pts = interior_samples(p, *samples);
            let vj = WeightJet::new(&v);
            let cw = w.compile();
            let mut rows = Vec::new();
            let mut max_abs = 0.0f64;
            let mut max_w = 0.0f64;
            for x in &pts {
                let s = potentials::abreu_scal_v(u as &dyn HessianSource, &vj, x)?;
                let wx = cw.eval(x);
                let d = (s - wx).abs();
                max_abs = max_abs.max(d);
                max_w = max_w.max(wx.abs());
                rows.push(vec![
                    x.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";"),
                    num(s),
                    num(wx),
                    num(d),
                ]);
            }
            art.csv("abreu.csv", &["x", "scal_v", "w", "abs_residual"], &rows)?;
            let soliton = potentials::soliton_residual(u, &v, &pts).ok();
            json!({ "samples": pts.len(), "max_abs_residual": max_abs, "max_rel_residual": if max_w > 0.0 { max_abs / max_w } else { max_abs }, "soliton_residual": soliton })
        }
        Task::ClassCheck { beta_star, k_max, u, epsilon, delta_bar } => {
            let p = problem.polyhedron()?;
            let (v, w) = problem.weights()?;
            let class_w = weights::check_class_w(&v, &w, p, *beta_star, *k_max)?;
            let mut out = json!({ "class_w": class_w });
            if let Some(u) = u {
                check_potential_dim(u, p)?;
                out["h_class"] = json!(checks::h_class_check(u, &v, p, *epsilon, *delta_bar)?);
                out["boundary"] = json!(checks::boundary_checks(u, p, None, &[1e-2, 1e-3, 1e-4])?);
            }
            out
        }
    };
    art.json("verdict.json", &verdict)
}

fn check_potential_dim(u: &SymplecticPotential, p: &Polyhedron) -> Result<()> {
    if u.dim != p.dim {
        return Err(Error::SchemaError(format!("potential has dimension {}, polyhedron {}", u.dim, p.dim)));
    }
    Ok(())
}

fn profile_weights(problem: &ProblemFile) -> Result<(Weight, Weight)> {
    let line = calabi::half_line();
    if let Some(p) = &problem.polyhedron {
        if p != &line {
            return Err(Error::SchemaError("profile task needs P = [−1, ∞)".into()));
        }
    }
    problem.weights.as_ref().ok_or_else(|| Error::SchemaError("task needs weights".into()))?.build(&line)
}

/// Interior sample points at distance ≥ 0.05 from every facet.
pub fn interior_samples(p: &Polyhedron, count: usize) -> Vec<Vec<f64>> {
    let hp = p.hpoly();
    let per = ((count as f64).powf(1.0 / p.dim as f64).ceil() as usize + 2).max(3);
    let mut pts: Vec<Vec<f64>> = crate::sampling::domain_samples(&hp, 4.0, per)
        .into_iter()
        .filter(|x| hp.rows.iter().all(|r| r.value_f64(x) >= 0.05))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    if pts.len() > count {
        let step = pts.len() as f64 / count as f64;
        pts = (0..count).map(|i| pts[(i as f64 * step) as usize].clone()).collect();
    }
    pts
}

fn task_validate(problem: &ProblemFile, opts: &QuadOptions) -> Result<Value> {
    let p = problem.polyhedron()?;
    let delzant = p.is_delzant()?;
    let cone = p.recession_cone();
    let mut out = json!({
        "dim": p.dim,
        "facets": p.halfspaces.len(),
        "delzant": delzant.delzant,
        "bounded": p.is_bounded(),
        "anticanonical": p.is_anticanonical(),
        "origin_interior": p.origin_interior,
        "vertices": p.vertices().iter().map(|v| rational::fmt_vec(v)).collect::<Vec<_>>(),
        "recession_rays": cone.generators().iter().map(|v| rational::fmt_vec(v)).collect::<Vec<_>>(),
    });
    if problem.weights.is_some() {
        let (v, w) = problem.weights()?;
        let pos = weights::check_positive(&v, &p.hpoly());
        out["v_positive"] = json!({ "positive": pos.positive, "witness": pos.witness, "qualifier": pos.qualifier });
        out["affine_futaki"] = json!(stability::futaki_affine(p, &v, &w, opts)?);
        out["v"] = json!(v.render());
        out["w"] = json!(w.render());
    }
    Ok(out)
}

fn scan_json(verdict: &stability::StabilityVerdict) -> Value {
    let mut out = json!({ "verdict": verdict.kind, "affine": verdict.affine, "entries": verdict.search_log.len() });
    // Sign-flip bracket of the f_R family.
    let fr: Vec<_> = verdict.search_log.iter().filter(|e| e.family == "f_R").collect();
    let r_of = |e: &&stability::ScanEntry| *e.params.last().unwrap_or(&f64::NAN);
    let last_nonneg = fr.iter().filter(|e| e.value - e.error >= 0.0).map(r_of).fold(f64::NAN, f64::max);
    let first_neg = fr.iter().filter(|e| e.value + e.error < 0.0).map(r_of).fold(f64::NAN, f64::min);
    if !fr.is_empty() {
        out["f_R_bracket"] = json!({ "nonnegative_at": last_nonneg, "negative_at": first_neg });
    }
    out
}

fn check(pass: &mut bool, mism: &mut Vec<String>, name: &str, ok: bool, detail: String) {
    if !ok {
        *pass = false;
        mism.push(format!("{name}: {detail}"));
    }
}

/// Runs one named example end to end and compares with stored values.
pub fn reproduce(case: Case, opts: &QuadOptions) -> Result<Value> {
    let mut pass = true;
    let mut mism = Vec::new();
    let mut report = match case {
        Case::Flat1d => {
            let p = calabi::half_line();
            let v = Weight::exp(vec![q(1)]);
            let w = weights::soliton_weight_w(&v, 1);
            let aff = stability::futaki_affine(&p, &v, &w, opts)?;
            check(&mut pass, &mut mism, "affine", aff.values.iter().all(|x| x.abs() < 1e-10), format!("{:?}", aff.values));
            let sol = calabi::profile_solve(&v, &w)?;
            let theta_ok = sol.theta_rendered.as_deref() == Some(&weights::render_poly(&crate::poly::Poly::affine(&[q(2)], &q(2)))[..]);
            check(&mut pass, &mut mism, "theta", theta_ok, format!("{:?}", sol.theta_rendered));
            let rep = calabi::crease_profile_identity(&v, &w, &[q(0), q(1), q(2)], opts)?;
            let stored = [2.0, 4.0 / 1f64.exp(), 6.0 / 1f64.exp().powi(2)];
            for (r, s) in rep.rows.iter().zip(stored) {
                check(&mut pass, &mut mism, "F(f_x0)", (r.futaki - s).abs() < 1e-10, format!("x0 = {}: {} vs {s}", r.x0, r.futaki));
            }
            check(&mut pass, &mut mism, "crease", rep.max_residual < 1e-10, num(rep.max_residual));
            json!({ "affine": aff, "theta": sol.theta_rendered, "crease_profile": rep })
        }
        Case::FlatC2Soliton => {
            let p = Polyhedron::shifted_orthant(2);
            let v = Weight::exp(vec![q(1), q(1)]);
            let w = weights::soliton_weight_w(&v, 2);
            let u = SymplecticPotential::guillemin(&p);
            let pts = interior_samples(&p, 64);
            let vj = WeightJet::new(&v);
            let cw = w.compile();
            let mut abreu = 0.0f64;
            for x in &pts {
                let s = potentials::abreu_scal_v(&u, &vj, x)?;
                abreu = abreu.max((s - cw.eval(x)).abs());
            }
            check(&mut pass, &mut mism, "abreu", abreu < 1e-10, num(abreu));
            let fv = stability::futaki_v_vector(&p, &v, opts)?;
            let fvals: Vec<f64> = fv.iter().map(|r| r.value).collect();
            check(&mut pass, &mut mism, "futaki_v", fvals.iter().all(|x| x.abs() < 1e-8), format!("{fvals:?}"));
            let sr = potentials::soliton_residual(&u, &v, &pts)?;
            check(&mut pass, &mut mism, "soliton", sr.max_deviation < 1e-10, num(sr.max_deviation));
            json!({ "abreu_residual": abreu, "futaki_v": fvals, "soliton_residual": sr })
        }
        Case::C2Nonexistence => {
            let p = Polyhedron::shifted_orthant(2);
            let cl = stability::find_c_lambda(0.5, opts)?;
            check(&mut pass, &mut mism, "c_lambda", (cl.c - 2.2387310040545385).abs() < 1e-8, num(cl.c));
            let (v, w0) = stability::c2_example_weights(&qr(1, 2), &from_f64(cl.c)?);
            let sc = stability::normalize_w_scale(&p, &v, &w0, &QuadOptions { rel_tol: opts.rel_tol.min(1e-12), ..opts.clone() })?;
            let w = w0.scale(&sc.a_rational);
            let e2 = 1f64.exp().powi(2);
            check(&mut pass, &mut mism, "boundary_mass", (sc.boundary_mass.value - 4.0 * e2).abs() < 1e-8, num(sc.boundary_mass.value));
            let cfg = ScanConfig { two_crease_sweeps: 0, ..ScanConfig::default() };
            let verdict = stability::semistability_scan(&p, &v, &w, &cfg, opts)?;
            let destab = matches!(verdict.kind, StabilityKind::Destabilizer { ref family, .. } if family == "f_R");
            check(&mut pass, &mut mism, "destabilizer", destab, format!("{:?}", verdict.kind));
            json!({ "c_lambda": cl, "a": sc.a, "boundary_mass": sc.boundary_mass.value, "scan": scan_json(&verdict) })
        }
        Case::LiProfileK1 => {
            let prof = calabi::li_profile(1, 1, 3.0, 1.0, 1.0)?;
            check(&mut pass, &mut mism, "F(1)", prof.f_exact(&q(1)) == qr(11, 2), rational::fmt_q(&prof.f_exact(&q(1))));
            let lo = QuadOptions { rel_tol: 1e-12, ..opts.clone() };
            let decay = calabi::li_decay_check(&prof, 1.0, 1.0, (1e2, 1e6), 41, &lo)?;
            check(&mut pass, &mut mism, "slope", (decay.slope + 2.0).abs() <= 0.2, num(decay.slope));
            json!({ "profile": prof, "slope": decay.slope, "d0": decay.d0, "c0": decay.c0 })
        }
    };
    report["case"] = json!(format!("{case:?}"));
    report["pass"] = json!(pass);
    report["mismatches"] = json!(mism);
    Ok(report)
}

/// Reproduce with mismatches turned into an error.
pub fn reproduce_strict(case: Case, opts: &QuadOptions) -> Result<Value> {
    let r = reproduce(case, opts)?;
    if r["pass"] != json!(true) {
        return Err(Error::RegressionMismatch(r["mismatches"].to_string()));
    }
    Ok(r)
}
