//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p kstab --release --test acceptance`

use std::time::{Duration, Instant};

use kstab::calabi;
use kstab::geometry::{Chart, Cone, HalfSpace, Polyhedron};
use kstab::pl::{self, PiecewiseLinearConvex};
use kstab::poly::{Poly, UPoly};
use kstab::potentials::{self, SymplecticPotential, WeightJet};
use kstab::quadrature::{self, integrate_exact, QuadOptions};
use kstab::rational::{from_f64, q, qr, Q};
use kstab::stability::{self, ScanConfig, StabilityKind};
use kstab::weights::{self, AffineForm, Weight};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

type Scalar = dyn Fn(&[f64]) -> f64 + Sync;

struct Outcome {
    checks: Vec<(String, bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { checks: vec![] }
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push((name.to_string(), ok, detail.into()));
    }

    fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

fn sci(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", v.join(", "))
}

fn ones(n: usize) -> Vec<Q> {
    vec![q(1); n]
}

fn flat(n: usize) -> (Polyhedron, Weight, Weight) {
    let p = Polyhedron::shifted_orthant(n);
    let v = Weight::exp(ones(n));
    let w = weights::soliton_weight_w(&v, n);
    (p, v, w)
}

fn crit1(o: &mut Outcome) -> kstab::Result<()> {
    let p = calabi::half_line();
    let v = Weight::exp(vec![q(1)]);
    let w = weights::soliton_weight_w(&v, 1);
    let opts = QuadOptions::default();

    let basis = [PiecewiseLinearConvex::affine(AffineForm::new(vec![q(0)], q(1))), PiecewiseLinearConvex::affine(AffineForm::new(vec![q(1)], q(0)))];
    let mut exact = Vec::new();
    for f in &basis {
        exact.push(stability::futaki_exact_1d(&p, &v, &w, f).expect("closed form").to_f64());
    }
    o.check("affine exact_1d", exact.iter().all(|x| x.abs() < 1e-10), format!("{exact:?}"));

    let growth = [[1.0, 0.0], [0.0, 1.0]];
    let fns: [&Scalar; 2] = [&|_| 1.0, &|x| x[0]];
    let mut adaptive = Vec::new();
    for (f, g) in fns.iter().zip(growth) {
        adaptive.push(stability::futaki_fn(&p, &v, &w, *f, &g, true, &opts)?.value);
    }
    o.check("affine adaptive", adaptive.iter().all(|x| x.abs() < 1e-6), format!("{adaptive:?}"));

    let sol = calabi::profile_solve(&v, &w)?;
    let symbolic = sol.theta_rational.as_ref().is_some_and(|(n, d)| *n == UPoly::new(vec![q(2), q(2)]) && *d == UPoly::new(vec![q(1)]));
    o.check("theta = 2(x+1)", symbolic, format!("{:?}", sol.theta_rendered));

    let mut worst = 0.0f64;
    for x0 in [0i64, 1, 2] {
        let r = stability::futaki(&p, &v, &w, &pl::f_x0(q(x0)), &opts)?;
        let x = x0 as f64;
        worst = worst.max((r.value - 2.0 * (x + 1.0) * (-x).exp()).abs());
    }
    o.check("F(f_x0)", worst < 1e-10, format!("max err {worst:.2e}"));

    let rep = calabi::crease_profile_identity(&v, &w, &[q(0), q(1), q(2)], &opts)?;
    o.check("crease-profile identity", rep.max_residual < 1e-10, format!("{:.2e}", rep.max_residual));
    Ok(())
}

fn crit2(o: &mut Outcome) -> kstab::Result<()> {
    let mut rng = StdRng::seed_from_u64(2);
    let opts = QuadOptions::with_tol(1e-9);
    for n in 1..=3usize {
        let (p, v, _) = flat(n);
        let u = SymplecticPotential::guillemin(&p);
        let vj = WeightJet::new(&v);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| (0..n).map(|_| rng.random_range(-0.95..4.0)).collect()).collect();
        let mut rel = 0.0f64;
        for x in &pts {
            let s: f64 = x.iter().sum();
            let oracle = 2.0 * (n as f64 - s) * (-s).exp();
            let got = potentials::abreu_scal_v(&u, &vj, x)?;
            rel = rel.max((got - oracle).abs() / oracle.abs());
        }
        o.check(&format!("n={n} abreu"), rel < 1e-6, format!("max rel {rel:.2e}"));

        let sr = potentials::soliton_residual(&u, &v, &pts)?;
        let c = n as f64 * 2f64.ln();
        let fit_ok = sr.max_deviation < 1e-10 && (sr.fit[0].abs() - c).abs() < 1e-8;
        o.check(&format!("n={n} soliton residual"), fit_ok, format!("dev {:.2e}, fit {:.6}", sr.max_deviation, sr.fit[0]));

        let id = stability::soliton_futaki_identity_check(&p, &v, &QuadOptions::default())?;
        o.check(&format!("n={n} soliton identity"), id.holds && id.consistent, "");

        let fv: Vec<f64> = stability::futaki_v_vector(&p, &v, &opts)?.iter().map(|r| r.value).collect();
        o.check(&format!("n={n} futaki_v"), fv.iter().all(|x| x.abs() < 1e-8), sci(&fv));
    }
    Ok(())
}

fn crit3(o: &mut Outcome) -> kstab::Result<()> {
    let opts = QuadOptions::default();
    let cubic = UPoly::new(vec![q(-1), q(1), q(-1), q(1)]);
    let z = integrate_exact(&[(cubic, q(1), q(0))], Some(&q(-1)), None)?;
    o.check("exact zero integral", z.is_zero(), z.render());

    let p = Polyhedron::shifted_orthant(2);
    let cl = stability::find_c_lambda(0.5, &opts)?;
    o.check("find_c_lambda", cl.residual < 1e-8, format!("c = {:.12}, residual {:.1e}", cl.c, cl.residual));

    let (v, w0) = stability::c2_example_weights(&qr(1, 2), &from_f64(cl.c)?);
    let tight = QuadOptions::with_tol(1e-12);
    let sc = stability::normalize_w_scale(&p, &v, &w0, &tight)?;
    let e2 = 1f64.exp().powi(2);
    let bm = sc.boundary_mass.value;
    o.check("boundary mass 4e^2", (bm - 4.0 * e2).abs() < 1e-8, format!("{:.2e}", (bm - 4.0 * e2).abs()));

    let w = w0.scale(&sc.a_rational);
    let aff = stability::futaki_affine(&p, &v, &w, &tight)?;
    let ok = aff.values[0].abs() < 1e-8 && aff.values[1..].iter().all(|x| x.abs() < 1e-6);
    o.check("normalized a", ok, format!("a = {:.8}, F = {}", sc.a, sci(&aff.values)));

    let cfg = ScanConfig { two_crease_sweeps: 0, ..ScanConfig::default() };
    let verdict = stability::semistability_scan(&p, &v, &w, &cfg, &opts)?;
    let (ok, detail) = match &verdict.kind {
        StabilityKind::Destabilizer { family, value, error, params, .. } => {
            (family == "f_R" && *value + *error < 0.0, format!("{family} {params:?}: {value:.3e} +/- {error:.1e}"))
        }
        k => (false, format!("{k:?}")),
    };
    o.check("destabilizer f_R", ok, detail);
    Ok(())
}

fn crit4(o: &mut Outcome) -> kstab::Result<()> {
    let opts = QuadOptions::default();
    let two_crease = |n: usize| {
        let mut b1 = vec![q(0); n];
        b1[0] = q(1);
        let b2: Vec<Q> = b1.iter().map(|x| x * q(2)).collect();
        PiecewiseLinearConvex::new(vec![
            AffineForm::new(vec![q(0); n], q(0)),
            AffineForm::new(b1, q(-1)),
            AffineForm::new(b2, q(-3)),
        ])
        .unwrap()
    };
    for n in 1..=2usize {
        let (p, v, w) = flat(n);
        let u = SymplecticPotential::guillemin(&p);
        let mut e1 = vec![q(0); n];
        e1[0] = q(-1);
        let fs = [
            ("f_x0(1)", pl::simple_crease(e1.clone(), q(1))),
            ("max{-x1,0}", pl::simple_crease(e1.clone(), q(0))),
            ("two-crease", two_crease(n)),
        ];
        for (name, f) in &fs {
            let r = stability::crease_identity_check(&p, &v, &w, &u, f, &opts)?;
            o.check(&format!("n={n} {name}"), r.residual < 1e-4, format!("{:.2e}", r.residual));
        }
    }
    Ok(())
}

fn crit5(o: &mut Outcome) -> kstab::Result<()> {
    let phi = |x: &[f64]| x.iter().map(|t| t.exp()).sum::<f64>() + 0.5 * x.iter().map(|t| t * t).sum::<f64>();
    let mut errs = Vec::new();
    for h in [0.1, 0.05, 0.025] {
        let r = potentials::legendre_round_trip(&phi, &[-1.0, -1.0], &[1.0, 1.0], h)?;
        errs.push((h, r.midpoint_error.max(r.node_error)));
    }
    let orders: Vec<f64> = errs.windows(2).map(|p| (p[0].1 / p[1].1).ln() / (p[0].0 / p[1].0).ln()).collect();
    let ok = errs.windows(2).all(|p| p[1].1 < p[0].1) && orders.iter().all(|&r| r >= 0.9);
    o.check("refinement", ok, format!("errors {}, orders {orders:.2?}", sci(&errs.iter().map(|e| e.1).collect::<Vec<_>>())));

    // φ = ½xᵀAx with A = [[2, ½], [½, 1]], so φ*(ξ) = ½ξᵀA⁻¹ξ.
    let quad = |x: &[f64]| 0.5 * (2.0 * x[0] * x[0] + x[0] * x[1] + x[1] * x[1]);
    let det = 2.0 - 0.25;
    let dual = |y: &[f64]| 0.5 * (y[0] * y[0] - y[0] * y[1] + 2.0 * y[1] * y[1]) / det;
    let s = potentials::legendre_grid(&quad, &potentials::BoxGrid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.1))?;
    let conj = s.x.iter().zip(&s.u).map(|(x, u)| (u - dual(x)).abs()).fold(0.0, f64::max);
    let r = potentials::legendre_round_trip(&quad, &[-1.0, -1.0], &[1.0, 1.0], 0.1)?;
    let e = r.node_error.max(conj);
    o.check("quadratic exact", e < 1e-10, format!("conjugate {conj:.2e}, round trip at nodes {:.2e}", r.node_error));
    Ok(())
}

fn crit6(o: &mut Outcome) -> kstab::Result<()> {
    let prof = calabi::li_profile(1, 1, 3.0, 1.0, 1.0)?;
    let f1 = prof.f_exact(&q(1));
    o.check("F(1) = 11/2", f1 == qr(11, 2), kstab::rational::fmt_q(&f1));
    let ratio = prof.f_at(1e4) / 1e4;
    o.check("F/phi -> 2", (ratio - 2.0).abs() <= 0.02, format!("{ratio:.6}"));
    let opts = QuadOptions::with_tol(1e-12);
    let rows = calabi::li_cauchy(&prof, 1.0, &[1e2, 1e3, 1e4], &opts)?;
    o.check("G tail Cauchy", rows.iter().all(|r| r.holds), sci(&rows.iter().map(|r| r.increment).collect::<Vec<_>>()));
    let d = calabi::li_decay_check(&prof, 1.0, 1.0, (1e2, 1e6), 41, &opts)?;
    o.check("decay slope", (-2.2..=-1.8).contains(&d.slope), format!("{:.6}", d.slope));
    Ok(())
}

fn random_unimodular(rng: &mut StdRng, n: usize) -> Vec<Vec<i64>> {
    let mut m: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect();
    for _ in 0..2 * n {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let k: i64 = rng.random_range(-1..=1);
        let src = m[j].clone();
        for (a, b) in m[i].iter_mut().zip(&src) {
            *a += k * b;
        }
    }
    m
}

fn crit7(o: &mut Outcome) -> kstab::Result<()> {
    let mut rng = StdRng::seed_from_u64(7);
    let mut ok = true;
    for n in 1..=3 {
        ok &= Polyhedron::shifted_orthant(n).is_delzant()?.delzant;
        ok &= Polyhedron::cube(n, q(0), q(1)).is_delzant()?.delzant;
    }
    let wedge = Polyhedron::new(2, vec![HalfSpace::new(vec![1, 0], q(0))?, HalfSpace::new(vec![1, 2], q(0))?])?;
    let wedge_bad = !wedge.is_delzant()?.delzant;
    o.check("is_delzant", ok && wedge_bad, format!("orthants/cubes {ok}, det-2 wedge rejected {wedge_bad}"));

    let mut inv = 0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=4usize);
        let normals: Vec<Vec<i64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-3..=3)).collect()).collect();
        let c = Cone::from_normals(n, normals);
        if c.dual().dual().same_set(&c) {
            inv += 1;
        }
    }
    o.check("dual-cone involution", inv == 20, format!("{inv}/20"));

    let mut bounded = 0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3usize);
        let a = random_unimodular(&mut rng, n);
        // Rows of a are the facet normals of a unimodular image of a shifted orthant, optionally capped.
        let mut hs = Vec::new();
        for row in &a {
            hs.push(HalfSpace::new(row.clone(), q(rng.random_range(1..=3)))?);
        }
        if n > 1 && rng.random_bool(0.5) {
            hs.push(HalfSpace::new(a[0].iter().map(|x| -x).collect(), q(rng.random_range(1..=4)))?);
        }
        let p = Polyhedron::new(n, hs)?;
        let t = p.truncate(None, &q(rng.random_range(2..=10)))?;
        if !p.is_bounded() && p.is_delzant()?.delzant && t.is_bounded() && !t.is_empty() {
            bounded += 1;
        }
    }
    o.check("truncation bounded", bounded == 20, format!("{bounded}/20"));

    let mut law = true;
    for _ in 0..20 {
        let b: Vec<Q> = (0..3).map(|_| qr(rng.random_range(-5..=5), rng.random_range(1..=4))).collect();
        if b.iter().all(|x| x == &q(0)) {
            continue;
        }
        let c = qr(rng.random_range(-5..=5), rng.random_range(1..=4));
        let k = qr(rng.random_range(1..=9), rng.random_range(1..=9));
        let base = Chart::crease(&b, &c).measure_scale;
        let kb: Vec<Q> = b.iter().map(|x| x * &k).collect();
        let scaled = Chart::crease(&kb, &(&c * &k)).measure_scale;
        law &= scaled == base / &k;
    }
    let p = Polyhedron::shifted_orthant(2);
    let f = pl::simple_crease(vec![q(1), q(2)], q(-1));
    let (_, c1) = f.regions_and_creases(&p);
    let (_, c3) = f.scale(&q(3)).regions_and_creases(&p);
    law &= c1.len() == 1 && c3.len() == 1 && c3[0].chart.measure_scale == &c1[0].chart.measure_scale / q(3);
    o.check("crease measure K^-1 law", law, "");
    Ok(())
}

fn random_upoly(rng: &mut StdRng) -> UPoly {
    loop {
        let d = rng.random_range(0..=3usize);
        let p = UPoly::new((0..=d).map(|_| qr(rng.random_range(-4..=4), rng.random_range(1..=3))).collect());
        if !p.is_zero() {
            return p;
        }
    }
}

fn lift(p: &UPoly, nvars: usize, var: usize) -> Poly {
    let mut out = Poly::zero(nvars);
    for (k, c) in p.coeffs.iter().enumerate() {
        let mut e = vec![0u32; nvars];
        e[var] = k as u32;
        out = out.add(&Poly::monomial(e, c.clone()));
    }
    out
}

fn crit8(o: &mut Outcome) -> kstab::Result<()> {
    let mut rng = StdRng::seed_from_u64(8);
    let rates = [qr(1, 2), q(1), qr(3, 2), q(2), q(3)];
    let mut sound = 0;
    let mut identical = 0;
    let mut total = 0;
    let mut worst = 0.0f64;
    for dim in [1usize, 2] {
        let hp = Polyhedron::shifted_orthant(dim).hpoly();
        for _ in 0..20 {
            let ps: Vec<UPoly> = (0..dim).map(|_| random_upoly(&mut rng)).collect();
            let ls: Vec<Q> = (0..dim).map(|_| rates[rng.random_range(0..rates.len())].clone()).collect();
            let mut exact = 1.0;
            for (p, l) in ps.iter().zip(&ls) {
                exact *= integrate_exact(&[(p.clone(), l.clone(), q(0))], Some(&q(-1)), None)?.to_f64();
            }
            let poly = ps.iter().enumerate().fold(Poly::one(dim), |acc, (i, p)| acc.mul(&lift(p, dim, i)));
            let w = Weight::poly_exp(poly, ls);
            let env = w.envelope(&hp)?;
            let c = w.compile();
            let f = move |x: &[f64]| c.eval(x);
            let mut bits = Vec::new();
            let mut first = None;
            for workers in [1usize, 2, 8] {
                let opts = QuadOptions { workers: Some(workers), ..QuadOptions::with_tol(1e-9) };
                let r = quadrature::integrate_fn(&f, Some(&env), &hp, &opts)?;
                bits.push((r.value.to_bits(), r.total_error().to_bits()));
                first.get_or_insert(r);
            }
            let r = first.unwrap();
            total += 1;
            let err = (r.value - exact).abs();
            worst = worst.max(err / r.total_error().max(f64::MIN_POSITIVE));
            if err <= r.total_error() {
                sound += 1;
            }
            if bits.iter().all(|b| *b == bits[0]) {
                identical += 1;
            }
        }
    }
    o.check("error bounds hold", sound == total, format!("{sound}/{total}, worst |err|/bound {worst:.2e}"));
    o.check("bit-identical 1/2/8 workers", identical == total, format!("{identical}/{total}"));
    Ok(())
}

fn crit9(o: &mut Outcome) -> kstab::Result<()> {
    for n in 1..=2usize {
        let (p, v, w) = flat(n);
        let u = SymplecticPotential::guillemin(&p);
        for eps in [0.1, 0.3] {
            let r = potentials::h_class_check(&u, &v, &p, eps, 1.0)?;
            o.check(&format!("n={n} eps={eps} H^eps"), r.pass, format!("cond1 growth {:.3}", r.cond1.growth_exponent));
        }
        let cw = weights::check_class_w(&v, &w, &p, 0.5, 2)?;
        o.check(&format!("n={n} class W"), cw.pass, format!("decay rate {:.4}", cw.decay_rate));
        let one = Weight::constant(n, q(1));
        let r = potentials::h_class_check(&u, &one, &p, 0.1, 1.0)?;
        o.check(&format!("n={n} v=1 fails (1)"), !r.cond1.bounded, format!("cond1 growth {:.3}", r.cond1.growth_exponent));
    }
    Ok(())
}

type Criterion = fn(&mut Outcome) -> kstab::Result<()>;

fn main() {
    let criteria: [(&str, Criterion, Option<Duration>); 9] = [
        ("flat 1D model", crit1, Some(Duration::from_secs(1))),
        ("flat C^n soliton", crit2, Some(Duration::from_secs(10))),
        ("C^2 nonexistence", crit3, Some(Duration::from_secs(60))),
        ("crease-sum identity", crit4, Some(Duration::from_secs(30))),
        ("Legendre duality", crit5, None),
        ("Li profile", crit6, Some(Duration::from_secs(30))),
        ("geometry suite", crit7, None),
        ("quadrature soundness", crit8, None),
        ("H^eps / class W", crit9, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let mut o = Outcome::new();
        let t = Instant::now();
        let res = run(&mut o);
        let dt = t.elapsed();
        if let Err(e) = &res {
            o.check("error", false, e.to_string());
        }
        if let Some(b) = budget {
            o.check("runtime", dt <= *b, format!("{:.2}s of {}s", dt.as_secs_f64(), b.as_secs()));
        }
        let pass = o.pass();
        failed += usize::from(!pass);
        println!("criterion {}: {} ({name}, {:.2}s)", i + 1, if pass { "PASS" } else { "FAIL" }, dt.as_secs_f64());
        for (c, ok, d) in &o.checks {
            println!("    [{}] {c}: {d}", if *ok { "ok" } else { "!!" });
        }
    }
    println!("{}/9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
