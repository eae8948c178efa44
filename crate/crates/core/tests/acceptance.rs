//! One line per acceptance criterion; exits nonzero if any fails.

use std::time::{Duration, Instant};

use bohrlab::arith::{rat, Rational};
use bohrlab::certificates::{
    build_band_witness, evens_certificate, monte_carlo_disjointness, rotation_certificate, search_min_m,
    verify_certificate, DensityTarget,
};
use bohrlab::bohr::Frequency;
use bohrlab::harmonic::{
    annihilating_cylinder, cylinder_fourier, dft, top_k_characters, translate_coefficient, Character,
    CoefficientTable, GridFunction,
};
use bohrlab::irrational::Surd;
use bohrlab::joinings::{extract_affine_joining, G3ap};
use bohrlab::lab::{
    exp_main_inequality, exp_sqrt_recurrence, ConvergentCheck, Context, MainInequalityParams, Outcome, SetSpec,
    SqrtRecurrenceParams,
};
use bohrlab::roth::{gap_report, measured_kappa, roth_form_direct, roth_form_spectral, QuotientSpec};
use bohrlab::torus::{ApproxHammingBall, TorusPoint};
use bohrlab::weyl::FiniteSystem;
use bohrlab::{LabError, Strategy};
use num_complex::Complex64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lab<T>(r: bohrlab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn complex_grid(rng: &mut ChaCha8Rng, d: usize, q: usize) -> GridFunction {
    GridFunction::from_fn(d, q, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
}

fn annihilation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut batches = 0;
    for r in 1..=12usize {
        for k in 1..=4usize.min(r - 1) {
            let u = ApproxHammingBall::new(TorusPoint::zero(r), k, rat(1, 8)).unwrap();
            for _ in 0..200 {
                let size = rng.random_range(1..=k);
                let chars: Vec<Character> = (0..size)
                    .map(|_| loop {
                        let n: Vec<i64> = (0..r).map(|_| rng.random_range(-6..=6)).collect();
                        if n.iter().any(|&v| v != 0) {
                            break Character::new(n);
                        }
                    })
                    .collect();
                let v = lab(annihilating_cylinder(&u, &chars))?;
                ensure(v.is_subordinate_to(&u), || format!("r={r} k={k}: cylinder not subordinate"))?;
                for chi in &chars {
                    let c = lab(cylinder_fourier(&v, true, chi))?;
                    ensure(c == Complex64::new(0.0, 0.0), || format!("r={r} k={k}: {chi:?} gives {c}"))?;
                    for _ in 0..20 {
                        let s: Vec<i64> = (0..r).map(|_| rng.random_range(0..1000)).collect();
                        let s = TorusPoint::from_numerators(&s, 1000).unwrap();
                        let t = lab(translate_coefficient(c, chi, &s))?;
                        ensure(t == Complex64::new(0.0, 0.0), || format!("r={r} k={k}: translate gives {t}"))?;
                    }
                }
                batches += 1;
            }
        }
    }
    Ok(format!("{batches} batches, all coefficients exactly zero"))
}

fn top_k_residual() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for k in [1usize, 4, 9, 16] {
        for _ in 0..100 {
            let size = rng.random_range(1..80);
            let raw: Vec<(Character, Complex64)> = (0..size)
                .map(|_| {
                    let n = vec![rng.random_range(-20..=20), rng.random_range(-20..=20)];
                    let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    (Character::new(n), z * rng.random_range(0.0f64..1.0).powi(3))
                })
                .collect();
            let mut t = CoefficientTable::new(2);
            for (c, v) in raw {
                lab(t.add_to(c, v))?;
            }
            let norm = t.norm();
            if norm == 0.0 {
                continue;
            }
            let t = t.scaled(1.0 / norm);
            let top = lab(top_k_characters(&t, k, 1.0))?;
            let bound = 1.0 / ((1 + k) as f64).sqrt();
            ensure(top.residual < bound + 1e-12, || format!("k={k}: residual {} >= {bound}", top.residual))?;
            worst = worst.max(top.residual - bound);
        }
    }
    Ok(format!("400 tables, largest residual - bound = {worst:.3e}"))
}

fn plancherel_convolution() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for q in [3usize, 5, 7] {
        for d in [1usize, 2] {
            for _ in 0..100 {
                let (f, g) = (complex_grid(&mut rng, d, q), complex_grid(&mut rng, d, q));
                let (hf, hg) = (dft(&f), dft(&g));
                let inner: Complex64 =
                    f.values().iter().zip(g.values()).map(|(a, b)| a * b.conj()).sum::<Complex64>() / f.len() as f64;
                let spectral: Complex64 = hf.values().iter().zip(hg.values()).map(|(a, b)| a * b.conj()).sum();
                let conv = dft(&lab(f.convolve(&g))?);
                let prod = lab(hf.mul(&hg))?;
                let norm_gap = (f.norm_sq() - hf.values().iter().map(|v| v.norm_sqr()).sum::<f64>()).abs();
                let err = norm_gap.max((inner - spectral).norm()).max(conv.max_abs_diff(&prod));
                ensure(err < 1e-9, || format!("q={q} d={d}: error {err:.3e}"))?;
                worst = worst.max(err);
            }
        }
    }
    Ok(format!("600 trials, max error {worst:.3e}"))
}

fn spectral_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for q in [3usize, 5, 7, 9] {
        for d in [1usize, 2] {
            for _ in 0..100 {
                let (f0, f1, f2) = (complex_grid(&mut rng, d, q), complex_grid(&mut rng, d, q), complex_grid(&mut rng, d, q));
                let a = lab(roth_form_direct(&f0, &f1, &f2, Strategy::Parallel))?;
                let b = lab(roth_form_spectral(&f0, &f1, &f2))?;
                let err = (a - b).norm();
                ensure(err < 1e-9, || format!("q={q} d={d}: |direct - spectral| = {err:.3e}"))?;
                worst = worst.max(err);
            }
        }
    }
    let f = GridFunction::from_real(1, 4, &[1.0, 0.5, 0.0, 0.25]).unwrap();
    ensure(
        matches!(roth_form_spectral(&f, &f, &f), Err(LabError::UnsupportedModulus { q: 4, .. })),
        || "q = 4 was not rejected".into(),
    )?;
    Ok(format!("800 trials, max error {worst:.3e}; q = 4 rejected"))
}

fn quotient_gap() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = lab(QuotientSpec::axes(5, 2, &[1]))?;
    let mut tightest = f64::INFINITY;
    for trial in 0..200 {
        let (f0, f1, f2) = (complex_grid(&mut rng, 2, 5), complex_grid(&mut rng, 2, 5), complex_grid(&mut rng, 2, 5));
        let (kappa, _) = lab(measured_kappa(&f2, &k))?;
        let rep = lab(gap_report(&f0, &f1, &f2, &k, kappa))?;
        let bound = kappa * f0.norm() * f1.norm();
        ensure(rep.gap <= bound + 1e-9, || format!("trial {trial}: gap {} > {bound}", rep.gap))?;
        tightest = tightest.min(bound - rep.gap);
    }
    Ok(format!("200 trials, smallest margin {tightest:.3e}"))
}

fn affine_averaging() -> Verdict {
    let u_of = |alpha: Rational, beta: &[Rational]| {
        let mut v = vec![Rational::zero(), alpha.clone(), Rational::zero(), alpha * rat(4, 1)];
        v.extend(beta.iter().cloned());
        TorusPoint::new(v).unwrap()
    };
    let regimes: [(&str, Rational, Vec<Rational>); 5] = [
        ("beta = alpha", rat(1, 5), vec![rat(1, 5)]),
        ("distinct orders", rat(1, 4), vec![rat(1, 5)]),
        ("zero", rat(0, 1), vec![rat(0, 1)]),
        ("commensurable", rat(1, 8), vec![rat(3, 8)]),
        ("jointly generic", rat(1, 5), vec![rat(2, 5), rat(1, 2)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    for (name, alpha, beta) in regimes {
        let r = beta.len();
        let g3 = lab(G3ap::new(1, r))?;
        let c = lab(g3.point(&TorusPoint::new(vec![rat(1, 7)]).unwrap(), &TorusPoint::new(vec![rat(1, 9)]).unwrap()))?;
        let u = u_of(alpha, &beta);
        let ex = lab(extract_affine_joining(&c, &u, 1, r))?;
        ensure(ex.period <= 2000, || format!("{name}: period {} above 2000", ex.period))?;
        for _ in 0..20 {
            let f: Vec<(Vec<i64>, Rational)> = (0..5)
                .map(|_| {
                    let m: Vec<i64> = (0..4 + r).map(|_| rng.random_range(-2..=2)).collect();
                    (m, rat(rng.random_range(-9..=9), rng.random_range(1..=6)))
                })
                .collect();
            let chk = lab(ex.check(&f))?;
            ensure(chk.phi_exact, || format!("{name}: coset form differs from the orbit average"))?;
            ensure(chk.gamma_exact == Some(true), || format!("{name}: joining form {:?}", chk.gamma_exact))?;
            checked += 1;
        }
    }
    Ok(format!("5 regimes, {checked} polynomials, exact equality"))
}

fn main_inequality() -> Verdict {
    let ctx = Context::new(7, Strategy::Parallel);
    let mut lines = Vec::new();
    for (k, q) in [(4usize, 101u64), (9, 103)] {
        let p = MainInequalityParams {
            q,
            k,
            functions: 10,
            convergent: Some(ConvergentCheck::default()),
            ..Default::default()
        };
        let mut rep = lab(exp_main_inequality(&p, &ctx))?;
        rep.settle();
        let exact: Vec<_> = rep.checks.iter().filter(|c| c.exact && c.name.contains("<=")).collect();
        let empirical: Vec<_> = rep.checks.iter().filter(|c| !c.exact).collect();
        ensure(exact.len() == 10, || format!("k={k}: {} exact inequality checks", exact.len()))?;
        ensure(!empirical.is_empty(), || format!("k={k}: no convergent checks"))?;
        if let Some(c) = rep.failed_checks().next() {
            return Err(format!("k={k}: {} failed (value {}, bound {})", c.name, c.value, c.bound));
        }
        let min_exact = exact.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        let min_conv = empirical.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        lines.push(format!("k={k} q={q}: exact margin >= {min_exact:.3e}, convergent margin >= {min_conv:.3e}"));
    }
    Ok(lines.join("; "))
}

fn certificates() -> Verdict {
    let s = Strategy::Parallel;
    let evens = lab(evens_certificate(100_000, rat(1, 2), s))?;
    ensure(verify_certificate(&evens, s).valid, || "evens certificate fails".into())?;
    let small = lab(evens_certificate(100, rat(1, 2), s))?;
    let res = lab(search_min_m(&small, &small, 10, DensityTarget::Paper, s))?;
    ensure(res.m == 3, || format!("search returned m = {}", res.m))?;
    ensure(verify_certificate(&res.certificate, s).valid, || "combined certificate fails".into())?;
    ensure(res.failures.iter().any(|f| f.m == 2 && f.proven), || "m = 2 not proven impossible".into())?;
    let band = lab(build_band_witness(1, &rat(1, 4), 6))?;
    let beta: Vec<Surd> = [2, 3, 5, 7, 11, 13].into_iter().take(band.witness.r).map(Surd::sqrt).collect();
    let freq = lab(Frequency::from_surds(&beta, 1_000_003))?;
    let rot = lab(rotation_certificate(&band.witness, &band.ball, &freq, 100_000, s))?;
    let v = verify_certificate(&rot, s);
    ensure(v.valid && v.first_violation.is_none(), || format!("rotation certificate: {v}"))?;
    ensure(!rot.s.is_empty(), || "rotation certificate has empty S".into())?;
    Ok(format!(
        "evens ok; search m = 3 (m = 2 proven); rotation r = {}, |S| = {}, |B|/N = {:.4}, 0 violations",
        band.witness.r,
        rot.s.len(),
        rot.b.count() as f64 / rot.n as f64
    ))
}

fn band_witness() -> Verdict {
    let mut lines = Vec::new();
    for k in [1usize, 2] {
        for eta in [rat(1, 4), rat(2, 5)] {
            let b = lab(build_band_witness(k, &eta, 64))?;
            let w = &b.witness;
            ensure(b.measure > eta, || format!("k={k}: m(E) = {} not above eta", b.measure))?;
            ensure(w.r > 2 * w.t + k, || format!("k={k}: r = {}, t = {}", w.r, w.t))?;
            ensure(b.conditions.holds, || format!("k={k}: {:?}", b.conditions))?;
            let mc = lab(monte_carlo_disjointness(w, &b.ball, 100_000, 9, Strategy::Parallel))?;
            ensure(mc.hits == 0, || format!("k={k} eta={eta}: {} hits", mc.hits))?;
            lines.push(format!("k={k} eta={eta}: r={} t={} hits=0 z={:.2}", w.r, w.t, mc.z_score));
        }
    }
    Ok(lines.join("; "))
}

fn sqrt_recurrence() -> Verdict {
    let ctx = Context::new(10, Strategy::Parallel);
    let models = [
        ("rotation Z_101", FiniteSystem::Rotation { q: 101, shift: vec![7] }, rat(2, 5)),
        ("Weyl Z_31^2", FiniteSystem::Weyl { q: 31, alpha: vec![5] }, rat(1, 2)),
    ];
    let mut lines = Vec::new();
    for (name, system, density) in models {
        let p = SqrtRecurrenceParams {
            system,
            set: SetSpec::Random { density },
            delta: rat(3, 10),
            ..Default::default()
        };
        let mut rep = lab(exp_sqrt_recurrence(&p, &ctx))?;
        rep.settle();
        ensure(rep.metrics["proper"] == true, || format!("{name}: ball not proper"))?;
        let pos = rep
            .checks
            .iter()
            .find(|c| c.exact && c.name.contains("T^n != id"))
            .ok_or_else(|| format!("{name}: no positivity check"))?;
        ensure(pos.passed && rep.outcome == Outcome::Pass, || format!("{name}: {}", pos.detail))?;
        let mu = rep.metrics["measure_A"].as_str().ok_or("no measure of A")?;
        ensure(lab(bohrlab::arith::parse_rational(mu))? >= rat(3, 10), || format!("{name}: mu(A) = {mu}"))?;
        lines.push(format!("{name}: mu(A) = {}, {}", rep.metrics["measure_A"], pos.detail));
    }
    Ok(lines.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, u64); 10] = [
        ("annihilation exactness", annihilation, 10),
        ("top-k residual", top_k_residual, 5),
        ("Plancherel and convolution", plancherel_convolution, 10),
        ("3AP spectral identity", spectral_identity, 10),
        ("quotient gap bound", quotient_gap, 10),
        ("affine-joining averaging", affine_averaging, 60),
        ("main inequality", main_inequality, 300),
        ("certificate suite", certificates, 30),
        ("band witness", band_witness, 60),
        ("sqrt(BH) recurrence", sqrt_recurrence, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let took = start.elapsed();
        let verdict = match verdict {
            Ok(msg) if took > Duration::from_secs(limit) => Err(format!("{msg}; over the {limit} s budget")),
            v => v,
        };
        match verdict {
            Ok(msg) => println!("criterion {:>2} PASS {name} ({:.2} s): {msg}", i + 1, took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({:.2} s): {msg}", i + 1, took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of 10 criteria pass", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
