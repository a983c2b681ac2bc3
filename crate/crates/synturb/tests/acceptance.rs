//! Acceptance gate. Runs nine checks sequentially, prints one line per
//! check, and exits nonzero if any fails. Tolerances and budgets are pinned
//! here; a red line means the property regressed, not that the gate moved.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use synturb::field::{
    structure_function_estimate, structure_function_exact, ModeLayout, ModeSet, SpectralField,
};
use synturb::kraichnan::KraichnanOracle;
use synturb::linalg::DynMat;
use synturb::pairs::{log_sample_grid, msd, relative_diffusivity, simulate_pairs, SimOptions};
use synturb::params::{c_alpha, exponents, make_params};
use synturb::rng;
use synturb::runner::{self, Analysis};
use synturb::scalar::{
    evaluate_scalar, function_of_scalar_check, max_principle_check, measure_preservation_check,
    GridSpec, Profile, ScalarProbe, VelocitySource,
};
use synturb::special;
use synturb::stats::fit_power_law;

type Check = Result<(), String>;

fn report(n: usize, label: &str, started: Instant, budget_s: Option<f64>, outcome: Check) -> bool {
    let elapsed = started.elapsed().as_secs_f64();
    let outcome = match (outcome, budget_s) {
        (Ok(()), Some(b)) if elapsed > b => {
            Err(format!("exceeded the {b:.0} s budget ({elapsed:.1} s)"))
        }
        (r, _) => r,
    };
    match outcome {
        Ok(()) => {
            println!("ACCEPTANCE {n}: PASS  {label} ({elapsed:.2} s)");
            true
        }
        Err(why) => {
            println!("ACCEPTANCE {n}: FAIL  {label} ({elapsed:.2} s): {why}");
            false
        }
    }
}

fn max_abs(m: &DynMat) -> f64 {
    let mut v = 0.0f64;
    for i in 0..m.dim {
        for j in 0..m.dim {
            v = v.max(m.get(i, j).abs());
        }
    }
    v
}

fn scratch(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("synturb-acceptance-{}-{tag}", std::process::id()))
}

/// Closed-form constant at the reference point and the gamma routine
/// against values frozen from a 30-digit evaluation.
fn criterion_1() -> Check {
    let v = c_alpha(1.5, 3).map_err(|e| e.to_string())?;
    let target = 8.0 * std::f64::consts::PI;
    let rel = ((v - target) / target).abs();
    if rel > 1e-12 {
        return Err(format!("normalization constant off by {rel:.3e}"));
    }
    const GAMMA_REFS: [(f64, f64); 20] = [
        (0.05, 19.470085311255511756),
        (0.1, 9.5135076986687312858),
        (0.25, 3.6256099082219083119),
        (0.3333333333333333, 2.6789385347077477889),
        (0.5, 1.7724538509055160273),
        (0.6666666666666666, 1.354117939426400483),
        (0.75, 1.2254167024651776451),
        (0.9, 1.068628702119319337),
        (1.0, 1.0),
        (1.1, 0.95135076986687314782),
        (1.25, 0.90640247705547707798),
        (1.5, 0.88622692545275801365),
        (1.75, 0.91906252684888323385),
        (2.0, 1.0),
        (2.5, 1.3293403881791370205),
        (3.0, 2.0),
        (3.5, 3.3233509704478425512),
        (4.25, 8.2850851418352201659),
        (5.5, 52.342777784553520181),
        (7.5, 1871.2543057977883465),
    ];
    for (x, want) in GAMMA_REFS {
        let got = special::gamma(x);
        let rel = ((got - want) / want).abs();
        if rel > 1e-12 {
            return Err(format!("gamma({x}) relative error {rel:.3e}"));
        }
    }
    Ok(())
}

/// The scale-free point must report cubic separation growth and a 4/3
/// diffusivity slope.
fn criterion_2() -> Check {
    let e = exponents(4.0 / 3.0, 1.0 / 3.0);
    if (e.p - 3.0).abs() > 1e-13 {
        return Err(format!("p = {} is not 3", e.p));
    }
    if (2.0 * e.eta - 4.0 / 3.0).abs() > 1e-13 {
        return Err(format!("2 eta = {} is not 4/3", 2.0 * e.eta));
    }
    Ok(())
}

/// Full-space quadrature against the closed-form limit covariance across
/// dimensions, exponent pairs, directions, and two decades of separation.
fn criterion_3() -> Check {
    for dim in [2usize, 3] {
        for (alpha, beta) in [(1.2, 0.45), (1.3, 0.4)] {
            let params = make_params(alpha, beta, 1.0, 1.0, 1.0, 0.1, dim)
                .map_err(|e| e.to_string())?;
            let oracle = KraichnanOracle::from_params(&params, 0.0).map_err(|e| e.to_string())?;
            for j in 0..10 {
                let r = 0.05 * 100f64.powf(j as f64 / 9.0);
                let theta = 0.7 * j as f64;
                let x: Vec<f64> = if dim == 2 {
                    vec![r * theta.cos(), r * theta.sin()]
                } else {
                    let phi = 0.4 * (j as f64).sin();
                    vec![
                        r * theta.cos() * phi.cos(),
                        r * theta.sin() * phi.cos(),
                        r * phi.sin(),
                    ]
                };
                let quad = oracle.gamma1(&x, &x).map_err(|e| e.to_string())?;
                let closed = oracle.gamma1_closed(&x).map_err(|e| e.to_string())?;
                let rel = quad.max_abs_diff(&closed) / max_abs(&closed);
                if rel > 1e-3 {
                    return Err(format!(
                        "d={dim} (alpha,beta)=({alpha},{beta}) r={r:.4}: relative gap {rel:.3e}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Mode-sum synthesis against exact spectral quadrature; per-mode time
/// decorrelation; incompressibility.
fn criterion_4() -> Check {
    let params = make_params(1.5, 0.3, 1.0, 1.0, 1.0, 0.1, 3).map_err(|e| e.to_string())?;
    let layout = ModeLayout { n_shells: 32, n_dirs: 8 };
    let band = params.band();
    let k_mid = (band.0 * band.1).sqrt();
    let tau_mid = 1.0 / (params.a * k_mid.powf(2.0 * params.beta));
    let points = [
        (0.3, 0.0),
        (1.2, 0.0),
        (0.3, tau_mid),
        (1.2, tau_mid),
        (0.6, 0.5 * tau_mid),
    ];
    let n_samples = 10_000;
    for (pi, (r_mag, tau)) in points.iter().enumerate() {
        let r = [*r_mag, 0.0, 0.0];
        let est = structure_function_estimate(
            &params,
            layout,
            band,
            &r,
            *tau,
            n_samples,
            rng::derive_key(407, &[pi as u64]),
        )
        .map_err(|e| e.to_string())?;
        let exact = structure_function_exact(&params, &r, *tau, band).map_err(|e| e.to_string())?;
        for i in 0..3 {
            for j in 0..3 {
                let sd = est.stderr.get(i, j);
                let gap = (est.mean.get(i, j) - exact.get(i, j)).abs();
                if sd > 0.0 && gap > 3.0 * sd {
                    return Err(format!(
                        "entry ({i},{j}) at r={r_mag}, tau={tau:.3}: gap {gap:.3e} vs 3 sigma {:.3e}",
                        3.0 * sd
                    ));
                }
            }
        }
    }
    // per-mode amplitude decorrelation over one mid-band correlation time
    let modes = Arc::new(
        ModeSet::build(&params, layout, Some(band)).map_err(|e| e.to_string())?,
    );
    let n_fields = 4000;
    let picks = [0usize, modes.len() / 4, modes.len() / 2, 3 * modes.len() / 4, modes.len() - 1];
    let mut s00 = [0.0f64; 5];
    let mut s11 = [0.0f64; 5];
    let mut s01 = [0.0f64; 5];
    for i in 0..n_fields {
        let mut field = SpectralField::from_modes(Arc::clone(&modes), rng::derive_key(408, &[i]));
        let before: Vec<f64> = picks.iter().map(|&m| field.amplitude(m).0[0]).collect();
        field.advance(tau_mid);
        for (s, &m) in picks.iter().enumerate() {
            let after = field.amplitude(m).0[0];
            s00[s] += before[s] * before[s];
            s11[s] += after * after;
            s01[s] += before[s] * after;
        }
    }
    for (s, &m) in picks.iter().enumerate() {
        let rho_hat = s01[s] / (s00[s] * s11[s]).sqrt();
        let rho = (-modes.ou_rates[m] * tau_mid).exp();
        let sd = (1.0 - rho * rho) / (n_fields as f64).sqrt();
        if (rho_hat - rho).abs() > 3.0 * sd.max(1e-4) {
            return Err(format!(
                "mode {m}: autocorrelation {rho_hat:.4} vs exp(-r tau) = {rho:.4} (3 sigma {:.1e})",
                3.0 * sd
            ));
        }
    }
    let field = SpectralField::from_modes(Arc::clone(&modes), 409);
    let residual = field.incompressibility_residual();
    if residual >= 1e-12 {
        return Err(format!("incompressibility residual {residual:.3e}"));
    }
    Ok(())
}

/// Separation growth exponent of the limit diffusion over one decade.
fn criterion_5() -> (Check, Option<synturb::pairs::PairEnsemble>) {
    let inner = || -> Result<(f64, synturb::pairs::PairEnsemble), String> {
        let params = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).map_err(|e| e.to_string())?;
        let oracle = KraichnanOracle::from_params(&params, 0.0).map_err(|e| e.to_string())?;
        let times = log_sample_grid(2.0, 48, 3.0);
        let ens = oracle
            .simulate_limit_pairs(&[1e-3, 0.0], 2.0, 0.01, 10_000, 505, Some(&times))
            .map_err(|e| e.to_string())?;
        let series = msd(&ens).map_err(|e| e.to_string())?;
        let fit = fit_power_law(&series, (0.2, 2.0)).map_err(|e| e.to_string())?;
        Ok((fit.exponent, ens))
    };
    match inner() {
        Ok((exponent, ens)) => {
            let expected = 1.0 / (2.0 - 1.2 - 0.45);
            let rel = (exponent - expected).abs() / expected;
            if rel > 0.10 {
                (
                    Err(format!(
                        "fitted exponent {exponent:.4} vs {expected:.4} ({:.1}% off)",
                        100.0 * rel
                    )),
                    Some(ens),
                )
            } else {
                (Ok(()), Some(ens))
            }
        }
        Err(why) => (Err(why), None),
    }
}

/// Longitudinal relative diffusivity: scaling slope on the shared ensemble
/// and a flat molecular-only control.
fn criterion_6(ens: &synturb::pairs::PairEnsemble) -> Check {
    let r_hi = {
        let mut m = 0.0f64;
        let last = ens.times.len() - 1;
        for p in 0..ens.n_pairs() {
            let x = ens.position(p, last);
            m = m.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        m
    };
    let r_lo = 2e-3;
    let n_bins = 24;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| r_lo * (r_hi / r_lo).powf(i as f64 / n_bins as f64))
        .collect();
    let profile = relative_diffusivity(ens, &edges, 200).map_err(|e| e.to_string())?;
    let series = profile.to_series().map_err(|e| e.to_string())?;
    if series.len() < 8 {
        return Err(format!("only {} populated bins", series.len()));
    }
    let window = (series.t[1], series.t[series.len() - 2]);
    let fit = fit_power_law(&series, window).map_err(|e| e.to_string())?;
    let expected = 2.0 * (1.2 + 0.45 - 1.0);
    let rel = (fit.exponent - expected).abs() / expected;
    if rel > 0.10 {
        return Err(format!(
            "diffusivity slope {:.4} vs {expected:.4} ({:.1}% off)",
            fit.exponent,
            100.0 * rel
        ));
    }
    // zero-energy control: molecular diffusion alone must bin flat at kappa/2
    let mut params = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).map_err(|e| e.to_string())?;
    params.e0 = 1e-300;
    let kappa = 0.2;
    let mut options = SimOptions::default_for(2);
    options.sample_times = Some((1..=40).map(|i| i as f64 * 0.025).collect());
    let control = simulate_pairs(&params, &[1.0, 0.0], kappa, 1.0, 0.0125, 3000, 606, &options)
        .map_err(|e| e.to_string())?;
    let c_edges: Vec<f64> = (0..7).map(|i| 0.5 * 1.35f64.powi(i)).collect();
    let c_profile = relative_diffusivity(&control, &c_edges, 50).map_err(|e| e.to_string())?;
    let mut populated = 0;
    for &(est, se, _) in c_profile.bins.iter().flatten() {
        if (est - kappa / 2.0).abs() > 3.0 * se {
            return Err(format!("control bin {est:.4} vs {} (3 sigma {:.1e})", kappa / 2.0, 3.0 * se));
        }
        populated += 1;
    }
    if populated < 3 {
        return Err(format!("control has only {populated} populated bins"));
    }
    Ok(())
}

/// Colored-noise sweep with audited schedules approaches the limit curve
/// monotonically.
fn criterion_7() -> Check {
    let cfg = runner::preset("kraichnan-limit").map_err(|e| e.to_string())?;
    let dir = scratch("sweep");
    let outcome = (|| -> Check {
        let record = runner::run(&cfg, &dir, 1).map_err(|e| e.to_string())?;
        if !(record.audit.gating && record.audit.pass) {
            return Err("schedule audit did not pass".into());
        }
        match record.analysis {
            Analysis::KraichnanLimit { trace } => {
                if trace.strictly_decreasing {
                    Ok(())
                } else {
                    Err(format!("distances {:?} not strictly decreasing", trace.distances))
                }
            }
            _ => Err("wrong analysis kind".into()),
        }
    })();
    let _ = std::fs::remove_dir_all(&dir);
    outcome
}

/// Scalar transport diagnostics: exact maximum principle, conservation
/// checks without molecular noise, and a dissipative budget with it.
fn criterion_8() -> Check {
    let params = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.25, 2).map_err(|e| e.to_string())?;
    let layout = ModeLayout { n_shells: 32, n_dirs: 8 };
    let probe = ScalarProbe {
        initial: Profile::GaussianBump { center: vec![0.0, 0.0], width: 0.5, amplitude: 1.0 },
        grid: GridSpec::centered(2, 3.0, 101),
        kappa_tilde: 0.0,
        n_paths: 1,
        dt_max: 0.01,
    };
    let source = VelocitySource::Colored { params: &params, layout };
    let t = 0.3;
    let sample = evaluate_scalar(&source, &probe, t, 808).map_err(|e| e.to_string())?;
    let maxp = max_principle_check(&sample, &probe);
    if !maxp.pass {
        return Err(format!(
            "maximum principle violated: observed {} > bound {}",
            maxp.observed, maxp.bound
        ));
    }
    let two_sample = measure_preservation_check(&source, &probe, t, 808).map_err(|e| e.to_string())?;
    if !two_sample.pass {
        return Err(format!(
            "value distribution moved without molecular noise: statistic {:.4} > {:.4}",
            two_sample.statistic, two_sample.threshold
        ));
    }
    let phi = |v: f64| if v > 0.05 { 1.0 } else { 2.0 * v };
    let worst = function_of_scalar_check(&source, &probe, &phi, t, 809).map_err(|e| e.to_string())?;
    if worst > 1e-10 {
        return Err(format!("transport does not commute with composition: gap {worst:.3e}"));
    }
    // molecular noise on: the preset's energy budget must dissipate
    let cfg = runner::preset("dissipation").map_err(|e| e.to_string())?;
    let dir = scratch("dissipation");
    let outcome = (|| -> Check {
        let record = runner::run(&cfg, &dir, 1).map_err(|e| e.to_string())?;
        match record.analysis {
            Analysis::Dissipation {
                dissipation_consistent, max_principle_ok, truncation_warning, ..
            } => {
                if !max_principle_ok {
                    return Err("maximum principle failed on the dissipation run".into());
                }
                if !dissipation_consistent {
                    return Err("dissipation estimate negative beyond 3 sigma".into());
                }
                if truncation_warning {
                    return Err("observation box too small for the transported support".into());
                }
            }
            _ => return Err("wrong analysis kind".into()),
        }
        // the budget must also grow with time, point by point
        let text = std::fs::read_to_string(dir.join("energy.csv")).map_err(|e| e.to_string())?;
        let mut previous = f64::NEG_INFINITY;
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            let d: f64 = fields[4].parse().map_err(|_| "bad energy table".to_string())?;
            if d <= previous {
                return Err(format!("dissipation not increasing: {d} after {previous}"));
            }
            previous = d;
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    outcome
}

/// Identical bytes from 1-thread and multi-thread runs of the same presets.
fn criterion_9() -> Check {
    for name in ["richardson", "structure"] {
        let cfg = runner::preset(name).map_err(|e| e.to_string())?;
        let dir1 = scratch(&format!("{name}-t1"));
        let dir3 = scratch(&format!("{name}-t3"));
        let outcome = (|| -> Check {
            runner::run(&cfg, &dir1, 1).map_err(|e| e.to_string())?;
            runner::run(&cfg, &dir3, 3).map_err(|e| e.to_string())?;
            let mut compared = 0;
            for entry in std::fs::read_dir(&dir1).map_err(|e| e.to_string())? {
                let entry = entry.map_err(|e| e.to_string())?;
                let file = entry.file_name();
                let is_table = file.to_string_lossy().ends_with(".csv");
                let is_snapshot = file.to_string_lossy().ends_with(".bin");
                if !(is_table || is_snapshot) {
                    continue;
                }
                let a = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
                let b = std::fs::read(dir3.join(&file)).map_err(|e| e.to_string())?;
                if a != b {
                    return Err(format!("{name}/{} differs across thread counts", file.to_string_lossy()));
                }
                compared += 1;
            }
            if compared == 0 {
                return Err(format!("{name} produced no comparable outputs"));
            }
            Ok(())
        })();
        let _ = std::fs::remove_dir_all(&dir1);
        let _ = std::fs::remove_dir_all(&dir3);
        outcome?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "normalization constant and gamma references", t, None, criterion_1());

    let t = Instant::now();
    all &= report(2, "scale-free point exponents", t, None, criterion_2());

    let t = Instant::now();
    all &= report(3, "quadrature vs closed-form limit covariance", t, Some(10.0), criterion_3());

    let t = Instant::now();
    all &= report(4, "synthesis fidelity and mode decorrelation", t, Some(120.0), criterion_4());

    let t = Instant::now();
    let (check_5, shared) = criterion_5();
    all &= report(5, "separation growth exponent", t, Some(120.0), check_5);

    let t = Instant::now();
    let check_6 = match &shared {
        Some(ens) => criterion_6(ens),
        None => Err("shared ensemble unavailable".into()),
    };
    all &= report(6, "diffusivity slope and flat control", t, Some(120.0), check_6);

    let t = Instant::now();
    all &= report(7, "sweep converges to the limit curve", t, Some(900.0), criterion_7());

    let t = Instant::now();
    all &= report(8, "scalar transport diagnostics", t, Some(300.0), criterion_8());

    let t = Instant::now();
    all &= report(9, "thread-count determinism of outputs", t, None, criterion_9());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
