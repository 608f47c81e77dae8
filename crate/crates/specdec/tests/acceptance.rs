//! Acceptance suite: one test per system-level criterion, each printing a
//! PASS line with its measured margin (run with `--nocapture` to see them).
//!
//! Two checks are known to fail at desk scale and are kept red on purpose;
//! see `annealing_sweep_dominance` and `lantern_gstar_improvement` for the
//! measured numbers. Every other criterion passes with wide margins.

use std::time::Instant;

use specdec::config::MethodSpec;
use specdec::exact::{
    brute_force_optimal_resample, exact_expected_accepted, exact_output_dist_with, joint_dist,
    lp_objective, output_dist_by_closed_form, output_dist_by_paths, perturbation_experiment,
    second_position_stats, tv_exact, tvb_upper_bound, verify_proposition1,
};
use specdec::model::{check_closeness, ArModel};
use specdec::rules::{Acceptance, AcceptanceRule, ResamplingRule};
use specdec::runner::{run_sweep, sweep_csv};
use specdec::schedule::Schedule;
use specdec::{config::ExperimentConfig, decode::SdConfig, simulate, Error};

fn pass(name: &str, detail: &str) {
    println!("ACCEPT {name}: PASS ({detail})");
}

/// The shared 100-pair stream: V cycles over 2..=5 and L over 1..=3.
fn pair_stream(s: u64) -> (ArModel, ArModel, usize) {
    let v = [2usize, 3, 4, 5][(s % 4) as usize];
    let l = [1usize, 2, 3][(s % 3) as usize];
    let p = ArModel::random(v, l + 1, 1.0, 50_000 + 2 * s).unwrap();
    let q = ArModel::random(v, l + 1, 1.0, 50_001 + 2 * s).unwrap();
    (p, q, l)
}

#[test]
fn losslessness() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for s in 0..100 {
        let (p, q, l) = pair_stream(s);
        let out = exact_output_dist_with(
            &p,
            &q,
            l,
            &AcceptanceRule::Vanilla,
            &ResamplingRule::VanillaResidual,
        )
        .unwrap();
        let tv = tv_exact(&out, &joint_dist(&p, l + 1).unwrap()).unwrap();
        worst = worst.max(tv);
    }
    assert!(worst <= 1e-12, "worst TV {worst} exceeds 1e-12");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 30, "runtime budget exceeded: {elapsed:?}");
    pass(
        "losslessness",
        &format!("worst_tv={worst:.2e} over 100 pairs in {elapsed:?}"),
    );
}

#[test]
fn bound_soundness_and_tightness() {
    let started = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_vanilla = 0.0f64;
    let mut configs = 0u64;
    for s in 0..100 {
        let (p, q, l) = pair_stream(s);
        worst_vanilla = worst_vanilla.max(
            tvb_upper_bound(
                &p,
                &q,
                &AcceptanceRule::Vanilla,
                &ResamplingRule::VanillaResidual,
                l,
            )
            .unwrap(),
        );
        for &delta in &[1.0, 1.5, 2.0, 3.0] {
            for exp in [false, true] {
                let schedule = if exp {
                    Schedule::exponential(delta, 0.7, l).unwrap()
                } else {
                    Schedule::uniform(delta, l).unwrap()
                };
                let acc = AcceptanceRule::MultiplicativeRelax(schedule);
                let res = ResamplingRule::OptimalGStar;
                let out = exact_output_dist_with(&p, &q, l, &acc, &res).unwrap();
                let tv = tv_exact(&out, &joint_dist(&p, l + 1).unwrap()).unwrap();
                let tvb = tvb_upper_bound(&p, &q, &acc, &res, l).unwrap();
                worst_gap = worst_gap.max(tv - tvb);
                configs += 1;
            }
        }
    }
    assert!(worst_gap <= 1e-10, "soundness gap {worst_gap}");
    assert!(worst_vanilla <= 1e-12, "vanilla bound {worst_vanilla}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 120, "runtime budget exceeded: {elapsed:?}");
    pass(
        "bound-soundness",
        &format!(
            "worst tv-tvb={worst_gap:.2e} over {configs} configs; worst vanilla tvb={worst_vanilla:.2e}; {elapsed:?}"
        ),
    );
}

#[test]
fn expected_length_formula() {
    let started = Instant::now();
    let n_rounds = 100_000;
    let mut worst_z = 0.0f64;
    for s in 0..20u64 {
        let v = [2usize, 3, 4][(s % 3) as usize];
        let l = [1usize, 2][(s % 2) as usize];
        let p = ArModel::random(v, l + 1, 1.0, 60_000 + 2 * s).unwrap();
        let q = ArModel::random(v, l + 1, 1.0, 60_001 + 2 * s).unwrap();
        let method = match s % 5 {
            0 => MethodSpec::Vanilla,
            1 => MethodSpec::Uniform { delta: 1.5 },
            2 => MethodSpec::Uniform { delta: 2.5 },
            3 => MethodSpec::CoolExp {
                delta: 1.5,
                nu: 0.7,
            },
            _ => MethodSpec::Lantern {
                k: 1.max(v / 2).min(v - 1),
                lambda: 1.0,
                embed_seed: 700 + s,
            },
        };
        let (acc, res) = method.build_rules(l, v).unwrap();
        let exact = exact_expected_accepted(&p, &q, &acc, l).unwrap();
        let cfg = SdConfig::new(l, acc, res, 81_000 + s);
        let sim = simulate(&p, &q, &cfg, n_rounds).unwrap();
        if sim.stderr_accepted_len == 0.0 {
            assert!(
                (exact - sim.mean_accepted_len).abs() <= 1e-9,
                "config {s}: zero-variance mismatch"
            );
        } else {
            let z = (exact - sim.mean_accepted_len).abs() / sim.stderr_accepted_len;
            worst_z = worst_z.max(z);
            assert!(
                z <= 3.0,
                "config {s}: exact {exact} vs MC {} (z = {z:.2})",
                sim.mean_accepted_len
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 120, "runtime budget exceeded: {elapsed:?}");
    pass(
        "expected-length",
        &format!("worst |z|={worst_z:.2} over 20 configs x {n_rounds} rounds in {elapsed:?}"),
    );
}

#[test]
fn gstar_optimality() {
    use rand::{Rng, SeedableRng};
    let started = Instant::now();
    let step = 0.005;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(90_000);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_identity = 0.0f64;
    for _ in 0..50 {
        let p = ArModel::random(3, 1, 1.0, rng.random()).unwrap();
        let q = ArModel::random(3, 1, 1.0, rng.random()).unwrap();
        let p_row = p.cond_row(&[]).unwrap();
        let q_row = q.cond_row(&[]).unwrap();
        let f_row: Vec<f64> = (0..3)
            .map(|t| {
                let f_van = specdec::safe_ratio(p_row[t], q_row[t]).min(1.0);
                f_van + rng.random::<f64>() * (1.0 - f_van)
            })
            .collect();
        let g = specdec::resample_dist_gstar(&p, &q, &[], &f_row).unwrap();
        let analytic = lp_objective(p_row, q_row, &f_row, &g);
        let brute = brute_force_optimal_resample(p_row, q_row, &f_row, step).unwrap();
        worst_excess = worst_excess.max(analytic - (brute.best_objective + 3.0 * step));
        let reduced: f64 = (0..3)
            .map(|t| (p_row[t] - q_row[t] * f_row[t]).abs())
            .sum::<f64>()
            - (0..3).map(|t| (1.0 - f_row[t]) * q_row[t]).sum::<f64>();
        worst_identity = worst_identity.max((analytic - reduced).abs());
    }
    assert!(worst_excess <= 0.0, "analytic exceeds grid + slack by {worst_excess}");
    assert!(worst_identity <= 1e-12, "identity gap {worst_identity}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 60, "runtime budget exceeded: {elapsed:?}");
    pass(
        "gstar-optimality",
        &format!(
            "worst excess={worst_excess:.2e}, worst identity gap={worst_identity:.2e} over 50 triples in {elapsed:?}"
        ),
    );
}

#[test]
fn proposition1_gstar_equals_vanilla_residual() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(91_000);
    let mut worst = 0.0f64;
    let mut prefixes = 0u64;
    for s in 0..100 {
        let (p, q, l) = pair_stream(s);
        let schedule = if s % 2 == 0 {
            Schedule::uniform(1.0 + 2.0 * rng.random::<f64>(), l).unwrap()
        } else {
            // Exponential with the budget scaled so even the last weight
            // stays at or above one.
            let nu = 0.2 + 0.8 * rng.random::<f64>();
            let probe = Schedule::exponential(1.0, nu, l).unwrap();
            let min_omega = probe.omegas().iter().cloned().fold(f64::INFINITY, f64::min);
            let delta = (1.0 / min_omega) * (1.0 + rng.random::<f64>());
            Schedule::exponential(delta, nu, l).unwrap()
        };
        assert!(schedule.omegas().iter().all(|&w| w >= 1.0));
        let acc = AcceptanceRule::MultiplicativeRelax(schedule);
        for len in 0..l {
            for idx in 0..p.vocab_size().pow(len as u32) {
                let prefix: Vec<specdec::TokenId> = (0..len)
                    .rev()
                    .scan(idx, |rest, _| {
                        let t = *rest % p.vocab_size();
                        *rest /= p.vocab_size();
                        Some(specdec::TokenId(t as u32))
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .collect();
                match verify_proposition1(&p, &q, &acc, &prefix) {
                    Ok(diff) => {
                        worst = worst.max(diff);
                        prefixes += 1;
                    }
                    Err(Error::DegenerateResidual) => {}
                    Err(e) => panic!("unexpected error: {e}"),
                }
            }
        }
    }
    assert!(worst <= 1e-12, "worst |G* - G_van| = {worst}");
    pass(
        "proposition1",
        &format!("worst |G* - G_van|={worst:.2e} over {prefixes} prefixes, 100 models"),
    );
}

#[test]
fn appendix_self_consistency() {
    let mut worst = 0.0f64;
    for s in 0..50u64 {
        let (p, q, l) = pair_stream(s + 31);
        let v = p.vocab_size();
        let method = match s % 6 {
            0 => MethodSpec::Vanilla,
            1 => MethodSpec::Uniform { delta: 2.0 },
            2 => MethodSpec::CoolExp {
                delta: 1.5,
                nu: 0.7,
            },
            3 => MethodSpec::CoolLinear { delta: 1.2, ell: 8 },
            4 => MethodSpec::Lantern {
                k: (v - 1).min(2),
                lambda: 1.0,
                embed_seed: s,
            },
            _ => MethodSpec::LanternGstar {
                k: (v - 1).min(2),
                lambda: 2.0,
                embed_seed: s,
            },
        };
        let (acc, res) = method.build_rules(l, v).unwrap();
        let a = output_dist_by_paths(&p, &q, l, &acc, &res).unwrap();
        let b = output_dist_by_closed_form(&p, &q, l, &acc, &res).unwrap();
        let diff = a
            .probs()
            .iter()
            .zip(b.probs())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(diff);
    }
    assert!(worst <= 1e-10, "route gap {worst}");
    pass(
        "self-consistency",
        &format!("worst route gap={worst:.2e} over 50 configs, all rule variants"),
    );
}

#[test]
fn annealing_perturbation() {
    let started = Instant::now();
    let schedule = Schedule::uniform(2.0, 2).unwrap();
    let mut admitted = 0u64;
    let mut ordered = 0u64;
    let mut attempts = 0u64;
    while admitted < 200 && attempts < 1_000_000 {
        let p = ArModel::random(3, 2, 1.0, 100_000 + 2 * attempts).unwrap();
        let q = ArModel::random(3, 2, 1.0, 100_001 + 2 * attempts).unwrap();
        attempts += 1;
        let (relax_early, tighten_early) =
            match perturbation_experiment(&p, &q, &schedule, -0.02) {
                Ok(arms) => arms,
                Err(Error::ClampViolation(_)) => continue,
                Err(e) => panic!("unexpected error: {e}"),
            };
        if !relax_early.assumptions_ok {
            continue;
        }
        admitted += 1;
        if relax_early.tvb <= tighten_early.tvb + 1e-12 {
            ordered += 1;
        }
    }
    assert_eq!(admitted, 200, "only {admitted} admitted in {attempts} attempts");
    let frac = ordered as f64 / admitted as f64;
    assert!(frac >= 0.9, "relax-early wins on only {ordered}/200 admitted seeds");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 300, "runtime budget exceeded: {elapsed:?}");
    pass(
        "annealing-perturbation",
        &format!(
            "relax-early bound lower on {ordered}/200 admitted seeds ({attempts} scanned) in {elapsed:?}"
        ),
    );
}

fn interpolate(points: &[(f64, f64)], e: f64) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if e < pts[0].0 || e > pts[pts.len() - 1].0 {
        return None;
    }
    for w in pts.windows(2) {
        if e >= w[0].0 && e <= w[1].0 {
            let span = w[1].0 - w[0].0;
            if span <= 0.0 {
                return Some(w[0].1.min(w[1].1));
            }
            return Some(w[0].1 + (e - w[0].0) / span * (w[1].1 - w[0].1));
        }
    }
    None
}

/// KNOWN RED. Target: at matched exact expected length, the exponential
/// schedule beats the uniform one in exact TV on at least 80% of matched
/// grid points. Measured: ~62% (stable across vocab sizes and model
/// concentrations), because for delta < ~1.5 the exponential schedule pushes
/// omega_2 below one — outside the regime of the annealing analysis, whose
/// premise needs f_2 >= f_2_van — and there the exact-TV trend reverses
/// (dominance ~5%). Restricted to delta >= 1.6 the rate is ~71%; the
/// bound-level (TVB) dominance is ~94%. The 80% exact-TV target is not
/// attainable on this model family; the assertion is kept as stated.
#[test]
fn annealing_sweep_dominance() {
    let started = Instant::now();
    let grid: Vec<f64> = (0..30).map(|i| 1.1 + 0.1 * i as f64).collect();
    let mut matched = 0u64;
    let mut dominated = 0u64;
    let mut pairs_used = 0u64;
    let mut shift = 0u64;
    while pairs_used < 50 && shift < 400_000 {
        let p = ArModel::random(3, 3, 1.0, 10_000 + 2 * shift).unwrap();
        let q = ArModel::random(3, 3, 1.0, 10_001 + 2 * shift).unwrap();
        shift += 1;
        if !check_closeness(&p, &q, 0.4).unwrap().within {
            continue;
        }
        pairs_used += 1;
        let curve = |nu: Option<f64>| -> Vec<(f64, f64)> {
            grid.iter()
                .map(|&delta| {
                    let schedule = match nu {
                        Some(nu) => Schedule::exponential(delta, nu, 2).unwrap(),
                        None => Schedule::uniform(delta, 2).unwrap(),
                    };
                    let acc = AcceptanceRule::MultiplicativeRelax(schedule);
                    let res = ResamplingRule::OptimalGStar;
                    let e = exact_expected_accepted(&p, &q, &acc, 2).unwrap();
                    let out = exact_output_dist_with(&p, &q, 2, &acc, &res).unwrap();
                    let tv = tv_exact(&out, &joint_dist(&p, 3).unwrap()).unwrap();
                    (e, tv)
                })
                .collect()
        };
        let uniform = curve(None);
        let cool = curve(Some(0.7));
        for &(e, tv) in &cool {
            if let Some(u_tv) = interpolate(&uniform, e) {
                matched += 1;
                if tv <= u_tv + 1e-12 {
                    dominated += 1;
                }
            }
        }
    }
    assert_eq!(pairs_used, 50, "only {pairs_used} close pairs found");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() <= 300, "runtime budget exceeded: {elapsed:?}");
    let frac = dominated as f64 / matched as f64;
    assert!(
        frac >= 0.8,
        "exponential schedule dominates uniform in exact TV on {dominated}/{matched} matched \
         points ({:.1}%); the 80% target is not attainable at desk scale (bound-level dominance \
         is ~94%) — see the test doc comment",
        100.0 * frac
    );
    pass(
        "annealing-sweep",
        &format!(
            "cool_exp below uniform on {dominated}/{matched} matched points over 50 pairs in {elapsed:?}"
        ),
    );
}

/// KNOWN RED. Target: with the k-NN acceptance fixed, the bound-optimal
/// correction beats the aggregated-residual correction in exact TV on every
/// seed (strictly on at least half). Measured: 119 of 120 (seed 16 at three
/// of the four (k, lambda) combinations is a genuine ~6e-4 counterexample).
/// The optimal correction minimizes the TV upper bound, not the exact TV of
/// each instance, so a small per-seed violation rate is a real property of
/// the method; the every-seed assertion is kept as stated.
#[test]
fn lantern_gstar_improvement() {
    let mut violations: Vec<String> = Vec::new();
    let mut strict = 0u64;
    let mut total = 0u64;
    for (k, lambda) in [(2usize, 1.0), (2, 2.0), (3, 1.0), (3, 2.0)] {
        for s in 0..30u64 {
            let p = ArModel::random(6, 3, 1.0, 20_000 + 2 * s).unwrap();
            let q = ArModel::random(6, 3, 1.0, 20_001 + 2 * s).unwrap();
            let target = joint_dist(&p, 3).unwrap();
            let tv_of = |method: MethodSpec| {
                let (acc, res) = method.build_rules(2, 6).unwrap();
                tv_exact(
                    &exact_output_dist_with(&p, &q, 2, &acc, &res).unwrap(),
                    &target,
                )
                .unwrap()
            };
            let tv_lantern = tv_of(MethodSpec::Lantern {
                k,
                lambda,
                embed_seed: 500 + s,
            });
            let tv_gstar = tv_of(MethodSpec::LanternGstar {
                k,
                lambda,
                embed_seed: 500 + s,
            });
            total += 1;
            if tv_gstar > tv_lantern + 1e-12 {
                violations.push(format!(
                    "k={k} lambda={lambda} seed={s}: {tv_gstar:.6e} > {tv_lantern:.6e}"
                ));
            }
            if tv_gstar < tv_lantern - 1e-12 {
                strict += 1;
            }
        }
    }
    assert!(
        strict * 2 >= total,
        "strict improvement on only {strict}/{total} seeds"
    );
    assert!(
        violations.is_empty(),
        "optimal correction loses in exact TV on {}/{total} seed-combinations: {}; \
         the every-seed target admits genuine counterexamples — see the test doc comment",
        violations.len(),
        violations.join("; ")
    );
    pass(
        "lantern-gstar",
        &format!("improvement on every seed, strict on {strict}/{total}"),
    );
}

#[test]
fn second_position_margin() {
    let acc = AcceptanceRule::MultiplicativeRelax(Schedule::uniform(2.0, 2).unwrap());
    let mut admitted = 0u64;
    let mut attempts = 0u64;
    let mut worst = f64::INFINITY;
    while admitted < 100 && attempts < 100_000 {
        let p = ArModel::random(3, 2, 1.0, 110_000 + 2 * attempts).unwrap();
        let q = ArModel::random(3, 2, 1.0, 110_001 + 2 * attempts).unwrap();
        attempts += 1;
        if !check_closeness(&p, &q, 0.4).unwrap().within {
            continue;
        }
        admitted += 1;
        let stats = second_position_stats(&p, &q, &acc).unwrap();
        worst = worst.min(stats.margin());
        assert!(
            stats.margin() >= 0.2 - 1e-12,
            "margin {} below 1/5 on an admitted pair",
            stats.margin()
        );
    }
    assert_eq!(admitted, 100, "only {admitted} close pairs in {attempts} attempts");
    pass(
        "second-position-margin",
        &format!("worst margin={worst:.4} >= 0.2 over 100 close pairs"),
    );
}

#[test]
fn sweep_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = r#"{
        "models": {"random": {"vocab_size": 3, "depth": 3, "seed_p": 5, "seed_q": 6}},
        "L": 2,
        "seed": 9,
        "n_rounds": 2000,
        "sweep": {
            "delta_grid": {"start": 1.1, "stop": 2.0, "step": 0.3},
            "methods": [{"kind": "vanilla"}, {"kind": "uniform"},
                        {"kind": "cool_exp", "nu": 0.7}, {"kind": "cool_linear", "ell": 8},
                        {"kind": "lantern", "k": 2, "lambda": 1.0, "embed_seed": 3}]
        }
    }"#;
    let cfg = ExperimentConfig::from_json_str(config_text).unwrap();

    let strip_wall = |csv: &str| -> String {
        csv.lines()
            .map(|line| {
                let mut parts: Vec<&str> = line.split(',').collect();
                parts.pop();
                parts.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };

    let library_runs: Vec<String> = [1usize, 4, 7]
        .iter()
        .map(|&threads| strip_wall(&sweep_csv(&run_sweep(&cfg, None, threads).unwrap())))
        .collect();
    assert_eq!(library_runs[0], library_runs[1]);
    assert_eq!(library_runs[0], library_runs[2]);

    // Same through the binary.
    let config_path = dir.path().join("sweep.json");
    std::fs::write(&config_path, config_text).unwrap();
    let mut cli_runs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_specdec"))
            .args(["sweep", config_path.to_str().unwrap()])
            .args(["--out", out.to_str().unwrap()])
            .args(["--threads", threads])
            .status()
            .unwrap();
        assert!(status.success());
        cli_runs.push(strip_wall(&std::fs::read_to_string(&out).unwrap()));
    }
    assert_eq!(cli_runs[0], cli_runs[1]);
    assert_eq!(cli_runs[0], library_runs[0]);
    pass(
        "determinism",
        "sweep CSV byte-identical modulo wall_ms across thread counts (library and CLI)",
    );
}
