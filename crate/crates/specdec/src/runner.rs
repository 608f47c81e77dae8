//! Drivers behind the CLI: verification suites, trade-off sweeps, and
//! Monte Carlo simulation, all pure functions of the parsed config.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, MethodSpec, SweepMethodSpec};
use crate::decode::{simulate, simulate_detailed, SdConfig};
use crate::error::{Error, Result};
use crate::exact::{
    brute_force_optimal_resample, exact_expected_accepted, exact_output_dist_with, joint_dist,
    lp_objective, output_dist_by_closed_form, output_dist_by_paths, perturbation_experiment,
    second_position_stats, tv_exact, tvb_upper_bound, verify_proposition1,
};
use crate::model::{check_closeness, ArModel, TokenId};
use crate::prob::safe_ratio;
use crate::rules::{gstar_row, AcceptanceRule, ResamplingRule};
use crate::schedule::Schedule;

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub suites: Vec<SuiteOutcome>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(
                f,
                "{} {:<26} {}",
                if s.passed { "PASS" } else { "FAIL" },
                s.name,
                s.detail
            )?;
        }
        let failed = self.suites.iter().filter(|s| !s.passed).count();
        if failed == 0 {
            writeln!(f, "all {} suites passed", self.suites.len())
        } else {
            writeln!(f, "{failed} of {} suites FAILED", self.suites.len())
        }
    }
}

fn suite<F>(name: &'static str, body: F) -> SuiteOutcome
where
    F: FnOnce() -> Result<(bool, String)>,
{
    match body() {
        Ok((passed, detail)) => SuiteOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => SuiteOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Run every verification suite against the configured model family.
pub fn run_verify(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<VerificationReport> {
    let verify = cfg.verify.clone().unwrap_or_default();
    let seeds = match cfg.models {
        crate::config::ModelsSpec::Inline { .. } => 1,
        _ => verify.seeds.max(1),
    };
    let l = cfg.draft_len;
    let base_seed = seed_override.or(cfg.seed).unwrap_or(0);

    // Probe one pair for dimension checks.
    let (p0, q0) = cfg.models.build()?;
    if p0.depth().min(q0.depth()) < l + 1 {
        return Err(Error::Config(format!(
            "model depth must be at least L + 1 = {}",
            l + 1
        )));
    }
    let vocab = p0.vocab_size();

    let pairs: Vec<(ArModel, ArModel)> = (0..seeds)
        .map(|s| cfg.models.build_shifted(2 * s))
        .collect::<Result<_>>()?;

    let mut report = VerificationReport::default();

    report.suites.push(suite("losslessness", || {
        let mut worst = 0.0f64;
        for (p, q) in &pairs {
            let acc = AcceptanceRule::Vanilla;
            let res = ResamplingRule::VanillaResidual;
            let out = exact_output_dist_with(p, q, l, &acc, &res)?;
            let tv = tv_exact(&out, &joint_dist(p, l + 1)?)?;
            worst = worst.max(tv);
        }
        Ok((
            worst <= 1e-12,
            format!("worst_tv={worst:.2e} over {} pairs", pairs.len()),
        ))
    }));

    report.suites.push(suite("bound-soundness", || {
        let subset = &pairs[..pairs.len().min(25)];
        let mut worst = f64::NEG_INFINITY;
        let mut count = 0;
        for (p, q) in subset {
            for &delta in &[1.0, 1.5, 2.0, 3.0] {
                for exp in [false, true] {
                    let schedule = if exp {
                        Schedule::exponential(delta, 0.7, l)?
                    } else {
                        Schedule::uniform(delta, l)?
                    };
                    let acc = AcceptanceRule::MultiplicativeRelax(schedule);
                    let res = ResamplingRule::OptimalGStar;
                    let out = exact_output_dist_with(p, q, l, &acc, &res)?;
                    let tv = tv_exact(&out, &joint_dist(p, l + 1)?)?;
                    let tvb = tvb_upper_bound(p, q, &acc, &res, l)?;
                    worst = worst.max(tv - tvb);
                    count += 1;
                }
            }
        }
        Ok((
            worst <= 1e-10,
            format!("worst tv-tvb={worst:.2e} over {count} configurations"),
        ))
    }));

    report.suites.push(suite("bound-tightness-vanilla", || {
        let subset = &pairs[..pairs.len().min(50)];
        let mut worst = 0.0f64;
        for (p, q) in subset {
            let tvb = tvb_upper_bound(
                p,
                q,
                &AcceptanceRule::Vanilla,
                &ResamplingRule::VanillaResidual,
                l,
            )?;
            worst = worst.max(tvb);
        }
        Ok((
            worst <= 1e-12,
            format!("worst vanilla tvb={worst:.2e} over {} pairs", subset.len()),
        ))
    }));

    report.suites.push(suite("expected-length-mc", || {
        let n_rounds = 20_000;
        let mut worst_z = 0.0f64;
        for (i, (p, q)) in pairs.iter().take(5).enumerate() {
            let method = match i % 4 {
                0 => MethodSpec::Vanilla,
                1 => MethodSpec::Uniform { delta: 1.5 },
                2 => MethodSpec::CoolExp {
                    delta: 1.5,
                    nu: 0.7,
                },
                _ => MethodSpec::Lantern {
                    k: 1.max(vocab / 2).min(vocab - 1),
                    lambda: 1.0,
                    embed_seed: base_seed.wrapping_add(i as u64),
                },
            };
            let (acc, res) = method.build_rules(l, vocab)?;
            let exact = exact_expected_accepted(p, q, &acc, l)?;
            let sd = SdConfig::new(l, acc, res, base_seed.wrapping_add(1000 + i as u64));
            let sim = simulate(p, q, &sd, n_rounds)?;
            let z = (exact - sim.mean_accepted_len).abs()
                / sim.stderr_accepted_len.max(1e-12);
            if sim.stderr_accepted_len == 0.0 {
                if (exact - sim.mean_accepted_len).abs() > 1e-9 {
                    return Ok((false, "zero-variance mismatch".into()));
                }
            } else {
                worst_z = worst_z.max(z);
            }
        }
        Ok((
            worst_z <= 3.0,
            format!("worst |z|={worst_z:.2} over 5 configs x {n_rounds} rounds"),
        ))
    }));

    report.suites.push(suite("gstar-lp-oracle", || {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(base_seed.wrapping_add(77));
        let step = 0.005;
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_identity = 0.0f64;
        let n = seeds.min(50).max(10);
        for _ in 0..n {
            let p = ArModel::random(3, 1, 1.0, rng.random())?;
            let q = ArModel::random(3, 1, 1.0, rng.random())?;
            let p_row = p.cond_row(&[])?;
            let q_row = q.cond_row(&[])?;
            let f_row: Vec<f64> = (0..3)
                .map(|t| {
                    let f_van = safe_ratio(p_row[t], q_row[t]).min(1.0);
                    f_van + rng.random::<f64>() * (1.0 - f_van)
                })
                .collect();
            let g = gstar_row(p_row, q_row, &f_row);
            let analytic = lp_objective(p_row, q_row, &f_row, &g);
            let brute = brute_force_optimal_resample(p_row, q_row, &f_row, step)?;
            worst_excess = worst_excess.max(analytic - (brute.best_objective + 3.0 * step));
            let reduced: f64 = (0..3)
                .map(|t| (p_row[t] - q_row[t] * f_row[t]).abs())
                .sum::<f64>()
                - (0..3).map(|t| (1.0 - f_row[t]) * q_row[t]).sum::<f64>();
            worst_identity = worst_identity.max((analytic - reduced).abs());
        }
        Ok((
            worst_excess <= 0.0 && worst_identity <= 1e-12,
            format!(
                "worst excess={worst_excess:.2e}, worst identity gap={worst_identity:.2e} over {n} triples"
            ),
        ))
    }));

    report.suites.push(suite("gstar-equals-vanilla", || {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(base_seed.wrapping_add(5));
        let mut worst = 0.0f64;
        let mut prefixes = 0usize;
        for (p, q) in &pairs {
            let delta = 1.0 + 2.0 * rng.random::<f64>();
            let acc =
                AcceptanceRule::MultiplicativeRelax(Schedule::uniform(delta, l)?);
            for len in 0..l {
                for idx in 0..vocab.pow(len as u32) {
                    let prefix: Vec<TokenId> = crate::prob::seq_from_index(idx, vocab, len);
                    match verify_proposition1(p, q, &acc, &prefix) {
                        Ok(diff) => {
                            worst = worst.max(diff);
                            prefixes += 1;
                        }
                        Err(Error::DegenerateResidual) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok((
            worst <= 1e-12,
            format!("worst |G* - G_van|={worst:.2e} over {prefixes} prefixes"),
        ))
    }));

    report.suites.push(suite("two-route-agreement", || {
        let mut worst = 0.0f64;
        let n = seeds.min(50);
        for (i, (p, q)) in pairs.iter().take(n as usize).enumerate() {
            let method = match i % 5 {
                0 => MethodSpec::Vanilla,
                1 => MethodSpec::Uniform { delta: 2.0 },
                2 => MethodSpec::CoolExp {
                    delta: 1.5,
                    nu: 0.7,
                },
                3 => MethodSpec::Lantern {
                    k: (vocab - 1).min(2),
                    lambda: 1.0,
                    embed_seed: i as u64,
                },
                _ => MethodSpec::LanternGstar {
                    k: (vocab - 1).min(2),
                    lambda: 2.0,
                    embed_seed: i as u64,
                },
            };
            let (acc, res) = method.build_rules(l, vocab)?;
            let a = output_dist_by_paths(p, q, l, &acc, &res)?;
            let b = output_dist_by_closed_form(p, q, l, &acc, &res)?;
            let diff = a
                .probs()
                .iter()
                .zip(b.probs())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(diff);
        }
        Ok((
            worst <= 1e-10,
            format!("worst route gap={worst:.2e} over {n} configurations"),
        ))
    }));

    report.suites.push(suite("annealing-perturbation", || {
        // The assumption filter admits a small fraction of generic pairs, so
        // scan a seeded stream until enough are admitted.
        let schedule = Schedule::uniform(2.0, 2)?;
        let target = seeds.min(50).max(10);
        let mut admitted = 0u64;
        let mut ordered = 0u64;
        let mut attempts = 0u64;
        let cap = if matches!(cfg.models, crate::config::ModelsSpec::Inline { .. }) {
            1
        } else {
            200_000
        };
        while admitted < target && attempts < cap {
            let (p, q) = cfg.models.build_shifted(2 * attempts)?;
            attempts += 1;
            if p.depth() < 2 || q.depth() < 2 {
                return Err(Error::Config("perturbation suite needs depth >= 2".into()));
            }
            let (relax_early, tighten_early) =
                match perturbation_experiment(&p, &q, &schedule, -0.02) {
                    Ok(arms) => arms,
                    Err(Error::ClampViolation(_)) => continue,
                    Err(e) => return Err(e),
                };
            if !relax_early.assumptions_ok {
                continue;
            }
            admitted += 1;
            if relax_early.tvb <= tighten_early.tvb + 1e-12 {
                ordered += 1;
            }
        }
        if admitted == 0 {
            return Ok((false, format!("no seeds admitted in {attempts} attempts")));
        }
        let frac = ordered as f64 / admitted as f64;
        Ok((
            frac >= 0.9,
            format!(
                "relax-early bound lower on {ordered}/{admitted} admitted seeds ({:.0}%, {attempts} scanned)",
                100.0 * frac
            ),
        ))
    }));

    report.suites.push(suite("second-position-margin", || {
        let acc = AcceptanceRule::MultiplicativeRelax(Schedule::uniform(2.0, 2)?);
        let target = seeds.min(50).max(10);
        let mut checked = 0u64;
        let mut attempts = 0u64;
        let mut worst = f64::INFINITY;
        let cap = if matches!(cfg.models, crate::config::ModelsSpec::Inline { .. }) {
            1
        } else {
            50_000
        };
        while checked < target && attempts < cap {
            let (p, q) = cfg.models.build_shifted(2 * attempts)?;
            attempts += 1;
            if !check_closeness(&p, &q, 0.4)?.within {
                continue;
            }
            let stats = second_position_stats(&p, &q, &acc)?;
            worst = worst.min(stats.margin());
            checked += 1;
        }
        if checked == 0 {
            return Ok((false, format!("no close pairs in {attempts} attempts")));
        }
        Ok((
            worst >= 0.2 - 1e-9,
            format!("worst margin={worst:.4} (needs >= 0.2) over {checked} close pairs"),
        ))
    }));

    if let Some(omega) = verify.negative_dominance_omega {
        report.suites.push(suite("negative-dominance", || {
            let acc = AcceptanceRule::MultiplicativeRelax(Schedule::uniform(omega, 1)?);
            let mut violations = 0u64;
            for (p, q) in pairs.iter().take(10) {
                if let Err(Error::DominanceViolated { .. }) =
                    verify_proposition1(p, q, &acc, &[])
                {
                    violations += 1;
                }
            }
            Ok((
                violations > 0,
                format!(
                    "DominanceViolated raised on {violations}/10 pairs at omega={omega} (expected-failure path)"
                ),
            ))
        }));
    }

    Ok(report)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One row of the trade-off sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: String,
    pub delta: f64,
    pub aux: String,
    pub exact_tv: f64,
    pub tvb: f64,
    pub expected_len: f64,
    pub mc_mean_len: f64,
    pub mc_stderr: f64,
    pub wall_ms: u128,
}

pub const SWEEP_CSV_HEADER: &str =
    "method,delta,aux,exact_tv,tvb,expected_len,mc_mean_len,mc_stderr,wall_ms";

/// Compute every (method, delta) sweep point. Points run concurrently when
/// `threads > 1`, with per-point seeds derived from the config, so the rows
/// are identical at any thread count.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep section required".into()))?;
    let (p, q) = cfg.models.build()?;
    let l = cfg.draft_len;
    if p.depth().min(q.depth()) < l + 1 {
        return Err(Error::Config(format!(
            "model depth must be at least L + 1 = {}",
            l + 1
        )));
    }
    let n_rounds = cfg.n_rounds.unwrap_or(10_000).max(1);
    let seed = seed_override.or(cfg.seed).unwrap_or(0);
    let target = joint_dist(&p, l + 1)?;

    let mut points: Vec<(SweepMethodSpec, f64)> = Vec::new();
    for method in &sweep.methods {
        if matches!(method, SweepMethodSpec::Vanilla) {
            // The lossless baseline has no relaxation budget; emit one row.
            points.push((method.clone(), 1.0));
        } else {
            for &delta in &sweep.delta_grid {
                points.push((method.clone(), delta));
            }
        }
    }

    let compute = |point: &(SweepMethodSpec, f64)| -> Result<SweepRow> {
        let (method, delta) = point;
        let started = Instant::now();
        let concrete = method.with_delta(*delta);
        let (acc, res) =
            concrete.build_rules_with_override(l, p.vocab_size(), cfg.resampling)?;
        let out = exact_output_dist_with(&p, &q, l, &acc, &res)?;
        let exact_tv = tv_exact(&out, &target)?;
        let tvb = tvb_upper_bound(&p, &q, &acc, &res, l)?;
        let expected_len = exact_expected_accepted(&p, &q, &acc, l)?;
        if exact_tv > tvb + 1e-10 {
            return Err(Error::PremiseViolated(format!(
                "sweep row violates exact_tv <= tvb: {exact_tv} > {tvb}"
            )));
        }
        let mc_seed = mix_seed(seed, method.label(), *delta);
        let sd = SdConfig::new(l, acc, res, mc_seed);
        let sim = simulate(&p, &q, &sd, n_rounds)?;
        Ok(SweepRow {
            method: method.label().to_string(),
            delta: *delta,
            aux: method.aux(),
            exact_tv,
            tvb,
            expected_len,
            mc_mean_len: sim.mean_accepted_len,
            mc_stderr: sim.stderr_accepted_len,
            wall_ms: started.elapsed().as_millis(),
        })
    };

    let mut rows = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| points.par_iter().map(compute).collect::<Result<Vec<_>>>())?
    } else {
        points.iter().map(compute).collect::<Result<Vec<_>>>()?
    };

    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.delta.partial_cmp(&b.delta).expect("deltas are finite"))
    });
    Ok(rows)
}

/// Render rows in the frozen CSV schema (LF line endings, header first).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.delta,
            r.aux,
            r.exact_tv,
            r.tvb,
            r.expected_len,
            r.mc_mean_len,
            r.mc_stderr,
            r.wall_ms
        ));
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    std::fs::write(path, sweep_csv(rows))?;
    Ok(())
}

fn mix_seed(base: u64, label: &str, delta: f64) -> u64 {
    // FNV-1a over the point identity; any stable mixing works.
    let mut h = 0xcbf29ce484222325u64 ^ base;
    for b in label
        .as_bytes()
        .iter()
        .copied()
        .chain(delta.to_bits().to_le_bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Text artifacts of the `simulate` command.
#[derive(Debug, Clone)]
pub struct SimulateArtifacts {
    /// Per-round CSV: `round,tau,bonus_used,tokens` (tokens space-joined).
    pub rounds_csv: String,
    /// Summary JSON with the mean accepted length, its standard error, and
    /// per-position acceptance rates.
    pub summary_json: String,
}

pub fn run_simulate(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<SimulateArtifacts> {
    let method = cfg
        .method
        .as_ref()
        .ok_or_else(|| Error::Config("simulate requires a method".into()))?;
    let n_rounds = cfg
        .n_rounds
        .ok_or_else(|| Error::Config("simulate requires n_rounds".into()))?;
    if n_rounds == 0 {
        return Err(Error::Config("n_rounds must be at least 1".into()));
    }
    let (p, q) = cfg.models.build()?;
    let l = cfg.draft_len;
    let (acc, res) = method.build_rules_with_override(l, p.vocab_size(), cfg.resampling)?;
    let seed = seed_override.or(cfg.seed).unwrap_or(0);
    let sd = SdConfig::new(l, acc, res, seed);
    let (summary, rounds) = simulate_detailed(&p, &q, &sd, n_rounds)?;

    let mut rounds_csv = String::from("round,tau,bonus_used,tokens\n");
    for (i, r) in rounds.iter().enumerate() {
        let tokens = r
            .tokens
            .iter()
            .map(|t| t.0.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        rounds_csv.push_str(&format!(
            "{},{},{},{}\n",
            i, r.accepted, r.bonus_used, tokens
        ));
    }

    let summary_json = serde_json::to_string_pretty(&serde_json::json!({
        "rounds": summary.rounds,
        "mean_accepted_len": summary.mean_accepted_len,
        "stderr": summary.stderr_accepted_len,
        "per_position_accept_rate": summary.per_position_accept_rate,
    }))
    .expect("summary serialization cannot fail");

    Ok(SimulateArtifacts {
        rounds_csv,
        summary_json,
    })
}
