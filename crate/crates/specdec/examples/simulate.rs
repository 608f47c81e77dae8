//! Seeded Monte Carlo rounds: per-position acceptance rates, the accepted
//! length distribution, and chaining rounds into full sequences.
//!
//! ```bash
//! cargo run --release --example simulate
//! ```

use specdec::{
    draft, generate_sequence, simulate, verify, AcceptanceRule, ArModel, ResamplingRule, Schedule,
    SdConfig,
};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let target = ArModel::random(4, 4, 1.0, 70).unwrap();
    let draft_model = ArModel::random(4, 4, 1.0, 71).unwrap();

    // A few raw rounds.
    let cfg = SdConfig::new(
        3,
        AcceptanceRule::MultiplicativeRelax(Schedule::exponential(1.5, 0.7, 3).unwrap()),
        ResamplingRule::OptimalGStar,
        42,
    );
    println!("five rounds (drafts -> outcome):");
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    for round in 0..5 {
        let drafts = draft(&draft_model, 3, &mut rng).unwrap();
        let out = verify(&target, &draft_model, &drafts, &cfg, &mut rng).unwrap();
        println!(
            "  round {round}: drafts {:?} -> accepted {}, tokens {:?}, bonus {}",
            drafts.iter().map(|t| t.0).collect::<Vec<_>>(),
            out.accepted,
            out.tokens.iter().map(|t| t.0).collect::<Vec<_>>(),
            out.bonus_used
        );
    }

    // Aggregate statistics.
    let summary = simulate(&target, &draft_model, &cfg, 50_000).unwrap();
    println!(
        "\n50k rounds: mean accepted length {:.4} (stderr {:.4})",
        summary.mean_accepted_len, summary.stderr_accepted_len
    );
    println!(
        "per-position acceptance rates: {:?}",
        summary
            .per_position_accept_rate
            .iter()
            .map(|r| (r * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );

    // Chained generation.
    let seq = generate_sequence(&target, &draft_model, &cfg, 4).unwrap();
    println!(
        "\nchained generation of 4 tokens: {:?}",
        seq.iter().map(|t| t.0).collect::<Vec<_>>()
    );
}
