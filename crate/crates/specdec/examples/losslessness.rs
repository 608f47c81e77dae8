//! Vanilla speculative decoding is lossless: the exact law of the emitted
//! tokens equals the target model's joint law, for any draft model.
//!
//! ```bash
//! cargo run --release --example losslessness
//! ```

use specdec::{
    exact_output_dist, joint_dist, simulate, tv_exact, AcceptanceRule, ArModel, ResamplingRule,
    SdConfig,
};

fn main() {
    let vocab = 3;
    let draft_len = 2;
    let depth = draft_len + 1;

    println!("exact TV between the decoded law and the target joint, vanilla rules:");
    for seed in 0..5u64 {
        let target = ArModel::random(vocab, depth, 1.0, 2 * seed).unwrap();
        let draft = ArModel::random(vocab, depth, 1.0, 2 * seed + 1).unwrap();
        let cfg = SdConfig::new(
            draft_len,
            AcceptanceRule::Vanilla,
            ResamplingRule::VanillaResidual,
            seed,
        );
        let decoded = exact_output_dist(&target, &draft, &cfg).unwrap();
        let tv = tv_exact(&decoded, &joint_dist(&target, draft_len + 1).unwrap()).unwrap();
        println!("  seed {seed}: TV = {tv:.3e}");
    }

    // The Monte Carlo estimate converges to the same law.
    let target = ArModel::random(vocab, depth, 1.0, 100).unwrap();
    let draft = ArModel::random(vocab, depth, 1.0, 101).unwrap();
    let cfg = SdConfig::new(
        draft_len,
        AcceptanceRule::Vanilla,
        ResamplingRule::VanillaResidual,
        7,
    );
    let exact = exact_output_dist(&target, &draft, &cfg).unwrap();
    println!("\nMonte Carlo convergence toward the exact law (seed 100/101):");
    for n in [1_000u64, 10_000, 100_000] {
        let sim = simulate(&target, &draft, &cfg, n).unwrap();
        let tv = tv_exact(&sim.empirical, &exact).unwrap();
        println!("  n = {n:>6}: TV(empirical, exact) = {tv:.4e}");
    }
}
