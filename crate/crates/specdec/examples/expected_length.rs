//! The exact expected accepted length per round, checked against Monte
//! Carlo, and how it responds to the relaxation budget.
//!
//! ```bash
//! cargo run --release --example expected_length
//! ```

use specdec::{
    exact_expected_accepted, simulate, AcceptanceRule, ArModel, ResamplingRule, Schedule, SdConfig,
};

fn main() {
    let draft_len = 3;
    let target = ArModel::random(4, 4, 1.0, 50).unwrap();
    let draft = ArModel::random(4, 4, 1.0, 51).unwrap();

    println!(
        "{:>6} {:>14} {:>14} {:>8}",
        "delta", "exact E[tau+1]", "MC mean (100k)", "z"
    );
    for step in 0..6 {
        let delta = 1.0 + 0.4 * step as f64;
        let acc =
            AcceptanceRule::MultiplicativeRelax(Schedule::uniform(delta, draft_len).unwrap());
        let exact = exact_expected_accepted(&target, &draft, &acc, draft_len).unwrap();
        let cfg = SdConfig::new(draft_len, acc, ResamplingRule::OptimalGStar, 123 + step);
        let sim = simulate(&target, &draft, &cfg, 100_000).unwrap();
        let z = (exact - sim.mean_accepted_len) / sim.stderr_accepted_len.max(1e-12);
        println!(
            "{delta:>6.2} {exact:>14.6} {:>14.6} {z:>+8.2}",
            sim.mean_accepted_len
        );
    }
    println!("\n(the exact formula and the simulation agree within sampling noise)");
}
