//! Run the full verification report in-process, exactly like the `verify`
//! subcommand.
//!
//! ```bash
//! cargo run --release --example verify_all
//! ```

use specdec::config::ExperimentConfig;
use specdec::runner::run_verify;

fn main() {
    let config = r#"{
        "models": {"random": {"vocab_size": 3, "depth": 3, "seed_p": 1, "seed_q": 2}},
        "L": 2,
        "verify": {"seeds": 100, "negative_dominance_omega": 0.5}
    }"#;
    let cfg = ExperimentConfig::from_json_str(config).unwrap();
    let report = run_verify(&cfg, None).unwrap();
    print!("{report}");
    std::process::exit(if report.all_passed() { 0 } else { 1 });
}
