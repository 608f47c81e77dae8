//! The fidelity/length trade-off grid, produced exactly like the `sweep`
//! subcommand but printed to stdout.
//!
//! ```bash
//! cargo run --release --example sweep
//! ```

use specdec::config::ExperimentConfig;
use specdec::runner::{run_sweep, sweep_csv};

fn main() {
    let config = r#"{
        "models": {"random": {"vocab_size": 3, "depth": 3, "seed_p": 80, "seed_q": 81}},
        "L": 2,
        "seed": 1,
        "n_rounds": 5000,
        "sweep": {
            "delta_grid": {"start": 1.0, "stop": 3.0, "step": 0.5},
            "methods": [
                {"kind": "vanilla"},
                {"kind": "uniform"},
                {"kind": "cool_exp", "nu": 0.7},
                {"kind": "cool_linear", "ell": 8},
                {"kind": "lantern", "k": 2, "lambda": 1.0, "embed_seed": 4},
                {"kind": "lantern_gstar", "k": 2, "lambda": 1.0, "embed_seed": 4}
            ]
        }
    }"#;
    let cfg = ExperimentConfig::from_json_str(config).unwrap();
    let rows = run_sweep(&cfg, None, 2).unwrap();
    print!("{}", sweep_csv(&rows));
}
