//! Exact, desk-scale analysis of relaxed speculative decoding.
//!
//! Speculative decoding drafts `L` tokens from a fast model `Q` and lets the
//! target model `P` verify them. The vanilla acceptance rule
//! `min(1, P/Q)` with the residual correction `Norm([P - Q]_+)` is lossless;
//! relaxing the rule (uniformly, with an annealed schedule, or with k-NN
//! aggregation) accepts more tokens at the price of distributional drift.
//!
//! This crate makes all of that exactly computable on small tabular models:
//!
//! * [`model`] — complete conditional-probability-table models, the roles of
//!   both `P` and `Q`.
//! * [`rules`] — the acceptance families `f_i` and resampling families
//!   `G_i`, including the bound-optimal `G* = Norm([P - Q*f]_+)`.
//! * [`schedule`] — uniform, exponentially decaying, and linearly decaying
//!   relaxation schedules.
//! * [`decode`] — the drafting/verification round and seeded Monte Carlo.
//! * [`exact`] — exact output distributions (computed two independent ways
//!   and cross-checked), exact TV distances, the TV upper bound, expected
//!   accepted lengths, a simplex brute force for the optimal-resampling
//!   claim, and the two-position perturbation analysis.
//! * [`config`] / [`runner`] — the JSON experiment configs and the
//!   `verify` / `sweep` / `simulate` drivers behind the CLI.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --example losslessness`.

pub mod config;
pub mod decode;
pub mod error;
pub mod exact;
pub mod model;
mod prob;
pub mod rules;
pub mod runner;
pub mod schedule;

pub use error::{Error, Result};
pub use model::{check_closeness, tv_conditional, ArModel, ClosenessReport, TokenEmbedding, TokenId, TokenSeq};
pub use prob::{safe_ratio, tv_rows, KahanSum};

pub use decode::{
    draft, generate_sequence, simulate, simulate_detailed, verify, verify_with, RoundOutcome,
    SdConfig, SimulationSummary,
};
pub use exact::{
    assumption1_margins, brute_force_optimal_resample, exact_expected_accepted, exact_output_dist,
    exact_output_dist_with, joint_dist, lp_objective, output_dist_by_closed_form,
    output_dist_by_paths, perturbation_experiment, second_position_stats, tv_exact,
    tvb_gstar_reduced, tvb_upper_bound, verify_proposition1, BruteForceResult, ExactDist,
    PerturbationReport, SecondPositionStats,
};
pub use rules::{
    accept_prob_lantern, accept_prob_relaxed, accept_prob_vanilla, knn_aggregate_set,
    modified_target_lantern, resample_dist_gstar, resample_dist_lantern, resample_dist_vanilla,
    Acceptance, AcceptanceRule, ConstAcceptance, ResamplingRule,
};
pub use schedule::{Schedule, ScheduleKind};
