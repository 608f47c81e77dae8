//! Why decaying schedules: shifting acceptance budget toward earlier
//! positions lowers the TV bound at the same expected accepted length.
//!
//! The first part runs the two-position perturbation experiment; the second
//! compares the uniform and exponentially decaying schedules along their
//! trade-off curves.
//!
//! ```bash
//! cargo run --release --example annealing
//! ```

use specdec::{
    check_closeness, exact_expected_accepted, exact_output_dist_with, joint_dist,
    perturbation_experiment, tv_exact, AcceptanceRule, ArModel, Error, ResamplingRule, Schedule,
};

fn main() {
    // --- perturbation: relax early / tighten late vs the reverse ---
    let schedule = Schedule::uniform(2.0, 2).unwrap();
    println!("two-position perturbation (|c2| = 0.02) on admitted model pairs:");
    let mut shown = 0;
    let mut attempt = 0u64;
    while shown < 5 && attempt < 200_000 {
        let p = ArModel::random(3, 2, 1.0, 2 * attempt).unwrap();
        let q = ArModel::random(3, 2, 1.0, 2 * attempt + 1).unwrap();
        attempt += 1;
        let (relax_early, tighten_early) = match perturbation_experiment(&p, &q, &schedule, -0.02)
        {
            Ok(arms) => arms,
            Err(Error::ClampViolation(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        if !relax_early.assumptions_ok {
            continue;
        }
        shown += 1;
        println!(
            "  pair {shown}: E[tau+1] = {:.5} on both arms; bound {:.6} (relax early) vs {:.6} (tighten early)",
            relax_early.expected_len, relax_early.tvb, tighten_early.tvb
        );
    }

    // --- schedule comparison at matched expected length ---
    println!("\nuniform vs exponential schedule (nu = 0.7), one close model pair:");
    let (p, q) = find_close_pair();
    println!(
        "{:>6} {:>22} {:>22}",
        "delta", "uniform (E, tv)", "exponential (E, tv)"
    );
    for step in 0..6 {
        let delta = 1.5 + 0.5 * step as f64;
        let point = |schedule: Schedule| {
            let acc = AcceptanceRule::MultiplicativeRelax(schedule);
            let res = ResamplingRule::OptimalGStar;
            let e = exact_expected_accepted(&p, &q, &acc, 2).unwrap();
            let out = exact_output_dist_with(&p, &q, 2, &acc, &res).unwrap();
            let tv = tv_exact(&out, &joint_dist(&p, 3).unwrap()).unwrap();
            (e, tv)
        };
        let (ue, utv) = point(Schedule::uniform(delta, 2).unwrap());
        let (ee, etv) = point(Schedule::exponential(delta, 0.7, 2).unwrap());
        println!("{delta:>6.2} ({ue:>10.5}, {utv:.5}) ({ee:>10.5}, {etv:.5})");
    }
    println!("\n(the exponential schedule reaches a longer expected length at each budget)");
}

fn find_close_pair() -> (ArModel, ArModel) {
    for shift in 0..100_000u64 {
        let p = ArModel::random(3, 3, 1.0, 10_000 + 2 * shift).unwrap();
        let q = ArModel::random(3, 3, 1.0, 10_001 + 2 * shift).unwrap();
        if check_closeness(&p, &q, 0.4).unwrap().within {
            return (p, q);
        }
    }
    panic!("no close pair found");
}
