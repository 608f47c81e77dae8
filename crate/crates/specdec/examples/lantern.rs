//! k-NN aggregated acceptance: neighbor mass is pooled onto each candidate
//! before the acceptance test, raising acceptance rates on ambiguous tokens.
//! Swapping the aggregated-residual correction for the bound-optimal one
//! usually lowers the exact fidelity loss at the same acceptance behavior.
//!
//! ```bash
//! cargo run --release --example lantern
//! ```

use specdec::{
    exact_expected_accepted, exact_output_dist_with, joint_dist, knn_aggregate_set,
    modified_target_lantern, tv_exact, AcceptanceRule, ArModel, ResamplingRule, TokenEmbedding,
    TokenId,
};

fn main() {
    let vocab = 6;
    let target = ArModel::random(vocab, 3, 1.0, 60).unwrap();
    let draft = ArModel::random(vocab, 3, 1.0, 61).unwrap();
    let embeddings = TokenEmbedding::random(vocab, 4, 9).unwrap();

    // The aggregation set of each candidate at the root.
    let row = target.cond_row(&[]).unwrap().to_vec();
    println!("aggregation sets A(token) at the root (k = 2, lambda = 1):");
    for t in 0..vocab as u32 {
        let set = knn_aggregate_set(&embeddings, &row, TokenId(t), 2, 1.0).unwrap();
        let mass: f64 = set.iter().map(|x| row[x.index()]).sum();
        println!(
            "  token {t}: P = {:.3}, aggregated mass = {mass:.3}, set = {:?}",
            row[t as usize],
            set.iter().map(|x| x.0).collect::<Vec<_>>()
        );
    }
    let modified = modified_target_lantern(&target, &[], TokenId(0), 2, 1.0, &embeddings).unwrap();
    println!("modified target anchored at token 0: {modified:?}\n");

    println!(
        "{:>8} {:>8} {:>12} {:>14} {:>14}",
        "k", "lambda", "E[tau+1]", "tv (residual)", "tv (optimal G)"
    );
    for (k, lambda) in [(2usize, 1.0), (2, 2.0), (3, 1.0), (3, 2.0)] {
        let acc = AcceptanceRule::LanternPP {
            k,
            lambda,
            embeddings: embeddings.clone(),
        };
        let residual = ResamplingRule::LanternResidual {
            k,
            lambda,
            embeddings: embeddings.clone(),
        };
        let optimal = ResamplingRule::OptimalGStar;
        let e = exact_expected_accepted(&target, &draft, &acc, 2).unwrap();
        let joint = joint_dist(&target, 3).unwrap();
        let tv_residual = tv_exact(
            &exact_output_dist_with(&target, &draft, 2, &acc, &residual).unwrap(),
            &joint,
        )
        .unwrap();
        let tv_optimal = tv_exact(
            &exact_output_dist_with(&target, &draft, 2, &acc, &optimal).unwrap(),
            &joint,
        )
        .unwrap();
        println!("{k:>8} {lambda:>8} {e:>12.5} {tv_residual:>14.6} {tv_optimal:>14.6}");
    }
}
