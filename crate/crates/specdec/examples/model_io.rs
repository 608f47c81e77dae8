//! Model construction, JSON round trips, and the closeness report.
//!
//! ```bash
//! cargo run --release --example model_io
//! ```

use specdec::{check_closeness, tv_conditional, ArModel, TokenId};

fn main() {
    // An explicit two-level model over a binary vocabulary.
    let p = ArModel::from_tables(
        2,
        2,
        vec![
            (vec![], vec![0.6, 0.4]),
            (vec![TokenId(0)], vec![0.7, 0.3]),
            (vec![TokenId(1)], vec![0.2, 0.8]),
        ],
    )
    .unwrap();
    println!("serialized model:\n{}\n", p.to_json_string());

    let restored = ArModel::from_json_str(&p.to_json_string()).unwrap();
    assert_eq!(p, restored);
    println!("round trip preserved every probability bit-exactly");

    println!(
        "P(1 | 0) = {}, P(seq 0,1) = {}",
        p.cond_prob(&[TokenId(0)], TokenId(1)).unwrap(),
        p.seq_prob(&[TokenId(0), TokenId(1)]).unwrap()
    );

    // Conditional TV distances against a random draft model.
    let q = ArModel::random(2, 2, 1.0, 5).unwrap();
    println!(
        "\nTV at the root: {:.4}",
        tv_conditional(&p, &q, &[]).unwrap()
    );
    let report = check_closeness(&p, &q, 0.4).unwrap();
    println!(
        "closeness(0.4): within = {}, worst prefix = {:?}, worst TV = {:.4}",
        report.within,
        report.worst_prefix.iter().map(|t| t.0).collect::<Vec<_>>(),
        report.worst_tv
    );
}
