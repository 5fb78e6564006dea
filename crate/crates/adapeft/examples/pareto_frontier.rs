//! Compare the exact Pareto frontier of all 2^K selections with the K+1
//! greedy prefix points.
//!
//! ```bash
//! cargo run -p adapeft --example pareto_frontier
//! ```

use adapeft::knapsack::{greedy_frontier, pareto_frontier, KnapsackInstance};

fn main() {
    let inst = KnapsackInstance::new(vec![
        ("a".into(), 32.0, 4),
        ("b".into(), 16.0, 4),
        ("c".into(), 8.0, 4),
        ("d".into(), 4.0, 8),
        ("e".into(), 2.0, 8),
        ("f".into(), 1.0, 8),
    ])
    .unwrap();

    println!("exact frontier (undominated among all 64 selections):");
    for point in pareto_frontier(&inst).unwrap() {
        println!(
            "  weight {:>2}  value {:>5.1}  {:?}",
            point.selection.total_weight,
            point.selection.total_value,
            point.selection.selected_names(&inst)
        );
    }

    println!("\ngreedy prefix points:");
    for point in greedy_frontier(&inst) {
        println!(
            "  weight {:>2}  value {:>5.1}  dominated: {}",
            point.selection.total_weight, point.selection.total_value, point.dominated
        );
    }

    // With strictly decreasing value-to-weight ratios each greedy prefix
    // attains the exact optimum at its own weight, so the two frontiers
    // coincide at the prefix points.
}
