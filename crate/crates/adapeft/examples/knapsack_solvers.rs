//! Solve one selection problem with every available solver and compare.
//!
//! ```bash
//! cargo run -p adapeft --example knapsack_solvers
//! ```

use adapeft::knapsack::{
    greedy_at_epsilon, solve_dp, solve_exhaustive, solve_mitm, KnapsackInstance, SelectionResult,
};

fn show(label: &str, inst: &KnapsackInstance, sel: &SelectionResult) {
    println!(
        "{label:<12} value {:>6.2}  weight {:>3}  picks {:?}",
        sel.total_value,
        sel.total_weight,
        sel.selected_names(inst)
    );
}

fn main() {
    let inst = KnapsackInstance::new(vec![
        ("attention".into(), 10.0, 4),
        ("bias".into(), 7.0, 3),
        ("norm".into(), 5.0, 2),
        ("head".into(), 2.5, 2),
        ("embed".into(), 1.0, 5),
    ])
    .unwrap();
    let epsilon = 0.6;
    println!(
        "budget: {} of {} total weight\n",
        inst.capacity(epsilon).unwrap(),
        inst.total_weight()
    );

    show(
        "exhaustive",
        &inst,
        &solve_exhaustive(&inst, epsilon).unwrap(),
    );
    show("dp", &inst, &solve_dp(&inst, epsilon).unwrap());
    show("mitm", &inst, &solve_mitm(&inst, epsilon).unwrap());
    show("greedy", &inst, &greedy_at_epsilon(&inst, epsilon).unwrap());

    // The exact solvers agree on the optimal value; greedy may fall short
    // but never exceeds it.
}
