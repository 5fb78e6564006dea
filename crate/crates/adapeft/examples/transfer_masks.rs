//! Select influential groups on a small model with a short run, then train
//! the 10x larger sibling under the transferred mask.
//!
//! ```bash
//! cargo run -p adapeft --example transfer_masks
//! ```

use adapeft::simulator::{presets, run_adapeft, RunOptions};

fn main() {
    let mut small = presets::build("planted8", 0.02, 11).unwrap();
    let mut large = presets::build("planted8-large", 0.02, 11).unwrap();

    let (mask, record) = run_adapeft(
        &mut small,
        &mut large,
        0.1, // spend 10% of the budget on the selection run
        presets::PLANTED8_EPSILON,
        200,
        &RunOptions::default(),
    )
    .unwrap();

    let names: Vec<&str> = mask.names().collect();
    println!("transferred mask: {names:?}");
    println!("large initial loss: {:.4}", record.initial_loss());
    println!("large final loss:   {:.4}", record.final_loss());

    // Two of eight groups hold over 90% of the loss, so training just the
    // planted pair removes almost all of it at ~0.1% of the weight budget.
}
