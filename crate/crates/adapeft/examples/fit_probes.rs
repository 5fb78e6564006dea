//! Recover a group's directional derivatives from four loss probes.
//!
//! ```bash
//! cargo run -p adapeft --example fit_probes
//! ```

use adapeft::influence::{fit_quadratic, optimal_lr, reduction_value, ValueConvention};
use adapeft::simulator::{GroupSpec, SyntheticModel};

fn main() {
    // One quadratic group with curvature 2 and an offset of norm 3.
    let spec = GroupSpec::new("bowl", 4, 2.0, vec![3.0]).unwrap();
    let mut model = SyntheticModel::new("demo", vec![spec], 0.0, 0).unwrap();

    let gradient = model.gradient();
    println!("gradient: {:?}", gradient[0]);

    let probes = model.probe_losses(&gradient, "bowl", 0.05).unwrap();
    for (eta, delta) in probes.steps().zip(probes.loss_deltas()) {
        println!("step {eta:+.3} -> loss delta {delta:+.6}");
    }

    let fit = fit_quadratic(&probes).unwrap();
    println!("fitted b = {:.6}, a = {:.6}, r2 = {}", fit.b, fit.a, fit.r2);
    println!("optimal step size: {}", optimal_lr(&fit).unwrap());
    println!(
        "predicted one-step loss reduction: {}",
        reduction_value(&fit, ValueConvention::Exact)
    );
    println!("current loss: {}", model.loss());
    // On a quadratic the prediction is exact: the reduction equals the
    // whole group loss and the optimal step is 1/curvature.
}
