//! Train the `planted8` preset with probing-derived step sizes and write
//! the influence trace to disk.
//!
//! ```bash
//! cargo run -p adapeft --example simulate_run
//! ```

use adapeft::influence::ValueConvention;
use adapeft::simulator::{presets, run_algorithm1, RunOptions, TrainingMask};
use adapeft::traces::TraceFile;

fn main() {
    let mut model = presets::build("planted8", 0.02, 7).unwrap();
    let mask = TrainingMask::all(&model);
    let options = RunOptions::default();

    let record = run_algorithm1(&mut model, 100, &mask, &options).unwrap();
    println!("initial loss: {:.6}", record.initial_loss());
    println!("final loss:   {:.6}", record.final_loss());

    println!("cumulative reduction values:");
    let mut values: Vec<(String, f64)> = record
        .cumulative_values(ValueConvention::Exact)
        .into_iter()
        .collect();
    values.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (group, value) in values {
        println!("  {group}\t{value:.4}");
    }

    let trace = TraceFile::from_influence(model.name(), &record.trace);
    let path = std::env::temp_dir().join("planted8.ppitrace");
    trace.write(&path).unwrap();
    println!("trace written to {}", path.display());
}
