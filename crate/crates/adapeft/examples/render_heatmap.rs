//! Simulate a short run and render its influence trace as a heatmap TSV,
//! a heatmap SVG, and a cumulative-influence table.
//!
//! ```bash
//! cargo run -p adapeft --example render_heatmap
//! ```

use adapeft::influence::ValueConvention;
use adapeft::simulator::{presets, run_algorithm1, RunOptions, TrainingMask};
use adapeft::svg::heatmap_svg;
use adapeft::traces::{export_appi, export_heatmap, heatmap_tsv, HeatmapOptions, TraceFile};

fn main() {
    let mut model = presets::build("frontier6", 0.0, 1).unwrap();
    let mask = TrainingMask::all(&model);
    let options = RunOptions {
        lazy_period: Some(4),
        ..RunOptions::default()
    };
    let record = run_algorithm1(&mut model, 16, &mask, &options).unwrap();
    let trace = TraceFile::from_influence(model.name(), &record.trace);

    let matrix = export_heatmap(&trace, &HeatmapOptions::default()).unwrap();
    println!("{}", heatmap_tsv(&matrix));

    let dir = std::env::temp_dir();
    let svg_path = dir.join("frontier6_heatmap.svg");
    std::fs::write(&svg_path, heatmap_svg(&matrix)).unwrap();
    println!("svg written to {}", svg_path.display());

    let appi_path = dir.join("frontier6_appi.tsv");
    std::fs::write(
        &appi_path,
        export_appi(&trace, ValueConvention::Exact).unwrap(),
    )
    .unwrap();
    println!("cumulative influence written to {}", appi_path.display());
}
