//! Dependency-free SVG rendering of heatmap matrices.
//!
//! Cells map their value onto a fixed 9-step palette (dark = weak, light =
//! strong influence) scaled between the finite minimum and maximum of the
//! matrix. Output is deterministic, so renders can be golden-tested byte
//! for byte.

use std::fmt::Write;

use crate::traces::HeatmapMatrix;

/// Dark-to-light 9-step palette.
const PALETTE: [&str; 9] = [
    "#440154", "#472d7b", "#3b528b", "#2c728e", "#21918c", "#28ae80", "#5ec962", "#addc30",
    "#fde725",
];

const CELL_W: usize = 36;
const CELL_H: usize = 22;
const TOP_MARGIN: usize = 28;
const FONT: &str = "font-family=\"monospace\" font-size=\"12\"";

fn palette_index(value: f64, min: f64, max: f64) -> usize {
    if !value.is_finite() {
        return 0;
    }
    if max <= min {
        return PALETTE.len() - 1;
    }
    let t = (value - min) / (max - min);
    ((t * (PALETTE.len() - 1) as f64).round() as usize).min(PALETTE.len() - 1)
}

/// Renders the matrix as a standalone SVG document with group labels on
/// the left and iteration labels on top.
pub fn heatmap_svg(matrix: &HeatmapMatrix) -> String {
    let longest_name = matrix.groups.iter().map(String::len).max().unwrap_or(0);
    let left_margin = 16 + 8 * longest_name;
    let width = left_margin + CELL_W * matrix.iterations.len() + 8;
    let height = TOP_MARGIN + CELL_H * matrix.groups.len() + 8;

    let finite: Vec<f64> = matrix
        .values
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(
        out,
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    )
    .unwrap();

    for (j, iteration) in matrix.iterations.iter().enumerate() {
        let x = left_margin + j * CELL_W + CELL_W / 2;
        writeln!(
            out,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" {FONT}>{iteration}</text>",
            TOP_MARGIN - 8
        )
        .unwrap();
    }

    for (i, group) in matrix.groups.iter().enumerate() {
        let y = TOP_MARGIN + i * CELL_H;
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT}>{group}</text>",
            left_margin - 6,
            y + CELL_H / 2 + 4
        )
        .unwrap();
        for (j, &value) in matrix.values[i].iter().enumerate() {
            let x = left_margin + j * CELL_W;
            let color = PALETTE[palette_index(value, min, max)];
            writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{color}\"><title>{group} @ {it}: {value}</title></rect>",
                it = matrix.iterations[j]
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HeatmapMatrix {
        HeatmapMatrix {
            groups: vec!["ref".into(), "hot".into()],
            iterations: vec![0, 16],
            values: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
        }
    }

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let a = heatmap_svg(&sample());
        let b = heatmap_svg(&sample());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<rect").count(), 1 + 4, "background + 4 cells");
    }

    #[test]
    fn extremes_use_palette_ends() {
        let svg = heatmap_svg(&sample());
        assert!(svg.contains(PALETTE[0]));
        assert!(svg.contains(PALETTE[8]));
    }

    #[test]
    fn constant_matrix_renders_light_cells() {
        let m = HeatmapMatrix {
            groups: vec!["only".into()],
            iterations: vec![0],
            values: vec![vec![0.0]],
        };
        let svg = heatmap_svg(&m);
        assert!(svg.contains(PALETTE[8]));
    }

    #[test]
    fn non_finite_values_fall_to_the_dark_end() {
        assert_eq!(palette_index(f64::NEG_INFINITY, 0.0, 1.0), 0);
        assert_eq!(palette_index(0.5, 0.0, 1.0), 4);
        assert_eq!(palette_index(1.0, 0.0, 1.0), 8);
    }
}
