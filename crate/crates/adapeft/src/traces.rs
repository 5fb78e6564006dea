//! Persistence and post-processing of influence traces.
//!
//! The `.ppitrace` format is line oriented so a run can append records as
//! it goes: line 1 is a JSON header with the schema version, model name and
//! group metadata; every following line is one `iteration,group,b,a,r2,valid`
//! record. Reals are written in shortest round-trip decimal form, so parsing
//! a serialized trace reproduces it bit for bit.
//!
//! Exports post-process the per-group PPI series the same way the figures
//! pipeline does: outlier removal by interquartile range, exponential
//! moving-average smoothing, division by a reference row, then log10. The
//! order is fixed; reordering the stages changes the output. A heatmap
//! column survives filtering only if every group's raw value at that
//! iteration lies inside its own IQR acceptance band, which keeps the
//! matrix rectangular.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::influence::{
    ppi, reduction_value, InfluenceError, InfluenceTrace, ParameterGroup, QuadraticFit,
    ValueConvention,
};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
/// Reference values with magnitude below this floor drop their column
/// instead of fabricating huge ratios.
pub const NORMALIZE_FLOOR: f64 = 1e-30;
/// Default smoothing factor of the moving average.
pub const DEFAULT_EMA_ALPHA: f64 = 0.3;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing or malformed JSON header: {0}")]
    BadHeader(String),
    #[error("unsupported trace schema version {0}")]
    SchemaVersion(u32),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("row references unknown group {0:?}")]
    UnknownGroup(String),
    #[error("duplicate record for group {group:?} at iteration {iteration}")]
    DuplicateRecord { group: String, iteration: u64 },
    #[error("group name {0:?} cannot contain commas, tabs or newlines")]
    UnserializableName(String),
    #[error("trace holds no records")]
    EmptyTrace,
    #[error("reference group {0:?} is not in the trace")]
    UnknownReference(String),
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMeta {
    pub name: String,
    pub size: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceHeader {
    schema: u32,
    model: String,
    groups: Vec<GroupMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub group: String,
    pub fit: QuadraticFit,
}

/// An influence trace as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub schema_version: u32,
    pub model_name: String,
    groups: Vec<GroupMeta>,
    rows: Vec<TraceRow>,
}

fn check_name(name: &str) -> Result<(), TraceError> {
    if name.contains(',') || name.contains('\t') || name.contains('\n') || name.is_empty() {
        return Err(TraceError::UnserializableName(name.to_string()));
    }
    Ok(())
}

impl TraceFile {
    pub fn new(model_name: impl Into<String>, groups: Vec<GroupMeta>) -> Result<Self, TraceError> {
        for g in &groups {
            check_name(&g.name)?;
        }
        Ok(Self {
            schema_version: TRACE_SCHEMA_VERSION,
            model_name: model_name.into(),
            groups,
            rows: Vec::new(),
        })
    }

    pub fn groups(&self) -> &[GroupMeta] {
        &self.groups
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    /// Distinct record iterations in ascending order.
    pub fn iterations(&self) -> Vec<u64> {
        let mut its: Vec<u64> = self.rows.iter().map(|r| r.iteration).collect();
        its.sort_unstable();
        its.dedup();
        its
    }

    pub fn push_row(
        &mut self,
        iteration: u64,
        group: &str,
        fit: QuadraticFit,
    ) -> Result<(), TraceError> {
        if !self.groups.iter().any(|g| g.name == group) {
            return Err(TraceError::UnknownGroup(group.to_string()));
        }
        if self
            .rows
            .iter()
            .any(|r| r.iteration == iteration && r.group == group)
        {
            return Err(TraceError::DuplicateRecord {
                group: group.to_string(),
                iteration,
            });
        }
        self.rows.push(TraceRow {
            iteration,
            group: group.to_string(),
            fit,
        });
        Ok(())
    }

    pub fn from_influence(model_name: impl Into<String>, trace: &InfluenceTrace) -> Self {
        let groups = trace
            .groups()
            .iter()
            .map(|g| GroupMeta {
                name: g.name.clone(),
                size: g.size,
            })
            .collect();
        let mut file = Self {
            schema_version: TRACE_SCHEMA_VERSION,
            model_name: model_name.into(),
            groups,
            rows: Vec::new(),
        };
        for (ii, &iteration) in trace.iterations().iter().enumerate() {
            for (gi, group) in trace.groups().iter().enumerate() {
                if let Some(fit) = trace.record(gi, ii) {
                    file.rows.push(TraceRow {
                        iteration,
                        group: group.name.clone(),
                        fit: *fit,
                    });
                }
            }
        }
        file
    }

    pub fn to_influence(&self) -> Result<InfluenceTrace, TraceError> {
        let groups: Result<Vec<ParameterGroup>, InfluenceError> = self
            .groups
            .iter()
            .map(|g| ParameterGroup::new(g.name.clone(), g.size))
            .collect();
        let mut trace = InfluenceTrace::new(groups?)?;
        for iteration in self.iterations() {
            let fits = self
                .groups
                .iter()
                .map(|g| {
                    self.rows
                        .iter()
                        .find(|r| r.iteration == iteration && r.group == g.name)
                        .map(|r| r.fit)
                })
                .collect();
            trace.push_iteration(iteration, fits)?;
        }
        Ok(trace)
    }

    pub fn serialize(&self) -> String {
        let header = TraceHeader {
            schema: self.schema_version,
            model: self.model_name.clone(),
            groups: self.groups.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.iteration, row.group, row.fit.b, row.fit.a, row.fit.r2, row.fit.valid
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| TraceError::BadHeader("empty file".into()))?;
        let header: TraceHeader =
            serde_json::from_str(header_line).map_err(|e| TraceError::BadHeader(e.to_string()))?;
        if header.schema != TRACE_SCHEMA_VERSION {
            return Err(TraceError::SchemaVersion(header.schema));
        }
        let mut file = TraceFile::new(header.model, header.groups)?;
        for (index, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| TraceError::BadRow {
                line: index + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad("expected 6 comma-separated fields"));
            }
            let iteration: u64 = fields[0].parse().map_err(|_| bad("bad iteration"))?;
            let b: f64 = fields[2].parse().map_err(|_| bad("bad b"))?;
            let a: f64 = fields[3].parse().map_err(|_| bad("bad a"))?;
            let r2: f64 = fields[4].parse().map_err(|_| bad("bad r2"))?;
            let valid: bool = fields[5].parse().map_err(|_| bad("bad valid flag"))?;
            file.push_row(iteration, fields[1], QuadraticFit { b, a, r2, valid })?;
        }
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        fs::write(path, self.serialize())?;
        Ok(())
    }

    /// Raw per-group PPI series over [`Self::iterations`]; absent and
    /// invalid records contribute zero.
    pub fn ppi_series(&self, convention: ValueConvention) -> Vec<(String, Vec<f64>)> {
        let iterations = self.iterations();
        self.groups
            .iter()
            .map(|meta| {
                let group = ParameterGroup {
                    name: meta.name.clone(),
                    size: meta.size,
                };
                let series = iterations
                    .iter()
                    .map(|&it| {
                        self.rows
                            .iter()
                            .find(|r| r.iteration == it && r.group == meta.name)
                            .map(|r| ppi(&r.fit, &group, convention))
                            .unwrap_or(0.0)
                    })
                    .collect();
                (meta.name.clone(), series)
            })
            .collect()
    }
}

/// Append-only writer for streaming records during a run.
pub struct TraceWriter<W: Write> {
    inner: W,
    groups: Vec<GroupMeta>,
}

impl TraceWriter<BufWriter<fs::File>> {
    pub fn create(
        path: impl AsRef<Path>,
        model_name: &str,
        groups: Vec<GroupMeta>,
    ) -> Result<Self, TraceError> {
        Self::new(BufWriter::new(fs::File::create(path)?), model_name, groups)
    }
}

impl<W: Write> TraceWriter<W> {
    /// Writes the JSON header immediately; records follow via [`Self::append`].
    pub fn new(mut inner: W, model_name: &str, groups: Vec<GroupMeta>) -> Result<Self, TraceError> {
        for g in &groups {
            check_name(&g.name)?;
        }
        let header = TraceHeader {
            schema: TRACE_SCHEMA_VERSION,
            model: model_name.to_string(),
            groups: groups.clone(),
        };
        serde_json::to_writer(&mut inner, &header).map_err(io::Error::other)?;
        inner.write_all(b"\n")?;
        Ok(Self { inner, groups })
    }

    pub fn append(
        &mut self,
        iteration: u64,
        group: &str,
        fit: &QuadraticFit,
    ) -> Result<(), TraceError> {
        if !self.groups.iter().any(|g| g.name == group) {
            return Err(TraceError::UnknownGroup(group.to_string()));
        }
        writeln!(
            self.inner,
            "{},{},{},{},{},{}",
            iteration, group, fit.b, fit.a, fit.r2, fit.valid
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), TraceError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Percentile by linear interpolation between closest ranks of the sorted
/// series, `index = p * (n - 1)`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let position = p * (sorted.len() - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    if lower == upper {
        sorted[lower]
    } else {
        let weight = position - lower as f64;
        sorted[lower] * (1.0 - weight) + sorted[upper] * weight
    }
}

/// Acceptance band `[Q1 - 3*iqr, Q3 + 3*iqr]` of a nonempty series.
pub fn iqr_band(series: &[f64]) -> (f64, f64) {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite series"));
    let q1 = percentile(&sorted, 0.25);
    let q3 = percentile(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - 3.0 * iqr, q3 + 3.0 * iqr)
}

/// Keeps the subsequence of values inside the IQR acceptance band.
pub fn iqr_filter(series: &[f64]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = iqr_band(series);
    series
        .iter()
        .copied()
        .filter(|v| (lo..=hi).contains(v))
        .collect()
}

/// Exponential moving average: `s_0 = v_0`, `s_i = alpha*v_i + (1-alpha)*s_{i-1}`.
pub fn ema_smooth(series: &[f64], alpha: f64) -> Result<Vec<f64>, TraceError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TraceError::BadAlpha(alpha));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut state = f64::NAN;
    for (i, &v) in series.iter().enumerate() {
        state = if i == 0 {
            v
        } else {
            alpha * v + (1.0 - alpha) * state
        };
        out.push(state);
    }
    Ok(out)
}

/// One group's PPI series after outlier filtering and smoothing, aligned
/// to the iterations that survived filtering. Smoothing is a convex
/// combination, so every value stays inside the raw series' acceptance
/// band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessedSeries {
    pub group: String,
    pub iterations: Vec<u64>,
    pub values: Vec<f64>,
}

/// Filters and smooths each group's PPI series. An iteration survives only
/// if every group's raw value lies inside that group's own IQR band, so
/// all returned series stay aligned on the same iterations.
pub fn process_series(
    trace: &TraceFile,
    alpha: f64,
    convention: ValueConvention,
) -> Result<Vec<ProcessedSeries>, TraceError> {
    if trace.rows.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let raw = trace.ppi_series(convention);
    let iterations = trace.iterations();
    let bands: Vec<(f64, f64)> = raw.iter().map(|(_, s)| iqr_band(s)).collect();
    let keep: Vec<usize> = (0..iterations.len())
        .filter(|&j| {
            raw.iter()
                .zip(&bands)
                .all(|((_, s), (lo, hi))| (*lo..=*hi).contains(&s[j]))
        })
        .collect();
    let kept_iterations: Vec<u64> = keep.iter().map(|&j| iterations[j]).collect();
    raw.into_iter()
        .map(|(group, series)| {
            let filtered: Vec<f64> = keep.iter().map(|&j| series[j]).collect();
            Ok(ProcessedSeries {
                group,
                iterations: kept_iterations.clone(),
                values: ema_smooth(&filtered, alpha)?,
            })
        })
        .collect()
}

/// A rectangular group-by-iteration matrix of processed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapMatrix {
    pub groups: Vec<String>,
    pub iterations: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

/// Divides each row elementwise by the reference row, which becomes all
/// ones. Columns where the reference magnitude is below `floor` are dropped
/// with a warning rather than producing fabricated ratios.
pub fn normalize_rows(
    matrix: &HeatmapMatrix,
    reference_group: &str,
    floor: f64,
) -> Result<HeatmapMatrix, TraceError> {
    let ref_index = matrix
        .groups
        .iter()
        .position(|g| g == reference_group)
        .ok_or_else(|| TraceError::UnknownReference(reference_group.to_string()))?;
    let keep: Vec<usize> = (0..matrix.iterations.len())
        .filter(|&j| {
            let ok = matrix.values[ref_index][j].abs() >= floor;
            if !ok {
                log::warn!(
                    "dropping iteration {} from the heatmap: reference {:?} is below the {} floor",
                    matrix.iterations[j],
                    reference_group,
                    floor
                );
            }
            ok
        })
        .collect();
    let iterations = keep.iter().map(|&j| matrix.iterations[j]).collect();
    let values = matrix
        .values
        .iter()
        .map(|row| {
            keep.iter()
                .map(|&j| row[j] / matrix.values[ref_index][j])
                .collect()
        })
        .collect();
    Ok(HeatmapMatrix {
        groups: matrix.groups.clone(),
        iterations,
        values,
    })
}

#[derive(Debug, Clone)]
pub struct HeatmapOptions {
    pub alpha: f64,
    /// Reference row for normalization; defaults to the first group.
    pub reference_group: Option<String>,
    pub convention: ValueConvention,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_EMA_ALPHA,
            reference_group: None,
            convention: ValueConvention::default(),
        }
    }
}

/// Full heatmap pipeline: PPI series, IQR column filter, EMA smoothing,
/// row normalization, log10.
pub fn export_heatmap(
    trace: &TraceFile,
    options: &HeatmapOptions,
) -> Result<HeatmapMatrix, TraceError> {
    let processed = process_series(trace, options.alpha, options.convention)?;
    let matrix = HeatmapMatrix {
        groups: processed.iter().map(|s| s.group.clone()).collect(),
        iterations: processed[0].iterations.clone(),
        values: processed.into_iter().map(|s| s.values).collect(),
    };

    let reference = options
        .reference_group
        .clone()
        .unwrap_or_else(|| matrix.groups[0].clone());
    let mut normalized = normalize_rows(&matrix, &reference, NORMALIZE_FLOOR)?;
    for row in &mut normalized.values {
        for v in row {
            *v = v.log10();
        }
    }
    Ok(normalized)
}

/// Tab-separated heatmap: a header row of iterations, then one row per
/// group with the group name in the first column.
pub fn heatmap_tsv(matrix: &HeatmapMatrix) -> String {
    let mut out = String::from("group");
    for it in &matrix.iterations {
        write!(out, "\t{it}").unwrap();
    }
    out.push('\n');
    for (group, row) in matrix.groups.iter().zip(&matrix.values) {
        out.push_str(group);
        for v in row {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Long-format cumulative influence export, one `iteration group appi
/// cum_value` row per record slot. APPI is the running sum of raw PPI;
/// `cum_value` is the running sum of raw reduction values, which is the
/// series comparable to observed loss drops.
pub fn export_appi(trace: &TraceFile, convention: ValueConvention) -> Result<String, TraceError> {
    let iterations = trace.iterations();
    let mut out = String::from("iteration\tgroup\tappi\tcum_value\n");
    let mut appi = vec![0.0f64; trace.groups.len()];
    let mut cum = vec![0.0f64; trace.groups.len()];
    for &iteration in &iterations {
        for (gi, meta) in trace.groups.iter().enumerate() {
            let group = ParameterGroup {
                name: meta.name.clone(),
                size: meta.size,
            };
            if let Some(row) = trace
                .rows
                .iter()
                .find(|r| r.iteration == iteration && r.group == meta.name)
            {
                appi[gi] += ppi(&row.fit, &group, convention);
                cum[gi] += reduction_value(&row.fit, convention);
            }
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                iteration, meta.name, appi[gi], cum[gi]
            )
            .unwrap();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(names_sizes: &[(&str, u64)]) -> Vec<GroupMeta> {
        names_sizes
            .iter()
            .map(|&(name, size)| GroupMeta {
                name: name.into(),
                size,
            })
            .collect()
    }

    fn valid_fit(b: f64, a: f64) -> QuadraticFit {
        QuadraticFit::gated(b, a, 1.0)
    }

    #[test]
    fn iqr_keeps_constant_series() {
        let s = vec![5.0; 6];
        assert_eq!(iqr_filter(&s), s);
    }

    #[test]
    fn iqr_drops_the_far_outlier() {
        // Q1=2, Q3=4, iqr=2, band [-4, 10].
        let s = [1.0, 2.0, 3.0, 4.0, 1000.0];
        assert_eq!(iqr_filter(&s), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn iqr_is_identity_inside_the_band() {
        let s = [3.0, 1.0, 2.0, 2.5];
        assert_eq!(iqr_filter(&s), s.to_vec());
    }

    #[test]
    fn ema_alpha_one_is_identity() {
        let s = [4.0, -1.0, 7.5];
        assert_eq!(ema_smooth(&s, 1.0).unwrap(), s.to_vec());
    }

    #[test]
    fn ema_keeps_constants() {
        let s = [2.5; 5];
        assert_eq!(ema_smooth(&s, 0.3).unwrap(), s.to_vec());
    }

    #[test]
    fn ema_one_step_recurrence() {
        assert_eq!(ema_smooth(&[0.0, 1.0], 0.5).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn ema_rejects_bad_alpha() {
        assert!(matches!(
            ema_smooth(&[1.0], 0.0),
            Err(TraceError::BadAlpha(_))
        ));
        assert!(matches!(
            ema_smooth(&[1.0], 1.5),
            Err(TraceError::BadAlpha(_))
        ));
    }

    fn matrix(groups: &[&str], iterations: &[u64], values: &[&[f64]]) -> HeatmapMatrix {
        HeatmapMatrix {
            groups: groups.iter().map(|s| s.to_string()).collect(),
            iterations: iterations.to_vec(),
            values: values.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn normalize_reference_row_becomes_ones() {
        let m = matrix(&["ref", "double"], &[0, 1], &[&[2.0, 4.0], &[4.0, 8.0]]);
        let n = normalize_rows(&m, "ref", NORMALIZE_FLOOR).unwrap();
        assert_eq!(n.values[0], vec![1.0, 1.0]);
        assert_eq!(n.values[1], vec![2.0, 2.0]);
    }

    #[test]
    fn normalize_drops_columns_below_floor() {
        let m = matrix(
            &["ref", "x"],
            &[0, 1, 2],
            &[&[1.0, 0.0, 2.0], &[3.0, 9.0, 4.0]],
        );
        let n = normalize_rows(&m, "ref", NORMALIZE_FLOOR).unwrap();
        assert_eq!(n.iterations, vec![0, 2]);
        assert_eq!(n.values[1], vec![3.0, 2.0]);
    }

    #[test]
    fn normalize_unknown_reference_errors() {
        let m = matrix(&["a"], &[0], &[&[1.0]]);
        assert!(matches!(
            normalize_rows(&m, "nope", NORMALIZE_FLOOR),
            Err(TraceError::UnknownReference(_))
        ));
    }

    fn constant_trace(per_group: &[(&str, u64, f64, f64)], iterations: &[u64]) -> TraceFile {
        let groups = meta(
            &per_group
                .iter()
                .map(|&(n, s, _, _)| (n, s))
                .collect::<Vec<_>>(),
        );
        let mut trace = TraceFile::new("fixture", groups).unwrap();
        for &it in iterations {
            for &(name, _, b, a) in per_group {
                trace.push_row(it, name, valid_fit(b, a)).unwrap();
            }
        }
        trace
    }

    #[test]
    fn heatmap_of_identical_series_is_all_zero() {
        let trace = constant_trace(&[("a", 2, 2.0, 2.0), ("b", 2, 2.0, 2.0)], &[0, 16, 32]);
        let m = export_heatmap(&trace, &HeatmapOptions::default()).unwrap();
        assert!(m.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_single_group_is_zero_row() {
        let trace = constant_trace(&[("only", 3, 6.0, 2.0)], &[0, 1]);
        let m = export_heatmap(&trace, &HeatmapOptions::default()).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn heatmap_hundredfold_group_renders_two() {
        // PPI of the reference: (b^2/2a)/size = 1.0; second group 100x.
        let trace = constant_trace(&[("ref", 2, 2.0, 1.0), ("hot", 2, 20.0, 1.0)], &[0, 16]);
        let m = export_heatmap(&trace, &HeatmapOptions::default()).unwrap();
        assert_eq!(m.values[0], vec![0.0, 0.0]);
        assert_eq!(m.values[1], vec![2.0, 2.0]);
    }

    #[test]
    fn heatmap_of_empty_trace_errors() {
        let trace = TraceFile::new("empty", meta(&[("a", 1)])).unwrap();
        assert!(matches!(
            export_heatmap(&trace, &HeatmapOptions::default()),
            Err(TraceError::EmptyTrace)
        ));
    }

    #[test]
    fn heatmap_row_mean_order_follows_raw_ppi_on_constants() {
        let trace = constant_trace(
            &[
                ("r", 2, 2.0, 1.0),
                ("mid", 2, 6.0, 1.0),
                ("top", 2, 20.0, 1.0),
            ],
            &[0, 1, 2],
        );
        let m = export_heatmap(&trace, &HeatmapOptions::default()).unwrap();
        let mean = |row: &Vec<f64>| row.iter().sum::<f64>() / row.len() as f64;
        assert!(mean(&m.values[2]) > mean(&m.values[1]));
        assert!(mean(&m.values[1]) > mean(&m.values[0]));
    }

    #[test]
    fn processed_series_stay_inside_the_raw_band() {
        let groups = meta(&[("a", 2), ("b", 4)]);
        let mut trace = TraceFile::new("t", groups).unwrap();
        // Group a has a wild outlier at iteration 3; group b is tame.
        for (it, b_coeff) in [(0u64, 2.0), (1, 2.2), (2, 1.9), (3, 400.0), (4, 2.1)] {
            trace.push_row(it, "a", valid_fit(b_coeff, 1.0)).unwrap();
            trace.push_row(it, "b", valid_fit(4.0, 2.0)).unwrap();
        }
        let raw = trace.ppi_series(ValueConvention::Exact);
        let processed = process_series(&trace, 0.3, ValueConvention::Exact).unwrap();
        assert_eq!(processed.len(), 2);
        for (series, (_, raw_series)) in processed.iter().zip(&raw) {
            let (lo, hi) = iqr_band(raw_series);
            assert_eq!(series.iterations.len(), series.values.len());
            for v in &series.values {
                assert!(*v >= lo && *v <= hi);
            }
        }
        // The outlier column is gone for every group.
        assert!(!processed[0].iterations.contains(&3));
        assert!(!processed[1].iterations.contains(&3));
    }

    #[test]
    fn appi_export_single_record() {
        let mut trace = TraceFile::new("t", meta(&[("g", 2)])).unwrap();
        trace.push_row(0, "g", valid_fit(2.0, 1.0)).unwrap();
        let out = export_appi(&trace, ValueConvention::Exact).unwrap();
        assert_eq!(out, "iteration\tgroup\tappi\tcum_value\n0\tg\t1\t2\n");
    }

    #[test]
    fn appi_export_all_invalid_is_zero() {
        let mut trace = TraceFile::new("t", meta(&[("g", 2)])).unwrap();
        trace
            .push_row(0, "g", QuadraticFit::gated(-1.0, 1.0, 1.0))
            .unwrap();
        trace
            .push_row(1, "g", QuadraticFit::gated(1.0, 1.0, 0.5))
            .unwrap();
        let out = export_appi(&trace, ValueConvention::Exact).unwrap();
        assert_eq!(
            out,
            "iteration\tgroup\tappi\tcum_value\n0\tg\t0\t0\n1\tg\t0\t0\n"
        );
    }

    #[test]
    fn appi_export_is_a_prefix_sum() {
        let mut trace = TraceFile::new("t", meta(&[("g", 1)])).unwrap();
        trace.push_row(0, "g", valid_fit(2.0, 1.0)).unwrap(); // value 2
        trace.push_row(5, "g", valid_fit(4.0, 2.0)).unwrap(); // value 4
        let out = export_appi(&trace, ValueConvention::Exact).unwrap();
        assert_eq!(
            out,
            "iteration\tgroup\tappi\tcum_value\n0\tg\t2\t2\n5\tg\t6\t6\n"
        );
    }

    #[test]
    fn trace_round_trips_through_text() {
        let mut trace = TraceFile::new("model-x", meta(&[("a", 3), ("b", 7)])).unwrap();
        trace.push_row(0, "a", valid_fit(1.5, 0.25)).unwrap();
        trace
            .push_row(0, "b", QuadraticFit::gated(-0.1, 3.0, 0.5))
            .unwrap();
        trace.push_row(16, "a", valid_fit(1e-300, 2e17)).unwrap();
        let text = trace.serialize();
        let parsed = TraceFile::parse(&text).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn writer_and_parser_agree() {
        let mut buffer = Vec::new();
        {
            let mut writer = TraceWriter::new(&mut buffer, "streamed", meta(&[("g0", 5)])).unwrap();
            writer.append(0, "g0", &valid_fit(3.0, 2.0)).unwrap();
            writer.append(4, "g0", &valid_fit(1.0, 1.0)).unwrap();
            writer.finish().unwrap();
        }
        let parsed = TraceFile::parse(std::str::from_utf8(&buffer).unwrap()).unwrap();
        assert_eq!(parsed.rows().len(), 2);
        assert_eq!(parsed.rows()[1].iteration, 4);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            TraceFile::parse(""),
            Err(TraceError::BadHeader(_))
        ));
        assert!(matches!(
            TraceFile::parse("not json\n"),
            Err(TraceError::BadHeader(_))
        ));
        let bad_schema = r#"{"schema":99,"model":"m","groups":[]}"#;
        assert!(matches!(
            TraceFile::parse(bad_schema),
            Err(TraceError::SchemaVersion(99))
        ));
        let bad_row =
            "{\"schema\":1,\"model\":\"m\",\"groups\":[{\"name\":\"g\",\"size\":1}]}\n0,g,1,2\n";
        assert!(matches!(
            TraceFile::parse(bad_row),
            Err(TraceError::BadRow { line: 2, .. })
        ));
        let unknown_group =
            "{\"schema\":1,\"model\":\"m\",\"groups\":[{\"name\":\"g\",\"size\":1}]}\n0,h,1,2,1,true\n";
        assert!(matches!(
            TraceFile::parse(unknown_group),
            Err(TraceError::UnknownGroup(_))
        ));
    }

    #[test]
    fn duplicate_records_are_rejected() {
        let mut trace = TraceFile::new("t", meta(&[("g", 1)])).unwrap();
        trace.push_row(0, "g", valid_fit(1.0, 1.0)).unwrap();
        assert!(matches!(
            trace.push_row(0, "g", valid_fit(2.0, 1.0)),
            Err(TraceError::DuplicateRecord { .. })
        ));
    }

    proptest! {
        #[test]
        fn serialization_is_bit_exact(
            rows in proptest::collection::vec(
                (
                    0u64..1000,
                    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                ),
                0..40,
            ),
        ) {
            let mut trace = TraceFile::new("prop", meta(&[("g0", 1)])).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for (it, b, a, r2) in rows {
                if seen.insert(it) {
                    trace.push_row(it, "g0", QuadraticFit::gated(b, a, r2)).unwrap();
                }
            }
            let parsed = TraceFile::parse(&trace.serialize()).unwrap();
            prop_assert_eq!(parsed.rows().len(), trace.rows().len());
            for (p, o) in parsed.rows().iter().zip(trace.rows()) {
                prop_assert_eq!(p.iteration, o.iteration);
                prop_assert_eq!(p.fit.b.to_bits(), o.fit.b.to_bits());
                prop_assert_eq!(p.fit.a.to_bits(), o.fit.a.to_bits());
                prop_assert_eq!(p.fit.r2.to_bits(), o.fit.r2.to_bits());
                prop_assert_eq!(p.fit.valid, o.fit.valid);
            }
        }

        #[test]
        fn second_filter_pass_removes_no_more(
            series in proptest::collection::vec(-1e6..1e6f64, 1..50),
        ) {
            let once = iqr_filter(&series);
            let twice = iqr_filter(&once);
            let removed_first = series.len() - once.len();
            let removed_second = once.len() - twice.len();
            prop_assert!(removed_second <= removed_first);
        }

        #[test]
        fn ema_stays_within_series_bounds(
            series in proptest::collection::vec(-1e6..1e6f64, 1..50),
            alpha in 0.01..1.0f64,
        ) {
            let smoothed = ema_smooth(&series, alpha).unwrap();
            let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in smoothed {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
