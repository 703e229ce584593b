//! Measurement ingestion and decorrelation.
//!
//! Raw amplitude traces come position-stamped along a drive track. Fast
//! fading makes successive samples strongly correlated, while the chain
//! estimators assume conditionally independent observations, so traces are
//! down-sampled to a minimum spatial separation (1 m by convention) before
//! any estimation.
//!
//! File formats, bit-exact:
//!
//! - Trace CSV: header `position_m,amplitude` (or `position_m,amplitude_db`,
//!   which triggers dB-to-linear conversion on load), UTF-8, `.` decimal
//!   separator, one record per line.
//! - Observation CSV: a single `amplitude` column.
//!
//! Amplitudes are treated as linear signal envelopes throughout; dB inputs
//! are converted with the amplitude rule `10^(v/20)`, not the power rule.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// A position-stamped amplitude record sequence with monotone non-decreasing
/// positions (meters along the track).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTrace {
    positions: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl MeasurementTrace {
    pub fn new(positions: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::LengthMismatch(format!(
                "{} positions vs {} amplitudes",
                positions.len(),
                amplitudes.len()
            )));
        }
        if positions.is_empty() {
            return Err(Error::InvalidInput("empty trace".into()));
        }
        if positions.iter().chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trace contains non-finite values".into()));
        }
        if positions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("positions must be sorted".into()));
        }
        Ok(MeasurementTrace {
            positions,
            amplitudes,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// A vector of amplitude observations, optionally tagged with the spatial
/// spacing it was down-sampled to and the trace it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    samples: Vec<f64>,
    pub spacing_m: Option<f64>,
    pub trace_id: Option<String>,
}

impl ObservationSequence {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty observation sequence".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "observation sequence contains non-finite values".into(),
            ));
        }
        Ok(ObservationSequence {
            samples,
            spacing_m: None,
            trace_id: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Convert dB values to linear amplitudes: `10^(v/20)` per element.
pub fn db_to_linear(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| 10f64.powf(v / 20.0)).collect()
}

/// Load a trace CSV. A `position_m,amplitude_db` header converts the
/// amplitude column to linear on the fly. Rows with non-parseable or
/// non-finite fields are rejected with 1-based row numbers.
pub fn load_trace(path: impl AsRef<Path>) -> Result<MeasurementTrace> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;

    let headers = reader
        .headers()
        .map_err(|e| csv_open_error(path, e))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let in_db = match cols.as_slice() {
        ["position_m", "amplitude"] => false,
        ["position_m", "amplitude_db"] => true,
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: 0,
                msg: format!(
                    "expected header `position_m,amplitude` or `position_m,amplitude_db`, got `{}`",
                    cols.join(",")
                ),
            })
        }
    };

    let mut positions = Vec::new();
    let mut amplitudes = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| parse_error(path, row, e.to_string()))?;
        let pos = parse_field(path, row, record.get(0), "position_m")?;
        let amp = parse_field(path, row, record.get(1), if in_db { "amplitude_db" } else { "amplitude" })?;
        if let Some(prev) = positions.last() {
            if pos < *prev {
                return Err(parse_error(
                    path,
                    row,
                    format!("position {pos} is before previous position {prev}"),
                ));
            }
        }
        positions.push(pos);
        amplitudes.push(if in_db { 10f64.powf(amp / 20.0) } else { amp });
    }
    MeasurementTrace::new(positions, amplitudes)
}

/// Write a trace as `position_m,amplitude` CSV. Values use the shortest
/// round-tripping decimal form, so save-then-load reproduces the trace
/// exactly.
pub fn save_trace(trace: &MeasurementTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("position_m,amplitude\n");
    for (p, a) in trace.positions.iter().zip(&trace.amplitudes) {
        out.push_str(&format!("{p},{a}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a single-column `amplitude` CSV as an observation sequence.
pub fn load_observations(path: impl AsRef<Path>) -> Result<ObservationSequence> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_open_error(path, e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["amplitude"] {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            msg: "expected header `amplitude`".into(),
        });
    }
    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| parse_error(path, row, e.to_string()))?;
        samples.push(parse_field(path, row, record.get(0), "amplitude")?);
    }
    ObservationSequence::new(samples)
}

/// Write an observation sequence as a single-column `amplitude` CSV.
pub fn save_observations(obs: &ObservationSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("amplitude\n");
    for v in obs.samples() {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Indices kept by [`downsample_by_distance`]: the first sample, then for
/// each grid point (last kept position + spacing) the first sample at or
/// beyond it. Genuine measured amplitudes are kept as-is; nothing is
/// interpolated.
pub fn downsample_indices(trace: &MeasurementTrace, spacing: f64) -> Result<Vec<usize>> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidInput(format!("spacing {spacing} must be positive")));
    }
    let pos = trace.positions();
    let mut kept = vec![0];
    let mut target = pos[0] + spacing;
    for (i, &p) in pos.iter().enumerate().skip(1) {
        if p >= target {
            kept.push(i);
            target = p + spacing;
        }
    }
    Ok(kept)
}

/// Down-sample a trace so consecutive samples are at least `spacing` meters
/// apart. The output carries the spacing in its metadata.
pub fn downsample_by_distance(trace: &MeasurementTrace, spacing: f64) -> Result<ObservationSequence> {
    let kept = downsample_indices(trace, spacing)?;
    let samples = kept.iter().map(|&i| trace.amplitudes()[i]).collect();
    let mut obs = ObservationSequence::new(samples)?;
    obs.spacing_m = Some(spacing);
    Ok(obs)
}

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io_err) = e.into_kind() {
                Error::io(path, io_err)
            } else {
                unreachable!()
            }
        }
        _ => parse_error(path, 0, e.to_string()),
    }
}

fn parse_error(path: &Path, row: usize, msg: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        msg,
    }
}

fn parse_field(path: &Path, row: usize, field: Option<&str>, name: &str) -> Result<f64> {
    let raw = field.ok_or_else(|| parse_error(path, row, format!("missing column `{name}`")))?;
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_error(path, row, format!("`{raw}` is not a number in column `{name}`")))?;
    if !value.is_finite() {
        return Err(parse_error(path, row, format!("non-finite value in column `{name}`")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_two_row_trace() {
        let f = write_tmp("position_m,amplitude\n0.0,1.01\n1.0,0.98\n");
        let trace = load_trace(f.path()).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.positions(), &[0.0, 1.0]);
        assert_eq!(trace.amplitudes(), &[1.01, 0.98]);
    }

    #[test]
    fn parse_error_names_row() {
        let f = write_tmp("position_m,amplitude\n0.0,abc\n");
        match load_trace(f.path()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unsorted_positions_rejected() {
        let f = write_tmp("position_m,amplitude\n1.0,0.5\n0.5,0.6\n");
        assert!(matches!(load_trace(f.path()), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn db_header_converts_amplitudes() {
        let f = write_tmp("position_m,amplitude_db\n0.0,0.0\n1.0,20.0\n");
        let trace = load_trace(f.path()).unwrap();
        assert_abs_diff_eq!(trace.amplitudes()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.amplitudes()[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let trace = MeasurementTrace::new(
            vec![0.0, 0.123456789012345, 7.0 / 3.0],
            vec![1.01, 0.97531, 2.0f64.sqrt()],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_trace(&trace, f.path()).unwrap();
        let back = load_trace(f.path()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn observations_round_trip() {
        let obs = ObservationSequence::new(vec![0.5, 1.25, 1.0 / 3.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_observations(&obs, f.path()).unwrap();
        let back = load_observations(f.path()).unwrap();
        assert_eq!(back.samples(), obs.samples());
    }

    #[test]
    fn db_to_linear_values() {
        let lin = db_to_linear(&[0.0, 20.0, -6.0206]);
        assert_abs_diff_eq!(lin[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lin[1], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lin[2], 0.5, epsilon = 1e-4);
    }

    #[test]
    fn downsample_hand_example() {
        let trace = MeasurementTrace::new(
            vec![0.0, 0.3, 0.9, 1.1, 2.2],
            vec![10.0, 20.0, 30.0, 40.0, 50.0],
        )
        .unwrap();
        let kept = downsample_indices(&trace, 1.0).unwrap();
        assert_eq!(kept, vec![0, 3, 4]);
        let obs = downsample_by_distance(&trace, 1.0).unwrap();
        assert_eq!(obs.samples(), &[10.0, 40.0, 50.0]);
        assert_eq!(obs.spacing_m, Some(1.0));
    }

    #[test]
    fn downsample_keeps_everything_when_gaps_are_large() {
        let trace =
            MeasurementTrace::new(vec![0.0, 2.0, 4.5], vec![1.0, 2.0, 3.0]).unwrap();
        let obs = downsample_by_distance(&trace, 1.0).unwrap();
        assert_eq!(obs.len(), trace.len());
    }

    #[test]
    fn downsample_single_record() {
        let trace = MeasurementTrace::new(vec![5.0], vec![0.7]).unwrap();
        let obs = downsample_by_distance(&trace, 1.0).unwrap();
        assert_eq!(obs.samples(), &[0.7]);
    }

    #[test]
    fn downsample_output_positions_respect_spacing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let step = rand_distr::Exp::new(3.0).unwrap();
        let mut pos = vec![0.0f64];
        for _ in 0..5000 {
            pos.push(pos.last().unwrap() + step.sample(&mut rng));
        }
        let amps = vec![1.0; pos.len()];
        let trace = MeasurementTrace::new(pos, amps).unwrap();
        let kept = downsample_indices(&trace, 1.0).unwrap();
        for w in kept.windows(2) {
            let gap = trace.positions()[w[1]] - trace.positions()[w[0]];
            assert!(gap >= 1.0, "gap {gap} below spacing");
        }
    }

    #[test]
    fn downsampling_reduces_lag1_autocorrelation() {
        // AR(1)-modulated fading trace sampled every 0.1 m; decimating to
        // 1 m must strictly lower the lag-1 autocorrelation.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::StandardNormal;
        let phi: f64 = 0.95;
        let n = 40_000;
        let mut x = 0.0f64;
        let mut amps = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        for i in 0..n {
            let z: f64 = normal.sample(&mut rng);
            x = phi * x + (1.0 - phi * phi).sqrt() * z;
            amps.push(1.0 + 0.3 * x);
            pos.push(0.1 * i as f64);
        }
        let lag1 = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let num: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
            let den: f64 = v.iter().map(|s| (s - mean) * (s - mean)).sum();
            num / den
        };
        let trace = MeasurementTrace::new(pos, amps).unwrap();
        let raw_corr = lag1(trace.amplitudes());
        let down = downsample_by_distance(&trace, 1.0).unwrap();
        let down_corr = lag1(down.samples());
        assert!(
            down_corr < raw_corr,
            "expected decorrelation: raw {raw_corr}, downsampled {down_corr}"
        );
        assert!(raw_corr > 0.9);
        assert!(down_corr < 0.7);
    }

    #[test]
    fn empty_and_nonfinite_sequences_rejected() {
        assert!(ObservationSequence::new(vec![]).is_err());
        assert!(ObservationSequence::new(vec![1.0, f64::NAN]).is_err());
        assert!(MeasurementTrace::new(vec![0.0], vec![f64::INFINITY]).is_err());
    }
}
