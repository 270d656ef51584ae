//! Trend-level inference cost model.
//!
//! Prefill latency (a time-to-first-token proxy) is modelled as a quadratic
//! in sequence length, `T(s) = a2*s^2 + a1*s + a0`; per-token decode time as
//! a line, `D(s) = b1*s + b0`, with throughput `1000 / D(s)` tokens per
//! second when `D` is in milliseconds. Both are fitted by least squares to
//! caller-supplied measurements. Only language-model-side sequence length
//! effects are captured; encoder and projector time are not modelled.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{HivtpError, Result};

const RANK_EPS: f64 = 1e-12;

/// One measured operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub tokens: f64,
    pub latency_ms: f64,
    /// Decode throughput in generated tokens per second, when measured.
    pub tokens_per_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefillModel {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl PrefillModel {
    pub fn predict(&self, tokens: f64) -> f64 {
        (self.a2 * tokens + self.a1) * tokens + self.a0
    }

    /// True when `T` is non-decreasing on `[lo, hi]`.
    pub fn is_monotone_on(&self, lo: f64, hi: f64) -> bool {
        let slope = |s: f64| 2.0 * self.a2 * s + self.a1;
        slope(lo) >= 0.0 && slope(hi) >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeModel {
    pub b1: f64,
    pub b0: f64,
}

impl DecodeModel {
    /// Milliseconds per generated token.
    pub fn time_per_token(&self, tokens: f64) -> f64 {
        self.b1 * tokens + self.b0
    }

    pub fn throughput(&self, tokens: f64) -> f64 {
        1000.0 / self.time_per_token(tokens)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostCoefficients {
    pub prefill: PrefillModel,
    pub decode: Option<DecodeModel>,
}

impl CostCoefficients {
    /// `key=value` lines; decode coefficients only when fitted.
    pub fn to_kv(&self) -> String {
        let p = &self.prefill;
        let mut out = format!("a2={:e}\na1={:e}\na0={:e}\n", p.a2, p.a1, p.a0);
        if let Some(d) = &self.decode {
            out.push_str(&format!("b1={:e}\nb0={:e}\n", d.b1, d.b0));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Speedup {
    /// `T(after) / T(before)`.
    pub ttft_ratio: f64,
    /// `D(before) / D(after)`, when a decode model exists.
    pub throughput_ratio: Option<f64>,
}

fn distinct(xs: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn check_finite(points: &[(f64, f64)]) -> Result<()> {
    if let Some(p) = points.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(HivtpError::Measurements(format!("non-finite point {p:?}")));
    }
    Ok(())
}

/// Least squares on powers `degree..=0` of `x / scale`. Returns coefficients
/// for the unscaled variable, highest power first.
fn polyfit(points: &[(f64, f64)], degree: usize) -> Result<Vec<f64>> {
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    let cols = degree + 1;
    let design = DMatrix::from_fn(points.len(), cols, |i, j| {
        (points[i].0 / scale).powi((degree - j) as i32)
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = design.svd(true, true);
    if svd.rank(RANK_EPS * svd.singular_values.max()) < cols {
        return Err(HivtpError::DegenerateDesign(format!(
            "degree-{degree} design over {} points is rank deficient",
            points.len()
        )));
    }
    let solved = svd
        .solve(&y, RANK_EPS)
        .map_err(|e| HivtpError::DegenerateDesign(e.to_string()))?;
    Ok((0..cols)
        .map(|j| solved[j] / scale.powi((degree - j) as i32))
        .collect())
}

/// Quadratic fit of latency against tokens; `a2` is clamped at zero by
/// refitting a line when the unconstrained curvature is negative.
pub fn fit_prefill(points: &[(f64, f64)]) -> Result<PrefillModel> {
    check_finite(points)?;
    if distinct(points.iter().map(|p| p.0)) < 3 {
        return Err(HivtpError::InsufficientData(
            "prefill fit needs at least 3 distinct token counts".into(),
        ));
    }
    let c = polyfit(points, 2)?;
    if c[0] >= 0.0 {
        return Ok(PrefillModel {
            a2: c[0],
            a1: c[1],
            a0: c[2],
        });
    }
    let c = polyfit(points, 1)?;
    Ok(PrefillModel {
        a2: 0.0,
        a1: c[0],
        a0: c[1],
    })
}

/// Linear fit of per-token decode time against tokens, `b1` clamped at zero.
pub fn fit_decode(points: &[(f64, f64)]) -> Result<DecodeModel> {
    check_finite(points)?;
    if distinct(points.iter().map(|p| p.0)) < 2 {
        return Err(HivtpError::InsufficientData(
            "decode fit needs at least 2 distinct token counts".into(),
        ));
    }
    let c = polyfit(points, 1)?;
    if c[0] >= 0.0 {
        return Ok(DecodeModel { b1: c[0], b0: c[1] });
    }
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    Ok(DecodeModel { b1: 0.0, b0: mean })
}

/// Fits prefill from every measurement, and decode from those carrying a
/// throughput (when at least two distinct token counts do).
pub fn fit(measurements: &[Measurement]) -> Result<CostCoefficients> {
    let prefill_points: Vec<(f64, f64)> = measurements.iter().map(|m| (m.tokens, m.latency_ms)).collect();
    let prefill = fit_prefill(&prefill_points)?;
    let mut decode_points = Vec::new();
    for m in measurements {
        if let Some(tps) = m.tokens_per_s {
            if !(tps > 0.0 && tps.is_finite()) {
                return Err(HivtpError::Measurements(format!(
                    "throughput must be positive, got {tps}"
                )));
            }
            decode_points.push((m.tokens, 1000.0 / tps));
        }
    }
    let decode = if distinct(decode_points.iter().map(|p| p.0)) >= 2 {
        Some(fit_decode(&decode_points)?)
    } else {
        None
    };
    Ok(CostCoefficients { prefill, decode })
}

pub fn predict_speedup(coeffs: &CostCoefficients, tokens_before: f64, tokens_after: f64) -> Result<Speedup> {
    if !(tokens_before > 0.0 && tokens_after > 0.0) {
        return Err(HivtpError::Measurements(format!(
            "token counts must be positive, got {tokens_before} -> {tokens_after}"
        )));
    }
    let ttft_ratio = coeffs.prefill.predict(tokens_after) / coeffs.prefill.predict(tokens_before);
    let throughput_ratio = coeffs
        .decode
        .map(|d| d.time_per_token(tokens_before) / d.time_per_token(tokens_after));
    Ok(Speedup {
        ttft_ratio,
        throughput_ratio,
    })
}

/// Reads `tokens,latency_ms[,tokens_per_s]` rows. A leading header row and
/// `#` comment lines are skipped.
pub fn read_measurements(reader: impl Read) -> Result<Vec<Measurement>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record.map_err(|e| HivtpError::Measurements(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize| -> Option<Result<f64>> {
            record.get(i).filter(|f| !f.is_empty()).map(|f| {
                f.parse::<f64>()
                    .map_err(|_| HivtpError::Measurements(format!("row {}: cannot parse {f:?}", row + 1)))
            })
        };
        if row == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if !(2..=3).contains(&record.len()) {
            return Err(HivtpError::Measurements(format!(
                "row {}: expected tokens,latency_ms[,tokens_per_s]",
                row + 1
            )));
        }
        let missing = || HivtpError::Measurements(format!("row {}: missing field", row + 1));
        out.push(Measurement {
            tokens: field(0).ok_or_else(missing)??,
            latency_ms: field(1).ok_or_else(missing)??,
            tokens_per_s: field(2).transpose()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let m = fit_prefill(&[(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)]).unwrap();
        assert!((m.a2 - 1.0).abs() < 1e-9);
        assert!(m.a1.abs() < 1e-9);
        assert!(m.a0.abs() < 1e-9);
        let coeffs = CostCoefficients {
            prefill: m,
            decode: None,
        };
        let s = predict_speedup(&coeffs, 4.0, 2.0).unwrap();
        assert!((s.ttft_ratio - 0.25).abs() < 1e-9);
        assert_eq!(s.throughput_ratio, None);
    }

    #[test]
    fn constant_latency() {
        let flat = fit_prefill(&[(1.0, 3.0), (2.0, 3.0), (5.0, 3.0)]).unwrap();
        assert!(flat.a2.abs() < 1e-12 && flat.a1.abs() < 1e-12);
        assert!((flat.a0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_measured_points_are_monotone() {
        let m = fit_prefill(&[(576.0, 140.0), (282.0, 92.0), (142.0, 70.0)]).unwrap();
        assert!(m.a2 >= 0.0);
        assert!(m.is_monotone_on(100.0, 600.0));
    }

    #[test]
    fn negative_curvature_is_clamped() {
        // concave data: sqrt-like
        let pts: Vec<(f64, f64)> = (1..=6).map(|x| (x as f64, (x as f64).sqrt())).collect();
        let m = fit_prefill(&pts).unwrap();
        assert_eq!(m.a2, 0.0);
        assert!(m.a1 > 0.0);
    }

    #[test]
    fn decode_fit_and_clamp() {
        let d = fit_decode(&[(100.0, 30.0), (200.0, 40.0)]).unwrap();
        assert!((d.b1 - 0.1).abs() < 1e-12 && (d.b0 - 20.0).abs() < 1e-9);
        let d = fit_decode(&[(100.0, 40.0), (200.0, 30.0)]).unwrap();
        assert_eq!(d.b1, 0.0);
        assert!((d.b0 - 35.0).abs() < 1e-12);
        assert!((d.throughput(50.0) - 1000.0 / 35.0).abs() < 1e-12);
    }

    #[test]
    fn identity_speedup() {
        let coeffs = CostCoefficients {
            prefill: PrefillModel {
                a2: 1e-4,
                a1: 0.1,
                a0: 20.0,
            },
            decode: Some(DecodeModel { b1: 0.05, b0: 25.0 }),
        };
        let s = predict_speedup(&coeffs, 300.0, 300.0).unwrap();
        assert_eq!(s.ttft_ratio, 1.0);
        assert_eq!(s.throughput_ratio, Some(1.0));
        assert!(predict_speedup(&coeffs, 0.0, 1.0).is_err());
    }

    #[test]
    fn insufficient_and_bad_data() {
        assert!(matches!(
            fit_prefill(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)]),
            Err(HivtpError::InsufficientData(_))
        ));
        assert!(matches!(
            fit_decode(&[(1.0, 1.0)]),
            Err(HivtpError::InsufficientData(_))
        ));
        assert!(matches!(
            fit_prefill(&[(1.0, 1.0), (2.0, f64::NAN), (3.0, 3.0)]),
            Err(HivtpError::Measurements(_))
        ));
        assert!(matches!(
            fit_prefill(&[(1.0, 1.0), (1.0 + 1e-15, 2.0), (1.0 + 2e-15, 3.0)]),
            Err(HivtpError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn csv_parsing() {
        let text = "tokens,latency_ms,tokens_per_s\n# comment\n576,140,18.66\n282, 92 ,23.7\n142,70\n";
        let m = read_measurements(text.as_bytes()).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[1].latency_ms, 92.0);
        assert_eq!(m[0].tokens_per_s, Some(18.66));
        assert_eq!(m[2].tokens_per_s, None);
        let c = fit(&m).unwrap();
        assert!(c.decode.is_some());
        assert!(c.to_kv().contains("b1="));

        assert!(read_measurements("1,2\n3,x\n".as_bytes()).is_err());
        assert!(read_measurements("1,2,3,4\n".as_bytes()).is_err());
        let headerless = read_measurements("1,2\n2,3\n".as_bytes()).unwrap();
        assert_eq!(headerless.len(), 2);
    }
}
