use hivtp::costmodel::{fit, fit_decode, fit_prefill, predict_speedup, read_measurements};
use proptest::prelude::*;

const MEASURED_CSV: &str = "\
tokens,latency_ms,tokens_per_s
576,140,18.66
404,114,22.95
282,92,23.7
226,75,27.99
142,70,30.02
";

#[test]
fn measured_trend() {
    let m = read_measurements(MEASURED_CSV.as_bytes()).unwrap();
    let coeffs = fit(&m).unwrap();
    assert!(coeffs.prefill.a2 >= 0.0);
    assert!(coeffs.prefill.is_monotone_on(140.0, 620.0));
    let decode = coeffs.decode.unwrap();
    assert!(decode.b1 >= 0.0);
    let s = predict_speedup(&coeffs, 576.0, 142.0).unwrap();
    assert!(s.ttft_ratio < 1.0);
    assert!(s.throughput_ratio.unwrap() > 1.0);
}

proptest! {
    #[test]
    fn recovers_noiseless_quadratic(
        a2 in 1e-6f64..1e-3,
        a1 in 1e-2f64..1.0,
        a0 in 1.0f64..100.0,
        start in 50.0f64..200.0,
        step in 10.0f64..150.0,
        count in 3usize..12,
    ) {
        let pts: Vec<(f64, f64)> = (0..count)
            .map(|i| start + step * i as f64)
            .map(|s| (s, a2 * s * s + a1 * s + a0))
            .collect();
        let m = fit_prefill(&pts).unwrap();
        prop_assert!(((m.a2 - a2) / a2).abs() < 1e-6, "a2 {} vs {}", m.a2, a2);
        prop_assert!(((m.a1 - a1) / a1).abs() < 1e-6, "a1 {} vs {}", m.a1, a1);
        prop_assert!(((m.a0 - a0) / a0).abs() < 1e-6, "a0 {} vs {}", m.a0, a0);
    }

    #[test]
    fn recovers_noiseless_line(b1 in 1e-4f64..1.0, b0 in 1.0f64..100.0, count in 2usize..10) {
        let pts: Vec<(f64, f64)> = (0..count).map(|i| 100.0 + 60.0 * i as f64).map(|s| (s, b1 * s + b0)).collect();
        let d = fit_decode(&pts).unwrap();
        prop_assert!(((d.b1 - b1) / b1).abs() < 1e-6);
        prop_assert!(((d.b0 - b0) / b0).abs() < 1e-6);
    }

    #[test]
    fn fitted_models_are_monotone(seed_pts in prop::collection::vec((10.0f64..2000.0, 1.0f64..500.0, 1.0f64..100.0), 3..10)) {
        let mut pts = seed_pts;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1.0);
        prop_assume!(pts.len() >= 3);
        let prefill: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
        let decode: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.2)).collect();
        let m = fit_prefill(&prefill).unwrap();
        let d = fit_decode(&decode).unwrap();
        prop_assert!(m.a2 >= 0.0 && d.b1 >= 0.0);
        // decode time never shrinks with more tokens, so throughput never grows
        prop_assert!(d.time_per_token(2000.0) >= d.time_per_token(10.0));
        if m.a1 >= 0.0 {
            prop_assert!(m.is_monotone_on(10.0, 2000.0));
            prop_assert!(m.predict(2000.0) >= m.predict(10.0));
        }
    }
}
