use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use cemsim_core::experiment::observations;
use cemsim_core::forecast::{
    estimate_effort_heuristic, evaluate_families, features_for, fit_least_squares, mean_rmse, rmse,
    EffortEstimator, FeatureFamily, FeatureVector, FitOptions, ForecastError, HeuristicEstimator,
    Observation, RemoteEstimator, RemoteEstimatorConfig, SplitConfig,
};
use cemsim_core::scenario::{Scenario, ScenarioFile};
use cemsim_core::{ContextRecord, Timestamp};
use proptest::prelude::*;

fn scenario(json: serde_json::Value) -> Scenario {
    let file: ScenarioFile = serde_json::from_value(json).expect("scenario json");
    Scenario::new(file, std::path::PathBuf::new()).expect("valid scenario")
}

fn jobs_scenario(seed: u64, watts_per_effort: f64, load_noise: f64) -> Scenario {
    scenario(serde_json::json!({
        "name": "jobs",
        "seed": seed,
        "horizon_seconds": 20 * 86400,
        "step_seconds": 600,
        "synthetic": {
            "pv_peak_power": 0.0,
            "base_load": 300.0,
            "load_noise_amplitude": load_noise,
            "job_generator": {"watts_per_effort": watts_per_effort}
        },
        "components": {"context": {"type": "synthetic"}}
    }))
}

fn effort_vectors(xs: &[f64]) -> Vec<FeatureVector> {
    xs.iter()
        .map(|x| FeatureVector { family: FeatureFamily::Effort, values: vec![1.0, *x] })
        .collect()
}

// ---------------------------------------------------------------- fixtures

#[test]
fn three_point_line_is_recovered() {
    // y = 1 + 2x through (0,1), (1,3), (2,5)
    let p = fit_least_squares(&effort_vectors(&[0.0, 1.0, 2.0]), &[1.0, 3.0, 5.0], FitOptions::default()).unwrap();
    assert!((p.coefficients[0] - 1.0).abs() < 1e-12, "{:?}", p.coefficients);
    assert!((p.coefficients[1] - 2.0).abs() < 1e-12, "{:?}", p.coefficients);
    assert_eq!(p.train_samples, 3);
}

#[test]
fn three_point_residual_fit() {
    // Points (0,0), (1,1), (2,0): slope 0, intercept 1/3, residuals -1/3, 2/3, -1/3.
    let xs = effort_vectors(&[0.0, 1.0, 2.0]);
    let ys = [0.0, 1.0, 0.0];
    let p = fit_least_squares(&xs, &ys, FitOptions::default()).unwrap();
    assert!((p.coefficients[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!(p.coefficients[1].abs() < 1e-12);
    let pred: Vec<f64> = xs.iter().map(|x| p.predict(x).unwrap()).collect();
    let expected = (6.0f64 / 27.0).sqrt();
    assert!((rmse(&pred, &ys).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn rmse_hand_values() {
    assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(rmse(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 3.0);
}

#[test]
fn job_description_efforts() {
    assert_eq!(estimate_effort_heuristic("CPU-intensive, multi-core numeric robustness test"), 4.0);
    assert_eq!(estimate_effort_heuristic("Extending test to 48h (multi-core numeric robustness)"), 4.0);
    assert_eq!(estimate_effort_heuristic(""), 1.0);
}

proptest! {
    #[test]
    fn heuristic_is_total_and_non_negative(text in any::<String>()) {
        let a = estimate_effort_heuristic(&text);
        prop_assert!(a.is_finite() && a >= 0.0);
        prop_assert_eq!(a, estimate_effort_heuristic(&text));
    }

    #[test]
    fn constant_offset_rmse_is_offset(
        values in prop::collection::vec(-1e3..1e3f64, 1..50),
        d in -100.0..100.0f64,
    ) {
        let shifted: Vec<f64> = values.iter().map(|v| v + d).collect();
        let r = rmse(&values, &shifted).unwrap();
        prop_assert!((r - d.abs()).abs() <= 1e-9 * d.abs().max(1.0));
    }
}

// ---------------------------------------------------------------- leakage

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn future_records_never_leak(
        now_s in 3600u64..86400,
        lead_s in 1u64..36000,
        begins_offset in 0u64..7200,
        family in prop::sample::select(FeatureFamily::ALL.to_vec()),
    ) {
        let t = |s: u64| Timestamp::from_secs(s);
        let honest = ContextRecord::new(t(0), t(now_s - 1800), t(now_s + 3600), 1, "CPU-intensive parameter sweep").unwrap();
        // Recorded after the query time, but claiming to be active at it.
        let future_at = now_s + lead_s;
        let begins = now_s.saturating_sub(begins_offset);
        let mut sneaky = ContextRecord::new(t(future_at), t(begins), t(future_at + 3600), 1, "GPU model fitting run").unwrap();
        sneaky.insert_numeric("cpu_cores", 64.0);
        let obs = [Observation { at: t(now_s), load: 0.0 }];
        let base = features_for(std::slice::from_ref(&honest), &obs, family, &HeuristicEstimator).unwrap();
        let with = features_for(&[honest, sneaky], &obs, family, &HeuristicEstimator).unwrap();
        prop_assert_eq!(base, with);
    }
}

// ---------------------------------------------------------------- synthetic structure

#[test]
fn fitted_slope_matches_watts_per_effort() {
    let watts = 150.0;
    for seed in [1u64, 2, 3] {
        let s = jobs_scenario(seed, watts, 0.05);
        let obs = observations(&s).unwrap();
        let records = s.context_records();
        let xs = features_for(&records, &obs, FeatureFamily::Effort, &HeuristicEstimator).unwrap();
        let ys: Vec<f64> = obs.iter().map(|o| o.load).collect();
        let p = fit_least_squares(&xs, &ys, FitOptions::default()).unwrap();
        let slope = p.coefficients[1];
        assert!(
            (slope - watts).abs() <= 0.02 * watts,
            "seed {seed}: slope {slope} vs {watts}"
        );
    }
}

#[test]
fn effort_beats_none_when_load_follows_jobs() {
    let s = jobs_scenario(4, 200.0, 0.05);
    let obs = observations(&s).unwrap();
    let families = [FeatureFamily::None, FeatureFamily::Effort];
    let split = SplitConfig { resamples: 5, seed: 4, ..Default::default() };
    let scores = evaluate_families(&s.context_records(), &obs, &families, &split, &HeuristicEstimator).unwrap();
    let m = mean_rmse(&scores, &families);
    assert!(m[1].1 < m[0].1, "{m:?}");
}

#[test]
fn families_tie_without_context_influence() {
    let s = jobs_scenario(5, 0.0, 0.05);
    let obs = observations(&s).unwrap();
    let split = SplitConfig { resamples: 5, seed: 5, ..Default::default() };
    let scores = evaluate_families(&s.context_records(), &obs, &FeatureFamily::ALL, &split, &HeuristicEstimator).unwrap();
    let m = mean_rmse(&scores, &FeatureFamily::ALL);
    let lo = m.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let hi = m.iter().map(|x| x.1).fold(0.0, f64::max);
    // Noise floor: uniform noise of 5% on a 300 W base.
    assert!(hi - lo <= 0.1 * lo, "{m:?}");
}

#[test]
fn combined_no_worse_than_numeric_on_training_data() {
    let s = jobs_scenario(6, 150.0, 0.05);
    let obs = observations(&s).unwrap();
    let records = s.context_records();
    let ys: Vec<f64> = obs.iter().map(|o| o.load).collect();
    let fit_rmse = |family| {
        let xs = features_for(&records, &obs, family, &HeuristicEstimator).unwrap();
        let p = fit_least_squares(&xs, &ys, FitOptions { ridge_fallback: true }).unwrap();
        let pred: Vec<f64> = xs.iter().map(|x| p.predict(x).unwrap()).collect();
        rmse(&pred, &ys).unwrap()
    };
    let numeric = fit_rmse(FeatureFamily::Numeric);
    let combined = fit_rmse(FeatureFamily::Combined);
    assert!(combined <= numeric * (1.0 + 1e-9), "combined {combined} numeric {numeric}");
}

// ---------------------------------------------------------------- remote estimator

/// Serves one HTTP request with `body` and hands back the request body.
fn serve_once(body: &'static str) -> (String, JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/effort", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
            }
        }
        let mut request = vec![0u8; length];
        reader.read_exact(&mut request).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            body.len(),
            body
        )
        .unwrap();
        String::from_utf8(request).unwrap()
    });
    (url, handle)
}

fn remote(endpoint: String, timeout_ms: u64) -> RemoteEstimator {
    RemoteEstimator::new(RemoteEstimatorConfig { endpoint, timeout_ms })
}

#[test]
fn remote_passes_effort_through() {
    let (url, server) = serve_once(r#"{"effort": 2.5}"#);
    let got = remote(url, 5000).estimate("Compile geometry library").unwrap();
    assert_eq!(got, 2.5);
    let sent: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
    assert_eq!(sent["text"], "Compile geometry library");
}

#[test]
fn remote_rejects_malformed_body() {
    let (url, server) = serve_once(r#"{"estimate": "lots"}"#);
    let err = remote(url, 5000).estimate("x").unwrap_err();
    assert!(matches!(err, ForecastError::RemoteResponse(_)), "{err:?}");
    server.join().unwrap();
}

#[test]
fn remote_rejects_negative_effort() {
    let (url, server) = serve_once(r#"{"effort": -1.0}"#);
    assert!(remote(url, 5000).estimate("x").is_err());
    server.join().unwrap();
}

#[test]
fn unreachable_endpoint_fails_within_timeout() {
    // Bind then drop to get a port nothing listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let started = Instant::now();
    let err = remote(format!("http://127.0.0.1:{port}/effort"), 500).estimate("x").unwrap_err();
    assert!(matches!(err, ForecastError::Remote(_)), "{err:?}");
    assert!(started.elapsed() < Duration::from_secs(3));
}

#[test]
fn silent_endpoint_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/effort", listener.local_addr().unwrap());
    let hold = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_millis(1500));
        drop(stream);
    });
    let started = Instant::now();
    assert!(remote(url, 300).estimate("x").is_err());
    assert!(started.elapsed() < Duration::from_millis(1400));
    hold.join().unwrap();
}
