//! End-to-end multi-rate behavior: fusion cadence per sensor kind and
//! concurrent ingestion safety.

use std::sync::Arc;

use odofuse::fusion_filter::{
    filter_step, run_fixed_rate, AvailabilityPolicy, FilterConfig, FilterState, Measurement,
    MeasurementQueue, NoiseConfig,
};
use odofuse::measurement_models::{GnssAntennaOffset, SensorKind};
use odofuse::sim_harness::{
    emulate_streams, filter_setup, generate_truth, NoiseSigmas, NominalParams, ProfileSegment,
    Scenario, SensorRates, TrueParams,
};
use odofuse::state_model::StateVector;

fn ten_second_scenario() -> Scenario {
    Scenario {
        duration: 10.0,
        filter_rate: 60.0,
        seed: 7,
        truth_profile: vec![ProfileSegment {
            duration: 10.0,
            speed: 0.5,
            yaw_rate: 0.05,
        }],
        true_params: TrueParams {
            radius_r: 0.2,
            radius_l: 0.2,
            bias: 0.0,
            track_width: 0.5,
        },
        nominal_params: NominalParams {
            radius_r: 0.2,
            radius_l: 0.2,
        },
        rates: SensorRates {
            imu: 100.0,
            encoder: 100.0,
            gnss: 10.0,
            pose: 20.0,
        },
        noise_sigmas: NoiseSigmas {
            imu: 0.001,
            encoder: 0.01,
            gnss: 0.02,
            pose_xy: 0.01,
            pose_psi: 0.005,
        },
        antenna: GnssAntennaOffset { d: 0.2, alpha: 0.0 },
        dropout_windows: Vec::new(),
    }
}

#[test]
fn fusion_cadence_matches_sensor_rates() {
    let s = ten_second_scenario();
    let truth = generate_truth(&s);
    let streams = emulate_streams(&truth, &s);
    let (cfg, initial) = filter_setup(&s, true);
    let records = run_fixed_rate(initial, &cfg, s.steps(), &streams.merged()).unwrap();
    let steps = records.len() - 1;
    assert_eq!(steps, 600);

    let count = |kind: SensorKind| records.iter().filter(|r| r.fused.contains(kind)).count() as i64;
    // 10 Hz GNSS on a 60 Hz filter: fused on 1/6 of iterations
    assert!((count(SensorKind::GnssPosition) - 100).abs() <= 1);
    // 20 Hz pose source: fused on 1/3 of iterations
    assert!((count(SensorKind::AbsolutePose) - 200).abs() <= 1);
    // 100 Hz proprioceptive sensors: fused every iteration
    assert!((count(SensorKind::Encoder) - 600).abs() <= 1);
    assert!((count(SensorKind::ImuYawRate) - 600).abs() <= 1);
}

#[test]
fn stale_measurements_do_not_fuse() {
    let s = ten_second_scenario();
    let truth = generate_truth(&s);
    let streams = emulate_streams(&truth, &s);
    // keep only the first 2 s of GNSS samples
    let measurements: Vec<Measurement> = streams
        .merged()
        .into_iter()
        .filter(|m| m.kind != SensorKind::GnssPosition || m.t <= 2.0)
        .collect();
    let (cfg, initial) = filter_setup(&s, true);
    let records = run_fixed_rate(initial, &cfg, s.steps(), &measurements).unwrap();
    // after the staleness horizon (1.5 periods = 0.15 s) GNSS never fuses again
    for r in &records {
        if r.state.t > 2.0 + 0.15 + 1e-9 {
            assert!(!r.fused.contains(SensorKind::GnssPosition), "at t={}", r.state.t);
        }
    }
}

#[test]
fn concurrent_ingest_is_safe() {
    let queue = Arc::new(MeasurementQueue::new());
    std::thread::scope(|scope| {
        for (i, kind) in SensorKind::CANONICAL_ORDER.into_iter().enumerate() {
            let queue = Arc::clone(&queue);
            scope.spawn(move || {
                for j in 0..1000 {
                    let t = j as f64 * 1e-3 + i as f64 * 1e-6;
                    let values = vec![0.1 * (i + 1) as f64; kind.dim()];
                    queue
                        .ingest(Measurement {
                            kind,
                            t,
                            values,
                            frame: None,
                        })
                        .unwrap();
                }
            });
        }
    });
    // every kind ends with its newest sample queued
    for kind in SensorKind::CANONICAL_ORDER {
        let latest = queue.latest_of(kind).unwrap();
        assert!((latest.t - 0.999).abs() < 1e-4, "latest {} at {}", kind.name(), latest.t);
    }

    // and the filter can step on the concurrently filled queue
    let initial = FilterState {
        x: StateVector {
            x: 0.0,
            y: 0.0,
            psi: 0.0,
            omega_r: 0.0,
            omega_l: 0.0,
            radius_r: 0.2,
            radius_l: 0.2,
            bias: 0.0,
        },
        p: odofuse::sim_harness::initial_covariance(),
        t: 1.0,
    };
    let cfg = FilterConfig {
        model: odofuse::state_model::ModelConfig {
            track_width: 0.5,
            sample_time: 1.0 / 60.0,
        },
        noise: NoiseConfig::default(),
        policy: AvailabilityPolicy::default(),
        antenna: GnssAntennaOffset::none(),
        estimate_uncertainties: true,
    };
    let next = filter_step(&initial, &queue, &cfg).unwrap();
    assert!(next.covariance_healthy());
}
