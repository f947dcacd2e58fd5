use nalgebra::{Matrix3, Vector3, Vector4};
use ssgp::engine::Engine;
use ssgp::kernels::KernelSpec;
use ssgp::quad::{
    augmented_accel, compute_residuals, load_flight, nominal_accel, read_flight_csv, residual_world_frame,
    synthesize_flight, write_flight_csv, Disturbance, FlightSample, FlightShape, SensorNoise, ShapeParams,
    Vehicle,
};
use ssgp::residual::{aligned_truth, rmse, FeatureSet, LearnerConfig, ResidualModel};

fn flight(shape: FlightShape, dist: Disturbance, n: usize) -> ssgp::quad::SyntheticFlight {
    synthesize_flight(shape, &ShapeParams::default(), &dist, &Vehicle::default(), n, 0.01, &SensorNoise::default())
        .unwrap()
}

#[test]
fn hover_has_no_residual() {
    let v = Vehicle { mass: 1.5, kf: 2e-5, g: 9.81 };
    // Four equal motors carrying exactly the weight.
    let w = (v.mass * v.g / (4.0 * v.kf)).sqrt();
    let s = |t| FlightSample::new(t, Matrix3::identity(), Vector3::zeros(), Vector4::repeat(w), v);
    let (a, b) = (s(0.0), s(0.02));
    assert!(nominal_accel(&a).amax() < 1e-12);
    let res = compute_residuals(&[a.clone(), b.clone()]).unwrap();
    assert!(res.records[0].delta_a.amax() < 1e-12);
    assert!(residual_world_frame(&a, &b).amax() < 1e-12);
    assert!((augmented_accel(&a, &Vector3::zeros()) - nominal_accel(&a)).amax() < 1e-15);
}

#[test]
fn residual_recovers_an_injected_body_force() {
    let v = Vehicle::default();
    let r = nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3).into_inner();
    let prev = FlightSample::new(0.0, r, Vector3::new(0.5, -0.2, 0.1), Vector4::new(500.0, 510.0, 490.0, 505.0), v);
    let force = Vector3::new(0.3, -0.1, 0.2);
    let dt = 0.01;
    let v_next_world = prev.v_world() + augmented_accel(&prev, &force) * dt;
    let next = FlightSample::new(dt, r, r.transpose() * v_next_world, prev.omega_motors, v);
    let res = compute_residuals(&[prev, next]).unwrap();
    assert!((res.records[0].body_force() - force).amax() < 1e-9);
}

#[test]
fn duplicate_timestamps_are_skipped_and_reversals_rejected() {
    let f = flight(FlightShape::Circle, Disturbance::default(), 20);
    let mut samples = f.samples.clone();
    samples.insert(5, samples[5].clone());
    let res = compute_residuals(&samples).unwrap();
    assert_eq!(res.skipped, 1);
    assert_eq!(res.records.len(), samples.len() - 2);
    samples.swap(8, 9);
    assert!(compute_residuals(&samples).unwrap_err().is_input_error());
}

#[test]
fn flight_csv_and_sidecar_roundtrip() {
    let dist = Disturbance { drag: 0.2, thrust_error: 0.05 };
    let vehicle = Vehicle { mass: 1.2, kf: 1.5e-5, g: 9.81 };
    let f = synthesize_flight(
        FlightShape::Lemniscate,
        &ShapeParams::default(),
        &dist,
        &vehicle,
        50,
        0.01,
        &SensorNoise { velocity_std: 0.01, seed: 3 },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("flight.csv");
    let sidecar = dir.path().join("vehicle.json");
    write_flight_csv(std::fs::File::create(&csv_path).unwrap(), &f.samples, Some(&f.truth)).unwrap();
    std::fs::write(&sidecar, serde_json::to_string(&vehicle).unwrap()).unwrap();

    let loaded_vehicle = Vehicle::load(&sidecar).unwrap();
    assert_eq!(loaded_vehicle, vehicle);
    let log = load_flight(&csv_path, &loaded_vehicle).unwrap();
    assert_eq!(log.samples.len(), f.samples.len());
    for (a, b) in log.samples.iter().zip(&f.samples) {
        assert_eq!(a.t, b.t);
        assert!((a.r_wb - b.r_wb).amax() < 1e-12);
        assert_eq!(a.v_b, b.v_b);
        assert_eq!(a.omega_motors, b.omega_motors);
        assert!((a.tau - b.tau).abs() < 1e-12 * b.tau);
    }
    let truth = log.truth.unwrap();
    assert!(truth.iter().zip(&f.truth).all(|(a, b)| a == b));

    // Without the gt_ columns there is no truth.
    let mut buf = Vec::new();
    write_flight_csv(&mut buf, &f.samples, None).unwrap();
    assert!(read_flight_csv(buf.as_slice(), &vehicle).unwrap().truth.is_none());
}

#[test]
fn malformed_flight_files_are_input_errors() {
    let v = Vehicle::default();
    let missing = "t,qw,qx,qy,qz,vbx,vby,vbz,w0,w1,w2\n0,1,0,0,0,0,0,0,1,1,1\n";
    assert!(read_flight_csv(missing.as_bytes(), &v).unwrap_err().is_input_error());
    let zero_q = "t,qw,qx,qy,qz,vbx,vby,vbz,w0,w1,w2,w3\n0,0,0,0,0,0,0,0,1,1,1,1\n";
    assert!(read_flight_csv(zero_q.as_bytes(), &v).unwrap_err().is_input_error());
    let negative = "t,qw,qx,qy,qz,vbx,vby,vbz,w0,w1,w2,w3\n0,1,0,0,0,0,0,0,1,-1,1,1\n";
    assert!(read_flight_csv(negative.as_bytes(), &v).unwrap_err().is_input_error());
    let bad_mass = Vehicle { mass: 0.0, ..v };
    let ok = "t,qw,qx,qy,qz,vbx,vby,vbz,w0,w1,w2,w3\n0,1,0,0,0,0,0,0,1,1,1,1\n";
    assert!(read_flight_csv(ok.as_bytes(), &bad_mass).unwrap_err().is_input_error());
}

#[test]
fn siso_axes_are_independent() {
    let f = flight(FlightShape::Circle, Disturbance { drag: 0.3, thrust_error: 0.0 }, 200);
    let res = compute_residuals(&f.samples).unwrap();
    let mut config = LearnerConfig::new(FeatureSet::Siso, KernelSpec::matern(1.5, 1.0, 1.0));
    config.budget = 0;
    let model = ResidualModel::fit(&res.records, &config).unwrap();
    let base = model.predict_forces(&res.records).unwrap();

    // Swapping the x/y models and the x/y body velocities swaps the outputs.
    let mut swapped = model.clone();
    swapped.axes.swap(0, 1);
    let permuted: Vec<_> = res
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.features_siso = Vector3::new(r.features_siso.y, r.features_siso.x, r.features_siso.z);
            r
        })
        .collect();
    let out = swapped.predict_forces(&permuted).unwrap();
    for (a, b) in base.mean.iter().zip(&out.mean) {
        assert!((a.x - b.y).abs() < 1e-12 && (a.y - b.x).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12);
    }
}

#[test]
fn engines_agree_on_residual_model() {
    let f = flight(FlightShape::Parabola, Disturbance { drag: 0.3, thrust_error: 0.1 }, 300);
    let res = compute_residuals(&f.samples).unwrap();
    let mut config = LearnerConfig::new(FeatureSet::Siso, KernelSpec::matern(1.5, 1.0, 1.0));
    config.budget = 30;
    config.stride = 2;
    let mut model = ResidualModel::fit(&res.records, &config).unwrap();
    let a = model.predict_forces(&res.records).unwrap();
    model.config.engine = Engine::Exact;
    let b = model.predict_forces(&res.records).unwrap();
    for (x, y) in a.mean.iter().zip(&b.mean).chain(a.var.iter().zip(&b.var)) {
        assert!((x - y).amax() < 1e-7, "{x} vs {y}");
    }
}

#[test]
fn miso_model_beats_nominal_with_thrust_error() {
    let dist = Disturbance { drag: 0.3, thrust_error: 0.1 };
    let train = flight(FlightShape::Circle, dist, 600);
    let test = flight(FlightShape::Lemniscate, dist, 400);
    let tr = compute_residuals(&train.samples).unwrap();
    let te = compute_residuals(&test.samples).unwrap();
    let mut config = LearnerConfig::new(FeatureSet::Miso, KernelSpec::matern(1.5, 1.0, 1.0));
    config.budget = 60;
    config.stride = 4;
    let model = ResidualModel::fit(&tr.records, &config).unwrap();
    assert!(model.axes.iter().all(|a| a.spec.kernels.len() == 7));
    let truth = aligned_truth(&te.records, &test.truth);
    let nominal = rmse(&vec![Vector3::zeros(); truth.len()], &truth);
    let pred = model.predict_accel(&te.records).unwrap();
    assert!(rmse(&pred, &truth) < 0.5 * nominal, "{} vs {nominal}", rmse(&pred, &truth));
}
