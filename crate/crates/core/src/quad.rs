//! Quadrotor residual dynamics.
//!
//! The nominal model is `m a = R τ e₃ - m g e₃` with `τ = k_f Σ ω_i²`.
//! Residual accelerations are what a one-step forward-Euler prediction of
//! that model misses; they become regression targets for per-axis GPs.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Steps shorter than this are dropped from residual computation.
pub const MIN_STEP: f64 = 1e-6;

/// Vehicle constants, stored as a JSON sidecar next to flight CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub mass: f64,
    pub kf: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Vehicle {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.mass.is_finite() && self.mass > 0.0, Validation, "mass must be > 0, got {}", self.mass);
        ensure!(self.kf.is_finite() && self.kf > 0.0, Validation, "kf must be > 0, got {}", self.kf);
        ensure!(self.g.is_finite(), Validation, "g must be finite");
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let v: Vehicle = serde_json::from_reader(File::open(path)?)?;
        v.validate()?;
        Ok(v)
    }
}

impl Default for Vehicle {
    fn default() -> Self {
        Vehicle { mass: 1.0, kf: 1e-5, g: default_gravity() }
    }
}

/// One logged state of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightSample {
    pub t: f64,
    /// Body-to-world rotation.
    pub r_wb: Matrix3<f64>,
    /// Body-frame velocity.
    pub v_b: Vector3<f64>,
    pub omega_motors: Vector4<f64>,
    /// Collective thrust from the (nominal) thrust map.
    pub tau: f64,
    pub vehicle: Vehicle,
}

impl FlightSample {
    /// Builds a sample deriving `tau` from the motor speeds.
    pub fn new(t: f64, r_wb: Matrix3<f64>, v_b: Vector3<f64>, omega_motors: Vector4<f64>, vehicle: Vehicle) -> Self {
        let tau = collective_thrust(&omega_motors, vehicle.kf);
        FlightSample { t, r_wb, v_b, omega_motors, tau, vehicle }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let rtr = self.r_wb.transpose() * self.r_wb;
        ensure!(
            (rtr - Matrix3::identity()).amax() <= 1e-6,
            Validation,
            "rotation at t = {} is not orthonormal",
            self.t
        );
        ensure!(self.r_wb.determinant() > 0.0, Validation, "rotation at t = {} is a reflection", self.t);
        ensure!(
            self.omega_motors.iter().all(|w| *w >= 0.0),
            Validation,
            "motor speeds at t = {} must be >= 0",
            self.t
        );
        Ok(())
    }

    pub fn v_world(&self) -> Vector3<f64> {
        self.r_wb * self.v_b
    }
}

/// `τ = k_f Σ ω_i²`.
pub fn collective_thrust(omega_motors: &Vector4<f64>, kf: f64) -> f64 {
    kf * omega_motors.iter().map(|w| w * w).sum::<f64>()
}

/// World-frame acceleration `(1/m) R τ e₃ - g e₃`.
pub fn nominal_accel(sample: &FlightSample) -> Vector3<f64> {
    let e3 = Vector3::z();
    sample.r_wb * e3 * (sample.tau / sample.vehicle.mass) - e3 * sample.vehicle.g
}

/// The augmented model `(1/m) R (τ e₃ + f_GP) + g e₃` with the gravity sign
/// exactly as the augmented-model formula is usually printed. Note that this
/// differs from [`nominal_accel`] by `2 g e₃` when `gp_outputs = 0`; use
/// [`augmented_accel`] for a model consistent with the nominal dynamics.
pub fn corrected_accel(sample: &FlightSample, gp_outputs: &Vector3<f64>) -> Vector3<f64> {
    let e3 = Vector3::z();
    sample.r_wb * (e3 * sample.tau + gp_outputs) / sample.vehicle.mass + e3 * sample.vehicle.g
}

/// Nominal dynamics plus a body-frame force correction:
/// `(1/m) R (τ e₃ + f_GP) - g e₃`.
pub fn augmented_accel(sample: &FlightSample, gp_outputs: &Vector3<f64>) -> Vector3<f64> {
    nominal_accel(sample) + sample.r_wb * gp_outputs / sample.vehicle.mass
}

/// Regression record for one step of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRecord {
    /// Index of the sample the step starts from.
    pub index: usize,
    pub t: f64,
    /// Residual acceleration in the world frame.
    pub delta_a: Vector3<f64>,
    /// Body velocity at the start of the step.
    pub features_siso: Vector3<f64>,
    /// Body velocity followed by the four motor speeds.
    pub features_miso: [f64; 7],
    pub dt: f64,
    /// Rotation at the start of the step.
    pub r_wb: Matrix3<f64>,
    pub mass: f64,
}

impl ResidualRecord {
    /// Body-frame force the nominal model is missing, `m Rᵀ δ_a`.
    pub fn body_force(&self) -> Vector3<f64> {
        self.r_wb.transpose() * self.delta_a * self.mass
    }
}

/// Residuals and how many steps were dropped for being too short.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub records: Vec<ResidualRecord>,
    pub skipped: usize,
}

/// Residual accelerations `δ_a = R_k (v_b,k - v̂_b,k) / δt` where `v̂_b,k` is
/// the forward-Euler prediction of the nominal model from sample `k-1`,
/// expressed in the body frame at `k`.
pub fn compute_residuals(trajectory: &[FlightSample]) -> Result<Residuals> {
    ensure!(trajectory.len() >= 2, Validation, "need at least 2 samples, got {}", trajectory.len());
    let mut records = Vec::with_capacity(trajectory.len() - 1);
    let mut skipped = 0;
    for (k, pair) in trajectory.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        let dt = next.t - prev.t;
        ensure!(dt >= 0.0, Validation, "timestamps decrease between samples {k} and {}", k + 1);
        if dt < MIN_STEP {
            skipped += 1;
            continue;
        }
        let v_pred_world = prev.v_world() + nominal_accel(prev) * dt;
        let v_hat_b = next.r_wb.transpose() * v_pred_world;
        let delta_a = next.r_wb * (next.v_b - v_hat_b) / dt;
        let v = prev.v_b;
        let w = prev.omega_motors;
        records.push(ResidualRecord {
            index: k,
            t: prev.t,
            delta_a,
            features_siso: v,
            features_miso: [v.x, v.y, v.z, w[0], w[1], w[2], w[3]],
            dt,
            r_wb: prev.r_wb,
            mass: prev.vehicle.mass,
        });
    }
    Ok(Residuals { records, skipped })
}

/// Residual computed entirely in the world frame:
/// `(v_w,k - v_w,k-1) / δt - a_nominal,k-1`.
pub fn residual_world_frame(prev: &FlightSample, next: &FlightSample) -> Vector3<f64> {
    let dt = next.t - prev.t;
    (next.v_world() - prev.v_world()) / dt - nominal_accel(prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlightShape {
    Circle,
    Parabola,
    Lemniscate,
}

impl std::str::FromStr for FlightShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "circle" => Ok(FlightShape::Circle),
            "parabola" => Ok(FlightShape::Parabola),
            "lemniscate" => Ok(FlightShape::Lemniscate),
            other => Err(Error::Validation(format!("unknown flight shape '{other}'"))),
        }
    }
}

/// Geometry of a synthetic reference path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Radius (circle), half-width (parabola, lemniscate), in metres.
    pub size: f64,
    /// Angular rate of the horizontal pattern, rad/s.
    pub rate: f64,
    /// Amplitude of the vertical motion, metres.
    pub vertical_amplitude: f64,
    /// Angular rate of the vertical motion, rad/s.
    pub vertical_rate: f64,
    /// Relative spread of the per-motor thrust split (0 = equal split).
    pub motor_spread: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams { size: 2.0, rate: 1.0, vertical_amplitude: 0.5, vertical_rate: 1.7, motor_spread: 0.05 }
    }
}

/// Unmodelled effects injected into a synthetic flight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    /// Isotropic linear drag coefficient `c` (force `-c v`), N·s/m.
    pub drag: f64,
    /// Relative thrust-map error: true `k_f` is `(1 + thrust_error) k_f`.
    pub thrust_error: f64,
}

/// Measurement noise on logged body velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorNoise {
    pub velocity_std: f64,
    pub seed: u64,
}

/// A generated trajectory with its ground-truth residual accelerations.
#[derive(Debug, Clone)]
pub struct SyntheticFlight {
    pub samples: Vec<FlightSample>,
    /// True world-frame residual acceleration at each sample.
    pub truth: Vec<Vector3<f64>>,
}

/// Position, velocity and acceleration of the reference path at time `t`.
fn path(shape: FlightShape, p: &ShapeParams, t: f64) -> [Vector3<f64>; 3] {
    let (a, w) = (p.size, p.rate);
    let (az, wz) = (p.vertical_amplitude, p.vertical_rate);
    let (s, c) = (w * t).sin_cos();
    let (sz, cz) = (wz * t).sin_cos();
    let vert = [az * sz, az * wz * cz, -az * wz * wz * sz];
    let (pos, vel, acc) = match shape {
        FlightShape::Circle => (
            Vector3::new(a * c, a * s, 0.0),
            Vector3::new(-a * w * s, a * w * c, 0.0),
            Vector3::new(-a * w * w * c, -a * w * w * s, 0.0),
        ),
        FlightShape::Parabola => {
            // back and forth along x on the arc z = x² / (2a), drifting in y
            let x = a * s;
            let vx = a * w * c;
            let ax = -a * w * w * s;
            let (s2, c2) = (0.5 * w * t).sin_cos();
            (
                Vector3::new(x, 0.5 * a * s2, x * x / (2.0 * a)),
                Vector3::new(vx, 0.25 * a * w * c2, x * vx / a),
                Vector3::new(ax, -0.125 * a * w * w * s2, (vx * vx + x * ax) / a),
            )
        }
        FlightShape::Lemniscate => {
            let (s2, c2) = (2.0 * w * t).sin_cos();
            (
                Vector3::new(a * c, 0.5 * a * s2, 0.0),
                Vector3::new(-a * w * s, a * w * c2, 0.0),
                Vector3::new(-a * w * w * c, -2.0 * a * w * w * s2, 0.0),
            )
        }
    };
    [
        pos + Vector3::z() * vert[0],
        vel + Vector3::z() * vert[1],
        acc + Vector3::z() * vert[2],
    ]
}

/// Rotation with third column along `thrust_dir` and zero yaw.
fn attitude(thrust_dir: &Vector3<f64>) -> Matrix3<f64> {
    let b3 = thrust_dir.normalize();
    let b2 = b3.cross(&Vector3::x()).normalize();
    let b1 = b2.cross(&b3);
    Matrix3::from_columns(&[b1, b2, b3])
}

/// Generates a kinematically consistent flight along `shape`.
///
/// The vehicle tracks the path exactly under the true dynamics
/// `m a = R τ_true e₃ - m g e₃ - c v`, where `τ_true` uses the perturbed
/// thrust map. Logged `tau` uses the nominal map, so the nominal model
/// misses `(τ_true - τ)/m R e₃ - (c/m) v`.
pub fn synthesize_flight(
    shape: FlightShape,
    params: &ShapeParams,
    disturbance: &Disturbance,
    vehicle: &Vehicle,
    n: usize,
    dt: f64,
    noise: &SensorNoise,
) -> Result<SyntheticFlight> {
    ensure!(n >= 10, Validation, "need at least 10 samples, got {n}");
    ensure!(dt > 0.0 && dt.is_finite(), Validation, "dt must be > 0, got {dt}");
    vehicle.validate()?;
    ensure!(disturbance.thrust_error > -1.0, Validation, "thrust_error must be > -1");
    let kf_true = vehicle.kf * (1.0 + disturbance.thrust_error);
    let m = vehicle.mass;

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let vel_noise = Normal::new(0.0, noise.velocity_std.max(0.0))
        .map_err(|e| Error::Validation(format!("velocity noise: {e}")))?;

    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let [_, v_w, a_w] = path(shape, params, t);
        let force = (a_w + Vector3::z() * vehicle.g) * m + v_w * disturbance.drag;
        let tau_true = force.norm();
        let r_wb = attitude(&force);

        // Split thrust unevenly between motors while preserving Σ ω².
        let phase = 0.9 * t;
        let spread = params.motor_spread;
        let split = [
            1.0 + spread * phase.sin(),
            1.0 - spread * phase.sin(),
            1.0 + spread * phase.cos(),
            1.0 - spread * phase.cos(),
        ];
        let base = tau_true / (4.0 * kf_true);
        let omega = Vector4::from_iterator(split.iter().map(|s| (base * s).sqrt()));

        let mut v_b = r_wb.transpose() * v_w;
        if noise.velocity_std > 0.0 {
            v_b += Vector3::from_fn(|_, _| vel_noise.sample(&mut rng));
        }
        let sample = FlightSample::new(t, r_wb, v_b, omega, *vehicle);
        let residual = r_wb * Vector3::z() * ((tau_true - sample.tau) / m) - v_w * (disturbance.drag / m);
        samples.push(sample);
        truth.push(residual);
    }
    Ok(SyntheticFlight { samples, truth })
}

#[derive(Debug, Serialize, Deserialize)]
struct FlightRow {
    t: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    vbx: f64,
    vby: f64,
    vbz: f64,
    w0: f64,
    w1: f64,
    w2: f64,
    w3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_dax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_day: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_daz: Option<f64>,
}

/// A flight log read from CSV, with ground truth when the file carries it.
#[derive(Debug, Clone)]
pub struct FlightLog {
    pub samples: Vec<FlightSample>,
    pub truth: Option<Vec<Vector3<f64>>>,
}

/// Reads `t,qw,qx,qy,qz,vbx,vby,vbz,w0,w1,w2,w3[,gt_dax,gt_day,gt_daz]`.
pub fn read_flight_csv<R: Read>(reader: R, vehicle: &Vehicle) -> Result<FlightLog> {
    vehicle.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut all_truth = true;
    for (i, row) in rdr.deserialize::<FlightRow>().enumerate() {
        let row = row?;
        let q = Quaternion::new(row.qw, row.qx, row.qy, row.qz);
        ensure!(q.norm() > 1e-9, Validation, "row {}: attitude quaternion has zero norm", i + 1);
        let r_wb = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        let sample = FlightSample::new(
            row.t,
            r_wb,
            Vector3::new(row.vbx, row.vby, row.vbz),
            Vector4::new(row.w0, row.w1, row.w2, row.w3),
            *vehicle,
        );
        sample.validate().map_err(|e| Error::Validation(format!("row {}: {e}", i + 1)))?;
        samples.push(sample);
        match (row.gt_dax, row.gt_day, row.gt_daz) {
            (Some(x), Some(y), Some(z)) => truth.push(Vector3::new(x, y, z)),
            _ => all_truth = false,
        }
    }
    ensure!(!samples.is_empty(), Validation, "flight log has no rows");
    Ok(FlightLog { samples, truth: all_truth.then_some(truth) })
}

pub fn load_flight(csv_path: &Path, vehicle: &Vehicle) -> Result<FlightLog> {
    read_flight_csv(File::open(csv_path)?, vehicle)
}

/// Writes samples in the CSV schema, adding `gt_` columns when `truth` is given.
pub fn write_flight_csv<W: Write>(writer: W, samples: &[FlightSample], truth: Option<&[Vector3<f64>]>) -> Result<()> {
    if let Some(t) = truth {
        ensure!(t.len() == samples.len(), Dimension, "{} truth rows for {} samples", t.len(), samples.len());
    }
    let mut wtr = csv::Writer::from_writer(writer);
    for (i, s) in samples.iter().enumerate() {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(s.r_wb));
        let gt = truth.map(|t| t[i]);
        wtr.serialize(FlightRow {
            t: s.t,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            vbx: s.v_b.x,
            vby: s.v_b.y,
            vbz: s.v_b.z,
            w0: s.omega_motors[0],
            w1: s.omega_motors[1],
            w2: s.omega_motors[2],
            w3: s.omega_motors[3],
            gt_dax: gt.map(|g| g.x),
            gt_day: gt.map(|g| g.y),
            gt_daz: gt.map(|g| g.z),
        })?;
    }
    wtr.flush()?;
    Ok(())
}
