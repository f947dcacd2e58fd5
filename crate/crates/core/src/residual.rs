//! Learning quadrotor residual dynamics with one GP per body axis.
//!
//! Targets are the body-frame forces the nominal model misses,
//! `m Rᵀ δ_a`. SISO models use the matching body-velocity component as the
//! only input; MISO models use an additive kernel over body velocity and the
//! four motor speeds. Inputs are standardized and targets centred with
//! training statistics.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dataset::{RegressionDataset, SweepOrder};
use crate::engine::{posterior, Engine};
use crate::error::{ensure, Result};
use crate::kalman::{train_hyperparameters, GpSpec, PredictMode};
use crate::kernels::{KernelSpec, NoiseSpec};
use crate::quad::ResidualRecord;
use crate::ssm::ApproxOrder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Body velocity along the modelled axis.
    Siso,
    /// Body velocity and motor speeds.
    Miso,
}

impl FeatureSet {
    pub fn input_dim(self) -> usize {
        match self {
            FeatureSet::Siso => 1,
            FeatureSet::Miso => 7,
        }
    }

    fn row(self, record: &ResidualRecord, axis: usize) -> Vec<f64> {
        match self {
            FeatureSet::Siso => vec![record.features_siso[axis]],
            FeatureSet::Miso => record.features_miso.to_vec(),
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siso" => Ok(FeatureSet::Siso),
            "miso" => Ok(FeatureSet::Miso),
            other => Err(crate::Error::Validation(format!("unknown feature set '{other}' (expected siso or miso)"))),
        }
    }
}

/// How to build and train the per-axis models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub features: FeatureSet,
    /// Kernel family and smoothness; `z` and `sigma2` are initial values in
    /// standardized input units and are rescaled per axis.
    pub kernel: KernelSpec,
    pub order: ApproxOrder,
    /// Objective evaluations per axis (0 keeps the initial hyperparameters).
    pub budget: usize,
    /// Keep every `stride`-th record for training.
    pub stride: usize,
    pub engine: Engine,
    pub mode: PredictMode,
}

impl LearnerConfig {
    pub fn new(features: FeatureSet, kernel: KernelSpec) -> Self {
        LearnerConfig {
            features,
            kernel,
            order: ApproxOrder::default(),
            budget: 200,
            stride: 1,
            engine: Engine::Ssgp,
            mode: PredictMode::Smoothed,
        }
    }
}

/// Column-wise affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for c in 0..d {
            mean[c] = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
            // constant columns keep unit scale
            scale[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let d = self.mean.len();
        DMatrix::from_fn(rows.len(), d, |i, c| (rows[i][c] - self.mean[c]) / self.scale[c])
    }
}

/// A trained GP for one body axis.
#[derive(Debug, Clone)]
pub struct AxisModel {
    pub spec: GpSpec,
    pub data: RegressionDataset,
    pub inputs: Standardizer,
    pub offset: f64,
    pub loglik: f64,
    pub evaluations: usize,
    pub trace: Vec<f64>,
}

/// Three independent axis models.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    pub config: LearnerConfig,
    pub axes: Vec<AxisModel>,
}

/// Predicted body-frame force and its latent variance per record.
#[derive(Debug, Clone)]
pub struct ForcePrediction {
    pub mean: Vec<Vector3<f64>>,
    pub var: Vec<Vector3<f64>>,
}

impl ResidualModel {
    pub fn fit(records: &[ResidualRecord], config: &LearnerConfig) -> Result<Self> {
        ensure!(config.stride >= 1, Validation, "stride must be >= 1");
        config.kernel.validate()?;
        let train: Vec<&ResidualRecord> = records.iter().step_by(config.stride).collect();
        ensure!(train.len() >= 4, Validation, "need at least 4 training records, got {}", train.len());
        let axes = (0..3).map(|axis| fit_axis(&train, axis, config)).collect::<Result<Vec<_>>>()?;
        Ok(ResidualModel { config: config.clone(), axes })
    }

    /// Body-frame force predictions for `records`.
    pub fn predict_forces(&self, records: &[ResidualRecord]) -> Result<ForcePrediction> {
        let n = records.len();
        let mut mean = vec![Vector3::zeros(); n];
        let mut var = vec![Vector3::zeros(); n];
        if n == 0 {
            return Ok(ForcePrediction { mean, var });
        }
        for (axis, m) in self.axes.iter().enumerate() {
            let rows: Vec<Vec<f64>> = records.iter().map(|r| self.config.features.row(r, axis)).collect();
            let queries = m.inputs.apply(&rows);
            let post = posterior(&m.spec, &m.data, &queries, self.config.engine, self.config.mode, None)?;
            for i in 0..n {
                mean[i][axis] = post.mean[i] + m.offset;
                var[i][axis] = post.var[i];
            }
        }
        Ok(ForcePrediction { mean, var })
    }

    /// World-frame residual acceleration predictions `(1/m) R f`.
    pub fn predict_accel(&self, records: &[ResidualRecord]) -> Result<Vec<Vector3<f64>>> {
        let forces = self.predict_forces(records)?;
        Ok(records.iter().zip(&forces.mean).map(|(r, f)| r.r_wb * f / r.mass).collect())
    }
}

fn fit_axis(train: &[&ResidualRecord], axis: usize, config: &LearnerConfig) -> Result<AxisModel> {
    let rows: Vec<Vec<f64>> = train.iter().map(|r| config.features.row(r, axis)).collect();
    let targets: Vec<f64> = train.iter().map(|r| r.body_force()[axis]).collect();
    let inputs = Standardizer::fit(&rows);
    let offset = targets.iter().sum::<f64>() / targets.len() as f64;
    let centred = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - offset));
    let ordering = match config.features {
        FeatureSet::Siso => SweepOrder::SortByInput,
        FeatureSet::Miso => SweepOrder::GivenOrder,
    };
    let data = RegressionDataset::with_ordering(inputs.apply(&rows), centred, ordering)?;

    let var_y = (data.y.norm_squared() / data.len() as f64).max(1e-12);
    let d = config.features.input_dim();
    let mut kernel = config.kernel.clone();
    kernel.sigma2 = config.kernel.sigma2 * var_y / d as f64;
    kernel.qc = None;
    let init = GpSpec {
        kernels: vec![kernel; d],
        noise: NoiseSpec::new(0.1 * var_y)?,
        order: config.order,
    };
    let trained = train_hyperparameters(&init, &data, config.budget)?;
    Ok(AxisModel {
        spec: trained.spec,
        data,
        inputs,
        offset,
        loglik: trained.loglik,
        evaluations: trained.evaluations,
        trace: trained.trace,
    })
}

/// Root-mean-square error over all components.
pub fn rmse(pred: &[Vector3<f64>], truth: &[Vector3<f64>]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "rmse needs equal-length inputs");
    if pred.is_empty() {
        return 0.0;
    }
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).norm_squared()).sum();
    (sq / (3 * pred.len()) as f64).sqrt()
}

/// Ground-truth residuals aligned with `records` (truth is indexed by sample).
pub fn aligned_truth(records: &[ResidualRecord], truth: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    records.iter().map(|r| truth[r.index]).collect()
}
