//! Engine selection: the same GP specification answered by the linear-time
//! state-space path or by dense Cholesky.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::exact::ExactGp;
use crate::kalman::{predict_additive, predict_at_cached, BackfitOptions, GpSpec, PosteriorResult, PredictMode};
use crate::ssm::StepCache;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ssgp,
    Exact,
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssgp" => Ok(Engine::Ssgp),
            "exact" => Ok(Engine::Exact),
            other => Err(Error::Validation(format!("unknown engine '{other}' (expected ssgp or exact)"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Ssgp => "ssgp",
            Engine::Exact => "exact",
        })
    }
}

/// Posterior at `queries` under `spec`. The exact engine ignores `mode`.
///
/// With the state-space engine, smoothed multi-input predictions go through
/// [`predict_additive`]; filter-only predictions keep the streaming sweep.
pub fn posterior(
    spec: &GpSpec,
    data: &RegressionDataset,
    queries: &DMatrix<f64>,
    engine: Engine,
    mode: PredictMode,
    cache: Option<&StepCache>,
) -> Result<PosteriorResult> {
    match engine {
        Engine::Ssgp if mode == PredictMode::Smoothed && data.input_dim() > 1 => {
            Ok(predict_additive(spec, data, queries, &BackfitOptions::default())?.posterior)
        }
        Engine::Ssgp => {
            let model = spec.build()?;
            predict_at_cached(&model, data, &spec.noise, queries, mode, cache)
        }
        Engine::Exact => {
            let gp = ExactGp::fit(&spec.kernels, &spec.noise, data)?;
            let (mean, var) = gp.predict(queries)?;
            Ok(PosteriorResult { mean, var, loglik: gp.loglik, clamped: 0 })
        }
    }
}
