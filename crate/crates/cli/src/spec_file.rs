//! Kernel specification files accepted by `--kernel`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssgp::kalman::GpSpec;
use ssgp::kernels::{KernelConfig, KernelSpec, NoiseSpec};
use ssgp::ssm::ApproxOrder;
use ssgp::{Error, Result};

/// Either a single kernel with its noise variance (applied to every input
/// column) or one kernel per column, as written by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecFile {
    Additive { kernels: Vec<KernelSpec>, sigma_noise2: f64 },
    Single(KernelConfig),
}

impl SpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
        let spec: SpecFile = serde_json::from_reader(file)?;
        match &spec {
            SpecFile::Single(cfg) => cfg.validate()?,
            SpecFile::Additive { kernels, sigma_noise2 } => {
                if kernels.is_empty() {
                    return Err(Error::Validation("spec file lists no kernels".into()));
                }
                for k in kernels {
                    k.validate()?;
                }
                NoiseSpec::new(*sigma_noise2)?;
            }
        }
        Ok(spec)
    }

    pub fn from_gp(spec: &GpSpec) -> Self {
        SpecFile::Additive { kernels: spec.kernels.clone(), sigma_noise2: spec.noise.sigma_noise2 }
    }

    /// First (or only) kernel, used where one template kernel is needed.
    pub fn template(&self) -> &KernelSpec {
        match self {
            SpecFile::Single(cfg) => &cfg.kernel,
            SpecFile::Additive { kernels, .. } => &kernels[0],
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        match self {
            SpecFile::Single(cfg) => cfg.noise(),
            SpecFile::Additive { sigma_noise2, .. } => NoiseSpec { sigma_noise2: *sigma_noise2 },
        }
    }

    /// Model for `d` input columns.
    pub fn gp(&self, d: usize, order: ApproxOrder) -> Result<GpSpec> {
        let kernels = match self {
            SpecFile::Single(cfg) => vec![cfg.kernel.clone(); d],
            SpecFile::Additive { kernels, .. } => {
                if kernels.len() != d {
                    return Err(Error::Dimension(format!(
                        "spec file has {} kernels but the data has {d} input column(s)",
                        kernels.len()
                    )));
                }
                kernels.clone()
            }
        };
        Ok(GpSpec { kernels, noise: self.noise(), order })
    }

    /// Number of kernels listed, if the file fixes it.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            SpecFile::Single(_) => None,
            SpecFile::Additive { kernels, .. } => Some(kernels.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_shapes_parse() {
        let single: SpecFile =
            serde_json::from_str(r#"{"family":"matern","z":1.0,"sigma2":2.0,"nu":1.5,"sigma_noise2":0.1}"#).unwrap();
        assert!(matches!(single, SpecFile::Single(_)));
        assert_eq!(single.gp(3, ApproxOrder::default()).unwrap().kernels.len(), 3);

        let gp = GpSpec {
            kernels: vec![KernelSpec::rbf(1.0, 1.0), KernelSpec::matern(0.5, 2.0, 1.0)],
            noise: NoiseSpec { sigma_noise2: 0.2 },
            order: ApproxOrder::default(),
        };
        let text = serde_json::to_string(&SpecFile::from_gp(&gp)).unwrap();
        let back: SpecFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.gp(2, ApproxOrder::default()).unwrap(), gp);
        assert!(back.gp(1, ApproxOrder::default()).is_err());
    }
}
