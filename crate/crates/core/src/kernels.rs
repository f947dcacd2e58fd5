//! Stationary covariance functions and their spectra.
//!
//! Conventions follow the per-family formulas used throughout the crate:
//!
//! * RBF: `k(Δ) = σ² exp(-½ z² Δ²)` (`z` acts as an inverse lengthscale)
//! * Matérn: `k(Δ) = σ² M_ν(λ|Δ|)` with `λ = √(2ν) / z` (`z` is a lengthscale)
//! * Periodic: `k(Δ) = σ² exp(-2 z² sin²(½ ω₀ Δ))`
//!
//! The Matérn smoothness is restricted to half-integers, where the Bessel
//! form reduces to a polynomial times an exponential.
//!
//! Spectral densities use the angular-frequency convention
//! `S(ω) = ∫ k(Δ) e^{-iωΔ} dΔ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Number of oscillator harmonics used when no explicit `J` is supplied.
pub const DEFAULT_PERIODIC_HARMONICS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Matern,
    Periodic,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern => "matern",
            KernelFamily::Periodic => "periodic",
        })
    }
}

/// A stationary kernel family together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub z: f64,
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    /// White-noise spectral magnitude. `None` means it is derived so that the
    /// realized prior variance equals `sigma2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qc: Option<f64>,
}

/// Measurement noise variance `σ²_noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_noise2: f64,
}

impl NoiseSpec {
    pub fn new(sigma_noise2: f64) -> Result<Self> {
        let noise = NoiseSpec { sigma_noise2 };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.sigma_noise2.is_finite() && self.sigma_noise2 >= 0.0,
            Validation,
            "sigma_noise2 must be finite and >= 0, got {}",
            self.sigma_noise2
        );
        Ok(())
    }
}

/// The on-disk kernel description: a kernel plus its measurement noise.
///
/// ```json
/// {"family": "matern", "z": 1.0, "sigma2": 1.0, "nu": 1.5, "sigma_noise2": 0.01}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(flatten)]
    pub kernel: KernelSpec,
    pub sigma_noise2: f64,
}

impl KernelConfig {
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec { sigma_noise2: self.sigma_noise2 }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.noise().validate()
    }
}

/// Spectral representation returned by [`KernelSpec::spectral_density`].
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    /// Pointwise density value `S(ω)`.
    Density(f64),
    /// Line spectrum of a periodic kernel: `k(Δ) = Σ_j weights[j] cos(j ω₀ Δ)`.
    ImpulseTrain { omega0: f64, weights: Vec<f64> },
}

impl KernelSpec {
    pub fn rbf(z: f64, sigma2: f64) -> Self {
        KernelSpec { family: KernelFamily::Rbf, z, sigma2, nu: None, omega0: None, qc: None }
    }

    pub fn matern(nu: f64, z: f64, sigma2: f64) -> Self {
        KernelSpec { family: KernelFamily::Matern, z, sigma2, nu: Some(nu), omega0: None, qc: None }
    }

    pub fn periodic(z: f64, omega0: f64, sigma2: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Periodic,
            z,
            sigma2,
            nu: None,
            omega0: Some(omega0),
            qc: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.z.is_finite() && self.z > 0.0, Validation, "z must be > 0, got {}", self.z);
        ensure!(
            self.sigma2.is_finite() && self.sigma2 > 0.0,
            Validation,
            "sigma2 must be > 0, got {}",
            self.sigma2
        );
        if let Some(qc) = self.qc {
            ensure!(qc.is_finite() && qc > 0.0, Validation, "qc must be > 0, got {qc}");
        }
        match self.family {
            KernelFamily::Rbf => {}
            KernelFamily::Matern => {
                let nu = self.nu.ok_or_else(|| {
                    Error::Validation("matern kernel requires nu (a half-integer such as 0.5, 1.5, 2.5)".into())
                })?;
                ensure!(
                    half_integer_order(nu).is_some(),
                    Validation,
                    "matern nu must be a positive half-integer (0.5, 1.5, 2.5, ...), got {nu}"
                );
            }
            KernelFamily::Periodic => {
                let omega0 = self.omega0.ok_or_else(|| {
                    Error::Validation("periodic kernel requires omega0 > 0".into())
                })?;
                ensure!(
                    omega0.is_finite() && omega0 > 0.0,
                    Validation,
                    "omega0 must be > 0, got {omega0}"
                );
            }
        }
        Ok(())
    }

    /// `ν + ½` for a Matérn kernel, the order of its exact state-space form.
    pub fn matern_order(&self) -> Option<usize> {
        match self.family {
            KernelFamily::Matern => self.nu.and_then(half_integer_order),
            _ => None,
        }
    }

    /// Matérn rate `λ = √(2ν) / z`.
    pub fn matern_rate(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Matern => self.nu.map(|nu| (2.0 * nu).sqrt() / self.z),
            _ => None,
        }
    }

    /// Distance over which the kernel decorrelates, in input units.
    pub fn characteristic_length(&self) -> f64 {
        match self.family {
            KernelFamily::Rbf => 1.0 / self.z,
            KernelFamily::Matern => self.z,
            KernelFamily::Periodic => 1.0 / self.omega0.unwrap_or(1.0),
        }
    }

    /// Covariance `k(Δ)`.
    pub fn eval(&self, delta: f64) -> f64 {
        let r = delta.abs();
        match self.family {
            KernelFamily::Rbf => self.sigma2 * (-0.5 * self.z * self.z * r * r).exp(),
            KernelFamily::Matern => {
                let p = self.matern_order().expect("validated matern kernel");
                let lambda = self.matern_rate().expect("validated matern kernel");
                self.sigma2 * matern_half_integer(p, lambda * r)
            }
            KernelFamily::Periodic => {
                let omega0 = self.omega0.expect("validated periodic kernel");
                let s = (0.5 * omega0 * r).sin();
                self.sigma2 * (-2.0 * self.z * self.z * s * s).exp()
            }
        }
    }

    /// Spectral density at angular frequency `omega`. Periodic kernels have a
    /// line spectrum, returned as cosine-series weights with the default
    /// number of harmonics.
    pub fn spectral_density(&self, omega: f64) -> Spectrum {
        match self.family {
            KernelFamily::Rbf => {
                let z = self.z;
                Spectrum::Density(
                    self.sigma2 * (2.0 * PI).sqrt() / z * (-omega * omega / (2.0 * z * z)).exp(),
                )
            }
            KernelFamily::Matern => {
                let p = self.matern_order().expect("validated matern kernel");
                let nu = p as f64 - 0.5;
                let lambda = self.matern_rate().expect("validated matern kernel");
                let norm = 2.0 * PI.sqrt() * gamma_half(2 * p) / gamma_half(2 * p - 1)
                    * lambda.powf(2.0 * nu);
                Spectrum::Density(self.sigma2 * norm / (lambda * lambda + omega * omega).powi(p as i32))
            }
            KernelFamily::Periodic => Spectrum::ImpulseTrain {
                omega0: self.omega0.expect("validated periodic kernel"),
                weights: self.cosine_series_weights(DEFAULT_PERIODIC_HARMONICS),
            },
        }
    }

    /// Least-squares projection of a periodic kernel onto
    /// `Σ_{j=0..=harmonics} q_j² cos(j ω₀ Δ)` over one period.
    ///
    /// Returns the `harmonics + 1` weights `q_j²`. Non-periodic kernels yield
    /// an empty vector.
    pub fn cosine_series_weights(&self, harmonics: usize) -> Vec<f64> {
        let Some(omega0) = self.omega0.filter(|_| self.family == KernelFamily::Periodic) else {
            return Vec::new();
        };
        let cols = harmonics + 1;
        let rows = (16 * cols).max(512);
        let period = 2.0 * PI / omega0;
        let grid: Vec<f64> = (0..rows).map(|i| period * i as f64 / rows as f64).collect();
        let design = DMatrix::from_fn(rows, cols, |i, j| (j as f64 * omega0 * grid[i]).cos());
        let target = DVector::from_iterator(rows, grid.iter().map(|&d| self.eval(d)));
        let svd = design.svd(true, true);
        let weights = svd.solve(&target, 1e-14).expect("svd computed with both factors");
        weights.iter().copied().collect()
    }
}

/// Returns `p = ν + ½` when `ν` is a positive half-integer.
fn half_integer_order(nu: f64) -> Option<usize> {
    if !nu.is_finite() || nu <= 0.0 {
        return None;
    }
    let p = nu + 0.5;
    let rounded = p.round();
    ((p - rounded).abs() < 1e-12 && rounded >= 1.0).then_some(rounded as usize)
}

/// Normalized half-integer Matérn correlation at scaled distance `t = λ|Δ|`,
/// with `p = ν + ½`:
/// `e^{-t} (p-1)!/(2p-2)! Σ_{i<p} (p-1+i)! / (i! (p-1-i)!) (2t)^{p-1-i}`.
fn matern_half_integer(p: usize, t: f64) -> f64 {
    let n = p - 1;
    let prefactor = factorial(n) / factorial(2 * n);
    let poly: f64 = (0..=n)
        .map(|i| factorial(n + i) / (factorial(i) * factorial(n - i)) * (2.0 * t).powi((n - i) as i32))
        .sum();
    (-t).exp() * prefactor * poly
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `Γ(k / 2)` for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        factorial(k / 2 - 1)
    } else {
        // Γ(n + ½) = (2n)! / (4ⁿ n!) √π
        let n = (k - 1) / 2;
        factorial(2 * n) / (4f64.powi(n as i32) * factorial(n)) * PI.sqrt()
    }
}

/// Convenience wrapper over [`KernelSpec::eval`] that validates first.
pub fn eval_kernel(spec: &KernelSpec, delta: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.eval(delta))
}

pub fn eval_spectral_density(spec: &KernelSpec, omega: f64) -> Result<Spectrum> {
    spec.validate()?;
    Ok(spec.spectral_density(omega))
}

/// `K[i][j] = k(x_i - x_j) + σ²_noise [i = j]` for scalar inputs.
pub fn gram_matrix(spec: &KernelSpec, xs: &[f64], noise: &NoiseSpec) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| spec.eval(xs[i] - xs[j]));
    for i in 0..n {
        k[(i, i)] += noise.sigma_noise2;
    }
    k
}

/// Additive kernel over the columns of `x` (one kernel per input column),
/// evaluated between the rows of `a` and `b`.
pub fn additive_cross_covariance(kernels: &[KernelSpec], a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernels
            .iter()
            .enumerate()
            .map(|(d, k)| k.eval(a[(i, d)] - b[(j, d)]))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rbf_values() {
        let k = KernelSpec::rbf(1.0, 1.0);
        assert_eq!(k.eval(0.0), 1.0);
        assert_relative_eq!(k.eval(1.0), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn matern_half_collapses_to_exponential() {
        let k = KernelSpec::matern(0.5, 1.0, 1.0);
        assert_relative_eq!(k.eval(2.0), (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn matern_closed_forms() {
        let r: f64 = 0.8;
        let k32 = KernelSpec::matern(1.5, 1.3, 2.0);
        let l = 3f64.sqrt() / 1.3;
        assert_relative_eq!(k32.eval(r), 2.0 * (1.0 + l * r) * (-l * r).exp(), epsilon = 1e-14);
        let k52 = KernelSpec::matern(2.5, 0.7, 1.0);
        let l = 5f64.sqrt() / 0.7;
        let expected = (1.0 + l * r + l * l * r * r / 3.0) * (-l * r).exp();
        assert_relative_eq!(k52.eval(r), expected, epsilon = 1e-14);
    }

    #[test]
    fn matern_spectrum_ratio() {
        let k = KernelSpec::matern(0.5, 1.0, 1.0);
        let (Spectrum::Density(s0), Spectrum::Density(s1)) = (k.spectral_density(0.0), k.spectral_density(1.0))
        else {
            panic!("matern has a pointwise density")
        };
        assert_relative_eq!(s0 / s1, 2.0, epsilon = 1e-14);
        assert_relative_eq!(s0, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gamma_half_values() {
        assert_relative_eq!(gamma_half(1), PI.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_half(3), 0.5 * PI.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_half(5), 0.75 * PI.sqrt(), epsilon = 1e-15);
        assert_eq!(gamma_half(6), 2.0);
    }

    #[test]
    fn validation_errors_name_the_bound() {
        let err = KernelSpec::matern(0.4, 1.0, 1.0).validate().unwrap_err();
        assert!(err.to_string().contains("half-integer"), "{err}");
        let err = KernelSpec::rbf(-1.0, 1.0).validate().unwrap_err();
        assert!(err.to_string().contains("z must be > 0"), "{err}");
        let err = KernelSpec { omega0: None, ..KernelSpec::periodic(1.0, 1.0, 1.0) }.validate().unwrap_err();
        assert!(err.to_string().contains("omega0"), "{err}");
        assert!(NoiseSpec::new(-0.1).is_err());
        assert!(NoiseSpec::new(0.0).is_ok());
    }

    #[test]
    fn gram_examples() {
        let k = KernelSpec::rbf(1.0, 1.0);
        let g = gram_matrix(&k, &[0.0], &NoiseSpec { sigma_noise2: 0.1 });
        assert_relative_eq!(g[(0, 0)], 1.1, epsilon = 1e-15);

        let g = gram_matrix(&k, &[0.3, 0.3], &NoiseSpec { sigma_noise2: 0.0 });
        assert_eq!(g, DMatrix::from_element(2, 2, 1.0));

        let g = gram_matrix(&k, &[0.0, 1.0, 2.0], &NoiseSpec { sigma_noise2: 0.0 });
        assert_relative_eq!(g[(0, 2)], (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn periodic_weights_reconstruct() {
        let k = KernelSpec::periodic(1.0, 2.0, 1.5);
        let w = k.cosine_series_weights(6);
        assert_eq!(w.len(), 7);
        assert!(w.iter().all(|&q| q > 0.0));
        for i in 0..200 {
            let d = i as f64 * PI / 200.0;
            let series: f64 = w.iter().enumerate().map(|(j, q)| q * (j as f64 * 2.0 * d).cos()).sum();
            assert!((series - k.eval(d)).abs() <= 1e-3 * 1.5);
        }
    }

    #[test]
    fn config_json_roundtrip() {
        let text = r#"{"family":"matern","z":1.0,"sigma2":2.0,"nu":1.5,"sigma_noise2":0.01}"#;
        let cfg: KernelConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.kernel, KernelSpec::matern(1.5, 1.0, 2.0));
        assert_eq!(cfg.sigma_noise2, 0.01);
        let back: KernelConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
