//! Continuous-time state-space realizations of stationary kernels.
//!
//! A model is `dx/dt = A x + L w`, `y = H x` with white noise `w` of spectral
//! power `qc2`. Models built from several kernels (one per input column) are
//! block diagonal; each block advances with its own input increment.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, NoiseSpec};
use crate::spectral::{factor_spectrum, taylor_inverse_spectrum, StableFactor};

/// Largest state dimension a model may have.
pub const MAX_STATE_DIM: usize = 64;

/// Default RBF Taylor order.
pub const DEFAULT_RBF_ORDER: usize = 6;

/// Default number of periodic harmonics `J` (state dimension `2J + 1`).
pub const DEFAULT_PERIODIC_HARMONICS: usize = crate::kernels::DEFAULT_PERIODIC_HARMONICS;

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Hurwitz companion block driven by white noise.
    Diffusion,
    /// Noise-free bank of harmonic oscillators (periodic kernels).
    Oscillator,
}

/// One diagonal block of a model and the input column that drives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub offset: usize,
    pub size: usize,
    pub input: usize,
    pub kind: BlockKind,
    /// Decorrelation distance of the source kernel, in input units.
    pub length_scale: f64,
}

/// State-space realization of a (sum of) stationary kernel(s).
#[derive(Debug, Clone, PartialEq)]
pub struct Lssm {
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub h: RowDVector<f64>,
    pub qc2: f64,
    pub pinf: DMatrix<f64>,
    pub blocks: Vec<Block>,
    /// Non-fatal conversion diagnostics.
    pub warnings: Vec<String>,
}

/// Transition pair over one input increment.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep {
    pub phi: DMatrix<f64>,
    pub qd: DMatrix<f64>,
    pub delta: f64,
}

/// Approximation orders for kernels without an exact finite realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxOrder {
    pub rbf: usize,
    pub periodic_harmonics: usize,
}

impl Default for ApproxOrder {
    fn default() -> Self {
        ApproxOrder { rbf: DEFAULT_RBF_ORDER, periodic_harmonics: DEFAULT_PERIODIC_HARMONICS }
    }
}

impl Lssm {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.blocks.iter().map(|b| b.input + 1).max().unwrap_or(0)
    }

    /// Prior output variance `H P∞ Hᵀ`.
    pub fn prior_variance(&self) -> f64 {
        (&self.h * &self.pinf * self.h.transpose())[(0, 0)]
    }

    /// Output covariance `H Φ(Δ) P∞ Hᵀ` implied by a single-input model.
    pub fn covariance_at(&self, delta: f64) -> f64 {
        let phi = transition(&self.a, delta.abs());
        (&self.h * phi * &self.pinf * self.h.transpose())[(0, 0)]
    }

    /// Largest real part among the eigenvalues of the diffusion blocks.
    pub fn stability_margin(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::Diffusion)
            .flat_map(|b| {
                let sub = self.a.view((b.offset, b.offset), (b.size, b.size)).into_owned();
                sub.complex_eigenvalues().iter().map(|e| e.re).collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Max relative Lyapunov residual over the diffusion blocks.
    pub fn lyapunov_residual(&self) -> f64 {
        let noise = &self.l * self.qc2 * self.l.transpose();
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::Diffusion)
            .map(|b| {
                let r = (b.offset, b.offset);
                let s = (b.size, b.size);
                let a = self.a.view(r, s);
                let p = self.pinf.view(r, s);
                let q = noise.view(r, s);
                let res = a * p + p * a.transpose() + q;
                res.norm() / (a.norm() * p.norm()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    pub fn validate_dims(&self) -> Result<()> {
        let s = self.state_dim();
        ensure!(self.a.ncols() == s, Dimension, "A must be square");
        ensure!(self.l.len() == s, Dimension, "L has {} rows, expected {s}", self.l.len());
        ensure!(self.h.len() == s, Dimension, "H has {} columns, expected {s}", self.h.len());
        ensure!(self.pinf.shape() == (s, s), Dimension, "Pinf must be {s}x{s}");
        ensure!(s <= MAX_STATE_DIM, Validation, "state dimension {s} exceeds the cap of {MAX_STATE_DIM}");
        let covered: usize = self.blocks.iter().map(|b| b.size).sum();
        ensure!(covered == s, Dimension, "blocks cover {covered} states, model has {s}");
        Ok(())
    }

    /// Transition pair for one block over `delta`.
    pub fn discretize_block(&self, block: usize, delta: f64) -> Result<DiscreteStep> {
        ensure!(delta >= 0.0 && delta.is_finite(), Validation, "step must be finite and >= 0, got {delta}");
        let b = &self.blocks[block];
        let a = self.a.view((b.offset, b.offset), (b.size, b.size)).into_owned();
        let p = self.pinf.view((b.offset, b.offset), (b.size, b.size)).into_owned();
        Ok(step_from(&a, &p, delta))
    }
}

fn transition(a: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    if delta == 0.0 {
        DMatrix::identity(a.nrows(), a.ncols())
    } else {
        (a * delta).exp()
    }
}

fn step_from(a: &DMatrix<f64>, pinf: &DMatrix<f64>, delta: f64) -> DiscreteStep {
    let phi = transition(a, delta);
    let qd = if delta == 0.0 {
        DMatrix::zeros(a.nrows(), a.ncols())
    } else {
        symmetrize(pinf - &phi * pinf * phi.transpose())
    };
    DiscreteStep { phi, qd, delta }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `Φ = exp(AΔ)` and `Q_d = P∞ - Φ P∞ Φᵀ`, computed block by block.
pub fn discretize(model: &Lssm, delta: f64) -> Result<DiscreteStep> {
    ensure!(delta >= 0.0 && delta.is_finite(), Validation, "step must be finite and >= 0, got {delta}");
    let s = model.state_dim();
    let mut phi = DMatrix::zeros(s, s);
    let mut qd = DMatrix::zeros(s, s);
    for (i, b) in model.blocks.iter().enumerate() {
        let step = model.discretize_block(i, delta)?;
        phi.view_mut((b.offset, b.offset), (b.size, b.size)).copy_from(&step.phi);
        qd.view_mut((b.offset, b.offset), (b.size, b.size)).copy_from(&step.qd);
    }
    Ok(DiscreteStep { phi, qd, delta })
}

/// Solves `A P + P Aᵀ + L qc2 Lᵀ = 0` through the Kronecker identity
/// `(I ⊗ A + A ⊗ I) vec(P) = -vec(L qc2 Lᵀ)`.
pub fn solve_stationary_covariance(a: &DMatrix<f64>, l: &DVector<f64>, qc2: f64) -> Result<DMatrix<f64>> {
    let s = a.nrows();
    ensure!(a.is_square() && l.len() == s, Dimension, "A is {:?}, L has {} rows", a.shape(), l.len());
    ensure!(s <= MAX_STATE_DIM, Validation, "state dimension {s} exceeds the cap of {MAX_STATE_DIM}");
    let margin = a.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if !(margin < 0.0) {
        return Err(Error::Conditioning(format!(
            "drift matrix is not Hurwitz (max eigenvalue real part {margin:e}); supply P∞ directly"
        )));
    }
    let eye = DMatrix::<f64>::identity(s, s);
    let system = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -(l * qc2 * l.transpose());
    let vec_rhs = DVector::from_column_slice(rhs.as_slice());
    let solution = system
        .lu()
        .solve(&vec_rhs)
        .ok_or_else(|| Error::Conditioning("singular Lyapunov system".into()))?;
    Ok(symmetrize(DMatrix::from_column_slice(s, s, solution.as_slice())))
}

/// Companion-form realization of a stable factor.
///
/// The factor is rescaled to physical frequency and normalized to be monic.
/// Unless the kernel fixes `qc`, the noise power is chosen so that the
/// prior variance `H P∞ Hᵀ` equals `sigma2`.
pub fn companion_realize(factor: &StableFactor, spec: &KernelSpec) -> Result<Lssm> {
    let a_phys = factor.physical_coeffs();
    let m = a_phys.len() - 1;
    let lead = a_phys[m];
    ensure!(lead != 0.0 && lead.is_finite(), Validation, "factor cannot be made monic: a_m = {lead}");
    ensure!(m <= MAX_STATE_DIM, Validation, "state dimension {m} exceeds the cap of {MAX_STATE_DIM}");

    let mut a = DMatrix::zeros(m, m);
    for i in 0..m.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, coeff) in a_phys[..m].iter().enumerate() {
        a[(m - 1, j)] = -coeff / lead;
    }
    let mut l = DVector::zeros(m);
    l[m - 1] = 1.0;
    let mut h = RowDVector::zeros(m);
    h[0] = 1.0;

    let (qc2, pinf) = match spec.qc {
        Some(qc) => {
            let qc2 = qc * qc;
            (qc2, solve_stationary_covariance(&a, &l, qc2)?)
        }
        None => {
            let unit = solve_stationary_covariance(&a, &l, 1.0)?;
            let v = unit[(0, 0)];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Conditioning(format!("unit-noise prior variance is {v}")));
            }
            let qc2 = spec.sigma2 / v;
            (qc2, unit * qc2)
        }
    };

    Ok(Lssm {
        a,
        l,
        h,
        qc2,
        pinf,
        blocks: vec![Block {
            offset: 0,
            size: m,
            input: 0,
            kind: BlockKind::Diffusion,
            length_scale: spec.characteristic_length(),
        }],
        warnings: Vec::new(),
    })
}

/// Max absolute error of the cosine-series reconstruction over one period.
pub fn periodic_reconstruction_error(spec: &KernelSpec, weights: &[f64]) -> f64 {
    let omega0 = spec.omega0.unwrap_or(1.0);
    let period = 2.0 * std::f64::consts::PI / omega0;
    let n = 2000;
    (0..=n)
        .map(|i| {
            let d = period * i as f64 / n as f64;
            let series: f64 = weights
                .iter()
                .enumerate()
                .map(|(j, q)| q * (j as f64 * omega0 * d).cos())
                .sum();
            (series - spec.eval(d)).abs()
        })
        .fold(0.0, f64::max)
}

/// Oscillator-bank realization of a periodic kernel with harmonics `0..=J`.
///
/// Harmonic 0 is a 1×1 zero block; harmonic `j ≥ 1` is the rotation
/// generator `[[0, -jω₀], [jω₀, 0]]`. The blocks carry no driving noise, so
/// `qc2` is zero and `P∞` holds the cosine-series weights.
pub fn periodic_realize(spec: &KernelSpec, harmonics: usize) -> Result<Lssm> {
    spec.validate()?;
    ensure!(spec.family == KernelFamily::Periodic, Validation, "periodic_realize needs a periodic kernel");
    ensure!(harmonics >= 1, Validation, "number of harmonics J must be >= 1");
    let s = 2 * harmonics + 1;
    ensure!(s <= MAX_STATE_DIM, Validation, "state dimension {s} exceeds the cap of {MAX_STATE_DIM}");
    let omega0 = spec.omega0.unwrap();
    let weights = spec.cosine_series_weights(harmonics);

    let mut a = DMatrix::zeros(s, s);
    let mut l = DVector::zeros(s);
    let mut h = RowDVector::zeros(s);
    let mut pinf = DMatrix::zeros(s, s);
    h[0] = 1.0;
    pinf[(0, 0)] = weights[0];
    for j in 1..=harmonics {
        let o = 2 * j - 1;
        let w = j as f64 * omega0;
        a[(o, o + 1)] = -w;
        a[(o + 1, o)] = w;
        l[o + 1] = 1.0;
        h[o] = 1.0;
        pinf[(o, o)] = weights[j];
        pinf[(o + 1, o + 1)] = weights[j];
    }

    let mut warnings = Vec::new();
    let err = periodic_reconstruction_error(spec, &weights);
    if err > 1e-3 * spec.sigma2 {
        warnings.push(format!(
            "periodic cosine series with J = {harmonics} reconstructs the kernel to {err:.3e} (> 1e-3 sigma2); increase J"
        ));
    }

    Ok(Lssm {
        a,
        l,
        h,
        qc2: 0.0,
        pinf,
        blocks: vec![Block {
            offset: 0,
            size: s,
            input: 0,
            kind: BlockKind::Oscillator,
            length_scale: spec.characteristic_length(),
        }],
        warnings,
    })
}

/// Block-diagonal sum of independent models (one additive component each).
///
/// Each component's noise power is folded into its rows of `L`, leaving
/// `qc2 = 1` for the stack. A single model is returned unchanged.
pub fn stack_miso(models: &[Lssm]) -> Result<Lssm> {
    ensure!(!models.is_empty(), Validation, "cannot stack an empty list of models");
    if models.len() == 1 {
        return Ok(models[0].clone());
    }
    let s: usize = models.iter().map(Lssm::state_dim).sum();
    ensure!(s <= MAX_STATE_DIM, Validation, "stacked state dimension {s} exceeds the cap of {MAX_STATE_DIM}");

    let mut a = DMatrix::zeros(s, s);
    let mut pinf = DMatrix::zeros(s, s);
    let mut l = DVector::zeros(s);
    let mut h = RowDVector::zeros(s);
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    let mut offset = 0;
    let mut input_base = 0;
    for model in models {
        let n = model.state_dim();
        a.view_mut((offset, offset), (n, n)).copy_from(&model.a);
        pinf.view_mut((offset, offset), (n, n)).copy_from(&model.pinf);
        l.rows_mut(offset, n).copy_from(&(&model.l * model.qc2.sqrt()));
        h.columns_mut(offset, n).copy_from(&model.h);
        blocks.extend(model.blocks.iter().map(|b| Block {
            offset: b.offset + offset,
            input: b.input + input_base,
            ..b.clone()
        }));
        warnings.extend(model.warnings.iter().cloned());
        offset += n;
        input_base += model.n_inputs();
    }
    Ok(Lssm { a, l, h, qc2: 1.0, pinf, blocks, warnings })
}

/// Runs the full conversion for one kernel.
pub fn convert(spec: &KernelSpec, order: &ApproxOrder) -> Result<Lssm> {
    spec.validate()?;
    match spec.family {
        KernelFamily::Rbf => {
            let factor = factor_spectrum(&taylor_inverse_spectrum(spec, order.rbf)?)?;
            companion_realize(&factor, spec)
        }
        KernelFamily::Matern => {
            let p = spec.matern_order().expect("validated");
            let factor = factor_spectrum(&taylor_inverse_spectrum(spec, p)?)?;
            companion_realize(&factor, spec)
        }
        KernelFamily::Periodic => periodic_realize(spec, order.periodic_harmonics),
    }
}

/// Converts one kernel per input column and stacks them.
pub fn convert_additive(kernels: &[KernelSpec], order: &ApproxOrder) -> Result<Lssm> {
    let parts = kernels.iter().map(|k| convert(k, order)).collect::<Result<Vec<_>>>()?;
    stack_miso(&parts)
}

/// Memo of per-block transition pairs keyed by the exact step length.
///
/// Shared across threads behind a mutex; hits and misses are counted so
/// benchmarks can separate cold from warm runs.
#[derive(Debug, Default)]
pub struct StepCache {
    map: Mutex<HashMap<(usize, u64), Arc<DiscreteStep>>>,
}

impl StepCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&self, model: &Lssm, block: usize, delta: f64) -> Result<Arc<DiscreteStep>> {
        let key = (block, delta.to_bits());
        if let Some(step) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(step));
        }
        let step = Arc::new(model.discretize_block(block, delta)?);
        self.map.lock().unwrap().insert(key, Arc::clone(&step));
        Ok(step)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.lock().unwrap().clear();
    }
}

/// Versioned, dependency-free JSON export of a model.
///
/// Consumers need only matrix arithmetic: `Φ = exp(AΔ)` per block and
/// `Q_d = P∞ - Φ P∞ Φᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub qc2: f64,
    #[serde(rename = "Pinf")]
    pub pinf: Vec<Vec<f64>>,
    pub blocks: Vec<Block>,
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<ApproxOrder>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    ensure!(rows.iter().all(|r| r.len() == cols), Dimension, "{name} has ragged rows");
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_model(model: &Lssm, noise: &NoiseSpec, kernels: &[KernelSpec], order: Option<ApproxOrder>) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            a: rows_of(&model.a),
            l: model.l.iter().copied().collect(),
            h: model.h.iter().copied().collect(),
            qc2: model.qc2,
            pinf: rows_of(&model.pinf),
            blocks: model.blocks.clone(),
            noise: noise.sigma_noise2,
            kernels: kernels.to_vec(),
            order,
        }
    }

    pub fn to_model(&self) -> Result<(Lssm, NoiseSpec)> {
        ensure!(
            self.version == MODEL_FILE_VERSION,
            Validation,
            "unsupported model file version {} (expected {MODEL_FILE_VERSION})",
            self.version
        );
        let model = Lssm {
            a: matrix_from_rows(&self.a, "A")?,
            l: DVector::from_vec(self.l.clone()),
            h: RowDVector::from_vec(self.h.clone()),
            qc2: self.qc2,
            pinf: matrix_from_rows(&self.pinf, "Pinf")?,
            blocks: self.blocks.clone(),
            warnings: Vec::new(),
        };
        model.validate_dims()?;
        Ok((model, NoiseSpec::new(self.noise)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_kernel_realization() {
        let spec = KernelSpec::matern(0.5, 1.0, 1.0);
        let model = convert(&spec, &ApproxOrder::default()).unwrap();
        assert_relative_eq!(model.a[(0, 0)], -1.0, epsilon = 1e-12);
        assert_eq!(model.l[0], 1.0);
        assert_eq!(model.h[0], 1.0);
        assert_relative_eq!(model.pinf[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(model.qc2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rounded_rbf_companion() {
        let s2 = std::f64::consts::SQRT_2;
        let factor = StableFactor::from_coeffs(vec![1.0, 2.2 / s2, 1.0 / s2]).unwrap();
        let model = companion_realize(&factor, &KernelSpec::rbf(1.0, 1.0)).unwrap();
        assert_eq!(model.a[(0, 0)], 0.0);
        assert_eq!(model.a[(0, 1)], 1.0);
        assert_relative_eq!(model.a[(1, 0)], -s2, epsilon = 1e-12);
        assert_relative_eq!(model.a[(1, 1)], -2.2, epsilon = 1e-12);
    }

    #[test]
    fn h_selects_first_state() {
        let model = convert(&KernelSpec::rbf(0.7, 2.0), &ApproxOrder::default()).unwrap();
        let mut x = DVector::from_element(model.state_dim(), 9.0);
        x[0] = 3.5;
        assert_eq!((&model.h * x)[0], 3.5);
    }

    #[test]
    fn scalar_lyapunov() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let l = DVector::from_element(1, 1.0);
        assert_relative_eq!(solve_stationary_covariance(&a, &l, 2.0).unwrap()[(0, 0)], 1.0, epsilon = 1e-14);
        let (lambda, sigma2) = (2.5, 0.3);
        let a = DMatrix::from_element(1, 1, -lambda);
        let p = solve_stationary_covariance(&a, &l, 2.0 * lambda * sigma2).unwrap();
        assert_relative_eq!(p[(0, 0)], sigma2, epsilon = 1e-14);
    }

    #[test]
    fn non_hurwitz_is_rejected() {
        let spec = KernelSpec::periodic(1.0, 1.0, 1.0);
        let model = periodic_realize(&spec, 3).unwrap();
        let err = solve_stationary_covariance(&model.a, &model.l, 1.0).unwrap_err();
        assert!(matches!(err, Error::Conditioning(_)));
    }

    #[test]
    fn ou_discretization() {
        let model = convert(&KernelSpec::matern(0.5, 1.0, 1.0), &ApproxOrder::default()).unwrap();
        let step = discretize(&model, 0.7).unwrap();
        assert_relative_eq!(step.phi[(0, 0)], (-0.7f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(step.qd[(0, 0)], 1.0 - (-1.4f64).exp(), epsilon = 1e-13);

        let zero = discretize(&model, 0.0).unwrap();
        assert_eq!(zero.phi, DMatrix::identity(1, 1));
        assert_eq!(zero.qd, DMatrix::zeros(1, 1));
        assert!(discretize(&model, -0.1).is_err());
    }

    #[test]
    fn rbf_residuals_and_variance() {
        let spec = KernelSpec::rbf(1.3, 0.8);
        let model = convert(&spec, &ApproxOrder::default()).unwrap();
        assert_eq!(model.state_dim(), 6);
        assert!(model.lyapunov_residual() < 1e-8, "{}", model.lyapunov_residual());
        assert_relative_eq!(model.prior_variance(), 0.8, max_relative = 1e-6);
        assert!(model.stability_margin() < 0.0);
    }

    #[test]
    fn periodic_blocks() {
        let spec = KernelSpec::periodic(1.0, 1.5, 1.0);
        let model = periodic_realize(&spec, 6).unwrap();
        assert_eq!(model.state_dim(), 13);
        assert!(model.warnings.is_empty(), "{:?}", model.warnings);
        assert_relative_eq!(model.prior_variance(), 1.0, epsilon = 1e-3);
        for j in 1..=6 {
            let o = 2 * j - 1;
            let block = model.a.view((o, o), (2, 2)).into_owned();
            for e in block.complex_eigenvalues().iter() {
                assert_eq!(e.re, 0.0);
                assert_relative_eq!(e.im.abs(), 1.5 * j as f64, epsilon = 1e-12);
            }
        }
        // rotation: no process noise
        let step = discretize(&model, 0.37).unwrap();
        assert!(step.qd.amax() < 1e-12);

        let coarse = periodic_realize(&KernelSpec::periodic(3.0, 1.0, 1.0), 1).unwrap();
        assert_eq!(coarse.warnings.len(), 1);
    }

    #[test]
    fn stacking() {
        let m1 = convert(&KernelSpec::matern(0.5, 1.0, 1.0), &ApproxOrder::default()).unwrap();
        assert_eq!(stack_miso(std::slice::from_ref(&m1)).unwrap(), m1);
        let m2 = convert(&KernelSpec::rbf(2.0, 1.0), &ApproxOrder::default()).unwrap();
        let s = stack_miso(&[m1.clone(), m1.clone(), m2]).unwrap();
        assert_eq!(s.state_dim(), 8);
        assert_eq!(s.n_inputs(), 3);
        assert_eq!(s.blocks[2].offset, 2);
        assert_eq!(s.blocks[2].input, 2);
        assert_relative_eq!(s.prior_variance(), 3.0, epsilon = 1e-9);
        assert!(s.lyapunov_residual() < 1e-8);
        assert!(stack_miso(&[]).is_err());
    }

    #[test]
    fn cache_reuses_steps() {
        let model = convert(&KernelSpec::matern(1.5, 1.0, 1.0), &ApproxOrder::default()).unwrap();
        let cache = StepCache::new();
        let a = cache.get_or_insert(&model, 0, 0.25).unwrap();
        let b = cache.get_or_insert(&model, 0, 0.25).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn model_file_roundtrip() {
        let spec = KernelSpec::rbf(1.0, 1.0);
        let model = convert(&spec, &ApproxOrder::default()).unwrap();
        let noise = NoiseSpec::new(0.01).unwrap();
        let file = ModelFile::from_model(&model, &noise, &[spec], Some(ApproxOrder::default()));
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"version\":1") && text.contains("\"Pinf\""));
        let (back, n) = serde_json::from_str::<ModelFile>(&text).unwrap().to_model().unwrap();
        assert_eq!(back.a, model.a);
        assert_eq!(back.pinf, model.pinf);
        assert_eq!(n, noise);

        let mut bad = file.clone();
        bad.version = 2;
        assert!(bad.to_model().is_err());
    }
}
