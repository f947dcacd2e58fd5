//! From a kernel's spectral density to the coefficients of a stable
//! linear SDE whose output has (approximately) that spectrum.
//!
//! The pipeline is: polynomial approximation of `q_c² / S(ω)` in `ω²`,
//! roots of that polynomial, selection of the stable half of each conjugate
//! pair, and expansion of the stable product back into coefficients.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::kernels::{factorial, KernelFamily, KernelSpec};

/// Largest order accepted by [`taylor_inverse_spectrum`].
pub const MAX_ORDER: usize = 40;

const BOUNDARY_TOL: f64 = 1e-10;

/// `Σ_i c_i u^i` with `u = (ω / freq_scale)²`, approximating `q_c² / S(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPolynomial {
    /// Ascending coefficients `c_0 ..= c_m`.
    pub coeffs: Vec<f64>,
    /// Angular frequency represented by one unit of the polynomial variable.
    pub freq_scale: f64,
}

impl SpectralPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::with_scale(coeffs, 1.0)
    }

    pub fn with_scale(coeffs: Vec<f64>, freq_scale: f64) -> Result<Self> {
        let poly = SpectralPolynomial { coeffs, freq_scale };
        poly.validate()?;
        Ok(poly)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.coeffs.len() >= 2,
            Validation,
            "spectral polynomial needs order >= 1, got {} coefficient(s)",
            self.coeffs.len()
        );
        ensure!(
            self.coeffs.iter().all(|c| c.is_finite()),
            Validation,
            "spectral polynomial has non-finite coefficients"
        );
        ensure!(
            *self.coeffs.last().unwrap() != 0.0,
            Validation,
            "leading coefficient of the spectral polynomial is zero"
        );
        ensure!(
            self.freq_scale.is_finite() && self.freq_scale > 0.0,
            Validation,
            "freq_scale must be > 0, got {}",
            self.freq_scale
        );
        Ok(())
    }

    /// `Σ c_i (ω²)^i` in the polynomial's own variable.
    pub fn eval(&self, omega: f64) -> f64 {
        let u = omega * omega;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

/// Stable spectral factor `s(jω) = Σ a_i (jω)^i = a_m ∏ (r_i + jω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StableFactor {
    /// Ascending real coefficients `a_0 ..= a_m`.
    pub coeffs: Vec<f64>,
    /// Selected roots, each with strictly positive real part.
    pub roots: Vec<Complex64>,
    /// Inherited from the polynomial: `ω = freq_scale · (polynomial variable)`.
    pub freq_scale: f64,
}

impl StableFactor {
    /// Builds a factor directly from coefficients, recovering its roots.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        ensure!(coeffs.len() >= 2, Validation, "factor needs order >= 1");
        ensure!(*coeffs.last().unwrap() != 0.0, Validation, "leading factor coefficient is zero");
        // s(jω) = 0 at jω = -r
        let roots = polynomial_roots(&coeffs)?.into_iter().map(|x| -x).collect();
        Ok(StableFactor { coeffs, roots, freq_scale: 1.0 })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `s(jω)` in the polynomial's own frequency variable.
    pub fn eval(&self, omega: f64) -> Complex64 {
        let jw = Complex64::new(0.0, omega);
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * jw + a)
    }

    /// Coefficients of the same factor expressed in physical angular frequency.
    pub fn physical_coeffs(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a / self.freq_scale.powi(i as i32))
            .collect()
    }

    /// Largest real part among the SDE's characteristic roots, i.e. the
    /// stability margin of the realized drift matrix (negative when stable).
    pub fn stability_margin(&self) -> f64 {
        self.roots
            .iter()
            .map(|r| -r.re * self.freq_scale)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Polynomial approximation of the inverse spectrum `q_c² / S(ω)` about `ω = 0`.
///
/// * RBF: the truncated series `Σ_{i≤m} z^{2i} / i! · u^i`. The variable is
///   `u = (ω / κ)²` with `κ = √2 z²`, which makes the series the exact Taylor
///   expansion of the RBF inverse spectrum.
/// * Matérn: the exact binomial expansion of `(λ² + ω²)^{ν+½}`; `m` must
///   equal `ν + ½`.
///
/// The overall constant (`q_c`) is fixed later by variance matching.
pub fn taylor_inverse_spectrum(spec: &KernelSpec, order: usize) -> Result<SpectralPolynomial> {
    spec.validate()?;
    ensure!(order >= 1, Validation, "approximation order m must be >= 1");
    ensure!(order <= MAX_ORDER, Validation, "approximation order m = {order} exceeds {MAX_ORDER}");
    match spec.family {
        KernelFamily::Rbf => {
            let z2 = spec.z * spec.z;
            let coeffs = (0..=order).map(|i| z2.powi(i as i32) / factorial(i)).collect();
            SpectralPolynomial::with_scale(coeffs, std::f64::consts::SQRT_2 * z2)
        }
        KernelFamily::Matern => {
            let p = spec.matern_order().expect("validated");
            ensure!(
                order == p,
                Validation,
                "matern nu = {} has an exact order of {p}; got m = {order}",
                spec.nu.unwrap()
            );
            let l2 = spec.matern_rate().unwrap().powi(2);
            let coeffs = (0..=p).map(|i| binomial(p, i) * l2.powi((p - i) as i32)).collect();
            SpectralPolynomial::new(coeffs)
        }
        KernelFamily::Periodic => Err(Error::Validation(
            "periodic kernels have a line spectrum; use the oscillator realization".into(),
        )),
    }
}

/// Splits `Σ c_i ω^{2i}` into `s(jω) s(-jω)` and returns the stable `s`.
///
/// Each root `ρ` of the polynomial in `u = ω²` gives the conjugate pair
/// `±√(-ρ)`; the representative with positive real part is kept and the
/// product `√c_m ∏ (r_i + jω)` is expanded.
pub fn factor_spectrum(poly: &SpectralPolynomial) -> Result<StableFactor> {
    poly.validate()?;
    let u_roots = refine_roots(&poly.coeffs, companion_eigenvalues(&poly.coeffs)?);
    factor_from_roots(poly, &u_roots)
}

/// Eigenvalues of a k-fold root scatter by O(eps^(1/k)) around it while their
/// mean stays accurate, so near-coincident roots are replaced by the mean of
/// their cluster. Isolated roots get a few Newton steps.
fn refine_roots(coeffs: &[f64], eig: Vec<Complex64>) -> Vec<Complex64> {
    let merged = merge_clusters(&eig, 1e-4);
    merged
        .into_iter()
        .zip(&eig)
        .map(|(m, &e)| if m == e { polish_root(coeffs, e) } else { m })
        .collect()
}

fn merge_clusters(roots: &[Complex64], rel_tol: f64) -> Vec<Complex64> {
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = roots[i].norm().max(roots[j].norm()).max(f64::MIN_POSITIVE);
            if (roots[i] - roots[j]).norm() <= rel_tol * scale {
                let (from, to) = (label[j], label[i]);
                for l in label.iter_mut() {
                    if *l == from {
                        *l = to;
                    }
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            let members: Vec<Complex64> = (0..n).filter(|&j| label[j] == label[i]).map(|j| roots[j]).collect();
            members.iter().sum::<Complex64>() / members.len() as f64
        })
        .collect()
}

fn factor_from_roots(poly: &SpectralPolynomial, u_roots: &[Complex64]) -> Result<StableFactor> {
    let mut roots = Vec::with_capacity(u_roots.len());
    for &rho in u_roots {
        let mut r = (-rho).sqrt();
        if r.re < 0.0 {
            r = -r;
        }
        if r.re.abs() < BOUNDARY_TOL * r.norm().max(1.0) {
            return Err(Error::Conditioning(format!(
                "spectral root {r} lies on the stability boundary; choose a different order m or hyperparameters"
            )));
        }
        roots.push(r);
    }

    let lead = poly.coeffs.last().unwrap().abs().sqrt();
    let mut expanded = vec![Complex64::new(lead, 0.0)];
    for r in &roots {
        // multiply by (r + s)
        let mut next = vec![Complex64::new(0.0, 0.0); expanded.len() + 1];
        for (i, &e) in expanded.iter().enumerate() {
            next[i] += e * r;
            next[i + 1] += e;
        }
        expanded = next;
    }

    let scale = expanded.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let residue = expanded.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if residue > BOUNDARY_TOL * scale {
        return Err(Error::Conditioning(format!(
            "defactorized coefficients have imaginary residue {residue:e} (scale {scale:e})"
        )));
    }

    Ok(StableFactor {
        coeffs: expanded.iter().map(|c| c.re).collect(),
        roots,
        freq_scale: poly.freq_scale,
    })
}

/// Max over `grid` of `||s(jω)|² - P(ω²)| / (1 + P(ω²))`.
pub fn verify_factorization(factor: &StableFactor, poly: &SpectralPolynomial, grid: &[f64]) -> Result<f64> {
    ensure!(!grid.is_empty(), Validation, "verification grid is empty");
    Ok(grid
        .iter()
        .map(|&w| {
            let target = poly.eval(w);
            (factor.eval(w).norm_sqr() - target).abs() / (1.0 + target.abs())
        })
        .fold(0.0, f64::max))
}

/// Roots of `Σ coeffs[i] x^i` via the eigenvalues of its companion matrix.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    Ok(refine_roots(coeffs, companion_eigenvalues(coeffs)?))
}

fn companion_eigenvalues(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -coeffs[i] / lead;
    }
    let eig = companion.complex_eigenvalues();
    if eig.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::Conditioning("companion eigenvalue iteration did not converge".into()));
    }
    Ok(eig.iter().copied().collect())
}

fn polish_root(coeffs: &[f64], mut x: Complex64) -> Complex64 {
    let eval = |x: Complex64| {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };
    for _ in 0..4 {
        let (p, dp) = eval(x);
        if dp.norm() == 0.0 {
            break;
        }
        let candidate = x - p / dp;
        if eval(candidate).0.norm() < p.norm() {
            x = candidate;
        } else {
            break;
        }
    }
    // Keep exactly real roots real.
    if x.im.abs() <= 1e-14 * x.norm() {
        x.im = 0.0;
    }
    x
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}
