//! Expectation of optimization bias (EOB) for stationary Gaussian processes.
//!
//! For an AR(p) process of length `T` the bias of a point-wise loss is
//!
//! ```text
//! E[B] = -1/2 log|R| = (T - p)/2 * ln SSNR - 1/2 ln|R_p|
//! ```
//!
//! where `R` is the `T x T` autocorrelation matrix, `R_p` its leading
//! `p x p` block and `SSNR = sigma_z^2 / sigma_eps^2`. All values are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{EobError, Result};
use crate::linalg::{self, Matrix};
use crate::processes::ArSpec;
use crate::rng;
use crate::scalar::Scalar;

/// Autocorrelations at lags `1..=p`, marginal variance and structural SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YuleWalkerSolution<S = f64> {
    pub rho: Vec<S>,
    pub sigma_z2: S,
    pub ssnr: S,
}

/// Symmetric correlation matrix with an exact unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix<S = f64> {
    m: Matrix<S>,
}

impl<S: Scalar> CorrMatrix<S> {
    /// Validates squareness and symmetry (to `1e-10`), then forces the
    /// diagonal to exactly one.
    pub fn new(mut m: Matrix<S>) -> Result<Self> {
        let n = m.rows();
        crate::error::check_len(n, m.cols())?;
        let tol = S::lit(1e-10);
        for i in 0..n {
            if (m[(i, i)] - S::one()).abs() > tol {
                return Err(EobError::invalid("entries", format!("diagonal entry {i} is not 1")));
            }
            m[(i, i)] = S::one();
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > tol || !m[(i, j)].is_finite() {
                    return Err(EobError::invalid("entries", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(CorrMatrix { m })
    }

    /// Toeplitz matrix `R_ij = rho_|i-j|` from autocorrelations with `rho[0] = 1`.
    pub fn toeplitz(rho: &[S], dim: usize) -> Result<Self> {
        if rho.len() < dim {
            return Err(EobError::LengthMismatch {
                expected: dim,
                got: rho.len(),
            });
        }
        let m = Matrix::from_fn(dim, dim, |i, j| rho[i.abs_diff(j)]);
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        CorrMatrix {
            m: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.m[(i, j)]
    }

    pub fn log_det(&self) -> Result<S> {
        if self.dim() == 0 {
            return Ok(S::zero());
        }
        self.m.log_det_spd()
    }

    pub fn det(&self) -> Result<S> {
        Ok(self.log_det()?.exp())
    }

    /// Eigenvalues ascending.
    pub fn eigenvalues(&self) -> Result<Vec<S>> {
        self.m.symmetric_eigenvalues()
    }

    /// PSD check with tolerance `-1e-10 * dim` on the smallest eigenvalue.
    pub fn check_psd(&self) -> Result<()> {
        let eig = self.eigenvalues()?;
        let min = eig.first().copied().unwrap_or(S::one());
        if min < -S::lit(1e-10) * S::from_usize_lossy(self.dim()) {
            return Err(EobError::NotPositiveDefinite {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EobMethod {
    ArClosedForm,
    MgmDeterminant,
    GmmLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EobReport<S = f64> {
    pub value_nats: S,
    pub ssnr: S,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
    pub steady_term: S,
    pub transient_term: S,
    pub method: EobMethod,
}

impl<S: Scalar> EobReport<S> {
    pub fn value_bits(&self) -> S {
        self.value_nats / S::LN_2()
    }

    /// Same report with every bias term expressed in bits.
    pub fn in_bits(&self) -> Self {
        EobReport {
            value_nats: self.value_bits(),
            steady_term: self.steady_term / S::LN_2(),
            transient_term: self.transient_term / S::LN_2(),
            ..self.clone()
        }
    }
}

/// Solves the Yule-Walker system `rho_k = sum_i phi_i rho_|k-i|`, `k = 1..p`.
pub fn solve_yule_walker<S: Scalar>(spec: &ArSpec<S>) -> Result<YuleWalkerSolution<S>> {
    spec.check_stationary()?;
    let p = spec.order();
    let mut a = Matrix::<S>::identity(p);
    let mut b = vec![S::zero(); p];
    for k in 1..=p {
        for (i, &phi) in spec.phi.iter().enumerate() {
            let lag = k.abs_diff(i + 1);
            if lag == 0 {
                b[k - 1] = b[k - 1] + phi;
            } else {
                a[(k - 1, lag - 1)] = a[(k - 1, lag - 1)] - phi;
            }
        }
    }
    let rho = linalg::solve(&a, &b)?;
    let explained: S = spec.phi.iter().zip(&rho).map(|(&f, &r)| f * r).sum();
    let denom = S::one() - explained;
    if !(denom > S::zero()) || rho.iter().any(|r| r.abs() > S::one() + S::lit(1e-9)) {
        return Err(EobError::Singular);
    }
    let ssnr = S::one() / denom;
    Ok(YuleWalkerSolution {
        rho,
        sigma_z2: spec.sigma_eps2 * ssnr,
        ssnr,
    })
}

/// Autocorrelations `rho_0..=rho_max_lag`, extended beyond lag `p` by the
/// AR recursion.
pub fn autocorrelations<S: Scalar>(spec: &ArSpec<S>, max_lag: usize) -> Result<Vec<S>> {
    let yw = solve_yule_walker(spec)?;
    let mut rho = Vec::with_capacity(max_lag + 1);
    rho.push(S::one());
    for k in 1..=max_lag {
        let r = if k <= spec.order() {
            yw.rho[k - 1]
        } else {
            spec.phi
                .iter()
                .enumerate()
                .map(|(i, &phi)| phi * rho[k - 1 - i])
                .sum()
        };
        rho.push(r);
    }
    Ok(rho)
}

pub fn corr_matrix_from_ar<S: Scalar>(spec: &ArSpec<S>, t: usize) -> Result<CorrMatrix<S>> {
    if t == 0 {
        return Err(EobError::invalid("T", "must be at least 1"));
    }
    let rho = autocorrelations(spec, t - 1)?;
    CorrMatrix::toeplitz(&rho, t)
}

/// Closed form `((T - p)/2) ln SSNR - 1/2 ln|R_p|`.
pub fn eob_ar_closed_form<S: Scalar>(spec: &ArSpec<S>, t: usize) -> Result<EobReport<S>> {
    let p = spec.order();
    if t <= p {
        return Err(EobError::invalid("T", format!("must exceed the AR order {p}, got {t}")));
    }
    let yw = solve_yule_walker(spec)?;
    let steady = S::from_usize_lossy(t - p) / S::lit(2.0) * yw.ssnr.ln();
    let transient = if p == 0 {
        S::zero()
    } else {
        let mut rho = vec![S::one()];
        rho.extend_from_slice(&yw.rho);
        -S::lit(0.5) * CorrMatrix::toeplitz(&rho, p)?.log_det()? + S::zero()
    };
    Ok(EobReport {
        value_nats: steady + transient,
        ssnr: yw.ssnr,
        t,
        p,
        steady_term: steady,
        transient_term: transient,
        method: EobMethod::ArClosedForm,
    })
}

/// `-1/2 ln|R|` through a symmetric factorization.
///
/// The report's `ssnr` is the per-step geometric value `|R|^(-1/T)`; the
/// whole bias is carried in `steady_term`.
pub fn eob_mgm<S: Scalar>(r: &CorrMatrix<S>) -> Result<EobReport<S>> {
    let t = r.dim();
    let log_det = r.log_det()?;
    let value = -S::lit(0.5) * log_det;
    let ssnr = if t == 0 {
        S::one()
    } else {
        (-log_det / S::from_usize_lossy(t)).exp()
    };
    Ok(EobReport {
        value_nats: value,
        ssnr,
        t,
        p: 0,
        steady_term: value,
        transient_term: S::zero(),
        method: EobMethod::MgmDeterminant,
    })
}

/// Relative residual of `|R| = |R_p| SSNR^-(T-p)`, evaluated in the log
/// domain.
pub fn verify_determinant_decomposition<S: Scalar>(spec: &ArSpec<S>, t: usize) -> Result<S> {
    let p = spec.order();
    if t <= p {
        return Err(EobError::invalid("T", format!("must exceed the AR order {p}, got {t}")));
    }
    let yw = solve_yule_walker(spec)?;
    let full = corr_matrix_from_ar(spec, t)?.log_det()?;
    let head = if p == 0 {
        S::zero()
    } else {
        corr_matrix_from_ar(spec, p)?.log_det()?
    };
    let predicted = head - S::from_usize_lossy(t - p) * yw.ssnr.ln();
    Ok((predicted - full).exp_m1().abs())
}

/// `(T, |R_T|^(1/T))` for each requested length.
pub fn szego_convergence_curve<S: Scalar>(spec: &ArSpec<S>, t_values: &[usize]) -> Result<Vec<(usize, S)>> {
    t_values
        .iter()
        .map(|&t| {
            let r = corr_matrix_from_ar(spec, t)?;
            Ok((t, (r.log_det()? / S::from_usize_lossy(t)).exp()))
        })
        .collect()
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn shannon_entropy<S: Scalar>(weights: &[S]) -> S {
    weights
        .iter()
        .filter(|&&w| w > S::zero())
        .map(|&w| -w * w.ln())
        .sum()
}

/// Lower bound `sum_k pi_k E[B_k] - H(pi)` for a Gaussian mixture. The
/// component biases must refer to the same sequence length.
pub fn eob_gmm_lower_bound<S: Scalar>(weights: &[S], component_eobs: &[S]) -> Result<S> {
    crate::error::check_len(weights.len(), component_eobs.len())?;
    if weights.is_empty() {
        return Err(EobError::invalid("weights", "at least one component required"));
    }
    if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
        return Err(EobError::invalid("weights", "mixture weights must be non-negative"));
    }
    let total: S = weights.iter().copied().sum();
    if (total - S::one()).abs() > S::lit(1e-12).max(S::epsilon() * S::lit(8.0)) {
        return Err(EobError::invalid("weights", format!("must sum to 1, got {total}")));
    }
    let mixed: S = weights.iter().zip(component_eobs).map(|(&w, &b)| w * b).sum();
    Ok(mixed - shannon_entropy(weights))
}

/// `SNR = SSNR - 1`.
pub fn ssnr_to_snr<S: Scalar>(ssnr: S) -> Result<S> {
    if !(ssnr >= S::one()) || !ssnr.is_finite() {
        return Err(EobError::invalid("ssnr", format!("must be at least 1, got {ssnr}")));
    }
    Ok(ssnr - S::one())
}

/// `SSNR = SNR + 1`.
pub fn snr_to_ssnr<S: Scalar>(snr: S) -> Result<S> {
    if !(snr >= S::zero()) || !snr.is_finite() {
        return Err(EobError::invalid("snr", format!("must be non-negative, got {snr}")));
    }
    Ok(snr + S::one())
}

/// Sample mean and standard error of the realised bias
/// `sum_t ln p(z_t | z_{1:t-1}) - ln p(z_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEob {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

/// Monte-Carlo estimate of the bias with exact Gaussian densities. The
/// innovation family in `spec` is replaced by a Gaussian of the same
/// variance; the first `p` values are drawn from the stationary law.
pub fn monte_carlo_eob(spec: &ArSpec<f64>, t: usize, replications: usize, seed: u64) -> Result<MonteCarloEob> {
    use rand_distr::{Distribution, StandardNormal};

    let p = spec.order();
    if t <= p {
        return Err(EobError::invalid("T", format!("must exceed the AR order {p}, got {t}")));
    }
    if replications < 2 {
        return Err(EobError::invalid("replications", "need at least 2"));
    }
    let yw = solve_yule_walker(spec)?;
    let mu = spec.mean();
    let s2e = spec.sigma_eps2;
    let s2z = yw.sigma_z2;
    let head_chol = if p > 0 {
        let r = corr_matrix_from_ar(spec, p)?;
        Matrix::from_fn(p, p, |i, j| s2z * r.get(i, j)).cholesky()?
    } else {
        Matrix::zeros(0, 0)
    };
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let log_marginal = |z: f64| -0.5 * (ln2pi + s2z.ln() + (z - mu) * (z - mu) / s2z);

    let mut rng = rng::stream(seed, 2);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut z = vec![0.0; t];
    let mut w = vec![0.0; p];
    for _ in 0..replications {
        let mut joint = 0.0;
        for wi in w.iter_mut() {
            *wi = StandardNormal.sample(&mut rng);
        }
        for i in 0..p {
            let dev: f64 = (0..=i).map(|k| head_chol[(i, k)] * w[k]).sum();
            z[i] = mu + dev;
            joint += -0.5 * (ln2pi + w[i] * w[i]) - head_chol[(i, i)].ln();
        }
        for i in p..t {
            let cond_mean = spec.c + (0..p).map(|k| spec.phi[k] * z[i - 1 - k]).sum::<f64>();
            let e: f64 = StandardNormal.sample(&mut rng);
            let e = e * s2e.sqrt();
            z[i] = cond_mean + e;
            joint += -0.5 * (ln2pi + s2e.ln() + e * e / s2e);
        }
        let b = joint - z.iter().map(|&v| log_marginal(v)).sum::<f64>();
        sum += b;
        sum_sq += b * b;
    }
    let n = replications as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    Ok(MonteCarloEob {
        mean,
        std_error: (var.max(0.0) / n).sqrt(),
        replications,
    })
}
