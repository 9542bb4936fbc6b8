//! Orthogonality metrics for sample windows and the error-surface metrics
//! used by the training experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eob::{solve_yule_walker, CorrMatrix};
use crate::error::{EobError, Result};
use crate::linalg::Matrix;
use crate::processes::ArSpec;
use crate::scalar::Scalar;
use crate::transforms::{dwt_forward, max_dwt_levels, DftPlan, Wavelet};

/// Pearson correlation estimate with the columns that had no variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCorrelation<S = f64> {
    pub corr: CorrMatrix<S>,
    pub zero_variance: Vec<usize>,
}

/// Correlation across rows (samples) for every column pair. Columns with no
/// variance get zero correlations and are listed in `zero_variance`.
pub fn sample_correlation<S: Scalar>(windows: &Matrix<S>) -> Result<SampleCorrelation<S>> {
    let sc = correlation(windows)?;
    if !sc.zero_variance.is_empty() {
        log::warn!("columns {:?} have zero variance; their correlations are set to 0", sc.zero_variance);
    }
    Ok(sc)
}

fn correlation<S: Scalar>(windows: &Matrix<S>) -> Result<SampleCorrelation<S>> {
    let (n, l) = (windows.rows(), windows.cols());
    if n < 2 {
        return Err(EobError::InsufficientData(format!("need at least 2 samples, got {n}")));
    }
    let nf = S::from_usize_lossy(n);
    let mut centred = Matrix::zeros(l, n);
    let mut scales = Vec::with_capacity(l);
    for j in 0..l {
        let col = windows.column(j);
        let mean = col.iter().copied().sum::<S>() / nf;
        let ss: S = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
        for (i, &v) in col.iter().enumerate() {
            centred[(j, i)] = v - mean;
        }
        scales.push(ss.sqrt());
    }
    // Columns whose spread is round-off relative to the widest one count as
    // constant.
    let widest = scales.iter().fold(S::zero(), |m, &s| m.max(s));
    let mut zero_variance = Vec::new();
    for (j, &scale) in scales.iter().enumerate() {
        if !(scale > widest * S::lit(1e-10)) || !(scale > S::zero()) {
            zero_variance.push(j);
            centred.row_mut(j).iter_mut().for_each(|v| *v = S::zero());
        } else {
            centred.row_mut(j).iter_mut().for_each(|v| *v = *v / scale);
        }
    }
    let rows: Vec<Vec<S>> = (0..l)
        .into_par_iter()
        .map(|i| {
            (0..l)
                .map(|j| {
                    if i == j {
                        S::one()
                    } else {
                        let r: S = centred.row(i).iter().zip(centred.row(j)).map(|(&a, &b)| a * b).sum();
                        r.max(-S::one()).min(S::one())
                    }
                })
                .collect()
        })
        .collect();
    let mut m = Matrix::from_fn(l, l, |i, j| rows[i][j]);
    // Symmetrise exactly; the two dot products can differ in the last bit.
    for i in 0..l {
        for j in (i + 1)..l {
            let v = (m[(i, j)] + m[(j, i)]) / S::lit(2.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(SampleCorrelation {
        corr: CorrMatrix::new(m)?,
        zero_variance,
    })
}

/// `sum_{i != j} R_ij^2 / ||R||_F^2`.
pub fn ode_ratio<S: Scalar>(r: &CorrMatrix<S>) -> S {
    let total = r.matrix().frobenius_sq();
    let diag: S = (0..r.dim()).map(|i| r.get(i, i) * r.get(i, i)).sum();
    if total == S::zero() {
        S::zero()
    } else {
        (total - diag) / total
    }
}

/// `||R - I||_F`.
pub fn dist_identity<S: Scalar>(r: &CorrMatrix<S>) -> S {
    let n = r.dim();
    let mut acc = S::zero();
    for i in 0..n {
        for j in 0..n {
            let d = r.get(i, j) - if i == j { S::one() } else { S::zero() };
            acc = acc + d * d;
        }
    }
    acc.sqrt()
}

/// Normalised entropy `-(1 / log2 L) sum p_i log2 p_i` of the eigenvalue
/// distribution. Eigenvalues below `1e-12` count as zero; `L = 1` gives 1.
pub fn eigen_entropy<S: Scalar>(r: &CorrMatrix<S>) -> Result<S> {
    let n = r.dim();
    if n == 0 {
        return Err(EobError::invalid("R", "empty matrix"));
    }
    if n == 1 {
        return Ok(S::one());
    }
    let eig: Vec<S> = r
        .eigenvalues()?
        .into_iter()
        .map(|v| if v < S::lit(1e-12) { S::zero() } else { v })
        .collect();
    let total: S = eig.iter().copied().sum();
    if total == S::zero() {
        return Err(EobError::invalid("R", "all eigenvalues vanish"));
    }
    let h: S = eig
        .iter()
        .filter(|&&v| v > S::zero())
        .map(|&v| {
            let p = v / total;
            -p * p.log2()
        })
        .sum();
    Ok(h / S::from_usize_lossy(n).log2())
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks<S: Scalar>(values: &[S]) -> Vec<S> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![S::zero(); values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = S::from_usize_lossy(i + j + 2) / S::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation of two equal-length samples. Zero when either
/// sample is constant.
pub fn spearman<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    crate::error::check_len(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(EobError::InsufficientData(format!("need at least 2 pairs, got {}", a.len())));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = S::from_usize_lossy(a.len());
    let (ma, mb) = (ra.iter().copied().sum::<S>() / n, rb.iter().copied().sum::<S>() / n);
    let mut sab = S::zero();
    let mut saa = S::zero();
    let mut sbb = S::zero();
    for (&x, &y) in ra.iter().zip(&rb) {
        sab = sab + (x - ma) * (y - mb);
        saa = saa + (x - ma) * (x - ma);
        sbb = sbb + (y - mb) * (y - mb);
    }
    if saa == S::zero() || sbb == S::zero() {
        return Ok(S::zero());
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Mean absolute Spearman correlation over all ordered pairs `i != j`.
pub fn spearman_mean<S: Scalar>(windows: &Matrix<S>) -> Result<S> {
    let (n, l) = (windows.rows(), windows.cols());
    if n < 3 {
        return Err(EobError::InsufficientData(format!("need at least 3 samples, got {n}")));
    }
    if l < 2 {
        return Err(EobError::invalid("windows", "need at least 2 columns"));
    }
    let ranked_cols: Vec<Vec<S>> = (0..l).into_par_iter().map(|j| average_ranks(&windows.column(j))).collect();
    let ranked = Matrix::from_fn(n, l, |i, j| ranked_cols[j][i]);
    let r = correlation(&ranked)?.corr;
    let mut acc = S::zero();
    for i in 0..l {
        for j in 0..l {
            if i != j {
                acc = acc + r.get(i, j).abs();
            }
        }
    }
    Ok(acc / S::from_usize_lossy(l * l - l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoReport {
    pub ode_ratio: f64,
    pub spearman_mean: f64,
    pub eigen_entropy: f64,
    pub dist_identity: f64,
    pub dim: usize,
    pub n_samples: usize,
    /// Columns with no sample variance (their correlations were zeroed).
    pub zero_variance_columns: Vec<usize>,
}

pub fn ortho_report<S: Scalar>(windows: &Matrix<S>) -> Result<OrthoReport> {
    let sc = sample_correlation(windows)?;
    Ok(OrthoReport {
        ode_ratio: ode_ratio(&sc.corr).as_f64(),
        spearman_mean: spearman_mean(windows)?.as_f64(),
        eigen_entropy: eigen_entropy(&sc.corr)?.as_f64(),
        dist_identity: dist_identity(&sc.corr).as_f64(),
        dim: windows.cols(),
        n_samples: windows.rows(),
        zero_variance_columns: sc.zero_variance,
    })
}

/// Sliding windows of length `len`, stride 1, one per row.
pub fn sliding_windows<S: Scalar>(series: &[S], len: usize) -> Result<Matrix<S>> {
    if len == 0 || series.len() < len {
        return Err(EobError::InsufficientData(format!(
            "series of length {} has no window of length {len}",
            series.len()
        )));
    }
    let n = series.len() - len + 1;
    Ok(Matrix::from_fn(n, len, |i, j| series[i + j]))
}

/// Representation used for the orthogonality diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowBasis {
    None,
    /// Real and imaginary parts as separate columns (`2L` columns).
    Dft,
    Dwt,
}

/// Maps each window (row) into `basis`.
pub fn transform_windows<S: Scalar>(windows: &Matrix<S>, basis: WindowBasis, wavelet: Wavelet) -> Result<Matrix<S>> {
    let (n, l) = (windows.rows(), windows.cols());
    match basis {
        WindowBasis::None => Ok(windows.clone()),
        WindowBasis::Dft => {
            let plan = DftPlan::new(l);
            let rows: Vec<Vec<S>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let f = plan.forward(windows.row(i)).expect("window length matches plan");
                    f.re.into_iter().chain(f.im).collect()
                })
                .collect();
            Ok(Matrix::from_fn(n, 2 * l, |i, j| rows[i][j]))
        }
        WindowBasis::Dwt => {
            let levels = max_dwt_levels(l, 4);
            if levels == 0 {
                return Err(EobError::invalid("window", format!("length {l} is odd; the DWT needs an even length")));
            }
            let rows = (0..n)
                .into_par_iter()
                .map(|i| dwt_forward(windows.row(i), wavelet, levels).map(|w| w.coeffs))
                .collect::<Result<Vec<_>>>()?;
            Ok(Matrix::from_fn(n, l, |i, j| rows[i][j]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Marginal variance `sigma_z^2`, an upper bound for every horizon.
    Asymptotic,
    /// `sigma_eps^2 / h * sum_{j<h} (h - j) psi_j^2`, the average over the
    /// horizon of the cumulative `k`-step prediction variances.
    PsiWeights,
}

/// MA(infinity) weights `psi_0..psi_{n-1}`.
pub fn psi_weights<S: Scalar>(phi: &[S], n: usize) -> Vec<S> {
    let mut psi: Vec<S> = Vec::with_capacity(n);
    for j in 0..n {
        let v = if j == 0 {
            S::one()
        } else {
            (1..=j.min(phi.len())).map(|i| phi[i - 1] * psi[j - i]).sum()
        };
        psi.push(v);
    }
    psi
}

/// `sigma_eps^2 sum_{j=0}^{h-1} (h - j) psi_j^2` without the `1/h` factor.
pub fn optimal_mse_literal_sum<S: Scalar>(spec: &ArSpec<S>, horizon: usize) -> Result<S> {
    if horizon == 0 {
        return Err(EobError::invalid("horizon", "must be at least 1"));
    }
    spec.check_stationary()?;
    let psi = psi_weights(&spec.phi, horizon);
    let sum: S = psi
        .iter()
        .enumerate()
        .map(|(j, &p)| S::from_usize_lossy(horizon - j) * p * p)
        .sum();
    Ok(spec.sigma_eps2 * sum)
}

/// Per-point optimal forecast MSE over a horizon of `h` steps.
pub fn optimal_mse_baseline<S: Scalar>(spec: &ArSpec<S>, horizon: usize, mode: BaselineMode) -> Result<S> {
    if horizon == 0 {
        return Err(EobError::invalid("horizon", "must be at least 1"));
    }
    match mode {
        BaselineMode::Asymptotic => Ok(solve_yule_walker(spec)?.sigma_z2),
        BaselineMode::PsiWeights => Ok(optimal_mse_literal_sum(spec, horizon)? / S::from_usize_lossy(horizon)),
    }
}

/// `mse_actual / mse_opt`.
pub fn inefficiency_ratio<S: Scalar>(mse_actual: S, mse_opt: S) -> Result<S> {
    if !(mse_opt > S::zero()) || !mse_opt.is_finite() {
        return Err(EobError::invalid("mse_opt", format!("must be positive, got {mse_opt}")));
    }
    if !(mse_actual >= S::zero()) {
        return Err(EobError::invalid("mse_actual", format!("must be non-negative, got {mse_actual}")));
    }
    Ok(mse_actual / mse_opt)
}

/// One cell of the error surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub ssnr_x: f64,
    pub horizon: usize,
    pub mse_actual: f64,
    pub mse_relative: f64,
    pub mse_opt_rel: f64,
    pub inefficiency: f64,
}

impl SurfacePoint {
    /// Normalises by the series variance `sigma_x2`.
    pub fn new(ssnr_x: f64, horizon: usize, mse_actual: f64, sigma_x2: f64, mse_opt: f64) -> Result<Self> {
        if !(sigma_x2 > 0.0) {
            return Err(EobError::invalid("sigma_x2", "must be positive"));
        }
        let mse_relative = mse_actual / sigma_x2;
        let mse_opt_rel = mse_opt / sigma_x2;
        Ok(SurfacePoint {
            ssnr_x,
            horizon,
            mse_actual,
            mse_relative,
            mse_opt_rel,
            inefficiency: inefficiency_ratio(mse_relative, mse_opt_rel)?,
        })
    }
}

/// Least-squares AR fit by Levinson-Durbin on the biased sample
/// autocovariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub phi: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub sigma_eps2: f64,
    pub ssnr: f64,
}

impl ArFit {
    /// Gaussian AR spec with the fitted coefficients and mean.
    pub fn to_spec(&self) -> ArSpec<f64> {
        let mut spec = ArSpec::gaussian(self.phi.clone(), self.sigma_eps2);
        spec.c = self.mean * (1.0 - self.phi.iter().sum::<f64>());
        spec
    }
}

pub fn fit_ar(series: &[f64], order: usize) -> Result<ArFit> {
    let n = series.len();
    if n <= order + 1 {
        return Err(EobError::InsufficientData(format!(
            "need more than {} points for order {order}, got {n}",
            order + 1
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let acov: Vec<f64> = (0..=order)
        .map(|k| (0..n - k).map(|t| (series[t] - mean) * (series[t + k] - mean)).sum::<f64>() / n as f64)
        .collect();
    if !(acov[0] > 0.0) {
        return Err(EobError::InsufficientData("series has zero variance".into()));
    }
    let mut phi: Vec<f64> = Vec::with_capacity(order);
    let mut err = acov[0];
    for m in 1..=order {
        let acc: f64 = acov[m] - (0..m - 1).map(|i| phi[i] * acov[m - 1 - i]).sum::<f64>();
        let k = acc / err;
        let prev = phi.clone();
        for i in 0..m - 1 {
            phi[i] = prev[i] - k * prev[m - 2 - i];
        }
        phi.push(k);
        err *= 1.0 - k * k;
    }
    Ok(ArFit {
        phi,
        mean,
        variance: acov[0],
        sigma_eps2: err,
        ssnr: acov[0] / err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::simulate_ar;
    use rand::Rng as _;

    fn corr2(rho: f64) -> CorrMatrix {
        CorrMatrix::new(Matrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()).unwrap()
    }

    fn noise(n: usize, l: usize, seed: u64) -> Matrix<f64> {
        let mut r = crate::rng::stream(seed, 0);
        Matrix::from_fn(n, l, |_, _| r.random_range(0.0..1.0))
    }

    #[test]
    fn metric_examples() {
        let id = CorrMatrix::<f64>::identity(8);
        assert_eq!(ode_ratio(&id), 0.0);
        assert_eq!(dist_identity(&id), 0.0);
        assert_eq!(eigen_entropy(&id).unwrap(), 1.0);
        assert!((ode_ratio(&corr2(1.0)) - 0.5).abs() < 1e-15);
        assert!((ode_ratio(&corr2(0.5)) - 0.2).abs() < 1e-15);
        assert!((dist_identity(&corr2(0.5)) - 0.5f64.sqrt()).abs() < 1e-15);
        let h = -(0.75 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((eigen_entropy(&corr2(0.5)).unwrap() - h).abs() < 1e-12);
        assert!((h - 0.811).abs() < 1e-3);
        let ones = CorrMatrix::new(Matrix::from_fn(4, 4, |_, _| 1.0f64)).unwrap();
        assert!(eigen_entropy(&ones).unwrap().abs() < 1e-9);
        assert_eq!(eigen_entropy(&CorrMatrix::<f64>::identity(1)).unwrap(), 1.0);
    }

    #[test]
    fn ode_permutation_invariant() {
        let r = CorrMatrix::new(Matrix::from_rows(&[
            vec![1.0f64, 0.3, -0.2],
            vec![0.3, 1.0, 0.6],
            vec![-0.2, 0.6, 1.0],
        ]).unwrap())
        .unwrap();
        let perm = [2, 0, 1];
        let p = CorrMatrix::new(Matrix::from_fn(3, 3, |i, j| r.get(perm[i], perm[j]))).unwrap();
        assert!((ode_ratio(&r) - ode_ratio(&p)).abs() < 1e-15);
    }

    #[test]
    fn sample_correlation_examples() {
        let w = noise(10_000, 16, 1);
        let sc = sample_correlation(&w).unwrap();
        for i in 0..16 {
            assert_eq!(sc.corr.get(i, i), 1.0);
            for j in 0..16 {
                if i != j {
                    assert!(sc.corr.get(i, j).abs() < 0.05);
                }
            }
        }
        let dup = Matrix::from_fn(50, 3, |i, j| if j == 2 { w[(i, 0)] } else { w[(i, j)] });
        assert!((sample_correlation(&dup).unwrap().corr.get(0, 2) - 1.0).abs() < 1e-12);
        assert!(sample_correlation(&noise(1, 3, 2)).is_err());
        let flat = Matrix::from_fn(20, 2, |i, j| if j == 0 { 3.0 } else { i as f64 });
        let sc = sample_correlation(&flat).unwrap();
        assert_eq!(sc.zero_variance, vec![0]);
        assert_eq!(sc.corr.get(0, 1), 0.0);
    }

    #[test]
    fn spearman_examples() {
        let m = Matrix::from_fn(20, 2, |i, j| if j == 0 { i as f64 } else { (i as f64).exp() });
        assert!((spearman_mean(&m).unwrap() - 1.0).abs() < 1e-12);
        assert!(spearman_mean(&noise(10_000, 4, 3)).unwrap() < 0.05);
        assert!(spearman_mean(&noise(100, 1, 3)).is_err());
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0f64, 2.0, 3.0], &[0.1, 5.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0f64, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn dft_decorrelates_ar1() {
        let spec = ArSpec::<f64>::gaussian(vec![0.9], 0.25);
        let x = simulate_ar(&spec, 6000, 500, 4).unwrap();
        let w = sliding_windows(&x, 16).unwrap();
        let raw = ortho_report(&w).unwrap();
        let f = ortho_report(&transform_windows(&w, WindowBasis::Dft, Wavelet::Haar).unwrap()).unwrap();
        assert!(f.spearman_mean < raw.spearman_mean);
        assert!(f.dist_identity < raw.dist_identity);
        assert!(f.eigen_entropy > raw.eigen_entropy);
        assert!(f.ode_ratio < raw.ode_ratio);
        assert_eq!(f.dim, 32);
        assert_eq!(f.zero_variance_columns, vec![16, 24]);
    }

    #[test]
    fn baselines() {
        let spec = ArSpec::<f64>::gaussian(vec![0.6], 0.25);
        assert!((optimal_mse_baseline(&spec, 5, BaselineMode::Asymptotic).unwrap() - 0.390625).abs() < 1e-12);
        let white = ArSpec::<f64>::gaussian(vec![], 0.25);
        assert_eq!(optimal_mse_baseline(&white, 1, BaselineMode::PsiWeights).unwrap(), 0.25);
        let far = optimal_mse_baseline(&spec, 4000, BaselineMode::PsiWeights).unwrap();
        assert!((far - 0.390625).abs() / 0.390625 < 2e-3);
        // Per-point average of cumulative k-step variances.
        let h = 7;
        let direct: f64 = (1..=h)
            .map(|k| 0.25 * (0..k).map(|j| 0.36f64.powi(j as i32)).sum::<f64>())
            .sum::<f64>()
            / h as f64;
        assert!((optimal_mse_baseline(&spec, h, BaselineMode::PsiWeights).unwrap() - direct).abs() < 1e-14);
        assert!(optimal_mse_baseline(&spec, 0, BaselineMode::Asymptotic).is_err());
        assert_eq!(psi_weights(&[0.5, 0.2], 4), vec![1.0, 0.5, 0.45, 0.325]);
    }

    #[test]
    fn inefficiency() {
        assert_eq!(inefficiency_ratio(0.4, 0.4).unwrap(), 1.0);
        assert_eq!(inefficiency_ratio(0.8, 0.4).unwrap(), 2.0);
        assert!(inefficiency_ratio(0.8, 0.0).is_err());
        let p = SurfacePoint::new(36.0, 64, 4.0, 9.0, 8.0).unwrap();
        assert!((p.mse_relative - 4.0 / 9.0).abs() < 1e-15);
        assert!((p.inefficiency - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ar_fit_recovers_coefficients() {
        let spec = ArSpec::<f64>::gaussian(vec![0.5, 0.2], 0.25);
        let x = simulate_ar(&spec, 200_000, 500, 7).unwrap();
        let fit = fit_ar(&x, 2).unwrap();
        assert!((fit.phi[0] - 0.5).abs() < 0.01);
        assert!((fit.phi[1] - 0.2).abs() < 0.01);
        assert!((fit.sigma_eps2 - 0.25).abs() < 0.005);
        assert!((fit.ssnr - 1.0 / 0.585).abs() < 0.03);
        assert!(fit.to_spec().validate().is_ok());
        assert!(fit_ar(&[1.0, 2.0], 2).is_err());
    }
}
