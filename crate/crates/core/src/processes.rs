//! Deterministic, stochastic and hybrid series generators.
//!
//! The hybrid process is `x_t = v_t + z_t` where `v_t` is a stack of
//! sinusoids with low-frequency-weighted amplitudes and `z_t` an AR(p)
//! process driven by one of six innovation families. Every generator is a
//! pure function of `(spec, seed)`.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Geometric, Normal, Poisson, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{EobError, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Innovation noise family. Draws are centred by the analytic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnovationDist {
    Binomial { n: u64, p: f64 },
    Geometric { p: f64 },
    Gaussian { mu: f64, sigma: f64 },
    Poisson { lambda: f64 },
    StudentT { nu: f64, alpha: f64 },
    Uniform { a: f64, b: f64 },
}

/// The six innovation families, for presets and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationKind {
    Binomial,
    Geometric,
    Gaussian,
    Poisson,
    StudentT,
    Uniform,
}

impl InnovationKind {
    pub const ALL: [InnovationKind; 6] = [
        InnovationKind::Binomial,
        InnovationKind::Geometric,
        InnovationKind::Gaussian,
        InnovationKind::Poisson,
        InnovationKind::StudentT,
        InnovationKind::Uniform,
    ];
}

impl InnovationDist {
    /// Parameters giving variance `sigma_eps2` for the family.
    ///
    /// Binomial uses `n = 1` and `p = (1 + sqrt(1 - 4 s2)) / 2`, so it needs
    /// `sigma_eps2 <= 0.25`.
    pub fn calibrated(kind: InnovationKind, sigma_eps2: f64) -> Result<Self> {
        if !(sigma_eps2 > 0.0) || !sigma_eps2.is_finite() {
            return Err(EobError::invalid("sigma_eps2", "must be positive and finite"));
        }
        let sigma = sigma_eps2.sqrt();
        let dist = match kind {
            InnovationKind::Binomial => {
                let disc = 1.0 - 4.0 * sigma_eps2;
                if disc < 0.0 {
                    return Err(EobError::invalid(
                        "sigma_eps2",
                        "Bernoulli innovations cannot exceed variance 0.25",
                    ));
                }
                InnovationDist::Binomial {
                    n: 1,
                    p: (1.0 + disc.sqrt()) / 2.0,
                }
            }
            InnovationKind::Geometric => InnovationDist::Geometric {
                p: (-1.0 + (1.0 + 4.0 * sigma_eps2).sqrt()) / (2.0 * sigma_eps2),
            },
            InnovationKind::Gaussian => InnovationDist::Gaussian { mu: 0.0, sigma },
            InnovationKind::Poisson => InnovationDist::Poisson { lambda: sigma_eps2 },
            InnovationKind::StudentT => {
                let nu = 5.0;
                InnovationDist::StudentT {
                    nu,
                    alpha: sigma * ((nu - 2.0) / nu).sqrt(),
                }
            }
            InnovationKind::Uniform => {
                let b = 3f64.sqrt() * sigma;
                InnovationDist::Uniform { a: -b, b }
            }
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn kind(&self) -> InnovationKind {
        match self {
            InnovationDist::Binomial { .. } => InnovationKind::Binomial,
            InnovationDist::Geometric { .. } => InnovationKind::Geometric,
            InnovationDist::Gaussian { .. } => InnovationKind::Gaussian,
            InnovationDist::Poisson { .. } => InnovationKind::Poisson,
            InnovationDist::StudentT { .. } => InnovationKind::StudentT,
            InnovationDist::Uniform { .. } => InnovationKind::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| -> Result<()> {
            if p > 0.0 && p <= 1.0 {
                Ok(())
            } else {
                Err(EobError::invalid("p", format!("must satisfy 0 < p <= 1, got {p}")))
            }
        };
        match *self {
            InnovationDist::Binomial { n, p } => {
                if n == 0 {
                    return Err(EobError::invalid("n", "must be at least 1"));
                }
                prob(p)
            }
            InnovationDist::Geometric { p } => prob(p),
            InnovationDist::Gaussian { mu, sigma } => {
                if !mu.is_finite() {
                    Err(EobError::invalid("mu", "must be finite"))
                } else if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(EobError::invalid("sigma", format!("must be positive, got {sigma}")))
                }
            }
            InnovationDist::Poisson { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(EobError::invalid("lambda", format!("must be positive, got {lambda}")))
                }
            }
            InnovationDist::StudentT { nu, alpha } => {
                if !(nu > 2.0) || !nu.is_finite() {
                    Err(EobError::invalid("nu", format!("must exceed 2 for finite variance, got {nu}")))
                } else if alpha > 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(EobError::invalid("alpha", format!("must be positive, got {alpha}")))
                }
            }
            InnovationDist::Uniform { a, b } => {
                if b > a && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(EobError::invalid("b", format!("must exceed a ({a}), got {b}")))
                }
            }
        }
    }

    /// Analytic mean of the raw (uncentred) draws.
    pub fn mean(&self) -> f64 {
        match *self {
            InnovationDist::Binomial { n, p } => n as f64 * p,
            // rand_distr counts failures before the first success.
            InnovationDist::Geometric { p } => (1.0 - p) / p,
            InnovationDist::Gaussian { mu, .. } => mu,
            InnovationDist::Poisson { lambda } => lambda,
            InnovationDist::StudentT { .. } => 0.0,
            InnovationDist::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InnovationDist::Binomial { n, p } => n as f64 * p * (1.0 - p),
            InnovationDist::Geometric { p } => (1.0 - p) / (p * p),
            InnovationDist::Gaussian { sigma, .. } => sigma * sigma,
            InnovationDist::Poisson { lambda } => lambda,
            InnovationDist::StudentT { nu, alpha } => alpha * alpha * nu / (nu - 2.0),
            InnovationDist::Uniform { a, b } => (b - a) * (b - a) / 12.0,
        }
    }

    /// Heavy-tailed families get a wider Monte-Carlo acceptance band.
    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self, InnovationDist::Geometric { .. } | InnovationDist::StudentT { .. })
    }

    fn fill<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>, n: usize) -> Result<()> {
        let mean = self.mean();
        let bad = |e: String| EobError::invalid("innovation", e);
        match *self {
            InnovationDist::Binomial { n: trials, p } => {
                let d = Binomial::new(trials, p).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| d.sample(rng) as f64 - mean));
            }
            InnovationDist::Geometric { p } => {
                let d = Geometric::new(p).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| d.sample(rng) as f64 - mean));
            }
            InnovationDist::Gaussian { mu, sigma } => {
                let d = Normal::new(mu, sigma).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| d.sample(rng) - mean));
            }
            InnovationDist::Poisson { lambda } => {
                let d = Poisson::new(lambda).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| d.sample(rng) - mean));
            }
            InnovationDist::StudentT { nu, alpha } => {
                let d = StudentT::new(nu).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| alpha * d.sample(rng)));
            }
            InnovationDist::Uniform { a, b } => {
                let d = Uniform::new(a, b).map_err(|e| bad(e.to_string()))?;
                out.extend((0..n).map(|_| d.sample(rng) - mean));
            }
        }
        Ok(())
    }
}

/// `n` i.i.d. centred innovation draws.
pub fn sample_innovation<S: Scalar>(dist: &InnovationDist, n: usize, seed: u64) -> Result<Vec<S>> {
    dist.validate()?;
    let mut rng = rng::stream(seed, 0);
    let mut raw = Vec::with_capacity(n);
    dist.fill(&mut rng, &mut raw, n)?;
    Ok(raw.into_iter().map(S::lit).collect())
}

/// `z_t = c + sum_i phi_i z_{t-i} + eps_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArSpec<S = f64> {
    pub c: S,
    pub phi: Vec<S>,
    pub innovation: InnovationDist,
    pub sigma_eps2: S,
}

impl<S: Scalar> ArSpec<S> {
    /// Zero-mean AR with Gaussian innovations of variance `sigma_eps2`.
    pub fn gaussian(phi: Vec<S>, sigma_eps2: S) -> Self {
        ArSpec {
            c: S::zero(),
            phi,
            innovation: InnovationDist::Gaussian {
                mu: 0.0,
                sigma: sigma_eps2.as_f64().sqrt(),
            },
            sigma_eps2,
        }
    }

    /// AR(1) whose structural SNR equals `ssnr_z`: `phi = sqrt((s - 1) / s)`.
    pub fn ar1_for_ssnr(ssnr_z: S, innovation: InnovationDist, sigma_eps2: S) -> Result<Self> {
        if !(ssnr_z >= S::one()) {
            return Err(EobError::invalid("ssnr_z", "must be at least 1"));
        }
        Ok(ArSpec {
            c: S::zero(),
            phi: vec![((ssnr_z - S::one()) / ssnr_z).sqrt()],
            innovation,
            sigma_eps2,
        })
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// Process mean `c / (1 - sum phi)`.
    pub fn mean(&self) -> S {
        let s: S = self.phi.iter().copied().sum();
        self.c / (S::one() - s)
    }

    /// Partial autocorrelations by the step-down recursion. The process is
    /// stationary iff every coefficient lies strictly inside (-1, 1).
    pub fn reflection_coefficients(&self) -> Vec<S> {
        let p = self.phi.len();
        let mut a = self.phi.clone();
        let mut kappa = vec![S::zero(); p];
        for m in (1..=p).rev() {
            let k = a[m - 1];
            kappa[m - 1] = k;
            if k.abs() >= S::one() || !k.is_finite() {
                // Remaining coefficients are meaningless past this point.
                break;
            }
            let denom = S::one() - k * k;
            let prev: Vec<S> = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / denom).collect();
            a = prev;
        }
        kappa
    }

    pub fn check_stationary(&self) -> Result<()> {
        let kappa = self.reflection_coefficients();
        let worst = kappa.iter().fold(S::zero(), |m, k| m.max(k.abs()));
        if kappa.iter().any(|k| !(k.abs() < S::one())) {
            return Err(EobError::NonStationary {
                max_reflection: worst.as_f64(),
            });
        }
        Ok(())
    }

    /// Full validation: finite fields, innovation parameters, innovation
    /// variance consistent with `sigma_eps2`, stationarity.
    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(EobError::invalid("c", "must be finite"));
        }
        if self.phi.iter().any(|p| !p.is_finite()) {
            return Err(EobError::invalid("phi", "coefficients must be finite"));
        }
        if !(self.sigma_eps2 > S::zero()) || !self.sigma_eps2.is_finite() {
            return Err(EobError::invalid("sigma_eps2", "must be positive and finite"));
        }
        self.innovation.validate()?;
        let v = self.innovation.variance();
        let s2 = self.sigma_eps2.as_f64();
        if ((v - s2) / s2).abs() > 1e-6 {
            return Err(EobError::invalid(
                "sigma_eps2",
                format!("innovation variance {v} does not match sigma_eps2 {s2}"),
            ));
        }
        self.check_stationary()
    }

    pub fn default_burn_in(&self) -> usize {
        10 * self.order() + 100
    }
}

/// Simulates `n` samples after discarding `burn_in`; the lag state starts at
/// the process mean.
pub fn simulate_ar<S: Scalar>(spec: &ArSpec<S>, n: usize, burn_in: usize, seed: u64) -> Result<Vec<S>> {
    spec.validate()?;
    let p = spec.order();
    let total = n + burn_in;
    let eps: Vec<S> = sample_innovation(&spec.innovation, total, seed)?;
    let mu = spec.mean();
    let mut hist = vec![mu; p];
    let mut out = Vec::with_capacity(n);
    for (t, e) in eps.into_iter().enumerate() {
        // hist[0] is z_{t-1}
        let mut z = spec.c + e;
        for (phi, lag) in spec.phi.iter().zip(&hist) {
            z = z + *phi * *lag;
        }
        if p > 0 {
            hist.rotate_right(1);
            hist[0] = z;
        }
        if t >= burn_in {
            out.push(z);
        }
    }
    Ok(out)
}

/// Sum of `K` sinusoids `A_i sin(2 pi k_i t / T + phase_i)` with
/// `A_i = A sqrt(K) / (k_i sqrt(sum_j 1/k_j^2))`, so that `sum A_i^2 = K A^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicSpec<S = f64> {
    pub base_amplitude: S,
    pub freqs: Vec<u32>,
    pub phases: Vec<S>,
    pub period: S,
}

impl<S: Scalar> DeterministicSpec<S> {
    /// Number of harmonics `K`.
    pub fn harmonics(&self) -> usize {
        self.freqs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.is_empty() {
            return Err(EobError::invalid("freqs", "at least one harmonic required"));
        }
        if self.freqs.contains(&0) {
            return Err(EobError::invalid("freqs", "zero frequency is not allowed"));
        }
        crate::error::check_len(self.freqs.len(), self.phases.len())?;
        if !(self.period > S::zero()) || !self.period.is_finite() {
            return Err(EobError::invalid("period", "must be positive"));
        }
        if !self.base_amplitude.is_finite() {
            return Err(EobError::invalid("base_amplitude", "must be finite"));
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> Vec<S> {
        let k = S::from_usize_lossy(self.freqs.len());
        let inv_sq: S = self
            .freqs
            .iter()
            .map(|&f| {
                let f = S::lit(f as f64);
                S::one() / (f * f)
            })
            .sum();
        let norm = inv_sq.sqrt();
        self.freqs
            .iter()
            .map(|&f| self.base_amplitude * k.sqrt() / (S::lit(f as f64) * norm))
            .collect()
    }

    /// `sigma_v^2 = (1/2) sum A_i^2 = K A^2 / 2`.
    pub fn variance(&self) -> S {
        S::lit(0.5) * S::from_usize_lossy(self.harmonics()) * self.base_amplitude * self.base_amplitude
    }

    /// `SSNR_v = K A^2 / (2 sigma_eps^2)`.
    pub fn ssnr(&self, sigma_eps2: S) -> S {
        self.variance() / sigma_eps2
    }

    /// Base amplitude reaching `ssnr_v` for `k` harmonics.
    pub fn amplitude_for_ssnr(ssnr_v: S, harmonics: usize, sigma_eps2: S) -> Result<S> {
        if !(ssnr_v >= S::zero()) || harmonics == 0 {
            return Err(EobError::invalid("ssnr_v", "must be non-negative with at least one harmonic"));
        }
        Ok((S::lit(2.0) * sigma_eps2 * ssnr_v / S::from_usize_lossy(harmonics)).sqrt())
    }

    /// `K` distinct frequencies from `1..=max_freq` and phases uniform on
    /// `[0, 2 pi)`, drawn from `seed`.
    pub fn random(
        harmonics: usize,
        max_freq: u32,
        base_amplitude: S,
        period: S,
        seed: u64,
    ) -> Result<Self> {
        if harmonics == 0 || harmonics > max_freq as usize {
            return Err(EobError::invalid(
                "harmonics",
                format!("need 1 <= K <= max_freq ({max_freq}), got {harmonics}"),
            ));
        }
        let mut rng = rng::stream(seed, 1);
        let mut pool: Vec<u32> = (1..=max_freq).collect();
        // partial Fisher-Yates
        for i in 0..harmonics {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        let mut freqs = pool[..harmonics].to_vec();
        freqs.sort_unstable();
        let phases = (0..harmonics)
            .map(|_| S::lit(rng.random::<f64>() * std::f64::consts::TAU))
            .collect();
        let spec = DeterministicSpec {
            base_amplitude,
            freqs,
            phases,
            period,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn synthesize_deterministic<S: Scalar>(spec: &DeterministicSpec<S>, n: usize) -> Result<Vec<S>> {
    spec.validate()?;
    let amps = spec.amplitudes();
    let w = S::TAU() / spec.period;
    Ok((0..n)
        .map(|t| {
            let t = S::from_usize_lossy(t);
            spec.freqs
                .iter()
                .zip(&spec.phases)
                .zip(&amps)
                .map(|((&k, &ph), &a)| a * (w * S::lit(k as f64) * t + ph).sin())
                .sum()
        })
        .collect())
}

/// `x_t = v_t + z_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSpec<S = f64> {
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub det: Option<DeterministicSpec<S>>,
    pub ar: ArSpec<S>,
    pub length: usize,
}

impl<S: Scalar> HybridSpec<S> {
    pub fn ssnr_v(&self) -> S {
        self.det
            .as_ref()
            .map_or(S::zero(), |d| d.ssnr(self.ar.sigma_eps2))
    }

    pub fn ssnr_z(&self) -> Result<S> {
        Ok(crate::eob::solve_yule_walker(&self.ar)?.ssnr)
    }

    /// `SSNR_x = SSNR_v + SSNR_z`.
    pub fn ssnr_x(&self) -> Result<S> {
        Ok(self.ssnr_v() + self.ssnr_z()?)
    }
}

pub fn synthesize_hybrid<S: Scalar>(spec: &HybridSpec<S>, seed: u64) -> Result<Vec<S>> {
    let n = spec.length;
    let mut z = simulate_ar(&spec.ar, n, spec.ar.default_burn_in(), rng::derive_seed(seed, 0))?;
    if let Some(det) = &spec.det {
        det.validate()?;
        if n > 0 {
            let v = synthesize_deterministic(det, n)?;
            for (zt, vt) in z.iter_mut().zip(v) {
                *zt = *zt + vt;
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
    }

    #[test]
    fn gaussian_innovation_variance() {
        let d = InnovationDist::Gaussian { mu: 0.0, sigma: 0.5 };
        let x: Vec<f64> = sample_innovation(&d, 1_000_000, 11).unwrap();
        let (_, v) = mean_var(&x);
        assert!((0.2485..=0.2515).contains(&v), "{v}");
    }

    #[test]
    fn uniform_innovation_variance() {
        let b = 3f64.sqrt() * 0.5;
        let d = InnovationDist::Uniform { a: -b, b };
        let x: Vec<f64> = sample_innovation(&d, 1_000_000, 12).unwrap();
        let (m, v) = mean_var(&x);
        assert!(m.abs() < 3e-3);
        assert!((v - 0.25).abs() < 0.0015, "{v}");
    }

    #[test]
    fn tabulated_parameters_are_reproduced() {
        let geo = InnovationDist::calibrated(InnovationKind::Geometric, 0.25).unwrap();
        match geo {
            InnovationDist::Geometric { p } => assert!((p - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12),
            _ => unreachable!(),
        }
        let t = InnovationDist::calibrated(InnovationKind::StudentT, 0.25).unwrap();
        match t {
            InnovationDist::StudentT { nu, alpha } => {
                assert_eq!(nu, 5.0);
                assert!((alpha - 15f64.sqrt() / 10.0).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        let b = InnovationDist::calibrated(InnovationKind::Binomial, 0.25).unwrap();
        assert_eq!(b, InnovationDist::Binomial { n: 1, p: 0.5 });
        for kind in InnovationKind::ALL {
            let d = InnovationDist::calibrated(kind, 0.25).unwrap();
            assert!((d.variance() - 0.25).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn empty_draw() {
        let d = InnovationDist::Poisson { lambda: 0.25 };
        assert!(sample_innovation::<f64>(&d, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn invalid_parameters_name_the_constraint() {
        let err = sample_innovation::<f64>(&InnovationDist::StudentT { nu: 2.0, alpha: 1.0 }, 3, 0).unwrap_err();
        assert!(matches!(err, EobError::InvalidParameter { name: "nu", .. }));
        let err = InnovationDist::Uniform { a: 1.0, b: 1.0 }.validate().unwrap_err();
        assert!(matches!(err, EobError::InvalidParameter { name: "b", .. }));
        assert!(InnovationDist::Geometric { p: 0.0 }.validate().is_err());
        assert!(InnovationDist::Binomial { n: 1, p: 1.5 }.validate().is_err());
        assert!(InnovationDist::Gaussian { mu: 0.0, sigma: -1.0 }.validate().is_err());
        assert!(InnovationDist::Poisson { lambda: 0.0 }.validate().is_err());
    }

    #[test]
    fn stationarity_gate() {
        let ok = ArSpec::gaussian(vec![0.5, 0.2], 0.25);
        assert!(ok.check_stationary().is_ok());
        let bad = ArSpec::gaussian(vec![1.2], 0.25);
        assert!(matches!(bad.check_stationary(), Err(EobError::NonStationary { .. })));
        // roots on the unit circle: 1 - 0.5z - 0.5z^2 has root z = 1
        let edge = ArSpec::gaussian(vec![0.5, 0.5], 0.25);
        assert!(edge.check_stationary().is_err());
        assert!(simulate_ar(&bad, 10, 0, 0).is_err());
    }

    #[test]
    fn white_noise_simulation() {
        let spec = ArSpec::gaussian(vec![], 0.25);
        let x = simulate_ar(&spec, 200_000, 0, 3).unwrap();
        let (m, v) = mean_var(&x);
        let lag1 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (x.len() as f64 * v);
        assert!((v - 0.25).abs() < 0.005);
        assert!(lag1.abs() < 0.01);
    }

    #[test]
    fn ar1_variance_matches_formula() {
        let spec = ArSpec::gaussian(vec![0.6], 0.25);
        let x = simulate_ar(&spec, 1_000_000, spec.default_burn_in(), 5).unwrap();
        let (_, v) = mean_var(&x);
        assert!((v - 0.390625).abs() / 0.390625 < 0.01, "{v}");
    }

    #[test]
    fn ar1_ssnr_32() {
        let spec = ArSpec::<f64>::ar1_for_ssnr(32.0, InnovationDist::Gaussian { mu: 0.0, sigma: 0.5 }, 0.25).unwrap();
        assert!((spec.phi[0] - 0.984_251).abs() < 1e-6);
        let x = simulate_ar(&spec, 1_000_000, 2000, 9).unwrap();
        let (_, v) = mean_var(&x);
        assert!((v / 0.25 - 32.0).abs() / 32.0 < 0.05, "{}", v / 0.25);
    }

    #[test]
    fn deterministic_amplitude_identity() {
        let spec = DeterministicSpec {
            base_amplitude: 1.7,
            freqs: vec![3, 11],
            phases: vec![0.0, 1.0],
            period: 100.0,
        };
        let s: f64 = spec.amplitudes().iter().map(|a| a * a).sum();
        assert!((s - 2.0 * 1.7 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn deterministic_variance_over_whole_period() {
        let spec = DeterministicSpec {
            base_amplitude: 2f64.sqrt(),
            freqs: vec![4],
            phases: vec![0.0],
            period: 128.0,
        };
        let v = synthesize_deterministic(&spec, 128).unwrap();
        let (m, var) = mean_var(&v);
        assert!(m.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        let zero = DeterministicSpec { base_amplitude: 0.0, ..spec.clone() };
        assert!(synthesize_deterministic(&zero, 16).unwrap().iter().all(|&x| x == 0.0));
        let bad = DeterministicSpec { freqs: vec![0], ..spec };
        assert!(synthesize_deterministic(&bad, 4).is_err());
    }

    #[test]
    fn hybrid_ssnr_additivity() {
        let noise = InnovationDist::Gaussian { mu: 0.0, sigma: 0.5 };
        let ar = ArSpec::<f64>::ar1_for_ssnr(32.0, noise, 0.25).unwrap();
        let det = DeterministicSpec {
            base_amplitude: 2f64.sqrt(),
            freqs: vec![4],
            phases: vec![0.3],
            period: 128.0,
        };
        let spec = HybridSpec { det: Some(det), ar, length: 128 * 2000 };
        assert!((spec.ssnr_x().unwrap() - 36.0).abs() < 1e-9);
        let x = synthesize_hybrid(&spec, 21).unwrap();
        let (_, v) = mean_var(&x);
        assert!((v / 0.25 - 36.0).abs() / 36.0 < 0.05, "{}", v / 0.25);
        let empty = HybridSpec { length: 0, ..spec };
        assert!(synthesize_hybrid(&empty, 0).unwrap().is_empty());
    }

    #[test]
    fn determinism() {
        let spec = ArSpec::gaussian(vec![0.3, -0.2], 0.25);
        let a = simulate_ar(&spec, 500, 20, 77).unwrap();
        let b = simulate_ar(&spec, 500, 20, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_schema_field_names() {
        let text = r#"{"ar": {"c":0.0,"phi":[0.6],"innovation":{"kind":"gaussian","mu":0,"sigma":0.5},"sigma_eps2":0.25}, "length": 16}"#;
        let spec: HybridSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.ar.phi, vec![0.6]);
        assert!(spec.det.is_none());
        let unknown = r#"{"ar": {"c":0.0,"phi":[],"innovation":{"kind":"poisson","lambda":0.25},"sigma_eps2":0.25,"extra":1}, "length": 1}"#;
        assert!(serde_json::from_str::<HybridSpec>(unknown).is_err());
        let t = serde_json::to_string(&InnovationDist::StudentT { nu: 5.0, alpha: 0.3 }).unwrap();
        assert!(t.contains(r#""kind":"student_t""#));
    }
}
