//! Point-wise and spectral losses with analytic gradients with respect to the
//! prediction `x_hat`.
//!
//! Coefficient-domain gradients `g` are pulled back to the time domain with
//! the transform adjoint, `Re(U^H g)` for the unitary DFT.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, EobError, Result};
use crate::scalar::{sgn, wrap_angle, Scalar};
use crate::transforms::{to_amp_phase, DftPlan, Spectrum, Transform, TransformKind, Wavelet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEval<S = f64> {
    pub value: S,
    /// Gradient with respect to the prediction, time domain.
    pub grad: Vec<S>,
}

impl<S: Scalar> LossEval<S> {
    pub fn zero(len: usize) -> Self {
        LossEval {
            value: S::zero(),
            grad: vec![S::zero(); len],
        }
    }

    /// Sum of two losses over the same prediction.
    pub fn plus(&self, other: &Self) -> Self {
        LossEval {
            value: self.value + other.value,
            grad: self.grad.iter().zip(&other.grad).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn scaled(mut self, c: S) -> Self {
        self.value = self.value * c;
        self.grad.iter_mut().for_each(|g| *g = *g * c);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

fn check_pair<S>(x: &[S], x_hat: &[S]) -> Result<()> {
    check_len(x.len(), x_hat.len())
}

/// `sum (x - x_hat)^2`, gradient `-2 (x - x_hat)`.
pub fn temporal_l2<S: Scalar>(x: &[S], x_hat: &[S]) -> Result<LossEval<S>> {
    check_pair(x, x_hat)?;
    let two = S::lit(2.0);
    let mut value = S::zero();
    let grad = x
        .iter()
        .zip(x_hat)
        .map(|(&a, &b)| {
            let e = a - b;
            value = value + e * e;
            -two * e
        })
        .collect();
    Ok(LossEval { value, grad })
}

/// `sum |x - x_hat|`, subgradient `-sgn(x - x_hat)`.
pub fn temporal_l1<S: Scalar>(x: &[S], x_hat: &[S]) -> Result<LossEval<S>> {
    check_pair(x, x_hat)?;
    let mut value = S::zero();
    let grad = x
        .iter()
        .zip(x_hat)
        .map(|(&a, &b)| {
            let e = a - b;
            value = value + e.abs();
            -sgn(e)
        })
        .collect();
    Ok(LossEval { value, grad })
}

struct Pair<S> {
    plan: DftPlan<S>,
    f: Spectrum<S>,
    f_hat: Spectrum<S>,
}

fn spectra<S: Scalar>(x: &[S], x_hat: &[S]) -> Result<Pair<S>> {
    check_pair(x, x_hat)?;
    let plan = DftPlan::new(x.len());
    let f = plan.forward(x)?;
    let f_hat = plan.forward(x_hat)?;
    Ok(Pair { plan, f, f_hat })
}

/// `sum |f - f_hat|^2` over real and imaginary parts. Equal to
/// [`temporal_l2`] by unitarity.
pub fn freq_real_imag_l2<S: Scalar>(x: &[S], x_hat: &[S]) -> Result<LossEval<S>> {
    let Pair { plan, f, f_hat } = spectra(x, x_hat)?;
    let two = S::lit(2.0);
    let mut value = S::zero();
    let mut g = Spectrum::zeros(f.len());
    for k in 0..f.len() {
        let (dr, di) = (f.re[k] - f_hat.re[k], f.im[k] - f_hat.im[k]);
        value = value + dr * dr + di * di;
        g.re[k] = -two * dr;
        g.im[k] = -two * di;
    }
    Ok(LossEval {
        value,
        grad: plan.inverse(&g)?,
    })
}

/// `sum |f^r - f_hat^r| + |f^i - f_hat^i|`.
pub fn freq_real_imag_l1<S: Scalar>(x: &[S], x_hat: &[S]) -> Result<LossEval<S>> {
    let Pair { plan, f, f_hat } = spectra(x, x_hat)?;
    let mut value = S::zero();
    let mut g = Spectrum::zeros(f.len());
    for k in 0..f.len() {
        let (dr, di) = (f.re[k] - f_hat.re[k], f.im[k] - f_hat.im[k]);
        value = value + dr.abs() + di.abs();
        g.re[k] = -sgn(dr);
        g.im[k] = -sgn(di);
    }
    Ok(LossEval {
        value,
        grad: plan.inverse(&g)?,
    })
}

/// Amplitude and phase parts of a polar spectral loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarLoss<S = f64> {
    pub amplitude: LossEval<S>,
    pub phase: LossEval<S>,
}

impl<S: Scalar> PolarLoss<S> {
    pub fn total(&self) -> LossEval<S> {
        self.amplitude.plus(&self.phase)
    }
}

/// Penalty `|d|^2` or `|d|` and its derivative in `d`.
fn penalty<S: Scalar>(d: S, norm: Norm) -> (S, S) {
    match norm {
        Norm::L2 => (d * d, S::lit(2.0) * d),
        Norm::L1 => (d.abs(), sgn(d)),
    }
}

/// Losses on the amplitude `A = |Ux|` and phase `theta = arg(Ux)` of target
/// and prediction. Phase differences are wrapped to `(-pi, pi]`; bins whose
/// predicted amplitude is below `eps` are left out of the phase term.
pub fn freq_amp_phase<S: Scalar>(x: &[S], x_hat: &[S], norm: Norm, eps: S) -> Result<PolarLoss<S>> {
    let Pair { plan, f, f_hat } = spectra(x, x_hat)?;
    let (t, p) = (to_amp_phase(&f), to_amp_phase(&f_hat));
    let n = f.len();
    let mut amp_value = S::zero();
    let mut phase_value = S::zero();
    let mut ga = Spectrum::zeros(n);
    let mut gp = Spectrum::zeros(n);
    for k in 0..n {
        let (c, s) = (p.phase[k].cos(), p.phase[k].sin());
        let (v, d) = penalty(t.amp[k] - p.amp[k], norm);
        amp_value = amp_value + v;
        ga.re[k] = -d * c;
        ga.im[k] = -d * s;

        if p.amp[k] >= eps {
            let (v, d) = penalty(wrap_angle(t.phase[k] - p.phase[k]), norm);
            phase_value = phase_value + v;
            // d theta_hat / d x_hat = (cos U^i - sin U^r) / A_hat
            gp.re[k] = d * s / p.amp[k];
            gp.im[k] = -d * c / p.amp[k];
        }
    }
    Ok(PolarLoss {
        amplitude: LossEval {
            value: amp_value,
            grad: plan.inverse(&ga)?,
        },
        phase: LossEval {
            value: phase_value,
            grad: plan.inverse(&gp)?,
        },
    })
}

/// Losses on the amplitude and phase of the error spectrum `U (x - x_hat)`.
/// The error-amplitude term with `Norm::L2` is the temporal squared error;
/// with `Norm::L1` its gradient is `-Re(IDFT(exp(j theta_bar)))`. Bins
/// with error amplitude below `eps` are left out of the phase term.
pub fn freq_error_amp_phase<S: Scalar>(x: &[S], x_hat: &[S], norm: Norm, eps: S) -> Result<PolarLoss<S>> {
    check_pair(x, x_hat)?;
    let plan = DftPlan::new(x.len());
    let e: Vec<S> = x.iter().zip(x_hat).map(|(&a, &b)| a - b).collect();
    let fe = plan.forward(&e)?;
    let ep = to_amp_phase(&fe);
    let n = e.len();

    let amplitude = match norm {
        Norm::L2 => LossEval {
            value: ep.amp.iter().map(|&a| a * a).sum(),
            grad: e.iter().map(|&v| -S::lit(2.0) * v).collect(),
        },
        Norm::L1 => {
            let mut g = Spectrum::zeros(n);
            for k in 0..n {
                if ep.amp[k] > S::zero() {
                    g.re[k] = -ep.phase[k].cos();
                    g.im[k] = -ep.phase[k].sin();
                }
            }
            LossEval {
                value: ep.amp.iter().copied().sum(),
                grad: plan.inverse(&g)?,
            }
        }
    };

    let mut value = S::zero();
    let mut g = Spectrum::zeros(n);
    for k in 0..n {
        if ep.amp[k] >= eps && ep.amp[k] > S::zero() {
            let (v, d) = penalty(ep.phase[k], norm);
            value = value + v;
            let a2 = ep.amp[k] * ep.amp[k];
            g.re[k] = d * fe.im[k] / a2;
            g.im[k] = -d * fe.re[k] / a2;
        }
    }
    Ok(PolarLoss {
        amplitude,
        phase: LossEval {
            value,
            grad: plan.inverse(&g)?,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct HarmonizedConfig<S = f64> {
    pub norm: Norm,
    pub gamma: S,
    #[serde(default = "default_beta")]
    pub beta: S,
    #[serde(default = "default_eps")]
    pub eps: S,
    #[serde(default)]
    pub transform: TransformKind,
    #[serde(default)]
    pub wavelet: Wavelet,
    /// DWT depth; `None` picks `min(trailing_zeros(len), 4)`.
    #[serde(default)]
    pub levels: Option<usize>,
}

fn default_beta<S: Scalar>() -> S {
    S::lit(0.3)
}

fn default_eps<S: Scalar>() -> S {
    S::lit(1e-8)
}

impl<S: Scalar> Default for HarmonizedConfig<S> {
    fn default() -> Self {
        HarmonizedConfig {
            norm: Norm::L1,
            gamma: S::lit(0.5),
            beta: default_beta(),
            eps: default_eps(),
            transform: TransformKind::Dft,
            wavelet: Wavelet::Haar,
            levels: None,
        }
    }
}

impl<S: Scalar> HarmonizedConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= S::zero()) || !self.gamma.is_finite() {
            return Err(EobError::invalid("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.eps > S::zero()) || !self.eps.is_finite() {
            return Err(EobError::invalid("eps", format!("must be finite and > 0, got {}", self.eps)));
        }
        if !(self.beta >= S::zero() && self.beta < S::one()) {
            return Err(EobError::invalid("beta", format!("must lie in [0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    pub fn transform_for(&self, len: usize) -> Result<Transform<S>> {
        Transform::new(self.transform, len, self.wavelet, self.levels)
    }

    /// Per-bin weight: `1 + gamma / (f_bar + eps)` for `L2`,
    /// `1 + gamma f_bar` for `L1`.
    pub fn weight(&self, f_bar: S) -> S {
        match self.norm {
            Norm::L2 => S::one() + self.gamma / (f_bar + self.eps),
            Norm::L1 => S::one() + self.gamma * f_bar,
        }
    }
}

/// Exponential moving average of per-bin target magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaMagnitudes<S = f64> {
    pub f_bar: Vec<S>,
    pub beta: S,
    pub epoch: usize,
}

impl<S: Scalar> EmaMagnitudes<S> {
    /// Zero-initialised average.
    pub fn new(len: usize, beta: S) -> Result<Self> {
        if !(beta >= S::zero() && beta < S::one()) {
            return Err(EobError::invalid("beta", format!("must lie in [0, 1), got {beta}")));
        }
        Ok(EmaMagnitudes {
            f_bar: vec![S::zero(); len],
            beta,
            epoch: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.f_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_bar.is_empty()
    }
}

/// `f_bar' = beta f_bar + (1 - beta) m`.
pub fn update_ema<S: Scalar>(ema: &EmaMagnitudes<S>, magnitudes: &[S]) -> Result<EmaMagnitudes<S>> {
    check_len(ema.len(), magnitudes.len())?;
    if let Some(bad) = magnitudes.iter().find(|m| !(**m >= S::zero()) || !m.is_finite()) {
        return Err(EobError::invalid("magnitudes", format!("must be finite and >= 0, got {bad}")));
    }
    let b = ema.beta;
    Ok(EmaMagnitudes {
        f_bar: ema
            .f_bar
            .iter()
            .zip(magnitudes)
            .map(|(&f, &m)| b * f + (S::one() - b) * m)
            .collect(),
        beta: b,
        epoch: ema.epoch + 1,
    })
}

fn check_coeffs<S: Scalar>(f: &Spectrum<S>, f_hat: &Spectrum<S>, weights: usize) -> Result<()> {
    check_len(f.re.len(), f.im.len())?;
    check_len(f_hat.re.len(), f_hat.im.len())?;
    check_len(f.len(), f_hat.len())?;
    check_len(f.len(), weights)
}

/// Weighted coefficient loss `sum w_k ||f_k - f_hat_k||` and its gradient
/// with respect to `f_hat`, as a spectrum.
pub fn weighted_coeff_loss<S: Scalar>(
    f: &Spectrum<S>,
    f_hat: &Spectrum<S>,
    weights: &[S],
    norm: Norm,
) -> Result<(S, Spectrum<S>)> {
    check_coeffs(f, f_hat, weights.len())?;
    let mut value = S::zero();
    let mut g = Spectrum::zeros(f.len());
    for k in 0..f.len() {
        let w = weights[k];
        let (vr, dr) = penalty(f.re[k] - f_hat.re[k], norm);
        let (vi, di) = penalty(f.im[k] - f_hat.im[k], norm);
        value = value + w * (vr + vi);
        g.re[k] = -w * dr;
        g.im[k] = -w * di;
    }
    Ok((value, g))
}

fn harmonized<S: Scalar>(
    f: &Spectrum<S>,
    f_hat: &Spectrum<S>,
    ema: &EmaMagnitudes<S>,
    cfg: &HarmonizedConfig<S>,
    transform: &Transform<S>,
) -> Result<LossEval<S>> {
    cfg.validate()?;
    let weights: Vec<S> = ema.f_bar.iter().map(|&m| cfg.weight(m)).collect();
    let (value, g) = weighted_coeff_loss(f, f_hat, &weights, cfg.norm)?;
    Ok(LossEval {
        value,
        grad: transform.adjoint(&g)?,
    })
}

/// `sum (1 + gamma / (f_bar_k + eps)) ||f_k - f_hat_k||_2^2`, gradient
/// pulled back through `transform`.
pub fn harmonized_l2<S: Scalar>(
    f: &Spectrum<S>,
    f_hat: &Spectrum<S>,
    ema: &EmaMagnitudes<S>,
    cfg: &HarmonizedConfig<S>,
    transform: &Transform<S>,
) -> Result<LossEval<S>> {
    if cfg.norm != Norm::L2 {
        return Err(EobError::invalid("norm", "harmonized_l2 needs norm = l2"));
    }
    harmonized(f, f_hat, ema, cfg, transform)
}

/// `sum (1 + gamma f_bar_k) ||f_k - f_hat_k||_1`.
pub fn harmonized_l1<S: Scalar>(
    f: &Spectrum<S>,
    f_hat: &Spectrum<S>,
    ema: &EmaMagnitudes<S>,
    cfg: &HarmonizedConfig<S>,
    transform: &Transform<S>,
) -> Result<LossEval<S>> {
    if cfg.norm != Norm::L1 {
        return Err(EobError::invalid("norm", "harmonized_l1 needs norm = l1"));
    }
    harmonized(f, f_hat, ema, cfg, transform)
}

/// Strict spectral whitening: weights `1 / f_bar^2` (`L2`) or `1 / f_bar`
/// (`L1`). Every `f_bar_k` must be positive.
pub fn whitened_loss<S: Scalar>(
    f: &Spectrum<S>,
    f_hat: &Spectrum<S>,
    f_bar: &[S],
    norm: Norm,
    transform: &Transform<S>,
) -> Result<LossEval<S>> {
    if let Some(k) = f_bar.iter().position(|m| !(*m > S::zero())) {
        return Err(EobError::invalid("f_bar", format!("bin {k} has zero magnitude")));
    }
    let weights: Vec<S> = f_bar
        .iter()
        .map(|&m| match norm {
            Norm::L2 => S::one() / (m * m),
            Norm::L1 => S::one() / m,
        })
        .collect();
    let (value, g) = weighted_coeff_loss(f, f_hat, &weights, norm)?;
    Ok(LossEval {
        value,
        grad: transform.adjoint(&g)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{dft_forward, dft_inverse, from_amp_phase};
    use rand::Rng as _;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::stream(seed, 1);
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn fd_check(f: impl Fn(&[f64]) -> f64, x_hat: &[f64], grad: &[f64], tol: f64) {
        let h = 1e-6;
        let scale = grad.iter().fold(1e-3f64, |m, g| m.max(g.abs()));
        for i in 0..x_hat.len() {
            let mut p = x_hat.to_vec();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            let down = f(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() / scale < tol, "i={i} fd={fd} an={}", grad[i]);
        }
    }

    #[test]
    fn temporal_examples() {
        let l2 = temporal_l2(&[1.0f64, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!((l2.value, l2.grad), (5.0, vec![-2.0, -4.0]));
        let l1 = temporal_l1(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!((l1.value, l1.grad), (3.0, vec![-1.0, -1.0]));
        let z = temporal_l1(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((z.value, z.grad), (0.0, vec![0.0, 0.0]));
        assert!(temporal_l2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn real_imag_l2_is_temporal() {
        for n in [8, 32, 64, 100] {
            let (x, xh) = (random(n, 1), random(n, 2));
            let a = freq_real_imag_l2(&x, &xh).unwrap();
            let b = temporal_l2(&x, &xh).unwrap();
            assert!((a.value - b.value).abs() < 1e-9 * b.value);
            for (p, q) in a.grad.iter().zip(&b.grad) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn real_imag_l1_impulse() {
        let l = freq_real_imag_l1(&[1.0f64, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap();
        assert!((l.value - 2.0).abs() < 1e-12);
        let (x, xh) = (random(32, 3), random(32, 4));
        let l = freq_real_imag_l1(&x, &xh).unwrap();
        fd_check(|p| freq_real_imag_l1(&x, p).unwrap().value, &xh, &l.grad, 1e-4);
    }

    #[test]
    fn amp_phase_gradients() {
        let (x, xh) = (random(16, 5), random(16, 6));
        for norm in [Norm::L1, Norm::L2] {
            let l = freq_amp_phase(&x, &xh, norm, 1e-8).unwrap();
            fd_check(|p| freq_amp_phase(&x, p, norm, 1e-8).unwrap().amplitude.value, &xh, &l.amplitude.grad, 1e-5);
            fd_check(|p| freq_amp_phase(&x, p, norm, 1e-8).unwrap().phase.value, &xh, &l.phase.grad, 1e-5);
        }
    }

    #[test]
    fn amplitude_only_perturbation_has_no_phase_loss() {
        let x = random(32, 7);
        let mut ap = to_amp_phase(&dft_forward(&x));
        for (k, a) in ap.amp.iter_mut().enumerate() {
            let kk = k.min(32 - k) as f64;
            *a *= 1.0 + 0.1 * kk;
        }
        let xh = dft_inverse(&from_amp_phase(&ap).unwrap()).unwrap();
        let l = freq_amp_phase(&x, &xh, Norm::L2, 1e-8).unwrap();
        assert!(l.phase.value < 1e-9);
        assert!(l.amplitude.value > 0.0);
        let z = freq_amp_phase(&x, &x, Norm::L1, 1e-8).unwrap();
        assert_eq!(z.total().value, 0.0);
    }

    #[test]
    fn error_amp_phase() {
        let (x, xh) = (random(32, 8), random(32, 9));
        let l2 = freq_error_amp_phase(&x, &xh, Norm::L2, 1e-8).unwrap();
        let t = temporal_l2(&x, &xh).unwrap();
        assert!((l2.amplitude.value - t.value).abs() < 1e-9 * t.value);
        fd_check(|p| freq_error_amp_phase(&x, p, Norm::L2, 1e-8).unwrap().phase.value, &xh, &l2.phase.grad, 1e-5);

        let l1 = freq_error_amp_phase(&x, &xh, Norm::L1, 1e-8).unwrap();
        fd_check(|p| freq_error_amp_phase(&x, p, Norm::L1, 1e-8).unwrap().amplitude.value, &xh, &l1.amplitude.grad, 1e-5);
        let spec = dft_forward(&l1.amplitude.grad);
        for m in spec.magnitudes() {
            assert!((m - 1.0).abs() < 1e-9);
        }
        let z = freq_error_amp_phase(&x, &x, Norm::L1, 1e-8).unwrap();
        assert_eq!(z.amplitude.value, 0.0);
        assert!(z.amplitude.grad.iter().all(|&g| g == 0.0));
    }

    fn harm_setup(n: usize, norm: Norm, gamma: f64) -> (Spectrum, Spectrum, EmaMagnitudes, HarmonizedConfig, Transform<f64>) {
        let cfg = HarmonizedConfig { norm, gamma, ..Default::default() };
        let t = cfg.transform_for(n).unwrap();
        let f = t.forward(&random(n, 10)).unwrap();
        let fh = t.forward(&random(n, 11)).unwrap();
        let ema = update_ema(&EmaMagnitudes::new(n, 0.3).unwrap(), &f.magnitudes()).unwrap();
        (f, fh, ema, cfg, t)
    }

    #[test]
    fn harmonized_reduces_to_plain_norms() {
        let (f, fh, ema, cfg, t) = harm_setup(16, Norm::L2, 0.0);
        let h = harmonized_l2(&f, &fh, &ema, &cfg, &t).unwrap();
        let plain: f64 = (0..16).map(|k| (f.re[k] - fh.re[k]).powi(2) + (f.im[k] - fh.im[k]).powi(2)).sum();
        assert!((h.value - plain).abs() < 1e-12);
        let (f, fh, _, cfg, t) = harm_setup(16, Norm::L1, 0.5);
        let zero = EmaMagnitudes::new(16, 0.3).unwrap();
        let h = harmonized_l1(&f, &fh, &zero, &cfg, &t).unwrap();
        let plain: f64 = (0..16).map(|k| (f.re[k] - fh.re[k]).abs() + (f.im[k] - fh.im[k]).abs()).sum();
        assert!((h.value - plain).abs() < 1e-12);
        assert!(harmonized_l1(&f, &fh, &zero, &HarmonizedConfig { norm: Norm::L2, ..cfg }, &t).is_err());
    }

    #[test]
    fn harmonized_flat_magnitudes_scale_mse() {
        let (f, fh, mut ema, cfg, t) = harm_setup(16, Norm::L2, 0.5);
        ema.f_bar = vec![2.0; 16];
        let h = harmonized_l2(&f, &fh, &ema, &cfg, &t).unwrap();
        let plain = weighted_coeff_loss(&f, &fh, &[1.0; 16], Norm::L2).unwrap().0;
        assert!((h.value - (1.0 + 0.5 / (2.0 + 1e-8)) * plain).abs() < 1e-12);
        let at_min = harmonized_l2(&f, &f, &ema, &cfg, &t).unwrap();
        assert_eq!(at_min.value, 0.0);
        assert!(at_min.grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn harmonized_gradients_all_transforms() {
        for kind in [TransformKind::Dft, TransformKind::Dwt, TransformKind::Identity] {
            for norm in [Norm::L1, Norm::L2] {
                let cfg = HarmonizedConfig { norm, transform: kind, wavelet: Wavelet::Db2, ..Default::default() };
                let t = cfg.transform_for(32).unwrap();
                let (x, xh) = (random(32, 20), random(32, 21));
                let f = t.forward(&x).unwrap();
                let ema = update_ema(&EmaMagnitudes::new(32, 0.3).unwrap(), &f.magnitudes()).unwrap();
                let eval = |p: &[f64]| {
                    let fh = t.forward(p).unwrap();
                    harmonized(&f, &fh, &ema, &cfg, &t).unwrap()
                };
                fd_check(|p| eval(p).value, &xh, &eval(&xh).grad, 1e-5);
            }
        }
    }

    #[test]
    fn weight_regimes() {
        let cfg = HarmonizedConfig::<f64> { norm: Norm::L2, gamma: 0.5, ..Default::default() };
        for fb in [50.0, 500.0, 5000.0] {
            assert!((cfg.weight(fb) - 1.0).abs() <= 0.5 / fb);
        }
        for fb in [1e-3, 1e-4] {
            let w = cfg.weight(fb);
            assert!(((w - 1.0) - 0.5 / (fb + 1e-8)).abs() < 1e-9 * w);
            assert!(w > 100.0);
        }
    }

    #[test]
    fn whitening() {
        let t = Transform::<f64>::new(TransformKind::Dft, 8, Wavelet::Haar, None).unwrap();
        let f = t.forward(&random(8, 30)).unwrap();
        let fh = t.forward(&random(8, 31)).unwrap();
        let flat = whitened_loss(&f, &fh, &[1.0; 8], Norm::L2, &t).unwrap();
        let plain = weighted_coeff_loss(&f, &fh, &[1.0; 8], Norm::L2).unwrap().0;
        assert!((flat.value - plain).abs() < 1e-12);
        let mut fb = vec![1.0; 8];
        fb[3] = 0.5;
        let (_, g1) = weighted_coeff_loss(&f, &fh, &[1.0; 8], Norm::L2).unwrap();
        let w = whitened_loss(&f, &fh, &fb, Norm::L2, &t).unwrap();
        let (_, g2) = weighted_coeff_loss(&f, &fh, &fb.iter().map(|m| 1.0 / (m * m)).collect::<Vec<_>>(), Norm::L2).unwrap();
        assert!((g2.re[3] - 4.0 * g1.re[3]).abs() < 1e-12);
        assert!(w.value > flat.value);
        fb[2] = 0.0;
        assert!(whitened_loss(&f, &fh, &fb, Norm::L2, &t).is_err());
    }

    #[test]
    fn ema_recurrence() {
        let e = EmaMagnitudes::new(1, 0.3f64).unwrap();
        let e = update_ema(&e, &[1.0]).unwrap();
        assert!((e.f_bar[0] - 0.7).abs() < 1e-15);
        assert_eq!(e.epoch, 1);
        let mut e = EmaMagnitudes::new(1, 0.3).unwrap();
        for i in 1..=10 {
            e = update_ema(&e, &[2.0]).unwrap();
            assert!((e.f_bar[0] - 2.0 * (1.0 - 0.3f64.powi(i))).abs() < 1e-14);
        }
        let e = update_ema(&EmaMagnitudes::new(2, 0.0).unwrap(), &[3.0, 4.0]).unwrap();
        assert_eq!(e.f_bar, vec![3.0, 4.0]);
        assert!(EmaMagnitudes::<f64>::new(2, 1.0).is_err());
        assert!(update_ema(&e, &[1.0]).is_err());
    }

    #[test]
    fn config_json() {
        let c: HarmonizedConfig = serde_json::from_str(
            r#"{"norm":"l1","gamma":0.5,"beta":0.3,"eps":1e-8,"transform":"dft"}"#,
        )
        .unwrap();
        assert_eq!(c, HarmonizedConfig::default());
        assert!(serde_json::from_str::<HarmonizedConfig>(r#"{"norm":"l1","gamma":0.5,"bogus":1}"#).is_err());
    }
}
