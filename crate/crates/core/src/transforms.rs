//! Unitary DFT, orthogonal DWT, polar decomposition and spectral truncation.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, EobError, Result};
use crate::scalar::Scalar;

/// Full complex spectrum of a real (or complex) sequence, `L` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<S = f64> {
    pub re: Vec<S>,
    pub im: Vec<S>,
}

impl<S: Scalar> Spectrum<S> {
    pub fn zeros(len: usize) -> Self {
        Spectrum {
            re: vec![S::zero(); len],
            im: vec![S::zero(); len],
        }
    }

    /// Real coefficients with a zero imaginary part.
    pub fn from_real(re: Vec<S>) -> Self {
        let im = vec![S::zero(); re.len()];
        Spectrum { re, im }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn energy(&self) -> S {
        self.re.iter().zip(&self.im).map(|(&r, &i)| r * r + i * i).sum()
    }

    /// Complex modulus per bin.
    pub fn magnitudes(&self) -> Vec<S> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| r.hypot(i)).collect()
    }

    fn check(&self) -> Result<()> {
        check_len(self.re.len(), self.im.len())
    }
}

/// Precomputed twiddles for one length. Cheap to clone and `Sync`.
#[derive(Debug, Clone)]
pub struct DftPlan<S = f64> {
    len: usize,
    cos: Vec<S>,
    sin: Vec<S>,
    scale: S,
}

/// `cos(2 pi m / n)`, `sin(2 pi m / n)` with exact values at quarter turns.
fn unit_root<S: Scalar>(m: usize, n: usize) -> (S, S) {
    let m = m % n;
    if (4 * m).is_multiple_of(n) {
        return match 4 * m / n {
            0 => (S::one(), S::zero()),
            1 => (S::zero(), S::one()),
            2 => (-S::one(), S::zero()),
            _ => (S::zero(), -S::one()),
        };
    }
    let angle = S::TAU() * S::from_usize_lossy(m) / S::from_usize_lossy(n);
    (angle.cos(), angle.sin())
}

impl<S: Scalar> DftPlan<S> {
    pub fn new(len: usize) -> Self {
        let (cos, sin) = (0..len).map(|m| unit_root::<S>(m, len)).unzip();
        let scale = if len == 0 {
            S::one()
        } else {
            S::one() / S::from_usize_lossy(len).sqrt()
        };
        DftPlan { len, cos, sin, scale }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `f = U x` for real `x`.
    pub fn forward(&self, x: &[S]) -> Result<Spectrum<S>> {
        check_len(self.len, x.len())?;
        let mut re = x.to_vec();
        let mut im = vec![S::zero(); x.len()];
        self.transform(&mut re, &mut im, false);
        Ok(Spectrum { re, im })
    }

    /// `U^H f` for an arbitrary complex spectrum.
    pub fn inverse_complex(&self, f: &Spectrum<S>) -> Result<(Vec<S>, Vec<S>)> {
        f.check()?;
        check_len(self.len, f.len())?;
        let mut re = f.re.clone();
        let mut im = f.im.clone();
        self.transform(&mut re, &mut im, true);
        Ok((re, im))
    }

    /// Real part of `U^H f`. Exact inverse of `forward` for conjugate
    /// symmetric spectra.
    pub fn inverse(&self, f: &Spectrum<S>) -> Result<Vec<S>> {
        Ok(self.inverse_complex(f)?.0)
    }

    fn transform(&self, re: &mut [S], im: &mut [S], inverse: bool) {
        let n = self.len;
        if n <= 1 {
            return;
        }
        if n.is_power_of_two() {
            self.radix2(re, im, inverse);
        } else {
            self.direct(re, im, inverse);
        }
        for v in re.iter_mut().chain(im.iter_mut()) {
            *v = *v * self.scale;
        }
    }

    fn direct(&self, re: &mut [S], im: &mut [S], inverse: bool) {
        let n = self.len;
        let sign = if inverse { S::one() } else { -S::one() };
        let mut out_re = vec![S::zero(); n];
        let mut out_im = vec![S::zero(); n];
        for k in 0..n {
            let (mut sr, mut si) = (S::zero(), S::zero());
            for l in 0..n {
                let m = (k * l) % n;
                let (c, s) = (self.cos[m], sign * self.sin[m]);
                sr = sr + re[l] * c - im[l] * s;
                si = si + re[l] * s + im[l] * c;
            }
            out_re[k] = sr;
            out_im[k] = si;
        }
        re.copy_from_slice(&out_re);
        im.copy_from_slice(&out_im);
    }

    fn radix2(&self, re: &mut [S], im: &mut [S], inverse: bool) {
        let n = self.len;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { S::one() } else { -S::one() };
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let (c, s) = (self.cos[k * stride], sign * self.sin[k * stride]);
                    let (a, b) = (start + k, start + k + half);
                    let tr = re[b] * c - im[b] * s;
                    let ti = re[b] * s + im[b] * c;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] = re[a] + tr;
                    im[a] = im[a] + ti;
                }
            }
            size *= 2;
        }
    }
}

pub fn dft_forward<S: Scalar>(x: &[S]) -> Spectrum<S> {
    DftPlan::new(x.len()).forward(x).expect("plan length matches input")
}

pub fn dft_inverse<S: Scalar>(f: &Spectrum<S>) -> Result<Vec<S>> {
    DftPlan::new(f.len()).inverse(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    #[default]
    Haar,
    Db2,
}

impl Wavelet {
    /// Low-pass analysis filter.
    pub fn lowpass<S: Scalar>(self) -> Vec<S> {
        match self {
            Wavelet::Haar => vec![S::FRAC_1_SQRT_2(); 2],
            Wavelet::Db2 => {
                let r3 = S::lit(3.0).sqrt();
                let d = S::lit(4.0) * S::SQRT_2();
                vec![
                    (S::one() + r3) / d,
                    (S::lit(3.0) + r3) / d,
                    (S::lit(3.0) - r3) / d,
                    (S::one() - r3) / d,
                ]
            }
        }
    }

    /// Quadrature mirror high-pass filter `g[k] = (-1)^k h[K-1-k]`.
    pub fn highpass<S: Scalar>(self) -> Vec<S> {
        let h = self.lowpass::<S>();
        let k = h.len();
        (0..k)
            .map(|i| if i % 2 == 0 { h[k - 1 - i] } else { -h[k - 1 - i] })
            .collect()
    }
}

/// Coefficients laid out as `[a_J | d_J | d_{J-1} | ... | d_1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoeffs<S = f64> {
    pub wavelet: Wavelet,
    pub levels: usize,
    pub coeffs: Vec<S>,
}

impl<S: Scalar> WaveletCoeffs<S> {
    pub fn approximation(&self) -> &[S] {
        &self.coeffs[..self.coeffs.len() >> self.levels]
    }

    /// Detail block at `level` (1 is the finest).
    pub fn detail(&self, level: usize) -> &[S] {
        let n = self.coeffs.len();
        let len = n >> level;
        &self.coeffs[len..2 * len]
    }
}

fn check_dwt_len(len: usize, levels: usize) -> Result<()> {
    if len == 0 {
        return Err(EobError::invalid("x", "empty input"));
    }
    if levels >= usize::BITS as usize || !len.is_multiple_of(1usize << levels) {
        return Err(EobError::invalid(
            "levels",
            format!("length {len} is not divisible by 2^{levels}"),
        ));
    }
    Ok(())
}

/// Largest usable level count for `len`, capped at `cap`.
pub fn max_dwt_levels(len: usize, cap: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len.trailing_zeros() as usize).min(cap)
    }
}

pub fn dwt_forward<S: Scalar>(x: &[S], wavelet: Wavelet, levels: usize) -> Result<WaveletCoeffs<S>> {
    check_dwt_len(x.len(), levels)?;
    let h = wavelet.lowpass::<S>();
    let g = wavelet.highpass::<S>();
    let mut out = x.to_vec();
    let mut n = x.len();
    let mut buf = vec![S::zero(); n];
    for _ in 0..levels {
        let half = n / 2;
        for i in 0..half {
            let (mut a, mut d) = (S::zero(), S::zero());
            for k in 0..h.len() {
                let v = out[(2 * i + k) % n];
                a = a + h[k] * v;
                d = d + g[k] * v;
            }
            buf[i] = a;
            buf[half + i] = d;
        }
        out[..n].copy_from_slice(&buf[..n]);
        n = half;
    }
    Ok(WaveletCoeffs {
        wavelet,
        levels,
        coeffs: out,
    })
}

pub fn dwt_inverse<S: Scalar>(w: &WaveletCoeffs<S>) -> Result<Vec<S>> {
    check_dwt_len(w.coeffs.len(), w.levels)?;
    let h = w.wavelet.lowpass::<S>();
    let g = w.wavelet.highpass::<S>();
    let mut out = w.coeffs.clone();
    let mut buf = vec![S::zero(); out.len()];
    let mut n = out.len() >> w.levels;
    for _ in 0..w.levels {
        let m = 2 * n;
        buf[..m].iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let (a, d) = (out[i], out[n + i]);
            for k in 0..h.len() {
                let j = (2 * i + k) % m;
                buf[j] = buf[j] + h[k] * a + g[k] * d;
            }
        }
        out[..m].copy_from_slice(&buf[..m]);
        n = m;
    }
    Ok(out)
}

/// Polar form of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpPhase<S = f64> {
    pub amp: Vec<S>,
    pub phase: Vec<S>,
}

/// Amplitude and `atan2` phase; empty bins get phase 0.
pub fn to_amp_phase<S: Scalar>(f: &Spectrum<S>) -> AmpPhase<S> {
    let (amp, phase) = f
        .re
        .iter()
        .zip(&f.im)
        .map(|(&r, &i)| {
            let a = r.hypot(i);
            let p = if a == S::zero() { S::zero() } else { polar_angle(i, r) };
            (a, p)
        })
        .unzip();
    AmpPhase { amp, phase }
}

/// `atan2` mapped to `(-pi, pi]` (turns `-pi` from a negative zero into `pi`).
fn polar_angle<S: Scalar>(im: S, re: S) -> S {
    let p = im.atan2(re);
    if p <= -S::PI() {
        S::PI()
    } else {
        p
    }
}

pub fn from_amp_phase<S: Scalar>(ap: &AmpPhase<S>) -> Result<Spectrum<S>> {
    check_len(ap.amp.len(), ap.phase.len())?;
    let (re, im) = ap
        .amp
        .iter()
        .zip(&ap.phase)
        .map(|(&a, &p)| (a * p.cos(), a * p.sin()))
        .unzip();
    Ok(Spectrum { re, im })
}

/// Low-frequency part of a spectrum. Bins `0..keep` are stored; their
/// conjugate mirrors are implied when padding back to `original_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncated<S = f64> {
    pub kept: Spectrum<S>,
    pub original_len: usize,
}

pub fn compress_truncate<S: Scalar>(f: &Spectrum<S>, keep: usize) -> Result<Truncated<S>> {
    f.check()?;
    if keep == 0 {
        return Err(EobError::invalid("keep", "must be at least 1"));
    }
    if keep > f.len() {
        return Err(EobError::invalid(
            "keep",
            format!("cannot keep {keep} of {} bins", f.len()),
        ));
    }
    Ok(Truncated {
        kept: Spectrum {
            re: f.re[..keep].to_vec(),
            im: f.im[..keep].to_vec(),
        },
        original_len: f.len(),
    })
}

/// Zero-pads back to full length, rebuilding the negative-frequency mirrors
/// of the kept bins.
pub fn inverse_pad<S: Scalar>(t: &Truncated<S>) -> Spectrum<S> {
    let n = t.original_len;
    let mut out = Spectrum::zeros(n);
    for k in 0..t.kept.len() {
        out.re[k] = t.kept.re[k];
        out.im[k] = t.kept.im[k];
    }
    for k in 1..t.kept.len() {
        let m = n - k;
        if m >= t.kept.len() {
            out.re[m] = t.kept.re[k];
            out.im[m] = -t.kept.im[k];
        }
    }
    out
}

/// Truncates, pads back and reports the squared reconstruction error.
pub fn truncation_error<S: Scalar>(f: &Spectrum<S>, keep: usize) -> Result<(Spectrum<S>, S)> {
    let rebuilt = inverse_pad(&compress_truncate(f, keep)?);
    let err = f
        .re
        .iter()
        .zip(&f.im)
        .zip(rebuilt.re.iter().zip(&rebuilt.im))
        .map(|((&a, &b), (&c, &d))| (a - c) * (a - c) + (b - d) * (b - d))
        .sum();
    Ok((rebuilt, err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    #[default]
    Dft,
    Dwt,
    Identity,
}

/// A fixed-length orthogonal transform with its adjoint. Real transforms
/// report their coefficients through `Spectrum::re` with a zero `im`.
#[derive(Debug, Clone)]
pub enum Transform<S = f64> {
    Dft(DftPlan<S>),
    Dwt { wavelet: Wavelet, levels: usize, len: usize },
    Identity(usize),
}

impl<S: Scalar> Transform<S> {
    /// DWT levels default to `min(trailing_zeros(len), 4)` when `levels` is `None`.
    pub fn new(kind: TransformKind, len: usize, wavelet: Wavelet, levels: Option<usize>) -> Result<Self> {
        Ok(match kind {
            TransformKind::Dft => Transform::Dft(DftPlan::new(len)),
            TransformKind::Identity => Transform::Identity(len),
            TransformKind::Dwt => {
                let levels = levels.unwrap_or_else(|| max_dwt_levels(len, 4));
                check_dwt_len(len, levels)?;
                Transform::Dwt { wavelet, levels, len }
            }
        })
    }

    pub fn kind(&self) -> TransformKind {
        match self {
            Transform::Dft(_) => TransformKind::Dft,
            Transform::Dwt { .. } => TransformKind::Dwt,
            Transform::Identity(_) => TransformKind::Identity,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Transform::Dft(p) => p.len(),
            Transform::Dwt { len, .. } => *len,
            Transform::Identity(len) => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, x: &[S]) -> Result<Spectrum<S>> {
        check_len(self.len(), x.len())?;
        match self {
            Transform::Dft(p) => p.forward(x),
            Transform::Dwt { wavelet, levels, .. } => {
                Ok(Spectrum::from_real(dwt_forward(x, *wavelet, *levels)?.coeffs))
            }
            Transform::Identity(_) => Ok(Spectrum::from_real(x.to_vec())),
        }
    }

    /// Pulls a coefficient-domain gradient back to the time domain:
    /// `Re(U^H g)` for the DFT, `W^T g` for the DWT.
    pub fn adjoint(&self, g: &Spectrum<S>) -> Result<Vec<S>> {
        g.check()?;
        check_len(self.len(), g.len())?;
        match self {
            Transform::Dft(p) => p.inverse(g),
            Transform::Dwt { wavelet, levels, .. } => dwt_inverse(&WaveletCoeffs {
                wavelet: *wavelet,
                levels: *levels,
                coeffs: g.re.clone(),
            }),
            Transform::Identity(_) => Ok(g.re.clone()),
        }
    }
}
