//! Raw-waveform framing and the acoustic filterbank layer.
//!
//! The learned front-end convolves rectangular frames with cosine-modulated
//! Gaussian kernels `g_i(n) = cos(2π μ_i n) · exp(−n² μ_i² / 2)` synthesized
//! from learnable center frequencies μ (normalized cycles/sample), then
//! squares, average-pools and log-transforms the filter outputs into an F×T
//! representation. Mel and sinc reference front-ends live here too, along
//! with delta stacking and [0,1] scaling.

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Floor inside `log_floor`; keeps silent frames at `ln(1e-10)` instead of −∞.
pub const LOG_FLOOR_EPS: f64 = 1e-10;
/// Center frequencies are clamped to this range after every optimizer step.
pub const MU_MIN: f64 = 1e-3;
pub const MU_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    /// Window length S in samples.
    pub frame_len: usize,
    /// Hop length in samples.
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidArgument(format!(
                "frame config requires 0 < hop <= S, got S={} hop={}",
                self.frame_len, self.hop
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Learnable filterbank geometry: F center frequencies plus the kernel length.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankParams {
    /// Normalized center frequencies, cycles/sample, each in (0, 0.5].
    pub mu: Vec<f64>,
    /// Odd kernel length k in samples.
    pub kernel_len: usize,
}

impl FilterbankParams {
    pub fn validate(&self) -> Result<()> {
        validate_kernel_len(self.kernel_len)?;
        for &m in &self.mu {
            validate_mu(m)?;
        }
        Ok(())
    }
}

/// An F×T matrix of log energies plus the band frequencies that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TFRepresentation {
    /// Log energies, shape [F, T].
    pub values: Tensor,
    /// Normalized center frequency per row.
    pub band_mu: Vec<f64>,
    /// Start sample of each frame.
    pub frame_times: Vec<usize>,
}

fn validate_kernel_len(k: usize) -> Result<()> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel length must be odd and >= 3, got {k}"
        )));
    }
    Ok(())
}

fn validate_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= MU_MAX) {
        return Err(Error::InvalidArgument(format!(
            "center frequency must lie in (0, 0.5], got {mu}"
        )));
    }
    Ok(())
}

/// Cuts the waveform into T = floor((len − S)/hop) + 1 rectangular frames.
///
/// Returns a [T, S] tensor (one frame per row); frame t covers samples
/// [t·hop, t·hop + S).
pub fn frame_signal(wave: &[f64], cfg: &FrameConfig) -> Result<Tensor> {
    cfg.validate()?;
    let s = cfg.frame_len;
    if wave.len() < s {
        return Err(Error::InvalidArgument(format!(
            "waveform has {} samples, need at least S={}",
            wave.len(),
            s
        )));
    }
    let t_frames = (wave.len() - s) / cfg.hop + 1;
    let mut data = Vec::with_capacity(t_frames * s);
    for t in 0..t_frames {
        data.extend_from_slice(&wave[t * cfg.hop..t * cfg.hop + s]);
    }
    Tensor::from_vec(&[t_frames, s], data)
}

pub fn frame_times(wave_len: usize, cfg: &FrameConfig) -> Vec<usize> {
    let t_frames = (wave_len - cfg.frame_len) / cfg.hop + 1;
    (0..t_frames).map(|t| t * cfg.hop).collect()
}

/// Symmetric sample grid offset for index i of a length-k kernel.
#[inline]
pub(crate) fn grid_offset(i: usize, k: usize) -> f64 {
    i as f64 - ((k - 1) / 2) as f64
}

pub(crate) fn cosgauss_into(mu: f64, out: &mut [f64]) {
    let k = out.len();
    for (i, o) in out.iter_mut().enumerate() {
        let n = grid_offset(i, k);
        *o = (2.0 * PI * mu * n).cos() * (-n * n * mu * mu / 2.0).exp();
    }
}

pub(crate) fn cosgauss_grad_into(mu: f64, out: &mut [f64]) {
    let k = out.len();
    for (i, o) in out.iter_mut().enumerate() {
        let n = grid_offset(i, k);
        let phase = 2.0 * PI * mu * n;
        *o = (-2.0 * PI * n * phase.sin() - n * n * mu * phase.cos())
            * (-n * n * mu * mu / 2.0).exp();
    }
}

/// Cosine-modulated Gaussian kernel: g(n) = cos(2πμn)·exp(−n²μ²/2)
/// over the symmetric grid n ∈ {−(k−1)/2, …, (k−1)/2}.
pub fn cosgauss_kernel(mu: f64, k: usize) -> Result<Vec<f64>> {
    validate_mu(mu)?;
    validate_kernel_len(k)?;
    let mut out = vec![0.0; k];
    cosgauss_into(mu, &mut out);
    Ok(out)
}

/// Analytic ∂g/∂μ(n) = [−2πn·sin(2πμn) − n²μ·cos(2πμn)]·exp(−n²μ²/2).
pub fn cosgauss_kernel_grad(mu: f64, k: usize) -> Result<Vec<f64>> {
    validate_mu(mu)?;
    validate_kernel_len(k)?;
    let mut out = vec![0.0; k];
    cosgauss_grad_into(mu, &mut out);
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-pass kernel as a Hamming-windowed difference of two sinc low-passes.
pub fn sinc_kernel(f_low: f64, f_high: f64, k: usize) -> Result<Vec<f64>> {
    validate_kernel_len(k)?;
    if !(f_low >= 0.0 && f_low < f_high && f_high <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "sinc cutoffs must satisfy 0 <= f_low < f_high <= 0.5, got ({f_low}, {f_high})"
        )));
    }
    let span = (k - 1) as f64;
    Ok((0..k)
        .map(|i| {
            let n = grid_offset(i, k);
            let band = 2.0 * f_high * sinc(2.0 * f_high * n) - 2.0 * f_low * sinc(2.0 * f_low * n);
            let hamming = 0.54 + 0.46 * (2.0 * PI * n / span).cos();
            band * hamming
        })
        .collect())
}

/// Mean-square valid-convolution energies for every (band, frame) pair.
///
/// `frames` is [T, S], `kernels` is [F, k] (row-major slices). Writes the F×T
/// energy matrix into `energies` and, when `conv_out` is provided, the raw
/// convolution outputs (layout [F, T, S−k+1]) needed by the backward pass.
pub(crate) fn band_energies_into(
    frames: &[f64],
    t_frames: usize,
    s: usize,
    kernels: &[f64],
    f_bands: usize,
    k: usize,
    energies: &mut [f64],
    mut conv_out: Option<&mut [f64]>,
) {
    let l = s - k + 1;
    debug_assert_eq!(energies.len(), f_bands * t_frames);
    for i in 0..f_bands {
        let g = &kernels[i * k..(i + 1) * k];
        for t in 0..t_frames {
            let frame = &frames[t * s..(t + 1) * s];
            let mut acc = 0.0;
            if let Some(conv) = conv_out.as_deref_mut() {
                let row = &mut conv[(i * t_frames + t) * l..(i * t_frames + t + 1) * l];
                for (p, slot) in row.iter_mut().enumerate() {
                    let v = dot(&frame[p..p + k], g);
                    *slot = v;
                    acc += v * v;
                }
            } else {
                for p in 0..l {
                    let v = dot(&frame[p..p + k], g);
                    acc += v * v;
                }
            }
            energies[i * t_frames + t] = acc / l as f64;
        }
    }
}

/// Mean of squared valid 1-D convolution per band and frame (no log).
///
/// `frames`: [T, S]; `kernels`: [F, k]; result [F, T].
pub fn band_energies(frames: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let (t_frames, s) = match frames.shape() {
        [t, s] => (*t, *s),
        other => return Err(Error::Shape(format!("frames must be [T,S], got {other:?}"))),
    };
    let (f_bands, k) = match kernels.shape() {
        [f, k] => (*f, *k),
        other => {
            return Err(Error::Shape(format!(
                "kernels must be [F,k], got {other:?}"
            )))
        }
    };
    if k > s {
        return Err(Error::InvalidArgument(format!(
            "kernel length k={k} exceeds frame length S={s}"
        )));
    }
    let mut energies = vec![0.0; f_bands * t_frames];
    band_energies_into(
        frames.data(),
        t_frames,
        s,
        kernels.data(),
        f_bands,
        k,
        &mut energies,
        None,
    );
    Tensor::from_vec(&[f_bands, t_frames], energies)
}

pub fn log_floor(x: f64, eps: f64) -> f64 {
    x.max(eps).ln()
}

/// The full learned front-end for one clip: synthesize cosine-Gaussian
/// kernels from μ, convolve each frame, square, average-pool, log-floor.
pub fn filterbank_forward(
    frames: &Tensor,
    params: &FilterbankParams,
    eps: f64,
) -> Result<TFRepresentation> {
    params.validate()?;
    let k = params.kernel_len;
    let f_bands = params.mu.len();
    let mut kernels = Tensor::zeros(&[f_bands, k]);
    for (i, &mu) in params.mu.iter().enumerate() {
        cosgauss_into(mu, &mut kernels.data_mut()[i * k..(i + 1) * k]);
    }
    let mut energies = band_energies(frames, &kernels)?;
    for v in energies.data_mut() {
        *v = log_floor(*v, eps);
    }
    Ok(TFRepresentation {
        values: energies,
        band_mu: params.mu.clone(),
        frame_times: Vec::new(),
    })
}

/// Stable permutation that sorts band frequencies ascending.
pub(crate) fn sort_perm(mu: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..mu.len()).collect();
    perm.sort_by(|&a, &b| mu[a].partial_cmp(&mu[b]).expect("finite band_mu"));
    perm
}

/// Rows (and band_mu) reordered so band_mu is nondecreasing; stable for ties.
pub fn order_bands(rep: &TFRepresentation) -> TFRepresentation {
    let perm = sort_perm(&rep.band_mu);
    let cols = rep.values.shape()[1];
    let mut data = Vec::with_capacity(rep.values.numel());
    let mut band_mu = Vec::with_capacity(perm.len());
    for &src in &perm {
        data.extend_from_slice(rep.values.row(src));
        band_mu.push(rep.band_mu[src]);
    }
    TFRepresentation {
        values: Tensor::from_vec(&[perm.len(), cols], data).expect("same size"),
        band_mu,
        frame_times: rep.frame_times.clone(),
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// F centers equally spaced on the mel scale strictly between f_min and
/// Nyquist (the interior points of an (F+2)-point grid), as normalized
/// frequencies. F=1 lands on the mel midpoint.
pub fn init_mu_mel(f_bands: usize, sample_rate: u32, f_min: f64) -> Result<Vec<f64>> {
    if f_bands == 0 {
        return Err(Error::InvalidArgument("need at least one band".into()));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < nyquist) {
        return Err(Error::InvalidArgument(format!(
            "f_min must lie in [0, Nyquist), got {f_min}"
        )));
    }
    let lo = hz_to_mel(f_min);
    let hi = hz_to_mel(nyquist);
    let step = (hi - lo) / (f_bands + 1) as f64;
    Ok((1..=f_bands)
        .map(|i| mel_to_hz(lo + step * i as f64) / sample_rate as f64)
        .collect())
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Power spectrum |X_m|²/N of a frame zero-padded to n_fft (full length).
///
/// With this normalization Parseval reads Σ_m P[m] = Σ_n x[n]².
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(n_fft.is_power_of_two() && n_fft >= frame.len());
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr() / n_fft as f64).collect()
}

/// Triangular mel filter weights over one-sided FFT bins.
///
/// n_mels+2 equally-mel-spaced points from 0 Hz to Nyquist; filter j rises
/// over (edge_j, edge_{j+1}) and falls over (edge_{j+1}, edge_{j+2}).
fn mel_triangles(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate as f64 / 2.0;
    let hi = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(hi * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..n_mels)
        .map(|j| {
            let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
            let mut taps = Vec::new();
            for m in 0..=n_fft / 2 {
                let f = m as f64 * bin_hz;
                let w = if f > l && f < c {
                    (f - l) / (c - l)
                } else if (f - c).abs() == 0.0 {
                    1.0
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                if w > 0.0 {
                    taps.push((m, w));
                }
            }
            taps
        })
        .collect()
}

/// Mel centers in Hz for the baseline filterbank (0 Hz to Nyquist grid).
pub fn mel_centers_hz(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let hi = hz_to_mel(sample_rate as f64 / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(hi * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Log-mel baseline: Hann window, radix-2 FFT (zero-padded to the next power
/// of two), triangular mel filters over 0–Nyquist, log floor.
pub fn mel_spectrogram(
    wave: &[f64],
    cfg: &FrameConfig,
    n_mels: usize,
) -> Result<TFRepresentation> {
    let frames = frame_signal(wave, cfg)?;
    let (t_frames, s) = (frames.shape()[0], frames.shape()[1]);
    let n_fft = next_pow2(s);
    let hann: Vec<f64> = (0..s)
        .map(|m| 0.5 - 0.5 * (2.0 * PI * m as f64 / (s - 1) as f64).cos())
        .collect();
    let triangles = mel_triangles(n_mels, n_fft, cfg.sample_rate);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut values = Tensor::zeros(&[n_mels, t_frames]);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..t_frames {
        let frame = frames.row(t);
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < s {
                Complex::new(frame[i] * hann[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (j, taps) in triangles.iter().enumerate() {
            let e: f64 = taps
                .iter()
                .map(|&(m, w)| w * buf[m].norm_sqr() / n_fft as f64)
                .sum();
            values.set2(j, t, log_floor(e, LOG_FLOOR_EPS));
        }
    }
    Ok(TFRepresentation {
        values,
        band_mu: mel_centers_hz(n_mels, cfg.sample_rate)
            .into_iter()
            .map(|hz| hz / cfg.sample_rate as f64)
            .collect(),
        frame_times: frame_times(wave.len(), cfg),
    })
}

/// Standard regression delta along time with edge replication:
/// d_t = Σ_{w=1..W} w·(x_{t+w} − x_{t−w}) / (2·Σ w²).
pub(crate) fn delta_into(x: &[f64], f_bands: usize, t_frames: usize, window: usize, out: &mut [f64]) {
    let denom: f64 = 2.0 * (1..=window).map(|w| (w * w) as f64).sum::<f64>();
    for i in 0..f_bands {
        let row = &x[i * t_frames..(i + 1) * t_frames];
        for t in 0..t_frames {
            let mut acc = 0.0;
            for w in 1..=window {
                let fwd = row[(t + w).min(t_frames - 1)];
                let bwd = row[t.saturating_sub(w)];
                acc += w as f64 * (fwd - bwd);
            }
            out[i * t_frames + t] = acc / denom;
        }
    }
}

pub fn delta_features(x: &Tensor, window: usize) -> Result<Tensor> {
    let (f_bands, t_frames) = match x.shape() {
        [f, t] => (*f, *t),
        other => return Err(Error::Shape(format!("expected [F,T], got {other:?}"))),
    };
    if window == 0 || t_frames <= 2 * window {
        return Err(Error::InvalidArgument(format!(
            "delta window {window} needs T > {}, got T={t_frames}",
            2 * window
        )));
    }
    let mut out = Tensor::zeros(&[f_bands, t_frames]);
    delta_into(x.data(), f_bands, t_frames, window, out.data_mut());
    Ok(out)
}

/// Stacks [static, delta, delta-delta] into a [3, F, T] tensor.
pub fn feature_stack(x: &Tensor, window: usize) -> Result<Tensor> {
    let d1 = delta_features(x, window)?;
    let d2 = delta_features(&d1, window)?;
    let (f_bands, t_frames) = (x.shape()[0], x.shape()[1]);
    let mut data = Vec::with_capacity(3 * x.numel());
    data.extend_from_slice(x.data());
    data.extend_from_slice(d1.data());
    data.extend_from_slice(d2.data());
    Tensor::from_vec(&[3, f_bands, t_frames], data)
}

/// Per-channel min-max scaling to [0,1]; a constant channel maps to zeros.
///
/// The leading axis is the channel axis; 2-d inputs are treated as a single
/// channel.
pub fn minmax_scale(stack: &Tensor) -> Tensor {
    let channels = if stack.shape().len() >= 3 {
        stack.shape()[0]
    } else {
        1
    };
    let per = stack.numel() / channels;
    let mut out = stack.clone();
    for ch in 0..channels {
        let slice = &mut out.data_mut()[ch * per..(ch + 1) * per];
        let mn = slice.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx > mn {
            for v in slice.iter_mut() {
                *v = (*v - mn) / (mx - mn);
            }
        } else {
            slice.fill(0.0);
        }
    }
    out
}
