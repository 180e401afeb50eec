//! Spectral front-end: forward/inverse STFT with Hann windowing, and mel
//! filterbank construction.
//!
//! Conventions: periodic (DFT-even) Hann window, one-sided spectrum
//! (`F = n_fft/2 + 1`), unnormalized forward DFT, reflect center-padding by
//! `n_fft/2`, and least-squares overlap-add inversion (division by the summed
//! squared window), which makes `istft(stft(x))` exact up to float error.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Periodic Hann window: `w[k] = 0.5 * (1 - cos(2*pi*k/n))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument(format!("window length {n} too small (need >= 2)")));
    }
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect())
}

/// STFT geometry plus the analysis/synthesis window.
///
/// Serialized form carries only `n_fft`, `hop_length` and `center_padding`;
/// the window is regenerated as a periodic Hann on deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StftSettings", into = "StftSettings")]
pub struct StftConfig {
    n_fft: usize,
    hop_length: usize,
    center_padding: bool,
    window: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StftSettings {
    n_fft: usize,
    hop_length: usize,
    #[serde(default = "default_true")]
    center_padding: bool,
}

fn default_true() -> bool {
    true
}

impl From<StftSettings> for StftConfig {
    fn from(s: StftSettings) -> Self {
        StftConfig::new(s.n_fft, s.hop_length, s.center_padding)
            .expect("invalid stft settings in config")
    }
}

impl From<StftConfig> for StftSettings {
    fn from(c: StftConfig) -> Self {
        StftSettings {
            n_fft: c.n_fft,
            hop_length: c.hop_length,
            center_padding: c.center_padding,
        }
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(2048, 512, true).unwrap()
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop_length: usize, center_padding: bool) -> Result<Self> {
        let window = hann_window(n_fft)?;
        Self::with_window(n_fft, hop_length, center_padding, window)
    }

    pub fn with_window(
        n_fft: usize,
        hop_length: usize,
        center_padding: bool,
        window: Vec<f64>,
    ) -> Result<Self> {
        if hop_length == 0 || hop_length > n_fft {
            return Err(Error::Argument(format!(
                "hop_length {hop_length} must satisfy 0 < hop <= n_fft ({n_fft})"
            )));
        }
        if window.len() != n_fft {
            return Err(Error::Argument(format!(
                "window length {} does not match n_fft {n_fft}",
                window.len()
            )));
        }
        if window.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Argument("window values must lie in [0, 1]".into()));
        }
        Ok(Self {
            n_fft,
            hop_length,
            center_padding,
            window,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn center_padding(&self) -> bool {
        self.center_padding
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided bin count `n_fft/2 + 1`.
    pub fn f_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count produced for an input of `len` samples.
    pub fn frames_for_len(&self, len: usize) -> Result<usize> {
        if len == 0 {
            return Err(Error::EmptyInput("cannot transform a zero-length signal".into()));
        }
        if self.center_padding {
            Ok(len / self.hop_length + 1)
        } else {
            if len < self.n_fft {
                return Err(Error::EmptyInput(format!(
                    "signal of {len} samples is shorter than n_fft {} without center padding",
                    self.n_fft
                )));
            }
            Ok((len - self.n_fft) / self.hop_length + 1)
        }
    }

    /// Start of frame `t` in padded coordinates (padded by n_fft/2 when centered).
    pub(crate) fn pad_amount(&self) -> usize {
        if self.center_padding {
            self.n_fft / 2
        } else {
            0
        }
    }
}

/// Complex one-sided STFT tensor, `C x T_f x F` row-major.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram<S: Scalar> {
    pub values: Vec<Complex<S>>,
    channels: usize,
    t_frames: usize,
    f_bins: usize,
    config: StftConfig,
    original_length: usize,
    sample_rate: u32,
}

impl<S: Scalar> ComplexSpectrogram<S> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn config(&self) -> &StftConfig {
        self.config_ref()
    }

    fn config_ref(&self) -> &StftConfig {
        &self.config
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn at(&self, c: usize, t: usize, f: usize) -> Complex<S> {
        self.values[(c * self.t_frames + t) * self.f_bins + f]
    }

    /// Build a spectrogram from raw values; used by the synthesis path.
    pub fn from_values(
        values: Vec<Complex<S>>,
        channels: usize,
        t_frames: usize,
        config: StftConfig,
        original_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let f_bins = config.f_bins();
        if values.len() != channels * t_frames * f_bins {
            return Err(Error::Shape(format!(
                "expected {} spectrogram values, got {}",
                channels * t_frames * f_bins,
                values.len()
            )));
        }
        Ok(Self {
            values,
            channels,
            t_frames,
            f_bins,
            config,
            original_length,
            sample_rate,
        })
    }
}

/// Reflect (mirror-without-repeat) index mapping for padding reads.
#[inline]
pub(crate) fn reflect_index(v: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = v % period;
    if m < 0 {
        m += period;
    }
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Memoized FFT plans, keyed by length and direction.
pub struct FftCache<S: Scalar> {
    planner: FftPlanner<S>,
    plans: HashMap<(usize, bool), Arc<dyn Fft<S>>>,
}

impl<S: Scalar> Default for FftCache<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> FftCache<S> {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        }
    }

    pub fn plan(&mut self, n: usize, forward: bool) -> Arc<dyn Fft<S>> {
        self.plans
            .entry((n, forward))
            .or_insert_with(|| {
                self.planner.plan_fft(
                    n,
                    if forward {
                        FftDirection::Forward
                    } else {
                        FftDirection::Inverse
                    },
                )
            })
            .clone()
    }
}

/// Unnormalized one-sided DFT of a real frame (length n -> n/2+1 bins).
pub(crate) fn rfft_onesided<S: Scalar>(frame: &[S], plan: &Arc<dyn Fft<S>>) -> Vec<Complex<S>> {
    let n = frame.len();
    let mut buf: Vec<Complex<S>> = frame.iter().map(|&v| Complex::new(v, S::zero())).collect();
    plan.process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Real synthesis from one-sided bins: Hermitian extension, unnormalized
/// inverse FFT, 1/n scaling, real part. Imaginary parts of the DC and Nyquist
/// bins are ignored (they cancel in the real projection).
pub(crate) fn irfft_real<S: Scalar>(
    bins: &[Complex<S>],
    n: usize,
    inverse_plan: &Arc<dyn Fft<S>>,
) -> Vec<S> {
    let f = n / 2 + 1;
    debug_assert_eq!(bins.len(), f);
    let mut full = vec![Complex::new(S::zero(), S::zero()); n];
    full[..f].copy_from_slice(bins);
    for k in 1..(n - n / 2) {
        full[n - k] = bins[k].conj();
    }
    inverse_plan.process(&mut full);
    let scale = S::one() / S::from64(n as f64);
    full.iter().map(|c| c.re * scale).collect()
}

/// Adjoint of [`rfft_onesided`] as a real-linear map: gradient w.r.t. the
/// one-sided bins back to gradient w.r.t. the time-domain frame.
pub(crate) fn rfft_onesided_adjoint<S: Scalar>(
    grad_bins: &[Complex<S>],
    n: usize,
    inverse_plan: &Arc<dyn Fft<S>>,
) -> Vec<S> {
    let f = n / 2 + 1;
    debug_assert_eq!(grad_bins.len(), f);
    let mut full = vec![Complex::new(S::zero(), S::zero()); n];
    full[..f].copy_from_slice(grad_bins);
    inverse_plan.process(&mut full);
    full.iter().map(|c| c.re).collect()
}

/// Adjoint of [`irfft_real`]: gradient w.r.t. the real output back to gradient
/// w.r.t. the one-sided bins.
pub(crate) fn irfft_real_adjoint<S: Scalar>(
    grad_time: &[S],
    n: usize,
    forward_plan: &Arc<dyn Fft<S>>,
) -> Vec<Complex<S>> {
    let f = n / 2 + 1;
    let mut buf: Vec<Complex<S>> = grad_time
        .iter()
        .map(|&v| Complex::new(v, S::zero()))
        .collect();
    forward_plan.process(&mut buf);
    let inv_n = S::one() / S::from64(n as f64);
    let two = S::from64(2.0);
    let mut out = Vec::with_capacity(f);
    for (k, z) in buf.iter().take(f).enumerate() {
        let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
        let c = if mirrored { two * inv_n } else { inv_n };
        let mut g = Complex::new(z.re * c, z.im * c);
        if !mirrored {
            g.im = S::zero();
        }
        out.push(g);
    }
    out
}

/// Forward STFT. One-sided, unnormalized, with reflect center-padding when
/// configured.
pub fn stft<S: Scalar>(w: &Waveform<S>, cfg: &StftConfig) -> Result<ComplexSpectrogram<S>> {
    let t_frames = cfg.frames_for_len(w.len())?;
    let f_bins = cfg.f_bins();
    let n = cfg.n_fft();
    let hop = cfg.hop_length();
    let pad = cfg.pad_amount();
    let window: Vec<S> = cfg.window().iter().map(|&v| S::from64(v)).collect();

    let mut cache = FftCache::new();
    let plan = cache.plan(n, true);

    let mut values = Vec::with_capacity(w.num_channels() * t_frames * f_bins);
    let mut frame = vec![S::zero(); n];
    for c in 0..w.num_channels() {
        let x = w.channel(c);
        for t in 0..t_frames {
            for (k, slot) in frame.iter_mut().enumerate() {
                let v = (t * hop + k) as isize - pad as isize;
                let sample = if v >= 0 && (v as usize) < x.len() {
                    x[v as usize]
                } else {
                    x[reflect_index(v, x.len())]
                };
                *slot = sample * window[k];
            }
            values.extend(rfft_onesided(&frame, &plan));
        }
    }
    ComplexSpectrogram::from_values(values, w.num_channels(), t_frames, cfg.clone(), w.len(), w.sample_rate())
}

/// Summed squared window coverage for a frame grid; shared by the inverse
/// transform and its adjoint.
pub(crate) fn ola_denominator(window: &[f64], hop: usize, t_frames: usize) -> Vec<f64> {
    let n = window.len();
    let padded_len = (t_frames - 1) * hop + n;
    let mut denom = vec![0.0f64; padded_len];
    for t in 0..t_frames {
        for (k, &wv) in window.iter().enumerate() {
            denom[t * hop + k] += wv * wv;
        }
    }
    denom
}

/// Inverse STFT via least-squares overlap-add. Output is trimmed to the
/// spectrogram's `original_length`.
pub fn istft<S: Scalar>(s: &ComplexSpectrogram<S>, cfg: &StftConfig) -> Result<Waveform<S>> {
    if s.config() != cfg {
        return Err(Error::Config(
            "spectrogram was produced with a different stft configuration".into(),
        ));
    }
    let n = cfg.n_fft();
    let hop = cfg.hop_length();
    let pad = cfg.pad_amount();
    let t_frames = s.t_frames();
    let f_bins = s.f_bins();
    let out_len = s.original_length();

    let denom = ola_denominator(cfg.window(), hop, t_frames);
    let padded_len = denom.len();
    if pad + out_len > padded_len {
        return Err(Error::Shape(format!(
            "spectrogram covers {padded_len} samples, cannot reconstruct {out_len} (+pad {pad})"
        )));
    }
    for (i, &d) in denom[pad..pad + out_len].iter().enumerate() {
        if d < 1e-10 {
            return Err(Error::DegenerateWindow(format!(
                "overlap-add coverage vanishes at sample {i}"
            )));
        }
    }

    let window: Vec<S> = cfg.window().iter().map(|&v| S::from64(v)).collect();
    let mut cache = FftCache::new();
    let plan = cache.plan(n, false);

    let mut channels = Vec::with_capacity(s.channels());
    for c in 0..s.channels() {
        let mut acc = vec![S::zero(); padded_len];
        for t in 0..t_frames {
            let at = (c * t_frames + t) * f_bins;
            let frame = irfft_real(&s.values[at..at + f_bins], n, &plan);
            for (k, &v) in frame.iter().enumerate() {
                acc[t * hop + k] += v * window[k];
            }
        }
        let row: Vec<S> = (0..out_len)
            .map(|i| acc[pad + i] / S::from64(denom[pad + i]))
            .collect();
        channels.push(row);
    }
    Waveform::new(s.sample_rate(), channels)
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank on the HTK scale, `n_mels x F` non-negative.
#[derive(Debug, Clone)]
pub struct MelFilterbank<S: Scalar> {
    pub n_mels: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
    weights: Vec<S>,
}

impl<S: Scalar> MelFilterbank<S> {
    pub fn f_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weight(&self, mel: usize, bin: usize) -> S {
        self.weights[mel * self.f_bins() + bin]
    }

    /// Project one magnitude frame (length F) onto the mel bands.
    pub fn project_frame(&self, mags: &[S]) -> Vec<S> {
        let f = self.f_bins();
        debug_assert_eq!(mags.len(), f);
        (0..self.n_mels)
            .map(|m| {
                let row = &self.weights[m * f..(m + 1) * f];
                row.iter().zip(mags).map(|(&w, &x)| w * x).sum()
            })
            .collect()
    }
}

/// Build a triangular filterbank with band edges equally spaced in mel.
pub fn mel_filterbank<S: Scalar>(
    n_fft: usize,
    n_mels: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank<S>> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 {
        return Err(Error::Argument("n_mels must be >= 1".into()));
    }
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::Argument(format!(
            "invalid frequency range [{f_min}, {f_max}] for nyquist {nyquist}"
        )));
    }
    let f_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..f_bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();

    let mut weights = vec![S::zero(); n_mels * f_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * f_bins..(m + 1) * f_bins];
        let mut any = false;
        for (k, &fk) in bin_hz.iter().enumerate() {
            let w = if fk > lo && fk < mid {
                (fk - lo) / (mid - lo)
            } else if (fk - mid).abs() < 1e-12 {
                1.0
            } else if fk > mid && fk < hi {
                (hi - fk) / (hi - mid)
            } else {
                0.0
            };
            if w > 0.0 {
                any = true;
            }
            row[k] = S::from64(w);
        }
        if !any {
            // Filter narrower than the bin spacing: pin it to the nearest bin
            // so every row keeps at least one positive entry.
            let nearest = bin_hz
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1 - mid).abs().partial_cmp(&(b.1 - mid).abs()).unwrap()
                })
                .map(|(k, _)| k)
                .unwrap();
            row[nearest] = S::one();
        }
    }
    Ok(MelFilterbank {
        n_mels,
        n_fft,
        sample_rate,
        weights,
    })
}

/// Magnitudes of a spectrogram channel as a `T_f x F` row-major buffer.
pub fn magnitudes<S: Scalar>(s: &ComplexSpectrogram<S>, channel: usize) -> Vec<S> {
    let t = s.t_frames();
    let f = s.f_bins();
    let base = channel * t * f;
    s.values[base..base + t * f].iter().map(|c| c.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_waveform(sr: u32, channels: usize, len: usize, seed: u64) -> Waveform<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        Waveform::new(sr, rows).unwrap()
    }

    #[test]
    fn hann_closed_form() {
        assert_eq!(hann_window(4).unwrap(), vec![0.0, 0.5, 1.0, 0.5]);
        assert_eq!(hann_window(2).unwrap(), vec![0.0, 1.0]);
        assert!(hann_window(1).is_err());
    }

    #[test]
    fn hann_squared_is_cola_at_quarter_hop() {
        // Sum of squared windows shifted by hop is constant in steady state.
        let n = 2048;
        let hop = 512;
        let w = hann_window(n).unwrap();
        let frames = 16;
        let denom = ola_denominator(&w, hop, frames);
        let steady = &denom[n..denom.len() - n];
        let first = steady[0];
        for &d in steady {
            assert!((d - first).abs() < 1e-9, "cola violated: {d} vs {first}");
        }
    }

    #[test]
    fn zero_waveform_gives_zero_spectrogram() {
        let w = Waveform::<f64>::silence(44100, 2, 4096);
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert!(s.values.iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn dc_signal_concentrates_in_bin_zero() {
        let cfg = StftConfig::default();
        let w = Waveform::from_mono(44100, vec![1.0f64; 8192]).unwrap();
        let s = stft(&w, &cfg).unwrap();
        // Interior frame: away from the reflect-padded edges.
        let t = s.t_frames() / 2;
        let dc = s.at(0, t, 0);
        // Sum of the periodic Hann window is n/2 = 1024.
        assert!((dc.re - 1024.0).abs() < 1e-9, "dc {dc}");
        assert!(dc.im.abs() < 1e-9);
        for f in 1..s.f_bins() {
            assert!(s.at(0, t, f).norm() < 1e-8, "bin {f} leaked");
        }
    }

    #[test]
    fn bin_aligned_sine_concentrates_with_hann_leakage() {
        let cfg = StftConfig::default();
        let sr = 44100u32;
        let bin = 86usize;
        let freq = bin as f64 * sr as f64 / 2048.0;
        let x: Vec<f64> = (0..sr as usize)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        let w = Waveform::from_mono(sr, x).unwrap();
        let s = stft(&w, &cfg).unwrap();
        let t = s.t_frames() / 2;
        let mag: Vec<f64> = (0..s.f_bins()).map(|f| s.at(0, t, f).norm()).collect();
        let peak = mag[bin];
        // Peak of a windowed full-scale sine: (sum of window)/2 = 512.
        assert!((peak - 512.0).abs() < 1.0, "peak {peak}");
        // Hann leakage: immediate neighbors at half the peak, rest negligible.
        assert!((mag[bin - 1] / peak - 0.5).abs() < 0.01);
        assert!((mag[bin + 1] / peak - 0.5).abs() < 0.01);
        for (f, &m) in mag.iter().enumerate() {
            if f + 2 < bin || f > bin + 2 {
                assert!(m / peak < 0.01, "unexpected leakage at {f}");
            }
        }
    }

    #[test]
    fn roundtrip_is_identity_within_1e6() {
        let cfg = StftConfig::default();
        let w = random_waveform(44100, 1, 44100, 3);
        let s = stft(&w, &cfg).unwrap();
        let back = istft(&s, &cfg).unwrap();
        assert_eq!(back.len(), w.len());
        let max_err = w
            .channel(0)
            .iter()
            .zip(back.channel(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "roundtrip error {max_err}");
    }

    #[test]
    fn roundtrip_of_shifted_signal() {
        let cfg = StftConfig::default();
        let base = random_waveform(44100, 1, 8192, 9);
        let mut shifted = vec![0.0f64];
        shifted.extend_from_slice(&base.channel(0)[..8191]);
        let w = Waveform::from_mono(44100, shifted).unwrap();
        let back = istft(&stft(&w, &cfg).unwrap(), &cfg).unwrap();
        let max_err = w
            .channel(0)
            .iter()
            .zip(back.channel(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6);
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let cfg = StftConfig::default();
        let w = Waveform::<f64>::silence(44100, 2, 9000);
        let s = stft(&w, &cfg).unwrap();
        let back = istft(&s, &cfg).unwrap();
        assert_eq!(back.len(), 9000);
        assert!(back.channel(0).iter().all(|&v| v == 0.0));
        assert!(back.channel(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn istft_rejects_mismatched_config() {
        let cfg = StftConfig::default();
        let other = StftConfig::new(1024, 256, true).unwrap();
        let w = random_waveform(44100, 1, 4096, 1);
        let s = stft(&w, &cfg).unwrap();
        match istft(&s, &other) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::new(512, 128, true).unwrap();
        let x = random_waveform(16000, 1, 4000, 21);
        let y = random_waveform(16000, 1, 4000, 22);
        let (a, b) = (0.7f64, -1.3f64);
        let combo = Waveform::from_mono(
            16000,
            x.channel(0)
                .iter()
                .zip(y.channel(0))
                .map(|(&xa, &ya)| a * xa + b * ya)
                .collect(),
        )
        .unwrap();
        let sx = stft(&x, &cfg).unwrap();
        let sy = stft(&y, &cfg).unwrap();
        let sc = stft(&combo, &cfg).unwrap();
        let max_err = sc
            .values
            .iter()
            .zip(sx.values.iter().zip(sy.values.iter()))
            .map(|(c, (xv, yv))| (c - (xv * a + yv * b)).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "linearity error {max_err}");
    }

    #[test]
    fn parseval_consistency_on_steady_frame() {
        // Energy of one windowed frame vs its spectrum.
        let n = 2048;
        let cfg = StftConfig::default();
        let w = random_waveform(44100, 1, 44100, 5);
        let s = stft(&w, &cfg).unwrap();
        let t = s.t_frames() / 2;
        let hop = cfg.hop_length();
        let pad = cfg.pad_amount();
        let window = cfg.window();
        let start = (t * hop) as isize - pad as isize;
        let mut time_energy = 0.0f64;
        for k in 0..n {
            let idx = start + k as isize;
            let v = w.channel(0)[idx as usize] * window[k];
            time_energy += v * v;
        }
        let mut spec_energy = 0.0f64;
        for f in 0..s.f_bins() {
            let m2 = s.at(0, t, f).norm_sqr();
            let c = if f == 0 || f == n / 2 { 1.0 } else { 2.0 };
            spec_energy += c * m2;
        }
        spec_energy /= n as f64;
        let rel = (time_energy - spec_energy).abs() / time_energy;
        assert!(rel < 1e-4, "parseval rel err {rel}");
    }

    #[test]
    fn mel_scale_reference_point() {
        let m = hz_to_mel(700.0);
        assert!((m - 2595.0 * 2f64.log10()).abs() < 1e-9);
        assert!((m - 781.17).abs() < 0.01);
        assert!((mel_to_hz(m) - 700.0).abs() < 1e-9);
    }

    #[test]
    fn single_mel_filter_is_a_triangle() {
        let fb = mel_filterbank::<f64>(512, 1, 16000, 0.0, 8000.0).unwrap();
        assert!(fb.weights().iter().all(|&w| w >= 0.0));
        assert!(fb.weights().iter().any(|&w| w > 0.0));
        // Peaks mid-band (in mel), rises then falls.
        let row: Vec<f64> = (0..fb.f_bins()).map(|k| fb.weight(0, k)).collect();
        let peak = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(peak > 0 && peak < fb.f_bins() - 1);
    }

    #[test]
    fn mel_coverage_between_fmin_fmax() {
        let fb = mel_filterbank::<f64>(1024, 40, 44100, 30.0, 16000.0).unwrap();
        let f_bins = fb.f_bins();
        for k in 0..f_bins {
            let fk = k as f64 * 44100.0 / 1024.0;
            if fk > 30.0 && fk < 16000.0 {
                let total: f64 = (0..fb.n_mels).map(|m| fb.weight(m, k)).sum();
                assert!(total > 0.0, "bin {k} ({fk} Hz) uncovered");
            }
        }
    }

    #[test]
    fn mel_rows_never_empty_even_when_narrow() {
        // Many mels over few bins forces the nearest-bin fallback.
        let fb = mel_filterbank::<f64>(64, 60, 8000, 0.0, 4000.0).unwrap();
        for m in 0..fb.n_mels {
            let any = (0..fb.f_bins()).any(|k| fb.weight(m, k) > 0.0);
            assert!(any, "row {m} empty");
        }
    }

    #[test]
    fn mel_rejects_bad_range() {
        assert!(mel_filterbank::<f64>(512, 10, 16000, 4000.0, 1000.0).is_err());
        assert!(mel_filterbank::<f64>(512, 10, 16000, 0.0, 9000.0).is_err());
    }

    #[test]
    fn empty_input_is_rejected() {
        let w = Waveform::<f64>::silence(44100, 1, 0);
        match stft(&w, &StftConfig::default()) {
            Err(Error::EmptyInput(_)) => {}
            other => panic!("expected empty-input error, got {other:?}"),
        }
    }
}
