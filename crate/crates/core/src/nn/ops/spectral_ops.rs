//! STFT ops on the tape. Both transforms are linear maps, so their backward
//! passes are the exact adjoints (including window, overlap-add normalization
//! and reflect padding).
//!
//! Packed layout convention used throughout the crate: a `C`-channel complex
//! spectrogram is carried as `2C` real channels with channel `2c` holding the
//! real part of channel `c` and channel `2c+1` the imaginary part.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::spectral::{
    irfft_real, irfft_real_adjoint, ola_denominator, reflect_index, rfft_onesided,
    rfft_onesided_adjoint, FftCache, StftConfig,
};

impl<S: Scalar> Graph<S> {
    /// Forward STFT of `x [C, T]` into packed `[2C, T_f, F]`.
    pub fn stft(&mut self, x: Var, cfg: &StftConfig) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("stft input must be [C, T], got {shape:?}")));
        }
        let (channels, t_len) = (shape[0], shape[1]);
        let t_frames = cfg.frames_for_len(t_len)?;
        let f_bins = cfg.f_bins();
        let n = cfg.n_fft();
        let hop = cfg.hop_length();
        let pad = cfg.pad_amount();
        let window: Vec<S> = cfg.window().iter().map(|&v| S::from64(v)).collect();

        let mut cache = FftCache::new();
        let fwd = cache.plan(n, true);
        let inv = cache.plan(n, false);

        let xv = self.value(x);
        let plane = t_frames * f_bins;
        let mut value = vec![S::zero(); 2 * channels * plane];
        let mut frame = vec![S::zero(); n];
        for c in 0..channels {
            let row = &xv[c * t_len..(c + 1) * t_len];
            for t in 0..t_frames {
                for (k, slot) in frame.iter_mut().enumerate() {
                    let v = (t * hop + k) as isize - pad as isize;
                    let sample = if v >= 0 && (v as usize) < t_len {
                        row[v as usize]
                    } else {
                        row[reflect_index(v, t_len)]
                    };
                    *slot = sample * window[k];
                }
                let bins = rfft_onesided(&frame, &fwd);
                let re_base = (2 * c) * plane + t * f_bins;
                let im_base = (2 * c + 1) * plane + t * f_bins;
                for (f, z) in bins.iter().enumerate() {
                    value[re_base + f] = z.re;
                    value[im_base + f] = z.im;
                }
            }
        }

        let win = window;
        Ok(self.push(
            vec![2 * channels, t_frames, f_bins],
            value,
            vec![x.0],
            Box::new(move |ctx| {
                let g = ctx.grad;
                let mut dx = vec![S::zero(); channels * t_len];
                let mut gbins = vec![Complex::new(S::zero(), S::zero()); f_bins];
                for c in 0..channels {
                    let drow = &mut dx[c * t_len..(c + 1) * t_len];
                    for t in 0..t_frames {
                        let re_base = (2 * c) * plane + t * f_bins;
                        let im_base = (2 * c + 1) * plane + t * f_bins;
                        for (f, z) in gbins.iter_mut().enumerate() {
                            *z = Complex::new(g[re_base + f], g[im_base + f]);
                        }
                        let dframe = rfft_onesided_adjoint(&gbins, n, &inv);
                        for (k, &dv) in dframe.iter().enumerate() {
                            let v = (t * hop + k) as isize - pad as isize;
                            let target = if v >= 0 && (v as usize) < t_len {
                                v as usize
                            } else {
                                reflect_index(v, t_len)
                            };
                            drow[target] += dv * win[k];
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Inverse STFT of packed `[2C, T_f, F]` into `[C, original_len]` via
    /// least-squares overlap-add.
    pub fn istft(&mut self, x: Var, cfg: &StftConfig, original_len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] % 2 != 0 {
            return Err(Error::Shape(format!(
                "istft input must be packed [2C, T_f, F], got {shape:?}"
            )));
        }
        let f_bins = cfg.f_bins();
        if shape[2] != f_bins {
            return Err(Error::Config(format!(
                "istft: input has {} bins but config wants {f_bins}",
                shape[2]
            )));
        }
        let channels = shape[0] / 2;
        let t_frames = shape[1];
        let n = cfg.n_fft();
        let hop = cfg.hop_length();
        let pad = cfg.pad_amount();

        let denom64 = ola_denominator(cfg.window(), hop, t_frames);
        let padded_len = denom64.len();
        if pad + original_len > padded_len {
            return Err(Error::Shape(format!(
                "istft: {t_frames} frames cover {padded_len} samples, cannot produce {original_len}"
            )));
        }
        for (i, &d) in denom64[pad..pad + original_len].iter().enumerate() {
            if d < 1e-10 {
                return Err(Error::DegenerateWindow(format!(
                    "overlap-add coverage vanishes at sample {i}"
                )));
            }
        }
        let denom: Vec<S> = denom64.iter().map(|&v| S::from64(v)).collect();
        let window: Vec<S> = cfg.window().iter().map(|&v| S::from64(v)).collect();

        let mut cache = FftCache::new();
        let fwd = cache.plan(n, true);
        let inv = cache.plan(n, false);

        let xv = self.value(x);
        let plane = t_frames * f_bins;
        let mut value = vec![S::zero(); channels * original_len];
        let mut bins = vec![Complex::new(S::zero(), S::zero()); f_bins];
        for c in 0..channels {
            let mut acc = vec![S::zero(); padded_len];
            for t in 0..t_frames {
                let re_base = (2 * c) * plane + t * f_bins;
                let im_base = (2 * c + 1) * plane + t * f_bins;
                for (f, z) in bins.iter_mut().enumerate() {
                    *z = Complex::new(xv[re_base + f], xv[im_base + f]);
                }
                let frame = irfft_real(&bins, n, &inv);
                for (k, &v) in frame.iter().enumerate() {
                    acc[t * hop + k] += v * window[k];
                }
            }
            let out = &mut value[c * original_len..(c + 1) * original_len];
            for (i, o) in out.iter_mut().enumerate() {
                *o = acc[pad + i] / denom[pad + i];
            }
        }

        Ok(self.push(
            vec![channels, original_len],
            value,
            vec![x.0],
            Box::new(move |ctx| {
                let g = ctx.grad;
                let mut dx = vec![S::zero(); 2 * channels * plane];
                let mut gframe = vec![S::zero(); n];
                for c in 0..channels {
                    // Adjoint of crop + normalize: scatter normalized grads
                    // back onto the padded grid.
                    let mut acc = vec![S::zero(); padded_len];
                    let grow = &g[c * original_len..(c + 1) * original_len];
                    for (i, &gv) in grow.iter().enumerate() {
                        acc[pad + i] = gv / denom[pad + i];
                    }
                    for t in 0..t_frames {
                        for (k, slot) in gframe.iter_mut().enumerate() {
                            *slot = acc[t * hop + k] * window[k];
                        }
                        let dbins = irfft_real_adjoint(&gframe, n, &fwd);
                        let re_base = (2 * c) * plane + t * f_bins;
                        let im_base = (2 * c + 1) * plane + t * f_bins;
                        for (f, z) in dbins.iter().enumerate() {
                            dx[re_base + f] = z.re;
                            dx[im_base + f] = z.im;
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Magnitude of a packed complex tensor: `[2C, ...] -> [C, ...]`.
    pub fn complex_magnitude(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || shape[0] % 2 != 0 {
            return Err(Error::Shape(format!(
                "complex_magnitude wants a leading 2C axis, got {shape:?}"
            )));
        }
        let channels = shape[0] / 2;
        let plane: usize = shape[1..].iter().product();
        let xv = self.value(x);
        let mut value = vec![S::zero(); channels * plane];
        for c in 0..channels {
            for k in 0..plane {
                let re = xv[(2 * c) * plane + k];
                let im = xv[(2 * c + 1) * plane + k];
                value[c * plane + k] = (re * re + im * im).sqrt();
            }
        }
        let mut out_shape = shape.clone();
        out_shape[0] = channels;
        Ok(self.push(
            out_shape,
            value,
            vec![x.0],
            Box::new(move |ctx| {
                let xv = ctx.parents[0].data;
                let mut dx = vec![S::zero(); xv.len()];
                for c in 0..channels {
                    for k in 0..plane {
                        let mag = ctx.value[c * plane + k];
                        if mag > S::zero() {
                            let gv = ctx.grad[c * plane + k] / mag;
                            dx[(2 * c) * plane + k] = gv * xv[(2 * c) * plane + k];
                            dx[(2 * c + 1) * plane + k] = gv * xv[(2 * c + 1) * plane + k];
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}
