//! WAV file I/O and the canonical in-memory waveform representation.
//!
//! Supports RIFF/WAVE little-endian containers with fmt tag 1 (integer PCM,
//! 16 or 24 bit) and fmt tag 3 (IEEE float 32). Integer samples are scaled to
//! [-1, 1] by `2^(bits-1)`; float samples pass through bit-exactly. No
//! resampling happens here.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Multi-channel time-domain audio. Channel rows all share the same length
/// and every sample is finite; these invariants are enforced on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<S: Scalar> {
    sample_rate: u32,
    channels: Vec<Vec<S>>,
}

impl<S: Scalar> Waveform<S> {
    pub fn new(sample_rate: u32, channels: Vec<Vec<S>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample_rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::Argument("waveform needs at least one channel".into()));
        }
        let len = channels[0].len();
        for (c, row) in channels.iter().enumerate() {
            if row.len() != len {
                return Err(Error::Shape(format!(
                    "channel {c} has {} samples, expected {len}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("channel {c} contains non-finite samples")));
            }
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn from_mono(sample_rate: u32, samples: Vec<S>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    /// All-zero waveform with the given geometry.
    pub fn silence(sample_rate: u32, num_channels: usize, len: usize) -> Self {
        Self {
            sample_rate,
            channels: vec![vec![S::zero(); len]; num_channels],
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of frames (samples per channel), the T in C x T.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[S] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<S>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<S>> {
        self.channels
    }

    /// Largest absolute sample value across all channels.
    pub fn peak(&self) -> S {
        let mut p = S::zero();
        for row in &self.channels {
            for &v in row {
                let a = v.abs();
                if a > p {
                    p = a;
                }
            }
        }
        p
    }

    /// Extract `[start, start+len)` frames from every channel, zero-padding
    /// past the end.
    pub fn slice_padded(&self, start: usize, len: usize) -> Self {
        let channels = self
            .channels
            .iter()
            .map(|row| {
                let mut out = vec![S::zero(); len];
                if start < row.len() {
                    let n = (row.len() - start).min(len);
                    out[..n].copy_from_slice(&row[start..start + n]);
                }
                out
            })
            .collect();
        Self {
            sample_rate: self.sample_rate,
            channels,
        }
    }

    /// Map every sample in place. The caller keeps outputs finite.
    pub(crate) fn map_in_place(&mut self, f: impl Fn(S) -> S) {
        for row in &mut self.channels {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        }
    }

    pub(crate) fn channels_mut(&mut self) -> &mut Vec<Vec<S>> {
        &mut self.channels
    }
}

/// Sample encodings supported by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Header facts without decoding the payload; used by dataset scanning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: usize,
    pub sample_rate: u32,
    pub frames: usize,
}

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

struct RawWav {
    format_tag: u16,
    channels: usize,
    sample_rate: u32,
    bits_per_sample: u16,
    data: Vec<u8>,
}

fn le_u16(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| Error::Corrupt("unexpected end of file".into()))
}

fn le_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::Corrupt("unexpected end of file".into()))
}

fn parse_wav(bytes: &[u8]) -> Result<RawWav> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, usize, u32, u16)> = None;
    let mut data: Option<Vec<u8>> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4)? as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too small".into()));
                }
                let format_tag = le_u16(bytes, body)?;
                let channels = le_u16(bytes, body + 2)? as usize;
                let sample_rate = le_u32(bytes, body + 4)?;
                let bits = le_u16(bytes, body + 14)?;
                fmt = Some((format_tag, channels, sample_rate, bits));
            }
            b"data" => {
                let chunk = bytes
                    .get(body..body + size)
                    .ok_or_else(|| Error::Corrupt("data chunk truncated".into()))?;
                data = Some(chunk.to_vec());
            }
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body + size + (size & 1);
    }
    let (format_tag, channels, sample_rate, bits_per_sample) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if channels == 0 {
        return Err(Error::Format("fmt declares zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Format("fmt declares zero sample rate".into()));
    }
    Ok(RawWav {
        format_tag,
        channels,
        sample_rate,
        bits_per_sample,
        data,
    })
}

/// Read the header of a WAV file without decoding samples.
pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = parse_wav(&bytes)?;
    let bytes_per_sample = (raw.bits_per_sample as usize) / 8;
    if bytes_per_sample == 0 {
        return Err(Error::Format("zero bits per sample".into()));
    }
    Ok(WavInfo {
        channels: raw.channels,
        sample_rate: raw.sample_rate,
        frames: raw.data.len() / (bytes_per_sample * raw.channels),
    })
}

/// Read a PCM or float WAV file into a [`Waveform`].
///
/// 16/24-bit integer PCM is scaled by `2^(bits-1)`; 32-bit float passes
/// through unchanged.
pub fn read_wav<S: Scalar>(path: &Path) -> Result<Waveform<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = parse_wav(&bytes)?;

    let decode: fn(&[u8]) -> S = match (raw.format_tag, raw.bits_per_sample) {
        (FMT_PCM, 16) => |b| {
            let v = i16::from_le_bytes([b[0], b[1]]);
            S::from64(v as f64 / 32768.0)
        },
        (FMT_PCM, 24) => |b| {
            // Sign-extend the 24-bit little-endian value.
            let v = ((b[2] as i32) << 24 | (b[1] as i32) << 16 | (b[0] as i32) << 8) >> 8;
            S::from64(v as f64 / 8388608.0)
        },
        (FMT_IEEE_FLOAT, 32) => |b| {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            S::from64(v as f64)
        },
        (tag, bits) => {
            return Err(Error::Unsupported(format!(
                "wav format tag {tag} at {bits} bits per sample"
            )))
        }
    };

    let bps = (raw.bits_per_sample / 8) as usize;
    let frame_bytes = bps * raw.channels;
    if raw.data.len() % frame_bytes != 0 {
        return Err(Error::Corrupt(format!(
            "data chunk length {} is not a whole number of {}-byte frames",
            raw.data.len(),
            frame_bytes
        )));
    }
    let frames = raw.data.len() / frame_bytes;
    let mut channels = vec![Vec::with_capacity(frames); raw.channels];
    for f in 0..frames {
        for (c, row) in channels.iter_mut().enumerate() {
            let at = f * frame_bytes + c * bps;
            row.push(decode(&raw.data[at..at + bps]));
        }
    }
    Waveform::new(raw.sample_rate, channels)
}

/// Round half away from zero, after clamping to [-1, 1].
fn pcm16_code<S: Scalar>(v: S) -> i16 {
    let x = v.to64().clamp(-1.0, 1.0) * 32768.0;
    let r = if x >= 0.0 { (x + 0.5).floor() } else { (x - 0.5).ceil() };
    r.clamp(-32768.0, 32767.0) as i16
}

/// Write a [`Waveform`] as a RIFF/WAVE file.
pub fn write_wav<S: Scalar>(path: &Path, w: &Waveform<S>, encoding: WavEncoding) -> Result<()> {
    let channels = w.num_channels();
    let frames = w.len();
    let (format_tag, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (FMT_PCM, 16),
        WavEncoding::Float32 => (FMT_IEEE_FLOAT, 32),
    };
    let bps = (bits / 8) as usize;
    let block_align = (channels * bps) as u16;
    let byte_rate = w.sample_rate() * block_align as u32;
    let data_len = frames * channels * bps;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format_tag.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    for f in 0..frames {
        for c in 0..channels {
            let v = w.channel(c)[f];
            match encoding {
                WavEncoding::Pcm16 => out.extend_from_slice(&pcm16_code(v).to_le_bytes()),
                WavEncoding::Float32 => {
                    out.extend_from_slice(&(v.to64() as f32).to_le_bytes())
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the tempdir so the file survives the test body.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn full_scale_pcm16_reads_as_minus_one() {
        // Hand-built mono 16-bit file whose single sample is -32768.
        let path = tmp("fs.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 2).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&88200u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&(-32768i16).to_le_bytes());
        fs::write(&path, bytes).unwrap();

        let w: Waveform<f64> = read_wav(&path).unwrap();
        assert_eq!(w.num_channels(), 1);
        assert_eq!(w.len(), 1);
        assert_eq!(w.channel(0)[0], -1.0);
    }

    #[test]
    fn float32_stereo_passthrough() {
        let path = tmp("f32.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let left: Vec<f32> = (0..441).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let right: Vec<f32> = (0..441).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::new(44100, vec![left.clone(), right.clone()]).unwrap();
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let back: Waveform<f32> = read_wav(&path).unwrap();
        assert_eq!(back.num_channels(), 2);
        assert_eq!(back.len(), 441);
        assert_eq!(back.sample_rate(), 44100);
        assert_eq!(back.channel(0), &left[..]);
        assert_eq!(back.channel(1), &right[..]);
    }

    #[test]
    fn pcm16_clamps_and_rounds() {
        assert_eq!(pcm16_code(1.0f64), 32767); // clamp to max code
        assert_eq!(pcm16_code(0.0f64), 0);
        assert_eq!(pcm16_code(-1.0f64), -32768);
        assert_eq!(pcm16_code(2.5f64), 32767);
        // Half away from zero.
        assert_eq!(pcm16_code(0.5f64 / 32768.0), 1);
        assert_eq!(pcm16_code(-0.5f64 / 32768.0), -1);
    }

    #[test]
    fn pcm16_round_trip_error_bounded() {
        let path = tmp("p16.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::from_mono(48000, samples.clone()).unwrap();
        write_wav(&path, &w, WavEncoding::Pcm16).unwrap();
        let back: Waveform<f64> = read_wav(&path).unwrap();
        let max_err = samples
            .iter()
            .zip(back.channel(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "max_err {max_err}");
    }

    #[test]
    fn sine_float32_round_trip_exact() {
        let path = tmp("sine.wav");
        let sr = 44100u32;
        let samples: Vec<f32> = (0..sr as usize)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin())
            .collect();
        let w = Waveform::from_mono(sr, samples).unwrap();
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let back: Waveform<f32> = read_wav(&path).unwrap();
        assert_eq!(back.channel(0), w.channel(0));
    }

    #[test]
    fn pcm24_scaling() {
        // 24-bit full-scale negative -> -1.0.
        let path = tmp("p24.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 3).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&(44100u32 * 3).to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&24u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[0x00, 0x00, 0x80]); // -2^23
        fs::write(&path, bytes).unwrap();
        let w: Waveform<f64> = read_wav(&path).unwrap();
        assert_eq!(w.channel(0)[0], -1.0);
    }

    #[test]
    fn malformed_header_is_format_error() {
        let path = tmp("bad.wav");
        fs::write(&path, b"NOT A WAV FILE AT ALL......").unwrap();
        match read_wav::<f32>(&path) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_codec_is_reported() {
        let path = tmp("alaw.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 2).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&6u16.to_le_bytes()); // A-law
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8, 0u8]);
        fs::write(&path, bytes).unwrap();
        match read_wav::<f32>(&path) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_data_is_corrupt_error() {
        let path = tmp("trunc.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 100).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&88200u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&100u32.to_le_bytes()); // declares 100 bytes
        bytes.extend_from_slice(&[0u8; 10]); // provides 10
        fs::write(&path, bytes).unwrap();
        match read_wav::<f32>(&path) {
            Err(Error::Corrupt(_)) => {}
            other => panic!("expected corrupt error, got {other:?}"),
        }
    }

    #[test]
    fn wav_info_reads_header_only() {
        let path = tmp("info.wav");
        let w = Waveform::<f32>::silence(32000, 3, 123);
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let info = wav_info(&path).unwrap();
        assert_eq!(
            info,
            WavInfo {
                channels: 3,
                sample_rate: 32000,
                frames: 123
            }
        );
    }
}
