//! Log-mel filter banks, speed perturbation and WAV IO.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use las_core::numerics::Tensor;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform { samples, sample_rate })
    }
}

/// `frames` is `T × D`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub frames: Tensor,
    /// Seconds between frame starts.
    pub frame_shift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbankConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    pub num_mel_bins: usize,
    pub low_freq: f64,
    /// Upper band edge; `None` means Nyquist.
    pub high_freq: Option<f64>,
    /// Natural-log floor.
    pub log_floor: f64,
    /// Per-utterance mean and variance normalization.
    pub cmvn: bool,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            window_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            num_mel_bins: 40,
            low_freq: 20.0,
            high_freq: None,
            log_floor: (1e-10f64).ln(),
            cmvn: false,
        }
    }
}

impl FbankConfig {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let high = self.high_freq.unwrap_or(nyquist);
        if self.window_len(sample_rate) == 0 || self.hop_len(sample_rate) == 0 {
            return Err(Error::invalid("window and hop must span at least one sample"));
        }
        if self.num_mel_bins == 0 {
            return Err(Error::invalid("num_mel_bins must be positive"));
        }
        if !(0.0 <= self.low_freq && self.low_freq < high && high <= nyquist) {
            return Err(Error::invalid(format!("mel band {}..{high} Hz is not inside 0..{nyquist} Hz", self.low_freq)));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::invalid("preemphasis must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `1 + ⌊(n − window) / hop⌋`, or `None` when `n < window`.
pub fn frame_count(n: usize, window: usize, hop: usize) -> Option<usize> {
    if n < window || hop == 0 {
        return None;
    }
    Some(1 + (n - window) / hop)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Triangular HTK mel filters over the `n_fft / 2 + 1` magnitude bins,
/// one row per filter.
pub fn mel_filterbank(num_bins: usize, n_fft: usize, sample_rate: u32, low: f64, high: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(low), hz_to_mel(high));
    let step = (hi - lo) / (num_bins + 1) as f64;
    let bins = n_fft / 2 + 1;
    (0..num_bins)
        .map(|m| {
            let (left, center, right) = (lo + m as f64 * step, lo + (m + 1) as f64 * step, lo + (m + 2) as f64 * step);
            (0..bins)
                .map(|k| {
                    let mel = hz_to_mel(k as f64 * sample_rate as f64 / n_fft as f64);
                    if mel <= left || mel >= right {
                        0.0
                    } else if mel <= center {
                        (mel - left) / (center - left)
                    } else {
                        (right - mel) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// `|X_k|` for `k = 0 ..= n_fft / 2` of `frame` zero-padded to `n_fft`.
pub fn magnitude_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    if frame.len() > n_fft || n_fft == 0 {
        return Err(Error::invalid(format!("frame of {} samples does not fit FFT size {n_fft}", frame.len())));
    }
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    fft.process(&mut buf);
    Ok(buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect())
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()).collect()
}

pub fn compute_fbank(wave: &Waveform, cfg: &FbankConfig) -> Result<FeatureSequence> {
    cfg.validate(wave.sample_rate)?;
    let sr = wave.sample_rate;
    let window = cfg.window_len(sr);
    let hop = cfg.hop_len(sr);
    let t = frame_count(wave.samples.len(), window, hop)
        .ok_or(Error::InsufficientSamples { got: wave.samples.len(), window })?;
    let n_fft = window.next_power_of_two();
    let high = cfg.high_freq.unwrap_or(sr as f64 / 2.0);
    let bank = mel_filterbank(cfg.num_mel_bins, n_fft, sr, cfg.low_freq, high);
    let taper = hamming(window);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let d = cfg.num_mel_bins;
    let mut out = Vec::with_capacity(t * d);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..t {
        let x = &wave.samples[f * hop..f * hop + window];
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = if j < window {
                let prev = if j == 0 { x[0] } else { x[j - 1] };
                Complex::new((x[j] - cfg.preemphasis * prev) * taper[j], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for filter in &bank {
            let e: f64 = filter.iter().zip(&buf).map(|(w, c)| w * c.norm()).sum();
            out.push(if e > 0.0 { e.ln().max(cfg.log_floor) } else { cfg.log_floor });
        }
    }
    if cfg.cmvn {
        normalize_utterance(&mut out, d);
    }
    Ok(FeatureSequence {
        id: String::new(),
        frames: Tensor::matrix(t, d, out)?,
        frame_shift: hop as f64 / sr as f64,
    })
}

/// Per-dimension zero mean and unit variance; constant dimensions are only
/// centred.
pub fn normalize_utterance(data: &mut [f64], dim: usize) {
    let t = data.len() / dim;
    for k in 0..dim {
        let mean = (0..t).map(|i| data[i * dim + k]).sum::<f64>() / t as f64;
        let var = (0..t).map(|i| (data[i * dim + k] - mean).powi(2)).sum::<f64>() / t as f64;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for i in 0..t {
            data[i * dim + k] = (data[i * dim + k] - mean) * scale;
        }
    }
}

/// Resamples to `round(n / factor)` samples by linear interpolation at
/// positions `i · factor`. The sample rate is kept, so pitch shifts with
/// tempo.
pub fn speed_perturb(wave: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("speed factor must be positive, got {factor}")));
    }
    if factor == 1.0 {
        return Ok(wave.clone());
    }
    let x = &wave.samples;
    let n = (x.len() as f64 / factor).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let pos = i as f64 * factor;
            let j = pos.floor() as usize;
            if j + 1 >= x.len() {
                return x[x.len() - 1];
            }
            let frac = pos - j as f64;
            x[j] * (1.0 - frac) + x[j + 1] * frac
        })
        .collect();
    Ok(Waveform { samples, sample_rate: wave.sample_rate })
}

/// 16-bit PCM mono WAV, scaled by `1 / 32768`.
pub fn read_audio(path: &Path) -> Result<Waveform> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut reader = hound::WavReader::new(BufReader::new(file)).map_err(|e| Error::format(&ctx, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::format(
            &ctx,
            format!("need 16-bit PCM mono, got {} channel(s) of {}-bit {:?}", spec.channels, spec.bits_per_sample, spec.sample_format),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(&ctx, e.to_string()))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Inverse of [`read_audio`], rounding and saturating to 16 bits.
pub fn write_audio(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let ctx = path.display().to_string();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::format(&ctx, e.to_string()))?;
    for &s in &wave.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| Error::format(&ctx, e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::format(&ctx, e.to_string()))
}
