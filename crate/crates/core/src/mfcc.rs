//! 13-coefficient MFCC front end for 16 kHz speech.
//!
//! Pre-emphasis 0.97, 25 ms Hamming window, 10 ms hop, 512-point magnitude
//! spectrum, 26 HTK-mel triangular filters over 0-8 kHz, natural log with a
//! 1e-10 floor, orthonormal DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const MFCC_COEFFS: usize = 13;
pub const MFCC_SAMPLE_RATE: u32 = 16_000;
pub const WIN_LEN: usize = 400;
pub const HOP_LEN: usize = 160;
pub const N_FFT: usize = 512;
pub const N_FILTERS: usize = 26;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum MfccError {
    #[error("MFCC input must be {MFCC_SAMPLE_RATE} Hz, got {0} Hz")]
    SampleRate(u32),
    #[error("need at least {WIN_LEN} samples, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    pub sample_rate: u32,
    /// One row per 10 ms hop.
    pub rows: Vec<[f32; MFCC_COEFFS]>,
}

impl MfccMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `1 + floor((n - 400) / 160)`, or 0 below one window.
pub fn frame_count(num_samples: usize) -> usize {
    if num_samples < WIN_LEN {
        0
    } else {
        1 + (num_samples - WIN_LEN) / HOP_LEN
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as `[filter][bin]` weights over `N_FFT/2 + 1` bins.
pub fn mel_filterbank() -> Vec<Vec<f64>> {
    let n_bins = N_FFT / 2 + 1;
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(MFCC_SAMPLE_RATE as f64 / 2.0));
    let bins: Vec<usize> = (0..N_FILTERS + 2)
        .map(|i| {
            let hz = mel_to_hz(lo + (hi - lo) * i as f64 / (N_FILTERS + 1) as f64);
            (((N_FFT + 1) as f64 * hz / MFCC_SAMPLE_RATE as f64).floor() as usize).min(n_bins - 1)
        })
        .collect();
    (0..N_FILTERS)
        .map(|m| {
            let (left, centre, right) = (bins[m], bins[m + 1], bins[m + 2]);
            let mut w = vec![0.0; n_bins];
            for (k, wk) in w.iter_mut().enumerate() {
                if k >= left && k < centre && centre > left {
                    *wk = (k - left) as f64 / (centre - left) as f64;
                } else if k >= centre && k < right && right > centre {
                    *wk = (right - k) as f64 / (right - centre) as f64;
                }
            }
            w
        })
        .collect()
}

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Orthonormal DCT-II basis, `[coefficient][input]`.
fn dct_basis(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
            (0..n_in).map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos()).collect()
        })
        .collect()
}

/// Reusable extractor holding the FFT plan and filter tables.
pub struct MfccExtractor {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Each filter's first nonzero bin and its weights from there on.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<Vec<f64>>,
}

impl Default for MfccExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl MfccExtractor {
    pub fn new() -> Self {
        MfccExtractor {
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            window: hamming(WIN_LEN),
            filters: mel_filterbank()
                .into_iter()
                .map(|w| {
                    let first = w.iter().position(|&x| x != 0.0).unwrap_or(0);
                    let last = w.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
                    (first, w[first..last.max(first)].to_vec())
                })
                .collect(),
            dct: dct_basis(N_FILTERS, MFCC_COEFFS),
        }
    }

    pub fn extract(&self, samples: &[f32], sample_rate: u32) -> Result<MfccMatrix, MfccError> {
        if sample_rate != MFCC_SAMPLE_RATE {
            return Err(MfccError::SampleRate(sample_rate));
        }
        let t = frame_count(samples.len());
        if t == 0 {
            return Err(MfccError::TooShort(samples.len()));
        }
        let emphasized: Vec<f64> = (0..samples.len())
            .map(|i| {
                let x = samples[i] as f64;
                if i == 0 {
                    x
                } else {
                    x - PRE_EMPHASIS * samples[i - 1] as f64
                }
            })
            .collect();

        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut magnitude = [0.0f64; N_FFT / 2 + 1];
        let mut log_energies = [0.0f64; N_FILTERS];
        let mut rows = Vec::with_capacity(t);
        for f in 0..t {
            let frame = &emphasized[f * HOP_LEN..f * HOP_LEN + WIN_LEN];
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(if i < WIN_LEN { frame[i] * self.window[i] } else { 0.0 }, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in magnitude.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (m, (first, weights)) in self.filters.iter().enumerate() {
                let e: f64 = weights.iter().zip(&magnitude[*first..]).map(|(w, x)| w * x).sum();
                log_energies[m] = e.max(LOG_FLOOR).ln();
            }
            let mut row = [0f32; MFCC_COEFFS];
            for (k, basis) in self.dct.iter().enumerate() {
                row[k] = basis.iter().zip(&log_energies).map(|(b, e)| b * e).sum::<f64>() as f32;
            }
            rows.push(row);
        }
        Ok(MfccMatrix { sample_rate, rows })
    }
}

pub fn extract_mfcc(samples: &[f32], sample_rate: u32) -> Result<MfccMatrix, MfccError> {
    MfccExtractor::new().extract(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of the textbook pipeline with a naive DFT.
    fn reference_mfcc(samples: &[f32]) -> Vec<[f64; 13]> {
        let x: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
        let mut y = vec![x[0]];
        for i in 1..x.len() {
            y.push(x[i] - 0.97 * x[i - 1]);
        }
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let points: Vec<usize> =
            (0..28).map(|i| (513.0 * inv(mel(8000.0) * i as f64 / 27.0) / 16000.0).floor() as usize).collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start + 400 <= y.len() {
            let frame: Vec<f64> =
                (0..400).map(|n| y[start + n] * (0.54 - 0.46 * (2.0 * PI * n as f64 / 399.0).cos())).collect();
            let mag: Vec<f64> = (0..257)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in frame.iter().enumerate() {
                        let a = -2.0 * PI * (k * n) as f64 / 512.0;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            let mut fb = [0.0; 26];
            for m in 0..26 {
                let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
                let mut e = 0.0;
                for (k, v) in mag.iter().enumerate() {
                    if k >= l && k < c {
                        e += v * (k - l) as f64 / (c - l) as f64;
                    } else if k >= c && k < r {
                        e += v * (r - k) as f64 / (r - c) as f64;
                    }
                }
                fb[m] = e.max(1e-10).ln();
            }
            let mut row = [0.0; 13];
            for (k, r) in row.iter_mut().enumerate() {
                let s: f64 = (0..26).map(|n| fb[n] * (PI * k as f64 * (2 * n + 1) as f64 / 52.0).cos()).sum();
                *r = s * if k == 0 { (1.0f64 / 26.0).sqrt() } else { (2.0f64 / 26.0).sqrt() };
            }
            out.push(row);
            start += 160;
        }
        out
    }

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f32> {
        (0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32).collect()
    }

    #[test]
    fn one_second_gives_98_rows() {
        let m = extract_mfcc(&vec![0.0; 16000], 16000).unwrap();
        assert_eq!(m.len(), 98);
    }

    #[test]
    fn rejects_other_rates_and_short_input() {
        assert_eq!(extract_mfcc(&[0.0; 800], 8000), Err(MfccError::SampleRate(8000)));
        assert_eq!(extract_mfcc(&[0.0; 399], 16000), Err(MfccError::TooShort(399)));
    }

    #[test]
    fn matches_naive_reference() {
        let mut x = sine(440.0, 0.5, 2400);
        for (i, v) in x.iter_mut().enumerate() {
            *v += 0.1 * ((i * 7919 % 113) as f32 / 113.0 - 0.5);
        }
        let ours = extract_mfcc(&x, 16000).unwrap();
        let reference = reference_mfcc(&x);
        assert_eq!(ours.len(), reference.len());
        for (a, b) in ours.rows.iter().zip(&reference) {
            for k in 0..13 {
                assert!((a[k] as f64 - b[k]).abs() < 1e-3 * (1.0 + b[k].abs()), "{} vs {}", a[k], b[k]);
            }
        }
    }

    #[test]
    fn silence_rows_are_constant_and_quieter_than_a_tone() {
        let silence = extract_mfcc(&vec![0.0; 8000], 16000).unwrap();
        assert!(silence.rows.windows(2).all(|w| w[0] == w[1]));
        let tone = extract_mfcc(&sine(440.0, 0.5, 8000), 16000).unwrap();
        for (t, s) in tone.rows.iter().zip(&silence.rows) {
            assert!(t[0] > s[0]);
        }
    }

    #[test]
    fn filterbank_edges() {
        let fb = mel_filterbank();
        assert_eq!(fb.len(), 26);
        assert!(fb.iter().all(|f| f.len() == 257 && f.iter().any(|&w| w > 0.0)));
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }
}
