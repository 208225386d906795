//! MFCC extraction: Hann window, power spectrum, HTK mel filterbank,
//! floored natural log, orthonormal DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub n_mels: usize,
    pub n_mfcc: usize,
    /// Forced FFT size; `None` picks the smallest power of two covering the window.
    pub fft_size: Option<usize>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            n_mfcc: 128,
            fft_size: None,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.n_mels == 0 || self.n_mfcc == 0 {
            return Err(AudioError::Config("n_mels and n_mfcc must be positive".into()));
        }
        if self.n_mfcc > self.n_mels {
            return Err(AudioError::Config(format!(
                "n_mfcc ({}) exceeds n_mels ({})",
                self.n_mfcc, self.n_mels
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(AudioError::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn fft_size_for(&self, window: usize) -> usize {
        self.fft_size.unwrap_or_else(|| window.next_power_of_two())
    }
}

/// One row per video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    rows: Vec<Vec<f64>>,
}

impl MfccMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, edges equally spaced on the HTK mel
/// scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `(first_bin, weights)` per filter.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: u32) -> Self {
        let nyquist = f64::from(sample_rate) / 2.0;
        let n_bins = fft_size / 2 + 1;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / fft_size as f64;

        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, mid, hi) = (e[0], e[1], e[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = ((f - lo) / (mid - lo)).min((hi - f) / (hi - mid));
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();

        Self {
            filters,
            centers_hz: edges[1..=n_mels].to_vec(),
            n_bins,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense weight of filter `m` at bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        let (first, w) = &self.filters[m];
        k.checked_sub(*first).and_then(|i| w.get(i)).copied().unwrap_or(0.0)
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Reusable extractor for one (window length, sample rate, config) triple.
pub(crate) struct MfccExtractor {
    config: MfccConfig,
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub(crate) fn new(window_len: usize, sample_rate: u32, config: MfccConfig) -> Result<Self, AudioError> {
        config.validate()?;
        let fft_size = config.fft_size_for(window_len);
        if fft_size < window_len {
            return Err(AudioError::Config(format!(
                "fft_size {fft_size} is shorter than the {window_len}-sample window"
            )));
        }
        // Periodic Hann.
        let window = (0..window_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window_len as f64).cos())
            .collect();
        Ok(Self {
            config,
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            window,
            filterbank: MelFilterbank::new(config.n_mels, fft_size, sample_rate),
            dct: dct_matrix(config.n_mfcc, config.n_mels),
        })
    }

    pub(crate) fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = s * w;
        }
        self.fft.process(&mut buf);
        buf[..self.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    pub(crate) fn mel_energies(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank.apply(&self.power_spectrum(frame))
    }

    pub(crate) fn coefficients(&self, frame: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .mel_energies(frame)
            .into_iter()
            .map(|e| e.max(self.config.log_floor).ln())
            .collect();
        self.dct
            .iter()
            .map(|basis| basis.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `n_out` rows of length `n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|i| scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

/// MFCCs of every window. All windows must share one length.
pub fn mfcc(windows: &[Vec<f64>], sample_rate: u32, config: &MfccConfig) -> Result<MfccMatrix, AudioError> {
    let len = windows
        .first()
        .map(Vec::len)
        .ok_or_else(|| AudioError::Config("no windows to analyse".into()))?;
    if len == 0 || windows.iter().any(|w| w.len() != len) {
        return Err(AudioError::Config("windows must be non-empty and equal length".into()));
    }
    let ex = MfccExtractor::new(len, sample_rate, *config)?;
    Ok(MfccMatrix::from_rows(windows.iter().map(|w| ex.coefficients(w)).collect()))
}

/// MFCCs of a single window.
pub fn mfcc_row(window: &[f64], sample_rate: u32, config: &MfccConfig) -> Result<Vec<f64>, AudioError> {
    Ok(MfccExtractor::new(window.len(), sample_rate, *config)?.coefficients(window))
}
