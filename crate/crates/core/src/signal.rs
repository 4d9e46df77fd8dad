//! Signal preparation: resampling, length fitting, amplitude scaling,
//! demographic encoding and the lead-II feature vector.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::Sex;
use crate::error::{Error, Result};
use crate::seeds::rng_for;

/// Leads × samples.
pub type Signal = Vec<Vec<f64>>;

pub const N_LEAD2_SIGNAL_FEATURES: usize = 20;
pub const N_LEAD2_FEATURES: usize = 22;

pub const LEAD2_FEATURE_NAMES: [&str; N_LEAD2_FEATURES] = [
    "rr_mean",
    "rr_median",
    "sdnn",
    "rmssd",
    "pnn50",
    "rr_min",
    "rr_max",
    "hr_mean",
    "hr_std",
    "r_peak_count",
    "r_amp_mean",
    "r_amp_std",
    "energy",
    "zero_crossing_rate",
    "skewness",
    "kurtosis",
    "qrs_halfmax_width_mean",
    "qrs_halfmax_width_std",
    "baseline_power_ratio",
    "hf_power_ratio",
    "age_scaled",
    "sex_numeric",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub target_fs: f64,
    pub target_len: usize,
    pub age_scale_max: f64,
    /// Min-max over all leads together (true) or per lead.
    pub joint_normalization: bool,
    /// Index of lead II in multi-lead records.
    pub lead2_index: usize,
    pub rng_seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig { target_fs: 250.0, target_len: 4096, age_scale_max: 100.0, joint_normalization: true, lead2_index: 1, rng_seed: 0 }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fs > 0.0) || self.target_len == 0 || !(self.age_scale_max > 0.0) {
            return Err(Error::Config("prep: target_fs, target_len and age_scale_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub signal: Signal,
    pub age_scaled: f64,
    pub sex_onehot: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lead2Features {
    pub values: Vec<f64>,
    /// True when no usable R peaks were found and the HRV slots hold zeros.
    pub hrv_fallback: bool,
}

pub fn resample(signal: &[Vec<f64>], fs_in: f64, fs_out: f64) -> Result<Signal> {
    if !(fs_in > 0.0) || !(fs_out > 0.0) {
        return Err(Error::invalid("resample: sampling rates must be positive"));
    }
    signal.iter().map(|lead| resample_lead(lead, fs_in, fs_out)).collect()
}

fn resample_lead(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(format!("resample: need at least 2 samples, got {n}")));
    }
    if fs_in == fs_out {
        return Ok(x.to_vec());
    }
    let m = (n as f64 * fs_out / fs_in).round() as usize;
    let step = fs_in / fs_out;
    Ok((0..m)
        .map(|k| {
            let pos = (k as f64 * step).min((n - 1) as f64);
            let i = (pos.floor() as usize).min(n - 2);
            let t = pos - i as f64;
            x[i] + t * (x[i + 1] - x[i])
        })
        .collect())
}

pub fn fit_length<R: Rng + ?Sized>(signal: &[Vec<f64>], target_len: usize, rng: &mut R) -> Signal {
    let n = signal.first().map_or(0, Vec::len);
    if n == target_len {
        return signal.to_vec();
    }
    if n > target_len {
        let off = rng.random_range(0..=n - target_len);
        return signal.iter().map(|l| l[off..off + target_len].to_vec()).collect();
    }
    let deficit = target_len - n;
    let left = rng.random_range(0..=deficit);
    signal
        .iter()
        .map(|l| {
            let mut out = vec![0.0; target_len];
            out[left..left + l.len()].copy_from_slice(l);
            out
        })
        .collect()
}

fn minmax(values: &mut [f64], lo: f64, hi: f64) {
    if hi > lo {
        values.iter_mut().for_each(|v| *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0));
    } else {
        values.iter_mut().for_each(|v| *v = 0.5);
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Min-max scaling to [0, 1]; a constant signal maps to 0.5.
pub fn normalize_amplitude(signal: &[Vec<f64>], joint: bool) -> Result<Signal> {
    if signal.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("normalize_amplitude: non-finite sample"));
    }
    let mut out = signal.to_vec();
    if joint {
        let (lo, hi) = range(signal.iter().flatten().copied());
        out.iter_mut().for_each(|l| minmax(l, lo, hi));
    } else {
        for l in out.iter_mut() {
            let (lo, hi) = range(l.iter().copied());
            minmax(l, lo, hi);
        }
    }
    Ok(out)
}

pub fn encode_demographics(age: Option<f64>, sex: Sex, age_scale_max: f64) -> (f64, [f64; 3]) {
    let age_scaled = age.map_or(0.5, |a| (a / age_scale_max).clamp(0.0, 1.0));
    let onehot = match sex {
        Sex::Male => [1.0, 0.0, 0.0],
        Sex::Female => [0.0, 1.0, 0.0],
        Sex::Unknown => [0.0, 0.0, 1.0],
    };
    (age_scaled, onehot)
}

/// Scalar sex encoding for flat feature vectors: M = 1, F = 0, unknown = 0.5.
pub fn sex_numeric(sex: Sex) -> f64 {
    match sex {
        Sex::Male => 1.0,
        Sex::Female => 0.0,
        Sex::Unknown => 0.5,
    }
}

/// Full preparation of one record. The crop/pad stream is derived from
/// `(cfg.rng_seed, record_id)`, so results do not depend on processing order.
pub fn prepare_input(signal: &[Vec<f64>], fs: f64, age: Option<f64>, sex: Sex, record_id: &str, cfg: &PrepConfig) -> Result<ModelInput> {
    let resampled = resample(signal, fs, cfg.target_fs)?;
    let mut rng = rng_for(cfg.rng_seed, record_id);
    let fitted = fit_length(&resampled, cfg.target_len, &mut rng);
    let signal = normalize_amplitude(&fitted, cfg.joint_normalization)?;
    let (age_scaled, sex_onehot) = encode_demographics(age, sex, cfg.age_scale_max);
    Ok(ModelInput { signal, age_scaled, sex_onehot })
}

pub struct RawRecord<'a> {
    pub record_id: &'a str,
    pub signal: &'a [Vec<f64>],
    pub fs: f64,
    pub age: Option<f64>,
    pub sex: Sex,
}

pub fn prepare_many(records: &[RawRecord<'_>], cfg: &PrepConfig) -> Result<Vec<ModelInput>> {
    records.par_iter().map(|r| prepare_input(r.signal, r.fs, r.age, r.sex, r.record_id, cfg)).collect()
}

/// The 22-value vector: 20 lead-II signal features, scaled age, sex.
/// Features come from the resampled, uncropped, unnormalized lead.
pub fn lead2_feature_vector(signal: &[Vec<f64>], fs: f64, age: Option<f64>, sex: Sex, cfg: &PrepConfig) -> Result<Lead2Features> {
    let lead = signal
        .get(cfg.lead2_index)
        .or_else(|| if signal.len() == 1 { signal.first() } else { None })
        .ok_or_else(|| Error::invalid(format!("record has {} leads, lead II index is {}", signal.len(), cfg.lead2_index)))?;
    let resampled = resample_lead(lead, fs, cfg.target_fs)?;
    let mut f = extract_lead2_features(&resampled, cfg.target_fs)?;
    f.values.push(encode_demographics(age, sex, cfg.age_scale_max).0);
    f.values.push(sex_numeric(sex));
    Ok(f)
}

fn moving_max(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&j| x[j] <= x[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&j| j + half < i) {
            dq.pop_front();
        }
        out[i] = x[dq[0]];
    }
    out
}

/// R-peak indices: interior local maxima of `|x - mean|` at or above half the 2 s
/// moving maximum, at least 250 ms apart (the larger one wins).
pub fn detect_r_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let env: Vec<f64> = x.iter().map(|v| (v - mean).abs()).collect();
    let peak = env.iter().cloned().fold(0.0, f64::max);
    if peak <= 1e-12 {
        return Vec::new();
    }
    let mm = moving_max(&env, (fs as usize).max(1));
    let refractory = (0.25 * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if !(env[i] > env[i - 1] && env[i] >= env[i + 1]) || env[i] < 0.5 * mm[i] || env[i] <= 1e-12 {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if env[i] > env[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Spectral power fractions of the mean-removed signal: (0-0.5 Hz, above 40 Hz).
fn band_power_ratios(centered: &[f64], fs: f64) -> (f64, f64) {
    let n = centered.len();
    let mut buf: Vec<Complex<f64>> = centered.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut total, mut low, mut high) = (0.0, 0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        let f = k as f64 * fs / n as f64;
        total += p;
        if f <= 0.5 {
            low += p;
        }
        if f > 40.0 {
            high += p;
        }
    }
    if total > 0.0 {
        (low / total, high / total)
    } else {
        (0.0, 0.0)
    }
}

/// The 20 signal features of one lead sampled at `fs` (at least 2 s long).
pub fn extract_lead2_features(x: &[f64], fs: f64) -> Result<Lead2Features> {
    if !(fs > 0.0) || (x.len() as f64) < 2.0 * fs {
        return Err(Error::invalid(format!("lead II feature extraction needs at least 2 s of signal, got {} samples at {fs} Hz", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("lead II feature extraction: non-finite sample"));
    }
    let n = x.len();
    let peaks = detect_r_peaks(x, fs);
    let mut out = vec![0.0; N_LEAD2_SIGNAL_FEATURES];

    let hrv_fallback = peaks.len() < 2;
    if !hrv_fallback {
        let rr: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect();
        let (rr_mean, sdnn) = mean_std(&rr);
        let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
        let rmssd = if diffs.is_empty() { 0.0 } else { (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt() };
        let pnn50 = if diffs.is_empty() { 0.0 } else { diffs.iter().filter(|d| d.abs() > 0.05).count() as f64 / diffs.len() as f64 };
        let hr: Vec<f64> = rr.iter().map(|r| 60.0 / r).collect();
        let (hr_mean, hr_std) = mean_std(&hr);
        out[0] = rr_mean;
        out[1] = median(&rr);
        out[2] = sdnn;
        out[3] = rmssd;
        out[4] = pnn50;
        out[5] = rr.iter().cloned().fold(f64::INFINITY, f64::min);
        out[6] = rr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out[7] = hr_mean;
        out[8] = hr_std;
        out[9] = peaks.len() as f64;
    }

    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let base = median(x);
    let amps: Vec<f64> = peaks.iter().map(|&p| x[p] - base).collect();
    (out[10], out[11]) = mean_std(&amps);

    let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    out[12] = var;
    out[13] = centered.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count() as f64 / (n - 1) as f64;
    if var > 1e-24 {
        let sd = var.sqrt();
        out[14] = centered.iter().map(|v| (v / sd).powi(3)).sum::<f64>() / n as f64;
        out[15] = centered.iter().map(|v| (v / sd).powi(4)).sum::<f64>() / n as f64 - 3.0;
    }

    let widths: Vec<f64> = peaks
        .iter()
        .map(|&p| {
            let half = 0.5 * centered[p].abs();
            let mut l = p;
            while l > 0 && centered[l - 1].abs() >= half {
                l -= 1;
            }
            let mut r = p;
            while r + 1 < n && centered[r + 1].abs() >= half {
                r += 1;
            }
            (r - l + 1) as f64 / fs
        })
        .collect();
    (out[16], out[17]) = mean_std(&widths);
    (out[18], out[19]) = band_power_ratios(&centered, fs);

    debug_assert!(out.iter().all(|v| v.is_finite()));
    Ok(Lead2Features { values: out, hrv_fallback })
}
