//! FFT utilities for uniformly sampled real traces: power spectra, spectral
//! peaks, the analytic signal and edge-aware smoothing.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::model::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

/// One-sided power spectrum of a mean-removed trace.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Angular frequency of each bin.
    pub omegas: Vec<f64>,
    /// `|X_k|²` per bin (one-sided, not doubled).
    pub power: Vec<f64>,
    /// Bin spacing in angular frequency.
    pub resolution: f64,
}

/// A local maximum of a [`Spectrum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Peak position refined by parabolic interpolation of log-power.
    pub omega: f64,
    pub power: f64,
    /// `power / max power`.
    pub relative: f64,
}

fn fft_in_place(buf: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    fft.process(buf);
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Full two-sided DFT of the mean-removed, windowed trace.
pub fn dft_mean_removed(samples: &[f64], window: Window) -> Vec<C64> {
    let n = samples.len();
    let m = mean(samples);
    let mut buf: Vec<C64> = samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let w = match window {
                Window::Rectangular => 1.0,
                Window::Hann => 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos(),
            };
            C64::new((x - m) * w, 0.0)
        })
        .collect();
    fft_in_place(&mut buf, false);
    buf
}

pub fn power_spectrum(samples: &[f64], dt: f64, window: Window) -> Spectrum {
    let n = samples.len();
    let x = dft_mean_removed(samples, window);
    let resolution = 2.0 * PI / (n as f64 * dt);
    let half = n / 2 + 1;
    Spectrum {
        omegas: (0..half).map(|k| k as f64 * resolution).collect(),
        power: x[..half].iter().map(|z| z.norm_sqr()).collect(),
        resolution,
    }
}

/// Local maxima whose power is at least `threshold` times the largest one,
/// strongest first.
pub fn spectral_peaks(spec: &Spectrum, threshold: f64) -> Vec<Peak> {
    let p = &spec.power;
    let top = p.iter().skip(1).cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for k in 1..p.len() {
        let left = p[k - 1];
        let right = if k + 1 < p.len() { p[k + 1] } else { 0.0 };
        if p[k] > left && p[k] >= right && p[k] >= threshold * top {
            let mut offset = 0.0;
            if k + 1 < p.len() && left > 0.0 && right > 0.0 {
                let (a, b, c) = (left.ln(), p[k].ln(), right.ln());
                let denom = a - 2.0 * b + c;
                if denom != 0.0 {
                    offset = 0.5 * (a - c) / denom;
                }
            }
            peaks.push(Peak {
                omega: (k as f64 + offset) * spec.resolution,
                power: p[k],
                relative: p[k] / top,
            });
        }
    }
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks
}

/// Analytic signal `x + i H[x]` built in the frequency domain.
pub fn analytic_signal(samples: &[f64]) -> Vec<C64> {
    let n = samples.len();
    let mut buf: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, false);
    for (k, z) in buf.iter_mut().enumerate() {
        let factor = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *z *= factor;
    }
    fft_in_place(&mut buf, true);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// Centered moving average; windows shrink at the edges instead of padding.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let n = values.len();
    let half = width.max(1) / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Time-domain variance of `samples`.
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_peak_of_a_cosine() {
        let dt = 0.05;
        let w0 = 2.3;
        let xs: Vec<f64> = (0..2048).map(|k| (w0 * k as f64 * dt).cos() + 0.2).collect();
        let spec = power_spectrum(&xs, dt, Window::Hann);
        let peaks = spectral_peaks(&spec, 0.01);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((peaks[0].omega - w0).abs() < 0.3 * spec.resolution);
    }

    #[test]
    fn analytic_signal_of_cosine_has_flat_magnitude() {
        let n = 1024;
        let xs: Vec<f64> = (0..n).map(|k| (2.0 * PI * 16.0 * k as f64 / n as f64).cos()).collect();
        let z = analytic_signal(&xs);
        for (k, zk) in z.iter().enumerate() {
            assert!((zk.re - xs[k]).abs() < 1e-12);
            assert!((zk.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_average_preserves_constants_at_edges() {
        let avg = moving_average(&[3.0; 10], 4);
        assert!(avg.iter().all(|v| (v - 3.0).abs() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parseval_matches_variance(xs in proptest::collection::vec(-1.0..1.0f64, 8..512)) {
                let x = dft_mean_removed(&xs, Window::Rectangular);
                let n = xs.len() as f64;
                let power: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / (n * n);
                prop_assert!((power - variance(&xs)).abs() < 1e-8);
            }
        }
    }
}
