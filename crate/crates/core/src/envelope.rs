//! Collapse and revival times: asymptotic estimates, the conditions they are
//! expanded from, and measurement of the revival peak in a simulated trace.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::observables::TimeSeries;
use crate::sector::tunnel_frequency;
use crate::signal::{analytic_signal, moving_average};

/// A time scale from its large-⟨n⟩ expansion and from its defining condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub formula: f64,
    pub exact: f64,
}

/// `Ω_tun(m)` with `m` photons, i.e. evaluated at `N = m + 1`.
pub fn tunnel_at_photons(params: &SystemParams, m: f64) -> f64 {
    tunnel_frequency(params, m + 1.0)
}

fn check_mean(n_mean: f64) -> Result<()> {
    if !(n_mean.is_finite() && n_mean >= 1.0) {
        return Err(Error::param("n_mean", format!("must be >= 1, got {n_mean}")));
    }
    Ok(())
}

/// `t_c` from `(Ω_tun(n̄+√n̄) − Ω_tun(n̄−√n̄)) t_c = 1`.
pub fn collapse_time(params: &SystemParams, n_mean: f64) -> Result<Prediction> {
    check_mean(n_mean)?;
    let g = params.g();
    let d = params.tunnel_split() / g;
    let formula = (1.0 + (d * d + 0.75) / (2.0 * n_mean)) / g;
    let spread = n_mean.sqrt();
    let gap = tunnel_at_photons(params, n_mean + spread) - tunnel_at_photons(params, n_mean - spread);
    Ok(Prediction {
        formula,
        exact: 1.0 / gap,
    })
}

/// `t_r` from `(Ω_tun(n̄) − Ω_tun(n̄−1)) t_r = 2π`.
pub fn revival_time(params: &SystemParams, n_mean: f64) -> Result<Prediction> {
    check_mean(n_mean)?;
    let g = params.g();
    let d = params.tunnel_split() / g;
    let formula = 4.0 * PI * n_mean.sqrt() / g * (1.0 + (d * d + 0.5) / (2.0 * n_mean));
    let gap = tunnel_at_photons(params, n_mean) - tunnel_at_photons(params, n_mean - 1.0);
    Ok(Prediction {
        formula,
        exact: 2.0 * PI / gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevivalReport {
    pub t_c_formula: f64,
    pub t_c_exact: f64,
    pub t_r_formula: f64,
    pub t_r_exact: f64,
    /// Arg-max of the envelope after the collapse.
    pub t_r_measured: f64,
    /// Largest deviation from the mean within the first tunnel period.
    pub initial_amplitude: f64,
    /// Envelope at `t_r_measured`.
    pub revival_amplitude: f64,
    /// Smallest envelope value between the first period and the revival.
    pub collapse_minimum: f64,
    pub collapse_minimum_at: f64,
    /// `collapse_minimum < 0.2 · initial_amplitude`.
    pub collapsed: bool,
    pub envelope: TimeSeries,
}

/// Fraction of the initial amplitude below which the envelope counts as
/// collapsed.
pub const COLLAPSE_FRACTION: f64 = 0.2;

/// Envelope peaks below this fraction of the initial amplitude are noise.
pub const NOISE_FRACTION: f64 = 1e-3;

/// Required window length in units of the predicted revival time.
pub const MIN_COVERAGE: f64 = 1.5;

/// Smoothed analytic-signal magnitude of the mean-removed trace.
pub fn envelope(values: &[f64], width: usize) -> Vec<f64> {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - m).collect();
    let mag: Vec<f64> = analytic_signal(&centred).iter().map(|z| z.norm()).collect();
    moving_average(&mag, width)
}

/// Measures collapse and revival in a trace produced from a known field.
///
/// The mean photon number and parameters come from the series metadata.
pub fn detect_revival(series: &TimeSeries) -> Result<RevivalReport> {
    let field = series
        .meta
        .field
        .ok_or_else(|| Error::domain("revival detection needs the field that produced the trace"))?;
    let params = &series.meta.params;
    let n_mean = field.mean_photons();
    let tc = collapse_time(params, n_mean)?;
    let tr = revival_time(params, n_mean)?;

    let times = &series.times;
    let dt = series.step();
    if times.len() < 16 || dt <= 0.0 {
        return Err(Error::param("series", "needs at least 16 uniformly spaced samples"));
    }
    let end = *times.last().unwrap();
    if end - times[0] < MIN_COVERAGE * tr.exact {
        return Err(Error::param(
            "window",
            format!(
                "trace spans {:.4} but revival detection needs {:.4} ({MIN_COVERAGE} x predicted t_r)",
                end - times[0],
                MIN_COVERAGE * tr.exact
            ),
        ));
    }

    let period = 2.0 * PI / tunnel_at_photons(params, n_mean);
    let width = ((period / dt).round() as usize).max(1);
    let env = envelope(&series.values, width);

    let m = series.values.iter().sum::<f64>() / series.values.len() as f64;
    let first = times.partition_point(|&t| t <= times[0] + period).max(1);
    let initial = series.values[..first]
        .iter()
        .map(|v| (v - m).abs())
        .fold(0.0, f64::max);
    let scale = series.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if initial <= 1e-12 * scale.max(1e-300) || initial == 0.0 {
        return Err(Error::NoRevival("trace has no oscillation to collapse".into()));
    }

    let lo = times.partition_point(|&t| t <= times[0] + 3.0 * tc.exact);
    let hi = times.partition_point(|&t| t < end - period);
    if lo >= hi {
        return Err(Error::param("window", "no samples between the collapse and the end of the trace"));
    }
    let (peak_idx, peak) = (lo..hi)
        .map(|k| (k, env[k]))
        .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    if peak < NOISE_FRACTION * initial {
        return Err(Error::NoRevival(format!(
            "envelope peak {peak:.3e} is below the noise floor {:.3e}",
            NOISE_FRACTION * initial
        )));
    }

    let (min_idx, minimum) = (first..peak_idx.max(first + 1))
        .map(|k| (k, env[k]))
        .fold((first, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });

    Ok(RevivalReport {
        t_c_formula: tc.formula,
        t_c_exact: tc.exact,
        t_r_formula: tr.formula,
        t_r_exact: tr.exact,
        t_r_measured: times[peak_idx],
        initial_amplitude: initial,
        revival_amplitude: peak,
        collapse_minimum: minimum,
        collapse_minimum_at: times[min_idx],
        collapsed: minimum < COLLAPSE_FRACTION * initial,
        envelope: TimeSeries {
            times: times.clone(),
            values: env,
            label: "envelope".into(),
            meta: series.meta.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Internal, Well, C64, GAUGE};
    use crate::observables::{trace_series, FieldSpec, Observable, SeriesMeta, TimeGrid};
    use std::f64::consts::FRAC_PI_4;

    fn resonant(tunnel: f64) -> SystemParams {
        SystemParams::in_units_of_g(0.0, tunnel, FRAC_PI_4, -FRAC_PI_4).unwrap()
    }

    fn synthetic(values: impl Fn(f64) -> f64, tunnel: f64, end: f64) -> TimeSeries {
        let grid = TimeGrid::new(0.0, end, 4096).unwrap();
        let times = grid.times();
        TimeSeries {
            values: times.iter().map(|&t| values(t)).collect(),
            times,
            label: "x_mean".into(),
            meta: SeriesMeta {
                params: resonant(tunnel),
                field: Some(FieldSpec::coherent(C64::new(5.0, 0.0))),
                gauge: GAUGE,
                max_sector: 0,
                discarded_tail: 0.0,
            },
        }
    }

    #[test]
    fn collapse_leading_term() {
        let p = resonant(0.0);
        let tc = collapse_time(&p, 1e8).unwrap();
        assert!((tc.formula - 1.0).abs() < 1e-7);
        assert!((tc.exact - 1.0).abs() < 1e-3);
    }

    #[test]
    fn collapse_formula_arithmetic() {
        let tc = collapse_time(&resonant(2.0), 25.0).unwrap();
        assert!((tc.formula - 1.095).abs() < 1e-12);
    }

    #[test]
    fn collapse_exact_approaches_formula() {
        let tc = collapse_time(&resonant(2.0), 400.0).unwrap();
        assert!((tc.exact - tc.formula).abs() / tc.formula < 0.01);
    }

    #[test]
    fn revival_exact_at_zero_splitting() {
        let n: f64 = 25.0;
        let tr = revival_time(&resonant(0.0), n).unwrap();
        let want = 2.0 * PI / ((n + 1.0).sqrt() - n.sqrt());
        assert!((tr.exact - want).abs() < 1e-9, "{} {}", tr.exact, want);
    }

    #[test]
    fn revival_printed_values() {
        let tr2 = revival_time(&resonant(2.0), 25.0).unwrap();
        let tr5 = revival_time(&resonant(5.0), 25.0).unwrap();
        assert!((tr2.formula - 68.49).abs() < 0.01, "{}", tr2.formula);
        assert!((tr5.formula - 94.88).abs() < 0.01, "{}", tr5.formula);
        assert!((tr2.exact - 68.25).abs() < 0.01, "{}", tr2.exact);
        assert!((tr5.exact - 89.30).abs() < 0.01, "{}", tr5.exact);
        assert!((tr2.exact - 68.23).abs() / 68.23 < 0.1);
        assert!((tr5.exact - 86.70).abs() / 86.70 < 0.1);
    }

    #[test]
    fn small_mean_is_rejected() {
        assert!(collapse_time(&resonant(1.0), 0.5).is_err());
        assert!(revival_time(&resonant(1.0), f64::NAN).is_err());
    }

    #[test]
    fn formula_grows_with_splitting() {
        let mut last = 0.0;
        for k in 0..=100 {
            let tr = revival_time(&resonant(0.1 * k as f64), 25.0).unwrap();
            assert!(tr.formula > last);
            last = tr.formula;
        }
    }

    #[test]
    fn formula_and_exact_agree_asymptotically() {
        let p = resonant(0.0);
        for n in [25.0, 50.0, 100.0, 400.0, 1000.0, 2500.0] {
            let tr = revival_time(&p, n).unwrap();
            assert!((tr.formula - tr.exact).abs() / tr.exact < 5.0 / n);
        }
    }

    #[test]
    fn constant_series_has_no_revival() {
        let s = synthetic(|_| 0.7, 2.0, 150.0);
        assert!(matches!(detect_revival(&s), Err(Error::NoRevival(_))));
    }

    #[test]
    fn pure_sinusoid_does_not_collapse() {
        let s = synthetic(|t| (1.3 * t).cos(), 2.0, 150.0);
        let r = detect_revival(&s).unwrap();
        assert!(!r.collapsed);
        let mid = &r.envelope.values[500..3500];
        assert!(mid.iter().all(|v| (v - 1.0).abs() < 0.05));
    }

    #[test]
    fn short_window_is_rejected() {
        let s = synthetic(|t| t.cos(), 2.0, 80.0);
        assert!(matches!(detect_revival(&s), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn coherent_field_collapses_and_revives() {
        let p = resonant(2.0);
        let grid = TimeGrid::new(0.0, 120.0, 4096).unwrap();
        let field = FieldSpec::coherent(C64::new(5.0, 0.0));
        let tr = trace_series(&field, Well::Right, Internal::Excited, &p, &grid).unwrap();
        let r = detect_revival(&tr.series(Observable::MeanPosition)).unwrap();
        assert!(r.collapsed);
        assert!((r.t_r_measured - r.t_r_exact).abs() / r.t_r_exact < 0.1, "{r:?}");
    }
}
