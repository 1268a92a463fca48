//! Instantaneous internal π-pulses interleaved with free evolution, and the
//! preparation-fidelity score of a schedule.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::{BasisLabel, CompositeState, Ext, Internal, SystemParams, Well, C64};
use crate::observables::evolve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolStep {
    PiPulse,
    FreeEvolve { duration: f64, params: SystemParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub final_state: CompositeState,
    /// `|⟨target|ψ⟩|²`, insensitive to a global phase.
    pub fidelity: f64,
    /// Probability outside the sectors the target occupies.
    pub leakage: f64,
    /// State after each step, in order.
    pub trajectory: Vec<CompositeState>,
}

/// `|g⟩ → −i|e⟩`, `|e⟩ → −i|g⟩` with photon number and external state kept.
/// Amplitudes move between sectors because the excitation number changes.
pub fn apply_pi_pulse(state: &CompositeState) -> CompositeState {
    let zero = C64::new(0.0, 0.0);
    let minus_i = C64::new(0.0, -1.0);
    let mut ground = [zero; 2];
    let mut sectors: BTreeMap<usize, [C64; 4]> = BTreeMap::new();
    for (label, amp) in state.iter() {
        if amp == zero {
            continue;
        }
        let flipped = match label.internal() {
            Internal::Ground => Internal::Excited,
            Internal::Excited => Internal::Ground,
        };
        match BasisLabel::of(label.photons(), label.ext(), flipped) {
            BasisLabel::Ground(e) => ground[(e == Ext::Minus) as usize] = minus_i * amp,
            BasisLabel::Sector { n, slot } => {
                sectors.entry(n).or_insert([zero; 4])[slot as usize - 1] = minus_i * amp;
            }
        }
    }
    CompositeState::from_parts_unchecked(ground, sectors, state.discarded_tail())
}

fn occupied_sectors(state: &CompositeState) -> Vec<usize> {
    let mut out = Vec::new();
    if state.ground().iter().any(|z| z.norm_sqr() > 0.0) {
        out.push(0);
    }
    for (&n, a) in state.sectors() {
        if a.iter().any(|z| z.norm_sqr() > 0.0) {
            out.push(n);
        }
    }
    out
}

pub fn run_protocol(steps: &[ProtocolStep], initial: &CompositeState, target: &CompositeState) -> Result<ProtocolResult> {
    if steps.is_empty() {
        return Err(Error::param("steps", "protocol is empty"));
    }
    let mut state = initial.clone();
    let mut trajectory = Vec::with_capacity(steps.len());
    for (k, step) in steps.iter().enumerate() {
        state = match step {
            ProtocolStep::PiPulse => apply_pi_pulse(&state),
            ProtocolStep::FreeEvolve { duration, params } => {
                if !(duration.is_finite() && *duration >= 0.0) {
                    return Err(Error::param(
                        "duration",
                        format!("step {} has duration {duration}; must be finite and >= 0", k + 1),
                    ));
                }
                evolve(&state, params, *duration)?
            }
        };
        trajectory.push(state.clone());
    }
    let fidelity = target.inner(&state).norm_sqr();
    let inside: f64 = occupied_sectors(target)
        .into_iter()
        .map(|n| state.sector_weight(n))
        .sum();
    Ok(ProtocolResult {
        final_state: state,
        fidelity,
        leakage: (1.0 - inside).max(0.0),
        trajectory,
    })
}

/// A schedule with its starting state and the state it should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub steps: Vec<ProtocolStep>,
    pub initial: CompositeState,
    pub target: CompositeState,
}

/// Left-well preparation from `|0,−,g⟩`: pulse, free evolution for
/// `t = π/(√2Δ)` at `δ = −g²/Δ`, `κ = π/4`, pulse. Units of `g`.
pub fn left_well_protocol(tunnel_over_g: f64) -> Result<Preparation> {
    if !(tunnel_over_g.is_finite() && tunnel_over_g > 0.0) {
        return Err(Error::param("tunnel_over_g", format!("must be > 0, got {tunnel_over_g}")));
    }
    let params = SystemParams::in_units_of_g(-1.0 / tunnel_over_g, tunnel_over_g, FRAC_PI_4, -FRAC_PI_4)?;
    let steps = superposition_schedule(&params, PI)?;
    let initial = CompositeState::basis(BasisLabel::Ground(Ext::Minus));
    let lr = Well::Left.amplitudes_pm();
    let target = CompositeState::new(lr, BTreeMap::new())?;
    Ok(Preparation { steps, initial, target })
}

/// Pulse, free evolution for `t = θ/(√2Δ)`, pulse. In the far-detuned
/// regime this leaves `ρ_LL = 1/2 + (1 − cos θ)/4` starting from `|0,−,g⟩`
/// when `δ = −g²/Δ`.
pub fn superposition_schedule(base: &SystemParams, theta: f64) -> Result<Vec<ProtocolStep>> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::param("theta", format!("must lie in [0, pi], got {theta}")));
    }
    if base.tunnel_split() <= 0.0 {
        return Err(Error::param("tunnel_split", "schedule timing needs a nonzero splitting"));
    }
    Ok(vec![
        ProtocolStep::PiPulse,
        ProtocolStep::FreeEvolve {
            duration: theta / (SQRT_2 * base.tunnel_split()),
            params: *base,
        },
        ProtocolStep::PiPulse,
    ])
}

/// Parses a schedule, one step per line:
///
/// ```text
/// pulse
/// evolve <gt> <delta/g> <Delta/g> <kappa> <chi>
/// ```
///
/// Blank lines and text after `#` are ignored.
pub fn parse_schedule(text: &str) -> Result<Vec<ProtocolStep>> {
    let mut steps = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut tokens = tokens_with_columns(body);
        let Some((col, word)) = tokens.next() else {
            continue;
        };
        let err = |column: usize, message: String| Error::Parse {
            line: line_no,
            column,
            message,
        };
        match word {
            "pulse" => {
                if let Some((c, extra)) = tokens.next() {
                    return Err(err(c, format!("unexpected argument '{extra}' after pulse")));
                }
                steps.push(ProtocolStep::PiPulse);
            }
            "evolve" => {
                let mut vals = [0.0; 5];
                let names = ["gt", "delta/g", "Delta/g", "kappa", "chi"];
                let mut end_col = col + word.len();
                for (slot, name) in vals.iter_mut().zip(names) {
                    let (c, tok) = tokens
                        .next()
                        .ok_or_else(|| err(end_col + 1, format!("missing {name}")))?;
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| err(c, format!("{name}: '{tok}' is not a number")))?;
                    if !slot.is_finite() {
                        return Err(err(c, format!("{name} must be finite")));
                    }
                    end_col = c + tok.len();
                }
                if let Some((c, extra)) = tokens.next() {
                    return Err(err(c, format!("unexpected argument '{extra}'")));
                }
                if vals[0] < 0.0 {
                    return Err(err(col, format!("duration must be >= 0, got {}", vals[0])));
                }
                let params = SystemParams::in_units_of_g(vals[1], vals[2], vals[3], vals[4])
                    .map_err(|e| err(col, e.to_string()))?;
                steps.push(ProtocolStep::FreeEvolve {
                    duration: vals[0],
                    params,
                });
            }
            other => return Err(err(col, format!("unknown step '{other}' (expected pulse or evolve)"))),
        }
    }
    if steps.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "schedule contains no steps".into(),
        });
    }
    Ok(steps)
}

/// Whitespace-separated tokens with their 1-based columns.
pub(crate) fn tokens_with_columns(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let skip = rest.len() - rest.trim_start().len();
        offset += skip;
        rest = &rest[skip..];
        if rest.is_empty() {
            return None;
        }
        let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let tok = &rest[..len];
        let col = line[..offset].chars().count() + 1;
        offset += len;
        rest = &rest[len..];
        Some((col, tok))
    })
}
