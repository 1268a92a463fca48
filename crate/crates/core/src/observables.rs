//! State preparation, block-diagonal evolution, partial traces and traces of
//! ρ_LL, ρ_RR, ρ_ee and ⟨x⟩ over a time grid.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    basis_change_well, BasisLabel, CompositeState, Ext, Gauge, Internal, SystemParams, Well, C64,
    GAUGE,
};
use crate::sector::{eigenfrequencies, evolve_ground, SectorPropagator};

/// Default probability mass allowed outside the kept photon numbers.
pub const DEFAULT_TAIL: f64 = 1e-12;

/// Largest photon number a coherent field may be truncated at.
pub const MAX_PHOTONS: usize = 4096;

/// Default number of samples in a time window.
pub const DEFAULT_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Fock(usize),
    Coherent(C64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub truncation_tail: f64,
}

impl FieldSpec {
    pub fn fock(n: usize) -> Self {
        FieldSpec {
            kind: FieldKind::Fock(n),
            truncation_tail: DEFAULT_TAIL,
        }
    }

    pub fn coherent(alpha: C64) -> Self {
        FieldSpec {
            kind: FieldKind::Coherent(alpha),
            truncation_tail: DEFAULT_TAIL,
        }
    }

    pub fn with_tail(mut self, tail: f64) -> Self {
        self.truncation_tail = tail;
        self
    }

    /// Mean photon number `⟨n⟩`.
    pub fn mean_photons(&self) -> f64 {
        match self.kind {
            FieldKind::Fock(n) => n as f64,
            FieldKind::Coherent(a) => a.norm_sqr(),
        }
    }

    /// Photon-number amplitudes `c_0..=c_{n_max}` and the discarded tail mass.
    pub fn photon_amplitudes(&self) -> Result<(Vec<C64>, f64)> {
        match self.kind {
            FieldKind::Fock(n) => {
                let mut v = vec![C64::new(0.0, 0.0); n + 1];
                v[n] = C64::new(1.0, 0.0);
                Ok((v, 0.0))
            }
            FieldKind::Coherent(alpha) => coherent_amplitudes(alpha, self.truncation_tail),
        }
    }
}

fn coherent_amplitudes(alpha: C64, tail: f64) -> Result<(Vec<C64>, f64)> {
    if !(tail.is_finite() && tail > 0.0 && tail < 1.0) {
        return Err(Error::param("truncation_tail", format!("must be in (0, 1), got {tail}")));
    }
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::param("alpha", "must be finite"));
    }
    let mean = alpha.norm_sqr();
    if mean == 0.0 {
        return Ok((vec![C64::new(1.0, 0.0)], 0.0));
    }
    // work past the photon limit so the suffix sums see the real tail
    let horizon = 2 * MAX_PHOTONS;
    let (ln_abs, phase) = (alpha.norm().ln(), alpha.arg());
    let mut ln_fact = 0.0;
    let mut probs = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        probs.push((-mean + 2.0 * n as f64 * ln_abs - ln_fact).exp());
    }
    let mut suffix = vec![0.0; horizon + 2];
    for n in (0..=horizon).rev() {
        suffix[n] = suffix[n + 1] + probs[n];
    }
    // smallest n_max whose tail beyond it is within budget
    let n_max = (0..=MAX_PHOTONS)
        .find(|&k| suffix[k + 1] <= tail && k as f64 >= mean.floor())
        .ok_or(Error::Truncation {
            tail,
            limit: MAX_PHOTONS,
        })?;
    let discarded = suffix[n_max + 1];
    let keep = 1.0 / (1.0 - discarded).sqrt();
    let amps = (0..=n_max)
        .map(|n| C64::from_polar(probs[n].sqrt() * keep, n as f64 * phase))
        .collect();
    Ok((amps, discarded))
}

/// Product state `|field⟩ ⊗ |well⟩ ⊗ |internal⟩`, renormalized after
/// truncation. The discarded mass is kept in [`CompositeState::discarded_tail`].
pub fn initial_state(field: &FieldSpec, well: Well, internal: Internal) -> Result<CompositeState> {
    let (photons, tail) = field.photon_amplitudes()?;
    let ext = well.amplitudes_pm();
    let mut ground = [C64::new(0.0, 0.0); 2];
    let mut sectors: BTreeMap<usize, [C64; 4]> = BTreeMap::new();
    for (n, &c) in photons.iter().enumerate() {
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        for (k, e) in [Ext::Plus, Ext::Minus].into_iter().enumerate() {
            let amp = c * ext[k];
            match BasisLabel::of(n, e, internal) {
                BasisLabel::Ground(Ext::Plus) => ground[0] += amp,
                BasisLabel::Ground(Ext::Minus) => ground[1] += amp,
                BasisLabel::Sector { n, slot } => {
                    sectors.entry(n).or_insert([C64::new(0.0, 0.0); 4])[slot as usize - 1] += amp;
                }
            }
        }
    }
    CompositeState::with_tail(ground, sectors, tail)
}

/// Advances every sector by its own propagator and the ground pair by its
/// phases.
pub fn evolve(state: &CompositeState, params: &SystemParams, t: f64) -> Result<CompositeState> {
    let ground = evolve_ground(params, t, state.ground());
    let mut sectors = BTreeMap::new();
    for (&n, amps) in state.sectors() {
        let u = SectorPropagator::auto(params, n, t)?;
        sectors.insert(n, u.apply(amps));
    }
    Ok(CompositeState::from_parts_unchecked(
        ground,
        sectors,
        state.discarded_tail(),
    ))
}

/// A 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density2(pub [[C64; 2]; 2]);

impl Density2 {
    pub fn trace(&self) -> f64 {
        self.0[0][0].re + self.0[1][1].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.0;
        (m[0][1] - m[1][0].conj())
            .norm()
            .max(m[0][0].im.abs())
            .max(m[1][1].im.abs())
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, d) = (self.0[0][0].re, self.0[1][1].re);
        let b = self.0[0][1].norm();
        let mid = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mid - r, mid + r]
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[k][k].re
    }
}

fn accumulate(rho: &mut [[C64; 2]; 2], v: [C64; 2]) {
    for i in 0..2 {
        for j in 0..2 {
            rho[i][j] += v[i] * v[j].conj();
        }
    }
}

/// External reduced density matrix on `(|L⟩, |R⟩)`.
pub fn reduce_external(state: &CompositeState) -> Density2 {
    let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
    accumulate(&mut rho, basis_change_well(state.ground()));
    for a in state.sectors().values() {
        accumulate(&mut rho, basis_change_well([a[0], a[2]]));
        accumulate(&mut rho, basis_change_well([a[1], a[3]]));
    }
    Density2(rho)
}

/// Internal reduced density matrix on `(|g⟩, |e⟩)`.
///
/// The populations are gauge independent. The coherence pairs amplitudes
/// from neighbouring sectors and is therefore expressed in the frame of
/// [`GAUGE`].
pub fn reduce_internal(state: &CompositeState) -> Density2 {
    let zero = C64::new(0.0, 0.0);
    let mut gg = state.ground().iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut ee = 0.0;
    let mut eg = zero;
    for (&n, a) in state.sectors() {
        gg += a[1].norm_sqr() + a[3].norm_sqr();
        ee += a[0].norm_sqr() + a[2].norm_sqr();
        // |n-1, i, e> pairs with |n-1, i, g>
        let partner = if n == 1 {
            Some(state.ground())
        } else {
            state.sector(n - 1).map(|b| [b[1], b[3]])
        };
        if let Some(p) = partner {
            eg += a[0] * p[0].conj() + a[2] * p[1].conj();
        }
    }
    Density2([[C64::new(gg, 0.0), eg.conj()], [eg, C64::new(ee, 0.0)]])
}

/// `⟨x⟩ = (b/2)(ρ_RR − ρ_LL)`, which equals `(b/2)(1 − 2ρ_LL)` for a
/// normalized doublet state.
pub fn mean_position(state: &CompositeState, params: &SystemParams) -> f64 {
    let rho = reduce_external(state);
    params.half_sep() * (rho.population(1) - rho.population(0))
}

/// Uniform sampling `start + k·step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    step: f64,
    len: usize,
}

impl TimeGrid {
    /// `samples` points spanning `[start, end]` inclusive.
    pub fn new(start: f64, end: f64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::param("samples", "time grid is empty"));
        }
        if !(start.is_finite() && end.is_finite()) || start < 0.0 {
            return Err(Error::param("window", format!("need finite 0 <= start, got [{start}, {end}]")));
        }
        if samples == 1 {
            return Ok(TimeGrid { start, step: 0.0, len: 1 });
        }
        if end <= start {
            return Err(Error::param("window", format!("end must exceed start, got [{start}, {end}]")));
        }
        Ok(TimeGrid {
            start,
            step: (end - start) / (samples - 1) as f64,
            len: samples,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }
    pub fn at(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.at(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    RhoLL,
    RhoRR,
    RhoEE,
    MeanPosition,
}

impl Observable {
    pub fn label(self) -> &'static str {
        match self {
            Observable::RhoLL => "rho_LL",
            Observable::RhoRR => "rho_RR",
            Observable::RhoEE => "rho_ee",
            Observable::MeanPosition => "x_mean",
        }
    }
}

/// Provenance carried along with a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub params: SystemParams,
    pub field: Option<FieldSpec>,
    pub gauge: Gauge,
    /// Highest excitation sector in the initial state.
    pub max_sector: usize,
    pub discarded_tail: f64,
}

/// A single uniformly sampled observable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// ρ_LL, ρ_RR, ρ_ee and ⟨x⟩ on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub times: Vec<f64>,
    pub rho_ll: Vec<f64>,
    pub rho_rr: Vec<f64>,
    pub rho_ee: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub meta: SeriesMeta,
}

impl Traces {
    pub fn values(&self, which: Observable) -> &[f64] {
        match which {
            Observable::RhoLL => &self.rho_ll,
            Observable::RhoRR => &self.rho_rr,
            Observable::RhoEE => &self.rho_ee,
            Observable::MeanPosition => &self.x_mean,
        }
    }

    pub fn series(&self, which: Observable) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: self.values(which).to_vec(),
            label: which.label().to_string(),
            meta: self.meta.clone(),
        }
    }
}

/// Observables of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub rho_ll: f64,
    pub rho_rr: f64,
    pub rho_ee: f64,
    pub x_mean: f64,
}

pub fn snapshot(state: &CompositeState, params: &SystemParams) -> Snapshot {
    let ext = reduce_external(state);
    let int = reduce_internal(state);
    let (ll, rr) = (ext.population(0), ext.population(1));
    Snapshot {
        rho_ll: ll,
        rho_rr: rr,
        rho_ee: int.population(1),
        x_mean: params.half_sep() * (rr - ll),
    }
}

/// Evolves `initial` to every grid time. Samples are independent and are
/// evaluated in parallel, then merged in grid order.
pub fn trace_state(initial: &CompositeState, params: &SystemParams, grid: &TimeGrid, field: Option<FieldSpec>) -> Result<Traces> {
    let times = grid.times();
    let snaps: Vec<Snapshot> = times
        .par_iter()
        .map(|&t| evolve(initial, params, t).map(|s| snapshot(&s, params)))
        .collect::<Result<_>>()?;
    Ok(Traces {
        rho_ll: snaps.iter().map(|s| s.rho_ll).collect(),
        rho_rr: snaps.iter().map(|s| s.rho_rr).collect(),
        rho_ee: snaps.iter().map(|s| s.rho_ee).collect(),
        x_mean: snaps.iter().map(|s| s.x_mean).collect(),
        times,
        meta: SeriesMeta {
            params: *params,
            field,
            gauge: GAUGE,
            max_sector: initial.max_sector(),
            discarded_tail: initial.discarded_tail(),
        },
    })
}

pub fn trace_series(
    field: &FieldSpec,
    well: Well,
    internal: Internal,
    params: &SystemParams,
    grid: &TimeGrid,
) -> Result<Traces> {
    let initial = initial_state(field, well, internal)?;
    trace_state(&initial, params, grid, Some(*field))
}

/// Largest sector frequency `Ω₊` present in `state`; the sampling step must
/// stay below `π/Ω₊` to resolve it.
pub fn highest_frequency(state: &CompositeState, params: &SystemParams) -> f64 {
    let mut top = params.tunnel_split();
    if let Some(&n) = state.sectors().keys().next_back() {
        if let Ok(f) = eigenfrequencies(params, n) {
            top = top.max(f.omega_plus);
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sector::{resonant_rho_ee, resonant_rho_ll};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn resonant(tunnel: f64) -> SystemParams {
        SystemParams::in_units_of_g(0.0, tunnel, FRAC_PI_4, -FRAC_PI_4).unwrap()
    }

    #[test]
    fn excited_vacuum_in_right_well() {
        let s = initial_state(&FieldSpec::fock(0), Well::Right, Internal::Excited).unwrap();
        let a = s.sector(1).unwrap();
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        assert_eq!(*a, [h, z, h, z]);
        assert_eq!(s.ground(), [z, z]);
    }

    #[test]
    fn fock_photons_land_in_the_right_sector() {
        let s = initial_state(&FieldSpec::fock(3), Well::Left, Internal::Excited).unwrap();
        assert_eq!(s.max_sector(), 4);
        let s = initial_state(&FieldSpec::fock(3), Well::Left, Internal::Ground).unwrap();
        assert_eq!(s.max_sector(), 3);
        let s = initial_state(&FieldSpec::fock(0), Well::Minus, Internal::Ground).unwrap();
        assert!(s.sectors().is_empty());
        assert_eq!(s.ground()[1], C64::new(1.0, 0.0));
    }

    #[test]
    fn coherent_alpha_five_truncation() {
        let field = FieldSpec::coherent(C64::new(5.0, 0.0));
        let (amps, tail) = field.photon_amplitudes().unwrap();
        assert!(tail <= 1e-12);
        assert!((55..=70).contains(&(amps.len() - 1)), "n_max = {}", amps.len() - 1);
        let s = initial_state(&field, Well::Right, Internal::Excited).unwrap();
        assert_eq!(s.max_sector(), amps.len());
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(s.discarded_tail() > 0.0);
    }

    #[test]
    fn unreachable_tail_is_an_error() {
        let field = FieldSpec::coherent(C64::new(80.0, 0.0));
        assert!(matches!(field.photon_amplitudes(), Err(Error::Truncation { .. })));
    }

    #[test]
    fn ground_states_only_pick_up_phases() {
        let p = resonant(1.3);
        let s = initial_state(&FieldSpec::fock(0), Well::Minus, Internal::Ground).unwrap();
        let e = evolve(&s, &p, 4.0).unwrap();
        assert!((e.ground()[1].norm() - 1.0).abs() < 1e-15);
        assert!(e.sectors().is_empty());
    }

    #[test]
    fn resonant_evolution_matches_closed_form() {
        let p = resonant(2.0);
        let s = initial_state(&FieldSpec::fock(0), Well::Right, Internal::Excited).unwrap();
        for k in 0..40 {
            let t = 0.37 * k as f64;
            let e = evolve(&s, &p, t).unwrap();
            let ext = reduce_external(&e);
            assert!((ext.population(0) - resonant_rho_ll(&p, 1, t).unwrap()).abs() < 1e-10);
            let int = reduce_internal(&e);
            assert!((int.population(1) - resonant_rho_ee(&p, 1, t).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_traces_of_basis_states() {
        let s = CompositeState::basis(BasisLabel::Ground(Ext::Plus));
        let lr = basis_change_well(s.ground());
        assert!((lr[0].norm_sqr() - 0.5).abs() < 1e-15);
        let left = initial_state(&FieldSpec::fock(0), Well::Left, Internal::Ground).unwrap();
        let rho = reduce_external(&left);
        assert!((rho.population(0) - 1.0).abs() < 1e-15 && rho.population(1).abs() < 1e-15);
        let minus = CompositeState::basis(BasisLabel::Ground(Ext::Minus));
        let int = reduce_internal(&minus);
        assert!((int.population(0) - 1.0).abs() < 1e-15 && int.population(1) == 0.0);
    }

    #[test]
    fn mean_position_signs() {
        let p = SystemParams::new(1.0, 0.0, 1.0, FRAC_PI_4, -FRAC_PI_4, 2.3).unwrap();
        let at = |w| mean_position(&initial_state(&FieldSpec::fock(0), w, Internal::Excited).unwrap(), &p);
        assert!((at(Well::Right) - 2.3).abs() < 1e-14);
        assert!((at(Well::Left) + 2.3).abs() < 1e-14);
        assert!(at(Well::Plus).abs() < 1e-14);
        assert!(at(Well::Minus).abs() < 1e-14);
    }

    #[test]
    fn zero_splitting_never_tunnels() {
        let p = resonant(0.0);
        let grid = TimeGrid::new(0.0, 50.0, 200).unwrap();
        let tr = trace_series(&FieldSpec::fock(2), Well::Right, Internal::Excited, &p, &grid).unwrap();
        assert!(tr.rho_ll.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 0.5, 10).is_err());
    }

    #[test]
    fn detuned_atom_stays_mostly_in_its_well() {
        let p = SystemParams::in_units_of_g(1.0, 1.0, FRAC_PI_4, -FRAC_PI_4).unwrap();
        let grid = TimeGrid::new(0.0, 100.0, 4096).unwrap();
        for (well, idx) in [(Well::Left, 0), (Well::Right, 1)] {
            let tr = trace_series(&FieldSpec::fock(0), well, Internal::Excited, &p, &grid).unwrap();
            let occ = if idx == 0 { &tr.rho_ll } else { &tr.rho_rr };
            let avg = occ.iter().sum::<f64>() / occ.len() as f64;
            assert!(avg > 0.5, "{well:?}: {avg}");
        }
    }

    #[test]
    fn tail_refinement_changes_little() {
        let p = SystemParams::in_units_of_g(0.0, 2.0, FRAC_PI_4, -FRAC_PI_4).unwrap();
        let grid = TimeGrid::new(0.0, 80.0, 257).unwrap();
        let tau = 1e-6;
        let coarse = trace_series(
            &FieldSpec::coherent(C64::new(5.0, 0.0)).with_tail(tau),
            Well::Right,
            Internal::Excited,
            &p,
            &grid,
        )
        .unwrap();
        let fine = trace_series(
            &FieldSpec::coherent(C64::new(5.0, 0.0)).with_tail(tau / 10.0),
            Well::Right,
            Internal::Excited,
            &p,
            &grid,
        )
        .unwrap();
        for (a, b) in coarse.x_mean.iter().zip(&fine.x_mean) {
            assert!((a - b).abs() < 10.0 * tau);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_state() -> impl Strategy<Value = CompositeState> {
            proptest::collection::vec(-1.0..1.0f64, 2 * (2 + 4 * 3)).prop_filter_map("zero", |v| {
                let z: Vec<C64> = v.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
                let norm = z.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                if norm < 1e-3 {
                    return None;
                }
                let z: Vec<C64> = z.iter().map(|a| a / norm).collect();
                let mut sectors = BTreeMap::new();
                for n in 1..=3 {
                    let b = &z[2 + 4 * (n - 1)..2 + 4 * n];
                    sectors.insert(n, [b[0], b[1], b[2], b[3]]);
                }
                CompositeState::new([z[0], z[1]], sectors).ok()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn evolution_preserves_norm(s in arb_state(), t in 0.0..100.0f64,
                delta in -5.0..5.0f64, tunnel in 0.0..5.0f64, kappa in 0.0..3.1f64, chi in -3.1..3.1f64) {
                let p = SystemParams::in_units_of_g(delta, tunnel, kappa, chi).unwrap();
                let e = evolve(&s, &p, t).unwrap();
                prop_assert!((e.norm_sqr() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn partial_traces_are_density_matrices(s in arb_state()) {
                for rho in [reduce_external(&s), reduce_internal(&s)] {
                    prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
                    prop_assert!(rho.hermiticity_defect() < 1e-12);
                    prop_assert!(rho.eigenvalues()[0] > -1e-10);
                }
            }

            #[test]
            fn observables_ignore_sector_phases(s in arb_state(), seed in 0.0..10.0f64, t in 0.0..20.0f64) {
                let p = SystemParams::in_units_of_g(0.4, 1.1, 0.7, -FRAC_PI_4).unwrap();
                let rotated = s.with_sector_phases(|n| seed * (n as f64 + 0.5).powi(2));
                let a = snapshot(&evolve(&s, &p, t).unwrap(), &p);
                let b = snapshot(&evolve(&rotated, &p, t).unwrap(), &p);
                prop_assert!((a.rho_ll - b.rho_ll).abs() < 1e-12);
                prop_assert!((a.rho_rr - b.rho_rr).abs() < 1e-12);
                prop_assert!((a.rho_ee - b.rho_ee).abs() < 1e-12);
                prop_assert!((a.x_mean - b.x_mean).abs() < 1e-12);
            }
        }
    }
}
