//! Parameter record, basis conventions and the composite atom–field state.
//!
//! Basis: `|n, i, j⟩ = |n⟩ ⊗ |i⟩ ⊗ |j⟩` with `n` the photon number, `i ∈ {+, −}`
//! the external doublet state and `j ∈ {g, e}` the internal state. The
//! Hamiltonian conserves `N = a†a + σ₊σ₋`, so a state is stored as the uncoupled
//! ground pair `{|0,+,g⟩, |0,−,g⟩}` plus one 4-amplitude block per `N ≥ 1` in
//! the order `{|N−1,+,e⟩, |N,+,g⟩, |N−1,−,e⟩, |N,−,g⟩}`.
//!
//! Within each block the energy offset `(N − 1/2)ω` is dropped (see [`Gauge`]);
//! every observable computed by this crate is diagonal in photon number, so the
//! dropped sector phases never show up.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Norm tolerance for [`CompositeState`].
pub const NORM_TOL: f64 = 1e-12;

/// Distance from the χ = −π/4 − 2nπ lattice below which the analytic
/// propagator is accepted.
const LATTICE_TOL: f64 = 1e-9;

/// Phase convention shared by every sector matrix and propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// The sector-global phase `e^{−i(N−1/2)ωt}` is removed; the ground pair
    /// carries `e^{∓iΔt/2}` without the `−ω₀/2` offset.
    SectorOffsetRemoved,
}

pub const GAUGE: Gauge = Gauge::SectorOffsetRemoved;

/// All model constants, `ħ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    g: f64,
    delta: f64,
    tunnel_split: f64,
    kappa: f64,
    chi: f64,
    half_sep: f64,
    analytic_capable: bool,
}

impl SystemParams {
    /// Validates and builds a parameter record.
    ///
    /// * `g`: atom–field coupling, `> 0`
    /// * `delta`: detuning `δ = ω − ω₀`
    /// * `tunnel_split`: tunnel splitting `Δ ≥ 0`
    /// * `kappa`: `κ = kb/2`
    /// * `chi`: `χ = kx₀`
    /// * `half_sep`: `b/2 > 0`, only used to scale ⟨x⟩
    pub fn new(
        g: f64,
        delta: f64,
        tunnel_split: f64,
        kappa: f64,
        chi: f64,
        half_sep: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("g", g),
            ("delta", delta),
            ("tunnel_split", tunnel_split),
            ("kappa", kappa),
            ("chi", chi),
            ("half_sep", half_sep),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if g <= 0.0 {
            return Err(Error::param("g", format!("must be > 0, got {g}")));
        }
        if tunnel_split < 0.0 {
            return Err(Error::param(
                "tunnel_split",
                format!("must be >= 0, got {tunnel_split}"),
            ));
        }
        if half_sep <= 0.0 {
            return Err(Error::param(
                "half_sep",
                format!("must be > 0, got {half_sep}"),
            ));
        }
        Ok(SystemParams {
            g,
            delta,
            tunnel_split,
            kappa,
            chi,
            half_sep,
            analytic_capable: on_analytic_lattice(chi),
        })
    }

    /// Parameters in units of `g` (`g = 1`, `b/2 = 1`).
    pub fn in_units_of_g(
        delta_over_g: f64,
        tunnel_over_g: f64,
        kappa: f64,
        chi: f64,
    ) -> Result<Self> {
        Self::new(1.0, delta_over_g, tunnel_over_g, kappa, chi, 1.0)
    }

    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn tunnel_split(&self) -> f64 {
        self.tunnel_split
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn half_sep(&self) -> f64 {
        self.half_sep
    }

    /// True when χ lies on the −π/4 − 2nπ lattice served by the closed-form
    /// propagator.
    pub fn analytic_capable(&self) -> bool {
        self.analytic_capable
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.g,
            delta,
            self.tunnel_split,
            self.kappa,
            self.chi,
            self.half_sep,
        )
    }

    pub fn with_tunnel_split(&self, tunnel_split: f64) -> Result<Self> {
        Self::new(
            self.g,
            self.delta,
            tunnel_split,
            self.kappa,
            self.chi,
            self.half_sep,
        )
    }
}

fn on_analytic_lattice(chi: f64) -> bool {
    // chi = -pi/4 - 2 n pi  <=>  (chi + pi/4) / (2 pi) is an integer
    let r = (chi + FRAC_PI_4) / (2.0 * PI);
    (r - r.round()).abs() * 2.0 * PI < LATTICE_TOL
}

/// External doublet state `|+⟩` (antisymmetric, energy +Δ/2) or `|−⟩`
/// (symmetric, energy −Δ/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ext {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Internal {
    Ground,
    Excited,
}

/// Initial external preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Well {
    Left,
    Right,
    Plus,
    Minus,
}

impl Well {
    /// Amplitudes on `(|+⟩, |−⟩)`.
    pub fn amplitudes_pm(self) -> [C64; 2] {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Well::Left => [h, -h],
            Well::Right => [h, h],
            Well::Plus => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            Well::Minus => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        }
    }
}

/// `|L⟩ = (|+⟩ − |−⟩)/√2` expressed on `(|+⟩, |−⟩)`.
pub const WELL_LEFT: [f64; 2] = [FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
/// `|R⟩ = (|+⟩ + |−⟩)/√2` expressed on `(|+⟩, |−⟩)`.
pub const WELL_RIGHT: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

/// Maps amplitudes on `(|+⟩, |−⟩)` to amplitudes on `(|L⟩, |R⟩)`.
pub fn basis_change_well(pm: [C64; 2]) -> [C64; 2] {
    [
        (pm[0] - pm[1]) * FRAC_1_SQRT_2,
        (pm[0] + pm[1]) * FRAC_1_SQRT_2,
    ]
}

/// Inverse of [`basis_change_well`].
pub fn basis_change_pm(lr: [C64; 2]) -> [C64; 2] {
    [
        (lr[0] + lr[1]) * FRAC_1_SQRT_2,
        (lr[1] - lr[0]) * FRAC_1_SQRT_2,
    ]
}

/// One basis vector of the sector decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BasisLabel {
    /// `|0, ±, g⟩`, the uncoupled pair.
    Ground(Ext),
    /// Slot `1..=4` of sector `N ≥ 1`.
    Sector { n: usize, slot: u8 },
}

impl BasisLabel {
    pub fn sector(n: usize, slot: u8) -> Result<Self> {
        if n == 0 {
            return Err(Error::GroundSector(0));
        }
        if !(1..=4).contains(&slot) {
            return Err(Error::param("slot", format!("must be in 1..=4, got {slot}")));
        }
        Ok(BasisLabel::Sector { n, slot })
    }

    /// Label of `|photons, ext, internal⟩`.
    pub fn of(photons: usize, ext: Ext, internal: Internal) -> Self {
        match (internal, photons) {
            (Internal::Ground, 0) => BasisLabel::Ground(ext),
            (Internal::Ground, n) => BasisLabel::Sector {
                n,
                slot: if ext == Ext::Plus { 2 } else { 4 },
            },
            (Internal::Excited, n) => BasisLabel::Sector {
                n: n + 1,
                slot: if ext == Ext::Plus { 1 } else { 3 },
            },
        }
    }

    pub fn excitations(&self) -> usize {
        match *self {
            BasisLabel::Ground(_) => 0,
            BasisLabel::Sector { n, .. } => n,
        }
    }

    pub fn photons(&self) -> usize {
        match *self {
            BasisLabel::Ground(_) => 0,
            BasisLabel::Sector { n, slot } => {
                if slot % 2 == 1 {
                    n - 1
                } else {
                    n
                }
            }
        }
    }

    pub fn ext(&self) -> Ext {
        match *self {
            BasisLabel::Ground(e) => e,
            BasisLabel::Sector { slot, .. } => {
                if slot <= 2 {
                    Ext::Plus
                } else {
                    Ext::Minus
                }
            }
        }
    }

    pub fn internal(&self) -> Internal {
        match *self {
            BasisLabel::Ground(_) => Internal::Ground,
            BasisLabel::Sector { slot, .. } => {
                if slot % 2 == 1 {
                    Internal::Excited
                } else {
                    Internal::Ground
                }
            }
        }
    }
}

/// Pure state of atom + field, block-decomposed by excitation number.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    ground: [C64; 2],
    sectors: BTreeMap<usize, [C64; 4]>,
    discarded_tail: f64,
}

impl CompositeState {
    /// Builds a state from its blocks, rejecting anything not normalized to
    /// [`NORM_TOL`].
    pub fn new(ground: [C64; 2], sectors: BTreeMap<usize, [C64; 4]>) -> Result<Self> {
        Self::with_tail(ground, sectors, 0.0)
    }

    /// Like [`CompositeState::new`] but records the probability mass dropped
    /// when truncating an infinite photon distribution.
    pub fn with_tail(
        ground: [C64; 2],
        sectors: BTreeMap<usize, [C64; 4]>,
        discarded_tail: f64,
    ) -> Result<Self> {
        if sectors.contains_key(&0) {
            return Err(Error::GroundSector(0));
        }
        let s = CompositeState {
            ground,
            sectors,
            discarded_tail,
        };
        let norm = s.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::param(
                "state",
                format!("squared norm must be 1 within {NORM_TOL:e}, got {norm}"),
            ));
        }
        Ok(s)
    }

    /// Internal constructor for states produced by unitary maps.
    pub(crate) fn from_parts_unchecked(
        ground: [C64; 2],
        sectors: BTreeMap<usize, [C64; 4]>,
        discarded_tail: f64,
    ) -> Self {
        CompositeState {
            ground,
            sectors,
            discarded_tail,
        }
    }

    /// A single basis vector.
    pub fn basis(label: BasisLabel) -> Self {
        let mut sectors = BTreeMap::new();
        let mut ground = [C64::new(0.0, 0.0); 2];
        match label {
            BasisLabel::Ground(Ext::Plus) => ground[0] = C64::new(1.0, 0.0),
            BasisLabel::Ground(Ext::Minus) => ground[1] = C64::new(1.0, 0.0),
            BasisLabel::Sector { n, slot } => {
                let mut a = [C64::new(0.0, 0.0); 4];
                a[slot as usize - 1] = C64::new(1.0, 0.0);
                sectors.insert(n, a);
            }
        }
        CompositeState {
            ground,
            sectors,
            discarded_tail: 0.0,
        }
    }

    /// Amplitudes on `(|0,+,g⟩, |0,−,g⟩)`.
    pub fn ground(&self) -> [C64; 2] {
        self.ground
    }

    pub fn sector(&self, n: usize) -> Option<&[C64; 4]> {
        self.sectors.get(&n)
    }

    pub fn sectors(&self) -> &BTreeMap<usize, [C64; 4]> {
        &self.sectors
    }

    /// Highest excitation number carrying a block.
    pub fn max_sector(&self) -> usize {
        self.sectors.keys().next_back().copied().unwrap_or(0)
    }

    /// Probability mass dropped when the state was truncated.
    pub fn discarded_tail(&self) -> f64 {
        self.discarded_tail
    }

    pub fn amplitude(&self, label: BasisLabel) -> C64 {
        match label {
            BasisLabel::Ground(Ext::Plus) => self.ground[0],
            BasisLabel::Ground(Ext::Minus) => self.ground[1],
            BasisLabel::Sector { n, slot } => self
                .sectors
                .get(&n)
                .map(|a| a[slot as usize - 1])
                .unwrap_or_default(),
        }
    }

    /// Squared norm of sector `n` (`n = 0` is the ground pair).
    pub fn sector_weight(&self, n: usize) -> f64 {
        if n == 0 {
            self.ground.iter().map(|a| a.norm_sqr()).sum()
        } else {
            self.sectors
                .get(&n)
                .map(|a| a.iter().map(|z| z.norm_sqr()).sum())
                .unwrap_or(0.0)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut total: f64 = self.ground.iter().map(|a| a.norm_sqr()).sum();
        for a in self.sectors.values() {
            total += a.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        total
    }

    /// Iterates `(label, amplitude)` over every stored amplitude.
    pub fn iter(&self) -> impl Iterator<Item = (BasisLabel, C64)> + '_ {
        let ground = [
            (BasisLabel::Ground(Ext::Plus), self.ground[0]),
            (BasisLabel::Ground(Ext::Minus), self.ground[1]),
        ];
        ground.into_iter().chain(self.sectors.iter().flat_map(|(&n, a)| {
            (0..4).map(move |k| (BasisLabel::Sector { n, slot: k as u8 + 1 }, a[k]))
        }))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &CompositeState) -> C64 {
        let mut acc = self.ground[0].conj() * other.ground[0] + self.ground[1].conj() * other.ground[1];
        for (n, a) in &self.sectors {
            if let Some(b) = other.sectors.get(n) {
                for k in 0..4 {
                    acc += a[k].conj() * b[k];
                }
            }
        }
        acc
    }

    /// Applies a per-sector phase; used to check gauge independence.
    pub fn with_sector_phases(&self, phase: impl Fn(usize) -> f64) -> Self {
        let g = C64::from_polar(1.0, phase(0));
        let sectors = self
            .sectors
            .iter()
            .map(|(&n, a)| {
                let p = C64::from_polar(1.0, phase(n));
                (n, a.map(|z| z * p))
            })
            .collect();
        CompositeState {
            ground: self.ground.map(|z| z * g),
            sectors,
            discarded_tail: self.discarded_tail,
        }
    }
}
