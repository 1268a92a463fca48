//! Finite-difference solution of the quartic double well and split-operator
//! propagation of one excitation sector with the spatially varying coupling.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use nalgebra::Matrix4;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_exp4, tridiag_lowest};
use crate::model::{SystemParams, C64};
use crate::observables::TimeGrid;

/// Number of eigenpairs kept in a [`SpectralResult`].
pub const RETAINED: usize = 6;

/// Largest relative change of Δ allowed when the point count doubles.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Minimum points per de Broglie wavelength of the highest retained state.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

/// Largest `dt · ω_osc` accepted by [`propagate_sector`].
pub const MAX_PHASE_PER_STEP: f64 = 0.25;

/// Default propagation time step.
pub const DEFAULT_DT: f64 = 0.05;

/// `V(x) = A x⁴ − B x²` on a uniform grid over `[x_min, x_max]`, ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWellSpec {
    pub quartic: f64,
    pub quadratic: f64,
    pub mass: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for DoubleWellSpec {
    fn default() -> Self {
        DoubleWellSpec {
            quartic: 0.08,
            quadratic: 1.0,
            mass: 1.0,
            x_min: -8.0,
            x_max: 8.0,
            points: 1024,
        }
    }
}

impl DoubleWellSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("quartic", self.quartic),
            ("quadratic", self.quadratic),
            ("mass", self.mass),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::param("domain", format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max)));
        }
        if self.points < 16 {
            return Err(Error::param("points", format!("need at least 16, got {}", self.points)));
        }
        let xm = self.well_minimum();
        if self.x_min >= -xm || self.x_max <= xm {
            return Err(Error::param(
                "domain",
                format!("[{}, {}] must contain both minima at ±{xm:.4}", self.x_min, self.x_max),
            ));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.points).map(|j| self.x_min + j as f64 * dx).collect()
    }

    pub fn potential(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.quartic * x2 * x2 - self.quadratic * x2
    }

    /// `√(B/2A)`.
    pub fn well_minimum(&self) -> f64 {
        (self.quadratic / (2.0 * self.quartic)).sqrt()
    }

    /// `V(0) − V(x_min) = B²/4A`.
    pub fn barrier_height(&self) -> f64 {
        self.quadratic * self.quadratic / (4.0 * self.quartic)
    }

    /// Harmonic frequency at either minimum, `√(4B/m)`.
    pub fn omega_osc(&self) -> f64 {
        (4.0 * self.quadratic / self.mass).sqrt()
    }

    fn doubled(&self) -> Self {
        DoubleWellSpec {
            points: 2 * self.points,
            ..*self
        }
    }
}

/// Low-lying spectrum of the discretized double well.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub spec: DoubleWellSpec,
    pub eigenvalues: Vec<f64>,
    /// `Δ = E₁ − E₀`.
    pub tunnel_split: f64,
    /// `Δ̃ = E₂ − (E₀ + E₁)/2`, the gap from the doublet centre to the next level.
    pub gap: f64,
    /// `b = 2⟨+|x|−⟩`.
    pub separation: f64,
    /// `φ_k(x_j)`, normalized so that `Σ_j φ_k(x_j)² dx = 1`. `φ₀` is `|−⟩`
    /// (positive sum), `φ₁` is `|+⟩` (sign fixed by `⟨+|x|−⟩ > 0`).
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Relative change of Δ when the point count doubles.
    pub convergence_shift: f64,
}

impl SpectralResult {
    pub fn xs(&self) -> Vec<f64> {
        self.spec.xs()
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    pub fn minus(&self) -> &[f64] {
        &self.eigenfunctions[0]
    }

    pub fn plus(&self) -> &[f64] {
        &self.eigenfunctions[1]
    }

    /// `(φ₊ + φ₋)/√2` or `(φ₊ − φ₋)/√2`.
    pub fn well_state(&self, right: bool) -> Vec<f64> {
        let s = if right { 1.0 } else { -1.0 };
        self.plus()
            .iter()
            .zip(self.minus())
            .map(|(p, m)| (p + s * m) * FRAC_1_SQRT_2)
            .collect()
    }

    /// `⟨φ_i| f(x) |φ_j⟩`.
    pub fn matrix_element(&self, i: usize, j: usize, f: impl Fn(f64) -> f64) -> f64 {
        let dx = self.dx();
        self.xs()
            .iter()
            .zip(&self.eigenfunctions[i])
            .zip(&self.eigenfunctions[j])
            .map(|((&x, a), b)| a * f(x) * b)
            .sum::<f64>()
            * dx
    }

    /// `⟨φ_k|P|φ_k⟩` under `x → −x`; meaningful on grids symmetric about 0.
    pub fn parity(&self, k: usize) -> f64 {
        let v = &self.eigenfunctions[k];
        v.iter().zip(v.iter().rev()).map(|(a, b)| a * b).sum::<f64>() * self.dx()
    }
}

fn spectrum_on_grid(spec: &DoubleWellSpec) -> Result<SpectralResult> {
    spec.validate()?;
    let xs = spec.xs();
    let dx = spec.dx();
    let kin = 1.0 / (spec.mass * dx * dx);
    let diag: Vec<f64> = xs.iter().map(|&x| kin + spec.potential(x)).collect();
    let off = vec![-0.5 * kin; spec.points - 1];
    let (values, vectors) = tridiag_lowest(&diag, &off, RETAINED);
    let scale = 1.0 / dx.sqrt();
    let mut funcs: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|v| v.into_iter().map(|c| c * scale).collect())
        .collect();

    if funcs[0].iter().sum::<f64>() < 0.0 {
        funcs[0].iter_mut().for_each(|c| *c = -*c);
    }
    let x_pm: f64 = xs.iter().zip(&funcs[1]).zip(&funcs[0]).map(|((x, p), m)| p * x * m).sum::<f64>() * dx;
    if x_pm < 0.0 {
        funcs[1].iter_mut().for_each(|c| *c = -*c);
    }
    let (e0, e1, e2) = (values[0], values[1], values[2]);
    if !(e0 < e1 && e1 < e2) {
        return Err(Error::GridTooCoarse(format!("levels not ordered: {e0}, {e1}, {e2}")));
    }

    // resolution of the highest retained state
    let v_min = -spec.barrier_height();
    let k_max = (2.0 * spec.mass * (values[RETAINED - 1] - v_min)).sqrt();
    let wavelength = 2.0 * PI / k_max;
    if dx > wavelength / POINTS_PER_WAVELENGTH {
        return Err(Error::GridTooCoarse(format!(
            "dx = {dx:.4e} exceeds 1/{POINTS_PER_WAVELENGTH} of the shortest wavelength {wavelength:.4e}"
        )));
    }

    Ok(SpectralResult {
        spec: *spec,
        tunnel_split: e1 - e0,
        gap: e2 - 0.5 * (e0 + e1),
        separation: 2.0 * x_pm.abs(),
        eigenvalues: values,
        eigenfunctions: funcs,
        convergence_shift: f64::NAN,
    })
}

/// Diagonalizes the three-point finite-difference Hamiltonian and verifies Δ
/// against a grid with twice the points.
pub fn solve_double_well(spec: &DoubleWellSpec) -> Result<SpectralResult> {
    let mut base = spectrum_on_grid(spec)?;
    let fine = spectrum_on_grid(&spec.doubled())?;
    let shift = (fine.tunnel_split - base.tunnel_split).abs() / base.tunnel_split;
    if shift.is_nan() || shift > CONVERGENCE_TOL {
        return Err(Error::GridTooCoarse(format!(
            "splitting moves by {:.3}% when the point count doubles ({} -> {})",
            100.0 * shift,
            base.tunnel_split,
            fine.tunnel_split
        )));
    }
    base.convergence_shift = shift;
    Ok(base)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WkbEstimate {
    /// `ω_osc · exp(−S)`.
    pub tunnel_split: f64,
    /// `S = ∫_{−a}^{a} √(2m(V − E₀)) dz`.
    pub action: f64,
    /// Inner turning point `a`.
    pub turning_point: f64,
    pub energy: f64,
}

/// WKB splitting using the ground energy of the grid solution.
pub fn wkb_splitting(spec: &DoubleWellSpec) -> Result<WkbEstimate> {
    let e0 = spectrum_on_grid(spec)?.eigenvalues[0];
    wkb_splitting_at(spec, e0)
}

/// WKB splitting for a given ground energy `E₀` below the barrier top.
pub fn wkb_splitting_at(spec: &DoubleWellSpec, e0: f64) -> Result<WkbEstimate> {
    let (a4, b2) = (spec.quartic, spec.quadratic);
    if e0.is_nan() || e0 >= 0.0 {
        return Err(Error::domain(format!(
            "E0 = {e0} is not below the barrier top at 0; no tunneling regime"
        )));
    }
    if e0 <= -spec.barrier_height() {
        return Err(Error::domain(format!("E0 = {e0} lies below the well bottom")));
    }
    let a = ((b2 - (b2 * b2 + 4.0 * a4 * e0).sqrt()) / (2.0 * a4)).sqrt();
    // z = a sin θ removes the square-root endpoint behaviour
    let steps = 4000;
    let h = PI / steps as f64;
    let f = |theta: f64| {
        let z = a * theta.sin();
        let r = 2.0 * spec.mass * (spec.potential(z) - e0);
        r.max(0.0).sqrt() * a * theta.cos()
    };
    let mut action = f(-0.5 * PI) + f(0.5 * PI);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        action += w * f(-0.5 * PI + k as f64 * h);
    }
    action *= h / 3.0;
    Ok(WkbEstimate {
        tunnel_split: spec.omega_osc() * (-action).exp(),
        action,
        turning_point: a,
        energy: e0,
    })
}

/// Two spatial channels of one excitation sector: `ψ_e` with `N − 1` photons
/// and `ψ_g` with `N` photons.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorWavefunction {
    pub psi_e: Vec<C64>,
    pub psi_g: Vec<C64>,
    pub dx: f64,
    pub time: f64,
}

impl SectorWavefunction {
    pub fn norm_sqr(&self) -> f64 {
        self.psi_e
            .iter()
            .chain(&self.psi_g)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            * self.dx
    }

    pub fn excited_weight(&self) -> f64 {
        self.psi_e.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx
    }

    /// Builds channels from doublet amplitudes in sector slot order
    /// `(e+, g+, e−, g−)`.
    pub fn from_doublet(spectral: &SpectralResult, amps: [C64; 4]) -> Self {
        let (p, m) = (spectral.plus(), spectral.minus());
        let chan = |ap: C64, am: C64| -> Vec<C64> {
            p.iter().zip(m).map(|(&u, &v)| ap * u + am * v).collect()
        };
        SectorWavefunction {
            psi_e: chan(amps[0], amps[2]),
            psi_g: chan(amps[1], amps[3]),
            dx: spectral.dx(),
            time: 0.0,
        }
    }

    /// Excited atom in `(φ₀ + φ₁)/√2`.
    pub fn excited_right(spectral: &SpectralResult) -> Self {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        Self::from_doublet(spectral, [h, z, h, z])
    }

    /// Excited atom in a harmonic-oscillator ground state centred on the right
    /// minimum.
    pub fn excited_gaussian(spec: &DoubleWellSpec) -> Self {
        let c = spec.well_minimum();
        let s = spec.mass * spec.omega_osc();
        let dx = spec.dx();
        let mut psi: Vec<C64> = spec
            .xs()
            .iter()
            .map(|&x| C64::new((-0.5 * s * (x - c).powi(2)).exp(), 0.0))
            .collect();
        let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        SectorWavefunction {
            psi_g: vec![C64::new(0.0, 0.0); psi.len()],
            psi_e: psi,
            dx,
            time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubletProjection {
    /// Overlaps in sector slot order `(e+, g+, e−, g−)`.
    pub amps: [C64; 4],
    /// Population outside the doublet.
    pub residual: f64,
}

impl DoubletProjection {
    /// `|⟨R|ψ_e⟩|² + |⟨R|ψ_g⟩|²`.
    pub fn rho_rr(&self) -> f64 {
        let a = &self.amps;
        0.5 * ((a[0] + a[2]).norm_sqr() + (a[1] + a[3]).norm_sqr())
    }
}

fn overlap(phi: &[f64], psi: &[C64], dx: f64) -> C64 {
    phi.iter().zip(psi).map(|(&f, &z)| z * f).sum::<C64>() * dx
}

pub fn project_to_doublet(wf: &SectorWavefunction, spectral: &SpectralResult) -> Result<DoubletProjection> {
    if wf.psi_e.len() != spectral.spec.points || (wf.dx - spectral.dx()).abs() > 1e-12 * wf.dx {
        return Err(Error::param("wavefunction", "grid does not match the spectral solution"));
    }
    let (p, m) = (spectral.plus(), spectral.minus());
    let amps = [
        overlap(p, &wf.psi_e, wf.dx),
        overlap(p, &wf.psi_g, wf.dx),
        overlap(m, &wf.psi_e, wf.dx),
        overlap(m, &wf.psi_g, wf.dx),
    ];
    let kept: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    Ok(DoubletProjection {
        amps,
        residual: (wf.norm_sqr() - kept).max(0.0),
    })
}

/// Coupling `g√N sin(k(x − x0))` between the channels, detuning `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCoupling {
    pub g: f64,
    pub delta: f64,
    pub k: f64,
    pub x0: f64,
    pub n: usize,
}

impl GridCoupling {
    /// `k = 2κ/b`, `x0 = χ/k` with `b` from the spectral solution.
    pub fn from_angles(spectral: &SpectralResult, g: f64, delta: f64, kappa: f64, chi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::GroundSector(0));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::param("kappa", "must be > 0 to fix the wave number"));
        }
        let k = 2.0 * kappa / spectral.separation;
        Ok(GridCoupling {
            g,
            delta,
            k,
            x0: chi / k,
            n,
        })
    }

    /// Parameters of the two-level model with the same geometry.
    pub fn two_level_params(&self, spectral: &SpectralResult) -> Result<SystemParams> {
        let half = 0.5 * spectral.separation;
        SystemParams::new(
            self.g,
            self.delta,
            spectral.tunnel_split,
            self.k * half,
            self.k * self.x0,
            half,
        )
    }

    fn coupling(&self, x: f64) -> f64 {
        self.g * (self.n as f64).sqrt() * (self.k * (x - self.x0)).sin()
    }
}

/// Sector matrix built from the grid matrix elements of the coupling between
/// the two doublet states, in slot order.
pub fn projected_sector_matrix(spectral: &SpectralResult, c: &GridCoupling) -> Matrix4<C64> {
    let f = |x: f64| c.coupling(x);
    let (pp, mm, pm) = (
        spectral.matrix_element(1, 1, f),
        spectral.matrix_element(0, 0, f),
        spectral.matrix_element(1, 0, f),
    );
    let (d, t) = (c.delta, spectral.tunnel_split);
    let r = |v: f64| C64::new(v, 0.0);
    let mut h = Matrix4::<C64>::zeros();
    h[(0, 0)] = r((t - d) / 2.0);
    h[(1, 1)] = r((t + d) / 2.0);
    h[(2, 2)] = r((-t - d) / 2.0);
    h[(3, 3)] = r((-t + d) / 2.0);
    h[(0, 1)] = r(pp);
    h[(1, 0)] = r(pp);
    h[(2, 3)] = r(mm);
    h[(3, 2)] = r(mm);
    h[(0, 3)] = r(pm);
    h[(3, 0)] = r(pm);
    h[(2, 1)] = r(pm);
    h[(1, 2)] = r(pm);
    h
}

/// Exact evolution of doublet amplitudes under [`projected_sector_matrix`].
pub fn evolve_projected(h: &Matrix4<C64>, amps: [C64; 4], t: f64) -> [C64; 4] {
    let u = hermitian_exp4(h, t);
    let v = u * nalgebra::Vector4::from(amps);
    [v[0], v[1], v[2], v[3]]
}

/// Sampled output of [`propagate_sector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridTraces {
    pub times: Vec<f64>,
    /// Doublet-projected `|⟨R|ψ⟩|²`.
    pub rho_rr: Vec<f64>,
    /// Raw probability mass at `x > 0`.
    pub rho_rr_raw: Vec<f64>,
    pub rho_ee: Vec<f64>,
    /// Population outside the doublet.
    pub residual: Vec<f64>,
    pub max_norm_defect: f64,
    /// Largest `|E(t) − E(0)|/|E(0)|` over the samples.
    pub max_energy_drift: f64,
    pub dt: f64,
    pub final_state: SectorWavefunction,
}

struct Stepper {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    kinetic_phase: Vec<C64>,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    coupling: Vec<f64>,
    half_delta: f64,
    // exp(−i h_x dt/2) per grid point: (ee, gg, eg)
    half: Vec<(C64, C64, C64)>,
}

impl Stepper {
    fn new(spec: &DoubleWellSpec, c: &GridCoupling, dt: f64) -> Self {
        let n = spec.points;
        let dx = spec.dx();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        // eigenvalues of the periodic three-point Laplacian, matching the spectrum
        let kinetic: Vec<f64> = (0..n)
            .map(|j| {
                let q = 2.0 * PI * (if j <= n / 2 { j as f64 } else { j as f64 - n as f64 }) / (n as f64 * dx);
                (1.0 - (q * dx).cos()) / (spec.mass * dx * dx)
            })
            .collect();
        let scale = 1.0 / n as f64;
        let kinetic_phase = kinetic.iter().map(|&t| C64::from_polar(scale, -t * dt)).collect();
        let xs = spec.xs();
        let potential: Vec<f64> = xs.iter().map(|&x| spec.potential(x)).collect();
        let coupling: Vec<f64> = xs.iter().map(|&x| c.coupling(x)).collect();
        let a = -0.5 * c.delta;
        let h = 0.5 * dt;
        let half = potential
            .iter()
            .zip(&coupling)
            .map(|(&v, &cx)| {
                // exp(−i h (v + a σz + cx σx))
                let om = (a * a + cx * cx).sqrt();
                let ph = C64::from_polar(1.0, -v * h);
                let (co, si) = ((om * h).cos(), (om * h).sin());
                let (sa, sc) = if om > 0.0 { (si * a / om, si * cx / om) } else { (0.0, 0.0) };
                (
                    ph * C64::new(co, -sa),
                    ph * C64::new(co, sa),
                    ph * C64::new(0.0, -sc),
                )
            })
            .collect();
        Stepper {
            forward,
            inverse,
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
            kinetic_phase,
            kinetic,
            potential,
            coupling,
            half_delta: -a,
            half,
        }
    }

    fn local(&self, e: &mut [C64], g: &mut [C64]) {
        for ((pe, pg), &(uee, ugg, ueg)) in e.iter_mut().zip(g.iter_mut()).zip(&self.half) {
            let (a, b) = (*pe, *pg);
            *pe = uee * a + ueg * b;
            *pg = ueg * a + ugg * b;
        }
    }

    fn kinetic_step(&mut self, psi: &mut [C64]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.kinetic_phase).for_each(|(z, k)| *z *= k);
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }

    fn step(&mut self, e: &mut [C64], g: &mut [C64]) {
        self.local(e, g);
        self.kinetic_step(e);
        self.kinetic_step(g);
        self.local(e, g);
    }

    fn kinetic_energy(&mut self, psi: &[C64]) -> f64 {
        let mut buf = psi.to_vec();
        self.forward.process_with_scratch(&mut buf, &mut self.scratch);
        buf.iter().zip(&self.kinetic).map(|(z, t)| z.norm_sqr() * t).sum::<f64>() / psi.len() as f64
    }

    fn energy(&mut self, e: &[C64], g: &[C64], dx: f64) -> f64 {
        let mut total = self.kinetic_energy(e) + self.kinetic_energy(g);
        for j in 0..e.len() {
            let v = self.potential[j];
            total += (v - self.half_delta) * e[j].norm_sqr() + (v + self.half_delta) * g[j].norm_sqr();
            total += 2.0 * self.coupling[j] * (e[j].conj() * g[j]).re;
        }
        total * dx
    }
}

/// Strang split-operator propagation: half step of the local 2×2 channel
/// Hamiltonian, exact kinetic step in momentum space, half step again.
///
/// The step is shrunk so each sampling interval holds a whole number of
/// steps. `dt · ω_osc` may not exceed [`MAX_PHASE_PER_STEP`].
pub fn propagate_sector(
    spectral: &SpectralResult,
    coupling: &GridCoupling,
    initial: &SectorWavefunction,
    grid: &TimeGrid,
    dt: f64,
) -> Result<GridTraces> {
    let spec = &spectral.spec;
    if initial.psi_e.len() != spec.points || initial.psi_g.len() != spec.points {
        return Err(Error::param("initial", "wavefunction length does not match the grid"));
    }
    let bound = MAX_PHASE_PER_STEP / spec.omega_osc();
    if !(dt.is_finite() && dt > 0.0 && dt <= bound) {
        return Err(Error::TimeStep { dt, bound });
    }
    let sub = if grid.len() > 1 {
        (grid.step() / dt).ceil().max(1.0) as usize
    } else {
        0
    };
    let h = if sub > 0 { grid.step() / sub as f64 } else { dt };

    let dx = spec.dx();
    let xs = spec.xs();
    let mut stepper = Stepper::new(spec, coupling, h);
    let mut e = initial.psi_e.clone();
    let mut g = initial.psi_g.clone();
    let mut wf = SectorWavefunction {
        psi_e: Vec::new(),
        psi_g: Vec::new(),
        dx,
        time: initial.time,
    };

    // advance to the first sample time
    let lead = ((grid.start() - initial.time) / h).round();
    if lead < 0.0 {
        return Err(Error::param("window", "starts before the initial state"));
    }
    for _ in 0..lead as usize {
        stepper.step(&mut e, &mut g);
    }

    let n0 = initial.norm_sqr();
    let e_ref = stepper.energy(&initial.psi_e, &initial.psi_g, dx);
    let mut out = GridTraces {
        times: grid.times(),
        rho_rr: Vec::with_capacity(grid.len()),
        rho_rr_raw: Vec::with_capacity(grid.len()),
        rho_ee: Vec::with_capacity(grid.len()),
        residual: Vec::with_capacity(grid.len()),
        max_norm_defect: 0.0,
        max_energy_drift: 0.0,
        dt: h,
        final_state: initial.clone(),
    };
    for k in 0..grid.len() {
        if k > 0 {
            for _ in 0..sub {
                stepper.step(&mut e, &mut g);
            }
        }
        wf.psi_e = std::mem::take(&mut e);
        wf.psi_g = std::mem::take(&mut g);
        let proj = project_to_doublet(&wf, spectral)?;
        let raw: f64 = xs
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(j, _)| wf.psi_e[j].norm_sqr() + wf.psi_g[j].norm_sqr())
            .sum::<f64>()
            * dx;
        out.rho_rr.push(proj.rho_rr());
        out.rho_rr_raw.push(raw);
        out.rho_ee.push(wf.excited_weight());
        out.residual.push(proj.residual);
        out.max_norm_defect = out.max_norm_defect.max((wf.norm_sqr() - n0).abs());
        let en = stepper.energy(&wf.psi_e, &wf.psi_g, dx);
        out.max_energy_drift = out.max_energy_drift.max((en - e_ref).abs() / e_ref.abs());
        e = std::mem::take(&mut wf.psi_e);
        g = std::mem::take(&mut wf.psi_g);
    }
    out.final_state = SectorWavefunction {
        psi_e: e,
        psi_g: g,
        dx,
        time: grid.end(),
    };
    Ok(out)
}
