//! Dynamics inside one excitation sector.
//!
//! For `N ≥ 1` the Hamiltonian acts on the 4-dimensional block
//! `{|N−1,+,e⟩, |N,+,g⟩, |N−1,−,e⟩, |N,−,g⟩}`. The block is
//!
//! ```text
//!   diag((Δ−δ)/2, (Δ+δ)/2, (−Δ−δ)/2, (−Δ+δ)/2)
//!   + g√N (−sinχ cosκ) (|1⟩⟨2| + |3⟩⟨4| + h.c.)
//!   + g√N ( cosχ sinκ) (|1⟩⟨4| + |3⟩⟨2| + h.c.)
//! ```
//!
//! with the `(N − 1/2)ω` offset removed. Its spectrum is `±Ω₊/2, ±Ω₋/2`.
//!
//! Two independent propagators are provided: the closed form valid on the
//! `χ = −π/4 − 2nπ` lattice ([`propagator_analytic`]) and exact
//! exponentiation through the spectral decomposition ([`propagator_oracle`]).

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SystemParams, C64};

/// `Λ = Ω₊Ω₋Ω²` below this fraction of `scale³` is treated as degenerate and
/// the analytic path defers to the oracle.
pub const DEGENERATE_TOL: f64 = 1e-6;

/// Tolerance for "δ = 0" and "κ = π/4" in the closed-form domain checks.
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SectorHamiltonian {
    pub n: usize,
    pub matrix: Matrix4<C64>,
}

impl SectorHamiltonian {
    pub fn build(params: &SystemParams, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::GroundSector(0));
        }
        Ok(SectorHamiltonian {
            n,
            matrix: block_matrix(
                params.g(),
                params.delta(),
                params.tunnel_split(),
                params.kappa(),
                params.chi(),
                n as f64,
            ),
        })
    }

    /// Numerically diagonalized spectrum, ascending.
    pub fn spectrum(&self) -> [f64; 4] {
        linalg::hermitian_eigen4(&self.matrix).0
    }
}

/// Same as [`SectorHamiltonian::build`].
pub fn build_sector_hamiltonian(params: &SystemParams, n: usize) -> Result<SectorHamiltonian> {
    SectorHamiltonian::build(params, n)
}

fn block_matrix(g: f64, delta: f64, tunnel: f64, kappa: f64, chi: f64, n: f64) -> Matrix4<C64> {
    let r = |x: f64| C64::new(x, 0.0);
    let gn = g * n.sqrt();
    let same_well = -gn * chi.sin() * kappa.cos();
    let cross = gn * chi.cos() * kappa.sin();
    let mut m = Matrix4::<C64>::zeros();
    m[(0, 0)] = r((tunnel - delta) / 2.0);
    m[(1, 1)] = r((tunnel + delta) / 2.0);
    m[(2, 2)] = r((-tunnel - delta) / 2.0);
    m[(3, 3)] = r((-tunnel + delta) / 2.0);
    for (i, j, v) in [(0, 1, same_well), (2, 3, same_well), (0, 3, cross), (2, 1, cross)] {
        m[(i, j)] = r(v);
        m[(j, i)] = r(v);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrequencies {
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// `Ω²` (itself a squared frequency).
    pub omega_sq: f64,
    /// `{−Ω₊/2, −Ω₋/2, Ω₋/2, Ω₊/2}`, ascending.
    pub lambdas: [f64; 4],
}

impl EigenFrequencies {
    /// `Ω_tun = (Ω₊ + Ω₋)/2`.
    pub fn tunnel(&self) -> f64 {
        0.5 * (self.omega_plus + self.omega_minus)
    }

    /// `Λ = Ω₊Ω₋Ω²`.
    pub fn lambda(&self) -> f64 {
        self.omega_plus * self.omega_minus * self.omega_sq
    }
}

/// Closed-form sector frequencies. `n` may be fractional, which the
/// collapse/revival conditions need.
pub(crate) fn frequencies_raw(
    g: f64,
    delta: f64,
    tunnel: f64,
    kappa: f64,
    chi: f64,
    n: f64,
) -> EigenFrequencies {
    let g2n = n * g * g;
    let (sk, ck) = kappa.sin_cos();
    let (sc, cc) = chi.sin_cos();
    let inner = 4.0 * g2n * ck * ck * sc * sc * (tunnel * tunnel + 4.0 * g2n * sk * sk * cc * cc)
        + delta * delta * tunnel * tunnel;
    let omega_sq = inner.max(0.0).sqrt();
    let (c, s) = (ck * ck * sc * sc, sk * sk * cc * cc);
    // 2Ng²(1 − cos2κ cos2χ) = 4Ng²(c + s)
    let base = 4.0 * g2n * (c + s) + delta * delta + tunnel * tunnel;
    let scale2 = g2n + delta * delta + tunnel * tunnel;
    assert!(
        inner >= -1e-12 * scale2 * scale2,
        "negative radicand in sector frequencies (inner = {inner})"
    );
    let plus2 = base + 2.0 * omega_sq;
    // Ω₋² = (base² − 4(Ω²)²)/Ω₊², with the numerator written as a sum of squares
    let split = 4.0 * g2n * (c - s) + delta * delta - tunnel * tunnel;
    let numer = split * split + 16.0 * g2n * s * delta * delta;
    let minus2 = if plus2 > 0.0 { numer / plus2 } else { 0.0 };
    let omega_plus = plus2.sqrt();
    let omega_minus = minus2.sqrt();
    EigenFrequencies {
        omega_plus,
        omega_minus,
        omega_sq,
        lambdas: [
            -omega_plus / 2.0,
            -omega_minus / 2.0,
            omega_minus / 2.0,
            omega_plus / 2.0,
        ],
    }
}

pub fn eigenfrequencies(params: &SystemParams, n: usize) -> Result<EigenFrequencies> {
    if n == 0 {
        return Err(Error::GroundSector(0));
    }
    Ok(frequencies_raw(
        params.g(),
        params.delta(),
        params.tunnel_split(),
        params.kappa(),
        params.chi(),
        n as f64,
    ))
}

/// `Ω_tun(N) = (Ω₊ + Ω₋)/2` for a possibly fractional excitation number.
pub fn tunnel_frequency(params: &SystemParams, n: f64) -> f64 {
    frequencies_raw(
        params.g(),
        params.delta(),
        params.tunnel_split(),
        params.kappa(),
        params.chi(),
        n,
    )
    .tunnel()
}

/// Which construction produced a [`SectorPropagator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorPath {
    Analytic,
    Oracle,
    /// Analytic requested, but `Λ` was degenerate so the oracle was used.
    OracleDegenerate,
}

/// `U(t) = exp(−iHt)` restricted to one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPropagator {
    pub n: usize,
    pub t: f64,
    pub matrix: Matrix4<C64>,
    pub path: PropagatorPath,
}

impl SectorPropagator {
    /// Analytic when the parameters allow it, oracle otherwise.
    pub fn auto(params: &SystemParams, n: usize, t: f64) -> Result<Self> {
        if params.analytic_capable() {
            propagator_analytic(params, n, t)
        } else {
            propagator_oracle(params, n, t)
        }
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [C64::new(0.0, 0.0); 4];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, x) in v.iter().enumerate() {
                *o += self.matrix[(i, j)] * x;
            }
        }
        out
    }

    /// `max |U†U − 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.matrix.adjoint() * self.matrix;
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::param("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

pub fn propagator_oracle(params: &SystemParams, n: usize, t: f64) -> Result<SectorPropagator> {
    check_time(t)?;
    let h = SectorHamiltonian::build(params, n)?;
    Ok(SectorPropagator {
        n,
        t,
        matrix: linalg::hermitian_exp4(&h.matrix, t),
        path: PropagatorPath::Oracle,
    })
}

/// Closed-form propagator on the `χ = −π/4 − 2nπ` lattice.
pub fn propagator_analytic(params: &SystemParams, n: usize, t: f64) -> Result<SectorPropagator> {
    check_time(t)?;
    if n == 0 {
        return Err(Error::GroundSector(0));
    }
    if !params.analytic_capable() {
        return Err(Error::OffLattice { chi: params.chi() });
    }
    let freqs = eigenfrequencies(params, n)?;
    let scale = (params.g() * (n as f64).sqrt())
        .max(params.delta().abs())
        .max(params.tunnel_split());
    if freqs.lambda() < DEGENERATE_TOL * scale.powi(3) {
        let mut u = propagator_oracle(params, n, t)?;
        u.path = PropagatorPath::OracleDegenerate;
        return Ok(u);
    }
    let c = ClosedForm {
        g: params.g(),
        n: n as f64,
        kappa: params.kappa(),
        freqs,
        t,
    };
    let (d, tun) = (params.delta(), params.tunnel_split());

    let mut m = Matrix4::<C64>::zeros();
    let mut set = |i: usize, j: usize, v: C64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    set(0, 0, c.u11(d, tun));
    set(1, 1, c.u11(-d, tun));
    set(2, 2, c.u11(d, -tun));
    set(3, 3, c.u11(-d, -tun));
    set(0, 1, c.u12(d, tun));
    set(2, 3, c.u12(d, -tun));
    set(0, 2, c.u13(d, tun));
    set(1, 3, c.u13(-d, tun));
    set(1, 2, c.u23(d, tun));
    set(0, 3, c.u23(d, -tun));

    Ok(SectorPropagator {
        n,
        t,
        matrix: m,
        path: PropagatorPath::Analytic,
    })
}

/// Printed matrix elements at χ = −π/4. The frequencies depend on δ and Δ
/// only through δ², Δ² and δ²Δ², so one set serves every sign flip used by
/// the symmetry relations.
struct ClosedForm {
    g: f64,
    n: f64,
    kappa: f64,
    freqs: EigenFrequencies,
    t: f64,
}

impl ClosedForm {
    fn omega(&self, mu: f64) -> f64 {
        if mu > 0.0 {
            self.freqs.omega_plus
        } else {
            self.freqs.omega_minus
        }
    }
    fn s(&self, mu: f64) -> f64 {
        (self.omega(mu) * self.t / 2.0).sin()
    }
    fn c(&self, mu: f64) -> f64 {
        (self.omega(mu) * self.t / 2.0).cos()
    }

    fn u11(&self, delta: f64, tunnel: f64) -> C64 {
        let i = C64::i();
        let o2 = self.freqs.omega_sq;
        let opm = self.freqs.omega_plus * self.freqs.omega_minus;
        let ck = self.kappa.cos();
        let xi = tunnel * (delta * delta + 2.0 * self.n * self.g * self.g * ck * ck - delta * tunnel);
        let mut sum = C64::new(0.0, 0.0);
        for mu in [1.0, -1.0] {
            sum += mu * self.s(mu) * self.omega(-mu) * (xi + mu * (tunnel - delta) * o2)
                - i * mu * opm * self.c(mu) * (delta * tunnel - mu * o2);
        }
        -i / (2.0 * self.freqs.lambda()) * sum
    }

    fn u12(&self, _delta: f64, tunnel: f64) -> C64 {
        let i = C64::i();
        let o2 = self.freqs.omega_sq;
        let opm = self.freqs.omega_plus * self.freqs.omega_minus;
        let (sk, ck) = self.kappa.sin_cos();
        let g2n = self.n * self.g * self.g;
        let mut sum = C64::new(0.0, 0.0);
        for mu in [1.0, -1.0] {
            sum += mu * self.s(mu) * self.omega(-mu) * (tunnel * tunnel + 2.0 * g2n * sk * sk + mu * o2)
                + i * mu * opm * tunnel * self.c(mu);
        }
        -i * self.n.sqrt() * self.g * ck / (SQRT_2 * self.freqs.lambda()) * sum
    }

    fn u13(&self, delta: f64, _tunnel: f64) -> C64 {
        let i = C64::i();
        let opm = self.freqs.omega_plus * self.freqs.omega_minus;
        let g2n = self.n * self.g * self.g;
        let mut sum = C64::new(0.0, 0.0);
        for mu in [1.0, -1.0] {
            sum += mu * delta * self.omega(mu) * self.s(-mu) + i * mu * opm * self.c(mu);
        }
        -i * g2n * (2.0 * self.kappa).sin() / (2.0 * self.freqs.lambda()) * sum
    }

    fn u23(&self, delta: f64, tunnel: f64) -> C64 {
        let i = C64::i();
        let o2 = self.freqs.omega_sq;
        let (sk, ck) = self.kappa.sin_cos();
        let g2n = self.n * self.g * self.g;
        let mut sum = 0.0;
        for mu in [1.0, -1.0] {
            sum += mu * self.omega(mu) * self.s(-mu) * (delta * tunnel + 2.0 * g2n * ck * ck - mu * o2);
        }
        i * self.n.sqrt() * self.g * sk / (SQRT_2 * self.freqs.lambda()) * sum
    }
}

/// Evolves the uncoupled pair `(|0,+,g⟩, |0,−,g⟩)`: phases `e^{∓iΔt/2}`.
pub fn evolve_ground(params: &SystemParams, t: f64, amps: [C64; 2]) -> [C64; 2] {
    let phi = params.tunnel_split() * t / 2.0;
    [
        amps[0] * C64::from_polar(1.0, -phi),
        amps[1] * C64::from_polar(1.0, phi),
    ]
}

fn check_resonant(params: &SystemParams) -> Result<()> {
    if params.delta().abs() > DOMAIN_TOL {
        return Err(Error::domain(format!(
            "resonant closed form requires delta = 0 (got {})",
            params.delta()
        )));
    }
    if (params.kappa() - FRAC_PI_4).abs() > DOMAIN_TOL {
        return Err(Error::domain(format!(
            "resonant closed form requires kappa = pi/4 (got {})",
            params.kappa()
        )));
    }
    if !params.analytic_capable() {
        return Err(Error::OffLattice { chi: params.chi() });
    }
    Ok(())
}

/// `ρ_LL(t)` for an atom prepared in `|N−1,R,e⟩` at `δ = 0`, `κ = π/4`.
pub fn resonant_rho_ll(params: &SystemParams, n: usize, t: f64) -> Result<f64> {
    check_resonant(params)?;
    let f = eigenfrequencies(params, n)?;
    let d2 = params.tunnel_split().powi(2);
    let ng2 = n as f64 * params.g().powi(2);
    if d2 == 0.0 {
        return Ok(0.0);
    }
    Ok(d2 / (d2 + ng2) * (f.tunnel() * t / 2.0).sin().powi(2))
}

/// `ρ_ee(t)` for an atom prepared in `|N−1,R,e⟩` at `δ = 0`, `κ = π/4`.
pub fn resonant_rho_ee(params: &SystemParams, n: usize, t: f64) -> Result<f64> {
    check_resonant(params)?;
    let f = eigenfrequencies(params, n)?;
    let d2 = params.tunnel_split().powi(2);
    let ng2 = n as f64 * params.g().powi(2);
    let mut num = 4.0 * d2 * ((f.omega_plus - f.omega_minus) / 2.0 * t).cos();
    for om in [f.omega_plus, f.omega_minus] {
        num += (om * om - d2) * (om * t).cos();
    }
    Ok(0.5 + num / (8.0 * (ng2 + d2)))
}

/// Effective Raman-like frequency in the far-detuned regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarDetuned {
    /// `Ω̄ = √(δ²Δ² + N²g⁴ sin²2κ)/δ`, signed like δ.
    pub omega_bar: f64,
    /// `Δ/g`, which should be ≪ 1.
    pub tunnel_over_g: f64,
    /// `g/|δ|`, which should be ≪ 1.
    pub g_over_detuning: f64,
}

pub fn far_detuned_effective(params: &SystemParams, n: usize) -> Result<FarDetuned> {
    let delta = params.delta();
    if delta == 0.0 {
        return Err(Error::domain("far-detuned regime requires delta != 0"));
    }
    if n == 0 {
        return Err(Error::GroundSector(0));
    }
    let g = params.g();
    let nf = n as f64;
    let s2k = (2.0 * params.kappa()).sin();
    let dd = delta * params.tunnel_split();
    let omega_bar = (dd * dd + nf * nf * g.powi(4) * s2k * s2k).sqrt() / delta;
    Ok(FarDetuned {
        omega_bar,
        tunnel_over_g: params.tunnel_split() / g,
        g_over_detuning: g / delta.abs(),
    })
}

/// `ρ_LL(t)` in the far-detuned regime for an atom prepared in `|N−1,−,e⟩`.
pub fn far_detuned_rho_ll(params: &SystemParams, n: usize, t: f64) -> Result<f64> {
    let fd = far_detuned_effective(params, n)?;
    let (g, delta) = (params.g(), params.delta());
    let ob = fd.omega_bar;
    let amp = n as f64 * delta * params.tunnel_split() * (2.0 * params.kappa()).sin()
        / (2.0 * ob * ob * (delta / g).powi(2));
    Ok(0.5 - amp * (1.0 - (ob * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(delta: f64, tunnel: f64, kappa: f64) -> SystemParams {
        SystemParams::in_units_of_g(delta, tunnel, kappa, -FRAC_PI_4).unwrap()
    }

    fn max_diff(a: &Matrix4<C64>, b: &Matrix4<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn sorted(mut v: [f64; 4]) -> [f64; 4] {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn hamiltonian_structure() {
        let p = params(0.7, 1.3, 0.4);
        let h = SectorHamiltonian::build(&p, 3).unwrap();
        let m = &h.matrix;
        assert!(max_diff(m, &m.adjoint()) < 1e-14);
        let diag = [(1.3 - 0.7) / 2.0, (1.3 + 0.7) / 2.0, (-1.3 - 0.7) / 2.0, (-1.3 + 0.7) / 2.0];
        for (k, d) in diag.iter().enumerate() {
            assert!((m[(k, k)].re - d).abs() < 1e-15);
        }
        let s3 = 3f64.sqrt();
        let same = -s3 * (-FRAC_PI_4).sin() * 0.4f64.cos();
        let cross = s3 * (-FRAC_PI_4).cos() * 0.4f64.sin();
        assert!((m[(0, 1)].re - same).abs() < 1e-15 && (m[(2, 3)].re - same).abs() < 1e-15);
        assert!((m[(0, 3)].re - cross).abs() < 1e-15 && (m[(2, 1)].re - cross).abs() < 1e-15);
        assert_eq!(m[(0, 2)], C64::new(0.0, 0.0));
        assert_eq!(m[(1, 3)], C64::new(0.0, 0.0));
        assert!(SectorHamiltonian::build(&p, 0).is_err());
    }

    #[test]
    fn factorized_spectrum_at_quarter_angles() {
        // kappa = pi/4, chi = -pi/4, delta = 0: Omega_pm = sqrt(D^2 + N) +- sqrt(N)
        let p = params(0.0, 5.0, FRAC_PI_4);
        let spec = SectorHamiltonian::build(&p, 26).unwrap().spectrum();
        let (a, b) = (51f64.sqrt(), 26f64.sqrt());
        let want = sorted([-(a + b) / 2.0, -(a - b) / 2.0, (a - b) / 2.0, (a + b) / 2.0]);
        for k in 0..4 {
            assert!((spec[k] - want[k]).abs() < 1e-12, "{spec:?} vs {want:?}");
        }
    }

    #[test]
    fn kappa_pi_decouples_internal_and_external() {
        for chi in [0.3, -1.1, 2.0] {
            let p = SystemParams::in_units_of_g(0.8, 1.7, PI, chi).unwrap();
            let n = 4;
            let spec = SectorHamiltonian::build(&p, n).unwrap().spectrum();
            let root = (4.0 * n as f64 * chi.sin().powi(2) + 0.64).sqrt();
            let (op, om) = ((root + 1.7).abs(), (root - 1.7).abs());
            let want = sorted([-op / 2.0, -om / 2.0, om / 2.0, op / 2.0]);
            let f = eigenfrequencies(&p, n).unwrap();
            for k in 0..4 {
                assert!((spec[k] - want[k]).abs() < 1e-12);
                assert!((f.lambdas[k] - want[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decoupled_limit_is_diagonal() {
        let p = SystemParams::new(1e-300, 0.6, 2.0, 0.9, 0.2, 1.0).unwrap();
        let f = eigenfrequencies(&p, 2).unwrap();
        assert!((f.omega_plus - 2.6).abs() < 1e-12);
        assert!((f.omega_minus - 1.4).abs() < 1e-12);
        assert!((f.omega_plus * f.omega_minus - (4.0f64 - 0.36).abs()).abs() < 1e-12);
    }

    #[test]
    fn tunnel_frequency_at_resonance() {
        let p = params(0.0, 2.0, FRAC_PI_4);
        let f = eigenfrequencies(&p, 26).unwrap();
        assert!((f.tunnel() - 30f64.sqrt()).abs() < 1e-12);
        assert!((f.tunnel() - 5.477225575).abs() < 1e-9);
    }

    #[test]
    fn zero_splitting_gives_well_local_rabi_frequencies() {
        // Delta = 0: the two wells see couplings g sqrt(N) (cos chi sin kappa -+ sin chi cos kappa)
        let (kappa, chi, delta, n) = (0.5, -0.3, 0.4, 3usize);
        let p = SystemParams::in_units_of_g(delta, 0.0, kappa, chi).unwrap();
        let f = eigenfrequencies(&p, n).unwrap();
        let gn = (n as f64).sqrt();
        let rabi = |s: f64| {
            let c = gn * (chi.cos() * kappa.sin() * s - chi.sin() * kappa.cos());
            (4.0 * c * c + delta * delta).sqrt()
        };
        let (r1, r2) = (rabi(1.0), rabi(-1.0));
        assert!((f.omega_plus - r1.max(r2)).abs() < 1e-12);
        assert!((f.omega_minus - r1.min(r2)).abs() < 1e-12);
    }

    #[test]
    fn analytic_matches_oracle_at_one_point() {
        let p = params(0.7, 1.3, 0.6);
        let a = propagator_analytic(&p, 3, 7.3).unwrap();
        let o = propagator_oracle(&p, 3, 7.3).unwrap();
        assert_eq!(a.path, PropagatorPath::Analytic);
        assert!(max_diff(&a.matrix, &o.matrix) < 1e-12);
    }

    #[test]
    fn analytic_identity_at_zero_time() {
        let p = params(0.3, 2.0, 1.1);
        let u = propagator_analytic(&p, 5, 0.0).unwrap();
        assert!(max_diff(&u.matrix, &Matrix4::identity()) < 1e-14);
    }

    #[test]
    fn analytic_refuses_off_lattice() {
        let p = SystemParams::in_units_of_g(0.0, 1.0, FRAC_PI_4, 0.3).unwrap();
        assert!(matches!(propagator_analytic(&p, 1, 1.0), Err(Error::OffLattice { .. })));
        assert!(propagator_oracle(&p, 1, 1.0).is_ok());
        assert!(propagator_oracle(&p, 1, -1.0).is_err());
    }

    #[test]
    fn degenerate_lambda_routes_to_oracle() {
        // Delta = 0 at resonance: Omega_- = 0
        let p = params(0.0, 0.0, FRAC_PI_4);
        let u = propagator_analytic(&p, 2, 3.0).unwrap();
        assert_eq!(u.path, PropagatorPath::OracleDegenerate);
        // cos kappa = 0 with delta = 0: Omega^2 = 0
        let p = params(0.0, 1.5, PI / 2.0);
        assert_eq!(propagator_analytic(&p, 2, 3.0).unwrap().path, PropagatorPath::OracleDegenerate);
    }

    #[test]
    fn near_degenerate_lambda_stays_accurate() {
        // sweep toward the Delta = delta = 0 corner; just above the threshold the
        // closed form must still agree with the oracle
        for tunnel in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4] {
            let p = params(0.0, tunnel, FRAC_PI_4);
            let a = propagator_analytic(&p, 1, 37.0).unwrap();
            let o = propagator_oracle(&p, 1, 37.0).unwrap();
            assert!(max_diff(&a.matrix, &o.matrix) < 1e-8, "Delta = {tunnel}: {:?}", a.path);
        }
    }

    #[test]
    fn oracle_group_property() {
        let p = SystemParams::in_units_of_g(1.2, 0.4, 0.8, 0.9).unwrap();
        let u1 = propagator_oracle(&p, 4, 2.5).unwrap();
        let u2 = propagator_oracle(&p, 4, 4.25).unwrap();
        let u12 = propagator_oracle(&p, 4, 6.75).unwrap();
        assert!(max_diff(&(u1.matrix * u2.matrix), &u12.matrix) < 1e-10);
        assert!(u12.unitarity_defect() < 1e-12);
    }

    #[test]
    fn oracle_eigenphases_follow_closed_form_frequencies() {
        let p = SystemParams::in_units_of_g(0.9, 1.4, 0.7, 1.3).unwrap();
        let t = 3.3;
        let u = propagator_oracle(&p, 2, t).unwrap();
        let (_, vecs) = linalg::hermitian_eigen4(&SectorHamiltonian::build(&p, 2).unwrap().matrix);
        let d = vecs.adjoint() * u.matrix * vecs;
        let f = eigenfrequencies(&p, 2).unwrap();
        for k in 0..4 {
            let want = C64::from_polar(1.0, -f.lambdas[k] * t);
            assert!((d[(k, k)] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn ground_pair_tunnels_at_bare_rate() {
        use crate::model::{basis_change_pm, basis_change_well};
        let tunnel = 0.37;
        let p = params(0.0, tunnel, FRAC_PI_4);
        let right = basis_change_pm([C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let lr = basis_change_well(evolve_ground(&p, PI / tunnel, right));
        assert!((lr[0].norm_sqr() - 1.0).abs() < 1e-14);
        for t in [0.3, 1.7, 5.0] {
            let lr = basis_change_well(evolve_ground(&p, t, right));
            assert!((lr[0].norm_sqr() - (tunnel * t / 2.0).sin().powi(2)).abs() < 1e-14);
        }
        let zero = params(0.0, 0.0, FRAC_PI_4);
        let a = [C64::new(0.6, 0.1), C64::new(-0.2, 0.7)];
        assert_eq!(evolve_ground(&zero, 9.0, a), a);
        let plus = evolve_ground(&p, 2.0, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        assert!((plus[0].norm() - 1.0).abs() < 1e-15 && plus[1].norm() == 0.0);
    }

    #[test]
    fn resonant_forms_domain() {
        let off = params(0.1, 1.0, FRAC_PI_4);
        assert!(resonant_rho_ll(&off, 1, 1.0).is_err());
        let off = params(0.0, 1.0, 0.3);
        assert!(resonant_rho_ee(&off, 1, 1.0).is_err());
        let zero = params(0.0, 0.0, FRAC_PI_4);
        for t in [0.0, 1.0, 100.0] {
            assert_eq!(resonant_rho_ll(&zero, 3, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn resonant_full_tunnel_period_returns() {
        let p = params(0.0, 2.0, FRAC_PI_4);
        let period = 2.0 * PI / eigenfrequencies(&p, 1).unwrap().tunnel();
        assert!(resonant_rho_ll(&p, 1, period).unwrap().abs() < 1e-14);
        assert!((resonant_rho_ee(&p, 1, 0.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn large_splitting_limits() {
        let p = params(0.0, 200.0, FRAC_PI_4);
        for t in [0.01, 0.02, 0.05] {
            let r = resonant_rho_ll(&p, 1, t).unwrap();
            assert!((r - (100.0 * t).sin().powi(2)).abs() < 5e-3);
        }
        // rho_ee reduces to the Rabi oscillation cos^2(sqrt(N) g t / 2)
        let p = params(0.0, 50.0, FRAC_PI_4);
        for t in [0.5, 1.0, 2.0] {
            let r = resonant_rho_ee(&p, 2, t).unwrap();
            assert!((r - (2f64.sqrt() * t / 2.0).cos().powi(2)).abs() < 0.02, "{t}: {r}");
        }
    }

    #[test]
    fn raman_frequency_special_values() {
        let tunnel = 0.05;
        let s2k = (2.0 * 0.6f64).sin();
        let p = params(-s2k / tunnel, tunnel, 0.6);
        let fd = far_detuned_effective(&p, 1).unwrap();
        assert!((fd.omega_bar.abs() - SQRT_2 * tunnel).abs() < 1e-14);
        let p = params(7.0, 0.2, PI / 2.0);
        assert!((far_detuned_effective(&p, 3).unwrap().omega_bar - 0.2).abs() < 1e-14);
        assert!(far_detuned_effective(&params(0.0, 0.2, 0.5), 1).is_err());
        assert!(far_detuned_rho_ll(&params(0.0, 0.2, 0.5), 1, 1.0).is_err());
    }

    #[test]
    fn raman_special_case_reaches_left_well() {
        let tunnel = 0.05;
        let p = params(-1.0 / tunnel, tunnel, FRAC_PI_4);
        let t = PI / (SQRT_2 * tunnel);
        assert!((far_detuned_rho_ll(&p, 1, t).unwrap() - 1.0).abs() < 1e-12);
        assert!((far_detuned_rho_ll(&p, 1, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // opposite detuning sends it to the right well
        let p = params(1.0 / tunnel, tunnel, FRAC_PI_4);
        assert!(far_detuned_rho_ll(&p, 1, t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn raman_form_tracks_full_dynamics() {
        let (tunnel, delta) = (0.1, -6.0);
        let p = params(delta, tunnel, 0.5);
        let fd = far_detuned_effective(&p, 1).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.1 * PI / fd.omega_bar.abs();
            let u = propagator_oracle(&p, 1, t).unwrap();
            let psi = u.apply(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
            let rll = ((psi[0] - psi[2]).norm_sqr() + (psi[1] - psi[3]).norm_sqr()) / 2.0;
            let want = far_detuned_rho_ll(&p, 1, t).unwrap();
            assert!((rll - want).abs() < 5.0 * tunnel, "{t}: {rll} vs {want}");
            assert!((0.0..=1.0).contains(&want));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]

            #[test]
            fn closed_form_spectrum_matches_diagonalization(
                delta in -10.0..10.0f64, tunnel in 0.0..10.0f64,
                kappa in 0.0..PI, chi in -PI..PI, n in 1usize..50,
            ) {
                let p = SystemParams::in_units_of_g(delta, tunnel, kappa, chi).unwrap();
                let spec = SectorHamiltonian::build(&p, n).unwrap().spectrum();
                let f = eigenfrequencies(&p, n).unwrap();
                prop_assert!(f.omega_plus >= f.omega_minus && f.omega_minus >= 0.0 && f.omega_sq >= 0.0);
                for k in 0..4 {
                    prop_assert!((spec[k] - f.lambdas[k]).abs() < 1e-10, "{:?} vs {:?}", spec, f.lambdas);
                }
            }

            #[test]
            fn symmetry_relations_hold_for_oracle(
                delta in -5.0..5.0f64, tunnel in 0.0..5.0f64,
                kappa in 0.0..PI, chi in -PI..PI, n in 1usize..20, t in 0.0..30.0f64,
            ) {
                let u = |d: f64, tn: f64| {
                    let h = block_matrix(1.0, d, tn, kappa, chi, n as f64);
                    linalg::hermitian_exp4(&h, t)
                };
                let base = u(delta, tunnel);
                let (md, mt, mdt) = (u(-delta, tunnel), u(delta, -tunnel), u(-delta, -tunnel));
                let close = |a: C64, b: C64| (a - b).norm() < 1e-8;
                // U22(d,D) = U33(-d,-D) = U44(d,-D) = U11(-d,D)
                prop_assert!(close(base[(1, 1)], mdt[(2, 2)]));
                prop_assert!(close(base[(1, 1)], mt[(3, 3)]));
                prop_assert!(close(base[(1, 1)], md[(0, 0)]));
                // U24(d,D) = U13(-d,D)
                prop_assert!(close(base[(1, 3)], md[(0, 2)]));
                // U14(d,D) = U23(d,-D) = U23(-d,D)
                prop_assert!(close(base[(0, 3)], mt[(1, 2)]));
                prop_assert!(close(base[(0, 3)], md[(1, 2)]));
                // U34(d,D) = U12(d,-D)
                prop_assert!(close(base[(2, 3)], mt[(0, 1)]));
                // U_ij = U_ji
                prop_assert!((base - base.transpose()).iter().all(|z| z.norm() < 1e-10));
            }
        }
    }
}
