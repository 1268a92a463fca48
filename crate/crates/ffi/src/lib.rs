//! C ABI for `cavtun`.
//!
//! Every fallible entry point returns a [`CavtunStatus`]; on failure a
//! human-readable message is available from [`cavtun_last_error`] on the same
//! thread. Parameters and states are opaque handles owned by the caller and
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cavtun::control::{left_well_protocol, run_protocol};
use cavtun::envelope::{collapse_time, revival_time, Prediction};
use cavtun::model::{Internal, Well, C64};
use cavtun::observables::{evolve, initial_state, snapshot, FieldSpec};
use cavtun::sector::{eigenfrequencies, SectorPropagator};
use cavtun::{CompositeState, Error, SystemParams};

/// Result codes. `Ok` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavtunStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DomainViolation = 3,
    NoRevival = 4,
    Numerical = 5,
    Panic = 6,
}

/// Initial external state of the atom.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavtunWell {
    Left = 0,
    Right = 1,
    Plus = 2,
    Minus = 3,
}

/// Initial internal state of the atom.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavtunInternal {
    Ground = 0,
    Excited = 1,
}

/// Reduced observables of a state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CavtunObservables {
    pub rho_ll: f64,
    pub rho_rr: f64,
    pub rho_ee: f64,
    pub x_mean: f64,
}

/// Opaque parameter record.
pub struct CavtunParams(SystemParams);

/// Opaque composite atom-field state.
pub struct CavtunState(CompositeState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CavtunStatus {
    match err {
        Error::InvalidParameter { .. } | Error::GroundSector(_) | Error::Parse { .. } | Error::Io(_) => {
            CavtunStatus::InvalidParameter
        }
        Error::Domain(_) | Error::OffLattice { .. } => CavtunStatus::DomainViolation,
        Error::NoRevival(_) => CavtunStatus::NoRevival,
        Error::GridTooCoarse(_) | Error::TimeStep { .. } | Error::Truncation { .. } => CavtunStatus::Numerical,
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), CavtunStatus>) -> CavtunStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CavtunStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            CavtunStatus::Panic
        }
    }
}

fn fail(err: Error) -> CavtunStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> CavtunStatus {
    set_error(format!("null pointer passed for `{what}`"));
    CavtunStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CavtunStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), CavtunStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn well_of(w: CavtunWell) -> Well {
    match w {
        CavtunWell::Left => Well::Left,
        CavtunWell::Right => Well::Right,
        CavtunWell::Plus => Well::Plus,
        CavtunWell::Minus => Well::Minus,
    }
}

fn internal_of(i: CavtunInternal) -> Internal {
    match i {
        CavtunInternal::Ground => Internal::Ground,
        CavtunInternal::Excited => Internal::Excited,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cavtun_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cavtun_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a parameter record. `out` receives the handle on success.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn cavtun_params_new(
    g: f64,
    delta: f64,
    tunnel_split: f64,
    kappa: f64,
    chi: f64,
    half_sep: f64,
    out: *mut *mut CavtunParams,
) -> CavtunStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = SystemParams::new(g, delta, tunnel_split, kappa, chi, half_sep).map_err(fail)?;
        write(out, Box::into_raw(Box::new(CavtunParams(p))), "out")
    })
}

/// Releases a parameter record. Null is ignored.
///
/// # Safety
/// `params` must be null or a handle from [`cavtun_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cavtun_params_free(params: *mut CavtunParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Eigenfrequencies `Ω₊`, `Ω₋` of the `n`-excitation sector.
///
/// # Safety
/// `params` must be a live handle; the outputs must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn cavtun_eigenfrequencies(
    params: *const CavtunParams,
    n: usize,
    omega_plus: *mut f64,
    omega_minus: *mut f64,
) -> CavtunStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let f = eigenfrequencies(&p.0, n).map_err(fail)?;
        write(omega_plus, f.omega_plus, "omega_plus")?;
        write(omega_minus, f.omega_minus, "omega_minus")
    })
}

/// Sector propagator `exp(−iHt)` as 16 real and 16 imaginary parts in
/// row-major order.
///
/// # Safety
/// `params` must be a live handle; `re` and `im` must each hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn cavtun_propagator(
    params: *const CavtunParams,
    n: usize,
    t: f64,
    re: *mut f64,
    im: *mut f64,
) -> CavtunStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if re.is_null() {
            return Err(null("re"));
        }
        if im.is_null() {
            return Err(null("im"));
        }
        let u = SectorPropagator::auto(&p.0, n, t).map_err(fail)?;
        for i in 0..4 {
            for j in 0..4 {
                let z = u.matrix[(i, j)];
                re.add(4 * i + j).write(z.re);
                im.add(4 * i + j).write(z.im);
            }
        }
        Ok(())
    })
}

unsafe fn new_state(field: FieldSpec, well: CavtunWell, internal: CavtunInternal, out: *mut *mut CavtunState) -> CavtunStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = initial_state(&field, well_of(well), internal_of(internal)).map_err(fail)?;
        write(out, Box::into_raw(Box::new(CavtunState(s))), "out")
    })
}

/// Product state of a Fock field with `photons` quanta and the given atom.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn cavtun_state_new_fock(
    photons: usize,
    well: CavtunWell,
    internal: CavtunInternal,
    out: *mut *mut CavtunState,
) -> CavtunStatus {
    new_state(FieldSpec::fock(photons), well, internal, out)
}

/// Product state of a coherent field `α` and the given atom, truncated at
/// the default tail weight.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn cavtun_state_new_coherent(
    alpha_re: f64,
    alpha_im: f64,
    well: CavtunWell,
    internal: CavtunInternal,
    out: *mut *mut CavtunState,
) -> CavtunStatus {
    new_state(FieldSpec::coherent(C64::new(alpha_re, alpha_im)), well, internal, out)
}

/// Evolves `state` by `t` in place.
///
/// # Safety
/// `state` and `params` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cavtun_state_evolve(state: *mut CavtunState, params: *const CavtunParams, t: f64) -> CavtunStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let s = state.as_mut().ok_or_else(|| null("state"))?;
        s.0 = evolve(&s.0, &p.0, t).map_err(fail)?;
        Ok(())
    })
}

/// Reduced populations and `⟨x⟩` of `state`; `params` supplies `b/2`.
///
/// # Safety
/// `state` and `params` must be live handles; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn cavtun_state_observables(
    state: *const CavtunState,
    params: *const CavtunParams,
    out: *mut CavtunObservables,
) -> CavtunStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let p = deref(params, "params")?;
        let snap = snapshot(&s.0, &p.0);
        write(
            out,
            CavtunObservables {
                rho_ll: snap.rho_ll,
                rho_rr: snap.rho_rr,
                rho_ee: snap.rho_ee,
                x_mean: snap.x_mean,
            },
            "out",
        )
    })
}

/// Releases a state. Null is ignored.
///
/// # Safety
/// `state` must be null or a handle from a `cavtun_state_new_*` function not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cavtun_state_free(state: *mut CavtunState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

unsafe fn write_prediction(
    pred: Result<Prediction, Error>,
    formula: *mut f64,
    exact: *mut f64,
) -> Result<(), CavtunStatus> {
    let pred = pred.map_err(fail)?;
    write(formula, pred.formula, "formula")?;
    write(exact, pred.exact, "exact")
}

/// Collapse time for mean photon number `n_mean`: the large-`n_mean`
/// estimate and the value from its defining condition.
///
/// # Safety
/// `params` must be a live handle; the outputs must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn cavtun_collapse_time(
    params: *const CavtunParams,
    n_mean: f64,
    formula: *mut f64,
    exact: *mut f64,
) -> CavtunStatus {
    guard(|| {
        let p = deref(params, "params")?;
        write_prediction(collapse_time(&p.0, n_mean), formula, exact)
    })
}

/// Revival time for mean photon number `n_mean`, as for
/// [`cavtun_collapse_time`].
///
/// # Safety
/// `params` must be a live handle; the outputs must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn cavtun_revival_time(
    params: *const CavtunParams,
    n_mean: f64,
    formula: *mut f64,
    exact: *mut f64,
) -> CavtunStatus {
    guard(|| {
        let p = deref(params, "params")?;
        write_prediction(revival_time(&p.0, n_mean), formula, exact)
    })
}

/// Fidelity and leakage of the left-well preparation at splitting
/// `tunnel_over_g` (units of `g`).
///
/// # Safety
/// The outputs must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn cavtun_protocol_fidelity(
    tunnel_over_g: f64,
    fidelity: *mut f64,
    leakage: *mut f64,
) -> CavtunStatus {
    guard(|| {
        let prep = left_well_protocol(tunnel_over_g).map_err(fail)?;
        let r = run_protocol(&prep.steps, &prep.initial, &prep.target).map_err(fail)?;
        write(fidelity, r.fidelity, "fidelity")?;
        write(leakage, r.leakage, "leakage")
    })
}
