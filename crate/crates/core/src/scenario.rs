//! Batch scenarios: a flat `key = value` config, validation, and runners that
//! write a CSV series and a plain-text report.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::control::{left_well_protocol, parse_schedule, run_protocol, superposition_schedule, tokens_with_columns, ProtocolStep};
use crate::envelope::{detect_revival, tunnel_at_photons};
use crate::error::{Error, Result};
use crate::grid::{
    evolve_projected, project_to_doublet, projected_sector_matrix, propagate_sector, solve_double_well,
    wkb_splitting_at, DoubleWellSpec, GridCoupling, SectorWavefunction,
};
use crate::model::{CompositeState, Internal, SystemParams, Well, C64};
use crate::observables::{
    highest_frequency, initial_state, snapshot, trace_state, FieldKind, FieldSpec, Observable, Snapshot, TimeGrid,
    Traces,
};
use crate::sector::{eigenfrequencies, far_detuned_rho_ll, resonant_rho_ll};
use crate::signal::{power_spectrum, spectral_peaks, Window};
use crate::VERSION;

/// Version of the CSV and report layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub const SERIES_HEADER: &str = "gt,rho_LL,rho_RR,rho_ee,x_mean_over_halfb";
pub const GRID_HEADER: &str = "gt,rho_RR_doublet,rho_RR_raw,rho_ee,outside_doublet";
pub const SPECTRUM_HEADER: &str = "k,energy";

/// Relative FFT power above which a spectral line is reported.
const PEAK_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Resonant,
    Detuned,
    CollapseRevival,
    Protocol,
    GridValidation,
    Spectrum,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Resonant,
        Kind::Detuned,
        Kind::CollapseRevival,
        Kind::Protocol,
        Kind::GridValidation,
        Kind::Spectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Resonant => "resonant",
            Kind::Detuned => "detuned",
            Kind::CollapseRevival => "collapse_revival",
            Kind::Protocol => "protocol",
            Kind::GridValidation => "grid_validation",
            Kind::Spectrum => "spectrum",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Kind::Resonant => "delta = 0 sector dynamics, checked against the resonant closed form",
            Kind::Detuned => "general detuning; spectral lines of <x> and the far-detuned formula",
            Kind::CollapseRevival => "coherent field; measured collapse and revival against predictions",
            Kind::Protocol => "pi-pulse / free-evolution schedule scored against a target state",
            Kind::GridValidation => "spatial-grid propagation of one sector against the two-level model",
            Kind::Spectrum => "low-lying spectrum of the double well and the WKB estimate",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// `(key, default, meaning)` for every recognised config key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("kind", "(required)", "resonant | detuned | collapse_revival | protocol | grid_validation | spectrum"),
    ("delta", "0 (protocol: -1/tunnel)", "detuning delta/g"),
    ("tunnel", "1", "tunnel splitting Delta/g (ignored by grid kinds)"),
    ("kappa", "pi/4", "well-separation phase k b/2; numbers or forms like 3pi/4"),
    ("chi", "-pi/4", "mode offset phase k x0"),
    ("field", "fock", "fock | coherent"),
    ("photons", "0", "Fock photon number"),
    ("alpha", "5 for collapse_revival, else 0", "coherent amplitude |alpha|"),
    ("alpha_phase", "0", "coherent amplitude phase"),
    ("tail", "1e-12", "coherent probability mass allowed outside the kept photon numbers"),
    ("well", "right (protocol: minus)", "left | right | plus | minus"),
    ("internal", "excited (protocol: ground)", "ground | excited"),
    ("t_start", "0", "window start, units of 1/g"),
    ("t_end", "100", "window end, units of 1/g"),
    ("samples", "4096", "sample count of the window"),
    ("output", "config file stem", "output prefix, relative to the config directory"),
    ("theta", "pi", "protocol angle; free evolution lasts theta/(sqrt2 Delta)"),
    ("schedule", "(none)", "protocol schedule file overriding theta"),
    ("target", "left", "protocol target well, atom in its ground state"),
    ("g", "0.01", "grid coupling in units of the trap energy scale"),
    ("quartic", "0.08", "A in V = A x^4 - B x^2"),
    ("quadratic", "1", "B in V = A x^4 - B x^2"),
    ("mass", "1", "particle mass"),
    ("x_min", "-8", "grid start"),
    ("x_max", "8", "grid end"),
    ("points", "1024", "grid points"),
    ("dt", "0.05", "grid propagation step in trap time units"),
    ("gaussian_check", "false", "also propagate a Gaussian right-well initial state"),
];

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub delta: f64,
    pub tunnel: f64,
    pub kappa: f64,
    pub chi: f64,
    pub field: FieldSpec,
    pub well: Well,
    pub internal: Internal,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub output: String,
    pub theta: f64,
    pub schedule: Option<PathBuf>,
    pub target: Well,
    pub g: f64,
    pub well_spec: DoubleWellSpec,
    pub dt: f64,
    pub gaussian_check: bool,
    /// Non-fatal adjustments made while parsing.
    pub warnings: Vec<String>,
}

struct Entry<'a> {
    line: usize,
    column: usize,
    value: &'a str,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses a number, or an angle such as `pi`, `-pi/4`, `3pi/4`, `0.5*pi`.
pub fn parse_angle(s: &str) -> Option<f64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, b.parse::<f64>().ok()?),
        None => (t.as_str(), 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim_end_matches('*');
    let c = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(c * PI / den)
}

impl<'a> Entry<'a> {
    fn number(&self, key: &str) -> Result<f64> {
        let v = self
            .value
            .parse::<f64>()
            .map_err(|_| parse_err(self.line, self.column, format!("{key}: '{}' is not a number", self.value)))?;
        if !v.is_finite() {
            return Err(parse_err(self.line, self.column, format!("{key} must be finite")));
        }
        Ok(v)
    }

    fn angle(&self, key: &str) -> Result<f64> {
        parse_angle(self.value)
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(self.line, self.column, format!("{key}: '{}' is not an angle", self.value)))
    }

    fn count(&self, key: &str) -> Result<usize> {
        self.value
            .parse::<usize>()
            .map_err(|_| parse_err(self.line, self.column, format!("{key}: '{}' is not a non-negative integer", self.value)))
    }

    fn well(&self, key: &str) -> Result<Well> {
        match self.value {
            "left" => Ok(Well::Left),
            "right" => Ok(Well::Right),
            "plus" => Ok(Well::Plus),
            "minus" => Ok(Well::Minus),
            other => Err(parse_err(
                self.line,
                self.column,
                format!("{key}: '{other}' is not one of left, right, plus, minus"),
            )),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(parse_err(self.line, self.column, format!("{key}: '{other}' is not a boolean"))),
        }
    }
}

/// Parses config text. `stem` names the default output prefix and
/// `base_dir` resolves a relative schedule path.
pub fn parse_config(text: &str, stem: &str, base_dir: &Path) -> Result<Scenario> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let lead = body.len() - body.trim_start().len();
        let Some(eq) = body.find('=') else {
            return Err(parse_err(line, lead + 1, "expected key = value"));
        };
        let key = body[..eq].trim();
        if key.is_empty() || tokens_with_columns(key).count() != 1 {
            return Err(parse_err(line, lead + 1, format!("malformed key '{key}'")));
        }
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(parse_err(line, lead + 1, format!("unknown key '{key}'")));
        }
        let after = &body[eq + 1..];
        let value = after.trim();
        let column = eq + 2 + (after.len() - after.trim_start().len());
        if value.is_empty() {
            return Err(parse_err(line, column, format!("{key} has no value")));
        }
        if entries.contains_key(key) {
            return Err(parse_err(line, lead + 1, format!("duplicate key '{key}'")));
        }
        entries.insert(key, Entry { line, column, value });
    }
    if entries.is_empty() {
        return Err(parse_err(1, 1, "config is empty"));
    }
    let kind_entry = entries
        .get("kind")
        .ok_or_else(|| parse_err(1, 1, "missing required key 'kind'"))?;
    let kind = Kind::parse(kind_entry.value).ok_or_else(|| {
        parse_err(
            kind_entry.line,
            kind_entry.column,
            format!("unknown kind '{}'", kind_entry.value),
        )
    })?;

    let get = |k: &str| entries.get(k);
    let num = |k: &str, d: f64| get(k).map_or(Ok(d), |e| e.number(k));
    let mut warnings = Vec::new();

    let tunnel = num("tunnel", 1.0)?;
    let delta = match get("delta") {
        Some(e) => e.number("delta")?,
        None if kind == Kind::Protocol && tunnel > 0.0 => -1.0 / tunnel,
        None => 0.0,
    };
    let mut kappa = get("kappa").map_or(Ok(FRAC_PI_4), |e| e.angle("kappa"))?;
    if !(0.0..2.0 * PI).contains(&kappa) {
        let wrapped = kappa.rem_euclid(2.0 * PI);
        warnings.push(format!("kappa = {kappa} normalized to {wrapped} in [0, 2pi)"));
        kappa = wrapped;
    }
    let chi = get("chi").map_or(Ok(-FRAC_PI_4), |e| e.angle("chi"))?;

    let tail = num("tail", crate::observables::DEFAULT_TAIL)?;
    let field_kind = match get("field").map(|e| (e, e.value)) {
        None | Some((_, "fock")) => FieldKind::Fock(get("photons").map_or(Ok(0), |e| e.count("photons"))?),
        Some((_, "coherent")) => {
            let default_alpha = if kind == Kind::CollapseRevival { 5.0 } else { 0.0 };
            let a = num("alpha", default_alpha)?;
            let ph = get("alpha_phase").map_or(Ok(0.0), |e| e.angle("alpha_phase"))?;
            FieldKind::Coherent(C64::from_polar(a, ph))
        }
        Some((e, other)) => {
            return Err(parse_err(e.line, e.column, format!("field: '{other}' is not fock or coherent")));
        }
    };
    let field = FieldSpec {
        kind: field_kind,
        truncation_tail: tail,
    };
    let protocol = kind == Kind::Protocol;
    let well = get("well").map_or(Ok(if protocol { Well::Minus } else { Well::Right }), |e| e.well("well"))?;
    let internal = match get("internal") {
        None if protocol => Internal::Ground,
        None => Internal::Excited,
        Some(e) => match e.value {
            "ground" => Internal::Ground,
            "excited" => Internal::Excited,
            other => {
                return Err(parse_err(e.line, e.column, format!("internal: '{other}' is not ground or excited")));
            }
        },
    };

    let defaults = DoubleWellSpec::default();
    let well_spec = DoubleWellSpec {
        quartic: num("quartic", defaults.quartic)?,
        quadratic: num("quadratic", defaults.quadratic)?,
        mass: num("mass", defaults.mass)?,
        x_min: num("x_min", defaults.x_min)?,
        x_max: num("x_max", defaults.x_max)?,
        points: get("points").map_or(Ok(defaults.points), |e| e.count("points"))?,
    };

    Ok(Scenario {
        kind,
        delta,
        tunnel,
        kappa,
        chi,
        field,
        well,
        internal,
        t_start: num("t_start", 0.0)?,
        t_end: num("t_end", 100.0)?,
        samples: get("samples").map_or(Ok(crate::observables::DEFAULT_SAMPLES), |e| e.count("samples"))?,
        output: get("output").map_or_else(|| stem.to_string(), |e| e.value.to_string()),
        theta: get("theta").map_or(Ok(PI), |e| e.angle("theta"))?,
        schedule: get("schedule").map(|e| base_dir.join(e.value)),
        target: get("target").map_or(Ok(Well::Left), |e| e.well("target"))?,
        g: num("g", 0.01)?,
        well_spec,
        dt: num("dt", crate::grid::DEFAULT_DT)?,
        gaussian_check: get("gaussian_check").map_or(Ok(false), |e| e.boolean("gaussian_check"))?,
        warnings,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, stem, base)
}

fn fmt_well(w: Well) -> &'static str {
    match w {
        Well::Left => "left",
        Well::Right => "right",
        Well::Plus => "plus",
        Well::Minus => "minus",
    }
}

impl Scenario {
    /// Canonical `key = value` form; parsing it yields the same scenario.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("kind", self.kind.name().into());
        kv("delta", format!("{:?}", self.delta));
        kv("tunnel", format!("{:?}", self.tunnel));
        kv("kappa", format!("{:?}", self.kappa));
        kv("chi", format!("{:?}", self.chi));
        match self.field.kind {
            FieldKind::Fock(n) => {
                kv("field", "fock".into());
                kv("photons", n.to_string());
            }
            FieldKind::Coherent(a) => {
                kv("field", "coherent".into());
                kv("alpha", format!("{:?}", a.norm()));
                kv("alpha_phase", format!("{:?}", a.arg()));
            }
        }
        kv("tail", format!("{:?}", self.field.truncation_tail));
        kv("well", fmt_well(self.well).into());
        kv(
            "internal",
            match self.internal {
                Internal::Ground => "ground",
                Internal::Excited => "excited",
            }
            .into(),
        );
        kv("t_start", format!("{:?}", self.t_start));
        kv("t_end", format!("{:?}", self.t_end));
        kv("samples", self.samples.to_string());
        kv("output", self.output.clone());
        kv("theta", format!("{:?}", self.theta));
        if let Some(p) = &self.schedule {
            kv("schedule", p.display().to_string());
        }
        kv("target", fmt_well(self.target).into());
        kv("g", format!("{:?}", self.g));
        kv("quartic", format!("{:?}", self.well_spec.quartic));
        kv("quadratic", format!("{:?}", self.well_spec.quadratic));
        kv("mass", format!("{:?}", self.well_spec.mass));
        kv("x_min", format!("{:?}", self.well_spec.x_min));
        kv("x_max", format!("{:?}", self.well_spec.x_max));
        kv("points", self.well_spec.points.to_string());
        kv("dt", format!("{:?}", self.dt));
        kv("gaussian_check", self.gaussian_check.to_string());
        s
    }

    /// Parameters in units of `g` with `b/2 = 1`.
    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::in_units_of_g(self.delta, self.tunnel, self.kappa, self.chi)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_start, self.t_end, self.samples)
    }

    /// Checks every precondition that does not require running the physics.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Kind::Spectrum => self.well_spec.validate(),
            Kind::GridValidation => {
                self.well_spec.validate()?;
                self.time_grid()?;
                if self.g.is_nan() || self.g <= 0.0 {
                    return Err(Error::param("g", format!("must be > 0, got {}", self.g)));
                }
                let bound = crate::grid::MAX_PHASE_PER_STEP / self.well_spec.omega_osc();
                if !(self.dt > 0.0 && self.dt <= bound) {
                    return Err(Error::TimeStep { dt: self.dt, bound });
                }
                if self.kappa.is_nan() || self.kappa <= 0.0 {
                    return Err(Error::param("kappa", "grid geometry needs kappa > 0"));
                }
                Ok(())
            }
            Kind::Protocol => {
                let params = self.params()?;
                if let Some(path) = &self.schedule {
                    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                    parse_schedule(&text)?;
                } else {
                    superposition_schedule(&params, self.theta)?;
                }
                if !matches!(self.field.kind, FieldKind::Fock(_)) {
                    return Err(Error::param("field", "protocol targets need a Fock field"));
                }
                Ok(())
            }
            Kind::Resonant | Kind::Detuned | Kind::CollapseRevival => {
                let params = self.params()?;
                if self.kind == Kind::Resonant && self.delta != 0.0 {
                    return Err(Error::domain(format!("resonant scenarios need delta = 0, got {}", self.delta)));
                }
                if self.kind == Kind::CollapseRevival && !matches!(self.field.kind, FieldKind::Coherent(_)) {
                    return Err(Error::param("field", "collapse_revival needs a coherent field"));
                }
                let grid = self.time_grid()?;
                let state = initial_state(&self.field, self.well, self.internal)?;
                check_sampling(&state, &params, &grid)?;
                Ok(())
            }
        }
    }
}

fn check_sampling(state: &CompositeState, params: &SystemParams, grid: &TimeGrid) -> Result<()> {
    let top = highest_frequency(state, params);
    if grid.len() > 1 && top > 0.0 && grid.step() >= PI / top {
        return Err(Error::param(
            "samples",
            format!(
                "step {:.4e} does not resolve the highest frequency {top:.4e} (need step < {:.4e})",
                grid.step(),
                PI / top
            ),
        ));
    }
    Ok(())
}

/// Files written by [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
    /// Report body, also written to `<prefix>_report.txt`.
    pub report: String,
}

/// Plain `key = value` report accumulator.
#[derive(Debug, Default)]
struct Report {
    body: String,
}

impl Report {
    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let mut text = value.to_string();
        // plain decimal rendering of tiny or huge floats is unreadable
        if let Ok(v) = text.parse::<f64>() {
            if v != 0.0 && !(1e-4..1e9).contains(&v.abs()) {
                text = format!("{v:e}");
            }
        }
        let _ = writeln!(self.body, "{key} = {text}");
    }

    fn section(&mut self, name: &str) {
        let _ = writeln!(self.body, "\n[{name}]");
    }
}

fn csv_number(v: f64) -> String {
    format!("{v:.11e}")
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}")?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(csv_number).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_series(path: &Path, trace: &Traces) -> Result<()> {
    let half = trace.meta.params.half_sep();
    write_rows(
        path,
        SERIES_HEADER,
        (0..trace.times.len()).map(|k| {
            vec![
                trace.times[k] * trace.meta.params.g(),
                trace.rho_ll[k],
                trace.rho_rr[k],
                trace.rho_ee[k],
                trace.x_mean[k] / half,
            ]
        }),
    )
}

/// Runs a scenario and writes its outputs under `out_dir`.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<Outputs> {
    sc.validate()?;
    let prefix = out_dir.join(&sc.output);
    if let Some(parent) = prefix.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
    }
    let file = |suffix: &str| {
        let mut p = prefix.clone().into_os_string();
        p.push(suffix);
        PathBuf::from(p)
    };

    let mut rep = Report::default();
    rep.line("cavtun_version", VERSION);
    rep.line("schema_version", SCHEMA_VERSION);
    rep.line("series_header", SERIES_HEADER);
    for w in &sc.warnings {
        rep.line("warning", w);
    }
    rep.section("parameters");
    rep.body.push_str(&sc.to_config_string());
    rep.section("results");

    let mut files = Vec::new();
    match sc.kind {
        Kind::Resonant | Kind::Detuned | Kind::CollapseRevival => {
            let params = sc.params()?;
            let grid = sc.time_grid()?;
            let state = initial_state(&sc.field, sc.well, sc.internal)?;
            let trace = trace_state(&state, &params, &grid, Some(sc.field))?;
            let path = file("_series.csv");
            write_series(&path, &trace)?;
            files.push(path);
            rep.line("max_sector", trace.meta.max_sector);
            rep.line("discarded_tail", trace.meta.discarded_tail);
            report_dynamics(sc, &params, &trace, &mut rep)?;
        }
        Kind::Protocol => run_protocol_kind(sc, &file, &mut files, &mut rep)?,
        Kind::GridValidation => run_grid_kind(sc, &file, &mut files, &mut rep)?,
        Kind::Spectrum => {
            let spectral = solve_double_well(&sc.well_spec)?;
            let path = file("_spectrum.csv");
            write_rows(
                &path,
                SPECTRUM_HEADER,
                spectral.eigenvalues.iter().enumerate().map(|(k, &e)| vec![k as f64, e]),
            )?;
            files.push(path);
            rep.line("tunnel_split", spectral.tunnel_split);
            rep.line("gap_to_next_level", spectral.gap);
            rep.line("separation_b", spectral.separation);
            rep.line("convergence_shift", spectral.convergence_shift);
            match wkb_splitting_at(&sc.well_spec, spectral.eigenvalues[0]) {
                Ok(w) => {
                    rep.line("wkb_tunnel_split", w.tunnel_split);
                    rep.line("wkb_action", w.action);
                    rep.line("wkb_turning_point", w.turning_point);
                    rep.line("wkb_over_exact", w.tunnel_split / spectral.tunnel_split);
                }
                Err(e) => rep.line("wkb", e),
            }
        }
    }

    let report_path = file("_report.txt");
    fs::write(&report_path, &rep.body).map_err(|e| Error::Io(format!("{}: {e}", report_path.display())))?;
    files.push(report_path);
    Ok(Outputs {
        files,
        report: rep.body,
    })
}

fn report_dynamics(sc: &Scenario, params: &SystemParams, trace: &Traces, rep: &mut Report) -> Result<()> {
    let mean_n = sc.field.mean_photons();
    if let FieldKind::Fock(n) = sc.field.kind {
        let sector = n + (sc.internal == Internal::Excited) as usize;
        if sector > 0 {
            let f = eigenfrequencies(params, sector)?;
            rep.line("sector", sector);
            rep.line("omega_plus", f.omega_plus);
            rep.line("omega_minus", f.omega_minus);
            rep.line("omega_tunnel", f.tunnel());
            rep.line("half_difference", 0.5 * (f.omega_plus - f.omega_minus));
        }
        let prepared_right = sc.well == Well::Right && sc.internal == Internal::Excited;
        if sc.kind == Kind::Resonant && prepared_right && sector > 0 && params.analytic_capable() && (sc.kappa - FRAC_PI_4).abs() < 1e-12 {
            let mut dev = 0.0f64;
            for (t, v) in trace.times.iter().zip(&trace.rho_ll) {
                dev = dev.max((v - resonant_rho_ll(params, sector, *t)?).abs());
            }
            rep.line("closed_form_max_deviation_rho_LL", dev);
        }
        if sc.kind == Kind::Detuned && sc.well == Well::Minus && sc.internal == Internal::Excited && sector > 0 {
            let mut dev = 0.0f64;
            for (t, v) in trace.times.iter().zip(&trace.rho_ll) {
                dev = dev.max((v - far_detuned_rho_ll(params, sector, *t)?).abs());
            }
            rep.line("far_detuned_max_deviation_rho_LL", dev);
        }
    }
    if trace.times.len() > 1 {
        let dt = trace.times[1] - trace.times[0];
        let spec = power_spectrum(&trace.x_mean, dt, Window::Hann);
        let peaks = spectral_peaks(&spec, PEAK_THRESHOLD);
        let lines: Vec<String> = peaks.iter().map(|p| format!("{:.6}@{:.4}", p.omega, p.relative)).collect();
        rep.line("x_mean_spectral_lines", if lines.is_empty() { "none".into() } else { lines.join(" ") });
        rep.line("spectral_resolution", spec.resolution);
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    rep.line("mean_rho_LL", avg(&trace.rho_ll));
    rep.line("mean_rho_RR", avg(&trace.rho_rr));
    rep.line("mean_rho_ee", avg(&trace.rho_ee));
    if sc.kind == Kind::CollapseRevival {
        rep.line("mean_photons", mean_n);
        rep.line("omega_tunnel_at_mean", tunnel_at_photons(params, mean_n));
        let r = detect_revival(&trace.series(Observable::MeanPosition))?;
        rep.line("t_c_formula", r.t_c_formula);
        rep.line("t_c_exact", r.t_c_exact);
        rep.line("t_r_formula", r.t_r_formula);
        rep.line("t_r_exact", r.t_r_exact);
        rep.line("t_r_measured", r.t_r_measured);
        rep.line("initial_amplitude", r.initial_amplitude);
        rep.line("revival_amplitude", r.revival_amplitude);
        rep.line("collapse_minimum", r.collapse_minimum);
        rep.line("collapse_minimum_at", r.collapse_minimum_at);
        rep.line("collapsed", r.collapsed);
    }
    Ok(())
}

fn run_protocol_kind(
    sc: &Scenario,
    file: &dyn Fn(&str) -> PathBuf,
    files: &mut Vec<PathBuf>,
    rep: &mut Report,
) -> Result<()> {
    let params = sc.params()?;
    let steps: Vec<ProtocolStep> = match &sc.schedule {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_schedule(&text)?
        }
        None => superposition_schedule(&params, sc.theta)?,
    };
    let FieldKind::Fock(n) = sc.field.kind else {
        return Err(Error::param("field", "protocol targets need a Fock field"));
    };
    let initial = initial_state(&sc.field, sc.well, sc.internal)?;
    let target = initial_state(&FieldSpec::fock(n), sc.target, Internal::Ground)?;
    let result = run_protocol(&steps, &initial, &target)?;

    let mut t = 0.0;
    let mut rows = vec![(t, snapshot(&initial, &params))];
    for (step, state) in steps.iter().zip(&result.trajectory) {
        if let ProtocolStep::FreeEvolve { duration, .. } = step {
            t += duration;
        }
        rows.push((t, snapshot(state, &params)));
    }
    let path = file("_series.csv");
    write_rows(
        &path,
        SERIES_HEADER,
        rows.iter().map(|(t, s): &(f64, Snapshot)| vec![*t, s.rho_ll, s.rho_rr, s.rho_ee, s.x_mean / params.half_sep()]),
    )?;
    files.push(path);
    if sc.schedule.is_none() {
        let reference = left_well_protocol(sc.tunnel).ok();
        rep.line("matches_left_well_preparation", reference.is_some_and(|p| p.steps == steps));
    }
    rep.line("steps", steps.len());
    rep.line("fidelity", result.fidelity);
    rep.line("leakage", result.leakage);
    rep.line("infidelity", 1.0 - result.fidelity);
    Ok(())
}

fn run_grid_kind(
    sc: &Scenario,
    file: &dyn Fn(&str) -> PathBuf,
    files: &mut Vec<PathBuf>,
    rep: &mut Report,
) -> Result<()> {
    let spectral = solve_double_well(&sc.well_spec)?;
    let g = sc.g;
    let delta = sc.delta * g;
    let coupling = GridCoupling::from_angles(&spectral, g, delta, sc.kappa, sc.chi, 1)?;
    let params = coupling.two_level_params(&spectral)?;
    let grid = TimeGrid::new(sc.t_start / g, sc.t_end / g, sc.samples)?;
    let initial = SectorWavefunction::excited_right(&spectral);
    let traces = propagate_sector(&spectral, &coupling, &initial, &grid, sc.dt)?;

    // two-level model on the same samples
    let start = project_to_doublet(&initial, &spectral)?;
    let norm = (1.0 - start.residual).sqrt();
    let amps = start.amps.map(|a| a / norm);
    let sectors = BTreeMap::from([(1, amps)]);
    let state = CompositeState::new([C64::new(0.0, 0.0); 2], sectors)?;
    let analytic = trace_state(&state, &params, &grid, Some(FieldSpec::fock(0)))?;
    let path = file("_series.csv");
    write_series(&path, &analytic)?;
    files.push(path);
    let path = file("_grid_series.csv");
    write_rows(
        &path,
        GRID_HEADER,
        (0..traces.times.len()).map(|k| {
            vec![
                traces.times[k] * g,
                traces.rho_rr[k],
                traces.rho_rr_raw[k],
                traces.rho_ee[k],
                traces.residual[k],
            ]
        }),
    )?;
    files.push(path);

    let h = projected_sector_matrix(&spectral, &coupling);
    let mut dev = [0.0f64; 4];
    for (k, &t) in traces.times.iter().enumerate() {
        dev[0] = dev[0].max((traces.rho_rr[k] - analytic.rho_rr[k]).abs());
        dev[1] = dev[1].max((traces.rho_ee[k] - analytic.rho_ee[k]).abs());
        let a = evolve_projected(&h, amps, t);
        let rr = 0.5 * ((a[0] + a[2]).norm_sqr() + (a[1] + a[3]).norm_sqr());
        let ee = a[0].norm_sqr() + a[2].norm_sqr();
        dev[2] = dev[2].max((traces.rho_rr[k] - rr).abs());
        dev[3] = dev[3].max((traces.rho_ee[k] - ee).abs());
    }
    let rabi = (4.0 * g * g + delta * delta).sqrt();
    rep.line("tunnel_split", spectral.tunnel_split);
    rep.line("tunnel_over_g", spectral.tunnel_split / g);
    rep.line("gap_to_next_level", spectral.gap);
    rep.line("gap_over_rabi", spectral.gap / rabi);
    rep.line("separation_b", spectral.separation);
    rep.line("k", coupling.k);
    rep.line("x0", coupling.x0);
    rep.line("dt", traces.dt);
    rep.line("max_deviation_rho_RR", dev[0]);
    rep.line("max_deviation_rho_ee", dev[1]);
    rep.line("projected_model_deviation_rho_RR", dev[2]);
    rep.line("projected_model_deviation_rho_ee", dev[3]);
    rep.line("max_outside_doublet", traces.residual.iter().fold(0.0f64, |a, &b| a.max(b)));
    rep.line("max_norm_defect", traces.max_norm_defect);
    rep.line("max_energy_drift", traces.max_energy_drift);
    if sc.gaussian_check {
        let gauss = SectorWavefunction::excited_gaussian(&sc.well_spec);
        let alt = propagate_sector(&spectral, &coupling, &gauss, &grid, sc.dt)?;
        let mut d = [0.0f64; 2];
        for k in 0..alt.times.len() {
            d[0] = d[0].max((alt.rho_rr[k] - traces.rho_rr[k]).abs());
            d[1] = d[1].max((alt.rho_ee[k] - traces.rho_ee[k]).abs());
        }
        rep.line("gaussian_initial_outside_doublet", project_to_doublet(&gauss, &spectral)?.residual);
        rep.line("gaussian_shift_rho_RR", d[0]);
        rep.line("gaussian_shift_rho_ee", d[1]);
    }
    Ok(())
}
