//! Scenario files: flat `section.key = value` text, `#` comments.
//!
//! ```text
//! grid.m = 8
//! grid.n = 8
//! grid.delta_f = 15000
//! echo.tau_t = 5e-5
//! echo.nu_t = 1000
//! ```
//!
//! Only `grid.{m,n,delta_f}` and `echo.{tau_t,nu_t}` are required; every
//! other key has a default (see [`KEYS`]). The `rsma` and `mc` sections are
//! present only when at least one of their keys is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ddcrb_core::rsma::RsmaSetup;
use ddcrb_core::validation::{McConfig, SearchAxis};
use ddcrb_core::{EchoParams, GainModel, OtfsGrid, TfSymbols};
use num_complex::Complex64;

use crate::error::{as_config_error, CliError};

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "grid.m",
    "grid.n",
    "grid.delta_f",
    "grid.symbol_duration",
    "echo.tau_t",
    "echo.nu_t",
    "echo.beta_re",
    "echo.beta_im",
    "echo.alpha_ref_re",
    "echo.alpha_ref_im",
    "echo.tau_ref",
    "echo.sigma_echo_sq",
    "pilot.kind",
    "pilot.n",
    "pilot.i",
    "pilot.file",
    "rsma.users",
    "rsma.sigma_n_sq",
    "rsma.sigma_e_sq",
    "rsma.theta",
    "rsma.seed",
    "rsma.paths",
    "rsma.p_total",
    "rsma.common_fraction",
    "mc.trials",
    "mc.snr_db",
    "mc.tau_min",
    "mc.tau_max",
    "mc.tau_count",
    "mc.nu_min",
    "mc.nu_max",
    "mc.nu_count",
    "mc.seed",
    "mc.refine",
];

/// Default search-grid node count per axis for Monte-Carlo runs.
pub const DEFAULT_MC_COUNT: usize = 161;

#[derive(Debug, Clone, PartialEq)]
pub enum PilotSpec {
    SinglePilot { n: usize, i: usize },
    UniformUnit,
    /// CSV of `n,i,re,im` rows; absolute after parsing.
    CustomFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: OtfsGrid,
    pub echo: EchoParams,
    pub pilot: PilotSpec,
    pub rsma: Option<RsmaSetup>,
    pub mc: Option<McConfig>,
}

/// Raw key/value pairs as read from a file.
pub type KeyValues = BTreeMap<String, String>;

pub fn read_key_values(path: &Path) -> Result<KeyValues, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_key_values(&text, path)
}

pub fn parse_key_values(text: &str, origin: &Path) -> Result<KeyValues, CliError> {
    let mut map = KeyValues::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Syntax {
            path: origin.to_path_buf(),
            reason: format!("line {line_no}: expected `key = value`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::UnknownKey {
                key: key.to_string(),
                line: line_no,
            });
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Syntax {
                path: origin.to_path_buf(),
                reason: format!("line {line_no}: duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}

/// Resolves a possibly abbreviated key (`theta` -> `rsma.theta`).
pub fn resolve_key(key: &str) -> Result<&'static str, CliError> {
    if let Some(k) = KEYS.iter().find(|k| **k == key) {
        return Ok(k);
    }
    let matches: Vec<&'static str> = KEYS
        .iter()
        .copied()
        .filter(|k| k.rsplit('.').next() == Some(key))
        .collect();
    match matches.as_slice() {
        [one] => Ok(one),
        [] => Err(CliError::UnknownKey {
            key: key.to_string(),
            line: 0,
        }),
        _ => Err(CliError::Sweep(format!(
            "key `{key}` is ambiguous: {}",
            matches.join(", ")
        ))),
    }
}

fn get<T: std::str::FromStr>(map: &KeyValues, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| CliError::invalid(key, format!("`{v}`: {e}"))))
        .transpose()
}

fn require<T: std::str::FromStr>(map: &KeyValues, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    get(map, key)?.ok_or_else(|| CliError::MissingKey(key.to_string()))
}

fn get_bool(map: &KeyValues, key: &str) -> Result<Option<bool>, CliError> {
    map.get(key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(CliError::invalid(key, format!("`{v}` is not a boolean"))),
        })
        .transpose()
}

fn has_section(map: &KeyValues, section: &str) -> bool {
    map.keys().any(|k| k.starts_with(section))
}

impl Scenario {
    /// Parses and validates a scenario file. Relative pilot-file paths are
    /// resolved against the scenario's directory.
    pub fn from_file(path: &Path) -> Result<Scenario, CliError> {
        let map = read_key_values(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::from_map(&map, base)
    }

    pub fn from_map(map: &KeyValues, base_dir: &Path) -> Result<Scenario, CliError> {
        let m: usize = require(map, "grid.m")?;
        let n: usize = require(map, "grid.n")?;
        let delta_f: f64 = require(map, "grid.delta_f")?;
        let symbol_duration = get(map, "grid.symbol_duration")?.unwrap_or(1.0 / delta_f);
        let grid = OtfsGrid::new(m, n, delta_f, symbol_duration).map_err(as_config_error)?;

        let tau_t: f64 = require(map, "echo.tau_t")?;
        let nu_t: f64 = require(map, "echo.nu_t")?;
        let beta = Complex64::new(
            get(map, "echo.beta_re")?.unwrap_or(1.0),
            get(map, "echo.beta_im")?.unwrap_or(0.0),
        );
        let alpha_ref = Complex64::new(
            get(map, "echo.alpha_ref_re")?.unwrap_or(1.0),
            get(map, "echo.alpha_ref_im")?.unwrap_or(0.0),
        );
        if !(tau_t.is_finite() && tau_t > 0.0) {
            return Err(CliError::invalid("echo.tau_t", "delay must be finite and > 0"));
        }
        let tau_ref = get(map, "echo.tau_ref")?.unwrap_or(tau_t);
        let sigma_echo_sq = get(map, "echo.sigma_echo_sq")?.unwrap_or(1.0);
        let gain = GainModel::new(alpha_ref, tau_ref).map_err(as_config_error)?;
        let echo = EchoParams::new(tau_t, nu_t, beta, gain, sigma_echo_sq).map_err(as_config_error)?;

        let pilot = parse_pilot(map, base_dir, &grid)?;
        let rsma = if has_section(map, "rsma.") {
            Some(parse_rsma(map)?)
        } else {
            None
        };
        let mc = if has_section(map, "mc.") {
            Some(parse_mc(map, &echo, &grid)?)
        } else {
            None
        };
        Ok(Scenario {
            grid,
            echo,
            pilot,
            rsma,
            mc,
        })
    }

    /// TF symbols described by the pilot spec.
    pub fn symbols(&self) -> Result<TfSymbols, CliError> {
        match &self.pilot {
            PilotSpec::SinglePilot { n, i } => {
                TfSymbols::single_pilot(&self.grid, *n, *i).map_err(as_config_error)
            }
            PilotSpec::UniformUnit => Ok(TfSymbols::uniform_unit(&self.grid)),
            PilotSpec::CustomFile(path) => load_pilot_file(path, &self.grid),
        }
    }

    /// Fully resolved key/value pairs in [`KEYS`] order; re-parsing them
    /// yields an equal scenario.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        let f = |v: f64| format!("{v:?}");
        let g = &self.grid;
        let e = &self.echo;
        let mut out = vec![
            ("grid.m", g.m().to_string()),
            ("grid.n", g.n().to_string()),
            ("grid.delta_f", f(g.delta_f())),
            ("grid.symbol_duration", f(g.symbol_duration())),
            ("echo.tau_t", f(e.tau_t)),
            ("echo.nu_t", f(e.nu_t)),
            ("echo.beta_re", f(e.beta_t.re)),
            ("echo.beta_im", f(e.beta_t.im)),
            ("echo.alpha_ref_re", f(e.gain.alpha_ref.re)),
            ("echo.alpha_ref_im", f(e.gain.alpha_ref.im)),
            ("echo.tau_ref", f(e.gain.tau_ref)),
            ("echo.sigma_echo_sq", f(e.sigma_echo_sq)),
        ];
        match &self.pilot {
            PilotSpec::SinglePilot { n, i } => {
                out.push(("pilot.kind", "single".into()));
                out.push(("pilot.n", n.to_string()));
                out.push(("pilot.i", i.to_string()));
            }
            PilotSpec::UniformUnit => out.push(("pilot.kind", "uniform".into())),
            PilotSpec::CustomFile(p) => {
                out.push(("pilot.kind", "file".into()));
                out.push(("pilot.file", p.display().to_string()));
            }
        }
        if let Some(r) = &self.rsma {
            let thetas: Vec<String> = r.theta.iter().map(|t| f(*t)).collect();
            out.extend([
                ("rsma.users", r.users.to_string()),
                ("rsma.sigma_n_sq", f(r.sigma_n_sq)),
                ("rsma.sigma_e_sq", f(r.sigma_e_sq)),
                ("rsma.theta", thetas.join(",")),
                ("rsma.seed", r.seed.to_string()),
                ("rsma.paths", r.paths.to_string()),
                ("rsma.p_total", f(r.p_total)),
                ("rsma.common_fraction", f(r.common_fraction)),
            ]);
        }
        if let Some(c) = &self.mc {
            out.extend([
                ("mc.trials", c.trials.to_string()),
                ("mc.snr_db", f(c.snr_db)),
                ("mc.tau_min", f(c.grid_tau.min)),
                ("mc.tau_max", f(c.grid_tau.max)),
                ("mc.tau_count", c.grid_tau.count.to_string()),
                ("mc.nu_min", f(c.grid_nu.min)),
                ("mc.nu_max", f(c.grid_nu.max)),
                ("mc.nu_count", c.grid_nu.count.to_string()),
                ("mc.seed", c.seed.to_string()),
                ("mc.refine", c.refine.to_string()),
            ]);
        }
        out
    }

    pub fn to_map(&self) -> KeyValues {
        self.to_key_values()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Fills the `rsma` section with defaults when absent.
    pub fn rsma_or_default(&mut self) -> &RsmaSetup {
        self.rsma.get_or_insert_with(RsmaSetup::default)
    }

    /// Fills the `mc` section with defaults when absent.
    pub fn mc_or_default(&mut self) -> &McConfig {
        let (echo, grid) = (self.echo, self.grid);
        self.mc
            .get_or_insert_with(|| default_mc(&echo, &grid))
    }
}

fn default_mc(echo: &EchoParams, grid: &OtfsGrid) -> McConfig {
    McConfig::around_target(echo, grid, DEFAULT_MC_COUNT)
}

fn parse_pilot(map: &KeyValues, base_dir: &Path, grid: &OtfsGrid) -> Result<PilotSpec, CliError> {
    let kind = map.get("pilot.kind").map(String::as_str).unwrap_or("uniform");
    let spec = match kind {
        "uniform" => PilotSpec::UniformUnit,
        "single" => PilotSpec::SinglePilot {
            n: get(map, "pilot.n")?.unwrap_or(0),
            i: get(map, "pilot.i")?.unwrap_or(0),
        },
        "file" => {
            let raw: String = require(map, "pilot.file")?;
            let path = base_dir.join(raw);
            let path = path
                .canonicalize()
                .map_err(|e| CliError::invalid("pilot.file", format!("{}: {e}", path.display())))?;
            PilotSpec::CustomFile(path)
        }
        other => {
            return Err(CliError::invalid(
                "pilot.kind",
                format!("`{other}` is not one of single, uniform, file"),
            ))
        }
    };
    for key in ["pilot.n", "pilot.i"] {
        if map.contains_key(key) && !matches!(spec, PilotSpec::SinglePilot { .. }) {
            return Err(CliError::invalid(key, "only valid with pilot.kind = single"));
        }
    }
    if map.contains_key("pilot.file") && !matches!(spec, PilotSpec::CustomFile(_)) {
        return Err(CliError::invalid("pilot.file", "only valid with pilot.kind = file"));
    }
    // Resolve now so that bad indices or files fail at parse time.
    match &spec {
        PilotSpec::SinglePilot { n, i } => {
            TfSymbols::single_pilot(grid, *n, *i).map_err(as_config_error)?;
        }
        PilotSpec::CustomFile(path) => {
            load_pilot_file(path, grid)?;
        }
        PilotSpec::UniformUnit => {}
    }
    Ok(spec)
}

/// Reads `n,i,re,im` rows; an optional non-numeric header row is skipped and
/// cells not listed are zero.
pub fn load_pilot_file(path: &Path, grid: &OtfsGrid) -> Result<TfSymbols, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, reason: String| CliError::invalid("pilot.file", format!("{}:{line}: {reason}", path.display()));
    let mut x = TfSymbols::zeros(grid);
    let mut seen = vec![false; grid.n_dd()];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != 4 {
            return Err(bad(idx + 1, format!("expected 4 fields, got {}", fields.len())));
        }
        let n: usize = fields[0].parse().map_err(|e| bad(idx + 1, format!("n: {e}")))?;
        let i: usize = fields[1].parse().map_err(|e| bad(idx + 1, format!("i: {e}")))?;
        let re: f64 = fields[2].parse().map_err(|e| bad(idx + 1, format!("re: {e}")))?;
        let im: f64 = fields[3].parse().map_err(|e| bad(idx + 1, format!("im: {e}")))?;
        if n >= grid.n() || i >= grid.m() {
            return Err(bad(idx + 1, format!("cell ({n}, {i}) outside {}x{} grid", grid.n(), grid.m())));
        }
        if std::mem::replace(&mut seen[n * grid.m() + i], true) {
            return Err(bad(idx + 1, format!("duplicate cell ({n}, {i})")));
        }
        x.set(n, i, Complex64::new(re, im));
    }
    Ok(x)
}

fn parse_rsma(map: &KeyValues) -> Result<RsmaSetup, CliError> {
    let d = RsmaSetup::default();
    let users: usize = get(map, "rsma.users")?.unwrap_or(d.users);
    let theta = match map.get("rsma.theta") {
        None => vec![d.theta[0]; users],
        Some(raw) => {
            let values = raw
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::invalid("rsma.theta", format!("`{v}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() == 1 {
                vec![values[0]; users]
            } else {
                values
            }
        }
    };
    let setup = RsmaSetup {
        users,
        sigma_n_sq: get(map, "rsma.sigma_n_sq")?.unwrap_or(d.sigma_n_sq),
        sigma_e_sq: get(map, "rsma.sigma_e_sq")?.unwrap_or(d.sigma_e_sq),
        theta,
        seed: get(map, "rsma.seed")?.unwrap_or(d.seed),
        paths: get(map, "rsma.paths")?.unwrap_or(d.paths),
        p_total: get(map, "rsma.p_total")?.unwrap_or(d.p_total),
        common_fraction: get(map, "rsma.common_fraction")?.unwrap_or(d.common_fraction),
    };
    setup.validate().map_err(as_config_error)?;
    Ok(setup)
}

fn parse_mc(map: &KeyValues, echo: &EchoParams, grid: &OtfsGrid) -> Result<McConfig, CliError> {
    let d = default_mc(echo, grid);
    let cfg = McConfig {
        trials: get(map, "mc.trials")?.unwrap_or(d.trials),
        snr_db: get(map, "mc.snr_db")?.unwrap_or(d.snr_db),
        grid_tau: SearchAxis::new(
            get(map, "mc.tau_min")?.unwrap_or(d.grid_tau.min),
            get(map, "mc.tau_max")?.unwrap_or(d.grid_tau.max),
            get(map, "mc.tau_count")?.unwrap_or(d.grid_tau.count),
        ),
        grid_nu: SearchAxis::new(
            get(map, "mc.nu_min")?.unwrap_or(d.grid_nu.min),
            get(map, "mc.nu_max")?.unwrap_or(d.grid_nu.max),
            get(map, "mc.nu_count")?.unwrap_or(d.grid_nu.count),
        ),
        seed: get(map, "mc.seed")?.unwrap_or(d.seed),
        refine: get_bool(map, "mc.refine")?.unwrap_or(d.refine),
    };
    cfg.validate().map_err(as_config_error)?;
    cfg.check_contains(echo).map_err(as_config_error)?;
    Ok(cfg)
}
