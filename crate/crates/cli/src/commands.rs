//! Subcommand execution: build rows, write CSV + manifest.

use std::fs;
use std::path::{Path, PathBuf};

use ddcrb_core::rsma::RsmaScenario;
use ddcrb_core::validation::run_mc;
use ddcrb_core::{crb_pipeline, Error as ModelError};
use rayon::prelude::*;

use crate::error::CliError;
use crate::output::{fmt_f64, render_manifest, CsvTable};
use crate::scenario::{read_key_values, KeyValues, Scenario};
use crate::sweep::SweepSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Crb,
    Sinr,
    #[value(name = "mc-validate")]
    McValidate,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Crb => "crb",
            Command::Sinr => "sinr",
            Command::McValidate => "mc-validate",
            Command::Sweep => "sweep",
        }
    }
}

/// What each output row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Crb,
    Sinr,
    Mc,
}

impl RowKind {
    fn file_name(&self) -> &'static str {
        match self {
            RowKind::Crb => "crb.csv",
            RowKind::Sinr => "sinr.csv",
            RowKind::Mc => "mc.csv",
        }
    }

    /// `sweep` picks the table from the swept key's section.
    fn for_key(key: &str) -> RowKind {
        if key.starts_with("rsma.") {
            RowKind::Sinr
        } else if key.starts_with("mc.") {
            RowKind::Mc
        } else {
            RowKind::Crb
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub scenario: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub sweep: Option<SweepSpec>,
    /// Adds `CRB/tau^2` and `CRB * T^2` columns to CRB tables.
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub exit_code: u8,
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub rows: usize,
    pub failed_rows: usize,
}

struct RowResult {
    cells: Vec<Vec<String>>,
    failed: bool,
}

pub fn run(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let raw = read_key_values(&opts.scenario)?;
    let base_dir = opts
        .scenario
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut scenario = Scenario::from_map(&raw, &base_dir)?;

    let kind = match (opts.command, &opts.sweep) {
        (Command::Crb, _) => RowKind::Crb,
        (Command::Sinr, _) => RowKind::Sinr,
        (Command::McValidate, _) => RowKind::Mc,
        (Command::Sweep, Some(s)) => RowKind::for_key(s.key),
        (Command::Sweep, None) => {
            return Err(CliError::Sweep(
                "`sweep` needs --param/--values or --sweep key=start:stop:step".into(),
            ))
        }
    };
    match kind {
        RowKind::Sinr => {
            scenario.rsma_or_default();
        }
        RowKind::Mc => {
            scenario.mc_or_default();
        }
        RowKind::Crb => {}
    }
    if let Some(seed) = opts.seed {
        if let Some(r) = scenario.rsma.as_mut() {
            r.seed = seed;
        }
        if let Some(m) = scenario.mc.as_mut() {
            m.seed = seed;
        }
    }

    let mut table = CsvTable::new(&header(kind, opts.sweep.is_some(), opts.normalized));
    let results: Vec<RowResult> = match &opts.sweep {
        None => vec![rows_for(kind, &scenario, None, opts.normalized)],
        Some(sweep) => {
            let resolved = scenario.to_map();
            sweep
                .values
                .par_iter()
                .map(|value| {
                    let prefix = Some((sweep.key, value.as_str()));
                    match scenario_with(&resolved, &base_dir, sweep.key, value) {
                        Ok(s) => rows_for(kind, &s, prefix, opts.normalized),
                        Err(e) => failed_row(kind, prefix, opts.normalized, &e.to_string(), "invalid_config"),
                    }
                })
                .collect()
        }
    };
    let failed_rows = results.iter().filter(|r| r.failed).count();
    for r in results {
        for row in r.cells {
            table.push(row);
        }
    }

    fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let csv = opts.out_dir.join(kind.file_name());
    table.write(&csv)?;
    let sweep_desc = opts
        .sweep
        .as_ref()
        .map(|s| format!("{}={}", s.key, s.values.join(",")));
    let manifest = opts.out_dir.join("manifest");
    fs::write(
        &manifest,
        render_manifest(&scenario, opts.command.name(), opts.seed, sweep_desc.as_deref()),
    )
    .map_err(|e| CliError::io(&manifest, e))?;

    Ok(RunSummary {
        exit_code: if failed_rows > 0 { 2 } else { 0 },
        csv,
        manifest,
        rows: table.rows.len(),
        failed_rows,
    })
}

fn scenario_with(resolved: &KeyValues, base_dir: &Path, key: &str, value: &str) -> Result<Scenario, CliError> {
    let mut map = resolved.clone();
    map.insert(key.to_string(), value.to_string());
    // A user count change invalidates a per-user theta list; broadcast the first.
    if key == "rsma.users" {
        if let Some(first) = map.get("rsma.theta").and_then(|t| t.split(',').next()).map(str::to_string) {
            map.insert("rsma.theta".into(), first);
        }
    }
    Scenario::from_map(&map, base_dir)
}

fn header(kind: RowKind, swept: bool, normalized: bool) -> Vec<&'static str> {
    let mut h: Vec<&'static str> = if swept { vec!["param", "value"] } else { Vec::new() };
    match kind {
        RowKind::Crb => {
            h.extend([
                "tau_s",
                "nu_hz",
                "crb_tau_s2",
                "crb_nu_hz2",
                "det_fim",
                "I_tautau",
                "I_nunu",
                "I_taunu",
                "sigma_echo_sq",
                "m",
                "n",
            ]);
            if normalized {
                h.extend(["crb_tau_norm", "crb_nu_norm"]);
            }
        }
        RowKind::Sinr => h.extend([
            "user",
            "theta",
            "sigma_n_sq",
            "sigma_e_sq",
            "p_total",
            "sinr_common",
            "sinr_private",
            "sinr_common_true_h",
            "sinr_private_true_h",
        ]),
        RowKind::Mc => h.extend([
            "snr_db",
            "sigma_echo_sq",
            "trials",
            "mse_tau_s2",
            "crb_tau_s2",
            "ratio_tau",
            "bias_tau_s",
            "mse_nu_hz2",
            "crb_nu_hz2",
            "ratio_nu",
            "bias_nu_hz",
            "boundary_hits",
        ]),
    }
    h.push("status");
    h
}

fn status_code(err: &CliError) -> &'static str {
    match err {
        CliError::Model(ModelError::SingularFim { .. }) => "singular_fim",
        CliError::Model(ModelError::Domain { .. }) => "domain_error",
        CliError::Model(ModelError::Dimension { .. }) => "dimension_error",
        CliError::Model(ModelError::Numeric(_)) => "numeric_error",
        _ => "invalid_config",
    }
}

fn failed_row(kind: RowKind, prefix: Option<(&str, &str)>, normalized: bool, message: &str, status: &str) -> RowResult {
    match prefix {
        Some((k, v)) => eprintln!("dd-crb: {k} = {v}: {message}"),
        None => eprintln!("dd-crb: {message}"),
    }
    let width = header(kind, prefix.is_some(), normalized).len();
    let mut row = Vec::with_capacity(width);
    if let Some((k, v)) = prefix {
        row.push(k.to_string());
        row.push(v.to_string());
    }
    row.resize(width - 1, String::new());
    row.push(status.to_string());
    RowResult {
        cells: vec![row],
        failed: true,
    }
}

fn rows_for(kind: RowKind, s: &Scenario, prefix: Option<(&str, &str)>, normalized: bool) -> RowResult {
    let outcome = match kind {
        RowKind::Crb => crb_rows(s, normalized),
        RowKind::Sinr => sinr_rows(s),
        RowKind::Mc => mc_rows(s),
    };
    match outcome {
        Ok(rows) => RowResult {
            cells: rows
                .into_iter()
                .map(|body| {
                    let mut row: Vec<String> = prefix
                        .map(|(k, v)| vec![k.to_string(), v.to_string()])
                        .unwrap_or_default();
                    row.extend(body);
                    row
                })
                .collect(),
            failed: false,
        },
        Err(e) => failed_row(kind, prefix, normalized, &e.to_string(), status_code(&e)),
    }
}

fn crb_rows(s: &Scenario, normalized: bool) -> Result<Vec<Vec<String>>, CliError> {
    let x = s.symbols()?;
    let r = crb_pipeline(&x, &s.echo, &s.grid)?;
    let status = match r.fim.negative_diagonal() {
        Some(entry) => format!("warn_negative_{entry}"),
        None => "ok".to_string(),
    };
    let mut row = vec![
        fmt_f64(s.echo.tau_t),
        fmt_f64(s.echo.nu_t),
        fmt_f64(r.crb_tau),
        fmt_f64(r.crb_nu),
        fmt_f64(r.det_fim),
        fmt_f64(r.fim.i_tau_tau),
        fmt_f64(r.fim.i_nu_nu),
        fmt_f64(r.fim.i_tau_nu),
        fmt_f64(s.echo.sigma_echo_sq),
        s.grid.m().to_string(),
        s.grid.n().to_string(),
    ];
    if normalized {
        let t = s.grid.symbol_duration();
        row.push(fmt_f64(r.crb_tau / (s.echo.tau_t * s.echo.tau_t)));
        row.push(fmt_f64(r.crb_nu * t * t));
    }
    row.push(status);
    Ok(vec![row])
}

fn sinr_rows(s: &Scenario) -> Result<Vec<Vec<String>>, CliError> {
    let setup = s
        .rsma
        .as_ref()
        .ok_or_else(|| CliError::MissingKey("rsma".into()))?;
    let scenario = RsmaScenario::generate(s.grid.m(), s.grid.n(), setup)?;
    let users = scenario.evaluate()?;
    Ok(users
        .into_iter()
        .map(|u| {
            vec![
                u.user.to_string(),
                fmt_f64(u.theta),
                fmt_f64(setup.sigma_n_sq),
                fmt_f64(setup.sigma_e_sq),
                fmt_f64(scenario.precoders.p_tot()),
                fmt_f64(u.sinr_common),
                fmt_f64(u.sinr_private),
                fmt_f64(u.sinr_common_true_h),
                fmt_f64(u.sinr_private_true_h),
                "ok".to_string(),
            ]
        })
        .collect())
}

fn mc_rows(s: &Scenario) -> Result<Vec<Vec<String>>, CliError> {
    let cfg = s.mc.as_ref().ok_or_else(|| CliError::MissingKey("mc".into()))?;
    let x = s.symbols()?;
    let r = run_mc(&s.echo, &x, cfg, &s.grid)?;
    Ok(vec![vec![
        fmt_f64(cfg.snr_db),
        fmt_f64(r.sigma_echo_sq),
        r.trials_used.to_string(),
        fmt_f64(r.mse_tau),
        fmt_f64(r.crb_tau),
        fmt_f64(r.ratio_tau),
        fmt_f64(r.bias_tau),
        fmt_f64(r.mse_nu),
        fmt_f64(r.crb_nu),
        fmt_f64(r.ratio_nu),
        fmt_f64(r.bias_nu),
        r.boundary_hits.to_string(),
        "ok".to_string(),
    ]])
}
