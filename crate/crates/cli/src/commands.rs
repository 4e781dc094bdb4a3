//! The four subcommands.  Each returns the process exit code; hard errors
//! bubble up as anyhow and become exit 1 in main.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ebm2_core::{
    integrate, run_check, suite_checks, CheckResult, EquilibriumSeed, ModelParams, RunStatus,
    SpectralField, StateVec, Suite, TrajectoryRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{
    fmt_f64, status_str, write_coeffs, write_energy, write_json, write_nodal, Table,
};

#[derive(Debug, Serialize)]
struct SimulateSummary {
    status: &'static str,
    t_final: f64,
    n_snapshots: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_star_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_star_hi: Option<f64>,
    expect_blowup: bool,
    exit_code: u8,
}

fn run_from_config(config: &RunConfig, seed: Option<u64>) -> Result<TrajectoryRecord> {
    let grid = config.build_grid()?;
    let forcing = config.build_forcing(&grid)?;
    let ic = config.build_ic(&grid, seed)?;
    let controls = config.build_controls();
    Ok(integrate(&ic, &config.model, &forcing, config.run.t_max, &controls)?)
}

/// The exit code a finished run maps to: completion is success unless the
/// config declared the run a blow-up scenario, in which case the roles swap.
fn outcome_code(status: RunStatus, expect_blowup: bool) -> u8 {
    match (status, expect_blowup) {
        (RunStatus::Completed, false) | (RunStatus::BlewUp, true) => 0,
        (RunStatus::Completed, true) | (RunStatus::BlewUp, false) => 2,
        (RunStatus::StiffnessFailure, _) => 1,
    }
}

pub fn cmd_simulate(config: &RunConfig, out_dir: &Path, seed: Option<u64>) -> Result<u8> {
    let record = run_from_config(config, seed)?;

    if config.wants("coeffs") {
        write_coeffs(out_dir.join("coeffs.csv"), &record)?;
    }
    if config.wants("nodal") {
        write_nodal(out_dir.join("nodal.csv"), &record)?;
    }
    if config.wants("energy") {
        write_energy(out_dir.join("energy.csv"), &record)?;
    }

    let code = outcome_code(record.status, config.run.expect_blowup);
    let summary = SimulateSummary {
        status: status_str(record.status),
        t_final: *record.times.last().unwrap(),
        n_snapshots: record.times.len(),
        t_star_lo: record.t_star_bracket.map(|b| b.0),
        t_star_hi: record.t_star_bracket.map(|b| b.1),
        expect_blowup: config.run.expect_blowup,
        exit_code: code,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    // Echo of the parsed config; re-running it must reproduce the outputs.
    write_json(&out_dir.join("effective_config.json"), config)?;
    Ok(code)
}

/// A stored state: coefficient vectors as written by `equilibria`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    t_a: Vec<f64>,
    t_s: Vec<f64>,
}

fn parse_seed_choice(config: &RunConfig, choice: &str) -> Result<EquilibriumSeed> {
    match choice {
        "warmest" => Ok(EquilibriumSeed::Warmest),
        "coldest" => Ok(EquilibriumSeed::Coldest),
        path => {
            let file = Path::new(path);
            if !file.exists() {
                bail!("equilibrium seed {choice:?} is neither warmest, coldest nor a readable file");
            }
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading seed state {}", file.display()))?;
            let parsed: StateFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing seed state {}", file.display()))?;
            let grid = config.build_grid()?;
            let state = StateVec::new(
                SpectralField::from_coeffs(&grid, parsed.t_a)?,
                SpectralField::from_coeffs(&grid, parsed.t_s)?,
            )?;
            Ok(EquilibriumSeed::Custom(state))
        }
    }
}

#[derive(Debug, Serialize)]
struct EquilibriaSummary {
    residual_h: f64,
    method: String,
    iterations: usize,
    monotone_warning: bool,
    seed: String,
}

pub fn cmd_equilibria(config: &RunConfig, out_dir: &Path, seed_choice: &str) -> Result<u8> {
    let grid = config.build_grid()?;
    let forcing = config.build_forcing(&grid)?;
    let seed = parse_seed_choice(config, seed_choice)?;
    let sol = ebm2_core::solve_equilibrium(&config.model, &forcing, seed)?;

    let mut table = Table::new(out_dir.join("equilibrium.csv"), &["x", "t_a", "t_s"])?;
    let nodes = grid.nodes().to_vec();
    let a = sol.state.t_a.synthesize();
    let s = sol.state.t_s.synthesize();
    for j in 0..nodes.len() {
        table.row(&[fmt_f64(nodes[j]), fmt_f64(a[j]), fmt_f64(s[j])])?;
    }
    table.finish()?;

    write_json(
        &out_dir.join("equilibrium_state.json"),
        &StateFile { t_a: sol.state.t_a.coeffs().to_vec(), t_s: sol.state.t_s.coeffs().to_vec() },
    )?;
    write_json(
        &out_dir.join("summary.json"),
        &EquilibriaSummary {
            residual_h: sol.residual_h,
            method: sol.method.to_string(),
            iterations: sol.iterations,
            monotone_warning: sol.monotone_warning,
            seed: seed_choice.to_string(),
        },
    )?;
    Ok(0)
}

fn set_parameter(params: &mut ModelParams, name: &str, value: f64) -> Result<()> {
    match name {
        "eps_a" => params.eps_a = value,
        "lambda" => params.lambda = value,
        "sigma_b" => params.sigma_b = value,
        "gamma_a" => params.gamma_a = value,
        "gamma_s" => params.gamma_s = value,
        "kappa_a" => params.kappa_a = value,
        "kappa_s" => params.kappa_s = value,
        other => bail!("config key `scan.parameter`: unknown model parameter {other:?}"),
    }
    Ok(())
}

struct ScanRow {
    value: f64,
    status: RunStatus,
    final_sup: Option<f64>,
    t_star: Option<(f64, f64)>,
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    parameter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    largest_completed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smallest_blew_up: Option<f64>,
}

pub fn cmd_scan(config: &RunConfig, out_dir: &Path, seed: Option<u64>) -> Result<u8> {
    let scan = config
        .scan
        .as_ref()
        .ok_or_else(|| anyhow!("config key `scan`: required by the scan command"))?;
    if scan.values.is_empty() {
        bail!("config key `scan.values`: must not be empty");
    }
    let parameter = scan.parameter.clone();
    // Probe the name once so a typo fails before any integration starts.
    let mut probe = config.model;
    let current = probe.eps_a;
    set_parameter(&mut probe, &parameter, current)?;

    use rayon::prelude::*;
    let rows: Vec<Result<ScanRow>> = scan
        .values
        .par_iter()
        .map(|&value| -> Result<ScanRow> {
            let mut sub = config.clone();
            set_parameter(&mut sub.model, &parameter, value)?;
            let record = run_from_config(&sub, seed)?;
            let final_sup = match record.status {
                RunStatus::Completed => Some(record.last_state().sup_norm(513)?),
                _ => None,
            };
            Ok(ScanRow { value, status: record.status, final_sup, t_star: record.t_star_bracket })
        })
        .collect();

    let mut table = Table::new(
        out_dir.join("scan.csv"),
        &["value", "status", "final_sup", "t_star_lo", "t_star_hi"],
    )?;
    let mut largest_completed: Option<f64> = None;
    let mut smallest_blew_up: Option<f64> = None;
    for row in rows {
        let row = row?;
        if row.status == RunStatus::Completed {
            largest_completed =
                Some(largest_completed.map_or(row.value, |v: f64| v.max(row.value)));
        }
        if row.status == RunStatus::BlewUp {
            smallest_blew_up = Some(smallest_blew_up.map_or(row.value, |v: f64| v.min(row.value)));
        }
        table.row(&[
            fmt_f64(row.value),
            status_str(row.status).to_string(),
            row.final_sup.map_or_else(String::new, fmt_f64),
            row.t_star.map_or_else(String::new, |b| fmt_f64(b.0)),
            row.t_star.map_or_else(String::new, |b| fmt_f64(b.1)),
        ])?;
    }
    table.finish()?;
    write_json(
        &out_dir.join("summary.json"),
        &ScanSummary { parameter, largest_completed, smallest_blew_up },
    )?;
    Ok(0)
}

pub fn cmd_verify(suite: Suite, tighten: f64, out_dir: &Path) -> Result<u8> {
    use rayon::prelude::*;
    let names = suite_checks(suite);
    let results: Vec<ebm2_core::Result<CheckResult>> =
        names.par_iter().map(|&name| run_check(name, tighten)).collect();

    let mut table =
        Table::new(out_dir.join("verify_report.csv"), &["check_name", "passed", "worst_value", "tolerance"])?;
    let mut all_passed = true;
    for result in results {
        let check = result?;
        all_passed &= check.passed;
        println!(
            "{:26} {}  worst {:>13.6e}  tolerance {:>13.6e}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.worst_value,
            check.tolerance
        );
        table.row(&[
            check.name.clone(),
            check.passed.to_string(),
            fmt_f64(check.worst_value),
            fmt_f64(check.tolerance),
        ])?;
    }
    table.finish()?;
    Ok(if all_passed { 0 } else { 1 })
}
