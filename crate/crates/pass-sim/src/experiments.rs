//! Experiment drivers: each one turns a validated [`Scenario`] into a CSV
//! table. Power stays linear (watts) internally and becomes dBm only at
//! the emission boundary.

use std::io::Write;
use std::path::Path;

use nalgebra::Point3;
use pass_core::{
    power_vs_sinr_sweep, Activation, AlignmentMode, CandidateGrid, FeedArchitecture, JointProblem,
    SweepSetup, SweepSystem,
};
use thiserror::Error;

use crate::scenario::{parse_system, watts_to_dbm, MinPowerSpec, Scenario, ScenarioError};

/// A failed run, split by whose fault it is: `Input` means the scenario or
/// the command line asked for something impossible, `Runtime` means the
/// run itself fell over. The split drives the process exit status.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    /// 1 for input errors, 2 for runtime errors; success is 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input(_) => 1,
            RunError::Runtime(_) => 2,
        }
    }
}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        RunError::Input(e.to_string())
    }
}

impl From<pass_core::Error> for RunError {
    fn from(e: pass_core::Error) -> Self {
        match &e {
            // Impossible requests are input errors; shape mismatches can
            // only come from internal plumbing.
            pass_core::Error::InvalidParameter { .. }
            | pass_core::Error::UnreachableFraction { .. }
            | pass_core::Error::ZeroRange
            | pass_core::Error::ApertureTooLong { .. }
            | pass_core::Error::NotEnoughCandidates { .. } => RunError::Input(e.to_string()),
            pass_core::Error::DimensionMismatch { .. } => RunError::Runtime(e.to_string()),
        }
    }
}

/// Shortest representation that parses back to the same f64 (Rust's
/// default float formatting), so rewriting a CSV cannot drift.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_into_string(writer: csv::Writer<Vec<u8>>) -> Result<String, RunError> {
    let bytes = writer
        .into_inner()
        .map_err(|e| RunError::Runtime(format!("cannot flush CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| RunError::Runtime(format!("CSV is not UTF-8: {e}")))
}

/// Array gain of `1..=n_max` antennas against a single antenna at the
/// user's foot point, for the first user and the first waveguide.
///
/// Columns: `n_antennas, spacing_m, power_model, gain_linear, gain_db`,
/// sorted by `n_antennas`.
pub fn run_array_gain(scenario: &Scenario) -> Result<String, RunError> {
    let spec = scenario.array_gain.as_ref().ok_or_else(|| {
        RunError::Input("scenario has no [array_gain] section".to_string())
    })?;
    let layouts = scenario.layouts()?;
    let radio = scenario.radio()?;
    let model = scenario.model();
    let user = scenario.user_points()[0];
    let mode = match spec.mode.as_str() {
        "centered" => AlignmentMode::Centered,
        _ => AlignmentMode::PhaseAligned,
    };
    let n_list: Vec<usize> = (1..=spec.n_max).collect();
    let rows = pass_core::array_gain_sweep(
        &user,
        &layouts[0],
        &n_list,
        spec.spacing_m,
        model,
        &radio,
        mode,
    )?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["n_antennas", "spacing_m", "power_model", "gain_linear", "gain_db"])
        .map_err(|e| RunError::Runtime(format!("cannot write CSV header: {e}")))?;
    for row in &rows {
        writer
            .write_record([
                row.n_antennas.to_string(),
                fmt_f64(spec.spacing_m),
                scenario.power_model.kind.clone(),
                fmt_f64(row.gain),
                fmt_f64(10.0 * row.gain.log10()),
            ])
            .map_err(|e| RunError::Runtime(format!("cannot write CSV row: {e}")))?;
    }
    csv_into_string(writer)
}

fn sweep_setup(scenario: &Scenario, spec: &MinPowerSpec) -> Result<SweepSetup, RunError> {
    let layouts = scenario.layouts()?;
    let radio = scenario.radio()?;
    let shortest = layouts
        .iter()
        .map(|w| w.length)
        .fold(f64::INFINITY, f64::min);
    let grid = CandidateGrid::uniform(shortest, scenario.candidate_spacing_m)?;
    let problem = JointProblem {
        users: scenario.user_points(),
        waveguides: layouts,
        n_pa_per_waveguide: spec.n_pa_per_waveguide,
        power_model: scenario.model(),
        // Placeholder; the sweep substitutes each target before solving.
        sinr_targets: vec![1.0; scenario.users.len()],
        radio,
        activation: Activation::Discrete(grid),
        architecture: FeedArchitecture::SubConnected,
    };
    problem.validate()?;
    Ok(SweepSetup {
        problem,
        bs_position: Point3::from(spec.bs),
        antennas_per_rf: spec.antennas_per_rf,
        seed: scenario.seed,
    })
}

/// Minimum total transmit power of every configured system at every SINR
/// target.
///
/// Columns: `sinr_db, system, total_power_dbm, feasible, iterations`, one
/// row per (target, system) pair in scenario order. Infeasible cells keep
/// their row with `feasible` false and a NaN power.
pub fn run_min_power(scenario: &Scenario) -> Result<String, RunError> {
    let spec = scenario.min_power.as_ref().ok_or_else(|| {
        RunError::Input("scenario has no [min_power] section".to_string())
    })?;
    let systems: Vec<SweepSystem> = spec
        .systems
        .iter()
        .filter_map(|s| parse_system(s))
        .collect();
    if systems.len() != spec.systems.len() {
        return Err(RunError::Input(
            "min_power.systems contains an unknown system".to_string(),
        ));
    }
    let setup = sweep_setup(scenario, spec)?;
    let rows = power_vs_sinr_sweep(&setup, &spec.sinr_db, &systems)?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["sinr_db", "system", "total_power_dbm", "feasible", "iterations"])
        .map_err(|e| RunError::Runtime(format!("cannot write CSV header: {e}")))?;
    for row in &rows {
        writer
            .write_record([
                fmt_f64(row.sinr_db),
                row.system.label().to_string(),
                fmt_f64(watts_to_dbm(row.total_power)),
                row.feasible.to_string(),
                row.iterations.to_string(),
            ])
            .map_err(|e| RunError::Runtime(format!("cannot write CSV row: {e}")))?;
    }
    csv_into_string(writer)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory plus a rename, so a crash never leaves a half-written CSV.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| {
        RunError::Runtime(format!(
            "cannot create temporary file in {}: {e}",
            parent.display()
        ))
    })?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| RunError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| RunError::Runtime(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}
