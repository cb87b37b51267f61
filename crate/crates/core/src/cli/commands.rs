//! The four commands. Each writes its artifacts under the output directory
//! and returns the process exit code through [`crate::Error`].

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Format, PolicySource, RunConfig};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, Stage};
use crate::numerics::{GridSpec, ValueField};
use crate::policy::{stop_boundary, write_boundary_csv, DoublePolicy, StagePolicy};
use crate::sim::{self, MCEstimate};
use crate::stage1::{self, u_payoff, Stage1Solution};
use crate::stage2::{self, Stage2Solution};

pub const TOOL: &str = "twostop";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Field file names written by `solve` and read by `simulate`.
pub const Y2_FILE: &str = "y2.csv";
pub const R2_FILE: &str = "r_star2.csv";
pub const Y1_FILE: &str = "y1.csv";
pub const R1_FILE: &str = "r_star1.csv";
pub const Y2_BAR_FILE: &str = "y2_bar.csv";

#[derive(Clone, Debug, Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    config_hash: String,
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        tool: TOOL,
        version: VERSION,
        config_hash: cfg.hash(),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_field(dir: &Path, name: &str, field: &ValueField) -> Result<()> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    write(&dir.join(name), &buf)
}

fn read_field(dir: &Path, name: &str) -> Result<ValueField> {
    let path = dir.join(name);
    let file = fs::File::open(&path).map_err(|_| Error::MissingArtifact(path.clone()))?;
    ValueField::read_csv(BufReader::new(file))
}

/// A flat record as two-row CSV (header, values) or pretty JSON.
fn write_record<T: Serialize>(dir: &Path, stem: &str, format: Format, record: &T) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(record).map_err(|e| Error::Numeric(e.to_string()))?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let value = serde_json::to_value(record).map_err(|e| Error::Numeric(e.to_string()))?;
            let mut cols = Vec::new();
            flatten("", &value, &mut cols);
            let header: Vec<_> = cols.iter().map(|(k, _)| k.as_str()).collect();
            let row: Vec<_> = cols.iter().map(|(_, v)| v.as_str()).collect();
            format!("{}\n{}\n", header.join(","), row.join(",")).into_bytes()
        }
    };
    write(&path, &bytes)?;
    Ok(path)
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        serde_json::Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Rows as CSV under `header` (the row type's field order) or a JSON array.
fn write_table<T: Serialize>(dir: &Path, stem: &str, format: Format, header: &[&str], rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).map_err(|e| Error::Numeric(e.to_string()))?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut s = header.join(",");
            s.push('\n');
            for row in rows {
                let value = serde_json::to_value(row).map_err(|e| Error::Numeric(e.to_string()))?;
                let mut cols = Vec::new();
                flatten("", &value, &mut cols);
                let line: Vec<_> = cols.into_iter().map(|(_, v)| v).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s.into_bytes()
        }
    };
    write(&path, &bytes)?;
    Ok(path)
}

fn prepare(cfg: &RunConfig) -> Result<(GridSpec, PathBuf)> {
    ensure_valid(&cfg.problem)?;
    let grid = cfg.grid_spec()?;
    if !(cfg.solver.tolerance > 0.0) {
        return Err(Error::Config("solver.tolerance must be positive".into()));
    }
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    Ok((grid, dir))
}

/// Both stages solved on one grid.
pub struct Solved {
    pub grid: GridSpec,
    pub stage2: Stage2Solution,
    pub stage1: Stage1Solution,
}

pub fn solve_both(cfg: &RunConfig, grid: &GridSpec, eps: f64) -> Result<Solved> {
    let spec = &cfg.problem;
    let cap = cfg.solver.max_iterations;
    let s2 = stage2::solve_capped(&stage2::Stage2Operator::new(spec, grid)?, eps, cap)?;
    let s1 = stage1::solve_capped(spec, &s2, &stage1::Stage1Operator::new(spec, &s2, grid)?, eps, cap)?;
    Ok(Solved {
        grid: *grid,
        stage2: s2,
        stage1: s1,
    })
}

#[derive(Clone, Debug, Serialize)]
struct StageRecord {
    modulus: f64,
    iterations: usize,
    residual: f64,
}

#[derive(Clone, Debug, Serialize)]
struct SolveSummary {
    #[serde(flatten)]
    provenance: Provenance,
    /// Total value `V`.
    value: f64,
    /// Payoff of switching and stopping at once.
    switch_now_value: f64,
    stage2: StageRecord,
    stage1: StageRecord,
    mass_max: f64,
    mass_nodes: usize,
    time_nodes: usize,
    tolerance: f64,
}

/// `solve`: value fields, maximiser fields, boundaries and a summary.
pub fn cmd_solve(cfg: &RunConfig) -> Result<PathBuf> {
    let (grid, dir) = prepare(cfg)?;
    let solved = solve_both(cfg, &grid, cfg.solver.tolerance)?;
    let (s1, s2) = (&solved.stage1, &solved.stage2);
    write_field(&dir, Y2_FILE, &s2.y2)?;
    write_field(&dir, R2_FILE, &s2.r_star2)?;
    write_field(&dir, Y1_FILE, &s1.y1)?;
    write_field(&dir, R1_FILE, &s1.r_star1)?;
    write_field(&dir, Y2_BAR_FILE, &s1.y2_bar)?;

    let t0 = cfg.problem.horizon;
    let (mass, time) = (grid.mass_axis(), grid.time_axis(t0));
    for (stage, r_star, name) in [
        (Stage::One, &s1.r_star1, "boundary_stage1.csv"),
        (Stage::Two, &s2.r_star2, "boundary_stage2.csv"),
    ] {
        let policy = StagePolicy::Gridded {
            r_star: r_star.clone(),
            stage,
        };
        let mut buf = Vec::new();
        write_boundary_csv(&stop_boundary(&policy, stage, mass, time, t0), &mut buf)?;
        write(&dir.join(name), &buf)?;
    }

    let summary = SolveSummary {
        provenance: provenance(cfg),
        value: s1.total_value,
        switch_now_value: u_payoff(&cfg.problem, s2, 0.0, 0.0),
        stage2: StageRecord {
            modulus: s2.modulus,
            iterations: s2.iterations,
            residual: s2.residual,
        },
        stage1: StageRecord {
            modulus: s1.modulus,
            iterations: s1.iterations,
            residual: s1.residual,
        },
        mass_max: grid.mass_max,
        mass_nodes: grid.mass_nodes,
        time_nodes: grid.time_nodes,
        tolerance: cfg.solver.tolerance,
    };
    write_record(&dir, "summary", cfg.output.format, &summary)
}

fn check_grid(field: &ValueField, grid: &GridSpec, path: &Path) -> Result<()> {
    let mass = field.axis(crate::numerics::AxisKind::Mass);
    if mass != Some(&grid.mass_axis()) {
        return Err(Error::Config(format!(
            "{} was written for a different grid; re-run `solve`",
            path.display()
        )));
    }
    Ok(())
}

/// The policy named by the config, reading solver artifacts from `dir`.
pub fn load_policy(cfg: &RunConfig, grid: &GridSpec, dir: &Path) -> Result<DoublePolicy> {
    match cfg.simulation.policy {
        PolicySource::Baseline => Ok(DoublePolicy::stop_now()),
        PolicySource::Threshold => DoublePolicy::threshold(&cfg.problem),
        PolicySource::Solved => {
            let y1 = read_field(dir, Y1_FILE)?;
            let y2 = read_field(dir, Y2_FILE)?;
            let bar = read_field(dir, Y2_BAR_FILE)?;
            check_grid(&y1, grid, &dir.join(Y1_FILE))?;
            check_grid(&y2, grid, &dir.join(Y2_FILE))?;
            Ok(DoublePolicy::from_values(&cfg.problem, grid, &y1, &y2, &bar))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct SimulateRecord {
    #[serde(flatten)]
    provenance: Provenance,
    policy: PolicySource,
    #[serde(flatten)]
    estimate: MCEstimate,
}

/// `simulate`: Monte Carlo estimate of the configured policy.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf> {
    let (grid, dir) = prepare(cfg)?;
    let sim_cfg = &cfg.simulation;
    if sim_cfg.replications < 2 {
        return Err(Error::Config("simulation.replications must be at least 2".into()));
    }
    let policy = load_policy(cfg, &grid, &dir)?;
    let estimate = sim::estimate(&cfg.problem, &policy, sim_cfg.replications, sim_cfg.seed);
    if sim_cfg.trajectories > 0 {
        let n = sim_cfg.trajectories.min(sim_cfg.replications);
        let trajs = sim::trajectories(&cfg.problem, &policy, n, sim_cfg.seed);
        let mut buf = Vec::new();
        sim::write_trajectories_csv(&trajs, &mut buf)?;
        write(&dir.join("trajectories.csv"), &buf)?;
    }
    let record = SimulateRecord {
        provenance: provenance(cfg),
        policy: sim_cfg.policy,
        estimate,
    };
    write_record(&dir, "estimate", cfg.output.format, &record)
}

/// One point of the finite-`K` residual curve.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct FiniteKRow {
    pub k: usize,
    /// `‖y2,K - y2‖`.
    pub residual: f64,
    /// `residual(K) / residual(K - 1)`; empty for `K = 0`.
    pub ratio: Option<f64>,
}

/// `‖y2,K - y2‖` for `K = 0..=max_k`, against a reference solved to
/// `eps`.
pub fn finite_k_curve(op: &stage2::Stage2Operator, max_k: usize, eps: f64) -> Result<Vec<FiniteKRow>> {
    let reference = stage2::solve_with(op, eps)?;
    let ys = stage2::finite_k_with(op, max_k);
    let mut rows: Vec<FiniteKRow> = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        let residual = y.distance(&reference.y2);
        let ratio = (k > 0).then(|| residual / rows[k - 1].residual);
        rows.push(FiniteKRow { k, residual, ratio });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
struct CompareSummary {
    #[serde(flatten)]
    provenance: Provenance,
    value: f64,
    mc_mean: f64,
    mc_std_error: f64,
    replications: usize,
    seed: u64,
    /// `(mc_mean - value) / mc_std_error`.
    z_score: f64,
    modulus_stage2: f64,
    perturbation_winners: usize,
}

/// `compare`: solver value vs Monte Carlo, perturbed policies, and the
/// finite-`K` residual curve.
pub fn cmd_compare(cfg: &RunConfig) -> Result<PathBuf> {
    let (grid, dir) = prepare(cfg)?;
    let solved = solve_both(cfg, &grid, cfg.solver.tolerance)?;
    let spec = &cfg.problem;
    let base = DoublePolicy::solved(spec, &grid, &solved.stage1, &solved.stage2);
    let perturbations: Vec<(String, DoublePolicy)> = cfg
        .compare
        .perturbations
        .iter()
        .map(|&f| (format!("x{f}"), base.scaled(f)))
        .collect();
    let n = cfg.simulation.replications.max(2);
    let report = sim::dominance_probe(spec, &base, &perturbations, n, cfg.simulation.seed);

    let op = stage2::Stage2Operator::new(spec, &grid)?;
    let curve = finite_k_curve(&op, cfg.compare.max_k, (cfg.solver.tolerance * 1e-3).max(1e-13))?;

    let format = cfg.output.format;
    write_table(
        &dir,
        "compare_perturbations",
        format,
        &["label", "mean", "std_error", "diff_mean", "diff_std_error", "wins"],
        &report.rows,
    )?;
    write_table(&dir, "compare_finite_k", format, &["k", "residual", "ratio"], &curve)?;
    let value = solved.stage1.total_value;
    let summary = CompareSummary {
        provenance: provenance(cfg),
        value,
        mc_mean: report.reference.mean,
        mc_std_error: report.reference.std_error,
        replications: n,
        seed: cfg.simulation.seed,
        z_score: if report.reference.std_error > 0.0 {
            (report.reference.mean - value) / report.reference.std_error
        } else {
            0.0
        },
        modulus_stage2: op.modulus(),
        perturbation_winners: report.winners().count(),
    };
    write_record(&dir, "compare_summary", format, &summary)
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    value: f64,
    status: String,
    total_value: Option<f64>,
    /// Planned stage-1 delay at the start, `r1*(0, t0)`.
    initial_delay: Option<f64>,
    /// Smallest mass at which switching at time 0 is immediate.
    switch_mass_at_start: Option<f64>,
    message: String,
}

/// `sweep`: one solve per parameter value. Failed points are recorded and
/// the sweep continues; the error of the first failure is returned at the
/// end so the exit code reflects it.
pub fn cmd_sweep(cfg: &RunConfig, parameter: &str, values: &[f64]) -> Result<PathBuf> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let mut rows = Vec::with_capacity(values.len());
    let mut first_error = None;
    for &v in values {
        let point = cfg.with_parameter(parameter, v).and_then(|c| {
            ensure_valid(&c.problem)?;
            let grid = c.grid_spec()?;
            let solved = solve_both(&c, &grid, c.solver.tolerance)?;
            let t0 = c.problem.horizon;
            let policy = StagePolicy::Gridded {
                r_star: solved.stage1.r_star1.clone(),
                stage: Stage::One,
            };
            let boundary = stop_boundary(&policy, Stage::One, grid.mass_axis(), grid.time_axis(t0), t0);
            let at_start = boundary.last().map(|p| p.mass).unwrap_or(f64::INFINITY);
            Ok((solved.stage1.total_value, solved.stage1.r_star1.eval_state(0.0, 0.0, t0), at_start))
        });
        match point {
            Ok((value, delay, mass)) => rows.push(SweepRow {
                value: v,
                status: "ok".into(),
                total_value: Some(value),
                initial_delay: Some(delay),
                switch_mass_at_start: Some(mass),
                message: String::new(),
            }),
            Err(e) => {
                rows.push(SweepRow {
                    value: v,
                    status: "error".into(),
                    total_value: None,
                    initial_delay: None,
                    switch_mass_at_start: None,
                    message: e.to_string().replace([',', '\n'], ";"),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let path = write_table(
        &dir,
        "sweep",
        cfg.output.format,
        &["value", "status", "total_value", "initial_delay", "switch_mass_at_start", "message"],
        &rows,
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(path),
    }
}
