//! Command-line driver: refinement loop, convergence table and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dwr::{run_dwr, DwrReport, StageError};
use crate::io;
use crate::mesh::{mark_elements, refine, MarkedSet, Mesh};
use crate::problems::{Problem, ProblemConfig, RefinementMode};
use crate::tracer;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSUMPTION: i32 = 4;

pub const TABLE_HEADER: &str = "iter,ndofs,T,err,est,effectivity,seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Vtk,
    Csv,
}

/// Travel time estimation with goal-oriented mesh refinement.
#[derive(Parser, Debug, Clone)]
#[command(name = "traveltime", version)]
pub struct Args {
    /// Problem configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Refinement mode; defaults to the configuration's.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Fraction of elements marked per adaptive step.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub max_dofs: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Pressure degree of the primal space.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub primal_order: u8,
    /// Seed recorded for randomized test utilities.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifacts to write besides table.csv.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "vtk,csv")]
    pub emit: Vec<Emit>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("iteration {iteration}, {source}")]
    Pipeline {
        iteration: usize,
        #[source]
        source: StageError,
    },
    #[error("iteration {iteration}, refinement: {message}")]
    Refinement { iteration: usize, message: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Pipeline { source, .. } if source.error.is_assumption_violation() => EXIT_ASSUMPTION,
            CliError::Pipeline { .. } | CliError::Refinement { .. } => EXIT_NUMERICAL,
        }
    }
}

/// One convergence row.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub iteration: usize,
    pub n_dofs: usize,
    pub travel_time: f64,
    pub estimate: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    /// Analytic travel time, or finest travel time plus its estimate.
    pub reference: Option<f64>,
    pub reference_is_exact: bool,
    pub config_hash: String,
}

impl RunRecord {
    pub fn error(&self, row: &Row) -> Option<f64> {
        self.reference.map(|r| r - row.travel_time)
    }

    pub fn effectivity(&self, row: &Row) -> Option<f64> {
        let err = self.error(row)?;
        (row.estimate != 0.0).then(|| err / row.estimate)
    }

    pub fn table_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER.split(',')).expect("in-memory write");
        let f = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.iteration.to_string(),
                row.n_dofs.to_string(),
                f(Some(row.travel_time)),
                f(self.error(row)),
                f(Some(row.estimate)),
                f(self.effectivity(row)),
                f(Some(row.seconds)),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii table")
    }
}

/// Settings after merging flags with the configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub mode: Mode,
    pub fraction: f64,
    pub max_dofs: Option<usize>,
    pub max_iters: usize,
    pub primal_order: usize,
    pub out: PathBuf,
    pub emit_vtk: bool,
    pub emit_csv: bool,
    pub seed: Option<u64>,
}

impl Settings {
    pub fn resolve(args: &Args, config: &ProblemConfig) -> Result<Self, CliError> {
        let r = &config.refinement;
        let mode = args.mode.unwrap_or(match r.mode {
            RefinementMode::Uniform => Mode::Uniform,
            RefinementMode::Adaptive => Mode::Adaptive,
        });
        let fraction = args.fraction.unwrap_or(r.fraction);
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CliError::Config(format!("--fraction {fraction} not in (0, 1]")));
        }
        let max_dofs = args.max_dofs.or(r.max_dofs);
        let max_iters = args.max_iters.or(r.max_iters).unwrap_or(if max_dofs.is_some() { 1000 } else { 6 });
        if max_iters == 0 {
            return Err(CliError::Config("--max-iters must be at least 1".into()));
        }
        Ok(Self {
            mode,
            fraction,
            max_dofs,
            max_iters,
            primal_order: args.primal_order as usize,
            out: args.out.clone(),
            emit_vtk: args.emit.contains(&Emit::Vtk),
            emit_csv: args.emit.contains(&Emit::Csv),
            seed: args.seed,
        })
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn emit_iteration(s: &Settings, i: usize, mesh: &Mesh, r: &DwrReport) -> Result<(), CliError> {
    if s.emit_vtk {
        let mut fields = io::solution_fields(&r.primal, "");
        fields.extend(io::solution_fields(&r.adjoint, "adjoint_"));
        fields.extend(io::indicator_fields(&r.indicators));
        write(&s.out.join(format!("iter_{i:03}.vtk")), &io::vtk_mesh_string(mesh, &format!("iteration {i}"), &fields))?;
        write(&s.out.join(format!("trajectory_{i:03}.vtk")), &io::trajectory_vtk(&r.trajectory, &r.field, 8))?;
    }
    if s.emit_csv {
        write(&s.out.join(format!("trajectory_{i:03}.csv")), &io::trajectory_csv(&r.trajectory, &r.field, 8))?;
    }
    Ok(())
}

fn provenance(s: &Settings, record: &RunRecord) -> String {
    let mut t = toml::Table::new();
    t.insert("config_sha256".into(), record.config_hash.clone().into());
    t.insert("mode".into(), format!("{:?}", s.mode).to_lowercase().into());
    t.insert("fraction".into(), s.fraction.into());
    t.insert("primal_order".into(), (s.primal_order as i64).into());
    if let Some(seed) = s.seed {
        t.insert("seed".into(), (seed as i64).into());
    }
    if let Some(r) = record.reference {
        t.insert("reference_travel_time".into(), r.into());
        t.insert("reference_is_exact".into(), record.reference_is_exact.into());
    }
    let mut tol = toml::Table::new();
    tol.insert("root".into(), tracer::ROOT_TOL.into());
    tol.insert("vertex".into(), tracer::VERTEX_TOL.into());
    tol.insert("tangent".into(), tracer::TANGENT_TOL.into());
    tol.insert("stagnation".into(), tracer::STAGNATION_TOL.into());
    tol.insert("linear_residual".into(), 1e-10.into());
    t.insert("tolerances".into(), tol.into());
    toml::to_string(&t).unwrap_or_default()
}

/// Runs the refinement loop. On failure the table of completed iterations
/// is still written before the error is returned.
pub fn run(args: &Args) -> Result<RunRecord, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let config = ProblemConfig::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let problem = config.build().map_err(|e| CliError::Config(e.to_string()))?;
    let settings = Settings::resolve(args, &config)?;
    fs::create_dir_all(&settings.out).map_err(|source| CliError::Output {
        path: settings.out.display().to_string(),
        source,
    })?;
    let mut record = RunRecord {
        rows: Vec::new(),
        reference: problem.exact.as_ref().map(|e| e.travel_time),
        reference_is_exact: problem.exact.is_some(),
        config_hash: hex(&Sha256::digest(text.as_bytes())),
    };
    let outcome = refinement_loop(&problem, &settings, &mut record);
    if !record.reference_is_exact {
        record.reference = last_reference(&record);
    }
    write(&settings.out.join("table.csv"), &record.table_csv())?;
    write(&settings.out.join("provenance.toml"), &provenance(&settings, &record))?;
    outcome.map(|_| record)
}

fn last_reference(record: &RunRecord) -> Option<f64> {
    record.rows.last().map(|r| r.travel_time + r.estimate)
}

fn refinement_loop(problem: &Problem, s: &Settings, record: &mut RunRecord) -> Result<(), CliError> {
    let mut mesh = problem.mesh.clone();
    for i in 0..s.max_iters {
        let start = Instant::now();
        let shared = Arc::new(mesh);
        let report = run_dwr(shared.clone(), &problem.spec, s.primal_order, problem.config.max_time)
            .map_err(|source| CliError::Pipeline { iteration: i, source })?;
        let refined = if i + 1 < s.max_iters && s.max_dofs.is_none_or(|m| report.n_dofs < m) {
            let marked = match s.mode {
                Mode::Uniform => MarkedSet::all(&shared),
                Mode::Adaptive => {
                    let abs: Vec<f64> = report.indicators.totals().iter().map(|v| v.abs()).collect();
                    mark_elements(&shared, &abs, s.fraction).map_err(|e| CliError::Refinement {
                        iteration: i,
                        message: e.to_string(),
                    })?
                }
            };
            Some(refine(&shared, &marked))
        } else {
            None
        };
        record.rows.push(Row {
            iteration: i,
            n_dofs: report.n_dofs,
            travel_time: report.travel_time,
            estimate: report.estimate,
            seconds: start.elapsed().as_secs_f64(),
        });
        emit_iteration(s, i, &shared, &report)?;
        match refined {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(())
}

/// Parses the process arguments, runs, reports and returns the exit code.
pub fn main_entry() -> i32 {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&args) {
        Ok(record) => {
            for row in &record.rows {
                let eff = record.effectivity(row).map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                println!(
                    "iter {:>2}  dofs {:>8}  T {:.10e}  est {:+.3e}  theta {eff}",
                    row.iteration, row.n_dofs, row.travel_time, row.estimate
                );
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
