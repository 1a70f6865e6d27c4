//! Problem setup from a [`RunConfig`] and the `solve`, `sweep` and `norms`
//! commands.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pmc_core::fixed_point::{continuation_sweep, solve_pmc_from, IterationConfig, IterationRecord, SolveReport, Status};
use pmc_core::grid::{Domain, GridField};
use pmc_core::norms::{derive_q, holder_c1beta_with, linf_norm, lq_norm, w1inf_norm, w1p_norm, w2q_norm, PairSampling, SobolevParams};
use pmc_core::prescription::Prescription;
use pmc_core::PmcError;
use serde::Serialize;
use thiserror::Error;

use crate::config::{BaseSpec, BoundarySpec, ConfigError, RunConfig};

pub const OUTPUT_ENV: &str = "PMC_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] PmcError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Aborted(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn field_bytes(u: &GridField) -> Vec<u8> {
    let mut buf = Vec::new();
    u.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub quiet: bool,
    /// Takes precedence over both the config and the environment.
    pub output_dir: Option<PathBuf>,
}

pub struct Problem {
    pub domain: Arc<Domain>,
    pub base: Option<GridField>,
    pub prescription: Prescription,
    pub phi: GridField,
    pub params: SobolevParams,
    pub cfg: IterationConfig,
    /// Analytic solution to compare against, when the data define one.
    pub reference: Option<GridField>,
}

/// Resolves relative file references against `root`.
fn load_field(domain: &Arc<Domain>, root: &Path, path: &Path, key: &str, name: &str) -> Result<GridField, CliError> {
    let full = root.join(path);
    let file = fs::File::open(&full)
        .map_err(|e| ConfigError { key: key.into(), reason: format!("{}: {e}", full.display()) })?;
    let f = GridField::read_csv(io::BufReader::new(file))
        .map_err(|e| ConfigError { key: key.into(), reason: format!("{}: {e}", full.display()) })?;
    let other = f.domain();
    let tol = 1e-9 * domain.diameter();
    let same = other.node_count() == domain.node_count()
        && (0..domain.node_count())
            .all(|id| domain.pos(id).iter().zip(other.pos(id)).all(|(a, b)| (a - b).abs() <= tol));
    if !same {
        return Err(ConfigError { key: key.into(), reason: format!("{} is sampled on a different grid", full.display()) }.into());
    }
    Ok(GridField::from_values(domain, name, f.values().to_vec())?)
}

fn affine(domain: &Arc<Domain>, name: &str, slope: &[f64], offset: f64) -> Result<GridField, CliError> {
    let slope = slope.to_vec();
    Ok(GridField::from_fn(domain, name, move |x| offset + x.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>())?)
}

pub fn build_problem(config: &RunConfig, root: &Path) -> Result<Problem, CliError> {
    let domain = Domain::build(config.domain.clone())?;
    let dim = domain.dim();
    let params = config.params()?;
    let cfg = config.iteration_config()?;

    let base = match &config.base {
        BaseSpec::None => None,
        BaseSpec::Affine { slope, offset } => Some(affine(&domain, "h", slope, *offset)?),
        BaseSpec::Scherk { scale } => {
            let k = *scale;
            let reach = (0..domain.node_count())
                .map(|id| domain.pos(id).iter().fold(0.0f64, |m, x| m.max((k * x).abs())))
                .fold(0.0, f64::max);
            if reach >= 0.5 * std::f64::consts::PI {
                return Err(ConfigError {
                    key: "base.scale".into(),
                    reason: format!("Scherk surface is singular inside the domain (|k·x| reaches {reach:.4})"),
                }
                .into());
            }
            Some(GridField::from_fn(&domain, "h", move |x| ((k * x[0]).cos() / (k * x[1]).cos()).ln() / k)?)
        }
        BaseSpec::File(p) => Some(load_field(&domain, root, p, "base.path", "h")?),
    };

    let mut reference = None;
    let phi = match &config.boundary {
        BoundarySpec::Zero => GridField::zeros(&domain, "phi"),
        BoundarySpec::Affine { slope, offset } => affine(&domain, "phi", slope, *offset)?,
        BoundarySpec::Cap { radius, center } => {
            let (r, c) = (*radius, center.clone());
            let far = (0..domain.node_count())
                .map(|id| domain.pos(id).iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            if far >= r {
                return Err(ConfigError { key: "boundary.radius".into(), reason: format!("cap radius {r} does not cover the domain") }.into());
            }
            let cap = GridField::from_fn(&domain, "cap", move |x| {
                -(r * r - x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt()
            })?;
            reference = Some(cap.clone());
            cap.with_name("phi")
        }
        BoundarySpec::File(p) => load_field(&domain, root, p, "boundary.path", "phi")?,
    };

    let prescription =
        config.prescription.build(dim).map_err(|e| ConfigError { key: "prescription.kind".into(), reason: e.to_string() })?;
    Ok(Problem { domain, base, prescription, phi, params, cfg, reference })
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(RunConfig::parse(&text)?)
}

fn output_dir(config: &RunConfig, opts: &RunOptions) -> PathBuf {
    opts.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.clone())
}

fn config_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    config: String,
    params: SobolevParams,
    status: Option<Status>,
    /// `max |u − u*|` against the analytic cap, when the boundary data came from one.
    max_error: Option<f64>,
    error: Option<String>,
    report: &'a SolveReport,
}

/// Exit code for a finished solve.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => 0,
        Status::Diverged | Status::MaxIters | Status::TrustViolation => 2,
    }
}

fn log_iteration(rec: &IterationRecord) {
    eprintln!(
        "iter {:4}  update {:.3e}  trust {:.3e}  w2q {:.3e}  res_div {:.3e}  res_nondiv {:.3e}  lin_iters {}",
        rec.k,
        rec.update_norm,
        rec.trust_norm,
        rec.w2q_distance,
        rec.residual_div_form,
        rec.residual_nondiv_form,
        rec.linear_iterations,
    );
}

pub struct SolveOutcome {
    pub status: Status,
    pub out_dir: PathBuf,
    pub max_error: Option<f64>,
}

pub fn cmd_solve(config_path: &Path, opts: &RunOptions) -> Result<SolveOutcome, CliError> {
    let config = read_config(config_path)?;
    let problem = build_problem(&config, &config_root(config_path))?;
    let out = output_dir(&config, opts);
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let v0 = if problem.base.is_some() { GridField::zeros(&problem.domain, "v") } else { problem.phi.clone() };
    let mut dump_error = None;
    let mut observer = |rec: &IterationRecord, v: &GridField| {
        if !opts.quiet {
            log_iteration(rec);
        }
        if config.dump_iterates && dump_error.is_none() {
            let path = out.join("iterates").join(format!("iter_{:04}.csv", rec.k));
            if let Err(e) = write_atomic(&path, &field_bytes(v)) {
                dump_error = Some(e);
            }
        }
    };
    let result = solve_pmc_from(
        problem.base.as_ref(),
        &problem.prescription,
        &problem.phi,
        &problem.cfg,
        &v0,
        Some(&mut observer),
    );
    if let Some(e) = dump_error {
        return Err(e);
    }
    let report_path = out.join("report.json");
    match result {
        Ok((u, report)) => {
            let max_error = problem.reference.as_ref().map(|r| u.sub(r).map(|d| d.max_abs())).transpose()?;
            let body = SolveOutput {
                config: config.to_text(),
                params: problem.params,
                status: Some(report.status),
                max_error,
                error: None,
                report: &report,
            };
            write_atomic(&out.join("u.csv"), &field_bytes(&u))?;
            write_atomic(&report_path, &json_bytes(&body))?;
            if !opts.quiet {
                eprintln!("status {} after {} iterations", report.status, report.iterations.len());
            }
            Ok(SolveOutcome { status: report.status, out_dir: out, max_error })
        }
        Err(aborted) => {
            let body = SolveOutput {
                config: config.to_text(),
                params: problem.params,
                status: None,
                max_error: None,
                error: Some(aborted.error.to_string()),
                report: &aborted.report,
            };
            write_atomic(&report_path, &json_bytes(&body))?;
            Err(CliError::Aborted(aborted.to_string()))
        }
    }
}

pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub max_converged_s: Option<f64>,
}

pub fn summary_csv(entries: &[pmc_core::fixed_point::SweepEntry]) -> String {
    let mut s = String::from("s,status,w2q_distance,iterations\n");
    for e in entries {
        let status = e.status.map_or("error", |st| st.as_str());
        s.push_str(&format!("{:?},{},{:?},{}\n", e.s, status, e.w2q_distance, e.iterations));
    }
    s
}

pub fn cmd_sweep(config_path: &Path, opts: &RunOptions) -> Result<SweepOutcome, CliError> {
    let config = read_config(config_path)?;
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| ConfigError { key: "sweep.s_values".into(), reason: "required by the sweep command".into() })?;
    let problem = build_problem(&config, &config_root(config_path))?;
    let out = output_dir(&config, opts);
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let spec = config.prescription.clone();
    let dim = problem.domain.dim();
    let family = move |s: f64| spec.with_scale(s).build(dim);
    let (report, fields) =
        continuation_sweep(problem.base.as_ref(), &family, &problem.phi, &problem.cfg, &sweep.s_values, sweep.warm_start)?;

    let width = report.entries.len().saturating_sub(1).to_string().len().max(3);
    for (i, (entry, field)) in report.entries.iter().zip(&fields).enumerate() {
        if !opts.quiet {
            let status = entry.status.map_or("error", |st| st.as_str());
            eprintln!("s {:<10} {:<16} iterations {:4}  w2q {:.4e}", entry.s, status, entry.iterations, entry.w2q_distance);
        }
        write_atomic(&out.join(format!("run_{i:0width$}.json")), &json_bytes(entry))?;
        if let Some(u) = field {
            write_atomic(&out.join(format!("run_{i:0width$}.csv")), &field_bytes(u))?;
        }
    }
    #[derive(Serialize)]
    struct Summary {
        config: String,
        max_converged_s: Option<f64>,
        warm_start: bool,
    }
    let summary = Summary { config: config.to_text(), max_converged_s: report.max_converged_s, warm_start: report.warm_start };
    write_atomic(&out.join("sweep.json"), &json_bytes(&summary))?;
    write_atomic(&out.join("summary.csv"), summary_csv(&report.entries).as_bytes())?;
    Ok(SweepOutcome { out_dir: out, max_converged_s: report.max_converged_s })
}

#[derive(Debug, Serialize)]
pub struct NormsReport {
    pub field: String,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub linf: f64,
    pub lq: f64,
    pub w1inf: f64,
    pub w1p: f64,
    pub w2q: f64,
    pub c1beta: f64,
}

pub fn cmd_norms(field_path: &Path, p: f64, n: usize, seed: u64) -> Result<NormsReport, CliError> {
    let file = fs::File::open(field_path).map_err(io_err(field_path))?;
    let u = GridField::read_csv(io::BufReader::new(file))?;
    let dim = u.domain().dim();
    if n != dim {
        return Err(PmcError::InvalidArgument { name: "n", reason: format!("{n} does not match the {dim}-dimensional field") }.into());
    }
    let params = derive_q(n, p)?;
    let sampling = PairSampling { seed, ..Default::default() };
    Ok(NormsReport {
        field: u.name().to_string(),
        n,
        p,
        q: params.q,
        beta: params.beta,
        linf: linf_norm(&u),
        lq: lq_norm(&u, params.q)?,
        w1inf: w1inf_norm(&u)?,
        w1p: w1p_norm(&u, p)?,
        w2q: w2q_norm(&u, params.q)?,
        c1beta: holder_c1beta_with(&u, params.beta, &sampling)?,
    })
}

pub fn print_json<T: Serialize>(value: &T) -> io::Result<()> {
    let mut stdout = io::stdout().lock();
    stdout.write_all(&json_bytes(value))
}
