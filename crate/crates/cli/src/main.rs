//! `decouple`: zeros, subspaces, solvability, synthesis and verification from
//! JSON files.
//!
//! Exit codes: 0 when a verdict was computed (positive or not), 1 for usage
//! errors, 2 for numerical failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use decoupling::error::{Error, Result};
use decoupling::exec::Execution;
use decoupling::geometry::Geometry;
use decoupling::json::{real_rows, CValue, MatrixJson};
use decoupling::numkit::{RMatrix, RVector, SubspaceBasis, DEFAULT_RTOL};
use decoupling::problem::{self, ProblemSpec};
use decoupling::sysmodel::{self, LtiSystem, StabilityRegion};
use decoupling::{rado, synth, verify};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "decouple", version, about = "Eigenstructure-based output decoupling of LTI systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Relative rank tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Stability region: lhp, lhp:<alpha>, disc or disc:<radius>.
    #[arg(long, global = true)]
    region: Option<String>,
    /// Write the JSON result here instead of standard output.
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant zeros with their multiplicities.
    Zeros { system: PathBuf },
    /// Bases of the output-nulling and stabilizability subspaces.
    Subspaces {
        system: PathBuf,
        /// Subspaces to report (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<SubspaceName>,
    },
    /// Solvability verdict with the full condition ledger.
    Check { system: PathBuf, problem: PathBuf },
    /// Feedback and feedforward matrices solving the problem.
    Synth { system: PathBuf, problem: PathBuf },
    /// Checks a feedback file against the problem.
    Verify {
        system: PathBuf,
        feedback: PathBuf,
        problem: PathBuf,
        /// Write the tracking error of a unit step from rest as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SubspaceName {
    RStar,
    VStar,
    VStarG,
    RStarI,
    #[value(name = "v_star_g_i")]
    VStarGI,
    #[value(name = "l_i")]
    LI,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

struct Context {
    rtol: f64,
    seed: u64,
    region: Option<StabilityRegion>,
}

impl Context {
    fn system(&self, path: &Path) -> Result<LtiSystem> {
        sysmodel::load_system(&read(path)?)
    }

    /// Flag, then the problem file, then the standard region of the domain.
    fn problem(&self, path: &Path) -> Result<ProblemSpec> {
        let mut spec = problem::load_problem(&read(path)?)?;
        if let Some(r) = &self.region {
            spec.region = Some(r.clone());
        }
        Ok(spec)
    }

    fn region_for(&self, sys: &LtiSystem) -> StabilityRegion {
        self.region.clone().unwrap_or_else(|| StabilityRegion::standard(sys.domain))
    }
}

fn zeros(ctx: &Context, system: &Path) -> Result<Value> {
    let sys = ctx.system(system)?;
    let region = ctx.region_for(&sys);
    let zs = decoupling::pencil::invariant_zeros(&sys, ctx.rtol)?;
    let list: Vec<Value> = zs
        .zeros
        .iter()
        .map(|z| {
            json!({
                "re": z.z().re,
                "im": z.z().im,
                "geometric": z.geometric,
                "algebraic": z.algebraic,
                "minimum_phase": region.contains(z.z()),
            })
        })
        .collect();
    Ok(json!({ "zeros": list, "normal_rank": zs.normal_rank }))
}

fn subspace_json(s: &SubspaceBasis, rtol: f64) -> Result<Value> {
    // One entry per basis vector; real whenever the subspace is.
    let basis = match s.real_basis(rtol)? {
        Some(r) => MatrixJson::from_real(&r.transpose()),
        None => MatrixJson::from_complex(&s.basis().transpose()),
    };
    Ok(json!({ "dim": s.dim(), "basis": basis }))
}

fn subspaces(ctx: &Context, system: &Path, only: &[SubspaceName]) -> Result<Value> {
    let sys = ctx.system(system)?;
    let g = Geometry::new(&sys, &ctx.region_for(&sys), ctx.rtol, ctx.seed)?;
    let want = |s: SubspaceName| only.is_empty() || only.contains(&s);
    let mut out = serde_json::Map::new();
    if want(SubspaceName::RStar) {
        out.insert("r_star".into(), subspace_json(&g.r_star()?, ctx.rtol)?);
    }
    if want(SubspaceName::VStar) {
        out.insert("v_star".into(), subspace_json(&g.v_star()?, ctx.rtol)?);
    }
    if want(SubspaceName::VStarG) {
        out.insert("v_star_g".into(), subspace_json(&g.v_star_g()?, ctx.rtol)?);
    }
    let per_output = [SubspaceName::RStarI, SubspaceName::VStarGI, SubspaceName::LI];
    if per_output.iter().any(|&s| want(s)) {
        let mut outputs = Vec::new();
        for i in 0..sys.p() {
            let mut entry = serde_json::Map::new();
            entry.insert("output".into(), json!(i + 1));
            if want(SubspaceName::RStarI) {
                entry.insert("r_star_i".into(), subspace_json(&g.r_star_i(i)?, ctx.rtol)?);
            }
            if want(SubspaceName::VStarGI) {
                entry.insert("v_star_g_i".into(), subspace_json(&g.v_star_g_i(i)?, ctx.rtol)?);
            }
            if want(SubspaceName::LI) {
                entry.insert("l_i".into(), subspace_json(&g.l_i(i)?, ctx.rtol)?);
            }
            outputs.push(Value::Object(entry));
        }
        out.insert("outputs".into(), Value::Array(outputs));
    }
    Ok(Value::Object(out))
}

fn geometry_for(ctx: &Context, sys: &LtiSystem, spec: &ProblemSpec) -> Result<Geometry> {
    Geometry::new(sys, &spec.region_or(sys), ctx.rtol, ctx.seed)
}

fn check(ctx: &Context, system: &Path, problem: &Path) -> Result<Value> {
    let sys = ctx.system(system)?;
    let spec = ctx.problem(problem)?;
    let g = geometry_for(ctx, &sys, &spec)?;
    let report = rado::check_problem_in(&g, &spec, Execution::default())?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

fn synthesize(ctx: &Context, system: &Path, problem: &Path) -> Result<Value> {
    let sys = ctx.system(system)?;
    let spec = ctx.problem(problem)?;
    let g = geometry_for(ctx, &sys, &spec)?;
    let report = rado::check_problem_in(&g, &spec, Execution::default())?;
    let sol = synth::synthesize_in(&g, &spec, &report, ctx.seed)?;
    // Never report success without an independent pass of the checks.
    let check = verify::check_decoupling(&sys, &sol.f, &spec);
    if !check.verdict {
        return Err(Error::VerificationFailed(check.diagnostics()));
    }
    let residual = verify::tracking_residual(&sys, &sol.f, &sol.g)?;
    if residual > TRACKING_TOL {
        return Err(Error::VerificationFailed(format!("tracking residual {residual:.3e}")));
    }
    let assignment: Vec<Value> = sol
        .assignment
        .iter()
        .map(|c| json!({ "lambda": CValue(c.lambda), "output": c.tag }))
        .collect();
    Ok(json!({
        "F": real_rows(&sol.f),
        "G": real_rows(&sol.g),
        "assignment": assignment,
        "seed": ctx.seed,
    }))
}

/// `DC gain * G = I` to this accuracy counts as tracking.
const TRACKING_TOL: f64 = 1e-8;

#[derive(serde::Deserialize)]
struct FeedbackFile {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "G", default)]
    g: Option<Vec<Vec<f64>>>,
}

fn verify_feedback(ctx: &Context, system: &Path, feedback: &Path, problem: &Path, trace: Option<&Path>) -> Result<Value> {
    let sys = ctx.system(system)?;
    let spec = ctx.problem(problem)?;
    let file: FeedbackFile = serde_json::from_str(&read(feedback)?).map_err(|e| Error::Parse(e.to_string()))?;
    let f = sysmodel::matrix_from_rows("F", &file.f, sys.n())?;
    if f.shape() != (sys.m(), sys.n()) {
        return Err(Error::DimensionMismatch(format!("F is {:?}, expected {:?}", f.shape(), (sys.m(), sys.n()))));
    }
    let g = match &file.g {
        Some(rows) => {
            let g = sysmodel::matrix_from_rows("G", rows, sys.p())?;
            if g.shape() != (sys.m(), sys.p()) {
                return Err(Error::DimensionMismatch(format!("G is {:?}, expected {:?}", g.shape(), (sys.m(), sys.p()))));
            }
            g
        }
        None => synth::feedforward_gain(&sys, &f)?,
    };
    let check = verify::check_decoupling_with(&sys, &f, &spec, verify::OBSERVABILITY_TOL);
    let residual = verify::tracking_residual(&sys, &f, &g).ok();
    let tracking = residual.is_some_and(|r| r <= TRACKING_TOL);
    if let Some(path) = trace {
        write_trace(&sys, &f, &g, path)?;
    }
    Ok(json!({
        "verdict": check.verdict && tracking,
        "decoupling": check,
        "mode_map": check.mode_map,
        "per_output_counts": check.per_output_counts,
        "tracking_residual": residual,
    }))
}

fn write_trace(sys: &LtiSystem, f: &RMatrix, g: &RMatrix, path: &Path) -> Result<()> {
    let x0 = RVector::zeros(sys.n());
    let r = RVector::from_element(sys.p(), 1.0);
    let traj = verify::simulate_error(sys, f, g, &x0, &r, None, 201)?;
    let mut csv = String::from("t");
    for i in 1..=sys.p() {
        let _ = write!(csv, ",eps{i}");
    }
    csv.push('\n');
    for (t, e) in traj.times.iter().zip(&traj.error) {
        let _ = write!(csv, "{t}");
        for x in e {
            let _ = write!(csv, ",{x}");
        }
        csv.push('\n');
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Value> {
    let region = cli.region.as_deref().map(StabilityRegion::parse).transpose()?;
    if !(cli.rtol > 0.0 && cli.rtol < 1.0) {
        return Err(Error::Parse(format!("--rtol must lie in (0, 1), got {}", cli.rtol)));
    }
    let ctx = Context { rtol: cli.rtol, seed: cli.seed, region };
    match &cli.command {
        Command::Zeros { system } => zeros(&ctx, system),
        Command::Subspaces { system, only } => subspaces(&ctx, system, only),
        Command::Check { system, problem } => check(&ctx, system, problem),
        Command::Synth { system, problem } => synthesize(&ctx, system, problem),
        Command::Verify { system, feedback, problem, trace } => {
            verify_feedback(&ctx, system, feedback, problem, trace.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = run(&cli).and_then(|value| {
        let mut text = serde_json::to_string_pretty(&value).expect("JSON value serializes");
        text.push('\n');
        match &cli.output {
            Some(path) => std::fs::write(path, text).map_err(Error::from),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
