use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lierep::algebra::{AlgebraSource, StructureConstants};
use lierep::clebsch::{tensor_structure_report, verification_reps, CgOptions};
use lierep::learnrep::{run_with_acceptance, AttemptSummary, LearnRepConfig, LossValue, TracePoint};
use lierep::reps::{AlgebraRep, Field};
use serde::{Deserialize, Serialize};

use crate::manifest::ManifestBuilder;
use crate::{read_file, sibling, write_json, CliError, CliResult, Context};

/// Every this many trace points one is kept in the trace file.
pub const TRACE_DECIMATION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    Real,
    Complex,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Built-in algebra name (so3, so21, so31) or a structure-constant JSON
    /// file.
    #[arg(long)]
    pub algebra: String,
    /// Representation dimension.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attempts allowed to fail to converge after the first.
    #[arg(long, default_value_t = 10)]
    pub max_restarts: usize,
    /// Converged attempts the verification may reject.
    #[arg(long, default_value_t = 100)]
    pub max_rejections: usize,
    #[arg(long, default_value_t = 50_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub loss_target: f64,
    #[arg(long, value_enum, default_value_t = FieldArg::Real)]
    pub field: FieldArg,
    /// Accept the first converged attempt without checking irreducibility.
    #[arg(long)]
    pub no_verify: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace path; defaults to `<out stem>.trace.json`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Loss trace of the returned attempt, kept every
/// [`TRACE_DECIMATION`] iterations plus the final point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnTrace {
    pub algebra: AlgebraSource,
    pub dim: usize,
    pub seed: u64,
    pub converged: bool,
    pub restarts: usize,
    pub rejections: usize,
    pub final_loss: LossValue,
    pub decimation: usize,
    pub attempts: Vec<AttemptSummary>,
    pub trace: Vec<TracePoint>,
}

pub(crate) fn resolve_algebra(arg: &str) -> CliResult<StructureConstants> {
    let path = Path::new(arg);
    if path.is_file() {
        let bytes = read_file(path)?;
        let source: AlgebraSource = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Usage(format!("{arg}: not a structure-constant file: {e}")))?;
        return Ok(source.resolve()?);
    }
    StructureConstants::builtin(arg).map_err(|e| CliError::Usage(format!("unknown algebra {arg:?}: {e}")))
}

fn decimate(trace: &[TracePoint]) -> Vec<TracePoint> {
    let mut out: Vec<TracePoint> = trace.iter().step_by(TRACE_DECIMATION).copied().collect();
    if let Some(last) = trace.last() {
        if out.last() != Some(last) {
            out.push(*last);
        }
    }
    out
}

pub(crate) fn is_verified(rep: &AlgebraRep) -> bool {
    let Ok((rows, cols)) = verification_reps(&rep.algebra) else {
        return false;
    };
    tensor_structure_report(rep, &rows, &cols, &CgOptions::default())
        .map(|r| r.is_match)
        .unwrap_or(false)
}

pub(crate) fn run(args: &LearnArgs, ctx: &Context) -> CliResult<()> {
    let algebra = resolve_algebra(&args.algebra)?;
    if args.dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    let verify = !args.no_verify;
    if verify && verification_reps(&algebra).is_err() {
        return Err(CliError::Usage(
            "verification needs a built-in algebra; pass --no-verify for custom structure constants".into(),
        ));
    }
    let mut config = LearnRepConfig::new(algebra, args.dim);
    config.field = match args.field {
        FieldArg::Real => Field::Real,
        FieldArg::Complex => Field::Complex,
    };
    config.seed = args.seed;
    config.max_restarts = args.max_restarts;
    config.max_rejections = args.max_rejections;
    config.max_iters_per_attempt = args.max_iters;
    config.loss_target = args.loss_target;
    config.execution = ctx.execution;

    let mut manifest = ManifestBuilder::new("learn", ctx, &config, args.seed)?;
    if Path::new(&args.algebra).is_file() {
        manifest.input(Path::new(&args.algebra))?;
    }
    let accept = |rep: &AlgebraRep| !verify || is_verified(rep);
    let out = run_with_acceptance(&config, &accept).map_err(|e| match e {
        lierep::Error::Domain(m) => CliError::Usage(m),
        other => other.into(),
    })?;

    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.out, "trace"));
    let trace = LearnTrace {
        algebra: AlgebraSource::from(&config.algebra),
        dim: args.dim,
        seed: args.seed,
        converged: out.converged,
        restarts: out.restarts,
        rejections: out.rejections,
        final_loss: out.final_loss,
        decimation: TRACE_DECIMATION,
        attempts: out.attempts.clone(),
        trace: decimate(&out.trace),
    };
    write_json(&args.out, &out.rep)?;
    write_json(&trace_path, &trace)?;
    manifest.output(&args.out)?;
    manifest.output(&trace_path)?;
    manifest.result("converged", out.converged)?;
    manifest.result("final_loss", out.final_loss.total)?;
    manifest.result("restarts", out.restarts)?;
    manifest.result("rejections", out.rejections)?;
    manifest.write(&sibling(&args.out, "manifest"))?;

    println!(
        "loss {:.3e} after {} restarts, {} rejected; wrote {}",
        out.final_loss.total,
        out.restarts,
        out.rejections,
        args.out.display()
    );
    if out.converged {
        Ok(())
    } else if out.rejections > config.max_rejections {
        Err(CliError::VerificationFailed(format!(
            "every converged attempt failed verification ({} rejections)",
            out.rejections
        )))
    } else {
        Err(CliError::NotConverged(format!(
            "no attempt reached loss {:e}; best {:.3e} written as a best-effort artifact",
            config.loss_target, out.final_loss.total
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(i: usize) -> TracePoint {
        TracePoint {
            iteration: i,
            loss: 1.0 / (i + 1) as f64,
            penalty: 1.0,
            lr: 0.1,
        }
    }

    #[test]
    fn decimation_keeps_last_point() {
        let t: Vec<_> = (0..25).map(point).collect();
        let d = decimate(&t);
        assert_eq!(d.iter().map(|p| p.iteration).collect::<Vec<_>>(), vec![0, 10, 20, 24]);
        let t: Vec<_> = (0..21).map(point).collect();
        assert_eq!(decimate(&t).len(), 3);
        assert!(decimate(&[]).is_empty());
    }

    #[test]
    fn algebra_names_and_files() {
        assert!(resolve_algebra("so31").is_ok());
        assert!(matches!(resolve_algebra("su7"), Err(CliError::Usage(_))));
    }
}
