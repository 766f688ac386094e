use std::path::PathBuf;

use clap::Args;
use lierep::clebsch::{tensor_structure_report, verification_reps, CgOptions, TensorStructureReport};
use lierep::reps::AlgebraRep;

use crate::manifest::ManifestBuilder;
use crate::{read_file, sibling, write_json, CliError, CliResult, Context};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Representation JSON to verify.
    #[arg(long)]
    pub rep: PathBuf,
    /// `analytic` for the built-in irreducible representations, or
    /// representation files to use as projection targets.
    #[arg(long, num_args = 1.., default_value = "analytic")]
    pub against: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Group elements per constraint matrix.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
}

pub(crate) fn load_rep(path: &std::path::Path) -> CliResult<AlgebraRep> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: not a representation file: {e}", path.display())))
}

/// One-word summary of a report.
pub fn verdict(report: &TensorStructureReport) -> &'static str {
    if report.is_match {
        "irreducible"
    } else if report.schur.matched.is_none() || report.schur.multiplicity {
        "reducible"
    } else {
        "mismatch"
    }
}

pub(crate) fn run(args: &VerifyArgs, ctx: &Context) -> CliResult<()> {
    let rep = load_rep(&args.rep)?;
    let mut manifest = ManifestBuilder::new("verify", ctx, &serde_json::json!({
        "against": args.against,
        "seed": args.seed,
        "samples": args.samples,
    }), args.seed)?;
    manifest.input(&args.rep)?;
    let analytic = verification_reps(&rep.algebra);
    let (rows, cols) = if args.against == ["analytic"] {
        analytic.map_err(|e| CliError::Usage(format!("no analytic representations for this algebra: {e}")))?
    } else {
        let mut cols = Vec::new();
        for f in &args.against {
            let p = PathBuf::from(f);
            cols.push(load_rep(&p)?);
            manifest.input(&p)?;
        }
        let rows = match analytic {
            Ok((rows, _)) => rows,
            Err(_) => {
                let mut rows = vec![AlgebraRep::trivial(&rep.algebra, 1)];
                rows.extend(cols.iter().cloned());
                rows
            }
        };
        (rows, cols)
    };
    let opts = CgOptions {
        samples: args.samples,
        seed: args.seed,
        execution: ctx.execution,
        ..Default::default()
    };
    let report = tensor_structure_report(&rep, &rows, &cols, &opts).map_err(|e| match e {
        lierep::Error::Domain(m) | lierep::Error::Shape(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    write_json(&args.out, &report)?;
    manifest.output(&args.out)?;
    let v = verdict(&report);
    manifest.result("verdict", v)?;
    manifest.result("match", report.is_match)?;
    manifest.result("matched", report.matched_label())?;
    manifest.result("condition_number", report.schur.condition_number)?;
    manifest.write(&sibling(&args.out, "manifest"))?;

    print_grid(&report);
    match report.matched_label() {
        Some(label) if report.is_match => {
            println!(
                "verdict: {v}; isomorphic to {label} (condition number {:.3e})",
                report.schur.condition_number.unwrap_or(f64::NAN)
            );
            Ok(())
        }
        _ => Err(CliError::VerificationFailed(format!("verdict: {v}"))),
    }
}

fn print_grid(report: &TensorStructureReport) {
    println!("r = SV2/SV1 for rep ⊗ row → column");
    println!("{:>10} {}", "", report.cols.iter().map(|c| format!("{c:>11}")).collect::<String>());
    for (label, row) in report.rows.iter().zip(&report.r_values) {
        let cells: String = row.iter().map(|r| format!("{r:>11.2e}")).collect();
        println!("{label:>10} {cells}");
    }
}
