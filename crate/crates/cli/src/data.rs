use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lierep::clebsch::CgOptions;
use lierep::dataset::{lorentz_boost, make_split, read_idx, read_stc, write_stc, PoincareTransform, SpacetimeCloud, SplitConfig};
use lierep::reps::AlgebraRep;
use lierep::spacetimenet::{
    accuracy, argmax, forward, train_from, write_metrics_csv, Aggregation, Checkpoint, NetworkConfig, NetworkWeights,
    RepCatalog, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{content_hash, ManifestBuilder};
use crate::verify::load_rep;
use crate::{read_file, write_file, write_json, CliError, CliResult, Context};

pub const TRAIN_FILE: &str = "train.stc";
pub const DEV_FILE: &str = "dev.stc";
pub const SPLIT_FILE: &str = "split.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Largest logit change `eval --boost` tolerates.
pub const BOOST_DRIFT_TOLERANCE: f64 = 1e-6;

const IMAGE_NAMES: [&str; 2] = ["train-images-idx3-ubyte", "train-images.idx3-ubyte"];
const LABEL_NAMES: [&str; 2] = ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"];

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Directory holding `train-images-idx3-ubyte` and
    /// `train-labels-idx1-ubyte`.
    #[arg(long)]
    pub mnist_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub spatial_dims: u8,
    #[arg(long, value_delimiter = ',', default_value = "0,9")]
    pub classes: Vec<u8>,
    #[arg(long, default_value_t = 4096)]
    pub train_count: usize,
    #[arg(long, default_value_t = 124)]
    pub dev_count: usize,
    /// Dev clouds get a boost of speed uniform in `[0, this]`.
    #[arg(long, default_value_t = 0.3)]
    pub eval_velocity_max: f64,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long)]
    pub no_jitter: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Sidecar describing a generated split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitInfo {
    pub config: SplitConfig,
    pub train: usize,
    pub dev: usize,
}

fn find(dir: &Path, names: &[&str]) -> CliResult<PathBuf> {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Usage(format!("{} contains none of {names:?}", dir.display())))
}

pub(crate) fn gen_data(args: &GenDataArgs, ctx: &Context) -> CliResult<()> {
    let images_path = find(&args.mnist_dir, &IMAGE_NAMES)?;
    let labels_path = find(&args.mnist_dir, &LABEL_NAMES)?;
    let images = read_idx(&read_file(&images_path)?, &read_file(&labels_path)?)?;
    let config = SplitConfig {
        classes: args.classes.clone(),
        train_count: args.train_count,
        dev_count: args.dev_count,
        spatial_dims: args.spatial_dims as usize,
        eval_velocity_max: args.eval_velocity_max,
        points: args.points,
        jitter: !args.no_jitter,
        seed: args.seed,
    };
    let mut manifest = ManifestBuilder::new("gen-data", ctx, &config, args.seed)?;
    manifest.input(&images_path)?;
    manifest.input(&labels_path)?;
    let (train, dev) = make_split(&images, &config, ctx.execution).map_err(usage)?;

    let (train_path, dev_path, split_path) =
        (args.out_dir.join(TRAIN_FILE), args.out_dir.join(DEV_FILE), args.out_dir.join(SPLIT_FILE));
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    write_stc(&train_path, &train)?;
    write_stc(&dev_path, &dev)?;
    write_json(&split_path, &SplitInfo { config, train: train.len(), dev: dev.len() })?;
    for p in [&train_path, &dev_path, &split_path] {
        manifest.output(p)?;
    }
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;
    println!("wrote {} train and {} dev clouds to {}", train.len(), dev.len(), args.out_dir.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Sum,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record a metrics row every this many steps (0: epoch ends only).
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
    #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
    pub aggregation: AggregationArg,
    /// Representation (JSON) carrying point coordinates instead of the
    /// defining spacetime representation, e.g. a learned one.
    #[arg(long)]
    pub vector_rep: Option<PathBuf>,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
}

fn usage(e: lierep::Error) -> CliError {
    match e {
        lierep::Error::Domain(m) | lierep::Error::Shape(m) => CliError::Usage(m),
        other => other.into(),
    }
}

fn load_clouds(path: &Path) -> CliResult<Vec<SpacetimeCloud>> {
    if !path.is_file() {
        return Err(CliError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    Ok(read_stc(path)?)
}

fn weights_hash(w: &NetworkWeights) -> CliResult<String> {
    Ok(content_hash(&serde_json::to_vec(w).map_err(lierep::Error::from)?))
}

pub(crate) fn train(args: &TrainArgs, ctx: &Context) -> CliResult<()> {
    let (train_path, dev_path) = (args.data.join(TRAIN_FILE), args.data.join(DEV_FILE));
    let train_set = load_clouds(&train_path)?;
    let dev_set = if dev_path.is_file() { load_clouds(&dev_path)? } else { Vec::new() };
    let spatial_dims = train_set
        .first()
        .map(|c| c.spatial_dims)
        .ok_or_else(|| CliError::Usage(format!("{} holds no clouds", train_path.display())))?;
    let classes = args
        .classes
        .unwrap_or_else(|| train_set.iter().chain(&dev_set).map(|c| c.label + 1).max().unwrap_or(2).max(2));

    let catalog = match &args.vector_rep {
        None => RepCatalog::spacetime(spatial_dims)?,
        Some(p) => {
            let v = load_rep(p)?;
            let reps = vec![AlgebraRep::trivial(&v.algebra, 1), v];
            RepCatalog::new(reps, 1, &CgOptions { execution: ctx.execution, ..Default::default() }).map_err(usage)?
        }
    };
    if catalog.spatial_dims != spatial_dims {
        return Err(CliError::Usage(format!(
            "representation acts on {} spatial dimensions, data has {spatial_dims}",
            catalog.spatial_dims
        )));
    }
    let config = TrainConfig {
        network: NetworkConfig {
            num_layers: args.layers,
            num_channels: args.channels,
            batch_size: args.batch,
            num_classes: classes,
            aggregation: match args.aggregation {
                AggregationArg::Mean => Aggregation::Mean,
                AggregationArg::Sum => Aggregation::Sum,
            },
            seed: args.seed,
            execution: ctx.execution,
        },
        epochs: args.epochs,
        lr: args.lr,
        log_every: args.log_every,
        eval_every_row: false,
    };
    let mut manifest = ManifestBuilder::new("train", ctx, &config, args.seed)?;
    manifest.input(&train_path)?;
    if dev_path.is_file() {
        manifest.input(&dev_path)?;
    }
    if let Some(p) = &args.vector_rep {
        manifest.input(p)?;
    }

    let initial = NetworkWeights::init(&config.network, &catalog).map_err(usage)?;
    let initial_hash = weights_hash(&initial)?;
    let mut observe = |row: &lierep::spacetimenet::MetricRow| {
        let dev = row.dev_acc.map(|a| format!(" dev_acc {a:.4}")).unwrap_or_default();
        println!(
            "epoch {} step {} train_loss {:.5} train_acc {:.4}{dev}",
            row.epoch, row.step, row.train_loss, row.train_acc
        );
    };
    let out = train_from(initial, &train_set, &dev_set, &catalog, &config, &mut observe).map_err(usage)?;
    let final_hash = weights_hash(&out.weights)?;

    let weights_path = args.out_dir.join(WEIGHTS_FILE);
    let metrics_path = args.out_dir.join(METRICS_FILE);
    write_json(&weights_path, &Checkpoint::new(config, &catalog, out.weights))?;
    let mut csv = Vec::new();
    write_metrics_csv(&out.metrics, &mut csv).map_err(|e| CliError::io(&metrics_path, e))?;
    write_file(&metrics_path, &csv)?;
    manifest.output(&weights_path)?;
    manifest.output(&metrics_path)?;
    manifest.result("initial_weights", &initial_hash)?;
    manifest.result("final_weights", &final_hash)?;
    manifest.result("steps", out.steps)?;
    manifest.result("final_dev_acc", out.metrics.last().and_then(|r| r.dev_acc))?;
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;
    println!("initial weights {initial_hash}");
    println!("final weights {final_hash}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Cloud file, or a `gen-data` directory (its dev split is used).
    #[arg(long)]
    pub data: PathBuf,
    /// Also evaluate every cloud boosted by this velocity, e.g. `0.3,0`, and
    /// report the largest logit change.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub boost: Option<Vec<f64>>,
    /// Per-cloud predictions CSV `index,label,predicted,speed`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Result of `eval`, also stored in its manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub clouds: usize,
    pub accuracy: f64,
    pub boost_drift: Option<f64>,
}

pub(crate) fn eval(args: &EvalArgs, ctx: &Context) -> CliResult<()> {
    let bytes = read_file(&args.checkpoint)?;
    let ck: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: not a checkpoint: {e}", args.checkpoint.display())))?;
    let data_path = if args.data.is_dir() { args.data.join(DEV_FILE) } else { args.data.clone() };
    let clouds = load_clouds(&data_path)?;
    if clouds.is_empty() {
        return Err(CliError::Usage(format!("{} holds no clouds", data_path.display())));
    }
    let catalog = ck.catalog(&CgOptions { execution: ctx.execution, ..Default::default() }).map_err(usage)?;
    let mut net = ck.config.network.clone();
    net.execution = ctx.execution;
    let acc = accuracy(&clouds, &ck.weights, &catalog, &net).map_err(usage)?;

    let boost_drift = match &args.boost {
        None => None,
        Some(v) => {
            let tf = PoincareTransform::boost(v.clone()).map_err(usage)?;
            let mut drift: f64 = 0.0;
            for chunk in clouds.chunks(net.batch_size) {
                let moved = chunk.iter().map(|c| lorentz_boost(c, &tf)).collect::<lierep::Result<Vec<_>>>().map_err(usage)?;
                let a = forward(chunk, &ck.weights, &catalog, &net)?;
                let b = forward(&moved, &ck.weights, &catalog, &net)?;
                for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                    drift = drift.max((x - y).abs());
                }
            }
            Some(drift)
        }
    };

    let summary = EvalSummary { clouds: clouds.len(), accuracy: acc, boost_drift };
    if let Some(out) = &args.out {
        let mut csv = String::from("index,label,predicted,speed\n");
        for (k, chunk) in clouds.chunks(net.batch_size).enumerate() {
            let logits = forward(chunk, &ck.weights, &catalog, &net)?;
            for (j, (c, z)) in chunk.iter().zip(&logits).enumerate() {
                csv.push_str(&format!("{},{},{},{}\n", k * net.batch_size + j, c.label, argmax(z), c.transform.speed()));
            }
        }
        write_file(out, csv.as_bytes())?;
        let mut manifest = ManifestBuilder::new("eval", ctx, &serde_json::json!({ "boost": args.boost }), ck.config.network.seed)?;
        manifest.input(&args.checkpoint)?;
        manifest.input(&data_path)?;
        manifest.output(out)?;
        manifest.result("summary", &summary)?;
        manifest.write(&crate::sibling(out, "manifest"))?;
    }

    println!("dev_accuracy {acc:.6}");
    if let Some(d) = boost_drift {
        println!("boost_logit_drift {d:.3e}");
        if !(d <= BOOST_DRIFT_TOLERANCE) {
            return Err(CliError::VerificationFailed(format!(
                "logits moved by {d:.3e} under the boost, above {BOOST_DRIFT_TOLERANCE:e}"
            )));
        }
    }
    Ok(())
}
