use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ordrank::features::{extract_all, features_csv, FeatureKind, FeatureVector};
use ordrank::neural::{extract_features, grad_check, Network};
use ordrank::rng::derive_seed;
use ordrank::synthgen::{generate_dataset, split, SynthConfig};
use ordrank::volume::io::{load_regions, write_regions};
use ordrank::volume::{elastic_deform, enumerate_translations, Region};
use ordrank::Error;

use crate::config::{streams, AugmentMode, Preset, RunConfig};
use crate::container;
use crate::pipeline::{self, Learner, Model, Prediction, Strategy};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Gradient audits fail above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "ordrank", version, about = "Ordinal ranking pipeline for paired volumetric regions")]
pub struct Cli {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// toy | adni-paper
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single-threaded execution for bit-reproducible runs.
    #[arg(long, global = true)]
    pub reference: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as train/ and test/ manifests.
    Synth,
    /// Expand a dataset with translated or elastically deformed copies.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a feature table (shape | radiomics | deep).
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        feature: String,
        /// Trained net model, required for deep features.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit one of the six learner/strategy combinations.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// rf-shape | rf-radiomics | net
        #[arg(long)]
        learner: String,
        /// multiclass | ordinal
        #[arg(long)]
        strategy: String,
    },
    /// Score a manifest with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Metrics, confusion matrix and ROC for a predictions file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Finite-difference audit of the network backward pass.
    Gradcheck {
        /// multiclass | ordinal
        #[arg(long, default_value = "ordinal")]
        strategy: String,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Coordinates sampled per parameter tensor.
        #[arg(long, default_value_t = 32)]
        per_tensor: usize,
    },
    /// Fit and score all six models over consecutive seeds.
    Benchmark {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

fn config_of(cli: &Cli) -> Result<RunConfig> {
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let preset = cli.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    Ok(RunConfig::load(text.as_deref(), preset, cli.seed)?)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

pub fn execute(cli: &Cli) -> Result<String> {
    if cli.reference {
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    let cfg = config_of(cli)?;
    match &cli.command {
        Command::Synth => synth(&cfg, &out_path(cli, "synth")),
        Command::Augment { manifest } => augment(&cfg, manifest, &out_path(cli, "augmented")),
        Command::Extract { manifest, feature, model } => {
            extract(&cfg, manifest, feature, model.as_deref(), &out_path(cli, "features.csv"))
        }
        Command::Train { manifest, learner, strategy } => {
            train(&cfg, manifest, learner.parse()?, strategy.parse()?, &out_path(cli, "model.ordm"))
        }
        Command::Predict { model, manifest } => predict(model, manifest, &out_path(cli, "predictions.tsv")),
        Command::Eval { predictions } => eval(&cfg, predictions, &out_path(cli, "eval")),
        Command::Gradcheck { strategy, epsilon, per_tensor } => gradcheck(&cfg, strategy.parse()?, *epsilon, *per_tensor),
        Command::Benchmark { seeds } => benchmark(&cfg, *seeds, &out_path(cli, "benchmark.tsv")),
    }
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = generate_dataset(&cfg.synth_config())?;
    let (train, test) = split(&data, cfg.train_fraction, cfg.stream_seed(streams::SPLIT))?;
    let train_manifest = write_regions(&out.join("train"), &train.regions)?;
    let test_manifest = write_regions(&out.join("test"), &test.regions)?;
    write(&out.join("config.txt"), &cfg.echo())?;
    Ok(format!(
        "train={} ({} regions)\ntest={} ({} regions)\n",
        train_manifest.display(),
        train.len(),
        test_manifest.display(),
        test.len()
    ))
}

fn augment(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<String> {
    let regions = load_regions(manifest)?;
    let a = cfg.augment;
    let mut all = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        all.push(r.clone());
        match a.mode {
            AugmentMode::Translate => all.extend(enumerate_translations(r, a.magnitude)),
            AugmentMode::Elastic => {
                for c in 0..a.copies {
                    let seed = derive_seed(cfg.stream_seed(streams::AUGMENT), (i * a.copies + c) as u64);
                    let mut copy = elastic_deform(r, a.amplitude, a.smoothness, seed);
                    copy.id = format!("{}+e{c}", r.id);
                    all.push(copy);
                }
            }
        }
    }
    let path = write_regions(out, &all)?;
    Ok(format!("manifest={} ({} regions from {})\n", path.display(), all.len(), regions.len()))
}

fn extract(cfg: &RunConfig, manifest: &Path, feature: &str, model: Option<&Path>, out: &Path) -> Result<String> {
    let regions = load_regions(manifest)?;
    let vectors: Vec<FeatureVector> = match feature {
        "shape" => extract_all(&regions, FeatureKind::Shape, &cfg.radiomics)?,
        "radiomics" => extract_all(&regions, FeatureKind::Radiomics, &cfg.radiomics)?,
        "deep" => {
            let path = model.ok_or_else(|| Error::ConfigInvalid("deep features need --model".into()))?;
            let net = match container::load(path)?.model {
                Model::Net(net) => net,
                _ => return Err(Error::ConfigInvalid("deep features need a net model".into()).into()),
            };
            regions.iter().map(|r| extract_features(&net, r)).collect::<ordrank::Result<_>>()?
        }
        other => return Err(Error::ConfigInvalid(format!("unknown feature {other:?} (shape | radiomics | deep)")).into()),
    };
    write(out, &features_csv(&regions, &vectors)?)?;
    let warnings: usize = vectors.iter().map(|v| v.warnings.len()).sum();
    Ok(format!(
        "features={} rows={} columns={} warnings={warnings}\n",
        out.display(),
        vectors.len(),
        vectors.first().map_or(0, |v| v.len())
    ))
}

fn train(cfg: &RunConfig, manifest: &Path, learner: Learner, strategy: Strategy, out: &Path) -> Result<String> {
    let regions = load_regions(manifest)?;
    let model = pipeline::fit(learner, strategy, &regions, cfg.classes(), cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    container::save(out, &model)?;
    Ok(format!("model={} learner={learner} strategy={strategy} samples={}\n", out.display(), regions.len()))
}

/// Tab-separated `id, true, pred, scores` with a provenance comment.
pub fn predictions_tsv(model: &pipeline::TrainedModel, predictions: &[Prediction]) -> String {
    let mut s = format!(
        "# learner={} strategy={} classes={} seed={}\nid\ttrue\tpred\tscores\n",
        model.learner, model.strategy, model.classes, model.config.seed
    );
    for p in predictions {
        let truth = p.truth.map_or_else(|| "?".to_string(), |t| t.to_string());
        let scores: Vec<String> = p.scores.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}\t{truth}\t{}\t{}", p.id, p.predicted, scores.join(","));
    }
    s
}

pub fn parse_predictions(text: &str) -> ordrank::Result<(Vec<String>, Vec<Prediction>)> {
    let mut comments = Vec::new();
    let mut out = Vec::new();
    let bad = |i: usize, what: &str| Error::Format(format!("predictions line {}: {what}", i + 1));
    for (i, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix("# ") {
            comments.push(c.to_string());
            continue;
        }
        if line.is_empty() || line.starts_with("id\t") {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(i, "expected 4 tab-separated fields"));
        }
        let truth = match f[1] {
            "?" => None,
            t => Some(t.parse().map_err(|_| bad(i, "bad true label"))?),
        };
        let scores = if f[3].is_empty() {
            Vec::new()
        } else {
            f[3].split(',').map(|v| v.parse().map_err(|_| bad(i, "bad score"))).collect::<ordrank::Result<_>>()?
        };
        out.push(Prediction {
            id: f[0].to_string(),
            truth,
            predicted: f[2].parse().map_err(|_| bad(i, "bad predicted label"))?,
            scores,
        });
    }
    Ok((comments, out))
}

fn predict(model: &Path, manifest: &Path, out: &Path) -> Result<String> {
    let model = container::load(model)?;
    let regions = load_regions(manifest)?;
    let predictions = model.predict(&regions)?;
    write(out, &predictions_tsv(&model, &predictions))?;
    Ok(format!("predictions={} rows={}\n", out.display(), predictions.len()))
}

fn eval(cfg: &RunConfig, predictions: &Path, out: &Path) -> Result<String> {
    let text = fs::read_to_string(predictions).map_err(|e| Error::Io(format!("{}: {e}", predictions.display())))?;
    let (comments, preds) = parse_predictions(&text)?;
    let classes = comments
        .iter()
        .flat_map(|c| c.split(' '))
        .find_map(|kv| kv.strip_prefix("classes="))
        .map(|v| v.parse::<usize>().map_err(|_| Error::Format(format!("bad classes={v}"))))
        .transpose()?
        .unwrap_or(cfg.classes());
    let report = pipeline::evaluate(&preds, classes)?;
    let mut text = String::from("# predictions\n");
    for c in &comments {
        let _ = writeln!(text, "{c}");
    }
    let _ = writeln!(text, "# config\n{}# metrics", cfg.echo());
    text.push_str(&report.metrics_text());
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    write(&out.join("report.txt"), &text)?;
    write(&out.join("confusion.csv"), &report.confusion_csv())?;
    if let Some(roc) = report.roc_csv() {
        write(&out.join("roc.csv"), &roc)?;
    }
    Ok(report.metrics_text())
}

/// Regions matching the configured network input, one per class.
pub fn probe_regions(cfg: &RunConfig) -> ordrank::Result<Vec<Region>> {
    let synth = SynthConfig { per_class: 1, ..cfg.synth_config() };
    Ok(generate_dataset(&synth)?.regions)
}

fn gradcheck(cfg: &RunConfig, strategy: Strategy, epsilon: f64, per_tensor: usize) -> Result<String> {
    let net = Network::new(cfg.net_config(strategy.head(cfg.classes())), cfg.stream_seed(streams::NET_INIT))?;
    let regions = probe_regions(cfg)?;
    let r = grad_check(&net, &regions, epsilon, per_tensor, cfg.stream_seed(streams::GRADCHECK))?;
    let summary = format!(
        "max_rel_error={:?}\nworst={}[{}]\nchecked={}\nrefined={}\nskipped={}\n",
        r.max_rel_error, r.worst.0, r.worst.1, r.checked, r.refined, r.skipped
    );
    if r.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:?} at {}[{}]",
            r.max_rel_error, r.worst.0, r.worst.1
        )));
    }
    Ok(summary)
}

fn benchmark(cfg: &RunConfig, seeds: u64, out: &Path) -> Result<String> {
    let mut s = String::from("seed\tlearner\tstrategy\tadjusted_accuracy\tmean_absolute_rank_error\tadjacency_fraction\tauc\n");
    for offset in 0..seeds {
        let mut run = cfg.clone();
        run.seed = cfg.seed + offset;
        for row in pipeline::benchmark(&run, &Learner::ALL)? {
            let r = &row.report;
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{}",
                run.seed,
                row.learner,
                row.strategy,
                r.adjusted_accuracy.map_or_else(|| "undefined".into(), |v| format!("{v:?}")),
                r.mean_absolute_rank_error,
                r.adjacency_fraction,
                r.roc.as_ref().map_or_else(|| "undefined".into(), |roc| format!("{:?}", roc.auc)),
            );
        }
    }
    write(out, &s)?;
    Ok(s)
}
