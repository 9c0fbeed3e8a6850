//! The six learners (three feature/learner families, each multiclass or
//! ordinal) behind one fit/predict surface, plus the seeded benchmark.

use std::fmt;
use std::str::FromStr;

use ordrank::eval::EvalReport;
use ordrank::features::{extract_all, FeatureKind};
use ordrank::forest::{self, argmax_lowest, Forest};
use ordrank::neural::{self, Head, Network};
use ordrank::ordinal::{fit_ordinal, BinaryTaskDataset, OrdinalModel, OrdinalScorer, ScoreKind, TaskEnsemble};
use ordrank::synthgen::{generate_dataset, split};
use ordrank::volume::Region;
use ordrank::{Error, Result};

use crate::config::{streams, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Learner {
    RfShape,
    RfRadiomics,
    Net,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::RfShape, Learner::RfRadiomics, Learner::Net];

    pub fn feature_kind(self) -> Option<FeatureKind> {
        match self {
            Learner::RfShape => Some(FeatureKind::Shape),
            Learner::RfRadiomics => Some(FeatureKind::Radiomics),
            Learner::Net => None,
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Learner::RfShape => "rf-shape",
            Learner::RfRadiomics => "rf-radiomics",
            Learner::Net => "net",
        })
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf-shape" => Ok(Learner::RfShape),
            "rf-radiomics" => Ok(Learner::RfRadiomics),
            "net" => Ok(Learner::Net),
            _ => Err(Error::ConfigInvalid(format!("unknown learner {s:?} (rf-shape | rf-radiomics | net)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Multiclass,
    Ordinal,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Multiclass, Strategy::Ordinal];

    pub fn head(self, classes: usize) -> Head {
        match self {
            Strategy::Multiclass => Head::Multiclass { classes },
            Strategy::Ordinal => Head::Ordinal { classes },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Multiclass => "multiclass",
            Strategy::Ordinal => "ordinal",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(Strategy::Multiclass),
            "ordinal" => Ok(Strategy::Ordinal),
            _ => Err(Error::ConfigInvalid(format!("unknown strategy {s:?} (multiclass | ordinal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Forest { features: FeatureKind, forest: Forest },
    OrdinalForest { features: FeatureKind, model: OrdinalModel<TaskEnsemble<Forest>> },
    Net(Network),
}

/// A fitted model with the configuration it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub learner: Learner,
    pub strategy: Strategy,
    pub classes: usize,
    pub config: RunConfig,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub truth: Option<usize>,
    pub predicted: usize,
    /// Ordinal models: `P(rank > k)` for `k = 1..K-1`. Multiclass models:
    /// class probabilities. The last entry scores the top class either way.
    pub scores: Vec<f64>,
}

pub fn labels(regions: &[Region]) -> Result<Vec<usize>> {
    regions
        .iter()
        .map(|r| r.label.ok_or_else(|| Error::Format(format!("region {} has no label", r.id))))
        .collect()
}

pub fn feature_rows(regions: &[Region], kind: FeatureKind, config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    Ok(extract_all(regions, kind, &config.radiomics)?.into_iter().map(|v| v.values).collect())
}

/// Fit a forest learner on precomputed feature rows.
pub fn fit_forest(
    rows: &[Vec<f64>],
    labels: &[usize],
    features: FeatureKind,
    strategy: Strategy,
    classes: usize,
    config: &RunConfig,
) -> Result<Model> {
    let fc = config.forest_config();
    match strategy {
        Strategy::Multiclass => {
            let weights = forest::class_weights(labels, classes);
            Ok(Model::Forest { features, forest: forest::fit(rows, labels, &weights, classes, &fc)? })
        }
        Strategy::Ordinal => {
            let model = fit_ordinal(labels, classes, ScoreKind::Probability, fc.seed, |task: &BinaryTaskDataset, seed| {
                let binary: Vec<usize> = task.targets(labels.len()).into_iter().map(|b| b + 1).collect();
                let weights = forest::class_weights(&binary, 2);
                forest::fit(rows, &binary, &weights, 2, &forest::ForestConfig { seed, ..fc })
            })?;
            Ok(Model::OrdinalForest { features, model })
        }
    }
}

pub fn fit(learner: Learner, strategy: Strategy, train: &[Region], classes: usize, config: &RunConfig) -> Result<TrainedModel> {
    let y = labels(train)?;
    let model = match learner.feature_kind() {
        Some(kind) => fit_forest(&feature_rows(train, kind, config)?, &y, kind, strategy, classes, config)?,
        None => {
            let net = Network::new(config.net_config(strategy.head(classes)), config.stream_seed(streams::NET_INIT))?;
            let (net, _) = neural::train(net, train, &config.train_config(), config.train_augmentation)?;
            Model::Net(net)
        }
    };
    Ok(TrainedModel { learner, strategy, classes, config: config.clone(), model })
}

impl TrainedModel {
    pub fn predict(&self, regions: &[Region]) -> Result<Vec<Prediction>> {
        let scored: Vec<(usize, Vec<f64>)> = match &self.model {
            Model::Forest { features, forest } => {
                let rows = feature_rows(regions, *features, &self.config)?;
                rows.iter()
                    .map(|r| {
                        let p = forest.predict_proba(r)?;
                        Ok((argmax_lowest(&p) + 1, p))
                    })
                    .collect::<Result<_>>()?
            }
            Model::OrdinalForest { features, model } => {
                let rows = feature_rows(regions, *features, &self.config)?;
                rows.iter()
                    .map(|r| {
                        let s = model.scorer.task_scores(r.as_slice());
                        (model.predict::<[f64]>(r.as_slice()), s)
                    })
                    .collect()
            }
            Model::Net(net) => net.predict(regions)?.into_iter().zip(net.scores(regions)?).collect(),
        };
        Ok(regions
            .iter()
            .zip(scored)
            .map(|(r, (predicted, scores))| Prediction { id: r.id.clone(), truth: r.label, predicted, scores })
            .collect())
    }
}

/// Report over labelled predictions; the ROC treats the top class as positive.
pub fn evaluate(predictions: &[Prediction], classes: usize) -> Result<EvalReport> {
    let truth: Vec<usize> = predictions
        .iter()
        .map(|p| p.truth.ok_or_else(|| Error::Format(format!("prediction {} has no true label", p.id))))
        .collect::<Result<_>>()?;
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let top: Vec<f64> = predictions.iter().map(|p| p.scores.last().copied().unwrap_or(0.0)).collect();
    let both_sides = truth.contains(&classes) && truth.iter().any(|&t| t != classes);
    EvalReport::compute(&truth, &predicted, classes, both_sides.then_some(top.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub learner: Learner,
    pub strategy: Strategy,
    pub report: EvalReport,
}

/// Generate, split, fit all six models and evaluate them on held-out data.
/// Feature rows are extracted once and shared by both strategies.
pub fn benchmark(config: &RunConfig, learners: &[Learner]) -> Result<Vec<BenchmarkRow>> {
    let data = generate_dataset(&config.synth_config())?;
    let classes = data.classes;
    let (train, test) = split(&data, config.train_fraction, config.stream_seed(streams::SPLIT))?;
    let y = train.labels();
    let mut rows = Vec::new();
    for &learner in learners {
        let cached = match learner.feature_kind() {
            Some(kind) => Some((kind, feature_rows(&train.regions, kind, config)?)),
            None => None,
        };
        for strategy in Strategy::ALL {
            let trained = match &cached {
                Some((kind, feats)) => TrainedModel {
                    learner,
                    strategy,
                    classes,
                    config: config.clone(),
                    model: fit_forest(feats, &y, *kind, strategy, classes, config)?,
                },
                None => fit(learner, strategy, &train.regions, classes, config)?,
            };
            let report = evaluate(&trained.predict(&test.regions)?, classes)?;
            rows.push(BenchmarkRow { learner, strategy, report });
        }
    }
    Ok(rows)
}
