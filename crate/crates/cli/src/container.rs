//! Text model container.
//!
//! ```text
//! ORDM1
//! kind = forest | ordinal-ensemble | net
//! <header key = value lines>
//! @config
//! <run config echo>
//! @tensors
//! <name> <len> <v1> <v2> ...
//! sha256 = <hex digest of every preceding byte>
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores
//! every parameter bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ordrank::features::FeatureKind;
use ordrank::forest::{DecisionTree, Forest, ForestConfig, Node};
use ordrank::neural::{InputNorm, Network};
use ordrank::ordinal::{OrdinalModel, TaskEnsemble};
use ordrank::{Error, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::{Learner, Model, Strategy, TrainedModel};

pub const MAGIC: &str = "ORDM1";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn encode_tree(tree: &DecisionTree) -> Vec<f64> {
    let mut out = Vec::new();
    for node in &tree.nodes {
        match node {
            Node::Split { feature, threshold, left, right } => {
                out.extend([0.0, *feature as f64, *threshold, *left as f64, *right as f64]);
            }
            Node::Leaf { counts } => {
                out.push(1.0);
                out.extend_from_slice(counts);
            }
        }
    }
    out
}

fn decode_tree(values: &[f64], classes: usize) -> Result<DecisionTree> {
    let bad = || Error::Format("truncated tree tensor".into());
    let index = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Format(format!("bad tree index {v}")))
        }
    };
    let mut nodes = Vec::new();
    let mut i = 0;
    while i < values.len() {
        match values[i] {
            t if t == 0.0 => {
                let f = values.get(i + 1..i + 5).ok_or_else(bad)?;
                nodes.push(Node::Split { feature: index(f[0])?, threshold: f[1], left: index(f[2])?, right: index(f[3])? });
                i += 5;
            }
            t if t == 1.0 => {
                let counts = values.get(i + 1..i + 1 + classes).ok_or_else(bad)?;
                nodes.push(Node::Leaf { counts: counts.to_vec() });
                i += 1 + classes;
            }
            t => return Err(Error::Format(format!("bad node tag {t}"))),
        }
    }
    for node in &nodes {
        if let Node::Split { left, right, .. } = node {
            if *left >= nodes.len() || *right >= nodes.len() {
                return Err(Error::Format("tree child index out of range".into()));
            }
        }
    }
    Ok(DecisionTree { nodes })
}

struct Writer {
    header: Vec<(String, String)>,
    tensors: Vec<(String, Vec<f64>)>,
}

impl Writer {
    fn forest(&mut self, prefix: &str, forest: &Forest) {
        self.header.push((format!("{prefix}seed"), forest.config.seed.to_string()));
        for (t, tree) in forest.trees.iter().enumerate() {
            self.tensors.push((format!("{prefix}tree.{t}"), encode_tree(tree)));
        }
    }
}

fn feature_name(kind: FeatureKind) -> &'static str {
    kind.name()
}

pub fn to_text(model: &TrainedModel) -> String {
    let mut w = Writer {
        header: vec![
            ("learner".into(), model.learner.to_string()),
            ("strategy".into(), model.strategy.to_string()),
            ("classes".into(), model.classes.to_string()),
        ],
        tensors: Vec::new(),
    };
    let kind = match &model.model {
        Model::Forest { features, forest } => {
            w.header.push(("features".into(), feature_name(*features).into()));
            w.header.push(("n_features".into(), forest.n_features.to_string()));
            w.forest("", forest);
            "forest"
        }
        Model::OrdinalForest { features, model } => {
            w.header.push(("features".into(), feature_name(*features).into()));
            w.header.push(("n_features".into(), model.scorer.0[0].n_features.to_string()));
            let th: Vec<String> = model.thresholds.iter().map(|t| format!("{t:?}")).collect();
            w.header.push(("thresholds".into(), th.join(",")));
            for (k, f) in model.scorer.0.iter().enumerate() {
                w.forest(&format!("task{}.", k + 1), f);
            }
            "ordinal-ensemble"
        }
        Model::Net(net) => {
            w.header.push(("input_norm.mean".into(), format!("{:?}", net.input_norm.mean)));
            w.header.push(("input_norm.std".into(), format!("{:?}", net.input_norm.std)));
            w.tensors = net.state();
            "net"
        }
    };
    let mut s = format!("{MAGIC}\nkind = {kind}\n");
    for (k, v) in &w.header {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.push_str("@config\n");
    s.push_str(&model.config.echo());
    s.push_str("@tensors\n");
    for (name, values) in &w.tensors {
        let _ = write!(s, "{name} {}", values.len());
        for v in values {
            let _ = write!(s, " {v:?}");
        }
        s.push('\n');
    }
    let sum = digest(&s);
    let _ = writeln!(s, "sha256 = {sum}");
    s
}

pub fn from_text(text: &str) -> Result<TrainedModel> {
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| Error::Format("model container too short".into()))?;
    let (body, tail) = text.split_at(body_end);
    let expected = tail
        .trim()
        .strip_prefix("sha256 = ")
        .ok_or_else(|| Error::Format("model container lacks a checksum line".into()))?;
    if digest(body) != expected {
        return Err(Error::Format("model container checksum mismatch".into()));
    }
    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Format(format!("not an {MAGIC} model container")));
    }
    let mut header = HashMap::new();
    for line in lines.by_ref() {
        if line == "@config" {
            break;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let mut echo = String::new();
    for line in lines.by_ref() {
        if line == "@tensors" {
            break;
        }
        echo.push_str(line);
        echo.push('\n');
    }
    let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
    for line in lines {
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or_default().to_string();
        let len: usize = parts
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Error::Format(format!("tensor {name}: bad length")))?;
        let values: Vec<f64> = parts
            .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("tensor {name}: bad value {v:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != len {
            return Err(Error::Format(format!("tensor {name}: {} values, header says {len}", values.len())));
        }
        tensors.push((name, values));
    }

    let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("model header lacks {k}")));
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Format(format!("model header {k} is not an integer")))
    };
    let config = RunConfig::load(Some(&echo), None, None)?;
    let learner: Learner = get("learner")?.parse()?;
    let strategy: Strategy = get("strategy")?.parse()?;
    let classes = parse_usize("classes")?;
    let features = learner.feature_kind();

    let read_forest = |prefix: &str, classes: usize| -> Result<Forest> {
        let seed: u64 = get(&format!("{prefix}seed"))?
            .parse()
            .map_err(|_| Error::Format(format!("model header {prefix}seed is not an integer")))?;
        let lead = format!("{prefix}tree.");
        let trees: Vec<DecisionTree> = tensors
            .iter()
            .filter(|(n, _)| n.strip_prefix(&lead).is_some_and(|rest| !rest.contains('.')))
            .map(|(_, v)| decode_tree(v, classes))
            .collect::<Result<_>>()?;
        if trees.is_empty() {
            return Err(Error::Format(format!("no trees under {prefix:?}")));
        }
        Ok(Forest {
            trees,
            classes,
            n_features: parse_usize("n_features")?,
            config: ForestConfig { seed, ..config.forest },
        })
    };

    let model = match get("kind")?.as_str() {
        "forest" => Model::Forest {
            features: features.ok_or_else(|| Error::Format("forest model with a net learner".into()))?,
            forest: read_forest("", classes)?,
        },
        "ordinal-ensemble" => {
            let forests = (1..classes).map(|k| read_forest(&format!("task{k}."), 2)).collect::<Result<Vec<_>>>()?;
            let thresholds = get("thresholds")?
                .split(',')
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad threshold {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Model::OrdinalForest {
                features: features.ok_or_else(|| Error::Format("ensemble model with a net learner".into()))?,
                model: OrdinalModel::new::<[f64]>(TaskEnsemble(forests), thresholds)?,
            }
        }
        "net" => {
            let mut net = Network::new(config.net_config(strategy.head(classes)), 0)?;
            net.load_state(&tensors)?;
            let float = |k: &str| -> Result<f64> {
                get(k)?.parse().map_err(|_| Error::Format(format!("model header {k} is not a number")))
            };
            net.input_norm = InputNorm { mean: float("input_norm.mean")?, std: float("input_norm.std")? };
            Model::Net(net)
        }
        other => return Err(Error::Format(format!("unknown model kind {other:?}"))),
    };
    Ok(TrainedModel { learner, strategy, classes, config, model })
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_text(&text)
}
