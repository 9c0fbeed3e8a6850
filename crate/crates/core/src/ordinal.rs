//! Ordinal ranking by binary decomposition.
//!
//! A rank `y` in `1..=K` is split into `K - 1` "larger than" questions: task
//! `k` asks whether `y > k`. One scorer per task is trained on the positive
//! set `{y > k}` against the negative set `{y <= k}`, and a sample's rank is
//! recovered as `1 + #{k : score_k > threshold_k}`. The count is taken as is,
//! so inconsistent codes such as `[1, 0, 1]` still decode (to 3 here).

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrdinalLabel {
    rank: usize,
    classes: usize,
}

impl OrdinalLabel {
    pub fn new(rank: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::ConfigInvalid(format!("K = {classes}, need at least 2 categories")));
        }
        if !(1..=classes).contains(&rank) {
            return Err(Error::LabelOutOfRange { label: rank, k: classes });
        }
        Ok(Self { rank, classes })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// `K - 1` bits; bit `k` (1-based) is set iff the rank exceeds `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode(Vec<u8>);

impl BinaryCode {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// As signed decision values: 1 -> +1.0, 0 -> -1.0.
    pub fn to_signed(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect()
    }

    pub fn to_targets(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

pub fn encode(label: OrdinalLabel) -> BinaryCode {
    BinaryCode((1..label.classes).map(|k| u8::from(label.rank > k)).collect())
}

/// How a learner's task scores should be thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Signed margins, positive means "larger than".
    Signed,
    /// Probabilities of the positive class.
    Probability,
}

impl ScoreKind {
    pub fn default_threshold(self) -> f64 {
        match self {
            ScoreKind::Signed => 0.0,
            ScoreKind::Probability => 0.5,
        }
    }

    pub fn default_thresholds(self, tasks: usize) -> Vec<f64> {
        vec![self.default_threshold(); tasks]
    }
}

/// Rank from task scores: `1 + #{k : scores[k] > thresholds[k]}`.
pub fn decode(scores: &[f64], thresholds: &[f64]) -> Result<usize> {
    if scores.len() != thresholds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} thresholds",
            scores.len(),
            thresholds.len()
        )));
    }
    Ok(1 + scores.iter().zip(thresholds).filter(|(s, t)| s > t).count())
}

/// Positive/negative index sets for task `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryTaskDataset {
    pub k: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl BinaryTaskDataset {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 0/1 target for every sample index `0..n`.
    pub fn targets(&self, n: usize) -> Vec<usize> {
        let mut t = vec![0; n];
        for &i in &self.positives {
            t[i] = 1;
        }
        t
    }
}

/// Split sample indices by `y > k` (task `k` in `1..K`).
pub fn build_binary_task(labels: &[usize], classes: usize, k: usize) -> Result<BinaryTaskDataset> {
    if !(1..classes).contains(&k) {
        return Err(Error::ConfigInvalid(format!("task index {k} outside 1..{classes}")));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if !(1..=classes).contains(&y) {
            return Err(Error::LabelOutOfRange { label: y, k: classes });
        }
        if y > k {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::DegenerateTask { k, positives: positives.len(), negatives: negatives.len() });
    }
    Ok(BinaryTaskDataset { k, positives, negatives })
}

/// Anything that emits one decision value per "larger than" task.
pub trait OrdinalScorer<S: ?Sized> {
    fn tasks(&self) -> usize;
    fn task_scores(&self, sample: &S) -> Vec<f64>;
}

/// A single-task scorer, one per `k` in the independent-learner path.
pub trait BinaryScorer<S: ?Sized> {
    fn score(&self, sample: &S) -> f64;
}

/// `K - 1` independently trained binary scorers.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnsemble<L>(pub Vec<L>);

impl<S: ?Sized, L: BinaryScorer<S>> OrdinalScorer<S> for TaskEnsemble<L> {
    fn tasks(&self) -> usize {
        self.0.len()
    }

    fn task_scores(&self, sample: &S) -> Vec<f64> {
        self.0.iter().map(|l| l.score(sample)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalModel<M> {
    pub scorer: M,
    pub thresholds: Vec<f64>,
}

impl<M> OrdinalModel<M> {
    pub fn new<S: ?Sized>(scorer: M, thresholds: Vec<f64>) -> Result<Self>
    where
        M: OrdinalScorer<S>,
    {
        if scorer.tasks() != thresholds.len() || thresholds.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} learners vs {} thresholds",
                scorer.tasks(),
                thresholds.len()
            )));
        }
        Ok(Self { scorer, thresholds })
    }

    pub fn classes(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn predict<S: ?Sized>(&self, sample: &S) -> usize
    where
        M: OrdinalScorer<S>,
    {
        predict_ordinal(self, sample)
    }
}

pub fn predict_ordinal<S: ?Sized, M: OrdinalScorer<S>>(model: &OrdinalModel<M>, sample: &S) -> usize {
    let scores = model.scorer.task_scores(sample);
    decode(&scores, &model.thresholds).expect("scorer emits one value per task")
}

/// Train one learner per task. `factory` receives the task split and a
/// per-task seed derived from `seed`.
pub fn fit_ordinal<L, F>(
    labels: &[usize],
    classes: usize,
    kind: ScoreKind,
    seed: u64,
    mut factory: F,
) -> Result<OrdinalModel<TaskEnsemble<L>>>
where
    F: FnMut(&BinaryTaskDataset, u64) -> Result<L>,
{
    if classes < 2 {
        return Err(Error::ConfigInvalid(format!("K = {classes}, need at least 2 categories")));
    }
    // validate every task before training any learner
    let tasks = (1..classes).map(|k| build_binary_task(labels, classes, k)).collect::<Result<Vec<_>>>()?;
    let learners = tasks
        .iter()
        .map(|task| factory(task, rng::derive_seed(seed, task.k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrdinalModel { scorer: TaskEnsemble(learners), thresholds: kind.default_thresholds(classes - 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(y: usize, k: usize) -> OrdinalLabel {
        OrdinalLabel::new(y, k).unwrap()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(label(4, 4)).bits(), &[1, 1, 1]);
        assert_eq!(encode(label(1, 4)).bits(), &[0, 0, 0]);
        assert_eq!(encode(label(3, 4)).bits(), &[1, 1, 0]);
        assert_eq!(encode(label(2, 2)).bits(), &[1]);
    }

    #[test]
    fn label_validation() {
        assert!(OrdinalLabel::new(0, 4).is_err());
        assert!(OrdinalLabel::new(5, 4).is_err());
        assert!(OrdinalLabel::new(1, 1).is_err());
    }

    #[test]
    fn decode_examples() {
        let t = ScoreKind::Signed.default_thresholds(3);
        assert_eq!(decode(&[1.0, 1.0, 1.0], &t).unwrap(), 4);
        assert_eq!(decode(&[-1.0, -1.0, -1.0], &t).unwrap(), 1);
        assert_eq!(decode(&[1.0, -1.0, 1.0], &t).unwrap(), 3);
        // boundary is strict
        assert_eq!(decode(&[0.5, 0.5, 0.6], &ScoreKind::Probability.default_thresholds(3)).unwrap(), 2);
        assert!(decode(&[1.0], &t).is_err());
    }

    #[test]
    fn binary_task_examples() {
        let labels = [1, 2, 3, 4];
        let t = build_binary_task(&labels, 4, 2).unwrap();
        assert_eq!(t.positives, vec![2, 3]);
        assert_eq!(t.negatives, vec![0, 1]);
        let t1 = build_binary_task(&labels, 4, 1).unwrap();
        assert_eq!(t1.negatives, vec![0]);
        assert_eq!(t1.targets(4), vec![0, 1, 1, 1]);
        assert!(matches!(build_binary_task(&[2, 2, 2], 4, 1), Err(Error::DegenerateTask { k: 1, .. })));
        assert!(build_binary_task(&labels, 4, 4).is_err());
        assert!(build_binary_task(&[1, 5], 4, 1).is_err());
    }

    struct Threshold {
        cut: f64,
    }

    impl BinaryScorer<f64> for Threshold {
        fn score(&self, x: &f64) -> f64 {
            x - self.cut
        }
    }

    /// 1-D stump fitted as the midpoint between the two task sides.
    fn fit_stump(xs: &[f64], task: &BinaryTaskDataset) -> Threshold {
        let pos_min = task.positives.iter().map(|&i| xs[i]).fold(f64::INFINITY, f64::min);
        let neg_max = task.negatives.iter().map(|&i| xs[i]).fold(f64::NEG_INFINITY, f64::max);
        Threshold { cut: 0.5 * (pos_min + neg_max) }
    }

    #[test]
    fn fit_ordinal_separable() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let labels: Vec<usize> = xs.iter().map(|&x| 1 + (x / 2.5) as usize).collect();
        let model = fit_ordinal(&labels, 4, ScoreKind::Signed, 0, |task, _| Ok(fit_stump(&xs, task))).unwrap();
        assert_eq!(model.scorer.0.len(), 3);
        for (x, &y) in xs.iter().zip(&labels) {
            assert_eq!(model.predict(x), y);
        }
        for (x, y) in [(0.3, 1), (3.0, 2), (5.9, 3), (9.1, 4)] {
            assert_eq!(model.predict(&x), y);
        }
    }

    #[test]
    fn fit_ordinal_two_classes_is_binary() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let labels = [1, 1, 2, 2];
        let m = fit_ordinal(&labels, 2, ScoreKind::Signed, 0, |t, _| Ok(fit_stump(&xs, t))).unwrap();
        assert_eq!(m.scorer.0.len(), 1);
        assert_eq!(m.predict(&0.2), 1);
        assert_eq!(m.predict(&2.7), 2);
    }

    #[test]
    fn fit_ordinal_rejects_missing_class() {
        // no label above 2 -> task k=2 and k=3 are degenerate
        let r = fit_ordinal(&[1, 2, 1, 2], 4, ScoreKind::Signed, 0, |_, _| Ok(Threshold { cut: 0.0 }));
        assert!(matches!(r, Err(Error::DegenerateTask { k: 2, .. })));
    }

    #[test]
    fn per_task_seeds_are_distinct() {
        let mut seeds = Vec::new();
        fit_ordinal(&[1, 2, 3, 4], 4, ScoreKind::Signed, 9, |_, s| {
            seeds.push(s);
            Ok(Threshold { cut: 0.0 })
        })
        .unwrap();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 3);
    }
}
