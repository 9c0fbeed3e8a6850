//! Evaluation metrics: normalized confusion matrix, adjusted accuracy
//! (mean per-class sensitivity), ROC/AUC, and rank-error summaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    classes: usize,
    /// `counts[true - 1][pred - 1]`.
    counts: Vec<Vec<usize>>,
    normalized: Vec<Vec<f64>>,
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&l| !(1..=k).contains(&l)) {
        Some(&l) => Err(Error::LabelOutOfRange { label: l, k }),
        None => Ok(()),
    }
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} true labels vs {} predictions", a.len(), b.len())));
    }
    Ok(())
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    check_lengths(truth, predicted)?;
    check_labels(truth, classes)?;
    check_labels(predicted, classes)?;
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[t - 1][p - 1] += 1;
    }
    let normalized = counts
        .iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
        })
        .collect();
    Ok(ConfusionMatrix { classes, counts, normalized })
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn normalized(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// 1-based classes whose true-class row is empty.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.classes).filter(|&i| self.row_sum(i) == 0).map(|i| i + 1).collect()
    }

    fn row_sum(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    /// Per-class recall.
    pub fn sensitivity(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| {
                let s = self.row_sum(i);
                (s > 0).then(|| self.counts[i][i] as f64 / s as f64)
            })
            .collect()
    }

    /// One-vs-rest true-negative rate per class.
    pub fn specificity(&self) -> Vec<Option<f64>> {
        let total = self.total();
        (0..self.classes)
            .map(|c| {
                let negatives = total - self.row_sum(c);
                let false_pos: usize = (0..self.classes).filter(|&i| i != c).map(|i| self.counts[i][c]).sum();
                (negatives > 0).then(|| (negatives - false_pos) as f64 / negatives as f64)
            })
            .collect()
    }
}

/// Mean per-class sensitivity; every true class must be represented.
pub fn adjusted_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let sens = cm.sensitivity();
    let mut sum = 0.0;
    for (i, s) in sens.iter().enumerate() {
        sum += s.ok_or(Error::EmptyClass(i + 1))?;
    }
    Ok(sum / cm.classes as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Threshold reached at `points[i + 1]`: predict positive for `score >= t`.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// ROC by sweeping distinct scores from high to low; tied scores cross the
/// threshold together, so the trapezoidal area equals pair counting with
/// ties worth one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocResult> {
    if scores.len() != positive.len() {
        return Err(Error::ShapeMismatch(format!("{} scores vs {} labels", scores.len(), positive.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc2 = 0.0; // twice the area, in count units
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc2 += ((fp - fp0) * (tp + tp0)) as f64;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        thresholds.push(s);
    }
    let auc = auc2 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocResult { points, thresholds, auc })
}

pub fn mean_absolute_rank_error(truth: &[usize], predicted: &[usize], classes: usize) -> Result<f64> {
    check_lengths(truth, predicted)?;
    check_labels(truth, classes)?;
    check_labels(predicted, classes)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let total: usize = truth.iter().zip(predicted).map(|(&t, &p)| t.abs_diff(p)).sum();
    Ok(total as f64 / truth.len() as f64)
}

/// Share of misclassified samples landing in a class adjacent to the truth.
/// Defined as 1.0 when nothing is misclassified.
pub fn adjacency_fraction(truth: &[usize], predicted: &[usize]) -> f64 {
    let (mut wrong, mut adjacent) = (0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t != p {
            wrong += 1;
            if t.abs_diff(p) == 1 {
                adjacent += 1;
            }
        }
    }
    if wrong == 0 {
        1.0
    } else {
        adjacent as f64 / wrong as f64
    }
}

/// Everything reported for one set of predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub adjusted_accuracy: Option<f64>,
    pub accuracy: f64,
    pub mean_absolute_rank_error: f64,
    pub adjacency_fraction: f64,
    pub roc: Option<RocResult>,
}

impl EvalReport {
    /// `scores`, when given, are positive-class scores for a two-class problem.
    pub fn compute(truth: &[usize], predicted: &[usize], classes: usize, scores: Option<&[f64]>) -> Result<Self> {
        let confusion = confusion(truth, predicted, classes)?;
        let adjusted = adjusted_accuracy(&confusion).ok();
        let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
        let accuracy = if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 };
        let roc = match scores {
            Some(s) => {
                let positive: Vec<bool> = truth.iter().map(|&t| t == classes).collect();
                Some(roc_auc(s, &positive)?)
            }
            None => None,
        };
        Ok(Self {
            adjusted_accuracy: adjusted,
            accuracy,
            mean_absolute_rank_error: mean_absolute_rank_error(truth, predicted, classes)?,
            adjacency_fraction: adjacency_fraction(truth, predicted),
            roc,
            confusion,
        })
    }

    /// `key=value` lines, full precision.
    pub fn metrics_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(s, "classes={}", self.confusion.classes());
        let _ = writeln!(s, "samples={}", self.confusion.total());
        let _ = writeln!(s, "adjusted_accuracy={}", opt(self.adjusted_accuracy));
        let _ = writeln!(s, "accuracy={:?}", self.accuracy);
        let _ = writeln!(s, "mean_absolute_rank_error={:?}", self.mean_absolute_rank_error);
        let _ = writeln!(s, "adjacency_fraction={:?}", self.adjacency_fraction);
        for (i, v) in self.confusion.sensitivity().into_iter().enumerate() {
            let _ = writeln!(s, "sensitivity.{}={}", i + 1, opt(v));
        }
        for (i, v) in self.confusion.specificity().into_iter().enumerate() {
            let _ = writeln!(s, "specificity.{}={}", i + 1, opt(v));
        }
        let empty = self.confusion.empty_rows();
        if !empty.is_empty() {
            let list: Vec<String> = empty.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "empty_true_classes={}", list.join(","));
        }
        if let Some(roc) = &self.roc {
            let _ = writeln!(s, "auc={:?}", roc.auc);
        }
        s
    }

    /// Row-normalized matrix, header `true\pred,1,...,K`.
    pub fn confusion_csv(&self) -> String {
        let k = self.confusion.classes();
        let mut s = String::from("true\\pred");
        for j in 1..=k {
            let _ = write!(s, ",{j}");
        }
        s.push('\n');
        for (i, row) in self.confusion.normalized().iter().enumerate() {
            let _ = write!(s, "{}", i + 1);
            for v in row {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn roc_csv(&self) -> Option<String> {
        self.roc.as_ref().map(|roc| {
            let mut s = String::from("fpr,tpr,threshold\n");
            for (i, (f, t)) in roc.points.iter().enumerate() {
                let th = if i == 0 { "inf".to_string() } else { format!("{:?}", roc.thresholds[i - 1]) };
                let _ = writeln!(s, "{f:?},{t:?},{th}");
            }
            s
        })
    }
}
