//! Confusion-matrix scores, ROC and precision-recall curves, and MCC. Class 1
//! (theft) is the positive class.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} labels but {other} predictions or scores")]
    LengthMismatch { truth: usize, other: usize },
    #[error("label {label} at position {index} outside {{0, 1}}")]
    BadLabel { index: usize, label: u8 },
    #[error("both classes are required")]
    SingleClass,
    #[error("no positive samples")]
    NoPositives,
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with class 0 taken as the positive class.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

/// A zero denominator that forced a score to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    Precision,
    Recall,
    Fpr,
    F1,
    Mcc,
}

fn check_labels(y: &[u8]) -> Result<(), MetricsError> {
    match y.iter().position(|&l| l > 1) {
        Some(index) => Err(MetricsError::BadLabel { index, label: y[index] }),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { truth: y_true.len(), other: y_pred.len() });
    }
    check_labels(y_true)?;
    check_labels(y_pred)?;
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    pub flags: Vec<Degenerate>,
}

fn ratio(num: u64, den: u64, flag: Degenerate, flags: &mut Vec<Degenerate>) -> f64 {
    if den == 0 {
        flags.push(flag);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)`, false-positive rate
/// `FP/(TN+FP)` and their harmonic mean; zero denominators give 0 plus a flag.
pub fn prf1(c: &ConfusionCounts) -> Prf1 {
    let mut flags = Vec::new();
    let precision = ratio(c.tp, c.tp + c.fp, Degenerate::Precision, &mut flags);
    let recall = ratio(c.tp, c.tp + c.fn_, Degenerate::Recall, &mut flags);
    let fpr = ratio(c.fp, c.tn + c.fp, Degenerate::Fpr, &mut flags);
    let f1 = if precision + recall == 0.0 {
        flags.push(Degenerate::F1);
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 { precision, recall, fpr, f1, flags }
}

/// Matthews correlation; 0 and `true` when a denominator factor is zero.
pub fn mcc(c: &ConfusionCounts) -> (f64, bool) {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return (0.0, true);
    }
    let den = factors.iter().product::<f64>().sqrt();
    ((tp * tn - fp * fn_) / den, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// x = false-positive rate, y = true-positive rate.
    Roc,
    /// x = recall, y = precision.
    Pr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(with = "threshold_json")]
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// JSON has no infinity, so the `+inf` endpoint is written as `"inf"`.
mod threshold_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
            },
        }
    }
}

/// Points in strictly decreasing threshold order; the first point is the
/// `+inf` endpoint where nothing is predicted positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Cumulative (true positive, false positive) counts at each distinct score,
/// highest first, with a row scored positive when `score >= threshold`.
fn sweep(y_true: &[u8], scores: &[f64]) -> Result<Vec<(f64, u64, u64)>, MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { truth: y_true.len(), other: scores.len() });
    }
    check_labels(y_true)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (k, &i) in order.iter().enumerate() {
        if y_true[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = k + 1 == order.len() || scores[order[k + 1]] != scores[i];
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    Ok(out)
}

/// Trapezoidal area under the ROC curve over distinct thresholds; tied scores
/// form one diagonal segment, which counts ties as half.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<(f64, CurvePoints), MetricsError> {
    let steps = sweep(y_true, scores)?;
    let pos = y_true.iter().filter(|&&l| l == 1).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(MetricsError::SingleClass);
    }
    let mut points = vec![CurvePoint { threshold: f64::INFINITY, x: 0.0, y: 0.0 }];
    points.extend(steps.iter().map(|&(t, tp, fp)| CurvePoint { threshold: t, x: fp as f64 / neg, y: tp as f64 / pos }));
    Ok((trapezoid(&points), CurvePoints { kind: CurveKind::Roc, points }))
}

/// Area under a curve's `(x, y)` points by the trapezoid rule.
pub fn trapezoid(points: &[CurvePoint]) -> f64 {
    points.windows(2).map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0).sum()
}

/// Step-wise area under the precision-recall curve: each distinct threshold
/// contributes its precision times the recall it adds. The recall-0 endpoint
/// carries the precision of the first threshold.
pub fn pr_auc(y_true: &[u8], scores: &[f64]) -> Result<(f64, CurvePoints), MetricsError> {
    let steps = sweep(y_true, scores)?;
    let pos = y_true.iter().filter(|&&l| l == 1).count() as f64;
    if pos == 0.0 {
        return Err(MetricsError::NoPositives);
    }
    let precision = |tp: u64, fp: u64| tp as f64 / (tp + fp) as f64;
    let first = steps[0];
    let mut points = vec![CurvePoint { threshold: f64::INFINITY, x: 0.0, y: precision(first.1, first.2) }];
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &(t, tp, fp) in &steps {
        let recall = tp as f64 / pos;
        let p = precision(tp, fp);
        area += (recall - prev_recall) * p;
        prev_recall = recall;
        points.push(CurvePoint { threshold: t, x: recall, y: p });
    }
    Ok((area, CurvePoints { kind: CurveKind::Pr, points }))
}

/// Renders `v` with 17 significant digits; infinities as `inf` / `-inf`.
pub fn format_17(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

/// `threshold,x,y` CSV with a header line.
pub fn curve_csv(curve: &CurvePoints) -> String {
    let mut s = String::from("threshold,x,y\n");
    for p in &curve.points {
        s.push_str(&format!("{},{},{}\n", format_17(p.threshold), format_17(p.x), format_17(p.y)));
    }
    s
}

/// Parses [`curve_csv`] output.
pub fn parse_curve_csv(text: &str, kind: CurveKind) -> Result<CurvePoints, String> {
    let mut lines = text.lines();
    if lines.next() != Some("threshold,x,y") {
        return Err("missing threshold,x,y header".into());
    }
    let points = lines
        .enumerate()
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2)))
                .collect::<Result<_, _>>()?;
            match v.as_slice() {
                [threshold, x, y] => Ok(CurvePoint { threshold: *threshold, x: *x, y: *y }),
                _ => Err(format!("line {}: expected 3 fields", i + 2)),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(CurvePoints { kind, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc_roc: f64,
    pub pr_auc: f64,
    pub mcc: f64,
    pub confusion: ConfusionCounts,
    pub flags: Vec<Degenerate>,
    /// Unweighted mean over both classes taken as positive.
    #[serde(rename = "macro")]
    pub macro_avg: MacroScores,
    pub roc: CurvePoints,
    pub pr: CurvePoints,
}

/// Full report from hard predictions and class-1 scores.
pub fn metrics_report(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<MetricsReport, MetricsError> {
    let c = confusion(y_true, y_pred)?;
    let pos = prf1(&c);
    let neg = prf1(&c.swapped());
    let (m, mcc_degenerate) = mcc(&c);
    let (auc_roc, roc) = roc_auc(y_true, scores)?;
    let (pr_area, pr) = pr_auc(y_true, scores)?;
    let mut flags = pos.flags.clone();
    if mcc_degenerate {
        flags.push(Degenerate::Mcc);
    }
    Ok(MetricsReport {
        precision: pos.precision,
        recall: pos.recall,
        f1: pos.f1,
        fpr: pos.fpr,
        auc_roc,
        pr_auc: pr_area,
        mcc: m,
        confusion: c,
        flags,
        macro_avg: MacroScores {
            precision: (pos.precision + neg.precision) / 2.0,
            recall: (pos.recall + neg.recall) / 2.0,
            f1: (pos.f1 + neg.f1) / 2.0,
        },
        roc,
        pr,
    })
}
