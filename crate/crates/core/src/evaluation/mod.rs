//! Imbalance-aware scoring: confusion counts, PPV/sensitivity/F1/MCC,
//! sensitivity–PPV curves with trapezoid AUC, a features-only baseline and
//! the cross-validation harness.

mod baseline;
mod crossval;

pub use baseline::baseline_score;
pub use crossval::{
    crossval, fold_assignment, write_folds_csv, CrossvalConfig, CrossvalReport, FoldAverages, FoldResult,
};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Target sensitivities at which curves are summarized.
pub const DEFAULT_SENSITIVITY_GRID: [f64; 6] = [0.20, 0.25, 0.30, 0.35, 0.40, 0.45];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels differ: {0}")]
    KeyMismatch(String),
    #[error("labels contain a single class ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {0} is not finite")]
    BadScore(f64),
    #[error("sensitivity grid value {0} outside [0, 1]")]
    BadGrid(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cohort(#[from] crate::cohort::CohortError),
    #[error(transparent)]
    Learn(#[from] crate::learning::LearnError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("invalid fold count {0}; need at least 2 and no more than the physician count")]
    Folds(usize),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
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
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ppv: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub mcc: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// PPV, sensitivity, F1 and MCC; every 0/0 is taken as 0.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let ppv = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * ppv * sensitivity, ppv + sensitivity);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den);
    Metrics { ppv, sensitivity, f1, mcc }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(EvalError::KeyMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::BadScore(s));
    }
    Ok(())
}

/// Predicts positive where `score >= threshold`.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    check_inputs(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Aligns keyed scores and labels into parallel vectors ordered by key.
pub fn align(
    scores: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, bool>,
) -> Result<(Vec<String>, Vec<f64>, Vec<bool>)> {
    if scores.len() != labels.len() || scores.keys().zip(labels.keys()).any(|(a, b)| a != b) {
        let missing = scores
            .keys()
            .find(|k| !labels.contains_key(*k))
            .or_else(|| labels.keys().find(|k| !scores.contains_key(*k)));
        return Err(EvalError::KeyMismatch(format!("key {:?} is not in both sets", missing)));
    }
    Ok((
        scores.keys().cloned().collect(),
        scores.values().copied().collect(),
        labels.values().copied().collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub ppv: f64,
    pub f1: f64,
    pub mcc: f64,
}

/// Curve values interpolated at a target sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sensitivity: f64,
    pub threshold: f64,
    pub ppv: f64,
    pub f1: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_positive: usize,
    pub num_negative: usize,
    /// One point per distinct score, thresholds strictly decreasing.
    pub curve: Vec<CurvePoint>,
    /// Trapezoid area under the sensitivity–PPV curve.
    pub auc: f64,
    pub grid: Vec<GridRow>,
}

pub fn curve_and_auc(scores: &[f64], labels: &[bool], grid: &[f64]) -> Result<MetricsReport> {
    check_inputs(scores, labels)?;
    if let Some(&g) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(EvalError::BadGrid(g));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let c = ConfusionCounts { tp, fp, fn_: positives as u64 - tp, tn: negatives as u64 - fp };
        let m = metrics(&c);
        curve.push(CurvePoint { threshold, sensitivity: m.sensitivity, ppv: m.ppv, f1: m.f1, mcc: m.mcc });
    }

    let mut auc = 0.0;
    let (mut s_prev, mut p_prev) = (0.0, curve[0].ppv);
    for pt in &curve {
        auc += (pt.sensitivity - s_prev) * (pt.ppv + p_prev) / 2.0;
        s_prev = pt.sensitivity;
        p_prev = pt.ppv;
    }

    let grid = grid.iter().map(|&s| interpolate(&curve, s)).collect();
    Ok(MetricsReport { num_positive: positives, num_negative: negatives, curve, auc, grid })
}

/// Linear interpolation between the last point below `s` and the first
/// point reaching it.
fn interpolate(curve: &[CurvePoint], s: f64) -> GridRow {
    let k = curve.iter().position(|p| p.sensitivity >= s).unwrap_or(curve.len() - 1);
    let hi = curve[k];
    if k == 0 || hi.sensitivity <= s {
        return GridRow { sensitivity: s, threshold: hi.threshold, ppv: hi.ppv, f1: hi.f1, mcc: hi.mcc };
    }
    let lo = curve[k - 1];
    let t = (s - lo.sensitivity) / (hi.sensitivity - lo.sensitivity);
    let lerp = |a: f64, b: f64| a + t * (b - a);
    GridRow {
        sensitivity: s,
        threshold: lerp(lo.threshold, hi.threshold),
        ppv: lerp(lo.ppv, hi.ppv),
        f1: lerp(lo.f1, hi.f1),
        mcc: lerp(lo.mcc, hi.mcc),
    }
}

pub fn write_curve_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    (|| -> std::io::Result<()> {
        writeln!(w, "threshold,sensitivity,ppv,f1,mcc")?;
        for p in &report.curve {
            writeln!(w, "{},{},{},{},{}", p.threshold, p.sensitivity, p.ppv, p.f1, p.mcc)?;
        }
        w.flush()
    })()
    .map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND_SCORES: [f64; 4] = [0.9, 0.4, 0.6, 0.1];
    const HAND_LABELS: [bool; 4] = [true, true, false, false];

    #[test]
    fn hand_confusion() {
        let c = confusion_at(&HAND_SCORES, &HAND_LABELS, 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let all = confusion_at(&HAND_SCORES, &HAND_LABELS, 0.0).unwrap();
        assert_eq!(all.tp + all.fp, 4);
        let none = confusion_at(&HAND_SCORES, &HAND_LABELS, 1.5).unwrap();
        assert_eq!(none.tn + none.fn_, 4);
        assert!(confusion_at(&HAND_SCORES, &HAND_LABELS[..3], 0.5).is_err());
    }

    #[test]
    fn hand_metrics() {
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 4 });
        assert!((m.ppv - 0.75).abs() < 1e-12);
        assert!((m.sensitivity - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.mcc - 10.0 / 600f64.sqrt()).abs() < 1e-12);
        let perfect = metrics(&ConfusionCounts { tp: 5, fp: 0, fn_: 0, tn: 7 });
        assert_eq!((perfect.ppv, perfect.sensitivity, perfect.f1, perfect.mcc), (1.0, 1.0, 1.0, 1.0));
        let none = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 4, tn: 6 });
        assert_eq!((none.ppv, none.sensitivity, none.f1, none.mcc), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_curve() {
        let r = curve_and_auc(&HAND_SCORES, &HAND_LABELS, &[0.25, 0.5, 0.75]).unwrap();
        let pts: Vec<(f64, f64, f64)> = r.curve.iter().map(|p| (p.threshold, p.sensitivity, p.ppv)).collect();
        assert_eq!(pts, vec![(0.9, 0.5, 1.0), (0.6, 0.5, 0.5), (0.4, 1.0, 2.0 / 3.0), (0.1, 1.0, 0.5)]);
        // Anchor (0, 1) -> (0.5, 1) -> (0.5, 0.5) -> (1, 2/3) -> (1, 0.5).
        let want = 0.5 * 1.0 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((r.auc - want).abs() < 1e-15);
        assert_eq!(r.grid[0].ppv, 1.0);
        assert_eq!(r.grid[1].ppv, 1.0);
        // Between (0.5, 0.5) and (1, 2/3) halfway.
        assert!((r.grid[2].ppv - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_scores() {
        let labels = [true, false, true, false, false];
        let scores: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        let r = curve_and_auc(&scores, &labels, &DEFAULT_SENSITIVITY_GRID).unwrap();
        assert_eq!((r.curve[0].sensitivity, r.curve[0].ppv), (1.0, 1.0));
        assert_eq!(r.auc, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            curve_and_auc(&[0.1, 0.2], &[true, true], &[]),
            Err(EvalError::SingleClass { .. })
        ));
    }

    #[test]
    fn keyed_alignment() {
        let s: BTreeMap<String, f64> = [("a".into(), 0.9), ("b".into(), 0.4)].into();
        let l: BTreeMap<String, bool> = [("a".into(), true), ("b".into(), false)].into();
        let (keys, sc, lb) = align(&s, &l).unwrap();
        assert_eq!(keys, ["a", "b"]);
        assert_eq!((sc, lb), (vec![0.9, 0.4], vec![true, false]));
        let l2: BTreeMap<String, bool> = [("a".into(), true), ("c".into(), false)].into();
        assert!(matches!(align(&s, &l2), Err(EvalError::KeyMismatch(_))));
    }
}
