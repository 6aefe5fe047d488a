//! K-fold physician-level cross-validation.
//!
//! Physicians are shuffled by seed and dealt round-robin into `folds` groups
//! of equal size (up to one). Each group in turn is the test set; the split
//! follows the leakage rule of [`split_by_test_physicians`]. The model is
//! fitted on the training side, and both graph inference and the
//! features-only baseline score the test physicians.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_score, curve_and_auc, EvalError, GridRow, MetricsReport, Result, DEFAULT_SENSITIVITY_GRID};
use crate::cohort::{split_by_test_physicians, Cohort, CohortError, Standardization};
use crate::graph::{run_inference, BuildOptions, FactorGraph, InferenceConfig};
use crate::learning::{fit, FitConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub fit: FitConfig,
    pub inference: InferenceConfig,
    pub grid: Vec<f64>,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            fit: FitConfig::default(),
            inference: InferenceConfig::default(),
            grid: DEFAULT_SENSITIVITY_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub num_train_physicians: usize,
    pub num_test_physicians: usize,
    pub num_test_positive_physicians: usize,
    pub num_train_patients: usize,
    pub num_test_patients: usize,
    /// Training edges whose patient is a test patient; the split rule makes
    /// this zero.
    pub leaked_edges: usize,
    /// Loopy components on the test side that hit the iteration cap.
    pub nonconverged_components: usize,
    /// Set when the fold is left out of the averages.
    pub excluded: Option<String>,
    pub model: Option<MetricsReport>,
    pub baseline: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAverages {
    pub folds_used: usize,
    pub model_auc: f64,
    pub baseline_auc: f64,
    pub model_grid: Vec<GridRow>,
    pub baseline_grid: Vec<GridRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub folds: Vec<FoldResult>,
    /// `None` when every fold was excluded.
    pub average: Option<FoldAverages>,
}

/// Fold index of each physician: a seeded shuffle dealt round-robin.
pub fn fold_assignment(num_physicians: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_physicians).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; num_physicians];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank % folds;
    }
    out
}

pub fn crossval(cohort: &Cohort, config: &CrossvalConfig) -> Result<CrossvalReport> {
    let n = cohort.num_physicians();
    if config.folds < 2 || config.folds > n {
        return Err(EvalError::Folds(config.folds));
    }
    if !cohort.labels_complete() {
        return Err(CohortError::Argument("cross-validation requires labels on every record".into()).into());
    }
    config.inference.validate()?;
    let assignment = fold_assignment(n, config.folds, config.seed);
    // Claims summaries come from the full linkage; only their standardization
    // is estimated per fold, from training physicians.
    let raw_claims = if cohort.has_claims_features() { None } else { Some(cohort.raw_claims_features()?) };

    let folds = (0..config.folds)
        .into_par_iter()
        .map(|k| run_fold(cohort, config, &assignment, k, raw_claims.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let average = average(&folds, config.grid.len());
    Ok(CrossvalReport { folds, average })
}

fn run_fold(
    cohort: &Cohort,
    config: &CrossvalConfig,
    assignment: &[usize],
    k: usize,
    raw_claims: Option<&[[f64; 4]]>,
) -> Result<FoldResult> {
    let is_test: Vec<bool> = assignment.iter().map(|&f| f == k).collect();
    let (train, test) = match raw_claims {
        None => split_by_test_physicians(cohort, &is_test),
        Some(raw) => {
            let train_raw: Vec<[f64; 4]> =
                raw.iter().zip(&is_test).filter(|(_, &t)| !t).map(|(r, _)| *r).collect();
            let stats = Standardization::fit(&train_raw)?;
            let mut with_claims = cohort.clone();
            with_claims.set_claims_features(raw, stats);
            split_by_test_physicians(&with_claims, &is_test)
        }
    };
    let test_ids: HashSet<&str> = test.patients.iter().map(|p| p.id.as_str()).collect();
    let leaked_edges =
        train.edges.iter().filter(|e| test_ids.contains(train.patients[e.patient as usize].id.as_str())).count();
    let test_labels: Vec<bool> = test.physicians.iter().map(|d| d.label.expect("labels checked")).collect();
    let positives = test_labels.iter().filter(|&&l| l).count();
    let mut result = FoldResult {
        fold: k,
        num_train_physicians: train.num_physicians(),
        num_test_physicians: test.num_physicians(),
        num_test_positive_physicians: positives,
        num_train_patients: train.num_patients(),
        num_test_patients: test.num_patients(),
        leaked_edges,
        nonconverged_components: 0,
        excluded: None,
        model: None,
        baseline: None,
    };
    if positives == 0 || positives == test_labels.len() {
        warn!("fold {k}: test physicians are all one class; excluded from averages");
        result.excluded = Some("single-class test physicians".into());
        return Ok(result);
    }
    let params = match fit(&train, &config.fit) {
        Ok(p) => p,
        Err(e) => {
            warn!("fold {k}: fit failed ({e}); excluded from averages");
            result.excluded = Some(format!("fit failed: {e}"));
            return Ok(result);
        }
    };
    let graph = FactorGraph::build(&test, &params, BuildOptions::default())?;
    let beliefs = run_inference(&graph, &config.inference)?;
    result.nonconverged_components = beliefs.components.iter().filter(|c| !c.converged).count();
    let base = baseline_score(&test, &params)?;
    result.model = Some(curve_and_auc(&beliefs.physician, &test_labels, &config.grid)?);
    result.baseline = Some(curve_and_auc(&base, &test_labels, &config.grid)?);
    Ok(result)
}

fn average(folds: &[FoldResult], grid_len: usize) -> Option<FoldAverages> {
    let used: Vec<(&MetricsReport, &MetricsReport)> = folds
        .iter()
        .filter(|f| f.excluded.is_none())
        .filter_map(|f| Some((f.model.as_ref()?, f.baseline.as_ref()?)))
        .collect();
    if used.is_empty() {
        return None;
    }
    let n = used.len() as f64;
    let mean_grid = |baseline: bool| -> Vec<GridRow> {
        (0..grid_len)
            .map(|g| {
                let rows: Vec<&GridRow> =
                    used.iter().map(|u| &if baseline { u.1 } else { u.0 }.grid[g]).collect();
                GridRow {
                    sensitivity: rows[0].sensitivity,
                    threshold: rows.iter().map(|r| r.threshold).sum::<f64>() / n,
                    ppv: rows.iter().map(|r| r.ppv).sum::<f64>() / n,
                    f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
                    mcc: rows.iter().map(|r| r.mcc).sum::<f64>() / n,
                }
            })
            .collect()
    };
    Some(FoldAverages {
        folds_used: used.len(),
        model_auc: used.iter().map(|u| u.0.auc).sum::<f64>() / n,
        baseline_auc: used.iter().map(|u| u.1.auc).sum::<f64>() / n,
        model_grid: mean_grid(false),
        baseline_grid: mean_grid(true),
    })
}

/// Long format: one row per fold, method and grid sensitivity, then the
/// averages under fold `average`.
pub fn write_folds_csv(report: &CrossvalReport, path: &Path) -> Result<()> {
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    (|| -> std::io::Result<()> {
        writeln!(w, "fold,method,excluded,num_test_physicians,num_test_positive,auc,sensitivity,ppv,f1,mcc")?;
        for f in &report.folds {
            let excluded = f.excluded.is_some() as u8;
            for (method, rep) in [("model", &f.model), ("baseline", &f.baseline)] {
                match rep {
                    Some(r) => {
                        for g in &r.grid {
                            writeln!(
                                w,
                                "{},{method},{excluded},{},{},{},{},{},{},{}",
                                f.fold,
                                f.num_test_physicians,
                                f.num_test_positive_physicians,
                                r.auc,
                                g.sensitivity,
                                g.ppv,
                                g.f1,
                                g.mcc
                            )?;
                        }
                    }
                    None => writeln!(
                        w,
                        "{},{method},{excluded},{},{},,,,,",
                        f.fold, f.num_test_physicians, f.num_test_positive_physicians
                    )?,
                }
            }
        }
        if let Some(a) = &report.average {
            for (method, auc, grid) in
                [("model", a.model_auc, &a.model_grid), ("baseline", a.baseline_auc, &a.baseline_grid)]
            {
                for g in grid {
                    writeln!(
                        w,
                        "average,{method},0,,,{auc},{},{},{},{}",
                        g.sensitivity, g.ppv, g.f1, g.mcc
                    )?;
                }
            }
        }
        w.flush()
    })()
    .map_err(io)
}
