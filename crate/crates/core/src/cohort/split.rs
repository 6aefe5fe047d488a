//! Physician-level train/test partitioning.
//!
//! Any patient linked to a test physician is a test patient, even if it is
//! also linked to training physicians. The training side keeps only edges
//! whose endpoints are both training records; its physicians keep their
//! original `patient_count`, claims features and labels, so a training view
//! is not required to satisfy the degree and OR-label invariants of a full
//! cohort. The test side keeps every edge of its physicians.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Cohort, CohortError, Edge, Result};

/// Randomly assigns `round(N * test_fraction)` physicians to the test side.
pub fn split_train_test(cohort: &Cohort, test_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CohortError::Argument(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    if !cohort.labels_complete() {
        return Err(CohortError::Argument("splitting requires labels on every record".into()));
    }
    let n = cohort.num_physicians();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(CohortError::Argument(format!(
            "test fraction {test_fraction} leaves one side empty with {n} physicians"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    Ok(split_by_test_physicians(cohort, &is_test))
}

/// Splits on an explicit physician mask (`true` = test).
pub fn split_by_test_physicians(cohort: &Cohort, is_test: &[bool]) -> (Cohort, Cohort) {
    assert_eq!(is_test.len(), cohort.num_physicians(), "mask length must equal physician count");
    let mut patient_test = vec![false; cohort.num_patients()];
    for e in &cohort.edges {
        if is_test[e.physician as usize] {
            patient_test[e.patient as usize] = true;
        }
    }
    let side = |test: bool| -> Cohort {
        let mut phys_map = vec![u32::MAX; cohort.num_physicians()];
        let mut physicians = Vec::new();
        for (i, d) in cohort.physicians.iter().enumerate() {
            if is_test[i] == test {
                phys_map[i] = physicians.len() as u32;
                physicians.push(d.clone());
            }
        }
        let mut pat_map = vec![u32::MAX; cohort.num_patients()];
        let mut patients = Vec::new();
        for (j, p) in cohort.patients.iter().enumerate() {
            if patient_test[j] == test {
                pat_map[j] = patients.len() as u32;
                patients.push(p.clone());
            }
        }
        let edges = cohort
            .edges
            .iter()
            .filter(|e| is_test[e.physician as usize] == test && patient_test[e.patient as usize] == test)
            .map(|e| Edge {
                physician: phys_map[e.physician as usize],
                patient: pat_map[e.patient as usize],
                claim_count: e.claim_count,
            })
            .collect();
        Cohort { patients, physicians, edges, schema: cohort.schema.clone() }
    };
    (side(false), side(true))
}
