//! Features-only physician scores: no message passing.
//!
//! Each physician's own evidence `p(z_i | y)` is combined with the label
//! prior implied by `eta` and its patient count, `p(y = 1) = 1 - (1 - eta)^n`.
//! The gap between this and graph inference measures what the linked
//! patients contribute.

use crate::cohort::Cohort;
use crate::graph::{ln_1m_exp, LogMsg};
use crate::learning::{LearnError, ModelParams};

pub fn baseline_score(cohort: &Cohort, params: &ModelParams) -> Result<Vec<f64>, LearnError> {
    params.check_schema(&cohort.schema)?;
    let model = params.evidence_model()?;
    let ln_neg = (-params.patient.prior_eta).ln_1p();
    cohort
        .physicians
        .iter()
        .map(|d| {
            let ll = model.physician_log_lik(d)?;
            let ln_all_neg = d.patient_count as f64 * ln_neg;
            let v = [ll[0] + ln_all_neg, ll[1] + ln_1m_exp(ln_all_neg)];
            Ok(LogMsg::normalize(v).map_or(0.5, |m| m.prob1()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Cohort, Edge, FeatureSchema, PatientRecord, PhysicianRecord};
    use crate::distributions::{Bernoulli, Categorical, Gaussian, Poisson};
    use crate::learning::{ClassPair, PatientParams, PhysicianParams, PARAMS_FORMAT_VERSION};

    fn same<T: Clone>(v: T) -> ClassPair<T> {
        ClassPair::new(v.clone(), v)
    }

    /// Parameters identical across classes: physician evidence is uniform.
    fn flat_params(schema: &FeatureSchema, eta: f64) -> ModelParams {
        let g = Gaussian::new(vec![0.0; 4], (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect())
            .unwrap();
        ModelParams {
            format_version: PARAMS_FORMAT_VERSION,
            schema: schema.fingerprint(),
            standardization: None,
            patient: PatientParams {
                prior_eta: eta,
                gender: same(Bernoulli::new(0.5).unwrap()),
                age: same(Categorical::from_weights(&[1.0; 10]).unwrap()),
                region: same(Categorical::from_weights(&[1.0; 4]).unwrap()),
                code_indicator: vec![same(Bernoulli::new(0.3).unwrap()); schema.num_codes],
                code_frequency: vec![same(Poisson::new(1.0).unwrap()); schema.num_codes],
            },
            physician: PhysicianParams {
                gender: same(Bernoulli::new(0.8).unwrap()),
                specialty: same(Categorical::from_weights(&vec![1.0; schema.num_specialties]).unwrap()),
                patient_count: same(Poisson::new(20.0).unwrap()),
                claims: same(g),
            },
        }
    }

    fn cohort(counts: &[u32]) -> Cohort {
        let schema = FeatureSchema::new(1, 2);
        let mut patients = Vec::new();
        let mut physicians = Vec::new();
        let mut edges = Vec::new();
        for (i, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                edges.push(Edge { physician: i as u32, patient: patients.len() as u32, claim_count: 1 });
                patients.push(PatientRecord {
                    id: format!("P{}", patients.len()),
                    label: None,
                    gender: false,
                    age_decade: 0,
                    region: 1,
                    code_indicators: vec![false],
                    code_frequencies: vec![0],
                });
            }
            physicians.push(PhysicianRecord {
                id: format!("D{i}"),
                label: None,
                gender: true,
                specialty: 1,
                patient_count: n,
                claims_features: Some([0.1, -0.2, 0.3, 0.0]),
            });
        }
        Cohort::new(patients, physicians, edges, schema).unwrap()
    }

    #[test]
    fn uniform_evidence_gives_prior() {
        let c = cohort(&[1, 5, 40]);
        let eta = 1.0 / 201.0;
        let s = baseline_score(&c, &flat_params(&c.schema, eta)).unwrap();
        for (score, n) in s.iter().zip([1, 5, 40]) {
            let want = 1.0 - (1.0 - eta).powi(n);
            assert!((score - want).abs() < 1e-12, "{score} vs {want}");
        }
    }

    #[test]
    fn identical_physicians_score_identically() {
        let c = cohort(&[3, 3, 3]);
        let s = baseline_score(&c, &flat_params(&c.schema, 0.01)).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
    }
}
