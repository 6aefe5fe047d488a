//! Linked physician/patient populations.
//!
//! A [`Cohort`] holds the two record tables, the physician–patient edge list
//! (with per-edge claim counts) and the [`FeatureSchema`] describing feature
//! dimensionalities. Records reference each other by position; string ids
//! only matter at the file boundary (see [`io`]).

mod io;
mod split;

pub use io::{load_cohort, save_cohort, EDGES_FILE, PATIENTS_FILE, PHYSICIANS_FILE, SCHEMA_FILE};
pub use split::{split_by_test_physicians, split_train_test};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_REGIONS: usize = 4;
pub const NUM_AGE_DECADES: usize = 10;
/// Dimensions of the claims summary: max, min, sum, mean.
pub const CLAIMS_DIM: usize = 4;
pub const DEFAULT_NUM_CODES: usize = 58;
pub const DEFAULT_NUM_SPECIALTIES: usize = 189;
/// Floor applied to per-dimension standard deviations when standardizing.
pub const STD_FLOOR: f64 = 1e-9;
pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, CohortError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub label: Option<bool>,
    /// `true` for male.
    pub gender: bool,
    /// 0 covers ages 0-9, 1 covers 10-19, and so on up to 9.
    pub age_decade: u8,
    /// 1..=4 for SOUTH, WEST, MIDWEST, NORTHEAST.
    pub region: u8,
    pub code_indicators: Vec<bool>,
    pub code_frequencies: Vec<u32>,
}

impl PatientRecord {
    /// Zero-based region index for categorical lookups.
    pub fn region_index(&self) -> usize {
        self.region as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicianRecord {
    pub id: String,
    pub label: Option<bool>,
    pub gender: bool,
    pub specialty: u32,
    pub patient_count: u32,
    /// Standardized (max, min, sum, mean) of per-patient claim counts.
    /// `None` until derived or supplied.
    pub claims_features: Option<[f64; CLAIMS_DIM]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub physician: u32,
    pub patient: u32,
    pub claim_count: u32,
}

/// Per-dimension z-score statistics for the claims features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; CLAIMS_DIM],
    pub std: [f64; CLAIMS_DIM],
}

impl Standardization {
    /// Population mean and standard deviation (floored at [`STD_FLOOR`]).
    pub fn fit(raw: &[[f64; CLAIMS_DIM]]) -> Result<Self> {
        if raw.is_empty() {
            return Err(CohortError::Argument("cannot standardize an empty population".into()));
        }
        let n = raw.len() as f64;
        let mut mean = [0.0; CLAIMS_DIM];
        for v in raw {
            for d in 0..CLAIMS_DIM {
                mean[d] += v[d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; CLAIMS_DIM];
        for v in raw {
            for d in 0..CLAIMS_DIM {
                var[d] += (v[d] - mean[d]).powi(2);
            }
        }
        let std = var.map(|s| (s / n).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &[f64; CLAIMS_DIM]) -> [f64; CLAIMS_DIM] {
        std::array::from_fn(|d| (raw[d] - self.mean[d]) / self.std[d])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format_version: u32,
    pub num_codes: usize,
    pub num_specialties: usize,
    pub num_regions: usize,
    pub num_age_decades: usize,
    /// Present once claims features have been derived from edge claim counts.
    pub standardization: Option<Standardization>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::new(DEFAULT_NUM_CODES, DEFAULT_NUM_SPECIALTIES)
    }
}

impl FeatureSchema {
    pub fn new(num_codes: usize, num_specialties: usize) -> Self {
        Self {
            format_version: SCHEMA_FORMAT_VERSION,
            num_codes,
            num_specialties,
            num_regions: NUM_REGIONS,
            num_age_decades: NUM_AGE_DECADES,
            standardization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SCHEMA_FORMAT_VERSION {
            return Err(CohortError::Integrity(format!(
                "unsupported schema format version {}",
                self.format_version
            )));
        }
        if self.num_codes == 0 || self.num_specialties == 0 {
            return Err(CohortError::Integrity("num_codes and num_specialties must be at least 1".into()));
        }
        if self.num_regions != NUM_REGIONS || self.num_age_decades != NUM_AGE_DECADES {
            return Err(CohortError::Integrity(format!(
                "schema must have {NUM_REGIONS} regions and {NUM_AGE_DECADES} age decades"
            )));
        }
        if let Some(st) = &self.standardization {
            if st.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || st.mean.iter().any(|m| !m.is_finite()) {
                return Err(CohortError::Integrity("standardization statistics must be finite with positive std".into()));
            }
        }
        Ok(())
    }

    /// The dimensions a fitted model depends on.
    pub fn fingerprint(&self) -> SchemaFingerprint {
        SchemaFingerprint {
            num_codes: self.num_codes,
            num_specialties: self.num_specialties,
            num_regions: self.num_regions,
            num_age_decades: self.num_age_decades,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFingerprint {
    pub num_codes: usize,
    pub num_specialties: usize,
    pub num_regions: usize,
    pub num_age_decades: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub patients: Vec<PatientRecord>,
    pub physicians: Vec<PhysicianRecord>,
    pub edges: Vec<Edge>,
    pub schema: FeatureSchema,
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl Cohort {
    /// Builds a cohort and runs the full [`Cohort::validate`] check.
    pub fn new(
        patients: Vec<PatientRecord>,
        physicians: Vec<PhysicianRecord>,
        edges: Vec<Edge>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let cohort = Self { patients, physicians, edges, schema };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn num_physicians(&self) -> usize {
        self.physicians.len()
    }

    pub fn num_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn physician_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.physicians.len()];
        for e in &self.edges {
            deg[e.physician as usize] += 1;
        }
        deg
    }

    /// Edge indices grouped by physician.
    pub fn edges_by_physician(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.physicians.len()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.physician as usize].push(k);
        }
        out
    }

    pub fn labels_complete(&self) -> bool {
        self.patients.iter().all(|p| p.label.is_some()) && self.physicians.iter().all(|p| p.label.is_some())
    }

    /// Physician labels implied by the patient labels: positive iff at least
    /// one linked patient is positive. `None` where a linked patient is unlabeled.
    pub fn implied_physician_labels(&self) -> Vec<Option<bool>> {
        let mut any_pos = vec![false; self.physicians.len()];
        let mut any_unknown = vec![false; self.physicians.len()];
        for e in &self.edges {
            match self.patients[e.patient as usize].label {
                Some(true) => any_pos[e.physician as usize] = true,
                Some(false) => {}
                None => any_unknown[e.physician as usize] = true,
            }
        }
        any_pos
            .into_iter()
            .zip(any_unknown)
            .map(|(pos, unknown)| if pos { Some(true) } else if unknown { None } else { Some(false) })
            .collect()
    }

    /// Record-level checks only: ids, value ranges, vector lengths and the
    /// indicator/frequency pairing. Does not look at the edge list.
    pub fn validate_records(&self) -> Result<()> {
        self.schema.validate()?;
        let q = self.schema.num_codes;
        let mut seen = HashSet::with_capacity(self.patients.len());
        for p in &self.patients {
            if !valid_id(&p.id) {
                return Err(CohortError::Integrity(format!("invalid patient id {:?}", p.id)));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(CohortError::Integrity(format!("duplicate patient id {}", p.id)));
            }
            if p.age_decade as usize >= NUM_AGE_DECADES {
                return Err(CohortError::Integrity(format!("patient {}: age_decade {} out of range", p.id, p.age_decade)));
            }
            if !(1..=NUM_REGIONS as u8).contains(&p.region) {
                return Err(CohortError::Integrity(format!("patient {}: region {} out of range", p.id, p.region)));
            }
            if p.code_indicators.len() != q || p.code_frequencies.len() != q {
                return Err(CohortError::Integrity(format!("patient {}: expected {q} code columns", p.id)));
            }
            for (c, (&ind, &freq)) in p.code_indicators.iter().zip(&p.code_frequencies).enumerate() {
                if ind != (freq >= 1) {
                    return Err(CohortError::Integrity(format!(
                        "patient {}: code {c} indicator {} inconsistent with frequency {freq}",
                        p.id, ind as u8
                    )));
                }
            }
        }
        let mut seen = HashSet::with_capacity(self.physicians.len());
        for d in &self.physicians {
            if !valid_id(&d.id) {
                return Err(CohortError::Integrity(format!("invalid physician id {:?}", d.id)));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(CohortError::Integrity(format!("duplicate physician id {}", d.id)));
            }
            if d.specialty as usize >= self.schema.num_specialties {
                return Err(CohortError::Integrity(format!("physician {}: specialty {} out of range", d.id, d.specialty)));
            }
            if let Some(c) = &d.claims_features {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(CohortError::Integrity(format!("physician {}: non-finite claims feature", d.id)));
                }
            }
        }
        Ok(())
    }

    /// Full consistency check: records, edges, degrees and (where every
    /// label involved is known) the physician-label OR rule.
    pub fn validate(&self) -> Result<()> {
        self.validate_records()?;
        let mut pairs = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            let (i, j) = (e.physician as usize, e.patient as usize);
            if i >= self.physicians.len() || j >= self.patients.len() {
                return Err(CohortError::Integrity(format!("edge ({i}, {j}) references a missing record")));
            }
            if e.claim_count == 0 {
                return Err(CohortError::Integrity(format!(
                    "edge ({}, {}) has zero claims",
                    self.physicians[i].id, self.patients[j].id
                )));
            }
            if !pairs.insert((e.physician, e.patient)) {
                return Err(CohortError::Integrity(format!(
                    "duplicate edge ({}, {})",
                    self.physicians[i].id, self.patients[j].id
                )));
            }
        }
        for (d, deg) in self.physicians.iter().zip(self.physician_degrees()) {
            if deg == 0 {
                return Err(CohortError::Integrity(format!("physician {} has no linked patients", d.id)));
            }
            if d.patient_count != deg {
                return Err(CohortError::Integrity(format!(
                    "physician {}: patient_count {} but {deg} edges",
                    d.id, d.patient_count
                )));
            }
        }
        for (d, implied) in self.physicians.iter().zip(self.implied_physician_labels()) {
            if let (Some(stored), Some(implied)) = (d.label, implied) {
                if stored != implied {
                    return Err(CohortError::Integrity(format!(
                        "physician {} labeled {} but linked patient labels imply {}",
                        d.id, stored as u8, implied as u8
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unstandardized (max, min, sum, mean) of each physician's edge claim counts.
    pub fn raw_claims_features(&self) -> Result<Vec<[f64; CLAIMS_DIM]>> {
        let n = self.physicians.len();
        let mut max = vec![0u32; n];
        let mut min = vec![u32::MAX; n];
        let mut sum = vec![0u64; n];
        let mut count = vec![0u32; n];
        for e in &self.edges {
            let i = e.physician as usize;
            max[i] = max[i].max(e.claim_count);
            min[i] = min[i].min(e.claim_count);
            sum[i] += e.claim_count as u64;
            count[i] += 1;
        }
        (0..n)
            .map(|i| {
                if count[i] == 0 {
                    return Err(CohortError::Integrity(format!(
                        "physician {} has no edges to summarize",
                        self.physicians[i].id
                    )));
                }
                let s = sum[i] as f64;
                Ok([max[i] as f64, min[i] as f64, s, s / count[i] as f64])
            })
            .collect()
    }

    /// Overwrites every physician's claims features with standardized values.
    pub fn set_claims_features(&mut self, raw: &[[f64; CLAIMS_DIM]], stats: Standardization) {
        for (d, r) in self.physicians.iter_mut().zip(raw) {
            d.claims_features = Some(stats.apply(r));
        }
        self.schema.standardization = Some(stats);
    }

    pub fn has_claims_features(&self) -> bool {
        self.physicians.iter().all(|d| d.claims_features.is_some())
    }
}

/// Fills claims features from edge claim counts. Standardization statistics
/// already recorded in the schema are reused; otherwise they are estimated
/// from this cohort's physicians and recorded.
pub fn derive_physician_claims_features(cohort: &mut Cohort) -> Result<()> {
    let raw = cohort.raw_claims_features()?;
    let stats = match cohort.schema.standardization {
        Some(stats) => stats,
        None => Standardization::fit(&raw)?,
    };
    cohort.set_claims_features(&raw, stats);
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn patient(id: &str, label: Option<bool>, q: usize) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            label,
            gender: false,
            age_decade: 3,
            region: 1,
            code_indicators: vec![false; q],
            code_frequencies: vec![0; q],
        }
    }

    pub fn physician(id: &str, label: Option<bool>, patient_count: u32) -> PhysicianRecord {
        PhysicianRecord {
            id: id.into(),
            label,
            gender: true,
            specialty: 0,
            patient_count,
            claims_features: None,
        }
    }

    pub fn edge(physician: u32, patient: u32, claim_count: u32) -> Edge {
        Edge { physician, patient, claim_count }
    }

    /// Two physicians, three patients: D0-{P0,P1}, D1-{P1,P2}; P1 positive.
    pub fn two_by_three() -> Cohort {
        let q = 3;
        let mut patients = vec![
            patient("P0", Some(false), q),
            patient("P1", Some(true), q),
            patient("P2", Some(false), q),
        ];
        patients[1].code_indicators[0] = true;
        patients[1].code_frequencies[0] = 4;
        Cohort::new(
            patients,
            vec![physician("D0", Some(true), 2), physician("D1", Some(true), 2)],
            vec![edge(0, 0, 3), edge(0, 1, 5), edge(1, 1, 2), edge(1, 2, 1)],
            FeatureSchema::new(q, 2),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn fixture_dimensions() {
        let c = two_by_three();
        assert_eq!(c.num_physicians(), 2);
        assert_eq!(c.num_patients(), 3);
    }

    #[test]
    fn indicator_frequency_mismatch_rejected() {
        let mut c = two_by_three();
        c.patients[0].code_frequencies[1] = 2;
        assert!(matches!(c.validate(), Err(CohortError::Integrity(_))));
        let mut c = two_by_three();
        c.patients[1].code_frequencies[0] = 0;
        assert!(matches!(c.validate(), Err(CohortError::Integrity(_))));
    }

    #[test]
    fn physician_without_edges_rejected() {
        let mut c = two_by_three();
        c.edges.clear();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("no linked patients"), "{err}");
    }

    #[test]
    fn duplicate_and_dangling_edges_rejected() {
        let mut c = two_by_three();
        c.edges.push(edge(0, 0, 1));
        c.physicians[0].patient_count = 3;
        assert!(c.validate().unwrap_err().to_string().contains("duplicate edge"));
        let mut c = two_by_three();
        c.edges[0].patient = 9;
        assert!(c.validate().unwrap_err().to_string().contains("missing record"));
    }

    #[test]
    fn or_rule_enforced() {
        let mut c = two_by_three();
        c.physicians[0].label = Some(false);
        assert!(c.validate().unwrap_err().to_string().contains("imply"));
        // Recomputing from patient labels reproduces the stored labels.
        let c = two_by_three();
        let implied: Vec<_> = c.implied_physician_labels();
        let stored: Vec<_> = c.physicians.iter().map(|d| d.label).collect();
        assert_eq!(implied, stored);
    }

    #[test]
    fn raw_claims_by_hand() {
        let c = two_by_three();
        let raw = c.raw_claims_features().unwrap();
        assert_eq!(raw[0], [5.0, 3.0, 8.0, 4.0]);
        assert_eq!(raw[1], [2.0, 1.0, 3.0, 1.5]);
    }

    #[test]
    fn single_physician_standardizes_to_zero() {
        let q = 1;
        let mut c = Cohort::new(
            vec![patient("P0", Some(false), q), patient("P1", Some(false), q)],
            vec![physician("D0", Some(false), 2)],
            vec![edge(0, 0, 3), edge(0, 1, 5)],
            FeatureSchema::new(q, 1),
        )
        .unwrap();
        derive_physician_claims_features(&mut c).unwrap();
        assert_eq!(c.physicians[0].claims_features, Some([0.0; CLAIMS_DIM]));
        assert!(c.schema.standardization.unwrap().std.iter().all(|&s| s == STD_FLOOR));
    }

    #[test]
    fn identical_physicians_standardize_to_zero() {
        let q = 1;
        let mut c = Cohort::new(
            (0..4).map(|j| patient(&format!("P{j}"), Some(false), q)).collect(),
            vec![physician("D0", Some(false), 2), physician("D1", Some(false), 2)],
            vec![edge(0, 0, 2), edge(0, 1, 7), edge(1, 2, 2), edge(1, 3, 7)],
            FeatureSchema::new(q, 1),
        )
        .unwrap();
        derive_physician_claims_features(&mut c).unwrap();
        for d in &c.physicians {
            assert_eq!(d.claims_features, Some([0.0; CLAIMS_DIM]));
        }
    }

    #[test]
    fn derive_is_idempotent() {
        let mut c = two_by_three();
        derive_physician_claims_features(&mut c).unwrap();
        let once = c.clone();
        derive_physician_claims_features(&mut c).unwrap();
        assert_eq!(once, c);
    }

    #[test]
    fn derive_uses_recorded_statistics() {
        let mut c = two_by_three();
        let stats = Standardization { mean: [1.0; 4], std: [2.0; 4] };
        c.schema.standardization = Some(stats);
        derive_physician_claims_features(&mut c).unwrap();
        assert_eq!(c.physicians[0].claims_features, Some([2.0, 1.0, 3.5, 1.5]));
    }
}
