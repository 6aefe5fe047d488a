//! Seeded synthetic cohorts drawn from the generative model.
//!
//! Sampling order: patient labels `x_j ~ Bernoulli(eta)`, patient features
//! given `x_j`, edges from the degree model, physician labels as the OR of
//! linked patients, physician features given `y_i`, then per-edge claim
//! counts. One ChaCha8 stream drives everything, so a config and seed fix
//! the output bit for bit.
//!
//! The default parameter profile, [`published_params`], uses the published
//! patient gender, region, five code rows, physician gender, patient-count
//! rates, claims Gaussians and the five leading specialties verbatim. Age
//! decades, the remaining codes, code frequency rates and the specialty tail
//! are synthetic.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    save_cohort, Cohort, CohortError, Edge, FeatureSchema, PatientRecord, PhysicianRecord, CLAIMS_DIM,
    DEFAULT_NUM_CODES, DEFAULT_NUM_SPECIALTIES, NUM_AGE_DECADES, NUM_REGIONS,
};
use crate::distributions::{Bernoulli, Categorical, DistError, Gaussian, Poisson};
use crate::learning::{
    ClassPair, ModelParams, PatientParams, PhysicianParams, DEFAULT_PRIOR_ETA, PARAMS_FORMAT_VERSION,
};

pub const GENTRUTH_FILE: &str = "gentruth.json";

/// Paper-scale cohort size.
pub const PAPER_NUM_PHYSICIANS: usize = 68_898;
pub const PAPER_NUM_PATIENTS: usize = 247_833;
pub const PAPER_PHYSICIANS_PER_PATIENT: f64 = 5.9;

const PROFILE_SEED: u64 = 0x5EED_C0DE;
const RESAMPLE_LIMIT: usize = 1_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("cannot build cohort: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("gentruth json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GenError>;

/// How edges are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeModel {
    /// Each patient draws `d ~ 1 + Poisson(mean - 1)` physicians uniformly
    /// without replacement. Physicians left without patients get one random
    /// patient. The patient-count feature is then whatever the draw produced.
    Uniform { mean_physicians_per_patient: f64 },
    /// Class-conditional physician capacity. Positive patients draw
    /// `d ~ 1 + Poisson(mean - 1)` physicians uniformly; each physician then
    /// draws its patient count from `Poisson(lambda_c^y)` (redrawn until it
    /// covers its positive patients) and negative patients fill the
    /// remaining slots. This reproduces the patient-count rates.
    PhysicianCount { positive_physicians_per_patient: f64 },
}

impl Default for DegreeModel {
    fn default() -> Self {
        Self::Uniform { mean_physicians_per_patient: PAPER_PHYSICIANS_PER_PATIENT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_physicians: usize,
    pub num_patients: usize,
    /// Patient label rate. Overrides `params.patient.prior_eta`.
    pub prior_eta: f64,
    /// Fraction of the patient-feature class difference kept: 0 makes the
    /// positive patient distributions equal the negative ones.
    pub signal: f64,
    pub degree: DegreeModel,
    /// Edge claim counts are `1 + Poisson(claims_per_edge_mean)`.
    pub claims_per_edge_mean: f64,
    pub seed: u64,
    pub params: ModelParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_physicians: PAPER_NUM_PHYSICIANS,
            num_patients: PAPER_NUM_PATIENTS,
            prior_eta: DEFAULT_PRIOR_ETA,
            signal: 1.0,
            degree: DegreeModel::default(),
            claims_per_edge_mean: 3.0,
            seed: 0,
            params: published_params(DEFAULT_NUM_CODES, DEFAULT_NUM_SPECIALTIES)
                .expect("published profile is valid"),
        }
    }
}

impl GenConfig {
    /// `prior_eta = 0` is accepted and yields an all-negative cohort.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GenError::Config(m));
        if self.num_physicians == 0 || self.num_patients == 0 {
            return bad("num_physicians and num_patients must be at least 1".into());
        }
        if self.num_physicians > u32::MAX as usize || self.num_patients > u32::MAX as usize {
            return bad("cohort too large for 32-bit record indices".into());
        }
        if !(0.0..1.0).contains(&self.prior_eta) {
            return bad(format!("prior_eta {} outside [0, 1)", self.prior_eta));
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return bad(format!("signal {} outside [0, 1]", self.signal));
        }
        let mean = match self.degree {
            DegreeModel::Uniform { mean_physicians_per_patient: m } => m,
            DegreeModel::PhysicianCount { positive_physicians_per_patient: m } => m,
        };
        if !(mean.is_finite() && mean >= 1.0) {
            return bad(format!("degree mean {mean} must be at least 1"));
        }
        if !(self.claims_per_edge_mean.is_finite() && self.claims_per_edge_mean >= 0.0) {
            return bad(format!("claims_per_edge_mean {} must be non-negative", self.claims_per_edge_mean));
        }
        self.params.validate().map_err(|e| GenError::Config(format!("generating params: {e}")))?;
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(
            self.params.patient.code_indicator.len(),
            self.params.physician.specialty.negative.num_categories(),
        )
    }
}

/// Generating config plus realized counts, written beside a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenTruth {
    pub config: GenConfig,
    pub num_positive_patients: usize,
    pub num_positive_physicians: usize,
    pub num_edges: usize,
}

impl GenTruth {
    pub fn new(config: &GenConfig, cohort: &Cohort) -> Self {
        Self {
            config: config.clone(),
            num_positive_patients: cohort.patients.iter().filter(|p| p.label == Some(true)).count(),
            num_positive_physicians: cohort.physicians.iter().filter(|d| d.label == Some(true)).count(),
            num_edges: cohort.edges.len(),
        }
    }
}

/// Writes the cohort files and `gentruth.json` into `dir`.
pub fn save_generated(cohort: &Cohort, config: &GenConfig, dir: &Path) -> Result<()> {
    save_cohort(cohort, dir)?;
    let path = dir.join(GENTRUTH_FILE);
    let io = |source| GenError::Io { path: path.display().to_string(), source };
    let mut text = serde_json::to_string_pretty(&GenTruth::new(config, cohort))?;
    text.push('\n');
    let mut f = std::fs::File::create(&path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

fn mix(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Positive-class patient parameters moved toward the negative class.
fn interpolate_patient(p: &PatientParams, signal: f64) -> Result<PatientParams> {
    let bern = |c: &ClassPair<Bernoulli>| -> Result<ClassPair<Bernoulli>> {
        Ok(ClassPair::new(c.negative, Bernoulli::new(mix(c.negative.p, c.positive.p, signal))?))
    };
    let cat = |c: &ClassPair<Categorical>| -> Result<ClassPair<Categorical>> {
        let probs: Vec<f64> =
            c.negative.probs.iter().zip(&c.positive.probs).map(|(a, b)| mix(*a, *b, signal)).collect();
        Ok(ClassPair::new(c.negative.clone(), Categorical::from_weights(&probs)?))
    };
    let pois = |c: &ClassPair<Poisson>| -> Result<ClassPair<Poisson>> {
        Ok(ClassPair::new(c.negative, Poisson::new(mix(c.negative.lambda, c.positive.lambda, signal))?))
    };
    Ok(PatientParams {
        prior_eta: p.prior_eta,
        gender: bern(&p.gender)?,
        age: cat(&p.age)?,
        region: cat(&p.region)?,
        code_indicator: p.code_indicator.iter().map(bern).collect::<Result<_>>()?,
        code_frequency: p.code_frequency.iter().map(pois).collect::<Result<_>>()?,
    })
}

fn sample_patient<R: Rng>(rng: &mut R, id: usize, label: bool, p: &PatientParams) -> PatientRecord {
    let q = p.code_indicator.len();
    let mut code_indicators = Vec::with_capacity(q);
    let mut code_frequencies = Vec::with_capacity(q);
    for (ind, freq) in p.code_indicator.iter().zip(&p.code_frequency) {
        let has = ind.get(label).sample(rng);
        code_indicators.push(has);
        code_frequencies.push(if has { 1 + freq.get(label).sample(rng) as u32 } else { 0 });
    }
    PatientRecord {
        id: format!("P{id}"),
        label: Some(label),
        gender: p.gender.get(label).sample(rng),
        age_decade: p.age.get(label).sample(rng) as u8,
        region: p.region.get(label).sample(rng) as u8 + 1,
        code_indicators,
        code_frequencies,
    }
}

fn shifted_degree<R: Rng>(rng: &mut R, mean: f64, cap: usize) -> Result<usize> {
    let extra = if mean > 1.0 { Poisson::new(mean - 1.0)?.sample(rng) as usize } else { 0 };
    Ok((1 + extra).min(cap))
}

/// Edge pairs `(physician, patient)` under the uniform model.
fn uniform_edges<R: Rng>(rng: &mut R, n: usize, m: usize, mean: f64) -> Result<Vec<(u32, u32)>> {
    let mut pairs = Vec::with_capacity((m as f64 * mean) as usize + n);
    let mut degree = vec![0u32; n];
    for j in 0..m {
        let d = shifted_degree(rng, mean, n)?;
        for i in index::sample(rng, n, d) {
            degree[i] += 1;
            pairs.push((i as u32, j as u32));
        }
    }
    for (i, _) in degree.iter().enumerate().filter(|(_, &d)| d == 0) {
        pairs.push((i as u32, rng.random_range(0..m) as u32));
    }
    Ok(pairs)
}

/// Edge pairs under the class-conditional capacity model.
fn capacity_edges<R: Rng>(
    rng: &mut R,
    n: usize,
    labels: &[bool],
    positive_mean: f64,
    patient_count: &ClassPair<Poisson>,
) -> Result<Vec<(u32, u32)>> {
    let mut pairs = Vec::new();
    let mut positives_of = vec![0usize; n];
    for (j, _) in labels.iter().enumerate().filter(|(_, &x)| x) {
        let d = shifted_degree(rng, positive_mean, n)?;
        for i in index::sample(rng, n, d) {
            positives_of[i] += 1;
            pairs.push((i as u32, j as u32));
        }
    }
    let negatives: Vec<u32> = (0..labels.len()).filter(|&j| !labels[j]).map(|j| j as u32).collect();
    let mut slots: Vec<u32> = Vec::new();
    for (i, &pos) in positives_of.iter().enumerate() {
        let rate = patient_count.get(pos > 0);
        let floor = pos.max(1);
        let mut c = rate.sample(rng) as usize;
        let mut tries = 1;
        while c < floor && tries < RESAMPLE_LIMIT {
            c = rate.sample(rng) as usize;
            tries += 1;
        }
        let c = c.max(floor);
        slots.extend(std::iter::repeat_n(i as u32, c - pos));
    }
    if negatives.is_empty() {
        if let Some(i) = positives_of.iter().position(|&p| p == 0) {
            return Err(GenError::Infeasible(format!("physician {i} has no positive patients and no negatives exist")));
        }
        return Ok(pairs);
    }
    if slots.len() < negatives.len() {
        return Err(GenError::Infeasible(format!(
            "{} negative patients but only {} free physician slots; add physicians or patients per physician",
            negatives.len(),
            slots.len()
        )));
    }
    slots.shuffle(rng);
    let (first, rest) = slots.split_at(negatives.len());
    let mut linked: Vec<Vec<u32>> = vec![Vec::new(); negatives.len()];
    for (k, &i) in first.iter().enumerate() {
        linked[k].push(i);
    }
    // Leftover slots go to random negatives; a slot that keeps hitting an
    // existing pair is dropped, lowering that physician's count by one.
    for &i in rest {
        for _ in 0..64 {
            let k = rng.random_range(0..negatives.len());
            if !linked[k].contains(&i) {
                linked[k].push(i);
                break;
            }
        }
    }
    for (k, phys) in linked.iter().enumerate() {
        pairs.extend(phys.iter().map(|&i| (i, negatives[k])));
    }
    // Physicians whose every slot was dropped still need one patient.
    let mut degree = vec![0u32; n];
    for &(i, _) in &pairs {
        degree[i as usize] += 1;
    }
    for (i, _) in degree.iter().enumerate().filter(|(_, &d)| d == 0) {
        pairs.push((i as u32, negatives[rng.random_range(0..negatives.len())]));
    }
    Ok(pairs)
}

/// Samples a fully labeled cohort.
pub fn sample_cohort(config: &GenConfig) -> Result<Cohort> {
    config.validate()?;
    let (n, m) = (config.num_physicians, config.num_patients);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let patient_params = interpolate_patient(&config.params.patient, config.signal)?;
    let phys = &config.params.physician;

    let label_dist = Bernoulli::new(config.prior_eta)?;
    let labels: Vec<bool> = (0..m).map(|_| label_dist.sample(&mut rng)).collect();
    let patients: Vec<PatientRecord> =
        labels.iter().enumerate().map(|(j, &x)| sample_patient(&mut rng, j, x, &patient_params)).collect();

    let mut pairs = match config.degree {
        DegreeModel::Uniform { mean_physicians_per_patient } => {
            uniform_edges(&mut rng, n, m, mean_physicians_per_patient)?
        }
        DegreeModel::PhysicianCount { positive_physicians_per_patient } => {
            capacity_edges(&mut rng, n, &labels, positive_physicians_per_patient, &phys.patient_count)?
        }
    };
    pairs.sort_unstable();

    let mut degree = vec![0u32; n];
    let mut physician_label = vec![false; n];
    for &(i, j) in &pairs {
        degree[i as usize] += 1;
        physician_label[i as usize] |= labels[j as usize];
    }
    let claims = phys.claims.map(|g: &Gaussian| g.factor());
    let claims = ClassPair::new(claims.negative?, claims.positive?);
    let physicians: Vec<PhysicianRecord> = (0..n)
        .map(|i| {
            let y = physician_label[i];
            let z = claims.get(y).sample(&mut rng);
            let mut feat = [0.0; CLAIMS_DIM];
            feat.copy_from_slice(&z);
            PhysicianRecord {
                id: format!("D{i}"),
                label: Some(y),
                gender: phys.gender.get(y).sample(&mut rng),
                specialty: phys.specialty.get(y).sample(&mut rng) as u32,
                patient_count: degree[i],
                claims_features: Some(feat),
            }
        })
        .collect();

    let claim_dist = Poisson::new(config.claims_per_edge_mean.max(crate::distributions::POISSON_RATE_FLOOR))?;
    let edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(physician, patient)| Edge { physician, patient, claim_count: 1 + claim_dist.sample(&mut rng) as u32 })
        .collect();
    Ok(Cohort::new(patients, physicians, edges, config.schema())?)
}

/// Published patient code rows: (negative, positive) indicator rates for
/// chronic idiopathic urticaria, epinephrine, personal history of allergy,
/// allergy/anaphylaxis/urticaria and laryngoscopy.
pub const PUBLISHED_CODE_RATES: [(f64, f64); 5] =
    [(0.0031, 0.0592), (0.0280, 0.4184), (0.0054, 0.0357), (0.0482, 0.2685), (0.0152, 0.0414)];

/// Published specialty shares for the five leading specialties: diagnostic
/// radiology, emergency medicine, cardiovascular disease, family medicine,
/// anatomic/clinical pathology.
pub const PUBLISHED_SPECIALTY_SHARES: [(f64, f64); 5] =
    [(0.1563, 0.2518), (0.0778, 0.0991), (0.0857, 0.0602), (0.0851, 0.0583), (0.0297, 0.0418)];

/// Synthetic age-decade profiles: negatives peak in the thirties, positives
/// in the fifties.
pub const SYNTHETIC_AGE_WEIGHTS: [[f64; NUM_AGE_DECADES]; 2] = [
    [0.06, 0.08, 0.12, 0.19, 0.17, 0.15, 0.12, 0.07, 0.03, 0.01],
    [0.03, 0.05, 0.08, 0.13, 0.18, 0.23, 0.16, 0.09, 0.04, 0.01],
];

const REGION_WEIGHTS: [[f64; NUM_REGIONS]; 2] = [[0.394, 0.223, 0.217, 0.166], [0.316, 0.303, 0.194, 0.186]];

/// Published parameter profile with synthetic filler where nothing numeric
/// was published. Codes past the first five and specialties past the first
/// five are synthetic; with fewer codes or specialties the published rows
/// are truncated.
pub fn published_params(num_codes: usize, num_specialties: usize) -> Result<ModelParams> {
    if num_codes == 0 || num_specialties == 0 {
        return Err(GenError::Config("num_codes and num_specialties must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROFILE_SEED);
    let mut code_indicator = Vec::with_capacity(num_codes);
    let mut code_frequency = Vec::with_capacity(num_codes);
    for c in 0..num_codes {
        let (p0, p1) = match PUBLISHED_CODE_RATES.get(c) {
            Some(&rates) => rates,
            None => {
                let p0: f64 = rng.random_range(0.005..0.08);
                (p0, (p0 * rng.random_range(1.0..3.0)).min(0.6))
            }
        };
        code_indicator.push(ClassPair::new(Bernoulli::new(p0)?, Bernoulli::new(p1)?));
        let l0 = rng.random_range(0.3..3.0);
        let l1 = l0 * rng.random_range(0.9..1.5);
        code_frequency.push(ClassPair::new(Poisson::new(l0)?, Poisson::new(l1)?));
    }

    let tail = num_specialties.saturating_sub(PUBLISHED_SPECIALTY_SHARES.len());
    let specialty = |class: usize| -> Result<Categorical> {
        let head: Vec<f64> = PUBLISHED_SPECIALTY_SHARES
            .iter()
            .take(num_specialties)
            .map(|s| if class == 0 { s.0 } else { s.1 })
            .collect();
        let rest = 1.0 - head.iter().sum::<f64>();
        // The tail decays as 1 / (rank + 10), which keeps every tail share
        // below the smallest published one.
        let w: Vec<f64> = (1..=tail).map(|r| 1.0 / (r as f64 + 10.0)).collect();
        let z: f64 = w.iter().sum();
        let probs: Vec<f64> = head.into_iter().chain(w.iter().map(|v| rest * v / z)).collect();
        Ok(Categorical::from_weights(&probs)?)
    };

    let cov0 = vec![
        vec![0.977, 0.098, 0.820, 0.727],
        vec![0.098, 1.108, 0.246, 0.136],
        vec![0.820, 0.246, 0.997, 0.727],
        vec![0.727, 0.136, 0.727, 0.897],
    ];
    let cov1 = vec![
        vec![1.171, 0.066, 0.952, 1.011],
        vec![0.066, 0.216, 0.085, 0.055],
        vec![0.952, 0.085, 1.013, 0.919],
        vec![1.011, 0.055, 0.919, 1.704],
    ];
    let schema = FeatureSchema::new(num_codes, num_specialties);
    Ok(ModelParams {
        format_version: PARAMS_FORMAT_VERSION,
        schema: schema.fingerprint(),
        standardization: None,
        patient: PatientParams {
            prior_eta: DEFAULT_PRIOR_ETA,
            gender: ClassPair::new(Bernoulli::new(0.3812)?, Bernoulli::new(0.2689)?),
            age: ClassPair::new(
                Categorical::from_weights(&SYNTHETIC_AGE_WEIGHTS[0])?,
                Categorical::from_weights(&SYNTHETIC_AGE_WEIGHTS[1])?,
            ),
            region: ClassPair::new(
                Categorical::from_weights(&REGION_WEIGHTS[0])?,
                Categorical::from_weights(&REGION_WEIGHTS[1])?,
            ),
            code_indicator,
            code_frequency,
        },
        physician: PhysicianParams {
            gender: ClassPair::new(Bernoulli::new(0.8108)?, Bernoulli::new(0.7975)?),
            specialty: ClassPair::new(specialty(0)?, specialty(1)?),
            patient_count: ClassPair::new(Poisson::new(20.1514)?, Poisson::new(29.0939)?),
            claims: ClassPair::new(
                Gaussian::new(vec![0.001, 0.006, 0.013, -0.026], cov0)?,
                Gaussian::new(vec![-0.007, -0.042, -0.097, 0.191], cov1)?,
            ),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GenConfig {
        GenConfig { num_physicians: 300, num_patients: 1_200, prior_eta: 0.02, seed, ..GenConfig::default() }
    }

    #[test]
    fn published_profile_is_valid() {
        let p = published_params(DEFAULT_NUM_CODES, DEFAULT_NUM_SPECIALTIES).unwrap();
        p.validate().unwrap();
        let s = &p.physician.specialty.negative.probs;
        assert!((s[0] - 0.1563).abs() < 1e-12);
        assert!(s[5..].iter().all(|&v| v < 0.0297));
        assert_eq!(p.patient.region.positive.num_categories(), 4);
        p.physician.claims.negative.factor().unwrap();
        p.physician.claims.positive.factor().unwrap();
    }

    #[test]
    fn small_profiles_truncate() {
        let p = published_params(2, 3).unwrap();
        assert_eq!(p.patient.code_indicator.len(), 2);
        assert_eq!(p.physician.specialty.positive.num_categories(), 3);
    }

    #[test]
    fn zero_prior_gives_all_negative() {
        let c = sample_cohort(&GenConfig { prior_eta: 0.0, ..small(1) }).unwrap();
        assert!(c.patients.iter().all(|p| p.label == Some(false)));
        assert!(c.physicians.iter().all(|d| d.label == Some(false)));
    }

    #[test]
    fn every_physician_has_a_patient() {
        // Far fewer patients than physicians forces the repair step.
        let c = sample_cohort(&GenConfig { num_physicians: 200, num_patients: 10, ..small(3) }).unwrap();
        assert!(c.physician_degrees().iter().all(|&d| d >= 1));
    }

    #[test]
    fn capacity_model_builds_valid_cohorts() {
        let cfg = GenConfig {
            degree: DegreeModel::PhysicianCount { positive_physicians_per_patient: 2.0 },
            num_patients: 3_000,
            ..small(4)
        };
        let c = sample_cohort(&cfg).unwrap();
        assert!(c.labels_complete());
        assert!(c.physicians.iter().any(|d| d.label == Some(true)));
    }

    #[test]
    fn capacity_model_reports_shortage() {
        let cfg = GenConfig {
            degree: DegreeModel::PhysicianCount { positive_physicians_per_patient: 1.0 },
            num_physicians: 2,
            num_patients: 5_000,
            ..small(5)
        };
        assert!(matches!(sample_cohort(&cfg), Err(GenError::Infeasible(_))));
    }

    #[test]
    fn zero_signal_equalizes_patient_classes() {
        let p = interpolate_patient(&GenConfig::default().params.patient, 0.0).unwrap();
        assert_eq!(p.gender.negative, p.gender.positive);
        assert_eq!(p.code_frequency[3].negative, p.code_frequency[3].positive);
        for (a, b) in p.age.negative.probs.iter().zip(&p.age.positive.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(sample_cohort(&GenConfig { prior_eta: 1.0, ..small(0) }).is_err());
        assert!(sample_cohort(&GenConfig { signal: 1.5, ..small(0) }).is_err());
        assert!(sample_cohort(&GenConfig { num_patients: 0, ..small(0) }).is_err());
        let degree = DegreeModel::Uniform { mean_physicians_per_patient: 0.5 };
        assert!(sample_cohort(&GenConfig { degree, ..small(0) }).is_err());
    }
}
