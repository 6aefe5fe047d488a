//! Maximum-likelihood estimation of every model parameter from a labeled
//! cohort.
//!
//! The log-likelihood separates into a physician part (gender, specialty,
//! patient count, claims features given `y`) and a patient part
//! (demographics and clinical codes given `x`), and within each part into
//! one closed-form fit per feature and class.
//!
//! Code frequencies use a shifted model: a code that is absent has frequency
//! 0 with certainty, and a present code has frequency `1 + Poisson(lambda)`
//! with a class-specific rate.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::cohort::{
    Cohort, FeatureSchema, PatientRecord, PhysicianRecord, SchemaFingerprint, Standardization, CLAIMS_DIM,
};
use crate::distributions::{
    sample_moments, Bernoulli, Categorical, DistError, Gaussian, GaussianFactor, Poisson, DEFAULT_SMOOTHING,
    POISSON_RATE_FLOOR,
};

/// Prevalence prior from a 1:200 case-control design.
pub const DEFAULT_PRIOR_ETA: f64 = 1.0 / 201.0;
pub const PARAMS_FORMAT_VERSION: u32 = 1;
/// Below this many physicians a class borrows the pooled claims covariance.
pub const MIN_CLASS_GAUSSIAN_SAMPLES: usize = CLAIMS_DIM + 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("{record} {id} has no label; fitting requires full supervision")]
    MissingLabel { record: &'static str, id: String },
    #[error("no {class} {record}s in the training cohort")]
    EmptyClass { record: &'static str, class: &'static str },
    #[error("physician {0} has no claims features; derive them before fitting or scoring")]
    MissingClaims(String),
    #[error("parameter schema {params:?} does not match cohort schema {cohort:?}")]
    SchemaMismatch { params: SchemaFingerprint, cohort: SchemaFingerprint },
    #[error("prior eta {0} must lie strictly between 0 and 1")]
    InvalidPrior(f64),
    #[error("unsupported params format version {0}")]
    Version(u32),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, LearnError>;

fn class_name(c: bool) -> &'static str {
    if c {
        "positive"
    } else {
        "negative"
    }
}

/// One parameter per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPair<T> {
    pub negative: T,
    pub positive: T,
}

impl<T> ClassPair<T> {
    pub fn new(negative: T, positive: T) -> Self {
        Self { negative, positive }
    }

    pub fn get(&self, class: bool) -> &T {
        if class {
            &self.positive
        } else {
            &self.negative
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ClassPair<U> {
        ClassPair { negative: f(&self.negative), positive: f(&self.positive) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientParams {
    pub prior_eta: f64,
    pub gender: ClassPair<Bernoulli>,
    pub age: ClassPair<Categorical>,
    pub region: ClassPair<Categorical>,
    pub code_indicator: Vec<ClassPair<Bernoulli>>,
    /// Rate of `frequency - 1` among patients who have the code.
    pub code_frequency: Vec<ClassPair<Poisson>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicianParams {
    pub gender: ClassPair<Bernoulli>,
    pub specialty: ClassPair<Categorical>,
    pub patient_count: ClassPair<Poisson>,
    pub claims: ClassPair<Gaussian>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub format_version: u32,
    pub schema: SchemaFingerprint,
    /// Claims standardization the physician Gaussian was fitted under.
    pub standardization: Option<Standardization>,
    pub patient: PatientParams,
    pub physician: PhysicianParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub smoothing: f64,
    pub prior_eta: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { smoothing: DEFAULT_SMOOTHING, prior_eta: DEFAULT_PRIOR_ETA }
    }
}

fn labeled_patients(cohort: &Cohort) -> Result<Vec<bool>> {
    cohort
        .patients
        .iter()
        .map(|p| p.label.ok_or_else(|| LearnError::MissingLabel { record: "patient", id: p.id.clone() }))
        .collect()
}

fn labeled_physicians(cohort: &Cohort) -> Result<Vec<bool>> {
    cohort
        .physicians
        .iter()
        .map(|d| d.label.ok_or_else(|| LearnError::MissingLabel { record: "physician", id: d.id.clone() }))
        .collect()
}

/// Fits the patient-side parameters. `prior_eta` is copied from the config.
pub fn fit_patient_params(cohort: &Cohort, config: &FitConfig) -> Result<PatientParams> {
    if !(config.prior_eta > 0.0 && config.prior_eta < 1.0) {
        return Err(LearnError::InvalidPrior(config.prior_eta));
    }
    let labels = labeled_patients(cohort)?;
    let q = cohort.schema.num_codes;
    let s = config.smoothing;

    #[derive(Clone)]
    struct Counts {
        n: usize,
        male: usize,
        age: Vec<usize>,
        region: Vec<usize>,
        ind: Vec<usize>,
        freq_excess: Vec<u64>,
    }
    let empty = Counts {
        n: 0,
        male: 0,
        age: vec![0; cohort.schema.num_age_decades],
        region: vec![0; cohort.schema.num_regions],
        ind: vec![0; q],
        freq_excess: vec![0; q],
    };
    let mut counts = [empty.clone(), empty];
    for (p, &x) in cohort.patients.iter().zip(&labels) {
        let c = &mut counts[x as usize];
        c.n += 1;
        c.male += p.gender as usize;
        c.age[p.age_decade as usize] += 1;
        c.region[p.region_index()] += 1;
        for k in 0..q {
            if p.code_indicators[k] {
                c.ind[k] += 1;
                c.freq_excess[k] += (p.code_frequencies[k] - 1) as u64;
            }
        }
    }
    for (class, c) in counts.iter().enumerate() {
        if c.n == 0 {
            return Err(LearnError::EmptyClass { record: "patient", class: class_name(class == 1) });
        }
    }
    let [neg, pos] = &counts;
    let pair_bern = |a: (usize, usize), b: (usize, usize)| -> Result<ClassPair<Bernoulli>> {
        Ok(ClassPair::new(Bernoulli::fit_counts(a.0, a.1, s)?, Bernoulli::fit_counts(b.0, b.1, s)?))
    };
    let mut code_indicator = Vec::with_capacity(q);
    let mut code_frequency = Vec::with_capacity(q);
    // Codes that fell back, per class: [pooled, floor].
    let mut fallback: [[Vec<usize>; 2]; 2] = Default::default();
    for k in 0..q {
        code_indicator.push(pair_bern((neg.ind[k], neg.n), (pos.ind[k], pos.n))?);
        let pooled_n = neg.ind[k] + pos.ind[k];
        let pooled_sum = (neg.freq_excess[k] + pos.freq_excess[k]) as f64;
        let mut rate = |c: &Counts, class: usize| -> Result<Poisson> {
            if c.ind[k] > 0 {
                return Ok(Poisson::fit_sum(c.freq_excess[k] as f64, c.ind[k])?);
            }
            if pooled_n > 0 {
                fallback[class][0].push(k);
                Ok(Poisson::fit_sum(pooled_sum, pooled_n)?)
            } else {
                fallback[class][1].push(k);
                Ok(Poisson::new(POISSON_RATE_FLOOR)?)
            }
        };
        let negative = rate(neg, 0)?;
        let positive = rate(pos, 1)?;
        code_frequency.push(ClassPair::new(negative, positive));
    }
    for (class, [pooled, floor]) in fallback.iter().enumerate() {
        let name = class_name(class == 1);
        if !pooled.is_empty() {
            warn!("codes {pooled:?}: no {name} patients with the code; using pooled frequency rates");
        }
        if !floor.is_empty() {
            warn!("codes {floor:?}: no patients with the code; using the rate floor");
        }
    }
    Ok(PatientParams {
        prior_eta: config.prior_eta,
        gender: pair_bern((neg.male, neg.n), (pos.male, pos.n))?,
        age: ClassPair::new(Categorical::fit_counts(&neg.age, s)?, Categorical::fit_counts(&pos.age, s)?),
        region: ClassPair::new(Categorical::fit_counts(&neg.region, s)?, Categorical::fit_counts(&pos.region, s)?),
        code_indicator,
        code_frequency,
    })
}

/// Fits the physician-side parameters.
pub fn fit_physician_params(cohort: &Cohort, config: &FitConfig) -> Result<PhysicianParams> {
    let labels = labeled_physicians(cohort)?;
    let s = config.smoothing;
    let num_s = cohort.schema.num_specialties;
    let mut n = [0usize; 2];
    let mut male = [0usize; 2];
    let mut spec = [vec![0usize; num_s], vec![0usize; num_s]];
    let mut count_sum = [0u64; 2];
    let mut claims: [Vec<[f64; CLAIMS_DIM]>; 2] = [Vec::new(), Vec::new()];
    for (d, &y) in cohort.physicians.iter().zip(&labels) {
        let c = y as usize;
        n[c] += 1;
        male[c] += d.gender as usize;
        spec[c][d.specialty as usize] += 1;
        count_sum[c] += d.patient_count as u64;
        claims[c].push(d.claims_features.ok_or_else(|| LearnError::MissingClaims(d.id.clone()))?);
    }
    for c in 0..2 {
        if n[c] == 0 {
            return Err(LearnError::EmptyClass { record: "physician", class: class_name(c == 1) });
        }
    }
    let pooled: Vec<[f64; CLAIMS_DIM]> = claims.concat();
    let gaussian = |class: usize| -> Result<Gaussian> {
        let sample = &claims[class];
        if sample.len() >= MIN_CLASS_GAUSSIAN_SAMPLES {
            return Ok(Gaussian::fit(sample)?);
        }
        warn!(
            "only {} {} physicians; using the pooled claims covariance",
            sample.len(),
            class_name(class == 1)
        );
        let (mean, _) = sample_moments(sample)?;
        let (_, cov) = sample_moments(&pooled)?;
        Ok(Gaussian::regularized(mean, cov)?)
    };
    Ok(PhysicianParams {
        gender: ClassPair::new(Bernoulli::fit_counts(male[0], n[0], s)?, Bernoulli::fit_counts(male[1], n[1], s)?),
        specialty: ClassPair::new(Categorical::fit_counts(&spec[0], s)?, Categorical::fit_counts(&spec[1], s)?),
        patient_count: ClassPair::new(
            Poisson::fit_sum(count_sum[0] as f64, n[0])?,
            Poisson::fit_sum(count_sum[1] as f64, n[1])?,
        ),
        claims: ClassPair::new(gaussian(0)?, gaussian(1)?),
    })
}

/// Fits all parameters from a fully labeled training cohort.
pub fn fit(cohort: &Cohort, config: &FitConfig) -> Result<ModelParams> {
    Ok(ModelParams {
        format_version: PARAMS_FORMAT_VERSION,
        schema: cohort.schema.fingerprint(),
        standardization: cohort.schema.standardization,
        patient: fit_patient_params(cohort, config)?,
        physician: fit_physician_params(cohort, config)?,
    })
}

impl ModelParams {
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let cohort = schema.fingerprint();
        if cohort != self.schema
            || self.patient.code_indicator.len() != cohort.num_codes
            || self.patient.code_frequency.len() != cohort.num_codes
        {
            return Err(LearnError::SchemaMismatch { params: self.schema, cohort });
        }
        Ok(())
    }

    /// Precomputes log tables and Cholesky factors for fast evidence evaluation.
    pub fn evidence_model(&self) -> Result<EvidenceModel> {
        EvidenceModel::new(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("params serialize");
        json.push('\n');
        std::fs::write(path, json).map_err(|source| LearnError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LearnError::Io { path: path.display().to_string(), source })?;
        let params: Self = serde_json::from_str(&text)
            .map_err(|source| LearnError::Json { path: path.display().to_string(), source })?;
        if params.format_version != PARAMS_FORMAT_VERSION {
            return Err(LearnError::Version(params.format_version));
        }
        params.validate()?;
        Ok(params)
    }

    /// Re-checks the invariants of every component after deserialization.
    pub fn validate(&self) -> Result<()> {
        let p = &self.patient;
        if !(p.prior_eta > 0.0 && p.prior_eta < 1.0) {
            return Err(LearnError::InvalidPrior(p.prior_eta));
        }
        for class in [false, true] {
            Bernoulli::new(p.gender.get(class).p)?;
            Categorical::new(p.age.get(class).probs.clone())?;
            Categorical::new(p.region.get(class).probs.clone())?;
            for k in 0..p.code_indicator.len() {
                Bernoulli::new(p.code_indicator[k].get(class).p)?;
            }
            for k in 0..p.code_frequency.len() {
                Poisson::new(p.code_frequency[k].get(class).lambda)?;
            }
            let d = &self.physician;
            Bernoulli::new(d.gender.get(class).p)?;
            Categorical::new(d.specialty.get(class).probs.clone())?;
            Poisson::new(d.patient_count.get(class).lambda)?;
            let g = d.claims.get(class);
            Gaussian::new(g.mean.clone(), g.cov.clone())?.factor()?;
        }
        let fp = self.schema;
        if p.age.negative.num_categories() != fp.num_age_decades
            || p.region.negative.num_categories() != fp.num_regions
            || self.physician.specialty.negative.num_categories() != fp.num_specialties
            || p.code_indicator.len() != fp.num_codes
        {
            return Err(LearnError::Dist(DistError::InvalidParam(
                "parameter dimensions disagree with the recorded schema".into(),
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct CodeTable {
    /// `[class][indicator]`
    ind: [[f64; 2]; 2],
    ln_lambda: [f64; 2],
    lambda: [f64; 2],
}

/// Class-conditional log-likelihoods ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct EvidenceModel {
    log_prior: [f64; 2],
    pat_gender: [[f64; 2]; 2],
    pat_age: [Vec<f64>; 2],
    pat_region: [Vec<f64>; 2],
    codes: Vec<CodeTable>,
    doc_gender: [[f64; 2]; 2],
    doc_specialty: [Vec<f64>; 2],
    doc_count: [Poisson; 2],
    doc_claims: [GaussianFactor; 2],
    fingerprint: SchemaFingerprint,
}

fn bern_table(pair: &ClassPair<Bernoulli>) -> [[f64; 2]; 2] {
    [false, true].map(|c| [false, true].map(|v| pair.get(c).log_density(v)))
}

fn cat_table(pair: &ClassPair<Categorical>) -> [Vec<f64>; 2] {
    [false, true].map(|c| {
        let probs = &pair.get(c).probs;
        (0..probs.len()).map(|k| pair.get(c).log_density(k).expect("in range")).collect()
    })
}

impl EvidenceModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let p = &params.patient;
        let d = &params.physician;
        let eta = p.prior_eta;
        Ok(Self {
            log_prior: [(-eta).ln_1p(), eta.ln()],
            pat_gender: bern_table(&p.gender),
            pat_age: cat_table(&p.age),
            pat_region: cat_table(&p.region),
            codes: p
                .code_indicator
                .iter()
                .zip(&p.code_frequency)
                .map(|(ind, freq)| {
                    let lambda = [freq.negative.lambda, freq.positive.lambda];
                    CodeTable { ind: bern_table(ind), ln_lambda: lambda.map(f64::ln), lambda }
                })
                .collect(),
            doc_gender: bern_table(&d.gender),
            doc_specialty: cat_table(&d.specialty),
            doc_count: [d.patient_count.negative, d.patient_count.positive],
            doc_claims: [d.claims.negative.factor()?, d.claims.positive.factor()?],
            fingerprint: params.schema,
        })
    }

    /// `[ln(1 - eta), ln(eta)]`.
    pub fn log_prior(&self) -> [f64; 2] {
        self.log_prior
    }

    /// `[ln p(w | x = 0), ln p(w | x = 1)]` for one patient.
    pub fn patient_log_lik(&self, p: &PatientRecord) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.pat_gender[c][p.gender as usize]
                + self.pat_age[c][p.age_decade as usize]
                + self.pat_region[c][p.region_index()];
        }
        for (k, t) in self.codes.iter().enumerate() {
            let present = p.code_indicators[k];
            for (c, o) in out.iter_mut().enumerate() {
                *o += t.ind[c][present as usize];
            }
            if present {
                let excess = (p.code_frequencies[k] - 1) as u64;
                let base = ln_factorial(excess);
                for (c, o) in out.iter_mut().enumerate() {
                    *o += if excess == 0 {
                        -t.lambda[c]
                    } else {
                        excess as f64 * t.ln_lambda[c] - t.lambda[c] - base
                    };
                }
            }
        }
        out
    }

    /// `[ln p(z | y = 0), ln p(z | y = 1)]` for one physician.
    pub fn physician_log_lik(&self, d: &PhysicianRecord) -> Result<[f64; 2]> {
        let claims = d.claims_features.ok_or_else(|| LearnError::MissingClaims(d.id.clone()))?;
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.doc_gender[c][d.gender as usize]
                + self.doc_specialty[c][d.specialty as usize]
                + self.doc_count[c].log_density(d.patient_count as u64)
                + self.doc_claims[c].log_density(&claims)?;
        }
        Ok(out)
    }

    pub fn fingerprint(&self) -> SchemaFingerprint {
        self.fingerprint
    }
}

/// Sum over records of class-conditional feature log-densities plus the
/// patient prior terms, evaluated at the stored labels.
pub fn log_likelihood(cohort: &Cohort, params: &ModelParams) -> Result<f64> {
    params.check_schema(&cohort.schema)?;
    let model = params.evidence_model()?;
    let xs = labeled_patients(cohort)?;
    let ys = labeled_physicians(cohort)?;
    let mut total = 0.0;
    for (p, &x) in cohort.patients.iter().zip(&xs) {
        total += model.patient_log_lik(p)[x as usize] + model.log_prior[x as usize];
    }
    for (d, &y) in cohort.physicians.iter().zip(&ys) {
        total += model.physician_log_lik(d)?[y as usize];
    }
    Ok(total)
}
