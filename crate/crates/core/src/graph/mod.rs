//! Factor graph over physician labels `y_i` and patient labels `x_j`.
//!
//! Each physician carries an evidence factor `phi_a` (its feature
//! likelihood) and an OR factor `phi_b` tying `y_i` to its patients' labels.
//! Each patient carries an evidence factor `phi_c` (feature likelihood times
//! the prevalence prior). Physician `i` is positive exactly when at least one
//! linked patient is positive.
//!
//! Internally records are renumbered so that each connected component owns
//! contiguous ranges of physicians, patients and edges. Edge messages are
//! stored physician-major; a second index gives each patient's edge slots.

mod inference;
mod messages;

pub use inference::{
    posterior_mean, run_inference, Beliefs, ComponentDiagnostics, InferenceConfig, VariableId,
};
pub use messages::{
    ln_1m_exp, log_add_exp, or_to_patient, or_to_patient_from_ln_p0, or_to_physician, or_to_physician_from_ln_p0,
    LogMsg,
};

use std::collections::VecDeque;
use std::ops::Range;

use thiserror::Error;

use crate::cohort::Cohort;
use crate::learning::{LearnError, ModelParams};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Params(#[from] LearnError),
    #[error("physician {0} has no linked patients")]
    IsolatedPhysician(String),
    #[error("edge ({physician}, {patient}) is out of range")]
    EdgeOutOfRange { physician: usize, patient: usize },
    #[error("evidence for {what} {index} is not a valid log vector")]
    BadEvidence { what: &'static str, index: usize },
    #[error("invalid inference setting: {0}")]
    Config(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(VariableId),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Observed labels enter as certain evidence instead of being ignored.
    pub clamp_observed_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Internal physician indices.
    pub physicians: Range<usize>,
    /// Internal patient indices.
    pub patients: Range<usize>,
    /// Internal physician-major edge indices.
    pub edges: Range<usize>,
    pub is_tree: bool,
    /// Some evidence factor assigns zero probability to both labels.
    pub evidence_contradiction: bool,
}

impl Component {
    pub fn num_variable_nodes(&self) -> usize {
        self.physicians.len() + self.patients.len()
    }

    pub fn num_factor_nodes(&self) -> usize {
        2 * self.physicians.len() + self.patients.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_variable_nodes() + self.num_factor_nodes()
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    /// Internal index -> original physician index.
    pub(crate) phys_orig: Vec<u32>,
    pub(crate) pat_orig: Vec<u32>,
    /// Physician-major edge offsets, length P + 1.
    pub(crate) phys_off: Vec<usize>,
    /// Internal patient index of each edge.
    pub(crate) edge_pat: Vec<u32>,
    /// Internal physician index of each edge.
    pub(crate) edge_phys: Vec<u32>,
    /// Patient-major slot offsets, length Q + 1.
    pub(crate) pat_off: Vec<usize>,
    /// Edge index of each patient slot.
    pub(crate) pat_edge: Vec<u32>,
    pub(crate) phys_evidence: Vec<LogMsg>,
    pub(crate) pat_evidence: Vec<LogMsg>,
    pub(crate) components: Vec<Component>,
}

impl FactorGraph {
    /// Builds the graph for `cohort` with evidence from `params`.
    pub fn build(cohort: &Cohort, params: &ModelParams, options: BuildOptions) -> Result<Self> {
        params.check_schema(&cohort.schema)?;
        let model = params.evidence_model()?;
        let prior = model.log_prior();
        let mut phys_evidence = Vec::with_capacity(cohort.num_physicians());
        for d in &cohort.physicians {
            let mut ev = model.physician_log_lik(d)?;
            if options.clamp_observed_labels {
                clamp(&mut ev, d.label);
            }
            phys_evidence.push(ev);
        }
        let pat_evidence = cohort
            .patients
            .iter()
            .map(|p| {
                let l = model.patient_log_lik(p);
                let mut ev = [l[0] + prior[0], l[1] + prior[1]];
                if options.clamp_observed_labels {
                    clamp(&mut ev, p.label);
                }
                ev
            })
            .collect();
        for (d, deg) in cohort.physicians.iter().zip(cohort.physician_degrees()) {
            if deg == 0 {
                return Err(GraphError::IsolatedPhysician(d.id.clone()));
            }
        }
        let edges: Vec<(u32, u32)> = cohort.edges.iter().map(|e| (e.physician, e.patient)).collect();
        Self::from_parts(cohort.num_physicians(), cohort.num_patients(), &edges, phys_evidence, pat_evidence)
    }

    /// Builds a graph from raw parts. Evidence vectors are unnormalized log
    /// likelihoods; patient evidence must already include the prior.
    pub fn from_parts(
        num_physicians: usize,
        num_patients: usize,
        edges: &[(u32, u32)],
        phys_evidence: Vec<[f64; 2]>,
        pat_evidence: Vec<[f64; 2]>,
    ) -> Result<Self> {
        assert_eq!(phys_evidence.len(), num_physicians, "one evidence vector per physician");
        assert_eq!(pat_evidence.len(), num_patients, "one evidence vector per patient");
        let (p, q) = (num_physicians, num_patients);
        for &(i, j) in edges {
            if i as usize >= p || j as usize >= q {
                return Err(GraphError::EdgeOutOfRange { physician: i as usize, patient: j as usize });
            }
        }
        for (k, ev) in phys_evidence.iter().enumerate() {
            if ev.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(GraphError::BadEvidence { what: "physician", index: k });
            }
        }
        for (k, ev) in pat_evidence.iter().enumerate() {
            if ev.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(GraphError::BadEvidence { what: "patient", index: k });
            }
        }

        // Adjacency in original numbering.
        let (phys_adj_off, phys_adj) = csr(p, edges.iter().map(|&(i, j)| (i, j)));
        let (pat_adj_off, pat_adj) = csr(q, edges.iter().map(|&(i, j)| (j, i)));
        if let Some(i) = (0..p).find(|&i| phys_adj_off[i] == phys_adj_off[i + 1]) {
            return Err(GraphError::IsolatedPhysician(format!("#{i}")));
        }

        // Components by breadth-first search, seeded in original index order.
        let mut phys_new = vec![u32::MAX; p];
        let mut pat_new = vec![u32::MAX; q];
        let mut phys_orig = Vec::with_capacity(p);
        let mut pat_orig = Vec::with_capacity(q);
        let mut spans = Vec::new();
        let mut queue = VecDeque::new();
        let seeds = (0..p).map(|i| (true, i)).chain((0..q).map(|j| (false, j)));
        for (is_phys, s) in seeds {
            let seen = if is_phys { phys_new[s] } else { pat_new[s] };
            if seen != u32::MAX {
                continue;
            }
            let (p0, q0) = (phys_orig.len(), pat_orig.len());
            if is_phys {
                phys_new[s] = phys_orig.len() as u32;
                phys_orig.push(s as u32);
            } else {
                pat_new[s] = pat_orig.len() as u32;
                pat_orig.push(s as u32);
            }
            queue.push_back((is_phys, s));
            let mut num_edges = 0usize;
            while let Some((is_phys, v)) = queue.pop_front() {
                if is_phys {
                    num_edges += phys_adj_off[v + 1] - phys_adj_off[v];
                    for &j in &phys_adj[phys_adj_off[v]..phys_adj_off[v + 1]] {
                        let j = j as usize;
                        if pat_new[j] == u32::MAX {
                            pat_new[j] = pat_orig.len() as u32;
                            pat_orig.push(j as u32);
                            queue.push_back((false, j));
                        }
                    }
                } else {
                    for &i in &pat_adj[pat_adj_off[v]..pat_adj_off[v + 1]] {
                        let i = i as usize;
                        if phys_new[i] == u32::MAX {
                            phys_new[i] = phys_orig.len() as u32;
                            phys_orig.push(i as u32);
                            queue.push_back((true, i));
                        }
                    }
                }
            }
            spans.push((p0..phys_orig.len(), q0..pat_orig.len(), num_edges));
        }

        // Physician-major edges in internal numbering, sorted by patient
        // within each physician for a stable layout.
        let mut phys_off = Vec::with_capacity(p + 1);
        phys_off.push(0);
        let mut edge_pat = Vec::with_capacity(edges.len());
        let mut edge_phys = Vec::with_capacity(edges.len());
        let mut scratch = Vec::new();
        for (inew, &iorig) in phys_orig.iter().enumerate() {
            let io = iorig as usize;
            scratch.clear();
            scratch.extend(phys_adj[phys_adj_off[io]..phys_adj_off[io + 1]].iter().map(|&j| pat_new[j as usize]));
            scratch.sort_unstable();
            edge_pat.extend_from_slice(&scratch);
            edge_phys.extend(std::iter::repeat_n(inew as u32, scratch.len()));
            phys_off.push(edge_pat.len());
        }
        let (pat_off, pat_edge) = csr(q, edge_pat.iter().enumerate().map(|(e, &j)| (j, e as u32)));

        let mut phys_ev = Vec::with_capacity(p);
        let mut pat_ev = Vec::with_capacity(q);
        let mut components = Vec::with_capacity(spans.len());
        let mut edge_start = 0;
        for (id, (phys, pats, num_edges)) in spans.into_iter().enumerate() {
            let mut contradiction = false;
            for &io in &phys_orig[phys.clone()] {
                phys_ev.push(LogMsg::normalize_or_uniform(phys_evidence[io as usize], &mut contradiction));
            }
            for &jo in &pat_orig[pats.clone()] {
                pat_ev.push(LogMsg::normalize_or_uniform(pat_evidence[jo as usize], &mut contradiction));
            }
            let edges = edge_start..edge_start + num_edges;
            edge_start = edges.end;
            debug_assert_eq!(phys_off[phys.end] - phys_off[phys.start], num_edges);
            let is_tree = num_edges + 1 == phys.len() + pats.len();
            components.push(Component {
                id,
                physicians: phys,
                patients: pats,
                edges,
                is_tree,
                evidence_contradiction: contradiction,
            });
        }

        Ok(Self {
            phys_orig,
            pat_orig,
            phys_off,
            edge_pat,
            edge_phys,
            pat_off,
            pat_edge,
            phys_evidence: phys_ev,
            pat_evidence: pat_ev,
            components,
        })
    }

    pub fn num_physicians(&self) -> usize {
        self.phys_orig.len()
    }

    pub fn num_patients(&self) -> usize {
        self.pat_orig.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_pat.len()
    }

    /// One variable per physician and per patient.
    pub fn num_variable_nodes(&self) -> usize {
        self.num_physicians() + self.num_patients()
    }

    /// `phi_a` and `phi_b` per physician, `phi_c` per patient.
    pub fn num_factor_nodes(&self) -> usize {
        2 * self.num_physicians() + self.num_patients()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_variable_nodes() + self.num_factor_nodes()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Component id of each physician, in original order.
    pub fn physician_components(&self) -> Vec<u32> {
        let mut out = vec![0; self.num_physicians()];
        for c in &self.components {
            for i in c.physicians.clone() {
                out[self.phys_orig[i] as usize] = c.id as u32;
            }
        }
        out
    }

    /// Component id of each patient, in original order.
    pub fn patient_components(&self) -> Vec<u32> {
        let mut out = vec![0; self.num_patients()];
        for c in &self.components {
            for j in c.patients.clone() {
                out[self.pat_orig[j] as usize] = c.id as u32;
            }
        }
        out
    }
}

fn clamp(ev: &mut [f64; 2], label: Option<bool>) {
    match label {
        Some(true) => ev[0] = f64::NEG_INFINITY,
        Some(false) => ev[1] = f64::NEG_INFINITY,
        None => {}
    }
}

/// Compressed rows: offsets of length `n + 1` and the grouped values, in
/// input order within each row.
fn csr(n: usize, pairs: impl Iterator<Item = (u32, u32)> + Clone) -> (Vec<usize>, Vec<u32>) {
    let mut off = vec![0usize; n + 1];
    for (r, _) in pairs.clone() {
        off[r as usize + 1] += 1;
    }
    for k in 0..n {
        off[k + 1] += off[k];
    }
    let mut fill = off.clone();
    let mut vals = vec![0u32; off[n]];
    for (r, v) in pairs {
        vals[fill[r as usize]] = v;
        fill[r as usize] += 1;
    }
    (off, vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_graph_has_five_nodes() {
        let g = FactorGraph::from_parts(1, 1, &[(0, 0)], vec![[0.0, 0.0]], vec![[0.0, 0.0]]).unwrap();
        assert_eq!(g.num_variable_nodes(), 2);
        assert_eq!(g.num_factor_nodes(), 3);
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.components().len(), 1);
        assert!(g.components()[0].is_tree);
    }

    #[test]
    fn shared_pair_of_patients_is_cyclic() {
        let edges = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let g = FactorGraph::from_parts(2, 2, &edges, vec![[0.0; 2]; 2], vec![[0.0; 2]; 2]).unwrap();
        assert_eq!(g.components().len(), 1);
        assert!(!g.components()[0].is_tree);
    }

    #[test]
    fn components_partition_nodes() {
        // D0-{P0,P1}, D1-{P2}, D2-{P1}, P3 isolated.
        let edges = [(0, 0), (0, 1), (1, 2), (2, 1)];
        let g = FactorGraph::from_parts(3, 4, &edges, vec![[0.0; 2]; 3], vec![[0.0; 2]; 4]).unwrap();
        assert_eq!(g.components().len(), 3);
        let total: usize = g.components().iter().map(Component::num_nodes).sum();
        assert_eq!(total, g.num_nodes());
        assert_eq!(g.physician_components(), vec![0, 1, 0]);
        assert_eq!(g.patient_components(), vec![0, 0, 1, 2]);
        assert!(g.components().iter().all(|c| c.is_tree));
    }

    #[test]
    fn isolated_physician_rejected() {
        let err = FactorGraph::from_parts(2, 1, &[(0, 0)], vec![[0.0; 2]; 2], vec![[0.0; 2]]).unwrap_err();
        assert!(matches!(err, GraphError::IsolatedPhysician(_)));
    }

    #[test]
    fn contradictory_evidence_flagged() {
        let ninf = f64::NEG_INFINITY;
        let g = FactorGraph::from_parts(1, 1, &[(0, 0)], vec![[0.0; 2]], vec![[ninf, ninf]]).unwrap();
        assert!(g.components()[0].evidence_contradiction);
    }
}
