//! Sum-product inference per connected component.
//!
//! Tree components get an exact two-pass schedule (leaves to root, then root
//! to leaves). Components with cycles run flooding loopy belief propagation:
//! every OR factor updates from the previous patient messages, then every
//! patient updates from the new factor messages. Factor-to-patient messages
//! are damped in log space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::messages::{or_to_patient_from_ln_p0, or_to_physician_from_ln_p0, LogMsg};
use super::{Component, FactorGraph, GraphError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Weight kept from the previous message, in `[0, 1)`.
    pub damping: f64,
    /// Stop when no log-message entry moves by this much in an iteration.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-8, max_iters: 100 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(GraphError::Config(format!("damping {} must lie in [0, 1)", self.damping)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(GraphError::Config(format!("tol {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(GraphError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub id: usize,
    pub num_physicians: usize,
    pub num_patients: usize,
    pub num_edges: usize,
    pub is_tree: bool,
    /// Loopy iterations run; 1 for the single sweep on a tree.
    pub iterations: usize,
    pub converged: bool,
    /// Largest log-message change in the final iteration.
    pub max_delta: f64,
    /// Evidence or messages assigned zero mass to both labels somewhere.
    pub contradiction: bool,
}

/// Positive-class posteriors in original record order.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub physician: Vec<f64>,
    pub patient: Vec<f64>,
    pub physician_component: Vec<u32>,
    pub patient_component: Vec<u32>,
    pub components: Vec<ComponentDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableId {
    Physician(usize),
    Patient(usize),
}

impl Beliefs {
    pub fn physician_converged(&self, i: usize) -> bool {
        self.components[self.physician_component[i] as usize].converged
    }

    pub fn patient_converged(&self, j: usize) -> bool {
        self.components[self.patient_component[j] as usize].converged
    }
}

/// Posterior mean of a binary label, which is its positive-class belief.
pub fn posterior_mean(beliefs: &Beliefs, id: VariableId) -> Result<f64> {
    match id {
        VariableId::Physician(i) => beliefs.physician.get(i),
        VariableId::Patient(j) => beliefs.patient.get(j),
    }
    .copied()
    .ok_or(GraphError::UnknownVariable(id))
}

pub fn run_inference(graph: &FactorGraph, config: &InferenceConfig) -> Result<Beliefs> {
    config.validate()?;
    let e = graph.num_edges();
    let mut fp = vec![LogMsg::UNIFORM; e];
    let mut pf = vec![LogMsg::UNIFORM; e];
    let mut phys_b = vec![0.0; graph.num_physicians()];
    let mut pat_b = vec![0.0; graph.num_patients()];

    let mut work = Vec::with_capacity(graph.components.len());
    {
        let (mut fp, mut pf, mut phys_b, mut pat_b) = (&mut fp[..], &mut pf[..], &mut phys_b[..], &mut pat_b[..]);
        for c in &graph.components {
            let (a, rest) = std::mem::take(&mut fp).split_at_mut(c.edges.len());
            fp = rest;
            let (b, rest) = std::mem::take(&mut pf).split_at_mut(c.edges.len());
            pf = rest;
            let (pb, rest) = std::mem::take(&mut phys_b).split_at_mut(c.physicians.len());
            phys_b = rest;
            let (qb, rest) = std::mem::take(&mut pat_b).split_at_mut(c.patients.len());
            pat_b = rest;
            work.push(Solver::new(graph, c, a, b, pb, qb));
        }
    }
    let components: Vec<ComponentDiagnostics> =
        work.into_par_iter().map(|mut s| s.solve(config)).collect();

    let mut physician = vec![0.0; graph.num_physicians()];
    for (inew, &iorig) in graph.phys_orig.iter().enumerate() {
        physician[iorig as usize] = phys_b[inew];
    }
    let mut patient = vec![0.0; graph.num_patients()];
    for (jnew, &jorig) in graph.pat_orig.iter().enumerate() {
        patient[jorig as usize] = pat_b[jnew];
    }
    Ok(Beliefs {
        physician,
        patient,
        physician_component: graph.physician_components(),
        patient_component: graph.patient_components(),
        components,
    })
}

#[inline]
fn damp(old: LogMsg, new: LogMsg, alpha: f64) -> LogMsg {
    let finite = |m: &LogMsg| m.0[0] > f64::NEG_INFINITY && m.0[1] > f64::NEG_INFINITY;
    if alpha == 0.0 || !finite(&old) || !finite(&new) {
        return new;
    }
    let mixed = [
        alpha * old.0[0] + (1.0 - alpha) * new.0[0],
        alpha * old.0[1] + (1.0 - alpha) * new.0[1],
    ];
    LogMsg::normalize(mixed).expect("finite")
}

#[inline]
fn change(old: &LogMsg, new: &LogMsg) -> f64 {
    let d = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() };
    d(old.0[0], new.0[0]).max(d(old.0[1], new.0[1]))
}

struct Solver<'a> {
    g: &'a FactorGraph,
    comp: &'a Component,
    fp: &'a mut [LogMsg],
    pf: &'a mut [LogMsg],
    phys_b: &'a mut [f64],
    pat_b: &'a mut [f64],
    scratch_f: Vec<f64>,
    scratch_v: Vec<[f64; 2]>,
    contradiction: bool,
}

impl<'a> Solver<'a> {
    fn new(
        g: &'a FactorGraph,
        comp: &'a Component,
        fp: &'a mut [LogMsg],
        pf: &'a mut [LogMsg],
        phys_b: &'a mut [f64],
        pat_b: &'a mut [f64],
    ) -> Self {
        Self {
            g,
            comp,
            fp,
            pf,
            phys_b,
            pat_b,
            scratch_f: Vec::new(),
            scratch_v: Vec::new(),
            contradiction: comp.evidence_contradiction,
        }
    }

    fn solve(&mut self, config: &InferenceConfig) -> ComponentDiagnostics {
        let c = self.comp;
        let (iterations, converged, max_delta) = if c.is_tree {
            self.two_pass();
            (1, true, 0.0)
        } else {
            self.loopy(config)
        };
        self.beliefs();
        ComponentDiagnostics {
            id: c.id,
            num_physicians: c.physicians.len(),
            num_patients: c.patients.len(),
            num_edges: c.edges.len(),
            is_tree: c.is_tree,
            iterations,
            converged,
            max_delta,
            contradiction: self.contradiction,
        }
    }

    /// Recomputes every OR-factor-to-patient message of physician `i`.
    fn update_physician(&mut self, i: usize, alpha: f64) -> f64 {
        let e0 = self.comp.edges.start;
        let (s, t) = (self.g.phys_off[i] - e0, self.g.phys_off[i + 1] - e0);
        let a = self.g.phys_evidence[i];
        let lq = &mut self.scratch_f;
        lq.clear();
        lq.extend(self.pf[s..t].iter().map(LogMsg::ln_prob0));
        // Suffix sums in place: lq[k] becomes the sum over k+1.., and the
        // running prefix covers ..k.
        let mut suffix = 0.0;
        for v in lq.iter_mut().rev() {
            let own = *v;
            *v = suffix;
            suffix += own;
        }
        let mut prefix = 0.0;
        let mut delta: f64 = 0.0;
        for k in 0..t - s {
            let excl = prefix + lq[k];
            let new = or_to_patient_from_ln_p0(&a, excl).unwrap_or_else(|| {
                self.contradiction = true;
                LogMsg::UNIFORM
            });
            let old = self.fp[s + k];
            let new = damp(old, new, alpha);
            delta = delta.max(change(&old, &new));
            self.fp[s + k] = new;
            prefix += self.pf[s + k].ln_prob0();
        }
        delta
    }

    /// Recomputes every patient-to-OR-factor message of patient `j`.
    fn update_patient(&mut self, j: usize) -> f64 {
        let e0 = self.comp.edges.start as u32;
        let slots = &self.g.pat_edge[self.g.pat_off[j]..self.g.pat_off[j + 1]];
        let c = self.g.pat_evidence[j].0;
        let suf = &mut self.scratch_v;
        suf.clear();
        let mut acc = [0.0, 0.0];
        for &e in slots.iter().rev() {
            suf.push(acc);
            let m = self.fp[(e - e0) as usize].0;
            acc = [acc[0] + m[0], acc[1] + m[1]];
        }
        suf.reverse();
        let mut prefix = c;
        let mut delta: f64 = 0.0;
        for (k, &e) in slots.iter().enumerate() {
            let e = (e - e0) as usize;
            let raw = [prefix[0] + suf[k][0], prefix[1] + suf[k][1]];
            let new = LogMsg::normalize_or_uniform(raw, &mut self.contradiction);
            delta = delta.max(change(&self.pf[e], &new));
            self.pf[e] = new;
            let m = self.fp[e].0;
            prefix = [prefix[0] + m[0], prefix[1] + m[1]];
        }
        delta
    }

    fn two_pass(&mut self) {
        let c = self.comp;
        if c.edges.is_empty() {
            return;
        }
        let g = self.g;
        // Breadth-first order from the first physician.
        let mut seen_phys = vec![false; c.physicians.len()];
        let mut seen_pat = vec![false; c.patients.len()];
        let mut order: Vec<(bool, usize)> = Vec::with_capacity(c.num_variable_nodes());
        order.push((true, c.physicians.start));
        seen_phys[0] = true;
        let mut head = 0;
        while head < order.len() {
            let (is_phys, v) = order[head];
            head += 1;
            if is_phys {
                for e in g.phys_off[v]..g.phys_off[v + 1] {
                    let j = g.edge_pat[e] as usize;
                    if !seen_pat[j - c.patients.start] {
                        seen_pat[j - c.patients.start] = true;
                        order.push((false, j));
                    }
                }
            } else {
                for &e in &g.pat_edge[g.pat_off[v]..g.pat_off[v + 1]] {
                    let i = g.edge_phys[e as usize] as usize;
                    if !seen_phys[i - c.physicians.start] {
                        seen_phys[i - c.physicians.start] = true;
                        order.push((true, i));
                    }
                }
            }
        }
        debug_assert_eq!(order.len(), c.num_variable_nodes());
        // A node's message toward its parent depends only on its children,
        // so full node updates in reverse order settle the upward pass and a
        // second sweep in forward order settles the downward pass.
        for &(is_phys, v) in order.iter().rev() {
            if is_phys {
                self.update_physician(v, 0.0);
            } else {
                self.update_patient(v);
            }
        }
        for &(is_phys, v) in &order {
            if is_phys {
                self.update_physician(v, 0.0);
            } else {
                self.update_patient(v);
            }
        }
    }

    fn loopy(&mut self, config: &InferenceConfig) -> (usize, bool, f64) {
        let c = self.comp;
        for j in c.patients.clone() {
            self.update_patient(j);
        }
        let mut delta = f64::INFINITY;
        for it in 1..=config.max_iters {
            delta = 0.0;
            for i in c.physicians.clone() {
                delta = delta.max(self.update_physician(i, config.damping));
            }
            for j in c.patients.clone() {
                delta = delta.max(self.update_patient(j));
            }
            if delta < config.tol {
                return (it, true, delta);
            }
        }
        (config.max_iters, false, delta)
    }

    fn beliefs(&mut self) {
        let c = self.comp;
        let (e0, p0, q0) = (c.edges.start, c.physicians.start, c.patients.start);
        for i in c.physicians.clone() {
            let (s, t) = (self.g.phys_off[i] - e0, self.g.phys_off[i + 1] - e0);
            let ln_p0: f64 = self.pf[s..t].iter().map(LogMsg::ln_prob0).sum();
            let m = or_to_physician_from_ln_p0(ln_p0);
            let b = LogMsg::normalize_or_uniform(self.g.phys_evidence[i].add(&m), &mut self.contradiction);
            self.phys_b[i - p0] = b.prob1();
        }
        for j in c.patients.clone() {
            let mut acc = self.g.pat_evidence[j].0;
            for &e in &self.g.pat_edge[self.g.pat_off[j]..self.g.pat_off[j + 1]] {
                let m = self.fp[e as usize - e0].0;
                acc = [acc[0] + m[0], acc[1] + m[1]];
            }
            let b = LogMsg::normalize_or_uniform(acc, &mut self.contradiction);
            self.pat_b[j - q0] = b.prob1();
        }
    }
}
