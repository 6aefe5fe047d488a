//! Shared test oracles: brute-force enumeration of the joint distribution
//! and random small graph generators.
#![allow(dead_code)]

use rand::Rng;

/// A small instance: edges plus unnormalized log evidence per variable.
#[derive(Debug, Clone)]
pub struct Instance {
    pub num_physicians: usize,
    pub num_patients: usize,
    pub edges: Vec<(u32, u32)>,
    pub phys_evidence: Vec<[f64; 2]>,
    pub pat_evidence: Vec<[f64; 2]>,
}

impl Instance {
    pub fn num_variables(&self) -> usize {
        self.num_physicians + self.num_patients
    }
}

/// Exact marginals `p(y_i = 1)` and `p(x_j = 1)` by summing the joint over
/// every assignment, keeping only those where each physician equals the OR
/// of its linked patients.
pub fn brute_force_marginals(inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let (p, q) = (inst.num_physicians, inst.num_patients);
    assert!(p + q <= 20, "enumeration too large");
    let mut nbrs = vec![Vec::new(); p];
    for &(i, j) in &inst.edges {
        nbrs[i as usize].push(j as usize);
    }
    let mut z = 0.0;
    let mut py = vec![0.0; p];
    let mut px = vec![0.0; q];
    for xs in 0u32..(1 << q) {
        let x = |j: usize| (xs >> j) & 1 == 1;
        let mut w = 0.0;
        for (j, ev) in inst.pat_evidence.iter().enumerate() {
            w += ev[x(j) as usize];
        }
        // The OR constraint determines every y from x.
        let ys: Vec<bool> = nbrs.iter().map(|n| n.iter().any(|&j| x(j))).collect();
        for (i, ev) in inst.phys_evidence.iter().enumerate() {
            w += ev[ys[i] as usize];
        }
        let w = w.exp();
        z += w;
        for (i, &y) in ys.iter().enumerate() {
            if y {
                py[i] += w;
            }
        }
        for (j, v) in px.iter_mut().enumerate() {
            if x(j) {
                *v += w;
            }
        }
    }
    (py.iter().map(|v| v / z).collect(), px.iter().map(|v| v / z).collect())
}

fn random_evidence<R: Rng>(rng: &mut R) -> [f64; 2] {
    [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
}

/// Random connected bipartite tree with `n >= 2` variables in which every
/// physician has at least one patient.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Instance {
    assert!(n >= 2);
    let mut p = 1usize;
    let mut q = 1usize;
    let mut edges = vec![(0u32, 0u32)];
    while p + q < n {
        if rng.random::<bool>() {
            // New physician hanging off an existing patient.
            let j = rng.random_range(0..q) as u32;
            edges.push((p as u32, j));
            p += 1;
        } else {
            let i = rng.random_range(0..p) as u32;
            edges.push((i, q as u32));
            q += 1;
        }
    }
    Instance {
        num_physicians: p,
        num_patients: q,
        edges,
        phys_evidence: (0..p).map(|_| random_evidence(rng)).collect(),
        pat_evidence: (0..q).map(|_| random_evidence(rng)).collect(),
    }
}

/// A random tree with `extra` additional distinct edges, which closes at
/// least one cycle when any extra edge is added.
pub fn random_cyclic<R: Rng>(rng: &mut R, n: usize, extra: usize) -> Instance {
    for _ in 0..10_000 {
        let mut inst = random_tree(rng, n);
        let (p, q) = (inst.num_physicians, inst.num_patients);
        let mut missing: Vec<(u32, u32)> = (0..p as u32)
            .flat_map(|i| (0..q as u32).map(move |j| (i, j)))
            .filter(|e| !inst.edges.contains(e))
            .collect();
        if missing.len() < extra || extra == 0 {
            continue;
        }
        for _ in 0..extra {
            let k = rng.random_range(0..missing.len());
            inst.edges.push(missing.swap_remove(k));
        }
        return inst;
    }
    panic!("cannot add {extra} extra edges to a tree with {n} variables");
}

/// Naive OR-factor message to the physician: enumerate all patient states.
pub fn enumerate_or_to_physician(incoming: &[[f64; 2]]) -> [f64; 2] {
    let n = incoming.len();
    let mut out = [0.0; 2];
    for s in 0u32..(1 << n) {
        let mut w = 1.0;
        for (k, mu) in incoming.iter().enumerate() {
            w *= mu[((s >> k) & 1) as usize];
        }
        out[(s != 0) as usize] += w;
    }
    let z = out[0] + out[1];
    [out[0] / z, out[1] / z]
}

/// Naive OR-factor message to patient `target` given the physician message
/// and the other patients' messages (`incoming[target]` is ignored).
pub fn enumerate_or_to_patient(physician: [f64; 2], incoming: &[[f64; 2]], target: usize) -> [f64; 2] {
    let n = incoming.len();
    let mut out = [0.0; 2];
    for s in 0u32..(1 << n) {
        let mut w = 1.0;
        for (k, mu) in incoming.iter().enumerate() {
            if k != target {
                w *= mu[((s >> k) & 1) as usize];
            }
        }
        let y = s != 0;
        w *= physician[y as usize];
        out[((s >> target) & 1) as usize] += w;
    }
    let z = out[0] + out[1];
    [out[0] / z, out[1] / z]
}
