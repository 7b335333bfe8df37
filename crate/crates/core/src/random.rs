//! Seeded generator of random networks that pass the design rules, and
//! the implication check run against them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificates::{certify_envelope, certify_network, DesignEnvelope};
use crate::error::Result;
use crate::network::{Bus, LineParams, NetworkGraph};

pub const MAX_BUSES: usize = 12;
pub const MAX_LINES: usize = 20;

/// A generated network with its design voltages.
#[derive(Clone, Debug)]
pub struct CertifiedCase {
    pub graph: NetworkGraph,
    pub v_ref: f64,
    pub v_min: f64,
}

/// Draws one connected network with `2 ≤ n ≤ 12` buses and at most 20
/// lines, then scales its loads and capacitances so the design rules hold.
pub fn random_certified_network<R: Rng>(rng: &mut R) -> CertifiedCase {
    loop {
        if let Some(case) = try_draw(rng) {
            return case;
        }
    }
}

fn try_draw<R: Rng>(rng: &mut R) -> Option<CertifiedCase> {
    let n = rng.random_range(2..=MAX_BUSES);
    let n_s = rng.random_range(1..n);
    let mut kinds: Vec<bool> = (0..n).map(|k| k < n_s).collect();
    kinds.shuffle(rng);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (1..n)
        .map(|j| (order[rng.random_range(0..j)], order[j]))
        .collect();
    let extra = rng.random_range(0..=(MAX_LINES - edges.len()).min(n));
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    let lines: Vec<LineParams> = edges
        .into_iter()
        .map(|(a, b)| {
            let (from, to) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let r = rng.random_range(0.01..0.5);
            let tau = rng.random_range(5e-6..200e-6);
            LineParams::with_time_constant(from, to, r, tau)
        })
        .collect();

    let v_ref = 48.0;
    let v_min = v_ref * rng.random_range(0.6..0.98);
    let weights: Vec<f64> = kinds
        .iter()
        .map(|&s| if s || rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    let buses: Vec<Bus> = kinds
        .iter()
        .zip(&weights)
        .map(|(&s, &w)| {
            if s {
                Bus::source(rng.random_range(0.05..1.5), v_ref)
            } else {
                Bus::load(w, 1.0)
            }
        })
        .collect();
    let draft = NetworkGraph::new(buses, lines);
    let env = DesignEnvelope::from_graph(&draft, v_ref, v_min).ok()?;
    let w_sum: f64 = weights.iter().sum();

    // Largest p_Σ the three aggregate rules allow, then a random fraction of it.
    let bound = [
        v_ref * v_ref / (4.0 * env.r_sigma),
        v_min * (v_ref - v_min) / env.r_sigma,
        v_min * v_min / (env.r_sigma + env.r_max),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let fraction = if rng.random_bool(0.1) { 0.999 } else { rng.random_range(0.0..0.999) };
    let scale = if w_sum > 0.0 { fraction * bound / w_sum } else { 0.0 };

    let buses: Vec<Bus> = draft
        .buses()
        .iter()
        .zip(&weights)
        .map(|(b, &w)| match b {
            Bus::Load(_) => {
                let p = w * scale;
                let c_min = p * env.tau_max / (v_min * v_min);
                let c = (c_min * rng.random_range(1.001..50.0)).max(1e-6);
                Bus::load(p, c)
            }
            other => other.clone(),
        })
        .collect();
    let graph = NetworkGraph::new(buses, draft.lines().to_vec());
    let env = DesignEnvelope::from_graph(&graph, v_ref, v_min).ok()?;
    certify_envelope(&env).pass.then_some(CertifiedCase { graph, v_ref, v_min })
}

#[derive(Clone, Debug, Serialize)]
pub struct ImplicationFailure {
    pub case: usize,
    pub n_buses: usize,
    pub n_lines: usize,
    pub failed_rules: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImplicationSummary {
    pub seed: u64,
    pub count: usize,
    pub passed: usize,
    pub failures: Vec<ImplicationFailure>,
}

impl ImplicationSummary {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that every certified case converges with load voltages above
/// `v_min` and passes the topology-aware checks.
pub fn implication_check(case: &CertifiedCase) -> Result<Vec<String>> {
    let cert = certify_network(&case.graph, case.v_ref, case.v_min)?;
    Ok(cert
        .topology_aware
        .entries
        .iter()
        .filter(|e| !e.pass)
        .map(|e| e.rule.clone())
        .collect())
}

/// Runs [`implication_check`] on `count` networks drawn from `seed`.
pub fn run_implication_suite(seed: u64, count: usize) -> Result<ImplicationSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case_id in 0..count {
        let case = random_certified_network(&mut rng);
        let failed_rules = implication_check(&case)?;
        if !failed_rules.is_empty() {
            failures.push(ImplicationFailure {
                case: case_id,
                n_buses: case.graph.n(),
                n_lines: case.graph.m(),
                failed_rules,
            });
        }
    }
    Ok(ImplicationSummary {
        seed,
        count,
        passed: count - failures.len(),
        failures,
    })
}
