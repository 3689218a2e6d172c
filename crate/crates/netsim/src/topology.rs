//! Random directed overlay with per-node upload bandwidth and per-edge latency.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::config::SimConfig;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Link {
    pub to: u32,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkTopology {
    /// Upload bandwidth per node, bits/s.
    pub bandwidth: Vec<f64>,
    pub successors: Vec<Vec<Link>>,
    /// Graphs discarded before a strongly connected one was drawn.
    pub rejected: u32,
}

/// ⌊4b/B⌋, kept within [1, N−1].
pub fn out_degree(b: f64, mean: f64, nodes: usize) -> usize {
    ((4.0 * b / mean).floor() as usize).clamp(1, nodes - 1)
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adj.len()
}

impl NetworkTopology {
    pub fn node_count(&self) -> usize {
        self.bandwidth.len()
    }

    /// Every node reaches every other along successor links.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        let mut fwd = vec![Vec::new(); n];
        let mut rev = vec![Vec::new(); n];
        for (u, links) in self.successors.iter().enumerate() {
            for l in links {
                fwd[u].push(l.to as usize);
                rev[l.to as usize].push(u);
            }
        }
        reaches_all(&fwd) && reaches_all(&rev)
    }
}

fn sample_once(cfg: &SimConfig, rng: &mut impl Rng) -> NetworkTopology {
    let n = cfg.node_count as usize;
    let mean = cfg.mean_bandwidth;
    let bandwidth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5 * mean..=1.5 * mean)).collect();
    let successors = bandwidth
        .iter()
        .enumerate()
        .map(|(u, &b)| {
            let k = out_degree(b, mean, n);
            // Draw among the N−1 other nodes, then skip over u.
            sample(rng, n - 1, k)
                .into_iter()
                .map(|v| {
                    let to = if v >= u { v + 1 } else { v };
                    Link {
                        to: to as u32,
                        latency: rng.gen_range(0.0..=2.0 * cfg.mean_latency),
                    }
                })
                .collect()
        })
        .collect();
    NetworkTopology {
        bandwidth,
        successors,
        rejected: 0,
    }
}

/// Draws topologies until one is strongly connected.
pub fn build_topology(cfg: &SimConfig, rng: &mut impl Rng) -> Result<NetworkTopology, SimError> {
    for attempt in 0..cfg.topology_attempts.max(1) {
        let mut t = sample_once(cfg, rng);
        if t.is_strongly_connected() {
            if attempt > 0 {
                log::info!("topology: {attempt} disconnected draws rejected");
            }
            t.rejected = attempt;
            return Ok(t);
        }
        log::debug!("topology draw {attempt} not strongly connected, resampling");
    }
    Err(SimError::Topology(cfg.topology_attempts))
}
