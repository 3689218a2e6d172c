use blockclique_core::codec::header_size_bits;
use blockclique_core::chain::DEFAULT_TX_SIZE_BITS;
use blockclique_core::ProtocolParams;
use serde::{Deserialize, Serialize};

use crate::SimError;

fn default_tx_size() -> u64 {
    u64::from(DEFAULT_TX_SIZE_BITS)
}
fn default_block_verify() -> f64 {
    0.050
}
fn default_tx_verify() -> f64 {
    0.000_025
}
fn default_clique_cap() -> usize {
    blockclique_core::consensus::DEFAULT_CLIQUE_CAP
}
fn default_topology_attempts() -> u32 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub node_count: u32,
    /// Mean upload bandwidth B, bits per second.
    pub mean_bandwidth: f64,
    /// Mean link latency L, seconds.
    pub mean_latency: f64,
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub miss_rate: f64,
    /// Header size S_H in bits; the encoded header size when absent.
    #[serde(default)]
    pub header_size: Option<u64>,
    #[serde(default = "default_tx_size")]
    pub tx_size: u64,
    #[serde(default = "default_block_verify")]
    pub block_verify_time: f64,
    #[serde(default = "default_tx_verify")]
    pub tx_verify_time: f64,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub endorsements_enabled: bool,
    /// Seconds excluded at both ends of the run; 2F·t0/T when absent, capped
    /// at a quarter of the run.
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default = "default_clique_cap")]
    pub clique_cap: usize,
    #[serde(default = "default_topology_attempts")]
    pub topology_attempts: u32,
}

impl SimConfig {
    /// Desk-scale version of the 12 Mb/s setup: 128 nodes, 32 Mb/s, 100 ms.
    pub fn desk_default() -> Self {
        SimConfig {
            node_count: 128,
            mean_bandwidth: 32e6,
            mean_latency: 0.1,
            protocol: ProtocolParams::default(),
            miss_rate: 0.0,
            header_size: None,
            tx_size: default_tx_size(),
            block_verify_time: default_block_verify(),
            tx_verify_time: default_tx_verify(),
            duration: 2100.0,
            seed: 0,
            endorsements_enabled: false,
            warmup: None,
            clique_cap: default_clique_cap(),
            topology_attempts: default_topology_attempts(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.protocol
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        if self.node_count < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.node_count));
        }
        if !(self.mean_bandwidth.is_finite() && self.mean_bandwidth > 0.0) {
            return bad("mean_bandwidth must be positive".into());
        }
        if !(self.mean_latency.is_finite() && self.mean_latency >= 0.0) {
            return bad("mean_latency must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.miss_rate) {
            return bad(format!("miss_rate must lie in [0, 1), got {}", self.miss_rate));
        }
        if self.tx_size == 0 {
            return bad("tx_size must be positive".into());
        }
        if !(self.block_verify_time >= 0.0 && self.tx_verify_time >= 0.0) {
            return bad("verification times must be non-negative".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        if self.header_size() > self.protocol.max_block_size {
            return bad(format!(
                "header size {} exceeds block size {}",
                self.header_size(),
                self.protocol.max_block_size
            ));
        }
        let w = self.warmup();
        if !(w >= 0.0 && 2.0 * w < self.duration) {
            return bad(format!(
                "warm-up {w} s leaves no measurement window in {} s",
                self.duration
            ));
        }
        Ok(())
    }

    pub fn header_size(&self) -> u64 {
        self.header_size.unwrap_or_else(|| {
            let e = if self.endorsements_enabled {
                self.protocol.endorsement_slots
            } else {
                0
            };
            header_size_bits(self.protocol.thread_count as usize, e as usize)
        })
    }

    /// ⌊(S_B − S_H)/S_tx⌋.
    pub fn tx_per_block(&self) -> u64 {
        self.protocol.max_block_size.saturating_sub(self.header_size()) / self.tx_size
    }

    /// Throughput with every slot filled and final, tx/s.
    pub fn throughput_ceiling(&self) -> f64 {
        self.tx_per_block() as f64 * f64::from(self.protocol.thread_count)
            / self.protocol.slot_interval
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or_else(|| {
            (2.0 * f64::from(self.protocol.finality) * self.protocol.slot_spacing())
                .min(self.duration / 4.0)
        })
    }

    /// Creation-time window over which metrics are taken.
    pub fn window(&self) -> (f64, f64) {
        let w = self.warmup();
        (w, self.duration - w)
    }
}
