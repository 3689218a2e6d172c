//! Deterministic producer and endorser selection.
//!
//! Every draw is a pure function of `(seed, role, thread, period, index)`.
//! The draw procedure is part of the wire format and must not change:
//!
//! 1. `key = SHA-256("blockclique/selection/v1" || seed:u64 || role:u8 ||
//!    thread:u32 || period:u64 || index:u32)`, integers big-endian, role
//!    0 for blocks and 1 for endorsements (index 0 for blocks).
//! 2. A ChaCha20 stream is keyed with `key` (`rand_chacha::ChaCha20Rng::from_seed`).
//! 3. 64-bit words `x` are drawn until `x < zone`, where `zone` is the
//!    largest multiple of the total weight that fits in `u64`; the ticket is
//!    `x % total`.
//! 4. The selected node is the first one whose cumulative weight exceeds the
//!    ticket, in the order the weights were given.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::chain::{BlockHeader, NodeId, Slot};

const DOMAIN: &[u8] = b"blockclique/selection/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("selection needs at least one node with positive weight")]
    NoWeight,
    #[error("total selection weight overflows u64")]
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Block,
    Endorsement,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Block => 0,
            Role::Endorsement => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionOracle {
    seed: u64,
    nodes: Vec<NodeId>,
    cumulative: Vec<u64>,
    total: u64,
    /// Resource snapshot delay K in seconds. Carried as metadata: the weight
    /// distribution is fixed for the lifetime of the oracle.
    pub snapshot_delay: f64,
}

impl SelectionOracle {
    /// Uniform selection over nodes `0..node_count`.
    pub fn uniform(seed: u64, node_count: u32) -> Result<Self, SelectionError> {
        Self::weighted(seed, (0..node_count).map(|i| (NodeId(i), 1)))
    }

    pub fn weighted(
        seed: u64,
        weights: impl IntoIterator<Item = (NodeId, u64)>,
    ) -> Result<Self, SelectionError> {
        let mut nodes = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0u64;
        for (node, w) in weights {
            if w == 0 {
                continue;
            }
            total = total.checked_add(w).ok_or(SelectionError::Overflow)?;
            nodes.push(node);
            cumulative.push(total);
        }
        if total == 0 {
            return Err(SelectionError::NoWeight);
        }
        Ok(SelectionOracle {
            seed,
            nodes,
            cumulative,
            total,
            snapshot_delay: 0.0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn stream(&self, role: Role, slot: Slot, index: u32) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN);
        hasher.update(self.seed.to_be_bytes());
        hasher.update([role.tag()]);
        hasher.update(slot.thread.to_be_bytes());
        hasher.update(slot.period.to_be_bytes());
        hasher.update(index.to_be_bytes());
        ChaCha20Rng::from_seed(hasher.finalize().into())
    }

    pub fn draw(&self, role: Role, slot: Slot, index: u32) -> NodeId {
        let mut rng = self.stream(role, slot, index);
        let zone = u64::MAX - (u64::MAX % self.total + 1) % self.total;
        let ticket = loop {
            let x = rng.next_u64();
            if x <= zone {
                break x % self.total;
            }
        };
        let pos = self.cumulative.partition_point(|&c| c <= ticket);
        self.nodes[pos]
    }

    pub fn draw_block_producer(&self, slot: Slot) -> NodeId {
        self.draw(Role::Block, slot, 0)
    }

    pub fn draw_endorsers(&self, slot: Slot, endorsement_slots: u32) -> Vec<NodeId> {
        (0..endorsement_slots)
            .map(|i| self.draw(Role::Endorsement, slot, i))
            .collect()
    }

    /// Full schedule for the given slots, in slot order, blocks before
    /// endorsements.
    pub fn schedule(
        &self,
        slots: impl IntoIterator<Item = Slot>,
        endorsement_slots: u32,
    ) -> Vec<ScheduleEntry> {
        let mut out = Vec::new();
        for slot in slots {
            out.push(ScheduleEntry {
                thread: slot.thread,
                period: slot.period,
                role: Role::Block,
                index: 0,
                node: self.draw_block_producer(slot),
            });
            for (i, node) in self
                .draw_endorsers(slot, endorsement_slots)
                .into_iter()
                .enumerate()
            {
                out.push(ScheduleEntry {
                    thread: slot.thread,
                    period: slot.period,
                    role: Role::Endorsement,
                    index: i as u32,
                    node,
                });
            }
        }
        out
    }
}

/// One line of the audit dump of the selection schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub thread: u32,
    pub period: u64,
    pub role: Role,
    pub index: u32,
    pub node: NodeId,
}

/// Block fitness `1 + e`, e being the number of filled endorsement slots.
pub fn fitness(header: &BlockHeader) -> u64 {
    1 + header.endorsements.len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Digest, Endorsement};

    #[test]
    fn draws_are_deterministic() {
        let a = SelectionOracle::uniform(42, 100).unwrap();
        let b = SelectionOracle::uniform(42, 100).unwrap();
        for p in 0..50 {
            let slot = Slot::new(p as u32 % 4, p);
            assert_eq!(a.draw_block_producer(slot), b.draw_block_producer(slot));
            assert_eq!(a.draw_endorsers(slot, 8), b.draw_endorsers(slot, 8));
        }
    }

    #[test]
    fn single_node_always_selected() {
        let o = SelectionOracle::weighted(1, [(NodeId(7), 5)]).unwrap();
        for p in 0..100 {
            assert_eq!(o.draw_block_producer(Slot::new(0, p)), NodeId(7));
        }
    }

    #[test]
    fn zero_endorsement_slots() {
        let o = SelectionOracle::uniform(3, 10).unwrap();
        assert!(o.draw_endorsers(Slot::new(0, 1), 0).is_empty());
    }

    #[test]
    fn zero_weights_are_skipped() {
        let o = SelectionOracle::weighted(9, [(NodeId(0), 0), (NodeId(1), 3)]).unwrap();
        assert_eq!(o.node_count(), 1);
        assert!(matches!(
            SelectionOracle::weighted(9, [(NodeId(0), 0)]),
            Err(SelectionError::NoWeight)
        ));
        assert!(matches!(
            SelectionOracle::weighted(9, [(NodeId(0), u64::MAX), (NodeId(1), 1)]),
            Err(SelectionError::Overflow)
        ));
    }

    #[test]
    fn seed_changes_schedule() {
        let a = SelectionOracle::uniform(1, 1000).unwrap();
        let b = SelectionOracle::uniform(2, 1000).unwrap();
        let slots: Vec<_> = (0..20).map(|p| Slot::new(0, p)).collect();
        assert_ne!(a.schedule(slots.clone(), 2), b.schedule(slots, 2));
    }

    #[test]
    fn weighted_draws_follow_weights() {
        let o = SelectionOracle::weighted(5, [(NodeId(0), 1), (NodeId(1), 3)]).unwrap();
        let heavy = (0..20_000)
            .filter(|&p| o.draw_block_producer(Slot::new(0, p)) == NodeId(1))
            .count();
        // 15000 expected, sd ~61
        assert!((14_700..15_300).contains(&heavy), "{heavy}");
    }

    #[test]
    fn fitness_counts_endorsements() {
        let mut h = BlockHeader::genesis(0);
        assert_eq!(fitness(&h), 1);
        let e = Endorsement {
            endorsed_block: Digest::ZERO,
            slot: Slot::new(0, 1),
            index: 0,
            creator: NodeId(0),
        };
        h.endorsements = vec![e.clone(); 3];
        assert_eq!(fitness(&h), 4);
        h.endorsements = vec![e; 8];
        assert_eq!(fitness(&h), 9);
    }
}
