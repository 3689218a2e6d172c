//! Generators of valid block DAGs and parent-respecting orderings.

use std::collections::{HashMap, HashSet};

use blockclique_core::{
    BlockHeader, BlockId, BlockIdx, BlockStatus, BlockStore, CompatibilityState, Digest,
    Endorsement, NodeId, ProtocolParams, Slot,
};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::oracle::OracleBlock;

fn header(
    slot: Slot,
    creator: u32,
    parents: Vec<BlockId>,
    endorsements: usize,
) -> BlockHeader {
    let own = parents[slot.thread as usize];
    BlockHeader {
        slot,
        creator: NodeId(creator),
        endorsements: (0..endorsements as u32)
            .map(|index| Endorsement {
                endorsed_block: own,
                slot,
                index,
                creator: NodeId(creator + index + 1),
            })
            .collect(),
        parents,
        tx_count: 0,
        tx_root: Digest::ZERO,
        size_bits: 100,
    }
}

/// Random structurally valid DAG of up to `blocks` non-genesis blocks with
/// arbitrary (often conflicting) parent choices. Returns the headers in
/// insertion order, which is topological.
pub fn random_dag(rng: &mut impl Rng, params: ProtocolParams, blocks: usize) -> Vec<BlockHeader> {
    let t = params.thread_count;
    let mut store = BlockStore::new(params);
    let mut by_thread: Vec<Vec<BlockIdx>> = store.genesis().map(|g| vec![g]).collect();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < blocks && attempts < blocks * 50 {
        attempts += 1;
        let thread = rng.gen_range(0..t);
        let own = *by_thread[thread as usize].choose(rng).unwrap();
        let own_b = store.block(own).clone();
        let mut parents = Vec::with_capacity(t as usize);
        for t2 in 0..t {
            if t2 == thread {
                parents.push(own);
                continue;
            }
            let floor = own_b.parents.get(t2 as usize).copied();
            let candidates: Vec<BlockIdx> = by_thread[t2 as usize]
                .iter()
                .copied()
                .filter(|&c| floor.is_none_or(|f| store.is_thread_ancestor(f, c, t2)))
                .collect();
            parents.push(*candidates.choose(rng).unwrap());
        }
        let period = own_b.period() + 1 + rng.gen_range(0..2);
        let e = rng.gen_range(0..=params.endorsement_slots) as usize;
        let h = header(
            Slot::new(thread, period),
            rng.gen_range(0..8),
            parents.iter().map(|&p| store.id(p)).collect(),
            e,
        );
        if store.contains(&h.id()) {
            continue;
        }
        if let Ok(idx) = store.insert(h.clone(), None) {
            by_thread[thread as usize].push(idx);
            out.push(h);
        }
    }
    out
}

/// Blocks produced by a small honest network in which every delivery takes
/// 0 to `max_delay` slots, followed by `tail` slots of instant delivery.
/// Every node builds on its own view of the blockclique.
pub fn bounded_delay_dag(
    rng: &mut impl Rng,
    params: ProtocolParams,
    nodes: usize,
    slots: u64,
    max_delay: u64,
    tail: u64,
) -> Vec<BlockHeader> {
    let t = u64::from(params.thread_count);
    let mut store = BlockStore::new(params);
    let mut states: Vec<CompatibilityState> =
        (0..nodes).map(|_| CompatibilityState::new(&store)).collect();
    let mut seen: Vec<HashSet<BlockIdx>> = (0..nodes)
        .map(|_| store.genesis().collect())
        .collect();
    // (arrival slot, node, block) in creation order.
    let mut inbox: Vec<(u64, usize, BlockIdx)> = Vec::new();
    let mut out = Vec::new();
    let first = t; // skip period 0, held by genesis
    for s in first..first + slots + tail {
        for n in 0..nodes {
            // Deliver due blocks whose parents are known, until nothing moves.
            loop {
                let mut progressed = false;
                for &(due, node, idx) in &inbox {
                    if node != n || due > s || seen[n].contains(&idx) {
                        continue;
                    }
                    if store.block(idx).parents.iter().all(|p| seen[n].contains(p)) {
                        states[n].process_block(&store, idx).unwrap();
                        seen[n].insert(idx);
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
        }
        inbox.retain(|&(_, n, idx)| !seen[n].contains(&idx));
        let producer = rng.gen_range(0..nodes);
        let slot = Slot::from_global_index(s, params.thread_count);
        let parents = states[producer].best_parents(&store);
        let e = rng.gen_range(0..=params.endorsement_slots) as usize;
        let h = header(slot, producer as u32, parents, e);
        let idx = store
            .insert(h.clone(), None)
            .expect("honest block is structurally valid");
        out.push(h);
        for n in 0..nodes {
            let delay = if n == producer || s >= first + slots {
                0
            } else {
                rng.gen_range(0..=max_delay)
            };
            inbox.push((s + delay, n, idx));
        }
        // The producer sees its own block at once.
        states[producer].process_block(&store, idx).unwrap();
        seen[producer].insert(idx);
        inbox.retain(|&(_, n, i)| !(n == producer && i == idx));
    }
    out
}

/// A uniformly random topological order of `headers` (parents first).
pub fn random_topological_order(
    rng: &mut impl Rng,
    headers: &[BlockHeader],
    genesis: &[BlockId],
) -> Vec<BlockHeader> {
    let ids: HashMap<BlockId, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.id(), i))
        .collect();
    let known: HashSet<BlockId> = genesis.iter().copied().collect();
    let mut waiting: Vec<usize> = headers
        .iter()
        .map(|h| {
            let mut ps: Vec<&BlockId> = h.parents.iter().filter(|p| !known.contains(p)).collect();
            ps.sort();
            ps.dedup();
            ps.len()
        })
        .collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); headers.len()];
    for (i, h) in headers.iter().enumerate() {
        let mut ps: Vec<&BlockId> = h.parents.iter().filter(|p| !known.contains(p)).collect();
        ps.sort();
        ps.dedup();
        for p in ps {
            children[ids[p]].push(i);
        }
    }
    let mut ready: Vec<usize> = (0..headers.len()).filter(|&i| waiting[i] == 0).collect();
    let mut out = Vec::with_capacity(headers.len());
    while !ready.is_empty() {
        let k = rng.gen_range(0..ready.len());
        let i = ready.swap_remove(k);
        out.push(headers[i].clone());
        for &c in &children[i] {
            waiting[c] -= 1;
            if waiting[c] == 0 {
                ready.push(c);
            }
        }
    }
    out
}

/// Converts a stored DAG to the oracle's representation; genesis first, then
/// `headers` in order.
pub fn to_oracle(store: &BlockStore, headers: &[BlockHeader]) -> Vec<OracleBlock> {
    let mut order: Vec<BlockId> = store.genesis_ids();
    order.extend(headers.iter().map(|h| h.id()));
    let pos: HashMap<BlockId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    order
        .iter()
        .map(|id| {
            let h = store.header(id).expect("stored");
            OracleBlock {
                id: id.0,
                thread: h.slot.thread,
                period: h.slot.period,
                parents: h.parents.iter().map(|p| pos[p]).collect(),
                fitness: 1 + h.endorsements.len() as u64,
            }
        })
        .collect()
}

/// Final outcome of feeding `headers` in order into a fresh engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub blockclique: Vec<BlockId>,
    pub finals: Vec<BlockId>,
    pub stale: Vec<BlockId>,
}

pub fn run_engine(params: ProtocolParams, headers: &[BlockHeader]) -> Outcome {
    let mut store = BlockStore::new(params);
    let mut state = CompatibilityState::new(&store);
    for h in headers {
        let idx = store.insert(h.clone(), None).expect("valid block");
        state.process_block(&store, idx).expect("consensus");
    }
    let collect = |s: BlockStatus| {
        let mut v: Vec<BlockId> = store
            .iter()
            .filter(|(i, _)| state.status(*i) == Some(s))
            .map(|(_, b)| b.id)
            .collect();
        v.sort();
        v
    };
    Outcome {
        blockclique: state.blockclique(&store).members,
        finals: collect(BlockStatus::Final),
        stale: collect(BlockStatus::Stale),
    }
}
