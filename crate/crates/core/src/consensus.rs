//! Incremental compatibility graph, maximal cliques, blockclique selection
//! and final/stale settlement.
//!
//! Two blocks are incompatible when some ancestor-or-self of one and some
//! ancestor-or-self of the other are thread- or grandpa-incompatible. The
//! state keeps this relation as explicit edges between active blocks: a new
//! block conflicts with `y` if it conflicts with `y` directly, if one of its
//! parents conflicts with `y`, or if it conflicts with a parent of `y`.
//! Walking `y` in admission order makes the last clause available when
//! needed.

use std::cmp::Ordering;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::BlockId;
use crate::params::ProtocolParams;
use crate::store::{BlockIdx, BlockStore};

pub const DEFAULT_CLIQUE_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockStatus {
    Active,
    Final,
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaleReason {
    StaleParent,
    IncompatibleParents,
    ConflictsWithFinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Active,
    Stale(StaleReason),
    AlreadyProcessed(BlockStatus),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("block {block} has unprocessed parent {parent}")]
    UnprocessedParent { block: BlockId, parent: BlockId },
    #[error("{count} maximal cliques exceed the cap of {cap}")]
    CliqueExplosion { count: usize, cap: usize },
}

/// Blocks settled by one call to [`CompatibilityState::update_finality`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settlement {
    pub finalized: Vec<BlockIdx>,
    pub staled: Vec<BlockIdx>,
}

impl Settlement {
    pub fn is_empty(&self) -> bool {
        self.finalized.is_empty() && self.staled.is_empty()
    }

    fn extend(&mut self, other: Settlement) {
        self.finalized.extend(other.finalized);
        self.staled.extend(other.staled);
    }
}

/// A maximal clique with its members' ids in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliqueView {
    pub members: Vec<BlockId>,
    pub fitness: u64,
}

/// True iff both blocks are non-genesis, in the same thread, with the same
/// own-thread parent.
pub fn thread_incompatible(store: &BlockStore, a: BlockIdx, b: BlockIdx) -> bool {
    let (ba, bb) = (store.block(a), store.block(b));
    match (ba.own_parent(), bb.own_parent()) {
        (Some(pa), Some(pb)) => ba.thread() == bb.thread() && pa == pb,
        _ => false,
    }
}

/// True iff neither block's own-thread parent lies on the other's parent
/// chain in that thread.
pub fn grandpa_incompatible(store: &BlockStore, a: BlockIdx, b: BlockIdx) -> bool {
    let (ba, bb) = (store.block(a), store.block(b));
    if ba.is_genesis() || bb.is_genesis() {
        return false;
    }
    let (ta, tb) = (ba.thread(), bb.thread());
    !store.is_thread_ancestor(ba.parents[ta as usize], bb.parents[ta as usize], ta)
        && !store.is_thread_ancestor(bb.parents[tb as usize], ba.parents[tb as usize], tb)
}

pub fn directly_incompatible(store: &BlockStore, a: BlockIdx, b: BlockIdx) -> bool {
    thread_incompatible(store, a, b) || grandpa_incompatible(store, a, b)
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct ActiveBlock {
    idx: BlockIdx,
    fitness: u64,
    /// Local ids of active parents.
    parents: Vec<u32>,
    incompat: FixedBitSet,
    ancestors: FixedBitSet,
    descendants: FixedBitSet,
}

/// Consensus state of one node over a shared [`BlockStore`].
///
/// Accessors describing cliques reflect the last call to
/// [`update_finality`](Self::update_finality).
#[derive(Debug, Clone)]
pub struct CompatibilityState {
    params: ProtocolParams,
    clique_cap: usize,
    status: Vec<Option<BlockStatus>>,
    local: Vec<u32>,
    arena: Vec<Option<ActiveBlock>>,
    free: Vec<u32>,
    bits: usize,
    /// Active local ids in admission order, which is topological.
    order: Vec<u32>,
    non_unit: usize,
    cliques: Vec<FixedBitSet>,
    clique_fitness: Vec<u64>,
    blockclique: usize,
    dirty: bool,
    final_chain: Vec<Vec<BlockIdx>>,
    final_order: Vec<BlockIdx>,
    stale_order: Vec<BlockIdx>,
}

impl CompatibilityState {
    /// Fresh state whose active set holds the genesis blocks of `store`.
    pub fn new(store: &BlockStore) -> Self {
        Self::with_clique_cap(store, DEFAULT_CLIQUE_CAP)
    }

    pub fn with_clique_cap(store: &BlockStore, clique_cap: usize) -> Self {
        let params = *store.params();
        let mut state = CompatibilityState {
            params,
            clique_cap,
            status: Vec::new(),
            local: Vec::new(),
            arena: Vec::new(),
            free: Vec::new(),
            bits: 64,
            order: Vec::new(),
            non_unit: 0,
            cliques: Vec::new(),
            clique_fitness: Vec::new(),
            blockclique: 0,
            dirty: true,
            final_chain: vec![Vec::new(); params.thread_count as usize],
            final_order: Vec::new(),
            stale_order: Vec::new(),
        };
        for g in store.genesis() {
            state
                .extend(store, g)
                .expect("genesis has no parents");
        }
        state
            .rebuild_cliques(store)
            .expect("genesis forms one clique");
        state
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn clique_cap(&self) -> usize {
        self.clique_cap
    }

    pub fn status(&self, idx: BlockIdx) -> Option<BlockStatus> {
        self.status.get(idx.index()).copied().flatten()
    }

    pub fn status_of(&self, store: &BlockStore, id: &BlockId) -> Option<BlockStatus> {
        store.lookup(id).and_then(|i| self.status(i))
    }

    /// Final blocks in settlement order.
    pub fn final_blocks(&self) -> &[BlockIdx] {
        &self.final_order
    }

    /// Stale blocks in settlement order.
    pub fn stale_blocks(&self) -> &[BlockIdx] {
        &self.stale_order
    }

    /// Active blocks in admission order.
    pub fn active_blocks(&self) -> Vec<BlockIdx> {
        self.order.iter().map(|&l| self.node(l).idx).collect()
    }

    pub fn active_count(&self) -> usize {
        self.order.len()
    }

    pub fn clique_count(&self) -> usize {
        self.cliques.len()
    }

    /// Number of maximal cliques containing `idx` (0 unless active).
    pub fn cliques_containing(&self, idx: BlockIdx) -> usize {
        match self.local_of(idx) {
            Some(l) => self
                .cliques
                .iter()
                .filter(|c| c.contains(l as usize))
                .count(),
            None => 0,
        }
    }

    /// True iff both blocks are active and linked by an incompatibility edge.
    pub fn incompatible(&self, a: BlockIdx, b: BlockIdx) -> bool {
        match (self.local_of(a), self.local_of(b)) {
            (Some(la), Some(lb)) => self.node(la).incompat.contains(lb as usize),
            _ => false,
        }
    }

    /// Maximal cliques in canonical order (ascending member id lists).
    pub fn cliques(&self, store: &BlockStore) -> Vec<CliqueView> {
        let mut out: Vec<CliqueView> = (0..self.cliques.len())
            .map(|c| self.view(store, c))
            .collect();
        out.sort_by(|a, b| a.members.cmp(&b.members));
        out
    }

    pub fn blockclique(&self, store: &BlockStore) -> CliqueView {
        self.view(store, self.blockclique)
    }

    pub fn blockclique_fitness(&self) -> u64 {
        self.clique_fitness[self.blockclique]
    }

    fn view(&self, store: &BlockStore, c: usize) -> CliqueView {
        let mut members: Vec<BlockId> = self.cliques[c]
            .ones()
            .map(|l| store.id(self.node(l as u32).idx))
            .collect();
        members.sort();
        CliqueView {
            members,
            fitness: self.clique_fitness[c],
        }
    }

    /// Parents for a new block: per thread, the blockclique member with the
    /// greatest period, or the latest final block when the blockclique has
    /// none in that thread.
    pub fn best_parents(&self, store: &BlockStore) -> Vec<BlockId> {
        let t = self.params.thread_count as usize;
        let mut best: Vec<Option<BlockIdx>> = vec![None; t];
        for l in self.cliques[self.blockclique].ones() {
            let idx = self.node(l as u32).idx;
            let b = store.block(idx);
            let slot = &mut best[b.thread() as usize];
            if slot.is_none_or(|s| store.block(s).period() < b.period()) {
                *slot = Some(idx);
            }
        }
        best.into_iter()
            .enumerate()
            .map(|(thread, b)| {
                let idx = b
                    .or_else(|| self.final_chain[thread].last().copied())
                    .expect("every thread has a genesis block");
                store.id(idx)
            })
            .collect()
    }

    /// Latest final block of `thread`, if any.
    pub fn last_final(&self, thread: u32) -> Option<BlockIdx> {
        self.final_chain[thread as usize].last().copied()
    }

    fn local_of(&self, idx: BlockIdx) -> Option<u32> {
        match self.local.get(idx.index()) {
            Some(&l) if l != NONE => Some(l),
            _ => None,
        }
    }

    fn node(&self, l: u32) -> &ActiveBlock {
        self.arena[l as usize].as_ref().expect("active local id")
    }

    fn node_mut(&mut self, l: u32) -> &mut ActiveBlock {
        self.arena[l as usize].as_mut().expect("active local id")
    }

    /// Adds a stored block to the graph. Parents must have been processed.
    pub fn extend(
        &mut self,
        store: &BlockStore,
        idx: BlockIdx,
    ) -> Result<Admission, ConsensusError> {
        if let Some(s) = self.status(idx) {
            return Ok(Admission::AlreadyProcessed(s));
        }
        if self.status.len() < store.len() {
            self.status.resize(store.len(), None);
            self.local.resize(store.len(), NONE);
        }
        let block = store.block(idx);
        let mut stale_parent = false;
        for &p in &block.parents {
            match self.status(p) {
                None => {
                    return Err(ConsensusError::UnprocessedParent {
                        block: block.id,
                        parent: store.id(p),
                    })
                }
                Some(BlockStatus::Stale) => stale_parent = true,
                _ => {}
            }
        }
        if stale_parent {
            return Ok(self.reject(idx, StaleReason::StaleParent));
        }
        let parents: Vec<u32> = {
            let mut v: Vec<u32> = block
                .parents
                .iter()
                .filter_map(|&p| self.local_of(p))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for (i, &a) in parents.iter().enumerate() {
            if parents[i + 1..]
                .iter()
                .any(|&b| self.node(a).incompat.contains(b as usize))
            {
                return Ok(self.reject(idx, StaleReason::IncompatibleParents));
            }
        }
        if self.conflicts_with_final(store, idx) {
            return Ok(self.reject(idx, StaleReason::ConflictsWithFinal));
        }

        let l = self.allocate();
        let mut ancestors = FixedBitSet::with_capacity(self.bits);
        for &p in &parents {
            ancestors.union_with(&self.node(p).ancestors);
            ancestors.insert(p as usize);
        }
        let mut incompat = FixedBitSet::with_capacity(self.bits);
        for &y in &self.order {
            let ny = self.node(y);
            let edge = parents
                .iter()
                .any(|&p| self.node(p).incompat.contains(y as usize))
                || ny.parents.iter().any(|&q| incompat.contains(q as usize))
                || directly_incompatible(store, idx, ny.idx);
            if edge {
                incompat.insert(y as usize);
            }
        }
        if !incompat.is_disjoint(&ancestors) {
            self.free.push(l);
            return Ok(self.reject(idx, StaleReason::IncompatibleParents));
        }
        for y in incompat.ones() {
            self.node_mut(y as u32).incompat.insert(l as usize);
        }
        for a in ancestors.ones() {
            self.node_mut(a as u32).descendants.insert(l as usize);
        }
        let fitness = block.fitness;
        if fitness != 1 {
            self.non_unit += 1;
        }
        self.arena[l as usize] = Some(ActiveBlock {
            idx,
            fitness,
            parents,
            incompat,
            ancestors,
            descendants: FixedBitSet::with_capacity(self.bits),
        });
        self.local[idx.index()] = l;
        self.order.push(l);
        self.status[idx.index()] = Some(BlockStatus::Active);
        self.dirty = true;
        Ok(Admission::Active)
    }

    fn reject(&mut self, idx: BlockIdx, reason: StaleReason) -> Admission {
        self.status[idx.index()] = Some(BlockStatus::Stale);
        self.stale_order.push(idx);
        Admission::Stale(reason)
    }

    fn allocate(&mut self) -> u32 {
        if let Some(l) = self.free.pop() {
            return l;
        }
        let l = self.arena.len() as u32;
        self.arena.push(None);
        if self.arena.len() > self.bits {
            self.bits *= 2;
            let bits = self.bits;
            for n in self.arena.iter_mut().flatten() {
                n.incompat.grow(bits);
                n.ancestors.grow(bits);
                n.descendants.grow(bits);
            }
            for c in &mut self.cliques {
                c.grow(bits);
            }
        }
        l
    }

    /// A final block can only conflict with `idx` if it is newer than
    /// `idx`'s parent in the final block's thread.
    fn conflicts_with_final(&self, store: &BlockStore, idx: BlockIdx) -> bool {
        let block = store.block(idx);
        block.parents.iter().enumerate().any(|(thread, &p)| {
            let chain = &self.final_chain[thread];
            let period = store.block(p).period();
            let start = chain.partition_point(|&f| store.block(f).period() <= period);
            chain[start..]
                .iter()
                .any(|&f| directly_incompatible(store, idx, f))
        })
    }

    /// Extends the graph with `idx` and settles blocks.
    pub fn process_block(
        &mut self,
        store: &BlockStore,
        idx: BlockIdx,
    ) -> Result<(Admission, Settlement), ConsensusError> {
        let admission = self.extend(store, idx)?;
        let mut settlement = self.update_finality(store)?;
        if let Admission::Stale(_) = admission {
            settlement.staled.insert(0, idx);
        }
        Ok((admission, settlement))
    }

    /// Recomputes cliques and the blockclique, then repeatedly settles and
    /// removes final and stale blocks until nothing changes.
    pub fn update_finality(&mut self, store: &BlockStore) -> Result<Settlement, ConsensusError> {
        let mut total = Settlement::default();
        loop {
            if self.dirty {
                self.rebuild_cliques(store)?;
            }
            let round = self.settle_round();
            if round.is_empty() {
                return Ok(total);
            }
            self.remove_settled(store, &round);
            total.extend(round);
        }
    }

    fn settle_round(&self) -> Settlement {
        let threshold = self.params.finality_threshold();
        let best = self.clique_fitness[self.blockclique];
        let n = self.cliques.len();
        let mut round = Settlement::default();
        for &l in &self.order {
            let mut containing = 0;
            let mut max_fitness = 0;
            for (c, set) in self.cliques.iter().enumerate() {
                if set.contains(l as usize) {
                    containing += 1;
                    max_fitness = max_fitness.max(self.clique_fitness[c]);
                }
            }
            if max_fitness + threshold < best {
                round.staled.push(self.node(l).idx);
            } else if containing == n
                && self
                    .cliques
                    .iter()
                    .any(|c| self.descendant_fitness(l, c) > threshold)
            {
                round.finalized.push(self.node(l).idx);
            }
        }
        round
    }

    fn descendant_fitness(&self, l: u32, clique: &FixedBitSet) -> u64 {
        let desc = &self.node(l).descendants;
        if self.non_unit == 0 {
            desc.intersection_count(clique) as u64
        } else {
            desc.intersection(clique)
                .map(|d| self.node(d as u32).fitness)
                .sum()
        }
    }

    fn remove_settled(&mut self, store: &BlockStore, round: &Settlement) {
        let mut finals = round.finalized.clone();
        finals.sort_by_key(|&i| store.block(i).period());
        for &idx in &finals {
            self.final_chain[store.block(idx).thread() as usize].push(idx);
            self.status[idx.index()] = Some(BlockStatus::Final);
        }
        self.final_order.extend(&round.finalized);
        for &idx in &round.staled {
            self.status[idx.index()] = Some(BlockStatus::Stale);
        }
        self.stale_order.extend(&round.staled);

        let mut removed = FixedBitSet::with_capacity(self.bits);
        for &idx in round.finalized.iter().chain(&round.staled) {
            let l = self.local[idx.index()];
            self.local[idx.index()] = NONE;
            removed.insert(l as usize);
            let node = self.arena[l as usize].take().expect("active");
            if node.fitness != 1 {
                self.non_unit -= 1;
            }
            self.free.push(l);
        }
        self.order.retain(|&l| !removed.contains(l as usize));
        for &l in &self.order {
            let node = self.arena[l as usize].as_mut().expect("active");
            node.incompat.difference_with(&removed);
            node.ancestors.difference_with(&removed);
            node.descendants.difference_with(&removed);
            node.parents.retain(|&p| !removed.contains(p as usize));
        }
        self.dirty = true;
    }

    fn rebuild_cliques(&mut self, store: &BlockStore) -> Result<(), ConsensusError> {
        let mut conflicted = FixedBitSet::with_capacity(self.bits);
        let mut free = FixedBitSet::with_capacity(self.bits);
        for &l in &self.order {
            if self.node(l).incompat.is_clear() {
                free.insert(l as usize);
            } else {
                conflicted.insert(l as usize);
            }
        }
        let mut cliques = Vec::new();
        if conflicted.is_clear() {
            cliques.push(free);
        } else {
            let x = FixedBitSet::with_capacity(self.bits);
            let mut r = Vec::new();
            self.bron_kerbosch(&mut r, conflicted, x, &mut cliques)?;
            for c in &mut cliques {
                c.union_with(&free);
            }
        }
        self.clique_fitness = cliques
            .iter()
            .map(|c| c.ones().map(|l| self.node(l as u32).fitness).sum())
            .collect();
        self.cliques = cliques;
        self.blockclique = (0..self.cliques.len())
            .reduce(|a, b| match self.compare_cliques(store, a, b) {
                Ordering::Greater => b,
                _ => a,
            })
            .expect("at least one clique");
        self.dirty = false;
        Ok(())
    }

    /// Maximal independent sets of the incompatibility graph restricted to
    /// `p`, i.e. maximal cliques of the compatibility graph.
    fn bron_kerbosch(
        &self,
        r: &mut Vec<u32>,
        mut p: FixedBitSet,
        mut x: FixedBitSet,
        out: &mut Vec<FixedBitSet>,
    ) -> Result<(), ConsensusError> {
        if p.is_clear() {
            if x.is_clear() {
                let mut c = FixedBitSet::with_capacity(self.bits);
                c.extend(r.iter().map(|&l| l as usize));
                out.push(c);
                if out.len() > self.clique_cap {
                    return Err(ConsensusError::CliqueExplosion {
                        count: out.len(),
                        cap: self.clique_cap,
                    });
                }
            }
            return Ok(());
        }
        // Pivot with the fewest conflicts inside P keeps the branching low.
        let pivot = p
            .union(&x)
            .min_by_key(|&u| p.intersection_count(&self.node(u as u32).incompat))
            .expect("P non-empty") as u32;
        let mut branch = self.node(pivot).incompat.intersection(&p).collect::<Vec<_>>();
        if p.contains(pivot as usize) {
            branch.push(pivot as usize);
        }
        for v in branch {
            let inc = &self.node(v as u32).incompat;
            let mut np = p.clone();
            np.difference_with(inc);
            np.set(v, false);
            let mut nx = x.clone();
            nx.difference_with(inc);
            nx.set(v, false);
            r.push(v as u32);
            self.bron_kerbosch(r, np, nx, out)?;
            r.pop();
            p.set(v, false);
            x.insert(v);
        }
        Ok(())
    }

    /// `Less` when clique `a` is preferred: higher fitness, then smaller sum
    /// of ids as big-endian integers, then smaller sorted id list.
    fn compare_cliques(&self, store: &BlockStore, a: usize, b: usize) -> Ordering {
        self.clique_fitness[b]
            .cmp(&self.clique_fitness[a])
            .then_with(|| {
                let ids = |c: usize| {
                    let mut v: Vec<BlockId> = self.cliques[c]
                        .ones()
                        .map(|l| store.id(self.node(l as u32).idx))
                        .collect();
                    v.sort();
                    v
                };
                let (ia, ib) = (ids(a), ids(b));
                id_sum(&ia).cmp(&id_sum(&ib)).then_with(|| ia.cmp(&ib))
            })
    }
}

/// Sum of ids read as unsigned big-endian integers.
pub fn id_sum(ids: &[BlockId]) -> BigUint {
    ids.iter()
        .map(|id| BigUint::from_bytes_be(id.as_bytes()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BlockHeader, Digest, NodeId, Slot};

    fn setup(t: u32, f: u32) -> (BlockStore, CompatibilityState) {
        let store = BlockStore::new(ProtocolParams::new(t, 16.0, 1_000_000, f, 0).unwrap());
        let state = CompatibilityState::new(&store);
        (store, state)
    }

    fn add(
        store: &mut BlockStore,
        state: &mut CompatibilityState,
        thread: u32,
        period: u64,
        parents: &[BlockIdx],
        creator: u32,
    ) -> (BlockIdx, Admission) {
        let header = BlockHeader {
            slot: Slot::new(thread, period),
            creator: NodeId(creator),
            parents: parents.iter().map(|&p| store.id(p)).collect(),
            endorsements: vec![],
            tx_count: 0,
            tx_root: Digest::ZERO,
            size_bits: 100,
        };
        let idx = store.insert(header, None).unwrap();
        let (admission, _) = state.process_block(store, idx).unwrap();
        (idx, admission)
    }

    #[test]
    fn genesis_only_state() {
        let (store, state) = setup(4, 3);
        assert_eq!(state.clique_count(), 1);
        assert_eq!(state.best_parents(&store), store.genesis_ids());
        assert_eq!(state.blockclique(&store).fitness, 4);
    }

    #[test]
    fn first_block_joins_the_single_clique() {
        let (mut store, mut state) = setup(2, 3);
        let (a, adm) = add(&mut store, &mut state, 0, 1, &[BlockIdx(0), BlockIdx(1)], 0);
        assert_eq!(adm, Admission::Active);
        assert_eq!(state.clique_count(), 1);
        assert_eq!(state.blockclique(&store).members.len(), 3);
        assert_eq!(
            state.best_parents(&store),
            vec![store.id(a), store.id(BlockIdx(1))]
        );
    }

    #[test]
    fn siblings_form_separate_cliques() {
        let (mut store, mut state) = setup(1, 10);
        let g = BlockIdx(0);
        let kids: Vec<_> = (1..=4)
            .map(|p| add(&mut store, &mut state, 0, p, &[g], 0).0)
            .collect();
        assert_eq!(state.clique_count(), 4);
        for (i, &a) in kids.iter().enumerate() {
            for &b in &kids[i + 1..] {
                assert!(thread_incompatible(&store, a, b));
                assert!(state.incompatible(a, b));
            }
        }
        assert!(!thread_incompatible(&store, g, kids[0]));
    }

    #[test]
    fn conflicts_are_inherited() {
        let (mut store, mut state) = setup(1, 10);
        let g = BlockIdx(0);
        let a = add(&mut store, &mut state, 0, 1, &[g], 0).0;
        let b = add(&mut store, &mut state, 0, 2, &[g], 0).0;
        let a2 = add(&mut store, &mut state, 0, 3, &[a], 0).0;
        assert!(!directly_incompatible(&store, a2, b));
        assert!(state.incompatible(a2, b));
        assert_eq!(state.clique_count(), 2);
    }

    #[test]
    fn grandpa_conflict_and_incompatible_parents() {
        let (mut store, mut state) = setup(2, 10);
        let (g0, g1) = (BlockIdx(0), BlockIdx(1));
        let x0 = add(&mut store, &mut state, 0, 1, &[g0, g1], 0).0;
        let y1 = add(&mut store, &mut state, 1, 1, &[g0, g1], 0).0;
        let b0 = add(&mut store, &mut state, 0, 2, &[x0, g1], 0).0;
        let b1 = add(&mut store, &mut state, 1, 2, &[g0, y1], 0).0;
        assert!(!grandpa_incompatible(&store, x0, y1));
        assert!(grandpa_incompatible(&store, b0, b1));
        assert!(grandpa_incompatible(&store, b1, b0));
        assert!(!thread_incompatible(&store, b0, b1));
        assert_eq!(state.clique_count(), 2);
        let (_, adm) = add(&mut store, &mut state, 0, 3, &[b0, b1], 0);
        assert_eq!(adm, Admission::Stale(StaleReason::IncompatibleParents));
    }

    #[test]
    fn losing_fork_goes_stale_and_winner_final() {
        // E = 0, F = 3: the fork falls 4 blocks behind.
        let (mut store, mut state) = setup(1, 3);
        let g = BlockIdx(0);
        let loser = add(&mut store, &mut state, 0, 1, &[g], 9).0;
        let mut tip = add(&mut store, &mut state, 0, 2, &[g], 0).0;
        let mut main = vec![tip];
        for p in 3..=5 {
            tip = add(&mut store, &mut state, 0, p, &[tip], 0).0;
            main.push(tip);
            assert_eq!(state.status(loser), Some(BlockStatus::Active), "p={p}");
        }
        // Main has 4 blocks vs 1: gap 3 = threshold, no staling yet.
        tip = add(&mut store, &mut state, 0, 6, &[tip], 0).0;
        main.push(tip);
        assert_eq!(state.status(loser), Some(BlockStatus::Stale));
        assert_eq!(state.status(main[0]), Some(BlockStatus::Final));
        assert_eq!(state.status(g), Some(BlockStatus::Final));
        let (late, adm) = add(&mut store, &mut state, 0, 7, &[loser], 9);
        assert_eq!(adm, Admission::Stale(StaleReason::StaleParent));
        assert_eq!(state.status(late), Some(BlockStatus::Stale));
    }

    #[test]
    fn block_conflicting_with_final_is_stale() {
        let (mut store, mut state) = setup(1, 1);
        let g = BlockIdx(0);
        let a = add(&mut store, &mut state, 0, 1, &[g], 0).0;
        let b = add(&mut store, &mut state, 0, 2, &[a], 0).0;
        add(&mut store, &mut state, 0, 3, &[b], 0);
        assert_eq!(state.status(a), Some(BlockStatus::Final));
        let (_, adm) = add(&mut store, &mut state, 0, 4, &[g], 5);
        assert_eq!(adm, Admission::Stale(StaleReason::ConflictsWithFinal));
    }

    #[test]
    fn honest_chain_finality_depth() {
        // A block is final once more than F blocks sit above it.
        let f = 5;
        let (mut store, mut state) = setup(1, f);
        let mut chain = vec![BlockIdx(0)];
        for p in 1..30u64 {
            let tip = add(&mut store, &mut state, 0, p, &[*chain.last().unwrap()], 0).0;
            chain.push(tip);
            for (d, &b) in chain.iter().rev().enumerate() {
                let expect = if d > f as usize {
                    BlockStatus::Final
                } else {
                    BlockStatus::Active
                };
                assert_eq!(state.status(b), Some(expect), "p={p} depth={d}");
            }
        }
    }

    #[test]
    fn tie_break_prefers_smaller_id_sum() {
        let (mut store, mut state) = setup(1, 10);
        let g = BlockIdx(0);
        let a = add(&mut store, &mut state, 0, 1, &[g], 0).0;
        let b = add(&mut store, &mut state, 0, 1, &[g], 1).0;
        let winner = if id_sum(&[store.id(a)]) < id_sum(&[store.id(b)]) {
            a
        } else {
            b
        };
        assert!(state.blockclique(&store).members.contains(&store.id(winner)));
    }

    #[test]
    fn clique_cap_triggers_explosion() {
        let store = BlockStore::new(ProtocolParams::new(1, 16.0, 1_000_000, 50, 0).unwrap());
        let mut store = store;
        let mut state = CompatibilityState::with_clique_cap(&store, 3);
        let g = BlockIdx(0);
        let mut last = Ok(Settlement::default());
        for p in 1..=4 {
            let header = BlockHeader {
                slot: Slot::new(0, p),
                creator: NodeId(0),
                parents: vec![store.id(g)],
                endorsements: vec![],
                tx_count: 0,
                tx_root: Digest::ZERO,
                size_bits: 1,
            };
            let idx = store.insert(header, None).unwrap();
            state.extend(&store, idx).unwrap();
            last = state.update_finality(&store);
        }
        assert_eq!(
            last,
            Err(ConsensusError::CliqueExplosion { count: 4, cap: 3 })
        );
    }

    #[test]
    fn unprocessed_parent_is_an_error() {
        let (mut store, mut state) = setup(1, 3);
        let g = BlockIdx(0);
        let mk = |store: &BlockStore, p: u64, parent: BlockIdx| BlockHeader {
            slot: Slot::new(0, p),
            creator: NodeId(0),
            parents: vec![store.id(parent)],
            endorsements: vec![],
            tx_count: 0,
            tx_root: Digest::ZERO,
            size_bits: 1,
        };
        let a = store.insert(mk(&store, 1, g), None).unwrap();
        let b = store.insert(mk(&store, 2, a), None).unwrap();
        assert!(matches!(
            state.extend(&store, b),
            Err(ConsensusError::UnprocessedParent { .. })
        ));
        state.extend(&store, a).unwrap();
        assert_eq!(state.extend(&store, b).unwrap(), Admission::Active);
        assert_eq!(
            state.extend(&store, b).unwrap(),
            Admission::AlreadyProcessed(BlockStatus::Active)
        );
    }
}
