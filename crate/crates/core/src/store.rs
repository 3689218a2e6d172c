//! Single-owner block store with per-thread ancestry indexing, and the
//! waiting pool for blocks whose parents have not arrived yet.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::chain::{Block, BlockHeader, BlockId};
use crate::params::ProtocolParams;
use crate::selection::{fitness, SelectionOracle};
use crate::validation::{self, ValidationError};

/// Dense handle of a stored block. Only meaningful for the store that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIdx(pub u32);

impl BlockIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown block {0}")]
pub struct UnknownBlock(pub BlockId);

#[derive(Debug, Clone)]
pub struct StoredBlock {
    pub id: BlockId,
    pub header: BlockHeader,
    pub parents: Vec<BlockIdx>,
    pub fitness: u64,
    /// Number of own-thread ancestors (0 for genesis).
    pub depth: u32,
    /// `jumps[k]` is the own-thread ancestor `2^k` levels up.
    jumps: Vec<BlockIdx>,
}

impl StoredBlock {
    pub fn thread(&self) -> u32 {
        self.header.slot.thread
    }

    pub fn period(&self) -> u64 {
        self.header.slot.period
    }

    pub fn is_genesis(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn own_parent(&self) -> Option<BlockIdx> {
        self.parents.get(self.thread() as usize).copied()
    }
}

/// Append-only store of structurally valid headers.
///
/// Blocks are only admitted once all their parents are stored, so the stored
/// graph is acyclic by construction.
#[derive(Debug, Clone)]
pub struct BlockStore {
    params: ProtocolParams,
    blocks: Vec<StoredBlock>,
    index: HashMap<BlockId, BlockIdx>,
}

impl BlockStore {
    /// Creates a store holding the T genesis blocks.
    pub fn new(params: ProtocolParams) -> Self {
        let mut store = BlockStore {
            params,
            blocks: Vec::new(),
            index: HashMap::new(),
        };
        for thread in 0..params.thread_count {
            store.push(BlockHeader::genesis(thread), Vec::new());
        }
        store
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn genesis(&self) -> impl Iterator<Item = BlockIdx> {
        (0..self.params.thread_count).map(BlockIdx)
    }

    pub fn genesis_ids(&self) -> Vec<BlockId> {
        self.genesis().map(|g| self.block(g).id).collect()
    }

    pub fn lookup(&self, id: &BlockId) -> Option<BlockIdx> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.index.contains_key(id)
    }

    pub fn header(&self, id: &BlockId) -> Option<&BlockHeader> {
        self.lookup(id).map(|i| &self.block(i).header)
    }

    pub fn block(&self, idx: BlockIdx) -> &StoredBlock {
        &self.blocks[idx.index()]
    }

    pub fn id(&self, idx: BlockIdx) -> BlockId {
        self.blocks[idx.index()].id
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockIdx, &StoredBlock)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (BlockIdx(i as u32), b))
    }

    /// Validates and stores a header. Storing a known header is a no-op.
    pub fn insert(
        &mut self,
        header: BlockHeader,
        oracle: Option<&SelectionOracle>,
    ) -> Result<BlockIdx, ValidationError> {
        let id = header.id();
        if let Some(idx) = self.lookup(&id) {
            return Ok(idx);
        }
        validation::validate_header(&header, self, oracle)?;
        Ok(self.insert_validated(header, id))
    }

    /// Validates a full block, including its transactions, and stores its header.
    pub fn insert_block(
        &mut self,
        block: &Block,
        oracle: Option<&SelectionOracle>,
    ) -> Result<BlockIdx, ValidationError> {
        let id = block.id();
        if let Some(idx) = self.lookup(&id) {
            return Ok(idx);
        }
        validation::validate_block_structure(block, self, oracle)?;
        Ok(self.insert_validated(block.header.clone(), id))
    }

    fn insert_validated(&mut self, header: BlockHeader, id: BlockId) -> BlockIdx {
        let parents = header
            .parents
            .iter()
            .map(|p| self.lookup(p).expect("validated parent"))
            .collect();
        let idx = self.push(header, parents);
        debug_assert_eq!(self.id(idx), id);
        idx
    }

    fn push(&mut self, header: BlockHeader, parents: Vec<BlockIdx>) -> BlockIdx {
        let idx = BlockIdx(self.blocks.len() as u32);
        let id = header.id();
        let (depth, jumps) = match parents.get(header.slot.thread as usize) {
            None => (0, Vec::new()),
            Some(&own) => {
                let mut jumps = vec![own];
                let mut k = 0;
                while let Some(&next) = self.block(jumps[k]).jumps.get(k) {
                    jumps.push(next);
                    k += 1;
                }
                (self.block(own).depth + 1, jumps)
            }
        };
        self.blocks.push(StoredBlock {
            id,
            fitness: fitness(&header),
            header,
            parents,
            depth,
            jumps,
        });
        self.index.insert(id, idx);
        idx
    }

    /// Own-thread ancestor of `b` at `depth`, if `depth` does not exceed b's.
    fn ancestor_at_depth(&self, mut b: BlockIdx, depth: u32) -> Option<BlockIdx> {
        let mut gap = self.block(b).depth.checked_sub(depth)?;
        let mut k = 0;
        while gap > 0 {
            if gap & 1 == 1 {
                b = self.block(b).jumps[k];
            }
            gap >>= 1;
            k += 1;
        }
        Some(b)
    }

    /// True iff `a == b` or `a` is an ancestor of `b` through own-thread
    /// parent links of thread `thread`.
    pub fn is_thread_ancestor(&self, a: BlockIdx, b: BlockIdx, thread: u32) -> bool {
        if a == b {
            return true;
        }
        let (ba, bb) = (self.block(a), self.block(b));
        if ba.thread() != thread || bb.thread() != thread || ba.depth >= bb.depth {
            return false;
        }
        self.ancestor_at_depth(b, ba.depth) == Some(a)
    }

    /// Path predicate over block ids.
    pub fn path_in_thread(
        &self,
        a: &BlockId,
        b: &BlockId,
        thread: u32,
    ) -> Result<bool, UnknownBlock> {
        let ia = self.lookup(a).ok_or(UnknownBlock(*a))?;
        let ib = self.lookup(b).ok_or(UnknownBlock(*b))?;
        Ok(self.is_thread_ancestor(ia, ib, thread))
    }
}

/// Bounded buffer of blocks waiting for missing parents.
///
/// Entries are released in insertion order once every parent they wait for
/// has been announced through [`WaitingPool::parent_arrived`]. When the pool
/// is full the oldest entry is evicted.
#[derive(Debug, Clone)]
pub struct WaitingPool<T> {
    capacity: usize,
    entries: HashMap<BlockId, Waiting<T>>,
    by_missing: HashMap<BlockId, Vec<BlockId>>,
    order: VecDeque<BlockId>,
}

#[derive(Debug, Clone)]
struct Waiting<T> {
    item: T,
    missing: HashSet<BlockId>,
}

impl<T> WaitingPool<T> {
    pub fn new(capacity: usize) -> Self {
        WaitingPool {
            capacity,
            entries: HashMap::new(),
            by_missing: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.entries.contains_key(id)
    }

    /// Buffers `item` (block `id`) until all of `missing` arrive. Returns
    /// the evicted entry, if any.
    pub fn insert(
        &mut self,
        id: BlockId,
        item: T,
        missing: impl IntoIterator<Item = BlockId>,
    ) -> Option<(BlockId, T)> {
        if self.entries.contains_key(&id) {
            return None;
        }
        let missing: HashSet<BlockId> = missing.into_iter().collect();
        let mut evicted = None;
        if self.entries.len() >= self.capacity {
            evicted = self.evict_oldest();
        }
        for m in &missing {
            self.by_missing.entry(*m).or_default().push(id);
        }
        self.entries.insert(id, Waiting { item, missing });
        self.order.push_back(id);
        evicted
    }

    fn evict_oldest(&mut self) -> Option<(BlockId, T)> {
        while let Some(id) = self.order.pop_front() {
            if let Some(w) = self.entries.remove(&id) {
                return Some((id, w.item));
            }
        }
        None
    }

    /// Records the arrival of `parent` and returns the entries that no
    /// longer miss anything, in insertion order.
    pub fn parent_arrived(&mut self, parent: &BlockId) -> Vec<(BlockId, T)> {
        let Some(waiters) = self.by_missing.remove(parent) else {
            return Vec::new();
        };
        let mut ready = Vec::new();
        for id in waiters {
            let done = match self.entries.get_mut(&id) {
                Some(w) => {
                    w.missing.remove(parent);
                    w.missing.is_empty()
                }
                None => false,
            };
            if done {
                let w = self.entries.remove(&id).expect("present");
                ready.push((id, w.item));
            }
        }
        ready
    }

    /// Removes and returns every still-waiting entry, oldest first.
    pub fn drain(&mut self) -> Vec<(BlockId, T)> {
        let mut out = Vec::new();
        while let Some(e) = self.evict_oldest() {
            out.push(e);
        }
        self.by_missing.clear();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Digest, NodeId, Slot};

    fn params(t: u32) -> ProtocolParams {
        ProtocolParams::new(t, 16.0, 1_000_000, 3, 0).unwrap()
    }

    fn child(store: &BlockStore, thread: u32, period: u64, parents: &[BlockIdx]) -> BlockHeader {
        BlockHeader {
            slot: Slot::new(thread, period),
            creator: NodeId(1),
            parents: parents.iter().map(|&p| store.id(p)).collect(),
            endorsements: vec![],
            tx_count: 0,
            tx_root: crate::codec::transactions_root(&[]),
            size_bits: 1000,
        }
    }

    #[test]
    fn genesis_blocks_are_stored() {
        let store = BlockStore::new(params(4));
        assert_eq!(store.len(), 4);
        let ids = store.genesis_ids();
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|id| store.header(id).unwrap().is_genesis()));
    }

    #[test]
    fn thread_paths_along_a_chain() {
        let mut store = BlockStore::new(params(1));
        let g = BlockIdx(0);
        let mut chain = vec![g];
        for p in 1..40 {
            let h = child(&store, 0, p, &[*chain.last().unwrap()]);
            chain.push(store.insert(h, None).unwrap());
        }
        for (i, &a) in chain.iter().enumerate() {
            for (j, &b) in chain.iter().enumerate() {
                assert_eq!(store.is_thread_ancestor(a, b, 0), i <= j, "{i} {j}");
            }
        }
        assert!(!store.is_thread_ancestor(g, chain[5], 1));
    }

    #[test]
    fn siblings_are_not_thread_ancestors() {
        let mut store = BlockStore::new(params(1));
        let a = store.insert(child(&store, 0, 1, &[BlockIdx(0)]), None).unwrap();
        let b = store.insert(child(&store, 0, 2, &[BlockIdx(0)]), None).unwrap();
        assert!(!store.is_thread_ancestor(a, b, 0));
        assert!(!store.is_thread_ancestor(b, a, 0));
        assert!(store.is_thread_ancestor(a, a, 0));
        let unknown = Digest([9; 32]);
        assert_eq!(
            store.path_in_thread(&unknown, &store.id(a), 0),
            Err(UnknownBlock(unknown))
        );
    }

    #[test]
    fn insert_is_idempotent() {
        let mut store = BlockStore::new(params(2));
        let h = child(&store, 0, 1, &[BlockIdx(0), BlockIdx(1)]);
        let a = store.insert(h.clone(), None).unwrap();
        assert_eq!(store.insert(h, None).unwrap(), a);
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn waiting_pool_releases_when_complete() {
        let mut pool = WaitingPool::new(10);
        let (a, b, x) = (Digest([1; 32]), Digest([2; 32]), Digest([3; 32]));
        pool.insert(x, "x", [a, b]);
        assert!(pool.parent_arrived(&a).is_empty());
        assert_eq!(pool.parent_arrived(&b), vec![(x, "x")]);
        assert!(pool.is_empty());
    }

    #[test]
    fn waiting_pool_evicts_oldest() {
        let mut pool = WaitingPool::new(2);
        let m = Digest([0; 32]);
        pool.insert(Digest([1; 32]), 1, [m]);
        pool.insert(Digest([2; 32]), 2, [m]);
        let evicted = pool.insert(Digest([3; 32]), 3, [m]);
        assert_eq!(evicted, Some((Digest([1; 32]), 1)));
        let ready: Vec<_> = pool.parent_arrived(&m).into_iter().map(|e| e.1).collect();
        assert_eq!(ready, vec![2, 3]);
    }
}
