//! Virtual-time event loop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use blockclique_core::{
    slot_timestamp, BlockHeader, BlockId, BlockIdx, BlockStatus, BlockStore, CompatibilityState,
    Digest, Endorsement, NodeId, SelectionOracle, Slot, WaitingPool,
};
use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SimConfig;
use crate::topology::{build_topology, NetworkTopology};
use crate::SimError;

const WAITING_CAPACITY: usize = 100_000;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Slot(u64),
    Endorse(u64),
    UploadReady(u32),
    Arrival { node: u32, msg: u32 },
    VerifyDone { node: u32, msg: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Block(BlockIdx),
    Endorsement { endorsement: Endorsement, producer: u32 },
}

#[derive(Debug, Clone)]
struct Message {
    payload: Payload,
    size_bits: u64,
    verify_cost: f64,
    created: f64,
    /// Nodes that hold the message or have a transfer of it under way.
    claimed: FixedBitSet,
    /// (node, arrival time) in arrival order, creator first.
    receipts: Vec<(u32, f64)>,
}

struct Node {
    state: CompatibilityState,
    processed: FixedBitSet,
    waiting: WaitingPool<BlockIdx>,
    upload: VecDeque<(u32, usize)>,
    uploading: bool,
    cpu_free: f64,
    endorsements: HashMap<u64, Vec<Endorsement>>,
}

/// Per-block outcome, as seen by the block's creator.
#[derive(Debug, Clone, Serialize)]
pub struct BlockRecord {
    pub id: BlockId,
    pub thread: u32,
    pub period: u64,
    pub creator: u32,
    pub created: f64,
    pub tx_count: u64,
    pub fitness: u64,
    /// Seconds from creation until ⌈N/2⌉ nodes (creator included) hold it.
    pub half_time: Option<f64>,
    /// Absolute time the creator settled the block.
    pub settled: Option<f64>,
    pub status: BlockStatus,
    pub in_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    /// Transactions in final blocks per second of measurement window.
    pub throughput: f64,
    pub ceiling: f64,
    pub tx_per_block: u64,
    pub stale_rate: f64,
    /// Mean seconds from creation to finality at the creator.
    pub confirmation_time: f64,
    /// Mean seconds for a block to reach half of the nodes.
    pub t_half: f64,
    pub blocks_produced: u64,
    pub blocks_final: u64,
    pub blocks_stale: u64,
    pub blocks_active: u64,
    pub slots_total: u64,
    pub slots_missed: u64,
    /// Largest creation-to-verified delay over all deliveries.
    pub max_delivery_time: f64,
    /// Largest clique count held by any node at any point.
    pub max_cliques: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: SimMetrics,
    pub blocks: Vec<BlockRecord>,
    /// Arrival times per block, parallel to `blocks`.
    pub receipts: Vec<Vec<(u32, f64)>>,
    pub topology: NetworkTopology,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    topo: NetworkTopology,
    store: BlockStore,
    oracle: SelectionOracle,
    nodes: Vec<Node>,
    msgs: Vec<Message>,
    block_msg: HashMap<BlockIdx, u32>,
    records: Vec<BlockRecord>,
    record_of: HashMap<BlockIdx, usize>,
    queue: BinaryHeap<Event>,
    seq: u64,
    events: u64,
    miss_rng: ChaCha8Rng,
    slots_total: u64,
    slots_missed: u64,
    max_delivery: f64,
    max_cliques: usize,
    tx_per_block: u64,
    block_size: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = cfg.node_count as usize;
        let mut topo_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let topo = build_topology(cfg, &mut topo_rng)?;
        let mut miss_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        miss_rng.set_stream(1);
        let store = BlockStore::new(cfg.protocol);
        let oracle = SelectionOracle::uniform(cfg.seed, cfg.node_count)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let nodes = (0..n)
            .map(|_| {
                let mut processed = FixedBitSet::with_capacity(store.len());
                for g in store.genesis() {
                    processed.insert(g.index());
                }
                Node {
                    state: CompatibilityState::with_clique_cap(&store, cfg.clique_cap),
                    processed,
                    waiting: WaitingPool::new(WAITING_CAPACITY),
                    upload: VecDeque::new(),
                    uploading: false,
                    cpu_free: 0.0,
                    endorsements: HashMap::new(),
                }
            })
            .collect();
        let tx_per_block = cfg.tx_per_block();
        Ok(Sim {
            cfg,
            topo,
            store,
            oracle,
            nodes,
            msgs: Vec::new(),
            block_msg: HashMap::new(),
            records: Vec::new(),
            record_of: HashMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            events: 0,
            miss_rng,
            slots_total: 0,
            slots_missed: 0,
            max_delivery: 0.0,
            max_cliques: 1,
            tx_per_block,
            block_size: cfg.header_size() + tx_per_block * cfg.tx_size,
        })
    }

    fn push(&mut self, time: f64, kind: Kind) {
        if time < self.cfg.duration {
            self.seq += 1;
            self.queue.push(Event {
                time,
                seq: self.seq,
                kind,
            });
        }
    }

    fn slot_time(&self, s: u64) -> f64 {
        slot_timestamp(
            Slot::from_global_index(s, self.cfg.protocol.thread_count),
            &self.cfg.protocol,
        )
    }

    fn endorse_time(&self, s: u64) -> f64 {
        self.slot_time(s) - self.cfg.protocol.slot_interval / 2.0
    }

    fn run(mut self) -> Result<SimOutput, SimError> {
        // Period 0 belongs to genesis.
        let first = u64::from(self.cfg.protocol.thread_count);
        self.push(self.slot_time(first), Kind::Slot(first));
        if self.cfg.endorsements_enabled && self.cfg.protocol.endorsement_slots > 0 {
            self.push(self.endorse_time(first), Kind::Endorse(first));
        }
        let mut next_log = 300.0;
        while let Some(ev) = self.queue.pop() {
            self.events += 1;
            if ev.time >= next_log {
                log::info!(
                    "t={:.0}s blocks={} events={}",
                    ev.time,
                    self.records.len(),
                    self.events
                );
                next_log += 300.0;
            }
            match ev.kind {
                Kind::Slot(s) => self.on_slot(ev.time, s)?,
                Kind::Endorse(s) => self.on_endorse(ev.time, s),
                Kind::UploadReady(node) => {
                    self.nodes[node as usize].uploading = false;
                    self.pump(ev.time, node);
                }
                Kind::Arrival { node, msg } => self.on_arrival(ev.time, node, msg),
                Kind::VerifyDone { node, msg } => self.on_verified(ev.time, node, msg)?,
            }
        }
        Ok(self.finish())
    }

    fn on_slot(&mut self, now: f64, s: u64) -> Result<(), SimError> {
        let next = self.slot_time(s + 1);
        self.push(next, Kind::Slot(s + 1));
        self.slots_total += 1;
        // One draw per slot keeps the miss stream aligned across configs.
        let miss = self.miss_rng.gen::<f64>() < self.cfg.miss_rate;
        if miss {
            self.slots_missed += 1;
            return Ok(());
        }
        let slot = Slot::from_global_index(s, self.cfg.protocol.thread_count);
        let producer = self.oracle.draw_block_producer(slot).0;
        let node = &mut self.nodes[producer as usize];
        let parents = node.state.best_parents(&self.store);
        let mut endorsements = Vec::new();
        if let Some(mut pending) = node.endorsements.remove(&s) {
            let own = parents[slot.thread as usize];
            pending.retain(|e| e.endorsed_block == own);
            pending.sort_by_key(|e| e.index);
            pending.dedup_by_key(|e| e.index);
            endorsements = pending;
        }
        node.endorsements.retain(|&k, _| k > s);
        let header = BlockHeader {
            slot,
            creator: NodeId(producer),
            parents,
            endorsements,
            tx_count: self.tx_per_block,
            tx_root: Digest::ZERO,
            size_bits: self.block_size,
        };
        let fitness = blockclique_core::fitness(&header);
        let id = header.id();
        let idx = self
            .store
            .insert(header, Some(&self.oracle))
            .map_err(|e| SimError::InvalidBlock(format!("{id}: {e:?}")))?;
        let n = self.cfg.node_count as usize;
        let mut claimed = FixedBitSet::with_capacity(n);
        claimed.insert(producer as usize);
        let m = self.msgs.len() as u32;
        self.msgs.push(Message {
            payload: Payload::Block(idx),
            size_bits: self.block_size,
            verify_cost: 0.0,
            created: now,
            claimed,
            receipts: vec![(producer, now)],
        });
        self.block_msg.insert(idx, m);
        let (w0, w1) = self.cfg.window();
        self.record_of.insert(idx, self.records.len());
        self.records.push(BlockRecord {
            id,
            thread: slot.thread,
            period: slot.period,
            creator: producer,
            created: now,
            tx_count: self.tx_per_block,
            fitness,
            half_time: None,
            settled: None,
            status: BlockStatus::Active,
            in_window: now >= w0 && now < w1,
        });
        // The producer built the block itself and skips verification.
        self.deliver(now, producer, idx)?;
        self.forward(now, producer, m);
        Ok(())
    }

    fn on_endorse(&mut self, now: f64, s: u64) {
        self.push(self.endorse_time(s + 1), Kind::Endorse(s + 1));
        let slot = Slot::from_global_index(s, self.cfg.protocol.thread_count);
        let producer = self.oracle.draw_block_producer(slot).0;
        let endorsers = self
            .oracle
            .draw_endorsers(slot, self.cfg.protocol.endorsement_slots);
        for (index, endorser) in endorsers.into_iter().enumerate() {
            let target = self.nodes[endorser.0 as usize].state.best_parents(&self.store)
                [slot.thread as usize];
            let endorsement = Endorsement {
                endorsed_block: target,
                slot,
                index: index as u32,
                creator: endorser,
            };
            if endorser.0 == producer {
                self.nodes[producer as usize]
                    .endorsements
                    .entry(s)
                    .or_default()
                    .push(endorsement);
                continue;
            }
            let mut claimed = FixedBitSet::with_capacity(self.cfg.node_count as usize);
            claimed.insert(endorser.0 as usize);
            let m = self.msgs.len() as u32;
            self.msgs.push(Message {
                payload: Payload::Endorsement {
                    endorsement,
                    producer,
                },
                size_bits: self.cfg.tx_size,
                verify_cost: self.cfg.tx_verify_time,
                created: now,
                claimed,
                receipts: Vec::new(),
            });
            self.forward(now, endorser.0, m);
        }
    }

    fn forward(&mut self, now: f64, node: u32, msg: u32) {
        let links = self.topo.successors[node as usize].len();
        let n = &mut self.nodes[node as usize];
        n.upload.extend((0..links).map(|k| (msg, k)));
        self.pump(now, node);
    }

    /// Starts the next useful transfer on `node`'s upload channel, if idle.
    fn pump(&mut self, now: f64, node: u32) {
        if self.nodes[node as usize].uploading {
            return;
        }
        while let Some((msg, k)) = self.nodes[node as usize].upload.pop_front() {
            let link = self.topo.successors[node as usize][k];
            let m = &mut self.msgs[msg as usize];
            if m.claimed.contains(link.to as usize) {
                continue;
            }
            m.claimed.insert(link.to as usize);
            let transfer = m.size_bits as f64 / self.topo.bandwidth[node as usize];
            self.nodes[node as usize].uploading = true;
            self.push(
                now + transfer + link.latency,
                Kind::Arrival { node: link.to, msg },
            );
            self.push(now + transfer, Kind::UploadReady(node));
            return;
        }
    }

    fn on_arrival(&mut self, now: f64, node: u32, msg: u32) {
        let m = &mut self.msgs[msg as usize];
        if matches!(m.payload, Payload::Block(_)) {
            m.receipts.push((node, now));
        }
        let cost = match m.payload {
            Payload::Block(idx) => {
                self.cfg.block_verify_time
                    + self.store.block(idx).header.tx_count as f64 * self.cfg.tx_verify_time
            }
            Payload::Endorsement { .. } => m.verify_cost,
        };
        let n = &mut self.nodes[node as usize];
        let done = n.cpu_free.max(now) + cost;
        n.cpu_free = done;
        self.push(done, Kind::VerifyDone { node, msg });
    }

    fn on_verified(&mut self, now: f64, node: u32, msg: u32) -> Result<(), SimError> {
        let m = &self.msgs[msg as usize];
        match m.payload.clone() {
            Payload::Block(idx) => {
                self.max_delivery = self.max_delivery.max(now - m.created);
                self.deliver(now, node, idx)?;
            }
            Payload::Endorsement {
                endorsement,
                producer,
            } => {
                if producer == node {
                    let s = endorsement
                        .slot
                        .global_index(self.cfg.protocol.thread_count);
                    self.nodes[node as usize]
                        .endorsements
                        .entry(s)
                        .or_default()
                        .push(endorsement);
                }
            }
        }
        self.forward(now, node, msg);
        Ok(())
    }

    /// Hands a verified block to `node`'s consensus, buffering it until its
    /// parents have been processed there.
    fn deliver(&mut self, now: f64, node: u32, idx: BlockIdx) -> Result<(), SimError> {
        let store = &self.store;
        let n = &mut self.nodes[node as usize];
        n.processed.grow(store.len());
        let block = store.block(idx);
        let missing: Vec<BlockId> = block
            .parents
            .iter()
            .filter(|p| !n.processed.contains(p.index()))
            .map(|&p| store.id(p))
            .collect();
        if !missing.is_empty() {
            if let Some((lost, _)) = n.waiting.insert(block.id, idx, missing) {
                log::warn!("node {node}: waiting pool full, dropped {lost}");
            }
            return Ok(());
        }
        let mut ready = vec![idx];
        while let Some(b) = ready.pop() {
            self.process(now, node, b)?;
            let id = self.store.id(b);
            let n = &mut self.nodes[node as usize];
            let mut next: Vec<BlockIdx> = n.waiting.parent_arrived(&id).into_iter().map(|(_, i)| i).collect();
            next.reverse();
            ready.extend(next);
        }
        Ok(())
    }

    fn process(&mut self, now: f64, node: u32, idx: BlockIdx) -> Result<(), SimError> {
        let n = &mut self.nodes[node as usize];
        let (_, settlement) = n.state.process_block(&self.store, idx)?;
        n.processed.insert(idx.index());
        self.max_cliques = self.max_cliques.max(n.state.clique_count());
        for (list, status) in [
            (&settlement.finalized, BlockStatus::Final),
            (&settlement.staled, BlockStatus::Stale),
        ] {
            for b in list {
                if let Some(&r) = self.record_of.get(b) {
                    let rec = &mut self.records[r];
                    if rec.creator == node {
                        rec.settled = Some(now);
                        rec.status = status;
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> SimOutput {
        let n = self.cfg.node_count as usize;
        let half = n.div_ceil(2);
        let mut receipts = Vec::with_capacity(self.records.len());
        for rec in &mut self.records {
            let idx = self.store.lookup(&rec.id).expect("stored");
            let m = &self.msgs[self.block_msg[&idx] as usize];
            rec.half_time = m.receipts.get(half - 1).map(|&(_, t)| t - rec.created);
            receipts.push(m.receipts.clone());
        }
        let (w0, w1) = self.cfg.window();
        let window: Vec<&BlockRecord> = self.records.iter().filter(|r| r.in_window).collect();
        let count = |s: BlockStatus| window.iter().filter(|r| r.status == s).count() as u64;
        let finals: Vec<&&BlockRecord> = window
            .iter()
            .filter(|r| r.status == BlockStatus::Final)
            .collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let (s, k) = xs.fold((0.0, 0u64), |(s, k), x| (s + x, k + 1));
            if k == 0 {
                f64::NAN
            } else {
                s / k as f64
            }
        };
        let produced = window.len() as u64;
        let stale = count(BlockStatus::Stale);
        let metrics = SimMetrics {
            throughput: finals.iter().map(|r| r.tx_count as f64).sum::<f64>() / (w1 - w0),
            ceiling: self.cfg.throughput_ceiling(),
            tx_per_block: self.tx_per_block,
            stale_rate: if produced == 0 {
                0.0
            } else {
                stale as f64 / produced as f64
            },
            confirmation_time: mean(&mut finals.iter().map(|r| r.settled.unwrap() - r.created)),
            t_half: mean(&mut window.iter().filter_map(|r| r.half_time)),
            blocks_produced: produced,
            blocks_final: finals.len() as u64,
            blocks_stale: stale,
            blocks_active: count(BlockStatus::Active),
            slots_total: self.slots_total,
            slots_missed: self.slots_missed,
            max_delivery_time: self.max_delivery,
            max_cliques: self.max_cliques,
            window_start: w0,
            window_end: w1,
            events: self.events,
        };
        SimOutput {
            metrics,
            blocks: self.records,
            receipts,
            topology: self.topo,
        }
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    Sim::new(cfg)?.run()
}

/// Confirmation time and t½, requiring at least 100 final blocks.
pub fn measure_confirmation(cfg: &SimConfig) -> Result<(f64, f64), SimError> {
    let out = run_simulation(cfg)?;
    if out.metrics.blocks_final < 100 {
        return Err(SimError::InsufficientData(out.metrics.blocks_final));
    }
    Ok((out.metrics.confirmation_time, out.metrics.t_half))
}
