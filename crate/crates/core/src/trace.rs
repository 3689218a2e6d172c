//! DAG trace files and deterministic replay through the consensus engine.
//!
//! A trace is JSON lines. An optional first line `{"params": {...}}` carries
//! the protocol parameters; every other line is one block header:
//!
//! ```text
//! {"id": "<hex, optional>", "slot": {"period": 1, "thread": 0}, "creator": 3,
//!  "parents": ["<hex>", ...], "endorsements": [], "tx_count": 0,
//!  "tx_root": "<hex, optional>", "size_bits": 100}
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BlockHeader, BlockId, Digest, Endorsement, NodeId, Slot};
use crate::consensus::{BlockStatus, CompatibilityState, ConsensusError};
use crate::params::ProtocolParams;
use crate::store::{BlockStore, WaitingPool};
use crate::validation::ValidationError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<BlockId>,
    pub slot: Slot,
    pub creator: NodeId,
    pub parents: Vec<BlockId>,
    #[serde(default)]
    pub endorsements: Vec<Endorsement>,
    #[serde(default)]
    pub tx_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_root: Option<Digest>,
    #[serde(default)]
    pub size_bits: u64,
}

impl TraceRecord {
    pub fn from_header(header: &BlockHeader) -> Self {
        TraceRecord {
            id: Some(header.id()),
            slot: header.slot,
            creator: header.creator,
            parents: header.parents.clone(),
            endorsements: header.endorsements.clone(),
            tx_count: header.tx_count,
            tx_root: Some(header.tx_root),
            size_bits: header.size_bits,
        }
    }

    /// The header described by the record; a missing root is all zeros.
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            slot: self.slot,
            creator: self.creator,
            parents: self.parents.clone(),
            endorsements: self.endorsements.clone(),
            tx_count: self.tx_count,
            tx_root: self.tx_root.unwrap_or(Digest::ZERO),
            size_bits: self.size_bits,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsLine {
    params: ProtocolParams,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub params: Option<ProtocolParams>,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: declared id {declared} does not match header id {computed}")]
    IdMismatch {
        line: usize,
        declared: BlockId,
        computed: BlockId,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_trace(reader: impl BufRead) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if trace.params.is_none() && trace.records.is_empty() && text.contains("\"params\"") {
            let p: ParamsLine = serde_json::from_str(text).map_err(|e| TraceError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            p.params.validate().map_err(|e| TraceError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            trace.params = Some(p.params);
            continue;
        }
        let record: TraceRecord = serde_json::from_str(text).map_err(|e| TraceError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(declared) = record.id {
            let computed = record.header().id();
            if declared != computed {
                return Err(TraceError::IdMismatch {
                    line: line_no,
                    declared,
                    computed,
                });
            }
        }
        trace.records.push(record);
    }
    Ok(trace)
}

pub fn write_trace(
    mut writer: impl Write,
    params: Option<&ProtocolParams>,
    headers: &[BlockHeader],
) -> std::io::Result<()> {
    if let Some(p) = params {
        serde_json::to_writer(&mut writer, &serde_json::json!({ "params": p }))?;
        writer.write_all(b"\n")?;
    }
    for h in headers {
        serde_json::to_writer(&mut writer, &TraceRecord::from_header(h))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayStatus {
    Active,
    Final,
    Stale,
    Invalid,
    Unresolved,
}

impl From<BlockStatus> for ReplayStatus {
    fn from(s: BlockStatus) -> Self {
        match s {
            BlockStatus::Active => ReplayStatus::Active,
            BlockStatus::Final => ReplayStatus::Final,
            BlockStatus::Stale => ReplayStatus::Stale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockReport {
    pub id: BlockId,
    pub thread: u32,
    pub period: u64,
    pub status: ReplayStatus,
    /// Number of maximal cliques containing the block.
    pub cliques: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub blocks: usize,
    pub active: usize,
    #[serde(rename = "final")]
    pub finals: usize,
    pub stale: usize,
    pub invalid: usize,
    pub unresolved: usize,
    pub cliques: usize,
    pub blockclique: Vec<BlockId>,
    pub blockclique_fitness: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub blocks: Vec<BlockReport>,
    pub summary: ReplaySummary,
    pub store: BlockStore,
    pub state: CompatibilityState,
}

enum Outcome {
    Stored,
    Invalid(String),
}

/// Feeds `records` in order through validation and consensus. Blocks whose
/// parents never arrive are reported as unresolved.
pub fn replay(
    params: ProtocolParams,
    records: &[TraceRecord],
    clique_cap: usize,
) -> Result<ReplayReport, ConsensusError> {
    let mut store = BlockStore::new(params);
    let mut state = CompatibilityState::with_clique_cap(&store, clique_cap);
    let mut pool: WaitingPool<BlockHeader> = WaitingPool::new(records.len().max(1));
    let mut outcomes: HashMap<BlockId, Outcome> = HashMap::new();
    let mut order: Vec<(BlockId, BlockHeader)> = Vec::new();

    for record in records {
        let header = record.header();
        let id = header.id();
        if outcomes.contains_key(&id) || pool.contains(&id) {
            continue;
        }
        order.push((id, header.clone()));
        let mut queue = vec![(id, header)];
        while let Some((id, header)) = queue.pop() {
            match store.insert(header.clone(), None) {
                Ok(idx) => {
                    state.process_block(&store, idx)?;
                    outcomes.insert(id, Outcome::Stored);
                    queue.extend(pool.parent_arrived(&id));
                }
                Err(ValidationError::MissingParent(missing)) => {
                    pool.insert(id, header, missing);
                }
                Err(e @ ValidationError::StructuralViolation(_)) => {
                    outcomes.insert(id, Outcome::Invalid(e.to_string()));
                }
            }
        }
    }

    let mut blocks = Vec::new();
    for g in store.genesis() {
        let b = store.block(g);
        blocks.push(report(&store, &state, b.id, &b.header, None));
    }
    for (id, header) in &order {
        blocks.push(report(&store, &state, *id, header, outcomes.get(id)));
    }
    let count = |s: ReplayStatus| blocks.iter().filter(|b| b.status == s).count();
    let bc = state.blockclique(&store);
    let summary = ReplaySummary {
        blocks: blocks.len(),
        active: count(ReplayStatus::Active),
        finals: count(ReplayStatus::Final),
        stale: count(ReplayStatus::Stale),
        invalid: count(ReplayStatus::Invalid),
        unresolved: count(ReplayStatus::Unresolved),
        cliques: state.clique_count(),
        blockclique: bc.members,
        blockclique_fitness: bc.fitness,
    };
    Ok(ReplayReport {
        blocks,
        summary,
        store,
        state,
    })
}

fn report(
    store: &BlockStore,
    state: &CompatibilityState,
    id: BlockId,
    header: &BlockHeader,
    outcome: Option<&Outcome>,
) -> BlockReport {
    let (status, cliques, reason) = match (store.lookup(&id), outcome) {
        (_, Some(Outcome::Invalid(r))) => (ReplayStatus::Invalid, 0, Some(r.clone())),
        (Some(idx), _) => (
            state
                .status(idx)
                .map(ReplayStatus::from)
                .unwrap_or(ReplayStatus::Unresolved),
            state.cliques_containing(idx),
            None,
        ),
        (None, _) => (ReplayStatus::Unresolved, 0, None),
    };
    BlockReport {
        id,
        thread: header.thread(),
        period: header.period(),
        status,
        cliques,
        reason,
    }
}
