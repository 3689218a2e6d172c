//! Structural validation of headers and blocks against the stored DAG.

use std::fmt;

use thiserror::Error;

use crate::chain::{Block, BlockHeader, BlockId, NodeId};
use crate::codec;
use crate::selection::{Role, SelectionOracle};
use crate::store::BlockStore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Oversize { size_bits: u64, max: u64 },
    ThreadOutOfRange(u32),
    ParentCount { expected: usize, found: usize },
    /// The parent listed for `thread` belongs to another thread.
    ParentThread { thread: u32, found: u32 },
    OwnParentPeriod { parent_period: u64, period: u64 },
    /// Through the parent listed for `via`, the block reaches a block of
    /// `thread` that is not an ancestor of its own parent in `thread`.
    AncestorInconsistent { via: u32, thread: u32 },
    TooManyEndorsements { found: usize, max: u32 },
    EndorsementIndex(u32),
    DuplicateEndorsementIndex(u32),
    EndorsementSlot(u32),
    EndorsementTarget(u32),
    EndorsementCreator { index: u32, expected: NodeId, found: NodeId },
    Producer { expected: NodeId, found: NodeId },
    TransactionCount { declared: u64, found: u64 },
    TransactionRoot,
    /// Transaction `index` spends from an address outside the block's thread.
    Shard { index: usize, sender_thread: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Oversize { size_bits, max } => {
                write!(f, "size {size_bits} bits exceeds maximum {max}")
            }
            Violation::ThreadOutOfRange(t) => write!(f, "thread {t} out of range"),
            Violation::ParentCount { expected, found } => {
                write!(f, "expected {expected} parents, found {found}")
            }
            Violation::ParentThread { thread, found } => {
                write!(f, "parent for thread {thread} lies in thread {found}")
            }
            Violation::OwnParentPeriod {
                parent_period,
                period,
            } => write!(
                f,
                "own-thread parent period {parent_period} not below block period {period}"
            ),
            Violation::AncestorInconsistent { via, thread } => write!(
                f,
                "parent in thread {via} references a thread-{thread} block newer than the thread-{thread} parent"
            ),
            Violation::TooManyEndorsements { found, max } => {
                write!(f, "{found} endorsements, at most {max} allowed")
            }
            Violation::EndorsementIndex(i) => write!(f, "endorsement index {i} out of range"),
            Violation::DuplicateEndorsementIndex(i) => {
                write!(f, "endorsement index {i} used twice")
            }
            Violation::EndorsementSlot(i) => write!(f, "endorsement {i} is for another slot"),
            Violation::EndorsementTarget(i) => {
                write!(f, "endorsement {i} does not endorse the own-thread parent")
            }
            Violation::EndorsementCreator {
                index,
                expected,
                found,
            } => write!(
                f,
                "endorsement {index} created by {found}, selected endorser is {expected}"
            ),
            Violation::Producer { expected, found } => {
                write!(f, "block created by {found}, selected producer is {expected}")
            }
            Violation::TransactionCount { declared, found } => {
                write!(f, "header declares {declared} transactions, block has {found}")
            }
            Violation::TransactionRoot => f.write_str("transaction root mismatch"),
            Violation::Shard {
                index,
                sender_thread,
            } => write!(
                f,
                "transaction {index} spends from thread {sender_thread}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    /// Some parents are not stored yet; the block should be buffered.
    #[error("missing {} parent(s)", .0.len())]
    MissingParent(Vec<BlockId>),
    /// The block can never become valid.
    #[error("structural violation: {}", join(.0))]
    StructuralViolation(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks a header against the store. Checks that do not need the parents
/// run first, so a malformed block is rejected even while parents are
/// missing.
pub fn validate_header(
    header: &BlockHeader,
    store: &BlockStore,
    oracle: Option<&SelectionOracle>,
) -> Result<(), ValidationError> {
    let mut violations = local_checks(header, store, oracle);
    if !violations.is_empty() {
        return Err(ValidationError::StructuralViolation(violations));
    }
    let missing: Vec<BlockId> = header
        .parents
        .iter()
        .filter(|p| !store.contains(p))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(ValidationError::MissingParent(missing));
    }
    parent_checks(header, store, &mut violations);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationError::StructuralViolation(violations))
    }
}

/// Header checks plus the transaction commitment and the sharding rule.
pub fn validate_block_structure(
    block: &Block,
    store: &BlockStore,
    oracle: Option<&SelectionOracle>,
) -> Result<(), ValidationError> {
    let params = store.params();
    let header = &block.header;
    let mut violations = Vec::new();
    let found = block.transactions.len() as u64;
    if header.tx_count != found {
        violations.push(Violation::TransactionCount {
            declared: header.tx_count,
            found,
        });
    }
    if codec::transactions_root(&block.transactions) != header.tx_root {
        violations.push(Violation::TransactionRoot);
    }
    for (index, tx) in block.transactions.iter().enumerate() {
        let sender_thread = tx.thread(params);
        if sender_thread != header.thread() {
            violations.push(Violation::Shard {
                index,
                sender_thread,
            });
        }
    }
    match validate_header(header, store, oracle) {
        Err(ValidationError::StructuralViolation(mut v)) => {
            v.extend(violations);
            Err(ValidationError::StructuralViolation(v))
        }
        _ if !violations.is_empty() => Err(ValidationError::StructuralViolation(violations)),
        other => other,
    }
}

fn local_checks(
    header: &BlockHeader,
    store: &BlockStore,
    oracle: Option<&SelectionOracle>,
) -> Vec<Violation> {
    let params = store.params();
    let mut v = Vec::new();
    if header.size_bits > params.max_block_size {
        v.push(Violation::Oversize {
            size_bits: header.size_bits,
            max: params.max_block_size,
        });
    }
    if !header.slot.is_valid(params) {
        v.push(Violation::ThreadOutOfRange(header.thread()));
    }
    let t = params.thread_count as usize;
    if header.parents.len() != t {
        v.push(Violation::ParentCount {
            expected: t,
            found: header.parents.len(),
        });
    }
    if header.endorsements.len() > params.endorsement_slots as usize {
        v.push(Violation::TooManyEndorsements {
            found: header.endorsements.len(),
            max: params.endorsement_slots,
        });
    }
    let own_parent = header.own_parent();
    let mut seen = vec![false; params.endorsement_slots as usize];
    for e in &header.endorsements {
        match seen.get_mut(e.index as usize) {
            None => v.push(Violation::EndorsementIndex(e.index)),
            Some(true) => v.push(Violation::DuplicateEndorsementIndex(e.index)),
            Some(s) => *s = true,
        }
        if e.slot != header.slot {
            v.push(Violation::EndorsementSlot(e.index));
        }
        if own_parent.is_some() && own_parent != Some(&e.endorsed_block) {
            v.push(Violation::EndorsementTarget(e.index));
        }
    }
    if let Some(oracle) = oracle {
        let expected = oracle.draw_block_producer(header.slot);
        if expected != header.creator {
            v.push(Violation::Producer {
                expected,
                found: header.creator,
            });
        }
        for e in &header.endorsements {
            let expected = oracle.draw(Role::Endorsement, e.slot, e.index);
            if expected != e.creator {
                v.push(Violation::EndorsementCreator {
                    index: e.index,
                    expected,
                    found: e.creator,
                });
            }
        }
    }
    v
}

fn parent_checks(header: &BlockHeader, store: &BlockStore, v: &mut Vec<Violation>) {
    let parents: Vec<_> = header
        .parents
        .iter()
        .map(|p| store.lookup(p).expect("checked present"))
        .collect();
    for (thread, &p) in parents.iter().enumerate() {
        let found = store.block(p).thread();
        if found as usize != thread {
            v.push(Violation::ParentThread {
                thread: thread as u32,
                found,
            });
        }
    }
    if !v.is_empty() {
        return;
    }
    let own = store.block(parents[header.thread() as usize]);
    if own.period() >= header.period() {
        v.push(Violation::OwnParentPeriod {
            parent_period: own.period(),
            period: header.period(),
        });
    }
    // Parents are valid themselves, so the newest thread-τ2 block reachable
    // through parent p is P(p, τ2); it must lie on our own τ2 parent's chain.
    for (via, &p) in parents.iter().enumerate() {
        let pb = store.block(p);
        for (thread, &grand) in pb.parents.iter().enumerate() {
            if !store.is_thread_ancestor(grand, parents[thread], thread as u32) {
                v.push(Violation::AncestorInconsistent {
                    via: via as u32,
                    thread: thread as u32,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, Digest, Endorsement, Slot, Transaction};
    use crate::params::ProtocolParams;
    use crate::store::BlockIdx;

    fn store(t: u32, e: u32) -> BlockStore {
        BlockStore::new(ProtocolParams::new(t, 16.0, 100_000, 3, e).unwrap())
    }

    fn header(store: &BlockStore, thread: u32, period: u64, parents: &[BlockIdx]) -> BlockHeader {
        BlockHeader {
            slot: Slot::new(thread, period),
            creator: NodeId(0),
            parents: parents.iter().map(|&p| store.id(p)).collect(),
            endorsements: vec![],
            tx_count: 0,
            tx_root: codec::transactions_root(&[]),
            size_bits: 5_000,
        }
    }

    fn violations(r: Result<(), ValidationError>) -> Vec<Violation> {
        match r {
            Err(ValidationError::StructuralViolation(v)) => v,
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn equal_own_parent_period_is_rejected() {
        let mut s = store(1, 0);
        let a = s.insert(header(&s, 0, 1, &[BlockIdx(0)]), None).unwrap();
        let bad = header(&s, 0, 1, &[a]);
        assert_eq!(
            violations(validate_header(&bad, &s, None)),
            vec![Violation::OwnParentPeriod {
                parent_period: 1,
                period: 1
            }]
        );
    }

    #[test]
    fn newer_ancestor_through_other_thread_is_rejected() {
        let mut s = store(2, 0);
        let (g0, g1) = (BlockIdx(0), BlockIdx(1));
        let a0 = s.insert(header(&s, 0, 1, &[g0, g1]), None).unwrap();
        let a1 = s.insert(header(&s, 1, 1, &[a0, g1]), None).unwrap();
        // Thread 0 parent is genesis although the thread-1 parent already
        // builds on a0.
        let bad = header(&s, 0, 2, &[g0, a1]);
        assert_eq!(
            violations(validate_header(&bad, &s, None)),
            vec![Violation::AncestorInconsistent { via: 1, thread: 0 }]
        );
        assert!(validate_header(&header(&s, 0, 2, &[a0, a1]), &s, None).is_ok());
    }

    #[test]
    fn missing_parents_are_reported_after_local_checks() {
        let s = store(2, 0);
        let unknown = Digest([4; 32]);
        let mut h = header(&s, 0, 1, &[BlockIdx(0), BlockIdx(1)]);
        h.parents[1] = unknown;
        assert_eq!(
            validate_header(&h, &s, None),
            Err(ValidationError::MissingParent(vec![unknown]))
        );
        h.size_bits = 1 << 40;
        assert!(matches!(
            validate_header(&h, &s, None),
            Err(ValidationError::StructuralViolation(_))
        ));
    }

    #[test]
    fn parent_count_and_thread() {
        let s = store(2, 0);
        let h = header(&s, 0, 1, &[BlockIdx(0)]);
        assert!(violations(validate_header(&h, &s, None))
            .contains(&Violation::ParentCount {
                expected: 2,
                found: 1
            }));
        let swapped = header(&s, 0, 1, &[BlockIdx(1), BlockIdx(0)]);
        assert_eq!(violations(validate_header(&swapped, &s, None)).len(), 2);
    }

    #[test]
    fn endorsement_rules() {
        let s = store(1, 2);
        let mut h = header(&s, 0, 1, &[BlockIdx(0)]);
        let good = Endorsement {
            endorsed_block: s.id(BlockIdx(0)),
            slot: h.slot,
            index: 0,
            creator: NodeId(0),
        };
        h.endorsements = vec![good.clone()];
        assert!(validate_header(&h, &s, None).is_ok());
        let mut wrong_target = good.clone();
        wrong_target.index = 1;
        wrong_target.endorsed_block = Digest([1; 32]);
        h.endorsements = vec![good.clone(), wrong_target];
        assert_eq!(
            violations(validate_header(&h, &s, None)),
            vec![Violation::EndorsementTarget(1)]
        );
        h.endorsements = vec![good.clone(), good];
        assert_eq!(
            violations(validate_header(&h, &s, None)),
            vec![Violation::DuplicateEndorsementIndex(0)]
        );
    }

    #[test]
    fn producer_must_match_oracle() {
        let s = store(1, 0);
        let oracle = SelectionOracle::uniform(11, 50).unwrap();
        let mut h = header(&s, 0, 1, &[BlockIdx(0)]);
        h.creator = oracle.draw_block_producer(h.slot);
        assert!(validate_header(&h, &s, Some(&oracle)).is_ok());
        h.creator = NodeId(h.creator.0 + 1);
        assert!(matches!(
            violations(validate_header(&h, &s, Some(&oracle)))[..],
            [Violation::Producer { .. }]
        ));
    }

    #[test]
    fn transactions_must_follow_sharding() {
        let s = store(2, 0);
        let mut low = [0u8; 32];
        low[0] = 0x10;
        let mut high = [0u8; 32];
        high[0] = 0x90;
        let tx0 = Transaction::new(Address::from_bytes(low), Address::from_bytes(high), 1, 0, 0);
        let tx1 = Transaction::new(Address::from_bytes(high), Address::from_bytes(low), 1, 0, 0);
        let parents = vec![s.id(BlockIdx(0)), s.id(BlockIdx(1))];
        let ok = Block::new(Slot::new(0, 1), NodeId(0), parents.clone(), vec![], vec![tx0], 900);
        assert!(validate_block_structure(&ok, &s, None).is_ok());
        let bad = Block::new(Slot::new(0, 1), NodeId(0), parents, vec![], vec![tx1], 900);
        assert_eq!(
            violations(validate_block_structure(&bad, &s, None)),
            vec![Violation::Shard {
                index: 0,
                sender_thread: 1
            }]
        );
        let mut tampered = ok;
        tampered.transactions.clear();
        assert_eq!(
            violations(validate_block_structure(&tampered, &s, None)).len(),
            2
        );
    }
}
