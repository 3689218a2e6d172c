//! Domain types of the multithreaded block DAG.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::params::ProtocolParams;

/// A 32-byte digest rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Identifier of a block: the digest of its canonical header encoding.
pub type BlockId = Digest;

/// A ledger address. Its leading bits pick the thread that may spend from it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub Digest);

impl Address {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Address(Digest(bytes))
    }

    /// Thread owning this address: the top log2(T) bits of the digest.
    pub fn thread(&self, params: &ProtocolParams) -> u32 {
        thread_of_address(self, params)
    }
}

/// Network participant identifier.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Block slot `s^τ_i`. Ordered by `(period, thread)`, which is the order of
/// `i·T + τ` and therefore of slot timestamps.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize,
)]
pub struct Slot {
    pub period: u64,
    pub thread: u32,
}

impl Slot {
    pub fn new(thread: u32, period: u64) -> Self {
        Slot { period, thread }
    }

    /// Position of the slot in the global slot sequence, `i·T + τ`.
    pub fn global_index(&self, thread_count: u32) -> u64 {
        self.period * u64::from(thread_count) + u64::from(self.thread)
    }

    pub fn from_global_index(index: u64, thread_count: u32) -> Self {
        let t = u64::from(thread_count);
        Slot {
            period: index / t,
            thread: (index % t) as u32,
        }
    }

    pub fn is_valid(&self, params: &ProtocolParams) -> bool {
        self.thread < params.thread_count
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.thread, self.period)
    }
}

/// Timestamp of a slot in seconds: `i·t0 + τ·t0/T`.
pub fn slot_timestamp(slot: Slot, params: &ProtocolParams) -> f64 {
    slot.period as f64 * params.slot_interval
        + f64::from(slot.thread) * params.slot_interval / f64::from(params.thread_count)
}

/// Thread assignment of an address from the top log2(T) bits of its digest.
pub fn thread_of_address(address: &Address, params: &ProtocolParams) -> u32 {
    let bits = params.thread_bits();
    if bits == 0 {
        return 0;
    }
    let bytes = address.0.as_bytes();
    let prefix = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
    (prefix >> (64 - bits)) as u32
}

/// Default transaction size: one input and one output.
pub const DEFAULT_TX_SIZE_BITS: u32 = 1040;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub receiver: Address,
    pub amount: u64,
    pub fee: u64,
    pub nonce: u64,
    pub size_bits: u32,
}

impl Transaction {
    pub fn new(sender: Address, receiver: Address, amount: u64, fee: u64, nonce: u64) -> Self {
        Transaction {
            sender,
            receiver,
            amount,
            fee,
            nonce,
            size_bits: DEFAULT_TX_SIZE_BITS,
        }
    }

    /// The thread whose blocks may carry this transaction.
    pub fn thread(&self, params: &ProtocolParams) -> u32 {
        thread_of_address(&self.sender, params)
    }
}

/// Attestation of the latest block of a thread, placed in one of the E
/// endorsement slots of the next block of that thread.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endorsement {
    pub endorsed_block: BlockId,
    pub slot: Slot,
    pub index: u32,
    pub creator: NodeId,
}

/// Everything about a block except its transaction list.
///
/// The transactions are committed to by `tx_count` and `tx_root`, so a header
/// alone is enough for consensus and for the block id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockHeader {
    pub slot: Slot,
    pub creator: NodeId,
    /// One parent per thread, indexed by thread. Empty for genesis blocks.
    pub parents: Vec<BlockId>,
    pub endorsements: Vec<Endorsement>,
    pub tx_count: u64,
    pub tx_root: Digest,
    pub size_bits: u64,
}

impl BlockHeader {
    pub fn genesis(thread: u32) -> Self {
        BlockHeader {
            slot: Slot::new(thread, 0),
            creator: NodeId(0),
            parents: Vec::new(),
            endorsements: Vec::new(),
            tx_count: 0,
            tx_root: crate::codec::transactions_root(&[]),
            size_bits: 0,
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn thread(&self) -> u32 {
        self.slot.thread
    }

    pub fn period(&self) -> u64 {
        self.slot.period
    }

    /// Parent in thread `thread`, `None` for genesis blocks.
    pub fn parent(&self, thread: u32) -> Option<&BlockId> {
        self.parents.get(thread as usize)
    }

    pub fn own_parent(&self) -> Option<&BlockId> {
        self.parent(self.slot.thread)
    }

    pub fn id(&self) -> BlockId {
        crate::codec::header_id(self)
    }
}

/// A header together with its materialized transactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    /// Builds a block whose header commits to `transactions`.
    pub fn new(
        slot: Slot,
        creator: NodeId,
        parents: Vec<BlockId>,
        endorsements: Vec<Endorsement>,
        transactions: Vec<Transaction>,
        header_size_bits: u64,
    ) -> Self {
        let size_bits = header_size_bits
            + transactions
                .iter()
                .map(|tx| u64::from(tx.size_bits))
                .sum::<u64>();
        let header = BlockHeader {
            slot,
            creator,
            parents,
            endorsements,
            tx_count: transactions.len() as u64,
            tx_root: crate::codec::transactions_root(&transactions),
            size_bits,
        };
        Block {
            header,
            transactions,
        }
    }

    pub fn id(&self) -> BlockId {
        self.header.id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: u32, t0: f64) -> ProtocolParams {
        ProtocolParams::new(t, t0, 1_000_000, 64, 0).unwrap()
    }

    fn address_with_prefix(first: u8) -> Address {
        let mut bytes = [0xffu8; 32];
        bytes[0] = first;
        Address::from_bytes(bytes)
    }

    #[test]
    fn slot_timestamps() {
        assert_eq!(slot_timestamp(Slot::new(0, 0), &params(32, 32.0)), 0.0);
        assert_eq!(slot_timestamp(Slot::new(3, 1), &params(4, 32.0)), 56.0);
        assert_eq!(slot_timestamp(Slot::new(5, 2), &params(32, 16.0)), 34.5);
    }

    #[test]
    fn address_threads() {
        // 00101... with T = 32 selects thread 5.
        assert_eq!(address_with_prefix(0b0010_1000).thread(&params(32, 1.0)), 5);
        assert_eq!(address_with_prefix(0b1100_0000).thread(&params(4, 1.0)), 3);
        assert_eq!(address_with_prefix(0b1111_1111).thread(&params(1, 1.0)), 0);
    }

    #[test]
    fn slot_order_matches_global_index() {
        let t = 4;
        let a = Slot::new(3, 1);
        let b = Slot::new(0, 2);
        assert!(a < b);
        assert!(a.global_index(t) < b.global_index(t));
        assert_eq!(Slot::from_global_index(b.global_index(t), t), b);
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = Digest([7u8; 32]);
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Digest>(&json).unwrap(), d);
        assert!(Digest::from_hex("abc").is_err());
    }
}
