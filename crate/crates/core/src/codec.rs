//! Canonical byte layout of headers, transactions and blocks.
//!
//! All integers are big-endian, lists are prefixed with a `u32` element
//! count and fields appear in the order below. Block ids are the SHA-256
//! digest of the header encoding.
//!
//! ```text
//! header      := version:u8  thread:u32  period:u64  creator:u32
//!                parents:list<[u8;32]>
//!                endorsements:list<endorsement>
//!                tx_count:u64  tx_root:[u8;32]  size_bits:u64
//! endorsement := endorsed_block:[u8;32]  thread:u32  period:u64  index:u32  creator:u32
//! transaction := sender:[u8;32]  receiver:[u8;32]  amount:u64  fee:u64  nonce:u64  size_bits:u32
//! block       := header_len:u32  header  transactions:list<transaction>
//! tx_root     := SHA-256(transactions:list<transaction>)
//! ```

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::chain::{Address, BlockHeader, Block, Digest, Endorsement, NodeId, Slot, Transaction};

pub const HEADER_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input truncated at byte {0}")]
    Truncated(usize),
    #[error("unsupported header version {0}")]
    Version(u8),
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("declared list length {0} exceeds remaining input")]
    Length(u32),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn digest(&mut self, d: &Digest) {
        self.0.extend_from_slice(d.as_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("list longer than u32::MAX"));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated(self.pos));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn digest(&mut self) -> Result<Digest, CodecError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }
    /// Reads a list length, rejecting counts that cannot fit in the rest of
    /// the input given the minimum element size.
    fn len(&mut self, min_elem: usize) -> Result<usize, CodecError> {
        let n = self.u32()?;
        if (n as usize).saturating_mul(min_elem) > self.buf.len() - self.pos {
            return Err(CodecError::Length(n));
        }
        Ok(n as usize)
    }
    fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

const ENDORSEMENT_LEN: usize = 32 + 4 + 8 + 4 + 4;
const TRANSACTION_LEN: usize = 32 + 32 + 8 + 8 + 8 + 4;

fn write_header(w: &mut Writer, h: &BlockHeader) {
    w.u8(HEADER_VERSION);
    w.u32(h.slot.thread);
    w.u64(h.slot.period);
    w.u32(h.creator.0);
    w.len(h.parents.len());
    for p in &h.parents {
        w.digest(p);
    }
    w.len(h.endorsements.len());
    for e in &h.endorsements {
        w.digest(&e.endorsed_block);
        w.u32(e.slot.thread);
        w.u64(e.slot.period);
        w.u32(e.index);
        w.u32(e.creator.0);
    }
    w.u64(h.tx_count);
    w.digest(&h.tx_root);
    w.u64(h.size_bits);
}

fn read_header(r: &mut Reader<'_>) -> Result<BlockHeader, CodecError> {
    let version = r.u8()?;
    if version != HEADER_VERSION {
        return Err(CodecError::Version(version));
    }
    let thread = r.u32()?;
    let period = r.u64()?;
    let creator = NodeId(r.u32()?);
    let n = r.len(32)?;
    let parents = (0..n).map(|_| r.digest()).collect::<Result<Vec<_>, _>>()?;
    let n = r.len(ENDORSEMENT_LEN)?;
    let mut endorsements = Vec::with_capacity(n);
    for _ in 0..n {
        let endorsed_block = r.digest()?;
        let e_thread = r.u32()?;
        let e_period = r.u64()?;
        endorsements.push(Endorsement {
            endorsed_block,
            slot: Slot::new(e_thread, e_period),
            index: r.u32()?,
            creator: NodeId(r.u32()?),
        });
    }
    Ok(BlockHeader {
        slot: Slot::new(thread, period),
        creator,
        parents,
        endorsements,
        tx_count: r.u64()?,
        tx_root: r.digest()?,
        size_bits: r.u64()?,
    })
}

fn write_transaction(w: &mut Writer, tx: &Transaction) {
    w.digest(&tx.sender.0);
    w.digest(&tx.receiver.0);
    w.u64(tx.amount);
    w.u64(tx.fee);
    w.u64(tx.nonce);
    w.u32(tx.size_bits);
}

fn read_transaction(r: &mut Reader<'_>) -> Result<Transaction, CodecError> {
    Ok(Transaction {
        sender: Address(r.digest()?),
        receiver: Address(r.digest()?),
        amount: r.u64()?,
        fee: r.u64()?,
        nonce: r.u64()?,
        size_bits: r.u32()?,
    })
}

pub fn encode_header(header: &BlockHeader) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(
        64 + 32 * header.parents.len() + ENDORSEMENT_LEN * header.endorsements.len(),
    ));
    write_header(&mut w, header);
    w.0
}

pub fn decode_header(bytes: &[u8]) -> Result<BlockHeader, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = read_header(&mut r)?;
    r.finish()?;
    Ok(header)
}

pub fn encode_transactions(transactions: &[Transaction]) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(4 + TRANSACTION_LEN * transactions.len()));
    w.len(transactions.len());
    for tx in transactions {
        write_transaction(&mut w, tx);
    }
    w.0
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let header = encode_header(&block.header);
    let mut w = Writer(Vec::with_capacity(
        4 + header.len() + 4 + TRANSACTION_LEN * block.transactions.len(),
    ));
    w.len(header.len());
    w.0.extend_from_slice(&header);
    w.len(block.transactions.len());
    for tx in &block.transactions {
        write_transaction(&mut w, tx);
    }
    w.0
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header_len = r.len(1)?;
    let header = decode_header(r.take(header_len)?)?;
    let n = r.len(TRANSACTION_LEN)?;
    let transactions = (0..n)
        .map(|_| read_transaction(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(Block {
        header,
        transactions,
    })
}

fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

pub fn header_id(header: &BlockHeader) -> Digest {
    sha256(&encode_header(header))
}

pub fn transactions_root(transactions: &[Transaction]) -> Digest {
    sha256(&encode_transactions(transactions))
}

/// Size in bits of an encoded header with `parents` parent links and
/// `endorsements` filled endorsement slots.
pub fn header_size_bits(parents: usize, endorsements: usize) -> u64 {
    let bytes = 1 + 4 + 8 + 4 + 4 + 32 * parents + 4 + ENDORSEMENT_LEN * endorsements + 8 + 32 + 8;
    8 * bytes as u64
}
