//! Address balances and sharded block application.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, Block};
use crate::params::ProtocolParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction {index}: balance {balance} cannot cover {needed}")]
    InsufficientBalance {
        index: usize,
        address: Address,
        balance: u64,
        needed: u64,
    },
    #[error("transaction {index} spends from thread {sender_thread} in a thread-{block_thread} block")]
    Shard {
        index: usize,
        sender_thread: u32,
        block_thread: u32,
    },
    #[error("transaction {index}: amount overflows")]
    Overflow { index: usize },
}

/// One balance movement produced by applying a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceChange {
    pub address: Address,
    pub delta: i128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    balances: BTreeMap<Address, u64>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_balances(balances: impl IntoIterator<Item = (Address, u64)>) -> Self {
        Ledger {
            balances: balances.into_iter().filter(|&(_, b)| b > 0).collect(),
        }
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.balances.get(address).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> impl Iterator<Item = (&Address, &u64)> {
        self.balances.iter()
    }

    /// Applies every transaction of `block`, or none of them. Fees leave
    /// circulation. Returns the per-transaction balance changes in order.
    pub fn apply_block(
        &mut self,
        block: &Block,
        params: &ProtocolParams,
    ) -> Result<Vec<BalanceChange>, LedgerError> {
        let block_thread = block.header.thread();
        let mut staged: BTreeMap<Address, u64> = BTreeMap::new();
        let mut journal = Vec::with_capacity(2 * block.transactions.len());
        for (index, tx) in block.transactions.iter().enumerate() {
            let sender_thread = tx.thread(params);
            if sender_thread != block_thread {
                return Err(LedgerError::Shard {
                    index,
                    sender_thread,
                    block_thread,
                });
            }
            let needed = tx
                .amount
                .checked_add(tx.fee)
                .ok_or(LedgerError::Overflow { index })?;
            let balance = *staged
                .entry(tx.sender)
                .or_insert_with(|| self.balance(&tx.sender));
            let left = balance
                .checked_sub(needed)
                .ok_or(LedgerError::InsufficientBalance {
                    index,
                    address: tx.sender,
                    balance,
                    needed,
                })?;
            staged.insert(tx.sender, left);
            let received = staged
                .entry(tx.receiver)
                .or_insert_with(|| self.balance(&tx.receiver));
            *received = received
                .checked_add(tx.amount)
                .ok_or(LedgerError::Overflow { index })?;
            journal.push(BalanceChange {
                address: tx.sender,
                delta: -i128::from(needed),
            });
            journal.push(BalanceChange {
                address: tx.receiver,
                delta: i128::from(tx.amount),
            });
        }
        for (address, balance) in staged {
            if balance == 0 {
                self.balances.remove(&address);
            } else {
                self.balances.insert(address, balance);
            }
        }
        Ok(journal)
    }
}
