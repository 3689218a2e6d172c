//! Multithreaded block DAG with transaction sharding, a deterministic
//! selection oracle, and the clique-based consensus rule.

pub mod chain;
pub mod codec;
pub mod consensus;
pub mod ledger;
pub mod params;
pub mod selection;
pub mod store;
pub mod trace;
pub mod validation;

pub use chain::{
    slot_timestamp, thread_of_address, Address, Block, BlockHeader, BlockId, Digest, Endorsement,
    NodeId, Slot, Transaction,
};
pub use consensus::{
    Admission, BlockStatus, CliqueView, CompatibilityState, ConsensusError, Settlement,
};
pub use ledger::{Ledger, LedgerError};
pub use params::{ParamsError, ProtocolParams};
pub use selection::{fitness, Role, SelectionOracle};
pub use store::{BlockIdx, BlockStore, WaitingPool};
pub use validation::{ValidationError, Violation};
