use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("thread count {0} is not a positive power of two")]
    ThreadCount(u32),
    #[error("slot interval must be positive and finite, got {0}")]
    SlotInterval(f64),
    #[error("max block size must be positive")]
    BlockSize,
    #[error("finality parameter must be positive")]
    Finality,
}

/// Protocol constants shared by every node: `(T, t0, S_B, F, E)`.
///
/// The finality threshold and the consensus bitrate are derived on demand and
/// never stored, so they cannot drift from the parameters they depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    pub thread_count: u32,
    /// Seconds between two consecutive slots of one thread.
    pub slot_interval: f64,
    /// Maximum block size in bits.
    pub max_block_size: u64,
    pub finality: u32,
    pub endorsement_slots: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        // 12 Mb/s consensus bitrate with 32 threads every 32 s.
        Self {
            thread_count: 32,
            slot_interval: 32.0,
            max_block_size: 12_000_000,
            finality: 64,
            endorsement_slots: 0,
        }
    }
}

impl ProtocolParams {
    pub fn new(
        thread_count: u32,
        slot_interval: f64,
        max_block_size: u64,
        finality: u32,
        endorsement_slots: u32,
    ) -> Result<Self, ParamsError> {
        let params = Self {
            thread_count,
            slot_interval,
            max_block_size,
            finality,
            endorsement_slots,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.thread_count == 0 || !self.thread_count.is_power_of_two() {
            return Err(ParamsError::ThreadCount(self.thread_count));
        }
        if !(self.slot_interval.is_finite() && self.slot_interval > 0.0) {
            return Err(ParamsError::SlotInterval(self.slot_interval));
        }
        if self.max_block_size == 0 {
            return Err(ParamsError::BlockSize);
        }
        if self.finality == 0 {
            return Err(ParamsError::Finality);
        }
        Ok(())
    }

    /// `Δf⁰ = F·(E+1)`.
    pub fn finality_threshold(&self) -> u64 {
        u64::from(self.finality) * (u64::from(self.endorsement_slots) + 1)
    }

    /// `C_B = T·S_B/t0` in bits per second.
    pub fn consensus_bitrate(&self) -> f64 {
        f64::from(self.thread_count) * self.max_block_size as f64 / self.slot_interval
    }

    /// Number of address prefix bits that select a thread (log2 T).
    pub fn thread_bits(&self) -> u32 {
        self.thread_count.trailing_zeros()
    }

    /// Seconds between two consecutive slots across all threads.
    pub fn slot_spacing(&self) -> f64 {
        self.slot_interval / f64::from(self.thread_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let p = ProtocolParams::new(32, 32.0, 12_000_000, 64, 8).unwrap();
        assert_eq!(p.finality_threshold(), 64 * 9);
        assert_eq!(p.consensus_bitrate(), 12_000_000.0);
        assert_eq!(p.thread_bits(), 5);
        assert_eq!(p.slot_spacing(), 1.0);
    }

    #[test]
    fn rejects_non_power_of_two_threads() {
        assert_eq!(
            ProtocolParams::new(24, 32.0, 1000, 64, 0),
            Err(ParamsError::ThreadCount(24))
        );
        assert!(ProtocolParams::new(0, 32.0, 1000, 64, 0).is_err());
        assert!(ProtocolParams::new(1, 32.0, 1000, 64, 0).is_ok());
    }

    #[test]
    fn rejects_bad_interval_and_finality() {
        assert!(ProtocolParams::new(2, 0.0, 1000, 64, 0).is_err());
        assert!(ProtocolParams::new(2, f64::NAN, 1000, 64, 0).is_err());
        assert!(ProtocolParams::new(2, 1.0, 1000, 0, 0).is_err());
    }
}
