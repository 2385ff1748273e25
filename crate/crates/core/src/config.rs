//! Deployment parameters shared by every node.
//!
//! Durations are logical microseconds so the same values drive the
//! simulator and a real deployment.

use serde::{Deserialize, Serialize};

use crate::crypto::SignatureScheme;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("n_parties ({n}) must be at least 3f+1 = {}", 3 * f + 1)]
    TooFewParties { n: u32, f: u32 },
    #[error("shard count must be at least 1")]
    NoShards,
    #[error("complaint_timeout ({complaint}us) must exceed forward_timeout ({forward}us)")]
    TimerOrder { forward: u64, complaint: u64 },
    #[error("sample_size must be in [1, batch_max_txs], got {0}")]
    SampleSize(usize),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub n_parties: u32,
    pub f: u32,
    pub n_shards: u32,
    pub batch_max_txs: usize,
    pub batch_max_bytes: usize,
    pub batch_timeout_us: u64,
    pub sample_size: usize,
    /// Stage one: how long a secondary waits before forwarding a tx.
    pub forward_timeout_us: u64,
    /// Stage two: total time from first sighting until a complaint.
    pub complaint_timeout_us: u64,
    pub epoch_length_us: u64,
    pub max_epoch_skew: u64,
    pub orphan_ptr_cap: usize,
    pub max_tx_bytes: usize,
    pub max_pool_txs: usize,
    pub max_frame_bytes: usize,
    pub verify_client_sigs: bool,
    pub scheme: SignatureScheme,
    /// Secondary pull re-issue interval.
    pub pull_timeout_us: u64,
    /// Node timer cadence.
    pub tick_us: u64,
    /// Upper bound the pending share list is expected to respect.
    pub max_pending_shares: usize,
    /// How many times a batcher re-submits a share pruned before collection.
    pub resubmit_limit: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n_parties: 4,
            f: 1,
            n_shards: 1,
            batch_max_txs: 500,
            batch_max_bytes: 1 << 20,
            batch_timeout_us: 20_000,
            sample_size: 10,
            forward_timeout_us: 400_000,
            complaint_timeout_us: 800_000,
            epoch_length_us: 1_000_000,
            max_epoch_skew: 5,
            orphan_ptr_cap: 8,
            max_tx_bytes: 64 * 1024,
            max_pool_txs: 1_000_000,
            max_frame_bytes: 64 << 20,
            verify_client_sigs: true,
            scheme: SignatureScheme::Ed25519,
            pull_timeout_us: 40_000,
            tick_us: 5_000,
            max_pending_shares: 100_000,
            resubmit_limit: 3,
        }
    }
}

impl Config {
    /// A config for `n` parties tolerating `f` faults with `k` shards.
    pub fn new(n_parties: u32, f: u32, n_shards: u32) -> Self {
        Config {
            n_parties,
            f,
            n_shards,
            ..Config::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_parties < 3 * self.f + 1 {
            return Err(ConfigError::TooFewParties {
                n: self.n_parties,
                f: self.f,
            });
        }
        if self.n_shards == 0 {
            return Err(ConfigError::NoShards);
        }
        if self.complaint_timeout_us <= self.forward_timeout_us {
            return Err(ConfigError::TimerOrder {
                forward: self.forward_timeout_us,
                complaint: self.complaint_timeout_us,
            });
        }
        if self.sample_size == 0 || self.sample_size > self.batch_max_txs {
            return Err(ConfigError::SampleSize(self.sample_size));
        }
        for (name, v) in [
            ("batch_max_txs", self.batch_max_txs as u64),
            ("batch_max_bytes", self.batch_max_bytes as u64),
            ("epoch_length_us", self.epoch_length_us),
            ("tick_us", self.tick_us),
            ("pull_timeout_us", self.pull_timeout_us),
            ("forward_timeout_us", self.forward_timeout_us),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        Ok(())
    }

    /// Smallest set size whose pairwise intersections hold a correct party.
    pub fn quorum(&self) -> usize {
        quorum_size(self.n_parties, self.f)
    }

    /// F+1: the share threshold and the complaint threshold.
    pub fn threshold(&self) -> usize {
        self.f as usize + 1
    }

    pub fn epoch_at(&self, now_us: u64) -> u64 {
        now_us / self.epoch_length_us
    }

    /// Width of one tracking bucket.
    pub fn bucket_width_us(&self) -> u64 {
        (self.forward_timeout_us / 4).max(1)
    }
}

/// Smallest `q` with `2q - n >= f + 1`, i.e. `ceil((n + f + 1) / 2)`.
pub fn quorum_size(n: u32, f: u32) -> usize {
    (n + f + 1).div_ceil(2) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_arithmetic() {
        for n in 4u32..=16 {
            let f = (n - 1) / 3;
            let q = quorum_size(n, f) as i64;
            let (n, f) = (i64::from(n), i64::from(f));
            assert!(2 * q - n > f, "n={n}");
            assert!(q <= n - f, "n={n}");
            // minimality
            assert!(2 * (q - 1) - n < f + 1, "n={n}");
            if n == 3 * f + 1 {
                assert_eq!(q, 2 * f + 1);
            }
        }
        assert_eq!(quorum_size(4, 1), 3);
        assert_eq!(quorum_size(10, 3), 7);
    }

    #[test]
    fn quorum_below_n_minus_f_when_f_is_small() {
        // N = 10 with F = 1: the quorum is smaller than N - F.
        assert_eq!(quorum_size(10, 1), 6);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        assert!(Config::new(4, 1, 2).validate().is_ok());
        assert!(matches!(
            Config::new(3, 1, 1).validate(),
            Err(ConfigError::TooFewParties { .. })
        ));
        assert_eq!(Config::new(4, 1, 0).validate(), Err(ConfigError::NoShards));
        let mut c = Config::new(4, 1, 1);
        c.complaint_timeout_us = c.forward_timeout_us;
        assert!(matches!(c.validate(), Err(ConfigError::TimerOrder { .. })));
        let mut c = Config::new(4, 1, 1);
        c.sample_size = c.batch_max_txs + 1;
        assert!(matches!(c.validate(), Err(ConfigError::SampleSize(_))));
    }
}
