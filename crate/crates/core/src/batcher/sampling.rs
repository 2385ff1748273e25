//! Probabilistic batch verification.

use rand::Rng;

use crate::router::TxValidator;
use crate::types::{Batch, Transaction, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampled {
    Ok,
    Invalid(TxId),
}

/// Validates `min(r, M)` distinct transactions chosen uniformly at random.
pub fn sample_verify<R: Rng + ?Sized>(
    txs: &[Transaction],
    r: usize,
    rng: &mut R,
    validator: &dyn TxValidator,
) -> Sampled {
    let m = txs.len();
    let picks = rand::seq::index::sample(rng, m, r.min(m));
    for i in picks.iter() {
        if validator.check(&txs[i]).is_err() {
            return Sampled::Invalid(txs[i].id());
        }
    }
    Sampled::Ok
}

pub fn sample_verify_batch<R: Rng + ?Sized>(
    batch: &Batch,
    r: usize,
    rng: &mut R,
    validator: &dyn TxValidator,
) -> Sampled {
    sample_verify(&batch.txs, r, rng, validator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::Reject;
    use rand::SeedableRng;

    /// Payloads starting with 0xFF are invalid.
    struct Marker;

    impl TxValidator for Marker {
        fn check(&self, tx: &Transaction) -> Result<(), Reject> {
            if tx.payload()[0] == 0xFF {
                Err(Reject::BadSignature)
            } else {
                Ok(())
            }
        }
    }

    fn batch(m: usize, k: usize) -> Vec<Transaction> {
        (0..m)
            .map(|i| {
                let tag = if i < k { 0xFF } else { 0x01 };
                Transaction::new(vec![tag, (i >> 8) as u8, i as u8])
            })
            .collect()
    }

    #[test]
    fn exhaustive_sample_always_detects() {
        let txs = batch(8, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert!(matches!(
                sample_verify(&txs, 8, &mut rng, &Marker),
                Sampled::Invalid(_)
            ));
            assert!(matches!(
                sample_verify(&txs, 50, &mut rng, &Marker),
                Sampled::Invalid(_)
            ));
        }
    }

    #[test]
    fn clean_batch_always_ok() {
        let txs = batch(30, 0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            assert_eq!(sample_verify(&txs, 5, &mut rng, &Marker), Sampled::Ok);
        }
    }

    #[test]
    fn half_invalid_single_sample_misses_half_the_time() {
        // C(2,1)/C(4,1) = 0.5
        let txs = batch(4, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000;
        let misses = (0..trials)
            .filter(|_| sample_verify(&txs, 1, &mut rng, &Marker) == Sampled::Ok)
            .count();
        let rate = misses as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }
}
