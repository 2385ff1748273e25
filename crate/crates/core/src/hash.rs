//! SHA-256 digests, Merkle roots, and shard mapping.

use sha2::{Digest as _, Sha256};

use crate::types::{Digest, EmptyBatch, ShardId, TxId};
use crate::ConfigError;

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

fn sha256_pair(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(left.0);
    h.update(right.0);
    Digest(h.finalize().into())
}

pub fn compute_tx_id(payload: &[u8]) -> TxId {
    sha256(payload)
}

/// Binary Merkle root over `leaves` in order.
///
/// Leaves are hashed once before pairing; a level with an odd node count
/// pairs its last node with itself.
pub fn merkle_root(leaves: &[TxId]) -> Result<Digest, EmptyBatch> {
    if leaves.is_empty() {
        return Err(EmptyBatch);
    }
    let mut level: Vec<Digest> = leaves.iter().map(|l| sha256(&l.0)).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            let right = pair.get(1).unwrap_or(&pair[0]);
            next.push(sha256_pair(&pair[0], right));
        }
        level = next;
    }
    Ok(level[0])
}

/// CRC32 (IEEE) of the transaction id, reduced modulo the shard count.
pub fn map_to_shard(tx_id: &TxId, n_shards: u32) -> Result<ShardId, ConfigError> {
    if n_shards == 0 {
        return Err(ConfigError::NoShards);
    }
    Ok(ShardId(crc32fast::hash(&tx_id.0) % n_shards))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bitwise CRC32-IEEE (reflected polynomial 0xEDB88320).
    fn crc32_reference(data: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &byte in data {
            crc ^= u32::from(byte);
            for _ in 0..8 {
                let mask = (crc & 1).wrapping_neg();
                crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
            }
        }
        !crc
    }

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            sha256(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            compute_tx_id(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(compute_tx_id(b"same"), compute_tx_id(b"same"));
    }

    #[test]
    fn crc_reference_matches_check_value() {
        // Standard CRC-32 check value for "123456789".
        assert_eq!(crc32_reference(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn shard_of_abc_matches_reference_crc() {
        let id = compute_tx_id(b"abc");
        let expected = crc32_reference(&id.0) % 4;
        assert_eq!(map_to_shard(&id, 4).unwrap(), ShardId(expected));
        assert_eq!(map_to_shard(&id, 1).unwrap(), ShardId(0));
    }

    #[test]
    fn zero_shards_is_config_error() {
        assert!(matches!(
            map_to_shard(&Digest::ZERO, 0),
            Err(ConfigError::NoShards)
        ));
    }

    #[test]
    fn shard_load_is_near_uniform() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut counts = [0u32; 8];
        let total = 100_000u32;
        for _ in 0..total {
            let mut id = [0u8; 32];
            rng.fill_bytes(&mut id);
            counts[map_to_shard(&Digest(id), 8).unwrap().0 as usize] += 1;
        }
        let expected = f64::from(total) / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (f64::from(c) - expected).powi(2) / expected)
            .sum();
        // 7 degrees of freedom, 99.9th percentile is 24.32.
        assert!(chi2 < 24.32, "chi2 = {chi2}");
        for c in counts {
            assert!((f64::from(c) - expected).abs() / expected < 0.05);
        }
    }

    #[test]
    fn merkle_small_trees() {
        let a = sha256(b"a");
        let b = sha256(b"b");
        let c = sha256(b"c");
        assert_eq!(merkle_root(&[a]).unwrap(), sha256(&a.0));
        assert_eq!(
            merkle_root(&[a, b]).unwrap(),
            sha256_pair(&sha256(&a.0), &sha256(&b.0))
        );
        assert_eq!(
            merkle_root(&[a, b, c]).unwrap(),
            merkle_root(&[a, b, c, c]).unwrap()
        );
        assert_eq!(merkle_root(&[]), Err(EmptyBatch));
    }

    // Recursive construction: split at the largest power of two below n,
    // padding the odd tail by repeating the last leaf at each level.
    fn brute_force_root(leaves: &[Digest]) -> Digest {
        let mut nodes: Vec<Vec<u8>> = leaves.iter().map(|l| sha256(&l.0).0.to_vec()).collect();
        while nodes.len() > 1 {
            if nodes.len() % 2 == 1 {
                nodes.push(nodes.last().unwrap().clone());
            }
            nodes = nodes
                .chunks(2)
                .map(|p| {
                    let mut cat = p[0].clone();
                    cat.extend_from_slice(&p[1]);
                    sha256(&cat).0.to_vec()
                })
                .collect();
        }
        Digest(nodes[0].clone().try_into().unwrap())
    }

    #[test]
    fn merkle_matches_brute_force_up_to_17_leaves() {
        let leaves: Vec<Digest> = (0u8..17).map(|i| sha256(&[i])).collect();
        for n in 1..=leaves.len() {
            assert_eq!(
                merkle_root(&leaves[..n]).unwrap(),
                brute_force_root(&leaves[..n])
            );
        }
    }

    #[test]
    fn merkle_is_order_sensitive() {
        let leaves: Vec<Digest> = (0u8..6).map(|i| sha256(&[i])).collect();
        let mut swapped = leaves.clone();
        swapped.swap(1, 4);
        assert_ne!(
            merkle_root(&leaves).unwrap(),
            merkle_root(&swapped).unwrap()
        );
    }
}
