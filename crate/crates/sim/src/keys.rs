//! Key directories: public keys for verification, seeds for test parties.
//!
//! Everything is derived from a seed and meant for tests only.

use std::fs;
use std::io;
use std::path::Path;

use arma_core::crypto::{Keyring, PublicKey, SignatureScheme, TestKeys};
use arma_core::Config;
use serde::{Deserialize, Serialize};

pub const KEYS_FORMAT: &str = "arma-keys/1";
pub const KEYS_FILE: &str = "keys.json";

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed key file: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub format: String,
    pub scheme: SignatureScheme,
    pub seed: u64,
    pub n_parties: u32,
    pub f: u32,
    /// Hex public keys, indexed by party.
    pub parties: Vec<String>,
    pub clients: Vec<String>,
}

impl KeyFile {
    pub fn new(keys: &TestKeys, cfg: &Config, seed: u64) -> Self {
        let hexes = |ks: &[arma_core::crypto::SigningKey]| {
            ks.iter()
                .map(|k| hex::encode(k.public().to_bytes()))
                .collect()
        };
        KeyFile {
            format: KEYS_FORMAT.to_string(),
            scheme: cfg.scheme,
            seed,
            n_parties: cfg.n_parties,
            f: cfg.f,
            parties: hexes(&keys.parties),
            clients: hexes(&keys.clients),
        }
    }

    pub fn keyring(&self) -> Result<Keyring, KeyError> {
        if self.format != KEYS_FORMAT {
            return Err(KeyError::Malformed(format!("format {:?}", self.format)));
        }
        let parse = |s: &String| {
            let bytes: [u8; 32] = hex::decode(s)
                .ok()
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| KeyError::Malformed(format!("bad key {s:?}")))?;
            PublicKey::from_bytes(self.scheme, bytes)
                .ok_or_else(|| KeyError::Malformed(format!("not a public key: {s:?}")))
        };
        Ok(Keyring {
            scheme: self.scheme,
            parties: self.parties.iter().map(parse).collect::<Result<_, _>>()?,
            clients: self.clients.iter().map(parse).collect::<Result<_, _>>()?,
        })
    }

    pub fn quorum(&self) -> usize {
        arma_core::config::quorum_size(self.n_parties, self.f)
    }
}

/// Writes `keys.json` and one secret seed file per party.
pub fn write_key_dir(dir: &Path, keys: &TestKeys, cfg: &Config, seed: u64) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let kf = KeyFile::new(keys, cfg, seed);
    let json = serde_json::to_string_pretty(&kf).expect("key file serializes");
    fs::write(dir.join(KEYS_FILE), json + "\n")?;
    for (i, k) in keys.parties.iter().enumerate() {
        fs::write(
            dir.join(format!("party-{i}.seed")),
            hex::encode(k.seed()) + "\n",
        )?;
    }
    Ok(())
}

pub fn read_key_dir(dir: &Path) -> Result<KeyFile, KeyError> {
    let path = dir.join(KEYS_FILE);
    let text = fs::read_to_string(&path).map_err(|source| KeyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| KeyError::Malformed(e.to_string()))
}
