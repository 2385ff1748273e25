//! Signing and verification.
//!
//! Two schemes sit behind one interface: Ed25519 for real key material and a
//! keyed-MAC stub for fast simulation. The MAC stub's "public key" is the
//! shared secret itself, so it only makes sense inside a trusted simulator.

use std::fmt;

use ed25519_dalek::{Signer as _, Verifier as _};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::types::PartyId;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureScheme {
    #[default]
    Ed25519,
    KeyedMac,
}

#[derive(Clone)]
enum SecretInner {
    Ed25519(Box<ed25519_dalek::SigningKey>),
    Mac([u8; 32]),
}

/// A party's (or client's) private signing key.
#[derive(Clone)]
pub struct SigningKey {
    inner: SecretInner,
    seed: [u8; 32],
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey")
            .field("scheme", &self.scheme())
            .finish_non_exhaustive()
    }
}

fn mac(key: &[u8; 32], msg: &[u8]) -> Signature {
    let mut out = [0u8; 64];
    let mut h = Sha256::new();
    h.update(b"arma-mac");
    h.update(key);
    h.update(msg);
    out[..32].copy_from_slice(&h.finalize());
    Signature(out)
}

impl SigningKey {
    pub fn from_seed(scheme: SignatureScheme, seed: [u8; 32]) -> Self {
        let inner = match scheme {
            SignatureScheme::Ed25519 => {
                SecretInner::Ed25519(Box::new(ed25519_dalek::SigningKey::from_bytes(&seed)))
            }
            SignatureScheme::KeyedMac => SecretInner::Mac(seed),
        };
        SigningKey { inner, seed }
    }

    pub fn scheme(&self) -> SignatureScheme {
        match self.inner {
            SecretInner::Ed25519(_) => SignatureScheme::Ed25519,
            SecretInner::Mac(_) => SignatureScheme::KeyedMac,
        }
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn public(&self) -> PublicKey {
        match &self.inner {
            SecretInner::Ed25519(k) => PublicKey {
                inner: PublicInner::Ed25519(k.verifying_key()),
            },
            SecretInner::Mac(k) => PublicKey {
                inner: PublicInner::Mac(*k),
            },
        }
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        match &self.inner {
            SecretInner::Ed25519(k) => Signature(k.sign(msg).to_bytes()),
            SecretInner::Mac(k) => mac(k, msg),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
enum PublicInner {
    Ed25519(ed25519_dalek::VerifyingKey),
    Mac([u8; 32]),
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    inner: PublicInner,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PublicKey({:?}, {})",
            self.scheme(),
            &hex::encode(self.to_bytes())[..12]
        )
    }
}

impl PublicKey {
    pub fn from_bytes(scheme: SignatureScheme, bytes: [u8; 32]) -> Option<Self> {
        let inner = match scheme {
            SignatureScheme::Ed25519 => {
                PublicInner::Ed25519(ed25519_dalek::VerifyingKey::from_bytes(&bytes).ok()?)
            }
            SignatureScheme::KeyedMac => PublicInner::Mac(bytes),
        };
        Some(PublicKey { inner })
    }

    pub fn scheme(&self) -> SignatureScheme {
        match self.inner {
            PublicInner::Ed25519(_) => SignatureScheme::Ed25519,
            PublicInner::Mac(_) => SignatureScheme::KeyedMac,
        }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        match &self.inner {
            PublicInner::Ed25519(k) => k.to_bytes(),
            PublicInner::Mac(k) => *k,
        }
    }

    /// Never panics: malformed signatures simply fail.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        match &self.inner {
            PublicInner::Ed25519(k) => {
                let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
                k.verify(msg, &sig).is_ok()
            }
            PublicInner::Mac(k) => mac(k, msg) == *sig,
        }
    }
}

/// Derives a deterministic 32-byte seed for test key material.
pub fn derive_test_seed(seed: u64, label: &str, index: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"arma-test-key/");
    h.update(label.as_bytes());
    h.update(seed.to_be_bytes());
    h.update(index.to_be_bytes());
    h.finalize().into()
}

/// Public keys of every party and every known client.
#[derive(Clone, Debug)]
pub struct Keyring {
    pub scheme: SignatureScheme,
    pub parties: Vec<PublicKey>,
    pub clients: Vec<PublicKey>,
}

impl Keyring {
    pub fn party(&self, p: PartyId) -> Option<&PublicKey> {
        self.parties.get(p.0 as usize)
    }

    pub fn client(&self, c: u32) -> Option<&PublicKey> {
        self.clients.get(c as usize)
    }

    pub fn verify_party(&self, p: PartyId, msg: &[u8], sig: &Signature) -> bool {
        self.party(p).is_some_and(|k| k.verify(msg, sig))
    }
}

/// Secret keys for a whole deployment, derived from one seed (test only).
#[derive(Clone, Debug)]
pub struct TestKeys {
    pub parties: Vec<SigningKey>,
    pub clients: Vec<SigningKey>,
}

impl TestKeys {
    pub fn generate(scheme: SignatureScheme, seed: u64, n_parties: u32, n_clients: u32) -> Self {
        let parties = (0..n_parties)
            .map(|i| SigningKey::from_seed(scheme, derive_test_seed(seed, "party", i)))
            .collect();
        let clients = (0..n_clients)
            .map(|i| SigningKey::from_seed(scheme, derive_test_seed(seed, "client", i)))
            .collect();
        TestKeys { parties, clients }
    }

    pub fn keyring(&self) -> Keyring {
        let scheme = self
            .parties
            .first()
            .map(SigningKey::scheme)
            .unwrap_or_default();
        Keyring {
            scheme,
            parties: self.parties.iter().map(SigningKey::public).collect(),
            clients: self.clients.iter().map(SigningKey::public).collect(),
        }
    }
}
