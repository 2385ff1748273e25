//! Stateless ingress: validate, map to a shard, forward.

use std::sync::Arc;

use crate::codec::client_signing_bytes;
use crate::crypto::Keyring;
use crate::hash::map_to_shard;
use crate::messages::{Ack, AckCode, Message};
use crate::types::{PartyId, ShardId, Transaction};
use crate::Config;

/// First payload byte of a reconfiguration transaction.
pub const RECONFIG_MARKER: u8 = 0xC0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reject {
    Empty,
    Oversized,
    BadSignature,
}

impl Reject {
    pub fn ack_code(self) -> AckCode {
        match self {
            Reject::Empty => AckCode::RejectEmpty,
            Reject::Oversized => AckCode::RejectOversized,
            Reject::BadSignature => AckCode::RejectBadSignature,
        }
    }
}

/// Full transaction validation, shared by routers and batch sampling.
pub trait TxValidator: Send + Sync {
    fn check(&self, tx: &Transaction) -> Result<(), Reject>;
}

/// Length bounds plus (optionally) the client signature.
#[derive(Clone, Debug)]
pub struct StandardValidator {
    pub max_tx_bytes: usize,
    pub verify_sigs: bool,
    pub keyring: Arc<Keyring>,
}

impl StandardValidator {
    pub fn new(cfg: &Config, keyring: Arc<Keyring>) -> Self {
        StandardValidator {
            max_tx_bytes: cfg.max_tx_bytes,
            verify_sigs: cfg.verify_client_sigs,
            keyring,
        }
    }
}

impl TxValidator for StandardValidator {
    fn check(&self, tx: &Transaction) -> Result<(), Reject> {
        let len = tx.payload().len();
        if len == 0 {
            return Err(Reject::Empty);
        }
        if len > self.max_tx_bytes {
            return Err(Reject::Oversized);
        }
        if self.verify_sigs {
            let ok = tx.client_sig().is_some_and(|cs| {
                self.keyring
                    .client(cs.client)
                    .is_some_and(|k| k.verify(&client_signing_bytes(tx.payload()), &cs.sig))
            });
            if !ok {
                return Err(Reject::BadSignature);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unavailable;

/// Where a router delivers accepted transactions.
pub trait RouterSinks {
    fn to_batcher(&mut self, shard: ShardId, msg: Message) -> Result<(), Unavailable>;
    fn to_consenter(&mut self, msg: Message) -> Result<(), Unavailable>;
}

pub fn is_reconfig(tx: &Transaction) -> bool {
    tx.payload().first() == Some(&RECONFIG_MARKER)
}

#[derive(Clone)]
pub struct RouterNode {
    pub party: PartyId,
    n_shards: u32,
    validator: Arc<dyn TxValidator>,
}

impl RouterNode {
    pub fn new(party: PartyId, cfg: &Config, validator: Arc<dyn TxValidator>) -> Self {
        RouterNode {
            party,
            n_shards: cfg.n_shards,
            validator,
        }
    }

    pub fn validate_tx(&self, tx: &Transaction) -> Result<(), Reject> {
        self.validator.check(tx)
    }

    pub fn shard_of(&self, tx: &Transaction) -> ShardId {
        // n_shards was validated non-zero with the config.
        map_to_shard(&tx.id(), self.n_shards).unwrap_or_default()
    }

    /// Validates and forwards one transaction, returning the client ack.
    pub fn route(&self, tx: Transaction, sinks: &mut dyn RouterSinks) -> Ack {
        let tx_id = tx.id();
        let mut ack = Ack {
            code: AckCode::Accepted,
            party: self.party,
            shard: None,
            tx_id,
        };
        if let Err(r) = self.validate_tx(&tx) {
            ack.code = r.ack_code();
            return ack;
        }
        let sent = if is_reconfig(&tx) {
            sinks.to_consenter(Message::Transaction(tx))
        } else {
            let shard = self.shard_of(&tx);
            ack.shard = Some(shard);
            sinks.to_batcher(shard, Message::Transaction(tx))
        };
        if sent.is_err() {
            ack.code = AckCode::Unavailable;
            ack.shard = None;
        }
        ack
    }
}
