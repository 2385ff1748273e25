//! Addressing for node outputs.
//!
//! Nodes never send anything themselves; they return `Outbound` values and
//! let the driver (simulator or transport) deliver them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::messages::Message;
use crate::types::{PartyId, ShardId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Router(PartyId),
    Batcher(PartyId, ShardId),
    Consenter(PartyId),
    Assembler(PartyId),
    /// The total-order port.
    Sequencer,
    Client(u32),
}

impl Endpoint {
    pub fn party(&self) -> Option<PartyId> {
        match *self {
            Endpoint::Router(p)
            | Endpoint::Batcher(p, _)
            | Endpoint::Consenter(p)
            | Endpoint::Assembler(p) => Some(p),
            Endpoint::Sequencer | Endpoint::Client(_) => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Router(p) => write!(f, "router/{p}"),
            Endpoint::Batcher(p, s) => write!(f, "batcher/{p}/{s}"),
            Endpoint::Consenter(p) => write!(f, "consenter/{p}"),
            Endpoint::Assembler(p) => write!(f, "assembler/{p}"),
            Endpoint::Sequencer => f.write_str("sequencer"),
            Endpoint::Client(c) => write!(f, "client/{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub to: Endpoint,
    pub msg: Message,
}

/// Collected sends from one handler invocation.
#[derive(Debug, Default)]
pub struct Outbox {
    pub msgs: Vec<Outbound>,
}

impl Outbox {
    pub fn new() -> Self {
        Outbox::default()
    }

    pub fn send(&mut self, to: Endpoint, msg: Message) {
        self.msgs.push(Outbound { to, msg });
    }

    /// Sends `msg` to every consenter.
    pub fn to_consenters(&mut self, n_parties: u32, msg: Message) {
        for p in 0..n_parties {
            self.send(Endpoint::Consenter(PartyId(p)), msg.clone());
        }
    }

    pub fn take(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.msgs)
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }
}
