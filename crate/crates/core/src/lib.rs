//! Context-adaptive cooperation (CAC) engines and the protocols built on
//! them: restrained and cascading consensus, and short naming.
//!
//! Every protocol here is a deterministic state machine. Network traffic,
//! timers and the global-consensus oracle are surfaced as [`process::Action`]s
//! and driven by an external scheduler.

pub mod cascade;
pub mod codec;
pub mod crypto;
pub mod engine;
pub mod naming;
pub mod optimal;
pub mod process;
pub mod rc;
pub mod simple;
pub mod statement;
pub mod types;

#[cfg(test)]
mod testkit;

pub use crypto::{KeyPair, KnowledgeProof, Provider, PublicKey, Signature};
pub use engine::{
    AcceptPath, AcceptedEntry, AnyCac, CacConfig, CacEngine, CacEvent, ConfigError, DropReason, Snapshot,
};
pub use optimal::OptimalCac;
pub use process::{Action, DecidePath, Dest, Layer, Note, Process};
pub use simple::SimpleCac;
pub use statement::{verify_acceptance, AcceptanceProof, Roster, SigStore, Statement, VerifyContext};
pub use types::{choice, CandidateSet, Pair, ProcessId};
