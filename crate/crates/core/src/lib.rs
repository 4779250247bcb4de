//! Allocation-only core of hopforge: learning to issue better multi-hop search
//! queries by trying several of them, scoring what they retrieve, and
//! optimizing the query policy on the resulting preferences.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! the network or threads lives in the `hopforge` crate; this crate only
//! exposes the traits those backends implement ([`retrieval::Retriever`],
//! [`policy::QueryPolicy`], [`reward::Generator`], [`sampler::Executor`]).

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod hash;
pub mod metrics;
pub mod policy;
pub mod prompt;
pub mod retrieval;
pub mod reward;
pub mod sampler;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
