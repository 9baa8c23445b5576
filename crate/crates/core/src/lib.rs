//! Core of the proactive-agent harness: message protocol, scenarios,
//! dialog runtime and orchestration, reference actors, evaluation and
//! data synthesis. Needs only `alloc`; IO lives in the `proact` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chat;
pub mod environment;
pub mod evaluation;
pub mod json;
pub mod prompts;
pub mod protocol;
pub mod runtime;
pub mod orchestrator;
pub mod actors;
pub mod scenario;
pub mod synthesis;
