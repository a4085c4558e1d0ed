//! Runtime institutional governance for multi-agent games.
//!
//! An institution is a governance graph of states and sanctioned
//! transitions plus a manifest of rules that trigger them. The engine
//! watches public signals, moves agents through the graph, and subtracts
//! levies and sanctions from their payoffs so that compliant play becomes a
//! best response.

pub mod agents;
pub mod analysis;
pub mod engine;
pub mod game;
pub mod graph;
pub mod manifest;
pub mod seed;
pub mod simulator;
