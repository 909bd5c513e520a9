//! Core library of the flowopt toolkit: a reordering optimizer for
//! tree-shaped data flows whose operators wrap opaque user-defined functions.
//!
//! The pieces fit together like this:
//!
//! * [`value`] — records, typed values, attribute spaces, and bag equality.
//! * [`tac`] — the textual three-address-code UDF language: parser, control
//!   flow graph, and interpreter.
//! * [`sca`] — static analysis of UDF code: read/write set estimation, emit
//!   bounds, and key-group preservation, plus behavioural oracles that check
//!   those estimates against ground truth on small domains.
//! * [`flow`] — flow documents: sources, operators, sink, and the global
//!   attribute space derived from them.
//! * [`reorder`] — the pairwise reordering conditions between adjacent
//!   operators.
//! * [`enumerate`] — exhaustive enumeration of equivalent plans.
//! * [`engine`] — a desk-scale executor used to verify plan equivalence and
//!   rank plans by cost.

pub mod error;
pub mod value;

pub mod engine;
pub mod enumerate;
pub mod flow;
pub mod reorder;
pub mod sca;
pub mod tac;
pub mod testgen;

pub use error::Error;
pub use value::{AttributeId, DataSet, Record, Value, ValueTag};
