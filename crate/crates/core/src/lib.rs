//! Enumeration and analysis of causally complete spaces of input histories.
//!
//! Histories are partial assignments of binary inputs to events, encoded as
//! bitvectors. Spaces are ∨-prime sets of histories; the causally complete
//! ones, modulo event-input permutations, are found by [`enumerator`], and
//! studied through their causaltopes and orders in [`causaltope`] and
//! [`analysis`].

pub mod analysis;
pub mod causaltope;
pub mod checkpoint;
pub mod encoding;
pub mod enumerator;
pub mod error;
pub mod histories;
pub mod orders;
pub mod spaces;
pub mod symmetry;
pub mod unionfind;

pub use encoding::{EventId, History, HistorySet};
pub use error::{Error, Result};
pub use orders::CausalOrder;
pub use spaces::{ExtSpace, Space};
