//! The semilattice of partial functions under restriction.
//!
//! With at most one item bit per event, restriction is bitwise inclusion,
//! meet is bitwise AND and a compatible join is bitwise OR.

use crate::encoding::History;
use crate::error::{Error, Result};

/// `f ≤ g`: `g` extends `f`.
#[inline]
pub fn restriction_leq(f: History, g: History) -> bool {
    f.0 & g.0 == f.0
}

/// Restriction of `f` to the events where `f` and `g` agree.
#[inline]
pub fn meet(f: History, g: History) -> History {
    History(f.0 & g.0)
}

/// Agreement on the common domain.
#[inline]
pub fn compatible(f: History, g: History) -> bool {
    History(f.0 | g.0).is_valid()
}

pub fn compatible_set(fs: &[History]) -> bool {
    History(fs.iter().fold(0, |acc, f| acc | f.0)).is_valid()
}

/// Join of a compatible set; the empty join is the empty history.
pub fn join(fs: &[History]) -> Result<History> {
    let j = History(fs.iter().fold(0, |acc, f| acc | f.0));
    if j.is_valid() {
        Ok(j)
    } else {
        Err(Error::Precondition("join of incompatible histories".into()))
    }
}
