//! Bitvector primitives and the event / input / history encodings.
//!
//! A history is a partial function from events to binary inputs. The item
//! `(event, value)` has index `2 * event + value`, and a history is the
//! bitvector of its item indices. A set of histories is in turn the
//! bitvector indexed by history values, which needs arbitrary precision.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};

/// Maximum number of events supported by the letter encoding.
pub const MAX_EVENTS: usize = 26;

/// A set of histories, as a bitvector indexed by history values.
pub type HistorySet = BigUint;

/// Set operations shared by the fixed-width and arbitrary-precision bitvectors.
pub trait Bits: Sized + Clone {
    /// Elements in `self` but not in `other`.
    fn sub(&self, other: &Self) -> Self;
    fn is_subset(&self, other: &Self) -> bool;
    /// Set-bit positions in increasing order.
    fn iter_bits(&self) -> Vec<u64>;
}

macro_rules! impl_bits_prim {
    ($t:ty) => {
        impl Bits for $t {
            #[inline]
            fn sub(&self, other: &Self) -> Self {
                self ^ (self & other)
            }
            #[inline]
            fn is_subset(&self, other: &Self) -> bool {
                self & other == *self
            }
            fn iter_bits(&self) -> Vec<u64> {
                iter_ones(*self as u128).map(|i| i as u64).collect()
            }
        }
    };
}
impl_bits_prim!(u32);
impl_bits_prim!(u64);
impl_bits_prim!(u128);

impl Bits for BigUint {
    fn sub(&self, other: &Self) -> Self {
        self ^ (self & other)
    }
    fn is_subset(&self, other: &Self) -> bool {
        &(self & other) == self
    }
    fn iter_bits(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for (w, digit) in self.iter_u64_digits().enumerate() {
            let mut d = digit;
            while d != 0 {
                out.push(w as u64 * 64 + d.trailing_zeros() as u64);
                d &= d - 1;
            }
        }
        out
    }
}

/// Builds the arbitrary-precision bitvector `Σ 2^x` over the distinct elements.
pub fn bitvec<I: IntoIterator<Item = i64>>(elements: I) -> Result<BigUint> {
    let mut out = BigUint::zero();
    for x in elements {
        if x < 0 {
            return Err(Error::InvalidArgument(format!("negative bitvector element {x}")));
        }
        out.set_bit(x as u64, true);
    }
    Ok(out)
}

/// Fixed-width bitvector of small non-negative elements.
pub fn bitvec64<I: IntoIterator<Item = u32>>(elements: I) -> u64 {
    elements.into_iter().fold(0u64, |acc, x| acc | (1u64 << x))
}

pub fn sub<B: Bits>(u: &B, v: &B) -> B {
    u.sub(v)
}

pub fn is_subset<B: Bits>(u: &B, v: &B) -> bool {
    u.is_subset(v)
}

pub fn iter_bitvec<B: Bits>(u: &B) -> Vec<u64> {
    u.iter_bits()
}

/// Iterator over set bits of a 128-bit word, lowest first.
pub fn iter_ones(mut x: u128) -> impl Iterator<Item = u32> {
    std::iter::from_fn(move || {
        if x == 0 {
            None
        } else {
            let i = x.trailing_zeros();
            x &= x - 1;
            Some(i)
        }
    })
}

/// An event, rendered as a letter `A..Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u8);

impl EventId {
    pub fn new(index: usize) -> Result<Self> {
        if index >= MAX_EVENTS {
            return Err(Error::InvalidArgument(format!("event index {index} out of range")));
        }
        Ok(EventId(index as u8))
    }

    pub fn from_letter(c: char) -> Result<Self> {
        if c.is_ascii_uppercase() {
            Ok(EventId(c as u8 - b'A'))
        } else {
            Err(Error::InvalidArgument(format!("invalid event letter {c:?}")))
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Mask with bit `e` set for each event index in the iterator.
pub fn event_mask<I: IntoIterator<Item = EventId>>(events: I) -> u32 {
    events.into_iter().fold(0, |m, e| m | (1 << e.index()))
}

/// Events of a mask, in increasing order.
pub fn mask_events(mask: u32) -> Vec<EventId> {
    iter_ones(mask as u128).map(|i| EventId(i as u8)).collect()
}

/// Letters of a mask, e.g. `"AC"`.
pub fn mask_letters(mask: u32) -> String {
    mask_events(mask).iter().map(|e| e.letter()).collect()
}

/// The first `n` events as a mask.
pub fn first_events(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

const EVEN_BITS: u64 = 0x5555_5555_5555_5555;

/// A partial function from events to binary inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct History(pub u64);

impl History {
    pub const EMPTY: History = History(0);

    /// Builds a history from event/value pairs.
    pub fn from_pairs<I: IntoIterator<Item = (EventId, u8)>>(pairs: I) -> Result<Self> {
        let mut bits = 0u64;
        for (e, v) in pairs {
            if v > 1 {
                return Err(Error::InvalidArgument(format!("input value {v} is not binary")));
            }
            let both = 0b11u64 << (2 * e.index());
            if bits & both != 0 {
                return Err(Error::InvalidArgument(format!("event {e} assigned twice")));
            }
            bits |= 1 << (2 * e.index() + v as usize);
        }
        Ok(History(bits))
    }

    /// Builds a history from a total assignment on the events of `mask`,
    /// with `values` read most-significant-first in event order.
    pub fn from_assignment(mask: u32, values: u32) -> Self {
        let events = mask_events(mask);
        let n = events.len();
        let mut bits = 0;
        for (i, e) in events.iter().enumerate() {
            let v = (values >> (n - 1 - i)) & 1;
            bits |= 1u64 << (2 * e.index() as u32 + v);
        }
        History(bits)
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Whether no event carries both values.
    #[inline]
    pub fn is_valid(self) -> bool {
        (self.0 & (self.0 >> 1) & EVEN_BITS) == 0
    }

    /// Domain as an event mask.
    #[inline]
    pub fn dom(self) -> u32 {
        let mut x = (self.0 | (self.0 >> 1)) & EVEN_BITS;
        // compress even bits
        x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
        x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
        x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
        x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
        x = (x | (x >> 16)) & 0x0000_0000_ffff_ffff;
        x as u32
    }

    pub fn dom_events(self) -> Vec<EventId> {
        mask_events(self.dom())
    }

    #[inline]
    pub fn domsize(self) -> u32 {
        self.0.count_ones()
    }

    pub fn value(self, e: EventId) -> Option<u8> {
        match (self.0 >> (2 * e.index())) & 0b11 {
            0b01 => Some(0),
            0b10 => Some(1),
            _ => None,
        }
    }

    /// Item indices in increasing order.
    pub fn items(self) -> impl Iterator<Item = u32> {
        iter_ones(self.0 as u128)
    }

    /// `(event, value)` pairs in event order.
    pub fn pairs(self) -> Vec<(EventId, u8)> {
        self.items().map(|i| (EventId((i / 2) as u8), (i % 2) as u8)).collect()
    }

    /// Restriction to the events in `mask`.
    #[inline]
    pub fn restrict(self, mask: u32) -> History {
        History(self.0 & spread_mask(mask))
    }

    /// Key ordering histories by domain size, then by item sequence.
    pub fn sort_key(self) -> (u32, Vec<u32>) {
        (self.domsize(), self.items().collect())
    }

    /// Comparison by [`History::sort_key`] without allocating.
    pub fn cmp_key(self, other: History) -> Ordering {
        match self.domsize().cmp(&other.domsize()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (mut a, mut b) = (self.0, other.0);
        while a != 0 {
            let (la, lb) = (a.trailing_zeros(), b.trailing_zeros());
            if la != lb {
                return la.cmp(&lb);
            }
            a &= a - 1;
            b &= b - 1;
        }
        Ordering::Equal
    }
}

/// Both item bits for every event of `mask`.
#[inline]
pub fn spread_mask(mask: u32) -> u64 {
    let mut x = mask as u64;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & EVEN_BITS;
    x | (x << 1)
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs().iter().map(|(e, v)| format!("{e}/{v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for History {
    type Err = Error;

    /// Parses `A/0,B/1` (surrounding angle brackets or braces are ignored).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches(['<', '⟨', '{']).trim_end_matches(['>', '⟩', '}']);
        let mut pairs = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (e, v) = part
                .split_once('/')
                .ok_or_else(|| Error::InvalidArgument(format!("malformed history item {part:?}")))?;
            let mut chars = e.trim().chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::InvalidArgument(format!("malformed event {e:?}")));
            };
            let v: u8 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("malformed input value {v:?}")))?;
            pairs.push((EventId::from_letter(c)?, v));
        }
        History::from_pairs(pairs)
    }
}

/// Sorts histories in place by [`History::sort_key`].
pub fn sort_by_key(hs: &mut [History]) {
    hs.sort_by(|a, b| a.cmp_key(*b));
}

/// The `2^n` total assignments on the first `n` events, inputs in
/// lexicographic order with event `A` most significant.
pub fn max_histories(n: usize) -> Vec<History> {
    let mask = first_events(n);
    (0..1u32 << n).map(|v| History::from_assignment(mask, v)).collect()
}

/// Children of `h`: one per removed event, removing the last event first.
pub fn child_histories(h: History) -> Vec<History> {
    if h.domsize() <= 1 {
        return Vec::new();
    }
    h.dom_events()
        .iter()
        .rev()
        .map(|e| History(h.0 & !(0b11u64 << (2 * e.index()))))
        .collect()
}

/// All non-empty sub-histories reachable through children, in
/// breadth-first discovery order, starting with `hs` themselves.
pub fn sub_histories(hs: &[History]) -> Vec<History> {
    let mut visited = HashSet::new();
    let mut q: VecDeque<History> = hs.iter().copied().collect();
    let mut out = Vec::new();
    while let Some(h) = q.pop_front() {
        if visited.insert(h) {
            out.push(h);
        }
        for k in child_histories(h) {
            if !visited.contains(&k) {
                q.push_back(k);
            }
        }
    }
    out
}

/// Maps each history of `hs` and each of their children to the members of
/// `hs` having it as a child. Parent lists are in `hs` order.
pub fn parents(hs: &[History]) -> IndexMap<History, Vec<History>> {
    let mut ps: IndexMap<History, Vec<History>> = hs.iter().map(|&h| (h, Vec::new())).collect();
    for &h in hs {
        let mut ks = child_histories(h);
        sort_by_key(&mut ks);
        for k in ks {
            ps.entry(k).or_default().push(h);
        }
    }
    ps
}

/// Bitvector of a collection of histories.
pub fn hset_of<I: IntoIterator<Item = History>>(hs: I) -> HistorySet {
    let mut out = BigUint::zero();
    for h in hs {
        out.set_bit(h.0, true);
    }
    out
}

/// Members of a history-set bitvector, in increasing numeric order.
pub fn hset_members(hs: &HistorySet) -> Vec<History> {
    hs.iter_bits().into_iter().map(History).collect()
}

/// Number of bytes needed to write `x` big-endian, at least one.
pub fn min_bytes(x: &BigUint) -> usize {
    (x.bits() as usize).div_ceil(8).max(1)
}

impl serde::Serialize for EventId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl serde::Serialize for History {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn h(s: &str) -> History {
        s.parse().unwrap()
    }

    #[test]
    fn bitvec_examples() {
        assert_eq!(bitvec([1, 3, 5, 8]).unwrap(), BigUint::from(298u32));
        assert_eq!(bitvec([]).unwrap(), BigUint::zero());
        assert_eq!(bitvec([0]).unwrap(), BigUint::one());
        assert!(bitvec([2, -1]).is_err());
        assert_eq!(bitvec64([1, 3, 5, 8]), 298);
    }

    #[test]
    fn sub_and_subset() {
        assert_eq!(sub(&298u64, &2), 296);
        assert_eq!(sub(&298u64, &298), 0);
        assert_eq!(sub(&0b1011u64, &0b0010), 0b1001);
        assert!(is_subset(&0u64, &17));
        assert!(is_subset(&298u64, &298));
        assert!(!is_subset(&0b11u64, &0b01));
        let big = BigUint::from(298u32);
        assert!(big.sub(&BigUint::from(2u32)) == BigUint::from(296u32));
    }

    #[test]
    fn iter_examples() {
        assert_eq!(iter_bitvec(&298u64), vec![1, 3, 5, 8]);
        assert_eq!(iter_bitvec(&0u64), Vec::<u64>::new());
        assert_eq!(iter_bitvec(&137u64), vec![0, 3, 7]);
        let wide = (BigUint::one() << 200u32) | BigUint::from(5u32);
        assert_eq!(iter_bitvec(&wide), vec![0, 2, 200]);
    }

    #[test]
    fn history_examples() {
        let e = |c| EventId::from_letter(c).unwrap();
        assert_eq!(History::from_pairs([(e('A'), 0), (e('B'), 1), (e('D'), 1)]).unwrap(), History(137));
        assert_eq!(History::from_pairs([]).unwrap(), History(0));
        assert_eq!(History::from_pairs([(e('A'), 0)]).unwrap(), History(1));
        assert!(History::from_pairs([(e('A'), 0), (e('A'), 1)]).is_err());
        assert!(History::from_pairs([(e('A'), 0), (e('A'), 0)]).is_err());
        assert_eq!(h("A/0,B/1,D/1"), History(137));
    }

    #[test]
    fn dom_examples() {
        assert_eq!(mask_letters(History(137).dom()), "ABD");
        assert_eq!(History(137).domsize(), 3);
        assert_eq!(History(0).dom(), 0);
        assert_eq!(History(1).dom(), 1);
        assert_eq!(History(1).domsize(), 1);
        assert_eq!(spread_mask(0b1011), 0b1100_1111);
    }

    #[test]
    fn sort_key_examples() {
        assert!(h("A/0").sort_key() < h("A/0,B/0").sort_key());
        assert!(h("A/0").sort_key() < h("A/1").sort_key());
        assert_eq!(h("A/0").cmp_key(h("A/1")), Ordering::Less);
        assert_eq!(h("B/0").cmp_key(h("A/1")), Ordering::Greater);
        assert_eq!(h("A/1,C/0").cmp_key(h("A/1,B/1")), Ordering::Greater);
    }

    #[test]
    fn max_histories_examples() {
        assert_eq!(max_histories(1), vec![h("A/0"), h("A/1")]);
        assert_eq!(max_histories(2), vec![h("A/0,B/0"), h("A/0,B/1"), h("A/1,B/0"), h("A/1,B/1")]);
        let m3 = max_histories(3);
        assert_eq!(m3.len(), 8);
        assert_eq!(m3[0], h("A/0,B/0,C/0"));
    }

    #[test]
    fn children_examples() {
        let mut ks = child_histories(h("A/0,B/0,C/0"));
        assert_eq!(ks, vec![h("A/0,B/0"), h("A/0,C/0"), h("B/0,C/0")]);
        ks.sort();
        assert!(child_histories(h("A/0")).is_empty());
        assert_eq!(child_histories(h("A/1,B/1")), vec![h("A/1"), h("B/1")]);
    }

    #[test]
    fn sub_histories_and_parents() {
        let m2 = max_histories(2);
        let subs = sub_histories(&m2);
        assert_eq!(subs.len(), 8);
        let ps = parents(&subs);
        assert_eq!(ps[&h("A/0")], vec![h("A/0,B/0"), h("A/0,B/1")]);
        assert_eq!(sub_histories(&[h("A/0")]), vec![h("A/0")]);
        for n in 1..=4 {
            assert_eq!(sub_histories(&max_histories(n)).len(), 3usize.pow(n as u32) - 1);
        }
    }

    #[test]
    fn display_roundtrip() {
        assert_eq!(h("A/1,C/1").to_string(), "A/1,C/1");
        assert_eq!(h("⟨B/0⟩"), h("B/0"));
        assert!("A/2".parse::<History>().is_err());
        assert!("a/0".parse::<History>().is_err());
    }

    #[test]
    fn min_bytes_examples() {
        assert_eq!(min_bytes(&BigUint::zero()), 1);
        assert_eq!(min_bytes(&BigUint::from(298u32)), 2);
        assert_eq!(min_bytes(&BigUint::from(255u32)), 1);
    }
}
