//! Spaces of input histories and their closure, completeness and lattice
//! operations.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::encoding::{
    first_events, hset_members, hset_of, iter_ones, mask_events, sort_by_key, EventId, History, HistorySet,
};
use crate::error::{Error, Result};
use crate::histories::{compatible, restriction_leq};
use crate::unionfind::UnionFind;

/// A ∨-prime set of non-empty histories on a declared event set, kept in
/// history sort-key order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Space {
    events: u32,
    histories: Vec<History>,
}

/// A ∨-closed set of histories, kept in sort-key order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExtSpace {
    histories: Vec<History>,
}

impl ExtSpace {
    pub fn new(mut hs: Vec<History>) -> Self {
        sort_by_key(&mut hs);
        hs.dedup();
        ExtSpace { histories: hs }
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn contains(&self, h: History) -> bool {
        self.histories.binary_search_by(|x| x.cmp_key(h)).is_ok()
    }

    pub fn is_superset(&self, other: &ExtSpace) -> bool {
        other.histories.iter().all(|&h| self.contains(h))
    }

    /// Maximal members under restriction.
    pub fn maxima(&self) -> Vec<History> {
        self.histories
            .iter()
            .copied()
            .filter(|&h| !self.histories.iter().any(|&k| k != h && restriction_leq(h, k)))
            .collect()
    }

    pub fn to_bits(&self) -> HistorySet {
        hset_of(self.histories.iter().copied())
    }
}

/// Per-history tip sets of a space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TipReport {
    pub tips: Vec<(History, u32)>,
}

/// Histories a causal function must treat alike at one event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identification {
    pub event: EventId,
    pub histories: Vec<History>,
}

/// Result of the tightness check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tightness {
    pub is_tight: bool,
    pub identifications: Vec<Identification>,
}

/// The input histories below a maximal extended history `k` having `event`
/// as tip, given as indices into the space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeterminingSet {
    pub k: History,
    pub event: EventId,
    pub members: Vec<usize>,
}

impl Space {
    /// Validates a ∨-prime set of non-empty histories within `events`.
    pub fn new(events: u32, hs: Vec<History>) -> Result<Self> {
        let s = Space::new_unchecked(events, hs);
        for &h in &s.histories {
            if h.is_empty() || !h.is_valid() {
                return Err(Error::InvalidArgument(format!("invalid member history {:#x}", h.0)));
            }
            if h.dom() & !events != 0 {
                return Err(Error::InvalidArgument(format!("history {h} outside the declared events")));
            }
        }
        if prime_members(&s.histories).len() != s.histories.len() {
            return Err(Error::InvalidArgument("histories are not ∨-prime".into()));
        }
        Ok(s)
    }

    /// Sorts and deduplicates without checking ∨-primality.
    pub fn new_unchecked(events: u32, mut hs: Vec<History>) -> Self {
        sort_by_key(&mut hs);
        hs.dedup();
        Space { events, histories: hs }
    }

    /// Space on the union of the domains.
    pub fn from_histories(hs: Vec<History>) -> Result<Self> {
        let events = hs.iter().fold(0, |m, h| m | h.dom());
        Space::new(events, hs)
    }

    /// The space of ∨-prime members of `w`.
    pub fn prime_of(events: u32, w: &[History]) -> Self {
        Space::new_unchecked(events, prime_members(w))
    }

    pub fn empty() -> Self {
        Space { events: 0, histories: Vec::new() }
    }

    pub fn from_bits(events: u32, bits: &HistorySet) -> Result<Self> {
        Space::new(events, hset_members(bits))
    }

    /// Space on the first `n` events from a history-set bitvector.
    pub fn from_bits_n(n: usize, bits: &HistorySet) -> Result<Self> {
        Space::from_bits(first_events(n), bits)
    }

    pub fn to_bits(&self) -> HistorySet {
        hset_of(self.histories.iter().copied())
    }

    pub fn events(&self) -> u32 {
        self.events
    }

    pub fn event_count(&self) -> usize {
        self.events.count_ones() as usize
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn contains(&self, h: History) -> bool {
        self.histories.binary_search_by(|x| x.cmp_key(h)).is_ok()
    }

    /// Renames events; `map[e]` is the new index of event `e`.
    pub fn relabel(&self, map: &[usize]) -> Space {
        let rename = |h: History| {
            History::from_pairs(h.pairs().into_iter().map(|(e, v)| (EventId::new(map[e.index()]).unwrap(), v))).unwrap()
        };
        let events = iter_ones(self.events as u128).fold(0, |m, e| m | (1 << map[e as usize]));
        Space::new_unchecked(events, self.histories.iter().map(|&h| rename(h)).collect())
    }

    /// Relabels the events onto `A, B, ...` in order, returning the inverse map.
    pub fn compact(&self) -> (Space, Vec<usize>) {
        let evs = mask_events(self.events);
        let mut map = vec![0; crate::encoding::MAX_EVENTS];
        let mut inverse = Vec::new();
        for (i, e) in evs.iter().enumerate() {
            map[e.index()] = i;
            inverse.push(e.index());
        }
        let mut inv_full = vec![0; crate::encoding::MAX_EVENTS];
        for (i, &e) in inverse.iter().enumerate() {
            inv_full[i] = e;
        }
        (self.relabel(&map), inv_full)
    }

    pub fn is_prime(&self) -> bool {
        prime_members(&self.histories).len() == self.histories.len()
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .histories
            .iter()
            .map(|h| if h.domsize() > 1 { format!("<{h}>") } else { h.to_string() })
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Space{self}")
    }
}

impl FromStr for Space {
    type Err = Error;

    /// Parses `[A/0, A/1, <A/0,B/1>]`; the event set is the union of domains.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .trim()
            .strip_prefix('[')
            .and_then(|x| x.strip_suffix(']'))
            .ok_or_else(|| Error::InvalidArgument(format!("malformed space literal {s:?}")))?;
        let mut hs = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        let mut items = Vec::new();
        for (i, c) in body.char_indices() {
            match c {
                '<' | '⟨' | '{' => depth += 1,
                '>' | '⟩' | '}' => depth -= 1,
                ',' if depth == 0 => {
                    items.push(&body[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        items.push(&body[start..]);
        for item in items.into_iter().map(str::trim).filter(|x| !x.is_empty()) {
            hs.push(item.parse::<History>()?);
        }
        Space::from_histories(hs)
    }
}

/// Members of `w` that are not the join of the members strictly below them.
pub fn prime_members(w: &[History]) -> Vec<History> {
    w.iter()
        .copied()
        .filter(|&h| {
            let below = w.iter().filter(|&&k| k != h && restriction_leq(k, h)).fold(0, |acc, k| acc | k.0);
            below != h.0
        })
        .collect()
}

/// Closure of a set of histories under compatible joins.
pub fn closure(hs: &[History]) -> ExtSpace {
    let mut seen: HashSet<History> = HashSet::with_capacity(hs.len() * 2);
    let mut list: Vec<History> = Vec::new();
    for &h in hs {
        if seen.insert(h) {
            list.push(h);
        }
    }
    let mut i = 0;
    while i < list.len() {
        let h = list[i];
        for j in 0..i {
            let k = list[j];
            if compatible(h, k) {
                let hk = History(h.0 | k.0);
                if seen.insert(hk) {
                    list.push(hk);
                }
            }
        }
        i += 1;
    }
    ExtSpace::new(list)
}

/// The extended input histories of a space.
pub fn ext(space: &Space) -> ExtSpace {
    closure(&space.histories)
}

/// The ∨-prime elements of a set of histories.
pub fn prime(w: &[History]) -> Space {
    let events = w.iter().fold(0, |m, h| m | h.dom());
    Space::prime_of(events, w)
}

/// Maxima of Ext are exactly all total assignments on the space's events.
pub fn is_free_choice(space: &Space) -> bool {
    let e = ext(space);
    free_choice_of_ext(space.events, &e)
}

fn free_choice_of_ext(events: u32, e: &ExtSpace) -> bool {
    let maxima = e.maxima();
    let n = events.count_ones();
    n < 32 && maxima.len() == 1usize << n && maxima.iter().all(|h| h.dom() == events)
}

fn tips_unchecked(space: &Space, h: History) -> u32 {
    let covered = space
        .histories
        .iter()
        .filter(|&&k| k != h && restriction_leq(k, h))
        .fold(0, |m, k| m | k.dom());
    h.dom() & !covered
}

/// Events of `dom(h)` outside the domains of members strictly below `h`.
pub fn tips(space: &Space, h: History) -> Result<u32> {
    if !ext(space).contains(h) {
        return Err(Error::InvalidArgument(format!("history {h} is not an extended input history")));
    }
    Ok(tips_unchecked(space, h))
}

pub fn tip_report(space: &Space) -> TipReport {
    TipReport { tips: space.histories.iter().map(|&h| (h, tips_unchecked(space, h))).collect() }
}

fn require_free_choice(space: &Space) -> Result<()> {
    if !is_free_choice(space) {
        return Err(Error::Precondition("space does not satisfy the free-choice condition".into()));
    }
    Ok(())
}

/// Every member has exactly one tip event.
pub fn is_causally_complete(space: &Space) -> Result<bool> {
    require_free_choice(space)?;
    Ok(causally_complete_unchecked(space))
}

pub(crate) fn causally_complete_unchecked(space: &Space) -> bool {
    space.histories.iter().all(|&h| tips_unchecked(space, h).count_ones() == 1)
}

/// For each total input `k` and event `ω`, the members below `k` with tip `ω`.
pub fn determining_sets(space: &Space) -> Vec<DeterminingSet> {
    let tip: Vec<u32> = space.histories.iter().map(|&h| tips_unchecked(space, h)).collect();
    let mut out = Vec::new();
    for k in crate::orders::all_assignments(space.events) {
        for e in mask_events(space.events) {
            let members: Vec<usize> = (0..space.histories.len())
                .filter(|&i| tip[i] & (1 << e.index()) != 0 && restriction_leq(space.histories[i], k))
                .collect();
            out.push(DeterminingSet { k, event: e, members });
        }
    }
    out
}

/// Tightness and the groups of histories identified by determining sets.
pub fn tightness(space: &Space) -> Result<Tightness> {
    if !is_causally_complete(space)? {
        return Err(Error::Precondition("tightness needs a causally complete space".into()));
    }
    let sets = determining_sets(space);
    let is_tight = sets.iter().all(|d| d.members.len() == 1);
    let mut uf = UnionFind::new(space.len());
    for d in &sets {
        for w in d.members.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut identifications: Vec<Identification> = uf
        .groups()
        .into_iter()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let tip = tips_unchecked(space, space.histories[g[0]]);
            Identification {
                event: EventId::new(tip.trailing_zeros() as usize).unwrap(),
                histories: g.iter().map(|&i| space.histories[i]).collect(),
            }
        })
        .collect();
    identifications.sort_by(|a, b| a.histories[0].cmp_key(b.histories[0]));
    Ok(Tightness { is_tight, identifications })
}

/// `refined ≤ coarse`: every extended history of `coarse` is one of `refined`.
pub fn space_leq(refined: &Space, coarse: &Space) -> bool {
    ext(refined).is_superset(&ext(coarse))
}

/// Closest common coarsening.
pub fn space_join(a: &Space, b: &Space) -> Space {
    let (ea, eb) = (ext(a), ext(b));
    let common: Vec<History> = ea.histories.iter().copied().filter(|&h| eb.contains(h)).collect();
    Space::prime_of(a.events | b.events, &common)
}

/// Closest common refinement.
pub fn space_meet(a: &Space, b: &Space) -> Space {
    let (ea, eb) = (ext(a), ext(b));
    let mut all = ea.histories.clone();
    all.extend(eb.histories.iter().copied().filter(|&h| !ea.contains(h)));
    Space::prime_of(a.events | b.events, &all)
}

/// Meet of a non-empty family.
pub fn space_meet_all(spaces: &[Space]) -> Option<Space> {
    let events = spaces.iter().fold(0, |m, s| m | s.events);
    let mut all: Vec<History> = Vec::new();
    let mut seen = HashSet::new();
    for s in spaces {
        for h in ext(s).histories {
            if seen.insert(h) {
                all.push(h);
            }
        }
    }
    (!spaces.is_empty()).then(|| Space::prime_of(events, &all))
}

/// Join of a non-empty family.
pub fn space_join_all(spaces: &[Space]) -> Option<Space> {
    let (first, rest) = spaces.split_first()?;
    let mut common = ext(first);
    let mut events = first.events;
    for s in rest {
        let e = ext(s);
        common = ExtSpace::new(common.histories.into_iter().filter(|&h| e.contains(h)).collect());
        events |= s.events;
    }
    Some(Space::prime_of(events, &common.histories))
}

fn require_disjoint(a: u32, b: u32) -> Result<()> {
    if a & b != 0 {
        return Err(Error::InvalidArgument("composition needs disjoint event sets".into()));
    }
    Ok(())
}

pub fn parallel_compose(a: &Space, b: &Space) -> Result<Space> {
    require_disjoint(a.events, b.events)?;
    let mut hs = a.histories.clone();
    hs.extend_from_slice(&b.histories);
    Ok(Space::new_unchecked(a.events | b.events, hs))
}

/// Each maximal extended history of `first` continues into a copy of `then`.
pub fn seq_compose(first: &Space, then: &Space) -> Result<Space> {
    let family: Vec<(History, Space)> = ext(first).maxima().into_iter().map(|k| (k, then.clone())).collect();
    cond_seq_compose(first, &family)
}

/// Each maximal extended history `k` of `first` continues into its own space.
pub fn cond_seq_compose(first: &Space, family: &[(History, Space)]) -> Result<Space> {
    let maxima = ext(first).maxima();
    if family.len() != maxima.len() || !maxima.iter().all(|k| family.iter().filter(|(f, _)| f == k).count() == 1) {
        return Err(Error::InvalidArgument(
            "conditional composition needs exactly one space per maximal extended history".into(),
        ));
    }
    let mut events = first.events;
    let mut hs = first.histories.clone();
    for (k, s) in family {
        require_disjoint(first.events, s.events)?;
        events |= s.events;
        hs.extend(s.histories.iter().map(|h| History(h.0 | k.0)));
    }
    Ok(Space::new_unchecked(events, hs))
}

/// The discrete space: one history per event and input.
pub fn discrete_space(events: u32) -> Space {
    crate::orders::CausalOrder::discrete(events).hist_space()
}

/// Causal switch spaces on the first `n` events.
pub fn causal_switch_spaces(n: usize) -> Vec<Space> {
    causal_switch_spaces_on(first_events(n))
}

/// Causal switch spaces on an event set: pick a first event, then for each
/// of its inputs a causal switch space on the remaining events.
pub fn causal_switch_spaces_on(events: u32) -> Vec<Space> {
    if events == 0 {
        return vec![Space::empty()];
    }
    let mut out: Vec<Space> = Vec::new();
    for e in mask_events(events) {
        let first = discrete_space(1 << e.index());
        let rest = causal_switch_spaces_on(events & !(1 << e.index()));
        let k0 = History(1 << (2 * e.index()));
        let k1 = History(2 << (2 * e.index()));
        for s0 in &rest {
            for s1 in &rest {
                let family = [(k0, s0.clone()), (k1, s1.clone())];
                let s = cond_seq_compose(&first, &family).expect("disjoint by construction");
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Maximal causally complete refinements of `space`, using the full list of
/// causally complete spaces on its (compacted) event set.
pub fn causal_completions_in(space: &Space, candidates: &[Space]) -> Result<Vec<Space>> {
    require_free_choice(space)?;
    if causally_complete_unchecked(space) {
        return Ok(vec![space.clone()]);
    }
    let target = ext(space);
    let refinements: Vec<(&Space, ExtSpace)> = candidates
        .iter()
        .map(|c| (c, ext(c)))
        .filter(|(c, e)| c.events == space.events && e.is_superset(&target))
        .collect();
    let mut out: Vec<Space> = refinements
        .iter()
        .filter(|(c, e)| !refinements.iter().any(|(d, f)| d != c && e.is_superset(f) && !f.is_superset(e)))
        .map(|(c, _)| (*c).clone())
        .collect();
    out.sort_by_key(|a| a.to_bits());
    Ok(out)
}

/// Causal completions, enumerating candidates on up to 3 events.
pub fn causal_completions(space: &Space) -> Result<Vec<Space>> {
    require_free_choice(space)?;
    if causally_complete_unchecked(space) {
        return Ok(vec![space.clone()]);
    }
    let n = space.event_count();
    if n > 3 {
        return Err(Error::Capacity("causal completions are enumerated for at most 3 events".into()));
    }
    let (compact, inverse) = space.compact();
    let candidates = crate::enumerator::all_spaces(n)?;
    let found = causal_completions_in(&compact, candidates)?;
    let mut out: Vec<Space> = found.iter().map(|s| s.relabel(&inverse)).collect();
    out.sort_by_key(|a| a.to_bits());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orders::CausalOrder;
    use proptest::prelude::*;

    fn h(s: &str) -> History {
        s.parse().unwrap()
    }

    fn sp(s: &str) -> Space {
        s.parse().unwrap()
    }

    fn hist(o: &str) -> Space {
        CausalOrder::parse(o).unwrap().hist_space()
    }

    #[test]
    fn ext_examples() {
        let d = hist("discrete(A,B,C)");
        assert_eq!(ext(&d).len(), 26);
        let t = hist("total(A,B,C)");
        assert_eq!(ext(&t).histories(), t.histories());
        let two = sp("[A/0, A/1, B/0, B/1]");
        assert_eq!(ext(&two).len(), 8);
        assert!(ext(&two).contains(h("A/1,B/0")));
    }

    #[test]
    fn prime_examples() {
        for o in ["total(A,B,C)", "discrete(A,B,C)", "total(A,B) v discrete(C)", "total(A,{B,C})"] {
            let s = hist(o);
            assert_eq!(prime(ext(&s).histories()), s);
        }
        let all = ext(&hist("discrete(A,B,C)"));
        let p = prime(all.histories());
        assert_eq!(p.len(), 6);
        assert!(p.histories().iter().all(|h| h.domsize() == 1));
        assert_eq!(prime(&[h("A/1,B/0")]).histories(), &[h("A/1,B/0")]);
    }

    #[test]
    fn free_choice_examples() {
        for ord in crate::orders::order_hierarchy(3).unwrap().orders {
            assert!(is_free_choice(&ord.hist_space()), "{ord}");
        }
        assert!(!is_free_choice(&sp("[A/0, B/0, B/1]")));
        assert!(is_free_choice(&discrete_space(0b11)));
    }

    #[test]
    fn tips_examples() {
        let d = discrete_space(0b111);
        assert_eq!(tips(&d, h("A/0")).unwrap(), 0b1);
        let t = hist("total(A,B,C)");
        assert_eq!(tips(&t, h("A/0,B/1")).unwrap(), 0b10);
        let ind = hist("total(A,{B,C})");
        assert_eq!(tips(&ind, h("A/0,B/1,C/0")).unwrap(), 0b110);
        assert!(tips(&t, h("B/1")).is_err());
    }

    #[test]
    fn completeness_examples() {
        assert!(is_causally_complete(&hist("total(A,B,C)")).unwrap());
        assert!(!is_causally_complete(&hist("total(A,{B,C})")).unwrap());
        assert!(is_causally_complete(&discrete_space(0b111)).unwrap());
        assert!(is_causally_complete(&sp("[A/0, B/0, B/1]")).is_err());
        for ord in crate::orders::order_hierarchy(3).unwrap().orders {
            assert_eq!(is_causally_complete(&ord.hist_space()).unwrap(), ord.is_definite(), "{ord}");
        }
    }

    #[test]
    fn tightness_basic() {
        let t = tightness(&hist("total(A,B,C)")).unwrap();
        assert!(t.is_tight && t.identifications.is_empty());
        assert!(tightness(&discrete_space(0b111)).unwrap().is_tight);
    }

    #[test]
    fn lattice_examples() {
        let a = hist("total(A,B) v discrete(C)");
        let b = hist("discrete(A) v total(C,B)");
        let m = space_meet(&a, &b);
        assert!(space_leq(&m, &a) && space_leq(&m, &b));
        assert_eq!(space_join(&a, &a), a);
        assert_eq!(space_meet(&a, &a), a);
        let d = discrete_space(0b111);
        assert!(space_leq(&d, &a));
        assert!(!space_leq(&a, &d));
    }

    #[test]
    fn composition_examples() {
        let first = discrete_space(0b11);
        let then = hist("total(C,D)");
        let s = seq_compose(&first, &then).unwrap();
        // four copies of the 6 histories of total(C,D)
        assert_eq!(s.len(), 4 + 4 * 6);
        assert!(s.is_prime());
        let a = discrete_space(0b1);
        let fam = [(h("A/0"), hist("total(B,C)")), (h("A/1"), hist("total(C,B)"))];
        let switch = cond_seq_compose(&a, &fam).unwrap();
        assert_eq!(switch.len(), 2 + 2 * 6);
        assert!(is_causally_complete(&switch).unwrap());
        assert_eq!(ext(&switch).histories(), switch.histories());
        assert_eq!(parallel_compose(&switch, &Space::empty()).unwrap(), switch);
        assert!(parallel_compose(&a, &switch).is_err());
    }

    #[test]
    fn causal_switch_counts() {
        assert_eq!(causal_switch_spaces(1).len(), 1);
        assert_eq!(causal_switch_spaces(2).len(), 2);
        assert_eq!(causal_switch_spaces(3).len(), 12);
        for s in causal_switch_spaces(3) {
            assert_eq!(ext(&s).histories(), s.histories());
            assert!(is_causally_complete(&s).unwrap());
        }
    }

    #[test]
    fn literal_round_trip() {
        let s = sp("[A/0, A/1, <A/0,B/1>, B/0]");
        assert_eq!(s.to_string().parse::<Space>().unwrap(), s);
        assert_eq!(Space::from_bits(s.events(), &s.to_bits()).unwrap(), s);
        assert!("[A/0, <A/0,B/1>, B/1]".parse::<Space>().is_err());
    }

    fn arb_space() -> impl Strategy<Value = Space> {
        let all: Vec<History> = crate::encoding::sub_histories(&crate::encoding::max_histories(3));
        proptest::collection::vec(proptest::bool::ANY, all.len()).prop_map(move |sel| {
            let w: Vec<History> = all.iter().zip(sel).filter(|(_, s)| *s).map(|(h, _)| *h).collect();
            Space::prime_of(0b111, &w)
        })
    }

    proptest! {
        #[test]
        fn ext_prime_laws(a in arb_space(), b in arb_space()) {
            let ea = ext(&a);
            prop_assert_eq!(closure(ea.histories()), ea.clone());
            prop_assert_eq!(prime(ea.histories()), a.clone());
            let j = space_join(&a, &b);
            let m = space_meet(&a, &b);
            prop_assert!(space_leq(&a, &j) && space_leq(&b, &j));
            prop_assert!(space_leq(&m, &a) && space_leq(&m, &b));
            prop_assert_eq!(space_join(&a, &space_meet(&a, &b)), a.clone());
            prop_assert_eq!(space_meet(&a, &space_join(&a, &b)), a.clone());
            prop_assert_eq!(space_join(&a, &b), space_join(&b, &a));
            prop_assert_eq!(space_meet(&a, &b), space_meet(&b, &a));
        }

        #[test]
        fn leq_is_partial_order(a in arb_space(), b in arb_space()) {
            prop_assert!(space_leq(&a, &a));
            if space_leq(&a, &b) && space_leq(&b, &a) {
                prop_assert_eq!(a.histories(), b.histories());
            }
        }
    }
}
