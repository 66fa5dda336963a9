//! Causal orders: preorders on finite event sets, their lowersets and the
//! spaces of histories they induce.
//!
//! Text syntax accepted by [`CausalOrder::parse`]:
//!
//! ```text
//! order  := term (("v" | "∨") term)*
//! term   := "total(" item ("," item)* ")"      chain, left to right
//!         | "discrete(" event ("," event)* ")"
//!         | "indiscrete(" event ("," event)* ")"
//!         | "wedge(" chain ("|" chain)* ")"     join of chains
//! item   := event | "{" event ("," event)* "}"   braces group indefinite events
//! chain  := event ("," event)*
//! ```
//!
//! Joined terms may mention different events; each term is extended with the
//! missing events as unrelated before taking the join.

use std::fmt;
use std::str::FromStr;

use crate::encoding::{iter_ones, mask_events, EventId, History, MAX_EVENTS};
use crate::error::{Error, Result};
use crate::spaces::{ExtSpace, Space};

/// How two distinct events relate in a causal order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CausalRelation {
    Precedes,
    Succeeds,
    Unrelated,
    Indefinite,
}

/// A preorder on a set of events. `past[ξ]` is the mask of events `ω ≤ ξ`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CausalOrder {
    events: u32,
    past: [u32; MAX_EVENTS],
}

impl CausalOrder {
    /// The order with no relations between distinct events.
    pub fn discrete(events: u32) -> Self {
        let mut past = [0; MAX_EVENTS];
        for e in iter_ones(events as u128) {
            past[e as usize] = 1 << e;
        }
        CausalOrder { events, past }
    }

    /// All events causally equivalent.
    pub fn indiscrete(events: u32) -> Self {
        let mut past = [0; MAX_EVENTS];
        for e in iter_ones(events as u128) {
            past[e as usize] = events;
        }
        CausalOrder { events, past }
    }

    /// A chain of groups; events in the same group are equivalent.
    pub fn total(groups: &[u32]) -> Result<Self> {
        let mut events = 0;
        let mut past = [0; MAX_EVENTS];
        let mut below = 0;
        for &g in groups {
            if g == 0 || events & g != 0 {
                return Err(Error::InvalidArgument("repeated or empty group in total order".into()));
            }
            events |= g;
            below |= g;
            for e in iter_ones(g as u128) {
                past[e as usize] = below;
            }
        }
        Ok(CausalOrder { events, past })
    }

    /// Builds the reflexive-transitive closure of the given pairs `(ω, ξ)`, read `ω ≤ ξ`.
    pub fn from_relations(events: u32, pairs: &[(EventId, EventId)]) -> Result<Self> {
        let mut order = CausalOrder::discrete(events);
        for &(a, b) in pairs {
            if events & (1 << a.index()) == 0 || events & (1 << b.index()) == 0 {
                return Err(Error::InvalidArgument(format!("relation {a} ≤ {b} outside the event set")));
            }
            order.past[b.index()] |= 1 << a.index();
        }
        order.close();
        Ok(order)
    }

    fn close(&mut self) {
        loop {
            let mut changed = false;
            for x in iter_ones(self.events as u128) {
                let mut p = self.past[x as usize];
                for y in iter_ones(p as u128) {
                    p |= self.past[y as usize];
                }
                if p != self.past[x as usize] {
                    self.past[x as usize] = p;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    pub fn events(&self) -> u32 {
        self.events
    }

    pub fn num_events(&self) -> usize {
        self.events.count_ones() as usize
    }

    fn check_event(&self, e: EventId) -> Result<()> {
        if self.events & (1 << e.index()) == 0 {
            return Err(Error::InvalidArgument(format!("event {e} not in order")));
        }
        Ok(())
    }

    /// `ω ≤ ξ`.
    pub fn leq_events(&self, a: EventId, b: EventId) -> bool {
        self.past[b.index()] & (1 << a.index()) != 0
    }

    pub fn classify(&self, a: EventId, b: EventId) -> Result<CausalRelation> {
        self.check_event(a)?;
        self.check_event(b)?;
        if a == b {
            return Err(Error::InvalidArgument("classify needs two distinct events".into()));
        }
        Ok(match (self.leq_events(a, b), self.leq_events(b, a)) {
            (true, false) => CausalRelation::Precedes,
            (false, true) => CausalRelation::Succeeds,
            (false, false) => CausalRelation::Unrelated,
            (true, true) => CausalRelation::Indefinite,
        })
    }

    pub fn causal_past(&self, e: EventId) -> u32 {
        self.past[e.index()]
    }

    pub fn causal_future(&self, e: EventId) -> u32 {
        iter_ones(self.events as u128)
            .filter(|&x| self.past[x as usize] & (1 << e.index()) != 0)
            .fold(0, |m, x| m | (1 << x))
    }

    pub fn causal_eq_class(&self, e: EventId) -> u32 {
        self.causal_past(e) & self.causal_future(e)
    }

    pub fn is_definite(&self) -> bool {
        iter_ones(self.events as u128).all(|x| self.causal_eq_class(EventId::new(x as usize).unwrap()) == 1 << x)
    }

    pub fn is_lowerset(&self, u: u32) -> bool {
        u & !self.events == 0 && iter_ones(u as u128).all(|x| self.past[x as usize] & !u == 0)
    }

    /// All lowersets including the empty and the full set, ordered by size then mask.
    pub fn lowersets(&self) -> Vec<u32> {
        let evs: Vec<u32> = iter_ones(self.events as u128).collect();
        let mut out: Vec<u32> = (0u32..1 << evs.len())
            .map(|sel| iter_ones(sel as u128).fold(0, |m, i| m | (1 << evs[i as usize])))
            .filter(|&u| self.is_lowerset(u))
            .collect();
        out.sort_by_key(|&u| (u.count_ones(), u));
        out
    }

    /// Relation inclusion.
    pub fn leq(&self, other: &CausalOrder) -> bool {
        self.events == other.events
            && iter_ones(self.events as u128).all(|x| self.past[x as usize] & !other.past[x as usize] == 0)
    }

    fn same_events(&self, other: &CausalOrder) -> Result<()> {
        if self.events != other.events {
            return Err(Error::InvalidArgument("orders on different event sets".into()));
        }
        Ok(())
    }

    /// Transitive closure of the union of relations.
    pub fn join(&self, other: &CausalOrder) -> Result<CausalOrder> {
        self.same_events(other)?;
        let mut out = self.clone();
        for x in iter_ones(self.events as u128) {
            out.past[x as usize] |= other.past[x as usize];
        }
        out.close();
        Ok(out)
    }

    /// Intersection of relations.
    pub fn meet(&self, other: &CausalOrder) -> Result<CausalOrder> {
        self.same_events(other)?;
        let mut out = self.clone();
        for x in iter_ones(self.events as u128) {
            out.past[x as usize] &= other.past[x as usize];
        }
        Ok(out)
    }

    /// The same relations on a larger event set, new events unrelated.
    pub fn extend_to(&self, events: u32) -> CausalOrder {
        let mut out = self.clone();
        for e in iter_ones((events & !self.events) as u128) {
            out.past[e as usize] = 1 << e;
        }
        out.events |= events;
        out
    }

    /// Input histories: all binary assignments on the past of each event.
    pub fn hist_space(&self) -> Space {
        let mut pasts: Vec<u32> = iter_ones(self.events as u128).map(|x| self.past[x as usize]).collect();
        pasts.sort_unstable();
        pasts.dedup();
        let hs = pasts.iter().flat_map(|&p| all_assignments(p)).collect();
        Space::new_unchecked(self.events, hs)
    }

    /// Extended input histories: all binary assignments on each non-empty lowerset.
    pub fn ext_hist_space(&self) -> ExtSpace {
        let hs = self.lowersets().into_iter().filter(|&u| u != 0).flat_map(all_assignments).collect();
        ExtSpace::new(hs)
    }

    /// Parses the text syntax described in the module documentation.
    pub fn parse(s: &str) -> Result<CausalOrder> {
        let terms = split_top(s, &['v', '∨'])?;
        let mut parsed = Vec::new();
        for t in terms {
            parsed.push(parse_term(t.trim())?);
        }
        let events = parsed.iter().fold(0, |m, o| m | o.events);
        let mut out = CausalOrder::discrete(events);
        for o in parsed {
            out = out.join(&o.extend_to(events))?;
        }
        Ok(out)
    }

    /// Quotient classes (causal equivalence classes), in order of smallest event.
    fn classes(&self) -> Vec<u32> {
        let mut seen = 0;
        let mut out = Vec::new();
        for x in iter_ones(self.events as u128) {
            if seen & (1 << x) == 0 {
                let c = self.causal_eq_class(EventId::new(x as usize).unwrap());
                seen |= c;
                out.push(c);
            }
        }
        out
    }
}

/// All binary assignments on the events of `mask`, lexicographic.
pub fn all_assignments(mask: u32) -> impl Iterator<Item = History> {
    let n = mask.count_ones();
    (0..1u32 << n).map(move |v| History::from_assignment(mask, v))
}

fn group_str(g: u32) -> String {
    let evs = mask_events(g);
    if evs.len() == 1 {
        evs[0].to_string()
    } else {
        format!("{{{}}}", evs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","))
    }
}

impl fmt::Display for CausalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let classes = self.classes();
        let below = |a: u32, b: u32| -> bool {
            let x = a.trailing_zeros() as usize;
            let y = b.trailing_zeros();
            a != b && self.past[y as usize] & (1 << x) != 0
        };
        if classes.len() == 1 && classes[0].count_ones() == 1 {
            return write!(f, "discrete({})", group_str(classes[0]));
        }
        // a chain of classes prints as one total order
        let mut chain = classes.clone();
        chain.sort_by_key(|&c| (self.past[c.trailing_zeros() as usize] & self.events).count_ones());
        if chain.windows(2).all(|w| below(w[0], w[1])) {
            let parts: Vec<String> = chain.iter().map(|&g| group_str(g)).collect();
            if chain.len() == 1 {
                return write!(f, "indiscrete({})", mask_events(chain[0]).iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));
            }
            return write!(f, "total({})", parts.join(","));
        }
        let mut terms = Vec::new();
        let mut isolated = 0;
        for &a in &classes {
            let mut related = false;
            for &b in &classes {
                if below(a, b) || below(b, a) {
                    related = true;
                }
                // covering pairs only
                if below(a, b) && !classes.iter().any(|&c| below(a, c) && below(c, b)) {
                    terms.push(format!("total({},{})", group_str(a), group_str(b)));
                }
            }
            if !related {
                if a.count_ones() == 1 {
                    isolated |= a;
                } else {
                    terms.push(format!("indiscrete({})", mask_events(a).iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")));
                }
            }
        }
        if isolated != 0 {
            terms.push(format!("discrete({})", mask_events(isolated).iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")));
        }
        write!(f, "{}", terms.join(" v "))
    }
}

impl fmt::Debug for CausalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CausalOrder({self})")
    }
}

impl serde::Serialize for CausalOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for CausalOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CausalOrder::parse(s)
    }
}

/// Splits on separator characters that stand alone at bracket depth zero.
fn split_top<'a>(s: &'a str, seps: &[char]) -> Result<Vec<&'a str>> {
    let mut depth = 0i32;
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            _ if depth == 0 && seps.contains(&c) => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::InvalidArgument(format!("unbalanced brackets in {s:?}")));
        }
    }
    if depth != 0 {
        return Err(Error::InvalidArgument(format!("unbalanced brackets in {s:?}")));
    }
    out.push(&s[start..]);
    Ok(out)
}

fn parse_event(s: &str) -> Result<u32> {
    let s = s.trim();
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(1 << EventId::from_letter(c)?.index()),
        _ => Err(Error::InvalidArgument(format!("malformed event {s:?}"))),
    }
}

fn parse_event_list(s: &str) -> Result<Vec<u32>> {
    s.split(',').map(parse_event).collect()
}

fn parse_term(t: &str) -> Result<CausalOrder> {
    let (name, rest) = t
        .split_once('(')
        .ok_or_else(|| Error::InvalidArgument(format!("malformed order term {t:?}")))?;
    let body = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::InvalidArgument(format!("malformed order term {t:?}")))?;
    match name.trim() {
        "total" => {
            let mut groups = Vec::new();
            for item in split_top(body, &[','])? {
                let item = item.trim();
                if let Some(inner) = item.strip_prefix('{').and_then(|x| x.strip_suffix('}')) {
                    groups.push(parse_event_list(inner)?.iter().try_fold(0u32, |m, &e| {
                        if m & e != 0 {
                            Err(Error::InvalidArgument(format!("repeated event in {t:?}")))
                        } else {
                            Ok(m | e)
                        }
                    })?);
                } else {
                    groups.push(parse_event(item)?);
                }
            }
            CausalOrder::total(&groups)
        }
        "discrete" | "indiscrete" => {
            let evs = parse_event_list(body)?;
            let mask = evs.iter().fold(0, |m, e| m | e);
            if mask.count_ones() as usize != evs.len() {
                return Err(Error::InvalidArgument(format!("repeated event in {t:?}")));
            }
            Ok(if name.trim() == "discrete" { CausalOrder::discrete(mask) } else { CausalOrder::indiscrete(mask) })
        }
        "wedge" => {
            let chains: Vec<CausalOrder> = split_top(body, &['|'])?
                .into_iter()
                .map(|c| CausalOrder::total(&parse_event_list(c)?))
                .collect::<Result<_>>()?;
            let events = chains.iter().fold(0, |m, o| m | o.events);
            chains.iter().try_fold(CausalOrder::discrete(events), |acc, o| acc.join(&o.extend_to(events)))
        }
        other => Err(Error::InvalidArgument(format!("unknown order constructor {other:?}"))),
    }
}

/// All preorders on an event set with their covering relation.
#[derive(Clone, Debug)]
pub struct OrderHierarchy {
    pub orders: Vec<CausalOrder>,
    /// `(i, j)`: order `i` is covered by order `j` (`i < j`, nothing between).
    pub covers: Vec<(usize, usize)>,
}

/// Enumerates all causal orders on the first `n` events.
pub fn order_hierarchy(n: usize) -> Result<OrderHierarchy> {
    if n > 4 {
        return Err(Error::Capacity("order hierarchy is limited to 4 events".into()));
    }
    let events = crate::encoding::first_events(n);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let mut orders = Vec::new();
    for sel in 0u64..1 << pairs.len() {
        let mut o = CausalOrder::discrete(events);
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if sel >> i & 1 == 1 {
                o.past[b] |= 1 << a;
            }
        }
        let before = o.past;
        o.close();
        if o.past == before {
            orders.push(o);
        }
    }
    let size = |o: &CausalOrder| iter_ones(o.events as u128).map(|x| o.past[x as usize].count_ones()).sum::<u32>();
    orders.sort_by_key(|o| (size(o), o.past));
    let mut covers = Vec::new();
    for i in 0..orders.len() {
        for j in 0..orders.len() {
            if i != j && orders[i].leq(&orders[j]) {
                let between = (0..orders.len())
                    .any(|k| k != i && k != j && orders[i].leq(&orders[k]) && orders[k].leq(&orders[j]));
                if !between {
                    covers.push((i, j));
                }
            }
        }
    }
    Ok(OrderHierarchy { orders, covers })
}
