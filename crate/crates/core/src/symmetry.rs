//! The event-input permutation group: event permutations combined with
//! per-event input flips.

use std::collections::HashMap;

use indexmap::IndexSet;
use itertools::Itertools;

use crate::encoding::{
    first_events, hset_members, hset_of, max_histories, mask_events, sort_by_key, sub_histories, EventId, History,
    HistorySet,
};
use crate::error::{Error, Result};

/// `event_perm[i]` is the image of the `i`-th event in sorted order, whose
/// input is XORed with `input_flips[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PermGroupEl {
    pub event_perm: Vec<EventId>,
    pub input_flips: Vec<u8>,
}

impl PermGroupEl {
    pub fn identity(events: &[EventId]) -> Self {
        let mut evs = events.to_vec();
        evs.sort();
        PermGroupEl { input_flips: vec![0; evs.len()], event_perm: evs }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &PermGroupEl) -> PermGroupEl {
        let mut sorted = self.event_perm.clone();
        sorted.sort();
        let pos = |e: EventId| sorted.iter().position(|&x| x == e).unwrap();
        let mut event_perm = Vec::with_capacity(sorted.len());
        let mut input_flips = Vec::with_capacity(sorted.len());
        for i in 0..sorted.len() {
            let mid = other.event_perm[i];
            let j = pos(mid);
            event_perm.push(self.event_perm[j]);
            input_flips.push(other.input_flips[i] ^ self.input_flips[j]);
        }
        PermGroupEl { event_perm, input_flips }
    }
}

/// All `n!·2^n` elements: event permutations in lexicographic order of
/// positions, and for each the flip vectors in lexicographic order.
pub fn iter_perm_group(events: &[EventId]) -> Result<Vec<PermGroupEl>> {
    let mut sorted = events.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != events.len() {
        return Err(Error::InvalidArgument("events must not be repeated".into()));
    }
    let n = events.len();
    if n == 0 {
        return Ok(vec![PermGroupEl { event_perm: Vec::new(), input_flips: Vec::new() }]);
    }
    let mut out = Vec::new();
    for perm in events.iter().copied().permutations(n) {
        for flips in (0..n).map(|_| 0u8..2).multi_cartesian_product() {
            out.push(PermGroupEl { event_perm: perm.clone(), input_flips: flips });
        }
    }
    Ok(out)
}

pub fn permute_history(h: History, g: &PermGroupEl) -> History {
    let mut sorted = g.event_perm.clone();
    sorted.sort();
    let mut bits = 0u64;
    for (idx, (e, target)) in sorted.iter().zip(&g.event_perm).enumerate() {
        if let Some(v) = h.value(*e) {
            bits |= 1 << (2 * target.index() + (v ^ g.input_flips[idx]) as usize);
        }
    }
    History(bits)
}

pub fn permute_hset(hs: &HistorySet, g: &PermGroupEl) -> HistorySet {
    hset_of(hset_members(hs).into_iter().map(|h| permute_history(h, g)))
}

/// Distinct images of a history set, in order of first encounter.
pub fn orbit(hs: &HistorySet, group: &[PermGroupEl]) -> Vec<HistorySet> {
    let images: IndexSet<HistorySet> = group.iter().map(|g| permute_hset(hs, g)).collect();
    images.into_iter().collect()
}

/// Elements fixing a history, in encounter order.
pub fn stabiliser_history(h: History, group: &[PermGroupEl]) -> Vec<PermGroupEl> {
    group.iter().filter(|g| permute_history(h, g) == h).cloned().collect()
}

/// Elements fixing a history set, in encounter order.
pub fn stabiliser(hs: &HistorySet, group: &[PermGroupEl]) -> Vec<PermGroupEl> {
    group.iter().filter(|g| &permute_hset(hs, g) == hs).cloned().collect()
}

/// Numerically smallest member of the orbit.
pub fn canonical_rep(hs: &HistorySet, group: &[PermGroupEl]) -> HistorySet {
    group.iter().map(|g| permute_hset(hs, g)).min().unwrap_or_else(|| hs.clone())
}

/// Precomputed action of the group on all non-empty histories over the
/// first `n` events. Histories are indexed by rank in sort-key order, and
/// sets of histories are 128-bit masks over ranks, so `n ≤ 4`.
#[derive(Clone, Debug)]
pub struct PermTable {
    n: usize,
    group: Vec<PermGroupEl>,
    histories: Vec<History>,
    rank: HashMap<History, u8>,
    action: Vec<Vec<u8>>,
}

impl PermTable {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 4 {
            return Err(Error::Capacity(format!("permutation tables support 1 to 4 events, not {n}")));
        }
        let events = mask_events(first_events(n));
        let group = iter_perm_group(&events)?;
        let mut histories = sub_histories(&max_histories(n));
        sort_by_key(&mut histories);
        let rank: HashMap<History, u8> = histories.iter().enumerate().map(|(i, &h)| (h, i as u8)).collect();
        let action = group
            .iter()
            .map(|g| histories.iter().map(|&h| rank[&permute_history(h, g)]).collect())
            .collect();
        Ok(PermTable { n, group, histories, rank, action })
    }

    pub fn num_events(&self) -> usize {
        self.n
    }

    pub fn group(&self) -> &[PermGroupEl] {
        &self.group
    }

    pub fn len(&self) -> usize {
        self.group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }

    /// All non-empty histories in sort-key order.
    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn rank(&self, h: History) -> Option<usize> {
        self.rank.get(&h).map(|&r| r as usize)
    }

    pub fn history(&self, rank: usize) -> History {
        self.histories[rank]
    }

    /// Rank of the image of the history with rank `r` under element `p`.
    #[inline]
    pub fn act(&self, p: usize, r: usize) -> usize {
        self.action[p][r] as usize
    }

    #[inline]
    pub fn act_mask(&self, p: usize, mask: u128) -> u128 {
        let row = &self.action[p];
        let mut out = 0u128;
        let mut m = mask;
        while m != 0 {
            let r = m.trailing_zeros() as usize;
            out |= 1u128 << row[r];
            m &= m - 1;
        }
        out
    }

    pub fn mask_of(&self, hs: &[History]) -> Result<u128> {
        hs.iter().try_fold(0u128, |m, h| {
            self.rank(*h)
                .map(|r| m | (1u128 << r))
                .ok_or_else(|| Error::InvalidArgument(format!("history {h} outside the first {} events", self.n)))
        })
    }

    /// Histories of a mask, in sort-key order.
    pub fn members(&self, mask: u128) -> Vec<History> {
        crate::encoding::iter_ones(mask).map(|r| self.histories[r as usize]).collect()
    }

    pub fn hset_of_mask(&self, mask: u128) -> HistorySet {
        hset_of(self.members(mask))
    }

    pub fn mask_of_hset(&self, hs: &HistorySet) -> Result<u128> {
        self.mask_of(&hset_members(hs))
    }

    /// Distinct images of a mask, in encounter order.
    pub fn orbit_masks(&self, mask: u128) -> Vec<u128> {
        let images: IndexSet<u128> = (0..self.group.len()).map(|p| self.act_mask(p, mask)).collect();
        images.into_iter().collect()
    }

    /// Orbit member with the numerically smallest history-set bitvector.
    pub fn canonical_mask(&self, mask: u128) -> u128 {
        self.orbit_masks(mask).into_iter().min_by_key(|&m| self.hset_of_mask(m)).unwrap()
    }
}
