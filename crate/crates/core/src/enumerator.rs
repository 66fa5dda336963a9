//! Search for equivalence classes of causally complete spaces.
//!
//! The search proceeds level by level from the maximal histories downward.
//! At each level a subset of children of the current candidate histories is
//! chosen; candidates whose children cover them are winnowed away, and the
//! resulting partial space is recursed into unless it, or one of its images
//! under the event-input permutation group, has been seen before.
//!
//! Internally histories are numbered by rank in sort-key order and sets of
//! histories are `u128` masks over ranks, which limits the search to 4
//! events.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use indexmap::{IndexMap, IndexSet};
use rayon::prelude::*;

use crate::checkpoint::SearchState;
use crate::encoding::{
    child_histories, hset_members, iter_ones, max_histories, parents, sort_by_key, History, HistorySet,
};
use crate::error::{Error, Result};
use crate::spaces::Space;
use crate::symmetry::PermTable;

/// Largest event count the search supports.
pub const MAX_SEARCH_EVENTS: usize = 4;

/// A fixed top-level choice: children that must be included and children
/// that must be left out.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChildChoice {
    pub children_to_include: Vec<History>,
    pub children_to_avoid: Vec<History>,
}

/// Outcome of the top-level optimisation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopLevelPlan {
    /// Fixed children for each top-level branch.
    pub child_choices: Vec<Vec<History>>,
    /// Total number of top-level subsets to iterate over.
    pub num_todo: u64,
    /// Children left free in each branch.
    pub remaining_children: Vec<Vec<History>>,
    /// `(max_depth, num_todo)` for every depth tried.
    pub depth_trace: Vec<(i64, u64)>,
}

/// Precomputed tables for the search on `n` events.
#[derive(Debug)]
pub struct SearchContext {
    n: usize,
    table: PermTable,
    max_hs: Vec<u8>,
    max_mask: u128,
    bits: Vec<u64>,
    domsize: Vec<u32>,
    children: Vec<u128>,
    parents: Vec<u128>,
}

impl SearchContext {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("the search needs at least one event".into()));
        }
        if n > MAX_SEARCH_EVENTS {
            return Err(Error::Capacity(format!("the search supports at most {MAX_SEARCH_EVENTS} events, not {n}")));
        }
        let table = PermTable::new(n)?;
        let hs = table.histories().to_vec();
        let rank = |h: History| table.rank(h).expect("sub-history of a maximal history") as u8;
        let max_hs: Vec<u8> = max_histories(n).into_iter().map(rank).collect();
        let max_mask = max_hs.iter().fold(0u128, |m, &r| m | 1 << r);
        let bits = hs.iter().map(|h| h.0).collect();
        let domsize = hs.iter().map(|h| h.domsize()).collect();
        let mut children = vec![0u128; hs.len()];
        let mut parents = vec![0u128; hs.len()];
        for (r, &h) in hs.iter().enumerate() {
            for k in child_histories(h) {
                let kr = rank(k);
                children[r] |= 1 << kr;
                parents[kr as usize] |= 1 << r;
            }
        }
        Ok(SearchContext { n, table, max_hs, max_mask, bits, domsize, children, parents })
    }

    pub fn num_events(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> &PermTable {
        &self.table
    }

    pub fn max_histories(&self) -> Vec<History> {
        self.max_hs.iter().map(|&r| self.table.history(r as usize)).collect()
    }

    fn ranks(&self, hs: &[History]) -> Result<Vec<u8>> {
        hs.iter()
            .map(|&h| {
                self.table
                    .rank(h)
                    .map(|r| r as u8)
                    .ok_or_else(|| Error::InvalidArgument(format!("history {h} outside the first {} events", self.n)))
            })
            .collect()
    }

    fn members(&self, mask: u128) -> Vec<History> {
        self.table.members(mask)
    }

    fn children_of_all(&self, hs: &[u8]) -> u128 {
        hs.iter().fold(0, |m, &h| m | self.children[h as usize])
    }

    /// Decodes `bits` over `child_hists` on top of `chosen`; the subset is
    /// kept if every history of `hs_mask` outside `covered` has a child in it.
    fn child_subset(&self, hs_mask: u128, child_hists: &[u8], bits: u64, covered: u128, chosen: u128) -> Option<u128> {
        let mut still = hs_mask & !covered;
        let mut subset = chosen;
        let mut b = bits;
        while b != 0 {
            let i = b.trailing_zeros() as usize;
            let k = child_hists[i] as usize;
            subset |= 1 << k;
            still &= !self.parents[k];
            b &= b - 1;
        }
        (still == 0).then_some(subset)
    }

    /// Sort key for candidate child subsets: larger first, then by member
    /// values in sort-key order.
    fn subset_order_key(&self, s: u128) -> (i64, Vec<u64>) {
        (-(s.count_ones() as i64), iter_ones(s).map(|r| self.bits[r as usize]).collect())
    }

    fn fix_child_choices_masked(
        &self,
        hs: &[u8],
        group: &[usize],
        include: u128,
        avoid: u128,
        depth: i64,
        max_depth: Option<i64>,
    ) -> Vec<(u128, u128)> {
        if group.len() == 1 || hs.is_empty() || max_depth.is_some_and(|d| depth > d) {
            return vec![(0, 0)];
        }
        let mut best: Option<(u8, IndexMap<u128, Vec<usize>>)> = None;
        let mut newly_fixed: Vec<u8> = Vec::new();
        for &h in hs {
            let ch = self.children[h as usize];
            let h_include = include & ch;
            let mut selected: Vec<u128> = submasks(ch).filter(|&s| s & avoid == 0 && h_include & !s == 0).collect();
            selected.sort_by_cached_key(|&s| self.subset_order_key(s));
            let mut subsets: IndexMap<u128, Vec<usize>> = IndexMap::new();
            let mut seen: IndexSet<u128> = IndexSet::new();
            for ks in selected {
                if ks == 0 || seen.contains(&ks) {
                    continue;
                }
                let mut stab = Vec::new();
                for &p in group {
                    let img = self.table.act_mask(p, ks);
                    if img == ks {
                        stab.push(p);
                    }
                    seen.insert(img);
                }
                subsets.insert(ks, stab);
            }
            if !subsets.is_empty() {
                if best.as_ref().is_none_or(|(_, b)| subsets.len() < b.len()) {
                    best = Some((h, subsets));
                }
            } else {
                newly_fixed.push(h);
            }
        }
        let Some((best_h, best_subsets)) = best else {
            return vec![(0, 0)];
        };
        newly_fixed.push(best_h);
        let new_hs: Vec<u8> = hs.iter().copied().filter(|h| !newly_fixed.contains(h)).collect();
        let mut out: IndexSet<(u128, u128)> = IndexSet::new();
        for (ks, stab) in best_subsets {
            let new_include = include | ks;
            let new_avoid = avoid | (self.children[best_h as usize] & !ks);
            for (ri, ra) in self.fix_child_choices_masked(&new_hs, &stab, new_include, new_avoid, depth + 1, max_depth) {
                out.insert((ri | ks, new_avoid | ra));
            }
        }
        out.into_iter().collect()
    }

    /// Symmetry-reduced fixed choices of children for `hs`, using the
    /// subgroup of `table().group()` given by `group` (indices).
    pub fn fix_child_choices(
        &self,
        hs: &[History],
        group: &[usize],
        include: &[History],
        avoid: &[History],
        max_depth: Option<i64>,
    ) -> Result<Vec<ChildChoice>> {
        if let Some(&p) = group.iter().find(|&&p| p >= self.table.len()) {
            return Err(Error::InvalidArgument(format!("group element {p} out of range")));
        }
        let hs = self.ranks(hs)?;
        let inc = mask_of_ranks(&self.ranks(include)?);
        let avo = mask_of_ranks(&self.ranks(avoid)?);
        if inc & avo != 0 {
            return Err(Error::InvalidArgument("children to include and to avoid overlap".into()));
        }
        Ok(self
            .fix_child_choices_masked(&hs, group, inc, avo, 0, max_depth)
            .into_iter()
            .map(|(i, a)| ChildChoice { children_to_include: self.members(i), children_to_avoid: self.members(a) })
            .collect())
    }

    fn opt_fix_masked(&self, hs: &[u8], group: &[usize], depth_cap: Option<i64>) -> (Vec<u128>, u64, Vec<u128>, Vec<(i64, u64)>) {
        let child_set = self.children_of_all(hs);
        let cap = depth_cap.unwrap_or(hs.len() as i64);
        let mut best: Option<(Vec<u128>, u64, Vec<u128>)> = None;
        let mut trace = Vec::new();
        for max_depth in -1..=cap {
            let fixed = self.fix_child_choices_masked(hs, group, 0, 0, 0, Some(max_depth));
            let mut num_todo = 0u64;
            let mut remaining = Vec::with_capacity(fixed.len());
            for &(inc, avoid) in &fixed {
                let rem = child_set & !(inc | avoid);
                num_todo += 1u64 << rem.count_ones();
                remaining.push(rem);
            }
            trace.push((max_depth, num_todo));
            if best.as_ref().is_none_or(|b| num_todo <= b.1) {
                best = Some((fixed.into_iter().map(|(i, _)| i).collect(), num_todo, remaining));
            } else {
                break;
            }
        }
        let (c, t, r) = best.expect("at least one depth is tried");
        (c, t, r, trace)
    }

    /// Sweeps the optimisation depth from −1 upward and keeps the first
    /// local minimum of the number of top-level subsets. A cap of −1 gives
    /// the unoptimised iteration.
    pub fn opt_fix_child_choices(&self, hs: &[History], group: &[usize], depth_cap: Option<i64>) -> Result<TopLevelPlan> {
        let hs = self.ranks(hs)?;
        let (c, num_todo, r, depth_trace) = self.opt_fix_masked(&hs, group, depth_cap);
        Ok(TopLevelPlan {
            child_choices: c.iter().map(|&m| self.members(m)).collect(),
            num_todo,
            remaining_children: r.iter().map(|&m| self.members(m)).collect(),
            depth_trace,
        })
    }

    /// The plan used by the search: all maximal histories, full group.
    pub fn top_level_plan(&self, depth_cap: Option<i64>) -> TopLevelPlan {
        let group: Vec<usize> = (0..self.table.len()).collect();
        self.opt_fix_child_choices(&self.max_histories(), &group, depth_cap).expect("maximal histories are ranked")
    }

    /// Number of subsets of all children of the maximal histories.
    pub fn brute_force_complexity(&self) -> u64 {
        1u64 << self.children_of_all(&self.max_hs).count_ones()
    }
}

fn mask_of_ranks(rs: &[u8]) -> u128 {
    rs.iter().fold(0, |m, &r| m | 1 << r)
}

/// All submasks of `m`, including zero.
fn submasks(m: u128) -> impl Iterator<Item = u128> {
    let mut next = Some(m);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & m) };
        Some(cur)
    })
}

/// Decodes `bits` over `hists` (by position) on top of `chosen`, returning
/// the subset if it gives a child to every history of `hs` not already in
/// `already_covered`. Histories may be on any number of events.
pub fn child_subset(
    hs: &[History],
    child_hists: &[History],
    bits: u64,
    already_covered: &[History],
    chosen: &[History],
) -> Option<Vec<History>> {
    let ps = parents(hs);
    let mut still: IndexSet<History> = hs.iter().copied().filter(|h| !already_covered.contains(h)).collect();
    let mut subset: IndexSet<History> = chosen.iter().copied().collect();
    for (i, &k) in child_hists.iter().enumerate().take(64) {
        if bits >> i & 1 == 1 {
            subset.insert(k);
            if let Some(pk) = ps.get(&k) {
                for p in pk {
                    still.shift_remove(p);
                }
            }
        }
    }
    if !still.is_empty() {
        return None;
    }
    let mut out: Vec<History> = subset.into_iter().collect();
    sort_by_key(&mut out);
    Some(out)
}

/// Subsets of the children of `hs` that give each member of `hs` at least
/// one child, in increasing bitvector order over the children sorted by key.
pub fn iter_child_subsets(hs: &[History]) -> Result<impl Iterator<Item = Vec<History>>> {
    let mut kids: Vec<History> = hs.iter().flat_map(|&h| child_histories(h)).collect::<IndexSet<_>>().into_iter().collect();
    sort_by_key(&mut kids);
    if kids.len() > 63 {
        return Err(Error::Capacity(format!("{} children is too many to enumerate subsets of", kids.len())));
    }
    let hs = hs.to_vec();
    let total = 1u64 << kids.len();
    Ok((1..total).filter_map(move |bits| child_subset(&hs, &kids, bits, &[], &[])))
}

/// Visited sets shared by a search and its workers.
#[derive(Clone, Debug, Default)]
struct Visited {
    partial: IndexSet<u128>,
    eq: IndexSet<u128>,
    num_spaces: u64,
}

struct Explorer<'a> {
    ctx: &'a SearchContext,
    stop: Option<&'a AtomicBool>,
}

impl Explorer<'_> {
    /// Handles one chosen subset of children for candidates `new_hs ++ hs`.
    fn subset(
        &self,
        v: &mut Visited,
        child_mask: u128,
        new_hs: &[u8],
        hs: &[u8],
        hs_rest: &[u64],
        level: usize,
        emit: &mut dyn FnMut(&mut Visited, u128),
    ) {
        let ctx = self.ctx;
        let so_far: Vec<u8> = new_hs.iter().chain(hs).copied().collect();
        let mut rest: Vec<u64> = new_hs.iter().map(|&h| ctx.bits[h as usize]).chain(hs_rest.iter().copied()).collect();
        for k in iter_ones(child_mask) {
            let kb = ctx.bits[k as usize];
            for (j, &h) in so_far.iter().enumerate() {
                if kb & ctx.bits[h as usize] == kb {
                    rest[j] &= !kb;
                }
            }
        }
        let mut winnowed = Vec::new();
        let mut winnowed_rest = Vec::new();
        let mut partial = child_mask;
        for (j, &h) in so_far.iter().enumerate() {
            if rest[j] != 0 {
                winnowed.push(h);
                winnowed_rest.push(rest[j]);
                partial |= 1 << h;
            }
        }
        let mut seen = v.partial.contains(&partial) || v.eq.contains(&partial);
        let mut orbit_len = 0u64;
        if !seen {
            let mut orbit: IndexSet<u128> = IndexSet::new();
            for p in 0..ctx.table.len() {
                let img = ctx.table.act_mask(p, partial);
                orbit.insert(img);
                if v.partial.contains(&img) || v.eq.contains(&img) {
                    seen = true;
                    break;
                }
            }
            orbit_len = orbit.len() as u64;
        }
        if seen {
            return;
        }
        if iter_ones(child_mask).all(|k| ctx.domsize[k as usize] == 1) {
            v.num_spaces += orbit_len;
            emit(v, partial);
        } else {
            v.partial.insert(partial);
            let children: Vec<u8> = iter_ones(child_mask).map(|k| k as u8).collect();
            self.level(v, &children, &winnowed, &winnowed_rest, level + 1, emit);
        }
    }

    /// Iterates over covering child subsets below the top level.
    fn level(
        &self,
        v: &mut Visited,
        new_hs: &[u8],
        hs: &[u8],
        hs_rest: &[u64],
        level: usize,
        emit: &mut dyn FnMut(&mut Visited, u128),
    ) {
        let ctx = self.ctx;
        let kids: Vec<u8> = iter_ones(ctx.children_of_all(new_hs)).map(|k| k as u8).collect();
        let hs_mask = mask_of_ranks(new_hs);
        let total = 1u64 << kids.len();
        for bits in 1..total {
            if bits & 0xfff == 0 && self.stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                return;
            }
            if let Some(cs) = ctx.child_subset(hs_mask, &kids, bits, 0, 0) {
                self.subset(v, cs, new_hs, hs, hs_rest, level, emit);
            }
        }
    }
}

/// Where and how often the search state is saved.
#[derive(Clone, Debug)]
pub struct SaveOptions {
    pub path: PathBuf,
    /// Save after at least this many new classes; `None` saves only at the end.
    pub save_period: Option<u64>,
    pub backup: bool,
}

#[derive(Clone, Debug)]
pub struct FinderOptions {
    pub verbose: bool,
    /// Print a status line every this many classes; `None` prints one after
    /// every top-level subset.
    pub update_period: Option<u64>,
    pub save: Option<SaveOptions>,
    /// Cap on the top-level optimisation depth; `Some(-1)` iterates over all
    /// top-level subsets without symmetry reduction. Defaults to the number
    /// of maximal histories.
    pub toplevel_opt_depth: Option<i64>,
}

impl Default for FinderOptions {
    fn default() -> Self {
        FinderOptions { verbose: false, update_period: Some(1), save: None, toplevel_opt_depth: None }
    }
}

/// How a search call ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Interrupted,
}

/// Progress snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub num_spaces: u64,
    pub num_eq_classes: u64,
    pub num_done: u64,
    pub num_todo: u64,
    /// Fraction of top-level subsets processed.
    pub completed: f64,
    /// Fraction of fixed top-level choices fully processed.
    pub fixed_completed: f64,
    /// Fraction of the current fixed choice's variable subsets processed.
    pub var_completed: f64,
    pub elapsed: Duration,
    /// Upper bound on memory used by the search tables and collections.
    pub memsize: u64,
}

#[derive(Clone, Debug, Default)]
struct Progress {
    initialised: bool,
    num_done: u64,
    num_todo: u64,
    fix_idx: u64,
    var: u64,
    choices: Vec<u128>,
    remaining: Vec<u128>,
}

/// Friendly time, as in `2.91ms` or `3m12s`.
pub fn time_str(secs: f64) -> String {
    if secs <= 0.0 {
        return "0s".into();
    }
    if secs < 1e-6 {
        return format!("{:.2}ns", secs * 1e9);
    }
    if secs < 1e-3 {
        return format!("{:.2}us", secs * 1e6);
    }
    if secs < 1.0 {
        return format!("{:.2}ms", secs * 1e3);
    }
    if secs < 60.0 {
        return format!("{secs:.2}s");
    }
    let t = secs as u64;
    if t < 3600 {
        return format!("{}m{}s", t / 60, t % 60);
    }
    if t < 86400 {
        return format!("{}h{}m", t / 3600, (t % 3600) / 60);
    }
    format!("{}d{}h", t / 86400, (t % 86400) / 3600)
}

/// Friendly byte count, as in `10.35KiB`.
pub fn memory_str(bytes: u64) -> String {
    const K: f64 = 1024.0;
    let b = bytes as f64;
    if bytes < 1024 {
        format!("{bytes}B")
    } else if b < K * K {
        format!("{:.2}KiB", b / K)
    } else if b < K * K * K {
        format!("{:.2}MiB", b / (K * K))
    } else {
        format!("{:.2}GiB", b / (K * K * K))
    }
}

pub const STATUS_HEADER: &str =
    "      time       spaces    eq. cls     memory  completed fts compl. vts compl.";

/// The space finder: owns a search state and runs the search on it.
pub struct SpaceFinder {
    ctx: Arc<SearchContext>,
    opts: FinderOptions,
    vis: Visited,
    prog: Progress,
    out: Box<dyn Write + Send>,
    stop: Option<Arc<AtomicBool>>,
    start: Instant,
    since_last_save: u64,
    ready: bool,
}

impl SpaceFinder {
    pub fn new(n: usize, opts: FinderOptions) -> Result<Self> {
        Ok(Self::with_context(Arc::new(SearchContext::new(n)?), opts))
    }

    pub fn with_context(ctx: Arc<SearchContext>, opts: FinderOptions) -> Self {
        SpaceFinder {
            ctx,
            opts,
            vis: Visited::default(),
            prog: Progress::default(),
            out: Box::new(std::io::stdout()),
            stop: None,
            start: Instant::now(),
            since_last_save: 0,
            ready: false,
        }
    }

    pub fn context(&self) -> &Arc<SearchContext> {
        &self.ctx
    }

    pub fn num_events(&self) -> usize {
        self.ctx.n
    }

    pub fn options(&self) -> &FinderOptions {
        &self.opts
    }

    /// Redirects status output.
    pub fn set_output(&mut self, out: Box<dyn Write + Send>) {
        self.out = out;
    }

    /// The search stops at the next top-level boundary once the flag is set.
    pub fn set_stop_flag(&mut self, flag: Arc<AtomicBool>) {
        self.stop = Some(flag);
    }

    pub fn blank_state(&mut self) {
        self.vis = Visited::default();
        self.prog = Progress::default();
        self.ready = true;
    }

    pub fn load_state(&mut self, path: &std::path::Path) -> Result<()> {
        let st = SearchState::load(path)?;
        self.set_state(&st)
    }

    /// Installs a state, checking that it belongs to a search on this many
    /// events.
    pub fn set_state(&mut self, st: &SearchState) -> Result<()> {
        let ctx = &self.ctx;
        let conv = |hs: &HistorySet| -> Result<u128> {
            ctx.table.mask_of_hset(hs).map_err(|_| {
                Error::InvalidArgument(format!("state does not belong to a search on {} events", ctx.n))
            })
        };
        let partial = st.partial_spaces_visited.iter().map(conv).collect::<Result<IndexSet<_>>>()?;
        let eq = st.eq_classes.iter().map(conv).collect::<Result<IndexSet<_>>>()?;
        let choices = st.child_choices_list.iter().map(conv).collect::<Result<Vec<_>>>()?;
        let remaining = st.remaining_children_list.iter().map(conv).collect::<Result<Vec<_>>>()?;
        let all_children = ctx.children_of_all(&ctx.max_hs);
        if choices.iter().chain(&remaining).any(|&m| m & !all_children != 0) {
            return Err(Error::InvalidArgument(format!(
                "top-level choices do not belong to a search on {} events",
                ctx.n
            )));
        }
        if let Some(&rem) = remaining.get(st.fix_child_choice_idx as usize) {
            if rem.count_ones() < 64 && st.var_child_subset_bitvec > 1u64 << rem.count_ones() {
                return Err(Error::Corrupt("variable subset counter out of range".into()));
            }
        }
        self.vis = Visited { partial, eq, num_spaces: st.num_spaces };
        self.prog = Progress {
            initialised: !choices.is_empty(),
            num_done: st.num_done,
            num_todo: st.num_todo,
            fix_idx: st.fix_child_choice_idx,
            var: st.var_child_subset_bitvec,
            choices,
            remaining,
        };
        self.ready = true;
        Ok(())
    }

    pub fn state(&self) -> SearchState {
        let t = &self.ctx.table;
        SearchState {
            num_spaces: self.vis.num_spaces,
            num_done: self.prog.num_done,
            num_todo: self.prog.num_todo,
            fix_child_choice_idx: self.prog.fix_idx,
            var_child_subset_bitvec: self.prog.var,
            partial_spaces_visited: self.vis.partial.iter().map(|&m| t.hset_of_mask(m)).collect(),
            eq_classes: self.vis.eq.iter().map(|&m| t.hset_of_mask(m)).collect(),
            child_choices_list: self.prog.choices.iter().map(|&m| t.hset_of_mask(m)).collect(),
            remaining_children_list: self.prog.remaining.iter().map(|&m| t.hset_of_mask(m)).collect(),
        }
    }

    pub fn save_state(&mut self, path: &std::path::Path, backup: bool) -> Result<usize> {
        if self.opts.verbose {
            let _ = write!(self.out, "Saving state to {}... ", path.display());
        }
        let n = self.state().save(path, backup)?;
        if self.opts.verbose {
            let _ = writeln!(self.out, "done ({} written).", memory_str(n as u64));
        }
        Ok(n)
    }

    fn save_if_configured(&mut self) -> Result<()> {
        if let Some(s) = self.opts.save.clone() {
            self.save_state(&s.path, s.backup)?;
        }
        Ok(())
    }

    /// Class representatives in discovery order.
    pub fn eq_classes(&self) -> Vec<HistorySet> {
        self.vis.eq.iter().map(|&m| self.ctx.table.hset_of_mask(m)).collect()
    }

    pub fn num_spaces(&self) -> u64 {
        self.vis.num_spaces
    }

    pub fn num_eq_classes(&self) -> u64 {
        self.vis.eq.len() as u64
    }

    pub fn metrics(&self) -> Metrics {
        metrics(&self.ctx, &self.vis, &self.prog, self.start.elapsed())
    }

    fn status_line(&self) -> String {
        status_line(&self.metrics())
    }

    fn say(&mut self, line: &str) {
        if self.opts.verbose {
            let _ = writeln!(self.out, "{line}");
            let _ = self.out.flush();
        }
    }

    fn require_ready(&self) -> Result<()> {
        if !self.ready {
            return Err(Error::Precondition("initialise with a blank state or load one before searching".into()));
        }
        Ok(())
    }

    fn init_top_level(&mut self) {
        if self.prog.initialised {
            return;
        }
        let ctx = self.ctx.clone();
        if self.opts.verbose {
            self.say(&format!(
                "Brute-forcing complexity: {} top-level child history subsets.",
                ctx.brute_force_complexity()
            ));
        }
        let cap = self.opts.toplevel_opt_depth.unwrap_or(ctx.max_hs.len() as i64);
        if cap >= 0 {
            self.say(&format!("Optimising top-level child history subsets (max depth {cap})."));
        }
        let group: Vec<usize> = (0..ctx.table.len()).collect();
        let (choices, num_todo, remaining, trace) = ctx.opt_fix_masked(&ctx.max_hs, &group, Some(cap));
        let mut best: Option<u64> = None;
        for (d, t) in trace {
            if best.is_none_or(|b| t <= b) {
                best = Some(t);
                if d >= 0 {
                    self.say(&format!("  {t} subsets at optimisation depth {d}"));
                }
            }
        }
        self.prog = Progress { initialised: true, num_done: 0, num_todo, fix_idx: 0, var: 0, choices, remaining };
    }

    fn stop_requested(&self) -> bool {
        self.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed))
    }

    /// Runs (or resumes) the search to completion or interruption.
    pub fn find_eq_classes(&mut self) -> Result<Outcome> {
        self.find_eq_classes_with(|_| {})
    }

    /// As [`find_eq_classes`](Self::find_eq_classes), passing each new
    /// representative to `on_class`.
    pub fn find_eq_classes_with<F: FnMut(&HistorySet)>(&mut self, mut on_class: F) -> Result<Outcome> {
        self.require_ready()?;
        self.start = Instant::now();
        self.since_last_save = 0;
        self.init_top_level();
        let ctx = self.ctx.clone();
        self.say(&format!("Iterating over {} top-level child history subsets.", self.prog.num_todo));
        self.say(STATUS_HEADER);
        let explorer = Explorer { ctx: &ctx, stop: None };
        let max_hs = ctx.max_hs.clone();
        while (self.prog.fix_idx as usize) < self.prog.choices.len() {
            let idx = self.prog.fix_idx as usize;
            let choice = self.prog.choices[idx];
            let kids: Vec<u8> = iter_ones(self.prog.remaining[idx]).map(|k| k as u8).collect();
            let covered = max_hs
                .iter()
                .filter(|&&h| ctx.children[h as usize] & choice != 0)
                .fold(0u128, |m, &h| m | 1 << h);
            let total = 1u64 << kids.len();
            while self.prog.var < total {
                let cs = if ctx.n == 1 {
                    Some(0)
                } else {
                    ctx.child_subset(ctx.max_mask, &kids, self.prog.var, covered, choice)
                };
                self.prog.num_done += 1;
                if let Some(cs) = cs {
                    let SpaceFinder { vis, prog, out, opts, since_last_save, start, .. } = self;
                    let mut emit = |v: &mut Visited, m: u128| {
                        v.eq.insert(m);
                        *since_last_save += 1;
                        if let Some(p) = opts.update_period {
                            if opts.verbose && (v.eq.len() as u64).is_multiple_of(p.max(1)) {
                                let line = status_line(&metrics(&ctx, v, prog, start.elapsed()));
                                let _ = writeln!(out, "{line}");
                            }
                        }
                        on_class(&ctx.table.hset_of_mask(m));
                    };
                    explorer.subset(vis, cs, &max_hs, &[], &[], 0, &mut emit);
                }
                if self.opts.update_period.is_none() {
                    let line = self.status_line();
                    self.say(&line);
                }
                self.prog.var += 1;
                if cs.is_some() {
                    self.consider_saving()?;
                }
                if self.stop_requested() {
                    self.save_if_configured()?;
                    return Ok(Outcome::Interrupted);
                }
            }
            self.prog.var = 0;
            self.prog.fix_idx += 1;
        }
        self.finish()
    }

    fn consider_saving(&mut self) -> Result<()> {
        if let Some(p) = self.opts.save.as_ref().and_then(|s| s.save_period) {
            if self.since_last_save >= p {
                self.since_last_save = 0;
                self.save_if_configured()?;
                let line = self.status_line();
                self.say(&line);
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<Outcome> {
        if self.opts.update_period.is_some() {
            let line = self.status_line();
            self.say(&line);
        }
        self.vis.partial.clear();
        self.save_if_configured()?;
        let msg = format!("Found {} spaces in {} equivalence classes.", self.vis.num_spaces, self.vis.eq.len());
        self.say(&msg);
        Ok(Outcome::Completed)
    }

    /// Runs the remaining fixed top-level choices concurrently, one task per
    /// choice, each with its own copy of the visited sets. Results are merged
    /// in choice order, keeping the first representative of each orbit.
    /// State is saved only at the end; an interrupted run leaves the state
    /// as it was before the call.
    pub fn find_eq_classes_parallel(&mut self) -> Result<Outcome> {
        self.require_ready()?;
        self.start = Instant::now();
        self.init_top_level();
        let ctx = self.ctx.clone();
        self.say(&format!("Iterating over {} top-level child history subsets.", self.prog.num_todo));
        self.say(STATUS_HEADER);
        let start_idx = self.prog.fix_idx as usize;
        let first_var = self.prog.var;
        let stop = self.stop.clone();
        let base = Visited { partial: self.vis.partial.clone(), eq: self.vis.eq.clone(), num_spaces: 0 };
        let chunks: Vec<(usize, u128, u128)> = (start_idx..self.prog.choices.len())
            .map(|i| (i, self.prog.choices[i], self.prog.remaining[i]))
            .collect();
        let results: Vec<Option<Vec<u128>>> = chunks
            .par_iter()
            .map(|&(i, choice, rem)| {
                let stop_ref = stop.as_deref();
                let explorer = Explorer { ctx: &ctx, stop: stop_ref };
                let mut v = base.clone();
                let mut found = Vec::new();
                let kids: Vec<u8> = iter_ones(rem).map(|k| k as u8).collect();
                let covered = ctx
                    .max_hs
                    .iter()
                    .filter(|&&h| ctx.children[h as usize] & choice != 0)
                    .fold(0u128, |m, &h| m | 1 << h);
                let from = if i == start_idx { first_var } else { 0 };
                for bits in from..1u64 << kids.len() {
                    if stop_ref.is_some_and(|s| s.load(Ordering::Relaxed)) {
                        return None;
                    }
                    let cs = if ctx.n == 1 { Some(0) } else { ctx.child_subset(ctx.max_mask, &kids, bits, covered, choice) };
                    if let Some(cs) = cs {
                        let mut emit = |v: &mut Visited, m: u128| {
                            v.eq.insert(m);
                            found.push(m);
                        };
                        explorer.subset(&mut v, cs, &ctx.max_hs, &[], &[], 0, &mut emit);
                    }
                }
                if stop_ref.is_some_and(|s| s.load(Ordering::Relaxed)) {
                    return None;
                }
                Some(found)
            })
            .collect();
        if results.iter().any(Option::is_none) {
            return Ok(Outcome::Interrupted);
        }
        let mut canon: IndexSet<u128> = self.vis.eq.iter().map(|&m| ctx.table.canonical_mask(m)).collect();
        for m in results.into_iter().flatten().flatten() {
            if canon.insert(ctx.table.canonical_mask(m)) {
                self.vis.eq.insert(m);
                self.vis.num_spaces += ctx.table.orbit_masks(m).len() as u64;
            }
        }
        self.prog.num_done = self.prog.num_todo;
        self.prog.fix_idx = self.prog.choices.len() as u64;
        self.prog.var = 0;
        self.finish()
    }
}

fn metrics(ctx: &SearchContext, v: &Visited, p: &Progress, elapsed: Duration) -> Metrics {
    let completed = if p.num_todo == 0 { 0.0 } else { p.num_done as f64 / p.num_todo as f64 };
    let fixed_completed = if p.choices.is_empty() { 0.0 } else { p.fix_idx as f64 / p.choices.len() as f64 };
    let var_completed = match p.remaining.get(p.fix_idx as usize) {
        None if !p.choices.is_empty() => 1.0,
        None => 0.0,
        Some(rem) => p.var as f64 / 2f64.powi(rem.count_ones() as i32),
    };
    // Tables: action rows plus per-history arrays; collections: one mask,
    // one hash and one index slot per entry.
    let h = ctx.table.histories().len() as u64;
    let fixed = ctx.table.len() as u64 * h + h * (8 + 4 + 16 + 16 + 8);
    let per_entry = 16 + 8 + 8;
    let entries = (v.partial.len() + v.eq.len() + p.choices.len() + p.remaining.len()) as u64;
    Metrics {
        num_spaces: v.num_spaces,
        num_eq_classes: v.eq.len() as u64,
        num_done: p.num_done,
        num_todo: p.num_todo,
        completed,
        fixed_completed,
        var_completed,
        elapsed,
        memsize: fixed + entries * per_entry,
    }
}

/// Formats a status-table row aligned with [`STATUS_HEADER`].
pub fn status_line(m: &Metrics) -> String {
    format!(
        "{: >10} {: >12} {: >10} {: >10} {: >10} {: >10} {: >10}",
        time_str(m.elapsed.as_secs_f64()),
        m.num_spaces,
        m.num_eq_classes,
        memory_str(m.memsize),
        format!("{:.4}%", m.completed * 100.0),
        format!("{:.4}%", m.fixed_completed * 100.0),
        format!("{:.4}%", m.var_completed * 100.0),
    )
}

struct Catalogue {
    reps: Vec<HistorySet>,
    spaces: Vec<Space>,
}

static CATALOGUES: [OnceLock<Catalogue>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];

fn catalogue(n: usize) -> Result<&'static Catalogue> {
    if n > 3 {
        return Err(Error::Capacity("full space lists are available for at most 3 events".into()));
    }
    if let Some(c) = CATALOGUES[n].get() {
        return Ok(c);
    }
    let built = if n == 0 {
        Catalogue { reps: vec![HistorySet::default()], spaces: vec![Space::empty()] }
    } else {
        let mut f = SpaceFinder::new(n, FinderOptions { verbose: false, ..FinderOptions::default() })?;
        f.blank_state();
        f.find_eq_classes()?;
        let t = &f.ctx.table;
        let mut all: Vec<HistorySet> = f.vis.eq.iter().flat_map(|&m| t.orbit_masks(m)).map(|m| t.hset_of_mask(m)).collect();
        all.sort();
        let events = crate::encoding::first_events(n);
        let spaces = all.iter().map(|b| Space::new_unchecked(events, hset_members(b))).collect();
        Catalogue { reps: f.eq_classes(), spaces }
    };
    Ok(CATALOGUES[n].get_or_init(|| built))
}

/// Representatives of the classes on `n ≤ 3` events, in discovery order.
pub fn eq_class_reps(n: usize) -> Result<&'static [HistorySet]> {
    Ok(&catalogue(n)?.reps)
}

/// Every causally complete space on the first `n ≤ 3` events, in increasing
/// bitvector order.
pub fn all_spaces(n: usize) -> Result<&'static [Space]> {
    Ok(&catalogue(n)?.spaces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::hset_of;
    use crate::spaces::{is_causally_complete, is_free_choice};

    fn h(s: &str) -> History {
        s.parse().unwrap()
    }

    fn vals(hs: &[History]) -> Vec<u64> {
        let mut v: Vec<u64> = hs.iter().map(|h| h.0).collect();
        v.sort();
        v
    }

    fn run(n: usize, depth: Option<i64>) -> SpaceFinder {
        let mut f = SpaceFinder::new(n, FinderOptions { toplevel_opt_depth: depth, ..Default::default() }).unwrap();
        f.blank_state();
        assert_eq!(f.find_eq_classes().unwrap(), Outcome::Completed);
        f
    }

    #[test]
    fn two_events() {
        let f = run(2, None);
        let reps: Vec<u64> = f.eq_classes().iter().map(|x| x.try_into().unwrap()).collect();
        assert_eq!(reps, vec![1362, 278, 1638]);
        assert_eq!(f.num_spaces(), 7);
        let m = f.metrics();
        assert_eq!((m.num_done, m.num_todo), (6, 6));
        assert_eq!(m.completed, 1.0);
    }

    #[test]
    fn one_event() {
        let f = run(1, None);
        assert_eq!(f.eq_classes(), vec![hset_of([h("A/0"), h("A/1")])]);
        assert_eq!(f.num_spaces(), 1);
    }

    #[test]
    fn three_events_and_brute_force_agree() {
        let f = run(3, None);
        assert_eq!(f.num_eq_classes(), 102);
        assert_eq!(f.num_spaces(), 2644);
        let g = run(3, Some(-1));
        assert_eq!(g.num_spaces(), 2644);
        let t = f.context().table();
        let canon = |x: &SpaceFinder| -> IndexSet<u128> {
            let mut v: Vec<u128> = x.vis.eq.iter().map(|&m| t.canonical_mask(m)).collect();
            v.sort();
            v.into_iter().collect()
        };
        assert_eq!(canon(&f), canon(&g));
        for rep in f.eq_classes() {
            let s = Space::from_bits_n(3, &rep).unwrap();
            assert!(is_free_choice(&s));
            assert!(is_causally_complete(&s).unwrap());
        }
    }

    #[test]
    fn todo_counts() {
        assert_eq!(SearchContext::new(2).unwrap().top_level_plan(None).num_todo, 6);
        assert_eq!(SearchContext::new(3).unwrap().top_level_plan(None).num_todo, 922);
        assert_eq!(SearchContext::new(2).unwrap().brute_force_complexity(), 16);
        assert_eq!(SearchContext::new(3).unwrap().brute_force_complexity(), 4096);
        assert_eq!(SearchContext::new(3).unwrap().top_level_plan(Some(-1)).num_todo, 4096);
    }

    #[test]
    fn two_event_plan() {
        let plan = SearchContext::new(2).unwrap().top_level_plan(None);
        let fixed: Vec<Vec<u64>> = plan.child_choices.iter().map(|c| vals(c)).collect();
        let var: Vec<Vec<u64>> = plan.remaining_children.iter().map(|c| vals(c)).collect();
        assert_eq!(fixed, vec![vec![1, 4, 8], vec![1, 4], vec![1, 2, 8], vec![1, 2]]);
        assert_eq!(var, vec![vec![2], vec![2], vec![], vec![]]);
    }

    #[test]
    fn first_fixing_step() {
        let ctx = SearchContext::new(3).unwrap();
        let t = ctx.table();
        let ranks = ctx.ranks(&ctx.max_histories()).unwrap();
        // Depth 0 only: branch on the best history and stop.
        let group: Vec<usize> = (0..t.len()).collect();
        let choices = ctx.fix_child_choices_masked(&ranks, &group, 0, 0, 0, Some(0));
        let incs: Vec<Vec<History>> = choices.iter().map(|&(i, _)| ctx.members(i)).collect();
        let top = h("A/0,B/0,C/0");
        let kids = child_histories(top);
        assert_eq!(incs.len(), 3);
        assert_eq!(incs[0].len(), 3);
        assert!(incs.iter().flatten().all(|k| kids.contains(k)));
        let stab = |hs: &[History]| {
            let m = t.mask_of(hs).unwrap();
            (0..t.len()).filter(|&p| t.act_mask(p, m) == m).count()
        };
        assert_eq!(incs.iter().map(|c| stab(c)).collect::<Vec<_>>(), vec![6, 2, 4]);
    }

    #[test]
    fn child_subset_cases() {
        let hs = max_histories(2);
        let mut kids: Vec<History> = hs.iter().flat_map(|&x| child_histories(x)).collect::<IndexSet<_>>().into_iter().collect();
        sort_by_key(&mut kids);
        assert_eq!(child_subset(&hs, &kids, 0, &[], &[]), None);
        let full = child_subset(&hs, &kids, (1 << kids.len()) - 1, &[], &[]).unwrap();
        assert_eq!(vals(&full), vals(&kids));
        // {A/0, B/0} leaves A/1,B/1 without a child.
        let sel: u64 = kids.iter().enumerate().filter(|(_, k)| **k == h("A/0") || **k == h("B/0")).map(|(i, _)| 1 << i).sum();
        assert_eq!(child_subset(&hs, &kids, sel, &[], &[]), None);
        let single = [h("A/0,B/0")];
        let subs: Vec<Vec<History>> = iter_child_subsets(&single).unwrap().collect();
        assert_eq!(subs.len(), 3);
        assert!(iter_child_subsets(&max_histories(3)).unwrap().count() as u64 <= 4096);
    }

    #[test]
    fn masked_and_generic_child_subsets_agree() {
        let ctx = SearchContext::new(3).unwrap();
        let hs = ctx.max_histories();
        let generic: Vec<u128> = iter_child_subsets(&hs).unwrap().map(|s| ctx.table().mask_of(&s).unwrap()).collect();
        let kids: Vec<u8> = iter_ones(ctx.children_of_all(&ctx.max_hs)).map(|k| k as u8).collect();
        let masked: Vec<u128> =
            (1..1u64 << kids.len()).filter_map(|b| ctx.child_subset(ctx.max_mask, &kids, b, 0, 0)).collect();
        assert_eq!(generic, masked);
    }

    #[test]
    fn time_and_memory_strings() {
        assert_eq!(time_str(0.0), "0s");
        assert_eq!(time_str(0.00291), "2.91ms");
        assert_eq!(time_str(5e-7), "500.00ns");
        assert_eq!(time_str(12.345), "12.35s");
        assert_eq!(time_str(125.0), "2m5s");
        assert_eq!(time_str(7300.0), "2h1m");
        assert_eq!(time_str(90000.0), "1d1h");
        assert_eq!(memory_str(10), "10B");
        assert_eq!(memory_str(10598), "10.35KiB");
        assert_eq!(memory_str(3 << 20), "3.00MiB");
    }

    #[test]
    fn blank_metrics_and_uninitialised() {
        let mut f = SpaceFinder::new(2, FinderOptions::default()).unwrap();
        assert!(matches!(f.find_eq_classes(), Err(Error::Precondition(_))));
        f.blank_state();
        let m = f.metrics();
        assert_eq!((m.num_done, m.num_eq_classes, m.num_spaces), (0, 0, 0));
        assert!(SpaceFinder::new(5, FinderOptions::default()).is_err());
        assert!(SpaceFinder::new(0, FinderOptions::default()).is_err());
    }

    #[test]
    fn all_spaces_cached() {
        assert_eq!(all_spaces(2).unwrap().len(), 7);
        assert_eq!(all_spaces(1).unwrap().len(), 1);
        assert_eq!(all_spaces(0).unwrap(), &[Space::empty()]);
        assert!(all_spaces(4).is_err());
    }

    #[derive(Clone, Default)]
    struct SharedBuf(Arc<std::sync::Mutex<Vec<u8>>>);

    impl Write for SharedBuf {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    const THREE_EVENT_CHOICES: [(&[u64], &[u64]); 24] = [
        (&[5, 9, 17, 20, 24, 33, 36], &[]),
        (&[5, 9, 17, 20, 33, 36], &[24]),
        (&[5, 17, 20, 24, 33, 36], &[9]),
        (&[5, 17, 20, 33, 36], &[9, 24]),
        (&[5, 17, 20, 33], &[36]),
        (&[5, 9, 17, 20, 40], &[33, 36]),
        (&[5, 9, 17, 20], &[33, 36, 40]),
        (&[5, 17, 20, 40], &[9, 33, 36]),
        (&[5, 6, 17, 18, 33, 36], &[20]),
        (&[5, 6, 17, 18, 33], &[20, 36]),
        (&[5, 6, 17, 18, 36], &[20, 33]),
        (&[5, 6, 17, 18], &[20, 33, 36]),
        (&[5, 6, 17], &[18, 20]),
        (&[5, 9, 24, 33, 36], &[17, 20]),
        (&[5, 9, 33, 36], &[17, 20, 24]),
        (&[5, 24, 33, 36], &[9, 17, 20]),
        (&[5, 33], &[17, 20, 36]),
        (&[5, 9, 24], &[17, 20, 33, 36]),
        (&[5, 9, 40], &[17, 20, 24, 33, 36]),
        (&[5, 6, 9, 18], &[17, 20, 24, 33, 36, 40]),
        (&[5, 6, 9, 10, 34], &[17, 18, 20, 24, 33, 36, 40]),
        (&[5, 6, 9, 10], &[17, 18, 20, 24, 33, 34, 36, 40]),
        (&[5, 9, 18], &[6, 17, 20, 24, 33, 36, 40]),
        (&[5, 24], &[9, 17, 20, 33, 36]),
    ];

    #[test]
    fn three_event_choices() {
        let ctx = SearchContext::new(3).unwrap();
        let group: Vec<usize> = (0..ctx.table().len()).collect();
        let hs = ctx.max_histories();
        let all: Vec<u64> = vals(&hs.iter().flat_map(|&x| child_histories(x)).collect::<IndexSet<_>>().into_iter().collect::<Vec<_>>());
        assert_eq!(all, vec![5, 6, 9, 10, 17, 18, 20, 24, 33, 34, 36, 40]);
        let got = ctx.fix_child_choices(&hs, &group, &[], &[], Some(8)).unwrap();
        let got: Vec<(Vec<u64>, Vec<u64>)> =
            got.iter().map(|c| (vals(&c.children_to_include), vals(&c.children_to_avoid))).collect();
        let want: Vec<(Vec<u64>, Vec<u64>)> = THREE_EVENT_CHOICES.iter().map(|(i, a)| (i.to_vec(), a.to_vec())).collect();
        assert_eq!(got, want);
        let plan = ctx.top_level_plan(None);
        assert_eq!(plan.child_choices.len(), 24);
        assert_eq!(plan.child_choices.iter().map(|c| vals(c)).collect::<Vec<_>>(), want.iter().map(|w| w.0.clone()).collect::<Vec<_>>());
        let sum: u64 = plan.remaining_children.iter().map(|r| 1u64 << r.len()).sum();
        assert_eq!(sum, 922);
        let trivial = ctx.fix_child_choices(&hs, &[0], &[], &[], None).unwrap();
        assert_eq!(trivial, vec![ChildChoice { children_to_include: vec![], children_to_avoid: vec![] }]);
    }

    #[test]
    fn four_event_todo() {
        let ctx = SearchContext::new(4).unwrap();
        assert_eq!(ctx.brute_force_complexity(), 4294967296);
        assert_eq!(ctx.top_level_plan(None).num_todo, 315981136);
    }

    #[test]
    fn two_event_status_table() {
        let buf = SharedBuf::default();
        let mut f = SpaceFinder::new(2, FinderOptions { verbose: true, update_period: None, ..Default::default() }).unwrap();
        f.set_output(Box::new(buf.clone()));
        f.blank_state();
        f.find_eq_classes().unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| l.starts_with("Iterating over 6 top-level")).unwrap();
        assert_eq!(lines[at + 1], STATUS_HEADER);
        let rows: Vec<(u64, u64, String)> = lines[at + 2..at + 8]
            .iter()
            .map(|l| {
                let c: Vec<&str> = l.split_whitespace().collect();
                (c[1].parse().unwrap(), c[2].parse().unwrap(), c[4].to_string())
            })
            .collect();
        let expect = [(4, 1, "16.6667%"), (5, 2, "33.3333%"), (5, 2, "50.0000%"), (5, 2, "66.6667%"), (5, 2, "83.3333%"), (7, 3, "100.0000%")];
        for (r, e) in rows.iter().zip(expect) {
            assert_eq!((r.0, r.1, r.2.as_str()), e);
        }
        assert_eq!(lines[at + 8], "Found 7 spaces in 3 equivalence classes.");
    }
}
