//! Causal functions, the refinement hierarchy of equivalence classes, order
//! classification and per-space reports.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causaltope::{build_equations, joint_input, meet_dim, LinearSystem};
use crate::encoding::{first_events, mask_events, mask_letters, EventId, History, HistorySet};
use crate::error::{Error, Result};
use crate::orders::{order_hierarchy, CausalOrder, OrderHierarchy};
use crate::spaces::{
    determining_sets, ext, is_causally_complete, is_free_choice, space_join_all, space_meet_all, tightness, ExtSpace,
    Space,
};
use crate::symmetry::PermTable;
use crate::unionfind::UnionFind;

/// Largest event count for explicit causal-function tables and hierarchies.
pub const MAX_TABLE_EVENTS: usize = 3;

fn check_cf_pre(space: &Space) -> Result<()> {
    if !is_free_choice(space) {
        return Err(Error::Precondition("space does not satisfy the free-choice condition".into()));
    }
    if !is_causally_complete(space)? {
        return Err(Error::Precondition("space is not causally complete".into()));
    }
    Ok(())
}

/// Partition of the space into histories on which every causal function
/// must agree, each part in sort-key order.
pub fn causal_function_classes(space: &Space) -> Result<Vec<Vec<History>>> {
    check_cf_pre(space)?;
    let mut uf = UnionFind::new(space.len());
    for d in determining_sets(space) {
        for w in d.members.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    Ok(uf.groups().into_iter().map(|g| g.into_iter().map(|i| space.histories()[i]).collect()).collect())
}

/// Output cells `(joint input, event index)` controlled by each free bit of a
/// causal function: one bit per class, plus one per cell with an empty
/// determining set.
fn cf_cells(space: &Space) -> Result<(usize, Vec<Vec<(u32, usize)>>)> {
    check_cf_pre(space)?;
    let (space, _) = space.compact();
    let n = space.event_count();
    let sets = determining_sets(&space);
    let mut uf = UnionFind::new(space.len());
    for d in &sets {
        for w in d.members.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut var_of_root: HashMap<usize, usize> = HashMap::new();
    let mut cells: Vec<Vec<(u32, usize)>> = Vec::new();
    for d in &sets {
        let cell = (joint_input(n, d.k), d.event.index());
        match d.members.first() {
            Some(&m) => {
                let root = uf.find(m);
                let next = cells.len();
                let v = *var_of_root.entry(root).or_insert(next);
                if v == next {
                    cells.push(Vec::new());
                }
                cells[v].push(cell);
            }
            None => cells.push(vec![cell]),
        }
    }
    Ok((n, cells))
}

pub fn count_causal_functions(space: &Space) -> Result<u128> {
    let (_, cells) = cf_cells(space)?;
    if cells.len() >= 128 {
        return Err(Error::Capacity(format!("2^{} causal functions overflow the counter", cells.len())));
    }
    Ok(1u128 << cells.len())
}

/// A function from joint inputs to joint outputs, both numbered with event
/// `A` as the most significant bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CausalFunction {
    n: usize,
    table: Vec<u8>,
}

impl CausalFunction {
    fn from_packed(n: usize, packed: u64) -> Self {
        let table = (0..1usize << n).map(|k| (packed >> (k * n) & ((1 << n) - 1)) as u8).collect();
        CausalFunction { n, table }
    }

    pub fn num_events(&self) -> usize {
        self.n
    }

    /// Joint outputs indexed by joint input.
    pub fn table(&self) -> &[u8] {
        &self.table
    }

    pub fn output(&self, joint_input: usize) -> u8 {
        self.table[joint_input]
    }

    /// Output bit at event index `e` for the given joint input.
    pub fn output_at(&self, joint_input: usize, e: usize) -> u8 {
        self.table[joint_input] >> (self.n - 1 - e) & 1
    }
}

/// All causal functions as packed tables: `n` output bits per joint input,
/// joint input `k` at bit offset `k·n`, sorted.
fn packed_causal_functions(space: &Space) -> Result<(usize, Vec<u64>)> {
    let (n, cells) = cf_cells(space)?;
    if n > MAX_TABLE_EVENTS {
        return Err(Error::Capacity(format!("causal-function tables are limited to {MAX_TABLE_EVENTS} events")));
    }
    let masks: Vec<u64> = cells
        .iter()
        .map(|cs| cs.iter().fold(0u64, |m, &(k, e)| m | 1 << (k as usize * n + n - 1 - e)))
        .collect();
    // Gray-code walk: each step flips one variable.
    let mut out = Vec::with_capacity(1 << masks.len());
    let mut cur = 0u64;
    out.push(cur);
    for i in 1u64..1 << masks.len() {
        cur ^= masks[i.trailing_zeros() as usize];
        out.push(cur);
    }
    out.sort_unstable();
    Ok((n, out))
}

pub fn enumerate_causal_functions(space: &Space) -> Result<Vec<CausalFunction>> {
    let (n, packed) = packed_causal_functions(space)?;
    Ok(packed.into_iter().map(|p| CausalFunction::from_packed(n, p)).collect())
}

/// Causal functions of `space` that are causal for none of `refinements`.
pub fn novel_causal_functions(space: &Space, refinements: &[Space]) -> Result<u64> {
    let (_, all) = packed_causal_functions(space)?;
    let mut covered: HashSet<u64> = HashSet::new();
    for r in refinements {
        if r.events() != space.events() {
            return Err(Error::InvalidArgument("refinements must share the event set of the space".into()));
        }
        covered.extend(packed_causal_functions(r)?.1);
    }
    Ok(all.iter().filter(|p| !covered.contains(p)).count() as u64)
}

struct OrderSpace {
    order: CausalOrder,
    space: Space,
    ext: ExtSpace,
}

fn order_spaces(n: usize) -> Result<&'static [OrderSpace]> {
    static CACHE: [OnceLock<Vec<OrderSpace>>; 5] = [const { OnceLock::new() }; 5];
    if n > 4 {
        return Err(Error::Capacity("order classification is limited to 4 events".into()));
    }
    if let Some(v) = CACHE[n].get() {
        return Ok(v);
    }
    let built: Vec<OrderSpace> = order_hierarchy(n)?
        .orders
        .into_iter()
        .map(|order| {
            let space = order.hist_space();
            let ext = order.ext_hist_space();
            OrderSpace { order, space, ext }
        })
        .collect();
    Ok(CACHE[n].get_or_init(|| built))
}

/// How a space sits relative to the spaces induced by causal orders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderRelation {
    pub induced_by: Option<CausalOrder>,
    /// Minimal orders whose space the given space refines; definite ones
    /// when any exist.
    pub closest_order_coarsenings: Vec<CausalOrder>,
    pub definite: bool,
}

fn require_first_events(space: &Space) -> Result<usize> {
    let n = space.event_count();
    if space.events() != first_events(n) {
        return Err(Error::InvalidArgument("space must be on the first n events; compact it first".into()));
    }
    Ok(n)
}

pub fn classify_order_relation(space: &Space) -> Result<OrderRelation> {
    let n = require_first_events(space)?;
    let table = order_spaces(n)?;
    let e = ext(space);
    let induced_by = table.iter().find(|o| &o.space == space).map(|o| o.order.clone());
    let above: Vec<&OrderSpace> = table.iter().filter(|o| e.is_superset(&o.ext)).collect();
    let definite: Vec<&OrderSpace> = above.iter().copied().filter(|o| o.order.is_definite()).collect();
    let (pool, is_definite) = if definite.is_empty() { (above, false) } else { (definite, true) };
    let closest = pool
        .iter()
        .filter(|o| !pool.iter().any(|p| p.order != o.order && p.order.leq(&o.order)))
        .map(|o| o.order.clone())
        .collect();
    Ok(OrderRelation { induced_by, closest_order_coarsenings: closest, definite: is_definite })
}

/// Extended histories of a space missing from an order's space, sharing one
/// domain:
/// the outputs at `outputs` do not depend on the inputs at `independent_of`
/// when the inputs at `given` are one of `histories`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Difference {
    pub outputs: Vec<EventId>,
    pub independent_of: Vec<EventId>,
    pub given: Vec<EventId>,
    pub histories: Vec<History>,
}

/// Groups `Ext(space) ∖ Ext(Hist(order))` by domain, larger domains first.
pub fn diff_from_order(space: &Space, order: &CausalOrder) -> Result<Vec<Difference>> {
    if order.events() != space.events() {
        return Err(Error::InvalidArgument("order and space have different event sets".into()));
    }
    let theirs = order.ext_hist_space();
    let ours = ext(space);
    if !ours.is_superset(&theirs) {
        return Err(Error::InvalidArgument(format!("space is not a refinement of the space of {order}")));
    }
    let mut groups: BTreeMap<(Reverse<u32>, String), (u32, Vec<History>)> = BTreeMap::new();
    for &h in ours.histories() {
        if !h.is_empty() && !theirs.contains(h) {
            let dom = h.dom();
            groups.entry((Reverse(dom.count_ones()), mask_letters(dom))).or_insert((dom, Vec::new())).1.push(h);
        }
    }
    Ok(groups
        .into_values()
        .map(|(dom, histories)| {
            let past = mask_events(dom).into_iter().fold(0, |m, e| m | order.causal_past(e));
            Difference {
                outputs: mask_events(dom),
                independent_of: mask_events(past & !dom),
                given: mask_events(dom),
                histories,
            }
        })
        .collect())
}

/// One equivalence class in the condensed hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct HierarchyNode {
    pub class_id: usize,
    /// Position when classes are sorted by causaltope dimension, number of
    /// causal functions and canonical bitvector.
    pub canonical_index: usize,
    pub representative: String,
    pub representative_bits: String,
    pub orbit_size: usize,
    pub closest_refinements: Vec<usize>,
    pub closest_coarsenings: Vec<usize>,
    pub is_tight: bool,
    pub induced_by_order: Option<CausalOrder>,
    pub causal_function_count: u64,
    pub novel_causal_function_count: Option<u64>,
    pub causaltope_dim: usize,
    pub equations: usize,
    pub independent_equations: usize,
    #[serde(skip)]
    rep: Space,
}

impl HierarchyNode {
    pub fn representative_space(&self) -> &Space {
        &self.rep
    }
}

/// All spaces of a completed enumeration ordered by refinement and condensed
/// into equivalence classes.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    n: usize,
    table: PermTable,
    nodes: Vec<HierarchyNode>,
    spaces: Vec<Space>,
    ext_masks: Vec<u128>,
    class_of: Vec<usize>,
    by_canonical: HashMap<u128, usize>,
}

struct ClassStats {
    canonical: u128,
    canonical_bits: HistorySet,
    members: Vec<u128>,
    dim: usize,
    equations: usize,
    independent: usize,
    cf_count: u64,
}

fn space_mask(table: &PermTable, space: &Space) -> Result<u128> {
    table.mask_of(space.histories())
}

fn ext_mask(table: &PermTable, space: &Space) -> Result<u128> {
    let hs: Vec<History> = ext(space).histories().iter().copied().filter(|h| !h.is_empty()).collect();
    table.mask_of(&hs)
}

/// Builds the hierarchy from the class representatives of a completed search
/// on `n ≤ 3` events. On 3 events the classes are numbered as in the shipped
/// catalogue when it covers them all, otherwise by canonical index.
pub fn build_hierarchy(n: usize, classes: &[HistorySet]) -> Result<Hierarchy> {
    if n == 0 || n > MAX_TABLE_EVENTS {
        return Err(Error::Capacity(format!("hierarchies are built for 1 to {MAX_TABLE_EVENTS} events")));
    }
    let table = PermTable::new(n)?;
    let stats: Vec<ClassStats> = classes
        .par_iter()
        .map(|bits| {
            let space = Space::from_bits_n(n, bits)?;
            let canonical = table.canonical_mask(space_mask(&table, &space)?);
            let rep = Space::new_unchecked(first_events(n), table.members(canonical));
            let sys = build_equations(&rep)?;
            let independent = sys.rank();
            Ok(ClassStats {
                canonical,
                canonical_bits: table.hset_of_mask(canonical),
                members: table.orbit_masks(canonical),
                dim: sys.num_columns() - independent - 1,
                equations: sys.len(),
                independent,
                cf_count: count_causal_functions(&rep)? as u64,
            })
        })
        .collect::<Result<_>>()?;
    if stats.iter().map(|s| s.canonical).collect::<HashSet<_>>().len() != stats.len() {
        return Err(Error::InvalidArgument("class representatives must lie in distinct classes".into()));
    }
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&stats[a], &stats[b]);
        (x.dim, x.cf_count, &x.canonical_bits).cmp(&(y.dim, y.cf_count, &y.canonical_bits))
    });
    let mut canonical_index = vec![0; stats.len()];
    for (pos, &i) in order.iter().enumerate() {
        canonical_index[i] = pos;
    }

    // class ids and representatives
    let mut ids = canonical_index.clone();
    let mut reps: Vec<Space> =
        stats.iter().map(|s| Space::new_unchecked(first_events(n), table.members(s.canonical))).collect();
    if n == 3 {
        if let Some(mapped) = catalogue_numbering(&table, &stats)? {
            for (i, (id, rep)) in mapped.into_iter().enumerate() {
                ids[i] = id;
                reps[i] = rep;
            }
        }
    }

    let mut spaces: Vec<(HistorySet, Space, usize)> = Vec::new();
    for (i, s) in stats.iter().enumerate() {
        for &m in &s.members {
            let sp = Space::new_unchecked(first_events(n), table.members(m));
            spaces.push((sp.to_bits(), sp, ids[i]));
        }
    }
    spaces.sort_by(|a, b| a.0.cmp(&b.0));
    let ext_masks = spaces.iter().map(|(_, s, _)| ext_mask(&table, s)).collect::<Result<Vec<_>>>()?;
    let class_of = spaces.iter().map(|x| x.2).collect();
    let spaces: Vec<Space> = spaces.into_iter().map(|x| x.1).collect();
    let by_canonical = stats.iter().enumerate().map(|(i, s)| (s.canonical, ids[i])).collect();

    let mut h = Hierarchy { n, table, nodes: Vec::new(), spaces, ext_masks, class_of, by_canonical };
    let mut nodes: Vec<HierarchyNode> = (0..stats.len())
        .into_par_iter()
        .map(|i| {
            let rep = &reps[i];
            let s = &stats[i];
            let refinements = h.closest_refinements(rep)?;
            let coarsenings = h.closest_coarsenings(rep)?;
            let novel =
                if refinements.is_empty() { None } else { Some(novel_causal_functions(rep, &refinements)?) };
            Ok(HierarchyNode {
                class_id: ids[i],
                canonical_index: canonical_index[i],
                representative: rep.to_string(),
                representative_bits: rep.to_bits().to_string(),
                orbit_size: s.members.len(),
                closest_refinements: h.classes_of(&refinements),
                closest_coarsenings: h.classes_of(&coarsenings),
                is_tight: tightness(rep)?.is_tight,
                induced_by_order: classify_order_relation(rep)?.induced_by,
                causal_function_count: s.cf_count,
                novel_causal_function_count: novel,
                causaltope_dim: s.dim,
                equations: s.equations,
                independent_equations: s.independent,
                rep: rep.clone(),
            })
        })
        .collect::<Result<_>>()?;
    nodes.sort_by_key(|nd| nd.class_id);
    h.nodes = nodes;
    Ok(h)
}

/// Class ids and representatives from the catalogue, by position in `stats`.
fn catalogue_numbering(table: &PermTable, stats: &[ClassStats]) -> Result<Option<Vec<(usize, Space)>>> {
    let records = catalogue()?;
    if records.len() != stats.len() {
        return Ok(None);
    }
    let mut by_mask: HashMap<u128, (usize, Space)> = HashMap::new();
    for r in records {
        let rep = r.representative_space()?;
        by_mask.insert(table.canonical_mask(space_mask(table, &rep)?), (r.id, rep));
    }
    Ok(stats.iter().map(|s| by_mask.get(&s.canonical).cloned()).collect())
}

impl Hierarchy {
    pub fn num_events(&self) -> usize {
        self.n
    }

    /// Nodes sorted by class id.
    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, class_id: usize) -> Option<&HierarchyNode> {
        self.nodes.binary_search_by_key(&class_id, |nd| nd.class_id).ok().map(|i| &self.nodes[i])
    }

    /// Every space, sorted by bitvector.
    pub fn spaces(&self) -> &[Space] {
        &self.spaces
    }

    pub fn class_of(&self, space: &Space) -> Option<usize> {
        if space.events() != first_events(self.n) {
            return None;
        }
        let m = space_mask(&self.table, space).ok()?;
        self.by_canonical.get(&self.table.canonical_mask(m)).copied()
    }

    pub fn members(&self, class_id: usize) -> Vec<Space> {
        self.spaces.iter().zip(&self.class_of).filter(|(_, &c)| c == class_id).map(|(s, _)| s.clone()).collect()
    }

    fn classes_of(&self, spaces: &[Space]) -> Vec<usize> {
        let set: BTreeSet<usize> = spaces.iter().filter_map(|s| self.class_of(s)).collect();
        set.into_iter().collect()
    }

    fn closest(&self, space: &Space, finer: bool) -> Result<Vec<Space>> {
        if space.events() != first_events(self.n) {
            return Err(Error::InvalidArgument(format!("space must be on the first {} events", self.n)));
        }
        let e = ext_mask(&self.table, space)?;
        let strictly_within = |inner: u128, outer: u128| inner & outer == inner && inner != outer;
        let rel: Vec<usize> = (0..self.spaces.len())
            .filter(|&i| {
                let x = self.ext_masks[i];
                if finer {
                    strictly_within(e, x)
                } else {
                    strictly_within(x, e)
                }
            })
            .collect();
        Ok(rel
            .iter()
            .filter(|&&s| {
                let xs = self.ext_masks[s];
                !rel.iter().any(|&t| {
                    let xt = self.ext_masks[t];
                    if finer {
                        strictly_within(xt, xs)
                    } else {
                        strictly_within(xs, xt)
                    }
                })
            })
            .map(|&s| self.spaces[s].clone())
            .collect())
    }

    /// Enumerated spaces strictly finer than `space` with nothing in between.
    pub fn closest_refinements(&self, space: &Space) -> Result<Vec<Space>> {
        self.closest(space, true)
    }

    /// Enumerated spaces strictly coarser than `space` with nothing in between.
    pub fn closest_coarsenings(&self, space: &Space) -> Result<Vec<Space>> {
        self.closest(space, false)
    }

    pub fn minima(&self) -> Vec<usize> {
        self.nodes.iter().filter(|nd| nd.closest_refinements.is_empty()).map(|nd| nd.class_id).collect()
    }

    pub fn maxima(&self) -> Vec<usize> {
        self.nodes.iter().filter(|nd| nd.closest_coarsenings.is_empty()).map(|nd| nd.class_id).collect()
    }

    /// Edge `i -> j` when class `i` holds closest refinements of class `j`.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph hierarchy {\n");
        for nd in &self.nodes {
            let _ = writeln!(s, "  {} [label=\"{}\"];", nd.class_id, nd.class_id);
        }
        for nd in &self.nodes {
            for c in &nd.closest_coarsenings {
                let _ = writeln!(s, "  {} -> {};", nd.class_id, c);
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        to_sorted_json(&self.nodes)
    }
}

/// Cached hierarchy over the full enumeration on `n` events.
pub fn hierarchy(n: usize) -> Result<&'static Hierarchy> {
    static CACHE: [OnceLock<Hierarchy>; MAX_TABLE_EVENTS + 1] = [const { OnceLock::new() }; MAX_TABLE_EVENTS + 1];
    if n == 0 || n > MAX_TABLE_EVENTS {
        return Err(Error::Capacity(format!("hierarchies are built for 1 to {MAX_TABLE_EVENTS} events")));
    }
    if let Some(h) = CACHE[n].get() {
        return Ok(h);
    }
    let built = build_hierarchy(n, crate::enumerator::eq_class_reps(n)?)?;
    Ok(CACHE[n].get_or_init(|| built))
}

/// Order coarsening of a space together with what the space drops from it.
#[derive(Clone, Debug, Serialize)]
pub struct OrderDiff {
    pub order: CausalOrder,
    pub definite: bool,
    pub order_space_class: Option<usize>,
    pub differences: Vec<Difference>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentificationRecord {
    pub event: EventId,
    pub histories: Vec<History>,
}

/// Dimension of a causaltope above those of its closest refinements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimGap {
    pub gap: usize,
    pub count: usize,
    pub classes: Vec<usize>,
}

/// Everything recorded about one space.
#[derive(Clone, Debug, Serialize)]
pub struct SpaceReport {
    pub class_id: Option<usize>,
    pub class_size: Option<usize>,
    pub space: String,
    pub bits: String,
    pub induced_by: Option<CausalOrder>,
    pub order_coarsenings: Vec<OrderDiff>,
    pub is_tight: bool,
    pub identifications: Vec<IdentificationRecord>,
    pub causal_functions: u64,
    pub novel_causal_functions: Option<u64>,
    pub closest_refinements: Vec<usize>,
    pub closest_coarsenings: Vec<usize>,
    /// Whether the space is the join of its closest refinements; unset for
    /// the bottom of the hierarchy.
    pub is_join: Option<bool>,
    /// Whether the space is the meet of its closest coarsenings; unset for
    /// maximal spaces.
    pub is_meet: Option<bool>,
    pub causaltope_dim: usize,
    pub equations: usize,
    pub independent_equations: usize,
    /// Dimension of the meet of the coarsenings' causaltopes minus this one.
    pub meet_dim_deficit: Option<i64>,
    pub refinement_dim_gap: Option<DimGap>,
}

pub fn report(space: &Space, hierarchy: &Hierarchy) -> Result<SpaceReport> {
    check_cf_pre(space)?;
    let class_id = hierarchy.class_of(space);
    let refinements = hierarchy.closest_refinements(space)?;
    let coarsenings = hierarchy.closest_coarsenings(space)?;
    let sys = build_equations(space)?;
    let independent = sys.rank();
    let dim = sys.num_columns() - independent - 1;

    let rel = classify_order_relation(space)?;
    let order_coarsenings = rel
        .closest_order_coarsenings
        .iter()
        .map(|o| {
            Ok(OrderDiff {
                order: o.clone(),
                definite: rel.definite,
                order_space_class: hierarchy.class_of(&o.hist_space()),
                differences: diff_from_order(space, o)?,
            })
        })
        .collect::<Result<_>>()?;

    let tight = tightness(space)?;
    let meet_dim_deficit = if coarsenings.is_empty() {
        None
    } else {
        let systems = coarsenings.iter().map(build_equations).collect::<Result<Vec<LinearSystem>>>()?;
        Some(meet_dim(&systems)? as i64 - dim as i64)
    };
    let refinement_dim_gap = if refinements.is_empty() {
        None
    } else {
        let dims = refinements.iter().map(crate::causaltope::causaltope_dim).collect::<Result<Vec<_>>>()?;
        let top = *dims.iter().max().unwrap();
        let widest: Vec<Space> =
            refinements.iter().zip(&dims).filter(|(_, &d)| d == top).map(|(r, _)| r.clone()).collect();
        Some(DimGap { gap: dim - top, count: widest.len(), classes: hierarchy.classes_of(&widest) })
    };

    Ok(SpaceReport {
        class_id,
        class_size: class_id.and_then(|c| hierarchy.node(c)).map(|nd| nd.orbit_size),
        space: space.to_string(),
        bits: space.to_bits().to_string(),
        induced_by: rel.induced_by.clone(),
        order_coarsenings,
        is_tight: tight.is_tight,
        identifications: tight
            .identifications
            .into_iter()
            .map(|i| IdentificationRecord { event: i.event, histories: i.histories })
            .collect(),
        causal_functions: count_causal_functions(space)? as u64,
        novel_causal_functions: if refinements.is_empty() {
            None
        } else {
            Some(novel_causal_functions(space, &refinements)?)
        },
        closest_refinements: hierarchy.classes_of(&refinements),
        closest_coarsenings: hierarchy.classes_of(&coarsenings),
        is_join: space_join_all(&refinements).map(|j| &j == space),
        is_meet: space_meet_all(&coarsenings).map(|m| &m == space),
        causaltope_dim: dim,
        equations: sys.len(),
        independent_equations: independent,
        meet_dim_deficit,
        refinement_dim_gap,
    })
}

/// Pretty JSON with object keys sorted.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialise");
    let mut s = serde_json::to_string_pretty(&v).expect("values serialise");
    s.push('\n');
    s
}

/// Preorders as nodes, covering pairs as edges from smaller to larger.
pub fn order_hierarchy_dot(h: &OrderHierarchy) -> String {
    let mut s = String::from("digraph orders {\n");
    for (i, o) in h.orders.iter().enumerate() {
        let _ = writeln!(s, "  {i} [label=\"{o}\"];");
    }
    for (a, b) in &h.covers {
        let _ = writeln!(s, "  {a} -> {b};");
    }
    s.push_str("}\n");
    s
}

#[derive(Serialize)]
struct OrderNode<'a> {
    index: usize,
    order: &'a CausalOrder,
    definite: bool,
    covered_by: Vec<usize>,
}

pub fn order_hierarchy_json(h: &OrderHierarchy) -> String {
    let nodes: Vec<OrderNode> = h
        .orders
        .iter()
        .enumerate()
        .map(|(i, o)| OrderNode {
            index: i,
            order: o,
            definite: o.is_definite(),
            covered_by: h.covers.iter().filter(|(a, _)| *a == i).map(|(_, b)| *b).collect(),
        })
        .collect();
    to_sorted_json(&nodes)
}

/// A reference to the order whose space a catalogued space refines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueOrderRef {
    pub class: Option<usize>,
    pub class_is_order_space: bool,
    pub definite: bool,
    pub order: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueDifference {
    pub outputs: Vec<String>,
    pub independent_of: Vec<String>,
    pub given: Vec<String>,
    pub histories: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueIdentification {
    pub event: String,
    pub histories: Vec<String>,
}

/// Reference data for one equivalence class on 3 events.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueRecord {
    pub id: usize,
    pub class_size: usize,
    pub representative: String,
    pub induced_by: Option<String>,
    pub refinement_of: Option<CatalogueOrderRef>,
    pub differences: Vec<CatalogueDifference>,
    pub dim: usize,
    pub equations: usize,
    pub independent: usize,
    pub refinements: Vec<usize>,
    pub coarsenings: Vec<usize>,
    pub is_join: Option<bool>,
    pub is_meet: Option<bool>,
    pub causal_functions: u64,
    pub novel_causal_functions: Option<u64>,
    pub tight: bool,
    pub identifications: Vec<CatalogueIdentification>,
    pub refinement_dim_gap: Option<DimGap>,
    pub meet_dim_deficit: Option<i64>,
}

impl CatalogueRecord {
    pub fn representative_space(&self) -> Result<Space> {
        let bits: HistorySet = self
            .representative
            .parse()
            .map_err(|_| Error::Corrupt(format!("class {}: bad representative", self.id)))?;
        Space::from_bits_n(3, &bits)
    }
}

/// The shipped catalogue of the 3-event classes, sorted by id.
pub fn catalogue() -> Result<&'static [CatalogueRecord]> {
    static CATALOGUE: OnceLock<std::result::Result<Vec<CatalogueRecord>, String>> = OnceLock::new();
    CATALOGUE
        .get_or_init(|| {
            let mut recs: Vec<CatalogueRecord> =
                serde_json::from_str(include_str!("../data/catalogue_3events.json")).map_err(|e| e.to_string())?;
            recs.sort_by_key(|r| r.id);
            Ok(recs)
        })
        .as_deref()
        .map_err(|e| Error::Corrupt(format!("catalogue: {e}")))
}

pub fn catalogue_record(id: usize) -> Option<&'static CatalogueRecord> {
    catalogue().ok()?.iter().find(|r| r.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerator::all_spaces;
    use crate::orders::all_assignments;
    use crate::spaces::{discrete_space, space_leq, tips};
    use proptest::prelude::*;

    fn input_index(n: usize, k: History) -> usize {
        (0..n).map(|e| (((k.0 >> (2 * e + 1)) & 1) as usize) << (n - 1 - e)).sum()
    }

    // (histories with tip e, all joint inputs) as index lists per event
    fn constraints(space: &Space, e: usize) -> Vec<Vec<usize>> {
        let n = space.event_count();
        let maxima: Vec<History> = all_assignments(space.events()).collect();
        space
            .histories()
            .iter()
            .filter(|&&h| tips(space, h).unwrap() == 1 << e)
            .map(|&h| maxima.iter().filter(|k| k.0 & h.0 == h.0).map(|&k| input_index(n, k)).collect())
            .collect()
    }

    // Output columns for one event: bit i of the column is the output at joint
    // input i. Kept when constant on the inputs above each tip-e history.
    fn event_columns(space: &Space, e: usize) -> Vec<u32> {
        let n = space.event_count();
        let cs = constraints(space, e);
        (0..1u32 << (1 << n))
            .filter(|col| {
                cs.iter().all(|ks| ks.iter().all(|&k| (col >> k) & 1 == (col >> ks[0]) & 1))
            })
            .collect()
    }

    fn brute_force_tables(space: &Space) -> BTreeSet<Vec<u8>> {
        let n = space.event_count();
        let cols: Vec<Vec<u32>> = (0..n).map(|e| event_columns(space, e)).collect();
        let mut out = BTreeSet::new();
        let mut idx = vec![0usize; n];
        loop {
            let table: Vec<u8> = (0..1usize << n)
                .map(|k| (0..n).map(|e| (((cols[e][idx[e]] >> k) & 1) as u8) << (n - 1 - e)).sum())
                .collect();
            out.insert(table);
            let mut i = 0;
            while i < n {
                idx[i] += 1;
                if idx[i] < cols[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == n {
                return out;
            }
        }
    }

    fn rep(id: usize) -> Space {
        hierarchy(3).unwrap().node(id).unwrap().representative_space().clone()
    }

    fn hs(s: &str) -> Vec<History> {
        s.split(';').map(|h| h.parse().unwrap()).collect()
    }

    #[test]
    fn two_event_tables_match_brute_force() {
        for s in all_spaces(2).unwrap() {
            let got: BTreeSet<Vec<u8>> =
                enumerate_causal_functions(s).unwrap().into_iter().map(|f| f.table().to_vec()).collect();
            // full filter over all 256 tables
            let mut want = BTreeSet::new();
            for code in 0u32..256 {
                let table: Vec<u8> = (0..4).map(|k| (code >> (2 * k) & 3) as u8).collect();
                let ok = (0..2).all(|e| {
                    constraints(s, e).iter().all(|ks| {
                        ks.iter().all(|&k| table[k] >> (1 - e) & 1 == table[ks[0]] >> (1 - e) & 1)
                    })
                });
                if ok {
                    want.insert(table);
                }
            }
            assert_eq!(got, want, "{s}");
            assert_eq!(count_causal_functions(s).unwrap(), want.len() as u128);
        }
        let s = Space::from_bits_n(2, &"278".parse().unwrap()).unwrap();
        assert_eq!(count_causal_functions(&s).unwrap(), 16);
    }

    #[test]
    fn three_event_counts_match_per_event_filter() {
        for nd in hierarchy(3).unwrap().nodes() {
            let s = nd.representative_space();
            let want: u128 = (0..3).map(|e| event_columns(s, e).len() as u128).product();
            assert_eq!(count_causal_functions(s).unwrap(), want, "class {}", nd.class_id);
        }
        for id in [0, 8, 17, 61] {
            let s = rep(id);
            let got: BTreeSet<Vec<u8>> =
                enumerate_causal_functions(&s).unwrap().into_iter().map(|f| f.table().to_vec()).collect();
            assert_eq!(got, brute_force_tables(&s), "class {id}");
        }
    }

    #[test]
    fn determining_sets_never_empty() {
        for s in all_spaces(3).unwrap() {
            assert!(determining_sets(s).iter().all(|d| !d.members.is_empty()), "{s}");
        }
    }

    #[test]
    fn small_examples() {
        assert_eq!(enumerate_causal_functions(&discrete_space(1)).unwrap().len(), 4);
        let fs = enumerate_causal_functions(&rep(0)).unwrap();
        assert_eq!(fs.len(), 64);
        for f in &fs {
            for k in 0..8 {
                for e in 0..3 {
                    let flipped = k ^ (0b111 & !(1 << (2 - e)));
                    assert_eq!(f.output_at(k, e), f.output_at(flipped, e));
                }
            }
        }
    }

    #[test]
    fn identification_classes() {
        let parts = causal_function_classes(&rep(17)).unwrap();
        assert!(parts.contains(&hs("A/1,C/1;B/1,C/1")));
        let parts = causal_function_classes(&rep(100)).unwrap();
        assert_eq!(parts.len(), 14);
        assert!(parts.iter().all(|p| p.len() == 1));
        let parts = causal_function_classes(&rep(1)).unwrap();
        assert!(parts.contains(&hs("A/1,B/0;A/1,B/1;A/1,C/0;A/1,C/1")));
    }

    #[test]
    fn preconditions_and_capacity() {
        let s: Space = "[A/0, <A/1,B/0>]".parse().unwrap();
        assert!(matches!(count_causal_functions(&s), Err(Error::Precondition(_))));
        let big = discrete_space(first_events(4));
        assert_eq!(count_causal_functions(&big).unwrap(), 256);
        assert!(matches!(enumerate_causal_functions(&big), Err(Error::Capacity(_))));
        assert!(matches!(build_hierarchy(4, &[]), Err(Error::Capacity(_))));
    }

    #[test]
    fn novel_counts_bounded() {
        let h = hierarchy(3).unwrap();
        assert_eq!(h.node(1).unwrap().novel_causal_function_count, Some(0));
        assert_eq!(h.node(0).unwrap().novel_causal_function_count, None);
        for nd in h.nodes() {
            if let Some(x) = nd.novel_causal_function_count {
                assert!(x < nd.causal_function_count, "class {}", nd.class_id);
            }
        }
    }

    #[test]
    fn edges_are_converse_and_reduced() {
        let h = hierarchy(3).unwrap();
        for a in h.nodes() {
            for &b in &a.closest_coarsenings {
                assert!(h.node(b).unwrap().closest_refinements.contains(&a.class_id));
            }
            for &b in &a.closest_refinements {
                assert!(h.node(b).unwrap().closest_coarsenings.contains(&a.class_id));
            }
        }
        for s in h.spaces().iter().step_by(17) {
            let fine = h.closest_refinements(s).unwrap();
            for x in &fine {
                assert!(space_leq(x, s) && x != s);
                for y in &fine {
                    assert!(x == y || !space_leq(x, y));
                }
            }
        }
        assert_eq!(h.minima(), vec![0]);
        assert_eq!(h.maxima(), vec![100, 101]);
        let edges = h.nodes().iter().map(|nd| nd.closest_coarsenings.len()).sum::<usize>();
        assert_eq!(h.to_dot().lines().filter(|l| l.contains("->")).count(), edges);
    }

    #[test]
    fn hierarchy_census() {
        let h = hierarchy(3).unwrap();
        assert_eq!(h.nodes().len(), 102);
        assert_eq!(h.spaces().len(), 2644);
        assert_eq!(h.nodes().iter().filter(|nd| nd.is_tight).count(), 44);
        let induced: Vec<usize> =
            h.nodes().iter().filter(|nd| nd.induced_by_order.is_some()).map(|nd| nd.class_id).collect();
        assert_eq!(induced, vec![0, 33, 77, 92, 100]);
        let indefinite = h
            .nodes()
            .iter()
            .filter(|nd| !classify_order_relation(nd.representative_space()).unwrap().definite)
            .count();
        assert_eq!(indefinite, 13);
        let json: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 102);
    }

    #[test]
    fn differences_rebuild_the_space() {
        let s = rep(8);
        let o = CausalOrder::parse("total(A,B) v total(C,B)").unwrap();
        let diffs = diff_from_order(&s, &o).unwrap();
        let mut all: Vec<History> = o.hist_space().histories().to_vec();
        for d in &diffs {
            assert!(d.histories.iter().all(|h| mask_events(h.dom()) == d.outputs));
            all.extend(&d.histories);
        }
        assert_eq!(crate::spaces::prime(crate::spaces::closure(&all).histories()), s);
        let coarse = CausalOrder::discrete(first_events(3));
        assert!(diff_from_order(&s, &coarse).is_err());
    }

    fn packed_set(s: &Space) -> HashSet<u64> {
        packed_causal_functions(s).unwrap().1.into_iter().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn refinements_have_fewer_functions(idx in 0usize..2644) {
            let h = hierarchy(3).unwrap();
            let s = &h.spaces()[idx];
            let mine = packed_set(s);
            for r in h.closest_refinements(s).unwrap() {
                let theirs = packed_set(&r);
                prop_assert!(theirs.len() <= mine.len());
                prop_assert!(theirs.is_subset(&mine));
            }
        }

        #[test]
        fn tables_satisfy_constraints(idx in 0usize..2644, pick in any::<prop::sample::Index>()) {
            let s = &all_spaces(3).unwrap()[idx];
            let fs = enumerate_causal_functions(s).unwrap();
            let f = pick.get(&fs);
            for e in 0..3 {
                for ks in constraints(s, e) {
                    prop_assert!(ks.iter().all(|&k| f.output_at(k, e) == f.output_at(ks[0], e)));
                }
            }
        }
    }
}
