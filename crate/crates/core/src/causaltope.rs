//! Linear systems cutting out the standard causaltope of a space, and their
//! exact rank.
//!
//! Empirical models are vectors indexed by (joint input, joint output), input
//! major, each joint assignment read as an `n`-bit number with event `A` most
//! significant.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::encoding::{mask_events, History};
use crate::error::{Error, Result};
use crate::orders::all_assignments;
use crate::spaces::{ext, is_free_choice, Space};

/// Largest event count for which systems are built (256 columns).
pub const MAX_CAUSALTOPE_EVENTS: usize = 4;

/// A column of the system: probability of a joint output given a joint input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelIndex {
    pub joint_input: u32,
    pub joint_output: u32,
}

impl ModelIndex {
    pub fn column(self, n: usize) -> usize {
        ((self.joint_input as usize) << n) | self.joint_output as usize
    }

    pub fn from_column(n: usize, col: usize) -> Self {
        ModelIndex { joint_input: (col >> n) as u32, joint_output: (col & ((1 << n) - 1)) as u32 }
    }

    /// Label such as `i010o110`.
    pub fn label(self, n: usize) -> String {
        format!("i{:0n$b}o{:0n$b}", self.joint_input, self.joint_output, n = n)
    }
}

/// Homogeneous system with coefficients in {−1, 0, +1}.
#[derive(Clone, PartialEq, Eq)]
pub struct LinearSystem {
    n: usize,
    rows: Vec<Vec<i8>>,
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinearSystem({} events, {} rows)", self.n, self.rows.len())
    }
}

impl LinearSystem {
    pub fn new(n: usize, rows: Vec<Vec<i8>>) -> Result<Self> {
        if n > MAX_CAUSALTOPE_EVENTS {
            return Err(Error::Capacity(format!("systems are built for at most {MAX_CAUSALTOPE_EVENTS} events")));
        }
        let cols = 1usize << (2 * n);
        if let Some(r) = rows.iter().find(|r| r.len() != cols || r.iter().any(|&x| !(-1..=1).contains(&x))) {
            return Err(Error::InvalidArgument(format!(
                "row of length {} with entries outside -1..=1 or wrong width (expected {cols})",
                r.len()
            )));
        }
        Ok(LinearSystem { n, rows })
    }

    pub fn num_events(&self) -> usize {
        self.n
    }

    pub fn num_columns(&self) -> usize {
        1 << (2 * self.n)
    }

    pub fn rows(&self) -> &[Vec<i8>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Concatenation of systems on the same number of events.
    pub fn stack(systems: &[LinearSystem]) -> Result<LinearSystem> {
        let Some(first) = systems.first() else {
            return Err(Error::InvalidArgument("nothing to stack".into()));
        };
        if systems.iter().any(|s| s.n != first.n) {
            return Err(Error::InvalidArgument("stacked systems must share the event count".into()));
        }
        Ok(LinearSystem { n: first.n, rows: systems.iter().flat_map(|s| s.rows.iter().cloned()).collect() })
    }

    pub fn rank(&self) -> usize {
        rank(&self.rows)
    }
}

/// Output assignments on `mask`, lexicographic, as n-bit joint-output
/// fragments (event `A` most significant).
fn output_fragments(n: usize, mask: u32) -> Vec<u32> {
    let evs = mask_events(mask);
    (0..1u32 << evs.len())
        .map(|v| {
            evs.iter().enumerate().fold(0u32, |acc, (i, e)| {
                let bit = (v >> (evs.len() - 1 - i)) & 1;
                acc | bit << (n - 1 - e.index())
            })
        })
        .collect()
}

/// Joint-input number of a total history (event `A` most significant).
pub(crate) fn joint_input(n: usize, k: History) -> u32 {
    k.pairs().iter().fold(0, |acc, (e, v)| acc | (*v as u32) << (n - 1 - e.index()))
}

/// Causality rows followed by quasi-normalisation rows for a free-choice
/// space on the first `n` events.
pub fn build_equations(space: &Space) -> Result<LinearSystem> {
    if !is_free_choice(space) {
        return Err(Error::Precondition("space does not satisfy the free-choice condition".into()));
    }
    let events = space.events();
    let n = space.event_count();
    if n > MAX_CAUSALTOPE_EVENTS {
        return Err(Error::Capacity(format!("systems are built for at most {MAX_CAUSALTOPE_EVENTS} events")));
    }
    if events != crate::encoding::first_events(n) {
        return Err(Error::InvalidArgument("space must be on the first n events; compact it first".into()));
    }
    let cols = 1usize << (2 * n);
    let e = ext(space);
    let maxima: Vec<History> = all_assignments(events).collect();
    let mut rows = Vec::new();
    let push_pair = |rows: &mut Vec<Vec<i8>>, k0: History, k1: History, outs: &[u32]| {
        let mut row = vec![0i8; cols];
        let (i0, i1) = (joint_input(n, k0), joint_input(n, k1));
        for &o in outs {
            row[ModelIndex { joint_input: i0, joint_output: o }.column(n)] += 1;
            row[ModelIndex { joint_input: i1, joint_output: o }.column(n)] -= 1;
        }
        rows.push(row);
    };
    for &h in e.histories() {
        if h.dom() == events {
            continue;
        }
        let above: Vec<History> = maxima.iter().copied().filter(|k| k.0 & h.0 == h.0).collect();
        let free = output_fragments(n, events & !h.dom());
        for o in output_fragments(n, h.dom()) {
            let outs: Vec<u32> = free.iter().map(|f| f | o).collect();
            for w in above.windows(2) {
                push_pair(&mut rows, w[0], w[1], &outs);
            }
        }
    }
    let all_outs: Vec<u32> = (0..1u32 << n).collect();
    for w in maxima.windows(2) {
        push_pair(&mut rows, w[0], w[1], &all_outs);
    }
    LinearSystem::new(n, rows)
}

/// Exact rank by fraction-free (Bareiss) elimination.
pub fn rank(rows: &[Vec<i8>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    let nrows = m.len();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    let mut prev = BigInt::from(1);
    for c in 0..ncols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..nrows {
            if m[i][c].is_zero() {
                for j in c + 1..ncols {
                    let v = &m[i][j] * &m[r][c];
                    m[i][j] = v / &prev;
                }
            } else {
                for j in c + 1..ncols {
                    let v = &m[i][j] * &m[r][c] - &m[i][c] * &m[r][j];
                    m[i][j] = v / &prev;
                }
                m[i][c] = BigInt::zero();
            }
        }
        prev = m[r][c].clone();
        r += 1;
    }
    r
}

/// Rank modulo a prime; used to cross-check [`rank`].
pub fn rank_mod_p(rows: &[Vec<i8>], p: u64) -> usize {
    let mut m: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|&x| (x as i64).rem_euclid(p as i64) as u64).collect()).collect();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..ncols {
        let Some(piv) = (r..m.len()).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, piv);
        let inv = pow_mod(m[r][c], p - 2, p);
        for i in r + 1..m.len() {
            if m[i][c] != 0 {
                let f = m[i][c] * inv % p;
                for j in c..ncols {
                    m[i][j] = (m[i][j] + p - f * m[r][j] % p) % p;
                }
            }
        }
        r += 1;
    }
    r
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

/// `4^n − rank − 1`.
pub fn causaltope_dim(space: &Space) -> Result<usize> {
    let sys = build_equations(space)?;
    Ok(sys.num_columns() - sys.rank() - 1)
}

/// Dimension of the intersection of the solution spaces of several systems,
/// on the normalisation slice.
pub fn meet_dim(systems: &[LinearSystem]) -> Result<usize> {
    let s = LinearSystem::stack(systems)?;
    Ok(s.num_columns() - s.rank() - 1)
}

/// True if the total-sum functional is not implied by the system, so the
/// normalisation slice cuts one further dimension.
pub fn normalisation_is_independent(sys: &LinearSystem) -> bool {
    let mut rows = sys.rows.clone();
    rows.push(vec![1; sys.num_columns()]);
    rank(&rows) == sys.rank() + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DumpFormat {
    Csv,
    Pgm,
}

impl std::str::FromStr for DumpFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DumpFormat::Csv),
            "pgm" => Ok(DumpFormat::Pgm),
            other => Err(Error::InvalidArgument(format!("unsupported system format '{other}'"))),
        }
    }
}

/// Grey levels for 0, +1 and −1.
const GREY_ZERO: u8 = 255;
const GREY_PLUS: u8 = 160;
const GREY_MINUS: u8 = 64;

/// CSV with a header of column labels, or a binary PGM with one pixel per
/// coefficient.
pub fn dump_system(sys: &LinearSystem, format: DumpFormat) -> Vec<u8> {
    let n = sys.n;
    match format {
        DumpFormat::Csv => {
            let mut s = (0..sys.num_columns())
                .map(|c| ModelIndex::from_column(n, c).label(n))
                .collect::<Vec<_>>()
                .join(",");
            s.push('\n');
            for r in &sys.rows {
                s.push_str(&r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
                s.push('\n');
            }
            s.into_bytes()
        }
        DumpFormat::Pgm => {
            let mut out = format!("P5\n{} {}\n255\n", sys.num_columns(), sys.rows.len()).into_bytes();
            for r in &sys.rows {
                out.extend(r.iter().map(|&x| match x {
                    1 => GREY_PLUS,
                    -1 => GREY_MINUS,
                    _ => GREY_ZERO,
                }));
            }
            out
        }
    }
}

/// Parses the CSV written by [`dump_system`].
pub fn parse_system_csv(text: &str) -> Result<LinearSystem> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
    let cols = header.split(',').count();
    let n = (0..=MAX_CAUSALTOPE_EVENTS)
        .find(|&n| 1usize << (2 * n) == cols)
        .ok_or_else(|| Error::InvalidArgument(format!("{cols} columns is not 4^n")))?;
    for (c, label) in header.split(',').enumerate() {
        if label.trim() != ModelIndex::from_column(n, c).label(n) {
            return Err(Error::InvalidArgument(format!("unexpected column label '{label}'")));
        }
    }
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|x| x.trim().parse::<i8>().map_err(|e| Error::InvalidArgument(format!("bad entry '{x}': {e}"))))
                .collect::<Result<Vec<i8>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LinearSystem::new(n, rows)
}
