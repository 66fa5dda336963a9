//! Binary serialisation of history-set collections and of search state.
//!
//! All integers are big-endian. A collection is an 8-byte count followed by
//! entries, each a 2-byte length and that many bytes of the bitvector, using
//! the fewest bytes possible (at least one).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use num_bigint::BigUint;

use crate::encoding::{min_bytes, HistorySet};
use crate::error::{Error, Result};

/// Writes a collection of history sets; returns the number of bytes written.
pub fn write_hsets<'a, W, I>(w: &mut W, hsets: I) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = &'a HistorySet>,
    I::IntoIter: ExactSizeIterator,
{
    let it = hsets.into_iter();
    w.write_all(&(it.len() as u64).to_be_bytes())?;
    let mut written = 8;
    for hs in it {
        let n = min_bytes(hs);
        if n > u16::MAX as usize {
            return Err(Error::Capacity("history set too large for a 2-byte length".into()));
        }
        let mut bytes = hs.to_bytes_be();
        while bytes.len() < n {
            bytes.insert(0, 0);
        }
        w.write_all(&(n as u16).to_be_bytes())?;
        w.write_all(&bytes)?;
        written += 2 + n;
    }
    Ok(written)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Corrupt(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_be_bytes(b))
}

/// Reads a collection written by [`write_hsets`], in file order.
pub fn read_hsets<R: Read>(r: &mut R) -> Result<Vec<HistorySet>> {
    let count = read_u64(r, "collection size")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let mut lb = [0u8; 2];
        read_exact(r, &mut lb, "entry length")?;
        let len = u16::from_be_bytes(lb) as usize;
        let mut buf = vec![0u8; len];
        read_exact(r, &mut buf, "entry bytes")?;
        let hs = BigUint::from_bytes_be(&buf);
        if min_bytes(&hs) != len {
            return Err(Error::Corrupt(format!("entry declares {len} bytes but needs {}", min_bytes(&hs))));
        }
        out.push(hs);
    }
    Ok(out)
}

/// The serialisable search state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchState {
    pub num_spaces: u64,
    pub num_done: u64,
    pub num_todo: u64,
    pub fix_child_choice_idx: u64,
    pub var_child_subset_bitvec: u64,
    pub partial_spaces_visited: IndexSet<HistorySet>,
    pub eq_classes: IndexSet<HistorySet>,
    pub child_choices_list: Vec<HistorySet>,
    pub remaining_children_list: Vec<HistorySet>,
}

impl SearchState {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<usize> {
        for x in [
            self.num_spaces,
            self.num_done,
            self.num_todo,
            self.fix_child_choice_idx,
            self.var_child_subset_bitvec,
        ] {
            w.write_all(&x.to_be_bytes())?;
        }
        let mut n = 40;
        n += write_hsets(w, &self.partial_spaces_visited)?;
        n += write_hsets(w, &self.eq_classes)?;
        n += write_hsets(w, &self.child_choices_list)?;
        n += write_hsets(w, &self.remaining_children_list)?;
        Ok(n)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let num_spaces = read_u64(r, "num_spaces")?;
        let num_done = read_u64(r, "num_done")?;
        let num_todo = read_u64(r, "num_todo")?;
        let fix_child_choice_idx = read_u64(r, "fix_child_choice_idx")?;
        let var_child_subset_bitvec = read_u64(r, "var_child_subset_bitvec")?;
        let partial_spaces_visited = read_hsets(r)?.into_iter().collect();
        let eq_classes = read_hsets(r)?.into_iter().collect();
        let child_choices_list = read_hsets(r)?;
        let remaining_children_list = read_hsets(r)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes", rest.len())));
        }
        if child_choices_list.len() != remaining_children_list.len() {
            return Err(Error::Corrupt("fixed and variable child lists differ in length".into()));
        }
        if fix_child_choice_idx > child_choices_list.len() as u64 || num_done > num_todo {
            return Err(Error::Corrupt("progress counters out of range".into()));
        }
        Ok(SearchState {
            num_spaces,
            num_done,
            num_todo,
            fix_child_choice_idx,
            var_child_subset_bitvec,
            partial_spaces_visited,
            eq_classes,
            child_choices_list,
            remaining_children_list,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        SearchState::read_from(&mut &bytes[..])
    }

    /// Writes the state to `path` and, if asked, identical bytes to `path.bak`.
    pub fn save(&self, path: &Path, backup: bool) -> Result<usize> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        let mut total = bytes.len();
        if backup {
            fs::write(backup_path(path), &bytes)?;
            total += bytes.len();
        }
        Ok(total)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SearchState::from_bytes(&fs::read(path)?)
    }
}

pub fn backup_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bak");
    PathBuf::from(s)
}
