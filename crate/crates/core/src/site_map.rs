//! Integer-indexed storage for per-site walk data.

use std::collections::HashMap;

/// Sites further than this from the dense block go to the sparse overflow map.
const DENSE_LIMIT: usize = 1 << 21;

/// Map from sites to values, dense over a growable window and sparse outside
/// it. Absent sites read as `T::default()`.
#[derive(Debug, Clone)]
pub struct SiteMap<T> {
    origin: i64,
    dense: Vec<T>,
    sparse: HashMap<i64, T>,
}

impl<T: Copy + Default + PartialEq> Default for SiteMap<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Copy + Default + PartialEq> SiteMap<T> {
    pub fn new() -> Self {
        Self {
            origin: 0,
            dense: Vec::new(),
            sparse: HashMap::new(),
        }
    }

    /// Pre-sizes the dense block to cover `[lo, hi]`.
    pub fn with_arena(lo: i64, hi: i64) -> Self {
        let mut map = Self::new();
        if hi >= lo && ((hi - lo) as usize) < DENSE_LIMIT {
            map.origin = lo;
            map.dense = vec![T::default(); (hi - lo + 1) as usize];
        }
        map
    }

    #[inline]
    fn slot(&self, site: i64) -> Option<usize> {
        let off = site.wrapping_sub(self.origin);
        (off >= 0 && (off as usize) < self.dense.len()).then_some(off as usize)
    }

    #[inline]
    pub fn get(&self, site: i64) -> T {
        match self.slot(site) {
            Some(i) => self.dense[i],
            None => self.sparse.get(&site).copied().unwrap_or_default(),
        }
    }

    #[inline]
    pub fn get_mut(&mut self, site: i64) -> &mut T {
        if let Some(i) = self.slot(site) {
            return &mut self.dense[i];
        }
        if self.grow_to(site) {
            let i = self.slot(site).expect("covered after growth");
            &mut self.dense[i]
        } else {
            self.sparse.entry(site).or_default()
        }
    }

    pub fn set(&mut self, site: i64, value: T) {
        *self.get_mut(site) = value;
    }

    /// Extends the dense window to cover `site` if that keeps it under the
    /// size limit. Returns whether the site is now dense.
    fn grow_to(&mut self, site: i64) -> bool {
        if self.dense.is_empty() {
            let len = 64usize;
            self.origin = site - (len as i64) / 2;
            self.dense = vec![T::default(); len];
        } else {
            let lo = self.origin.min(site);
            let hi = (self.origin + self.dense.len() as i64 - 1).max(site);
            let needed = (hi - lo + 1) as usize;
            if needed > DENSE_LIMIT {
                return false;
            }
            let new_len = (self.dense.len() * 2).max(needed).min(DENSE_LIMIT);
            let slack = (new_len - needed) as i64;
            // Put the slack on the side that is growing.
            let new_origin = if site < self.origin { lo - slack } else { lo };
            let mut dense = vec![T::default(); new_len];
            let shift = (self.origin - new_origin) as usize;
            dense[shift..shift + self.dense.len()].copy_from_slice(&self.dense);
            self.origin = new_origin;
            self.dense = dense;
        }
        // Migrate sparse entries now covered by the dense window.
        if !self.sparse.is_empty() {
            let (origin, len) = (self.origin, self.dense.len() as i64);
            let moved: Vec<i64> = self
                .sparse
                .keys()
                .copied()
                .filter(|&s| s >= origin && s < origin + len)
                .collect();
            for s in moved {
                let v = self.sparse.remove(&s).expect("present");
                self.dense[(s - origin) as usize] = v;
            }
        }
        true
    }

    /// Non-default entries in increasing site order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        let mut sparse: Vec<(i64, T)> = self
            .sparse
            .iter()
            .filter(|(_, v)| **v != T::default())
            .map(|(&k, &v)| (k, v))
            .collect();
        sparse.sort_by_key(|&(k, _)| k);
        let origin = self.origin;
        let (below, above): (Vec<_>, Vec<_>) = sparse.into_iter().partition(|&(k, _)| k < origin);
        below
            .into_iter()
            .chain(
                self.dense
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::default())
                    .map(move |(i, &v)| (origin + i as i64, v)),
            )
            .chain(above)
    }
}
