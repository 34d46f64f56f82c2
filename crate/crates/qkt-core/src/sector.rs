//! Sector families: tuples indexed by cycle length r <= max_cycle.
//!
//! The inputs t, tau, tbar, xbar of the reconstruction pipelines all live
//! here. The entry at sector r is required (at the public boundaries) to
//! have every coefficient of filtration weight >= r; sectors beyond the
//! declared bound are treated as zero.

use std::collections::BTreeMap;

use crate::series::WEIGHT_INFINITY;

/// Generic family over sectors 1..=max_cycle; absent entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorFamily<T> {
    pub max_cycle: u32,
    entries: BTreeMap<u32, T>,
}

impl<T: Clone> SectorFamily<T> {
    pub fn new(max_cycle: u32) -> Self {
        assert!(max_cycle >= 1);
        SectorFamily { max_cycle, entries: BTreeMap::new() }
    }

    pub fn set(&mut self, r: u32, value: T) {
        assert!(r >= 1, "sectors are indexed from 1");
        if r <= self.max_cycle {
            self.entries.insert(r, value);
        }
    }

    pub fn get(&self, r: u32) -> Option<&T> {
        self.entries.get(&r)
    }

    pub fn sectors(&self) -> impl Iterator<Item = (u32, &T)> {
        self.entries.iter().map(|(r, t)| (*r, t))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The shift R_r: entry at sector k of the result is the entry at
    /// sector k*r of the input (zero when k*r exceeds the bound).
    pub fn r_shift(&self, r: u32) -> Self {
        assert!(r >= 1);
        let mut out = SectorFamily::new(self.max_cycle);
        for k in 1..=self.max_cycle {
            if let Some(kr) = k.checked_mul(r) {
                if kr <= self.max_cycle {
                    if let Some(v) = self.entries.get(&kr) {
                        out.entries.insert(k, v.clone());
                    }
                }
            }
        }
        out
    }

    pub fn map<U: Clone>(&self, f: impl Fn(u32, &T) -> U) -> SectorFamily<U> {
        let mut out = SectorFamily::new(self.max_cycle);
        for (r, v) in &self.entries {
            out.entries.insert(*r, f(*r, v));
        }
        out
    }
}

/// Payloads that can report a filtration weight, so families can be
/// validated and so the fixed-point iteration can audit its residuals.
pub trait Weighted {
    fn weight(&self) -> u32;
}

impl<T: Clone + Weighted> SectorFamily<T> {
    /// Minimal filtration weight across all sector entries.
    pub fn min_weight(&self) -> u32 {
        self.entries.values().map(|v| v.weight()).min().unwrap_or(WEIGHT_INFINITY)
    }

    /// Checks the sector-weight invariant: entry r has weight >= r.
    pub fn check_weights(&self) -> Result<(), (u32, u32)> {
        for (r, v) in &self.entries {
            let w = v.weight();
            if w < *r {
                return Err((*r, w));
            }
        }
        Ok(())
    }
}
