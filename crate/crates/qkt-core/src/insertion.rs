//! Cycle types and correlator insertions.
//!
//! An insertion is a polynomial in the nilpotent symbol (L - 1) with
//! K-vector coefficients. Working in the (L - 1) basis makes the dimension
//! truncation of the moduli context a simple degree cap and turns the
//! string-equation operator D t(L) = (t(L) - t(1))/(L - 1) into a shift.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::EngineError;
use crate::kbasis::KVector;
use crate::qfun::LaurentPoly;
use crate::rat::binom;
use crate::series::{RingContext, TruncatedSeries};
use num_traits::Zero;

/// Finitely supported map r -> number of r-cycles.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct CycleType {
    counts: BTreeMap<u32, u32>,
}

impl CycleType {
    pub fn empty() -> Self {
        CycleType::default()
    }

    /// k cycles of length r.
    pub fn of(r: u32, k: u32) -> Self {
        let mut c = Self::empty();
        c.add_cycles(r, k);
        c
    }

    /// n one-cycles (the non-permutative shape).
    pub fn ones(n: u32) -> Self {
        Self::of(1, n)
    }

    pub fn add_cycles(&mut self, r: u32, k: u32) {
        assert!(r >= 1);
        if k > 0 {
            *self.counts.entry(r).or_insert(0) += k;
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (r, k) in &other.counts {
            out.add_cycles(*r, *k);
        }
        out
    }

    pub fn count(&self, r: u32) -> u32 {
        self.counts.get(&r).copied().unwrap_or(0)
    }

    pub fn cycles(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.counts.iter().map(|(r, k)| (*r, *k))
    }

    /// Total marked points n = sum r * l_r.
    pub fn marked_points(&self) -> u32 {
        self.counts.iter().map(|(r, k)| r * k).sum()
    }

    /// True when every cycle has length one.
    pub fn is_nonpermutative(&self) -> bool {
        self.counts.keys().all(|&r| r == 1)
    }

    /// Notation `3_1+1_2` = three 1-cycles plus one 2-cycle; `0` is empty.
    pub fn parse(s: &str) -> Result<Self, EngineError> {
        let s = s.trim();
        if s == "0" || s.is_empty() {
            return Ok(Self::empty());
        }
        let mut out = Self::empty();
        for part in s.split('+') {
            let (k, r) = part
                .trim()
                .split_once('_')
                .ok_or_else(|| EngineError::Format(format!("bad cycle type `{}`", s)))?;
            let k: u32 = k.trim().parse().map_err(|_| EngineError::Format(format!("bad cycle count in `{}`", s)))?;
            let r: u32 = r.trim().parse().map_err(|_| EngineError::Format(format!("bad cycle length in `{}`", s)))?;
            if r < 1 {
                return Err(EngineError::Format("cycle length must be >= 1".into()));
            }
            out.add_cycles(r, k);
        }
        Ok(out)
    }
}

impl fmt::Display for CycleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counts.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.counts.iter().map(|(r, k)| format!("{}_{}", k, r)).collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// Polynomial in (L - 1) with K-vector coefficients, capped at a declared
/// degree bound (the nilpotency order of the ambient moduli context).
#[derive(Clone, Debug, PartialEq)]
pub struct InsertionPoly {
    /// coeffs[k] multiplies (L-1)^k; length <= cap.
    pub coeffs: Vec<KVector>,
    pub cap: u32,
}

impl InsertionPoly {
    pub fn zero(ctx: &Arc<RingContext>, rank: usize, cap: u32) -> Self {
        let _ = (ctx, rank);
        InsertionPoly { coeffs: vec![], cap }
    }

    pub fn constant(v: KVector, cap: u32) -> Self {
        let mut p = InsertionPoly { coeffs: vec![], cap };
        p.set(0, v);
        p
    }

    /// The dilaton-type insertion (L - 1) * v.
    pub fn lm1(v: KVector, cap: u32) -> Self {
        let mut p = InsertionPoly { coeffs: vec![], cap };
        p.set(1, v);
        p
    }

    pub fn set(&mut self, k: u32, v: KVector) {
        if k >= self.cap || v.is_zero() {
            return;
        }
        if self.coeffs.len() <= k as usize {
            let proto = v.comps[0].context().clone();
            let rank = v.rank();
            self.coeffs.resize(k as usize + 1, KVector::zero(&proto, rank));
        }
        self.coeffs[k as usize] = v;
    }

    pub fn get(&self, k: u32) -> Option<&KVector> {
        self.coeffs.get(k as usize).filter(|v| !v.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_zero())
    }

    pub fn degree_terms(&self) -> impl Iterator<Item = (u32, &KVector)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(k, v)| (k as u32, v))
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.cap, o.cap, "insertion caps differ");
        let mut out = self.clone();
        for (k, v) in o.degree_terms() {
            match out.coeffs.get(k as usize) {
                Some(cur) => {
                    let s = cur.add(v);
                    out.coeffs[k as usize] = s;
                }
                None => out.set(k, v.clone()),
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        InsertionPoly { coeffs: self.coeffs.iter().map(|v| v.neg()).collect(), cap: self.cap }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn scale_series(&self, s: &TruncatedSeries) -> Self {
        InsertionPoly { coeffs: self.coeffs.iter().map(|v| v.scale_series(s)).collect(), cap: self.cap }
    }

    /// Converts a Laurent polynomial t(q) with K-vector coefficients into the
    /// (L-1) basis: L^a = sum_k C(a, k) (L-1)^k, truncated at the cap. The
    /// truncation is exact in every moduli context whose nilpotency order is
    /// at most `cap`.
    pub fn from_q_laurent(t: &crate::kbasis::KvLaurent, ctx: &Arc<RingContext>, rank: usize, cap: u32) -> Self {
        let mut out = Self::zero(ctx, rank, cap);
        for k in 0..cap {
            let mut acc = KVector::zero(ctx, rank);
            let mut any = false;
            for (comp, lp) in t.iter().enumerate() {
                for (a, c) in &lp.terms {
                    let b = binom(*a, k);
                    if !b.is_zero() {
                        acc.comps[comp] = acc.comps[comp].add(&c.scale(&b));
                        any = true;
                    }
                }
            }
            if any {
                out.set(k, acc);
            }
        }
        out
    }

    /// Value at L = 1 (the degree-zero coefficient).
    pub fn value_at_one(&self, ctx: &Arc<RingContext>, rank: usize) -> KVector {
        self.get(0).cloned().unwrap_or_else(|| KVector::zero(ctx, rank))
    }

    /// The string-equation operator D t(L) = (t(L) - t(1))/(L - 1): a shift
    /// down by one degree.
    pub fn string_d(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return InsertionPoly { coeffs: vec![], cap: self.cap };
        }
        InsertionPoly { coeffs: self.coeffs[1..].to_vec(), cap: self.cap }
    }

    /// Multiplication by L = 1 + (L - 1); degrees above the cap drop.
    pub fn mul_l(&self) -> Self {
        let mut out = self.clone();
        for (k, v) in self.degree_terms() {
            if k + 1 < self.cap {
                let cur = out.coeffs.get(k as usize + 1).cloned();
                match cur {
                    Some(c) => {
                        let s = c.add(v);
                        if out.coeffs.len() <= k as usize + 1 {
                            out.set(k + 1, s);
                        } else {
                            out.coeffs[k as usize + 1] = s;
                        }
                    }
                    None => out.set(k + 1, v.clone()),
                }
            }
        }
        out
    }

    /// Minimal filtration weight over all coefficients.
    pub fn weight(&self) -> u32 {
        self.coeffs.iter().map(|v| v.weight()).min().unwrap_or(crate::series::WEIGHT_INFINITY)
    }
}

/// Converts a scalar Laurent polynomial into a rank-one insertion.
pub fn scalar_laurent_to_insertion(
    t: &LaurentPoly<TruncatedSeries>,
    ctx: &Arc<RingContext>,
    cap: u32,
) -> InsertionPoly {
    InsertionPoly::from_q_laurent(&vec![t.clone()], ctx, 1, cap)
}
