//! Raw correlator keys and providers.
//!
//! A raw key names one correlator: genus, Novikov degree, and a list of
//! slots, each slot being one cycle of the permutation carrying a monomial
//! insertion (L-1)^k phi_a. Values are exact series in the coefficient ring.
//!
//! Providers answer in "correlator" normalization (the supertrace divided by
//! prod_r r^{l_r} over all cycles). Tables may declare their rows in either
//! normalization; conversion happens at load time.
//!
//! Engine-level structural rules (applied before dispatch, so providers only
//! ever see genuinely demanded keys):
//! - unstable keys (n + 2g < 3 at degree zero) are zero;
//! - an (L-1)-power of at least n - 2 in any slot is zero for genus 0
//!   (the nilpotency of the insertion device on the n-pointed space);
//! - for fully non-permutative keys, total (L-1)-degree beyond the moduli
//!   dimension is zero (n - 3 in genus 0, n in genus 1).

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::EngineError;
use crate::insertion::CycleType;
use crate::moduli;
use crate::rat::{rat_int, Rat};
use crate::series::{RingContext, TruncatedSeries};

/// Novikov degree: generator name -> exponent. Empty is degree zero.
pub type Degree = BTreeMap<String, u16>;

/// One slot of a raw correlator key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotKey {
    pub cycle: u32,
    pub lm1_power: u32,
    pub basis: usize,
}

/// Canonical raw correlator key; slots are kept sorted (correlators are
/// symmetric within a cycle class, and slot order across classes is
/// immaterial once each slot records its own cycle length).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RawKey {
    pub genus: u32,
    pub degree: Degree,
    pub slots: Vec<SlotKey>,
}

impl RawKey {
    pub fn new(genus: u32, degree: Degree, mut slots: Vec<SlotKey>) -> Self {
        slots.sort();
        RawKey { genus, degree, slots }
    }

    pub fn cycle_type(&self) -> CycleType {
        let mut c = CycleType::empty();
        for s in &self.slots {
            c.add_cycles(s.cycle, 1);
        }
        c
    }

    pub fn marked_points(&self) -> u32 {
        self.slots.iter().map(|s| s.cycle).sum()
    }

    pub fn total_lm1(&self) -> u32 {
        self.slots.iter().map(|s| s.lm1_power).sum()
    }

    pub fn is_nonpermutative(&self) -> bool {
        self.slots.iter().all(|s| s.cycle == 1)
    }

    pub fn degree_is_zero(&self) -> bool {
        self.degree.values().all(|&e| e == 0)
    }

    /// Canonical key string, used for deduplication and audit reports.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        write!(s, "g{}|{}|d:", self.genus, self.cycle_type()).unwrap();
        if self.degree_is_zero() {
            s.push('0');
        } else {
            let parts: Vec<String> = self
                .degree
                .iter()
                .filter(|(_, &e)| e > 0)
                .map(|(n, e)| format!("{}^{}", n, e))
                .collect();
            s.push_str(&parts.join("*"));
        }
        s.push_str("|slots:");
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|t| format!("{}:{}:{}", t.cycle, t.lm1_power, t.basis))
            .collect();
        s.push_str(&parts.join(","));
        s
    }

    /// Structural zero rules; see the module doc. The dimension-based rules
    /// apply only at degree zero, where the moduli dimension is known.
    pub fn structurally_zero(&self) -> bool {
        let n = self.marked_points();
        if !self.degree_is_zero() {
            return false;
        }
        if n + 2 * self.genus < 3 {
            return true;
        }
        if self.genus == 0 {
            if n >= 3 && self.slots.iter().any(|s| s.lm1_power >= n - 2) {
                return true;
            }
            if self.is_nonpermutative() && self.total_lm1() + 3 > n {
                return true;
            }
        }
        if self.genus == 1 && self.is_nonpermutative() && self.total_lm1() > n {
            return true;
        }
        false
    }
}

/// The provider interface: deterministic, total over a declared domain,
/// explicit data-incomplete error outside it.
pub trait CorrelatorProvider {
    /// Raw correlator value in correlator normalization. The key passed in
    /// is never structurally zero.
    fn eval(&self, key: &RawKey) -> Result<TruncatedSeries, EngineError>;

    /// Novikov degrees covered; the engine sums over exactly these.
    fn degrees(&self) -> Vec<Degree>;

    fn describe(&self) -> String;
}

/// Built-in provider: genus 0, non-permutative, point target, n <= 5,
/// degree zero. Values are the Euler characteristics of (L-1)-monomials
/// from the small-model intersection tables.
pub struct PointGenus0Builtin {
    ctx: Arc<RingContext>,
}

impl PointGenus0Builtin {
    pub fn new(ctx: &Arc<RingContext>) -> Self {
        PointGenus0Builtin { ctx: ctx.clone() }
    }
}

impl CorrelatorProvider for PointGenus0Builtin {
    fn eval(&self, key: &RawKey) -> Result<TruncatedSeries, EngineError> {
        let n = key.marked_points();
        let in_domain = key.genus == 0
            && key.is_nonpermutative()
            && key.degree_is_zero()
            && (3..=5).contains(&n)
            && key.slots.iter().all(|s| s.basis == 0);
        if !in_domain {
            return Err(EngineError::DataIncomplete { key: key.canonical_string() });
        }
        let degrees: Vec<u32> = key.slots.iter().map(|s| s.lm1_power).collect();
        let v = moduli::chi_point_g0(&degrees)
            .ok_or_else(|| EngineError::DataIncomplete { key: key.canonical_string() })?;
        Ok(TruncatedSeries::from_rat(&self.ctx, v))
    }

    fn degrees(&self) -> Vec<Degree> {
        vec![Degree::new()]
    }

    fn describe(&self) -> String {
        "builtin point-target genus-0 provider (n <= 5)".into()
    }
}

/// Coverage pattern: which keys a table promises to be total on. A key
/// matched by a coverage block but absent from the rows has value zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    pub genus: u32,
    /// Exact base cycle type plus optionally any number of `var`-cycles;
    /// `any` matches every cycle type; `permutative` matches every type
    /// with at least one cycle of length two or more.
    pub base: CycleType,
    pub var: Option<u32>,
    pub any_cycles: bool,
    pub permutative_only: bool,
    pub max_points: u32,
    /// Cap on the total (L-1)-degree of matched keys.
    pub max_lm1: Option<u32>,
    pub degrees: Vec<Degree>,
}

impl Coverage {
    /// Parses the `cycles` pattern: `any`, a cycle type like `2_1+1_2`, or a
    /// pattern with one starred class like `4_1+*_2`.
    pub fn parse_cycles(genus: u32, pattern: &str, max_points: u32, degrees: Vec<Degree>) -> Result<Self, EngineError> {
        let pattern = pattern.trim();
        if pattern == "any" {
            return Ok(Coverage {
                genus,
                base: CycleType::empty(),
                var: None,
                any_cycles: true,
                permutative_only: false,
                max_points,
                max_lm1: None,
                degrees,
            });
        }
        if pattern == "permutative" {
            return Ok(Coverage {
                genus,
                base: CycleType::empty(),
                var: None,
                any_cycles: true,
                permutative_only: true,
                max_points,
                max_lm1: None,
                degrees,
            });
        }
        let mut base = CycleType::empty();
        let mut var = None;
        for part in pattern.split('+') {
            let part = part.trim();
            if let Some(r) = part.strip_prefix("*_") {
                let r: u32 = r.parse().map_err(|_| EngineError::Format(format!("bad coverage pattern `{}`", pattern)))?;
                if var.replace(r).is_some() {
                    return Err(EngineError::Format("coverage pattern may star at most one class".into()));
                }
            } else {
                let c = CycleType::parse(part)?;
                base = base.plus(&c);
            }
        }
        Ok(Coverage {
            genus,
            base,
            var,
            any_cycles: false,
            permutative_only: false,
            max_points,
            max_lm1: None,
            degrees,
        })
    }

    pub fn matches(&self, key: &RawKey) -> bool {
        if key.genus != self.genus || key.marked_points() > self.max_points {
            return false;
        }
        if let Some(cap) = self.max_lm1 {
            if key.total_lm1() > cap {
                return false;
            }
        }
        if !self.degrees.iter().any(|d| *d == key.degree) {
            return false;
        }
        if self.any_cycles {
            if self.permutative_only {
                return !key.is_nonpermutative();
            }
            return true;
        }
        let ct = key.cycle_type();
        // ct must equal base plus k cycles of the starred class
        let mut seen_var = 0i64;
        for (r, k) in ct.cycles() {
            let base_k = self.base.count(r);
            if Some(r) == self.var {
                if k < base_k {
                    return false;
                }
                seen_var = (k - base_k) as i64;
            } else if k != base_k {
                return false;
            }
        }
        // base classes absent from ct must be absent from base too
        for (r, k) in self.base.cycles() {
            if ct.count(r) != k && Some(r) != self.var {
                return false;
            }
        }
        let _ = seen_var;
        true
    }
}

/// In-memory table provider (rows come from JSONL files; see `config`).
pub struct FileTable {
    pub name: String,
    pub ctx: Arc<RingContext>,
    pub values: BTreeMap<RawKey, TruncatedSeries>,
    pub coverage: Vec<Coverage>,
    pub degree_list: Vec<Degree>,
    pub provenance: String,
}

impl FileTable {
    /// The synthetic permutative-sector model shipped with the demo data:
    /// every cycle-typed genus-0 correlator is declared zero. The model
    /// satisfies the string, dilaton and associativity identities on its
    /// domain; real sector data replaces it row by row.
    pub fn zero_model_g0(ctx: &Arc<RingContext>, max_points: u32) -> Self {
        let cov = Coverage::parse_cycles(0, "permutative", max_points, vec![Degree::new()])
            .expect("static pattern");
        FileTable {
            name: "zero-model-g0".into(),
            ctx: ctx.clone(),
            values: BTreeMap::new(),
            coverage: vec![cov],
            degree_list: vec![Degree::new()],
            provenance: "synthetic-model".into(),
        }
    }
}

impl CorrelatorProvider for FileTable {
    fn eval(&self, key: &RawKey) -> Result<TruncatedSeries, EngineError> {
        if let Some(v) = self.values.get(key) {
            return Ok(v.clone());
        }
        if self.coverage.iter().any(|c| c.matches(key)) {
            // covered but not listed: zero by completeness of the block
            return Ok(TruncatedSeries::zero(&self.ctx));
        }
        Err(EngineError::DataIncomplete { key: key.canonical_string() })
    }

    fn degrees(&self) -> Vec<Degree> {
        self.degree_list.clone()
    }

    fn describe(&self) -> String {
        format!("table `{}` ({} rows)", self.name, self.values.len())
    }
}

/// Composite provider: earlier providers override later ones; a key is
/// answered by the first provider that does not report data-incomplete.
pub struct Composite<'a> {
    pub layers: Vec<&'a dyn CorrelatorProvider>,
}

impl<'a> CorrelatorProvider for Composite<'a> {
    fn eval(&self, key: &RawKey) -> Result<TruncatedSeries, EngineError> {
        let mut last = EngineError::DataIncomplete { key: key.canonical_string() };
        for p in &self.layers {
            match p.eval(key) {
                Ok(v) => return Ok(v),
                Err(EngineError::DataIncomplete { .. }) => {
                    last = EngineError::DataIncomplete { key: key.canonical_string() };
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn degrees(&self) -> Vec<Degree> {
        let mut set = BTreeSet::new();
        for p in &self.layers {
            for d in p.degrees() {
                set.insert(d);
            }
        }
        set.into_iter().collect()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self.layers.iter().map(|p| p.describe()).collect();
        parts.join(" + ")
    }
}

/// Wrapper that records every key dispatched to the underlying provider,
/// for the audit trail.
pub struct Recording<'a> {
    pub inner: &'a dyn CorrelatorProvider,
    pub keys: RefCell<BTreeSet<String>>,
    pub evals: RefCell<u64>,
}

impl<'a> Recording<'a> {
    pub fn new(inner: &'a dyn CorrelatorProvider) -> Self {
        Recording { inner, keys: RefCell::new(BTreeSet::new()), evals: RefCell::new(0) }
    }

    pub fn keys_touched(&self) -> Vec<String> {
        self.keys.borrow().iter().cloned().collect()
    }

    pub fn eval_count(&self) -> u64 {
        *self.evals.borrow()
    }
}

impl<'a> CorrelatorProvider for Recording<'a> {
    fn eval(&self, key: &RawKey) -> Result<TruncatedSeries, EngineError> {
        self.keys.borrow_mut().insert(key.canonical_string());
        *self.evals.borrow_mut() += 1;
        self.inner.eval(key)
    }

    fn degrees(&self) -> Vec<Degree> {
        self.inner.degrees()
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Converts a supertrace-normalized value into correlator normalization:
/// multiply by prod_r r^{-l_r} over all cycles.
pub fn supertrace_to_correlator(value: &TruncatedSeries, ct: &CycleType) -> TruncatedSeries {
    let mut factor = rat_int(1);
    for (r, k) in ct.cycles() {
        for _ in 0..k {
            factor /= rat_int(r as i64);
        }
    }
    value.scale(&factor)
}

pub fn correlator_prefactor(ct: &CycleType) -> Rat {
    let mut factor = rat_int(1);
    for (r, k) in ct.cycles() {
        for _ in 0..k {
            factor *= rat_int(r as i64);
        }
    }
    factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{AdamsRule, GeneratorSpec};

    fn ctx() -> Arc<RingContext> {
        RingContext::new(
            vec![GeneratorSpec { name: "t".into(), weight: 1, adams_rule: AdamsRule::Fixed }],
            3,
            2,
        )
        .unwrap()
    }

    fn key(n: u32, degs: &[u32]) -> RawKey {
        let slots = (0..n)
            .map(|i| SlotKey { cycle: 1, lm1_power: degs.get(i as usize).copied().unwrap_or(0), basis: 0 })
            .collect();
        RawKey::new(0, Degree::new(), slots)
    }

    #[test]
    fn builtin_values() {
        let c = ctx();
        let p = PointGenus0Builtin::new(&c);
        assert_eq!(p.eval(&key(3, &[])).unwrap().constant_term(), rat_int(1));
        assert_eq!(p.eval(&key(4, &[1])).unwrap().constant_term(), rat_int(1));
        assert_eq!(p.eval(&key(5, &[1])).unwrap().constant_term(), rat_int(2));
        assert_eq!(p.eval(&key(5, &[1, 1])).unwrap().constant_term(), rat_int(2));
        assert_eq!(p.eval(&key(5, &[2])).unwrap().constant_term(), rat_int(1));
        assert!(p.eval(&key(6, &[])).is_err());
    }

    #[test]
    fn structural_zero_rules() {
        // unstable
        assert!(key(2, &[]).structurally_zero());
        // dimension: (L-1)^2 on the 4-pointed space
        assert!(key(4, &[2]).structurally_zero());
        assert!(key(4, &[1, 1]).structurally_zero());
        assert!(!key(4, &[1]).structurally_zero());
        // per-slot nilpotency on a cycle-typed key: n = 4, power 2 >= n-2
        let k = RawKey::new(
            0,
            Degree::new(),
            vec![
                SlotKey { cycle: 2, lm1_power: 2, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
            ],
        );
        assert!(k.structurally_zero());
    }

    #[test]
    fn coverage_patterns() {
        let cov = Coverage::parse_cycles(0, "any", 8, vec![Degree::new()]).unwrap();
        assert!(cov.matches(&key(4, &[1])));
        let cov2 = Coverage::parse_cycles(1, "4_1+*_2", 10, vec![Degree::new()]).unwrap();
        let k = RawKey::new(
            1,
            Degree::new(),
            vec![
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 2, lm1_power: 0, basis: 0 },
            ],
        );
        assert!(cov2.matches(&k));
        let k2 = RawKey::new(1, Degree::new(), vec![SlotKey { cycle: 1, lm1_power: 0, basis: 0 }]);
        assert!(!cov2.matches(&k2));
    }

    #[test]
    fn canonical_string_sorts_slots() {
        let a = RawKey::new(
            0,
            Degree::new(),
            vec![
                SlotKey { cycle: 1, lm1_power: 2, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
            ],
        );
        let b = RawKey::new(
            0,
            Degree::new(),
            vec![
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 2, basis: 0 },
            ],
        );
        assert_eq!(a.canonical_string(), b.canonical_string());
        assert_eq!(a, b);
    }
}
