//! Truncated filtered power series over the rationals: the computational
//! model of the local lambda-algebra with maximal ideal generated by the
//! declared generators and Adams operations acting per generator.
//!
//! A series is a sparse map from exponent vectors to nonzero rationals.
//! Invariants:
//! - every retained monomial has total filtration weight <= `order`;
//! - no stored coefficient is zero;
//! - all binary operations require the same ring context.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::rat::{rat_display, Rat};
use num_traits::Zero;

/// How the Adams operation acts on one generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdamsRule {
    /// Psi^k sends the generator to its k-th power (Novikov variables).
    #[serde(rename = "monomial-scaling")]
    MonomialScaling,
    /// Psi^k fixes the generator (scalar parameters).
    #[serde(rename = "fixed")]
    Fixed,
}

/// One declared generator of the coefficient ring.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub weight: u32,
    pub adams_rule: AdamsRule,
}

/// Weight returned for the zero series; larger than any truncation order.
pub const WEIGHT_INFINITY: u32 = u32::MAX;

/// The ring context: generators, truncation order and sector bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingContext {
    pub gens: Vec<GeneratorSpec>,
    /// Maximal retained total weight; we compute modulo weight `order + 1`.
    pub order: u32,
    /// Largest cycle length carried by sector families.
    pub max_cycle: u32,
    /// Conductor for cyclotomic residue scalars.
    pub conductor: u32,
}

impl RingContext {
    pub fn new(gens: Vec<GeneratorSpec>, order: u32, max_cycle: u32) -> Result<Arc<Self>, EngineError> {
        let mut seen = std::collections::BTreeSet::new();
        for g in &gens {
            if g.weight < 1 {
                return Err(EngineError::Config(format!(
                    "generator `{}` has weight 0; every generator must lie in the maximal ideal",
                    g.name
                )));
            }
            if !seen.insert(g.name.clone()) {
                return Err(EngineError::Config(format!("duplicate generator name `{}`", g.name)));
            }
        }
        if max_cycle < 1 {
            return Err(EngineError::Config("max_cycle must be >= 1".into()));
        }
        Ok(Arc::new(RingContext { gens, order, max_cycle, conductor: 1 }))
    }

    pub fn with_conductor(self: &Arc<Self>, conductor: u32) -> Arc<Self> {
        let mut c = (**self).clone();
        c.conductor = conductor.max(1);
        Arc::new(c)
    }

    /// Extends the ring by one generator (used internally for exact
    /// directional derivatives); the order may be bumped at the same time.
    pub fn with_extra_gen(self: &Arc<Self>, name: &str, weight: u32, rule: AdamsRule, order: u32) -> Arc<Self> {
        let mut gens = self.gens.clone();
        gens.push(GeneratorSpec { name: name.to_string(), weight, adams_rule: rule });
        Arc::new(RingContext { gens, order, max_cycle: self.max_cycle, conductor: self.conductor })
    }

    pub fn rank_of_exponents(&self) -> usize {
        self.gens.len()
    }

    pub fn weight_of(&self, exps: &[u16]) -> u32 {
        exps.iter()
            .zip(&self.gens)
            .map(|(&e, g)| e as u32 * g.weight)
            .sum()
    }

    pub fn gen_index(&self, name: &str) -> Option<usize> {
        self.gens.iter().position(|g| g.name == name)
    }

    /// Contexts are compatible when generators and order agree.
    pub fn compatible(&self, other: &Self) -> bool {
        self.gens == other.gens && self.order == other.order
    }
}

/// Element of the truncated ring: sparse exponent-vector map.
#[derive(Clone, PartialEq, Eq)]
pub struct TruncatedSeries {
    pub(crate) ctx: Arc<RingContext>,
    pub(crate) terms: BTreeMap<Vec<u16>, Rat>,
}

impl TruncatedSeries {
    pub fn zero(ctx: &Arc<RingContext>) -> Self {
        TruncatedSeries { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn from_rat(ctx: &Arc<RingContext>, r: Rat) -> Self {
        let mut s = Self::zero(ctx);
        if !r.is_zero() {
            s.terms.insert(vec![0; ctx.rank_of_exponents()], r);
        }
        s
    }

    pub fn one(ctx: &Arc<RingContext>) -> Self {
        Self::from_rat(ctx, crate::rat::rat_one())
    }

    /// The generator with the given index, as a series.
    pub fn generator(ctx: &Arc<RingContext>, idx: usize) -> Self {
        let mut e = vec![0u16; ctx.rank_of_exponents()];
        e[idx] = 1;
        let mut s = Self::zero(ctx);
        if ctx.weight_of(&e) <= ctx.order {
            s.terms.insert(e, crate::rat::rat_one());
        }
        s
    }

    pub fn monomial(ctx: &Arc<RingContext>, exps: Vec<u16>, coeff: Rat) -> Self {
        let mut s = Self::zero(ctx);
        if !coeff.is_zero() && ctx.weight_of(&exps) <= ctx.order {
            s.terms.insert(exps, coeff);
        }
        s
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant_term(&self) -> Rat {
        let key = vec![0; self.ctx.rank_of_exponents()];
        self.terms.get(&key).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeff(&self, exps: &[u16]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    /// Constant series test (an element of the prime field).
    pub fn as_rational(&self) -> Option<Rat> {
        if self.terms.is_empty() {
            return Some(Rat::zero());
        }
        if self.terms.len() == 1 {
            let (e, c) = self.terms.iter().next().unwrap();
            if e.iter().all(|&x| x == 0) {
                return Some(c.clone());
            }
        }
        None
    }

    /// Binary operations demand identical generators; differing truncation
    /// orders combine to the smaller one (results are exact modulo it).
    fn join_ctx(&self, other: &Self) -> Arc<RingContext> {
        assert!(
            self.ctx.gens == other.ctx.gens,
            "ring context mismatch: generator lists differ"
        );
        if other.ctx.order < self.ctx.order {
            other.ctx.clone()
        } else {
            self.ctx.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let ctx = self.join_ctx(other);
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            let entry = terms.entry(e.clone()).or_insert_with(Rat::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(e);
            }
        }
        terms.retain(|e, _| ctx.weight_of(e) <= ctx.order);
        TruncatedSeries { ctx, terms }
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect();
        TruncatedSeries { ctx: self.ctx.clone(), terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, r: &Rat) -> Self {
        if r.is_zero() {
            return Self::zero(&self.ctx);
        }
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c * r)).collect();
        TruncatedSeries { ctx: self.ctx.clone(), terms }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let ctx = self.join_ctx(other);
        let order = ctx.order;
        let mut terms: BTreeMap<Vec<u16>, Rat> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            let wa = ctx.weight_of(ea);
            if wa > order {
                continue;
            }
            for (eb, cb) in &other.terms {
                let wb = ctx.weight_of(eb);
                if wa + wb > order {
                    continue;
                }
                let e: Vec<u16> = ea.iter().zip(eb).map(|(&x, &y)| x + y).collect();
                let entry = terms.entry(e).or_insert_with(Rat::zero);
                *entry += ca * cb;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        TruncatedSeries { ctx, terms }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(&self.ctx);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Minimal total weight among retained monomials; `WEIGHT_INFINITY` for 0.
    pub fn filtration_weight(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| self.ctx.weight_of(e))
            .min()
            .unwrap_or(WEIGHT_INFINITY)
    }

    /// The Adams operation: a ring endomorphism scaling exponents of
    /// monomial-scaling generators by k and fixing the others.
    pub fn adams(&self, k: u32) -> Self {
        assert!(k >= 1, "Adams operations are indexed by positive integers");
        if k == 1 {
            return self.clone();
        }
        let order = self.ctx.order;
        let mut terms: BTreeMap<Vec<u16>, Rat> = BTreeMap::new();
        for (e, c) in &self.terms {
            let mut scaled = e.clone();
            for (i, g) in self.ctx.gens.iter().enumerate() {
                if g.adams_rule == AdamsRule::MonomialScaling {
                    let v = scaled[i] as u32 * k;
                    if v > u16::MAX as u32 {
                        // beyond any sane truncation; weight check below drops it anyway
                        scaled[i] = u16::MAX;
                    } else {
                        scaled[i] = v as u16;
                    }
                }
            }
            if self.ctx.weight_of(&scaled) <= order {
                let entry = terms.entry(scaled).or_insert_with(Rat::zero);
                *entry += c;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        TruncatedSeries { ctx: self.ctx.clone(), terms }
    }

    /// Multiplicative inverse of a unit (nonzero rational constant term),
    /// computed by the geometric series in the positive-weight correction.
    pub fn inverse(&self) -> Result<Self, EngineError> {
        let c0 = self.constant_term();
        if c0.is_zero() {
            return Err(EngineError::NotAUnit);
        }
        let c0inv = c0.recip();
        // self = c0 (1 + u), u in the maximal ideal
        let u = self.scale(&c0inv).sub(&Self::one(&self.ctx));
        let mut acc = Self::one(&self.ctx);
        let mut p = Self::one(&self.ctx);
        for _ in 0..=self.ctx.order {
            p = p.mul(&u).neg();
            if p.is_zero() {
                break;
            }
            acc = acc.add(&p);
        }
        Ok(acc.scale(&c0inv))
    }

    /// log of a series with constant term 1, as the alternating series in the
    /// positive-weight part.
    pub fn log_unit(&self) -> Result<Self, EngineError> {
        use num_traits::One;
        if !self.constant_term().is_one() {
            return Err(EngineError::NotAUnit);
        }
        let u = self.sub(&Self::one(&self.ctx));
        let mut acc = Self::zero(&self.ctx);
        let mut p = Self::one(&self.ctx);
        for k in 1..=(self.ctx.order + 1) {
            p = p.mul(&u);
            if p.is_zero() {
                break;
            }
            let sign = if k % 2 == 1 { crate::rat::rat_int(1) } else { crate::rat::rat_int(-1) };
            acc = acc.add(&p.scale(&(sign / crate::rat::rat_int(k as i64))));
        }
        Ok(acc)
    }

    /// Embeds into a context that extends this one by extra trailing
    /// generators (and possibly a different order).
    pub fn embed(&self, target: &Arc<RingContext>) -> Self {
        assert!(
            target.gens.len() >= self.ctx.gens.len()
                && target.gens[..self.ctx.gens.len()] == self.ctx.gens[..],
            "target ring does not extend the source ring"
        );
        let pad = target.gens.len() - self.ctx.gens.len();
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2.extend(std::iter::repeat(0).take(pad));
            if target.weight_of(&e2) <= target.order {
                terms.insert(e2, c.clone());
            }
        }
        TruncatedSeries { ctx: target.clone(), terms }
    }

    /// Extracts the part linear in the last generator, re-expressed in
    /// `base` (which this context must extend by exactly that generator),
    /// truncating to the base order.
    pub fn linear_part_in_last_gen(&self, base: &Arc<RingContext>) -> Self {
        assert_eq!(self.ctx.gens.len(), base.gens.len() + 1);
        let n = base.gens.len();
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[n] == 1 {
                let e2: Vec<u16> = e[..n].to_vec();
                if base.weight_of(&e2) <= base.order {
                    terms.insert(e2, c.clone());
                }
            }
        }
        TruncatedSeries { ctx: base.clone(), terms }
    }

    /// Drops all terms involving the last generator and restricts to `base`.
    pub fn without_last_gen(&self, base: &Arc<RingContext>) -> Self {
        assert_eq!(self.ctx.gens.len(), base.gens.len() + 1);
        let n = base.gens.len();
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[n] == 0 {
                let e2: Vec<u16> = e[..n].to_vec();
                if base.weight_of(&e2) <= base.order {
                    terms.insert(e2, c.clone());
                }
            }
        }
        TruncatedSeries { ctx: base.clone(), terms }
    }

    /// Re-truncates to a context with the same generators but lower order.
    pub fn restrict_order(&self, target: &Arc<RingContext>) -> Self {
        assert_eq!(self.ctx.gens, target.gens);
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if target.weight_of(e) <= target.order {
                terms.insert(e.clone(), c.clone());
            }
        }
        TruncatedSeries { ctx: target.clone(), terms }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &Rat)> {
        self.terms.iter()
    }
}

impl fmt::Debug for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0)
                .map(|(i, &x)| {
                    if x == 1 {
                        self.ctx.gens[i].name.clone()
                    } else {
                        format!("{}^{}", self.ctx.gens[i].name, x)
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{}", rat_display(c))?;
            } else {
                write!(f, "{}*{}", rat_display(c), mono.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat_int, rat};

    fn ctx_qt(order: u32) -> Arc<RingContext> {
        RingContext::new(
            vec![
                GeneratorSpec { name: "Q".into(), weight: 1, adams_rule: AdamsRule::MonomialScaling },
                GeneratorSpec { name: "t".into(), weight: 1, adams_rule: AdamsRule::Fixed },
            ],
            order,
            2,
        )
        .unwrap()
    }

    #[test]
    fn mul_difference_of_squares() {
        // (1 + Q)(1 - Q) at order 2 keeps the Q^2 term, at order 1 drops it.
        let c2 = ctx_qt(2);
        let q = TruncatedSeries::generator(&c2, 0);
        let one = TruncatedSeries::one(&c2);
        let p = one.add(&q).mul(&one.sub(&q));
        assert_eq!(p, one.sub(&q.mul(&q)));

        let c1 = ctx_qt(1);
        let q = TruncatedSeries::generator(&c1, 0);
        let one = TruncatedSeries::one(&c1);
        let p = one.add(&q).mul(&one.sub(&q));
        assert_eq!(p, one);
    }

    #[test]
    fn mul_binomial_square() {
        let c = ctx_qt(2);
        let q = TruncatedSeries::generator(&c, 0);
        let t = TruncatedSeries::generator(&c, 1);
        let s = q.add(&t);
        let sq = s.mul(&s);
        // Q^2 + 2Qt + t^2
        assert_eq!(sq.coeff(&[2, 0]), rat_int(1));
        assert_eq!(sq.coeff(&[1, 1]), rat_int(2));
        assert_eq!(sq.coeff(&[0, 2]), rat_int(1));
    }

    #[test]
    fn adams_rules() {
        let c = ctx_qt(4);
        let q = TruncatedSeries::generator(&c, 0);
        let t = TruncatedSeries::generator(&c, 1);
        // Psi^2(Q^d) = Q^{2d}
        assert_eq!(q.adams(2), q.mul(&q));
        // Psi^3(1) = 1
        assert_eq!(TruncatedSeries::one(&c).adams(3), TruncatedSeries::one(&c));
        // Psi^2(Q + t) = Q^2 + t (fixed rule)
        assert_eq!(q.add(&t).adams(2), q.mul(&q).add(&t));
        // Psi^k Psi^m = Psi^{km}
        let s = q.add(&t).add(&TruncatedSeries::one(&c));
        assert_eq!(s.adams(2).adams(2), s.adams(4));
    }

    #[test]
    fn filtration_weights() {
        let c = ctx_qt(3);
        let q = TruncatedSeries::generator(&c, 0);
        let q2 = q.mul(&q);
        let q3 = q2.mul(&q);
        assert_eq!(q2.add(&q3).filtration_weight(), 2);
        assert_eq!(TruncatedSeries::zero(&c).filtration_weight(), WEIGHT_INFINITY);
        assert_eq!(TruncatedSeries::one(&c).add(&q).filtration_weight(), 0);
    }

    #[test]
    fn inverse_geometric() {
        let c = ctx_qt(3);
        let t = TruncatedSeries::generator(&c, 1);
        let g = TruncatedSeries::one(&c).add(&t);
        let inv = g.inverse().unwrap();
        // 1 - t + t^2 - t^3
        assert_eq!(inv.coeff(&[0, 0]), rat_int(1));
        assert_eq!(inv.coeff(&[0, 1]), rat_int(-1));
        assert_eq!(inv.coeff(&[0, 2]), rat_int(1));
        assert_eq!(inv.coeff(&[0, 3]), rat_int(-1));
        assert_eq!(g.mul(&inv), TruncatedSeries::one(&c));
        assert!(t.inverse().is_err());
    }

    #[test]
    fn log_of_unit() {
        let c = ctx_qt(3);
        let t = TruncatedSeries::generator(&c, 1);
        let l = TruncatedSeries::one(&c).add(&t).log_unit().unwrap();
        assert_eq!(l.coeff(&[0, 1]), rat_int(1));
        assert_eq!(l.coeff(&[0, 2]), rat(-1, 2));
        assert_eq!(l.coeff(&[0, 3]), rat(1, 3));
    }

    #[test]
    fn embed_and_linear_part() {
        let c = ctx_qt(2);
        let c_eps = c.with_extra_gen("eps", 1, AdamsRule::Fixed, 3);
        let q = TruncatedSeries::generator(&c, 0).embed(&c_eps);
        let eps = TruncatedSeries::generator(&c_eps, 2);
        let s = q.mul(&eps).add(&q).add(&eps.mul(&eps));
        let lin = s.linear_part_in_last_gen(&c);
        assert_eq!(lin, TruncatedSeries::generator(&c, 0));
        let constpart = s.without_last_gen(&c);
        assert_eq!(constpart, TruncatedSeries::generator(&c, 0));
    }
}
