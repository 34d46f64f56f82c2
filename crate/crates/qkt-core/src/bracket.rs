//! The double-bracket evaluator: correlator series with extra insertions
//! summed with factorial weights and Novikov-degree weights,
//!
//!   <<A_1, ..., A_m>>_{g,l} =
//!     sum_{lbar, d} Q^d / lbar! * (prod_r r^{l_r})
//!       < A_1, ..., tau_1, ..., tau_r, ... >_{g, l + lbar, d},
//!
//! where the prefactor runs over the declared slots only; the raw values
//! carry the supertrace normalization prod_r r^{-l_r} over all slots. At
//! truncation order N at most N insertions contribute because every sector
//! entry of tau has positive filtration weight.
//!
//! Directional derivatives in tau are the same sums with one extra
//! prefactor-free slot; this is exact coefficient manipulation, never
//! numerical.

use std::sync::Arc;

use crate::correlator::{CorrelatorProvider, Degree, RawKey, SlotKey};
use crate::error::EngineError;
use crate::insertion::{CycleType, InsertionPoly};
use crate::kbasis::{KBasisSpec, KVector};
use crate::qfun::QRat;
use crate::rat::{rat_int, Rat};
use crate::sector::SectorFamily;
use crate::series::{RingContext, TruncatedSeries};

/// One declared slot of a double bracket.
#[derive(Clone, Debug)]
pub struct BracketSlot {
    pub cycle: u32,
    pub ins: InsertionPoly,
    /// Whether the slot counts toward the prod_r r^{l_r} prefactor
    /// (declared inputs do; derivative slots do not).
    pub weighted: bool,
}

impl BracketSlot {
    pub fn input(cycle: u32, ins: InsertionPoly) -> Self {
        BracketSlot { cycle, ins, weighted: true }
    }

    pub fn derivative(cycle: u32, ins: InsertionPoly) -> Self {
        BracketSlot { cycle, ins, weighted: false }
    }
}

/// Evaluation context shared by all bracket computations.
pub struct BracketEngine<'a> {
    pub ctx: Arc<RingContext>,
    pub basis: &'a KBasisSpec,
    pub provider: &'a dyn CorrelatorProvider,
}

/// An individual tau insertion choice: sector, basis index, coefficient.
struct TauAtom {
    sector: u32,
    basis: usize,
    coeff: TruncatedSeries,
    weight: u32,
}

impl<'a> BracketEngine<'a> {
    pub fn new(ctx: &Arc<RingContext>, basis: &'a KBasisSpec, provider: &'a dyn CorrelatorProvider) -> Self {
        BracketEngine { ctx: ctx.clone(), basis, provider }
    }

    fn order(&self) -> u32 {
        self.ctx.order
    }

    /// Series value of Q^degree, with its filtration weight.
    fn degree_monomial(&self, d: &Degree) -> Result<(TruncatedSeries, u32), EngineError> {
        let mut exps = vec![0u16; self.ctx.rank_of_exponents()];
        for (name, e) in d {
            if *e == 0 {
                continue;
            }
            let idx = self
                .ctx
                .gen_index(name)
                .ok_or_else(|| EngineError::Config(format!("degree names unknown generator `{}`", name)))?;
            exps[idx] = *e;
        }
        let w = self.ctx.weight_of(&exps);
        Ok((TruncatedSeries::monomial(&self.ctx, exps, rat_int(1)), w))
    }

    fn tau_atoms(&self, tau: &SectorFamily<KVector>) -> Vec<TauAtom> {
        let mut atoms = Vec::new();
        for (r, v) in tau.sectors() {
            for (alpha, comp) in v.comps.iter().enumerate() {
                if comp.is_zero() {
                    continue;
                }
                atoms.push(TauAtom {
                    sector: r,
                    basis: alpha,
                    coeff: comp.clone(),
                    weight: comp.filtration_weight().max(1),
                });
            }
        }
        atoms
    }

    /// The full double bracket over declared slots, with tau insertions.
    pub fn double_bracket(
        &self,
        genus: u32,
        slots: &[BracketSlot],
        tau: &SectorFamily<KVector>,
    ) -> Result<TruncatedSeries, EngineError> {
        self.double_bracket_with_floor(genus, slots, tau, 0)
    }

    /// Like `double_bracket`, but with a declared weight floor: the caller
    /// promises to multiply the result by something of filtration weight at
    /// least `floor`, so terms beyond order - floor are never demanded from
    /// the provider.
    pub fn double_bracket_with_floor(
        &self,
        genus: u32,
        slots: &[BracketSlot],
        tau: &SectorFamily<KVector>,
        floor: u32,
    ) -> Result<TruncatedSeries, EngineError> {
        let mut prefactor = rat_int(1);
        let mut ct = CycleType::empty();
        for s in slots {
            if s.weighted {
                prefactor *= rat_int(s.cycle as i64);
            }
            ct.add_cycles(s.cycle, 1);
        }
        let atoms = self.tau_atoms(tau);
        let mut total = TruncatedSeries::zero(&self.ctx);

        for d in self.provider.degrees() {
            let (qd, wd) = self.degree_monomial(&d)?;
            if wd.saturating_add(floor) > self.order() {
                continue;
            }
            // expand declared slots multilinearly, then sum insertions
            let mut chosen: Vec<SlotKey> = Vec::with_capacity(slots.len());
            let value = self.expand_slots(
                genus,
                slots,
                0,
                &mut chosen,
                &TruncatedSeries::one(&self.ctx),
                wd.saturating_add(floor),
                &atoms,
                &d,
            )?;
            total = total.add(&value.mul(&qd).scale(&prefactor));
        }
        Ok(total)
    }

    /// Directional derivative in tau: d/de <<...>> at tau + e * dir, e = 0.
    pub fn double_bracket_tau_deriv(
        &self,
        genus: u32,
        slots: &[BracketSlot],
        tau: &SectorFamily<KVector>,
        dir: &SectorFamily<KVector>,
    ) -> Result<TruncatedSeries, EngineError> {
        self.double_bracket_tau_deriv_with_floor(genus, slots, tau, dir, 0)
    }

    /// Derivative with a declared weight floor (see `double_bracket_with_floor`);
    /// the direction coefficient weights also count toward the floor.
    pub fn double_bracket_tau_deriv_with_floor(
        &self,
        genus: u32,
        slots: &[BracketSlot],
        tau: &SectorFamily<KVector>,
        dir: &SectorFamily<KVector>,
        floor: u32,
    ) -> Result<TruncatedSeries, EngineError> {
        let mut total = TruncatedSeries::zero(&self.ctx);
        for (r, v) in dir.sectors() {
            for (alpha, comp) in v.comps.iter().enumerate() {
                if comp.is_zero() {
                    continue;
                }
                let mut extended: Vec<BracketSlot> = slots.to_vec();
                extended.push(BracketSlot::derivative(
                    r,
                    InsertionPoly::constant(KVector::basis(&self.ctx, self.basis.rank, alpha), u32::MAX),
                ));
                let w = comp.filtration_weight().min(self.order());
                let v = self.double_bracket_with_floor(genus, &extended, tau, floor.saturating_add(w))?;
                total = total.add(&v.mul(comp));
            }
        }
        Ok(total)
    }

    /// Recursion over declared slots: each slot contributes one monomial
    /// (L-1)^k phi_a choice; then tau insertions are summed.
    #[allow(clippy::too_many_arguments)]
    fn expand_slots(
        &self,
        genus: u32,
        slots: &[BracketSlot],
        idx: usize,
        chosen: &mut Vec<SlotKey>,
        coeff: &TruncatedSeries,
        weight_so_far: u32,
        atoms: &[TauAtom],
        degree: &Degree,
    ) -> Result<TruncatedSeries, EngineError> {
        if coeff.is_zero() {
            return Ok(TruncatedSeries::zero(&self.ctx));
        }
        if idx == slots.len() {
            return self.sum_tau_insertions(genus, chosen, coeff, weight_so_far, atoms, degree);
        }
        let slot = &slots[idx];
        let mut acc = TruncatedSeries::zero(&self.ctx);
        for (k, kv) in slot.ins.degree_terms() {
            for (alpha, comp) in kv.comps.iter().enumerate() {
                if comp.is_zero() {
                    continue;
                }
                let w = comp.filtration_weight();
                if weight_so_far.saturating_add(w) > self.order() {
                    continue;
                }
                chosen.push(SlotKey { cycle: slot.cycle, lm1_power: k, basis: alpha });
                let c2 = coeff.mul(comp);
                let v = self.expand_slots(genus, slots, idx + 1, chosen, &c2, weight_so_far + w, atoms, degree)?;
                acc = acc.add(&v);
                chosen.pop();
            }
        }
        Ok(acc)
    }

    /// Sums over insertion multisets with weights prod 1/m! once the
    /// declared slots are fixed.
    fn sum_tau_insertions(
        &self,
        genus: u32,
        base_slots: &[SlotKey],
        coeff: &TruncatedSeries,
        weight_so_far: u32,
        atoms: &[TauAtom],
        degree: &Degree,
    ) -> Result<TruncatedSeries, EngineError> {
        let mut acc = TruncatedSeries::zero(&self.ctx);
        let mut extra: Vec<SlotKey> = Vec::new();
        self.tau_rec(genus, base_slots, coeff, weight_so_far, atoms, 0, &mut extra, degree, &mut acc)?;
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn tau_rec(
        &self,
        genus: u32,
        base_slots: &[SlotKey],
        coeff: &TruncatedSeries,
        weight_so_far: u32,
        atoms: &[TauAtom],
        atom_idx: usize,
        extra: &mut Vec<SlotKey>,
        degree: &Degree,
        acc: &mut TruncatedSeries,
    ) -> Result<(), EngineError> {
        if coeff.is_zero() {
            return Ok(());
        }
        if atom_idx == atoms.len() {
            let mut slots = base_slots.to_vec();
            slots.extend(extra.iter().cloned());
            let key = RawKey::new(genus, degree.clone(), slots);
            if key.structurally_zero() {
                return Ok(());
            }
            let raw = self.provider.eval(&key)?;
            if !raw.is_zero() {
                *acc = acc.add(&coeff.mul(&raw));
            }
            return Ok(());
        }
        let atom = &atoms[atom_idx];
        // multiplicity 0
        self.tau_rec(genus, base_slots, coeff, weight_so_far, atoms, atom_idx + 1, extra, degree, acc)?;
        // multiplicity m >= 1, weighted coeff * atom^m / m!
        let mut c = coeff.clone();
        let mut w = weight_so_far;
        let mut pushes = 0u32;
        let mut m = 0u32;
        loop {
            m += 1;
            w = w.saturating_add(atom.weight);
            if w > self.order() {
                break;
            }
            c = c.mul(&atom.coeff).scale(&(rat_int(1) / rat_int(m as i64)));
            if c.is_zero() {
                break;
            }
            extra.push(SlotKey { cycle: atom.sector, lm1_power: 0, basis: atom.basis });
            pushes += 1;
            self.tau_rec(genus, base_slots, &c, w, atoms, atom_idx + 1, extra, degree, acc)?;
        }
        for _ in 0..pushes {
            extra.pop();
        }
        Ok(())
    }

    /// The q-dependent kernel sum_k kernel_k(q) <<phi_a (L-1)^k, rest>>:
    /// the nilpotent expansion of the geometric insertion.
    ///
    /// `KernelKind::QL` is 1/(1 - qL)   = sum_k q^k (L-1)^k / (1-q)^{k+1};
    /// `KernelKind::LOverQ` is 1/(1-L/q) = sum_k q (L-1)^k / (q-1)^{k+1}.
    pub fn kernel_bracket(
        &self,
        genus: u32,
        kind: KernelKind,
        kernel_vec: &KVector,
        rest: &[BracketSlot],
        tau: &SectorFamily<KVector>,
        kernel_cycle: u32,
        cap: u32,
    ) -> Result<QRat<TruncatedSeries>, EngineError> {
        let mut out = QRat::zero();
        for k in 0..cap {
            let mut ins = InsertionPoly::zero(&self.ctx, self.basis.rank, cap);
            ins.set(k, kernel_vec.clone());
            if ins.is_zero() && k > 0 {
                // a zero coefficient vector contributes nothing at any power
                continue;
            }
            let mut slots = vec![BracketSlot::input(kernel_cycle, ins)];
            slots.extend(rest.iter().cloned());
            let v = self.double_bracket(genus, &slots, tau)?;
            if v.is_zero() {
                continue;
            }
            out = out.add(&lift_rational_shape(&kernel_coefficient(kind, k), &v));
        }
        Ok(out)
    }
}

/// Which geometric kernel an insertion expands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// 1/(1 - qL)
    QL,
    /// 1/(1 - L/q)
    LOverQ,
}

/// The scalar q-dependence multiplying <<phi (L-1)^k, ...>> in the kernel
/// expansion, in canonical partial-fraction form over the rationals.
pub fn kernel_coefficient(kind: KernelKind, k: u32) -> QRat<Rat> {
    let one = crate::cyclotomic::RootLabel::one();
    let pole = QRat::pole_term(one, k + 1, rat_int(1));
    match kind {
        KernelKind::QL => {
            // q^k (1-q)^{-(k+1)}
            let mono = QRat::from_laurent(crate::qfun::LaurentPoly::monomial(k as i64, rat_int(1)));
            mono.mul(&pole).expect("rational pole normalization")
        }
        KernelKind::LOverQ => {
            // q (q-1)^{-(k+1)} = (-1)^{k+1} q (1-q)^{-(k+1)}
            let sign = if (k + 1) % 2 == 0 { rat_int(1) } else { rat_int(-1) };
            let mono = QRat::from_laurent(crate::qfun::LaurentPoly::monomial(1, sign));
            mono.mul(&pole).expect("rational pole normalization")
        }
    }
}

/// A rational q-shape times a series coefficient.
pub fn lift_rational_shape(shape: &QRat<Rat>, c: &TruncatedSeries) -> QRat<TruncatedSeries> {
    shape.map_coeff(|r| c.scale(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::PointGenus0Builtin;
    use crate::rat::{rat, rat_int};
    use crate::series::{AdamsRule, GeneratorSpec};

    fn setup(order: u32) -> (Arc<RingContext>, KBasisSpec) {
        let ctx = RingContext::new(
            vec![GeneratorSpec { name: "s".into(), weight: 1, adams_rule: AdamsRule::Fixed }],
            order,
            2,
        )
        .unwrap();
        (ctx, KBasisSpec::point())
    }

    fn tau_family(ctx: &Arc<RingContext>) -> SectorFamily<KVector> {
        // tau_1 = s * phi_0
        let mut f = SectorFamily::new(ctx.max_cycle);
        let mut v = KVector::zero(ctx, 1);
        v.comps[0] = TruncatedSeries::generator(ctx, 0);
        f.set(1, v);
        f
    }

    #[test]
    fn metric_correction_series() {
        // <<1,1>>_{0,2_1} at the point with tau_1 = s is s + s^2/2 + s^3/6
        let (ctx, basis) = setup(3);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let one = InsertionPoly::constant(KVector::basis(&ctx, 1, 0), 8);
        let slots = vec![BracketSlot::input(1, one.clone()), BracketSlot::input(1, one)];
        let v = engine.double_bracket(0, &slots, &tau_family(&ctx)).unwrap();
        assert_eq!(v.coeff(&[1]), rat_int(1));
        assert_eq!(v.coeff(&[2]), rat(1, 2));
        assert_eq!(v.coeff(&[3]), rat(1, 6));
        assert_eq!(v.coeff(&[0]), rat_int(0));
    }

    #[test]
    fn dilaton_slot_bracket() {
        // <<(L-1), 1>>_{0,2_1}: values <(L-1),1,s^m/m!>: n=3 gives zero
        // (per-slot nilpotency), n=4 gives chi = 1 * s^2/2, n=5: (l1-2)=3,
        // chi((L-1),1,1,1,1) = 2 -> 2 s^3/6.
        let (ctx, basis) = setup(3);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let one = InsertionPoly::constant(KVector::basis(&ctx, 1, 0), 8);
        let lm1 = InsertionPoly::lm1(KVector::basis(&ctx, 1, 0), 8);
        let slots = vec![BracketSlot::input(1, lm1), BracketSlot::input(1, one)];
        let v = engine.double_bracket(0, &slots, &tau_family(&ctx)).unwrap();
        assert_eq!(v.coeff(&[1]), rat_int(0));
        assert_eq!(v.coeff(&[2]), rat(1, 2));
        assert_eq!(v.coeff(&[3]), rat(2, 6));
    }

    #[test]
    fn tau_derivative_adds_slot() {
        // d/d tau <<1,1>> in the direction phi_0 equals <<1,1,phi_0>>;
        // order 2 keeps every demanded key within the built-in n <= 5 range
        let (ctx, basis) = setup(2);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let one = InsertionPoly::constant(KVector::basis(&ctx, 1, 0), 8);
        let slots = vec![BracketSlot::input(1, one.clone()), BracketSlot::input(1, one.clone())];
        let mut dir = SectorFamily::new(ctx.max_cycle);
        dir.set(1, KVector::basis(&ctx, 1, 0));
        let d = engine.double_bracket_tau_deriv(0, &slots, &tau_family(&ctx), &dir).unwrap();
        let trip = vec![
            BracketSlot::input(1, one.clone()),
            BracketSlot::input(1, one.clone()),
            BracketSlot::derivative(1, one),
        ];
        let v = engine.double_bracket(0, &trip, &tau_family(&ctx)).unwrap();
        assert_eq!(d, v);
        // 1 + s + s^2/2 (derivative of s + s^2/2 + s^3/6)
        assert_eq!(d.coeff(&[0]), rat_int(1));
        assert_eq!(d.coeff(&[1]), rat_int(1));
        assert_eq!(d.coeff(&[2]), rat(1, 2));
    }

    #[test]
    fn kernel_coefficients_canonical() {
        // k = 0 of 1/(1-L/q): q/(q-1) = 1 - (1-q)^{-1}
        let k0 = kernel_coefficient(KernelKind::LOverQ, 0);
        assert_eq!(k0.laurent.terms.get(&0), Some(&rat_int(1)));
        assert_eq!(
            k0.poles.get(&(crate::cyclotomic::RootLabel::one(), 1)),
            Some(&rat_int(-1))
        );
        // k = 0 of 1/(1-qL): (1-q)^{-1}
        let q0 = kernel_coefficient(KernelKind::QL, 0);
        assert!(q0.laurent.is_zero());
        assert_eq!(
            q0.poles.get(&(crate::cyclotomic::RootLabel::one(), 1)),
            Some(&rat_int(1))
        );
    }
}
