//! Lagrangian-cone checks: evaluation of the big J-function, tangent-space
//! images of the positive space under S^{-1}, and the executable ruling
//! property: a point built as J(tau_1) + (1-q) S^{-1}(v) must reproduce
//! itself through J applied to its own positive-part coordinates.

use std::sync::Arc;

use crate::bracket::{BracketEngine, BracketSlot, KernelKind};
use crate::error::EngineError;
use crate::insertion::InsertionPoly;
use crate::kbasis::{KVector, KvFun, KvLaurent};
use crate::qfun::{LaurentPoly, QRat};
use crate::rat::factorial;
use crate::recon0::{dilaton_vector, Profile};
use crate::sector::SectorFamily;
use crate::series::{RingContext, TruncatedSeries};
use crate::soper::{apply_q_matrix, kv_project_plus, omega_pair_kv, s_inverse_matrix, s_matrix};
use num_traits::Zero;

/// A value of the big J-function together with its defining input.
#[derive(Clone, Debug)]
pub struct JPoint {
    pub value: KvFun,
    pub input: KvLaurent,
}

/// Sums brackets over multisets of declared Laurent inputs with 1/m!
/// weights and no cycle prefactors; the family `params` supplies the
/// higher-sector constant insertions through the usual machinery.
fn multiset_kernel_bracket(
    engine: &BracketEngine<'_>,
    kernel_basis: usize,
    t1: &KvLaurent,
    params: &SectorFamily<KVector>,
    cap: u32,
) -> Result<QRat<TruncatedSeries>, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let w1 = crate::recon0::kv_laurent_weight(t1);
    if w1 == 0 {
        return Err(EngineError::Config(
            "J-function inputs must have positive filtration weight for the sum to truncate".into(),
        ));
    }
    let ins = InsertionPoly::from_q_laurent(t1, ctx, n, cap + 2);
    let mut total = QRat::zero();
    let mut m = 0u32;
    loop {
        if m * w1 > ctx.order {
            break;
        }
        let mut rest = Vec::with_capacity(m as usize);
        for _ in 0..m {
            rest.push(BracketSlot::derivative(1, ins.clone()));
        }
        let v = engine.kernel_bracket(
            0,
            KernelKind::QL,
            &KVector::basis(ctx, n, kernel_basis),
            &rest,
            params,
            1,
            cap,
        )?;
        total = total.add(&v.scale(&(crate::rat::rat_int(1) / factorial(m))));
        if ins.is_zero() {
            break;
        }
        m += 1;
    }
    Ok(total)
}

/// Evaluates J(t_1) = 1 - q + t_1 + sum_a phi^a << phi_a/(1-qL), t_1, ... >>
/// with parameters in the sectors r >= 2 of `params`.
pub fn j_eval(
    engine: &BracketEngine<'_>,
    t1: &KvLaurent,
    params: &SectorFamily<KVector>,
) -> Result<JPoint, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    // higher-sector parameters only; the sector-1 inputs are explicit slots
    let mut higher = SectorFamily::new(ctx.max_cycle);
    for (r, v) in params.sectors() {
        if r >= 2 {
            higher.set(r, v.clone());
        }
    }
    let cap = (1 + ctx.order).max(3);
    let mut value: KvFun = dilaton_vector(ctx, n)
        .iter()
        .zip(t1.iter())
        .map(|(d, t)| QRat::from_laurent(d.add(t)))
        .collect();
    for a in 0..n {
        let w = multiset_kernel_bracket(engine, a, t1, &higher, cap)?;
        if w.is_zero() {
            continue;
        }
        // phi^a = sum_b g^{ab} phi_b
        for b in 0..n {
            let c = &engine.basis.pairing_inv[a][b];
            if c.is_zero() {
                continue;
            }
            value[b] = value[b].add(&w.scale(c));
        }
    }
    Ok(JPoint { value, input: t1.clone() })
}

/// Tangent-space family: the images S^{-1}(phi_a q^k) over a symmetric
/// exponent window.
pub fn tangent_space_basis(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    window: i64,
) -> Result<Vec<KvFun>, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let cap = ctx.order.max(1);
    let sinv = s_inverse_matrix(engine, tau, 1, cap)?;
    let mut out = Vec::new();
    for a in 0..n {
        for k in -window..=window {
            let mut f: KvFun = vec![QRat::zero(); n];
            f[a] = QRat::from_laurent(LaurentPoly::monomial(k, TruncatedSeries::one(ctx)));
            out.push(apply_q_matrix(&sinv, &f)?);
        }
    }
    Ok(out)
}

/// Report of one ruling check.
#[derive(Clone, Debug)]
pub struct RulingOutcome {
    pub passed: bool,
    pub detail: String,
}

/// The executable cone membership: with tau the family parameter and v a
/// positive-space direction, form p = J(tau_1) + (1-q) S^{-1}(v), read off
/// t_1' = [p]_+ - (1-q), and demand J(t_1') = p.
pub fn ruling_check(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    v: &KvFun,
) -> Result<RulingOutcome, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    // diagonal input: t_1 = tau_1 as a constant Laurent vector
    let tau1 = tau
        .get(1)
        .cloned()
        .unwrap_or_else(|| KVector::zero(ctx, n));
    let diag: KvLaurent = tau1.comps.iter().map(|c| LaurentPoly::constant(c.clone())).collect();
    let j_diag = j_eval(engine, &diag, tau)?;

    for comp in v {
        let w = comp
            .laurent
            .terms
            .values()
            .map(|c| c.filtration_weight())
            .min()
            .unwrap_or(crate::series::WEIGHT_INFINITY);
        if w == 0 {
            return Err(EngineError::Config(
                "ruling directions must have positive filtration weight".into(),
            ));
        }
    }
    let cap = ctx.order.max(1);
    let sinv = s_inverse_matrix(engine, tau, 1, cap)?;
    let sv = apply_q_matrix(&sinv, v)?;
    let one_minus_q = {
        let mut p = LaurentPoly::constant(TruncatedSeries::one(ctx));
        p = p.add(&LaurentPoly::monomial(1, TruncatedSeries::one(ctx).neg()));
        QRat::from_laurent(p)
    };
    let mut p_point: KvFun = Vec::with_capacity(n);
    for b in 0..n {
        p_point.push(j_diag.value[b].add(&sv[b].mul(&one_minus_q)?));
    }
    // t_1' = [p]_+ - (1 - q) in the first component
    let dil = dilaton_vector(ctx, n);
    let plus = kv_project_plus(&p_point);
    let t1_prime: KvLaurent = plus.iter().zip(dil.iter()).map(|(p, d)| p.sub(d)).collect();
    let j_prime = j_eval(engine, &t1_prime, tau)?;
    for b in 0..n {
        if j_prime.value[b] != p_point[b] {
            return Ok(RulingOutcome {
                passed: false,
                detail: format!(
                    "ruling round trip differs in component {}: J(t') = {:?}, p = {:?}",
                    b, j_prime.value[b], p_point[b]
                ),
            });
        }
    }
    Ok(RulingOutcome { passed: true, detail: "ruling round trip closed".into() })
}

/// [S_{1,tau} J(tau_1)]_+ = 1 - q: the cone-point normalization.
pub fn cone_point_check(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
) -> Result<RulingOutcome, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let tau1 = tau
        .get(1)
        .cloned()
        .unwrap_or_else(|| KVector::zero(ctx, n));
    let diag: KvLaurent = tau1.comps.iter().map(|c| LaurentPoly::constant(c.clone())).collect();
    let j_diag = j_eval(engine, &diag, tau)?;
    let cap = ctx.order.max(1);
    let sm = s_matrix(engine, tau, 1, cap)?;
    let sj = apply_q_matrix(&sm.entries, &j_diag.value)?;
    let plus = kv_project_plus(&sj);
    let dil = dilaton_vector(ctx, n);
    for b in 0..n {
        if plus[b] != dil[b] {
            return Ok(RulingOutcome {
                passed: false,
                detail: format!("[S J(tau_1)]_+ differs from 1-q in component {}: {:?}", b, plus[b]),
            });
        }
    }
    Ok(RulingOutcome { passed: true, detail: "cone point normalized".into() })
}

/// Pairwise isotropy of a tangent family under the symplectic form.
pub fn isotropy_check(
    engine: &BracketEngine<'_>,
    family: &[KvFun],
) -> Result<RulingOutcome, EngineError> {
    let ctx = &engine.ctx;
    for (i, f) in family.iter().enumerate() {
        for g in family.iter().skip(i) {
            let v = omega_pair_kv(f, g, &engine.basis.pairing, ctx)?;
            if !v.is_zero() {
                return Ok(RulingOutcome {
                    passed: false,
                    detail: format!("tangent family is not isotropic: pairing = {}", v),
                });
            }
        }
    }
    Ok(RulingOutcome { passed: true, detail: "tangent family isotropic".into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::PointGenus0Builtin;
    use crate::kbasis::KBasisSpec;
    use crate::rat::rat_int;
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
        let mut f = SectorFamily::new(ctx.max_cycle);
        let mut v = KVector::zero(ctx, 1);
        v.comps[0] = TruncatedSeries::generator(ctx, 0);
        f.set(1, v);
        f
    }

    #[test]
    fn j_at_low_order_is_affine() {
        // at order one the correlator tail of J needs at least two inputs
        // of positive weight, so J = 1 - q + t_1 exactly
        let (ctx, basis) = setup(1);
        let p = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &p);
        let s = TruncatedSeries::generator(&ctx, 0);
        let t1: KvLaurent = vec![LaurentPoly::monomial(2, s.clone())];
        let j = j_eval(&engine, &t1, &SectorFamily::new(ctx.max_cycle)).unwrap();
        let expected = QRat::from_laurent(
            LaurentPoly::constant(TruncatedSeries::one(&ctx))
                .add(&LaurentPoly::monomial(1, TruncatedSeries::one(&ctx).neg()))
                .add(&LaurentPoly::monomial(2, s)),
        );
        assert_eq!(j.value[0], expected);
    }

    #[test]
    fn j_positive_part_is_input() {
        let (ctx, basis) = setup(3);
        let p = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &p);
        let s = TruncatedSeries::generator(&ctx, 0);
        let t1: KvLaurent = vec![LaurentPoly::monomial(1, s.clone()).add(&LaurentPoly::constant(s))];
        let j = j_eval(&engine, &t1, &tau_family(&ctx)).unwrap();
        let plus = kv_project_plus(&j.value);
        let dil = dilaton_vector(&ctx, 1);
        assert_eq!(plus[0], t1[0].add(&dil[0]));
    }

    #[test]
    fn cone_point_and_isotropy() {
        let (ctx, basis) = setup(2);
        let p = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &p);
        let tau = tau_family(&ctx);
        let normalized = cone_point_check(&engine, &tau).unwrap();
        assert!(normalized.passed, "{}", normalized.detail);
        let fam = tangent_space_basis(&engine, &tau, 2).unwrap();
        let iso = isotropy_check(&engine, &fam).unwrap();
        assert!(iso.passed, "{}", iso.detail);
    }

    #[test]
    fn ruling_round_trip() {
        let (ctx, basis) = setup(2);
        let p = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &p);
        let tau = tau_family(&ctx);
        for k in [0i64, 1, -1] {
            let v: KvFun = vec![QRat::from_laurent(LaurentPoly::monomial(
                k,
                TruncatedSeries::generator(&ctx, 0),
            ))];
            let out = ruling_check(&engine, &tau, &v).unwrap();
            assert!(out.passed, "direction q^{}: {}", k, out.detail);
        }
    }

    #[test]
    fn ruling_trivial_direction() {
        let (ctx, basis) = setup(2);
        let p = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &p);
        let tau = tau_family(&ctx);
        let v: KvFun = vec![QRat::zero()];
        let out = ruling_check(&engine, &tau, &v).unwrap();
        assert!(out.passed);
        let _ = rat_int(0);
    }
}
