//! The correlator-corrected metric G, its sector shifts, and the
//! symplectomorphisms S, S^{-1} acting on q-carrying K-vectors.
//!
//!   S(q) phi   = sum_{a,b} ( (phi, phi_a) + << phi/(1 - L/q), phi_a >> ) G^{ab} phi_b,
//!   S^{-1} phi = phi + sum_{a,b} << phi, phi_a/(1 - qL) >> g^{ab} phi_b,
//!
//! extended linearly over rational functions of q in the canonical
//! partial-fraction basis. The sector version S_r evaluates every
//! tau-dependent ingredient at the shifted family R_r(tau).

use std::sync::Arc;

use crate::bracket::{BracketEngine, BracketSlot, KernelKind};
use crate::error::EngineError;
use crate::insertion::InsertionPoly;
use crate::kbasis::{KBasisSpec, KVector, KvFun, KvLaurent};
use crate::qfun::{omega_scalar, LaurentPoly, QRat};
use crate::rat::{rat_int, Rat};
use crate::sector::SectorFamily;
use crate::series::{RingContext, TruncatedSeries};
use num_traits::Zero;

/// The metric G_{ab} = g_{ab} + <<phi_a, phi_b>>_{0,2_1} and its inverse to
/// the truncation order, at a given (already shifted) tau.
#[derive(Clone, Debug)]
pub struct MetricG {
    pub matrix: Vec<Vec<TruncatedSeries>>,
    pub inverse: Vec<Vec<TruncatedSeries>>,
}

fn mat_zero(ctx: &Arc<RingContext>, n: usize) -> Vec<Vec<TruncatedSeries>> {
    vec![vec![TruncatedSeries::zero(ctx); n]; n]
}

fn mat_mul(a: &[Vec<TruncatedSeries>], b: &[Vec<TruncatedSeries>]) -> Vec<Vec<TruncatedSeries>> {
    let n = a.len();
    let ctx = a[0][0].context().clone();
    let mut out = mat_zero(&ctx, n);
    for i in 0..n {
        for j in 0..n {
            for (k, row) in b.iter().enumerate() {
                if a[i][k].is_zero() || row[j].is_zero() {
                    continue;
                }
                out[i][j] = out[i][j].add(&a[i][k].mul(&row[j]));
            }
        }
    }
    out
}

/// Computes G at the family `tau_shifted` (pass `tau.r_shift(r)` for G_r).
pub fn metric_g(
    engine: &BracketEngine<'_>,
    tau_shifted: &SectorFamily<KVector>,
) -> Result<MetricG, EngineError> {
    let ctx = &engine.ctx;
    let basis = engine.basis;
    let n = basis.rank;
    let mut matrix = mat_zero(ctx, n);
    for a in 0..n {
        for b in a..n {
            let slots = vec![
                BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX)),
                BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, b), u32::MAX)),
            ];
            let corr = engine.double_bracket(0, &slots, tau_shifted)?;
            let entry = TruncatedSeries::from_rat(ctx, basis.pairing[a][b].clone()).add(&corr);
            matrix[a][b] = entry.clone();
            matrix[b][a] = entry;
        }
    }
    // G = g (I + g^{-1} C) with C in the maximal ideal; invert by the
    // geometric series in g^{-1} C.
    let mut ginv_c = mat_zero(ctx, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = TruncatedSeries::zero(ctx);
            for k in 0..n {
                let c_kj = matrix[k][j].sub(&TruncatedSeries::from_rat(ctx, basis.pairing[k][j].clone()));
                if basis.pairing_inv[i][k].is_zero() || c_kj.is_zero() {
                    continue;
                }
                acc = acc.add(&c_kj.scale(&basis.pairing_inv[i][k]));
            }
            ginv_c[i][j] = acc;
        }
    }
    let correction_weight: u32 = ginv_c
        .iter()
        .flatten()
        .map(|s| s.filtration_weight())
        .min()
        .unwrap_or(crate::series::WEIGHT_INFINITY);
    if correction_weight == 0 {
        return Err(EngineError::Internal(
            "metric correction has weight zero; the filtration assumption on tau is violated".into(),
        ));
    }
    // (I + U)^{-1} = I - U + U^2 - ...
    let mut inv_series = mat_zero(ctx, n);
    for (i, row) in inv_series.iter_mut().enumerate() {
        row[i] = TruncatedSeries::one(ctx);
    }
    let mut power = inv_series.clone();
    for _ in 0..=ctx.order {
        power = mat_mul(&power, &ginv_c);
        if power.iter().flatten().all(|s| s.is_zero()) {
            break;
        }
        let signed: Vec<Vec<TruncatedSeries>> = power.iter().map(|r| r.iter().map(|s| s.neg()).collect()).collect();
        power = signed;
        for i in 0..n {
            for j in 0..n {
                inv_series[i][j] = inv_series[i][j].add(&power[i][j]);
            }
        }
    }
    // G^{-1} = (I + g^{-1} C)^{-1} g^{-1}
    let ginv_mat: Vec<Vec<TruncatedSeries>> = basis
        .pairing_inv
        .iter()
        .map(|row| row.iter().map(|r| TruncatedSeries::from_rat(ctx, r.clone())).collect())
        .collect();
    let inverse = mat_mul(&inv_series, &ginv_mat);
    Ok(MetricG { matrix, inverse })
}

/// The matrix of S_r(q) in the basis: (S f)_b = sum_g f_g(q) M_{g b}(q).
pub struct SMatrix {
    pub entries: Vec<Vec<QRat<TruncatedSeries>>>,
    pub metric: MetricG,
}

/// Builds the S_r matrix at the solved tau; `cap` bounds the nilpotent
/// expansion of the kernel (the truncation order suffices: every extra
/// insertion carries positive weight).
pub fn s_matrix(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    r: u32,
    cap: u32,
) -> Result<SMatrix, EngineError> {
    let ctx = &engine.ctx;
    let basis = engine.basis;
    let n = basis.rank;
    let shifted = tau.r_shift(r);
    let metric = metric_g(engine, &shifted)?;
    let mut entries = vec![vec![QRat::zero(); n]; n];
    for g in 0..n {
        // W_{g a}(q) = << phi_g /(1 - L/q), phi_a >> at the shifted tau
        let mut w_row: Vec<QRat<TruncatedSeries>> = Vec::with_capacity(n);
        for a in 0..n {
            let rest = vec![BracketSlot::input(
                1,
                InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX),
            )];
            let w = engine.kernel_bracket(
                0,
                KernelKind::LOverQ,
                &KVector::basis(ctx, n, g),
                &rest,
                &shifted,
                1,
                cap,
            )?;
            w_row.push(w);
        }
        for b in 0..n {
            let mut acc = QRat::zero();
            for (a, w) in w_row.iter().enumerate() {
                // (g_{ga} + W_{ga}(q)) G^{ab}
                let constant = TruncatedSeries::from_rat(ctx, basis.pairing[g][a].clone());
                let sum = w.add(&QRat::from_laurent(LaurentPoly::constant(constant)));
                if metric.inverse[a][b].is_zero() {
                    continue;
                }
                acc = acc.add(&sum.scale_coeff(&metric.inverse[a][b]));
            }
            entries[g][b] = acc;
        }
    }
    Ok(SMatrix { entries, metric })
}

/// The matrix of S_r^{-1}(q): delta_{g b} + sum_a << phi_g, phi_a/(1-qL) >> g^{ab}.
pub fn s_inverse_matrix(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    r: u32,
    cap: u32,
) -> Result<Vec<Vec<QRat<TruncatedSeries>>>, EngineError> {
    let ctx = &engine.ctx;
    let basis = engine.basis;
    let n = basis.rank;
    let shifted = tau.r_shift(r);
    let mut entries = vec![vec![QRat::zero(); n]; n];
    for g in 0..n {
        let mut w_row: Vec<QRat<TruncatedSeries>> = Vec::with_capacity(n);
        for a in 0..n {
            let rest = vec![BracketSlot::input(
                1,
                InsertionPoly::constant(KVector::basis(ctx, n, g), u32::MAX),
            )];
            let w = engine.kernel_bracket(
                0,
                KernelKind::QL,
                &KVector::basis(ctx, n, a),
                &rest,
                &shifted,
                1,
                cap,
            )?;
            w_row.push(w);
        }
        for b in 0..n {
            let mut acc = if g == b {
                QRat::from_laurent(LaurentPoly::constant(TruncatedSeries::one(ctx)))
            } else {
                QRat::zero()
            };
            for (a, w) in w_row.iter().enumerate() {
                if basis.pairing_inv[a][b].is_zero() {
                    continue;
                }
                acc = acc.add(&w.scale(&basis.pairing_inv[a][b]));
            }
            entries[g][b] = acc;
        }
    }
    Ok(entries)
}

/// Applies a matrix of q-rational entries to a q-carrying vector.
pub fn apply_q_matrix(
    m: &[Vec<QRat<TruncatedSeries>>],
    f: &KvFun,
) -> Result<KvFun, EngineError> {
    let n = m.len();
    let mut out = vec![QRat::zero(); n];
    for b in 0..n {
        for (g, fg) in f.iter().enumerate() {
            if fg.is_zero() || m[g][b].is_zero() {
                continue;
            }
            out[b] = out[b].add(&fg.mul(&m[g][b])?);
        }
    }
    Ok(out)
}

/// Lifts a Laurent K-vector into the q-carrying form.
pub fn kv_laurent_to_fun(l: &KvLaurent) -> KvFun {
    l.iter().map(|p| QRat::from_laurent(p.clone())).collect()
}

/// [f]_+ componentwise.
pub fn kv_project_plus(f: &KvFun) -> KvLaurent {
    f.iter().map(|c| c.project_plus()).collect()
}

/// The symplectic pairing Omega(f, g) with a constant rational pairing:
/// (Res_0 + Res_inf) (f(q), g(1/q)) dq/q.
pub fn omega_pair_kv(
    f: &KvFun,
    g: &KvFun,
    pairing: &[Vec<Rat>],
    ctx: &Arc<RingContext>,
) -> Result<TruncatedSeries, EngineError> {
    let zero = TruncatedSeries::zero(ctx);
    let mut acc = TruncatedSeries::zero(ctx);
    for (a, fa) in f.iter().enumerate() {
        if fa.is_zero() {
            continue;
        }
        for (b, gb) in g.iter().enumerate() {
            let p = &pairing[a][b];
            if p.is_zero() || gb.is_zero() {
                continue;
            }
            acc = acc.add(&omega_scalar(fa, gb, &zero)?.scale(p));
        }
    }
    Ok(acc)
}

/// The pairing with series-valued metric entries (for the barred form).
pub fn omega_pair_kv_metric(
    f: &KvFun,
    g: &KvFun,
    metric: &[Vec<TruncatedSeries>],
    ctx: &Arc<RingContext>,
) -> Result<TruncatedSeries, EngineError> {
    let zero = TruncatedSeries::zero(ctx);
    let mut acc = TruncatedSeries::zero(ctx);
    for (a, fa) in f.iter().enumerate() {
        if fa.is_zero() {
            continue;
        }
        for (b, gb) in g.iter().enumerate() {
            if metric[a][b].is_zero() || gb.is_zero() {
                continue;
            }
            acc = acc.add(&omega_scalar(fa, gb, &zero)?.mul(&metric[a][b]));
        }
    }
    Ok(acc)
}

/// The sector form: Psi^r applied after the residue, divided by r.
pub fn sector_omega(
    r: u32,
    f: &KvFun,
    g: &KvFun,
    pairing: &[Vec<Rat>],
    ctx: &Arc<RingContext>,
) -> Result<TruncatedSeries, EngineError> {
    let base = omega_pair_kv(f, g, pairing, ctx)?;
    Ok(base.adams(r).scale(&(rat_int(1) / rat_int(r as i64))))
}

/// The Adams-dressed operator Psi^k(S_1): Adams applied to every series
/// coefficient and to the basis action. Exposed separately from the shifted
/// operator R_k(S); the two differ on Novikov-carrying coefficients, and
/// the tbar transform uses the shifted one.
pub fn s_matrix_adams_dressed(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    k: u32,
    cap: u32,
) -> Result<Vec<Vec<QRat<TruncatedSeries>>>, EngineError> {
    let base = s_matrix(engine, tau, 1, cap)?;
    let basis = engine.basis;
    let am = basis.adams_matrix(k);
    let n = basis.rank;
    // Psi^k entrywise on coefficients, then conjugate by the basis action
    let mut dressed = vec![vec![QRat::zero(); n]; n];
    for g in 0..n {
        for b in 0..n {
            dressed[g][b] = base.entries[g][b].map_coeff(|s| s.adams(k));
        }
    }
    // act on the output leg by the Adams matrix
    let mut out = vec![vec![QRat::zero(); n]; n];
    for g in 0..n {
        for b in 0..n {
            let mut acc = QRat::zero();
            for (c, row) in am.iter().enumerate() {
                if row[b].is_zero() || dressed[g][c].is_zero() {
                    continue;
                }
                acc = acc.add(&dressed[g][c].scale(&row[b]));
            }
            out[g][b] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::PointGenus0Builtin;
    use crate::rat::rat;
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
    fn metric_and_inverse_at_point() {
        let (ctx, basis) = setup(3);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let m = metric_g(&engine, &tau_family(&ctx)).unwrap();
        // G = 1 + s + s^2/2 + s^3/6; check G * G^{-1} = 1
        assert_eq!(m.matrix[0][0].coeff(&[1]), rat(1, 1));
        assert_eq!(m.matrix[0][0].coeff(&[2]), rat(1, 2));
        let prod = m.matrix[0][0].mul(&m.inverse[0][0]);
        assert_eq!(prod, TruncatedSeries::one(&ctx));
    }

    #[test]
    fn s_reduces_to_identity_at_order_zero() {
        let (ctx, basis) = setup(0);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let tau = SectorFamily::new(ctx.max_cycle);
        let m = s_matrix(&engine, &tau, 1, ctx.order.max(1)).unwrap();
        let f: KvFun = vec![QRat::from_laurent(LaurentPoly::monomial(2, TruncatedSeries::one(&ctx)))];
        let out = apply_q_matrix(&m.entries, &f).unwrap();
        assert_eq!(out, f);
    }

    /// [S_1(q)(1 - q + tau_1)]_+ = 1 - q: the normalization identity that
    /// must emerge from provider data satisfying the string equation.
    #[test]
    fn s_fixes_dilaton_shift() {
        for order in [1u32, 2, 3] {
            let (ctx, basis) = setup(order);
            let builtin = PointGenus0Builtin::new(&ctx);
            let engine = BracketEngine::new(&ctx, &basis, &builtin);
            let tau = tau_family(&ctx);
            let m = s_matrix(&engine, &tau, 1, ctx.order.max(1)).unwrap();
            // f = (1 - q + s) phi_0
            let mut lp = LaurentPoly::constant(TruncatedSeries::one(&ctx).add(&TruncatedSeries::generator(&ctx, 0)));
            lp = lp.add(&LaurentPoly::monomial(1, TruncatedSeries::one(&ctx).neg()));
            let f: KvFun = vec![QRat::from_laurent(lp)];
            let out = apply_q_matrix(&m.entries, &f).unwrap();
            let plus = kv_project_plus(&out);
            let mut expected = LaurentPoly::constant(TruncatedSeries::one(&ctx));
            expected = expected.add(&LaurentPoly::monomial(1, TruncatedSeries::one(&ctx).neg()));
            assert_eq!(plus[0], expected, "order {}", order);
        }
    }

    #[test]
    fn s_inverse_composes_to_identity() {
        let (ctx, basis) = setup(3);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let tau = tau_family(&ctx);
        let cap = ctx.order.max(1);
        let s = s_matrix(&engine, &tau, 1, cap).unwrap();
        let sinv = s_inverse_matrix(&engine, &tau, 1, cap).unwrap();
        // f = q^a phi_0 for a few exponents
        for a in -2i64..=2 {
            let f: KvFun = vec![QRat::from_laurent(LaurentPoly::monomial(a, TruncatedSeries::one(&ctx)))];
            let sf = apply_q_matrix(&s.entries, &f).unwrap();
            let back = apply_q_matrix(&sinv, &sf).unwrap();
            assert_eq!(back, f, "round trip at q^{}", a);
        }
    }

    #[test]
    fn omega_antisymmetry_and_lagrangian() {
        let (ctx, _) = setup(2);
        let pairing = vec![vec![rat(1, 1)]];
        let one = TruncatedSeries::one(&ctx);
        let f: KvFun = vec![QRat::from_laurent(LaurentPoly::monomial(1, one.clone()))];
        let g: KvFun = vec![QRat::from_laurent(LaurentPoly::monomial(-2, one.clone()))];
        let v = omega_pair_kv(&f, &g, &pairing, &ctx).unwrap();
        assert!(v.is_zero());
        let h: KvFun = vec![QRat::pole_term(crate::cyclotomic::RootLabel::one(), 1, one.clone())];
        let c: KvFun = vec![QRat::from_laurent(LaurentPoly::constant(one))];
        let a = omega_pair_kv(&c, &h, &pairing, &ctx).unwrap();
        let b = omega_pair_kv(&h, &c, &pairing, &ctx).unwrap();
        assert_eq!(a.constant_term(), rat(-1, 1));
        assert_eq!(b.constant_term(), rat(1, 1));
    }

    #[test]
    fn sector_omega_is_adams_scaled() {
        let ctx = RingContext::new(
            vec![GeneratorSpec { name: "Q".into(), weight: 1, adams_rule: AdamsRule::MonomialScaling }],
            4,
            2,
        )
        .unwrap();
        let pairing = vec![vec![rat(1, 1)]];
        let one = TruncatedSeries::one(&ctx);
        let q = TruncatedSeries::generator(&ctx, 0);
        let h: KvFun = vec![QRat::pole_term(crate::cyclotomic::RootLabel::one(), 1, q)];
        let c: KvFun = vec![QRat::from_laurent(LaurentPoly::constant(one))];
        // omega = -Q; sector 2: Psi^2(-Q)/2 = -Q^2/2
        let v = sector_omega(2, &c, &h, &pairing, &ctx).unwrap();
        assert_eq!(v.coeff(&[2]), rat(-1, 2));
    }
}
