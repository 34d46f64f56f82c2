//! Genus-0 reconstruction of the descendant potential from one-point data:
//! the contraction T whose fixed point tau kills the transformed inputs at
//! q = 1, the transform tbar_r = [S_r(t_r + 1 - q)]_+ - (1 - q), the
//! two-point function recovered from tau-derivatives of one-point series,
//! and the assembly
//!
//!   F_0(t) = << t_2 - tau_2 >>_{0,1_2} + 1/2 << x_1, x_1 >>_{0,2_1},
//!   x_1 = t_1 + 1 - L,
//!
//! the transformed-input potential vanishing at the fixed point.

use std::sync::Arc;

use crate::bracket::{BracketEngine, BracketSlot, KernelKind};
use crate::error::EngineError;
use crate::insertion::InsertionPoly;
use crate::kbasis::{KBasisSpec, KVector, KvFun, KvLaurent};
use crate::qfun::{LaurentPoly, QRat};
use crate::rat::{rat, rat_int};
use crate::sector::SectorFamily;
use crate::series::{RingContext, TruncatedSeries, WEIGHT_INFINITY};
use crate::soper::{apply_q_matrix, kv_project_plus, metric_g, omega_pair_kv, s_matrix};
use num_traits::Zero;

/// An input profile: one Laurent polynomial with K-vector coefficients per
/// sector.
pub type Profile = SectorFamily<KvLaurent>;

pub fn kv_laurent_weight(l: &KvLaurent) -> u32 {
    l.iter()
        .flat_map(|p| p.terms.values())
        .map(|c| c.filtration_weight())
        .min()
        .unwrap_or(WEIGHT_INFINITY)
}

impl crate::sector::Weighted for KvLaurent {
    fn weight(&self) -> u32 {
        kv_laurent_weight(self)
    }
}

/// Evaluation of a Laurent K-vector at q = 1.
pub fn kv_laurent_at_one(l: &KvLaurent, ctx: &Arc<RingContext>) -> KVector {
    let comps = l
        .iter()
        .map(|p| {
            let mut acc = TruncatedSeries::zero(ctx);
            for c in p.terms.values() {
                acc = acc.add(c);
            }
            acc
        })
        .collect();
    KVector { comps }
}

/// The dilaton vector (1 - q) times the unit basis vector.
pub fn dilaton_vector(ctx: &Arc<RingContext>, rank: usize) -> KvLaurent {
    let mut unit = LaurentPoly::constant(TruncatedSeries::one(ctx));
    unit = unit.add(&LaurentPoly::monomial(1, TruncatedSeries::one(ctx).neg()));
    let mut out = vec![LaurentPoly::zero(); rank];
    out[0] = unit;
    out
}

fn kv_laurent_add(a: &KvLaurent, b: &KvLaurent) -> KvLaurent {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

fn kv_laurent_is_zero(a: &KvLaurent) -> bool {
    a.iter().all(|p| p.is_zero())
}

/// Per-evaluation nilpotency cap for a bracket whose declared slots carry
/// `base_marked` marked points: a valid tau family adds at most `order`
/// marked points within the truncation.
fn insertion_cap(ctx: &Arc<RingContext>, base_marked: u32) -> u32 {
    (base_marked + ctx.order).saturating_sub(2).max(1)
}

/// Expansion length for input polynomials that are later shifted by the
/// string operator: two degrees of headroom keep the shifted coefficients
/// exact through every key the truncation can demand.
fn input_cap(ctx: &Arc<RingContext>) -> u32 {
    ctx.order + 3
}

/// One application of the contraction:
/// T(tau)_r = t_r(1) + R_r[ sum_{a,b} << L D t_r(L), phi_a >> G^{ab} phi_b ].
pub fn t_step(
    engine: &BracketEngine<'_>,
    tau: &SectorFamily<KVector>,
    t: &Profile,
) -> Result<SectorFamily<KVector>, EngineError> {
    let ctx = &engine.ctx;
    let basis = engine.basis;
    let n = basis.rank;
    let mut out = SectorFamily::new(ctx.max_cycle);
    for (r, t_r) in t.sectors() {
        if kv_laurent_is_zero(t_r) {
            continue;
        }
        let mut value = kv_laurent_at_one(t_r, ctx);
        let ins = InsertionPoly::from_q_laurent(t_r, ctx, n, input_cap(ctx));
        let ldt = ins.string_d().mul_l();
        if !ldt.is_zero() {
            let shifted = tau.r_shift(r);
            let g = metric_g(engine, &shifted)?;
            let mut brackets = Vec::with_capacity(n);
            for a in 0..n {
                let b = engine.double_bracket(
                    0,
                    &[
                        BracketSlot::input(1, ldt.clone()),
                        BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX)),
                    ],
                    &shifted,
                )?;
                brackets.push(b);
            }
            for b in 0..n {
                let mut acc = TruncatedSeries::zero(ctx);
                for (a, br) in brackets.iter().enumerate() {
                    if br.is_zero() || g.inverse[a][b].is_zero() {
                        continue;
                    }
                    acc = acc.add(&br.mul(&g.inverse[a][b]));
                }
                value.comps[b] = value.comps[b].add(&acc);
            }
        }
        if !value.is_zero() {
            out.set(r, value);
        }
    }
    Ok(out)
}

/// Audit trail of the fixed-point iteration.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TauAudit {
    pub iterations: u32,
    pub residual_weights: Vec<u32>,
}

fn family_diff_weight(a: &SectorFamily<KVector>, b: &SectorFamily<KVector>, max_cycle: u32) -> u32 {
    let mut w = WEIGHT_INFINITY;
    for r in 1..=max_cycle {
        let wa = match (a.get(r), b.get(r)) {
            (None, None) => WEIGHT_INFINITY,
            (Some(x), None) | (None, Some(x)) => x.weight(),
            (Some(x), Some(y)) => x.sub(y).weight(),
        };
        w = w.min(wa);
    }
    w
}

/// Iterates T from zero; the contraction makes the residual weight strictly
/// increase, so the sequence stabilizes in at most order + 1 steps.
/// Rejects profiles whose entries sit outside the maximal ideal; the
/// contraction argument and the insertion sums both need positive weight.
pub fn validate_profile(t: &Profile) -> Result<(), EngineError> {
    for (r, v) in t.sectors() {
        if !kv_laurent_is_zero(v) && kv_laurent_weight(v) == 0 {
            return Err(EngineError::Config(format!(
                "input profile sector {} has a weight-zero coefficient; inputs must lie in the maximal ideal",
                r
            )));
        }
    }
    Ok(())
}

pub fn solve_tau(
    engine: &BracketEngine<'_>,
    t: &Profile,
) -> Result<(SectorFamily<KVector>, TauAudit), EngineError> {
    let ctx = &engine.ctx;
    validate_profile(t)?;
    let mut tau = SectorFamily::new(ctx.max_cycle);
    let mut audit = TauAudit { iterations: 0, residual_weights: Vec::new() };
    let mut last_residual = 0u32;
    for step in 0..=(ctx.order + 2) {
        let next = t_step(engine, &tau, t)?;
        let residual = family_diff_weight(&next, &tau, ctx.max_cycle);
        audit.iterations = step + 1;
        audit.residual_weights.push(residual.min(ctx.order + 1));
        if residual == WEIGHT_INFINITY || residual > ctx.order {
            return Ok((next, audit));
        }
        if step > 0 && residual <= last_residual {
            return Err(EngineError::NonContraction { step, weight: residual });
        }
        last_residual = residual;
        tau = next;
    }
    Err(EngineError::NonContraction { step: ctx.order + 2, weight: last_residual })
}

/// tbar_r = [S_r(t_r + (1-q))]_+ - (1-q) at the given tau; also returns
/// xbar_r = tbar_r + (1-q).
pub struct TbarResult {
    pub tbar: SectorFamily<KvLaurent>,
    pub xbar: SectorFamily<KvLaurent>,
}

pub fn tbar_transform(
    engine: &BracketEngine<'_>,
    t: &Profile,
    tau: &SectorFamily<KVector>,
) -> Result<TbarResult, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let cap = insertion_cap(ctx, 2);
    let dil = dilaton_vector(ctx, n);
    let mut tbar = SectorFamily::new(ctx.max_cycle);
    let mut xbar = SectorFamily::new(ctx.max_cycle);
    for r in 1..=ctx.max_cycle {
        let t_r = match t.get(r) {
            Some(v) => v.clone(),
            None => vec![LaurentPoly::zero(); n],
        };
        // sectors beyond every nonzero input still transform the dilaton
        // vector; by the normalization identity the result is zero, so skip
        // sectors with no input once the family is exhausted.
        if kv_laurent_is_zero(&t_r) && t.sectors().all(|(s, _)| s < r) {
            continue;
        }
        let x_r = kv_laurent_add(&t_r, &dil);
        let f: KvFun = x_r.iter().map(|p| QRat::from_laurent(p.clone())).collect();
        let sm = s_matrix(engine, tau, r, cap)?;
        let sf = apply_q_matrix(&sm.entries, &f)?;
        let plus = kv_project_plus(&sf);
        let mut tb: KvLaurent = Vec::with_capacity(n);
        for (i, p) in plus.iter().enumerate() {
            tb.push(p.sub(&dil[i]));
        }
        xbar.set(r, plus);
        tbar.set(r, tb);
    }
    Ok(TbarResult { tbar, xbar })
}

/// One-point data: the q-carrying kernels of the two declared sectors and
/// their tau-derivatives, all provider-backed through one-point keys only.
pub struct OnePointData<'e, 'p> {
    pub engine: &'e BracketEngine<'p>,
    pub tau: SectorFamily<KVector>,
}

impl<'e, 'p> OnePointData<'e, 'p> {
    pub fn new(engine: &'e BracketEngine<'p>, tau: SectorFamily<KVector>) -> Self {
        OnePointData { engine, tau }
    }

    /// W_r(q)[a] = << phi_a / (1 - qL) >>_{0, 1_r}: the one-point series in
    /// dual-basis components.
    pub fn kernel(&self, r: u32) -> Result<KvFun, EngineError> {
        let ctx = &self.engine.ctx;
        let n = self.engine.basis.rank;
        let cap = insertion_cap(ctx, r);
        let mut out = Vec::with_capacity(n);
        for a in 0..n {
            let w = self.engine.kernel_bracket(
                0,
                KernelKind::QL,
                &KVector::basis(ctx, n, a),
                &[],
                &self.tau,
                r,
                cap,
            )?;
            out.push(w);
        }
        Ok(out)
    }

    /// A[g][a](x) = (phi_g, phi_a) + d/d tau_1^a << phi_g / (1 - xL) >>_{0,1_1},
    /// the building block of the two-point reconstruction.
    pub fn deriv_kernel(&self) -> Result<Vec<Vec<QRat<TruncatedSeries>>>, EngineError> {
        let ctx = &self.engine.ctx;
        let n = self.engine.basis.rank;
        let cap = insertion_cap(ctx, 2);
        let mut out = vec![vec![QRat::zero(); n]; n];
        for g in 0..n {
            for a in 0..n {
                let rest = vec![BracketSlot::derivative(
                    1,
                    InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX),
                )];
                let w = self.engine.kernel_bracket(
                    0,
                    KernelKind::QL,
                    &KVector::basis(ctx, n, g),
                    &rest,
                    &self.tau,
                    1,
                    cap,
                )?;
                let constant =
                    QRat::from_laurent(LaurentPoly::constant(TruncatedSeries::from_rat(ctx, self.engine.basis.pairing[g][a].clone())));
                out[g][a] = constant.add(&w);
            }
        }
        Ok(out)
    }

    /// Extraction of a one-point bracket from the kernel:
    /// << t >>_{0,1_r} = (Res_0 + Res_inf) (W_r(q), t(1/q)) dq / q.
    pub fn extract_bracket(&self, r: u32, t: &KvLaurent) -> Result<TruncatedSeries, EngineError> {
        let ctx = &self.engine.ctx;
        let n = self.engine.basis.rank;
        let w = self.kernel(r)?;
        let f: KvFun = t.iter().map(|p| QRat::from_laurent(p.clone())).collect();
        let identity: Vec<Vec<crate::rat::Rat>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { rat_int(1) } else { rat_int(0) }).collect())
            .collect();
        omega_pair_kv(&w, &f, &identity, ctx)
    }
}

/// The reconstructed two-point function at a rational point (x, y), xy != 1:
/// << phi/(1-xL), psi/(1-yL) >>_{0,2_1}
///   = ( sum A^phi_a(x) G^{ab} A^psi_b(y) - (phi,psi) ) / (1 - xy).
pub fn two_point_from_one_point(
    one_point: &OnePointData<'_, '_>,
    x: &crate::rat::Rat,
    y: &crate::rat::Rat,
    phi: &KVector,
    psi: &KVector,
) -> Result<TruncatedSeries, EngineError> {
    let engine = one_point.engine;
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let denom = rat_int(1) - x * y;
    if num_traits::Zero::is_zero(&denom) {
        return Err(EngineError::Singularity);
    }
    let a_kernel = one_point.deriv_kernel()?;
    let g = metric_g(engine, &one_point.tau)?;
    let zero = TruncatedSeries::zero(ctx);
    // A^phi_a(x) = sum_g phi^g A[g][a](x)
    let mut a_phi = vec![TruncatedSeries::zero(ctx); n];
    let mut a_psi = vec![TruncatedSeries::zero(ctx); n];
    for a in 0..n {
        for gg in 0..n {
            if !phi.comps[gg].is_zero() {
                let v = a_kernel[gg][a].eval_rat(x, &zero)?;
                a_phi[a] = a_phi[a].add(&v.mul(&phi.comps[gg]));
            }
            if !psi.comps[gg].is_zero() {
                let v = a_kernel[gg][a].eval_rat(y, &zero)?;
                a_psi[a] = a_psi[a].add(&v.mul(&psi.comps[gg]));
            }
        }
    }
    let mut num = phi.g_pair(psi, engine.basis).neg();
    for a in 0..n {
        for b in 0..n {
            if a_phi[a].is_zero() || g.inverse[a][b].is_zero() || a_psi[b].is_zero() {
                continue;
            }
            num = num.add(&a_phi[a].mul(&g.inverse[a][b]).mul(&a_psi[b]));
        }
    }
    Ok(num.scale(&denom.recip()))
}

/// The paired residue extraction of << u, v >>_{0,2_1} from the
/// reconstructed two-point kernel:
///
///   << u, v >> = Res_x Res_y sum TP(x,y) u(x^{-1}) v(y^{-1}) dx/x dy/y.
///
/// The inner residue against the Cauchy kernel 1/(1-xy) keeps only the
/// y-Laurent part of the integrand, with y^m mapped to x^{-m}; pole parts
/// in y integrate to zero against it.
pub fn two_point_paired(
    one_point: &OnePointData<'_, '_>,
    u: &KvLaurent,
    v: &KvLaurent,
) -> Result<TruncatedSeries, EngineError> {
    let engine = one_point.engine;
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let zero = TruncatedSeries::zero(ctx);
    let a_kernel = one_point.deriv_kernel()?;
    let g = metric_g(engine, &one_point.tau)?;

    // u(x^{-1}), v(y^{-1}) componentwise
    let u_inv: Vec<LaurentPoly<TruncatedSeries>> = u.iter().map(|p| p.subst_q_power(-1)).collect();
    let v_inv: Vec<LaurentPoly<TruncatedSeries>> = v.iter().map(|p| p.subst_q_power(-1)).collect();

    // F_a(x) = sum_g u^g(x^{-1}) A[g][a](x)
    let mut f_a: Vec<QRat<TruncatedSeries>> = vec![QRat::zero(); n];
    // H_b(y) = sum_d v^d(y^{-1}) A[d][b](y); only its Laurent part survives,
    // re-expanded at x^{-1}.
    let mut h_b_at_xinv: Vec<LaurentPoly<TruncatedSeries>> = vec![LaurentPoly::zero(); n];
    for a in 0..n {
        for gg in 0..n {
            if !u_inv[gg].is_zero() {
                f_a[a] = f_a[a].add(&a_kernel[gg][a].mul_laurent(&u_inv[gg])?);
            }
        }
    }
    for b in 0..n {
        let mut h = QRat::zero();
        for dd in 0..n {
            if !v_inv[dd].is_zero() {
                h = h.add(&a_kernel[dd][b].mul_laurent(&v_inv[dd])?);
            }
        }
        h_b_at_xinv[b] = h.project_plus().subst_q_power(-1);
    }

    // main term: Res_{x in {0, inf}} sum_ab F_a(x) G^{ab} H_b(x^{-1}) dx/x
    let mut integrand = QRat::zero();
    for a in 0..n {
        for b in 0..n {
            if f_a[a].is_zero() || g.inverse[a][b].is_zero() || h_b_at_xinv[b].is_zero() {
                continue;
            }
            let m = f_a[a].mul_laurent(&h_b_at_xinv[b])?;
            integrand = integrand.add(&m.scale_coeff(&g.inverse[a][b]));
        }
    }
    // pairing correction: Res sum_{gd} g_{gd} u^g(x^{-1}) v^d(x) dx/x
    for gg in 0..n {
        for dd in 0..n {
            let p = &engine.basis.pairing[gg][dd];
            if p.is_zero() || u_inv[gg].is_zero() || v[dd].is_zero() {
                continue;
            }
            let m = QRat::from_laurent(u_inv[gg].mul(&v[dd]));
            integrand = integrand.sub(&m.scale(p));
        }
    }
    // multiply by 1/x and take Res_0 + Res_inf
    let shifted = integrand.mul(&QRat::from_laurent(LaurentPoly::monomial(-1, TruncatedSeries::one(ctx))))?;
    crate::qfun::res_zero_plus_inf(&shifted, &zero)
}

/// Result of the genus-0 assembly.
#[derive(Clone, Debug)]
pub struct F0Result {
    pub value: TruncatedSeries,
    pub tau: SectorFamily<KVector>,
    pub tbar: SectorFamily<KvLaurent>,
    pub tau_audit: TauAudit,
    pub term_sector2: TruncatedSeries,
    pub term_quadratic: TruncatedSeries,
}

/// Full reconstruction: solve for tau, transform, and assemble
/// F_0(t) = << t_2 - tau_2 >>_{0,1_2} + 1/2 << x_1, x_1 >>_{0,2_1}.
pub fn f0_assemble(engine: &BracketEngine<'_>, t: &Profile) -> Result<F0Result, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let (tau, tau_audit) = solve_tau(engine, t)?;
    let one_point = OnePointData::new(engine, tau.clone());

    // << t_2 - tau_2 >>_{0,1_2}
    let mut a2: KvLaurent = match t.get(2) {
        Some(v) => v.clone(),
        None => vec![LaurentPoly::zero(); n],
    };
    if let Some(tau2) = tau.get(2) {
        for (i, c) in tau2.comps.iter().enumerate() {
            if !c.is_zero() {
                a2[i] = a2[i].sub(&LaurentPoly::constant(c.clone()));
            }
        }
    }
    let term_sector2 = if kv_laurent_is_zero(&a2) {
        TruncatedSeries::zero(ctx)
    } else {
        one_point.extract_bracket(2, &a2)?
    };

    // 1/2 << x_1, x_1 >> with x_1 = t_1 + (1 - q)
    let x1 = kv_laurent_add(
        &t.get(1).cloned().unwrap_or_else(|| vec![LaurentPoly::zero(); n]),
        &dilaton_vector(ctx, n),
    );
    let term_quadratic = two_point_paired(&one_point, &x1, &x1)?;

    let tbar = tbar_transform(engine, t, &tau)?.tbar;
    let value = term_sector2.add(&term_quadratic.scale(&rat(1, 2)));
    Ok(F0Result { value, tau, tbar, tau_audit, term_sector2, term_quadratic })
}

/// The direct summation oracle: F_0(t) = sum over stable slot multisets of
/// prod_r 1/m_r! times the raw correlator, with no tau insertions. Shares
/// the provider with the reconstruction but walks a different key family
/// (multi-input slots instead of one-point-with-insertions).
pub fn f0_direct(engine: &BracketEngine<'_>, t: &Profile) -> Result<TruncatedSeries, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    validate_profile(t)?;
    let empty_tau: SectorFamily<KVector> = SectorFamily::new(ctx.max_cycle);
    // collect nonzero sector inputs with their weights
    let mut inputs: Vec<(u32, InsertionPoly, u32)> = Vec::new();
    for (r, t_r) in t.sectors() {
        if kv_laurent_is_zero(t_r) {
            continue;
        }
        let w = kv_laurent_weight(t_r);
        inputs.push((r, InsertionPoly::from_q_laurent(t_r, ctx, n, input_cap(ctx)), w));
    }
    let mut total = TruncatedSeries::zero(ctx);
    let mut counts = vec![0u32; inputs.len()];
    fn rec(
        engine: &BracketEngine<'_>,
        inputs: &[(u32, InsertionPoly, u32)],
        counts: &mut Vec<u32>,
        idx: usize,
        weight: u32,
        factor: crate::rat::Rat,
        empty_tau: &SectorFamily<KVector>,
        total: &mut TruncatedSeries,
    ) -> Result<(), EngineError> {
        if idx == inputs.len() {
            let mut slots = Vec::new();
            for (i, &(r, ref ins, _)) in inputs.iter().enumerate() {
                for _ in 0..counts[i] {
                    slots.push(BracketSlot::derivative(r, ins.clone()));
                }
            }
            let v = engine.double_bracket(0, &slots, empty_tau)?;
            if !v.is_zero() {
                *total = total.add(&v.scale(&factor));
            }
            return Ok(());
        }
        let (_, _, w) = inputs[idx];
        let mut m = 0u32;
        loop {
            if weight + m * w > engine.ctx.order {
                break;
            }
            counts[idx] = m;
            let f = factor.clone() / crate::rat::factorial(m);
            rec(engine, inputs, counts, idx + 1, weight + m * w, f, empty_tau, total)?;
            m += 1;
        }
        counts[idx] = 0;
        Ok(())
    }
    rec(engine, &inputs, &mut counts, 0, 0, rat_int(1), &empty_tau, &mut total)?;
    Ok(total)
}

/// Exact derivative of the fixed point in the constant direction of one
/// sector: solves the linearized fixed-point equation
/// dtau = dT[dtau] + e_{r, comp} by iteration (each application of the
/// linearization raises filtration weight).
pub fn solve_tau_derivative(
    engine: &BracketEngine<'_>,
    t: &Profile,
    tau: &SectorFamily<KVector>,
    sector: u32,
    comp: usize,
) -> Result<SectorFamily<KVector>, EngineError> {
    let ctx = &engine.ctx;
    let n = engine.basis.rank;
    let mut e = SectorFamily::new(ctx.max_cycle);
    e.set(sector, KVector::basis(ctx, n, comp));
    let mut cur = e.clone();
    for _ in 0..=(ctx.order + 2) {
        let image = t_linearized(engine, t, tau, &cur)?;
        let mut next = e.clone();
        for (r, v) in image.sectors() {
            let merged = match next.get(r) {
                Some(x) => x.add(v),
                None => v.clone(),
            };
            next.set(r, merged);
        }
        if families_equal(&next, &cur, ctx.max_cycle) {
            return Ok(next);
        }
        cur = next;
    }
    Err(EngineError::NonContraction { step: ctx.order + 2, weight: 0 })
}

fn families_equal(a: &SectorFamily<KVector>, b: &SectorFamily<KVector>, max_cycle: u32) -> bool {
    family_diff_weight(a, b, max_cycle) == WEIGHT_INFINITY
}

/// Directional derivative of T in tau: the brackets gain one
/// prefactor-free slot and the metric inverse differentiates by
/// d G^{-1} = -G^{-1} (dG) G^{-1}.
fn t_linearized(
    engine: &BracketEngine<'_>,
    t: &Profile,
    tau: &SectorFamily<KVector>,
    dir: &SectorFamily<KVector>,
) -> Result<SectorFamily<KVector>, EngineError> {
    let ctx = &engine.ctx;
    let basis: &KBasisSpec = engine.basis;
    let n = basis.rank;
    let mut out = SectorFamily::new(ctx.max_cycle);
    for (r, t_r) in t.sectors() {
        if kv_laurent_is_zero(t_r) {
            continue;
        }
        let ins = InsertionPoly::from_q_laurent(t_r, ctx, n, input_cap(ctx));
        let ldt = ins.string_d().mul_l();
        if ldt.is_zero() {
            continue;
        }
        let shifted = tau.r_shift(r);
        let dir_shifted = dir.r_shift(r);
        if dir_shifted.is_empty() {
            continue;
        }
        let g = metric_g(engine, &shifted)?;
        let mut brackets = Vec::with_capacity(n);
        let mut dbrackets = Vec::with_capacity(n);
        for a in 0..n {
            let slots = [
                BracketSlot::input(1, ldt.clone()),
                BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX)),
            ];
            brackets.push(engine.double_bracket(0, &slots, &shifted)?);
            dbrackets.push(engine.double_bracket_tau_deriv(0, &slots, &shifted, &dir_shifted)?);
        }
        // dG_{ab}
        let mut dg = vec![vec![TruncatedSeries::zero(ctx); n]; n];
        for a in 0..n {
            for b in a..n {
                let slots = [
                    BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, a), u32::MAX)),
                    BracketSlot::input(1, InsertionPoly::constant(KVector::basis(ctx, n, b), u32::MAX)),
                ];
                // dG is always multiplied by a weight >= 1 bracket below
                let d = engine.double_bracket_tau_deriv_with_floor(0, &slots, &shifted, &dir_shifted, 1)?;
                dg[a][b] = d.clone();
                dg[b][a] = d;
            }
        }
        // dGinv = -Ginv dG Ginv
        let mut dginv = vec![vec![TruncatedSeries::zero(ctx); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = TruncatedSeries::zero(ctx);
                for a in 0..n {
                    for b in 0..n {
                        if g.inverse[i][a].is_zero() || dg[a][b].is_zero() || g.inverse[b][j].is_zero() {
                            continue;
                        }
                        acc = acc.add(&g.inverse[i][a].mul(&dg[a][b]).mul(&g.inverse[b][j]));
                    }
                }
                dginv[i][j] = acc.neg();
            }
        }
        let mut value = KVector::zero(ctx, n);
        for b in 0..n {
            let mut acc = TruncatedSeries::zero(ctx);
            for a in 0..n {
                if !dbrackets[a].is_zero() && !g.inverse[a][b].is_zero() {
                    acc = acc.add(&dbrackets[a].mul(&g.inverse[a][b]));
                }
                if !brackets[a].is_zero() && !dginv[a][b].is_zero() {
                    acc = acc.add(&brackets[a].mul(&dginv[a][b]));
                }
            }
            value.comps[b] = acc;
        }
        if !value.is_zero() {
            out.set(r, value);
        }
    }
    Ok(out)
}
