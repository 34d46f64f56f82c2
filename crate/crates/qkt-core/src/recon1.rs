//! The genus-1 evaluator for the point target:
//!
//!   F_1(t) = F_1(tau) + 1/24 log det(d tau_1 / d t_{1,0})
//!            + F^tw(tbar^new) - F^tw(tbar^fake)
//!            + sum_{M in {2,3,4,6}} (Res_0 + Res_inf) P_M(x) dx/x,
//!
//! with the twisted residue functional
//!
//!   F^tw(tb) = (Res_0 + Res_1 + Res_inf)
//!                sum_{n=0}^{3} 1/(n+1)! f_{n+1}(x) tb(1/x)^{n+1} dx/x,
//!
//! the fake one-point functions f_{n+1} and the pure-tau potential F_1(tau)
//! ingested as tables, and the permutation-sector integrands P_M assembled
//! from table rows over the cyclotomic denominators of each sector.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::bracket::{BracketEngine, BracketSlot, KernelKind};
use crate::correlator::FileTable;
use crate::error::EngineError;
use crate::insertion::InsertionPoly;
use crate::kbasis::{KVector, KvLaurent};
use crate::qfun::{LaurentPoly, QRat};
use crate::rat::{factorial, rat, rat_int, Rat};
use crate::recon0::{solve_tau_derivative, Profile};
use crate::sector::SectorFamily;
use crate::series::{RingContext, TruncatedSeries};
use crate::cyclotomic::RootLabel;
use num_traits::Zero;

/// The denominator polynomial of the order-M sector: the product of
/// (1 - x zeta) over the primitive M-th roots of unity, with rational
/// coefficients (coefficient index = power of x).
pub fn sector_denominator(m: u32) -> Vec<Rat> {
    match m {
        2 => vec![rat_int(1), rat_int(1)],              // 1 + x
        3 => vec![rat_int(1), rat_int(1), rat_int(1)],  // 1 + x + x^2
        4 => vec![rat_int(1), rat_int(0), rat_int(1)],  // 1 + x^2
        6 => vec![rat_int(1), rat_int(-1), rat_int(1)], // 1 - x + x^2
        _ => panic!("permutation sectors exist only for M in {{2,3,4,6}}"),
    }
}

/// The dilaton-removal factor of the order-M sector with l extra cycles.
pub fn perm_dilaton_factor(m: u32, ell: u32) -> Rat {
    match m {
        2 => rat_int(4 + 2 * ell as i64),
        3 => rat_int(3 + 3 * ell as i64),
        4 => rat_int(4 + 4 * ell as i64),
        6 => rat_int(6 + 6 * ell as i64),
        _ => panic!("permutation sectors exist only for M in {{2,3,4,6}}"),
    }
}

/// The overall prefactor of each sector's residue term.
pub fn perm_prefactor(m: u32) -> Rat {
    match m {
        2 => rat(1, 24),
        3 => rat(1, 6),
        4 => rat(1, 4),
        6 => rat(1, 6),
        _ => panic!("permutation sectors exist only for M in {{2,3,4,6}}"),
    }
}

/// One row of a permutation-sector bracket table: the x-dependence of the
/// bracket with `ell` extra M-cycles carrying bare insertions, stored as
/// num(x) / D_M(x)^den_pow with series-valued numerator coefficients.
#[derive(Clone, Debug)]
pub struct PermRow {
    pub ell: u32,
    /// Marks the companion row with one more M-cycle carrying the
    /// dilaton-type insertion; related to the base row by the rewrite
    /// factor and used only for consistency gating.
    pub trailing_dilaton: bool,
    pub den_pow: u32,
    pub num: LaurentPoly<TruncatedSeries>,
}

/// All rows of one sector.
#[derive(Clone, Debug, Default)]
pub struct PermBlock {
    pub rows: Vec<PermRow>,
}

impl PermBlock {
    pub fn get(&self, ell: u32, trailing: bool) -> Option<&PermRow> {
        self.rows.iter().find(|r| r.ell == ell && r.trailing_dilaton == trailing)
    }
}

/// The ingested genus-1 point-target data.
pub struct Genus1Tables {
    /// f_{n+1}(x) for n = 0..3: rational functions with poles in {0, 1, inf}.
    pub fake: Vec<QRat<TruncatedSeries>>,
    /// Per-sector bracket rows.
    pub perm: BTreeMap<u32, PermBlock>,
    /// Pure-tau genus-1 correlator rows (a correlator table with g = 1).
    pub f1_tau: FileTable,
    pub provenance: String,
}

/// Rewrites a key with one extra trailing dilaton-type M-cycle to the
/// base row scaled by the sector factor; the generator half of the
/// consistency contract.
pub fn perm_rewrite_generate(m: u32, base: &PermRow) -> PermRow {
    PermRow {
        ell: base.ell,
        trailing_dilaton: true,
        den_pow: base.den_pow,
        num: base.num.scale(&perm_dilaton_factor(m, base.ell)),
    }
}

/// Checks every trailing row of a block against the factor-scaled base row;
/// returns counterexample strings.
pub fn perm_rewrite_verify(m: u32, block: &PermBlock) -> Vec<String> {
    let mut failures = Vec::new();
    for row in block.rows.iter().filter(|r| r.trailing_dilaton) {
        match block.get(row.ell, false) {
            Some(base) => {
                let expected = perm_rewrite_generate(m, base);
                if expected.den_pow != row.den_pow || expected.num != row.num {
                    failures.push(format!(
                        "sector {} rewrite mismatch at ell = {}: trailing row differs from factor {} times the base row",
                        m,
                        row.ell,
                        perm_dilaton_factor(m, row.ell)
                    ));
                }
            }
            None => failures.push(format!(
                "sector {} has a trailing row at ell = {} with no base row to compare",
                m, row.ell
            )),
        }
    }
    failures
}

/// tbar^fake(q) = tau_1 + << 1/(1-qL) >>_{0,1_1} and
/// tbar^new(q) = tbar_1(q) + << 1/(1-qL), tbar_1(L) >>_{0,2_1} + tbar^fake(q),
/// for the point target (rank one).
pub struct TbarFakeNew {
    pub fake: QRat<TruncatedSeries>,
    pub new: QRat<TruncatedSeries>,
}

pub fn tbar_fake_new(
    engine: &BracketEngine<'_>,
    tbar1: &LaurentPoly<TruncatedSeries>,
    tau: &SectorFamily<KVector>,
) -> Result<TbarFakeNew, EngineError> {
    let ctx = &engine.ctx;
    if engine.basis.rank != 1 {
        return Err(EngineError::Config("the genus-1 evaluator handles the point target (rank one)".into()));
    }
    let cap1 = (1 + ctx.order).saturating_sub(2).max(1);
    let cap2 = ctx.order.max(1);
    let unit = KVector::basis(ctx, 1, 0);
    let tau1 = tau
        .get(1)
        .map(|v| v.comps[0].clone())
        .unwrap_or_else(|| TruncatedSeries::zero(ctx));
    let one_pt = engine.kernel_bracket(0, KernelKind::QL, &unit, &[], tau, 1, cap1)?;
    let fake = one_pt.add(&QRat::from_laurent(LaurentPoly::constant(tau1)));

    let new = if tbar1.is_zero() {
        fake.clone()
    } else {
        let ins = InsertionPoly::from_q_laurent(&vec![tbar1.clone()], ctx, 1, cap2 + 2);
        let two_pt = engine.kernel_bracket(
            0,
            KernelKind::QL,
            &unit,
            &[BracketSlot::input(1, ins)],
            tau,
            1,
            cap2,
        )?;
        QRat::from_laurent(tbar1.clone()).add(&two_pt).add(&fake)
    };
    Ok(TbarFakeNew { fake, new })
}

/// The twisted residue functional against the ingested fake one-point
/// functions; the assembled integrand must stay inside the {0, 1, inf}
/// pole locus or the tables are malformed.
pub fn ftw_eval(
    tbar: &QRat<TruncatedSeries>,
    tables: &Genus1Tables,
    ctx: &Arc<RingContext>,
) -> Result<TruncatedSeries, EngineError> {
    let zero = TruncatedSeries::zero(ctx);
    if tables.fake.len() < 4 {
        return Err(EngineError::Format("fake table must carry the one- to four-point functions".into()));
    }
    let tb_inv = tbar.subst_inv_q()?;
    let mut total = TruncatedSeries::zero(ctx);
    let mut power = QRat::from_laurent(LaurentPoly::constant(TruncatedSeries::one(ctx)));
    for n in 0..4u32 {
        power = power.mul(&tb_inv)?;
        if power.is_zero() {
            break;
        }
        let f = &tables.fake[n as usize];
        let integrand = f.mul(&power)?.mul(&QRat::from_laurent(LaurentPoly::monomial(
            -1,
            TruncatedSeries::one(ctx),
        )))?;
        for (root, _) in integrand.poles.keys() {
            if !root.is_one() {
                return Err(EngineError::Format(format!(
                    "twisted integrand has a pole at {} outside {{0, 1, inf}}",
                    root
                )));
            }
        }
        let mut res = integrand.residue_at_zero(&zero);
        res = res.add(&integrand.residue_at_root(RootLabel::one(), &zero)?);
        res = res.add(&integrand.residue_at_infinity(&zero)?);
        total = total.add(&res.scale(&(rat_int(1) / factorial(n + 1))));
    }
    Ok(total)
}

/// Taylor data of the transformed inputs at q = 1 used by the sector terms.
#[derive(Clone, Debug)]
pub struct EdgeCoefficients {
    /// t_{r,0} = t_r(1)
    pub t_at_one: BTreeMap<u32, TruncatedSeries>,
    /// tbar_{r,1}: linear coefficient of tbar_r at q = 1
    pub tbar_linear: BTreeMap<u32, TruncatedSeries>,
    /// tbar_{2,2} = 1/2 tbar_2''(1)
    pub tbar2_second: TruncatedSeries,
    /// xbar_r = (1 - q) + tbar_r
    pub xbar: BTreeMap<u32, LaurentPoly<TruncatedSeries>>,
}

pub fn edge_coefficients(
    ctx: &Arc<RingContext>,
    t: &Profile,
    tbar: &SectorFamily<KvLaurent>,
) -> Result<EdgeCoefficients, EngineError> {
    let zero = TruncatedSeries::zero(ctx);
    let mut t_at_one = BTreeMap::new();
    for (r, v) in t.sectors() {
        t_at_one.insert(r, crate::recon0::kv_laurent_at_one(v, ctx).comps[0].clone());
    }
    let mut tbar_linear = BTreeMap::new();
    let mut xbar = BTreeMap::new();
    let mut tbar2_second = TruncatedSeries::zero(ctx);
    let dil = crate::recon0::dilaton_vector(ctx, 1);
    for r in 1..=ctx.max_cycle {
        let tb = match tbar.get(r) {
            Some(v) => v[0].clone(),
            None => LaurentPoly::zero(),
        };
        let expansion = QRat::from_laurent(tb.clone()).expand_at_one(2, &zero)?;
        if !expansion[0].is_zero() {
            return Err(EngineError::Internal(format!(
                "tbar_{}(1) must vanish before the genus-1 terms are formed",
                r
            )));
        }
        tbar_linear.insert(r, expansion[1].clone());
        if r == 2 {
            tbar2_second = expansion[2].clone();
        }
        xbar.insert(r, tb.add(&dil[0]));
    }
    Ok(EdgeCoefficients { t_at_one, tbar_linear, tbar2_second, xbar })
}

/// Assembles the sector-M bracket as a function of x at the given tau:
/// B_M(x) = sum_ell tau_M^ell / ell! row_ell(x). Rows demanded by a nonzero
/// tau_M power and absent from the table are a data-incompleteness error.
pub fn perm_bracket_fn(
    tables: &Genus1Tables,
    m: u32,
    tau: &SectorFamily<KVector>,
    ctx: &Arc<RingContext>,
) -> Result<Vec<(u32, LaurentPoly<TruncatedSeries>)>, EngineError> {
    let block = tables
        .perm
        .get(&m)
        .ok_or_else(|| EngineError::DataIncomplete { key: format!("g1 perm sector {}", m) })?;
    let tau_m = tau
        .get(m)
        .map(|v| v.comps[0].clone())
        .unwrap_or_else(|| TruncatedSeries::zero(ctx));
    let mut out: Vec<(u32, LaurentPoly<TruncatedSeries>)> = Vec::new();
    let mut tau_pow = TruncatedSeries::one(ctx);
    let mut ell = 0u32;
    loop {
        if !tau_pow.is_zero() {
            match block.get(ell, false) {
                Some(row) => {
                    let weight = tau_pow.scale(&(rat_int(1) / factorial(ell)));
                    let num = row.num.scale_coeff(&weight);
                    if !num.is_zero() {
                        out.push((row.den_pow, num));
                    }
                }
                None => {
                    return Err(EngineError::DataIncomplete {
                        key: format!("g1 perm sector {} row ell = {}", m, ell),
                    })
                }
            }
        }
        ell += 1;
        tau_pow = tau_pow.mul(&tau_m);
        if tau_pow.is_zero() {
            break;
        }
        if ell > ctx.order + 2 {
            break;
        }
    }
    Ok(out)
}

/// (Res_0 + Res_inf) of num(x) / den(x)^pow dx for a denominator with
/// den(0) = 1, computed by exact series expansion at both ends.
pub fn res_zero_inf_block(
    num: &LaurentPoly<TruncatedSeries>,
    den: &[Rat],
    pow: u32,
    ctx: &Arc<RingContext>,
) -> TruncatedSeries {
    let mut total = TruncatedSeries::zero(ctx);
    if num.is_zero() {
        return total;
    }
    let min_exp = *num.terms.keys().next().unwrap();
    let max_exp = *num.terms.keys().last().unwrap();
    // Res_0: coefficient of x^{-1} in num * den^{-pow}; den^{-pow} is a
    // power series with rational coefficients.
    if min_exp <= -1 {
        let need = (-1 - min_exp) as usize;
        let inv = series_inverse_pow(den, pow, need);
        for (e, c) in &num.terms {
            let j = -1 - e;
            if j >= 0 && (j as usize) < inv.len() {
                total = total.add(&c.scale(&inv[j as usize]));
            }
        }
    }
    // Res_inf via x = 1/u: -(coefficient of u^{-1}) of num(1/u) den(1/u)^{-pow} / u^2 du
    // den(1/u)^{-pow} = u^{D pow} denrev(u)^{-pow}, D = deg den, denrev the
    // reversed polynomial (denrev(0) = lead coefficient, nonzero).
    let deg = den.len() - 1;
    let dp = (deg as i64) * (pow as i64);
    let max_j = max_exp - dp + 1;
    if max_j >= 0 {
        let denrev: Vec<Rat> = den.iter().rev().cloned().collect();
        let inv = series_inverse_pow(&denrev, pow, max_j as usize);
        for (e, c) in &num.terms {
            // x = 1/u turns the term into c * u^{dp - e - 2} denrev(u)^{-pow};
            // the u^{-1} coefficient needs j = e - dp + 1.
            let j = e - dp + 1;
            if j >= 0 && (j as usize) < inv.len() {
                total = total.sub(&c.scale(&inv[j as usize]));
            }
        }
    }
    total
}

/// Power series coefficients of den(x)^{-pow} up to degree `upto`
/// (inclusive); den(0) must be invertible.
fn series_inverse_pow(den: &[Rat], pow: u32, upto: usize) -> Vec<Rat> {
    use num_traits::One;
    assert!(!den.is_empty() && !den[0].is_zero(), "denominator must not vanish at the expansion point");
    // invert once, then raise to the power by repeated multiplication
    let mut inv = vec![Rat::zero(); upto + 1];
    inv[0] = den[0].clone().recip();
    for k in 1..=upto {
        let mut acc = Rat::zero();
        for j in 1..=k.min(den.len() - 1) {
            acc += &den[j] * &inv[k - j];
        }
        inv[k] = -acc * den[0].clone().recip();
    }
    let mut out = vec![Rat::zero(); upto + 1];
    out[0] = Rat::one();
    for _ in 0..pow {
        let mut next = vec![Rat::zero(); upto + 1];
        for i in 0..=upto {
            if out[i].is_zero() {
                continue;
            }
            for j in 0..=(upto - i) {
                if inv[j].is_zero() {
                    continue;
                }
                let prod = &out[i] * &inv[j];
                next[i + j] += prod;
            }
        }
        out = next;
    }
    out
}

/// The order-M permutation term: (Res_0 + Res_inf) of
/// prefactor * B_M(x) * weights_M(x) dx/x.
pub fn fperm_eval(
    m: u32,
    tables: &Genus1Tables,
    edge: &EdgeCoefficients,
    jacobians: &BTreeMap<u32, TruncatedSeries>,
    tau: &SectorFamily<KVector>,
    ctx: &Arc<RingContext>,
) -> Result<TruncatedSeries, EngineError> {
    let xbar_at = |r: u32, power: i64| -> LaurentPoly<TruncatedSeries> {
        match edge.xbar.get(&r) {
            Some(p) => p.subst_q_power(power),
            None => LaurentPoly::zero(),
        }
    };
    let j = |r: u32| -> TruncatedSeries {
        jacobians
            .get(&r)
            .cloned()
            .unwrap_or_else(|| TruncatedSeries::one(ctx))
    };
    // the scalar weight as a Laurent polynomial in x
    let weight: LaurentPoly<TruncatedSeries> = match m {
        2 => {
            let x4 = xbar_at(1, -1).pow(4, &TruncatedSeries::one(ctx));
            let j2 = j(2);
            let j2sq = j2.mul(&j2);
            // 1 + J_2 tbar_{2,2} (-x^{-1} - 1)
            let mut corr = LaurentPoly::constant(TruncatedSeries::one(ctx));
            let c = j2.mul(&edge.tbar2_second);
            corr = corr.add(&LaurentPoly::monomial(-1, c.neg()));
            corr = corr.add(&LaurentPoly::constant(c.neg()));
            x4.scale_coeff(&j2sq).mul(&corr)
        }
        3 => xbar_at(1, -1).pow(3, &TruncatedSeries::one(ctx)).scale_coeff(&j(3)),
        4 => xbar_at(1, -1)
            .pow(2, &TruncatedSeries::one(ctx))
            .mul(&xbar_at(2, -2))
            .scale_coeff(&j(4)),
        6 => xbar_at(1, -1)
            .mul(&xbar_at(2, -2))
            .mul(&xbar_at(3, -3))
            .scale_coeff(&j(6)),
        _ => return Err(EngineError::Config("permutation sectors are M in {2,3,4,6}".into())),
    };
    if weight.is_zero() {
        return Ok(TruncatedSeries::zero(ctx));
    }
    let rows = perm_bracket_fn(tables, m, tau, ctx)?;
    let den = sector_denominator(m);
    let mut total = TruncatedSeries::zero(ctx);
    for (pow, num) in rows {
        // integrand block: num(x) * weight(x) / (x * den^pow)
        let full = num.mul(&weight).mul(&LaurentPoly::monomial(-1, TruncatedSeries::one(ctx)));
        total = total.add(&res_zero_inf_block(&full, &den, pow, ctx));
    }
    Ok(total.scale(&perm_prefactor(m)))
}

/// The assembled genus-1 value and its audit pieces.
#[derive(Clone, Debug)]
pub struct F1Result {
    pub value: TruncatedSeries,
    pub f1_tau: TruncatedSeries,
    pub log_term: TruncatedSeries,
    pub ftw_new: TruncatedSeries,
    pub ftw_fake: TruncatedSeries,
    pub fperm: BTreeMap<u32, TruncatedSeries>,
    pub tau: SectorFamily<KVector>,
}

/// Full genus-1 pipeline for the point target; `engine` supplies the
/// genus-0 data (for tau, the transform, and the correction kernels).
pub fn f1_assemble(
    engine: &BracketEngine<'_>,
    t: &Profile,
    tables: &Genus1Tables,
) -> Result<F1Result, EngineError> {
    let ctx = &engine.ctx;
    if engine.basis.rank != 1 {
        return Err(EngineError::Config("the genus-1 evaluator handles the point target (rank one)".into()));
    }
    let (tau, _audit) = crate::recon0::solve_tau(engine, t)?;
    let transform = crate::recon0::tbar_transform(engine, t, &tau)?;
    let edge = edge_coefficients(ctx, t, &transform.tbar)?;

    // F_1(tau): the pure-tau genus-1 potential from its table
    let g1_engine = BracketEngine::new(ctx, engine.basis, &tables.f1_tau);
    let f1_tau = g1_engine.double_bracket(1, &[], &tau)?;

    // jacobians d tau_r / d t_{r,0} for every sector the terms consume
    let mut jacobians = BTreeMap::new();
    for r in 1..=ctx.max_cycle {
        let d = solve_tau_derivative(engine, t, &tau, r, 0)?;
        let val = d
            .get(r)
            .map(|v| v.comps[0].clone())
            .unwrap_or_else(|| TruncatedSeries::zero(ctx));
        jacobians.insert(r, val);
    }
    let j1 = jacobians.get(&1).cloned().unwrap_or_else(|| TruncatedSeries::one(ctx));
    use num_traits::One;
    if !j1.constant_term().is_one() {
        return Err(EngineError::Internal(
            "d tau_1/d t_{1,0} is not 1 modulo the maximal ideal; filtration assumptions violated".into(),
        ));
    }
    let log_term = j1.log_unit()?.scale(&rat(1, 24));

    // twisted terms
    let tbar1 = transform
        .tbar
        .get(1)
        .map(|v| v[0].clone())
        .unwrap_or_else(LaurentPoly::zero);
    let fakes = tbar_fake_new(engine, &tbar1, &tau)?;
    let ftw_new = ftw_eval(&fakes.new, tables, ctx)?;
    let ftw_fake = ftw_eval(&fakes.fake, tables, ctx)?;

    // permutation sectors
    let mut fperm = BTreeMap::new();
    let mut perm_total = TruncatedSeries::zero(ctx);
    for m in [2u32, 3, 4, 6] {
        if m > ctx.max_cycle {
            continue;
        }
        let v = fperm_eval(m, tables, &edge, &jacobians, &tau, ctx)?;
        perm_total = perm_total.add(&v);
        fperm.insert(m, v);
    }

    let value = f1_tau
        .add(&log_term)
        .add(&ftw_new)
        .sub(&ftw_fake)
        .add(&perm_total);
    Ok(F1Result { value, f1_tau, log_term, ftw_new, ftw_fake, fperm, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{Coverage, Degree, PointGenus0Builtin};
    use crate::kbasis::KBasisSpec;
    use crate::series::{AdamsRule, GeneratorSpec};

    fn setup(order: u32, max_cycle: u32) -> (Arc<RingContext>, KBasisSpec) {
        let ctx = RingContext::new(
            vec![GeneratorSpec { name: "s".into(), weight: 1, adams_rule: AdamsRule::Fixed }],
            order,
            max_cycle,
        )
        .unwrap();
        (ctx, KBasisSpec::point())
    }

    /// Fake one-point functions derived from the small intersection data:
    /// f_1(x) = chi(O)/(1-x) + chi(L-1) x/(1-x)^2 with chi(O) = 1 and
    /// chi(L-1) = 1/24 on the one-pointed genus-1 space; the higher
    /// functions are structural fixtures for the tests.
    fn fixture_tables(ctx: &Arc<RingContext>) -> Genus1Tables {
        let one = RootLabel::one();
        let ts = |r: Rat| TruncatedSeries::from_rat(ctx, r);
        let f1 = QRat::pole_term(one, 1, ts(rat_int(1)))
            .add(&QRat::from_laurent(LaurentPoly::monomial(1, ts(rat(1, 24)))).mul(&QRat::pole_term(one, 2, ts(rat_int(1)))).unwrap());
        let f2 = QRat::pole_term(one, 1, ts(rat(1, 24)));
        let f3 = QRat::pole_term(one, 2, ts(rat(1, 48)));
        let f4 = QRat::pole_term(one, 1, ts(rat(1, 96)));
        let mut perm = BTreeMap::new();
        for m in [2u32, 3, 4, 6] {
            let base = PermRow {
                ell: 0,
                trailing_dilaton: false,
                den_pow: 1,
                num: LaurentPoly::constant(ts(rat_int(1))),
            };
            let trailing = perm_rewrite_generate(m, &base);
            perm.insert(m, PermBlock { rows: vec![base, trailing] });
        }
        let f1_tau = FileTable {
            name: "f1-tau-fixture".into(),
            ctx: ctx.clone(),
            values: {
                let mut v = std::collections::BTreeMap::new();
                // <1>_{1,1_1} = chi(O) = 1; <1,1>_{1,2_1} = 1 (fixture)
                v.insert(
                    crate::correlator::RawKey::new(
                        1,
                        Degree::new(),
                        vec![crate::correlator::SlotKey { cycle: 1, lm1_power: 0, basis: 0 }],
                    ),
                    TruncatedSeries::one(ctx),
                );
                v
            },
            coverage: vec![Coverage::parse_cycles(1, "*_1", 8, vec![Degree::new()]).unwrap()],
            degree_list: vec![Degree::new()],
            provenance: "fixture".into(),
        };
        Genus1Tables { fake: vec![f1, f2, f3, f4], perm, f1_tau, provenance: "fixture".into() }
    }

    #[test]
    fn rewrite_factors() {
        assert_eq!(perm_dilaton_factor(2, 0), rat_int(4));
        assert_eq!(perm_dilaton_factor(3, 1), rat_int(6));
        assert_eq!(perm_dilaton_factor(4, 2), rat_int(12));
        assert_eq!(perm_dilaton_factor(6, 0), rat_int(6));
    }

    #[test]
    fn rewrite_verify_accepts_generated_and_rejects_corrupt() {
        let (ctx, _) = setup(2, 6);
        let ts = TruncatedSeries::one(&ctx);
        let base = PermRow { ell: 0, trailing_dilaton: false, den_pow: 1, num: LaurentPoly::constant(ts.clone()) };
        let good = perm_rewrite_generate(2, &base);
        let block = PermBlock { rows: vec![base.clone(), good] };
        assert!(perm_rewrite_verify(2, &block).is_empty());
        let bad = PermRow { ell: 0, trailing_dilaton: true, den_pow: 1, num: LaurentPoly::constant(ts.scale(&rat_int(5))) };
        let block2 = PermBlock { rows: vec![base, bad] };
        assert_eq!(perm_rewrite_verify(2, &block2).len(), 1);
    }

    #[test]
    fn residue_block_matches_partial_fractions() {
        // (Res_0 + Res_inf) (1 - x^{-1})^4 / (x (1+x)) dx against the
        // in-algebra route through the canonical pole basis.
        let (ctx, _) = setup(2, 6);
        let one = TruncatedSeries::one(&ctx);
        let mut w = LaurentPoly::constant(one.clone());
        w = w.add(&LaurentPoly::monomial(-1, one.neg()));
        let w4 = w.pow(4, &TruncatedSeries::one(&ctx));
        let full = w4.mul(&LaurentPoly::monomial(-1, TruncatedSeries::one(&ctx)));
        let den = sector_denominator(2);
        let direct = res_zero_inf_block(&full, &den, 1, &ctx);
        // independent route: multiply by the canonical (1+x)^{-1} pole term
        let minus_one = RootLabel::minus_one();
        let pole = QRat::pole_term(minus_one, 1, TruncatedSeries::one(&ctx));
        let integrand = pole.mul(&QRat::from_laurent(full)).unwrap();
        let via_poles = crate::qfun::res_zero_plus_inf(&integrand, &TruncatedSeries::zero(&ctx)).unwrap();
        assert_eq!(direct, via_poles);
    }

    #[test]
    fn ftw_difference_vanishes_when_tbar1_zero() {
        let (ctx, basis) = setup(2, 6);
        let builtin = PointGenus0Builtin::new(&ctx);
        let engine = BracketEngine::new(&ctx, &basis, &builtin);
        let tables = fixture_tables(&ctx);
        let mut tau = SectorFamily::new(ctx.max_cycle);
        let mut v = KVector::zero(&ctx, 1);
        v.comps[0] = TruncatedSeries::generator(&ctx, 0);
        tau.set(1, v);
        let fakes = tbar_fake_new(&engine, &LaurentPoly::zero(), &tau).unwrap();
        assert_eq!(fakes.fake, fakes.new);
        let a = ftw_eval(&fakes.new, &tables, &ctx).unwrap();
        let b = ftw_eval(&fakes.fake, &tables, &ctx).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fperm_vanishes_with_zero_weights() {
        let (ctx, _) = setup(2, 6);
        let tables = fixture_tables(&ctx);
        let edge = EdgeCoefficients {
            t_at_one: BTreeMap::new(),
            tbar_linear: BTreeMap::new(),
            tbar2_second: TruncatedSeries::zero(&ctx),
            xbar: BTreeMap::new(),
        };
        let tau = SectorFamily::new(ctx.max_cycle);
        for m in [2u32, 3, 4, 6] {
            let v = fperm_eval(m, &tables, &edge, &BTreeMap::new(), &tau, &ctx).unwrap();
            assert!(v.is_zero(), "sector {}", m);
        }
    }

    #[test]
    fn fperm_constant_bracket_smoke() {
        // bracket replaced by the constant 1, xbar_1 = 1 - q, J_2 = 1,
        // tbar_{2,2} = 0: integrand (1/24)(1 - x^{-1})^4 / x dx, residues
        // cross-checked against the residue-theorem route above.
        let (ctx, _) = setup(2, 6);
        let mut tables = fixture_tables(&ctx);
        // constant bracket: num = 1, den_pow = 0
        tables.perm.insert(
            2,
            PermBlock {
                rows: vec![PermRow {
                    ell: 0,
                    trailing_dilaton: false,
                    den_pow: 0,
                    num: LaurentPoly::constant(TruncatedSeries::one(&ctx)),
                }],
            },
        );
        let one = TruncatedSeries::one(&ctx);
        let mut xbar1 = LaurentPoly::constant(one.clone());
        xbar1 = xbar1.add(&LaurentPoly::monomial(1, one.neg()));
        let mut xbar_map = BTreeMap::new();
        xbar_map.insert(1u32, xbar1);
        let edge = EdgeCoefficients {
            t_at_one: BTreeMap::new(),
            tbar_linear: BTreeMap::new(),
            tbar2_second: TruncatedSeries::zero(&ctx),
            xbar: xbar_map,
        };
        let tau = SectorFamily::new(ctx.max_cycle);
        let v = fperm_eval(2, &tables, &edge, &BTreeMap::new(), &tau, &ctx).unwrap();
        // (1-x^{-1})^4/x: Res_0 + Res_inf: expansion: only the x^{-1}
        // coefficient of (1-x^{-1})^4 survives Res_inf side... direct check:
        // (1 - 1/x)^4 = 1 - 4/x + 6/x^2 - 4/x^3 + 1/x^4; divided by x the
        // x^{-1} coefficient is 1, so Res_0 = 1, Res_inf = -1: total 0; the
        // denominator is absent here (den_pow = 0).
        assert!(v.is_zero());
    }
}
