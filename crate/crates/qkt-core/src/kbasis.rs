//! The coefficient K-ring data: a declared basis of K^0(X), the constant
//! Euler pairing, Adams matrices, and K-vectors with series coefficients.
//!
//! Only the finite basis data consumed by the formulas is modeled; there is
//! no actual sheaf K-theory here.

use std::sync::Arc;

use crate::error::EngineError;
use crate::qfun::QRat;
use crate::rat::{Rat, rat_int};
use crate::series::{RingContext, TruncatedSeries};
use num_traits::Zero;

/// Basis declaration: rank, pairing matrix g, Adams matrices on K^0(X).
#[derive(Clone, Debug, PartialEq)]
pub struct KBasisSpec {
    pub rank: usize,
    /// g_{ab} = chi(X, phi_a ox phi_b); symmetric, invertible over Q.
    pub pairing: Vec<Vec<Rat>>,
    /// Psi^k on K^0(X) for k >= 2 (k = 1 is the identity); missing entries
    /// default to the identity matrix.
    pub adams: std::collections::BTreeMap<u32, Vec<Vec<Rat>>>,
    /// Inverse pairing, precomputed.
    pub pairing_inv: Vec<Vec<Rat>>,
}

impl KBasisSpec {
    pub fn new(
        pairing: Vec<Vec<Rat>>,
        adams: std::collections::BTreeMap<u32, Vec<Vec<Rat>>>,
    ) -> Result<Self, EngineError> {
        let rank = pairing.len();
        if rank == 0 || pairing.iter().any(|row| row.len() != rank) {
            return Err(EngineError::Config("pairing matrix must be square and nonempty".into()));
        }
        for i in 0..rank {
            for j in 0..rank {
                if pairing[i][j] != pairing[j][i] {
                    return Err(EngineError::Config("pairing matrix must be symmetric".into()));
                }
            }
        }
        let pairing_inv = invert_rat_matrix(&pairing)
            .ok_or_else(|| EngineError::Config("pairing matrix is singular".into()))?;
        for (k, m) in &adams {
            if *k < 2 || m.len() != rank || m.iter().any(|r| r.len() != rank) {
                return Err(EngineError::Config("bad Adams matrix".into()));
            }
        }
        Ok(KBasisSpec { rank, pairing, adams, pairing_inv })
    }

    /// The point target: rank 1, pairing (1), trivial Adams action.
    pub fn point() -> Self {
        KBasisSpec::new(vec![vec![rat_int(1)]], Default::default()).unwrap()
    }

    /// Psi^k matrix entry acting on basis vectors.
    pub fn adams_matrix(&self, k: u32) -> Vec<Vec<Rat>> {
        if k == 1 {
            return identity(self.rank);
        }
        self.adams.get(&k).cloned().unwrap_or_else(|| identity(self.rank))
    }
}

fn identity(n: usize) -> Vec<Vec<Rat>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { rat_int(1) } else { rat_int(0) }).collect())
        .collect()
}

/// Gauss-Jordan inverse over the rationals.
pub fn invert_rat_matrix(m: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = m.len();
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &p;
            inv[col][j] /= &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let x = &a[col][j] * &f;
                    a[r][j] -= x;
                    let y = &inv[col][j] * &f;
                    inv[r][j] -= y;
                }
            }
        }
    }
    Some(inv)
}

/// Element of K = K^0(X) ox Lambda in the declared basis.
#[derive(Clone, Debug, PartialEq)]
pub struct KVector {
    pub comps: Vec<TruncatedSeries>,
}

impl KVector {
    pub fn zero(ctx: &Arc<RingContext>, rank: usize) -> Self {
        KVector { comps: vec![TruncatedSeries::zero(ctx); rank] }
    }

    pub fn basis(ctx: &Arc<RingContext>, rank: usize, idx: usize) -> Self {
        let mut v = Self::zero(ctx, rank);
        v.comps[idx] = TruncatedSeries::one(ctx);
        v
    }

    pub fn rank(&self) -> usize {
        self.comps.len()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        KVector {
            comps: self.comps.iter().zip(&o.comps).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        KVector {
            comps: self.comps.iter().zip(&o.comps).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        KVector { comps: self.comps.iter().map(|a| a.neg()).collect() }
    }

    pub fn scale_series(&self, s: &TruncatedSeries) -> Self {
        KVector { comps: self.comps.iter().map(|a| a.mul(s)).collect() }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        KVector { comps: self.comps.iter().map(|a| a.scale(r)).collect() }
    }

    /// Minimal filtration weight across components.
    pub fn weight(&self) -> u32 {
        self.comps.iter().map(|c| c.filtration_weight()).min().unwrap_or(crate::series::WEIGHT_INFINITY)
    }

    /// Constant pairing (u, v) = sum g_{ab} u^a v^b.
    pub fn g_pair(&self, o: &Self, basis: &KBasisSpec) -> TruncatedSeries {
        let ctx = self.comps[0].context().clone();
        let mut acc = TruncatedSeries::zero(&ctx);
        for a in 0..basis.rank {
            if self.comps[a].is_zero() {
                continue;
            }
            for b in 0..basis.rank {
                if basis.pairing[a][b].is_zero() || o.comps[b].is_zero() {
                    continue;
                }
                acc = acc.add(&self.comps[a].mul(&o.comps[b]).scale(&basis.pairing[a][b]));
            }
        }
        acc
    }

    /// Apply a rational matrix (rows index output components).
    pub fn apply_matrix(&self, m: &[Vec<Rat>]) -> Self {
        let ctx = self.comps[0].context().clone();
        let mut out = Vec::with_capacity(m.len());
        for row in m {
            let mut acc = TruncatedSeries::zero(&ctx);
            for (j, coef) in row.iter().enumerate() {
                if !coef.is_zero() && !self.comps[j].is_zero() {
                    acc = acc.add(&self.comps[j].scale(coef));
                }
            }
            out.push(acc);
        }
        KVector { comps: out }
    }

    pub fn adams(&self, k: u32, basis: &KBasisSpec) -> Self {
        let m = basis.adams_matrix(k);
        let coeff_adams = KVector {
            comps: self.comps.iter().map(|c| c.adams(k)).collect(),
        };
        coeff_adams.apply_matrix(&m)
    }
}

impl crate::sector::Weighted for KVector {
    fn weight(&self) -> u32 {
        KVector::weight(self)
    }
}

impl crate::sector::Weighted for TruncatedSeries {
    fn weight(&self) -> u32 {
        self.filtration_weight()
    }
}

/// A q-carrying K-vector: one rational function of q per basis component.
pub type KvFun = Vec<QRat<TruncatedSeries>>;

/// A Laurent-polynomial-valued K-vector (element of K_+ per component).
pub type KvLaurent = Vec<crate::qfun::LaurentPoly<TruncatedSeries>>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;
    use crate::series::{AdamsRule, GeneratorSpec};

    #[test]
    fn matrix_inverse() {
        let m = vec![vec![rat_int(1), rat_int(1)], vec![rat_int(1), rat_int(2)]];
        let inv = invert_rat_matrix(&m).unwrap();
        assert_eq!(inv[0][0], rat_int(2));
        assert_eq!(inv[0][1], rat_int(-1));
        assert_eq!(inv[1][1], rat_int(1));
        let sing = vec![vec![rat_int(1), rat_int(2)], vec![rat_int(2), rat_int(4)]];
        assert!(invert_rat_matrix(&sing).is_none());
    }

    #[test]
    fn pairing_and_weight() {
        let ctx = RingContext::new(
            vec![GeneratorSpec { name: "t".into(), weight: 1, adams_rule: AdamsRule::Fixed }],
            3,
            2,
        )
        .unwrap();
        let basis = KBasisSpec::point();
        let one = KVector::basis(&ctx, 1, 0);
        assert_eq!(one.g_pair(&one, &basis), TruncatedSeries::one(&ctx));
        let t = one.scale_series(&TruncatedSeries::generator(&ctx, 0));
        assert_eq!(t.weight(), 1);
        assert_eq!(one.g_pair(&t, &basis).coeff(&[1]), rat(1, 1));
    }
}
