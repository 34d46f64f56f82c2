//! Exact arithmetic in cyclotomic fields Q(zeta_n).
//!
//! Elements are represented as polynomials in zeta_n reduced modulo the n-th
//! cyclotomic polynomial. Supports the field operations, complex conjugation
//! (zeta -> zeta^{-1}) and the field norm (product of Galois conjugates).
//! These scalars appear as residues at roots of unity and in cross-pole
//! partial-fraction splits.

use std::fmt;

use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::EngineError;
use crate::rat::{rat_display, Rat};

/// A root of unity zeta = e^{2 pi i j / m}, stored with gcd(j, m) reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RootLabel {
    pub order: u32,
    pub power: u32,
}

impl RootLabel {
    pub fn new(order: u32, power: u32) -> Self {
        assert!(order >= 1);
        let p = power % order;
        let g = (p as u64).gcd(&(order as u64)) as u32;
        if p == 0 {
            RootLabel { order: 1, power: 0 }
        } else {
            RootLabel { order: order / g, power: p / g }
        }
    }

    pub fn one() -> Self {
        RootLabel { order: 1, power: 0 }
    }

    pub fn minus_one() -> Self {
        RootLabel { order: 2, power: 1 }
    }

    pub fn is_one(&self) -> bool {
        self.order == 1
    }

    /// zeta^k as a label.
    pub fn pow(&self, k: i64) -> Self {
        let m = self.order as i64;
        let p = ((self.power as i64 * k) % m + m) % m;
        RootLabel::new(self.order, p as u32)
    }

    pub fn inverse(&self) -> Self {
        self.pow(-1)
    }

    /// The rational value when the root is +-1.
    pub fn as_rational(&self) -> Option<Rat> {
        match (self.order, self.power) {
            (1, _) => Some(Rat::one()),
            (2, _) => Some(-Rat::one()),
            _ => None,
        }
    }
}

impl fmt::Display for RootLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.order == 1 {
            write!(f, "1")
        } else if self.order == 2 {
            write!(f, "-1")
        } else {
            write!(f, "zeta{}^{}", self.order, self.power)
        }
    }
}

/// Dense rational polynomial helpers (coefficient index = degree).
fn poly_trim(p: &mut Vec<Rat>) {
    while p.last().map_or(false, |c| c.is_zero()) {
        p.pop();
    }
}

fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    poly_trim(&mut out);
    out
}

/// Division with remainder by a monic-leading polynomial.
fn poly_div_rem(a: &[Rat], b: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
    assert!(!b.is_empty(), "division by zero polynomial");
    let mut rem: Vec<Rat> = a.to_vec();
    poly_trim(&mut rem);
    let db = b.len() - 1;
    let lead = b[db].clone();
    let mut quo = vec![Rat::zero(); rem.len().saturating_sub(db)];
    while rem.len() > db || (rem.len() == b.len() && !rem.is_empty() && db == 0) {
        if rem.len() < b.len() {
            break;
        }
        let da = rem.len() - 1;
        let c = rem[da].clone() / lead.clone();
        let shift = da - db;
        quo[shift] = c.clone();
        for (j, bj) in b.iter().enumerate() {
            rem[shift + j] -= &c * bj;
        }
        poly_trim(&mut rem);
        if rem.is_empty() {
            break;
        }
    }
    poly_trim(&mut quo);
    (quo, rem)
}

/// The n-th cyclotomic polynomial, computed by dividing x^n - 1 by the
/// cyclotomic polynomials of the proper divisors.
pub fn cyclotomic_polynomial(n: u32) -> Vec<Rat> {
    assert!(n >= 1);
    let mut num = vec![Rat::zero(); n as usize + 1];
    num[0] = -Rat::one();
    num[n as usize] = Rat::one();
    let mut acc = num;
    for d in 1..n {
        if n % d == 0 {
            let phi_d = cyclotomic_polynomial(d);
            let (q, r) = poly_div_rem(&acc, &phi_d);
            debug_assert!(r.is_empty(), "cyclotomic division must be exact");
            acc = q;
        }
    }
    acc
}

/// Extended gcd over Q[x]: returns (g, s, t) with s*a + t*b = g.
fn poly_ext_gcd(a: &[Rat], b: &[Rat]) -> (Vec<Rat>, Vec<Rat>, Vec<Rat>) {
    let (mut r0, mut r1) = (a.to_vec(), b.to_vec());
    poly_trim(&mut r0);
    poly_trim(&mut r1);
    let (mut s0, mut s1) = (vec![Rat::one()], vec![]);
    let (mut t0, mut t1) = (vec![], vec![Rat::one()]);
    while !r1.is_empty() {
        let (q, r) = poly_div_rem(&r0, &r1);
        let new_s = poly_sub(&s0, &poly_mul(&q, &s1));
        let new_t = poly_sub(&t0, &poly_mul(&q, &t1));
        r0 = r1;
        r1 = r;
        s0 = s1;
        s1 = new_s;
        t0 = t1;
        t1 = new_t;
    }
    (r0, s0, t0)
}

fn poly_sub(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut out = a.to_vec();
    if out.len() < b.len() {
        out.resize(b.len(), Rat::zero());
    }
    for (i, c) in b.iter().enumerate() {
        out[i] -= c;
    }
    poly_trim(&mut out);
    out
}

/// An element of Q(zeta_n), reduced modulo the n-th cyclotomic polynomial.
#[derive(Clone, PartialEq, Eq)]
pub struct Cyclotomic {
    pub conductor: u32,
    /// Coefficients of powers of zeta, length < phi(n).
    pub coeffs: Vec<Rat>,
}

impl Cyclotomic {
    pub fn zero(conductor: u32) -> Self {
        Cyclotomic { conductor, coeffs: vec![] }
    }

    pub fn from_rat(conductor: u32, r: Rat) -> Self {
        let mut c = Self::zero(conductor);
        if !r.is_zero() {
            c.coeffs = vec![r];
        }
        c
    }

    pub fn one(conductor: u32) -> Self {
        Self::from_rat(conductor, Rat::one())
    }

    /// The root zeta_m^j embedded in Q(zeta_n); requires m | n.
    pub fn root(conductor: u32, label: RootLabel) -> Result<Self, EngineError> {
        if conductor % label.order != 0 {
            return Err(EngineError::NeedsCyclotomic);
        }
        let e = (label.power as u64 * (conductor / label.order) as u64) % conductor as u64;
        let mut p = vec![Rat::zero(); e as usize + 1];
        p[e as usize] = Rat::one();
        Ok(Self::reduce(conductor, p))
    }

    fn reduce(conductor: u32, poly: Vec<Rat>) -> Self {
        let phi = cyclotomic_polynomial(conductor);
        let (_, r) = poly_div_rem(&poly, &phi);
        Cyclotomic { conductor, coeffs: r }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.conductor, o.conductor, "conductor mismatch");
        let mut coeffs = self.coeffs.clone();
        if coeffs.len() < o.coeffs.len() {
            coeffs.resize(o.coeffs.len(), Rat::zero());
        }
        for (i, c) in o.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        poly_trim(&mut coeffs);
        Cyclotomic { conductor: self.conductor, coeffs }
    }

    pub fn neg(&self) -> Self {
        Cyclotomic {
            conductor: self.conductor,
            coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.conductor, o.conductor, "conductor mismatch");
        Self::reduce(self.conductor, poly_mul(&self.coeffs, &o.coeffs))
    }

    pub fn scale(&self, r: &Rat) -> Self {
        if r.is_zero() {
            return Self::zero(self.conductor);
        }
        Cyclotomic {
            conductor: self.conductor,
            coeffs: self.coeffs.iter().map(|c| c * r).collect(),
        }
    }

    pub fn inverse(&self) -> Result<Self, EngineError> {
        if self.is_zero() {
            return Err(EngineError::NotAUnit);
        }
        let phi = cyclotomic_polynomial(self.conductor);
        let (g, s, _) = poly_ext_gcd(&self.coeffs, &phi);
        // g is a nonzero constant since phi is irreducible over Q
        if g.len() != 1 {
            return Err(EngineError::Internal("cyclotomic inverse: gcd not constant".into()));
        }
        let ginv = g[0].clone().recip();
        let inv: Vec<Rat> = s.iter().map(|c| c * &ginv).collect();
        Ok(Self::reduce(self.conductor, inv))
    }

    /// Complex conjugation zeta -> zeta^{-1}.
    pub fn conjugate(&self) -> Self {
        self.galois(self.conductor as u64 - 1)
    }

    /// The Galois automorphism zeta -> zeta^k for gcd(k, n) = 1.
    pub fn galois(&self, k: u64) -> Self {
        let n = self.conductor as u64;
        assert!(k.gcd(&n) == 1, "not a Galois automorphism");
        let mut p: Vec<Rat> = vec![];
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let e = (i as u64 * k % n) as usize;
            if p.len() <= e {
                p.resize(e + 1, Rat::zero());
            }
            p[e] += c;
        }
        Self::reduce(self.conductor, p)
    }

    /// Field norm: product of all Galois conjugates; lands in Q.
    pub fn norm(&self) -> Rat {
        let n = self.conductor as u64;
        let mut acc = Cyclotomic::one(self.conductor);
        for k in 1..=n {
            if k.gcd(&n) == 1 {
                acc = acc.mul(&self.galois(k));
            }
        }
        acc.as_rational()
            .expect("norm of a cyclotomic number is rational")
    }

    /// Rational value, when the element lies in the prime field.
    pub fn as_rational(&self) -> Option<Rat> {
        match self.coeffs.len() {
            0 => Some(Rat::zero()),
            1 => Some(self.coeffs[0].clone()),
            _ => None,
        }
    }
}

impl fmt::Debug for Cyclotomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Cyclotomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => rat_display(c),
                1 => format!("{}*z{}", rat_display(c), self.conductor),
                _ => format!("{}*z{}^{}", rat_display(c), self.conductor, i),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}
