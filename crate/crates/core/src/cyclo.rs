//! Exact complex scalars: Q-linear combinations of roots of unity, with an
//! optional formal-irrational exponent class on each term.
//!
//! [`CycloRat`] is an element of the cyclotomic field Q(ζ_L), stored in the
//! canonical power basis `ζ_L^j, j < φ(L)` (the representation after
//! reduction modulo the L-th cyclotomic polynomial), so equality and zero
//! tests are exact coefficient comparisons. [`ExactComplex`] attaches to each
//! cyclotomic coefficient a symbolic exponent class `e(Σ c_s·s)`; classes
//! with distinct symbol parts are linearly independent, matching the generic
//! irrationals of [`crate::phases`].

use crate::phases::{Phase, Symbol};
use num::bigint::BigInt;
use num::rational::{BigRational, Rational64};
use num::{Integer, One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Exact division of integer polynomials (the divisor must be monic and must
/// divide exactly, which holds for cyclotomic factors of x^n - 1).
fn poly_div_exact(num: &[BigInt], den: &[BigInt]) -> Vec<BigInt> {
    assert!(den.last().map(|c| c.is_one()) == Some(true));
    let mut rem: Vec<BigInt> = num.to_vec();
    let dd = den.len() - 1;
    let nd = num.len() - 1;
    assert!(nd >= dd);
    let mut quot = vec![BigInt::zero(); nd - dd + 1];
    for k in (0..=nd - dd).rev() {
        let c = rem[k + dd].clone();
        if !c.is_zero() {
            quot[k] = c.clone();
            for (i, d) in den.iter().enumerate() {
                rem[k + i] -= &c * d;
            }
        }
    }
    debug_assert!(rem.iter().all(|c| c.is_zero()), "non-exact polynomial division");
    quot
}

fn cyclotomic_cache() -> &'static Mutex<HashMap<u64, Arc<Vec<BigInt>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<BigInt>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Monic integer coefficients of the n-th cyclotomic polynomial.
pub fn cyclotomic_polynomial(n: u64) -> Arc<Vec<BigInt>> {
    assert!(n >= 1);
    if let Some(p) = cyclotomic_cache().lock().unwrap().get(&n) {
        return Arc::clone(p);
    }
    let result = if n == 1 {
        vec![BigInt::from(-1), BigInt::one()]
    } else {
        // Φ_n = (x^n - 1) / Π_{d | n, d < n} Φ_d
        let mut num = vec![BigInt::zero(); n as usize + 1];
        num[0] = BigInt::from(-1);
        num[n as usize] = BigInt::one();
        let mut cur = num;
        for d in 1..n {
            if n % d == 0 {
                let phi_d = cyclotomic_polynomial(d);
                cur = poly_div_exact(&cur, &phi_d);
            }
        }
        cur
    };
    let arc = Arc::new(result);
    cyclotomic_cache().lock().unwrap().insert(n, Arc::clone(&arc));
    arc
}

/// Element of Q(ζ_L) in the canonical basis `ζ_L^j, 0 ≤ j < φ(L)`.
#[derive(Debug, Clone)]
pub struct CycloRat {
    level: u64,
    coeffs: Vec<BigRational>, // length φ(level)
}

fn reduce_mod_cyclotomic(mut poly: Vec<BigRational>, level: u64) -> Vec<BigRational> {
    let phi = cyclotomic_polynomial(level);
    let deg = phi.len() - 1;
    while poly.len() > deg {
        let top = poly.pop().unwrap();
        if top.is_zero() {
            continue;
        }
        let k = poly.len() - deg; // x^{len} = x^k * x^deg
        for (i, c) in phi.iter().take(deg).enumerate() {
            let sub = &top * BigRational::from(c.clone());
            poly[k + i] -= sub;
        }
    }
    poly.resize(deg, BigRational::zero());
    poly
}

impl CycloRat {
    pub fn zero() -> CycloRat {
        CycloRat { level: 1, coeffs: vec![BigRational::zero()] }
    }

    pub fn one() -> CycloRat {
        CycloRat { level: 1, coeffs: vec![BigRational::one()] }
    }

    pub fn from_bigrational(q: BigRational) -> CycloRat {
        CycloRat { level: 1, coeffs: vec![q] }
    }

    pub fn from_ratio_i64(n: i64, d: i64) -> CycloRat {
        CycloRat::from_bigrational(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    /// e(q) for rational q; the level is the reduced denominator.
    pub fn root_of_unity(q: Rational64) -> CycloRat {
        let f = q.floor();
        let q = q - f;
        let level = *q.denom() as u64;
        let a = *q.numer() as usize;
        let mut poly = vec![BigRational::zero(); a + 1];
        poly[a] = BigRational::one();
        CycloRat { level, coeffs: reduce_mod_cyclotomic(poly, level) }
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    fn lift(&self, level: u64) -> CycloRat {
        assert!(level % self.level == 0);
        if level == self.level {
            return self.clone();
        }
        let k = (level / self.level) as usize;
        let mut poly = vec![BigRational::zero(); self.coeffs.len() * k + 1];
        for (j, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                poly[j * k] += c;
            }
        }
        CycloRat { level, coeffs: reduce_mod_cyclotomic(poly, level) }
    }

    pub fn add(&self, other: &CycloRat) -> CycloRat {
        let level = self.level.lcm(&other.level);
        let mut a = self.lift(level);
        let b = other.lift(level);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        a
    }

    pub fn neg(&self) -> CycloRat {
        CycloRat {
            level: self.level,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    pub fn sub(&self, other: &CycloRat) -> CycloRat {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &CycloRat) -> CycloRat {
        let level = self.level.lcm(&other.level);
        let a = self.lift(level);
        let b = other.lift(level);
        let mut poly = vec![BigRational::zero(); a.coeffs.len() + b.coeffs.len()];
        for (i, x) in a.coeffs.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.coeffs.iter().enumerate() {
                if !y.is_zero() {
                    poly[i + j] += x * y;
                }
            }
        }
        CycloRat { level, coeffs: reduce_mod_cyclotomic(poly, level) }
    }

    pub fn conj(&self) -> CycloRat {
        let l = self.level as usize;
        let mut poly = vec![BigRational::zero(); l.max(1)];
        for (j, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                let idx = (l - j) % l;
                poly[idx] += c;
            }
        }
        CycloRat { level: self.level, coeffs: reduce_mod_cyclotomic(poly, self.level) }
    }

    pub fn scale(&self, q: &BigRational) -> CycloRat {
        CycloRat {
            level: self.level,
            coeffs: self.coeffs.iter().map(|c| c * q).collect(),
        }
    }

    pub fn scale_ratio(&self, n: i64, d: i64) -> CycloRat {
        self.scale(&BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Some(q) exactly when the element is the rational number q.
    pub fn rational_value(&self) -> Option<BigRational> {
        if self.coeffs.iter().skip(1).all(|c| c.is_zero()) {
            Some(self.coeffs[0].clone())
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let cf = c.to_f64().unwrap_or(f64::NAN);
            let theta = 2.0 * std::f64::consts::PI * j as f64 / self.level as f64;
            re += cf * theta.cos();
            im += cf * theta.sin();
        }
        (re, im)
    }
}

impl PartialEq for CycloRat {
    fn eq(&self, other: &Self) -> bool {
        self.sub(other).is_zero()
    }
}
impl Eq for CycloRat {}

impl fmt::Display for CycloRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        for (j, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if j == 0 {
                parts.push(format!("{c}"));
            } else if c.is_one() {
                parts.push(format!("e({j}/{})", self.level));
            } else {
                parts.push(format!("{c}*e({j}/{})", self.level));
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}

type SymClass = Vec<(Symbol, Rational64)>;

/// Exact complex scalar `Σ_s a_s · e(s)` with `a_s` cyclotomic-rational and
/// `s` ranging over symbolic exponent classes (the empty class is the purely
/// rational-exponent part).
#[derive(Debug, Clone, PartialEq)]
pub struct ExactComplex {
    terms: BTreeMap<SymClass, CycloRat>,
}

fn class_of(p: &Phase) -> SymClass {
    p.symbol_part().iter().map(|(s, c)| (*s, *c)).collect()
}

impl ExactComplex {
    pub fn zero() -> ExactComplex {
        ExactComplex { terms: BTreeMap::new() }
    }

    pub fn one() -> ExactComplex {
        ExactComplex::from_cyclo(CycloRat::one())
    }

    pub fn from_cyclo(c: CycloRat) -> ExactComplex {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Vec::new(), c);
        }
        ExactComplex { terms }
    }

    pub fn from_rational_i64(n: i64, d: i64) -> ExactComplex {
        ExactComplex::from_cyclo(CycloRat::from_ratio_i64(n, d))
    }

    pub fn from_bigrational(q: BigRational) -> ExactComplex {
        ExactComplex::from_cyclo(CycloRat::from_bigrational(q))
    }

    /// e(p) for a phase p: the rational part becomes a root of unity, the
    /// symbolic part becomes the term's exponent class.
    pub fn from_phase(p: &Phase) -> ExactComplex {
        let mut terms = BTreeMap::new();
        terms.insert(class_of(p), CycloRat::root_of_unity(p.rational_part()));
        ExactComplex { terms }
    }

    fn normalized(mut self) -> ExactComplex {
        self.terms.retain(|_, c| !c.is_zero());
        self
    }

    pub fn add(&self, other: &ExactComplex) -> ExactComplex {
        let mut terms = self.terms.clone();
        for (k, v) in &other.terms {
            match terms.get_mut(k) {
                Some(c) => *c = c.add(v),
                None => {
                    terms.insert(k.clone(), v.clone());
                }
            }
        }
        ExactComplex { terms }.normalized()
    }

    pub fn neg(&self) -> ExactComplex {
        ExactComplex {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &ExactComplex) -> ExactComplex {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &ExactComplex) -> ExactComplex {
        let mut terms: BTreeMap<SymClass, CycloRat> = BTreeMap::new();
        for (k1, v1) in &self.terms {
            for (k2, v2) in &other.terms {
                // merge symbol classes additively
                let mut merged: BTreeMap<Symbol, Rational64> = k1.iter().cloned().collect();
                for (s, c) in k2 {
                    let e = merged.entry(*s).or_insert_with(Rational64::zero);
                    *e += c;
                    if e.is_zero() {
                        merged.remove(s);
                    }
                }
                let key: SymClass = merged.into_iter().collect();
                let prod = v1.mul(v2);
                match terms.get_mut(&key) {
                    Some(c) => *c = c.add(&prod),
                    None => {
                        terms.insert(key, prod);
                    }
                }
            }
        }
        ExactComplex { terms }.normalized()
    }

    pub fn conj(&self) -> ExactComplex {
        ExactComplex {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| {
                    let nk: SymClass = k.iter().map(|(s, c)| (*s, -c)).collect();
                    (nk, v.conj())
                })
                .collect(),
        }
    }

    pub fn scale(&self, q: &BigRational) -> ExactComplex {
        if q.is_zero() {
            return ExactComplex::zero();
        }
        ExactComplex {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v.scale(q))).collect(),
        }
    }

    pub fn scale_ratio(&self, n: i64, d: i64) -> ExactComplex {
        self.scale(&BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// |z|^2 as an exact scalar.
    pub fn norm_sq(&self) -> ExactComplex {
        self.mul(&self.conj())
    }

    /// Some(q) exactly when the value is the rational number q.
    pub fn rational_value(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&Vec::new()) {
                return c.rational_value();
            }
        }
        None
    }

    pub fn eval_f64(&self, vals: &BTreeMap<Symbol, f64>) -> Option<(f64, f64)> {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, v) in &self.terms {
            let (cr, ci) = v.to_f64();
            let mut x = 0.0;
            for (s, c) in k {
                let val = vals.get(s)?;
                x += (*c.numer() as f64 / *c.denom() as f64) * val;
            }
            let theta = 2.0 * std::f64::consts::PI * x;
            let (er, ei) = (theta.cos(), theta.sin());
            re += cr * er - ci * ei;
            im += cr * ei + ci * er;
        }
        Some((re, im))
    }

    pub fn abs_f64(&self, vals: &BTreeMap<Symbol, f64>) -> Option<f64> {
        let (re, im) = self.eval_f64(vals)?;
        Some((re * re + im * im).sqrt())
    }
}

impl fmt::Display for ExactComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        for (k, v) in &self.terms {
            if k.is_empty() {
                parts.push(format!("{v}"));
            } else {
                let sym = k
                    .iter()
                    .map(|(s, c)| {
                        if c.is_one() {
                            s.name()
                        } else {
                            format!("{}*{}", c, s.name())
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" + ");
                if *v == CycloRat::one() {
                    parts.push(format!("e({sym})"));
                } else {
                    parts.push(format!("({v})*e({sym})"));
                }
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}

impl Serialize for ExactComplex {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}
