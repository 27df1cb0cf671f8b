//! Exact phases e(x) = exp(2πi x) with x = rational + formal irrational part.
//!
//! A [`Phase`] is a point of the circle written additively as `q + Σ c_s·s`
//! where `q ∈ Q ∩ [0,1)` and each `s` is a named symbol standing for an
//! irrational number; distinct symbols are treated as jointly generic, i.e.
//! `1, s_1, s_2, ...` are Q-linearly independent. All arithmetic is exact.
//! Rational denominators are capped at 10^6.

use crate::cyclo::{CycloRat, ExactComplex};
use num::rational::Rational64;
use num::{Integer, One, Zero};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

pub const DENOMINATOR_CAP: i64 = 1_000_000;
pub const MAX_POLY_DEGREE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PhaseError {
    #[error("denominator {0} exceeds the cap {DENOMINATOR_CAP}")]
    DenominatorCap(i64),
    #[error("polynomial degree {0} exceeds the cap {MAX_POLY_DEGREE}")]
    DegreeCap(usize),
    #[error("period {0} exceeds the cap {DENOMINATOR_CAP}")]
    PeriodCap(u128),
    #[error("window size {0} too large for exact summation (cap {1})")]
    WindowCap(u64, u64),
    #[error("integer overflow evaluating polynomial at n = {0}")]
    EvalOverflow(i64),
}

/// Interned name of a formal irrational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(u32);

fn registry() -> &'static Mutex<(BTreeMap<String, u32>, Vec<String>)> {
    static REG: OnceLock<Mutex<(BTreeMap<String, u32>, Vec<String>)>> = OnceLock::new();
    REG.get_or_init(|| Mutex::new((BTreeMap::new(), Vec::new())))
}

impl Symbol {
    pub fn new(name: &str) -> Symbol {
        let mut reg = registry().lock().unwrap();
        if let Some(&id) = reg.0.get(name) {
            return Symbol(id);
        }
        let id = reg.1.len() as u32;
        reg.0.insert(name.to_string(), id);
        reg.1.push(name.to_string());
        Symbol(id)
    }

    pub fn name(&self) -> String {
        registry().lock().unwrap().1[self.0 as usize].clone()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

fn mod_one(q: Rational64) -> Rational64 {
    let f = q.floor();
    q - f
}

fn check_denom(q: Rational64) -> Result<Rational64, PhaseError> {
    if *q.denom() > DENOMINATOR_CAP {
        return Err(PhaseError::DenominatorCap(*q.denom()));
    }
    Ok(q)
}

/// A circle element `q + Σ c_s·s (mod 1)`. The rational part is kept in
/// `[0,1)`; symbolic coefficients are exact rationals and are not reduced
/// (e((c+1)·s) differs from e(c·s) for irrational s).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phase {
    q: Rational64,
    sym: BTreeMap<Symbol, Rational64>,
}

impl Phase {
    pub fn zero() -> Phase {
        Phase { q: Rational64::zero(), sym: BTreeMap::new() }
    }

    pub fn from_rational(num: i64, den: i64) -> Result<Phase, PhaseError> {
        assert!(den != 0, "zero denominator");
        let q = check_denom(Rational64::new(num, den))?;
        Ok(Phase { q: mod_one(q), sym: BTreeMap::new() })
    }

    pub fn from_ratio(q: Rational64) -> Result<Phase, PhaseError> {
        Ok(Phase { q: mod_one(check_denom(q)?), sym: BTreeMap::new() })
    }

    pub fn symbol(s: Symbol) -> Phase {
        Phase::symbol_scaled(s, Rational64::one())
    }

    pub fn symbol_scaled(s: Symbol, coeff: Rational64) -> Phase {
        let mut sym = BTreeMap::new();
        if !coeff.is_zero() {
            sym.insert(s, coeff);
        }
        Phase { q: Rational64::zero(), sym }
    }

    pub fn rational_part(&self) -> Rational64 {
        self.q
    }

    pub fn symbol_part(&self) -> &BTreeMap<Symbol, Rational64> {
        &self.sym
    }

    pub fn is_rational(&self) -> bool {
        self.sym.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.q.is_zero() && self.sym.is_empty()
    }

    pub fn add(&self, other: &Phase) -> Phase {
        let mut sym = self.sym.clone();
        for (s, c) in &other.sym {
            let e = sym.entry(*s).or_insert_with(Rational64::zero);
            *e += c;
            if e.is_zero() {
                sym.remove(s);
            }
        }
        Phase { q: mod_one(self.q + other.q), sym }
    }

    pub fn neg(&self) -> Phase {
        Phase {
            q: mod_one(-self.q),
            sym: self.sym.iter().map(|(s, c)| (*s, -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Phase) -> Phase {
        self.add(&other.neg())
    }

    pub fn scalar_mul(&self, k: Rational64) -> Result<Phase, PhaseError> {
        if k.is_zero() {
            return Ok(Phase::zero());
        }
        let q = check_denom(self.q * k)?;
        let sym = self
            .sym
            .iter()
            .map(|(s, c)| (*s, c * k))
            .filter(|(_, c)| !c.is_zero())
            .collect();
        Ok(Phase { q: mod_one(q), sym })
    }

    pub fn scalar_mul_int(&self, k: i64) -> Phase {
        // multiplying by an integer cannot grow the denominator
        self.scalar_mul(Rational64::from_integer(k)).unwrap()
    }

    /// Numeric value of the exponent in [0,1); symbols looked up in `vals`.
    pub fn eval_f64(&self, vals: &BTreeMap<Symbol, f64>) -> Option<f64> {
        let mut x = *self.q.numer() as f64 / *self.q.denom() as f64;
        for (s, c) in &self.sym {
            let v = vals.get(s)?;
            x += (*c.numer() as f64 / *c.denom() as f64) * v;
        }
        Some(x.rem_euclid(1.0))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.q.is_zero() || self.sym.is_empty() {
            parts.push(format!("{}", self.q));
        }
        for (s, c) in &self.sym {
            if c.is_one() {
                parts.push(s.name());
            } else {
                parts.push(format!("{}*{}", c, s.name()));
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}

fn ratio_to_string(q: &Rational64) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

fn ratio_from_string(s: &str) -> Option<Rational64> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: i64 = n.parse().ok()?;
    let d: i64 = d.parse().ok()?;
    if d == 0 {
        return None;
    }
    Some(Rational64::new(n, d))
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            q: String,
            #[serde(skip_serializing_if = "BTreeMap::is_empty")]
            sym: BTreeMap<String, String>,
        }
        let repr = Repr {
            q: ratio_to_string(&self.q),
            sym: self
                .sym
                .iter()
                .map(|(s, c)| (s.name(), ratio_to_string(c)))
                .collect(),
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            q: String,
            #[serde(default)]
            sym: BTreeMap<String, String>,
        }
        let repr = Repr::deserialize(de)?;
        let q = ratio_from_string(&repr.q)
            .ok_or_else(|| D::Error::custom(format!("bad rational {:?}", repr.q)))?;
        let mut p = Phase::from_ratio(q).map_err(D::Error::custom)?;
        for (name, c) in repr.sym {
            let c = ratio_from_string(&c)
                .ok_or_else(|| D::Error::custom(format!("bad rational {c:?}")))?;
            p = p.add(&Phase::symbol_scaled(Symbol::new(&name), c));
        }
        Ok(p)
    }
}

/// Polynomial `p(n) = c_0 + c_1 n + ... + c_D n^D` with [`Phase`]
/// coefficients, in one integer variable, degree at most 8.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePolynomial {
    coeffs: Vec<Phase>,
}

impl PhasePolynomial {
    pub fn new(coeffs: Vec<Phase>) -> Result<PhasePolynomial, PhaseError> {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last().map(Phase::is_zero) == Some(true) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Phase::zero());
        }
        if coeffs.len() - 1 > MAX_POLY_DEGREE {
            return Err(PhaseError::DegreeCap(coeffs.len() - 1));
        }
        Ok(PhasePolynomial { coeffs })
    }

    pub fn constant(c: Phase) -> PhasePolynomial {
        PhasePolynomial { coeffs: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, j: usize) -> Phase {
        self.coeffs.get(j).cloned().unwrap_or_else(Phase::zero)
    }

    pub fn coeffs(&self) -> &[Phase] {
        &self.coeffs
    }

    pub fn add(&self, other: &PhasePolynomial) -> PhasePolynomial {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len).map(|j| self.coeff(j).add(&other.coeff(j))).collect();
        PhasePolynomial::new(coeffs).expect("degree cannot grow under addition")
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(Phase::is_zero)
    }

    /// Exact value of `p(n) mod 1`. For rational coefficients `a/b` this uses
    /// `a·n^j/b ≡ a·(n^j mod b)/b (mod 1)` so arbitrarily large `n` are fine;
    /// a symbolic coefficient needs the exact integer `n^j`, which must fit.
    pub fn eval(&self, n: i64) -> Result<Phase, PhaseError> {
        let mut acc = Phase::zero();
        for (j, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if j == 0 {
                acc = acc.add(c);
                continue;
            }
            // rational part via modular power
            let b = *c.rational_part().denom();
            let a = *c.rational_part().numer();
            if b > 1 || a != 0 {
                let bu = b as u128;
                let nm = (n.rem_euclid(b)) as u128;
                let mut pw: u128 = 1;
                for _ in 0..j {
                    pw = pw * nm % bu;
                }
                let term = Phase::from_rational(a.checked_mul(pw as i64).ok_or(
                    PhaseError::EvalOverflow(n),
                )?, b)?;
                acc = acc.add(&term);
            }
            if !c.symbol_part().is_empty() {
                let npow = (0..j).try_fold(1i64, |p, _| {
                    p.checked_mul(n).ok_or(PhaseError::EvalOverflow(n))
                })?;
                for (s, co) in c.symbol_part() {
                    acc = acc.add(&Phase::symbol_scaled(*s, co * Rational64::from_integer(npow)));
                }
            }
        }
        Ok(acc)
    }

    pub fn eval_f64(&self, n: i64, vals: &BTreeMap<Symbol, f64>) -> Option<f64> {
        let mut x = 0.0;
        let nf = n as f64;
        for (j, c) in self.coeffs.iter().enumerate() {
            // for float work, reduce n^j mod 1 contributions coefficient-wise
            let base = c.eval_f64(vals)?;
            let mut term = base;
            if j > 0 {
                // use exact modular arithmetic on the rational part and plain
                // floating point on the rest; adequate for spot checks
                let b = *c.rational_part().denom();
                let a = *c.rational_part().numer();
                let nm = n.rem_euclid(b) as u128;
                let mut pw: u128 = 1;
                for _ in 0..j {
                    pw = pw * nm % (b as u128);
                }
                let rat = (a as f64) * (pw as f64) / (b as f64);
                let mut irr = 0.0;
                for (s, co) in c.symbol_part() {
                    let v = vals.get(s)?;
                    irr += (*co.numer() as f64 / *co.denom() as f64) * v;
                }
                term = rat + irr * nf.powi(j as i32);
            }
            x += term;
        }
        Some(x.rem_euclid(1.0))
    }
}

/// Which branch of the Weyl dichotomy produced a limit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WeylCase {
    /// p is constant: the limit is e(c_0).
    Constant,
    /// all non-constant coefficients rational: exact average over one period.
    RationalPeriodic { period: u64 },
    /// some non-constant coefficient is irrational: the limit is 0.
    Equidistributed,
}

#[derive(Debug, Clone)]
pub struct WeylLimit {
    pub value: ExactComplex,
    pub case: WeylCase,
}

/// Cesàro limit of `e(p(n))` over Følner intervals, by the Weyl dichotomy:
/// constant polynomials give `e(c_0)`; a nonzero symbolic part in any
/// non-constant coefficient forces equidistribution (limit 0); otherwise the
/// average is periodic with period `lcm` of the coefficient denominators and
/// is summed exactly over one period.
pub fn weyl_limit(p: &PhasePolynomial) -> Result<WeylLimit, PhaseError> {
    if p.is_constant() {
        return Ok(WeylLimit {
            value: ExactComplex::from_phase(&p.coeff(0)),
            case: WeylCase::Constant,
        });
    }
    let irrational = p
        .coeffs()
        .iter()
        .skip(1)
        .any(|c| !c.symbol_part().is_empty());
    if irrational {
        return Ok(WeylLimit { value: ExactComplex::zero(), case: WeylCase::Equidistributed });
    }
    let mut period: u128 = 1;
    for c in p.coeffs().iter().skip(1) {
        let d = *c.rational_part().denom() as u128;
        period = period.lcm(&d);
        if period > DENOMINATOR_CAP as u128 {
            return Err(PhaseError::PeriodCap(period));
        }
    }
    let period = period as u64;
    // constant term may carry symbols; factor it out of the periodic sum
    let c0 = p.coeff(0);
    let mut sum = CycloRat::zero();
    for n in 0..period {
        let v = p.eval(n as i64)?;
        let r = v.sub(&c0).rational_part();
        debug_assert!(v.sub(&c0).is_rational());
        sum = sum.add(&CycloRat::root_of_unity(r));
    }
    let avg = sum.scale_ratio(1, period as i64);
    let value = ExactComplex::from_phase(&c0).mul(&ExactComplex::from_cyclo(avg));
    Ok(WeylLimit { value, case: WeylCase::RationalPeriodic { period } })
}

/// Exact finite averages `(1/N) Σ_{0 ≤ n < N} e(p(n))` for each requested N.
/// Kept exact, so N is capped (large-N numerics belong to the float path).
pub fn window_average(
    p: &PhasePolynomial,
    ns: &[u64],
) -> Result<Vec<(u64, ExactComplex)>, PhaseError> {
    const CAP: u64 = 100_000;
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            out.push((0, ExactComplex::zero()));
            continue;
        }
        if n > CAP || (!p.is_constant() && n > 4096 && p.coeffs().iter().any(|c| !c.symbol_part().is_empty())) {
            return Err(PhaseError::WindowCap(n, CAP));
        }
        let mut sum = ExactComplex::zero();
        for j in 0..n {
            sum = sum.add(&ExactComplex::from_phase(&p.eval(j as i64)?));
        }
        out.push((n, sum.scale_ratio(1, n as i64)));
    }
    Ok(out)
}

/// Float average of `e(p(n))` over `0 ≤ n < N` with symbols instantiated.
pub fn window_average_f64(
    p: &PhasePolynomial,
    n: u64,
    vals: &BTreeMap<Symbol, f64>,
) -> Option<(f64, f64)> {
    let mut re = 0.0;
    let mut im = 0.0;
    for j in 0..n {
        let x = p.eval_f64(j as i64, vals)?;
        re += (2.0 * std::f64::consts::PI * x).cos();
        im += (2.0 * std::f64::consts::PI * x).sin();
    }
    Some((re / n as f64, im / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn phase_arithmetic_reduces_mod_one() {
        let a = Phase::from_rational(3, 4).unwrap();
        let b = Phase::from_rational(1, 2).unwrap();
        assert_eq!(a.add(&b).rational_part(), r(1, 4));
        assert_eq!(a.neg().rational_part(), r(1, 4));
        let alpha = Symbol::new("alpha");
        let s = Phase::symbol(alpha);
        let twice = s.add(&s);
        assert_eq!(twice.symbol_part().get(&alpha), Some(&r(2, 1)));
        assert!(s.sub(&s).is_zero());
    }

    #[test]
    fn denominator_cap_enforced() {
        assert!(Phase::from_rational(1, 1_000_001).is_err());
        let p = Phase::from_rational(1, 1_000_000).unwrap();
        assert!(p.scalar_mul(r(1, 2)).is_err());
    }

    #[test]
    fn degree_cap_enforced() {
        let coeffs = vec![Phase::zero(); 10];
        assert!(PhasePolynomial::new(coeffs).is_ok()); // all zero: degree 0
        let mut coeffs = vec![Phase::zero(); 10];
        coeffs[9] = Phase::from_rational(1, 2).unwrap();
        assert!(matches!(PhasePolynomial::new(coeffs), Err(PhaseError::DegreeCap(9))));
    }

    #[test]
    fn weyl_constant_case() {
        let p = PhasePolynomial::constant(Phase::from_rational(1, 3).unwrap());
        let w = weyl_limit(&p).unwrap();
        assert_eq!(w.case, WeylCase::Constant);
        assert_eq!(w.value, ExactComplex::from_phase(&Phase::from_rational(1, 3).unwrap()));
    }

    #[test]
    fn weyl_rational_full_cancellation() {
        // p(n) = n/3: average of the three cube roots of unity is 0
        let p = PhasePolynomial::new(vec![Phase::zero(), Phase::from_rational(1, 3).unwrap()])
            .unwrap();
        let w = weyl_limit(&p).unwrap();
        assert_eq!(w.case, WeylCase::RationalPeriodic { period: 3 });
        assert!(w.value.is_zero());
    }

    #[test]
    fn weyl_rational_quadratic_matches_brute_force() {
        // p(n) = n^2/4 + n/6: period lcm(4,6) = 12; oracle summed by hand here
        let p = PhasePolynomial::new(vec![
            Phase::zero(),
            Phase::from_rational(1, 6).unwrap(),
            Phase::from_rational(1, 4).unwrap(),
        ])
        .unwrap();
        let w = weyl_limit(&p).unwrap();
        assert_eq!(w.case, WeylCase::RationalPeriodic { period: 12 });
        let mut oracle = ExactComplex::zero();
        for n in 0..12i64 {
            let x = Rational64::new(n * n, 4) + Rational64::new(n, 6);
            let x = x - x.floor();
            oracle = oracle.add(&ExactComplex::from_phase(&Phase::from_ratio(x).unwrap()));
        }
        let oracle = oracle.scale_ratio(1, 12);
        assert_eq!(w.value, oracle);
        // float cross-check over a long window
        let num = window_average_f64(&p, 60_000, &BTreeMap::new()).unwrap();
        let sym = w.value.eval_f64(&BTreeMap::new()).unwrap();
        assert!((num.0 - sym.0).abs() < 1e-9 && (num.1 - sym.1).abs() < 1e-9);
    }

    #[test]
    fn weyl_irrational_coefficient_gives_zero() {
        let alpha = Symbol::new("alpha");
        let p = PhasePolynomial::new(vec![
            Phase::from_rational(1, 5).unwrap(),
            Phase::symbol(alpha),
        ])
        .unwrap();
        let w = weyl_limit(&p).unwrap();
        assert_eq!(w.case, WeylCase::Equidistributed);
        assert!(w.value.is_zero());
        // numeric corroboration with alpha = sqrt(2) - 1
        let mut vals = BTreeMap::new();
        vals.insert(alpha, 2f64.sqrt() - 1.0);
        let (re, im) = window_average_f64(&p, 100_000, &vals).unwrap();
        assert!((re * re + im * im).sqrt() < 1e-2);
    }

    #[test]
    fn weyl_symbols_cancel_to_rational() {
        // coefficient alpha - alpha = 0 must take the periodic branch
        let alpha = Symbol::new("alpha");
        let c = Phase::symbol(alpha).sub(&Phase::symbol(alpha)).add(&Phase::from_rational(1, 2).unwrap());
        let p = PhasePolynomial::new(vec![Phase::zero(), c]).unwrap();
        let w = weyl_limit(&p).unwrap();
        assert_eq!(w.case, WeylCase::RationalPeriodic { period: 2 });
        assert!(w.value.is_zero());
    }

    #[test]
    fn weyl_limit_modulus_at_most_one() {
        // |weyl_limit| ≤ 1 on a small family, checked numerically
        for (a, b, c) in [(1i64, 2i64, 3i64), (5, 6, 4), (2, 7, 9), (3, 8, 5)] {
            let p = PhasePolynomial::new(vec![
                Phase::from_rational(1, a).unwrap(),
                Phase::from_rational(1, b).unwrap(),
                Phase::from_rational(1, c).unwrap(),
            ])
            .unwrap();
            let w = weyl_limit(&p).unwrap();
            let (re, im) = w.value.eval_f64(&BTreeMap::new()).unwrap();
            assert!((re * re + im * im).sqrt() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn period_cap_enforced() {
        // denominators 999983 (prime) and 2: lcm ~ 2e6 exceeds the cap
        let p = PhasePolynomial::new(vec![
            Phase::zero(),
            Phase::from_rational(1, 999_983).unwrap(),
            Phase::from_rational(1, 2).unwrap(),
        ])
        .unwrap();
        assert!(matches!(weyl_limit(&p), Err(PhaseError::PeriodCap(_))));
    }

    #[test]
    fn window_average_exact_small() {
        // p(n) = n/2: partial averages alternate 1, 0, 1/3, 0, 1/5, ...
        let p = PhasePolynomial::new(vec![Phase::zero(), Phase::from_rational(1, 2).unwrap()])
            .unwrap();
        let avgs = window_average(&p, &[1, 2, 3]).unwrap();
        assert_eq!(avgs[0].1, ExactComplex::one());
        assert!(avgs[1].1.is_zero());
        assert_eq!(avgs[2].1, ExactComplex::from_rational_i64(1, 3));
    }

    #[test]
    fn phase_serde_round_trip() {
        let alpha = Symbol::new("alpha");
        let p = Phase::from_rational(2, 3)
            .unwrap()
            .add(&Phase::symbol_scaled(alpha, r(5, 7)));
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"q\":\"2/3\""));
        assert!(json.contains("\"alpha\":\"5/7\""));
        let back: Phase = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn polynomial_eval_handles_large_n() {
        let p = PhasePolynomial::new(vec![
            Phase::zero(),
            Phase::from_rational(1, 7).unwrap(),
            Phase::from_rational(3, 5).unwrap(),
            Phase::from_rational(1, 11).unwrap(),
        ])
        .unwrap();
        // n large enough that n^3 overflows i64 unless reduced modularly
        let n = 4_000_000_000i64;
        let v = p.eval(n).unwrap();
        // oracle: reduce n mod each denominator separately
        let mut expect = Rational64::zero();
        for (j, den, num) in [(1i64, 7i64, 1i64), (2, 5, 3), (3, 11, 1)] {
            let nm = n.rem_euclid(den) as u128;
            let mut pw: u128 = 1;
            for _ in 0..j {
                pw = pw * nm % den as u128;
            }
            expect += Rational64::new(num * pw as i64, den);
        }
        expect -= expect.floor();
        assert_eq!(v.rational_part(), expect);
    }
}
