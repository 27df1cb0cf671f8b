//! Finitely generated abelian groups `Z^r ⊕ Z/m_1 ⊕ ... ⊕ Z/m_k`.
//!
//! A group keeps the presentation it was built with; elements are coordinate
//! vectors laid out torsion-first, then free. [`AbGroup::canonicalized`]
//! produces the invariant-factor form together with explicit isomorphisms in
//! both directions, so presentations like `Z/4 ⊕ Z/6` and `Z/2 ⊕ Z/12` can be
//! identified when needed without forcing every caller through a coordinate
//! change.
//!
//! The module also hosts the shared linear machinery over finite abelian
//! groups: characters with exact [`Phase`] values, Følner windows, subgroup
//! closures, and [`solve_group_linear`], which solves integer-coefficient
//! systems with group-valued unknowns and reports either the full solution
//! family or a character-style infeasibility certificate.

use crate::phases::{Phase, PhaseError, DENOMINATOR_CAP};
use crate::snf::{mat_vec, smith_normal_form, Mat};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

/// Hard cap on explicit enumerations (group elements, windows, solution sets).
pub const MAX_ENUMERATION: usize = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("group is infinite, operation needs a finite group")]
    InfiniteGroup,
    #[error("enumeration would exceed the cap of {MAX_ENUMERATION} elements")]
    EnumerationCap,
    #[error("coordinate vector has wrong length: got {got}, need {need}")]
    DimensionMismatch { got: usize, need: usize },
    #[error("group exponent {0} exceeds the phase denominator cap")]
    ExponentTooLarge(u64),
    #[error("free coordinate overflowed i64")]
    Overflow,
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

/// `Z^rank ⊕ Z/moduli[0] ⊕ ...` with coordinates stored torsion-first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AbGroup {
    moduli: Vec<u64>,
    rank: usize,
}

/// Element of an [`AbGroup`], as a coordinate vector in its presentation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement(pub Vec<i64>);

impl GroupElement {
    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({})",
            self.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        )
    }
}

impl AbGroup {
    /// Builds `Z^rank ⊕ ⊕_t Z/moduli[t]`. Factors `Z/1` are dropped.
    pub fn new(moduli: &[u64], rank: usize) -> AbGroup {
        assert!(moduli.iter().all(|&m| m >= 1), "modulus must be positive");
        AbGroup {
            moduli: moduli.iter().copied().filter(|&m| m > 1).collect(),
            rank,
        }
    }

    pub fn trivial() -> AbGroup {
        AbGroup::new(&[], 0)
    }

    pub fn cyclic(m: u64) -> AbGroup {
        AbGroup::new(&[m], 0)
    }

    pub fn free(rank: usize) -> AbGroup {
        AbGroup::new(&[], rank)
    }

    /// `(Z/m)^d`
    pub fn cyclic_power(m: u64, d: usize) -> AbGroup {
        AbGroup::new(&vec![m; d], 0)
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> usize {
        self.moduli.len() + self.rank
    }

    pub fn is_finite(&self) -> bool {
        self.rank == 0
    }

    pub fn is_trivial(&self) -> bool {
        self.rank == 0 && self.moduli.is_empty()
    }

    pub fn order(&self) -> Option<u64> {
        if self.rank > 0 {
            return None;
        }
        self.moduli.iter().try_fold(1u64, |acc, &m| acc.checked_mul(m))
    }

    pub fn exponent(&self) -> Option<u64> {
        if self.rank > 0 {
            return None;
        }
        self.moduli.iter().try_fold(1u64, |acc, &m| {
            let g = acc.gcd(&m);
            (acc / g).checked_mul(m)
        })
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement(vec![0; self.dims()])
    }

    /// Standard generator along coordinate `i`.
    pub fn generator(&self, i: usize) -> GroupElement {
        assert!(i < self.dims());
        let mut c = vec![0; self.dims()];
        c[i] = 1;
        GroupElement(c)
    }

    pub fn generators(&self) -> Vec<GroupElement> {
        (0..self.dims()).map(|i| self.generator(i)).collect()
    }

    fn reduce_coord(&self, i: usize, v: i64) -> i64 {
        if i < self.moduli.len() {
            v.rem_euclid(self.moduli[i] as i64)
        } else {
            v
        }
    }

    pub fn from_coords(&self, coords: &[i64]) -> Result<GroupElement, GroupError> {
        if coords.len() != self.dims() {
            return Err(GroupError::DimensionMismatch { got: coords.len(), need: self.dims() });
        }
        Ok(GroupElement(
            coords.iter().enumerate().map(|(i, &v)| self.reduce_coord(i, v)).collect(),
        ))
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        assert_eq!(a.0.len(), self.dims());
        assert_eq!(b.0.len(), self.dims());
        GroupElement(
            a.0.iter()
                .zip(&b.0)
                .enumerate()
                .map(|(i, (&x, &y))| {
                    self.reduce_coord(i, x.checked_add(y).expect("coordinate overflow"))
                })
                .collect(),
        )
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter()
                .enumerate()
                .map(|(i, &x)| self.reduce_coord(i, x.checked_neg().expect("coordinate overflow")))
                .collect(),
        )
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.add(a, &self.neg(b))
    }

    pub fn scalar_mul(&self, k: i64, a: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if i < self.moduli.len() {
                        let m = self.moduli[i] as i64;
                        // reduce first so k * x stays in range
                        let kk = k.rem_euclid(m);
                        self.reduce_coord(i, kk.checked_mul(x.rem_euclid(m)).expect("overflow"))
                    } else {
                        k.checked_mul(x).expect("coordinate overflow")
                    }
                })
                .collect(),
        )
    }

    pub fn is_zero(&self, a: &GroupElement) -> bool {
        a.0.iter().all(|&x| x == 0)
    }

    /// Order of an element; `None` when infinite.
    pub fn element_order(&self, a: &GroupElement) -> Option<u64> {
        let mut ord = 1u64;
        for (i, &x) in a.0.iter().enumerate() {
            if i < self.moduli.len() {
                let m = self.moduli[i];
                let o = m / (x.rem_euclid(m as i64) as u64).gcd(&m);
                ord = ord.lcm(&o);
            } else if x != 0 {
                return None;
            }
        }
        Some(ord)
    }

    /// All elements of a finite group, in mixed-radix order.
    pub fn elements(&self) -> Result<Vec<GroupElement>, GroupError> {
        if self.rank > 0 {
            return Err(GroupError::InfiniteGroup);
        }
        let n = self.order().ok_or(GroupError::EnumerationCap)?;
        if n as usize > MAX_ENUMERATION {
            return Err(GroupError::EnumerationCap);
        }
        Ok((0..n).map(|i| self.element_at(i)).collect())
    }

    /// Element with mixed-radix index `i` (finite groups).
    pub fn element_at(&self, mut i: u64) -> GroupElement {
        assert!(self.rank == 0);
        let mut c = Vec::with_capacity(self.moduli.len());
        for &m in &self.moduli {
            c.push((i % m) as i64);
            i /= m;
        }
        GroupElement(c)
    }

    pub fn index_of(&self, a: &GroupElement) -> u64 {
        assert!(self.rank == 0);
        let mut idx = 0u64;
        let mut stride = 1u64;
        for (i, &m) in self.moduli.iter().enumerate() {
            idx += (a.0[i].rem_euclid(m as i64) as u64) * stride;
            stride *= m;
        }
        idx
    }

    /// Index of `mG` in `G`: `|m|^rank · Π_t gcd(m, m_t)` for `m ≠ 0`, and
    /// `[G : 0] = |G|` otherwise (`None` when infinite).
    pub fn subgroup_index(&self, m: i64) -> Option<u64> {
        if m == 0 {
            return self.order();
        }
        let mm = m.unsigned_abs();
        let mut idx = 1u64;
        for _ in 0..self.rank {
            idx = idx.checked_mul(mm)?;
        }
        for &mt in &self.moduli {
            idx = idx.checked_mul(mm.gcd(&mt))?;
        }
        Some(idx)
    }

    /// Characters of a finite group, indexed like the elements of the dual
    /// (which shares this group's presentation).
    pub fn characters(&self) -> Result<Vec<Character>, GroupError> {
        if self.rank > 0 {
            return Err(GroupError::InfiniteGroup);
        }
        let e = self.exponent().ok_or(GroupError::EnumerationCap)?;
        if e > DENOMINATOR_CAP as u64 {
            return Err(GroupError::ExponentTooLarge(e));
        }
        let elems = self.elements()?;
        Ok(elems
            .into_iter()
            .map(|t| Character { t, moduli: self.moduli.clone() })
            .collect())
    }

    pub fn character(&self, t: &GroupElement) -> Result<Character, GroupError> {
        if self.rank > 0 {
            return Err(GroupError::InfiniteGroup);
        }
        let e = self.exponent().ok_or(GroupError::EnumerationCap)?;
        if e > DENOMINATOR_CAP as u64 {
            return Err(GroupError::ExponentTooLarge(e));
        }
        Ok(Character { t: self.from_coords(t.coords())?, moduli: self.moduli.clone() })
    }

    /// Closure of `gens` under the group operation. Fails on any generator
    /// with a nonzero free coordinate, or past the cap.
    pub fn subgroup_closure(
        &self,
        gens: &[GroupElement],
        cap: usize,
    ) -> Result<Vec<GroupElement>, GroupError> {
        for g in gens {
            for &x in &g.0[self.moduli.len()..] {
                if x != 0 {
                    return Err(GroupError::InfiniteGroup);
                }
            }
        }
        let mut seen: BTreeSet<GroupElement> = BTreeSet::new();
        let mut queue = VecDeque::new();
        let z = self.zero();
        seen.insert(z.clone());
        queue.push_back(z);
        while let Some(x) = queue.pop_front() {
            for g in gens {
                let y = self.add(&x, g);
                if seen.insert(y.clone()) {
                    if seen.len() > cap {
                        return Err(GroupError::EnumerationCap);
                    }
                    queue.push_back(y);
                }
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// Følner window: torsion coordinates run over the whole finite part,
    /// free coordinates over a box of side `2n+1`.
    pub fn folner_window(
        &self,
        n: u64,
        scheme: &FolnerScheme,
    ) -> Result<Vec<GroupElement>, GroupError> {
        let offsets: Vec<i64> = match scheme {
            FolnerScheme::Box => vec![0; self.rank],
            FolnerScheme::ShiftedBox(a) => {
                if a.len() != self.rank {
                    return Err(GroupError::DimensionMismatch { got: a.len(), need: self.rank });
                }
                a.clone()
            }
        };
        let torsion_group = AbGroup::new(&self.moduli, 0);
        let torsion = torsion_group.elements()?;
        let side = 2 * n + 1;
        let mut total = torsion.len() as u64;
        for _ in 0..self.rank {
            total = total.checked_mul(side).ok_or(GroupError::EnumerationCap)?;
            if total as usize > MAX_ENUMERATION {
                return Err(GroupError::EnumerationCap);
            }
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut free = vec![0i64; self.rank];
        loop {
            for t in &torsion {
                let mut c = t.0.clone();
                for (j, &f) in free.iter().enumerate() {
                    let center = offsets[j];
                    let v = center
                        .checked_add(f - n as i64)
                        .ok_or(GroupError::Overflow)?;
                    c.push(v);
                }
                out.push(GroupElement(c));
            }
            // odometer over free coordinates
            let mut j = 0;
            loop {
                if j == self.rank {
                    return Ok(out);
                }
                free[j] += 1;
                if free[j] < side as i64 {
                    break;
                }
                free[j] = 0;
                j += 1;
            }
        }
    }

    /// Invariant-factor form with explicit isomorphisms both ways.
    pub fn canonicalized(&self) -> CanonicalIso {
        let k = self.moduli.len();
        let n = self.dims();
        if k == 0 {
            let id: Mat = (0..n)
                .map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect())
                .collect();
            return CanonicalIso {
                source: self.clone(),
                canonical: self.clone(),
                fwd: id.clone(),
                bwd: id,
                kept: vec![],
                diag: vec![],
            };
        }
        // relation lattice: columns m_t e_t in Z^n
        let mut a: Mat = vec![vec![BigInt::zero(); k]; n];
        for (t, &m) in self.moduli.iter().enumerate() {
            a[t][t] = BigInt::from(m);
        }
        let s = smith_normal_form(&a);
        let mut kept = Vec::new();
        let mut canon_moduli = Vec::new();
        let mut diag = Vec::new();
        for (i, d) in s.diag.iter().enumerate() {
            let dv = d.to_u64().expect("invariant factor fits u64");
            diag.push(dv);
            if dv > 1 {
                kept.push(i);
                canon_moduli.push(dv);
            }
        }
        let bwd = invert_unimodular(&s.u);
        CanonicalIso {
            source: self.clone(),
            canonical: AbGroup::new(&canon_moduli, self.rank),
            fwd: s.u,
            bwd,
            kept,
            diag,
        }
    }

    /// True when the two groups are isomorphic (same invariant factors and rank).
    pub fn is_isomorphic_to(&self, other: &AbGroup) -> bool {
        let a = self.canonicalized();
        let b = other.canonicalized();
        a.canonical.moduli == b.canonical.moduli && self.rank == other.rank
    }
}

impl fmt::Display for AbGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for &m in &self.moduli {
            parts.push(format!("Z/{m}"));
        }
        match self.rank {
            0 => {}
            1 => parts.push("Z".into()),
            r => parts.push(format!("Z^{r}")),
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

impl<'de> Deserialize<'de> for AbGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            #[serde(default)]
            moduli: Vec<u64>,
            #[serde(default)]
            rank: usize,
        }
        let r = Repr::deserialize(d)?;
        if r.moduli.iter().any(|&m| m == 0) {
            return Err(serde::de::Error::custom("modulus must be positive"));
        }
        Ok(AbGroup::new(&r.moduli, r.rank))
    }
}

/// Følner window shapes over the free part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FolnerScheme {
    /// Centered boxes `[-n, n]^rank`.
    Box,
    /// Boxes of the same size centered at the given offsets.
    ShiftedBox(Vec<i64>),
}

/// Character of a finite abelian group, `χ_t(x) = e(Σ t_i x_i / m_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Character {
    t: GroupElement,
    moduli: Vec<u64>,
}

impl Character {
    pub fn label(&self) -> &GroupElement {
        &self.t
    }

    pub fn eval(&self, x: &GroupElement) -> Phase {
        let mut p = Phase::zero();
        for (i, &m) in self.moduli.iter().enumerate() {
            let ti = self.t.0[i].rem_euclid(m as i64);
            let xi = x.0[i].rem_euclid(m as i64);
            if ti != 0 && xi != 0 {
                let q = Phase::from_rational(ti * xi, m as i64)
                    .expect("character denominator under cap");
                p = p.add(&q);
            }
        }
        p
    }

    pub fn is_trivial(&self) -> bool {
        self.t.0.iter().all(|&v| v == 0)
    }

    pub fn mul(&self, other: &Character) -> Character {
        assert_eq!(self.moduli, other.moduli);
        let g = AbGroup::new(&self.moduli, 0);
        Character { t: g.add(&self.t, &other.t), moduli: self.moduli.clone() }
    }

    pub fn conj(&self) -> Character {
        let g = AbGroup::new(&self.moduli, 0);
        Character { t: g.neg(&self.t), moduli: self.moduli.clone() }
    }

    pub fn order(&self) -> u64 {
        AbGroup::new(&self.moduli, 0).element_order(&self.t).unwrap()
    }
}

/// Isomorphism between a presentation and its invariant-factor form.
#[derive(Debug, Clone)]
pub struct CanonicalIso {
    pub source: AbGroup,
    pub canonical: AbGroup,
    fwd: Mat,
    bwd: Mat,
    kept: Vec<usize>,
    diag: Vec<u64>,
}

impl CanonicalIso {
    pub fn to_canonical(&self, x: &GroupElement) -> GroupElement {
        let v: Vec<BigInt> = x.0.iter().map(|&c| BigInt::from(c)).collect();
        let w = mat_vec(&self.fwd, &v);
        let k = self.diag.len();
        let mut out = Vec::with_capacity(self.canonical.dims());
        for &i in &self.kept {
            let m = BigInt::from(self.diag[i]);
            out.push(w[i].mod_floor(&m).to_i64().unwrap());
        }
        for wi in w.iter().skip(k) {
            out.push(wi.to_i64().expect("free coordinate fits i64"));
        }
        GroupElement(out)
    }

    pub fn from_canonical(&self, y: &GroupElement) -> GroupElement {
        let k = self.diag.len();
        let n = self.source.dims();
        let mut w = vec![BigInt::zero(); n];
        for (pos, &i) in self.kept.iter().enumerate() {
            w[i] = BigInt::from(y.0[pos]);
        }
        for j in 0..self.source.rank {
            w[k + j] = BigInt::from(y.0[self.kept.len() + j]);
        }
        let v = mat_vec(&self.bwd, &w);
        let coords: Vec<i64> = v
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < self.source.moduli.len() {
                    c.mod_floor(&BigInt::from(self.source.moduli[i])).to_i64().unwrap()
                } else {
                    c.to_i64().expect("free coordinate fits i64")
                }
            })
            .collect();
        GroupElement(coords)
    }
}

fn invert_unimodular(m: &Mat) -> Mat {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|row| row.iter().map(|c| BigRational::from(c.clone())).collect())
        .collect();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| BigRational::from(BigInt::from((i == j) as i64)))
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero()).expect("singular matrix");
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
                    let t = &f * &a[col][j];
                    a[r][j] -= t;
                    let t = &f * &inv[col][j];
                    inv[r][j] -= t;
                }
            }
        }
    }
    inv.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| {
                    assert!(c.denom().is_one(), "inverse of unimodular matrix is integral");
                    c.numer().clone()
                })
                .collect()
        })
        .collect()
}

/// Solution family of a linear system with unknowns in `U^n`: the particular
/// solution plus the subgroup spanned by the homogeneous generators.
#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub group: AbGroup,
    pub unknowns: usize,
    pub particular: Vec<GroupElement>,
    pub homogeneous: Vec<Vec<GroupElement>>,
}

impl SolutionFamily {
    /// Every solution, or an error past `cap`. Solutions are vectors in `U^n`.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<Vec<GroupElement>>, GroupError> {
        // work in U^n as one big product group
        let mut moduli = Vec::new();
        for _ in 0..self.unknowns {
            moduli.extend_from_slice(self.group.moduli());
        }
        let big = AbGroup::new(&moduli, 0);
        let flatten = |v: &[GroupElement]| {
            GroupElement(v.iter().flat_map(|e| e.0.iter().copied()).collect())
        };
        let gens: Vec<GroupElement> = self.homogeneous.iter().map(|h| flatten(h)).collect();
        let sub = big.subgroup_closure(&gens, cap)?;
        let base = flatten(&self.particular);
        let d = self.group.dims();
        let mut out = Vec::with_capacity(sub.len());
        for h in sub {
            let s = big.add(&base, &h);
            out.push(
                (0..self.unknowns)
                    .map(|i| GroupElement(s.0[i * d..(i + 1) * d].to_vec()))
                    .collect(),
            );
        }
        out.sort();
        Ok(out)
    }
}

/// Witness that a system `A y = b` over `U` has no solution: a functional
/// `r` and modulus `d` with `r·A ≡ 0`, `e·r ≡ 0`, but `r·b ≠ 0 (mod d)`,
/// where `e` is the modulus of the violated torsion component of `U`.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate {
    pub component: usize,
    pub component_modulus: u64,
    pub modulus: BigInt,
    pub functional: Vec<BigInt>,
}

impl Serialize for InfeasibilityCertificate {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("InfeasibilityCertificate", 4)?;
        st.serialize_field("component", &self.component)?;
        st.serialize_field("component_modulus", &self.component_modulus)?;
        st.serialize_field("modulus", &self.modulus.to_string())?;
        st.serialize_field(
            "functional",
            &self.functional.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        )?;
        st.end()
    }
}

impl InfeasibilityCertificate {
    /// Re-check the certificate against the original system data.
    pub fn verify(&self, a: &[Vec<i64>], b: &[GroupElement]) -> bool {
        let d = &self.modulus;
        if d.is_one() || d.is_zero() {
            return false;
        }
        let e = BigInt::from(self.component_modulus);
        let k = a.len();
        if self.functional.len() != k || b.len() != k {
            return false;
        }
        // e·r ≡ 0 (mod d)
        for r in &self.functional {
            if !(r * &e).mod_floor(d).is_zero() {
                return false;
            }
        }
        // r·A ≡ 0 (mod d), column by column
        let n = if k > 0 { a[0].len() } else { 0 };
        for j in 0..n {
            let mut acc = BigInt::zero();
            for i in 0..k {
                acc += &self.functional[i] * BigInt::from(a[i][j]);
            }
            if !acc.mod_floor(d).is_zero() {
                return false;
            }
        }
        // r·b ≠ 0 (mod d) on the violated component
        let mut acc = BigInt::zero();
        for i in 0..k {
            acc += &self.functional[i] * BigInt::from(b[i].0[self.component]);
        }
        !acc.mod_floor(d).is_zero()
    }
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solvable(SolutionFamily),
    Infeasible(InfeasibilityCertificate),
}

/// Solves `Σ_j a[i][j] · y_j = b[i]` for unknowns `y_j ∈ U`, a finite group.
///
/// The system splits across the torsion components of `U`; each component is
/// a modular integer system handled through the Smith normal form of the
/// augmented matrix `[A | mI]`. Returns either the full solution family or a
/// certificate for the first violated component.
pub fn solve_group_linear(u: &AbGroup, a: &[Vec<i64>], b: &[GroupElement]) -> SolveOutcome {
    assert!(u.is_finite(), "unknowns must range over a finite group");
    let k = a.len();
    assert_eq!(b.len(), k);
    let n = if k > 0 { a[0].len() } else { 0 };
    for row in a {
        assert_eq!(row.len(), n);
    }
    for e in b {
        assert_eq!(e.0.len(), u.dims());
    }

    let mut particular = vec![u.zero(); n];
    let mut homogeneous: Vec<Vec<GroupElement>> = Vec::new();

    for (t, &m) in u.moduli().iter().enumerate() {
        let mbig = BigInt::from(m);
        // augmented system [A | mI] x' = b over Z
        let mut aug: Mat = Vec::with_capacity(k);
        for i in 0..k {
            let mut row: Vec<BigInt> = a[i].iter().map(|&c| BigInt::from(c)).collect();
            for j in 0..k {
                row.push(if i == j { mbig.clone() } else { BigInt::zero() });
            }
            aug.push(row);
        }
        let bt: Vec<BigInt> = b.iter().map(|e| BigInt::from(e.0[t])).collect();
        if k == 0 {
            // no equations: every coordinate free
            for j in 0..n {
                let mut h = vec![u.zero(); n];
                h[j] = u.generator(t);
                homogeneous.push(h);
            }
            continue;
        }
        let s = smith_normal_form(&aug);
        let y = mat_vec(&s.u, &bt);
        let rank = s.diag.iter().filter(|d| !d.is_zero()).count();
        // the mI block gives the augmented matrix full row rank
        assert_eq!(rank, k);
        if let Some(i) = (0..k).find(|&i| !y[i].mod_floor(&s.diag[i]).is_zero()) {
            return SolveOutcome::Infeasible(InfeasibilityCertificate {
                component: t,
                component_modulus: m,
                modulus: s.diag[i].clone(),
                functional: s.u[i].clone(),
            });
        }
        // particular: x' = V ŷ with ŷ_i = y_i / d_i
        let cols = n + k;
        let mut yhat = vec![BigInt::zero(); cols];
        for i in 0..rank {
            yhat[i] = &y[i] / &s.diag[i];
        }
        let xp = mat_vec(&s.v, &yhat);
        for (j, p) in particular.iter_mut().enumerate().take(n) {
            let c = xp[j].mod_floor(&mbig).to_i64().unwrap();
            p.0[t] = c;
        }
        // homogeneous generators: kernel columns of V, projected to the first n coords
        for i in rank..cols {
            let mut gen = vec![u.zero(); n];
            let mut nonzero = false;
            for (j, g) in gen.iter_mut().enumerate().take(n) {
                let c = s.v[j][i].mod_floor(&mbig).to_i64().unwrap();
                if c != 0 {
                    nonzero = true;
                }
                g.0[t] = c;
            }
            if nonzero {
                homogeneous.push(gen);
            }
        }
    }

    SolveOutcome::Solvable(SolutionFamily {
        group: u.clone(),
        unknowns: n,
        particular,
        homogeneous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn order_statistics(g: &AbGroup) -> BTreeMap<u64, usize> {
        let mut stats = BTreeMap::new();
        for x in g.elements().unwrap() {
            *stats.entry(g.element_order(&x).unwrap()).or_insert(0) += 1;
        }
        stats
    }

    #[test]
    fn canonical_forms_match_known_decompositions() {
        let cases: Vec<(Vec<u64>, Vec<u64>)> = vec![
            (vec![4, 6], vec![2, 12]),
            (vec![2, 3], vec![6]),
            (vec![6, 4, 10], vec![2, 2, 60]),
            (vec![2, 2], vec![2, 2]),
            (vec![12], vec![12]),
        ];
        for (pres, expect) in cases {
            let g = AbGroup::new(&pres, 0);
            let iso = g.canonicalized();
            assert_eq!(iso.canonical.moduli(), expect.as_slice(), "presentation {pres:?}");
            // invariant factors divide successively
            for w in expect.windows(2) {
                assert_eq!(w[1] % w[0], 0);
            }
        }
    }

    #[test]
    fn canonical_iso_is_a_group_isomorphism() {
        let g = AbGroup::new(&[4, 6], 0);
        let iso = g.canonicalized();
        let h = &iso.canonical;
        assert_eq!(h.order(), g.order());
        // CRT oracle: same number of elements of each order
        assert_eq!(order_statistics(&g), order_statistics(h));
        // bijectivity and round trips
        let mut seen = BTreeSet::new();
        for x in g.elements().unwrap() {
            let y = iso.to_canonical(&x);
            assert_eq!(iso.from_canonical(&y), x);
            seen.insert(y);
        }
        assert_eq!(seen.len() as u64, g.order().unwrap());
        // homomorphism property on all pairs
        let elems = g.elements().unwrap();
        for x in &elems {
            for y in &elems {
                let lhs = iso.to_canonical(&g.add(x, y));
                let rhs = h.add(&iso.to_canonical(x), &iso.to_canonical(y));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn canonicalization_with_free_part() {
        let g = AbGroup::new(&[2, 4], 2);
        let iso = g.canonicalized();
        assert_eq!(iso.canonical.moduli(), &[2, 4]);
        assert_eq!(iso.canonical.rank(), 2);
        let x = g.from_coords(&[1, 3, -5, 7]).unwrap();
        assert_eq!(iso.from_canonical(&iso.to_canonical(&x)), x);
    }

    #[test]
    fn element_indexing_round_trips() {
        let g = AbGroup::new(&[3, 5], 0);
        for i in 0..15 {
            assert_eq!(g.index_of(&g.element_at(i)), i);
        }
        assert_eq!(g.elements().unwrap().len(), 15);
    }

    #[test]
    fn subgroup_index_matches_brute_force() {
        let g = AbGroup::new(&[6, 4], 0);
        for m in 1..=8i64 {
            let image = {
                let mut set = BTreeSet::new();
                for x in g.elements().unwrap() {
                    set.insert(g.scalar_mul(m, &x));
                }
                set.len() as u64
            };
            assert_eq!(g.subgroup_index(m), Some(g.order().unwrap() / image), "m={m}");
        }
        assert_eq!(g.subgroup_index(0), Some(24));
        let zr = AbGroup::new(&[6], 2);
        assert_eq!(zr.subgroup_index(3), Some(9 * 3));
        assert_eq!(zr.subgroup_index(0), None);
    }

    #[test]
    fn characters_are_orthogonal() {
        use crate::cyclo::{CycloRat, ExactComplex};
        let g = AbGroup::new(&[2, 4], 0);
        let chars = g.characters().unwrap();
        assert_eq!(chars.len(), 8);
        let elems = g.elements().unwrap();
        for ch in &chars {
            let mut sum = CycloRat::zero();
            for x in &elems {
                sum = sum.add(&CycloRat::root_of_unity(ch.eval(x).rational_part()));
            }
            if ch.is_trivial() {
                assert_eq!(
                    ExactComplex::from_cyclo(sum),
                    ExactComplex::from_rational_i64(8, 1)
                );
            } else {
                assert!(sum.is_zero(), "character {:?}", ch.label());
            }
        }
        // multiplicativity
        let ch = &chars[5];
        for x in &elems {
            for y in &elems {
                let lhs = ch.eval(&g.add(x, y));
                let rhs = ch.eval(x).add(&ch.eval(y));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn folner_windows_have_expected_shape() {
        let g = AbGroup::new(&[3], 2);
        let w = g.folner_window(2, &FolnerScheme::Box).unwrap();
        assert_eq!(w.len(), 3 * 25);
        let shifted = g
            .folner_window(2, &FolnerScheme::ShiftedBox(vec![100, -100]))
            .unwrap();
        assert_eq!(shifted.len(), 3 * 25);
        let wset: BTreeSet<_> = w.iter().collect();
        assert!(shifted.iter().all(|x| !wset.contains(x)));
        // finite group: window is the whole group at any radius
        let f = AbGroup::new(&[2, 2], 0);
        assert_eq!(f.folner_window(0, &FolnerScheme::Box).unwrap().len(), 4);
        assert_eq!(f.folner_window(9, &FolnerScheme::Box).unwrap().len(), 4);
    }

    #[test]
    fn subgroup_closure_finds_the_generated_subgroup() {
        let g = AbGroup::new(&[4, 4], 0);
        let h = g
            .subgroup_closure(
                &[g.from_coords(&[2, 0]).unwrap(), g.from_coords(&[0, 2]).unwrap()],
                100,
            )
            .unwrap();
        assert_eq!(h.len(), 4);
        let zr = AbGroup::new(&[], 1);
        assert!(zr.subgroup_closure(&[GroupElement(vec![1])], 100).is_err());
    }

    #[test]
    fn solve_group_linear_matches_brute_force() {
        let u = AbGroup::new(&[2, 4], 0);
        // y1 + y2 = b1, 2 y1 - y2 = b2
        let a = vec![vec![1, 1], vec![2, -1]];
        let b1 = u.from_coords(&[1, 3]).unwrap();
        let b2 = u.from_coords(&[0, 2]).unwrap();
        let b = vec![b1.clone(), b2.clone()];
        let mut expect = Vec::new();
        let elems = u.elements().unwrap();
        for y1 in &elems {
            for y2 in &elems {
                let e1 = u.add(y1, y2);
                let e2 = u.sub(&u.scalar_mul(2, y1), y2);
                if e1 == b1 && e2 == b2 {
                    expect.push(vec![y1.clone(), y2.clone()]);
                }
            }
        }
        expect.sort();
        match solve_group_linear(&u, &a, &b) {
            SolveOutcome::Solvable(fam) => {
                let got = fam.enumerate(10_000).unwrap();
                assert_eq!(got, expect);
            }
            SolveOutcome::Infeasible(_) => panic!("expected solvable"),
        }
    }

    #[test]
    fn infeasible_system_yields_verified_certificate() {
        let u = AbGroup::cyclic(4);
        // 2y = 1 has no solution in Z/4
        let a = vec![vec![2]];
        let b = vec![u.from_coords(&[1]).unwrap()];
        match solve_group_linear(&u, &a, &b) {
            SolveOutcome::Solvable(_) => panic!("expected infeasible"),
            SolveOutcome::Infeasible(cert) => {
                assert!(cert.verify(&a, &b));
            }
        }
    }

    #[test]
    fn underdetermined_system_has_full_family() {
        let u = AbGroup::cyclic(3);
        // one equation, two unknowns: y1 + y2 = 1
        let a = vec![vec![1, 1]];
        let b = vec![u.from_coords(&[1]).unwrap()];
        match solve_group_linear(&u, &a, &b) {
            SolveOutcome::Solvable(fam) => {
                let got = fam.enumerate(100).unwrap();
                assert_eq!(got.len(), 3);
                for sol in &got {
                    assert_eq!(u.add(&sol[0], &sol[1]), b[0]);
                }
            }
            SolveOutcome::Infeasible(_) => panic!("expected solvable"),
        }
    }

    #[test]
    fn no_equations_means_every_assignment() {
        let u = AbGroup::cyclic(2);
        match solve_group_linear(&u, &[], &[]) {
            SolveOutcome::Solvable(fam) => {
                assert_eq!(fam.unknowns, 0);
                assert_eq!(fam.enumerate(10).unwrap(), vec![Vec::<GroupElement>::new()]);
            }
            SolveOutcome::Infeasible(_) => panic!(),
        }
    }

    #[test]
    fn element_orders() {
        let g = AbGroup::new(&[4, 8], 0);
        assert_eq!(g.element_order(&g.from_coords(&[1, 2]).unwrap()), Some(4));
        assert_eq!(g.element_order(&g.from_coords(&[0, 1]).unwrap()), Some(8));
        assert_eq!(g.element_order(&g.zero()), Some(1));
        let z = AbGroup::free(1);
        assert_eq!(z.element_order(&GroupElement(vec![3])), None);
        assert_eq!(z.element_order(&z.zero()), Some(1));
    }
}
