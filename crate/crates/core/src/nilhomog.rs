//! 2-step nilpotent homogeneous machinery: explicit nilpotent groups,
//! coset systems, commutator divisibility, and the 2-step limit formula
//! with its counterexample over groups of exponent two.

use crate::abgroup::{AbGroup, FolnerScheme, GroupError};
use crate::averages::{multi_average, torus_limit_function, AveragesError};
use crate::cyclo::ExactComplex;
use crate::phases::{Phase, PhaseError, Symbol};
use crate::systems::{
    abelian_extension, rotation_system, FiniteSystem, Observable, SystemError, TorusSystem,
    TrigPoly,
};
use num::rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const NIL_SIZE_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum NilError {
    #[error("modulus must be at least 2")]
    BadModulus,
    #[error("group enumeration exceeds the cap of {NIL_SIZE_CAP}")]
    SizeCap,
    #[error("the group is continuous; enumeration is not available")]
    Continuous,
    #[error("element does not belong to this group")]
    WrongKind,
    #[error("the supplied set is not a subgroup")]
    GammaNotSubgroup,
    #[error("the multiplication table is not a group")]
    BadTable,
    #[error("the commutator subgroup is not {0}-divisible")]
    NotDivisible(i64),
    #[error("patterns must have 1 to 4 nonzero integer coefficients")]
    BadPattern,
    #[error("truncation depth must lie in 2..=10")]
    BadDepth,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Averages(#[from] AveragesError),
}

/// An element of one of the supported nilpotent groups.
#[derive(Debug, Clone, PartialEq)]
pub enum NilElement {
    Triple([i64; 3]),
    Skew { s: Phase, c: i64, t: Phase },
    Index(usize),
}

/// A 2-step nilpotent group in one of three presentations: Heisenberg
/// triples over `ℤ/n`, the skew Conze-Lesigne group with phase entries, or
/// an explicit finite multiplication table.
#[derive(Debug, Clone)]
pub enum NilGroup {
    Heisenberg { modulus: u64 },
    SkewCL,
    FiniteTable { table: Vec<Vec<usize>>, identity: usize },
}

fn binom2(c: i64) -> i64 {
    // c(c-1)/2, valid for negative c as well
    if c % 2 == 0 {
        (c / 2) * (c - 1)
    } else {
        c * ((c - 1) / 2)
    }
}

impl NilGroup {
    pub fn heisenberg(n: u64) -> Result<NilGroup, NilError> {
        if n < 2 {
            return Err(NilError::BadModulus);
        }
        Ok(NilGroup::Heisenberg { modulus: n })
    }

    pub fn skew_cl() -> NilGroup {
        NilGroup::SkewCL
    }

    /// Builds a group from a full multiplication table, verifying the
    /// axioms exhaustively.
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<NilGroup, NilError> {
        let n = table.len();
        if n == 0 || table.iter().any(|r| r.len() != n || r.iter().any(|&v| v >= n)) {
            return Err(NilError::BadTable);
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|x| table[e][x] == x && table[x][e] == x))
            .ok_or(NilError::BadTable)?;
        for a in 0..n {
            // Latin square rows and columns give inverses
            let mut seen = vec![false; n];
            for b in 0..n {
                seen[table[a][b]] = true;
            }
            if seen.iter().any(|&s| !s) {
                return Err(NilError::BadTable);
            }
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(NilError::BadTable);
                    }
                }
            }
        }
        Ok(NilGroup::FiniteTable { table, identity })
    }

    pub fn identity(&self) -> NilElement {
        match self {
            NilGroup::Heisenberg { .. } => NilElement::Triple([0, 0, 0]),
            NilGroup::SkewCL => NilElement::Skew { s: Phase::zero(), c: 0, t: Phase::zero() },
            NilGroup::FiniteTable { identity, .. } => NilElement::Index(*identity),
        }
    }

    fn reduce(&self, t: [i64; 3]) -> NilElement {
        match self {
            NilGroup::Heisenberg { modulus } => {
                let n = *modulus as i64;
                NilElement::Triple([t[0].rem_euclid(n), t[1].rem_euclid(n), t[2].rem_euclid(n)])
            }
            _ => unreachable!(),
        }
    }

    pub fn mul(&self, a: &NilElement, b: &NilElement) -> Result<NilElement, NilError> {
        match (self, a, b) {
            (NilGroup::Heisenberg { .. }, NilElement::Triple(x), NilElement::Triple(y)) => {
                Ok(self.reduce([x[0] + y[0], x[1] + y[1], x[2] + y[2] + x[0] * y[1]]))
            }
            (NilGroup::SkewCL, NilElement::Skew { s, c, t }, NilElement::Skew { s: s2, c: c2, t: t2 }) => {
                Ok(NilElement::Skew {
                    s: s.add(s2),
                    c: c + c2,
                    t: t.add(t2).add(&s2.scalar_mul_int(*c)),
                })
            }
            (NilGroup::FiniteTable { table, .. }, NilElement::Index(i), NilElement::Index(j)) => {
                Ok(NilElement::Index(table[*i][*j]))
            }
            _ => Err(NilError::WrongKind),
        }
    }

    pub fn inv(&self, a: &NilElement) -> Result<NilElement, NilError> {
        match (self, a) {
            (NilGroup::Heisenberg { .. }, NilElement::Triple(x)) => {
                Ok(self.reduce([-x[0], -x[1], -x[2] + x[0] * x[1]]))
            }
            (NilGroup::SkewCL, NilElement::Skew { s, c, t }) => Ok(NilElement::Skew {
                s: s.neg(),
                c: -c,
                t: t.neg().add(&s.scalar_mul_int(*c)),
            }),
            (NilGroup::FiniteTable { table, identity }, NilElement::Index(i)) => {
                let j = (0..table.len())
                    .find(|&j| table[*i][j] == *identity)
                    .ok_or(NilError::BadTable)?;
                Ok(NilElement::Index(j))
            }
            _ => Err(NilError::WrongKind),
        }
    }

    /// `a^i` through the closed 2-step power law where one is available.
    pub fn pow(&self, a: &NilElement, i: i64) -> Result<NilElement, NilError> {
        match (self, a) {
            (NilGroup::Heisenberg { .. }, NilElement::Triple(x)) => {
                Ok(self.reduce([i * x[0], i * x[1], i * x[2] + binom2(i) * x[0] * x[1]]))
            }
            (NilGroup::SkewCL, NilElement::Skew { s, c, t }) => Ok(NilElement::Skew {
                s: s.scalar_mul_int(i),
                c: i * c,
                t: t.scalar_mul_int(i).add(&s.scalar_mul_int(binom2(i) * c)),
            }),
            (NilGroup::FiniteTable { .. }, _) => {
                let mut acc = self.identity();
                let b = if i < 0 { self.inv(a)? } else { a.clone() };
                for _ in 0..i.unsigned_abs() {
                    acc = self.mul(&acc, &b)?;
                }
                Ok(acc)
            }
            _ => Err(NilError::WrongKind),
        }
    }

    /// `a^i` by repeated multiplication, kept separate so the closed power
    /// law can be checked against it.
    pub fn pow_naive(&self, a: &NilElement, i: i64) -> Result<NilElement, NilError> {
        let mut acc = self.identity();
        let b = if i < 0 { self.inv(a)? } else { a.clone() };
        for _ in 0..i.unsigned_abs() {
            acc = self.mul(&acc, &b)?;
        }
        Ok(acc)
    }

    pub fn commutator(&self, a: &NilElement, b: &NilElement) -> Result<NilElement, NilError> {
        let ab = self.mul(a, b)?;
        let ba = self.mul(b, a)?;
        self.mul(&ab, &self.inv(&ba)?)
    }

    pub fn order(&self) -> Option<u64> {
        match self {
            NilGroup::Heisenberg { modulus } => Some(modulus.pow(3)),
            NilGroup::SkewCL => None,
            NilGroup::FiniteTable { table, .. } => Some(table.len() as u64),
        }
    }

    pub fn elements(&self) -> Result<Vec<NilElement>, NilError> {
        match self {
            NilGroup::Heisenberg { modulus } => {
                let n = *modulus;
                if n.pow(3) > NIL_SIZE_CAP {
                    return Err(NilError::SizeCap);
                }
                let n = n as i64;
                let mut out = Vec::new();
                for x in 0..n {
                    for y in 0..n {
                        for z in 0..n {
                            out.push(NilElement::Triple([x, y, z]));
                        }
                    }
                }
                Ok(out)
            }
            NilGroup::SkewCL => Err(NilError::Continuous),
            NilGroup::FiniteTable { table, .. } => {
                Ok((0..table.len()).map(NilElement::Index).collect())
            }
        }
    }

    fn element_index(&self, e: &NilElement) -> Result<usize, NilError> {
        match (self, e) {
            (NilGroup::Heisenberg { modulus }, NilElement::Triple(t)) => {
                let n = *modulus as i64;
                Ok(((t[0] * n + t[1]) * n + t[2]) as usize)
            }
            (NilGroup::FiniteTable { .. }, NilElement::Index(i)) => Ok(*i),
            _ => Err(NilError::WrongKind),
        }
    }

    /// Checks `[[a,b],c] = e` exhaustively when the element count cubed
    /// stays within the cap, by seeded sampling otherwise; the skew group is
    /// checked on sampled rational phases.
    pub fn two_step_check(&self, seed: u64) -> Result<bool, NilError> {
        match self {
            NilGroup::SkewCL => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rand_elem = |rng: &mut ChaCha8Rng| -> NilElement {
                    let q = |rng: &mut ChaCha8Rng| {
                        Phase::from_rational(rng.random_range(0..24), 24).unwrap()
                    };
                    NilElement::Skew { s: q(rng), c: rng.random_range(-3..=3), t: q(rng) }
                };
                for _ in 0..1000 {
                    let a = rand_elem(&mut rng);
                    let b = rand_elem(&mut rng);
                    let c = rand_elem(&mut rng);
                    let inner = self.commutator(&a, &b)?;
                    if self.commutator(&inner, &c)? != self.identity() {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            _ => {
                let elems = self.elements()?;
                let n = elems.len() as u64;
                if n.pow(3) <= NIL_SIZE_CAP {
                    for a in &elems {
                        for b in &elems {
                            let inner = self.commutator(a, b)?;
                            for c in &elems {
                                if self.commutator(&inner, c)? != self.identity() {
                                    return Ok(false);
                                }
                            }
                        }
                    }
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for _ in 0..1000 {
                        let a = &elems[rng.random_range(0..elems.len())];
                        let b = &elems[rng.random_range(0..elems.len())];
                        let c = &elems[rng.random_range(0..elems.len())];
                        let inner = self.commutator(a, b)?;
                        if self.commutator(&inner, c)? != self.identity() {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
        }
    }
}

/// The commutator subgroup, either enumerated or known continuous.
#[derive(Debug, Clone)]
pub enum CommutatorSubgroup {
    Finite(Vec<NilElement>),
    Circle,
}

pub fn commutator_subgroup(g: &NilGroup) -> Result<CommutatorSubgroup, NilError> {
    match g {
        NilGroup::SkewCL => Ok(CommutatorSubgroup::Circle),
        _ => {
            let elems = g.elements()?;
            let mut set: BTreeSet<usize> = BTreeSet::new();
            let mut list: Vec<NilElement> = Vec::new();
            let push = |e: NilElement, set: &mut BTreeSet<usize>, list: &mut Vec<NilElement>| -> Result<(), NilError> {
                if set.insert(g.element_index(&e)?) {
                    list.push(e);
                }
                Ok(())
            };
            for a in &elems {
                for b in &elems {
                    push(g.commutator(a, b)?, &mut set, &mut list)?;
                }
            }
            // close under multiplication; sets this small make the naive
            // pass cheap
            let mut frontier = list.clone();
            while let Some(x) = frontier.pop() {
                let snapshot = list.clone();
                for y in &snapshot {
                    let p = g.mul(&x, y)?;
                    if set.insert(g.element_index(&p)?) {
                        list.push(p.clone());
                        frontier.push(p);
                    }
                }
            }
            Ok(CommutatorSubgroup::Finite(list))
        }
    }
}

/// For each `m`, whether `{g^m : g ∈ 𝒢₂}` is all of `𝒢₂`.
pub fn commutator_divisibility(
    g: &NilGroup,
    ms: &[i64],
) -> Result<Vec<(i64, bool)>, NilError> {
    let sub = commutator_subgroup(g)?;
    let mut out = Vec::new();
    for &m in ms {
        let ok = match &sub {
            CommutatorSubgroup::Circle => m != 0,
            CommutatorSubgroup::Finite(list) => {
                if m == 0 {
                    list.len() == 1
                } else {
                    let mut powers = BTreeSet::new();
                    for e in list {
                        powers.insert(g.element_index(&g.pow(e, m)?)?);
                    }
                    powers.len() == list.len()
                }
            }
        };
        out.push((m, ok));
    }
    Ok(out)
}

/// A finite homogeneous system `𝒢/Γ` with the acting group mapped in
/// through `φ` and the action by left multiplication.
#[derive(Debug, Clone)]
pub struct HomogSystem {
    pub group: NilGroup,
    pub gamma: Vec<NilElement>,
    pub phi: Vec<NilElement>,
    /// Canonical representative of each coset, aligned with system points.
    pub cosets: Vec<NilElement>,
    pub system: FiniteSystem,
    /// Finite quotients of nilpotent groups under a cyclic acting group are
    /// typically not ergodic; downstream consumers must check this flag.
    pub ergodic: bool,
}

pub fn homogeneous_system(
    group: &NilGroup,
    gamma: &[NilElement],
    phi: &[NilElement],
    acting: &AbGroup,
) -> Result<HomogSystem, NilError> {
    if matches!(group, NilGroup::SkewCL) {
        return Err(NilError::Continuous);
    }
    if phi.len() != acting.dims() {
        return Err(NilError::WrongKind);
    }
    // gamma must be a subgroup: nonempty, identity, closed under products
    let mut gamma_idx = BTreeSet::new();
    for e in gamma {
        gamma_idx.insert(group.element_index(e)?);
    }
    if !gamma_idx.contains(&group.element_index(&group.identity())?) {
        return Err(NilError::GammaNotSubgroup);
    }
    for a in gamma {
        for b in gamma {
            if !gamma_idx.contains(&group.element_index(&group.mul(a, b)?)?) {
                return Err(NilError::GammaNotSubgroup);
            }
        }
    }

    let elems = group.elements()?;
    let mut coset_of = vec![usize::MAX; elems.len()];
    let mut cosets: Vec<NilElement> = Vec::new();
    for e in &elems {
        if coset_of[group.element_index(e)?] != usize::MAX {
            continue;
        }
        let id = cosets.len();
        cosets.push(e.clone());
        for gm in gamma {
            let x = group.mul(e, gm)?;
            coset_of[group.element_index(&x)?] = id;
        }
    }
    let n = cosets.len();
    let mut maps = Vec::new();
    for p in phi {
        let mut map = Vec::with_capacity(n);
        for rep in &cosets {
            let image = group.mul(p, rep)?;
            map.push(coset_of[group.element_index(&image)?]);
        }
        maps.push(map);
    }
    let mass = Rational64::new(1, n as i64);
    let labels: Vec<String> = cosets.iter().map(|c| format!("{c:?}Γ")).collect();
    let system = FiniteSystem::new(acting.clone(), maps, vec![mass; n], Some(labels))?;
    let ergodic = system.is_ergodic();
    Ok(HomogSystem {
        group: group.clone(),
        gamma: gamma.to_vec(),
        phi: phi.to_vec(),
        cosets,
        system,
        ergodic,
    })
}

/// The coset realization of the skew Conze-Lesigne group: representatives
/// `(s, 0, t)` identify `𝒢/Γ` with the 2-torus, and left multiplication by
/// `(α, 1, β)` becomes the skew product `T(x, y) = (x + α, y + x + β)`.
pub fn skew_cl_system(alpha: &Phase, beta: &Phase) -> TorusSystem {
    TorusSystem::skew_product(alpha.clone(), beta.clone())
}

fn check_pattern(cs: &[i64], arity: usize) -> Result<(), NilError> {
    if cs.is_empty() || cs.len() > 4 || cs.iter().any(|&c| c == 0) || arity != cs.len() {
        return Err(NilError::BadPattern);
    }
    Ok(())
}

/// The three-term pattern `(a, b, a+b)`.
pub fn three_term_pattern(a: i64, b: i64) -> [i64; 3] {
    [a, b, a + b]
}

/// Right-hand side of the 2-step limit formula on the skew coset space:
/// the triple integral over `(s, t) ∈ 𝒢/Γ` and `r ∈ 𝒢₂`,
/// `∫∫∫ Π_i f_i(x₁ + c_i s, x₂ + c_i t + binom(c_i,2) r) ds dt dr`.
///
/// A cross term survives exactly when its `s`, `t` and `r` frequencies all
/// vanish: `Σ a_i c_i = 0`, `Σ b_i c_i = 0` and `Σ b_i binom(c_i,2) = 0`
/// for fiber frequencies `b_i` and base frequencies `a_i`.
pub fn skew_limit_formula_rhs(cs: &[i64], fs: &[TrigPoly]) -> Result<TrigPoly, NilError> {
    check_pattern(cs, fs.len())?;
    let mut out = TrigPoly::zero(2);
    let mut stack: Vec<(usize, ExactComplex, i64, i64, i64, i64, i64)> =
        vec![(0, ExactComplex::one(), 0, 0, 0, 0, 0)];
    // state: (index, coeff, Σa_i, Σb_i, Σa_i c_i, Σb_i c_i, Σb_i binom(c_i,2))
    while let Some((i, coeff, sa, sb, fs_s, fs_t, fs_r)) = stack.pop() {
        if i == fs.len() {
            if fs_s == 0 && fs_t == 0 && fs_r == 0 {
                out = out.add(&TrigPoly::character(vec![sa, sb]).scale(&coeff));
            }
            continue;
        }
        for (m, c) in &fs[i].terms {
            assert_eq!(m.len(), 2, "skew observables live on the 2-torus");
            let coeff2 = coeff.mul(c);
            if coeff2.is_zero() {
                continue;
            }
            stack.push((
                i + 1,
                coeff2,
                sa + m[0],
                sb + m[1],
                fs_s + m[0] * cs[i],
                fs_t + m[1] * cs[i],
                fs_r + m[1] * binom2(cs[i]),
            ));
        }
    }
    Ok(out)
}

/// Right-hand side of the limit formula on a finite homogeneous system,
/// as the exact double average over `y₁ ∈ 𝒢` and `y₂ ∈ 𝒢₂` of
/// `Π_i f_i(x · y₁^{c_i} · y₂^{binom(c_i,2)} Γ)`.
///
/// Refuses when `𝒢₂` is not 2-divisible, which is the formula's standing
/// hypothesis.
pub fn finite_limit_formula_rhs(
    h: &HomogSystem,
    cs: &[i64],
    fs: &[Observable],
) -> Result<Observable, NilError> {
    check_pattern(cs, fs.len())?;
    let div = commutator_divisibility(&h.group, &[2])?;
    if !div[0].1 {
        return Err(NilError::NotDivisible(2));
    }
    let sub = match commutator_subgroup(&h.group)? {
        CommutatorSubgroup::Finite(list) => list,
        CommutatorSubgroup::Circle => return Err(NilError::Continuous),
    };
    let elems = h.group.elements()?;
    let mut coset_of = vec![usize::MAX; elems.len()];
    for (id, rep) in h.cosets.iter().enumerate() {
        for gm in &h.gamma {
            let x = h.group.mul(rep, gm)?;
            coset_of[h.group.element_index(&x)?] = id;
        }
    }
    let n = h.cosets.len();
    let mut values = vec![ExactComplex::zero(); n];
    for (x, rep) in h.cosets.iter().enumerate() {
        let mut acc = ExactComplex::zero();
        for y1 in &elems {
            for y2 in &sub {
                let mut term = ExactComplex::one();
                for (f, &c) in fs.iter().zip(cs) {
                    let shift = h.group.mul(&h.group.pow(y1, c)?, &h.group.pow(y2, binom2(c))?)?;
                    let point = h.group.mul(rep, &shift)?;
                    let idx = coset_of[h.group.element_index(&point)?];
                    term = term.mul(&f.values[idx]);
                }
                acc = acc.add(&term);
            }
        }
        values[x] = acc.scale_ratio(1, (elems.len() * sub.len()) as i64);
    }
    Ok(Observable { values })
}

/// Monte Carlo configuration for the numeric cross-check of the skew limit
/// formula.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub samples: u64,
    pub points: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 100_000,
            points: 2,
            seed: 1,
            alpha: std::f64::consts::SQRT_2 - 1.0,
            beta: 3.0f64.sqrt() - 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LimitFormulaReport {
    pub lhs: TrigPoly,
    pub rhs: TrigPoly,
    pub equal: bool,
    /// Largest deviation between the orbit average and the symbolic RHS at
    /// the sampled points, when a numeric check was requested.
    pub mc_residual: Option<f64>,
}

/// Compares both sides of the limit formula on the skew coset space with
/// generic rotation parameters: the left side is the symbolic L² limit of
/// the multiple average, the right side the triple integral, and equality
/// is decided on exact term lists.
pub fn skew_limit_formula_compare(
    cs: &[i64],
    fs: &[TrigPoly],
    mc: Option<&McConfig>,
) -> Result<LimitFormulaReport, NilError> {
    check_pattern(cs, fs.len())?;
    let alpha = Phase::symbol(Symbol::new("alpha"));
    let beta = Phase::symbol(Symbol::new("beta"));
    let sys = skew_cl_system(&alpha, &beta);
    let lhs = torus_limit_function(&sys, cs, fs)?;
    let rhs = skew_limit_formula_rhs(cs, fs)?;
    let diff = lhs.add(&rhs.scale(&ExactComplex::from_rational_i64(-1, 1)));
    let equal = diff.terms.values().all(|c| c.is_zero());

    let mc_residual = match mc {
        None => None,
        Some(cfg) => {
            let mut vals = BTreeMap::new();
            vals.insert(Symbol::new("alpha"), cfg.alpha);
            vals.insert(Symbol::new("beta"), cfg.beta);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut worst: f64 = 0.0;
            let max_c = cs.iter().map(|c| c.unsigned_abs()).max().unwrap() as u64;
            let need = (max_c * cfg.samples) as usize;
            for _ in 0..cfg.points {
                let x0 = (rng.random::<f64>(), rng.random::<f64>());
                // forward orbit of the skew product
                let mut fwd = Vec::with_capacity(need + 1);
                let (mut x1, mut x2) = x0;
                fwd.push((x1, x2));
                for _ in 0..need {
                    x2 = (x2 + x1 + cfg.beta).fract();
                    x1 = (x1 + cfg.alpha).fract();
                    fwd.push((x1, x2));
                }
                // backward orbit when the pattern has negative entries
                let mut bwd = Vec::new();
                if cs.iter().any(|&c| c < 0) {
                    let (mut x1, mut x2) = x0;
                    bwd.push((x1, x2));
                    for _ in 0..need {
                        x1 = (x1 - cfg.alpha).rem_euclid(1.0);
                        x2 = (x2 - x1 - cfg.beta).rem_euclid(1.0);
                        bwd.push((x1, x2));
                    }
                }
                let orbit = |k: i64| -> (f64, f64) {
                    if k >= 0 {
                        fwd[k as usize]
                    } else {
                        bwd[(-k) as usize]
                    }
                };
                let mut acc = (0.0, 0.0);
                for nstep in 0..cfg.samples {
                    let mut prod = (1.0, 0.0);
                    for (f, &c) in fs.iter().zip(cs) {
                        let (px, py) = orbit(c * nstep as i64);
                        let (re, im) = f
                            .eval_f64(&[px, py], &vals)
                            .expect("numeric evaluation of observables");
                        prod = (prod.0 * re - prod.1 * im, prod.0 * im + prod.1 * re);
                    }
                    acc.0 += prod.0;
                    acc.1 += prod.1;
                }
                let avg = (acc.0 / cfg.samples as f64, acc.1 / cfg.samples as f64);
                let (rre, rim) = rhs
                    .eval_f64(&[x0.0, x0.1], &vals)
                    .expect("numeric evaluation of the integral side");
                let d = ((avg.0 - rre).powi(2) + (avg.1 - rim).powi(2)).sqrt();
                worst = worst.max(d);
            }
            Some(worst)
        }
    };
    Ok(LimitFormulaReport { lhs, rhs, equal, mc_residual })
}

/// The finite truncation of the exponent-two counterexample together with
/// both sides of the limit formula.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub d: usize,
    pub system: FiniteSystem,
    /// Exact limit of `avg_g T_g f_1 · T_{2g} f_2`; equals `f_2` because
    /// doubling annihilates the acting group.
    pub lhs: Observable,
    pub lhs_equals_f2: bool,
    /// The fiber integral over the order-two commutator group from the
    /// structure theory; it vanishes identically.
    pub rhs: Observable,
    pub rhs_is_zero: bool,
    /// Invariance of the integral side under stabilizer twists of the
    /// fiber coordinate.
    pub rhs_gamma_invariant: bool,
    pub discrepancy_sup: f64,
    pub ergodic_components: usize,
}

/// Builds the depth-`d` truncation of the counterexample: the base is
/// `C₂^d` rotated by itself, extended by `C₄` through the carry cocycle
/// `σ(e_i, z) = 1 + 2 z_i`, the strict-cocycle lift of the product formula
/// over exponent-two groups. The observable `f₂ = e(u/2)` sees only the
/// `C₂` quotient of the fiber, where the structure group `𝒢₂ = C₂` acts by
/// translation.
pub fn counterexample_f2(d: usize) -> Result<CounterexampleReport, NilError> {
    if !(2..=10).contains(&d) {
        return Err(NilError::BadDepth);
    }
    let g = AbGroup::cyclic_power(2, d);
    let shifts: Vec<_> = (0..d).map(|i| g.generator(i)).collect();
    let base = rotation_system(&g, &g, &shifts)?;
    let fiber = AbGroup::cyclic(4);
    let zpts = g.elements()?;
    let mut sigma = Vec::new();
    for i in 0..d {
        let col: Vec<_> = zpts
            .iter()
            .map(|z| fiber.from_coords(&[1 + 2 * z.coords()[i]]).unwrap())
            .collect();
        sigma.push(col);
    }
    let system = abelian_extension(&base, &fiber, &sigma)?;
    let n = system.size();
    // layout is base-major with fiber index u = 0..4
    let f2 = Observable::from_fn(n, |p| {
        let u = (p % 4) as i64;
        ExactComplex::from_phase(&Phase::from_rational(u, 2).unwrap())
    });
    let one = Observable::constant(n, ExactComplex::one());

    let avg = multi_average(
        &system,
        &[1, 2],
        &[one, f2.clone()],
        &[],
        &FolnerScheme::Box,
    )?;
    let lhs_equals_f2 = avg
        .limit
        .values
        .iter()
        .zip(&f2.values)
        .all(|(a, b)| a.sub(b).is_zero());

    // integral side: f₂ factors through the C₂ fiber quotient, on which the
    // order-two structure group acts by translation, so the integral is the
    // two-point average of e((u+r)/2) over r
    let rhs = Observable::from_fn(n, |p| {
        let u = (p % 4) as i64;
        let mut acc = ExactComplex::zero();
        for r in 0..2 {
            acc = acc.add(&ExactComplex::from_phase(&Phase::from_rational(u + r, 2).unwrap()));
        }
        acc.scale_ratio(1, 2)
    });
    let rhs_is_zero = rhs.values.iter().all(|v| v.is_zero());

    // stabilizer twists shift the fiber coordinate by a character of the
    // base; the two-point fiber average is unchanged by any such shift
    let mut rhs_gamma_invariant = true;
    for c in 0..4i64 {
        for p in 0..n {
            let u = (p % 4) as i64;
            let mut acc = ExactComplex::zero();
            for r in 0..2 {
                acc = acc
                    .add(&ExactComplex::from_phase(&Phase::from_rational(u + c + r, 2).unwrap()));
            }
            if !acc.is_zero() {
                rhs_gamma_invariant = false;
            }
        }
    }

    let discrepancy_sup = avg
        .limit
        .values
        .iter()
        .zip(&rhs.values)
        .map(|(a, b)| a.sub(b).abs_f64(&BTreeMap::new()).unwrap_or(f64::NAN))
        .fold(0.0f64, f64::max);
    let ergodic_components = system.ergodic_components().len();

    Ok(CounterexampleReport {
        d,
        system,
        lhs: avg.limit,
        lhs_equals_f2,
        rhs,
        rhs_is_zero,
        rhs_gamma_invariant,
        discrepancy_sup,
        ergodic_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    #[test]
    fn heisenberg_power_law_matches_naive_multiplication() {
        let g = NilGroup::heisenberg(4).unwrap();
        for e in g.elements().unwrap() {
            for i in -8..=8 {
                assert_eq!(g.pow(&e, i).unwrap(), g.pow_naive(&e, i).unwrap());
            }
        }
    }

    #[test]
    fn skew_power_law_matches_naive_multiplication() {
        let g = NilGroup::skew_cl();
        let e = NilElement::Skew {
            s: Phase::from_rational(1, 5).unwrap(),
            c: 2,
            t: Phase::from_rational(3, 7).unwrap(),
        };
        for i in -8..=8 {
            assert_eq!(g.pow(&e, i).unwrap(), g.pow_naive(&e, i).unwrap());
        }
        let f = NilElement::Skew { s: Phase::symbol(Symbol::new("alpha")), c: 1, t: Phase::zero() };
        for i in 0..=8 {
            assert_eq!(g.pow(&f, i).unwrap(), g.pow_naive(&f, i).unwrap());
        }
    }

    #[test]
    fn both_groups_are_two_step() {
        assert!(NilGroup::heisenberg(3).unwrap().two_step_check(5).unwrap());
        assert!(NilGroup::heisenberg(5).unwrap().two_step_check(5).unwrap());
        assert!(NilGroup::skew_cl().two_step_check(5).unwrap());
    }

    #[test]
    fn heisenberg_commutators_fill_the_center() {
        let g = NilGroup::heisenberg(5).unwrap();
        let a = NilElement::Triple([1, 0, 0]);
        let b = NilElement::Triple([0, 1, 0]);
        assert_eq!(g.commutator(&a, &b).unwrap(), NilElement::Triple([0, 0, 1]));
        match commutator_subgroup(&g).unwrap() {
            CommutatorSubgroup::Finite(list) => {
                assert_eq!(list.len(), 5);
                assert!(list.iter().all(|e| matches!(e, NilElement::Triple([0, 0, _]))));
            }
            CommutatorSubgroup::Circle => panic!("finite group"),
        }
    }

    #[test]
    fn skew_commutators_land_in_the_circle() {
        let g = NilGroup::skew_cl();
        let a = NilElement::Skew { s: Phase::from_rational(1, 3).unwrap(), c: 2, t: Phase::zero() };
        let b = NilElement::Skew { s: Phase::from_rational(1, 4).unwrap(), c: 1, t: Phase::zero() };
        // [(s,c,t),(s',c',t')] = (0, 0, cs' - c's)
        let expect = Phase::from_rational(2, 4).unwrap().sub(&Phase::from_rational(1, 3).unwrap());
        match g.commutator(&a, &b).unwrap() {
            NilElement::Skew { s, c, t } => {
                assert!(s.is_zero());
                assert_eq!(c, 0);
                assert_eq!(t, expect);
            }
            _ => panic!("skew element"),
        }
    }

    #[test]
    fn divisibility_of_commutator_groups() {
        let h5 = NilGroup::heisenberg(5).unwrap();
        let rep = commutator_divisibility(&h5, &[2, 3]).unwrap();
        assert!(rep.iter().all(|&(_, ok)| ok));

        let h4 = NilGroup::heisenberg(4).unwrap();
        let rep = commutator_divisibility(&h4, &[2, 3]).unwrap();
        assert_eq!(rep, vec![(2, false), (3, true)]);

        let rep = commutator_divisibility(&NilGroup::skew_cl(), &[2, 5]).unwrap();
        assert!(rep.iter().all(|&(_, ok)| ok));

        // an explicit order-two group is its own commutator-free witness:
        // C₂ has trivial commutators, so divisibility by 2 holds vacuously;
        // the counterexample's structure group is checked through its table
        let c2 = NilGroup::from_table(vec![vec![0, 1], vec![1, 0]]).unwrap();
        match commutator_subgroup(&c2).unwrap() {
            CommutatorSubgroup::Finite(list) => assert_eq!(list.len(), 1),
            _ => panic!(),
        }
    }

    #[test]
    fn squaring_is_not_onto_in_an_order_two_table() {
        // the structure group of the counterexample, taken abstractly
        let c2 = NilGroup::from_table(vec![vec![0, 1], vec![1, 0]]).unwrap();
        let elems = c2.elements().unwrap();
        let squares: BTreeSet<usize> = elems
            .iter()
            .map(|e| c2.element_index(&c2.pow(e, 2).unwrap()).unwrap())
            .collect();
        assert_eq!(squares.len(), 1);
        assert_eq!(elems.len(), 2);
    }

    #[test]
    fn coset_system_flags_non_ergodicity() {
        let g = NilGroup::heisenberg(3).unwrap();
        let acting = AbGroup::free(1);
        let h = homogeneous_system(&g, &[g.identity()], &[NilElement::Triple([1, 1, 0])], &acting)
            .unwrap();
        assert_eq!(h.system.size(), 27);
        assert!(!h.ergodic);
        assert_eq!(h.system.ergodic_components().len(), 9);
        // φ(1)^n = (n, n, binom(n,2)) closes at n = 3
        let p = &h.phi[0];
        assert_eq!(g.pow(p, 3).unwrap(), g.identity());
    }

    #[test]
    fn gamma_must_be_a_subgroup() {
        let g = NilGroup::heisenberg(3).unwrap();
        let acting = AbGroup::free(1);
        let bad = vec![g.identity(), NilElement::Triple([1, 0, 0])];
        assert!(matches!(
            homogeneous_system(&g, &bad, &[NilElement::Triple([1, 1, 0])], &acting),
            Err(NilError::GammaNotSubgroup)
        ));
    }

    #[test]
    fn skew_cosets_realize_the_skew_product() {
        // multiply (α,1,β)(x,0,y), then renormalize the middle entry to 0:
        // the result must be ((x+α), 0, (y+x+β)), the skew product step
        let g = NilGroup::skew_cl();
        let alpha = Phase::symbol(Symbol::new("alpha"));
        let beta = Phase::symbol(Symbol::new("beta"));
        let x = Phase::from_rational(1, 7).unwrap();
        let y = Phase::from_rational(2, 5).unwrap();
        let act = NilElement::Skew { s: alpha.clone(), c: 1, t: beta.clone() };
        let pt = NilElement::Skew { s: x.clone(), c: 0, t: y.clone() };
        let moved = g.mul(&act, &pt).unwrap();
        match moved {
            NilElement::Skew { s, c, t } => {
                assert_eq!(c, 1);
                // right-multiply by (0, -1, 0) ∈ Γ to restore the representative;
                // the t entry is unchanged because the representative has s = 0
                assert_eq!(s, alpha.add(&x));
                assert_eq!(t, beta.add(&y).add(&x));
            }
            _ => panic!(),
        }
        let sys = skew_cl_system(&alpha, &beta);
        assert_eq!(sys.mat(), &[vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn limit_formula_holds_for_character_families() {
        // base-only survival: (2, -1) on the pattern (1, 2)
        let f1 = TrigPoly::character(vec![2, 0]);
        let f2 = TrigPoly::character(vec![-1, 0]);
        let rep = skew_limit_formula_compare(&[1, 2], &[f1, f2], None).unwrap();
        assert!(rep.equal);
        assert_eq!(rep.rhs.terms.len(), 1);
        assert!(rep.rhs.terms.contains_key(&vec![1, 0]));

        // fiber frequencies that cancel in t but not in r die on both sides
        let f1 = TrigPoly::character(vec![0, 2]);
        let f2 = TrigPoly::character(vec![0, -1]);
        let rep = skew_limit_formula_compare(&[1, 2], &[f1, f2], None).unwrap();
        assert!(rep.equal);
        assert!(rep.rhs.terms.is_empty());
        assert!(rep.lhs.terms.is_empty());

        // genuine 2-step survival on the pattern (1, 2, 3)
        let f1 = TrigPoly::character(vec![-2, 3]);
        let f2 = TrigPoly::character(vec![1, -3]);
        let f3 = TrigPoly::character(vec![0, 1]);
        let rep = skew_limit_formula_compare(&[1, 2, 3], &[f1, f2, f3], None).unwrap();
        assert!(rep.equal);
        assert_eq!(rep.lhs.terms.len(), 1);
        assert!(rep.lhs.terms.get(&vec![-1, 1]).map(|c| c.sub(&ExactComplex::one()).is_zero()).unwrap_or(false));
    }

    #[test]
    fn limit_formula_survives_a_numeric_spot_check() {
        let f1 = TrigPoly::character(vec![-2, 3]);
        let f2 = TrigPoly::character(vec![1, -3]);
        let f3 = TrigPoly::character(vec![0, 1]);
        let cfg = McConfig { samples: 20_000, points: 1, ..McConfig::default() };
        let rep = skew_limit_formula_compare(&[1, 2, 3], &[f1, f2, f3], Some(&cfg)).unwrap();
        assert!(rep.equal);
        assert!(rep.mc_residual.unwrap() < 2e-2, "residual {:?}", rep.mc_residual);
    }

    #[test]
    fn finite_formula_matches_the_average_on_an_ergodic_quotient() {
        // Γ = {(0, y, z)} gives 𝒢/Γ ≅ ℤ/3 with φ(1) acting as +1
        let g = NilGroup::heisenberg(3).unwrap();
        let mut gamma = Vec::new();
        for y in 0..3 {
            for z in 0..3 {
                gamma.push(NilElement::Triple([0, y, z]));
            }
        }
        let acting = AbGroup::free(1);
        let h = homogeneous_system(&g, &gamma, &[NilElement::Triple([1, 1, 0])], &acting).unwrap();
        assert_eq!(h.system.size(), 3);
        assert!(h.ergodic);
        let f1 = Observable::from_fn(3, |x| ExactComplex::from_rational_i64([1, -1, 2][x], 2));
        let f2 = Observable::from_fn(3, |x| ExactComplex::from_rational_i64([0, 1, -1][x], 3));
        let rhs = finite_limit_formula_rhs(&h, &[1, 2], &[f1.clone(), f2.clone()]).unwrap();
        let lhs = multi_average(&h.system, &[1, 2], &[f1, f2], &[], &FolnerScheme::Box).unwrap();
        for x in 0..3 {
            assert!(rhs.values[x].sub(&lhs.limit.values[x]).is_zero());
        }
    }

    #[test]
    fn finite_formula_refuses_without_divisibility() {
        let g = NilGroup::heisenberg(4).unwrap();
        let mut gamma = Vec::new();
        for y in 0..4 {
            for z in 0..4 {
                gamma.push(NilElement::Triple([0, y, z]));
            }
        }
        let acting = AbGroup::free(1);
        let h = homogeneous_system(&g, &gamma, &[NilElement::Triple([1, 1, 0])], &acting).unwrap();
        let f = Observable::constant(4, ExactComplex::one());
        assert!(matches!(
            finite_limit_formula_rhs(&h, &[1, 2], &[f.clone(), f]),
            Err(NilError::NotDivisible(2))
        ));
    }

    #[test]
    fn counterexample_truncations_separate_the_two_sides() {
        for d in 2..=4 {
            let rep = counterexample_f2(d).unwrap();
            assert!(rep.lhs_equals_f2, "doubling the acting group is trivial");
            assert!(rep.rhs_is_zero);
            assert!(rep.rhs_gamma_invariant);
            assert_eq!(rep.discrepancy_sup, 1.0);
            assert!(rep.ergodic_components > 1);
        }
        assert!(counterexample_f2(1).is_err());
        assert!(counterexample_f2(11).is_err());
    }

    #[test]
    fn counterexample_eight_term_sum_at_depth_three() {
        // the image average at d = 3 is literally the 8-term sum over F₂³,
        // each term fixing f₂ because T_{2g} = id
        let rep = counterexample_f2(3).unwrap();
        let image = rep.system.acting_image().unwrap();
        assert_eq!(image.len(), 8);
        let n = rep.system.size();
        let f2 = Observable::from_fn(n, |p| {
            ExactComplex::from_phase(&Phase::from_rational((p % 4) as i64, 2).unwrap())
        });
        for p in &image {
            let mut sq = vec![0usize; n];
            for x in 0..n {
                sq[x] = p[p[x]];
            }
            for x in 0..n {
                assert!(f2.values[sq[x]].sub(&f2.values[x]).is_zero());
            }
        }
    }

    #[test]
    fn carry_cocycle_translates_by_constants() {
        // Δ_s σ(g, x) is constant in x: the translated cocycle differs from
        // the original by the constant 2⟨s, g⟩, the hook behind the F ≡ 1
        // witness
        let d = 3;
        let g = AbGroup::cyclic_power(2, d);
        let fiber = AbGroup::cyclic(4);
        let zpts = g.elements().unwrap();
        let sigma = |gen: usize, z: &[i64]| -> i64 { (1 + 2 * z[gen]).rem_euclid(4) };
        for s in &zpts {
            for i in 0..d {
                let mut expected: Option<i64> = None;
                for z in &zpts {
                    let mut moved = z.coords().to_vec();
                    for (j, m) in moved.iter_mut().enumerate() {
                        *m = (*m + s.coords()[j]).rem_euclid(2);
                    }
                    let diff = (sigma(i, &moved) - sigma(i, z.coords())).rem_euclid(4);
                    match expected {
                        None => expected = Some(diff),
                        Some(e) => assert_eq!(e, diff),
                    }
                }
                let e = expected.unwrap();
                assert_eq!(e, (2 * s.coords()[i]).rem_euclid(4));
                let _ = fiber;
            }
        }
    }

    #[test]
    fn table_validation_rejects_non_groups() {
        assert!(NilGroup::from_table(vec![vec![0, 0], vec![1, 1]]).is_err());
        assert!(NilGroup::from_table(vec![]).is_err());
        let c3 = NilGroup::from_table(vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        assert_eq!(c3.order(), Some(3));
        assert!(c3.two_step_check(1).unwrap());
        let _ = ExactComplex::one();
        let _ = Rational64::one();
    }
}
