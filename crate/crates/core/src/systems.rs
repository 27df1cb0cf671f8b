//! Measure-preserving systems: finite models with exact rational masses, and
//! symbolic torus systems moved by unipotent affine maps.
//!
//! A [`FiniteSystem`] is an action of a finitely generated abelian group on a
//! finite point set, given by one commuting permutation per generator, with
//! torsion generators required to have the matching order and every
//! permutation required to preserve the mass vector. Ergodic components are
//! orbits; the Kronecker presentation of an ergodic system is recovered by
//! running the action's Schreier graph through the Smith normal form.
//!
//! A [`TorusSystem`] is `x ↦ Ax + b` on `T^d` with `A` unipotent and `b` a
//! vector of exact phases. Orbit data along `n ↦ T^{cn}` stays symbolic: the
//! frequency side is a vector of rational polynomials in `n` and the phase
//! side a [`PhasePolynomial`], so limits reduce to Weyl's theorem.

use crate::abgroup::{AbGroup, Character, FolnerScheme, GroupElement, GroupError, MAX_ENUMERATION};
use crate::cyclo::ExactComplex;
use crate::phases::{Phase, PhaseError, PhasePolynomial, WeylCase};
use crate::snf::{mat_vec, smith_normal_form, Mat};
use num::bigint::BigInt;
use num::rational::{BigRational, Rational64};
use num::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("generator maps must be permutations of the point set")]
    NotAPermutation,
    #[error("generator maps do not commute (generators {0} and {1})")]
    NonCommuting(usize, usize),
    #[error("torsion generator {0} does not have order dividing {1}")]
    TorsionOrder(usize, u64),
    #[error("masses must be nonnegative and sum to 1")]
    BadMasses,
    #[error("generator {0} does not preserve the masses")]
    NotMeasurePreserving(usize),
    #[error("expected {need} generator maps, got {got}")]
    GeneratorCount { got: usize, need: usize },
    #[error("system is not ergodic")]
    NotErgodic,
    #[error("matrix is not unipotent")]
    NotUnipotent,
    #[error("torus dimension {0} exceeds the supported bound")]
    TorusDimension(usize),
    #[error("shift by a torsion generator must have matching order")]
    BadShift,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

pub(crate) fn br(q: Rational64) -> BigRational {
    BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

fn compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&x| p[x]).collect()
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (x, &y) in p.iter().enumerate() {
        inv[y] = x;
    }
    inv
}

fn perm_pow(p: &[usize], e: i64) -> Vec<usize> {
    let n = p.len();
    let mut base = if e < 0 { invert(p) } else { p.to_vec() };
    let mut e = e.unsigned_abs();
    let mut acc: Vec<usize> = (0..n).collect();
    while e > 0 {
        if e & 1 == 1 {
            acc = compose(&base, &acc);
        }
        base = compose(&base, &base);
        e >>= 1;
    }
    acc
}

/// Finite measure-preserving system for an action of `acting`.
#[derive(Debug, Clone)]
pub struct FiniteSystem {
    acting: AbGroup,
    gen_maps: Vec<Vec<usize>>,
    masses: Vec<Rational64>,
    labels: Option<Vec<String>>,
}

impl FiniteSystem {
    pub fn new(
        acting: AbGroup,
        gen_maps: Vec<Vec<usize>>,
        masses: Vec<Rational64>,
        labels: Option<Vec<String>>,
    ) -> Result<FiniteSystem, SystemError> {
        let n = masses.len();
        if gen_maps.len() != acting.dims() {
            return Err(SystemError::GeneratorCount { got: gen_maps.len(), need: acting.dims() });
        }
        for p in &gen_maps {
            if p.len() != n {
                return Err(SystemError::NotAPermutation);
            }
            let mut seen = vec![false; n];
            for &y in p {
                if y >= n || seen[y] {
                    return Err(SystemError::NotAPermutation);
                }
                seen[y] = true;
            }
        }
        for i in 0..gen_maps.len() {
            for j in i + 1..gen_maps.len() {
                if compose(&gen_maps[i], &gen_maps[j]) != compose(&gen_maps[j], &gen_maps[i]) {
                    return Err(SystemError::NonCommuting(i, j));
                }
            }
        }
        for (i, &m) in acting.moduli().iter().enumerate() {
            let id: Vec<usize> = (0..n).collect();
            if perm_pow(&gen_maps[i], m as i64) != id {
                return Err(SystemError::TorsionOrder(i, m));
            }
        }
        if masses.iter().any(|m| m.is_negative()) {
            return Err(SystemError::BadMasses);
        }
        let total: BigRational = masses.iter().map(|&m| br(m)).sum();
        if !total.is_one() {
            return Err(SystemError::BadMasses);
        }
        for (i, p) in gen_maps.iter().enumerate() {
            if (0..n).any(|x| masses[p[x]] != masses[x]) {
                return Err(SystemError::NotMeasurePreserving(i));
            }
        }
        if let Some(ref l) = labels {
            assert_eq!(l.len(), n);
        }
        Ok(FiniteSystem { acting, gen_maps, masses, labels })
    }

    pub fn acting(&self) -> &AbGroup {
        &self.acting
    }

    pub fn size(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, x: usize) -> Rational64 {
        self.masses[x]
    }

    pub fn masses(&self) -> &[Rational64] {
        &self.masses
    }

    pub fn label(&self, x: usize) -> String {
        match &self.labels {
            Some(l) => l[x].clone(),
            None => x.to_string(),
        }
    }

    pub fn gen_map(&self, i: usize) -> &[usize] {
        &self.gen_maps[i]
    }

    pub fn apply_gen(&self, i: usize, x: usize) -> usize {
        self.gen_maps[i][x]
    }

    /// Permutation implementing the action of `g`.
    pub fn perm_of(&self, g: &GroupElement) -> Vec<usize> {
        let mut acc: Vec<usize> = (0..self.size()).collect();
        for (i, &e) in g.coords().iter().enumerate() {
            if e != 0 {
                acc = compose(&perm_pow(&self.gen_maps[i], e), &acc);
            }
        }
        acc
    }

    pub fn apply(&self, g: &GroupElement, x: usize) -> usize {
        let mut y = x;
        for (i, &e) in g.coords().iter().enumerate() {
            if e != 0 {
                let p = perm_pow(&self.gen_maps[i], e);
                y = p[y];
            }
        }
        y
    }

    /// The image of the acting group in the permutation group, enumerated.
    pub fn acting_image(&self) -> Result<Vec<Vec<usize>>, SystemError> {
        let id: Vec<usize> = (0..self.size()).collect();
        let mut seen: BTreeMap<Vec<usize>, ()> = BTreeMap::new();
        seen.insert(id.clone(), ());
        let mut queue = VecDeque::new();
        queue.push_back(id);
        // inverses are needed to close the image when free generators act
        let mut gens: Vec<Vec<usize>> = self.gen_maps.clone();
        for i in 0..self.gen_maps.len() {
            gens.push(invert(&self.gen_maps[i]));
        }
        while let Some(p) = queue.pop_front() {
            for g in &gens {
                let q = compose(g, &p);
                if !seen.contains_key(&q) {
                    if seen.len() >= MAX_ENUMERATION {
                        return Err(GroupError::EnumerationCap.into());
                    }
                    seen.insert(q.clone(), ());
                    queue.push_back(q);
                }
            }
        }
        Ok(seen.into_keys().collect())
    }

    /// Orbit partition of the point set under the whole action.
    pub fn orbits(&self) -> Vec<Vec<usize>> {
        let n = self.size();
        let mut comp = vec![usize::MAX; n];
        let mut orbits = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let idx = orbits.len();
            let mut orbit = vec![start];
            comp[start] = idx;
            let mut queue = VecDeque::new();
            queue.push_back(start);
            while let Some(x) = queue.pop_front() {
                for p in &self.gen_maps {
                    let y = p[x];
                    if comp[y] == usize::MAX {
                        comp[y] = idx;
                        orbit.push(y);
                        queue.push_back(y);
                    }
                }
            }
            orbit.sort_unstable();
            orbits.push(orbit);
        }
        orbits
    }

    pub fn is_ergodic(&self) -> bool {
        self.orbits().len() == 1
    }

    /// Ergodic decomposition: one uniform subsystem per positive-mass orbit.
    pub fn ergodic_components(&self) -> Vec<ErgodicComponent> {
        let mut out = Vec::new();
        for orbit in self.orbits() {
            let weight: Rational64 = orbit.iter().map(|&x| self.masses[x]).sum();
            if weight.is_zero() {
                continue;
            }
            let back: BTreeMap<usize, usize> =
                orbit.iter().enumerate().map(|(i, &x)| (x, i)).collect();
            let maps: Vec<Vec<usize>> = self
                .gen_maps
                .iter()
                .map(|p| orbit.iter().map(|&x| back[&p[x]]).collect())
                .collect();
            let masses: Vec<Rational64> =
                orbit.iter().map(|&x| self.masses[x] / weight).collect();
            let labels = self
                .labels
                .as_ref()
                .map(|l| orbit.iter().map(|&x| l[x].clone()).collect());
            let system = FiniteSystem::new(self.acting.clone(), maps, masses, labels)
                .expect("component of a valid system is valid");
            out.push(ErgodicComponent { weight, system, points: orbit });
        }
        out
    }

    /// Exact integral `Σ_x μ(x) f(x)`.
    pub fn integral(&self, f: &Observable) -> ExactComplex {
        assert_eq!(f.values.len(), self.size());
        let mut acc = ExactComplex::zero();
        for (x, v) in f.values.iter().enumerate() {
            if !self.masses[x].is_zero() {
                acc = acc.add(&v.scale(&br(self.masses[x])));
            }
        }
        acc
    }

    /// Exact inner product `⟨f, g⟩ = ∫ f·conj(g)`.
    pub fn inner(&self, f: &Observable, g: &Observable) -> ExactComplex {
        self.integral(&f.mul(&g.conj()))
    }

    /// Pull an observable back through the action of `g`, `x ↦ f(T_g x)`.
    pub fn translate(&self, g: &GroupElement, f: &Observable) -> Observable {
        let p = self.perm_of(g);
        Observable { values: (0..self.size()).map(|x| f.values[p[x]].clone()).collect() }
    }

    /// Conditional expectation onto the invariant algebra: the mass-weighted
    /// mean over each orbit (zero on orbits of mass zero).
    pub fn invariant_expectation(&self, f: &Observable) -> Observable {
        let mut values = vec![ExactComplex::zero(); self.size()];
        for orbit in self.orbits() {
            let total: BigRational = orbit.iter().map(|&x| br(self.masses[x])).sum();
            if total.is_zero() {
                continue;
            }
            let mut mean = ExactComplex::zero();
            for &x in &orbit {
                mean = mean.add(&f.values[x].scale(&br(self.masses[x])));
            }
            mean = mean.scale(&total.recip());
            for &x in &orbit {
                values[x] = mean.clone();
            }
        }
        Observable { values }
    }
}

/// One ergodic component: its weight, the component system, and the indices
/// of its points in the ambient system.
#[derive(Debug, Clone)]
pub struct ErgodicComponent {
    pub weight: Rational64,
    pub system: FiniteSystem,
    pub points: Vec<usize>,
}

/// Exact complex-valued observable on a finite system.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub values: Vec<ExactComplex>,
}

impl Observable {
    pub fn constant(n: usize, c: ExactComplex) -> Observable {
        Observable { values: vec![c; n] }
    }

    pub fn indicator(n: usize, set: &[usize]) -> Observable {
        let mut values = vec![ExactComplex::zero(); n];
        for &x in set {
            values[x] = ExactComplex::one();
        }
        Observable { values }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> ExactComplex) -> Observable {
        Observable { values: (0..n).map(f).collect() }
    }

    pub fn mul(&self, other: &Observable) -> Observable {
        assert_eq!(self.values.len(), other.values.len());
        Observable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.mul(b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Observable) -> Observable {
        assert_eq!(self.values.len(), other.values.len());
        Observable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        assert_eq!(self.values.len(), other.values.len());
        Observable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn conj(&self) -> Observable {
        Observable { values: self.values.iter().map(|v| v.conj()).collect() }
    }

    pub fn scale(&self, q: &BigRational) -> Observable {
        Observable { values: self.values.iter().map(|v| v.scale(q)).collect() }
    }
}

/// Rotation by `shifts[i]` per acting generator on the finite group `z`,
/// with uniform measure.
pub fn rotation_system(
    acting: &AbGroup,
    z: &AbGroup,
    shifts: &[GroupElement],
) -> Result<FiniteSystem, SystemError> {
    if shifts.len() != acting.dims() {
        return Err(SystemError::GeneratorCount { got: shifts.len(), need: acting.dims() });
    }
    for (i, &m) in acting.moduli().iter().enumerate() {
        if !z.is_zero(&z.scalar_mul(m as i64, &shifts[i])) {
            return Err(SystemError::BadShift);
        }
    }
    let elems = z.elements()?;
    let index: BTreeMap<&GroupElement, usize> =
        elems.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let maps: Vec<Vec<usize>> = shifts
        .iter()
        .map(|s| elems.iter().map(|x| index[&z.add(x, s)]).collect())
        .collect();
    let n = elems.len();
    let masses = vec![Rational64::new(1, n as i64); n];
    let labels = elems.iter().map(|e| e.to_string()).collect();
    FiniteSystem::new(acting.clone(), maps, masses, Some(labels))
}

/// Skew extension of `base` by the finite group `fiber` along the table
/// `sigma[i][x] ∈ fiber`: generator `i` sends `(x, u)` to
/// `(T_i x, u + sigma[i][x])`. The table must make the extension a genuine
/// commuting action; violations surface as system validation errors.
pub fn abelian_extension(
    base: &FiniteSystem,
    fiber: &AbGroup,
    sigma: &[Vec<GroupElement>],
) -> Result<FiniteSystem, SystemError> {
    assert_eq!(sigma.len(), base.acting().dims());
    for col in sigma {
        assert_eq!(col.len(), base.size());
    }
    let fib = fiber.elements()?;
    let findex: BTreeMap<&GroupElement, usize> =
        fib.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let nb = base.size();
    let nf = fib.len();
    let n = nb.checked_mul(nf).filter(|&n| n <= MAX_ENUMERATION);
    let n = n.ok_or(GroupError::EnumerationCap)?;
    let mut maps = Vec::with_capacity(sigma.len());
    for (i, col) in sigma.iter().enumerate() {
        let mut p = Vec::with_capacity(n);
        for x in 0..nb {
            for u in 0..nf {
                let y = base.apply_gen(i, x);
                let v = findex[&fiber.add(&fib[u], &col[x])];
                p.push(y * nf + v);
            }
        }
        // point layout is x-major
        let mut q = vec![0; n];
        for x in 0..nb {
            for u in 0..nf {
                q[x * nf + u] = p[x * nf + u];
            }
        }
        maps.push(q);
    }
    let mut masses = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let wf = Rational64::new(1, nf as i64);
    for x in 0..nb {
        for u in 0..nf {
            masses.push(base.mass(x) * wf);
            labels.push(format!("({},{})", base.label(x), fib[u]));
        }
    }
    FiniteSystem::new(base.acting().clone(), maps, masses, Some(labels))
}

/// Disjoint union with the given weights (must sum to 1).
pub fn disjoint_union(parts: &[(Rational64, &FiniteSystem)]) -> Result<FiniteSystem, SystemError> {
    assert!(!parts.is_empty());
    let acting = parts[0].1.acting().clone();
    let k = acting.dims();
    let mut maps: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut masses = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0;
    for (idx, (w, sys)) in parts.iter().enumerate() {
        assert_eq!(sys.acting(), &acting, "all parts share the acting group");
        for i in 0..k {
            maps[i].extend(sys.gen_map(i).iter().map(|&y| y + offset));
        }
        for x in 0..sys.size() {
            masses.push(*w * sys.mass(x));
            labels.push(format!("{}#{}", idx, sys.label(x)));
        }
        offset += sys.size();
    }
    FiniteSystem::new(acting, maps, masses, Some(labels))
}

/// Group coordinates on an ergodic system: the Kronecker presentation.
#[derive(Debug, Clone)]
pub struct KroneckerFactor {
    /// The rotation group, in invariant-factor form.
    pub group: AbGroup,
    /// Image of each acting generator inside [`Self::group`].
    pub rotation: Vec<GroupElement>,
    /// Coordinates of each point.
    pub coords: Vec<GroupElement>,
    pub base_point: usize,
}

impl KroneckerFactor {
    /// Checks bijectivity and equivariance against the system.
    pub fn verify(&self, sys: &FiniteSystem) -> bool {
        if self.group.order() != Some(sys.size() as u64) {
            return false;
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.coords {
            seen.insert(c.clone());
        }
        if seen.len() != sys.size() {
            return false;
        }
        for i in 0..sys.acting().dims() {
            for x in 0..sys.size() {
                let lhs = &self.coords[sys.apply_gen(i, x)];
                let rhs = self.group.add(&self.coords[x], &self.rotation[i]);
                if *lhs != rhs {
                    return false;
                }
            }
        }
        true
    }

    /// Observable `x ↦ χ(coords(x))`.
    pub fn pull_back(&self, ch: &Character) -> Observable {
        Observable {
            values: self
                .coords
                .iter()
                .map(|c| ExactComplex::from_phase(&ch.eval(c)))
                .collect(),
        }
    }
}

/// Kronecker presentation of an ergodic finite system.
///
/// Words in the acting generators label the points along a breadth-first
/// scan; each non-tree edge contributes a relation word, and together with
/// the torsion relations these span the full stabilizer lattice (closed walks
/// decompose over the fundamental cycles of the Schreier graph). The quotient
/// of the word lattice is read off the Smith normal form.
pub fn kronecker_factor(sys: &FiniteSystem) -> Result<KroneckerFactor, SystemError> {
    if !sys.is_ergodic() {
        return Err(SystemError::NotErgodic);
    }
    let n = sys.size();
    let k = sys.acting().dims();
    let base = 0usize;
    let mut words: Vec<Option<Vec<i64>>> = vec![None; n];
    words[base] = Some(vec![0; k]);
    let mut relations: Vec<Vec<i64>> = Vec::new();
    for (i, &m) in sys.acting().moduli().iter().enumerate() {
        let mut r = vec![0i64; k];
        r[i] = m as i64;
        relations.push(r);
    }
    let mut queue = VecDeque::new();
    queue.push_back(base);
    while let Some(x) = queue.pop_front() {
        let wx = words[x].clone().unwrap();
        for i in 0..k {
            let y = sys.apply_gen(i, x);
            let mut wy = wx.clone();
            wy[i] += 1;
            match &words[y] {
                None => {
                    words[y] = Some(wy);
                    queue.push_back(y);
                }
                Some(old) => {
                    let rel: Vec<i64> = wy.iter().zip(old).map(|(a, b)| a - b).collect();
                    if rel.iter().any(|&c| c != 0) {
                        relations.push(rel);
                    }
                }
            }
        }
    }
    // relation matrix: k rows, one column per relation
    let cols = relations.len();
    let mut m: Mat = vec![vec![BigInt::zero(); cols]; k];
    for (j, r) in relations.iter().enumerate() {
        for (i, &c) in r.iter().enumerate() {
            m[i][j] = BigInt::from(c);
        }
    }
    let s = smith_normal_form(&m);
    let rank = s.diag.iter().filter(|d| !d.is_zero()).count();
    // a finite orbit forces a finite quotient
    assert_eq!(rank, k, "stabilizer lattice of a finite orbit has full rank");
    let mut kept = Vec::new();
    let mut moduli = Vec::new();
    for (i, d) in s.diag.iter().enumerate() {
        let dv = d.to_u64().expect("invariant factor fits u64");
        if dv > 1 {
            kept.push(i);
            moduli.push(dv);
        }
    }
    let group = AbGroup::new(&moduli, 0);
    let project = |w: &[i64]| -> GroupElement {
        let v: Vec<BigInt> = w.iter().map(|&c| BigInt::from(c)).collect();
        let u = mat_vec(&s.u, &v);
        let coords: Vec<i64> = kept
            .iter()
            .zip(&moduli)
            .map(|(&i, &m)| {
                use num::Integer;
                u[i].mod_floor(&BigInt::from(m)).to_i64().unwrap()
            })
            .collect();
        GroupElement(coords)
    };
    let coords: Vec<GroupElement> = words
        .iter()
        .map(|w| project(w.as_ref().expect("ergodic scan reaches every point")))
        .collect();
    let rotation: Vec<GroupElement> = (0..k)
        .map(|i| {
            let mut e = vec![0i64; k];
            e[i] = 1;
            project(&e)
        })
        .collect();
    Ok(KroneckerFactor { group, rotation, coords, base_point: base })
}

const MAX_TORUS_DIM: usize = 8;

/// Rational-coefficient polynomial in one variable; zero iff all coefficients
/// vanish, which over the integers means vanishing at every argument.
#[derive(Debug, Clone, PartialEq)]
pub struct RatPoly(pub Vec<Rational64>);

impl RatPoly {
    pub fn zero() -> RatPoly {
        RatPoly(Vec::new())
    }

    pub fn constant(c: Rational64) -> RatPoly {
        if c.is_zero() {
            RatPoly::zero()
        } else {
            RatPoly(vec![c])
        }
    }

    fn trim(mut v: Vec<Rational64>) -> RatPoly {
        while v.last().map(|c| c.is_zero()) == Some(true) {
            v.pop();
        }
        RatPoly(v)
    }

    pub fn add(&self, other: &RatPoly) -> RatPoly {
        let n = self.0.len().max(other.0.len());
        let mut v = vec![Rational64::zero(); n];
        for (i, c) in self.0.iter().enumerate() {
            v[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            v[i] += c;
        }
        RatPoly::trim(v)
    }

    pub fn mul(&self, other: &RatPoly) -> RatPoly {
        if self.0.is_empty() || other.0.is_empty() {
            return RatPoly::zero();
        }
        let mut v = vec![Rational64::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        RatPoly::trim(v)
    }

    pub fn scale(&self, c: Rational64) -> RatPoly {
        if c.is_zero() {
            return RatPoly::zero();
        }
        RatPoly(self.0.iter().map(|a| a * c).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, n: i64) -> Rational64 {
        let mut acc = Rational64::zero();
        for c in self.0.iter().rev() {
            acc = acc * Rational64::from_integer(n) + c;
        }
        acc
    }
}

/// Binomial coefficient `C(cn, t)` expanded as a polynomial in `n`.
fn binomial_poly(c: i64, t: usize) -> RatPoly {
    // Π_{j=0}^{t-1} (cn - j) / t!
    let mut p = RatPoly::constant(Rational64::one());
    for j in 0..t {
        let lin = RatPoly(vec![
            Rational64::from_integer(-(j as i64)),
            Rational64::from_integer(c),
        ]);
        p = p.mul(&lin);
    }
    let mut fact = 1i64;
    for j in 1..=t as i64 {
        fact *= j;
    }
    p.scale(Rational64::new(1, fact))
}

/// Affine unipotent torus map `x ↦ Ax + b` on `T^dim`.
#[derive(Debug, Clone)]
pub struct TorusSystem {
    dim: usize,
    mat: Vec<Vec<i64>>,
    trans: Vec<Phase>,
}

impl TorusSystem {
    pub fn new(mat: Vec<Vec<i64>>, trans: Vec<Phase>) -> Result<TorusSystem, SystemError> {
        let d = mat.len();
        if d == 0 || d > MAX_TORUS_DIM {
            return Err(SystemError::TorusDimension(d));
        }
        if mat.iter().any(|r| r.len() != d) || trans.len() != d {
            return Err(SystemError::TorusDimension(d));
        }
        // (A - I)^d must vanish
        let mut nil: Vec<Vec<i64>> = mat.clone();
        for (i, row) in nil.iter_mut().enumerate() {
            row[i] -= 1;
        }
        let mut pow = nil.clone();
        for _ in 1..d {
            pow = int_mat_mul(&pow, &nil);
        }
        if pow.iter().any(|r| r.iter().any(|&c| c != 0)) {
            return Err(SystemError::NotUnipotent);
        }
        Ok(TorusSystem { dim: d, mat, trans })
    }

    /// Pure rotation by `alphas`.
    pub fn rotation(alphas: Vec<Phase>) -> Result<TorusSystem, SystemError> {
        let d = alphas.len();
        let mat = (0..d)
            .map(|i| (0..d).map(|j| (i == j) as i64).collect())
            .collect();
        TorusSystem::new(mat, alphas)
    }

    /// The skew product `T(x, y) = (x + α, y + x + β)` on `T^2`.
    pub fn skew_product(alpha: Phase, beta: Phase) -> TorusSystem {
        TorusSystem::new(vec![vec![1, 0], vec![1, 1]], vec![alpha, beta]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &[Vec<i64>] {
        &self.mat
    }

    pub fn trans(&self) -> &[Phase] {
        &self.trans
    }

    /// Symbolic orbit data of the character `e(m·x)` along `n ↦ T^{cn}`:
    /// `m·T^{cn}x = P(n) + V(n)·x` with `P` a phase polynomial and `V` a
    /// vector of rational polynomials taking integer values on integers.
    pub fn character_orbit(
        &self,
        m: &[i64],
        c: i64,
    ) -> Result<(PhasePolynomial, Vec<RatPoly>), SystemError> {
        assert_eq!(m.len(), self.dim);
        let d = self.dim;
        // nilpotent part N = A - I and its powers
        let mut nil: Vec<Vec<i64>> = self.mat.clone();
        for (i, row) in nil.iter_mut().enumerate() {
            row[i] -= 1;
        }
        let mut npows: Vec<Vec<Vec<i64>>> = Vec::with_capacity(d);
        let mut cur: Vec<Vec<i64>> = (0..d)
            .map(|i| (0..d).map(|j| (i == j) as i64).collect())
            .collect();
        for _ in 0..d {
            npows.push(cur.clone());
            cur = int_mat_mul(&cur, &nil);
        }
        // V(n) = Σ_t C(cn, t) (N^t)^T m
        let mut v: Vec<RatPoly> = vec![RatPoly::zero(); d];
        for (t, np) in npows.iter().enumerate() {
            let bp = binomial_poly(c, t);
            if bp.is_zero() {
                continue;
            }
            for j in 0..d {
                // ((N^t)^T m)_j = Σ_i m_i (N^t)_{i j}
                let mut dot = 0i64;
                for (i, &mi) in m.iter().enumerate() {
                    dot += mi * np[i][j];
                }
                if dot != 0 {
                    v[j] = v[j].add(&bp.scale(Rational64::from_integer(dot)));
                }
            }
        }
        // P(n) = m · s_{cn},  s_g = Σ_t C(g, t+1) N^t b
        let mut coeffs: Vec<Phase> = Vec::new();
        for (t, np) in npows.iter().enumerate() {
            // m · (N^t b)
            let mut dot = Phase::zero();
            for i in 0..d {
                for j in 0..d {
                    let w = m[i] * np[i][j];
                    if w != 0 {
                        dot = dot.add(&self.trans[j].scalar_mul_int(w));
                    }
                }
            }
            if dot.is_zero() {
                continue;
            }
            let bp = binomial_poly(c, t + 1);
            for (deg, q) in bp.0.iter().enumerate() {
                if q.is_zero() {
                    continue;
                }
                while coeffs.len() <= deg {
                    coeffs.push(Phase::zero());
                }
                coeffs[deg] = coeffs[deg].add(&dot.scalar_mul(*q)?);
            }
        }
        Ok((PhasePolynomial::new(coeffs)?, v))
    }
}

fn int_mat_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = a.len();
    let mut out = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for (k, &aik) in a[i].iter().enumerate() {
                acc = acc.checked_add(aik.checked_mul(b[k][j]).expect("matrix overflow"))
                    .expect("matrix overflow");
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Trigonometric polynomial `Σ_m c_m e(m·x)` on a torus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub terms: BTreeMap<Vec<i64>, ExactComplex>,
}

impl TrigPoly {
    pub fn zero(dim: usize) -> TrigPoly {
        let _ = dim;
        TrigPoly { terms: BTreeMap::new() }
    }

    pub fn character(m: Vec<i64>) -> TrigPoly {
        let mut terms = BTreeMap::new();
        terms.insert(m, ExactComplex::one());
        TrigPoly { terms }
    }

    pub fn constant(dim: usize, c: ExactComplex) -> TrigPoly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(vec![0; dim], c);
        }
        TrigPoly { terms }
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let e = terms.entry(m.clone()).or_insert_with(ExactComplex::zero);
            *e = e.add(c);
        }
        terms.retain(|_, c| !c.is_zero());
        TrigPoly { terms }
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut terms: BTreeMap<Vec<i64>, ExactComplex> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let m: Vec<i64> = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                let c = c1.mul(c2);
                let e = terms.entry(m).or_insert_with(ExactComplex::zero);
                *e = e.add(&c);
            }
        }
        terms.retain(|_, c| !c.is_zero());
        TrigPoly { terms }
    }

    pub fn conj(&self) -> TrigPoly {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.iter().map(|&x| -x).collect(), c.conj()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &ExactComplex) -> TrigPoly {
        let mut terms: BTreeMap<Vec<i64>, ExactComplex> = BTreeMap::new();
        for (m, v) in &self.terms {
            let w = v.mul(c);
            if !w.is_zero() {
                terms.insert(m.clone(), w);
            }
        }
        TrigPoly { terms }
    }

    /// `∫ f dx`: the constant coefficient.
    pub fn integral(&self, dim: usize) -> ExactComplex {
        self.terms
            .get(&vec![0; dim])
            .cloned()
            .unwrap_or_else(ExactComplex::zero)
    }

    pub fn eval_f64(&self, x: &[f64], vals: &BTreeMap<crate::phases::Symbol, f64>) -> Option<(f64, f64)> {
        let mut re = 0.0;
        let mut im = 0.0;
        for (m, c) in &self.terms {
            let (cr, ci) = c.eval_f64(vals)?;
            let theta: f64 = 2.0
                * std::f64::consts::PI
                * m.iter().zip(x).map(|(&mi, xi)| mi as f64 * xi).sum::<f64>();
            let (er, ei) = (theta.cos(), theta.sin());
            re += cr * er - ci * ei;
            im += cr * ei + ci * er;
        }
        Some((re, im))
    }
}

/// Exact limit of `avg_n ∫ Π_i f_i(T^{c_i n} x) dx` for a torus system.
///
/// Each cross term contributes only when its `x`-frequency vector vanishes
/// identically in `n`; the surviving phase polynomial goes through the Weyl
/// dichotomy.
pub fn torus_multi_average(
    sys: &TorusSystem,
    cs: &[i64],
    fs: &[TrigPoly],
) -> Result<ExactComplex, SystemError> {
    assert_eq!(cs.len(), fs.len());
    let d = sys.dim();
    let mut total = ExactComplex::zero();
    let mut stack: Vec<(usize, ExactComplex, PhasePolynomial, Vec<RatPoly>)> = vec![(
        0,
        ExactComplex::one(),
        PhasePolynomial::constant(Phase::zero()),
        vec![RatPoly::zero(); d],
    )];
    while let Some((i, coeff, pp, v)) = stack.pop() {
        if i == fs.len() {
            if v.iter().all(|p| p.is_zero()) {
                let w = crate::phases::weyl_limit(&pp)?;
                total = total.add(&coeff.mul(&w.value));
            }
            continue;
        }
        for (m, c) in &fs[i].terms {
            let (tp, tv) = sys.character_orbit(m, cs[i])?;
            let coeff2 = coeff.mul(c);
            if coeff2.is_zero() {
                continue;
            }
            let pp2 = pp.add(&tp);
            let v2: Vec<RatPoly> = v.iter().zip(&tv).map(|(a, b)| a.add(b)).collect();
            stack.push((i + 1, coeff2, pp2, v2));
        }
    }
    Ok(total)
}

/// Exact value of `(1/|W|) Σ_{n ∈ W} ∫ Π_i f_i(T^{c_i n} x) dx` over the
/// centered window `W = [-N, N]`.
pub fn torus_window_average(
    sys: &TorusSystem,
    cs: &[i64],
    fs: &[TrigPoly],
    n_radius: u64,
) -> Result<ExactComplex, SystemError> {
    let d = sys.dim();
    let window: Vec<i64> = (-(n_radius as i64)..=n_radius as i64).collect();
    let mut per_term: Vec<(ExactComplex, PhasePolynomial, Vec<RatPoly>)> = Vec::new();
    let mut stack: Vec<(usize, ExactComplex, PhasePolynomial, Vec<RatPoly>)> = vec![(
        0,
        ExactComplex::one(),
        PhasePolynomial::constant(Phase::zero()),
        vec![RatPoly::zero(); d],
    )];
    while let Some((i, coeff, pp, v)) = stack.pop() {
        if i == fs.len() {
            per_term.push((coeff, pp, v));
            continue;
        }
        for (m, c) in &fs[i].terms {
            let (tp, tv) = sys.character_orbit(m, cs[i])?;
            let coeff2 = coeff.mul(c);
            if coeff2.is_zero() {
                continue;
            }
            stack.push((i + 1, coeff2, pp.add(&tp), v.iter().zip(&tv).map(|(a, b)| a.add(b)).collect()));
        }
    }
    let mut total = ExactComplex::zero();
    for (coeff, pp, v) in &per_term {
        let mut sum = ExactComplex::zero();
        for &n in &window {
            if v.iter().all(|p| p.eval(n).is_zero()) {
                sum = sum.add(&ExactComplex::from_phase(&pp.eval(n)?));
            }
        }
        total = total.add(&coeff.mul(&sum));
    }
    Ok(total.scale_ratio(1, window.len() as i64))
}

/// Witness of the Weyl case used by a torus average; exposed for reports.
pub fn torus_term_case(sys: &TorusSystem, m: &[i64], c: i64) -> Result<WeylCase, SystemError> {
    let (pp, _) = sys.character_orbit(m, c)?;
    Ok(crate::phases::weyl_limit(&pp)?.case)
}

/// Shared helper: exact average of `f` over a Følner window image, i.e. the
/// exact mean of the observable along the window in the acting group.
pub fn window_average_observable(
    sys: &FiniteSystem,
    f: &Observable,
    radius: u64,
    scheme: &FolnerScheme,
) -> Result<ExactComplex, SystemError> {
    let window = sys.acting().folner_window(radius, scheme)?;
    let mut acc = ExactComplex::zero();
    for g in &window {
        acc = acc.add(&sys.integral(&sys.translate(g, f)));
    }
    Ok(acc.scale_ratio(1, window.len() as i64))
}
