//! Cohomology of cocycles with values in a finite abelian group: validation,
//! coboundary solving with cycle certificates, polynomial degree, type-<k
//! testing on cubic supports, Conze–Lesigne equations, and the CL group.
//!
//! A [`Cocycle`] stores one value table per acting generator,
//! `tables[i][x] = ρ(e_i, x)`; values at arbitrary group elements follow from
//! the cocycle identity. Coboundary equations are solved by a spanning-tree
//! scan of each orbit: the equation has a solution exactly when every cycle
//! of the Schreier graph sums to zero, and a failing cycle is returned as a
//! walkable certificate rather than a bare "no".

use crate::abgroup::{
    solve_group_linear, AbGroup, GroupElement, GroupError, InfeasibilityCertificate,
    SolveOutcome,
};
use crate::cubic::cubic_measure;
use crate::cyclo::ExactComplex;
use crate::phases::{Phase, PhaseError};
use crate::systems::{
    abelian_extension, rotation_system, FiniteSystem, SystemError, TorusSystem,
};
use num::rational::{BigRational, Rational64};
use num::{ToPrimitive, Zero};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CocycleError {
    #[error("conze-lesigne machinery caps |Z|·|U| at 64, got {0}")]
    SizeCap(u64),
    #[error("closure enumeration exceeded the bound of {0} elements")]
    ClosureCap(usize),
    #[error("the table does not satisfy the cocycle identities: {0:?}")]
    InvalidCocycle(CocycleViolation),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

/// `U`-valued cocycle over a finite system, given on the acting generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cocycle {
    pub fiber: AbGroup,
    /// `tables[i][x] = ρ(e_i, x)`.
    pub tables: Vec<Vec<GroupElement>>,
}

impl Cocycle {
    pub fn constant(sys: &FiniteSystem, fiber: &AbGroup, values: &[GroupElement]) -> Cocycle {
        assert_eq!(values.len(), sys.acting().dims());
        Cocycle {
            fiber: fiber.clone(),
            tables: values.iter().map(|v| vec![v.clone(); sys.size()]).collect(),
        }
    }

    pub fn zero(sys: &FiniteSystem, fiber: &AbGroup) -> Cocycle {
        Cocycle::constant(sys, fiber, &vec![fiber.zero(); sys.acting().dims()])
    }

    /// `ΔF` for a transfer table `f`.
    pub fn coboundary(sys: &FiniteSystem, fiber: &AbGroup, f: &[GroupElement]) -> Cocycle {
        assert_eq!(f.len(), sys.size());
        let tables = (0..sys.acting().dims())
            .map(|i| {
                (0..sys.size())
                    .map(|x| fiber.sub(&f[sys.apply_gen(i, x)], &f[x]))
                    .collect()
            })
            .collect();
        Cocycle { fiber: fiber.clone(), tables }
    }

    pub fn add(&self, other: &Cocycle) -> Cocycle {
        assert_eq!(self.fiber, other.fiber);
        Cocycle {
            fiber: self.fiber.clone(),
            tables: self
                .tables
                .iter()
                .zip(&other.tables)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| self.fiber.add(x, y)).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Cocycle) -> Cocycle {
        assert_eq!(self.fiber, other.fiber);
        Cocycle {
            fiber: self.fiber.clone(),
            tables: self
                .tables
                .iter()
                .zip(&other.tables)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| self.fiber.sub(x, y)).collect())
                .collect(),
        }
    }

    /// `ρ(g, x)` for an arbitrary acting element, assuming the cocycle
    /// identity (so the order of generator increments does not matter).
    pub fn eval(&self, sys: &FiniteSystem, g: &GroupElement, x: usize) -> GroupElement {
        let mut total = self.fiber.zero();
        let mut cur = x;
        for (i, &e) in g.coords().iter().enumerate() {
            if e > 0 {
                for _ in 0..e {
                    total = self.fiber.add(&total, &self.tables[i][cur]);
                    cur = sys.apply_gen(i, cur);
                }
            } else if e < 0 {
                let inv = invert_perm(sys.gen_map(i));
                for _ in 0..-e {
                    cur = inv[cur];
                    total = self.fiber.sub(&total, &self.tables[i][cur]);
                }
            }
        }
        total
    }

    /// Pointwise difference in the base direction: `Δ_p ρ(g, x) =
    /// ρ(g, p(x)) - ρ(g, x)` for a point permutation `p`.
    pub fn base_difference(&self, p: &[usize]) -> Cocycle {
        Cocycle {
            fiber: self.fiber.clone(),
            tables: self
                .tables
                .iter()
                .map(|t| {
                    (0..t.len())
                        .map(|x| self.fiber.sub(&t[p[x]], &t[x]))
                        .collect()
                })
                .collect(),
        }
    }
}

fn invert_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (x, &y) in p.iter().enumerate() {
        inv[y] = x;
    }
    inv
}

/// First failure of the defining identities, as a concrete witness.
#[derive(Debug, Clone, Serialize)]
pub enum CocycleViolation {
    /// `ρ(e_i, T_j x) + ρ(e_j, x) ≠ ρ(e_j, T_i x) + ρ(e_i, x)`.
    Commutation { gen_a: usize, gen_b: usize, point: usize, defect: GroupElement },
    /// Summing `ρ(e_i, ·)` along the `m_i` steps of a torsion generator does
    /// not return zero.
    Torsion { gen: usize, point: usize, defect: GroupElement },
}

/// Checks the cocycle identity on all generator pairs and the torsion
/// relations of the acting group.
pub fn validate_cocycle(sys: &FiniteSystem, rho: &Cocycle) -> Result<(), CocycleViolation> {
    let k = sys.acting().dims();
    assert_eq!(rho.tables.len(), k);
    for t in &rho.tables {
        assert_eq!(t.len(), sys.size());
    }
    let u = &rho.fiber;
    for i in 0..k {
        for j in i + 1..k {
            for x in 0..sys.size() {
                let lhs = u.add(&rho.tables[i][sys.apply_gen(j, x)], &rho.tables[j][x]);
                let rhs = u.add(&rho.tables[j][sys.apply_gen(i, x)], &rho.tables[i][x]);
                if lhs != rhs {
                    return Err(CocycleViolation::Commutation {
                        gen_a: i,
                        gen_b: j,
                        point: x,
                        defect: u.sub(&lhs, &rhs),
                    });
                }
            }
        }
    }
    for (i, &m) in sys.acting().moduli().iter().enumerate() {
        for x in 0..sys.size() {
            let mut acc = u.zero();
            let mut cur = x;
            for _ in 0..m {
                acc = u.add(&acc, &rho.tables[i][cur]);
                cur = sys.apply_gen(i, cur);
            }
            if !u.is_zero(&acc) {
                return Err(CocycleViolation::Torsion { gen: i, point: x, defect: acc });
            }
        }
    }
    Ok(())
}

/// A closed walk along which the cocycle sums to a nonzero value: the
/// certificate that no transfer function exists.
#[derive(Debug, Clone, Serialize)]
pub struct CycleCertificate {
    pub start: usize,
    /// Steps `(generator, ±1)`.
    pub steps: Vec<(usize, i8)>,
    pub value: GroupElement,
}

impl CycleCertificate {
    /// Walks the cycle against the system and re-derives the obstruction.
    pub fn verify(&self, sys: &FiniteSystem, rho: &Cocycle) -> bool {
        let u = &rho.fiber;
        let mut cur = self.start;
        let mut acc = u.zero();
        for &(i, dir) in &self.steps {
            if dir > 0 {
                acc = u.add(&acc, &rho.tables[i][cur]);
                cur = sys.apply_gen(i, cur);
            } else {
                let inv = invert_perm(sys.gen_map(i));
                cur = inv[cur];
                acc = u.sub(&acc, &rho.tables[i][cur]);
            }
        }
        cur == self.start && acc == self.value && !u.is_zero(&self.value)
    }
}

#[derive(Debug, Clone)]
pub enum CoboundaryOutcome {
    /// `ρ = ΔF`; the transfer is normalized to zero at one root per orbit.
    Coboundary { transfer: Vec<GroupElement> },
    Obstructed { certificate: CycleCertificate },
}

impl CoboundaryOutcome {
    pub fn transfer(&self) -> Option<&Vec<GroupElement>> {
        match self {
            CoboundaryOutcome::Coboundary { transfer } => Some(transfer),
            CoboundaryOutcome::Obstructed { .. } => None,
        }
    }
}

/// Solves `ΔF = ρ` by a spanning-tree scan of every orbit.
///
/// Tree edges assign `F`; each remaining edge either confirms the assignment
/// or closes a cycle with a nonzero sum, which is returned as a certificate.
pub fn solve_coboundary(sys: &FiniteSystem, rho: &Cocycle) -> CoboundaryOutcome {
    let u = &rho.fiber;
    let n = sys.size();
    let k = sys.acting().dims();
    let mut f: Vec<Option<GroupElement>> = vec![None; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n]; // (point, gen)
    for root in 0..n {
        if f[root].is_some() {
            continue;
        }
        f[root] = Some(u.zero());
        let mut queue = VecDeque::new();
        queue.push_back(root);
        while let Some(x) = queue.pop_front() {
            for i in 0..k {
                let y = sys.apply_gen(i, x);
                let fy = u.add(f[x].as_ref().unwrap(), &rho.tables[i][x]);
                match &f[y] {
                    None => {
                        f[y] = Some(fy);
                        parent[y] = Some((x, i));
                        queue.push_back(y);
                    }
                    Some(old) => {
                        if *old != fy {
                            let defect = u.sub(&fy, old);
                            let path_to = |mut p: usize| {
                                let mut steps = Vec::new();
                                while let Some((q, g)) = parent[p] {
                                    steps.push((g, 1i8));
                                    p = q;
                                }
                                steps.reverse();
                                steps
                            };
                            let mut steps = path_to(x);
                            steps.push((i, 1));
                            let back = path_to(y);
                            for &(g, _) in back.iter().rev() {
                                steps.push((g, -1));
                            }
                            return CoboundaryOutcome::Obstructed {
                                certificate: CycleCertificate { start: root, steps, value: defect },
                            };
                        }
                    }
                }
            }
        }
    }
    CoboundaryOutcome::Coboundary { transfer: f.into_iter().map(Option::unwrap).collect() }
}

/// Transfer between two cocycles, or a certified obstruction.
pub fn are_cohomologous(sys: &FiniteSystem, a: &Cocycle, b: &Cocycle) -> CoboundaryOutcome {
    solve_coboundary(sys, &a.sub(b))
}

/// Result of writing `ρ = c + ΔF` with constant `c`: the values live in a
/// refinement of the fiber, since the constant extracted from an orbit cycle
/// sum is an `L`-th root of a fiber element.
#[derive(Debug, Clone)]
pub struct ConstantReduction {
    /// Fiber refined so that the constants exist: each torsion modulus is
    /// multiplied by `factor`.
    pub refined: AbGroup,
    /// Embedding multiplier: a fiber element `u` maps to `factor · u`.
    pub factor: i64,
    /// One constant per acting generator, in the refined fiber.
    pub c: Vec<GroupElement>,
    /// Transfer in the refined fiber.
    pub transfer: Vec<GroupElement>,
}

impl ConstantReduction {
    pub fn embed(&self, u: &GroupElement) -> GroupElement {
        let coords: Vec<i64> = u.coords().iter().map(|&x| x * self.factor).collect();
        self.refined.from_coords(&coords).expect("embedding stays in range")
    }
}

/// Decomposition `ρ = c + ΔF` with `c` a constant homomorphism (the type-<1
/// structure theorem). The constants are extracted from the cycle sums of
/// the orbit graph: each cycle with word `w` forces `w·c = (cycle sum of
/// ρ)`, solved over a fiber refinement whose index is the lcm of the
/// elementary divisors of the cycle word lattice.
pub fn constant_decomposition(sys: &FiniteSystem, rho: &Cocycle) -> Option<ConstantReduction> {
    let u = &rho.fiber;
    assert!(u.is_finite(), "constant extraction needs a finite fiber");
    let n = sys.size();
    let k = sys.acting().dims();
    // accumulate cycle equations: word · c = cycle sum
    let mut rows: Vec<Vec<i64>> = Vec::new();
    let mut rhs: Vec<GroupElement> = Vec::new();
    for (i, &m) in sys.acting().moduli().iter().enumerate() {
        let mut w = vec![0i64; k];
        w[i] = m as i64;
        rows.push(w);
        rhs.push(u.zero());
    }
    let mut val: Vec<Option<GroupElement>> = vec![None; n];
    let mut word: Vec<Option<Vec<i64>>> = vec![None; n];
    for root in 0..n {
        if val[root].is_some() {
            continue;
        }
        val[root] = Some(u.zero());
        word[root] = Some(vec![0; k]);
        let mut queue = VecDeque::new();
        queue.push_back(root);
        while let Some(x) = queue.pop_front() {
            for i in 0..k {
                let y = sys.apply_gen(i, x);
                let vy = u.add(val[x].as_ref().unwrap(), &rho.tables[i][x]);
                let mut wy = word[x].clone().unwrap();
                wy[i] += 1;
                match &val[y] {
                    None => {
                        val[y] = Some(vy);
                        word[y] = Some(wy);
                        queue.push_back(y);
                    }
                    Some(old) => {
                        let dv = u.sub(&vy, old);
                        let dw: Vec<i64> = wy
                            .iter()
                            .zip(word[y].as_ref().unwrap())
                            .map(|(a, b)| a - b)
                            .collect();
                        if dw.iter().any(|&c| c != 0) || !u.is_zero(&dv) {
                            rows.push(dw);
                            rhs.push(dv);
                        }
                    }
                }
            }
        }
    }
    // refinement index: lcm of the nonzero elementary divisors of the word
    // lattice, so that every circle-valued solution lands in the lattice
    let mat: Vec<Vec<num::BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| num::BigInt::from(x)).collect())
        .collect();
    let mut factor = 1i64;
    if !mat.is_empty() {
        let smith = crate::snf::smith_normal_form(&mat);
        for d in &smith.diag {
            if !d.is_zero() {
                let di = d.to_i64().expect("elementary divisor fits i64").abs();
                factor = factor / gcd_i64(factor, di) * di;
            }
        }
    }
    let refined_moduli: Vec<u64> = u
        .moduli()
        .iter()
        .map(|&m| m * factor as u64)
        .collect();
    let refined = AbGroup::new(&refined_moduli, 0);
    let embed = |e: &GroupElement| {
        let coords: Vec<i64> = e.coords().iter().map(|&x| x * factor).collect();
        refined.from_coords(&coords).expect("embedding stays in range")
    };
    let rhs_ref: Vec<GroupElement> = rhs.iter().map(&embed).collect();
    match solve_group_linear(&refined, &rows, &rhs_ref) {
        SolveOutcome::Solvable(fam) => {
            let c = fam.particular;
            let lifted = Cocycle {
                fiber: refined.clone(),
                tables: rho
                    .tables
                    .iter()
                    .map(|t| t.iter().map(&embed).collect())
                    .collect(),
            };
            let shifted = lifted.sub(&Cocycle::constant(sys, &refined, &c));
            match solve_coboundary(sys, &shifted) {
                CoboundaryOutcome::Coboundary { transfer } => {
                    Some(ConstantReduction { refined, factor, c, transfer })
                }
                CoboundaryOutcome::Obstructed { .. } => {
                    unreachable!("the fundamental cycle equations were satisfied")
                }
            }
        }
        SolveOutcome::Infeasible(_) => None,
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Smallest `k ≤ k_max` such that every `k`-fold generator derivative of the
/// table vanishes, for `U`-valued data.
pub fn polynomial_degree_table(
    sys: &FiniteSystem,
    fiber: &AbGroup,
    values: &[GroupElement],
    k_max: usize,
) -> Option<usize> {
    let k = sys.acting().dims();
    let deriv = |t: &Vec<GroupElement>, i: usize| -> Vec<GroupElement> {
        (0..t.len())
            .map(|x| fiber.sub(&t[sys.apply_gen(i, x)], &t[x]))
            .collect()
    };
    let mut level: Vec<Vec<GroupElement>> = vec![values.to_vec()];
    for d in 0..=k_max {
        if level
            .iter()
            .all(|t| t.iter().all(|v| fiber.is_zero(v)))
        {
            return Some(d);
        }
        if d == k_max {
            break;
        }
        let mut next = Vec::new();
        for t in &level {
            for i in 0..k {
                next.push(deriv(t, i));
            }
        }
        level = next;
    }
    None
}

/// Same as [`polynomial_degree_table`] for phase-valued data.
pub fn polynomial_degree_phase(
    sys: &FiniteSystem,
    values: &[Phase],
    k_max: usize,
) -> Option<usize> {
    let k = sys.acting().dims();
    let deriv = |t: &Vec<Phase>, i: usize| -> Vec<Phase> {
        (0..t.len())
            .map(|x| t[sys.apply_gen(i, x)].sub(&t[x]))
            .collect()
    };
    let mut level: Vec<Vec<Phase>> = vec![values.to_vec()];
    for d in 0..=k_max {
        if level.iter().all(|t| t.iter().all(|v| v.is_zero())) {
            return Some(d);
        }
        if d == k_max {
            break;
        }
        let mut next = Vec::new();
        for t in &level {
            for i in 0..k {
                next.push(deriv(t, i));
            }
        }
        level = next;
    }
    None
}

/// Degree of a cocycle: the maximum over generators of the degree of its
/// point table.
pub fn polynomial_degree_cocycle(
    sys: &FiniteSystem,
    rho: &Cocycle,
    k_max: usize,
) -> Option<usize> {
    let mut best = 0;
    for t in &rho.tables {
        best = best.max(polynomial_degree_table(sys, &rho.fiber, t, k_max)?);
    }
    Some(best)
}

/// `e(freq·x + shift)` on a torus system.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPhaseFunction {
    pub freq: Vec<i64>,
    pub shift: Phase,
}

/// Degree of a torus phase function under the generator derivative
/// `Δf = f∘T · conj(f)`: for `e(v·x + p)` the derivative is
/// `e(((Aᵀ−I)v)·x + v·b)`, so the scan is a linear recursion on `(v, const)`.
pub fn polynomial_degree_torus(
    sys: &TorusSystem,
    f: &TorusPhaseFunction,
    k_max: usize,
) -> Option<usize> {
    let d = sys.dim();
    assert_eq!(f.freq.len(), d);
    let mut v = f.freq.clone();
    let mut constant = f.shift.clone();
    if v.iter().all(|&c| c == 0) && constant.is_zero() {
        return Some(0);
    }
    for step in 1..=k_max {
        // derivative: new constant = v·b, new v = (Aᵀ − I) v
        let mut nc = Phase::zero();
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0 {
                nc = nc.add(&sys.trans()[j].scalar_mul_int(vj));
            }
        }
        let mut nv = vec![0i64; d];
        for (j, nvj) in nv.iter_mut().enumerate() {
            let mut acc = 0i64;
            for (i, &vi) in v.iter().enumerate() {
                // (Aᵀ)_{j i} = A_{i j}
                acc += sys.mat()[i][j] * vi;
            }
            *nvj = acc - v[j];
        }
        v = nv;
        constant = nc;
        if v.iter().all(|&c| c == 0) && constant.is_zero() {
            return Some(step);
        }
    }
    None
}

/// Outcome of the separation bound between two phase tables on a finite
/// group with uniform mass.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    /// Performed at all: false when `φ − ψ` is constant (hypothesis fails).
    pub applicable: bool,
    pub distance_sq: f64,
    pub bound_sq: String,
    pub pass: bool,
}

/// `‖e(φ) − e(ψ)‖_{L²}` against the lower bound `√2 / 2^{k−2}` for
/// non-proportional phase polynomials of degree `< k`.
pub fn separation_check(z: &AbGroup, phi: &[Phase], psi: &[Phase], k: u32) -> SeparationReport {
    let n = z.order().expect("finite group") as usize;
    assert_eq!(phi.len(), n);
    assert_eq!(psi.len(), n);
    let diffs: Vec<Phase> = phi.iter().zip(psi).map(|(a, b)| a.sub(b)).collect();
    let constant = diffs.iter().all(|d| *d == diffs[0]);
    // bound² = 2 / 4^{k−2}
    let bound_sq = if k >= 2 {
        BigRational::new(2.into(), num::BigInt::from(4).pow(k - 2))
    } else {
        BigRational::new(num::BigInt::from(2) * num::BigInt::from(4).pow(2 - k), 1.into())
    };
    if constant {
        return SeparationReport {
            applicable: false,
            distance_sq: 0.0,
            bound_sq: bound_sq.to_string(),
            pass: true,
        };
    }
    // ‖e(φ)−e(ψ)‖² = 2 − 2·Re avg e(φ−ψ)
    let mut mean = ExactComplex::zero();
    for d in &diffs {
        mean = mean.add(&ExactComplex::from_phase(d));
    }
    mean = mean.scale_ratio(1, n as i64);
    let re_twice = mean.add(&mean.conj());
    let dist_sq = ExactComplex::from_rational_i64(2, 1).sub(&re_twice);
    let gap = dist_sq.sub(&ExactComplex::from_bigrational(bound_sq.clone()));
    let pass = if gap.is_zero() {
        true
    } else {
        let (re, _) = gap.eval_f64(&BTreeMap::new()).expect("no free symbols");
        re > 0.0
    };
    let (dre, _) = dist_sq.eval_f64(&BTreeMap::new()).expect("no free symbols");
    SeparationReport {
        applicable: true,
        distance_sq: dre,
        bound_sq: bound_sq.to_string(),
        pass,
    }
}

/// Result of the type-<k test.
#[derive(Debug, Clone)]
pub struct TypeReport {
    pub k: usize,
    pub is_type: bool,
    /// Transfer on the cubic support when of type <k.
    pub transfer: Option<Vec<GroupElement>>,
    pub certificate: Option<CycleCertificate>,
    /// The cubic support system and the differenced cocycle, for re-checks.
    pub cubic_points: usize,
}

/// The support of `μ^[k]` as a finite system under the diagonal action,
/// together with the point tuples in support order.
pub fn cubic_system(
    sys: &FiniteSystem,
    k: usize,
) -> Result<(FiniteSystem, Vec<Vec<usize>>), CocycleError> {
    let mu = cubic_measure(sys, k)?;
    let tuples: Vec<Vec<usize>> = mu.entries().iter().map(|(t, _)| t.clone()).collect();
    let index: BTreeMap<&Vec<usize>, usize> =
        tuples.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let dims = sys.acting().dims();
    let maps: Vec<Vec<usize>> = (0..dims)
        .map(|i| {
            tuples
                .iter()
                .map(|t| {
                    let img: Vec<usize> = t.iter().map(|&x| sys.apply_gen(i, x)).collect();
                    index[&img]
                })
                .collect()
        })
        .collect();
    let masses: Vec<Rational64> = mu
        .entries()
        .iter()
        .map(|(_, m)| {
            let n = m.numer().to_i64().expect("cubic mass fits i64");
            let d = m.denom().to_i64().expect("cubic mass fits i64");
            Rational64::new(n, d)
        })
        .collect();
    let cubic_sys = FiniteSystem::new(sys.acting().clone(), maps, masses, None)?;
    Ok((cubic_sys, tuples))
}

/// `d^[k]ρ` over the given support tuples: the vertex values enter with the
/// sign `(−1)^{|w|}` determined by the parity of the cube vertex.
pub fn cube_difference(rho: &Cocycle, tuples: &[Vec<usize>]) -> Cocycle {
    let u = &rho.fiber;
    let tables: Vec<Vec<GroupElement>> = rho
        .tables
        .iter()
        .map(|table| {
            tuples
                .iter()
                .map(|t| {
                    let mut acc = u.zero();
                    for (w, &x) in t.iter().enumerate() {
                        if (w.count_ones() & 1) == 0 {
                            acc = u.add(&acc, &table[x]);
                        } else {
                            acc = u.sub(&acc, &table[x]);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Cocycle { fiber: u.clone(), tables }
}

/// Tests whether `ρ` is of type `<k`: whether `d^[k]ρ` is a coboundary over
/// the support of `μ^[k]` with the diagonal action.
pub fn cocycle_type(
    sys: &FiniteSystem,
    rho: &Cocycle,
    k: usize,
) -> Result<TypeReport, CocycleError> {
    assert!((1..=3).contains(&k));
    let (cubic_sys, tuples) = cubic_system(sys, k)?;
    let npts = tuples.len();
    let dk = cube_difference(rho, &tuples);
    match solve_coboundary(&cubic_sys, &dk) {
        CoboundaryOutcome::Coboundary { transfer } => Ok(TypeReport {
            k,
            is_type: true,
            transfer: Some(transfer),
            certificate: None,
            cubic_points: npts,
        }),
        CoboundaryOutcome::Obstructed { certificate } => Ok(TypeReport {
            k,
            is_type: false,
            transfer: None,
            certificate: Some(certificate),
            cubic_points: npts,
        }),
    }
}

/// A group extension `X = Z ×_ρ U` bundled with its ingredients.
#[derive(Debug, Clone)]
pub struct GroupExtension {
    pub acting: AbGroup,
    pub z: AbGroup,
    pub shifts: Vec<GroupElement>,
    pub fiber: AbGroup,
    pub rho: Cocycle,
    pub base: FiniteSystem,
    pub total: FiniteSystem,
    z_elems: Vec<GroupElement>,
    z_index: BTreeMap<GroupElement, usize>,
}

impl GroupExtension {
    /// Builds the extension after validating the cocycle over the base
    /// rotation. Base points are indexed by `z.elements()` order.
    pub fn new(
        acting: &AbGroup,
        z: &AbGroup,
        shifts: &[GroupElement],
        fiber: &AbGroup,
        tables: Vec<Vec<GroupElement>>,
    ) -> Result<GroupExtension, CocycleError> {
        let base = rotation_system(acting, z, shifts)?;
        let rho = Cocycle { fiber: fiber.clone(), tables };
        if let Err(v) = validate_cocycle(&base, &rho) {
            return Err(CocycleError::InvalidCocycle(v));
        }
        let total = abelian_extension(&base, fiber, &rho.tables)?;
        let z_elems = z.elements()?;
        let z_index = z_elems.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        Ok(GroupExtension {
            acting: acting.clone(),
            z: z.clone(),
            shifts: shifts.to_vec(),
            fiber: fiber.clone(),
            rho,
            base,
            total,
            z_elems,
            z_index,
        })
    }

    pub fn z_point(&self, e: &GroupElement) -> usize {
        self.z_index[e]
    }

    pub fn z_element(&self, idx: usize) -> &GroupElement {
        &self.z_elems[idx]
    }

    fn translation_perm(&self, s: &GroupElement) -> Vec<usize> {
        self.z_elems
            .iter()
            .map(|x| self.z_index[&self.z.add(x, s)])
            .collect()
    }
}

/// A solution of the Conze–Lesigne equation at `s`:
/// `Δ_s ρ(g, z) = c(g) + F(T_g z) − F(z)`.
#[derive(Debug, Clone, Serialize)]
pub struct CLWitness {
    pub s: GroupElement,
    /// One homomorphism value per acting generator.
    pub c: Vec<GroupElement>,
    /// Transfer table over the base, indexed like base points.
    pub f: Vec<GroupElement>,
}

impl CLWitness {
    pub fn verify(&self, ext: &GroupExtension) -> bool {
        let u = &ext.fiber;
        let p = ext.translation_perm(&self.s);
        let drho = ext.rho.base_difference(&p);
        for i in 0..ext.acting.dims() {
            for zi in 0..ext.base.size() {
                let lhs = drho.tables[i][zi].clone();
                let rhs = u.add(
                    &self.c[i],
                    &u.sub(&self.f[ext.base.apply_gen(i, zi)], &self.f[zi]),
                );
                if lhs != rhs {
                    return false;
                }
            }
        }
        // c must respect the acting torsion
        for (i, &m) in ext.acting.moduli().iter().enumerate() {
            if !u.is_zero(&u.scalar_mul(m as i64, &self.c[i])) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub enum CLOutcome {
    Witness(CLWitness),
    Infeasible(InfeasibilityCertificate),
}

fn cl_system(
    ext: &GroupExtension,
    s: &GroupElement,
) -> (Vec<Vec<i64>>, Vec<GroupElement>) {
    let k = ext.acting.dims();
    let nz = ext.base.size();
    let p = ext.translation_perm(s);
    let drho = ext.rho.base_difference(&p);
    let unknowns = k + nz;
    let mut a: Vec<Vec<i64>> = Vec::new();
    let mut b: Vec<GroupElement> = Vec::new();
    for i in 0..k {
        for z in 0..nz {
            let mut row = vec![0i64; unknowns];
            row[i] += 1;
            row[k + ext.base.apply_gen(i, z)] += 1;
            row[k + z] -= 1;
            a.push(row);
            b.push(drho.tables[i][z].clone());
        }
    }
    for (i, &m) in ext.acting.moduli().iter().enumerate() {
        let mut row = vec![0i64; unknowns];
        row[i] = m as i64;
        a.push(row);
        b.push(ext.fiber.zero());
    }
    (a, b)
}

/// Solves the CL equation at `s` as one joint linear system over the fiber,
/// with unknowns `(c, F)`.
pub fn solve_cl_equation(ext: &GroupExtension, s: &GroupElement) -> CLOutcome {
    let (a, b) = cl_system(ext, s);
    let k = ext.acting.dims();
    match solve_group_linear(&ext.fiber, &a, &b) {
        SolveOutcome::Solvable(fam) => {
            let c = fam.particular[..k].to_vec();
            let f = fam.particular[k..].to_vec();
            CLOutcome::Witness(CLWitness { s: s.clone(), c, f })
        }
        SolveOutcome::Infeasible(cert) => CLOutcome::Infeasible(cert),
    }
}

/// All CL solutions at `s`, as witnesses.
pub fn cl_solution_family(
    ext: &GroupExtension,
    s: &GroupElement,
    cap: usize,
) -> Result<Vec<CLWitness>, CocycleError> {
    let (a, b) = cl_system(ext, s);
    let k = ext.acting.dims();
    match solve_group_linear(&ext.fiber, &a, &b) {
        SolveOutcome::Solvable(fam) => {
            let sols = fam.enumerate(cap)?;
            Ok(sols
                .into_iter()
                .map(|y| CLWitness {
                    s: s.clone(),
                    c: y[..k].to_vec(),
                    f: y[k..].to_vec(),
                })
                .collect())
        }
        SolveOutcome::Infeasible(_) => Ok(Vec::new()),
    }
}

/// Element `S_{s,F}: (z, u) ↦ (z + s, u + F(z))` of the CL group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CLGroupElement {
    pub s: GroupElement,
    /// Table over base points.
    pub f: Vec<GroupElement>,
}

impl CLGroupElement {
    pub fn identity(ext: &GroupExtension) -> CLGroupElement {
        CLGroupElement {
            s: ext.z.zero(),
            f: vec![ext.fiber.zero(); ext.base.size()],
        }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &CLGroupElement, ext: &GroupExtension) -> CLGroupElement {
        let s = ext.z.add(&self.s, &other.s);
        let pt = ext.translation_perm(&other.s);
        let f = (0..ext.base.size())
            .map(|z| ext.fiber.add(&other.f[z], &self.f[pt[z]]))
            .collect();
        CLGroupElement { s, f }
    }

    pub fn inverse(&self, ext: &GroupExtension) -> CLGroupElement {
        let s = ext.z.neg(&self.s);
        let pt = ext.translation_perm(&s);
        let f = (0..ext.base.size())
            .map(|z| ext.fiber.neg(&self.f[pt[z]]))
            .collect();
        CLGroupElement { s, f }
    }

    /// Action on a point `(z, u)` of the extension.
    pub fn act(
        &self,
        ext: &GroupExtension,
        z: &GroupElement,
        u: &GroupElement,
    ) -> (GroupElement, GroupElement) {
        let zi = ext.z_point(z);
        (ext.z.add(z, &self.s), ext.fiber.add(u, &self.f[zi]))
    }

    /// Checks the membership condition: some homomorphism `c` satisfies
    /// `Δ_s ρ = c + ΔF`.
    pub fn is_member(&self, ext: &GroupExtension) -> bool {
        let u = &ext.fiber;
        let p = ext.translation_perm(&self.s);
        let drho = ext.rho.base_difference(&p);
        for i in 0..ext.acting.dims() {
            let mut c: Option<GroupElement> = None;
            for z in 0..ext.base.size() {
                let df = u.sub(&self.f[ext.base.apply_gen(i, z)], &self.f[z]);
                let ci = u.sub(&drho.tables[i][z], &df);
                match &c {
                    None => c = Some(ci),
                    Some(prev) => {
                        if *prev != ci {
                            return false;
                        }
                    }
                }
            }
            if let (Some(ci), Some(&m)) = (&c, ext.acting.moduli().get(i)) {
                if !u.is_zero(&u.scalar_mul(m as i64, ci)) {
                    return false;
                }
            }
        }
        true
    }
}

const CL_CLOSURE_CAP: usize = 100_000;

/// The generated CL group with its structural report.
#[derive(Debug, Clone)]
pub struct CLGroupReport {
    pub elements: Vec<CLGroupElement>,
    pub orbit_size: usize,
    pub transitive: bool,
    /// Invariant factors of the commutator subgroup.
    pub commutator_invariants: Vec<u64>,
    pub commutator_size: usize,
    /// All commutators are central and fix the base coordinate.
    pub two_step: bool,
    pub stabilizer: Vec<CLGroupElement>,
}

/// Builds the full CL group of the extension: the union over `s` of the CL
/// solution families, closed under composition (closure is also verified
/// explicitly), with the base-point orbit, the commutator subgroup, and the
/// stabilizer of the base point.
pub fn cl_group(ext: &GroupExtension) -> Result<CLGroupReport, CocycleError> {
    let nz = ext.z.order().ok_or(GroupError::InfiniteGroup)?;
    let nu = ext.fiber.order().ok_or(GroupError::InfiniteGroup)?;
    if nz * nu > 64 {
        return Err(CocycleError::SizeCap(nz * nu));
    }
    let mut elements: BTreeSet<CLGroupElement> = BTreeSet::new();
    for s in ext.z.elements()? {
        for w in cl_solution_family(ext, &s, CL_CLOSURE_CAP)? {
            elements.insert(CLGroupElement { s: w.s, f: w.f });
            if elements.len() > CL_CLOSURE_CAP {
                return Err(CocycleError::ClosureCap(CL_CLOSURE_CAP));
            }
        }
    }
    // close under composition and inversion (the families already form a
    // group; this both verifies that and guards the cap)
    let mut frontier: Vec<CLGroupElement> = elements.iter().cloned().collect();
    let gens = frontier.clone();
    while let Some(x) = frontier.pop() {
        let xin = x.inverse(ext);
        if elements.insert(xin.clone()) {
            frontier.push(xin);
        }
        for g in &gens {
            let y = x.compose(g, ext);
            if elements.insert(y.clone()) {
                if elements.len() > CL_CLOSURE_CAP {
                    return Err(CocycleError::ClosureCap(CL_CLOSURE_CAP));
                }
                frontier.push(y);
            }
        }
    }
    let elements: Vec<CLGroupElement> = elements.into_iter().collect();
    for e in &elements {
        assert!(e.is_member(ext), "closure left the CL membership set");
    }
    // orbit of the base point (0, 0)
    let z0 = ext.z.zero();
    let u0 = ext.fiber.zero();
    let mut orbit: BTreeSet<(GroupElement, GroupElement)> = BTreeSet::new();
    let mut queue: VecDeque<(GroupElement, GroupElement)> = VecDeque::new();
    orbit.insert((z0.clone(), u0.clone()));
    queue.push_back((z0.clone(), u0.clone()));
    while let Some((z, u)) = queue.pop_front() {
        for e in &elements {
            let p = e.act(ext, &z, &u);
            if orbit.insert(p.clone()) {
                queue.push_back(p);
            }
        }
    }
    let transitive = orbit.len() as u64 == nz * nu;
    // commutator subgroup
    let mut comms: BTreeSet<CLGroupElement> = BTreeSet::new();
    for a in &elements {
        for b in &elements {
            let c = a
                .compose(b, ext)
                .compose(&a.inverse(ext), ext)
                .compose(&b.inverse(ext), ext);
            comms.insert(c);
        }
    }
    let mut two_step = true;
    for c in &comms {
        if !ext.z.is_zero(&c.s) {
            two_step = false;
        }
        for e in &elements {
            if c.compose(e, ext) != e.compose(c, ext) {
                two_step = false;
            }
        }
    }
    let mut commutator: BTreeSet<CLGroupElement> = BTreeSet::new();
    let mut frontier: Vec<CLGroupElement> = comms.iter().cloned().collect();
    commutator.insert(CLGroupElement::identity(ext));
    while let Some(x) = frontier.pop() {
        for g in comms.clone() {
            let y = x.compose(&g, ext);
            if commutator.insert(y.clone()) {
                if commutator.len() > CL_CLOSURE_CAP {
                    return Err(CocycleError::ClosureCap(CL_CLOSURE_CAP));
                }
                frontier.push(y);
            }
        }
    }
    let commutator: Vec<CLGroupElement> = commutator.into_iter().collect();
    let orders: Vec<u64> = commutator
        .iter()
        .map(|c| {
            let mut acc = c.clone();
            let mut ord = 1u64;
            let id = CLGroupElement::identity(ext);
            while acc != id {
                acc = acc.compose(c, ext);
                ord += 1;
            }
            ord
        })
        .collect();
    let commutator_invariants = abelian_invariants(&orders);
    let stabilizer: Vec<CLGroupElement> = elements
        .iter()
        .filter(|e| {
            let (z, u) = e.act(ext, &z0, &u0);
            ext.z.is_zero(&z) && ext.fiber.is_zero(&u)
        })
        .cloned()
        .collect();
    Ok(CLGroupReport {
        orbit_size: orbit.len(),
        transitive,
        commutator_invariants,
        commutator_size: commutator.len(),
        two_step,
        stabilizer,
        elements,
    })
}

/// Invariant factors of a finite abelian group from the multiset of element
/// orders (the counts of `p^j`-torsion determine the type at each prime).
fn abelian_invariants(orders: &[u64]) -> Vec<u64> {
    let n = orders.len() as u64;
    if n <= 1 {
        return Vec::new();
    }
    let mut primes = Vec::new();
    let mut m = n;
    let mut p = 2u64;
    while p * p <= m {
        if m % p == 0 {
            primes.push(p);
            while m % p == 0 {
                m /= p;
            }
        }
        p += 1;
    }
    if m > 1 {
        primes.push(m);
    }
    // per prime: multiset of cyclic p-power factors
    let mut per_prime: Vec<Vec<u64>> = Vec::new();
    for &p in &primes {
        let mut counts = vec![1u64]; // m_0 = 1
        let mut j = 1u32;
        loop {
            let pj = p.pow(j);
            let c = orders.iter().filter(|&&o| pj % o == 0).count() as u64;
            counts.push(c);
            if c == counts[counts.len() - 2] && j > 1 {
                counts.pop();
                break;
            }
            j += 1;
            if j > 40 {
                break;
            }
        }
        // r_j = #factors with exponent ≥ j
        let mut rs = Vec::new();
        for j in 1..counts.len() {
            let ratio = counts[j] / counts[j - 1];
            let mut r = 0u64;
            let mut q = ratio;
            while q > 1 {
                q /= p;
                r += 1;
            }
            rs.push(r);
        }
        let mut factors = Vec::new();
        for (idx, &r) in rs.iter().enumerate() {
            let next = rs.get(idx + 1).copied().unwrap_or(0);
            for _ in 0..(r - next) {
                factors.push(p.pow(idx as u32 + 1));
            }
        }
        factors.sort_unstable_by(|a, b| b.cmp(a));
        per_prime.push(factors);
    }
    let depth = per_prime.iter().map(|f| f.len()).max().unwrap_or(0);
    let mut inv = Vec::new();
    for i in 0..depth {
        let mut d = 1u64;
        for f in &per_prime {
            if i < f.len() {
                d *= f[i];
            }
        }
        inv.push(d);
    }
    inv.reverse();
    inv
}
