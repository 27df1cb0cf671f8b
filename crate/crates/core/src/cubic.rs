//! Cubic measures and Gowers–Host–Kra seminorms on finite systems.
//!
//! `μ^[0] = μ`, and `μ^[k+1]` is the conditional square of `μ^[k]` over the
//! invariant algebra of the diagonal action: on a finite system the atoms of
//! that algebra are the diagonal orbits of the support, so
//! `μ^[k+1](ω ⊕ ω') = μ^[k](ω) μ^[k](ω') / μ^[k](orbit)` for `ω, ω'` in the
//! same orbit and zero otherwise. Everything is exact.
//!
//! The seminorm comes in two independently computed forms, kept separate on
//! purpose so they can check each other: the recursive form averages
//! `f·conj(T_g f)` over the acting image, the cubic form integrates the
//! conjugation-decorated product over `μ^[k]`.

use crate::cyclo::ExactComplex;
use crate::systems::{br, FiniteSystem, Observable, SystemError};
use num::rational::BigRational;
use num::Zero;
#[cfg(test)]
use num::One;
use std::collections::BTreeMap;
use std::collections::VecDeque;

const MAX_CUBIC_SUPPORT: usize = 1_000_000;

/// Exact cubic measure of order `k`: tuples of length `2^k` with positive
/// rational mass.
#[derive(Debug, Clone)]
pub struct CubicMeasure {
    pub k: usize,
    entries: Vec<(Vec<usize>, BigRational)>,
}

impl CubicMeasure {
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(Vec<usize>, BigRational)] {
        &self.entries
    }

    pub fn total_mass(&self) -> BigRational {
        self.entries.iter().map(|(_, m)| m.clone()).sum()
    }

    /// Marginal of coordinate `w` as a mass vector over the point set.
    pub fn marginal(&self, w: usize, points: usize) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); points];
        for (t, m) in &self.entries {
            out[t[w]] += m;
        }
        out
    }

    /// `∫ Π_w f_w(x_w) dμ^[k]` with one observable per vertex, no implicit
    /// conjugation.
    pub fn integral(&self, fs: &[&Observable]) -> ExactComplex {
        assert_eq!(fs.len(), 1 << self.k);
        let mut acc = ExactComplex::zero();
        for (t, m) in &self.entries {
            let mut prod = ExactComplex::from_bigrational(m.clone());
            for (w, f) in fs.iter().enumerate() {
                if prod.is_zero() {
                    break;
                }
                prod = prod.mul(&f.values[t[w]]);
            }
            acc = acc.add(&prod);
        }
        acc
    }
}

/// Builds `μ^[k]` by the conditional-square recursion.
pub fn cubic_measure(sys: &FiniteSystem, k: usize) -> Result<CubicMeasure, SystemError> {
    let mut entries: Vec<(Vec<usize>, BigRational)> = (0..sys.size())
        .filter(|&x| !sys.mass(x).is_zero())
        .map(|x| (vec![x], br(sys.mass(x))))
        .collect();
    for level in 0..k {
        let index: BTreeMap<&Vec<usize>, usize> =
            entries.iter().enumerate().map(|(i, (t, _))| (t, i)).collect();
        let n = entries.len();
        // orbits of the diagonal action on the support
        let mut orbit_of = vec![usize::MAX; n];
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if orbit_of[start] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut members = vec![start];
            orbit_of[start] = id;
            let mut queue = VecDeque::new();
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for gi in 0..sys.acting().dims() {
                    let image: Vec<usize> =
                        entries[i].0.iter().map(|&x| sys.apply_gen(gi, x)).collect();
                    let j = *index
                        .get(&image)
                        .expect("cubic support is invariant under the diagonal action");
                    if orbit_of[j] == usize::MAX {
                        orbit_of[j] = id;
                        members.push(j);
                        queue.push_back(j);
                    }
                }
            }
            orbits.push(members);
        }
        let mut next: Vec<(Vec<usize>, BigRational)> = Vec::new();
        for members in &orbits {
            let total: BigRational = members.iter().map(|&i| entries[i].1.clone()).sum();
            let grow = members.len().checked_mul(members.len());
            if grow.map_or(true, |g| next.len() + g > MAX_CUBIC_SUPPORT) {
                return Err(crate::abgroup::GroupError::EnumerationCap.into());
            }
            for &i in members {
                for &j in members {
                    let mut t = entries[i].0.clone();
                    t.extend_from_slice(&entries[j].0);
                    let m = &entries[i].1 * &entries[j].1 / &total;
                    next.push((t, m));
                }
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        entries = next;
        let _ = level;
    }
    Ok(CubicMeasure { k, entries })
}

/// `‖f‖_{U^k}^{2^k}` through the cubic integral, with `conj` applied at the
/// odd-parity vertices.
pub fn ghk_power_cubic(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
) -> Result<ExactComplex, SystemError> {
    let mu = cubic_measure(sys, k)?;
    let fbar = f.conj();
    let fs: Vec<&Observable> = (0..1usize << k)
        .map(|w| {
            if (w.count_ones() & 1) == 1 {
                &fbar
            } else {
                f
            }
        })
        .collect();
    Ok(mu.integral(&fs))
}

/// `‖f‖_{U^k}^{2^k}` through the recursion
/// `‖f‖_{U^{k+1}}^{2^{k+1}} = avg_g ‖f · conj(T_g f)‖_{U^k}^{2^k}`,
/// with the average taken over the acting image (the exact Følner limit).
pub fn ghk_power_recursive(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
) -> Result<ExactComplex, SystemError> {
    assert!(k >= 1);
    let image = sys.acting_image()?;
    Ok(ghk_rec(sys, &image, f, k))
}

fn ghk_rec(sys: &FiniteSystem, image: &[Vec<usize>], f: &Observable, k: usize) -> ExactComplex {
    let mut acc = ExactComplex::zero();
    for p in image {
        let shifted = Observable {
            values: (0..sys.size()).map(|x| f.values[p[x]].conj()).collect(),
        };
        let prod = f.mul(&shifted);
        let inner = if k == 1 {
            sys.integral(&prod)
        } else {
            ghk_rec(sys, image, &prod, k - 1)
        };
        acc = acc.add(&inner);
    }
    acc.scale_ratio(1, image.len() as i64)
}

/// Projection of `f` onto the span of the level-`k` dual functions, i.e.
/// the conditional expectation onto the characteristic factor of `U^k`.
#[derive(Debug, Clone)]
pub struct HostKraProjection {
    pub projection: Observable,
    pub residual: Observable,
    /// `‖residual‖_{U^k}^{2^k}`, recomputed through the cubic route; the
    /// projection is correct exactly when this vanishes.
    pub residual_power: ExactComplex,
    /// Size of the independent dual basis that was solved against.
    pub basis_size: usize,
}

/// Computes the projection of `f` onto `L^2` of the `U^k`-characteristic
/// factor.
///
/// The dual functions `x ↦ μ^[k](x_0 = x, tail) / μ(x)` over all tails span
/// that subspace (a function is orthogonal to all of them exactly when its
/// `U^k` seminorm vanishes, by the Gowers–Cauchy–Schwarz inequality). The
/// basis is rational, so the Gram system is solved in exact rational
/// arithmetic; the returned residual power is an independent certificate.
pub fn host_kra_projection(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
) -> Result<HostKraProjection, SystemError> {
    let mu = cubic_measure(sys, k)?;
    let n = sys.size();
    // group support by the tail coordinates
    let mut tails: BTreeMap<&[usize], Vec<BigRational>> = BTreeMap::new();
    for (t, m) in mu.entries() {
        let x0 = t[0];
        let v = tails
            .entry(&t[1..])
            .or_insert_with(|| vec![BigRational::zero(); n]);
        v[x0] += m / br(sys.mass(x0));
    }
    // keep a maximal linearly independent subset (rational row echelon)
    let mut echelon: Vec<Vec<BigRational>> = Vec::new();
    let mut basis: Vec<Vec<BigRational>> = Vec::new();
    for (_, v) in tails {
        let mut w = v.clone();
        for row in &echelon {
            let piv = row.iter().position(|c| !c.is_zero()).unwrap();
            if !w[piv].is_zero() {
                let factor = &w[piv] / &row[piv];
                for (wi, ri) in w.iter_mut().zip(row) {
                    *wi -= &factor * ri;
                }
            }
        }
        if w.iter().any(|c| !c.is_zero()) {
            echelon.push(w);
            basis.push(v);
        }
    }
    let b = basis.len();
    // normal equations G a = c with G rational and c exact complex
    let weight = |x: usize| br(sys.mass(x));
    let mut g: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); b]; b];
    for i in 0..b {
        for j in 0..b {
            let mut acc = BigRational::zero();
            for x in 0..n {
                acc += &basis[i][x] * &basis[j][x] * weight(x);
            }
            g[i][j] = acc;
        }
    }
    let mut c: Vec<ExactComplex> = Vec::with_capacity(b);
    for bi in basis.iter() {
        let mut acc = ExactComplex::zero();
        for x in 0..n {
            if !bi[x].is_zero() {
                acc = acc.add(&f.values[x].scale(&(&bi[x] * weight(x))));
            }
        }
        c.push(acc);
    }
    // rational Gaussian elimination applied to the mixed system
    let mut a = vec![ExactComplex::zero(); b];
    {
        let mut rows: Vec<(Vec<BigRational>, ExactComplex)> =
            g.into_iter().zip(c).collect();
        let mut pivot_cols = Vec::new();
        let mut r = 0;
        for col in 0..b {
            if let Some(pr) = (r..rows.len()).find(|&i| !rows[i].0[col].is_zero()) {
                rows.swap(r, pr);
                let piv = rows[r].0[col].clone();
                for ci in 0..b {
                    rows[r].0[ci] /= &piv;
                }
                rows[r].1 = rows[r].1.scale(&piv.recip());
                for i in 0..rows.len() {
                    if i != r && !rows[i].0[col].is_zero() {
                        let fct = rows[i].0[col].clone();
                        for ci in 0..b {
                            let t = &fct * &rows[r].0[ci];
                            rows[i].0[ci] -= t;
                        }
                        let t = rows[r].1.scale(&fct);
                        rows[i].1 = rows[i].1.sub(&t);
                    }
                }
                pivot_cols.push(col);
                r += 1;
            }
        }
        // normal equations are consistent; zero rows must have zero rhs
        for row in rows.iter().skip(r) {
            assert!(row.1.is_zero(), "inconsistent normal equations");
        }
        for (row_idx, &col) in pivot_cols.iter().enumerate() {
            a[col] = rows[row_idx].1.clone();
        }
    }
    let mut proj = vec![ExactComplex::zero(); n];
    for (ai, bi) in a.iter().zip(&basis) {
        if ai.is_zero() {
            continue;
        }
        for x in 0..n {
            if !bi[x].is_zero() {
                proj[x] = proj[x].add(&ai.scale(&bi[x]));
            }
        }
    }
    let projection = Observable { values: proj };
    let residual = f.sub(&projection);
    let residual_power = ghk_power_cubic(sys, &residual, k)?;
    Ok(HostKraProjection { projection, residual, residual_power, basis_size: b })
}
