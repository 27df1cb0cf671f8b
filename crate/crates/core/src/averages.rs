//! Multiple ergodic averages and the seminorms that control them.
//!
//! On a finite system the Følner averages of the acting group equidistribute
//! over its image in the permutation group, so the limit of a multiple
//! average is attained exactly as the image average; window values at finite
//! radii are reported alongside for comparison. Torus averages go through
//! the term-by-term Weyl dichotomy from `systems`.

use crate::abgroup::{AbGroup, FolnerScheme, GroupError, GroupElement};
use crate::cubic::{ghk_power_cubic, ghk_power_recursive, host_kra_projection};
use crate::cyclo::ExactComplex;
use crate::phases::{weyl_limit, Phase, PhasePolynomial};
use crate::systems::{
    kronecker_factor, FiniteSystem, Observable, RatPoly, SystemError, TorusSystem, TrigPoly,
};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AveragesError {
    #[error("patterns must have 1 to 4 nonzero integer coefficients")]
    BadCoefficients,
    #[error("expected one observable per coefficient")]
    Arity,
    #[error("{0} does not have finite index in the acting group")]
    InfiniteIndex(String),
    #[error("the two-term bound needs distinct nonzero coefficients")]
    DegeneratePattern,
    #[error("seminorm order must lie in 1..=3")]
    BadOrder,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

fn perm_compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&x| p[x]).collect()
}

fn perm_inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (x, &y) in p.iter().enumerate() {
        inv[y] = x;
    }
    inv
}

fn perm_power(p: &[usize], e: i64) -> Vec<usize> {
    let n = p.len();
    let (mut base, mut e) = if e < 0 {
        (perm_inverse(p), (-e) as u64)
    } else {
        (p.to_vec(), e as u64)
    };
    let mut acc: Vec<usize> = (0..n).collect();
    while e > 0 {
        if e & 1 == 1 {
            acc = perm_compose(&base, &acc);
        }
        base = perm_compose(&base, &base);
        e >>= 1;
    }
    acc
}

fn check_pattern(coeffs: &[i64], arity: usize) -> Result<(), AveragesError> {
    if coeffs.is_empty() || coeffs.len() > 4 || coeffs.iter().any(|&c| c == 0) {
        return Err(AveragesError::BadCoefficients);
    }
    if arity != coeffs.len() {
        return Err(AveragesError::Arity);
    }
    Ok(())
}

/// Exact limit of a multiple average together with finite-window values.
#[derive(Debug, Clone)]
pub struct MultiAverage {
    pub limit: Observable,
    pub windows: Vec<(u64, Observable)>,
}

/// `lim_N avg_{g in Φ_N} Π_i f_i(T_{c_i g} x)` on a finite system.
///
/// The acting group maps onto a finite permutation group, and box windows
/// equidistribute over every finite quotient, so the limit equals the
/// average of `Π_i f_i(h^{c_i} x)` over the image; it is exact and scheme
/// independent. Window values are the exact means over `Φ_N` for each
/// requested radius.
pub fn multi_average(
    sys: &FiniteSystem,
    coeffs: &[i64],
    fs: &[Observable],
    radii: &[u64],
    scheme: &FolnerScheme,
) -> Result<MultiAverage, AveragesError> {
    check_pattern(coeffs, fs.len())?;
    let n = sys.size();
    let image = sys.acting_image()?;
    let mut acc = vec![ExactComplex::zero(); n];
    for h in &image {
        let perms: Vec<Vec<usize>> = coeffs.iter().map(|&c| perm_power(h, c)).collect();
        for (x, slot) in acc.iter_mut().enumerate() {
            let mut term = ExactComplex::one();
            for (f, p) in fs.iter().zip(&perms) {
                term = term.mul(&f.values[p[x]]);
            }
            *slot = slot.add(&term);
        }
    }
    let inv = BigRational::new(BigInt::one(), BigInt::from(image.len()));
    let limit = Observable { values: acc }.scale(&inv);

    let mut windows = Vec::new();
    for &r in radii {
        let window = sys.acting().folner_window(r, scheme)?;
        let mut wacc = Observable::constant(n, ExactComplex::zero());
        for g in &window {
            let mut term = Observable::constant(n, ExactComplex::one());
            for (f, &c) in fs.iter().zip(coeffs) {
                let gc = sys.acting().scalar_mul(c, g);
                term = term.mul(&sys.translate(&gc, f));
            }
            wacc = wacc.add(&term);
        }
        let winv = BigRational::new(BigInt::one(), BigInt::from(window.len()));
        windows.push((r, wacc.scale(&winv)));
    }
    Ok(MultiAverage { limit, windows })
}

/// A Gowers-Host-Kra seminorm reported through both computation routes.
#[derive(Debug, Clone)]
pub struct SeminormReport {
    pub k: usize,
    /// `‖f‖_{U^k}^{2^k}` through the cubic-measure integral.
    pub power_cubic: ExactComplex,
    /// The same power through the inductive definition.
    pub power_recursive: ExactComplex,
    pub agree: bool,
    /// Float `‖f‖_{U^k}` for display.
    pub norm: Option<f64>,
}

pub fn ghk_seminorm(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
) -> Result<SeminormReport, AveragesError> {
    if !(1..=3).contains(&k) {
        return Err(AveragesError::BadOrder);
    }
    let power_cubic = ghk_power_cubic(sys, f, k)?;
    let power_recursive = ghk_power_recursive(sys, f, k)?;
    let agree = power_cubic.sub(&power_recursive).is_zero();
    let norm = power_cubic
        .eval_f64(&BTreeMap::new())
        .map(|(re, _)| re.max(0.0).powf(1.0 / (1u64 << k) as f64));
    Ok(SeminormReport { k, power_cubic, power_recursive, agree, norm })
}

/// The `U^2`-Fourier identity `‖f‖_{U^2}^4 = Σ_χ |⟨f,χ⟩|^4` on an ergodic
/// finite system, with the character sum taken over the Kronecker dual.
#[derive(Debug, Clone)]
pub struct FourierReport {
    pub power: ExactComplex,
    pub fourier_sum: ExactComplex,
    pub agree: bool,
}

pub fn u2_fourier_identity(
    sys: &FiniteSystem,
    f: &Observable,
) -> Result<FourierReport, AveragesError> {
    let power = ghk_power_cubic(sys, f, 2)?;
    let kf = kronecker_factor(sys)?;
    let mut fourier_sum = ExactComplex::zero();
    for t in kf.group.characters()? {
        let chi = kf.pull_back(&t);
        let c = sys.inner(f, &chi);
        let c2 = c.norm_sq();
        fourier_sum = fourier_sum.add(&c2.mul(&c2));
    }
    let agree = power.sub(&fourier_sum).is_zero();
    Ok(FourierReport { power, fourier_sum, agree })
}

/// One window stage of a van der Corput check.
#[derive(Debug, Clone)]
pub struct VdcStage {
    pub radius: u64,
    /// `‖avg_{g in Φ_N} x_g‖²`.
    pub raw_norm_sq: f64,
    /// `‖avg_g y_g‖²` for the smoothed sequence `y_g = avg_{|h| ≤ M} x_{g+h}`.
    pub smoothed_norm_sq: f64,
    /// `avg_g ‖y_g‖²`, the correlation side of the inequality.
    pub corr_bound: f64,
}

#[derive(Debug, Clone)]
pub struct VdcReport {
    pub stages: Vec<VdcStage>,
    /// `γ_h = avg_g ⟨x_{g+h}, x_g⟩` at the largest window, one entry per `h`.
    pub correlations: Vec<(Vec<i64>, (f64, f64))>,
    /// `corr_bound - smoothed_norm_sq` at the largest window.
    pub slack: f64,
    pub pass: bool,
}

/// Finite-window van der Corput inequality for a bounded vector sequence.
///
/// With `y_g` the `M`-smoothed sequence, `‖avg_g y_g‖² ≤ avg_g ‖y_g‖²` holds
/// at every window by convexity; as the window grows the left side tends to
/// `‖lim avg x_g‖²` and the right side to the averaged correlations, which is
/// the content of the van der Corput bound. Both sides are reported per stage
/// along with the raw unsmoothed average.
pub fn vdc_check(
    group: &AbGroup,
    xs: &dyn Fn(&GroupElement) -> Vec<(f64, f64)>,
    radii: &[u64],
    m_radius: u64,
    scheme: &FolnerScheme,
) -> Result<VdcReport, AveragesError> {
    assert!(!radii.is_empty());
    let h_window = group.folner_window(m_radius, &FolnerScheme::Box)?;
    let mut stages = Vec::new();
    for &r in radii {
        let window = group.folner_window(r, scheme)?;
        let mut raw: Vec<(f64, f64)> = Vec::new();
        let mut smoothed_sum: Vec<(f64, f64)> = Vec::new();
        let mut corr_bound = 0.0;
        for g in &window {
            let xg = xs(g);
            if raw.is_empty() {
                raw = vec![(0.0, 0.0); xg.len()];
                smoothed_sum = vec![(0.0, 0.0); xg.len()];
            }
            for (a, b) in raw.iter_mut().zip(&xg) {
                a.0 += b.0;
                a.1 += b.1;
            }
            let mut y = vec![(0.0, 0.0); xg.len()];
            for h in &h_window {
                let v = xs(&group.add(g, h));
                assert_eq!(v.len(), xg.len(), "vector family must have fixed dimension");
                for (a, b) in y.iter_mut().zip(&v) {
                    a.0 += b.0;
                    a.1 += b.1;
                }
            }
            let hs = h_window.len() as f64;
            for a in y.iter_mut() {
                a.0 /= hs;
                a.1 /= hs;
            }
            corr_bound += y.iter().map(|(re, im)| re * re + im * im).sum::<f64>();
            for (a, b) in smoothed_sum.iter_mut().zip(&y) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
        let ws = window.len() as f64;
        let raw_norm_sq = raw.iter().map(|(re, im)| (re / ws).powi(2) + (im / ws).powi(2)).sum();
        let smoothed_norm_sq = smoothed_sum
            .iter()
            .map(|(re, im)| (re / ws).powi(2) + (im / ws).powi(2))
            .sum();
        stages.push(VdcStage { radius: r, raw_norm_sq, smoothed_norm_sq, corr_bound: corr_bound / ws });
    }

    let last_r = *radii.iter().max().unwrap();
    let window = group.folner_window(last_r, scheme)?;
    let mut correlations = Vec::new();
    for h in &h_window {
        let mut acc = (0.0, 0.0);
        for g in &window {
            let xg = xs(g);
            let xh = xs(&group.add(g, h));
            for (a, b) in xh.iter().zip(&xg) {
                acc.0 += a.0 * b.0 + a.1 * b.1;
                acc.1 += a.1 * b.0 - a.0 * b.1;
            }
        }
        let ws = window.len() as f64;
        correlations.push((h.coords().to_vec(), (acc.0 / ws, acc.1 / ws)));
    }

    let last = stages.iter().max_by_key(|s| s.radius).unwrap();
    let slack = last.corr_bound - last.smoothed_norm_sq;
    let pass = slack >= -1e-9;
    Ok(VdcReport { stages, correlations, slack, pass })
}

/// Exact check of the Kronecker bound for two-term averages.
#[derive(Debug, Clone)]
pub struct KroneckerBoundReport {
    pub d_a: u64,
    pub d_b: u64,
    pub d_ba: u64,
    /// `‖lim avg_g T_{ag}f_1 T_{bg}f_2‖²_{L²}`.
    pub lhs: ExactComplex,
    /// Fourth powers of both sides of the bound, rational when all inputs
    /// are; the inequality is decided on these.
    pub lhs_pow4: Option<BigRational>,
    pub rhs_pow4: Option<BigRational>,
    pub exact: bool,
    pub pass: bool,
    /// Whether both observables satisfy `‖f‖_∞ ≤ 1`, which the bound needs.
    pub sup_bound_ok: bool,
    /// Whether the limit equals the Kronecker rotation average
    /// `avg_y f_1(x + ay) f_2(x + by)` pointwise.
    pub rotation_identity: bool,
}

fn at_most_one(c: &ExactComplex) -> bool {
    let n = c.norm_sq();
    match n.rational_value() {
        Some(q) => q <= BigRational::one(),
        None => n.abs_f64(&BTreeMap::new()).map(|v| v <= 1.0 + 1e-9).unwrap_or(false),
    }
}

fn pow4(q: &BigRational) -> BigRational {
    let s = q * q;
    &s * &s
}

pub fn kronecker_bound_check(
    sys: &FiniteSystem,
    a: i64,
    b: i64,
    f1: &Observable,
    f2: &Observable,
) -> Result<KroneckerBoundReport, AveragesError> {
    if a == 0 || b == 0 || a == b {
        return Err(AveragesError::DegeneratePattern);
    }
    let g = sys.acting();
    let d_a = g.subgroup_index(a).ok_or_else(|| AveragesError::InfiniteIndex(format!("{a}G")))?;
    let d_b = g.subgroup_index(b).ok_or_else(|| AveragesError::InfiniteIndex(format!("{b}G")))?;
    let d_ba = g
        .subgroup_index(b - a)
        .ok_or_else(|| AveragesError::InfiniteIndex(format!("{}G", b - a)))?;
    let sup_bound_ok =
        f1.values.iter().all(at_most_one) && f2.values.iter().all(at_most_one);

    let avg = multi_average(sys, &[a, b], &[f1.clone(), f2.clone()], &[], &FolnerScheme::Box)?;
    let lhs = sys.inner(&avg.limit, &avg.limit);
    let p1 = ghk_power_cubic(sys, f1, 2)?;
    let p2 = ghk_power_cubic(sys, f2, 2)?;

    let rat = |d: u64| BigRational::from_integer(BigInt::from(d));
    let (lhs_pow4, rhs_pow4) = match (lhs.rational_value(), p1.rational_value(), p2.rational_value())
    {
        (Some(l), Some(q1), Some(q2)) => {
            let c1 = pow4(&rat(d_a)) * q1;
            let c2 = pow4(&rat(d_b)) * q2;
            let rhs = pow4(&rat(d_ba)) * c1.min(c2);
            (Some(pow4(&l)), Some(rhs))
        }
        _ => (None, None),
    };
    let (exact, pass) = match (&lhs_pow4, &rhs_pow4) {
        (Some(l), Some(r)) => (true, l <= r),
        _ => {
            let l = lhs.abs_f64(&BTreeMap::new()).unwrap_or(f64::INFINITY);
            let q1 = p1.abs_f64(&BTreeMap::new()).unwrap_or(0.0);
            let q2 = p2.abs_f64(&BTreeMap::new()).unwrap_or(0.0);
            let rhs = (d_ba.pow(4) as f64)
                * ((d_a.pow(4) as f64) * q1).min((d_b.pow(4) as f64) * q2);
            (false, l.powi(4) <= rhs + 1e-9)
        }
    };

    let kf = kronecker_factor(sys)?;
    let mut point_of: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for (x, c) in kf.coords.iter().enumerate() {
        point_of.insert(c.coords().to_vec(), x);
    }
    let elems = kf.group.elements()?;
    let mut rotation_identity = true;
    for x in 0..sys.size() {
        let mut acc = ExactComplex::zero();
        for y in &elems {
            let xa = kf.group.add(&kf.coords[x], &kf.group.scalar_mul(a, y));
            let xb = kf.group.add(&kf.coords[x], &kf.group.scalar_mul(b, y));
            let pa = point_of[xa.coords()];
            let pb = point_of[xb.coords()];
            acc = acc.add(&f1.values[pa].mul(&f2.values[pb]));
        }
        let acc = acc.scale_ratio(1, elems.len() as i64);
        if !acc.sub(&avg.limit.values[x]).is_zero() {
            rotation_identity = false;
            break;
        }
    }

    Ok(KroneckerBoundReport {
        d_a,
        d_b,
        d_ba,
        lhs,
        lhs_pow4,
        rhs_pow4,
        exact,
        pass,
        sup_bound_ok,
        rotation_identity,
    })
}

/// Comparison of a multiple average against the same average with every
/// observable replaced by its characteristic-factor projection.
#[derive(Debug, Clone)]
pub struct CharacteristicReport {
    /// The factor used, `Z_{<order}`: 2 for two-term patterns, 3 for
    /// three-term.
    pub order: usize,
    pub projection_is_identity: bool,
    /// `‖lim_full - lim_projected‖²_{L²}`, exact.
    pub limit_discrepancy_sq: ExactComplex,
    pub exact_zero: bool,
    /// Float L² window discrepancies per requested radius.
    pub window_discrepancy: Vec<(u64, f64)>,
    pub max_discrepancy: f64,
}

pub fn characteristic_compare_finite(
    sys: &FiniteSystem,
    a: i64,
    b: i64,
    fs: &[Observable],
    radii: &[u64],
    scheme: &FolnerScheme,
) -> Result<CharacteristicReport, AveragesError> {
    let coeffs: Vec<i64> = match fs.len() {
        2 => vec![a, b],
        3 => vec![a, b, a + b],
        _ => return Err(AveragesError::Arity),
    };
    let order = fs.len();
    let mut projected = Vec::new();
    let mut projection_is_identity = true;
    for f in fs {
        let p = host_kra_projection(sys, f, order)?;
        if !p.residual_power.is_zero()
            || p.projection.values.iter().zip(&f.values).any(|(u, v)| !u.sub(v).is_zero())
        {
            projection_is_identity = false;
        }
        projected.push(p.projection);
    }
    let full = multi_average(sys, &coeffs, fs, radii, scheme)?;
    let proj = multi_average(sys, &coeffs, &projected, radii, scheme)?;
    let diff = full.limit.sub(&proj.limit);
    let limit_discrepancy_sq = sys.inner(&diff, &diff);
    let exact_zero = limit_discrepancy_sq.is_zero();
    let mut window_discrepancy = Vec::new();
    let mut max_discrepancy = limit_discrepancy_sq
        .abs_f64(&BTreeMap::new())
        .map(|v| v.sqrt())
        .unwrap_or(f64::NAN);
    for ((r, wf), (_, wp)) in full.windows.iter().zip(&proj.windows) {
        let d = wf.sub(wp);
        let v = sys
            .inner(&d, &d)
            .abs_f64(&BTreeMap::new())
            .map(|v| v.sqrt())
            .unwrap_or(f64::NAN);
        max_discrepancy = max_discrepancy.max(v);
        window_discrepancy.push((*r, v));
    }
    Ok(CharacteristicReport {
        order,
        projection_is_identity,
        limit_discrepancy_sq,
        exact_zero,
        window_discrepancy,
        max_discrepancy,
    })
}

fn rat_poly_constant(p: &RatPoly) -> Option<i64> {
    if p.0.iter().skip(1).any(|c| !c.is_zero()) {
        return None;
    }
    let c = p.0.first().copied().unwrap_or_else(num::rational::Rational64::zero);
    if c.is_integer() {
        Some(c.to_integer())
    } else {
        None
    }
}

/// The L² limit of `avg_n Π_i f_i(T^{c_i n} x)` on a torus system, as a
/// trigonometric polynomial in `x`.
///
/// Expanding the product, each cross term carries an `x`-frequency vector
/// that is a polynomial in `n`; terms with nonconstant frequency average to
/// zero weakly, and the constant-frequency terms contribute their Weyl limit
/// times the fixed character.
pub fn torus_limit_function(
    sys: &TorusSystem,
    cs: &[i64],
    fs: &[TrigPoly],
) -> Result<TrigPoly, SystemError> {
    assert_eq!(cs.len(), fs.len());
    let d = sys.dim();
    let mut out = TrigPoly::zero(d);
    let mut stack: Vec<(usize, ExactComplex, PhasePolynomial, Vec<RatPoly>)> = vec![(
        0,
        ExactComplex::one(),
        PhasePolynomial::constant(Phase::zero()),
        vec![RatPoly::zero(); d],
    )];
    while let Some((i, coeff, pp, v)) = stack.pop() {
        if i == fs.len() {
            let m: Option<Vec<i64>> = v.iter().map(rat_poly_constant).collect();
            if let Some(m) = m {
                let w = weyl_limit(&pp)?;
                let c = coeff.mul(&w.value);
                if !c.is_zero() {
                    out = out.add(&TrigPoly::character(m).scale(&c));
                }
            }
            continue;
        }
        for (m, c) in &fs[i].terms {
            let (tp, tv) = sys.character_orbit(m, cs[i])?;
            let coeff2 = coeff.mul(c);
            if coeff2.is_zero() {
                continue;
            }
            stack.push((
                i + 1,
                coeff2,
                pp.add(&tp),
                v.iter().zip(&tv).map(|(x, y)| x.add(y)).collect(),
            ));
        }
    }
    Ok(out)
}

/// [`torus_limit_function`] over every tuple of single characters drawn
/// from `alphabet`, one letter per pattern slot.
///
/// The per-slot character orbits are computed once and the frequency state
/// is shared along tuple prefixes, which is what makes exhaustive sweeps
/// over large alphabets feasible; the phase polynomial is only assembled
/// at the constant-frequency leaves. Returns the tuples with a nonzero
/// limit (letter indices per slot, sorted lexicographically) and the
/// limit itself; every other tuple averages to zero.
pub fn torus_limit_sweep(
    sys: &TorusSystem,
    cs: &[i64],
    alphabet: &[Vec<i64>],
) -> Result<Vec<(Vec<usize>, TrigPoly)>, SystemError> {
    let d = sys.dim();
    let k = cs.len();
    assert!(k >= 1 && !alphabet.is_empty());
    let mut orbits: Vec<Vec<(PhasePolynomial, Vec<RatPoly>)>> = Vec::with_capacity(k);
    for &c in cs {
        let mut row = Vec::with_capacity(alphabet.len());
        for m in alphabet {
            row.push(sys.character_orbit(m, c)?);
        }
        orbits.push(row);
    }
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, Vec<RatPoly>)> =
        vec![(Vec::new(), vec![RatPoly::zero(); d])];
    while let Some((prefix, v)) = stack.pop() {
        let depth = prefix.len();
        if depth == k {
            let m: Option<Vec<i64>> = v.iter().map(rat_poly_constant).collect();
            if let Some(m) = m {
                let mut pp = PhasePolynomial::constant(Phase::zero());
                for (i, &li) in prefix.iter().enumerate() {
                    pp = pp.add(&orbits[i][li].0);
                }
                let w = weyl_limit(&pp)?;
                if !w.value.is_zero() {
                    out.push((prefix, TrigPoly::character(m).scale(&w.value)));
                }
            }
            continue;
        }
        for (li, orbit) in orbits[depth].iter().enumerate() {
            let mut p2 = prefix.clone();
            p2.push(li);
            let v2: Vec<RatPoly> =
                v.iter().zip(&orbit.1).map(|(x, y)| x.add(y)).collect();
            stack.push((p2, v2));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Projection of a trigonometric polynomial onto `Z_{<order}` of a unipotent
/// torus system: the characters `χ_m` with `(Aᵗ - I)^{order-1} m = 0`.
///
/// `χ_m(T^n x)` has phase a polynomial of degree equal to the nilpotency
/// index of `m` under `Aᵗ - I`, so exactly these characters live in the
/// factor of order `< order`.
pub fn torus_projection(sys: &TorusSystem, f: &TrigPoly, order: usize) -> TrigPoly {
    assert!(order >= 1);
    let d = sys.dim();
    let apply_at_minus_i = |m: &[i64]| -> Vec<i64> {
        (0..d)
            .map(|j| (0..d).map(|i| sys.mat()[i][j] * m[i]).sum::<i64>() - m[j])
            .collect()
    };
    let mut out = TrigPoly::zero(d);
    for (m, c) in &f.terms {
        let mut v = m.clone();
        for _ in 0..order - 1 {
            v = apply_at_minus_i(&v);
        }
        if v.iter().all(|&x| x == 0) {
            out = out.add(&TrigPoly::character(m.clone()).scale(c));
        }
    }
    out
}

/// Symbolic characteristic-factor comparison on a torus system.
#[derive(Debug, Clone)]
pub struct TorusCharacteristicReport {
    pub order: usize,
    pub limit_full: TrigPoly,
    pub limit_projected: TrigPoly,
    /// `‖lim_full - lim_projected‖²_{L²(torus)}` by Parseval, exact.
    pub discrepancy_sq: ExactComplex,
    pub exact_zero: bool,
}

pub fn characteristic_compare_torus(
    sys: &TorusSystem,
    a: i64,
    b: i64,
    fs: &[TrigPoly],
) -> Result<TorusCharacteristicReport, AveragesError> {
    let coeffs: Vec<i64> = match fs.len() {
        2 => vec![a, b],
        3 => vec![a, b, a + b],
        _ => return Err(AveragesError::Arity),
    };
    let order = fs.len();
    let projected: Vec<TrigPoly> = fs.iter().map(|f| torus_projection(sys, f, order)).collect();
    let limit_full = torus_limit_function(sys, &coeffs, fs)?;
    let limit_projected = torus_limit_function(sys, &coeffs, &projected)?;
    let diff = limit_full.add(&limit_projected.scale(&ExactComplex::from_rational_i64(-1, 1)));
    let discrepancy_sq = diff.mul(&diff.conj()).integral(sys.dim());
    let exact_zero = discrepancy_sq.is_zero();
    Ok(TorusCharacteristicReport {
        order,
        limit_full,
        limit_projected,
        discrepancy_sq,
        exact_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phases::Symbol;
    use crate::systems::{disjoint_union, rotation_system};
    use num::rational::Rational64;

    fn z_rot(n: u64, shift: i64) -> FiniteSystem {
        let acting = AbGroup::free(1);
        let z = AbGroup::cyclic(n);
        rotation_system(&acting, &z, &[z.from_coords(&[shift]).unwrap()]).unwrap()
    }

    fn chi(n: u64, c: i64) -> Observable {
        Observable::from_fn(n as usize, |x| {
            ExactComplex::from_phase(&Phase::from_rational(c * x as i64, n as i64).unwrap())
        })
    }

    #[test]
    fn the_character_sweep_matches_the_pointwise_limits() {
        let alpha = Phase::symbol(Symbol::new("alpha"));
        let beta = Phase::symbol(Symbol::new("beta"));
        let sys = TorusSystem::skew_product(alpha, beta);
        let mut alphabet = Vec::new();
        for a in -1i64..=1 {
            for b in -1i64..=1 {
                alphabet.push(vec![a, b]);
            }
        }
        let cs = [1i64, 2];
        let sweep = torus_limit_sweep(&sys, &cs, &alphabet).unwrap();
        let survivors: BTreeMap<Vec<usize>, TrigPoly> = sweep.into_iter().collect();
        for i in 0..alphabet.len() {
            for j in 0..alphabet.len() {
                let fs = vec![
                    TrigPoly::character(alphabet[i].clone()),
                    TrigPoly::character(alphabet[j].clone()),
                ];
                let direct = torus_limit_function(&sys, &cs, &fs).unwrap();
                match survivors.get(&vec![i, j]) {
                    Some(tp) => assert_eq!(tp.terms, direct.terms),
                    None => assert!(direct.terms.is_empty()),
                }
            }
        }
        assert!(!survivors.is_empty());
    }

    #[test]
    fn one_term_limit_is_the_invariant_expectation() {
        // shift by 2 on Z/6 splits into two components
        let sys = z_rot(6, 2);
        let f = Observable::from_fn(6, |x| ExactComplex::from_rational_i64(x as i64, 1));
        let avg = multi_average(&sys, &[1], &[f.clone()], &[3], &FolnerScheme::Box).unwrap();
        let expect = sys.invariant_expectation(&f);
        for x in 0..6 {
            assert!(avg.limit.values[x].sub(&expect.values[x]).is_zero());
        }
    }

    #[test]
    fn character_pair_averages_to_zero_on_z5() {
        let sys = z_rot(5, 1);
        let f = chi(5, 1);
        let avg = multi_average(
            &sys,
            &[1, 2],
            &[f.clone(), f.clone()],
            &[2, 7],
            &FolnerScheme::Box,
        )
        .unwrap();
        // avg_y chi(x+y) chi(x+2y) has frequency 3 in y, so every point dies
        for x in 0..5 {
            assert!(avg.limit.values[x].is_zero());
        }
        // radius 2 and 7 windows cover full periods, so the limit is attained
        for (_, w) in &avg.windows {
            for x in 0..5 {
                assert!(w.values[x].is_zero());
            }
        }
    }

    #[test]
    fn doubled_pattern_collapses_on_exponent_two_groups() {
        // acting group C_2^2 rotating itself: T_{2g} = id, so with f_1 = 1
        // the (1,2) average is f_2 itself
        let g = AbGroup::cyclic_power(2, 2);
        let sys = rotation_system(&g, &g, &[g.generator(0), g.generator(1)]).unwrap();
        let one = Observable::constant(4, ExactComplex::one());
        let f2 = Observable::from_fn(4, |x| {
            ExactComplex::from_phase(&Phase::from_rational((x as i64) / 2, 2).unwrap())
        });
        let avg =
            multi_average(&sys, &[1, 2], &[one, f2.clone()], &[], &FolnerScheme::Box).unwrap();
        for x in 0..4 {
            assert!(avg.limit.values[x].sub(&f2.values[x]).is_zero());
        }
    }

    #[test]
    fn folner_scheme_does_not_move_finite_limits() {
        let sys = z_rot(5, 1);
        let f = chi(5, 1).add(&chi(5, 3));
        let box_avg =
            multi_average(&sys, &[1, 2], &[f.clone(), f.clone()], &[2], &FolnerScheme::Box)
                .unwrap();
        let shifted = multi_average(
            &sys,
            &[1, 2],
            &[f.clone(), f.clone()],
            &[2],
            &FolnerScheme::ShiftedBox(vec![100]),
        )
        .unwrap();
        for x in 0..5 {
            assert!(box_avg.limit.values[x].sub(&shifted.limit.values[x]).is_zero());
            // radius 2 windows are full periods under either scheme
            assert!(box_avg.windows[0].1.values[x]
                .sub(&shifted.windows[0].1.values[x])
                .is_zero());
            assert!(box_avg.windows[0].1.values[x].sub(&box_avg.limit.values[x]).is_zero());
        }
    }

    #[test]
    fn seminorm_routes_agree_and_are_monotone() {
        let sys = z_rot(6, 1);
        let f = Observable::from_fn(6, |x| {
            ExactComplex::from_rational_i64([1, -2, 0, 3, 1, -1][x], 4)
        });
        let mut powers = Vec::new();
        for k in 1..=3 {
            let rep = ghk_seminorm(&sys, &f, k).unwrap();
            assert!(rep.agree);
            powers.push(rep.power_cubic.rational_value().unwrap());
        }
        // ‖f‖_{U^1} ≤ ‖f‖_{U^2} reads p1² ≤ p2 on the stored powers
        assert!(&powers[0] * &powers[0] <= powers[1].clone());

        let one = Observable::constant(6, ExactComplex::one());
        for k in 1..=3 {
            let rep = ghk_seminorm(&sys, &one, k).unwrap();
            assert!(rep.power_cubic.sub(&ExactComplex::one()).is_zero());
            assert!((rep.norm.unwrap() - 1.0).abs() < 1e-12);
        }

        let zero_mean = chi(6, 1);
        let rep = ghk_seminorm(&sys, &zero_mean, 1).unwrap();
        assert!(rep.power_cubic.is_zero());
        assert!(rep.agree);
    }

    #[test]
    fn u2_power_matches_fourth_fourier_moment() {
        let sys = z_rot(8, 1);
        let f = Observable::from_fn(8, |x| {
            ExactComplex::from_rational_i64([2, 1, -1, 0, 1, 1, -3, 2][x], 3)
        });
        let rep = u2_fourier_identity(&sys, &f).unwrap();
        assert!(rep.agree);

        let g = chi(8, 3);
        let rep = u2_fourier_identity(&sys, &g).unwrap();
        assert!(rep.agree);
        assert!(rep.power.sub(&ExactComplex::one()).is_zero());
    }

    #[test]
    fn vdc_on_constant_and_orthonormal_families() {
        let z = AbGroup::free(1);
        let constant = |_: &GroupElement| vec![(0.6, 0.0), (0.0, 0.8)];
        let rep = vdc_check(&z, &constant, &[5, 20], 3, &FolnerScheme::Box).unwrap();
        assert!(rep.pass);
        assert!(rep.slack.abs() < 1e-12);
        for (_, (re, im)) in &rep.correlations {
            assert!((re - 1.0).abs() < 1e-12 && im.abs() < 1e-12);
        }

        // orthonormal basis indexed mod 5, M = 0: the correlation side is 1
        // while the averaged vector has square norm 1/5
        let basis = |g: &GroupElement| {
            let mut v = vec![(0.0, 0.0); 5];
            v[(g.coords()[0].rem_euclid(5)) as usize] = (1.0, 0.0);
            v
        };
        let rep = vdc_check(&z, &basis, &[7], 0, &FolnerScheme::Box).unwrap();
        assert!(rep.pass);
        let stage = &rep.stages[0];
        assert!((stage.raw_norm_sq - 0.2).abs() < 1e-12);
        assert!((stage.corr_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vdc_kills_quadratic_weyl_phases() {
        let z = AbGroup::free(1);
        let alpha = std::f64::consts::SQRT_2;
        let xs = |g: &GroupElement| {
            let n = g.coords()[0] as f64;
            let t = std::f64::consts::TAU * alpha * n * n;
            vec![(t.cos(), t.sin())]
        };
        let rep = vdc_check(&z, &xs, &[100_000], 3, &FolnerScheme::Box).unwrap();
        assert!(rep.pass);
        assert!(rep.stages[0].raw_norm_sq.sqrt() < 0.05);
        // the h = 0 correlation is exactly the mean square norm
        let zero = rep.correlations.iter().find(|(h, _)| h == &vec![0]).unwrap();
        assert!((zero.1 .0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kronecker_bound_on_rotations() {
        let sys = z_rot(5, 1);
        // frequencies 3 and 1 satisfy c + 2c' = 0 mod 5, so the limit is a
        // full-size character and the bound is met with equality
        let rep = kronecker_bound_check(&sys, 1, 2, &chi(5, 3), &chi(5, 1)).unwrap();
        assert!(rep.exact && rep.pass && rep.sup_bound_ok && rep.rotation_identity);
        assert_eq!((rep.d_a, rep.d_b, rep.d_ba), (1, 2, 1));
        assert_eq!(rep.lhs_pow4.unwrap(), rep.rhs_pow4.clone().unwrap());

        // mismatched frequencies average to zero
        let rep = kronecker_bound_check(&sys, 1, 2, &chi(5, 1), &chi(5, 1)).unwrap();
        assert!(rep.pass && rep.rotation_identity);
        assert!(rep.lhs_pow4.unwrap().is_zero());

        assert!(matches!(
            kronecker_bound_check(&sys, 2, 2, &chi(5, 1), &chi(5, 1)),
            Err(AveragesError::DegeneratePattern)
        ));

        let sum = disjoint_union(&[
            (Rational64::new(1, 2), &z_rot(3, 1)),
            (Rational64::new(1, 2), &z_rot(4, 1)),
        ])
        .unwrap();
        let f = Observable::constant(7, ExactComplex::one());
        assert!(kronecker_bound_check(&sum, 1, 2, &f, &f).is_err());
    }

    #[test]
    fn characteristic_projection_is_identity_on_finite_ergodic_systems() {
        let sys = z_rot(7, 1);
        let fs = [
            Observable::from_fn(7, |x| ExactComplex::from_rational_i64([1, 0, -1, 2, 0, 1, -2][x], 2)),
            chi(7, 2),
            chi(7, 3),
        ];
        let rep =
            characteristic_compare_finite(&sys, 1, 2, &fs, &[3, 6], &FolnerScheme::Box).unwrap();
        assert_eq!(rep.order, 3);
        assert!(rep.projection_is_identity);
        assert!(rep.exact_zero);
        assert_eq!(rep.max_discrepancy, 0.0);

        let rep2 =
            characteristic_compare_finite(&sys, 1, 2, &fs[..2], &[3], &FolnerScheme::Box).unwrap();
        assert_eq!(rep2.order, 2);
        assert!(rep2.exact_zero);
    }

    #[test]
    fn skew_fiber_character_has_zero_kronecker_projection_and_zero_limit() {
        let alpha = Phase::symbol(Symbol::new("alpha"));
        let beta = Phase::symbol(Symbol::new("beta"));
        let sys = TorusSystem::skew_product(alpha, beta);
        let one = TrigPoly::constant(2, ExactComplex::one());
        let f2 = TrigPoly::character(vec![0, 1]);

        assert!(torus_projection(&sys, &f2, 2).terms.is_empty());
        assert_eq!(torus_projection(&sys, &f2, 3).terms.len(), 1);

        let rep = characteristic_compare_torus(&sys, 1, 2, &[one, f2]).unwrap();
        assert!(rep.exact_zero);
        assert!(rep.limit_full.terms.is_empty());
        assert!(rep.limit_projected.terms.is_empty());
    }

    #[test]
    fn torus_limit_function_integrates_to_the_scalar_average() {
        let alpha = Phase::symbol(Symbol::new("alpha"));
        let beta = Phase::symbol(Symbol::new("beta"));
        let sys = TorusSystem::skew_product(alpha, beta);
        let f = TrigPoly::character(vec![1, 0]).add(&TrigPoly::character(vec![0, 1]));
        let cs = [1, 2];
        let fs = [f.clone(), f.conj()];
        let fun = torus_limit_function(&sys, &cs, &fs).unwrap();
        let scalar = crate::systems::torus_multi_average(&sys, &cs, &fs).unwrap();
        assert!(fun.integral(2).sub(&scalar).is_zero());
    }

    #[test]
    fn rotation_window_averages_approach_the_symbolic_limit() {
        let alpha = Phase::symbol(Symbol::new("alpha"));
        let sys = TorusSystem::rotation(vec![alpha]).unwrap();
        let f = TrigPoly::character(vec![1]);
        let fs = [f.clone(), f.conj()];
        let cs = [1, 2];
        // limit of avg_n ∫ e(x + nα) e(-x - 2nα) dx is zero
        let limit = crate::systems::torus_multi_average(&sys, &cs, &fs).unwrap();
        assert!(limit.is_zero());
        let w = crate::systems::torus_window_average(&sys, &cs, &fs, 400).unwrap();
        let mut vals = BTreeMap::new();
        vals.insert(Symbol::new("alpha"), std::f64::consts::SQRT_2 - 1.0);
        let (re, im) = w.eval_f64(&vals).unwrap();
        assert!((re * re + im * im).sqrt() < 1e-2);
    }
}
