//! Multiple-recurrence scans: exact correlation sequences for the pattern
//! `{ag, bg, (a+b)g}`, good sets for the fourth-power lower bound, and
//! syndeticity certificates.

use crate::abgroup::{AbGroup, FolnerScheme, GroupElement, GroupError};
use crate::systems::{FiniteSystem, SystemError};
use num::rational::Rational64;
use num::{BigRational, FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

const DENSITY_RADIUS_CAP: u64 = 100_000;

#[derive(Debug, Error)]
pub enum RecError {
    #[error("pattern coefficients must satisfy a != 0, b != 0, a != b")]
    BadPattern,
    #[error("the khintchine scan needs a finite acting group")]
    InfiniteActing,
    #[error("set index {0} is out of range")]
    BadSetIndex(usize),
    #[error("density scans run over rank-one windows")]
    BadRank,
    #[error("window radius exceeds {DENSITY_RADIUS_CAP}")]
    RadiusCap,
    #[error("at least one window radius is required")]
    NoWindows,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// How often the good set recurs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyndeticityGap {
    /// Finite group: the good set plus `cover_size` shifts covers the
    /// group (greedy upper bound for the minimal cover).
    FiniteCover { cover_size: usize },
    /// Integer window: the largest run of consecutive non-good elements
    /// between good ones.
    MaxGap { gap: u64 },
    Empty,
}

/// Per-component view of a non-ergodic scan.
#[derive(Debug, Clone)]
pub struct ComponentAggregation {
    pub weights: Vec<Rational64>,
    /// Relative density of the set inside each component.
    pub densities: Vec<Rational64>,
    /// `Σ w_i·μ_i(A)^4`, which dominates `μ(A)^4` by convexity.
    pub jensen_average: Rational64,
    /// Whether `Σ w_i·corr_i(g)` reproduced the global correlation at
    /// every `g`.
    pub aggregation_exact: bool,
}

/// Result of a finite-group recurrence scan.
#[derive(Debug, Clone)]
pub struct KhintchineReport {
    pub pattern: (i64, i64),
    pub epsilon: Rational64,
    /// Measure of the scanned set.
    pub density: Rational64,
    /// `μ(A)^4 − ε`.
    pub bound: Rational64,
    pub correlations: Vec<(GroupElement, Rational64)>,
    pub good: Vec<GroupElement>,
    pub gap: SyndeticityGap,
    /// Index of `mG` in `G` for `m = a, b, b−a, a+b`.
    pub index_report: Vec<(i64, Option<u64>)>,
    pub index_ok: bool,
    pub ergodic: bool,
    pub components: Option<ComponentAggregation>,
}

/// Result of an integer-window density scan. Window densities stand in
/// for the Folner density of the set, so the bound here is evidence, not
/// a certificate.
#[derive(Debug, Clone)]
pub struct DensityReport {
    pub pattern: (i64, i64),
    pub epsilon: Rational64,
    pub radius: u64,
    pub window_size: u64,
    /// Density of the set on the largest window.
    pub density: Rational64,
    pub bound: BigRational,
    pub correlations: Vec<(i64, Rational64)>,
    pub good: Vec<i64>,
    pub gap: SyndeticityGap,
    /// Density of the set on each requested window.
    pub window_densities: Vec<(u64, Rational64)>,
    pub caveat: &'static str,
}

fn validate_pattern(a: i64, b: i64) -> Result<(), RecError> {
    if a == 0 || b == 0 || a == b {
        return Err(RecError::BadPattern);
    }
    Ok(())
}

fn perm_for(sys: &FiniteSystem, g: &GroupElement) -> Vec<usize> {
    let n = sys.size();
    let mut p: Vec<usize> = (0..n).collect();
    for (i, &c) in g.coords().iter().enumerate() {
        let step = if c >= 0 { c } else { 0 };
        for _ in 0..step {
            for slot in p.iter_mut() {
                *slot = sys.apply_gen(i, *slot);
            }
        }
        if c < 0 {
            let mut inv = vec![0usize; n];
            for x in 0..n {
                inv[sys.apply_gen(i, x)] = x;
            }
            for _ in 0..(-c) {
                for slot in p.iter_mut() {
                    *slot = inv[*slot];
                }
            }
        }
    }
    p
}

/// Greedy cover of a finite group by shifts of `good`; returns the number
/// of shifts used, or `None` when `good` is empty.
fn greedy_cover(acting: &AbGroup, good: &[GroupElement]) -> Option<usize> {
    if good.is_empty() {
        return None;
    }
    let elems = acting.elements().expect("finite acting group");
    let n = elems.len();
    let good_idx: Vec<u64> = good.iter().map(|g| acting.index_of(g)).collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut used = 0;
    while remaining > 0 {
        let mut best: Option<(usize, usize)> = None;
        for (ci, c) in elems.iter().enumerate() {
            let mut gain = 0;
            for &gi in &good_idx {
                let t = acting.index_of(&acting.add(&acting.element_at(gi), c)) as usize;
                if !covered[t] {
                    gain += 1;
                }
            }
            if best.map_or(true, |(bg, _)| gain > bg) {
                best = Some((gain, ci));
            }
        }
        let (gain, ci) = best.unwrap();
        if gain == 0 {
            return None;
        }
        for &gi in &good_idx {
            let t = acting
                .index_of(&acting.add(&acting.element_at(gi), &elems[ci]))
                as usize;
            if !covered[t] {
                covered[t] = true;
                remaining -= 1;
            }
        }
        used += 1;
    }
    Some(used)
}

/// Largest run of consecutive non-good integers strictly between good
/// ones, for a sorted good set.
fn max_gap(good: &[i64]) -> SyndeticityGap {
    if good.is_empty() {
        return SyndeticityGap::Empty;
    }
    let mut gap = 0u64;
    for w in good.windows(2) {
        gap = gap.max((w[1] - w[0] - 1) as u64);
    }
    SyndeticityGap::MaxGap { gap }
}

fn pow4(q: Rational64) -> Rational64 {
    let s = q * q;
    s * s
}

/// Scans a finite system for the correlation
/// `μ(A ∩ T_{ag}^{-1}A ∩ T_{bg}^{-1}A ∩ T_{(a+b)g}^{-1}A)` over every
/// group element, and reports where it clears `μ(A)^4 − ε`. For a
/// non-ergodic system the scan also runs per ergodic component and the
/// exact aggregation is cross-checked.
pub fn khintchine_scan(
    sys: &FiniteSystem,
    a_set: &[usize],
    a: i64,
    b: i64,
    eps: Rational64,
) -> Result<KhintchineReport, RecError> {
    validate_pattern(a, b)?;
    let acting = sys.acting();
    if !acting.is_finite() {
        return Err(RecError::InfiniteActing);
    }
    let mut in_a = vec![false; sys.size()];
    for &x in a_set {
        if x >= sys.size() {
            return Err(RecError::BadSetIndex(x));
        }
        in_a[x] = true;
    }
    let members: Vec<usize> = (0..sys.size()).filter(|&x| in_a[x]).collect();
    let density: Rational64 = members.iter().map(|&x| sys.mass(x)).sum();
    let bound = pow4(density) - eps;

    let elems = acting.elements()?;
    let mut correlations = Vec::with_capacity(elems.len());
    for g in &elems {
        let pa = perm_for(sys, &acting.scalar_mul(a, g));
        let pb = perm_for(sys, &acting.scalar_mul(b, g));
        let pab = perm_for(sys, &acting.scalar_mul(a + b, g));
        let mut corr = Rational64::zero();
        for &x in &members {
            if in_a[pa[x]] && in_a[pb[x]] && in_a[pab[x]] {
                corr += sys.mass(x);
            }
        }
        correlations.push((g.clone(), corr));
    }
    let good: Vec<GroupElement> = correlations
        .iter()
        .filter(|(_, c)| *c >= bound)
        .map(|(g, _)| g.clone())
        .collect();
    let gap = match greedy_cover(acting, &good) {
        Some(sz) => SyndeticityGap::FiniteCover { cover_size: sz },
        None => SyndeticityGap::Empty,
    };

    let index_report: Vec<(i64, Option<u64>)> = [a, b, b - a, a + b]
        .iter()
        .map(|&m| (m, acting.subgroup_index(m)))
        .collect();
    let index_ok = index_report.iter().all(|(_, idx)| *idx == Some(1));

    let ergodic = sys.is_ergodic();
    let components = if ergodic {
        None
    } else {
        let comps = sys.ergodic_components();
        let mut weights = Vec::new();
        let mut densities = Vec::new();
        let mut jensen_average = Rational64::zero();
        let mut aggregation_exact = true;
        let mut comp_reports = Vec::new();
        for comp in &comps {
            let local: Vec<usize> = comp
                .points
                .iter()
                .enumerate()
                .filter(|(_, &px)| in_a[px])
                .map(|(i, _)| i)
                .collect();
            let local_density: Rational64 =
                local.iter().map(|&x| comp.system.mass(x)).sum();
            weights.push(comp.weight);
            densities.push(local_density);
            jensen_average += comp.weight * pow4(local_density);
            comp_reports.push(khintchine_scan(&comp.system, &local, a, b, eps)?);
        }
        for (gi, g) in elems.iter().enumerate() {
            let mut agg = Rational64::zero();
            for (ci, rep) in comp_reports.iter().enumerate() {
                debug_assert_eq!(&rep.correlations[gi].0, g);
                agg += comps[ci].weight * rep.correlations[gi].1;
            }
            if agg != correlations[gi].1 {
                aggregation_exact = false;
            }
        }
        Some(ComponentAggregation {
            weights,
            densities,
            jensen_average,
            aggregation_exact,
        })
    };

    Ok(KhintchineReport {
        pattern: (a, b),
        epsilon: eps,
        density,
        bound,
        correlations,
        good,
        gap,
        index_report,
        index_ok,
        ergodic,
        components,
    })
}

/// Membership rule for a subset of the integers.
#[derive(Debug, Clone)]
pub enum DensitySet {
    Explicit(BTreeSet<i64>),
    /// Pseudo-random set: each integer in the scanned range joins
    /// independently with the given density, driven by the seed.
    Random { seed: u64, density: Rational64 },
}

/// Scans integer windows for the pattern correlations of a subset of the
/// integers. Densities on the largest window stand in for the true
/// density; the report says so.
pub fn density_scan(
    radii: &[u64],
    scheme: &FolnerScheme,
    e: &DensitySet,
    a: i64,
    b: i64,
    eps: Rational64,
) -> Result<DensityReport, RecError> {
    validate_pattern(a, b)?;
    if radii.is_empty() {
        return Err(RecError::NoWindows);
    }
    let radius = *radii.iter().max().unwrap();
    if radius > DENSITY_RADIUS_CAP {
        return Err(RecError::RadiusCap);
    }
    let z = AbGroup::free(1);
    let reach = 1 + a.unsigned_abs().max(b.unsigned_abs()).max((a + b).unsigned_abs());
    let r_full = (radius as i64) * (reach as i64 + 1);

    let mut member = BTreeSet::new();
    match e {
        DensitySet::Explicit(set) => {
            member = set.clone();
        }
        DensitySet::Random { seed, density } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let num = *density.numer();
            let den = *density.denom();
            assert!(num >= 0 && num <= den, "density must lie in [0,1]");
            for x in -r_full..=r_full {
                if rng.random_range(0..den) < num {
                    member.insert(x);
                }
            }
        }
    }

    let window: Vec<i64> = z
        .folner_window(radius, scheme)?
        .iter()
        .map(|g| g.coords()[0])
        .collect();
    let mut window_densities = Vec::new();
    for &r in radii {
        let w: Vec<i64> = z
            .folner_window(r, scheme)?
            .iter()
            .map(|g| g.coords()[0])
            .collect();
        let count = w.iter().filter(|x| member.contains(x)).count();
        window_densities.push((r, Rational64::new(count as i64, w.len() as i64)));
    }
    let density = window_densities
        .iter()
        .find(|(r, _)| *r == radius)
        .unwrap()
        .1;

    let big = |q: Rational64| {
        BigRational::new(
            num::BigInt::from_i64(*q.numer()).unwrap(),
            num::BigInt::from_i64(*q.denom()).unwrap(),
        )
    };
    let bd = big(density);
    let bound = &bd * &bd * &bd * &bd - big(eps);

    let wlen = window.len() as i64;
    let mut correlations = Vec::with_capacity(window.len());
    let mut good = Vec::new();
    for &g in &window {
        let mut count = 0i64;
        for &x in &window {
            if member.contains(&x)
                && member.contains(&(x + a * g))
                && member.contains(&(x + b * g))
                && member.contains(&(x + (a + b) * g))
            {
                count += 1;
            }
        }
        let corr = Rational64::new(count, wlen);
        if big(corr) >= bound {
            good.push(g);
        }
        correlations.push((g, corr));
    }
    good.sort_unstable();

    Ok(DensityReport {
        pattern: (a, b),
        epsilon: eps,
        radius,
        window_size: window.len() as u64,
        density,
        bound,
        correlations,
        good: good.clone(),
        gap: max_gap(&good),
        window_densities,
        caveat: "window densities approximate the true density; \
                 this scan is evidence, not a proof",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::rotation_system;

    fn z_rot(n: u64) -> FiniteSystem {
        let g = AbGroup::cyclic(n);
        rotation_system(&g, &g, &[g.generator(0)]).unwrap()
    }

    #[test]
    fn the_five_point_example_matches_the_hand_computation() {
        let sys = z_rot(5);
        let rep = khintchine_scan(&sys, &[0, 1], 1, 2, Rational64::new(1, 100)).unwrap();
        assert_eq!(rep.density, Rational64::new(2, 5));
        assert_eq!(
            rep.bound,
            Rational64::new(16, 625) - Rational64::new(1, 100)
        );
        assert!(rep.index_ok);
        assert!(rep.ergodic);
        // g = 0 keeps the whole set, so it is always good
        let zero = sys.acting().zero();
        assert!(rep.good.contains(&zero));
        assert_eq!(rep.correlations[0], (zero, Rational64::new(2, 5)));
    }

    #[test]
    fn correlations_never_exceed_the_set_measure() {
        for n in 2..=16u64 {
            let sys = z_rot(n);
            let a_set: Vec<usize> = (0..(n as usize + 1) / 2).collect();
            let rep =
                khintchine_scan(&sys, &a_set, 1, 2, Rational64::new(1, 1000)).unwrap();
            for (_, c) in &rep.correlations {
                assert!(*c <= rep.density);
            }
        }
    }

    #[test]
    fn interval_sets_have_nonempty_good_sets_on_small_cycles() {
        for n in 3..=64u64 {
            let sys = z_rot(n);
            let a_set: Vec<usize> = (0..(n as usize).div_ceil(2)).collect();
            let rep =
                khintchine_scan(&sys, &a_set, 1, 2, Rational64::new(1, 100)).unwrap();
            assert!(!rep.good.is_empty(), "n = {n}");
            assert!(rep.good.contains(&sys.acting().zero()));
        }
    }

    #[test]
    fn bohr_sets_sit_inside_the_good_set() {
        // for an interval A and rotation by 1, membership of the three
        // shifted copies costs at most the circle distances of ag, bg and
        // (a+b)g, so the Bohr set at radius εN/3 is good; its cover then
        // bounds the good cover
        let (a, b) = (1i64, 2i64);
        let eps = Rational64::new(1, 4);
        for n in 8..=32u64 {
            let sys = z_rot(n);
            let k = (n as usize).div_ceil(2);
            let a_set: Vec<usize> = (0..k).collect();
            let rep = khintchine_scan(&sys, &a_set, a, b, eps).unwrap();
            let t = (eps * Rational64::new(n as i64, 3)).floor().to_integer();
            let circ = |m: i64, g: i64| {
                let r = (m * g).rem_euclid(n as i64);
                r.min(n as i64 - r)
            };
            let bohr: Vec<GroupElement> = (0..n as i64)
                .filter(|&g| circ(a, g) <= t && circ(b, g) <= t && circ(a + b, g) <= t)
                .map(|g| sys.acting().from_coords(&[g]).unwrap())
                .collect();
            for g in &bohr {
                assert!(rep.good.contains(g), "n = {n}, g = {g}");
            }
            let good_cover = greedy_cover(sys.acting(), &rep.good).unwrap();
            let bohr_cover = greedy_cover(sys.acting(), &bohr).unwrap();
            assert!(good_cover <= bohr_cover, "n = {n}");
        }
    }

    #[test]
    fn non_ergodic_scans_aggregate_exactly() {
        let g = AbGroup::cyclic(6);
        let sys = rotation_system(&g, &g, &[g.from_coords(&[2]).unwrap()]).unwrap();
        assert!(!sys.is_ergodic());
        let rep = khintchine_scan(&sys, &[0, 2], 1, 2, Rational64::new(1, 100)).unwrap();
        let comp = rep.components.as_ref().unwrap();
        assert!(comp.aggregation_exact);
        assert_eq!(comp.weights, vec![Rational64::new(1, 2); 2]);
        // A = {0, 2} lives entirely in the even component
        assert_eq!(comp.densities[0] + comp.densities[1], Rational64::new(2, 3));
        assert!(comp.jensen_average >= pow4(rep.density));
    }

    #[test]
    fn empty_sets_make_everything_good() {
        let sys = z_rot(7);
        let rep = khintchine_scan(&sys, &[], 1, 2, Rational64::new(1, 100)).unwrap();
        assert_eq!(rep.good.len(), 7);
        assert_eq!(rep.gap, SyndeticityGap::FiniteCover { cover_size: 1 });
    }

    #[test]
    fn degenerate_patterns_are_rejected() {
        let sys = z_rot(5);
        for (a, b) in [(0, 2), (1, 0), (3, 3)] {
            assert!(matches!(
                khintchine_scan(&sys, &[0], a, b, Rational64::new(1, 10)),
                Err(RecError::BadPattern)
            ));
        }
    }

    #[test]
    fn failed_index_hypotheses_are_reported_not_fatal() {
        // on Z/2 the coefficient 2 annihilates the group
        let sys = z_rot(2);
        let rep = khintchine_scan(&sys, &[0], 1, 2, Rational64::new(1, 10)).unwrap();
        assert!(!rep.index_ok);
        let m2 = rep.index_report.iter().find(|(m, _)| *m == 2).unwrap();
        assert_eq!(m2.1, Some(2));
    }

    #[test]
    fn full_and_empty_integer_sets_are_everywhere_good() {
        let all: BTreeSet<i64> = (-4000..=4000).collect();
        let rep = density_scan(
            &[10, 25],
            &FolnerScheme::Box,
            &DensitySet::Explicit(all),
            1,
            2,
            Rational64::new(1, 1000),
        )
        .unwrap();
        assert_eq!(rep.density, Rational64::new(1, 1));
        assert_eq!(rep.good.len(), rep.window_size as usize);
        assert_eq!(rep.gap, SyndeticityGap::MaxGap { gap: 0 });

        let rep = density_scan(
            &[10],
            &FolnerScheme::Box,
            &DensitySet::Explicit(BTreeSet::new()),
            1,
            2,
            Rational64::new(1, 1000),
        )
        .unwrap();
        assert!(rep.density.is_zero());
        // the bound is negative, so every count clears it
        assert_eq!(rep.good.len(), rep.window_size as usize);
    }

    #[test]
    fn the_even_integers_recur_along_even_shifts() {
        let evens: BTreeSet<i64> = (-4000..=4000).filter(|x| x % 2 == 0).collect();
        let rep = density_scan(
            &[30],
            &FolnerScheme::Box,
            &DensitySet::Explicit(evens),
            1,
            2,
            Rational64::new(1, 100),
        )
        .unwrap();
        // at even g the quadruple survives on every even x, density 1/2
        for &(g, c) in &rep.correlations {
            if g % 2 == 0 {
                assert!(c >= Rational64::new(30, 61));
            } else {
                assert!(c.is_zero());
            }
        }
        for g in &rep.good {
            assert_eq!(g % 2, 0);
        }
        assert_eq!(rep.gap, SyndeticityGap::MaxGap { gap: 1 });
    }

    #[test]
    fn random_sets_are_reproducible_and_recurrent_at_zero() {
        let set = DensitySet::Random { seed: 9, density: Rational64::new(1, 2) };
        let rep1 = density_scan(&[40], &FolnerScheme::Box, &set, 1, 2, Rational64::new(1, 20))
            .unwrap();
        let rep2 = density_scan(&[40], &FolnerScheme::Box, &set, 1, 2, Rational64::new(1, 20))
            .unwrap();
        assert_eq!(rep1.correlations, rep2.correlations);
        assert_eq!(rep1.density, rep2.density);
        // g = 0 reproduces the window density, which beats its own fourth
        // power minus epsilon
        assert!(rep1.good.contains(&0));
        assert!(!rep1.caveat.is_empty());
    }
}
