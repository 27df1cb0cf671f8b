//! Smith normal form over the integers.
//!
//! Every linear question the crate asks about finitely generated abelian
//! groups (canonical invariant factors, solvability of `A x = b` over Z or
//! modulo a vector of moduli, kernels of relation matrices) is routed through
//! the decomposition `U * A * V = D` computed here, with `U`, `V` unimodular
//! and `D` diagonal with a divisibility chain.

use num::bigint::BigInt;
use num::{Integer, One, Signed, Zero};

pub type Mat = Vec<Vec<BigInt>>;

/// `U * A * V = D` with `U` (rows x rows) and `V` (cols x cols) unimodular
/// and `D` diagonal, `d[0] | d[1] | ...`, all diagonal entries nonnegative.
#[derive(Debug, Clone)]
pub struct Smith {
    pub rows: usize,
    pub cols: usize,
    pub u: Mat,
    pub v: Mat,
    /// Diagonal of `D`, length `min(rows, cols)`; zeros sit at the end.
    pub diag: Vec<BigInt>,
}

fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect()
}

fn swap_rows(a: &mut Mat, u: &mut Mat, i: usize, j: usize) {
    a.swap(i, j);
    u.swap(i, j);
}

fn swap_cols(a: &mut Mat, v: &mut Mat, i: usize, j: usize) {
    for row in a.iter_mut() {
        row.swap(i, j);
    }
    for row in v.iter_mut() {
        row.swap(i, j);
    }
}

/// row[i] += q * row[j], mirrored into U.
fn add_row(a: &mut Mat, u: &mut Mat, i: usize, j: usize, q: &BigInt) {
    for c in 0..a[0].len() {
        let t = &a[j][c] * q;
        a[i][c] += t;
    }
    for c in 0..u[0].len() {
        let t = &u[j][c] * q;
        u[i][c] += t;
    }
}

/// col[i] += q * col[j], mirrored into V.
fn add_col(a: &mut Mat, v: &mut Mat, i: usize, j: usize, q: &BigInt) {
    for r in 0..a.len() {
        let t = &a[r][j] * q;
        a[r][i] += t;
    }
    for r in 0..v.len() {
        let t = &v[r][j] * q;
        v[r][i] += t;
    }
}

fn negate_row(a: &mut Mat, u: &mut Mat, i: usize) {
    for x in a[i].iter_mut() {
        *x = -std::mem::take(x);
    }
    for x in u[i].iter_mut() {
        *x = -std::mem::take(x);
    }
}

/// Smith normal form of an integer matrix. Empty matrices are fine.
pub fn smith_normal_form(a0: &Mat) -> Smith {
    let rows = a0.len();
    let cols = if rows == 0 { 0 } else { a0[0].len() };
    let mut a = a0.clone();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let k = rows.min(cols);

    let mut t = 0;
    while t < k {
        // Find a pivot of minimal absolute value in the trailing block.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !a[i][j].is_zero() {
                    match &pivot {
                        None => pivot = Some((i, j)),
                        Some((pi, pj)) => {
                            if a[i][j].abs() < a[*pi][*pj].abs() {
                                pivot = Some((i, j));
                            }
                        }
                    }
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        swap_rows(&mut a, &mut u, t, pi);
        swap_cols(&mut a, &mut v, t, pj);

        // Clear row and column t; restart whenever a remainder shrinks the pivot.
        loop {
            let mut done = true;
            for i in t + 1..rows {
                if a[i][t].is_zero() {
                    continue;
                }
                let q = -(&a[i][t] / &a[t][t]);
                add_row(&mut a, &mut u, i, t, &q);
                if !a[i][t].is_zero() {
                    // Remainder became the smaller entry: promote it.
                    swap_rows(&mut a, &mut u, t, i);
                    done = false;
                }
            }
            for j in t + 1..cols {
                if a[t][j].is_zero() {
                    continue;
                }
                let q = -(&a[t][j] / &a[t][t]);
                add_col(&mut a, &mut v, j, t, &q);
                if !a[t][j].is_zero() {
                    swap_cols(&mut a, &mut v, t, j);
                    done = false;
                }
            }
            if done {
                break;
            }
        }

        // Enforce divisibility of the remaining block by the pivot.
        let mut redo = false;
        'outer: for i in t + 1..rows {
            for j in t + 1..cols {
                if !(&a[i][j] % &a[t][t]).is_zero() {
                    let one = BigInt::one();
                    add_row(&mut a, &mut u, t, i, &one);
                    redo = true;
                    break 'outer;
                }
            }
        }
        if redo {
            continue; // re-run elimination at the same t
        }
        if a[t][t].is_negative() {
            negate_row(&mut a, &mut u, t);
        }
        t += 1;
    }

    let diag = (0..k).map(|i| a[i][i].clone()).collect();
    Smith { rows, cols, u, v, diag }
}

pub fn mat_vec(a: &Mat, x: &[BigInt]) -> Vec<BigInt> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(c, xi)| c * xi).sum())
        .collect()
}

/// Solution set of `A x = b` over Z: one particular solution plus a basis of
/// the homogeneous kernel lattice.
#[derive(Debug, Clone)]
pub struct IntegerSolution {
    pub particular: Vec<BigInt>,
    pub kernel_basis: Vec<Vec<BigInt>>,
}

/// Solve `A x = b` over the integers. `None` when the system is infeasible;
/// the Smith form certifies infeasibility through a divisibility failure
/// `d_i ∤ (U b)_i` or a zero row with nonzero right-hand side.
pub fn solve_integer(a: &Mat, b: &[BigInt]) -> Option<IntegerSolution> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    assert_eq!(b.len(), rows, "right-hand side length mismatch");
    let s = smith_normal_form(a);
    let ub = mat_vec(&s.u, b);
    let k = rows.min(cols);

    let mut y = vec![BigInt::zero(); cols];
    for i in 0..rows {
        let di = if i < k { s.diag[i].clone() } else { BigInt::zero() };
        if di.is_zero() {
            if !ub[i].is_zero() {
                return None;
            }
        } else {
            let (q, r) = ub[i].div_rem(&di);
            if !r.is_zero() {
                return None;
            }
            y[i] = q;
        }
    }
    let particular = mat_vec(&s.v, &y);

    // Kernel: columns of V whose diagonal entry is zero (or beyond the rank).
    let mut kernel_basis = Vec::new();
    for j in 0..cols {
        let dj = if j < k { s.diag[j].clone() } else { BigInt::zero() };
        if dj.is_zero() {
            kernel_basis.push((0..cols).map(|r| s.v[r][j].clone()).collect());
        }
    }
    Some(IntegerSolution { particular, kernel_basis })
}

/// Solve `A x ≡ b (mod m)` with a single modulus `m ≥ 1` for every unknown,
/// by solving `A x + m y = b` over Z. Returns a particular solution reduced
/// mod `m` together with generators of the solution group of the homogeneous
/// congruence (also reduced; redundant generators are not pruned).
pub fn solve_modular(a: &Mat, b: &[BigInt], m: &BigInt) -> Option<(Vec<BigInt>, Vec<Vec<BigInt>>)> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    assert!(m > &BigInt::zero());
    let mut aug: Mat = Vec::with_capacity(rows);
    for (i, row) in a.iter().enumerate() {
        let mut r = row.clone();
        for j in 0..rows {
            r.push(if i == j { m.clone() } else { BigInt::zero() });
        }
        aug.push(r);
    }
    let sol = solve_integer(&aug, b)?;
    let reduce = |x: &BigInt| -> BigInt { x.mod_floor(m) };
    let particular: Vec<BigInt> = sol.particular[..cols].iter().map(reduce).collect();
    let mut gens: Vec<Vec<BigInt>> = Vec::new();
    for v in &sol.kernel_basis {
        let g: Vec<BigInt> = v[..cols].iter().map(reduce).collect();
        if g.iter().any(|x| !x.is_zero()) {
            gens.push(g);
        }
    }
    Some((particular, gens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::ToPrimitive;

    fn mat(entries: &[&[i64]]) -> Mat {
        entries
            .iter()
            .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
            .collect()
    }

    fn mat_mul(a: &Mat, b: &Mat) -> Mat {
        let n = a.len();
        let m = b[0].len();
        let k = b.len();
        (0..n)
            .map(|i| {
                (0..m)
                    .map(|j| (0..k).map(|t| &a[i][t] * &b[t][j]).sum())
                    .collect()
            })
            .collect()
    }

    fn det(a: &Mat) -> BigInt {
        // small matrices only; cofactor expansion
        let n = a.len();
        if n == 0 {
            return BigInt::one();
        }
        if n == 1 {
            return a[0][0].clone();
        }
        let mut d = BigInt::zero();
        for j in 0..n {
            let minor: Mat = (1..n)
                .map(|i| {
                    (0..n)
                        .filter(|&c| c != j)
                        .map(|c| a[i][c].clone())
                        .collect()
                })
                .collect();
            let s = if j % 2 == 0 { 1 } else { -1 };
            d += BigInt::from(s) * &a[0][j] * det(&minor);
        }
        d
    }

    #[test]
    fn smith_decomposition_holds() {
        let a = mat(&[&[2, 4, 4], &[-6, 6, 12], &[10, 4, 16]]);
        let s = smith_normal_form(&a);
        let ua = mat_mul(&s.u, &a);
        let uav = mat_mul(&ua, &s.v);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { s.diag[i].clone() } else { BigInt::zero() };
                assert_eq!(uav[i][j], expect, "entry ({i},{j})");
            }
        }
        for w in s.diag.windows(2) {
            if !w[1].is_zero() {
                assert!((&w[1] % &w[0]).is_zero(), "divisibility chain");
            }
        }
        assert_eq!(det(&s.u).abs(), BigInt::one());
        assert_eq!(det(&s.v).abs(), BigInt::one());
        // |det A| = product of invariant factors for square nonsingular A
        let prod: BigInt = s.diag.iter().product();
        assert_eq!(det(&a).abs(), prod);
    }

    #[test]
    fn solve_integer_feasible_and_not() {
        // x + 2y = 3, 3x + 4y = 5 has integer solution (-1, 2)
        let a = mat(&[&[1, 2], &[3, 4]]);
        let b = vec![BigInt::from(3), BigInt::from(5)];
        let s = solve_integer(&a, &b).unwrap();
        assert_eq!(mat_vec(&a, &s.particular), b);
        assert!(s.kernel_basis.is_empty());

        // 2x = 1 infeasible over Z
        let a = mat(&[&[2]]);
        assert!(solve_integer(&a, &[BigInt::one()]).is_none());
    }

    #[test]
    fn kernel_of_rank_deficient_system() {
        // x + y + z = 0 over Z: kernel of rank 2
        let a = mat(&[&[1, 1, 1]]);
        let s = solve_integer(&a, &[BigInt::zero()]).unwrap();
        assert_eq!(s.kernel_basis.len(), 2);
        for v in &s.kernel_basis {
            let image = mat_vec(&a, v);
            assert!(image[0].is_zero());
        }
    }

    #[test]
    fn modular_solver_matches_brute_force() {
        // x + y ≡ 1, x - y ≡ 1 (mod 2): solutions {(1,0),(0,1)} -- x+y and x-y
        // agree mod 2 so both equations say x+y ≡ 1.
        let a = mat(&[&[1, 1], &[1, -1]]);
        let b = vec![BigInt::one(), BigInt::one()];
        let m = BigInt::from(2);
        let (part, gens) = solve_modular(&a, &b, &m).unwrap();
        let mut found = std::collections::BTreeSet::new();
        let mut frontier = vec![part.clone()];
        while let Some(x) = frontier.pop() {
            let key: Vec<i64> = x.iter().map(|v| v.to_i64().unwrap()).collect();
            if !found.insert(key) {
                continue;
            }
            for g in &gens {
                let nx: Vec<BigInt> =
                    x.iter().zip(g).map(|(a, b)| (a + b).mod_floor(&m)).collect();
                frontier.push(nx);
            }
        }
        let expect: std::collections::BTreeSet<Vec<i64>> =
            [vec![1, 0], vec![0, 1]].into_iter().collect();
        assert_eq!(found, expect);
    }

    #[test]
    fn modular_infeasibility_detected() {
        // 2x ≡ 1 (mod 4) has no solution
        let a = mat(&[&[2]]);
        assert!(solve_modular(&a, &[BigInt::one()], &BigInt::from(4)).is_none());
    }
}
