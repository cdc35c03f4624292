//! Small dense linear algebra for desk-scale systems (a handful of rows and
//! columns). Matrices are row-major `Vec<Vec<f64>>`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

pub type Matrix = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![0.0; cols]; rows]
}

pub fn cols_of(a: &Matrix) -> usize {
    a.first().map(Vec::len).unwrap_or(0)
}

pub fn transpose(a: &Matrix) -> Matrix {
    let (r, c) = (a.len(), cols_of(a));
    let mut t = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn mat_vec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn select_cols(a: &Matrix, cols: &[usize]) -> Matrix {
    a.iter().map(|row| cols.iter().map(|&j| row[j]).collect()).collect()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Numerical rank by full-pivot elimination. Pivots below `rel_tol` times the
/// first (largest) pivot count as zero.
pub fn rank(a: &Matrix, rel_tol: f64) -> usize {
    let mut m = a.clone();
    let (rows, cols) = (m.len(), cols_of(&m));
    let mut r = 0;
    let mut first_pivot = 0.0;
    while r < rows.min(cols) {
        let (mut pi, mut pj, mut best) = (r, r, 0.0);
        for (i, row) in m.iter().enumerate().skip(r) {
            for (j, v) in row.iter().enumerate().skip(r) {
                if v.abs() > best {
                    best = v.abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        if r == 0 {
            first_pivot = best;
        }
        if best == 0.0 || best <= rel_tol * first_pivot {
            break;
        }
        m.swap(r, pi);
        for row in m.iter_mut() {
            row.swap(r, pj);
        }
        for i in r + 1..rows {
            let f = m[i][r] / m[r][r];
            if f != 0.0 {
                for j in r..cols {
                    let d = f * m[r][j];
                    m[i][j] -= d;
                }
            }
        }
        r += 1;
    }
    r
}

/// Solve a square system by partial pivoting; `None` if numerically singular.
pub fn solve_square(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Matrix = a.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    let scale = a.iter().flatten().fold(0.0, |s: f64, v| s.max(v.abs()));
    if scale == 0.0 {
        return if n == 0 { Some(Vec::new()) } else { None };
    }
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())?;
        if m[p][k].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                let d = f * m[k][j];
                m[i][j] -= d;
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    Some(x)
}

/// Least-squares solution of `a x ≈ b` for `a` with full column rank, via
/// Householder QR. Returns `None` when the columns are dependent.
pub fn lstsq_full_rank(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let (rows, cols) = (a.len(), cols_of(a));
    if cols == 0 {
        return Some(Vec::new());
    }
    if rows < cols {
        return None;
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let scale = a.iter().flatten().fold(0.0, |s: f64, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale {
            return None;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv > 0.0 {
            for j in k..cols {
                let s: f64 = (k..rows).map(|i| v[i - k] * r[i][j]).sum::<f64>() * 2.0 / vv;
                for i in k..rows {
                    r[i][j] -= s * v[i - k];
                }
            }
            let s: f64 = (k..rows).map(|i| v[i - k] * qtb[i]).sum::<f64>() * 2.0 / vv;
            for i in k..rows {
                qtb[i] -= s * v[i - k];
            }
        }
        if r[k][k].abs() <= 1e-12 * scale {
            return None;
        }
    }
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = (k + 1..cols).map(|j| r[k][j] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[k][k];
    }
    Some(x)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations:
/// eigenvalues ascending, eigenvectors as the matching columns.
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = zeros(n, n);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * (1.0 + diag) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap());
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    sym_eigen(a).0
}

/// Minimum of `½ zᵀ h z + cᵀ z` over all `z` for PSD `h`; `None` when the
/// quadratic is unbounded below (a linear term outside the range of `h`).
pub fn convex_quadratic_min(h: &Matrix, c: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let (vals, vecs) = sym_eigen(h);
    let scale = vals.iter().fold(1.0, |s: f64, l| s.max(l.abs()));
    let cscale = 1.0 + norm_inf(c);
    let mut z = vec![0.0; n];
    for k in 0..n {
        let comp: f64 = (0..n).map(|r| vecs[r][k] * c[r]).sum();
        if vals[k] > 1e-10 * scale {
            for r in 0..n {
                z[r] -= comp / vals[k] * vecs[r][k];
            }
        } else if comp.abs() > 1e-10 * cscale {
            return None;
        }
    }
    let hz = mat_vec(h, &z);
    Some((0.5 * dot(&z, &hz) + dot(c, &z), z))
}

/// Basis of the null space of `a` (columns of the result), from the
/// eigenvectors of `aᵀa` with negligible eigenvalues.
pub fn null_space(a: &Matrix, n: usize, rel_tol: f64) -> Vec<Vec<f64>> {
    let mut ata = zeros(n, n);
    for row in a {
        for i in 0..n {
            for j in 0..n {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let (vals, vecs) = sym_eigen(&ata);
    let top = vals.iter().fold(0.0, |s: f64, l| s.max(l.abs()));
    (0..n)
        .filter(|&k| vals[k].abs() <= rel_tol * rel_tol * top.max(1e-300) || top == 0.0)
        .map(|k| (0..n).map(|r| vecs[r][k]).collect())
        .collect()
}

/// Smallest eigenvalue with a scale-aware PSD verdict.
pub fn is_psd(a: &Matrix, tol: f64) -> bool {
    let scale = a.iter().flatten().fold(1.0, |s: f64, v| s.max(v.abs()));
    sym_eigenvalues(a).first().is_none_or(|&l| l >= -tol * scale)
}

/// All subsets of `0..n` of size `k`, lexicographic.
pub fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All subsets of `0..n` (by increasing size, then lexicographic).
pub fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    (0..=n).flat_map(|k| subsets_of_size(n, k)).collect()
}

/// Nonnegative least squares by exhaustive support search: minimizes
/// `‖a λ − b‖₂` over `λ ≥ 0`. Exact for the few columns used here.
pub fn nnls(a: &Matrix, b: &[f64]) -> (Vec<f64>, f64) {
    let cols = cols_of(a);
    let mut best = (vec![0.0; cols], norm2(b));
    for support in all_subsets(cols).into_iter().skip(1) {
        let sub = select_cols(a, &support);
        let Some(sol) = lstsq_full_rank(&sub, b) else { continue };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut lam = vec![0.0; cols];
        for (k, &j) in support.iter().enumerate() {
            lam[j] = sol[k];
        }
        let res: Vec<f64> = mat_vec(a, &lam).iter().zip(b).map(|(p, q)| p - q).collect();
        let r = norm2(&res);
        if r < best.1 {
            best = (lam, r);
        }
    }
    best
}

/// A point of `{λ : a λ = b, lo ≤ λ ≤ hi}` (residual ≤ `tol` in ∞-norm), found
/// by enumerating which coordinates sit at a bound and which are free.
pub fn box_feasible_point(a: &Matrix, b: &[f64], lo: &[f64], hi: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = lo.len();
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&j| state[j] == 0).collect();
        let mut lam = vec![0.0; n];
        let mut rhs = b.to_vec();
        for j in 0..n {
            if state[j] != 0 {
                lam[j] = if state[j] == 1 { lo[j] } else { hi[j] };
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= a[i][j] * lam[j];
                }
            }
        }
        let sub = select_cols(a, &free);
        let sol = if free.is_empty() { Some(Vec::new()) } else { lstsq_full_rank(&sub, &rhs) };
        if let Some(sol) = sol {
            for (k, &j) in free.iter().enumerate() {
                lam[j] = sol[k];
            }
            let inside = (0..n).all(|j| lam[j] >= lo[j] - tol && lam[j] <= hi[j] + tol);
            let res: Vec<f64> = mat_vec(a, &lam).iter().zip(b).map(|(p, q)| p - q).collect();
            if inside && norm_inf(&res) <= tol {
                for j in 0..n {
                    lam[j] = lam[j].clamp(lo[j], hi[j]);
                }
                return Some(lam);
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return None;
            }
            state[k] += 1;
            if state[k] == 3 {
                state[k] = 0;
                k += 1;
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&vec![vec![0.0, 0.0], vec![-2.0, -2.0]], 1e-9), 1);
        assert_eq!(rank(&vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1e-9), 2);
        assert_eq!(rank(&vec![vec![0.0]], 1e-9), 0);
        assert_eq!(rank(&vec![vec![1.0, 1.0], vec![1.0, 1.0 + 1e-12]], 1e-9), 1);
        assert_eq!(rank(&Vec::new(), 1e-9), 0);
    }

    #[test]
    fn solves() {
        let x = solve_square(&vec![vec![2.0, 1.0], vec![1.0, 3.0]], &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_square(&vec![vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 1.0]).is_none());
        let x = lstsq_full_rank(&vec![vec![0.0], vec![-2.0]], &[0.0, 2.0]).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14);
        assert!(lstsq_full_rank(&vec![vec![0.0, 0.0], vec![-2.0, -2.0]], &[0.0, 2.0]).is_none());
    }

    #[test]
    fn eigenvalues() {
        let ev = sym_eigenvalues(&vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        assert!(!is_psd(&vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1e-12));
        assert!(is_psd(&vec![vec![0.0, 0.0], vec![0.0, 0.0]], 1e-12));
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets_of_size(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(subsets_of_size(2, 0), vec![Vec::<usize>::new()]);
        assert_eq!(all_subsets(2).len(), 4);
        assert!(subsets_of_size(1, 2).is_empty());
    }

    #[test]
    fn nonnegative_least_squares() {
        // λ1 + λ2 = 1 is solvable; λ1 - λ2 = -1 with λ ≥ 0 too.
        let (_, r) = nnls(&vec![vec![1.0, 1.0]], &[1.0]);
        assert!(r < 1e-14);
        let (l, r) = nnls(&vec![vec![1.0]], &[-1.0]);
        assert_eq!(l, vec![0.0]);
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_lp() {
        let a = vec![vec![1.0, 1.0]];
        assert!(box_feasible_point(&a, &[1.0], &[0.0, 0.0], &[0.4, 0.4], 1e-12).is_none());
        let p = box_feasible_point(&a, &[1.0], &[0.0, 0.0], &[0.6, 0.6], 1e-12).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }
}
