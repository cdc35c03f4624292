//! The follower multiplier set `{λ ≥ 0 : A λ_active = b, λ_inactive = 0}`
//! with `A` the active constraint gradients and `b = −∇F`, its emptiness and
//! its vertices (basic solutions over column subsets of `A`).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::Expr;
use crate::linalg::{lstsq_full_rank, mat_vec, norm_inf, rank, select_cols, subsets_of_size, Matrix};
use crate::model::SlmfgProblem;
use crate::sampling::rng;
#[allow(unused_imports)]
use num_traits::Float;

/// Rank threshold relative to the largest pivot.
pub const RANK_TOL: f64 = 1e-9;
/// Radius under which two vertices are the same point.
pub const DEDUP_RADIUS: f64 = 1e-7;
const VERTEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MultiplierError {
    #[error("unknown follower {0}")]
    UnknownFollower(String),
    #[error("{what} has {got} entries, expected {want}")]
    Dimension { what: &'static str, want: usize, got: usize },
    #[error("follower {follower} is infeasible at the point (max g = {violation:e})")]
    Infeasible { follower: String, violation: f64 },
    #[error("the multiplier set of follower {follower} is empty")]
    Empty { follower: String },
}

/// Constraints counted as active, with their values at the point.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    pub follower: String,
    pub indices: Vec<usize>,
    /// `g_j` at the point for every constraint.
    pub values: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierPolytope {
    pub active: ActiveSet,
    /// Number of constraints `p^f`.
    pub p: usize,
    /// `n_f × |active|`, column `k` is the gradient of constraint `active[k]`.
    pub a: Matrix,
    pub b: Vec<f64>,
}

fn grad_at(e: &Expr, vars: &[crate::expr::VarId], env: &crate::expr::BlockEnv) -> Vec<f64> {
    vars.iter().map(|v| e.diff(v).eval(env).expect("validated problem")).collect()
}

/// Assemble `Λ^f(x, y)` for follower `f`; `y` is the concatenated follower vector.
pub fn multiplier_polytope(
    p: &SlmfgProblem,
    f: usize,
    x: &[f64],
    y: &[f64],
    activity_tol: f64,
) -> Result<MultiplierPolytope, MultiplierError> {
    if x.len() != p.leader.dim {
        return Err(MultiplierError::Dimension { what: "x", want: p.leader.dim, got: x.len() });
    }
    if y.len() != p.follower_dim() {
        return Err(MultiplierError::Dimension { what: "y", want: p.follower_dim(), got: y.len() });
    }
    let fp = &p.followers[f];
    let env = p.env(x, y);
    let vars = fp.vars();
    let values: Vec<f64> = fp.constraints.iter().map(|g| g.eval(&env).expect("validated problem")).collect();
    let worst = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if worst > activity_tol {
        return Err(MultiplierError::Infeasible { follower: fp.id.clone(), violation: worst });
    }
    let indices: Vec<usize> = (0..values.len()).filter(|&j| values[j].abs() <= activity_tol).collect();
    let grads: Vec<Vec<f64>> = indices.iter().map(|&j| grad_at(&fp.constraints[j], &vars, &env)).collect();
    let a: Matrix = (0..vars.len()).map(|i| grads.iter().map(|g| g[i]).collect()).collect();
    let b: Vec<f64> = grad_at(&fp.objective, &vars, &env).into_iter().map(|v| 0.0 - v).collect();
    Ok(MultiplierPolytope {
        active: ActiveSet { follower: fp.id.clone(), indices, values, tol: activity_tol },
        p: fp.constraints.len(),
        a,
        b,
    })
}

/// Same, addressing the follower by id.
pub fn multiplier_polytope_for(
    p: &SlmfgProblem,
    id: &str,
    x: &[f64],
    y: &[f64],
    activity_tol: f64,
) -> Result<MultiplierPolytope, MultiplierError> {
    let f = p.follower_index(id).ok_or_else(|| MultiplierError::UnknownFollower(id.into()))?;
    multiplier_polytope(p, f, x, y, activity_tol)
}

impl MultiplierPolytope {
    pub fn follower(&self) -> &str {
        &self.active.follower
    }

    fn scale(&self) -> f64 {
        let amax = self.a.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()));
        (1.0 + amax) * (1.0 + norm_inf(&self.b))
    }

    /// Expand active-coordinate values to a full `p`-vector.
    pub fn expand(&self, active_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (k, &j) in self.active.indices.iter().enumerate() {
            out[j] = active_values[k];
        }
        out
    }

    /// Whether a full `p`-vector lies in the set, within `tol`.
    pub fn contains(&self, lambda: &[f64], tol: f64) -> bool {
        if lambda.len() != self.p {
            return false;
        }
        let on_active: Vec<f64> = self.active.indices.iter().map(|&j| lambda[j]).collect();
        let inactive_zero =
            (0..self.p).filter(|j| !self.active.indices.contains(j)).all(|j| lambda[j].abs() <= tol);
        let res: Vec<f64> = mat_vec(&self.a, &on_active).iter().zip(&self.b).map(|(p, q)| p - q).collect();
        inactive_zero && lambda.iter().all(|&l| l >= -tol) && norm_inf(&res) <= tol * self.scale()
    }

    /// Basic solutions in lexicographic basis order, before deduplication.
    fn basic_solutions(&self) -> Vec<Vec<f64>> {
        let k = self.active.indices.len();
        let n = self.b.len();
        let tol = VERTEX_TOL * self.scale();
        let r = if k == 0 || n == 0 { 0 } else { rank(&self.a, RANK_TOL) };
        let mut out = Vec::new();
        for basis in subsets_of_size(k, r) {
            let sub = select_cols(&self.a, &basis);
            let sol = if r == 0 { Some(Vec::new()) } else { lstsq_full_rank(&sub, &self.b) };
            let Some(sol) = sol else { continue };
            if r > 0 && rank(&sub, RANK_TOL) < r {
                continue;
            }
            let res: Vec<f64> = mat_vec(&sub, &sol).iter().zip(&self.b).map(|(p, q)| p - q).collect();
            if norm_inf(&res) > tol || sol.iter().any(|&v| v < -tol) {
                continue;
            }
            let mut act = vec![0.0; k];
            for (i, &c) in basis.iter().enumerate() {
                act[c] = sol[i].max(0.0);
            }
            out.push(self.expand(&act));
        }
        out
    }

    /// Exact at desk scale: the set is pointed, so it is nonempty iff some
    /// basic solution is feasible.
    pub fn is_empty(&self) -> bool {
        self.basic_solutions().is_empty()
    }

    /// Vertices as full `p`-vectors, deduplicated within [`DEDUP_RADIUS`].
    pub fn enumerate_vertices(&self) -> Result<Vec<Vec<f64>>, MultiplierError> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for v in self.basic_solutions() {
            let dup = out.iter().any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() <= DEDUP_RADIUS));
            if !dup {
                out.push(v);
            }
        }
        if out.is_empty() {
            return Err(MultiplierError::Empty { follower: self.active.follower.clone() });
        }
        Ok(out)
    }

    /// `n` random convex combinations of the vertices, deterministic per seed.
    pub fn sample_multipliers(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, MultiplierError> {
        use rand::Rng;
        let verts = self.enumerate_vertices()?;
        let mut r = rng(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let w: Vec<f64> = verts.iter().map(|_| -(1.0 - r.gen::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            let mut pt = vec![0.0; self.p];
            for (v, wi) in verts.iter().zip(&w) {
                for (a, b) in pt.iter_mut().zip(v) {
                    *a += wi / s * b;
                }
            }
            out.push(pt);
        }
        Ok(out)
    }
}

pub fn is_empty(poly: &MultiplierPolytope) -> bool {
    poly.is_empty()
}

pub fn enumerate_vertices(poly: &MultiplierPolytope) -> Result<Vec<Vec<f64>>, MultiplierError> {
    poly.enumerate_vertices()
}

pub fn sample_multipliers(poly: &MultiplierPolytope, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, MultiplierError> {
    poly.sample_multipliers(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_slmfg;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
    }

    #[test]
    fn touching_discs_give_a_segment() {
        let p = builtin_slmfg("ex4");
        let poly = multiplier_polytope(&p, 0, &[0.0], &[0.0; 4], 1e-6).unwrap();
        assert_eq!(poly.a, vec![vec![0.0, 0.0], vec![-2.0, -2.0]]);
        assert_eq!(poly.b, vec![0.0, -2.0]);
        assert!(!poly.is_empty());
        assert_eq!(poly.enumerate_vertices().unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        for s in poly.sample_multipliers(3, 7).unwrap() {
            assert!((s[0] + s[1] - 1.0).abs() < 1e-12 && s.iter().all(|&v| v >= 0.0));
        }
        assert!(poly.sample_multipliers(0, 7).unwrap().is_empty());
    }

    #[test]
    fn lens_multipliers_are_unique() {
        let p = builtin_slmfg("ex1");
        let poly = multiplier_polytope(&p, 0, &[2.0], &[-1.0; 4], 1e-6).unwrap();
        let v = poly.enumerate_vertices().unwrap();
        assert_eq!(v.len(), 1);
        assert!(close(&v[0], &[0.25, 0.25], 1e-12));
        assert_eq!(poly.sample_multipliers(2, 1).unwrap(), vec![v[0].clone(), v[0].clone()]);
    }

    #[test]
    fn collapsed_lens_has_no_multipliers() {
        let p = builtin_slmfg("ex1");
        let poly = multiplier_polytope(&p, 1, &[0.0], &[0.0; 4], 1e-6).unwrap();
        assert_eq!(poly.a, vec![vec![0.0, 0.0], vec![-1.0, 1.0]]);
        assert_eq!(poly.b, vec![-1.0, 0.0]);
        assert!(poly.is_empty());
        assert!(matches!(poly.enumerate_vertices(), Err(MultiplierError::Empty { .. })));
    }

    #[test]
    fn kink_has_both_pieces() {
        let p = builtin_slmfg("ex3");
        let poly = multiplier_polytope(&p, 0, &[0.0], &[1.0, 1.0], 1e-6).unwrap();
        assert_eq!(poly.enumerate_vertices().unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let off = multiplier_polytope(&p, 0, &[0.5], &[0.5, 0.5], 1e-6).unwrap();
        assert_eq!(off.active.indices, vec![0]);
        assert_eq!(off.enumerate_vertices().unwrap(), vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn infeasible_point_is_an_error() {
        let p = builtin_slmfg("ex3");
        assert!(matches!(
            multiplier_polytope(&p, 0, &[0.0], &[2.0, 1.0], 1e-6),
            Err(MultiplierError::Infeasible { .. })
        ));
    }
}
