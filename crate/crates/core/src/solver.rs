//! Local minimizer for small smooth programs
//! `min f(z) s.t. g_j(z) ≤ 0, lo ≤ z_free ≤ hi`.
//!
//! Points are dense vectors over a problem-wide variable layout; only the
//! `free` positions move. The outer loop is an augmented Lagrangian, the
//! inner loop a projected Newton method with Armijo backtracking along the
//! projection arc. A final Newton solve on the KKT system of each candidate
//! active set sharpens the answer when the problem is regular there.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{CompiledPoly, Expr, VarId};
use crate::linalg::{all_subsets, lstsq_full_rank, norm_inf, solve_square, Matrix};

/// Compiled objective, constraints and their derivatives in the free variables.
#[derive(Clone, Debug)]
pub struct Nlp {
    pub free: Vec<usize>,
    pub f: CompiledPoly,
    pub f_grad: Vec<CompiledPoly>,
    pub f_hess: Vec<Vec<CompiledPoly>>,
    pub g: Vec<CompiledPoly>,
    pub g_grad: Vec<Vec<CompiledPoly>>,
    pub g_hess: Vec<Vec<Vec<CompiledPoly>>>,
}

impl Nlp {
    pub fn build(
        objective: &Expr,
        constraints: &[Expr],
        free_vars: &[VarId],
        index: &BTreeMap<VarId, usize>,
    ) -> Result<Nlp, VarId> {
        let compile = |e: &Expr| CompiledPoly::compile(e, index);
        let grad = |e: &Expr| -> Result<Vec<CompiledPoly>, VarId> {
            free_vars.iter().map(|v| compile(&e.diff(v).simplify())).collect()
        };
        let hess = |e: &Expr| -> Result<Vec<Vec<CompiledPoly>>, VarId> {
            e.hessian(free_vars).iter().map(|row| row.iter().map(compile).collect()).collect()
        };
        let mut free = Vec::with_capacity(free_vars.len());
        for v in free_vars {
            free.push(*index.get(v).ok_or_else(|| v.clone())?);
        }
        Ok(Nlp {
            free,
            f: compile(objective)?,
            f_grad: grad(objective)?,
            f_hess: hess(objective)?,
            g: constraints.iter().map(compile).collect::<Result<_, _>>()?,
            g_grad: constraints.iter().map(grad).collect::<Result<_, _>>()?,
            g_hess: constraints.iter().map(hess).collect::<Result<_, _>>()?,
        })
    }

    pub fn n(&self) -> usize {
        self.free.len()
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        self.g.iter().map(|g| g.eval(z)).collect()
    }

    pub fn violation(&self, z: &[f64]) -> f64 {
        self.g.iter().fold(0.0, |v, g| v.max(g.eval(z)))
    }

    pub fn objective_grad(&self, z: &[f64]) -> Vec<f64> {
        self.f_grad.iter().map(|p| p.eval(z)).collect()
    }

    pub fn constraint_grad(&self, j: usize, z: &[f64]) -> Vec<f64> {
        self.g_grad[j].iter().map(|p| p.eval(z)).collect()
    }

    /// `∇f + Σ λ_j ∇g_j` in the free variables.
    pub fn lagrangian_grad(&self, z: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut r = self.objective_grad(z);
        for (j, &l) in lambda.iter().enumerate() {
            if l != 0.0 {
                for (ri, gp) in r.iter_mut().zip(&self.g_grad[j]) {
                    *ri += l * gp.eval(z);
                }
            }
        }
        r
    }

    fn lagrangian_hess(&self, z: &[f64], weights: &[f64]) -> Matrix {
        let n = self.n();
        let mut h: Matrix = self.f_hess.iter().map(|row| row.iter().map(|p| p.eval(z)).collect()).collect();
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for a in 0..n {
                    for b in 0..n {
                        h[a][b] += w * self.g_hess[j][a][b].eval(z);
                    }
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpOptions {
    pub max_iters: usize,
    pub feas_tol: f64,
    pub tol: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions { max_iters: 500, feas_tol: 1e-8, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpResult {
    /// Full point; only the free positions differ from the start vector.
    pub z: Vec<f64>,
    pub f: f64,
    pub violation: f64,
    pub multipliers: Vec<f64>,
    /// ∞-norm of the projected Lagrangian gradient.
    pub stationarity: f64,
    /// Some free coordinate sits on its bound.
    pub at_bound: bool,
    /// The KKT Newton step succeeded.
    pub polished: bool,
}

struct Al<'a> {
    nlp: &'a Nlp,
    bounds: &'a [(f64, f64)],
    mu: Vec<f64>,
    rho: f64,
}

impl Al<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.nlp.f.eval(z);
        for (j, g) in self.nlp.g.iter().enumerate() {
            let s = (self.mu[j] + self.rho * g.eval(z)).max(0.0);
            v += (s * s - self.mu[j] * self.mu[j]) / (2.0 * self.rho);
        }
        v
    }

    fn weights(&self, z: &[f64]) -> Vec<f64> {
        self.nlp.g.iter().enumerate().map(|(j, g)| (self.mu[j] + self.rho * g.eval(z)).max(0.0)).collect()
    }

    fn grad_hess(&self, z: &[f64]) -> (Vec<f64>, Matrix) {
        let w = self.weights(z);
        let grad = self.nlp.lagrangian_grad(z, &w);
        let mut h = self.nlp.lagrangian_hess(z, &w);
        let n = self.nlp.n();
        for (j, &wj) in w.iter().enumerate() {
            if wj > 0.0 {
                let gg = self.nlp.constraint_grad(j, z);
                for a in 0..n {
                    for b in 0..n {
                        h[a][b] += self.rho * gg[a] * gg[b];
                    }
                }
            }
        }
        (grad, h)
    }

    fn project(&self, z: &mut [f64]) {
        for (k, &i) in self.nlp.free.iter().enumerate() {
            let (lo, hi) = self.bounds[k];
            z[i] = z[i].clamp(lo, hi);
        }
    }

    /// Armijo search along the projection arc `P(z + t d)`.
    fn line_search(&self, z: &[f64], grad: &[f64], d: &[f64], v0: f64) -> Option<(Vec<f64>, f64)> {
        let mut t = 1.0;
        for _ in 0..60 {
            let mut trial = z.to_vec();
            for (k, &i) in self.nlp.free.iter().enumerate() {
                trial[i] = z[i] + t * d[k];
            }
            self.project(&mut trial);
            let decrease: f64 = self.nlp.free.iter().enumerate().map(|(k, &i)| grad[k] * (trial[i] - z[i])).sum();
            let v = self.value(&trial);
            if decrease < 0.0 && v <= v0 + 1e-4 * decrease {
                return Some((trial, v));
            }
            t *= 0.5;
        }
        None
    }

    fn inner(&self, z: &mut Vec<f64>, budget: usize) -> usize {
        let n = self.nlp.n();
        for it in 0..budget {
            let (grad, h) = self.grad_hess(z);
            let mut pg: f64 = 0.0;
            let mut binding = vec![false; n];
            for (k, &i) in self.nlp.free.iter().enumerate() {
                let (lo, hi) = self.bounds[k];
                let stepped = (z[i] - grad[k]).clamp(lo, hi);
                pg = pg.max((z[i] - stepped).abs());
                binding[k] = (z[i] <= lo && grad[k] > 0.0) || (z[i] >= hi && grad[k] < 0.0);
            }
            if pg <= 1e-13 * (1.0 + norm_inf(&grad)) {
                return it;
            }
            let v0 = self.value(z);
            let fr: Vec<usize> = (0..n).filter(|&k| !binding[k]).collect();
            let mut d = vec![0.0; n];
            let newton = newton_direction(&h, &grad, &fr);
            let mut next = None;
            if let Some(dn) = newton {
                for (a, &k) in fr.iter().enumerate() {
                    d[k] = dn[a];
                }
                next = self.line_search(z, &grad, &d, v0);
            }
            if next.is_none() {
                for k in 0..n {
                    d[k] = if binding[k] { 0.0 } else { -grad[k] };
                }
                next = self.line_search(z, &grad, &d, v0);
            }
            match next {
                Some((zn, _)) => *z = zn,
                None => return it,
            }
        }
        budget
    }
}

/// Regularized Newton direction on the coordinates `fr`, if it descends.
fn newton_direction(h: &Matrix, grad: &[f64], fr: &[usize]) -> Option<Vec<f64>> {
    if fr.is_empty() {
        return None;
    }
    let g: Vec<f64> = fr.iter().map(|&k| -grad[k]).collect();
    let scale = fr.iter().fold(1.0, |s: f64, &k| s.max(h[k][k].abs()));
    let mut delta = 0.0;
    for _ in 0..12 {
        let sub: Matrix = fr
            .iter()
            .map(|&a| fr.iter().map(|&b| h[a][b] + if a == b { delta } else { 0.0 }).collect())
            .collect();
        if let Some(d) = solve_square(&sub, &g) {
            let slope: f64 = d.iter().zip(&g).map(|(p, q)| p * q).sum();
            if slope > 0.0 && d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        delta = if delta == 0.0 { 1e-8 * scale } else { delta * 100.0 };
    }
    None
}

/// Minimize from `start` (a full point). `bounds[k]` bounds `nlp.free[k]`.
pub fn minimize(nlp: &Nlp, start: &[f64], bounds: &[(f64, f64)], opts: &NlpOptions) -> NlpResult {
    let m = nlp.m();
    let mut al = Al { nlp, bounds, mu: vec![0.0; m], rho: 10.0 };
    let mut z = start.to_vec();
    al.project(&mut z);
    let mut used = 0;
    let mut prev_v = f64::INFINITY;
    for _outer in 0..40 {
        used += al.inner(&mut z, opts.max_iters.saturating_sub(used).max(20));
        if m == 0 {
            break;
        }
        let gv = nlp.constraint_values(&z);
        let v = gv.iter().fold(0.0, |a: f64, &b| a.max(b));
        for j in 0..m {
            al.mu[j] = (al.mu[j] + al.rho * gv[j]).clamp(0.0, 1e12);
        }
        let compl = (0..m).fold(0.0, |a: f64, j| a.max((al.mu[j] * gv[j]).abs()));
        if v <= 1e-2 * opts.feas_tol && compl <= 1e-2 * opts.tol {
            break;
        }
        if v > 0.25 * prev_v {
            al.rho = (al.rho * 10.0).min(1e12);
        }
        prev_v = v;
    }
    let mut res = finish(nlp, bounds, z, al.mu, false);
    if let Some(p) = polish(nlp, bounds, &res, opts) {
        res = p;
    }
    res
}

fn finish(nlp: &Nlp, bounds: &[(f64, f64)], z: Vec<f64>, multipliers: Vec<f64>, polished: bool) -> NlpResult {
    let r = nlp.lagrangian_grad(&z, &multipliers);
    let mut stationarity: f64 = 0.0;
    let mut at_bound = false;
    for (k, &i) in nlp.free.iter().enumerate() {
        let (lo, hi) = bounds[k];
        let at_lo = z[i] <= lo;
        let at_hi = z[i] >= hi;
        at_bound |= at_lo || at_hi;
        let ri = if at_lo {
            (-r[k]).max(0.0)
        } else if at_hi {
            r[k].max(0.0)
        } else {
            r[k].abs()
        };
        stationarity = stationarity.max(ri);
    }
    let gv = nlp.constraint_values(&z);
    for (j, l) in multipliers.iter().enumerate() {
        stationarity = stationarity.max((l * gv[j]).abs());
    }
    NlpResult {
        f: nlp.f.eval(&z),
        violation: gv.iter().fold(0.0, |a: f64, &b| a.max(b)),
        z,
        multipliers,
        stationarity,
        at_bound,
        polished,
    }
}

/// Newton on `∇f + Σ_{S} λ_j ∇g_j = 0, g_S = 0` for each candidate active set
/// `S`; keeps the best regular solution that stays feasible and nearby.
fn polish(nlp: &Nlp, bounds: &[(f64, f64)], base: &NlpResult, opts: &NlpOptions) -> Option<NlpResult> {
    if base.at_bound {
        return None;
    }
    let n = nlp.n();
    let gv = nlp.constraint_values(&base.z);
    let mut cand: Vec<usize> =
        (0..nlp.m()).filter(|&j| gv[j] > -1e-4 || base.multipliers[j] > 1e-8).collect();
    cand.truncate(6);
    let reach = 1e-2 * (1.0 + nlp.free.iter().fold(0.0, |s: f64, &i| s.max(base.z[i].abs())));
    let mut best: Option<NlpResult> = None;
    for sub in all_subsets(cand.len()) {
        let s: Vec<usize> = sub.iter().map(|&a| cand[a]).collect();
        if s.len() > n {
            continue;
        }
        let mut z = base.z.clone();
        let mut lam: Vec<f64> = s.iter().map(|&j| base.multipliers[j]).collect();
        let mut converged = false;
        for _ in 0..40 {
            let mut full = vec![0.0; nlp.m()];
            for (a, &j) in s.iter().enumerate() {
                full[j] = lam[a];
            }
            let mut r = nlp.lagrangian_grad(&z, &full);
            for &j in &s {
                r.push(nlp.g[j].eval(&z));
            }
            let scale = 1.0 + norm_inf(&nlp.objective_grad(&z));
            if norm_inf(&r) <= 1e-13 * scale {
                converged = true;
                break;
            }
            let h = nlp.lagrangian_hess(&z, &full);
            let k = s.len();
            let mut jac = vec![vec![0.0; n + k]; n + k];
            for a in 0..n {
                jac[a][..n].copy_from_slice(&h[a]);
            }
            for (c, &j) in s.iter().enumerate() {
                let gg = nlp.constraint_grad(j, &z);
                for a in 0..n {
                    jac[a][n + c] = gg[a];
                    jac[n + c][a] = gg[a];
                }
            }
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let Some(step) = solve_square(&jac, &rhs).or_else(|| lstsq_full_rank(&jac, &rhs)) else { break };
            for (a, &i) in nlp.free.iter().enumerate() {
                z[i] += step[a];
            }
            for c in 0..k {
                lam[c] += step[n + c];
            }
            if !z.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        if !converged || lam.iter().any(|&l| l < -1e-9) {
            continue;
        }
        let moved = nlp.free.iter().fold(0.0, |s: f64, &i| s.max((z[i] - base.z[i]).abs()));
        let inside = nlp.free.iter().enumerate().all(|(k, &i)| z[i] > bounds[k].0 && z[i] < bounds[k].1);
        if moved > reach || !inside || nlp.violation(&z) > 1e-2 * opts.feas_tol {
            continue;
        }
        let f = nlp.f.eval(&z);
        if f > base.f + 1e-6 * (1.0 + base.f.abs()) {
            continue;
        }
        let mut full = vec![0.0; nlp.m()];
        for (a, &j) in s.iter().enumerate() {
            full[j] = lam[a].max(0.0);
        }
        let cand = finish(nlp, bounds, z, full, true);
        if best.as_ref().is_none_or(|b| cand.f < b.f - 1e-12 * (1.0 + b.f.abs())) {
            best = Some(cand);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use alloc::collections::BTreeSet;

    fn layout(vars: &[VarId]) -> (BTreeMap<VarId, usize>, BTreeSet<VarId>) {
        let index = vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        (index, vars.iter().cloned().collect())
    }

    #[test]
    fn lens_minimum_matches_closed_form() {
        // min y1 s.t. y1^2 - y2 - x <= 0, y1^2 + y2 <= 0 at x = 2 → (-1, -1), λ = (1/4, 1/4)
        let vars = [VarId::leader(0), VarId::follower("f1", 0), VarId::follower("f1", 1)];
        let (index, decl) = layout(&vars);
        let f = parse_expr("y.f1.0", &decl).unwrap();
        let g = [
            parse_expr("(+ (^ y.f1.0 2) (neg y.f1.1) (neg x.0))", &decl).unwrap(),
            parse_expr("(+ (^ y.f1.0 2) y.f1.1)", &decl).unwrap(),
        ];
        let nlp = Nlp::build(&f, &g, &vars[1..], &index).unwrap();
        let r = minimize(&nlp, &[2.0, 0.3, -0.2], &[(-10.0, 10.0); 2], &NlpOptions::default());
        assert!(r.polished);
        assert!((r.z[1] + 1.0).abs() < 1e-12 && (r.z[2] + 1.0).abs() < 1e-12, "{:?}", r.z);
        assert!((r.multipliers[0] - 0.25).abs() < 1e-12 && (r.multipliers[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_quadratic() {
        let vars = [VarId::follower("a", 0), VarId::follower("a", 1)];
        let (index, decl) = layout(&vars);
        let f = parse_expr("(+ (^ (+ y.a.0 -1) 2) (^ (+ y.a.1 2) 2) (* y.a.0 y.a.1))", &decl).unwrap();
        let nlp = Nlp::build(&f, &[], &vars, &index).unwrap();
        let r = minimize(&nlp, &[5.0, 5.0], &[(-10.0, 10.0); 2], &NlpOptions::default());
        // ∇ = (2(y0-1) + y1, 2(y1+2) + y0) = 0 → y0 = 8/3, y1 = -10/3
        assert!((r.z[0] - 8.0 / 3.0).abs() < 1e-10 && (r.z[1] + 10.0 / 3.0).abs() < 1e-10);
        assert!(r.stationarity < 1e-10);
    }

    #[test]
    fn linear_objective_runs_to_box() {
        let vars = [VarId::follower("a", 0)];
        let (index, decl) = layout(&vars);
        let f = parse_expr("(neg y.a.0)", &decl).unwrap();
        let g = [parse_expr("(neg (^ y.a.0 2))", &decl).unwrap()];
        let nlp = Nlp::build(&f, &g, &vars, &index).unwrap();
        let r = minimize(&nlp, &[0.0], &[(-10.0, 10.0)], &NlpOptions::default());
        assert!(r.at_bound);
        assert_eq!(r.z[0], 10.0);
    }

    #[test]
    fn degenerate_point_feasible_set() {
        // feasible set {(0,0)} at x = 0: AL approaches it without multipliers.
        let vars = [VarId::leader(0), VarId::follower("f1", 0), VarId::follower("f1", 1)];
        let (index, decl) = layout(&vars);
        let f = parse_expr("y.f1.0", &decl).unwrap();
        let g = [
            parse_expr("(+ (^ y.f1.0 2) (neg y.f1.1) (neg x.0))", &decl).unwrap(),
            parse_expr("(+ (^ y.f1.0 2) y.f1.1)", &decl).unwrap(),
        ];
        let nlp = Nlp::build(&f, &g, &vars[1..], &index).unwrap();
        let r = minimize(&nlp, &[0.0, 1.0, 1.0], &[(-10.0, 10.0); 2], &NlpOptions::default());
        assert!(r.violation <= 1e-8, "{r:?}");
        assert!(r.z[1].abs() < 1e-3 && r.z[2].abs() < 1e-3, "{r:?}");
    }
}
