//! KKT reformulation of a game: the leader objective over `(x, y, λ)` with
//! per-follower stationarity, feasibility, sign and complementarity.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{multiplier_block, BlockEnv, CompiledPoly, Expr, VarId};
use crate::linalg::{box_feasible_point, norm_inf, Matrix};
use crate::model::SlmfgProblem;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MpccError {
    #[error("{what} has {got} entries, expected {want}")]
    Dimension { what: &'static str, want: usize, got: usize },
}

/// The single-level program. Multiplier block `l.<id>` has one entry per
/// constraint of follower `id`; followers without constraints get no block.
#[derive(Clone, Debug, PartialEq)]
pub struct MpccProblem {
    pub source: SlmfgProblem,
    /// Same tree as the leader objective.
    pub objective: Expr,
    /// `(follower id, p^f)` per follower, in follower order.
    pub multipliers: Vec<(String, usize)>,
    /// `∇_{y^f} F^f + Σ_j λ_j ∇_{y^f} g_j`, one entry per own variable.
    pub stationarity: Vec<Vec<Expr>>,
    /// `g^f_j ≤ 0`.
    pub feasibility: Vec<Vec<Expr>>,
    /// `⟨λ^f, g^f⟩ = 0`, one scalar per follower.
    pub complementarity: Vec<Expr>,
}

/// Violations of the KKT system, all in the ∞-norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
    pub sign: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn total(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.sign).max(self.complementarity)
    }
}

pub fn build_mpcc(p: &SlmfgProblem) -> MpccProblem {
    let mut multipliers = Vec::with_capacity(p.followers.len());
    let mut stationarity = Vec::with_capacity(p.followers.len());
    let mut feasibility = Vec::with_capacity(p.followers.len());
    let mut complementarity = Vec::with_capacity(p.followers.len());
    for fp in &p.followers {
        let block = multiplier_block(&fp.id);
        let lam: Vec<Expr> = (0..fp.constraints.len()).map(|j| Expr::Var(VarId::new(block.clone(), j))).collect();
        let rows = fp
            .vars()
            .iter()
            .map(|v| {
                let mut terms = vec![fp.objective.diff(v)];
                for (l, g) in lam.iter().zip(&fp.constraints) {
                    terms.push(Expr::Product(vec![l.clone(), g.diff(v)]));
                }
                Expr::Sum(terms).simplify()
            })
            .collect();
        let comp = Expr::Sum(lam.iter().zip(&fp.constraints).map(|(l, g)| Expr::Product(vec![l.clone(), g.clone()])).collect());
        multipliers.push((fp.id.clone(), fp.constraints.len()));
        stationarity.push(rows);
        feasibility.push(fp.constraints.clone());
        complementarity.push(comp.simplify());
    }
    MpccProblem {
        source: p.clone(),
        objective: p.leader.objective.clone(),
        multipliers,
        stationarity,
        feasibility,
        complementarity,
    }
}

impl MpccProblem {
    pub fn lambda_dim(&self) -> usize {
        self.multipliers.iter().map(|(_, p)| p).sum()
    }

    /// Offsets of each follower's block in the concatenated `λ` vector.
    pub fn lambda_offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for (_, p) in &self.multipliers {
            out.push(out.last().unwrap() + p);
        }
        out
    }

    pub fn lambda_blocks(&self) -> Vec<String> {
        self.multipliers.iter().map(|(id, _)| multiplier_block(id)).collect()
    }

    /// All variables: `x`, then follower blocks, then multiplier blocks.
    pub fn vars(&self) -> Vec<VarId> {
        let mut v = self.source.all_vars();
        for (id, p) in &self.multipliers {
            v.extend((0..*p).map(|j| VarId::new(multiplier_block(id), j)));
        }
        v
    }

    /// Total point length `n_x + n_y + n_λ`.
    pub fn dim(&self) -> usize {
        self.source.leader.dim + self.source.follower_dim() + self.lambda_dim()
    }

    /// Split a flat `(x, y, λ)` vector.
    pub fn split<'a>(&self, point: &'a [f64]) -> Result<(&'a [f64], &'a [f64], &'a [f64]), MpccError> {
        if point.len() != self.dim() {
            return Err(MpccError::Dimension { what: "point", want: self.dim(), got: point.len() });
        }
        let nx = self.source.leader.dim;
        let ny = self.source.follower_dim();
        Ok((&point[..nx], &point[nx..nx + ny], &point[nx + ny..]))
    }

    fn check(&self, x: &[f64], y: &[f64], lam: &[f64]) -> Result<(), MpccError> {
        let want = [self.source.leader.dim, self.source.follower_dim(), self.lambda_dim()];
        for ((what, want), got) in ["x", "y", "lambda"].into_iter().zip(want).zip([x.len(), y.len(), lam.len()]) {
            if want != got {
                return Err(MpccError::Dimension { what, want, got });
            }
        }
        Ok(())
    }

    pub fn leader_objective(&self, x: &[f64], y: &[f64]) -> f64 {
        self.objective.eval(&self.source.env(x, y)).expect("validated problem")
    }
}

pub fn kkt_residual(m: &MpccProblem, x: &[f64], y: &[f64], lam: &[f64]) -> Result<KktResidual, MpccError> {
    m.check(x, y, lam)?;
    let blocks = m.lambda_blocks();
    let off = m.lambda_offsets();
    let mut env: BlockEnv = m.source.env(x, y);
    for (f, b) in blocks.iter().enumerate() {
        env.push(b.as_str(), &lam[off[f]..off[f + 1]]);
    }
    let ev = |e: &Expr| e.eval(&env).expect("validated problem");
    let mut r = KktResidual::default();
    for f in 0..m.multipliers.len() {
        for s in &m.stationarity[f] {
            r.stationarity = r.stationarity.max(ev(s).abs());
        }
        for g in &m.feasibility[f] {
            r.feasibility = r.feasibility.max(ev(g));
        }
        r.complementarity = r.complementarity.max(ev(&m.complementarity[f]).abs());
    }
    r.sign = lam.iter().fold(0.0, |a, &l| a.max(-l));
    Ok(r)
}

/// KKT residual within `tol` and `x` in the leader's feasible set.
pub fn is_mpcc_feasible(m: &MpccProblem, x: &[f64], y: &[f64], lam: &[f64], tol: f64) -> bool {
    match kkt_residual(m, x, y, lam) {
        Ok(r) => r.total() <= tol && m.source.leader.is_feasible(x, tol),
        Err(_) => false,
    }
}

/// Gradients and constraints compiled against the dense `(x, y)` layout, for
/// deciding MPCC membership of many `(x, y)` points quickly.
#[derive(Clone, Debug)]
pub struct KktKernel {
    /// Per follower: `∂F/∂y_i` per own variable.
    obj_grad: Vec<Vec<CompiledPoly>>,
    /// Per follower: `g_j`.
    g: Vec<Vec<CompiledPoly>>,
    /// Per follower: `∂g_j/∂y_i`, indexed `[j][i]`.
    g_grad: Vec<Vec<Vec<CompiledPoly>>>,
    lambda_offsets: Vec<usize>,
}

impl KktKernel {
    pub fn new(m: &MpccProblem) -> Self {
        let index: BTreeMap<VarId, usize> =
            m.source.all_vars().into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        let c = |e: &Expr| CompiledPoly::compile(e, &index).expect("validated problem");
        let mut obj_grad = Vec::new();
        let mut g = Vec::new();
        let mut g_grad = Vec::new();
        for fp in &m.source.followers {
            let vars = fp.vars();
            obj_grad.push(vars.iter().map(|v| c(&fp.objective.diff(v))).collect());
            g.push(fp.constraints.iter().map(c).collect());
            g_grad.push(fp.constraints.iter().map(|gj| vars.iter().map(|v| c(&gj.diff(v))).collect()).collect());
        }
        KktKernel { obj_grad, g, g_grad, lambda_offsets: m.lambda_offsets() }
    }

    /// Largest constraint value over all followers at the dense point `xy`.
    pub fn max_g(&self, xy: &[f64]) -> f64 {
        self.g.iter().flatten().map(|g| g.eval(xy)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// A multiplier vector in the box `lo ≤ λ ≤ hi` completing `(x, y)` to an
    /// MPCC-feasible point, or `None`. Constraints with `g < −activity_tol`
    /// get `λ_j = 0`; stationarity must hold within `tol`.
    pub fn complete(&self, xy: &[f64], lo: &[f64], hi: &[f64], activity_tol: f64, tol: f64) -> Option<Vec<f64>> {
        let mut out = vec![0.0; lo.len()];
        for f in 0..self.g.len() {
            let (o0, o1) = (self.lambda_offsets[f], self.lambda_offsets[f + 1]);
            let gv: Vec<f64> = self.g[f].iter().map(|g| g.eval(xy)).collect();
            if gv.iter().any(|&v| v > tol) {
                return None;
            }
            let mut flo = lo[o0..o1].to_vec();
            let mut fhi = hi[o0..o1].to_vec();
            for (j, &v) in gv.iter().enumerate() {
                if v < -activity_tol {
                    if flo[j] > 0.0 {
                        return None;
                    }
                    flo[j] = 0.0;
                    fhi[j] = 0.0;
                }
            }
            let n = self.obj_grad[f].len();
            let a: Matrix = (0..n).map(|i| (0..gv.len()).map(|j| self.g_grad[f][j][i].eval(xy)).collect()).collect();
            let b: Vec<f64> = self.obj_grad[f].iter().map(|d| 0.0 - d.eval(xy)).collect();
            let lam = if gv.is_empty() {
                if norm_inf(&b) > tol {
                    return None;
                }
                Vec::new()
            } else {
                box_feasible_point(&a, &b, &flo, &fhi, tol)?
            };
            if gv.iter().zip(&lam).map(|(g, l)| g * l).sum::<f64>().abs() > tol {
                return None;
            }
            out[o0..o1].copy_from_slice(&lam);
        }
        Some(out)
    }
}
