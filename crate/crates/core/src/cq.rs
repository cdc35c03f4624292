//! Constraint qualifications of a follower's feasible set: Slater's
//! condition, constant rank (CRCQ), and the joint conditions on `(x, y^f)`
//! under which local and global solutions transfer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{classify_convexity, CompiledPoly, Convexity, Expr, VarId};
use crate::linalg::{convex_quadratic_min, is_psd, rank, Matrix};
use crate::nep::{fix_leader, Game, NepError};
use crate::report::{Finding, Status};
use crate::sampling::{probe_points, rng, uniform_in_ball};
use crate::solver::{minimize, Nlp};

/// Strictness margin for a Slater witness.
pub const SLATER_MARGIN: f64 = 1e-10;
/// Slack below zero tolerated by the dual certificate of Slater failure.
pub const DUAL_SLACK: f64 = 1e-12;
const SIMPLEX_RESOLUTION: usize = 24;
const EPIGRAPH_STARTS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum SlaterVerdict {
    Holds { witness: Vec<f64> },
    FailsCertified { reason: String },
    Unknown { note: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlaterReport {
    pub follower: String,
    pub x: Vec<f64>,
    pub verdict: SlaterVerdict,
    /// `max_j g_j` at `point`, the best point the search found.
    pub max_value: f64,
    pub point: Vec<f64>,
    /// Every constraint was certified convex in the follower's variables.
    pub convex: bool,
}

impl SlaterReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, SlaterVerdict::Holds { .. })
    }

    pub fn status(&self) -> Status {
        match self.verdict {
            SlaterVerdict::Holds { .. } => Status::Holds,
            SlaterVerdict::FailsCertified { .. } => Status::Fails,
            SlaterVerdict::Unknown { .. } => Status::Unknown,
        }
    }
}

/// Constraint pieces `g_j(y) = ½ yᵀ H_j y + c_jᵀ y + d_j` at fixed `x`, when
/// every constraint has degree at most 2 in the follower's variables.
pub fn quadratic_pieces(game: &Game, f: usize, x: &[f64]) -> Option<Vec<(Matrix, Vec<f64>, f64)>> {
    let p = &game.players[f];
    let fp = &game.problem.followers[f];
    if fp.constraints.iter().any(|g| g.to_polynomial().degree_in(&p.vars) > 2) {
        return None;
    }
    let mut z = x.to_vec();
    z.resize(game.nx + game.ny, 0.0);
    let n = p.vars.len();
    Some(
        (0..p.nlp.m())
            .map(|j| {
                let h: Matrix = (0..n).map(|a| (0..n).map(|b| p.nlp.g_hess[j][a][b].eval(&z)).collect()).collect();
                (h, p.nlp.constraint_grad(j, &z), p.nlp.g[j].eval(&z))
            })
            .collect(),
    )
}

fn compositions(total: usize, parts: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if parts == 1 {
        cur.push(total);
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for k in 0..=total {
        cur.push(k);
        compositions(total - k, parts - 1, out, cur);
        cur.pop();
    }
}

/// Best lower bound `max_μ min_y Σ μ_j g_j(x, y)` over a grid on the weight
/// simplex, for convex quadratic constraints. Since `max_j g_j ≥ Σ μ_j g_j`
/// pointwise, a bound `q ≥ 0` rules out strictly feasible points and `q > 0`
/// rules out feasible points.
pub fn dual_bound(game: &Game, f: usize, x: &[f64]) -> Option<(f64, Vec<f64>)> {
    let pieces = quadratic_pieces(game, f, x)?;
    let m = pieces.len();
    if m == 0 || !pieces.iter().all(|(h, _, _)| is_psd(h, 1e-12)) {
        return None;
    }
    let n = game.players[f].vars.len();
    let resolution = if m <= 6 { SIMPLEX_RESOLUTION } else { 1 };
    let mut weights = Vec::new();
    compositions(resolution, m, &mut weights, &mut Vec::new());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for w in weights {
        let mu: Vec<f64> = w.iter().map(|&k| k as f64 / resolution as f64).collect();
        let mut h = vec![vec![0.0; n]; n];
        let mut c = vec![0.0; n];
        let mut d = 0.0;
        for (j, (hj, cj, dj)) in pieces.iter().enumerate() {
            for a in 0..n {
                c[a] += mu[j] * cj[a];
                for b in 0..n {
                    h[a][b] += mu[j] * hj[a][b];
                }
            }
            d += mu[j] * dj;
        }
        let q = convex_quadratic_min(&h, &c).map_or(f64::NEG_INFINITY, |(v, _)| v + d);
        if best.as_ref().is_none_or(|(b, _)| q > *b) {
            best = Some((q, mu));
        }
    }
    best
}

/// Epigraph search `min s s.t. g_j(x, y) ≤ s` over the variables `free`
/// (a subset of the game's layout), from the `EPIGRAPH_STARTS` best probes.
fn minimize_max(game: &Game, constraints: &[Expr], free: &[VarId], base: &[f64], bounds: &[(f64, f64)], probes: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let s = VarId::new("s", 0);
    let mut index = game.index.clone();
    let sp = game.nx + game.ny;
    index.insert(s.clone(), sp);
    let pos: Vec<usize> = free.iter().map(|v| index[v]).collect();
    let compiled: Vec<CompiledPoly> =
        constraints.iter().map(|g| CompiledPoly::compile(g, &index).expect("scoped")).collect();
    let max_at = |pt: &[f64]| -> f64 {
        let mut z = base.to_vec();
        z.push(0.0);
        for (k, &i) in pos.iter().enumerate() {
            z[i] = pt[k];
        }
        compiled.iter().map(|g| g.eval(&z)).fold(f64::NEG_INFINITY, f64::max)
    };
    let mut ranked: Vec<(f64, Vec<f64>)> = probes.iter().map(|p| (max_at(p), p.clone())).collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
    let mut best = ranked.first().cloned().unwrap_or((f64::INFINITY, vec![0.0; free.len()]));
    let shifted: Vec<Expr> = constraints.iter().map(|g| Expr::Sum(vec![g.clone(), Expr::Neg(alloc::boxed::Box::new(Expr::Var(s.clone())))])).collect();
    let mut vars = free.to_vec();
    vars.push(s.clone());
    let nlp = Nlp::build(&Expr::Var(s), &shifted, &vars, &index).expect("scoped");
    let mut bnds = bounds.to_vec();
    bnds.push((-1e6, 1e6));
    for (v0, p0) in ranked.iter().take(EPIGRAPH_STARTS) {
        let mut z = base.to_vec();
        z.push(v0 + 1.0);
        for (k, &i) in pos.iter().enumerate() {
            z[i] = p0[k];
        }
        let res = minimize(&nlp, &z, &bnds, &game.options());
        let pt: Vec<f64> = pos.iter().map(|&i| res.z[i]).collect();
        let v = max_at(&pt);
        if v < best.0 {
            best = (v, pt);
        }
    }
    best
}

pub fn check_slater(game: &Game, f: usize, x: &[f64]) -> SlaterReport {
    check_slater_with(game, f, x, game.cfg.search_box, 64)
}

/// Slater's condition for follower `f` at `x`: a point with every
/// constraint strictly negative.
pub fn check_slater_with(game: &Game, f: usize, x: &[f64], search_box: (f64, f64), samples: usize) -> SlaterReport {
    let p = &game.players[f];
    let fp = &game.problem.followers[f];
    let n = p.vars.len();
    let fixed: Vec<Expr> = fp.constraints.iter().map(|g| fix_leader(g, x)).collect();
    let boxes = vec![search_box; n];
    let convex = fixed.iter().all(|g| {
        classify_convexity(g, &p.vars, &boxes, samples.max(1)).is_ok_and(|c| c == Convexity::ConvexCertified)
    });
    let mut report = SlaterReport {
        follower: p.id.clone(),
        x: x.to_vec(),
        verdict: SlaterVerdict::Holds { witness: vec![0.0; n] },
        max_value: f64::NEG_INFINITY,
        point: vec![0.0; n],
        convex,
    };
    if fixed.is_empty() {
        return report;
    }
    let mut base = x.to_vec();
    base.resize(game.nx + game.ny, 0.0);
    let mut probes = probe_points(&boxes, samples.max(1));
    probes.push(vec![0.0; n]);
    let (value, point) = minimize_max(game, &fp.constraints, &p.vars, &base, &boxes, &probes);
    report.max_value = value;
    report.point = point.clone();
    report.verdict = if value < -SLATER_MARGIN {
        SlaterVerdict::Holds { witness: point }
    } else {
        match dual_bound(game, f, x) {
            Some((q, mu)) if q >= -DUAL_SLACK => SlaterVerdict::FailsCertified {
                reason: format!(
                    "weighted constraint sum with weights {mu:?} has global minimum {q:.3e} >= 0, so no point is strictly feasible"
                ),
            },
            _ if !convex => SlaterVerdict::Unknown { note: String::from("constraints not certified convex") },
            _ => SlaterVerdict::Unknown {
                note: format!("best max constraint value {value:.3e}, no dual certificate"),
            },
        }
    };
    report
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CqError {
    #[error("point violates follower {follower}'s constraints by {violation:.3e}")]
    Infeasible { follower: String, violation: f64 },
    #[error(transparent)]
    Nep(#[from] NepError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CrcqVerdict {
    /// No rank change was sampled; this cannot certify the condition.
    ConsistentWithCrcq,
    ViolationWitness { subset: Vec<usize>, point1: Vec<f64>, point2: Vec<f64>, rank1: usize, rank2: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrcqReport {
    pub follower: String,
    /// `(x, y^f)`.
    pub point: Vec<f64>,
    pub active: Vec<usize>,
    /// Rank of each nonempty active subset's gradient matrix at the point.
    pub ranks: Vec<(Vec<usize>, usize)>,
    /// Smallest and largest sampled rank per subset, in the same order.
    pub sampled: Vec<(usize, usize)>,
    pub verdict: CrcqVerdict,
}

/// Gradient matrix (rows: follower variables, columns: `subset`) at `(x, y^f)`.
pub fn gradient_matrix(game: &Game, f: usize, xy: &[f64], subset: &[usize]) -> Matrix {
    let p = &game.players[f];
    let mut z = vec![0.0; game.nx + game.ny];
    z[..game.nx].copy_from_slice(&xy[..game.nx]);
    game.set_own(f, &mut z, &xy[game.nx..]);
    let cols: Vec<Vec<f64>> = subset.iter().map(|&j| p.nlp.constraint_grad(j, &z)).collect();
    (0..p.vars.len()).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}

/// Active constraint indices of follower `f` at `(x, y^f)`, with the largest
/// constraint value.
pub fn active_set(game: &Game, f: usize, x: &[f64], yf: &[f64]) -> (Vec<usize>, f64) {
    let p = &game.players[f];
    let mut z = x.to_vec();
    z.resize(game.nx + game.ny, 0.0);
    game.set_own(f, &mut z, yf);
    let gv = p.nlp.constraint_values(&z);
    let active = (0..gv.len()).filter(|&j| gv[j].abs() <= game.cfg.activity_tol).collect();
    (active, gv.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
}

/// Compare the rank of every active subset's gradient matrix at the point
/// with its rank at `samples` points of the `radius` ball in `(x, y^f)`.
pub fn check_crcq(game: &Game, f: usize, x: &[f64], yf: &[f64], radius: f64, samples: usize, seed: u64) -> Result<CrcqReport, CqError> {
    game.check_x(x)?;
    let p = &game.players[f];
    if yf.len() != p.vars.len() {
        return Err(NepError::Dimension { what: "follower block", want: p.vars.len(), got: yf.len() }.into());
    }
    let (active, worst) = active_set(game, f, x, yf);
    if worst > game.cfg.feas_tol {
        return Err(CqError::Infeasible { follower: p.id.clone(), violation: worst });
    }
    let mut point = x.to_vec();
    point.extend_from_slice(yf);
    let subsets: Vec<Vec<usize>> = crate::linalg::all_subsets(active.len())
        .into_iter()
        .skip(1)
        .map(|s| s.iter().map(|&k| active[k]).collect())
        .collect();
    let tol = game.cfg.rank_tol;
    let ranks: Vec<(Vec<usize>, usize)> =
        subsets.iter().map(|s| (s.clone(), rank(&gradient_matrix(game, f, &point, s), tol))).collect();
    let mut sampled: Vec<(usize, usize)> = ranks.iter().map(|(_, r)| (*r, *r)).collect();
    let mut verdict = CrcqVerdict::ConsistentWithCrcq;
    let mut r = rng(seed);
    for _ in 0..samples {
        let q = uniform_in_ball(&mut r, &point, radius);
        for (k, (s, r0)) in ranks.iter().enumerate() {
            let rq = rank(&gradient_matrix(game, f, &q, s), tol);
            sampled[k].0 = sampled[k].0.min(rq);
            sampled[k].1 = sampled[k].1.max(rq);
            if rq != *r0 && verdict == CrcqVerdict::ConsistentWithCrcq {
                verdict = CrcqVerdict::ViolationWitness {
                    subset: s.clone(),
                    point1: point.clone(),
                    point2: q.clone(),
                    rank1: *r0,
                    rank2: rq,
                };
            }
        }
    }
    Ok(CrcqReport { follower: p.id.clone(), point, active, ranks, sampled, verdict })
}

/// Two points whose midpoint value exceeds the average of their values.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointWitness {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mid_value: f64,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvenssonReport {
    pub follower: String,
    /// (a) objective convex in `y^f` for every `x`.
    pub objective_convex: Finding,
    /// (b) `max_j g_j` jointly convex in `(x, y^f)`.
    pub jointly_convex: Finding,
    pub joint_witness: Option<MidpointWitness>,
    /// (c) some `(x, y^f)` with every constraint strictly negative.
    pub strictly_feasible: Finding,
    pub strict_witness: Option<Vec<f64>>,
}

/// Largest constraint value of follower `f` at `(x, y^f)`.
pub fn max_constraint_at(game: &Game, f: usize, xy: &[f64]) -> f64 {
    let mut z = vec![0.0; game.nx + game.ny];
    z[..game.nx].copy_from_slice(&xy[..game.nx]);
    game.set_own(f, &mut z, &xy[game.nx..]);
    game.max_g(f, &z)
}

fn objective_convex_for_all_x(game: &Game, f: usize, bx: (f64, f64), samples: usize) -> Finding {
    let p = &game.players[f];
    let boxes = vec![bx; p.vars.len()];
    let rest: Vec<VarId> = p.objective.vars().into_iter().filter(|v| !p.vars.contains(v)).collect();
    let hess_free = p.objective.hessian(&p.vars).iter().flatten().all(|h| !h.simplify().mentions_any(&rest));
    if hess_free {
        let e = p.objective.substitute(&|v| if rest.contains(v) { Some(Expr::Const(0.0)) } else { None });
        return match classify_convexity(&e, &p.vars, &boxes, samples) {
            Ok(Convexity::ConvexCertified) => Finding::holds("Hessian in own variables is constant PSD"),
            Ok(Convexity::NonconvexWitness(w)) => Finding::fails(format!("indefinite Hessian at {w}")),
            Ok(Convexity::Unknown) => Finding::unknown("sampled Hessians PSD; not certified"),
            Err(e) => Finding::unknown(format!("{e}")),
        };
    }
    for pt in probe_points(&vec![bx; rest.len()], samples) {
        let e = p.objective.substitute(&|v| rest.iter().position(|o| o == v).map(|k| Expr::Const(pt[k])));
        if let Ok(Convexity::NonconvexWitness(w)) = classify_convexity(&e, &p.vars, &boxes, samples) {
            return Finding::fails(format!("indefinite Hessian at {w} with other variables at {pt:?}"));
        }
    }
    Finding::unknown("Hessian depends on other variables; no violation sampled")
}

/// Joint conditions on `(x, y^f)` over the coordinate box `bx`, per follower.
pub fn check_svensson(game: &Game, bx: (f64, f64), samples: usize) -> Vec<SvenssonReport> {
    let leader = &game.problem.leader;
    let xbox = match leader.bounds {
        Some((lo, hi)) => (lo.max(bx.0), hi.min(bx.1)),
        None => bx,
    };
    let mut out = Vec::with_capacity(game.players.len());
    for (f, p) in game.players.iter().enumerate() {
        let fp = &game.problem.followers[f];
        let objective_convex = objective_convex_for_all_x(game, f, bx, samples.max(1));
        if fp.constraints.is_empty() {
            out.push(SvenssonReport {
                follower: p.id.clone(),
                objective_convex,
                jointly_convex: Finding::holds("no constraints"),
                joint_witness: None,
                strictly_feasible: Finding::holds("no constraints"),
                strict_witness: None,
            });
            continue;
        }
        let mut vars = leader.vars();
        vars.extend(p.vars.iter().cloned());
        let mut boxes = vec![xbox; game.nx];
        boxes.extend(vec![bx; p.vars.len()]);
        let certified = fp.constraints.iter().all(|g| {
            classify_convexity(g, &vars, &boxes, samples.max(1)).is_ok_and(|c| c == Convexity::ConvexCertified)
        });
        let probes = probe_points(&boxes, samples.max(2));
        let mut joint_witness = None;
        let jointly_convex = if certified {
            Finding::holds("every constraint is jointly convex, so their maximum is")
        } else {
            'scan: for (i, u) in probes.iter().enumerate() {
                for v in &probes[i + 1..] {
                    let mid: Vec<f64> = u.iter().zip(v).map(|(a, b)| 0.5 * (a + b)).collect();
                    let gm = max_constraint_at(game, f, &mid);
                    let avg = 0.5 * (max_constraint_at(game, f, u) + max_constraint_at(game, f, v));
                    if gm > avg + 1e-10 {
                        joint_witness = Some(MidpointWitness { u: u.clone(), v: v.clone(), mid_value: gm, average: avg });
                        break 'scan;
                    }
                }
            }
            match &joint_witness {
                Some(w) => Finding::fails(format!(
                    "midpoint of {:?} and {:?} has value {:.3e} above the average {:.3e}",
                    w.u, w.v, w.mid_value, w.average
                )),
                None => Finding::unknown("not certified; no midpoint violation sampled"),
            }
        };
        let leader_ok = |xy: &[f64]| leader.is_feasible(&xy[..game.nx], game.cfg.feas_tol);
        let mut strict_witness = probes
            .iter()
            .filter(|q| leader_ok(q))
            .map(|q| (max_constraint_at(game, f, q), q.clone()))
            .filter(|(v, _)| *v < -SLATER_MARGIN)
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .map(|(_, q)| q);
        if strict_witness.is_none() && leader.constraints.is_empty() {
            let base = vec![0.0; game.nx + game.ny];
            let (v, q) = minimize_max(game, &fp.constraints, &vars, &base, &boxes, &probes);
            if v < -SLATER_MARGIN {
                strict_witness = Some(q);
            }
        }
        let strictly_feasible = match &strict_witness {
            Some(q) => Finding::holds(format!("strictly feasible at {q:?}")),
            None => Finding::unknown("no strictly feasible pair found"),
        };
        out.push(SvenssonReport {
            follower: p.id.clone(),
            objective_convex,
            jointly_convex,
            joint_witness,
            strictly_feasible,
            strict_witness,
        });
    }
    out
}

/// Rank of each follower's active gradient matrix, keyed by follower id.
pub fn active_ranks(game: &Game, x: &[f64], y: &[f64]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    let mut z = x.to_vec();
    z.extend_from_slice(y);
    for (f, p) in game.players.iter().enumerate() {
        let yf = game.own(f, &z);
        let (active, _) = active_set(game, f, x, &yf);
        let mut xy = x.to_vec();
        xy.extend_from_slice(&yf);
        out.insert(p.id.clone(), rank(&gradient_matrix(game, f, &xy, &active), game.cfg.rank_tol));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::corpus::builtin_slmfg;

    #[test]
    fn slater_on_lens() {
        let p = builtin_slmfg("ex1");
        let g = Game::new(&p, &Config::default()).unwrap();
        let r = check_slater(&g, 0, &[1.0]);
        assert!(r.holds());
        assert!(r.max_value < -0.4);
        let r = check_slater(&g, 0, &[0.0]);
        assert!(matches!(r.verdict, SlaterVerdict::FailsCertified { .. }), "{r:?}");
        let r = check_slater(&g, 0, &[-0.5]);
        assert!(matches!(r.verdict, SlaterVerdict::FailsCertified { .. }), "{r:?}");
    }

    #[test]
    fn slater_on_circles() {
        let p = builtin_slmfg("ex4");
        let g = Game::new(&p, &Config::default()).unwrap();
        assert!(check_slater(&g, 0, &[0.0]).holds());
    }

    #[test]
    fn crcq_on_touching_circles() {
        let p = builtin_slmfg("ex4");
        let g = Game::new(&p, &Config::default()).unwrap();
        let r = check_crcq(&g, 0, &[0.0], &[0.0, 0.0], 1e-2, 64, 0).unwrap();
        assert_eq!(r.active, vec![0, 1]);
        match r.verdict {
            CrcqVerdict::ViolationWitness { subset, rank1, rank2, .. } => {
                assert_eq!(subset, vec![0, 1]);
                assert_eq!((rank1, rank2), (1, 2));
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn crcq_on_linear_constraints() {
        let p = builtin_slmfg("ex3");
        let g = Game::new(&p, &Config::default()).unwrap();
        let r = check_crcq(&g, 0, &[0.0], &[1.0], 1e-2, 64, 0).unwrap();
        assert_eq!(r.active, vec![0, 1]);
        assert_eq!(r.verdict, CrcqVerdict::ConsistentWithCrcq);
        let r = check_crcq(&g, 0, &[0.0], &[0.0], 1e-2, 8, 0).unwrap();
        assert!(r.active.is_empty() && r.ranks.is_empty());
        assert!(check_crcq(&g, 0, &[0.0], &[2.0], 1e-2, 8, 0).is_err());
    }

    #[test]
    fn svensson_conditions() {
        let p = builtin_slmfg("ex2");
        let g = Game::new(&p, &Config::default()).unwrap();
        let r = check_svensson(&g, (-1.0, 1.0), 32);
        assert_eq!(r[0].jointly_convex.status, Status::Fails);
        assert_eq!(r[0].strictly_feasible.status, Status::Holds);
        let p = builtin_slmfg("ex3");
        let g = Game::new(&p, &Config::default()).unwrap();
        let r = check_svensson(&g, (-1.0, 1.0), 32);
        for s in &r {
            assert_eq!(s.objective_convex.status, Status::Holds);
            assert_eq!(s.jointly_convex.status, Status::Holds);
            assert_eq!(s.strictly_feasible.status, Status::Holds);
        }
    }
}
