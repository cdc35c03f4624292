//! Generalized Nash games with group-shared constraints: reduction of one
//! group to a single optimization problem, of several groups to an ordinary
//! Nash game between pseudo-followers, and a grid check of whether the two
//! solution sets agree.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::Config;
use crate::expr::{classify_convexity, Convexity, Expr, VarId, LEADER_BLOCK};
use crate::model::{FollowerProblem, GnepProblem, InvalidProblem, SlmfgProblem};
use crate::nep::fix_leader;
use crate::report::{Finding, Status};
use crate::sampling::{anchored_axis, for_each_product, probe_points};
use crate::expr::CompiledPoly;
#[allow(unused_imports)]
use num_traits::Float;

/// Leader values sampled when a shared constraint's curvature depends on `x`.
const X_SAMPLES: usize = 33;
/// Cap on the profiles enumerated for one coupled component.
const MAX_PROFILES: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GnepError {
    #[error(transparent)]
    Invalid(#[from] InvalidProblem),
    #[error("expected a single group, found {0}")]
    NotSingleGroup(usize),
    #[error("shared constraint {index} of group {group} is not certified jointly convex: {note}")]
    NotJointlyConvex { group: String, index: usize, note: String },
    #[error("x has {got} entries, expected {want}")]
    Dimension { want: usize, got: usize },
}

/// `min objective(vars) s.t. constraints ≤ 0`, with the leader fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct OptProblem {
    pub vars: Vec<VarId>,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
}

/// Joint convexity of one shared constraint in its group's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct JointConvexity {
    pub group: String,
    pub index: usize,
    pub finding: Finding,
}

fn leader_box(g: &GnepProblem, cfg: &Config) -> Vec<(f64, f64)> {
    vec![g.leader.bounds.unwrap_or(cfg.search_box); g.leader.dim]
}

fn member_vars(g: &GnepProblem, group: usize) -> Vec<VarId> {
    g.groups[group]
        .members
        .iter()
        .filter_map(|m| g.followers.iter().find(|f| f.id == *m))
        .flat_map(FollowerProblem::vars)
        .collect()
}

fn classify_at(e: &Expr, x: &[f64], vars: &[VarId], cfg: &Config) -> Result<Convexity, String> {
    let boxes = vec![cfg.search_box; vars.len()];
    classify_convexity(&fix_leader(e, x), vars, &boxes, 64).map_err(|e| format!("{e}"))
}

/// Classify one shared constraint over the whole leader set. Exact when the
/// curvature in the group's variables does not depend on `x`; otherwise
/// sampled over the leader box, where only a witness is conclusive.
pub fn joint_convexity_of(e: &Expr, vars: &[VarId], xbox: &[(f64, f64)], cfg: &Config) -> Finding {
    let leader_free = e.hessian(vars).iter().flatten().all(|h| h.simplify().vars().iter().all(|v| v.block != LEADER_BLOCK));
    let xs = if leader_free { vec![crate::sampling::center(xbox)] } else { probe_points(xbox, X_SAMPLES) };
    let mut unknown = None;
    for x in &xs {
        match classify_at(e, x, vars, cfg) {
            Ok(Convexity::ConvexCertified) => {}
            Ok(Convexity::NonconvexWitness(w)) => {
                return Finding::fails(format!("Hessian not PSD at x = {x:?}, {w}"));
            }
            Ok(Convexity::Unknown) => unknown = Some(format!("sampled Hessians PSD at x = {x:?}, not certified")),
            Err(note) => unknown = Some(note),
        }
    }
    match unknown {
        Some(note) => Finding::unknown(note),
        None if leader_free => Finding::holds("curvature independent of x and PSD"),
        None => Finding::unknown(format!("convex at {} sampled leader values; curvature depends on x", xs.len())),
    }
}

/// Joint-convexity findings for every shared constraint, in group order.
pub fn joint_convexity(g: &GnepProblem, cfg: &Config) -> Vec<JointConvexity> {
    let xbox = leader_box(g, cfg);
    let mut out = Vec::new();
    for (gi, group) in g.groups.iter().enumerate() {
        let vars = member_vars(g, gi);
        for (j, s) in group.shared.iter().enumerate() {
            out.push(JointConvexity {
                group: group.name.clone(),
                index: j,
                finding: joint_convexity_of(s, &vars, &xbox, cfg),
            });
        }
    }
    out
}

fn require_convex(g: &GnepProblem, assume_jointly_convex: bool, cfg: &Config) -> Result<(), GnepError> {
    if assume_jointly_convex {
        return Ok(());
    }
    match joint_convexity(g, cfg).into_iter().find(|j| j.finding.status != Status::Holds) {
        Some(j) => Err(GnepError::NotJointlyConvex { group: j.group, index: j.index, note: j.finding.note }),
        None => Ok(()),
    }
}

fn validated(g: &GnepProblem) -> Result<(), GnepError> {
    let v = g.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(InvalidProblem(v).into())
    }
}

fn sum(terms: Vec<Expr>) -> Expr {
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.into_iter().next().unwrap_or_else(Expr::zero),
        _ => Expr::Sum(terms),
    }
}

/// The group as one pseudo-follower: member blocks in member order, summed
/// objectives, member constraints followed by the shared ones.
fn pseudo_follower(g: &GnepProblem, group: usize) -> FollowerProblem {
    let grp = &g.groups[group];
    let members: Vec<&FollowerProblem> =
        grp.members.iter().filter_map(|m| g.followers.iter().find(|f| f.id == *m)).collect();
    let mut constraints: Vec<Expr> = members.iter().flat_map(|f| f.constraints.iter().cloned()).collect();
    constraints.extend(grp.shared.iter().cloned());
    FollowerProblem {
        id: grp.name.clone(),
        blocks: members.iter().flat_map(|f| f.blocks.iter().cloned()).collect(),
        objective: sum(members.iter().map(|f| f.objective.clone()).collect()),
        constraints,
    }
}

/// A single-group game as one optimization problem at leader decision `x`.
pub fn reduce_rosen_to_opt(
    g: &GnepProblem,
    x: &[f64],
    assume_jointly_convex: bool,
    cfg: &Config,
) -> Result<OptProblem, GnepError> {
    validated(g)?;
    if g.groups.len() != 1 {
        return Err(GnepError::NotSingleGroup(g.groups.len()));
    }
    if x.len() != g.leader.dim {
        return Err(GnepError::Dimension { want: g.leader.dim, got: x.len() });
    }
    require_convex(g, assume_jointly_convex, cfg)?;
    let p = pseudo_follower(g, 0);
    Ok(OptProblem {
        vars: p.vars(),
        objective: fix_leader(&p.objective, x),
        constraints: p.constraints.iter().map(|c| fix_leader(c, x)).collect(),
    })
}

/// The grouped game as an ordinary game whose followers are the groups.
/// The leader is carried over unchanged.
pub fn reduce_grouped_to_nep(
    g: &GnepProblem,
    assume_jointly_convex: bool,
    cfg: &Config,
) -> Result<SlmfgProblem, GnepError> {
    validated(g)?;
    require_convex(g, assume_jointly_convex, cfg)?;
    Ok(SlmfgProblem {
        leader: g.leader.clone(),
        followers: (0..g.groups.len()).map(|i| pseudo_follower(g, i)).collect(),
    })
}

/// A player on the dense follower layout `[x, y]`.
struct Unit {
    own: Vec<usize>,
    objective: CompiledPoly,
    constraints: Vec<CompiledPoly>,
    /// Positions outside `x` and `own` that the unit reads.
    context: Vec<usize>,
}

fn unit(
    own: Vec<usize>,
    objective: &Expr,
    constraints: &[Expr],
    index: &BTreeMap<VarId, usize>,
    nx: usize,
) -> Unit {
    let compile = |e: &Expr| CompiledPoly::compile(e, index).expect("validated problem");
    let mut reads = BTreeSet::new();
    for e in core::iter::once(objective).chain(constraints) {
        for v in e.vars() {
            let i = index[&v];
            if i >= nx && !own.contains(&i) {
                reads.insert(i);
            }
        }
    }
    Unit {
        objective: compile(objective),
        constraints: constraints.iter().map(compile).collect(),
        context: reads.into_iter().collect(),
        own,
    }
}

impl Unit {
    fn feasible(&self, z: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| c.eval(z) <= tol)
    }

    /// Lowest own objective over own grid points feasible given the rest of `z`.
    fn grid_min(&self, z: &mut [f64], axis: &[f64], tol: f64) -> f64 {
        let saved: Vec<f64> = self.own.iter().map(|&i| z[i]).collect();
        let axes = vec![axis.to_vec(); self.own.len()];
        let mut best = f64::INFINITY;
        for_each_product(&axes, |pt| {
            for (k, &i) in self.own.iter().enumerate() {
                z[i] = pt[k];
            }
            if self.feasible(z, tol) {
                best = best.min(self.objective.eval(z));
            }
        });
        for (k, &i) in self.own.iter().enumerate() {
            z[i] = saved[k];
        }
        best
    }
}

/// Grid profiles at which every unit plays a grid argmin given the others.
/// Units that share no variables are enumerated separately. Returns the
/// profiles (follower part only) and whether a component was too large.
fn grid_equilibria(units: &[Unit], x: &[f64], ny: usize, axis: &[f64], tol: f64) -> (Vec<Vec<f64>>, bool) {
    let nx = x.len();
    // Components: units linked when one reads another's coordinates.
    let mut comp: Vec<usize> = (0..units.len()).collect();
    fn root(c: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while c[r] != r {
            r = c[r];
        }
        c[i] = r;
        r
    }
    for a in 0..units.len() {
        for b in 0..units.len() {
            if a != b && units[a].context.iter().any(|i| units[b].own.contains(i)) {
                let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
                comp[ra] = rb;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..units.len() {
        let r = root(&mut comp, u);
        groups.entry(r).or_default().push(u);
    }
    let mut z = x.to_vec();
    z.resize(nx + ny, 0.0);
    let mut truncated = false;
    // Per component: the joint assignments of its positions.
    let mut parts: Vec<(Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
    for members in groups.values() {
        let pos: Vec<usize> = members.iter().flat_map(|&u| units[u].own.clone()).collect();
        if (axis.len() as f64).powi(pos.len() as i32) > MAX_PROFILES as f64 {
            truncated = true;
            parts.push((pos, Vec::new()));
            continue;
        }
        let mut memo: Vec<BTreeMap<Vec<u64>, f64>> = vec![BTreeMap::new(); members.len()];
        let axes = vec![axis.to_vec(); pos.len()];
        let mut found = Vec::new();
        for_each_product(&axes, |pt| {
            for (k, &i) in pos.iter().enumerate() {
                z[i] = pt[k];
            }
            let ok = members.iter().enumerate().all(|(k, &u)| {
                let un = &units[u];
                if !un.feasible(&z, tol) {
                    return false;
                }
                let key: Vec<u64> = un.context.iter().map(|&i| z[i].to_bits()).collect();
                let min = match memo[k].get(&key) {
                    Some(m) => *m,
                    None => {
                        let m = un.grid_min(&mut z, axis, tol);
                        memo[k].insert(key, m);
                        m
                    }
                };
                un.objective.eval(&z) <= min + 1e-9 * (1.0 + min.abs())
            });
            if ok {
                found.push(pt.to_vec());
            }
        });
        parts.push((pos, found));
    }
    let idx: Vec<Vec<f64>> = parts.iter().map(|(_, f)| (0..f.len()).map(|i| i as f64).collect()).collect();
    let mut out = Vec::new();
    if parts.iter().all(|(_, f)| !f.is_empty()) {
        for_each_product(&idx, |ix| {
            let mut y = vec![0.0; ny];
            for (c, &i) in ix.iter().enumerate() {
                for (k, &p) in parts[c].0.iter().enumerate() {
                    y[p - nx] = parts[c].1[i as usize][k];
                }
            }
            out.push(y);
        });
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    (out, truncated)
}

/// Grid solution sets of the shared-constraint game and of its reduction at
/// one leader decision, compared within one grid step.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub x: Vec<f64>,
    pub step: f64,
    pub grid_box: (f64, f64),
    /// Profiles where each follower is at a grid argmin given the others.
    pub rgnep: Vec<Vec<f64>>,
    /// Profiles where each group is at a grid argmin of the summed objective.
    pub reduced: Vec<Vec<f64>>,
    /// Points of `rgnep` farther than one step from every point of `reduced`.
    pub only_rgnep: Vec<Vec<f64>>,
    pub only_reduced: Vec<Vec<f64>>,
    pub joint_convexity: Vec<JointConvexity>,
    /// Some component exceeded the enumeration cap and was skipped.
    pub truncated: bool,
}

impl EquivalenceReport {
    pub fn coincide(&self) -> bool {
        !self.truncated && self.only_rgnep.is_empty() && self.only_reduced.is_empty()
    }

    /// Whether every shared constraint was certified jointly convex.
    pub fn hypotheses_hold(&self) -> bool {
        self.joint_convexity.iter().all(|j| j.finding.status == Status::Holds)
    }
}

fn uncovered(a: &[Vec<f64>], b: &[Vec<f64>], radius: f64) -> Vec<Vec<f64>> {
    a.iter()
        .filter(|p| !b.iter().any(|q| p.iter().zip(q.iter()).all(|(s, t)| (s - t).abs() <= radius)))
        .cloned()
        .collect()
}

/// Compare grid equilibria of the original game (per follower, shared
/// constraints evaluated at the full profile) with grid equilibria of the
/// reduced game (per group) at `x`. Grid axes are `lo ≤ k·step ≤ hi`.
pub fn check_reduction_equivalence(
    g: &GnepProblem,
    x: &[f64],
    grid_box: (f64, f64),
    step: f64,
    cfg: &Config,
) -> Result<EquivalenceReport, GnepError> {
    validated(g)?;
    if x.len() != g.leader.dim {
        return Err(GnepError::Dimension { want: g.leader.dim, got: x.len() });
    }
    let flat = g.private_game();
    let vars = flat.all_vars();
    let index: BTreeMap<VarId, usize> = vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let nx = g.leader.dim;
    let ny = flat.follower_dim();
    let positions = |f: &FollowerProblem| -> Vec<usize> { f.vars().iter().map(|v| index[v]).collect() };
    let followers: Vec<Unit> = g
        .followers
        .iter()
        .map(|f| {
            let mut cons = f.constraints.clone();
            if let Some(gi) = g.group_of(&f.id) {
                cons.extend(g.groups[gi].shared.iter().cloned());
            }
            unit(positions(f), &f.objective, &cons, &index, nx)
        })
        .collect();
    let reduced = reduce_grouped_to_nep(g, true, cfg)?;
    let groups: Vec<Unit> =
        reduced.followers.iter().map(|p| unit(positions(p), &p.objective, &p.constraints, &index, nx)).collect();
    let axis = anchored_axis(0.0, grid_box.0, grid_box.1, step);
    let (rgnep, t1) = grid_equilibria(&followers, x, ny, &axis, cfg.feas_tol);
    let (red, t2) = grid_equilibria(&groups, x, ny, &axis, cfg.feas_tol);
    let radius = step * (1.0 + 1e-9);
    Ok(EquivalenceReport {
        x: x.to_vec(),
        step,
        grid_box,
        only_rgnep: uncovered(&rgnep, &red, radius),
        only_reduced: uncovered(&red, &rgnep, radius),
        rgnep,
        reduced: red,
        joint_convexity: joint_convexity(g, cfg),
        truncated: t1 || t2,
    })
}
