//! Grid oracles for local and global optimality of game and MPCC points, and
//! executable checks of the transfer theorems between the two problems.
//!
//! Grids are anchored at the point under test and scanned in the ∞-norm ball
//! of the given radius. Verdicts are "no better neighbor found", never a
//! certificate of local optimality.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cq::{check_crcq, check_slater, SlaterVerdict};
use crate::expr::{classify_convexity, Convexity, Expr};
use crate::mpcc::{is_mpcc_feasible, KktKernel, MpccError, MpccProblem};
use crate::multipliers::{multiplier_polytope, MultiplierError};
use crate::nep::{fix_leader, Game, NepError, Verifier};
use crate::report::{Finding, Status};
use crate::sampling::{anchored_axis, for_each_product};

/// Strict improvement needed for a neighbor to count as better.
pub const IMPROVEMENT: f64 = 1e-9;
/// Cap on multiplier combinations tested by one gate.
const MAX_COMBINATIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("base point is not feasible: {0}")]
    InfeasibleBase(String),
    #[error(transparent)]
    Nep(#[from] NepError),
    #[error(transparent)]
    Mpcc(#[from] MpccError),
    #[error(transparent)]
    Multipliers(#[from] MultiplierError),
}

/// Grid scan of the ∞-norm ball of `radius` with spacing `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub radius: f64,
    pub step: f64,
}

impl Ball {
    pub fn new(radius: f64, step: f64) -> Self {
        Ball { radius, step }
    }

    /// Default spacing: fifteen steps per radius.
    pub fn with_radius(radius: f64) -> Self {
        Ball { radius, step: radius / 15.0 }
    }

    fn axes(&self, center: &[f64]) -> Vec<Vec<f64>> {
        center.iter().map(|&c| anchored_axis(c, c - self.radius, c + self.radius, self.step)).collect()
    }
}

impl Default for Ball {
    fn default() -> Self {
        Ball::with_radius(0.15)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocalVerdict {
    NoBetterNeighborFound,
    /// A feasible neighbor whose leader objective is lower by `objective_gap`.
    BetterNeighbor { point: Vec<f64>, objective_gap: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalMinVerdict {
    pub point: Vec<f64>,
    pub ball: Ball,
    pub verdict: LocalVerdict,
    /// Improving candidates whose feasibility was tested.
    pub tested: usize,
}

impl LocalMinVerdict {
    pub fn is_better_neighbor(&self) -> bool {
        matches!(self.verdict, LocalVerdict::BetterNeighbor { .. })
    }
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Follower blocks on the per-coordinate axes that satisfy the follower's own
/// constraints at `x`, in lexicographic order.
fn feasible_blocks(game: &Game, x: &[f64], y_axes: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let mut z = x.to_vec();
    z.resize(game.nx + game.ny, 0.0);
    game.players
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let axes: Vec<Vec<f64>> = p.pos.iter().map(|&i| y_axes[i - game.nx].clone()).collect();
            let mut out = Vec::new();
            for_each_product(&axes, |pt| {
                game.set_own(f, &mut z, pt);
                if p.nlp.violation(&z) <= game.cfg.feas_tol {
                    out.push(pt.to_vec());
                }
            });
            out
        })
        .collect()
}

/// Product of feasible blocks with leader objective below `bound`, in
/// lexicographic order of the concatenated `y`.
fn improving_profiles(game: &Game, x: &[f64], y_axes: &[Vec<f64>], bound: f64) -> Vec<Vec<f64>> {
    let blocks = feasible_blocks(game, x, y_axes);
    let idx: Vec<Vec<f64>> = blocks.iter().map(|b| (0..b.len()).map(|i| i as f64).collect()).collect();
    let mut out = Vec::new();
    let mut z = x.to_vec();
    z.resize(game.nx + game.ny, 0.0);
    for_each_product(&idx, |ix| {
        for (f, &i) in ix.iter().enumerate() {
            game.set_own(f, &mut z, &blocks[f][i as usize]);
        }
        let y = &z[game.nx..];
        if game.problem.leader_objective(x, y) < bound {
            out.push(y.to_vec());
        }
    });
    out
}

/// Equilibria from the solver at `x` that lie within `radius` of `center`.
fn solver_profiles(game: &Game, x: &[f64], center: &[f64], radius: f64, bound: f64) -> Vec<Vec<f64>> {
    match game.solve_nep(x) {
        Ok(sol) => sol
            .equilibria
            .into_iter()
            .map(|c| c.point)
            .filter(|y| dist_inf(y, center) <= radius + 1e-12 && game.problem.leader_objective(x, y) < bound)
            .collect(),
        Err(_) => Vec::new(),
    }
}

fn leader_axes(game: &Game, x: &[f64], ball: &Ball) -> Vec<Vec<f64>> {
    let mut axes = ball.axes(x);
    if let Some((lo, hi)) = game.problem.leader.bounds {
        for a in &mut axes {
            a.retain(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
    axes
}

/// Scan the ball around `(x̄, ȳ)` for a leader-feasible `(x, y)` with `y` an
/// equilibrium at `x` and a strictly lower leader objective. Candidates per
/// `x` are the solver's equilibria in the ball, then the grid profiles.
pub fn is_local_min_slmfg(game: &Game, x: &[f64], y: &[f64], ball: Ball) -> Result<LocalMinVerdict, VerifyError> {
    let problem = game.problem;
    if !problem.leader.is_feasible(x, game.cfg.feas_tol) {
        return Err(VerifyError::InfeasibleBase(format!("x = {x:?} is outside the leader's set")));
    }
    let mut verifier = Verifier::new(game);
    if !verifier.check(x, y, game.cfg.tol)?.is_equilibrium() {
        return Err(VerifyError::InfeasibleBase(format!("y = {y:?} is not an equilibrium at x = {x:?}")));
    }
    let f0 = problem.leader_objective(x, y);
    let bound = f0 - IMPROVEMENT;
    let y_axes = ball.axes(y);
    let mut tested = 0;
    let mut witness = None;
    for_each_product(&leader_axes(game, x, &ball), |xx| {
        if witness.is_some() || !problem.leader.is_feasible(xx, game.cfg.feas_tol) {
            return;
        }
        let mut cands = solver_profiles(game, xx, y, ball.radius, bound);
        cands.extend(improving_profiles(game, xx, &y_axes, bound));
        for yy in cands {
            tested += 1;
            if verifier.check(xx, &yy, game.cfg.tol).is_ok_and(|c| c.is_equilibrium()) {
                let mut pt = xx.to_vec();
                pt.extend_from_slice(&yy);
                witness = Some((pt, f0 - problem.leader_objective(xx, &yy)));
                break;
            }
        }
    });
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    let verdict = match witness {
        Some((point, objective_gap)) => LocalVerdict::BetterNeighbor { point, objective_gap },
        None => LocalVerdict::NoBetterNeighborFound,
    };
    Ok(LocalMinVerdict { point, ball, verdict, tested })
}

/// Scan the ball around `(x̄, ȳ, λ̄)` for an MPCC-feasible point with a
/// strictly lower objective. For each `(x, y)` the multipliers are searched
/// exactly over `[max(0, λ̄ − r), λ̄ + r]`.
pub fn is_local_min_mpcc(
    game: &Game,
    m: &MpccProblem,
    x: &[f64],
    y: &[f64],
    lam: &[f64],
    ball: Ball,
) -> Result<LocalMinVerdict, VerifyError> {
    let cfg = &game.cfg;
    if !is_mpcc_feasible(m, x, y, lam, cfg.mpcc_tol) {
        let r = crate::mpcc::kkt_residual(m, x, y, lam)?;
        return Err(VerifyError::InfeasibleBase(format!("KKT residual {:.3e} at the base point", r.total())));
    }
    let kernel = KktKernel::new(m);
    let lo: Vec<f64> = lam.iter().map(|l| (l - ball.radius).max(0.0)).collect();
    let hi: Vec<f64> = lam.iter().map(|l| l + ball.radius).collect();
    let f0 = m.leader_objective(x, y);
    let bound = f0 - IMPROVEMENT;
    let y_axes = ball.axes(y);
    let mut tested = 0;
    let mut witness = None;
    for_each_product(&leader_axes(game, x, &ball), |xx| {
        if witness.is_some() || !m.source.leader.is_feasible(xx, cfg.feas_tol) {
            return;
        }
        let mut cands = solver_profiles(game, xx, y, ball.radius, bound);
        cands.extend(improving_profiles(game, xx, &y_axes, bound));
        for yy in cands {
            tested += 1;
            let mut xy = xx.to_vec();
            xy.extend_from_slice(&yy);
            if let Some(l) = kernel.complete(&xy, &lo, &hi, cfg.activity_tol, cfg.mpcc_tol) {
                let gap = f0 - m.leader_objective(xx, &yy);
                xy.extend_from_slice(&l);
                witness = Some((xy, gap));
                break;
            }
        }
    });
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    point.extend_from_slice(lam);
    let verdict = match witness {
        Some((point, objective_gap)) => LocalVerdict::BetterNeighbor { point, objective_gap },
        None => LocalVerdict::NoBetterNeighborFound,
    };
    Ok(LocalMinVerdict { point, ball, verdict, tested })
}

/// Box for global grid scans, anchored at `anchor` with spacing `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalGrid {
    pub x_box: (f64, f64),
    pub y_box: (f64, f64),
    pub step: f64,
    /// Grid anchor per `(x, y)` coordinate; zeros when empty.
    pub anchor: Vec<f64>,
    /// Upper bound on each multiplier in MPCC scans.
    pub lambda_max: f64,
    /// Also take the solver's equilibria at every grid `x` as candidates.
    pub solver_candidates: bool,
}

impl GlobalGrid {
    pub fn new(x_box: (f64, f64), y_box: (f64, f64), step: f64) -> Self {
        GlobalGrid { x_box, y_box, step, anchor: Vec::new(), lambda_max: 10.0, solver_candidates: false }
    }

    fn axes(&self, nx: usize, ny: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let a = |i: usize| self.anchor.get(i).copied().unwrap_or(0.0);
        let xs = (0..nx).map(|i| anchored_axis(a(i), self.x_box.0, self.x_box.1, self.step)).collect();
        let ys = (0..ny).map(|i| anchored_axis(a(nx + i), self.y_box.0, self.y_box.1, self.step)).collect();
        (xs, ys)
    }
}

/// Best grid point of a scan, with the number of feasible points met.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalScan {
    /// `(x, y)` (plus `λ` for MPCC scans) of the lowest objective.
    pub best: Option<Vec<f64>>,
    pub value: f64,
    /// Leader grid values that had at least one feasible point.
    pub feasible_x: usize,
}

/// Lowest leader objective over grid `(x, y)` with `y` an equilibrium at `x`.
/// Per `x`, candidates are checked in increasing objective order and the
/// first equilibrium is that `x`'s best.
pub fn grid_global_slmfg(game: &Game, grid: &GlobalGrid) -> GlobalScan {
    let problem = game.problem;
    let (xs, ys) = grid.axes(game.nx, game.ny);
    let mut verifier = Verifier::new(game);
    let mut out = GlobalScan { best: None, value: f64::INFINITY, feasible_x: 0 };
    for_each_product(&xs, |x| {
        if !problem.leader.is_feasible(x, game.cfg.feas_tol) {
            return;
        }
        let mut cands = improving_profiles(game, x, &ys, f64::INFINITY);
        if grid.solver_candidates {
            if let Ok(sol) = game.solve_nep(x) {
                cands.extend(sol.equilibria.into_iter().map(|c| c.point));
            }
        }
        let mut scored: Vec<(f64, Vec<f64>)> = cands.into_iter().map(|y| (problem.leader_objective(x, &y), y)).collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
        for (v, y) in scored {
            if v >= out.value - IMPROVEMENT && out.best.is_some() && v >= out.value {
                out.feasible_x += 1;
                break;
            }
            if verifier.check(x, &y, game.cfg.tol).is_ok_and(|c| c.is_equilibrium()) {
                out.feasible_x += 1;
                if v < out.value {
                    out.value = v;
                    let mut pt = x.to_vec();
                    pt.extend_from_slice(&y);
                    out.best = Some(pt);
                }
                break;
            }
        }
    });
    out
}

/// Every MPCC-feasible grid `(x, y)` with a completing `λ ∈ [0, λ_max]`.
pub fn mpcc_grid_points(game: &Game, m: &MpccProblem, grid: &GlobalGrid) -> Vec<Vec<f64>> {
    let (xs, ys) = grid.axes(game.nx, game.ny);
    let kernel = KktKernel::new(m);
    let lo = vec![0.0; m.lambda_dim()];
    let hi = vec![grid.lambda_max; m.lambda_dim()];
    let mut out = Vec::new();
    for_each_product(&xs, |x| {
        if !m.source.leader.is_feasible(x, game.cfg.feas_tol) {
            return;
        }
        for y in improving_profiles(game, x, &ys, f64::INFINITY) {
            let mut xy = x.to_vec();
            xy.extend_from_slice(&y);
            if let Some(l) = kernel.complete(&xy, &lo, &hi, game.cfg.activity_tol, game.cfg.mpcc_tol) {
                xy.extend_from_slice(&l);
                out.push(xy);
            }
        }
    });
    out
}

/// Lowest objective over MPCC-feasible grid points.
pub fn grid_global_mpcc(game: &Game, m: &MpccProblem, grid: &GlobalGrid) -> GlobalScan {
    let nx = game.nx;
    let ny = game.ny;
    let mut out = GlobalScan { best: None, value: f64::INFINITY, feasible_x: 0 };
    let mut seen_x: Vec<Vec<u64>> = Vec::new();
    for pt in mpcc_grid_points(game, m, grid) {
        let key: Vec<u64> = pt[..nx].iter().map(|v| v.to_bits()).collect();
        if !seen_x.contains(&key) {
            seen_x.push(key);
        }
        let v = m.leader_objective(&pt[..nx], &pt[nx..nx + ny]);
        if v < out.value {
            out.value = v;
            out.best = Some(pt);
        }
    }
    out.feasible_x = seen_x.len();
    out
}

/// Convexity of follower `f`'s objective and constraints in its own
/// variables at `x`, other followers fixed at `y`.
pub fn follower_convexity(game: &Game, f: usize, x: &[f64], y: &[f64]) -> Finding {
    let p = &game.players[f];
    let fp = &game.problem.followers[f];
    let mut z = x.to_vec();
    z.extend_from_slice(y);
    let others: BTreeMap<crate::expr::VarId, f64> = game
        .index
        .iter()
        .filter(|(v, &i)| i >= game.nx && !p.vars.contains(v))
        .map(|(v, &i)| (v.clone(), z[i]))
        .collect();
    let fix = |e: &Expr| fix_leader(e, x).substitute(&|v| others.get(v).map(|c| Expr::Const(*c)));
    let boxes = vec![game.cfg.search_box; p.vars.len()];
    let mut unknown = Vec::new();
    let pieces = core::iter::once(("objective".to_string(), fix(&p.objective)))
        .chain(fp.constraints.iter().enumerate().map(|(j, g)| (format!("constraint {j}"), fix(g))));
    for (name, e) in pieces {
        match classify_convexity(&e, &p.vars, &boxes, 64) {
            Ok(Convexity::ConvexCertified) => {}
            Ok(Convexity::NonconvexWitness(w)) => {
                return Finding::fails(format!("follower {} {name} is nonconvex at x = {x:?} (witness {w})", p.id));
            }
            Ok(Convexity::Unknown) => unknown.push(format!("follower {} {name}", p.id)),
            Err(e) => unknown.push(format!("follower {} {name}: {e}", p.id)),
        }
    }
    if unknown.is_empty() {
        Finding::holds(format!("follower {} convex at x = {x:?}", p.id))
    } else {
        Finding::unknown(format!("not certified: {}", unknown.join(", ")))
    }
}

fn combine(findings: Vec<Finding>) -> Finding {
    if let Some(f) = findings.iter().find(|f| f.status == Status::Fails) {
        return f.clone();
    }
    if let Some(f) = findings.iter().find(|f| f.status == Status::Unknown) {
        return f.clone();
    }
    let notes: Vec<String> = findings.into_iter().map(|f| f.note).collect();
    Finding::holds(notes.join("; "))
}

fn convexity_at(game: &Game, x: &[f64], y: &[f64]) -> Finding {
    combine((0..game.players.len()).map(|f| follower_convexity(game, f, x, y)).collect())
}

fn slater_at(game: &Game, x: &[f64]) -> Finding {
    combine(
        (0..game.players.len())
            .map(|f| {
                let r = check_slater(game, f, x);
                let id = &r.follower;
                match r.verdict {
                    SlaterVerdict::Holds { witness } => {
                        Finding::holds(format!("follower {id}: strictly feasible at {witness:?} (max g = {:.3e})", r.max_value))
                    }
                    SlaterVerdict::FailsCertified { reason } => {
                        Finding::fails(format!("follower {id} at x = {x:?}: {reason}"))
                    }
                    SlaterVerdict::Unknown { note } => Finding::unknown(format!("follower {id} at x = {x:?}: {note}")),
                }
            })
            .collect(),
    )
}

/// The four transfer results between the game and its MPCC reformulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gate {
    /// Local game solution, convex followers, Slater ⇒ local MPCC solution.
    LocalToMpcc,
    /// Global MPCC solution, convex followers, Slater everywhere ⇒ global game solution.
    GlobalToGame,
    /// Local MPCC solution for every multiplier ⇒ local game solution.
    AllMultipliers,
    /// Local MPCC solution at vertex multipliers plus CRCQ ⇒ local game solution.
    VertexCrcq,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::LocalToMpcc, Gate::GlobalToGame, Gate::AllMultipliers, Gate::VertexCrcq];

    /// Short id used on the command line.
    pub fn id(&self) -> &'static str {
        match self {
            Gate::LocalToMpcc => "t2.1",
            Gate::GlobalToGame => "t2.2",
            Gate::AllMultipliers => "t2.3",
            Gate::VertexCrcq => "t2.4",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::LocalToMpcc => "local-to-mpcc",
            Gate::GlobalToGame => "global-to-game",
            Gate::AllMultipliers => "all-multipliers",
            Gate::VertexCrcq => "vertex-crcq",
        }
    }

    /// Accepts the short id or the name.
    pub fn parse(s: &str) -> Option<Gate> {
        let s = s.to_ascii_lowercase();
        Gate::ALL.into_iter().find(|g| g.id() == s || g.name() == s)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateStatus {
    /// Every hypothesis holds and the conclusion was confirmed.
    Transferred,
    /// The named hypotheses fail; the conclusion is not implied.
    HypothesisFailed(Vec<String>),
    /// No hypothesis fails but some could not be decided.
    HypothesisUnknown(Vec<String>),
    /// Every hypothesis holds yet the conclusion fails: a defect in the
    /// checkers, since the theorem cannot be wrong.
    ConclusionRefuted { witness: Vec<f64> },
}

impl fmt::Display for GateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateStatus::Transferred => f.write_str("Transferred"),
            GateStatus::HypothesisFailed(n) => write!(f, "HypothesisFailed({})", n.join(",")),
            GateStatus::HypothesisUnknown(n) => write!(f, "HypothesisUnknown({})", n.join(",")),
            GateStatus::ConclusionRefuted { witness } => write!(f, "ConclusionRefuted({witness:?})"),
        }
    }
}

/// One multiplier profile tested by a gate and the MPCC-local verdict there.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierTest {
    pub lambda: Vec<f64>,
    pub kind: &'static str,
    pub verdict: LocalVerdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateReport {
    pub gate: Gate,
    pub point: Vec<f64>,
    pub hypotheses: Vec<(String, Finding)>,
    pub multipliers: Vec<MultiplierTest>,
    /// `Holds` when the conclusion was confirmed on the grid.
    pub conclusion: Finding,
    /// Witness against the conclusion, when one was found.
    pub conclusion_witness: Option<Vec<f64>>,
    pub status: GateStatus,
}

impl GateReport {
    fn assemble(
        gate: Gate,
        point: Vec<f64>,
        hypotheses: Vec<(String, Finding)>,
        multipliers: Vec<MultiplierTest>,
        conclusion: Finding,
        conclusion_witness: Option<Vec<f64>>,
    ) -> Self {
        let failed: Vec<String> =
            hypotheses.iter().filter(|(_, f)| f.status == Status::Fails).map(|(n, _)| n.clone()).collect();
        let unknown: Vec<String> =
            hypotheses.iter().filter(|(_, f)| f.status == Status::Unknown).map(|(n, _)| n.clone()).collect();
        let status = if !failed.is_empty() {
            GateStatus::HypothesisFailed(failed)
        } else if !unknown.is_empty() {
            GateStatus::HypothesisUnknown(unknown)
        } else if conclusion.status == Status::Holds {
            GateStatus::Transferred
        } else if conclusion.status == Status::Fails {
            GateStatus::ConclusionRefuted { witness: conclusion_witness.clone().unwrap_or_default() }
        } else {
            GateStatus::HypothesisUnknown(vec!["conclusion".into()])
        };
        GateReport { gate, point, hypotheses, multipliers, conclusion, conclusion_witness, status }
    }

    pub fn failed(&self, name: &str) -> bool {
        matches!(&self.status, GateStatus::HypothesisFailed(n) if n.iter().any(|m| m == name))
    }
}

/// Per-follower vertex lists, or the first follower whose set is empty.
fn vertex_lists(game: &Game, x: &[f64], y: &[f64]) -> Result<Vec<Vec<Vec<f64>>>, VerifyError> {
    (0..game.players.len())
        .map(|f| {
            let poly = multiplier_polytope(game.problem, f, x, y, game.cfg.activity_tol)?;
            Ok(poly.enumerate_vertices()?)
        })
        .collect()
}

/// Concatenated multiplier profiles: one vertex per follower, capped.
fn vertex_profiles(lists: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let idx: Vec<Vec<f64>> = lists.iter().map(|l| (0..l.len()).map(|i| i as f64).collect()).collect();
    let mut out = Vec::new();
    for_each_product(&idx, |ix| {
        if out.len() < MAX_COMBINATIONS {
            out.push(ix.iter().enumerate().flat_map(|(f, &i)| lists[f][i as usize].clone()).collect());
        }
    });
    out
}

fn local_conclusion(v: &Result<LocalMinVerdict, VerifyError>, what: &str) -> (Finding, Option<Vec<f64>>) {
    match v {
        Ok(LocalMinVerdict { verdict: LocalVerdict::NoBetterNeighborFound, tested, .. }) => {
            (Finding::holds(format!("{what}: no better neighbor among {tested} candidates")), None)
        }
        Ok(LocalMinVerdict { verdict: LocalVerdict::BetterNeighbor { point, objective_gap }, .. }) => (
            Finding::fails(format!("{what}: better neighbor {point:?} (gap {objective_gap:.3e})")),
            Some(point.clone()),
        ),
        Err(e) => (Finding::fails(format!("{what}: {e}")), None),
    }
}

fn test_multipliers(
    game: &Game,
    m: &MpccProblem,
    x: &[f64],
    y: &[f64],
    profiles: &[(Vec<f64>, &'static str)],
    ball: Ball,
) -> Result<Vec<MultiplierTest>, VerifyError> {
    profiles
        .iter()
        .map(|(lam, kind)| {
            let v = is_local_min_mpcc(game, m, x, y, lam, ball)?;
            Ok(MultiplierTest { lambda: lam.clone(), kind, verdict: v.verdict })
        })
        .collect()
}

fn all_pass(tests: &[MultiplierTest], what: &str) -> Finding {
    match tests.iter().find(|t| t.verdict != LocalVerdict::NoBetterNeighborFound) {
        None => Finding::holds(format!("{what}: {} multiplier profiles pass", tests.len())),
        Some(t) => Finding::fails(format!("{what}: fails at {} multiplier {:?}", t.kind, t.lambda)),
    }
}

/// Local game solution + convexity + Slater at `x̄` ⇒ `(x̄, ȳ, λ̄)` is a local
/// MPCC solution, tested for every vertex profile `λ̄`.
pub fn gate_local_to_mpcc(game: &Game, m: &MpccProblem, x: &[f64], y: &[f64], ball: Ball) -> GateReport {
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    let (local, _) = local_conclusion(&is_local_min_slmfg(game, x, y, ball), "game local minimum");
    let hypotheses = vec![
        ("game-local-min".to_string(), local),
        ("convexity".to_string(), convexity_at(game, x, y)),
        ("slater".to_string(), slater_at(game, x)),
    ];
    let (conclusion, witness, tests) = match vertex_lists(game, x, y) {
        Err(e) => (Finding::fails(format!("no MPCC completion: {e}")), None, Vec::new()),
        Ok(lists) => {
            let profiles: Vec<(Vec<f64>, &'static str)> =
                vertex_profiles(&lists).into_iter().map(|l| (l, "vertex")).collect();
            match test_multipliers(game, m, x, y, &profiles, ball) {
                Ok(tests) => {
                    let w = tests.iter().find_map(|t| match &t.verdict {
                        LocalVerdict::BetterNeighbor { point, .. } => Some(point.clone()),
                        _ => None,
                    });
                    (all_pass(&tests, "MPCC local minimum"), w, tests)
                }
                Err(e) => (Finding::fails(format!("{e}")), None, Vec::new()),
            }
        }
    };
    GateReport::assemble(Gate::LocalToMpcc, point, hypotheses, tests, conclusion, witness)
}

/// Global MPCC solution + convexity and Slater at every grid `x` ⇒ `(x̄, ȳ)`
/// is a global game solution, all on the grid `grid`.
pub fn gate_global_to_game(
    game: &Game,
    m: &MpccProblem,
    x: &[f64],
    y: &[f64],
    lam: &[f64],
    grid: &GlobalGrid,
) -> GateReport {
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    point.extend_from_slice(lam);
    let mut anchored = grid.clone();
    if anchored.anchor.is_empty() {
        anchored.anchor = x.iter().chain(y).copied().collect();
    }
    let f0 = m.leader_objective(x, y);
    let mpcc_global = if !is_mpcc_feasible(m, x, y, lam, game.cfg.mpcc_tol) {
        Finding::fails("the point is not MPCC-feasible")
    } else {
        let scan = grid_global_mpcc(game, m, &anchored);
        if scan.value < f0 - IMPROVEMENT {
            Finding::fails(format!("MPCC grid point {:?} has objective {:.6} < {f0:.6}", scan.best.unwrap_or_default(), scan.value))
        } else {
            Finding::holds(format!("no MPCC grid point below {f0:.6}"))
        }
    };
    let (xs, _) = anchored.axes(game.nx, game.ny);
    let mut sampled: Vec<Vec<f64>> = Vec::new();
    for_each_product(&xs, |xx| {
        if m.source.leader.is_feasible(xx, game.cfg.feas_tol) {
            sampled.push(xx.to_vec());
        }
    });
    let stride = sampled.len() / 41 + 1;
    let sampled: Vec<Vec<f64>> = sampled.into_iter().step_by(stride).collect();
    let convexity = combine(sampled.iter().map(|xx| convexity_at(game, xx, y)).collect());
    let slater = combine(sampled.iter().map(|xx| slater_at(game, xx)).collect());
    let hypotheses = vec![
        ("mpcc-global-min".to_string(), mpcc_global),
        ("convexity-everywhere".to_string(), convexity),
        ("slater-everywhere".to_string(), slater),
    ];
    let mut slm_grid = anchored.clone();
    slm_grid.solver_candidates = true;
    let scan = grid_global_slmfg(game, &slm_grid);
    let (conclusion, witness) = if scan.value < f0 - IMPROVEMENT {
        (
            Finding::fails(format!("game grid point {:?} has objective {:.6} < {f0:.6}", scan.best.clone().unwrap_or_default(), scan.value)),
            scan.best,
        )
    } else {
        (Finding::holds(format!("no game grid point below {f0:.6}")), None)
    };
    GateReport::assemble(Gate::GlobalToGame, point, hypotheses, Vec::new(), conclusion, witness)
}

/// Local MPCC solution for every multiplier (vertices plus `samples`
/// interior profiles) + convexity + Slater at `x̄` ⇒ local game solution.
pub fn gate_all_multipliers(
    game: &Game,
    m: &MpccProblem,
    x: &[f64],
    y: &[f64],
    ball: Ball,
    samples: usize,
) -> Result<GateReport, VerifyError> {
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    let lists = vertex_lists(game, x, y)?;
    let mut profiles: Vec<(Vec<f64>, &'static str)> =
        vertex_profiles(&lists).into_iter().map(|l| (l, "vertex")).collect();
    let per_follower: Vec<Vec<Vec<f64>>> = (0..game.players.len())
        .map(|f| {
            let poly = multiplier_polytope(game.problem, f, x, y, game.cfg.activity_tol)?;
            Ok(poly.sample_multipliers(samples, game.cfg.seed.wrapping_add(f as u64))?)
        })
        .collect::<Result<_, VerifyError>>()?;
    for k in 0..samples {
        profiles.push((per_follower.iter().flat_map(|s| s[k].clone()).collect(), "sampled"));
    }
    let tests = test_multipliers(game, m, x, y, &profiles, ball)?;
    let hypotheses = vec![
        ("convexity".to_string(), convexity_at(game, x, y)),
        ("slater".to_string(), slater_at(game, x)),
        ("mpcc-local-all-multipliers".to_string(), all_pass(&tests, "MPCC local minimum")),
    ];
    let (conclusion, witness) = local_conclusion(&is_local_min_slmfg(game, x, y, ball), "game local minimum");
    Ok(GateReport::assemble(Gate::AllMultipliers, point, hypotheses, tests, conclusion, witness))
}

/// Local MPCC solution at every vertex profile + convexity + Slater + CRCQ
/// at `(x̄, ȳ)` ⇒ local game solution.
pub fn gate_vertex_crcq(
    game: &Game,
    m: &MpccProblem,
    x: &[f64],
    y: &[f64],
    ball: Ball,
    crcq_radius: f64,
    crcq_samples: usize,
) -> Result<GateReport, VerifyError> {
    let mut point = x.to_vec();
    point.extend_from_slice(y);
    let lists = vertex_lists(game, x, y)?;
    let profiles: Vec<(Vec<f64>, &'static str)> =
        vertex_profiles(&lists).into_iter().map(|l| (l, "vertex")).collect();
    let tests = test_multipliers(game, m, x, y, &profiles, ball)?;
    let z = game.point(x, y)?;
    let crcq = combine(
        (0..game.players.len())
            .map(|f| {
                let yf = game.own(f, &z);
                match check_crcq(game, f, x, &yf, crcq_radius, crcq_samples, game.cfg.seed) {
                    Ok(r) => match r.verdict {
                        crate::cq::CrcqVerdict::ConsistentWithCrcq => {
                            Finding::holds(format!("follower {}: no rank change sampled", r.follower))
                        }
                        crate::cq::CrcqVerdict::ViolationWitness { subset, rank1, rank2, point2, .. } => {
                            Finding::fails(format!(
                                "follower {}: subset {subset:?} has rank {rank1} at the point and {rank2} at {point2:?}",
                                r.follower
                            ))
                        }
                    },
                    Err(e) => Finding::fails(format!("{e}")),
                }
            })
            .collect(),
    );
    let hypotheses = vec![
        ("convexity".to_string(), convexity_at(game, x, y)),
        ("slater".to_string(), slater_at(game, x)),
        ("crcq".to_string(), crcq),
        ("mpcc-local-vertex-multipliers".to_string(), all_pass(&tests, "MPCC local minimum")),
    ];
    let (conclusion, witness) = local_conclusion(&is_local_min_slmfg(game, x, y, ball), "game local minimum");
    Ok(GateReport::assemble(Gate::VertexCrcq, point, hypotheses, tests, conclusion, witness))
}

/// One element of a leader sequence approaching a point.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceStep {
    pub x: Vec<f64>,
    /// Equilibrium found at `x` (the first of the solver's list).
    pub y: Vec<f64>,
    /// Per follower, the vertices of the multiplier set at `(x, y)`.
    pub multipliers: Vec<Vec<Vec<f64>>>,
    pub mpcc_feasible: bool,
    pub objective: f64,
    /// ∞-distance of `(x, y)` to the reference point.
    pub distance: f64,
}

/// Follow `xs` toward `(x̄, ȳ)`: solve the game, compute multipliers and check
/// MPCC feasibility at each step.
pub fn sequence_probe(
    game: &Game,
    m: &MpccProblem,
    xs: &[Vec<f64>],
    reference: &[f64],
) -> Result<Vec<SequenceStep>, VerifyError> {
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let sol = game.solve_nep(x)?;
        let y = sol.equilibria[0].point.clone();
        let lists = vertex_lists(game, x, &y)?;
        let lam: Vec<f64> = lists.iter().flat_map(|l| l[0].clone()).collect();
        let mut xy = x.clone();
        xy.extend_from_slice(&y);
        out.push(SequenceStep {
            mpcc_feasible: is_mpcc_feasible(m, x, &y, &lam, game.cfg.mpcc_tol),
            objective: m.leader_objective(x, &y),
            distance: dist_inf(&xy, reference),
            x: x.clone(),
            y,
            multipliers: lists,
        });
    }
    Ok(out)
}
