//! The followers' Nash game at a fixed leader decision: best responses,
//! equilibrium search and certification, a grid oracle, and the hypotheses
//! of the existence theorem (compact, convex, nonempty feasible sets).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;


use crate::config::Config;
use crate::cq::{check_slater, dual_bound, quadratic_pieces, SlaterVerdict};
use crate::expr::{classify_convexity, BlockEnv, Convexity, Expr, Monomial, Polynomial, VarId, LEADER_BLOCK};
use crate::linalg::{convex_quadratic_min, is_psd, nnls, null_space, rank, subsets_of_size, Matrix};
use crate::model::{InvalidProblem, SlmfgProblem};
use crate::report::{Finding, Status};
use crate::sampling::{anchored_axis, for_each_product, rng, uniform_in};
use crate::solver::{minimize, Nlp, NlpOptions, NlpResult};

const BR_ROUNDS: usize = 50;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NepError {
    #[error("follower {follower} has no feasible point in the search box at x = {x:?}")]
    InfeasibleFollower { follower: String, x: Vec<f64> },
    #[error("follower {follower} looks unbounded below at x = {x:?} (heuristic: descent reached the search box with no active constraint)")]
    Unbounded { follower: String, x: Vec<f64> },
    #[error("no equilibrium found from {starts} starts (not a proof of nonexistence)")]
    NoEquilibriumFound { starts: usize },
    #[error("{what} has {got} entries, expected {want}")]
    Dimension { what: &'static str, want: usize, got: usize },
}

/// Evenly spaced grid `lo ≤ i·step ≤ hi` per coordinate (anchored at 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        GridSpec { lo, hi, step }
    }

    pub fn from_config(cfg: &Config) -> Self {
        GridSpec { lo: cfg.grid_box.0, hi: cfg.grid_box.1, step: cfg.grid_step }
    }

    pub fn axis(&self) -> Vec<f64> {
        anchored_axis(0.0, self.lo, self.hi, self.step)
    }
}

/// One follower, compiled against the game's dense layout.
#[derive(Clone, Debug)]
pub struct Player {
    pub id: String,
    pub vars: Vec<VarId>,
    /// Positions of `vars` in the dense point.
    pub pos: Vec<usize>,
    /// Terms of the objective that involve the follower's own variables.
    pub objective: Expr,
    pub nlp: Nlp,
    /// The own part reads no other follower's variables.
    pub separable: bool,
}

/// A validated game compiled for evaluation. Dense points are laid out as
/// `x` followed by the concatenated follower blocks.
#[derive(Clone, Debug)]
pub struct Game<'p> {
    pub problem: &'p SlmfgProblem,
    pub cfg: Config,
    pub index: BTreeMap<VarId, usize>,
    pub nx: usize,
    pub ny: usize,
    pub players: Vec<Player>,
}

/// Feasible grid points of one follower with the minimal own objective.
#[derive(Clone, Debug, PartialEq)]
pub struct GridScan {
    pub min: f64,
    pub argmins: Vec<Vec<f64>>,
    pub feasible: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumCertificate {
    /// The concatenated follower vector `y^F`.
    pub point: Vec<f64>,
    /// Own objective minus the verification-grid minimum, per follower.
    pub gaps: Vec<f64>,
    /// ∞-norm KKT residual with nonnegative multipliers, per follower.
    pub kkt_residuals: Vec<f64>,
    /// Whether the follower's set satisfied Slater's condition at `x`.
    pub slater: Vec<bool>,
}

impl EquilibriumCertificate {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn kkt_residual(&self) -> f64 {
        self.kkt_residuals.iter().fold(0.0, |a, &b| a.max(b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NashVerdict {
    Equilibrium,
    NotEquilibrium,
    Infeasible { follower: String, violation: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NashCheck {
    pub verdict: NashVerdict,
    pub certificate: EquilibriumCertificate,
}

impl NashCheck {
    pub fn is_equilibrium(&self) -> bool {
        self.verdict == NashVerdict::Equilibrium
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NepSolution {
    /// Sorted, clustered equilibria.
    pub equilibria: Vec<EquilibriumCertificate>,
    pub continuum_suspected: bool,
    pub starts: usize,
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|a| a.to_bits()).collect()
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn lex(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (p, q) in a.iter().zip(b) {
        match p.partial_cmp(q) {
            Some(core::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

struct Response {
    y: Vec<f64>,
    value: f64,
    violation: f64,
    polished: bool,
}

impl<'p> Game<'p> {
    pub fn new(problem: &'p SlmfgProblem, cfg: &Config) -> Result<Self, InvalidProblem> {
        let violations = problem.validate();
        if !violations.is_empty() {
            return Err(InvalidProblem(violations));
        }
        let all = problem.all_vars();
        let index: BTreeMap<VarId, usize> = all.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        let nx = problem.leader.dim;
        let mut players = Vec::with_capacity(problem.followers.len());
        for fp in &problem.followers {
            let vars = fp.vars();
            let pos = vars.iter().map(|v| index[v]).collect();
            let terms: BTreeMap<Monomial, f64> = fp
                .objective
                .to_polynomial()
                .terms
                .into_iter()
                .filter(|(m, _)| m.0.iter().any(|(v, _)| fp.owns(v)))
                .collect();
            let own = Polynomial { terms };
            let separable =
                own.terms.keys().all(|m| m.0.iter().all(|(v, _)| v.block == LEADER_BLOCK || fp.owns(v)));
            let objective = own.to_expr();
            let nlp = Nlp::build(&objective, &fp.constraints, &vars, &index).expect("validated problem");
            players.push(Player { id: fp.id.clone(), vars, pos, objective, nlp, separable });
        }
        Ok(Game { problem, cfg: cfg.clone(), index, nx, ny: all.len() - nx, players })
    }

    pub fn check_x(&self, x: &[f64]) -> Result<(), NepError> {
        if x.len() != self.nx {
            return Err(NepError::Dimension { what: "x", want: self.nx, got: x.len() });
        }
        Ok(())
    }

    /// Dense point `(x, y)`.
    pub fn point(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, NepError> {
        self.check_x(x)?;
        if y.len() != self.ny {
            return Err(NepError::Dimension { what: "y", want: self.ny, got: y.len() });
        }
        let mut z = x.to_vec();
        z.extend_from_slice(y);
        Ok(z)
    }

    /// Follower `f`'s coordinates of a dense point.
    pub fn own(&self, f: usize, z: &[f64]) -> Vec<f64> {
        self.players[f].pos.iter().map(|&i| z[i]).collect()
    }

    pub fn set_own(&self, f: usize, z: &mut [f64], v: &[f64]) {
        for (k, &i) in self.players[f].pos.iter().enumerate() {
            z[i] = v[k];
        }
    }

    pub fn own_value(&self, f: usize, z: &[f64]) -> f64 {
        self.players[f].nlp.f.eval(z)
    }

    /// Largest constraint value of follower `f` (−∞ without constraints).
    pub fn max_g(&self, f: usize, z: &[f64]) -> f64 {
        self.players[f].nlp.g.iter().map(|g| g.eval(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn follower_position(&self, id: &str) -> Option<usize> {
        self.players.iter().position(|p| p.id == id)
    }

    pub fn options(&self) -> NlpOptions {
        NlpOptions { max_iters: self.cfg.max_iters, feas_tol: self.cfg.feas_tol, tol: self.cfg.tol }
    }

    /// Scan follower `f`'s own grid with everything else taken from `z`.
    pub fn scan(&self, f: usize, z: &[f64], grid: &GridSpec) -> GridScan {
        let p = &self.players[f];
        let axes = vec![grid.axis(); p.pos.len()];
        let mut zz = z.to_vec();
        let mut out = GridScan { min: f64::INFINITY, argmins: Vec::new(), feasible: 0 };
        for_each_product(&axes, |pt| {
            for (k, &i) in p.pos.iter().enumerate() {
                zz[i] = pt[k];
            }
            if p.nlp.violation(&zz) > self.cfg.feas_tol {
                return;
            }
            out.feasible += 1;
            let v = p.nlp.f.eval(&zz);
            let tie = 1e-9 * (1.0 + v.abs().min(out.min.abs()));
            if v < out.min - tie {
                out.min = v;
                out.argmins.clear();
                out.argmins.push(pt.to_vec());
            } else if v <= out.min + tie {
                out.min = out.min.min(v);
                out.argmins.push(pt.to_vec());
            }
        });
        out
    }

    /// ∞-norm of the best stationarity residual `∇F + Σ λ_j ∇g_j` over
    /// `λ ≥ 0` supported on the constraints active within `activity_tol`.
    pub fn kkt_residual(&self, f: usize, z: &[f64]) -> f64 {
        let p = &self.players[f];
        let gv = p.nlp.constraint_values(z);
        let active: Vec<usize> = (0..gv.len()).filter(|&j| gv[j] >= -self.cfg.activity_tol).collect();
        let b: Vec<f64> = p.nlp.objective_grad(z).iter().map(|v| -v).collect();
        let grads: Vec<Vec<f64>> = active.iter().map(|&j| p.nlp.constraint_grad(j, z)).collect();
        let a: Matrix = (0..b.len()).map(|r| grads.iter().map(|g| g[r]).collect()).collect();
        let (lam, _) = nnls(&a, &b);
        (0..b.len()).fold(0.0, |m: f64, r| {
            let ar: f64 = a[r].iter().zip(&lam).map(|(p, q)| p * q).sum();
            m.max((ar - b[r]).abs())
        })
    }

    fn runs_away(&self, f: usize, res: &NlpResult, bounds: &[(f64, f64)], reference: f64) -> bool {
        let p = &self.players[f];
        let grad = p.nlp.objective_grad(&res.z);
        let pushing = p.pos.iter().enumerate().any(|(k, &i)| {
            let (lo, hi) = bounds[k];
            (res.z[i] >= hi && grad[k] < 0.0) || (res.z[i] <= lo && grad[k] > 0.0)
        });
        let inactive = p.nlp.g.iter().all(|g| g.eval(&res.z) < -self.cfg.activity_tol);
        pushing && inactive && res.f < reference - self.cfg.unbounded_margin
    }

    fn responses(&self, f: usize, z: &[f64]) -> Result<Vec<Vec<f64>>, NepError> {
        let p = &self.players[f];
        let n = p.pos.len();
        let scan = self.scan(f, z, &GridSpec::from_config(&self.cfg));
        let bounds = vec![self.cfg.search_box; n];
        let mut reps: Vec<Vec<f64>> = Vec::new();
        if let Some(last) = scan.argmins.len().checked_sub(1) {
            for k in [0, last / 2, last] {
                if !reps.contains(&scan.argmins[k]) {
                    reps.push(scan.argmins[k].clone());
                }
            }
        }
        let mut starts = reps.clone();
        starts.push(self.own(f, z).iter().map(|v| v.clamp(self.cfg.search_box.0, self.cfg.search_box.1)).collect());
        let mut r = rng(self.cfg.seed ^ (0x5EED_0000_u64 + f as u64));
        for _ in 0..3 {
            starts.push(uniform_in(&mut r, &vec![self.cfg.grid_box; n]));
        }
        let opts = self.options();
        let mut found: Vec<Response> = Vec::new();
        let mut fallback: Vec<Response> = Vec::new();
        for s in &starts {
            let mut z0 = z.to_vec();
            self.set_own(f, &mut z0, s);
            let res = minimize(&p.nlp, &z0, &bounds, &opts);
            if res.violation > self.cfg.feas_tol {
                continue;
            }
            let reference = if scan.min.is_finite() { scan.min } else { p.nlp.f.eval(&z0) };
            if self.runs_away(f, &res, &bounds, reference) {
                return Err(NepError::Unbounded { follower: p.id.clone(), x: z[..self.nx].to_vec() });
            }
            let r = Response { y: self.own(f, &res.z), value: res.f, violation: res.violation, polished: res.polished };
            if res.stationarity <= self.cfg.tol || res.f <= scan.min + self.cfg.tol {
                found.push(r);
            } else {
                fallback.push(r);
            }
        }
        for y in reps {
            found.push(Response { y, value: scan.min, violation: 0.0, polished: false });
        }
        if found.is_empty() {
            found = fallback;
        }
        if found.is_empty() {
            return Err(NepError::InfeasibleFollower { follower: p.id.clone(), x: z[..self.nx].to_vec() });
        }
        let fmin = found.iter().fold(f64::INFINITY, |m, r| m.min(r.value));
        found.retain(|r| r.value <= fmin + self.cfg.tol * (1.0 + fmin.abs()));
        found.sort_by(|a, b| {
            b.polished
                .cmp(&a.polished)
                .then(a.violation.partial_cmp(&b.violation).unwrap_or(core::cmp::Ordering::Equal))
                .then(a.value.partial_cmp(&b.value).unwrap_or(core::cmp::Ordering::Equal))
        });
        let mut out: Vec<Vec<f64>> = Vec::new();
        for r in found {
            if out.iter().all(|o| dist_inf(o, &r.y) > self.cfg.cluster_eps) {
                out.push(r.y);
            }
        }
        out.sort_by(|a, b| lex(a, b));
        Ok(out)
    }

    /// Minimizers of follower `f`'s objective over its feasible set, with the
    /// other followers fixed at their entries of `y`.
    pub fn best_response(&self, f: usize, x: &[f64], y: &[f64]) -> Result<Vec<Vec<f64>>, NepError> {
        let z = self.point(x, y)?;
        self.responses(f, &z)
    }

    fn nep_starts(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let zero = vec![0.0; self.ny];
        let z0 = self.point(x, &zero).expect("checked dimensions");
        let grid = GridSpec::from_config(&self.cfg);
        let mut first = z0.clone();
        for f in 0..self.players.len() {
            if let Some(a) = self.scan(f, &z0, &grid).argmins.first() {
                self.set_own(f, &mut first, a);
            }
        }
        let first = first[self.nx..].to_vec();
        let mut starts = vec![first, zero];
        let mut r = rng(self.cfg.seed);
        let bounds = vec![self.cfg.grid_box; self.ny];
        while starts.len() < self.cfg.starts.max(1) {
            starts.push(uniform_in(&mut r, &bounds));
        }
        starts.truncate(self.cfg.starts.max(1));
        starts
    }

    /// Equilibria at `x` by synchronous best-response iteration from several
    /// starts; every returned point passes [`Verifier::check`].
    pub fn solve_nep(&self, x: &[f64]) -> Result<NepSolution, NepError> {
        self.check_x(x)?;
        let nf = self.players.len();
        let starts = self.nep_starts(x);
        let count = starts.len();
        let mut cache: Vec<Option<Vec<Vec<f64>>>> = vec![None; nf];
        let mut verifier = Verifier::new(self);
        let mut found: Vec<EquilibriumCertificate> = Vec::new();
        for start in starts {
            let mut y = start;
            for _round in 0..BR_ROUNDS {
                let z = self.point(x, &y)?;
                let mut next = z.clone();
                for f in 0..nf {
                    let fresh;
                    let resp: &Vec<Vec<f64>> = if self.players[f].separable {
                        if cache[f].is_none() {
                            cache[f] = Some(self.responses(f, &z)?);
                        }
                        cache[f].as_ref().unwrap()
                    } else {
                        fresh = self.responses(f, &z)?;
                        &fresh
                    };
                    let cur = self.own(f, &z);
                    let pick = resp
                        .iter()
                        .min_by(|a, b| dist_inf(a, &cur).partial_cmp(&dist_inf(b, &cur)).unwrap())
                        .expect("responses are nonempty");
                    self.set_own(f, &mut next, pick);
                }
                let moved = dist_inf(&next, &z);
                y = next[self.nx..].to_vec();
                if moved <= 1e-12 {
                    break;
                }
            }
            let check = verifier.check(x, &y, self.cfg.tol)?;
            if check.is_equilibrium() {
                found.push(check.certificate);
            }
        }
        found.sort_by(|a, b| lex(&a.point, &b.point));
        let mut equilibria: Vec<EquilibriumCertificate> = Vec::new();
        for c in found {
            if equilibria.iter().all(|e| dist_inf(&e.point, &c.point) > self.cfg.cluster_eps) {
                equilibria.push(c);
            }
        }
        if equilibria.is_empty() {
            return Err(NepError::NoEquilibriumFound { starts: count });
        }
        let continuum_suspected = equilibria.len() >= self.cfg.continuum_count;
        Ok(NepSolution { equilibria, continuum_suspected, starts: count })
    }
}

/// Equilibrium checker that caches per-`x` grid minima and Slater verdicts,
/// for callers that test many profiles.
pub struct Verifier<'g, 'p> {
    game: &'g Game<'p>,
    grid: GridSpec,
    mins: BTreeMap<(usize, Vec<u64>), f64>,
    slater: BTreeMap<(usize, Vec<u64>), bool>,
}

impl<'g, 'p> Verifier<'g, 'p> {
    pub fn new(game: &'g Game<'p>) -> Self {
        Verifier::with_grid(game, GridSpec::from_config(&game.cfg))
    }

    pub fn with_grid(game: &'g Game<'p>, grid: GridSpec) -> Self {
        Verifier { game, grid, mins: BTreeMap::new(), slater: BTreeMap::new() }
    }

    pub fn game(&self) -> &'g Game<'p> {
        self.game
    }

    fn grid_min(&mut self, f: usize, z: &[f64]) -> f64 {
        let g = self.game;
        let mut key = bits(&z[..g.nx]);
        if !g.players[f].separable {
            let own = &g.players[f].pos;
            key.extend(z[g.nx..].iter().enumerate().filter(|(i, _)| !own.contains(&(i + g.nx))).map(|(_, v)| v.to_bits()));
        }
        let grid = self.grid;
        *self.mins.entry((f, key)).or_insert_with(|| g.scan(f, z, &grid).min)
    }

    fn slater_holds(&mut self, f: usize, x: &[f64]) -> bool {
        let g = self.game;
        *self
            .slater
            .entry((f, bits(x)))
            .or_insert_with(|| matches!(check_slater(g, f, x).verdict, SlaterVerdict::Holds { .. }))
    }

    /// Equilibrium test: every best-response gap over the grid is at most
    /// `tol`, and where Slater's condition holds the KKT residual is too.
    pub fn check(&mut self, x: &[f64], y: &[f64], tol: f64) -> Result<NashCheck, NepError> {
        let g = self.game;
        let z = g.point(x, y)?;
        let nf = g.players.len();
        let mut cert = EquilibriumCertificate {
            point: y.to_vec(),
            gaps: vec![0.0; nf],
            kkt_residuals: vec![0.0; nf],
            slater: vec![false; nf],
        };
        for f in 0..nf {
            let v = g.players[f].nlp.violation(&z);
            if v > g.cfg.feas_tol {
                return Ok(NashCheck {
                    verdict: NashVerdict::Infeasible { follower: g.players[f].id.clone(), violation: v },
                    certificate: cert,
                });
            }
        }
        let mut ok = true;
        for f in 0..nf {
            let min = self.grid_min(f, &z);
            cert.gaps[f] = if min.is_finite() { (g.own_value(f, &z) - min).max(0.0) } else { 0.0 };
            cert.kkt_residuals[f] = g.kkt_residual(f, &z);
            cert.slater[f] = self.slater_holds(f, x);
            ok &= cert.gaps[f] <= tol && (!cert.slater[f] || cert.kkt_residuals[f] <= tol);
        }
        let verdict = if ok { NashVerdict::Equilibrium } else { NashVerdict::NotEquilibrium };
        Ok(NashCheck { verdict, certificate: cert })
    }
}

pub fn is_nash_equilibrium(game: &Game, x: &[f64], y: &[f64], tol: f64) -> Result<NashCheck, NepError> {
    Verifier::new(game).check(x, y, tol)
}

/// Discrete equilibria of the game restricted to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteNep {
    pub points: Vec<Vec<f64>>,
    /// Every point touches the grid box boundary (a sign of unboundedness).
    pub on_boundary: bool,
    /// The enumeration hit its size cap.
    pub truncated: bool,
}

const BRUTE_CAP: usize = 2_000_000;

/// Exhaustive grid oracle: profiles in which every follower's own grid
/// coordinate is an argmin (ties kept) of its full objective among its
/// feasible grid points. Evaluates the problem's expression trees directly.
pub fn brute_force_nep(problem: &SlmfgProblem, x: &[f64], grid: &GridSpec) -> BruteNep {
    let off = problem.offsets();
    let ny = *off.last().unwrap();
    let nf = problem.followers.len();
    let axis = grid.axis();
    let eval = |e: &Expr, y: &[f64]| e.eval(&problem.env(x, y)).expect("validated problem");
    let mut feasible: Vec<Vec<Vec<f64>>> = Vec::with_capacity(nf);
    for (f, fp) in problem.followers.iter().enumerate() {
        let mut pts = Vec::new();
        let mut y = vec![0.0; ny];
        for_each_product(&vec![axis.clone(); fp.dim()], |pt| {
            y[off[f]..off[f + 1]].copy_from_slice(pt);
            if fp.constraints.iter().all(|g| eval(g, &y) <= 1e-9) {
                pts.push(pt.to_vec());
            }
        });
        feasible.push(pts);
    }
    let separable: Vec<bool> = problem
        .followers
        .iter()
        .map(|fp| {
            fp.objective.to_polynomial().terms.keys().all(|m| {
                let own = m.0.iter().any(|(v, _)| fp.owns(v));
                let other = m.0.iter().any(|(v, _)| v.block != LEADER_BLOCK && !fp.owns(v));
                !(own && other)
            })
        })
        .collect();
    let tie = |v: f64, m: f64| v <= m + 1e-9 * (1.0 + m.abs());
    let mut points: Vec<Vec<f64>> = Vec::new();
    let truncated;
    if separable.iter().all(|&s| s) {
        let mut choices: Vec<Vec<Vec<f64>>> = Vec::with_capacity(nf);
        for (f, fp) in problem.followers.iter().enumerate() {
            let mut y = vec![0.0; ny];
            let vals: Vec<f64> = feasible[f]
                .iter()
                .map(|pt| {
                    y[off[f]..off[f + 1]].copy_from_slice(pt);
                    eval(&fp.objective, &y)
                })
                .collect();
            let m = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            choices.push(feasible[f].iter().zip(&vals).filter(|(_, &v)| tie(v, m)).map(|(p, _)| p.clone()).collect());
        }
        let total = choices.iter().fold(1usize, |a, c| a.saturating_mul(c.len()));
        truncated = total > BRUTE_CAP;
        if !truncated && total > 0 {
            let idx_axes: Vec<Vec<f64>> = choices.iter().map(|c| (0..c.len()).map(|i| i as f64).collect()).collect();
            for_each_product(&idx_axes, |ix| {
                let mut y = Vec::with_capacity(ny);
                for (f, &i) in ix.iter().enumerate() {
                    y.extend_from_slice(&choices[f][i as usize]);
                }
                points.push(y);
            });
        }
    } else {
        let total = feasible.iter().fold(1usize, |a, c| a.saturating_mul(c.len()));
        truncated = total > BRUTE_CAP;
        if !truncated && total > 0 {
            let idx_axes: Vec<Vec<f64>> = feasible.iter().map(|c| (0..c.len()).map(|i| i as f64).collect()).collect();
            for_each_product(&idx_axes, |ix| {
                let mut y = Vec::with_capacity(ny);
                for (f, &i) in ix.iter().enumerate() {
                    y.extend_from_slice(&feasible[f][i as usize]);
                }
                let stable = problem.followers.iter().enumerate().all(|(f, fp)| {
                    let here = eval(&fp.objective, &y);
                    let mut yy = y.clone();
                    let best = feasible[f].iter().fold(f64::INFINITY, |m, pt| {
                        yy[off[f]..off[f + 1]].copy_from_slice(pt);
                        m.min(eval(&fp.objective, &yy))
                    });
                    tie(here, best)
                });
                if stable {
                    points.push(y);
                }
            });
        }
    }
    let edge = |v: f64| (v - grid.lo).abs() <= 1e-9 || (v - grid.hi).abs() <= 1e-9;
    let on_boundary = !points.is_empty() && points.iter().all(|p| p.iter().any(|&v| edge(v)));
    BruteNep { points, on_boundary, truncated }
}

/// Per-follower verdicts on the existence theorem's hypotheses at one `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExistenceReport {
    pub follower: String,
    pub nonempty: Finding,
    pub convex_set: Finding,
    pub convex_objective: Finding,
    pub compact: Finding,
}

impl ExistenceReport {
    pub fn all_hold(&self) -> bool {
        [&self.nonempty, &self.convex_set, &self.convex_objective, &self.compact].iter().all(|b| b.status == Status::Holds)
    }
}

/// Fixed-`x` copy of an expression.
pub fn fix_leader(e: &Expr, x: &[f64]) -> Expr {
    e.fix(&BlockEnv::new().with(LEADER_BLOCK, x))
}

/// Check nonemptiness, convexity and compactness of each follower's feasible
/// set and convexity of its objective at `x`, over the coordinate box `bx`.
/// Verdicts are independent of whether equilibria are found.
pub fn check_existence_hypotheses(game: &Game, x: &[f64], bx: (f64, f64)) -> Result<Vec<ExistenceReport>, NepError> {
    game.check_x(x)?;
    let grid = GridSpec::new(bx.0, bx.1, game.cfg.grid_step);
    let z0 = game.point(x, &vec![0.0; game.ny])?;
    let mut out = Vec::with_capacity(game.players.len());
    for (f, p) in game.players.iter().enumerate() {
        let fp = &game.problem.followers[f];
        let n = p.vars.len();
        let boxes = vec![bx; n];
        let scan = game.scan(f, &z0, &grid);
        let slater = check_slater(game, f, x);
        let mut sample_point: Option<Vec<f64>> = scan.argmins.first().cloned();
        let nonempty = if scan.feasible > 0 {
            Finding::holds(format!("{} feasible grid points", scan.feasible))
        } else if slater.max_value <= game.cfg.feas_tol {
            sample_point = Some(slater.point.clone());
            Finding::holds(format!("feasible point found by descent (max constraint {:.3e})", slater.max_value))
        } else {
            match dual_bound(game, f, x) {
                Some((q, mu)) if q > 1e-9 => {
                    Finding::fails(format!("dual bound {q:.3e} > 0 at weights {mu:?}: no feasible point"))
                }
                _ => Finding::unknown("no feasible point found"),
            }
        };

        let fixed: Vec<Expr> = fp.constraints.iter().map(|g| fix_leader(g, x)).collect();
        let pieces = quadratic_pieces(game, f, x);
        let mut set_status = Status::Holds;
        let mut notes: Vec<String> = Vec::new();
        for (j, g) in fixed.iter().enumerate() {
            match classify_convexity(g, &p.vars, &boxes, 64) {
                Ok(Convexity::ConvexCertified) => {}
                Ok(c) => {
                    let redundant = pieces.as_ref().is_some_and(|pc| {
                        let (h, c, d) = &pc[j];
                        let neg: Matrix = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
                        let nc: Vec<f64> = c.iter().map(|v| -v).collect();
                        is_psd(&neg, 1e-12) && convex_quadratic_min(&neg, &nc).is_some_and(|(m, _)| m - d >= -1e-12)
                    });
                    if redundant {
                        notes.push(format!("constraint {j} is nonconvex but nonpositive everywhere"));
                    } else {
                        set_status = Status::Unknown;
                        notes.push(match c {
                            Convexity::NonconvexWitness(_) => format!("constraint {j} is nonconvex"),
                            _ => format!("constraint {j} convexity not certified"),
                        });
                    }
                }
                Err(e) => {
                    set_status = Status::Unknown;
                    notes.push(format!("constraint {j}: {e}"));
                }
            }
        }
        if set_status == Status::Unknown {
            if let Some(w) = midpoint_witness(game, f, &z0, &scan_points(game, f, &z0, &grid, 200)) {
                set_status = Status::Fails;
                notes.push(w);
            }
        }
        let convex_set = Finding::new(
            set_status,
            if notes.is_empty() { String::from("every constraint is convex") } else { notes.join("; ") },
        );

        let convex_objective = objective_convexity(game, f, x, bx);

        let compact = if nonempty.status == Status::Fails {
            Finding::holds("empty set")
        } else if let Some(d) = sample_point.as_ref().and_then(|y0| feasible_ray(game, f, x, y0)) {
            Finding::fails(format!("feasible ray in direction {d:?}"))
        } else if let (Some(pc), Status::Holds) = (&pieces, set_status) {
            if pc.iter().all(|(h, _, _)| is_psd(h, 1e-12)) {
                match recession_direction(pc, n) {
                    None => Finding::holds("convex quadratic constraints with trivial recession cone"),
                    Some(d) if nonempty.status == Status::Holds => {
                        Finding::fails(format!("recession direction {d:?}"))
                    }
                    Some(_) => Finding::unknown("recession cone is nontrivial but nonemptiness is unknown"),
                }
            } else {
                Finding::unknown("boundedness not certified for nonconvex constraints")
            }
        } else {
            Finding::unknown("boundedness not certified")
        };
        out.push(ExistenceReport { follower: p.id.clone(), nonempty, convex_set, convex_objective, compact });
    }
    Ok(out)
}

fn scan_points(game: &Game, f: usize, z: &[f64], grid: &GridSpec, cap: usize) -> Vec<Vec<f64>> {
    let p = &game.players[f];
    let mut pts = Vec::new();
    let mut zz = z.to_vec();
    for_each_product(&vec![grid.axis(); p.pos.len()], |pt| {
        game.set_own(f, &mut zz, pt);
        if p.nlp.violation(&zz) <= game.cfg.feas_tol {
            pts.push(pt.to_vec());
        }
    });
    if pts.len() > cap {
        let stride = pts.len() / cap + 1;
        pts = pts.into_iter().step_by(stride).collect();
    }
    pts
}

fn midpoint_witness(game: &Game, f: usize, z: &[f64], pts: &[Vec<f64>]) -> Option<String> {
    let mut zz = z.to_vec();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
            game.set_own(f, &mut zz, &mid);
            let v = game.max_g(f, &zz);
            if v > 1e-9 {
                return Some(format!("feasible points {a:?} and {b:?} have an infeasible midpoint"));
            }
        }
    }
    None
}

fn objective_convexity(game: &Game, f: usize, x: &[f64], bx: (f64, f64)) -> Finding {
    let p = &game.players[f];
    let fixed = fix_leader(&p.objective, x);
    let others: Vec<VarId> = fixed.vars().into_iter().filter(|v| !p.vars.contains(v)).collect();
    let boxes = vec![bx; p.vars.len()];
    let hess_reads_others =
        fixed.hessian(&p.vars).iter().flatten().any(|h| h.simplify().mentions_any(&others));
    let verdict = |e: &Expr| classify_convexity(e, &p.vars, &boxes, 64);
    if !hess_reads_others {
        let zeroed = fixed.substitute(&|v| if others.contains(v) { Some(Expr::Const(0.0)) } else { None });
        return match verdict(&zeroed) {
            Ok(Convexity::ConvexCertified) => Finding::holds("objective convex in own variables"),
            Ok(Convexity::NonconvexWitness(w)) => Finding::fails(format!("indefinite Hessian at {w}")),
            Ok(Convexity::Unknown) => Finding::unknown("sampled Hessians PSD; not certified"),
            Err(e) => Finding::unknown(format!("{e}")),
        };
    }
    let obox = vec![bx; others.len()];
    for pt in crate::sampling::probe_points(&obox, 16) {
        let e = fixed.substitute(&|v| others.iter().position(|o| o == v).map(|k| Expr::Const(pt[k])));
        if let Ok(Convexity::NonconvexWitness(w)) = verdict(&e) {
            return Finding::fails(format!("indefinite Hessian at {w} with other followers at {pt:?}"));
        }
    }
    Finding::unknown("Hessian depends on other followers; no violation sampled")
}

/// A direction `d` with `g_j(x, y0 + t d) ≤ 0` for all `t ≥ 0` and all `j`,
/// shown by the signs of the polynomial coefficients in `t`.
fn feasible_ray(game: &Game, f: usize, x: &[f64], y0: &[f64]) -> Option<Vec<f64>> {
    let p = &game.players[f];
    let fp = &game.problem.followers[f];
    let n = p.vars.len();
    let t = VarId::new("t", 0);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if n <= 3 {
        for_each_product(&vec![vec![-1.0, 0.0, 1.0]; n], |d| {
            if d.iter().any(|&v| v != 0.0) {
                dirs.push(d.to_vec());
            }
        });
    } else {
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut d = vec![0.0; n];
                d[i] = s;
                dirs.push(d);
            }
        }
    }
    'dirs: for d in dirs {
        for g in &fp.constraints {
            let fixed = fix_leader(g, x);
            let ray = fixed.substitute(&|v| {
                p.vars.iter().position(|w| w == v).map(|k| {
                    Expr::Sum(vec![Expr::Const(y0[k]), Expr::Product(vec![Expr::Const(d[k]), Expr::Var(t.clone())])])
                })
            });
            let Some(c) = ray.to_polynomial().univariate_coefficients(&t) else { continue 'dirs };
            let scale = c.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
            if c[0] > game.cfg.feas_tol || c[1..].iter().any(|&v| v > 1e-12 * scale) {
                continue 'dirs;
            }
        }
        return Some(d);
    }
    None
}

/// Nonzero `d` with `H_j d = 0` and `c_jᵀ d ≤ 0` for every convex quadratic
/// piece `½ yᵀH_j y + c_jᵀ y + d_j`; such `d` exist iff the (nonempty)
/// feasible set is unbounded.
fn recession_direction(pieces: &[(Matrix, Vec<f64>, f64)], n: usize) -> Option<Vec<f64>> {
    let stacked: Matrix = pieces.iter().flat_map(|(h, _, _)| h.iter().cloned()).collect();
    let basis = null_space(&stacked, n, 1e-6);
    let k = basis.len();
    if k == 0 {
        return None;
    }
    let a: Matrix = pieces.iter().map(|(_, c, _)| basis.iter().map(|b| b.iter().zip(c).map(|(p, q)| p * q).sum()).collect()).collect();
    let to_y = |w: &[f64]| -> Vec<f64> { (0..n).map(|i| basis.iter().zip(w).map(|(b, wk)| b[i] * wk).sum()).collect() };
    let scale = a.iter().flatten().fold(1.0, |s: f64, v| s.max(v.abs()));
    let ok = |w: &[f64]| a.iter().all(|row| row.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() <= 1e-10 * scale);
    if rank(&a, 1e-9) < k {
        let w = null_space(&a, k, 1e-6).into_iter().next().unwrap_or_else(|| {
            let mut e = vec![0.0; k];
            e[0] = 1.0;
            e
        });
        return Some(to_y(&w));
    }
    for s in subsets_of_size(a.len(), k - 1) {
        let sub: Matrix = s.iter().map(|&i| a[i].clone()).collect();
        if rank(&sub, 1e-9) != k - 1 {
            continue;
        }
        for w in null_space(&sub, k, 1e-6) {
            for sign in [1.0, -1.0] {
                let ws: Vec<f64> = w.iter().map(|v| v * sign).collect();
                if ok(&ws) {
                    return Some(to_y(&ws));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_slmfg;

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn lens_best_response_at_two() {
        let p = builtin_slmfg("ex1");
        let g = Game::new(&p, &cfg()).unwrap();
        let br = g.best_response(0, &[2.0], &[0.3, 0.1, 5.0, 5.0]).unwrap();
        assert_eq!(br.len(), 1);
        assert!(dist_inf(&br[0], &[-1.0, -1.0]) < 1e-8, "{br:?}");
    }

    #[test]
    fn linear_follower_response() {
        let p = builtin_slmfg("ex3");
        let g = Game::new(&p, &cfg()).unwrap();
        let br = g.best_response(0, &[1.0 / 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(br.len(), 1);
        assert!((br[0][0] - 2.0 / 3.0).abs() < 1e-8, "{br:?}");
    }

    #[test]
    fn negative_leader_makes_follower_unbounded() {
        let p = builtin_slmfg("ex2");
        let g = Game::new(&p, &cfg()).unwrap();
        assert!(matches!(g.best_response(0, &[-1.0], &[0.0, 0.0]), Err(NepError::Unbounded { .. })));
    }

    #[test]
    fn equilibria_of_examples() {
        let p1 = builtin_slmfg("ex1");
        let g1 = Game::new(&p1, &cfg()).unwrap();
        let s = g1.solve_nep(&[2.0]).unwrap();
        assert_eq!(s.equilibria.len(), 1);
        assert!(dist_inf(&s.equilibria[0].point, &[-1.0, -1.0, -1.0, -1.0]) < 1e-8);

        let p3 = builtin_slmfg("ex3");
        let g3 = Game::new(&p3, &cfg()).unwrap();
        let s = g3.solve_nep(&[0.0]).unwrap();
        assert_eq!(s.equilibria.len(), 1);
        assert!(dist_inf(&s.equilibria[0].point, &[1.0, 1.0]) < 1e-8);

        let p2 = builtin_slmfg("ex2");
        let g2 = Game::new(&p2, &cfg()).unwrap();
        let s = g2.solve_nep(&[1.0]).unwrap();
        assert_eq!(s.equilibria.len(), 1);
        assert!(dist_inf(&s.equilibria[0].point, &[0.0, 0.0]) < 1e-3);
        let s = g2.solve_nep(&[0.0]).unwrap();
        assert!(s.continuum_suspected);
    }

    #[test]
    fn nash_checks() {
        let p1 = builtin_slmfg("ex1");
        let g1 = Game::new(&p1, &cfg()).unwrap();
        let c = is_nash_equilibrium(&g1, &[0.0], &[0.0; 4], 1e-6).unwrap();
        assert!(c.is_equilibrium());
        assert!(c.certificate.kkt_residual() > 0.5);

        let p3 = builtin_slmfg("ex3");
        let g3 = Game::new(&p3, &cfg()).unwrap();
        assert!(is_nash_equilibrium(&g3, &[0.0], &[1.0, 1.0], 1e-6).unwrap().is_equilibrium());
        let c = is_nash_equilibrium(&g3, &[0.0], &[0.5, 0.5], 1e-6).unwrap();
        assert_eq!(c.verdict, NashVerdict::NotEquilibrium);
        assert!(c.certificate.max_gap() > 0.4);
        let c = is_nash_equilibrium(&g3, &[0.0], &[2.0, 1.0], 1e-6).unwrap();
        assert!(matches!(c.verdict, NashVerdict::Infeasible { .. }));
    }

    #[test]
    fn brute_force_matches_closed_forms() {
        let grid = GridSpec::new(-3.0, 3.0, 0.05);
        let b = brute_force_nep(&builtin_slmfg("ex3"), &[0.0], &grid);
        assert_eq!(b.points.len(), 1);
        assert!(dist_inf(&b.points[0], &[1.0, 1.0]) < 1e-9);
        let b = brute_force_nep(&builtin_slmfg("ex1"), &[2.0], &grid);
        assert!(b.points.iter().any(|p| dist_inf(p, &[-1.0, -1.0, -1.0, -1.0]) < 1e-9));
        let b = brute_force_nep(&builtin_slmfg("ex2"), &[-1.0], &grid);
        assert!(b.on_boundary);
    }

    #[test]
    fn existence_hypotheses() {
        let p1 = builtin_slmfg("ex1");
        let g1 = Game::new(&p1, &cfg()).unwrap();
        let r = check_existence_hypotheses(&g1, &[1.0], (-3.0, 3.0)).unwrap();
        assert!(r.iter().all(ExistenceReport::all_hold), "{r:?}");

        let p2 = builtin_slmfg("ex2");
        let g2 = Game::new(&p2, &cfg()).unwrap();
        let r = check_existence_hypotheses(&g2, &[-1.0], (-3.0, 3.0)).unwrap();
        assert_eq!(r[0].nonempty.status, Status::Holds);
        assert_eq!(r[0].convex_set.status, Status::Holds);
        assert_eq!(r[0].compact.status, Status::Fails);

        let p3 = builtin_slmfg("ex3");
        let g3 = Game::new(&p3, &cfg()).unwrap();
        let r = check_existence_hypotheses(&g3, &[0.25], (-3.0, 3.0)).unwrap();
        assert_eq!(r[0].convex_objective.status, Status::Holds);
        assert_eq!(r[0].compact.status, Status::Fails);
    }
}
