//! Expected facts of the built-in entries, each bound to the operation that
//! checks it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::config::Config;
use crate::cq::{active_ranks, check_crcq, check_slater, CrcqVerdict, SlaterVerdict};
use crate::gnep::{check_reduction_equivalence, joint_convexity, reduce_grouped_to_nep, reduce_rosen_to_opt, GnepError};
use crate::model::{GnepProblem, Problem, SlmfgProblem};
use crate::mpcc::{build_mpcc, is_mpcc_feasible, KktKernel};
use crate::multipliers::multiplier_polytope;
use crate::nep::{is_nash_equilibrium, Game};
use crate::report::Status;
use crate::verify::{
    gate_global_to_game, gate_vertex_crcq, grid_global_slmfg, is_local_min_mpcc, is_local_min_slmfg, Ball,
    GateStatus, GlobalGrid, LocalVerdict,
};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    /// Stated with the worked example.
    Stated,
    /// Computed independently (closed form or grid enumeration).
    Derived,
    /// Holds by construction of a synthetic instance.
    Constructed,
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::Stated => "stated",
            Source::Derived => "derived",
            Source::Constructed => "constructed",
        }
    }
}

/// What the bound checker saw.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub value: String,
    pub passed: bool,
}

fn obs(passed: bool, value: String) -> Observation {
    Observation { value, passed }
}

#[derive(Clone, Debug)]
pub struct Fact {
    pub kind: &'static str,
    pub location: &'static str,
    pub expected: &'static str,
    pub source: Source,
    /// Name of the operation that checks the fact.
    pub checker: &'static str,
    pub check: fn(&Problem, &Config) -> Observation,
}

const fn fact(
    kind: &'static str,
    location: &'static str,
    expected: &'static str,
    source: Source,
    checker: &'static str,
    check: fn(&Problem, &Config) -> Observation,
) -> Fact {
    Fact { kind, location, expected, source, checker, check }
}

fn game_problem(p: &Problem) -> &SlmfgProblem {
    p.as_slmfg().expect("game entry")
}

fn gnep_problem(p: &Problem) -> &GnepProblem {
    p.as_gnep().expect("GNEP entry")
}

fn with_game(p: &Problem, cfg: &Config, f: impl FnOnce(&Game) -> Observation) -> Observation {
    match Game::new(game_problem(p), cfg) {
        Ok(g) => f(&g),
        Err(e) => obs(false, format!("invalid problem: {e}")),
    }
}

fn err_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn sci(v: f64) -> String {
    format!("{v:.1e}")
}

fn ex1_equilibria(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let mut worst = 0.0f64;
        for x in [0.5, 1.0, 2.0] {
            let want = [-(x / 2.0).sqrt(), -x / 2.0, -(x / 2.0).sqrt(), -x / 2.0];
            match g.solve_nep(&[x]) {
                Ok(s) if s.equilibria.len() == 1 => worst = worst.max(err_inf(&s.equilibria[0].point, &want)),
                Ok(s) => return obs(false, format!("{} equilibria at x = {x}", s.equilibria.len())),
                Err(e) => return obs(false, format!("x = {x}: {e}")),
            }
        }
        obs(worst <= 1e-6, format!("max error {}", sci(worst)))
    })
}

fn ex1_multipliers(p: &Problem, cfg: &Config) -> Observation {
    let sp = game_problem(p);
    let mut worst = 0.0f64;
    for x in [0.5, 1.0, 2.0] {
        let y = [-(x / 2.0).sqrt(), -x / 2.0, -(x / 2.0).sqrt(), -x / 2.0];
        let want = 1.0 / (4.0 * (x / 2.0).sqrt());
        for f in 0..2 {
            match multiplier_polytope(sp, f, &[x], &y, cfg.activity_tol).and_then(|m| m.enumerate_vertices()) {
                Ok(v) if v.len() == 1 => worst = worst.max(err_inf(&v[0], &[want, want])),
                Ok(v) => return obs(false, format!("{} vertices at x = {x}", v.len())),
                Err(e) => return obs(false, format!("{e}")),
            }
        }
    }
    obs(worst <= 1e-6, format!("singleton, max error {}", sci(worst)))
}

fn slater_statuses(p: &Problem, cfg: &Config, x: f64) -> Vec<Status> {
    match Game::new(game_problem(p), cfg) {
        Ok(g) => (0..g.players.len()).map(|f| check_slater(&g, f, &[x]).status()).collect(),
        Err(_) => Vec::new(),
    }
}

fn ex1_slater_collapsed(p: &Problem, cfg: &Config) -> Observation {
    let s = slater_statuses(p, cfg, 0.0);
    let certified = with_game(p, cfg, |g| {
        let all = (0..g.players.len())
            .all(|f| matches!(check_slater(g, f, &[0.0]).verdict, SlaterVerdict::FailsCertified { .. }));
        obs(all, String::new())
    });
    obs(certified.passed && !s.is_empty(), format!("{s:?}"))
}

fn ex1_slater_open(p: &Problem, cfg: &Config) -> Observation {
    let s = slater_statuses(p, cfg, 1.0);
    obs(!s.is_empty() && s.iter().all(|v| *v == Status::Holds), format!("{s:?}"))
}

fn ex1_no_multipliers(p: &Problem, cfg: &Config) -> Observation {
    let sp = game_problem(p);
    let empty: Vec<bool> = (0..2)
        .map(|f| multiplier_polytope(sp, f, &[0.0], &[0.0; 4], cfg.activity_tol).map(|m| m.is_empty()).unwrap_or(false))
        .collect();
    obs(empty.iter().all(|e| *e), format!("empty per follower {empty:?}"))
}

fn ex2_all_equilibria(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let pts = [[0.7, -1.3], [0.0, 0.0], [-2.0, 2.5]];
        let ok: Vec<bool> = pts
            .iter()
            .map(|y| is_nash_equilibrium(g, &[0.0], y, cfg.tol).map(|c| c.is_equilibrium()).unwrap_or(false))
            .collect();
        obs(ok.iter().all(|b| *b), format!("equilibrium at sampled y: {ok:?}"))
    })
}

fn ex2_unbounded(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| match g.solve_nep(&[-1.0]) {
        Ok(s) => obs(false, format!("{} equilibria", s.equilibria.len())),
        Err(e) => obs(true, format!("{e}")),
    })
}

fn ex2_mpcc_only_at_zero(p: &Problem, cfg: &Config) -> Observation {
    let m = build_mpcc(game_problem(p));
    let at_zero = is_mpcc_feasible(&m, &[0.0], &[0.0, 0.0], &[0.0, 0.0], cfg.mpcc_tol);
    let kernel = KktKernel::new(&m);
    let completes = kernel.complete(&[1.0, 0.0, 0.0], &[0.0; 2], &[10.0; 2], cfg.activity_tol, cfg.mpcc_tol).is_some();
    obs(at_zero && !completes, format!("x=0: {at_zero}, x=1 completable: {completes}"))
}

fn grid(x_box: (f64, f64), y_box: (f64, f64), step: f64) -> GlobalGrid {
    let mut g = GlobalGrid::new(x_box, y_box, step);
    g.solver_candidates = true;
    g
}

fn global_best(p: &Problem, cfg: &Config, want: &[f64], step: f64) -> Observation {
    with_game(p, cfg, |g| {
        let scan = grid_global_slmfg(g, &grid((-2.0, 2.0), (-2.0, 2.0), step));
        match scan.best {
            Some(b) => {
                let e = err_inf(&b, want);
                let shown: Vec<String> = b.iter().map(|v| format!("{v:.4}")).collect();
                obs(e <= step + 1e-9, format!("({}) value {:.6}", shown.join(", "), scan.value))
            }
            None => obs(false, "no feasible grid point".into()),
        }
    })
}

fn ex2_global(p: &Problem, cfg: &Config) -> Observation {
    global_best(p, cfg, &[1.0, 0.0, 0.0], 0.1)
}

fn ex2_gate(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let m = build_mpcc(game_problem(p));
        let r = gate_global_to_game(g, &m, &[0.0], &[0.0, 0.0], &[0.0, 0.0], &grid((-2.0, 2.0), (-2.0, 2.0), 0.1));
        obs(matches!(r.status, GateStatus::HypothesisFailed(_)), format!("{}", r.status))
    })
}

fn ex3_global(p: &Problem, cfg: &Config) -> Observation {
    global_best(p, cfg, &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0], 0.05)
}

const KINK_BALL: Ball = Ball { radius: 0.15, step: 0.01 };

fn ex3_mpcc_split(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let m = build_mpcc(game_problem(p));
        let v = |lam: &[f64]| is_local_min_mpcc(g, &m, &[0.0], &[1.0, 1.0], lam, KINK_BALL).map(|r| r.verdict);
        let upper = v(&[0.0, 1.0, 0.0, 1.0]);
        let lower = v(&[1.0, 0.0, 1.0, 0.0]);
        let ok = upper == Ok(LocalVerdict::NoBetterNeighborFound)
            && matches!(lower, Ok(LocalVerdict::BetterNeighbor { .. }));
        let name = |r: &Result<LocalVerdict, _>| match r {
            Ok(LocalVerdict::NoBetterNeighborFound) => "no-better-neighbor",
            Ok(LocalVerdict::BetterNeighbor { .. }) => "better-neighbor",
            Err(_) => "error",
        };
        obs(ok, format!("lambda=(0,1): {}, lambda=(1,0): {}", name(&upper), name(&lower)))
    })
}

fn ex3_game_not_local(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| match is_local_min_slmfg(g, &[0.0], &[1.0, 1.0], KINK_BALL) {
        Ok(r) => match r.verdict {
            LocalVerdict::BetterNeighbor { point, objective_gap } => {
                let shown: Vec<String> = point.iter().map(|v| format!("{v:.2}")).collect();
                obs(true, format!("better neighbor ({}) gap {objective_gap:.4}", shown.join(", ")))
            }
            LocalVerdict::NoBetterNeighborFound => obs(false, "no better neighbor".into()),
        },
        Err(e) => obs(false, format!("{e}")),
    })
}

fn vertices_are(p: &Problem, cfg: &Config, x: f64, y: &[f64], want: &[[f64; 2]]) -> Observation {
    let sp = game_problem(p);
    let mut seen = Vec::new();
    let mut ok = true;
    for f in 0..sp.followers.len() {
        match multiplier_polytope(sp, f, &[x], y, cfg.activity_tol).and_then(|m| m.enumerate_vertices()) {
            Ok(v) => {
                ok &= v.len() == want.len() && v.iter().zip(want).all(|(a, b)| err_inf(a, b) <= 1e-9);
                seen.push(v.len());
            }
            Err(e) => return obs(false, format!("{e}")),
        }
    }
    obs(ok, format!("vertex counts {seen:?}"))
}

fn ex3_vertices(p: &Problem, cfg: &Config) -> Observation {
    vertices_are(p, cfg, 0.0, &[1.0, 1.0], &[[1.0, 0.0], [0.0, 1.0]])
}

fn ex4_vertices(p: &Problem, cfg: &Config) -> Observation {
    vertices_are(p, cfg, 0.0, &[0.0; 4], &[[1.0, 0.0], [0.0, 1.0]])
}

fn ex4_ranks(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let at: Vec<usize> = active_ranks(g, &[0.0], &[0.0; 4]).into_values().collect();
        let mut near = Vec::new();
        for k in 1..=10 {
            let x = 0.01 * k as f64;
            match g.solve_nep(&[x]) {
                Ok(s) => near.extend(active_ranks(g, &[x], &s.equilibria[0].point).into_values()),
                Err(e) => return obs(false, format!("x = {x}: {e}")),
            }
        }
        let ok = at.iter().all(|r| *r == 1) && near.iter().all(|r| *r == 2);
        obs(ok, format!("at point {at:?}, nearby min {} max {}", near.iter().min().unwrap_or(&0), near.iter().max().unwrap_or(&0)))
    })
}

fn ex4_crcq(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| match check_crcq(g, 0, &[0.0], &[0.0, 0.0], 1e-2, 64, cfg.seed) {
        Ok(r) => match r.verdict {
            CrcqVerdict::ViolationWitness { rank1, rank2, .. } => {
                obs(true, format!("rank {rank1} at the point, {rank2} nearby"))
            }
            CrcqVerdict::ConsistentWithCrcq => obs(false, "no rank change sampled".into()),
        },
        Err(e) => obs(false, format!("{e}")),
    })
}

fn ex4_multiplier_limit(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let x = 1e-4;
        let y = match g.solve_nep(&[x]) {
            Ok(s) => s.equilibria[0].point.clone(),
            Err(e) => return obs(false, format!("{e}")),
        };
        match multiplier_polytope(g.problem, 0, &[x], &y, cfg.activity_tol).and_then(|m| m.enumerate_vertices()) {
            Ok(v) if v.len() == 1 => {
                let e = err_inf(&v[0], &[0.5, 0.5]);
                obs(e <= 1e-4, format!("({:.6}, {:.6})", v[0][0], v[0][1]))
            }
            Ok(v) => obs(false, format!("{} vertices", v.len())),
            Err(e) => obs(false, format!("{e}")),
        }
    })
}

fn ex4_gate(p: &Problem, cfg: &Config) -> Observation {
    with_game(p, cfg, |g| {
        let m = build_mpcc(game_problem(p));
        match gate_vertex_crcq(g, &m, &[0.0], &[0.0; 4], Ball::default(), 1e-2, 64) {
            Ok(r) => obs(r.failed("crcq"), format!("{}", r.status)),
            Err(e) => obs(false, format!("{e}")),
        }
    })
}

fn gnep1_shape(p: &Problem, cfg: &Config) -> Observation {
    match reduce_grouped_to_nep(gnep_problem(p), false, cfg) {
        Ok(r) => {
            let dims: Vec<usize> = r.followers.iter().map(|f| f.dim()).collect();
            obs(dims == [2, 2] && r.validate().is_empty(), format!("pseudo-follower dims {dims:?}"))
        }
        Err(e) => obs(false, format!("{e}")),
    }
}

fn all_jointly_convex(p: &Problem, cfg: &Config) -> Observation {
    let j = joint_convexity(gnep_problem(p), cfg);
    let st: Vec<Status> = j.iter().map(|j| j.finding.status).collect();
    obs(!st.is_empty() && st.iter().all(|s| *s == Status::Holds), format!("{st:?}"))
}

fn equivalence_at(p: &Problem, cfg: &Config, xs: &[f64], want_coincide: bool) -> Observation {
    let mut parts = Vec::new();
    let mut ok = true;
    for &x in xs {
        match check_reduction_equivalence(gnep_problem(p), &[x], (-2.0, 2.0), 0.05, cfg) {
            Ok(r) => {
                ok &= r.coincide() == want_coincide;
                parts.push(format!("x={x}: {} vs {} points", r.rgnep.len(), r.reduced.len()));
            }
            Err(e) => return obs(false, format!("{e}")),
        }
    }
    obs(ok, parts.join("; "))
}

fn gnep1_slack(p: &Problem, cfg: &Config) -> Observation {
    equivalence_at(p, cfg, &[0.0, 0.5], true)
}

fn gnep1_binding(p: &Problem, cfg: &Config) -> Observation {
    equivalence_at(p, cfg, &[1.0], false)
}

fn trivial_program(p: &Problem, cfg: &Config) -> Observation {
    let g = gnep_problem(p);
    match reduce_rosen_to_opt(g, &[0.0], false, cfg) {
        Ok(o) => obs(
            o.vars.len() == 2 && o.constraints == g.groups[0].shared,
            format!("{} variables, {} constraints", o.vars.len(), o.constraints.len()),
        ),
        Err(e) => obs(false, format!("{e}")),
    }
}

fn trivial_equivalence(p: &Problem, cfg: &Config) -> Observation {
    equivalence_at(p, cfg, &[-1.0, 0.7], true)
}

fn nonconvex_refused(p: &Problem, cfg: &Config) -> Observation {
    let g = gnep_problem(p);
    match (reduce_grouped_to_nep(g, false, cfg), reduce_grouped_to_nep(g, true, cfg)) {
        (Err(GnepError::NotJointlyConvex { .. }), Ok(_)) => obs(true, "refused; accepted with override".into()),
        (a, b) => obs(false, format!("without override ok={}, with override ok={}", a.is_ok(), b.is_ok())),
    }
}

/// The facts of entry `id`, in a fixed order.
pub fn facts_of(id: &str) -> Vec<Fact> {
    use Source::*;
    match id {
        "ex1" => vec![
            fact("equilibrium", "x in {0.5,1,2}", "per follower (-sqrt(x/2), -x/2) within 1e-6", Stated, "solve_nep", ex1_equilibria),
            fact("multipliers", "x in {0.5,1,2}", "singleton 1/(4 sqrt(x/2)) within 1e-6", Stated, "multiplier_polytope", ex1_multipliers),
            fact("slater", "x=0", "fails (certified) for both followers", Stated, "check_slater", ex1_slater_collapsed),
            fact("slater", "x=1", "holds for both followers", Derived, "check_slater", ex1_slater_open),
            fact("multipliers", "x=0, y=0", "empty: MPCC infeasible", Stated, "multiplier_polytope", ex1_no_multipliers),
        ],
        "ex2" => vec![
            fact("equilibrium", "x=0", "every y is an equilibrium", Stated, "is_nash_equilibrium", ex2_all_equilibria),
            fact("no-equilibrium", "x=-1", "followers unbounded", Derived, "solve_nep", ex2_unbounded),
            fact("mpcc-feasible", "x in {0,1}, y=0", "feasible at x=0 only", Stated, "is_mpcc_feasible", ex2_mpcc_only_at_zero),
            fact("global", "grid step 0.1", "(1,0,0)", Stated, "grid_global_slmfg", ex2_global),
            fact("gate", "t2.2 at (0,0,0)", "HypothesisFailed", Stated, "gate_global_to_game", ex2_gate),
        ],
        "ex3" => vec![
            fact("global", "grid step 0.05", "(1/3,2/3,2/3) within one step", Stated, "grid_global_slmfg", ex3_global),
            fact("multipliers", "(0,1,1)", "vertices {(1,0),(0,1)} per follower", Derived, "enumerate_vertices", ex3_vertices),
            fact("mpcc-local", "(0,1,1)", "local for lambda=(0,1), not for (1,0)", Stated, "is_local_min_mpcc", ex3_mpcc_split),
            fact("game-local", "(0,1,1)", "not a local solution", Stated, "is_local_min_slmfg", ex3_game_not_local),
        ],
        "ex4" => vec![
            fact("multipliers", "x=0, y=0", "vertices {(1,0),(0,1)}", Stated, "enumerate_vertices", ex4_vertices),
            fact("rank", "x=0 and x in (0,0.1]", "1 at the point, 2 nearby", Stated, "active_ranks", ex4_ranks),
            fact("crcq", "x=0, y=0", "violation witness", Stated, "check_crcq", ex4_crcq),
            fact("multipliers", "x=1e-4", "within 1e-4 of (1/2,1/2)", Stated, "multiplier_polytope", ex4_multiplier_limit),
            fact("gate", "t2.4 at (0,0,0,0,0)", "HypothesisFailed(crcq)", Stated, "gate_vertex_crcq", ex4_gate),
        ],
        "gnep1" => vec![
            fact("reduction", "groups ga, gb", "2 pseudo-followers of dimension 2", Constructed, "reduce_grouped_to_nep", gnep1_shape),
            fact("joint-convexity", "budgets", "certified", Constructed, "joint_convexity", all_jointly_convex),
            fact("equivalence", "x in {0,0.5}", "sets coincide", Derived, "check_reduction_equivalence", gnep1_slack),
            fact("equivalence", "x=1", "sets differ: split budgets form a continuum", Derived, "check_reduction_equivalence", gnep1_binding),
        ],
        "gnep-trivial" => vec![
            fact("reduction", "x=0", "min y1^2+y2^2 s.t. y1+y2<=1", Derived, "reduce_rosen_to_opt", trivial_program),
            fact("equivalence", "x in {-1,0.7}", "sets coincide", Derived, "check_reduction_equivalence", trivial_equivalence),
        ],
        "gnep-nonconvex" => vec![fact(
            "joint-convexity",
            "x<0",
            "refused unless overridden",
            Derived,
            "reduce_grouped_to_nep",
            nonconvex_refused,
        )],
        _ => Vec::new(),
    }
}
