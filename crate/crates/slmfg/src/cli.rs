//! Subcommands of the `slmfg` tool.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use slmfg_core::corpus::{self, IDS};
use slmfg_core::cq::{check_crcq, check_slater, check_svensson, CrcqVerdict, SlaterVerdict};
use slmfg_core::gnep::{check_reduction_equivalence, joint_convexity, reduce_grouped_to_nep, GnepError};
use slmfg_core::model::{GnepProblem, Problem, SlmfgProblem};
use slmfg_core::mpcc::{build_mpcc, is_mpcc_feasible, kkt_residual, MpccProblem};
use slmfg_core::multipliers::multiplier_polytope_for;
use slmfg_core::nep::{Game, NepError};
use slmfg_core::report::{Finding, Status};
use slmfg_core::verify::{
    gate_all_multipliers, gate_global_to_game, gate_local_to_mpcc, gate_vertex_crcq, is_local_min_mpcc,
    is_local_min_slmfg, Ball, Gate, GateReport, GateStatus, GlobalGrid, LocalMinVerdict, LocalVerdict,
};

use crate::config::{parse_list, Overrides, RunConfig};
use crate::format::{load_file, render_problem, save_mpcc, save_problem};
use crate::report::{indices, Record, Report};

#[derive(Debug, Parser)]
#[command(name = "slmfg", version, about = "Single-leader multi-follower games: equilibria, KKT reformulation, multipliers and checks")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Cq {
    Slater,
    Crcq,
    Svensson,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Follower equilibria at a leader decision
    SolveNep {
        #[arg(long)]
        problem: PathBuf,
        /// Leader decision, comma separated
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Write the KKT reformulation as a problem file with an `mpcc` section
    Reformulate {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// KKT residuals of a point `x,y,λ` of a reformulation file
    CheckPoint {
        #[arg(long)]
        mpcc: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Multiplier polytope of one follower and its vertices
    Vertices {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        follower: String,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Concatenated follower vector
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Constraint qualification checks
    CheckCq {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum)]
        which: Cq,
        /// Follower id; all followers when omitted
        #[arg(long)]
        follower: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// The follower's own block, for CRCQ
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        /// Sampling radius for CRCQ
        #[arg(long, default_value_t = 0.01)]
        radius: f64,
    },
    /// Grid scan of a neighborhood for a better feasible point
    VerifyLocal {
        #[arg(long)]
        problem: PathBuf,
        /// Scan the reformulation; the point then carries `λ`
        #[arg(long)]
        mpcc: bool,
        /// `x,y` or `x,y,λ`
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = 0.15)]
        radius: f64,
        /// Scan spacing; radius/15 when omitted
        #[arg(long)]
        step: Option<f64>,
    },
    /// Check the hypotheses and the conclusion of a transfer result at a point
    Gate {
        #[arg(long)]
        problem: PathBuf,
        /// t2.1 local-to-mpcc, t2.2 global-to-game, t2.3 all-multipliers, t2.4 vertex-crcq
        #[arg(long)]
        theorem: String,
        /// `x,y`, or `x,y,λ` for t2.2
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = 0.15)]
        radius: f64,
        #[arg(long)]
        step: Option<f64>,
        /// Random multipliers per follower tested by t2.3
        #[arg(long, default_value_t = 4)]
        multiplier_samples: usize,
        /// Sampling radius of the CRCQ check in t2.4
        #[arg(long, default_value_t = 0.01)]
        crcq_radius: f64,
    },
    /// Replace each group of a shared-constraint game by one follower
    ReduceGnep {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip the joint-convexity certificate
        #[arg(long)]
        assume_jointly_convex: bool,
    },
    /// Compare grid equilibria of a shared-constraint game and of its reduction
    CheckGnepEquiv {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Built-in problems and their expected facts
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusAction {
    List,
    Show { id: String },
    Run { id: Option<String> },
}

/// A report and whether it carries a negative verdict.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub negative: bool,
}

impl Outcome {
    fn ok(report: Report) -> Self {
        Outcome { report, negative: false }
    }
}

fn list(s: &str, what: &str) -> Result<Vec<f64>> {
    parse_list(s).map_err(|e| anyhow!("--{what}: {e}"))
}

fn load(path: &Path) -> Result<Problem> {
    Ok(load_file(path)?.problem)
}

fn slmfg(path: &Path) -> Result<SlmfgProblem> {
    match load(path)? {
        Problem::Slmfg(p) => Ok(p),
        Problem::Gnep(_) => bail!("{} has shared constraints; reduce it with `reduce-gnep` first", path.display()),
    }
}

fn gnep(path: &Path) -> Result<GnepProblem> {
    match load(path)? {
        Problem::Gnep(g) => Ok(g),
        Problem::Slmfg(_) => bail!("{} has no groups", path.display()),
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Holds => "holds",
        Status::Fails => "fails",
        Status::Unknown => "unknown",
    }
}

fn finding(kind: &str, name: &str, f: &Finding) -> Record {
    Record::new(kind).field("name", name).field("status", status_name(f.status)).field("note", f.note.clone()).mark(f.status)
}

/// `x`, `y` and the rest of a concatenated point.
fn split(point: &[f64], nx: usize, ny: usize) -> Result<(&[f64], &[f64], &[f64])> {
    if point.len() < nx + ny {
        bail!("--point has {} entries, expected at least {}", point.len(), nx + ny);
    }
    let (x, rest) = point.split_at(nx);
    let (y, lam) = rest.split_at(ny);
    Ok((x, y, lam))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    let core = cfg.core();
    match &cli.command {
        Command::SolveNep { problem, x } => {
            let p = slmfg(problem)?;
            let x = list(x, "x")?;
            let game = Game::new(&p, &core)?;
            let mut r = Report::new("solve-nep", &cfg);
            r.push(Record::new("input").field("problem", problem.display().to_string()).vec("x", &x));
            match game.solve_nep(&x) {
                Ok(sol) => {
                    for (i, e) in sol.equilibria.iter().enumerate() {
                        r.push(
                            Record::new("equilibrium")
                                .field("index", i.to_string())
                                .vec("y", &e.point)
                                .num("gap", e.max_gap())
                                .num("residual", e.kkt_residual())
                                .field("slater", format!("{:?}", e.slater).replace(' ', "")),
                        );
                    }
                    r.push(
                        Record::new("summary")
                            .field("equilibria", sol.equilibria.len().to_string())
                            .field("continuum-suspected", sol.continuum_suspected.to_string())
                            .field("starts", sol.starts.to_string()),
                    );
                    Ok(Outcome::ok(r))
                }
                Err(e @ NepError::Dimension { .. }) => Err(e.into()),
                Err(e) => {
                    r.push(Record::new("no-equilibrium").field("reason", e.to_string()));
                    Ok(Outcome { report: r, negative: true })
                }
            }
        }
        Command::Reformulate { problem, out } => {
            let p = slmfg(problem)?;
            let m = build_mpcc(&p);
            save_mpcc(out, &m)?;
            let mut r = Report::new("reformulate", &cfg);
            let blocks: Vec<String> = m.multipliers.iter().map(|(id, n)| format!("l.{id}:{n}")).collect();
            r.push(
                Record::new("mpcc")
                    .field("out", out.display().to_string())
                    .field("variables", m.dim().to_string())
                    .field("multipliers", blocks.join(",")),
            );
            Ok(Outcome::ok(r))
        }
        Command::CheckPoint { mpcc, point } => {
            let file = load_file(mpcc)?;
            let m: MpccProblem = file.mpcc.ok_or_else(|| anyhow!("{} has no mpcc section", mpcc.display()))?;
            let pt = list(point, "point")?;
            let (x, y, lam) = m.split(&pt)?;
            let res = kkt_residual(&m, x, y, lam)?;
            let mut r = Report::new("check-point", &cfg);
            r.push(
                Record::new("residual")
                    .num("stationarity", res.stationarity)
                    .num("feasibility", res.feasibility)
                    .num("sign", res.sign)
                    .num("complementarity", res.complementarity)
                    .num("total", res.total()),
            );
            r.push(Record::new("verdict").field("mpcc-feasible", is_mpcc_feasible(&m, x, y, lam, cfg.mpcc_tol).to_string()));
            Ok(Outcome::ok(r))
        }
        Command::Vertices { problem, follower, x, y } => {
            let p = slmfg(problem)?;
            let (x, y) = (list(x, "x")?, list(y, "y")?);
            let poly = multiplier_polytope_for(&p, follower, &x, &y, cfg.activity_tol)?;
            let mut r = Report::new("vertices", &cfg);
            r.push(Record::new("active").field("follower", follower.clone()).field("indices", indices(&poly.active.indices)).vec("values", &poly.active.values));
            for (i, row) in poly.a.iter().enumerate() {
                r.push(Record::new("a-row").field("row", i.to_string()).vec("entries", row));
            }
            r.push(Record::new("b").vec("entries", &poly.b));
            let empty = poly.is_empty();
            r.push(Record::new("polytope").field("empty", empty.to_string()));
            if !empty {
                for v in poly.enumerate_vertices()? {
                    r.push(Record::new("vertex").vec("lambda", &v));
                }
            }
            Ok(Outcome::ok(r))
        }
        Command::CheckCq { problem, which, follower, x, y, radius } => {
            let p = slmfg(problem)?;
            let game = Game::new(&p, &core)?;
            let fs: Vec<usize> = match follower {
                Some(id) => vec![game.follower_position(id).ok_or_else(|| anyhow!("unknown follower {id}"))?],
                None => (0..game.players.len()).collect(),
            };
            let mut r = Report::new("check-cq", &cfg);
            match which {
                Cq::Slater => {
                    let x = list(x.as_deref().ok_or_else(|| anyhow!("--x is required for slater"))?, "x")?;
                    game.check_x(&x)?;
                    for f in fs {
                        let s = check_slater(&game, f, &x);
                        let mut rec = Record::new("slater").field("follower", s.follower.clone()).field("status", status_name(s.status()));
                        rec = match &s.verdict {
                            SlaterVerdict::Holds { witness } => rec.vec("witness", witness),
                            SlaterVerdict::FailsCertified { reason } => rec.field("certificate", reason.clone()),
                            SlaterVerdict::Unknown { note } => rec.field("note", note.clone()),
                        };
                        r.push(rec.num("max-g", s.max_value).field("convex", s.convex.to_string()).mark(s.status()));
                    }
                }
                Cq::Crcq => {
                    let x = list(x.as_deref().ok_or_else(|| anyhow!("--x is required for crcq"))?, "x")?;
                    let y = list(y.as_deref().ok_or_else(|| anyhow!("--y is required for crcq"))?, "y")?;
                    let [f] = fs[..] else { bail!("--follower is required for crcq") };
                    let c = check_crcq(&game, f, &x, &y, *radius, cfg.samples, cfg.seed)?;
                    r.push(Record::new("crcq-point").field("follower", c.follower.clone()).vec("point", &c.point).field("active", indices(&c.active)));
                    for ((s, rank), (lo, hi)) in c.ranks.iter().zip(&c.sampled) {
                        r.push(
                            Record::new("rank")
                                .field("subset", indices(s))
                                .field("at-point", rank.to_string())
                                .field("sampled-min", lo.to_string())
                                .field("sampled-max", hi.to_string()),
                        );
                    }
                    r.push(match &c.verdict {
                        CrcqVerdict::ConsistentWithCrcq => Record::new("crcq").field("verdict", "consistent").mark(Status::Unknown),
                        CrcqVerdict::ViolationWitness { subset, point1, point2, rank1, rank2 } => Record::new("crcq")
                            .field("verdict", "violation-witness")
                            .field("subset", indices(subset))
                            .vec("point1", point1)
                            .field("rank1", rank1.to_string())
                            .vec("point2", point2)
                            .field("rank2", rank2.to_string())
                            .mark(Status::Fails),
                    });
                }
                Cq::Svensson => {
                    for s in check_svensson(&game, cfg.grid_box, cfg.samples) {
                        if !fs.iter().any(|&f| game.players[f].id == s.follower) {
                            continue;
                        }
                        r.push(finding("objective-convex", &s.follower, &s.objective_convex));
                        let mut joint = finding("jointly-convex", &s.follower, &s.jointly_convex);
                        if let Some(w) = &s.joint_witness {
                            joint = joint.vec("u", &w.u).vec("v", &w.v).num("mid-value", w.mid_value).num("average", w.average);
                        }
                        r.push(joint);
                        let mut strict = finding("strictly-feasible", &s.follower, &s.strictly_feasible);
                        if let Some(w) = &s.strict_witness {
                            strict = strict.vec("witness", w);
                        }
                        r.push(strict);
                    }
                }
            }
            Ok(Outcome::ok(r))
        }
        Command::VerifyLocal { problem, mpcc, point, radius, step } => {
            let p = slmfg(problem)?;
            let game = Game::new(&p, &core)?;
            let pt = list(point, "point")?;
            let (x, y, lam) = split(&pt, game.nx, game.ny)?;
            let ball = Ball::new(*radius, step.unwrap_or(radius / 15.0));
            let v: LocalMinVerdict = if *mpcc {
                let m = build_mpcc(&p);
                if lam.len() != m.lambda_dim() {
                    bail!("--point carries {} multipliers, expected {}", lam.len(), m.lambda_dim());
                }
                is_local_min_mpcc(&game, &m, x, y, lam, ball)?
            } else {
                if !lam.is_empty() {
                    bail!("--point has {} extra entries; pass --mpcc to include multipliers", lam.len());
                }
                is_local_min_slmfg(&game, x, y, ball)?
            };
            let mut r = Report::new("verify-local", &cfg);
            r.push(
                Record::new("scan")
                    .field("problem", if *mpcc { "mpcc" } else { "game" })
                    .vec("point", &v.point)
                    .num("radius", v.ball.radius)
                    .num("step", v.ball.step)
                    .field("tested", v.tested.to_string()),
            );
            r.push(local_record("verdict", &v.verdict));
            Ok(Outcome::ok(r))
        }
        Command::Gate { problem, theorem, point, radius, step, multiplier_samples, crcq_radius } => {
            let gate = Gate::parse(theorem).ok_or_else(|| anyhow!("unknown theorem {theorem}; expected t2.1, t2.2, t2.3 or t2.4"))?;
            let p = slmfg(problem)?;
            let game = Game::new(&p, &core)?;
            let m = build_mpcc(&p);
            let pt = list(point, "point")?;
            let (x, y, lam) = split(&pt, game.nx, game.ny)?;
            if !lam.is_empty() && (gate != Gate::GlobalToGame || lam.len() != m.lambda_dim()) {
                bail!("--point has {} unexpected entries", lam.len());
            }
            let ball = Ball::new(*radius, step.unwrap_or(radius / 15.0));
            let g = match gate {
                Gate::LocalToMpcc => gate_local_to_mpcc(&game, &m, x, y, ball),
                Gate::GlobalToGame => {
                    let lam = if lam.is_empty() { first_vertices(&p, x, y, cfg.activity_tol)? } else { lam.to_vec() };
                    let mut grid = GlobalGrid::new(cfg.grid_box, cfg.grid_box, cfg.grid_step);
                    grid.solver_candidates = true;
                    gate_global_to_game(&game, &m, x, y, &lam, &grid)
                }
                Gate::AllMultipliers => gate_all_multipliers(&game, &m, x, y, ball, *multiplier_samples)?,
                Gate::VertexCrcq => gate_vertex_crcq(&game, &m, x, y, ball, *crcq_radius, cfg.samples)?,
            };
            let negative = matches!(g.status, GateStatus::ConclusionRefuted { .. });
            Ok(Outcome { report: gate_report(&cfg, &g), negative })
        }
        Command::ReduceGnep { problem, out, assume_jointly_convex } => {
            let g = gnep(problem)?;
            let mut r = Report::new("reduce-gnep", &cfg);
            for j in joint_convexity(&g, &core) {
                r.push(finding("joint-convexity", &format!("{}#{}", j.group, j.index), &j.finding));
            }
            match reduce_grouped_to_nep(&g, *assume_jointly_convex, &core) {
                Ok(p) => {
                    save_problem(out, &Problem::Slmfg(p.clone()))?;
                    r.push(
                        Record::new("reduced")
                            .field("out", out.display().to_string())
                            .field("followers", p.followers.len().to_string())
                            .field("assumed", assume_jointly_convex.to_string()),
                    );
                    Ok(Outcome::ok(r))
                }
                Err(GnepError::NotJointlyConvex { group, index, note }) => {
                    r.push(
                        Record::new("refused")
                            .field("group", group)
                            .field("index", index.to_string())
                            .field("reason", note)
                            .field("hint", "pass --assume-jointly-convex to override"),
                    );
                    Ok(Outcome { report: r, negative: true })
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::CheckGnepEquiv { problem, x } => {
            let g = gnep(problem)?;
            let x = list(x, "x")?;
            let e = check_reduction_equivalence(&g, &x, cfg.grid_box, cfg.grid_step, &core)?;
            let mut r = Report::new("check-gnep-equiv", &cfg);
            for j in &e.joint_convexity {
                r.push(finding("joint-convexity", &format!("{}#{}", j.group, j.index), &j.finding));
            }
            r.push(
                Record::new("sets")
                    .vec("x", &e.x)
                    .field("rgnep", e.rgnep.len().to_string())
                    .field("reduced", e.reduced.len().to_string())
                    .field("truncated", e.truncated.to_string()),
            );
            for p in &e.only_rgnep {
                r.push(Record::new("only-rgnep").vec("y", p));
            }
            for p in &e.only_reduced {
                r.push(Record::new("only-reduced").vec("y", p));
            }
            let same = e.coincide();
            r.push(Record::new("verdict").field("coincide", same.to_string()).mark(if same { Status::Holds } else { Status::Fails }));
            Ok(Outcome { report: r, negative: !same })
        }
        Command::Corpus { action } => corpus_command(&cfg, action),
    }
}

fn local_record(kind: &str, v: &LocalVerdict) -> Record {
    match v {
        LocalVerdict::NoBetterNeighborFound => Record::new(kind).field("result", "no-better-neighbor-found"),
        LocalVerdict::BetterNeighbor { point, objective_gap } => {
            Record::new(kind).field("result", "better-neighbor").vec("neighbor", point).num("objective-gap", *objective_gap)
        }
    }
}

/// One vertex of each follower's multiplier set, concatenated.
fn first_vertices(p: &SlmfgProblem, x: &[f64], y: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut lam = Vec::new();
    for f in &p.followers {
        let poly = multiplier_polytope_for(p, &f.id, x, y, tol)?;
        lam.extend(poly.enumerate_vertices()?.swap_remove(0));
    }
    Ok(lam)
}

fn gate_report(cfg: &RunConfig, g: &GateReport) -> Report {
    let mut r = Report::new("gate", cfg);
    r.push(Record::new("gate").field("theorem", g.gate.id()).field("name", g.gate.name()).vec("point", &g.point));
    for (name, f) in &g.hypotheses {
        r.push(finding("hypothesis", name, f));
    }
    for t in &g.multipliers {
        r.push(local_record("multiplier", &t.verdict).vec("lambda", &t.lambda).field("source", t.kind));
    }
    let mut c = finding("conclusion", "conclusion", &g.conclusion);
    if let Some(w) = &g.conclusion_witness {
        c = c.vec("witness", w);
    }
    r.push(c);
    r.push(Record::new("status").field("value", g.status.to_string()));
    r
}

fn corpus_command(cfg: &RunConfig, action: &CorpusAction) -> Result<Outcome> {
    match action {
        CorpusAction::List => {
            let mut r = Report::new("corpus list", cfg);
            for id in IDS {
                let e = corpus::builtin(id)?;
                r.push(
                    Record::new("entry")
                        .field("id", e.id)
                        .field("title", e.title)
                        .field("synthetic", e.synthetic.to_string())
                        .field("facts", e.facts.len().to_string()),
                );
            }
            Ok(Outcome::ok(r))
        }
        CorpusAction::Show { id } => {
            let e = corpus::builtin(id).map_err(|_| anyhow!("unknown corpus entry {id}; known: {}", IDS.join(", ")))?;
            let mut r = Report::new("corpus show", cfg);
            let mut entry = Record::new("entry").field("id", e.id).field("title", e.title).field("synthetic", e.synthetic.to_string());
            if !e.note.is_empty() {
                entry = entry.field("note", e.note);
            }
            r.push(entry);
            for f in &e.facts {
                r.push(
                    Record::new("fact")
                        .field("fact", f.kind)
                        .field("location", f.location)
                        .field("expected", f.expected)
                        .field("source", f.source.name())
                        .field("checker", f.checker),
                );
            }
            for line in render_problem(&e.problem).lines() {
                r.push(Record::new("source").field("text", line));
            }
            Ok(Outcome::ok(r))
        }
        CorpusAction::Run { id } => {
            let report = corpus::run_corpus(id.as_deref(), &cfg.core())
                .map_err(|e| anyhow!("unknown corpus entry {}; known: {}", e.0, IDS.join(", ")))?;
            let mut r = Report::new("corpus run", cfg);
            for o in &report.outcomes {
                r.push(
                    Record::new("fact")
                        .field("entry", o.entry)
                        .field("fact", o.kind)
                        .field("location", o.location)
                        .field("expected", o.expected)
                        .field("observed", o.observed.clone())
                        .field("source", o.source.name())
                        .field("checker", o.checker)
                        .field("passed", o.passed.to_string())
                        .mark(if o.passed { Status::Holds } else { Status::Fails }),
                );
            }
            r.push(Record::new("summary").field("passed", report.passed().to_string()).field("failed", report.failed().to_string()));
            Ok(Outcome { report: r, negative: !report.all_passed() })
        }
    }
}

/// Exit status for an outcome: 0 delivered, 1 negative verdict.
pub fn exit_code(o: &Outcome) -> i32 {
    i32::from(o.negative)
}

/// Parse `args`, run, and return the text for stdout, the text for stderr
/// and the exit code (2 on usage, parse and input errors).
pub fn main_with(args: impl IntoIterator<Item = String>) -> (String, String, i32) {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 { (text, String::new(), 0) } else { (String::new(), text, 2) };
        }
    };
    match run(&cli) {
        Ok(o) => (o.report.render(), String::new(), exit_code(&o)),
        Err(e) => (String::new(), format!("error: {e:#}\n"), 2),
    }
}
