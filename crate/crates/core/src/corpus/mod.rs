//! Built-in worked examples and constructed GNEP instances, each with the
//! facts a correct build must reproduce.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{parse_expr, Expr};
use crate::config::Config;
use crate::model::{declared_vars, FollowerProblem, GnepProblem, Group, LeaderSpec, Problem, SlmfgProblem};

mod facts;

pub use facts::{facts_of, Fact, Observation, Source};

/// Identifiers of every built-in entry, in listing order.
pub const IDS: &[&str] = &["ex1", "ex2", "ex3", "ex4", "gnep1", "gnep-trivial", "gnep-nonconvex"];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown corpus entry {0:?}")]
pub struct UnknownEntry(pub String);

struct Spec<'a> {
    leader_dim: usize,
    leader_objective: &'a str,
    bounds: Option<(f64, f64)>,
    /// `(id, dim, objective, constraints)`.
    followers: &'a [(&'a str, usize, &'a str, &'a [&'a str])],
}

fn parse(text: &str, decl: &alloc::collections::BTreeSet<crate::expr::VarId>) -> Expr {
    parse_expr(text, decl).expect("built-in expression parses")
}

fn layer(s: &Spec<'_>) -> (LeaderSpec, Vec<FollowerProblem>) {
    let shells: Vec<FollowerProblem> =
        s.followers.iter().map(|(id, dim, _, _)| FollowerProblem::new(*id, *dim, Expr::zero(), vec![])).collect();
    let decl = declared_vars(s.leader_dim, &shells);
    let followers = s
        .followers
        .iter()
        .map(|(id, dim, obj, cons)| {
            FollowerProblem::new(*id, *dim, parse(obj, &decl), cons.iter().map(|c| parse(c, &decl)).collect())
        })
        .collect();
    let leader = LeaderSpec {
        dim: s.leader_dim,
        objective: parse(s.leader_objective, &decl),
        constraints: vec![],
        bounds: s.bounds,
    };
    (leader, followers)
}

fn slmfg(s: &Spec<'_>) -> SlmfgProblem {
    let (leader, followers) = layer(s);
    SlmfgProblem { leader, followers }
}

fn gnep(s: &Spec<'_>, groups: &[(&str, &[&str], &[&str])]) -> GnepProblem {
    let (leader, followers) = layer(s);
    let decl = declared_vars(leader.dim, &followers);
    let groups = groups
        .iter()
        .map(|(name, members, shared)| Group {
            name: name.to_string(),
            members: members.iter().map(|m| m.to_string()).collect(),
            shared: shared.iter().map(|c| parse(c, &decl)).collect(),
        })
        .collect();
    GnepProblem { leader, followers, groups }
}

/// Two followers on parabolic lenses; the feasible set collapses to a point at x = 0.
/// Each follower minimizes its own first coordinate plus the other's.
fn ex1() -> SlmfgProblem {
    const OBJ: &str = "(+ y.f1.0 y.f2.0)";
    slmfg(&Spec {
        leader_dim: 1,
        leader_objective: "x.0",
        bounds: Some((0.0, 4.0)),
        followers: &[
            ("f1", 2, OBJ, &["(+ (^ y.f1.0 2) (neg y.f1.1) (neg x.0))", "(+ (^ y.f1.0 2) y.f1.1)"]),
            ("f2", 2, OBJ, &["(+ (^ y.f2.0 2) (neg y.f2.1) (neg x.0))", "(+ (^ y.f2.0 2) y.f2.1)"]),
        ],
    })
}

/// Leader-scaled linear followers: at x = 0 every y is an equilibrium.
fn ex2() -> SlmfgProblem {
    const OBJ: &str = "(* x.0 (+ y.f1.0 y.f2.0))";
    slmfg(&Spec {
        leader_dim: 1,
        leader_objective: "(+ (^ (+ x.0 -1) 2) (^ y.f1.0 2) (^ y.f2.0 2))",
        bounds: None,
        followers: &[
            ("f1", 1, OBJ, &["(* x.0 (^ y.f1.0 2))"]),
            ("f2", 1, OBJ, &["(* x.0 (^ y.f2.0 2))"]),
        ],
    })
}

/// Followers push y up against the kink `y ≤ 1 − |x|`.
fn ex3() -> SlmfgProblem {
    const OBJ: &str = "(+ (neg y.f1.0) (neg y.f2.0))";
    slmfg(&Spec {
        leader_dim: 1,
        leader_objective: "(+ (^ (+ x.0 -1) 2) (^ (+ y.f1.0 -1) 2) (^ (+ y.f2.0 -1) 2))",
        bounds: None,
        followers: &[
            ("f1", 1, OBJ, &["(+ x.0 y.f1.0 -1)", "(+ (neg x.0) y.f1.0 -1)"]),
            ("f2", 1, OBJ, &["(+ x.0 y.f2.0 -1)", "(+ (neg x.0) y.f2.0 -1)"]),
        ],
    })
}

/// Two unit discs whose intersection shrinks to a touching point at x = 0.
fn ex4() -> SlmfgProblem {
    const OBJ: &str = "(+ (^ y.f1.0 2) (^ (+ y.f1.1 1) 2) (^ y.f2.0 2) (^ (+ y.f2.1 1) 2))";
    slmfg(&Spec {
        leader_dim: 1,
        leader_objective: "(+ (neg y.f1.1) (neg y.f2.1))",
        bounds: Some((0.0, 0.5)),
        followers: &[
            (
                "f1",
                2,
                OBJ,
                &[
                    "(+ (^ (+ y.f1.0 (neg x.0)) 2) (^ (+ y.f1.1 (neg x.0) -1) 2) -1)",
                    "(+ (^ (+ y.f1.0 x.0) 2) (^ (+ y.f1.1 (neg x.0) -1) 2) -1)",
                ],
            ),
            (
                "f2",
                2,
                OBJ,
                &[
                    "(+ (^ (+ y.f2.0 (neg x.0)) 2) (^ (+ y.f2.1 (neg x.0) -1) 2) -1)",
                    "(+ (^ (+ y.f2.0 x.0) 2) (^ (+ y.f2.1 (neg x.0) -1) 2) -1)",
                ],
            ),
        ],
    })
}

/// Synthetic: four followers tracking x, paired into two budget groups.
fn gnep1() -> GnepProblem {
    gnep(
        &Spec {
            leader_dim: 1,
            leader_objective: "(+ (^ (+ x.0 -1) 2) (^ y.a1.0 2) (^ y.a2.0 2) (^ y.b1.0 2) (^ y.b2.0 2))",
            bounds: Some((-2.0, 2.0)),
            followers: &[
                ("a1", 1, "(^ (+ y.a1.0 (neg x.0)) 2)", &[]),
                ("a2", 1, "(^ (+ y.a2.0 (neg x.0)) 2)", &[]),
                ("b1", 1, "(^ (+ y.b1.0 (neg x.0)) 2)", &[]),
                ("b2", 1, "(^ (+ y.b2.0 (neg x.0)) 2)", &[]),
            ],
        },
        &[("ga", &["a1", "a2"], &["(+ y.a1.0 y.a2.0 -1)"]), ("gb", &["b1", "b2"], &["(+ y.b1.0 y.b2.0 -1)"])],
    )
}

/// Synthetic: two followers minimizing `y²` under a budget that never binds.
fn gnep_trivial() -> GnepProblem {
    gnep(
        &Spec {
            leader_dim: 1,
            leader_objective: "(+ (^ x.0 2) (^ y.f1.0 2) (^ y.f2.0 2))",
            bounds: Some((-2.0, 2.0)),
            followers: &[("f1", 1, "(^ y.f1.0 2)", &[]), ("f2", 1, "(^ y.f2.0 2)", &[])],
        },
        &[("g", &["f1", "f2"], &["(+ y.f1.0 y.f2.0 -1)"])],
    )
}

/// Synthetic: shared constraint `x (y1 + y2)² ≤ 0`, not jointly convex for x < 0.
fn gnep_nonconvex() -> GnepProblem {
    gnep(
        &Spec {
            leader_dim: 1,
            leader_objective: "(+ (^ x.0 2) (^ y.f1.0 2) (^ y.f2.0 2))",
            bounds: Some((-2.0, 2.0)),
            followers: &[
                ("f1", 1, "(^ (+ y.f1.0 -1) 2)", &[]),
                ("f2", 1, "(^ (+ y.f2.0 -1) 2)", &[]),
            ],
        },
        &[("g", &["f1", "f2"], &["(* x.0 (^ (+ y.f1.0 y.f2.0) 2))"])],
    )
}

/// The problem of a built-in entry.
pub fn builtin_problem(id: &str) -> Result<Problem, UnknownEntry> {
    Ok(match id {
        "ex1" => Problem::Slmfg(ex1()),
        "ex2" => Problem::Slmfg(ex2()),
        "ex3" => Problem::Slmfg(ex3()),
        "ex4" => Problem::Slmfg(ex4()),
        "gnep1" => Problem::Gnep(gnep1()),
        "gnep-trivial" => Problem::Gnep(gnep_trivial()),
        "gnep-nonconvex" => Problem::Gnep(gnep_nonconvex()),
        _ => return Err(UnknownEntry(id.to_string())),
    })
}

/// Shorthand for the game examples; panics on GNEP or unknown ids.
pub fn builtin_slmfg(id: &str) -> SlmfgProblem {
    match builtin_problem(id) {
        Ok(Problem::Slmfg(p)) => p,
        _ => panic!("{id} is not a built-in game"),
    }
}

/// Shorthand for the GNEP instances; panics on other ids.
pub fn builtin_gnep(id: &str) -> GnepProblem {
    match builtin_problem(id) {
        Ok(Problem::Gnep(g)) => g,
        _ => panic!("{id} is not a built-in GNEP"),
    }
}

fn describe(id: &str) -> (&'static str, bool, &'static str) {
    match id {
        "ex1" => (
            "parabolic lenses collapsing at x = 0",
            false,
            "each follower minimizes its own first coordinate plus the other's; the box 0 <= x <= 4 is added",
        ),
        "ex2" => ("leader-scaled linear followers", false, ""),
        "ex3" => ("kinked feasible set", false, ""),
        "ex4" => ("touching discs", false, ""),
        "gnep1" => ("two budget groups of two trackers", true, "synthetic"),
        "gnep-trivial" => ("slack budget pair", true, "synthetic"),
        "gnep-nonconvex" => ("shared constraint not jointly convex for x < 0", true, "synthetic"),
        _ => ("", false, ""),
    }
}

/// A built-in problem with the facts a correct build reproduces.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub id: &'static str,
    pub title: &'static str,
    pub synthetic: bool,
    pub note: &'static str,
    pub problem: Problem,
    pub facts: Vec<Fact>,
}

pub fn builtin(id: &str) -> Result<CorpusEntry, UnknownEntry> {
    let problem = builtin_problem(id)?;
    let id = IDS.iter().copied().find(|i| *i == id).ok_or_else(|| UnknownEntry(id.to_string()))?;
    let (title, synthetic, note) = describe(id);
    Ok(CorpusEntry { id, title, synthetic, note, problem, facts: facts_of(id) })
}

/// One checked fact.
#[derive(Clone, Debug, PartialEq)]
pub struct FactOutcome {
    pub entry: &'static str,
    pub kind: &'static str,
    pub location: &'static str,
    pub expected: &'static str,
    pub observed: String,
    pub source: Source,
    pub checker: &'static str,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusReport {
    pub outcomes: Vec<FactOutcome>,
}

impl CorpusReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.passed()
    }

    pub fn all_passed(&self) -> bool {
        self.failed() == 0
    }
}

/// Check every fact of one entry, or of all entries when `filter` is `None`.
pub fn run_corpus(filter: Option<&str>, cfg: &Config) -> Result<CorpusReport, UnknownEntry> {
    let ids: Vec<&str> = match filter {
        Some(id) => vec![builtin(id)?.id],
        None => IDS.to_vec(),
    };
    let mut report = CorpusReport::default();
    for id in ids {
        let entry = builtin(id)?;
        for f in &entry.facts {
            let o = (f.check)(&entry.problem, cfg);
            report.outcomes.push(FactOutcome {
                entry: entry.id,
                kind: f.kind,
                location: f.location,
                expected: f.expected,
                observed: o.value,
                source: f.source,
                checker: f.checker,
                passed: o.passed,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_has_facts() {
        for id in IDS {
            let e = builtin(id).unwrap();
            assert!(!e.facts.is_empty(), "{id}");
            assert!(e.problem.validate().is_empty(), "{id}");
        }
        assert_eq!(builtin("ex9").unwrap_err(), UnknownEntry("ex9".into()));
    }

    #[test]
    fn lens_entry_shape() {
        let p = builtin_slmfg("ex1");
        assert_eq!(p.followers.len(), 2);
        assert!(p.followers.iter().all(|f| f.dim() == 2 && f.constraints.len() == 2));
        assert_eq!(p.leader.objective, Expr::Var(crate::expr::VarId::leader(0)));
        assert_eq!(builtin_slmfg("ex4").leader.bounds, Some((0.0, 0.5)));
    }
}
