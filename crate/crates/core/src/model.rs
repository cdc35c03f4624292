//! Problem containers: a leader, followers playing a Nash game, and optional
//! groups of followers with shared constraints.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{follower_block, BlockEnv, Expr, VarId, LEADER_BLOCK};

/// One follower: minimizes `objective` over its own variables subject to
/// `constraints` (each read as `g ≤ 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct FollowerProblem {
    pub id: String,
    /// Variable blocks owned by this follower, in order. Ordinary followers own
    /// the single block `y.<id>`; pseudo-followers built from a group own the
    /// blocks of their members.
    pub blocks: Vec<(String, usize)>,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
}

impl FollowerProblem {
    pub fn new(id: impl Into<String>, dim: usize, objective: Expr, constraints: Vec<Expr>) -> Self {
        let id = id.into();
        let blocks = alloc::vec![(follower_block(&id), dim)];
        FollowerProblem { id, blocks, objective, constraints }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(_, d)| d).sum()
    }

    /// Own variables in block order.
    pub fn vars(&self) -> Vec<VarId> {
        self.blocks
            .iter()
            .flat_map(|(b, d)| (0..*d).map(move |i| VarId::new(b.clone(), i)))
            .collect()
    }

    pub fn owns(&self, v: &VarId) -> bool {
        self.blocks.iter().any(|(b, d)| *b == v.block && v.index < *d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeaderSpec {
    pub dim: usize,
    pub objective: Expr,
    /// Functional part of the leader's feasible set, each `h(x) ≤ 0`.
    pub constraints: Vec<Expr>,
    /// Optional `lo ≤ x_i ≤ hi` applied to every leader coordinate.
    pub bounds: Option<(f64, f64)>,
}

impl LeaderSpec {
    pub fn vars(&self) -> Vec<VarId> {
        (0..self.dim).map(VarId::leader).collect()
    }

    /// Largest violation of the leader's feasible set at `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let env = BlockEnv::new().with(LEADER_BLOCK, x);
        let mut worst: f64 = 0.0;
        if let Some((lo, hi)) = self.bounds {
            for &xi in x {
                worst = worst.max(lo - xi).max(xi - hi);
            }
        }
        for h in &self.constraints {
            worst = worst.max(h.eval(&env).unwrap_or(f64::INFINITY));
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && self.violation(x) <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlmfgProblem {
    pub leader: LeaderSpec,
    pub followers: Vec<FollowerProblem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub name: String,
    pub members: Vec<String>,
    /// Constraints over `x` and the members' variables, each `g ≤ 0`.
    pub shared: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnepProblem {
    pub leader: LeaderSpec,
    pub followers: Vec<FollowerProblem>,
    pub groups: Vec<Group>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Slmfg(SlmfgProblem),
    Gnep(GnepProblem),
}

impl Problem {
    pub fn validate(&self) -> Vec<Violation> {
        match self {
            Problem::Slmfg(p) => p.validate(),
            Problem::Gnep(g) => g.validate(),
        }
    }

    pub fn leader(&self) -> &LeaderSpec {
        match self {
            Problem::Slmfg(p) => &p.leader,
            Problem::Gnep(g) => &g.leader,
        }
    }

    pub fn followers(&self) -> &[FollowerProblem] {
        match self {
            Problem::Slmfg(p) => &p.followers,
            Problem::Gnep(g) => &g.followers,
        }
    }

    pub fn as_slmfg(&self) -> Option<&SlmfgProblem> {
        match self {
            Problem::Slmfg(p) => Some(p),
            Problem::Gnep(_) => None,
        }
    }

    pub fn as_gnep(&self) -> Option<&GnepProblem> {
        match self {
            Problem::Slmfg(_) => None,
            Problem::Gnep(g) => Some(g),
        }
    }
}

/// A broken structural invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    ZeroDimension { who: String },
    BadBounds { lo: String, hi: String },
    DuplicateFollower { id: String },
    BlockClash { block: String },
    OutOfScope { location: String, var: VarId },
    UngroupedFollower { id: String },
    FollowerInSeveralGroups { id: String },
    UnknownMember { group: String, id: String },
    DuplicateGroup { name: String },
    PeerInObjective { follower: String, var: VarId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDimension { who } => write!(f, "{who} has dimension 0"),
            Violation::BadBounds { lo, hi } => write!(f, "leader box has lo {lo} > hi {hi}"),
            Violation::DuplicateFollower { id } => write!(f, "follower id {id} is used more than once"),
            Violation::BlockClash { block } => write!(f, "variable block {block} is owned more than once"),
            Violation::OutOfScope { location, var } => write!(f, "{location} references {var}, which is out of scope"),
            Violation::UngroupedFollower { id } => write!(f, "follower {id} belongs to no group"),
            Violation::FollowerInSeveralGroups { id } => write!(f, "follower {id} belongs to more than one group"),
            Violation::UnknownMember { group, id } => write!(f, "group {group} lists unknown follower {id}"),
            Violation::DuplicateGroup { name } => write!(f, "group name {name} is used more than once"),
            Violation::PeerInObjective { follower, var } => {
                write!(f, "objective of {follower} depends on same-group peer variable {var}")
            }
        }
    }
}

/// A problem that failed validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidProblem(pub Vec<Violation>);

impl fmt::Display for InvalidProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid problem")?;
        for (i, v) in self.0.iter().enumerate() {
            f.write_str(if i == 0 { ": " } else { "; " })?;
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for InvalidProblem {}

fn scope_audit(e: &Expr, allowed: &BTreeSet<VarId>, location: String, out: &mut Vec<Violation>) {
    for var in e.vars() {
        if !allowed.contains(&var) {
            out.push(Violation::OutOfScope { location: location.clone(), var });
        }
    }
}

fn validate_layer(leader: &LeaderSpec, followers: &[FollowerProblem], out: &mut Vec<Violation>) {
    if leader.dim == 0 {
        out.push(Violation::ZeroDimension { who: "leader".into() });
    }
    if let Some((lo, hi)) = leader.bounds {
        if !(lo <= hi) {
            out.push(Violation::BadBounds { lo: format!("{lo}"), hi: format!("{hi}") });
        }
    }
    let xs: BTreeSet<VarId> = leader.vars().into_iter().collect();
    let mut all = xs.clone();
    let mut seen_ids = BTreeSet::new();
    let mut seen_blocks = BTreeSet::new();
    seen_blocks.insert(String::from(LEADER_BLOCK));
    for f in followers {
        if !seen_ids.insert(f.id.clone()) {
            out.push(Violation::DuplicateFollower { id: f.id.clone() });
        }
        if f.dim() == 0 {
            out.push(Violation::ZeroDimension { who: format!("follower {}", f.id) });
        }
        for (b, _) in &f.blocks {
            if !seen_blocks.insert(b.clone()) {
                out.push(Violation::BlockClash { block: b.clone() });
            }
        }
        all.extend(f.vars());
    }
    for (i, h) in leader.constraints.iter().enumerate() {
        scope_audit(h, &xs, format!("leader constraint {i}"), out);
    }
    scope_audit(&leader.objective, &all, "leader objective".into(), out);
    for f in followers {
        let mut own = xs.clone();
        own.extend(f.vars());
        for (j, g) in f.constraints.iter().enumerate() {
            scope_audit(g, &own, format!("follower {} constraint {j}", f.id), out);
        }
        scope_audit(&f.objective, &all, format!("follower {} objective", f.id), out);
    }
}

impl SlmfgProblem {
    /// Empty iff every structural invariant holds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        validate_layer(&self.leader, &self.followers, &mut out);
        out
    }

    pub fn follower_index(&self, id: &str) -> Option<usize> {
        self.followers.iter().position(|f| f.id == id)
    }

    /// Total follower dimension.
    pub fn follower_dim(&self) -> usize {
        self.followers.iter().map(FollowerProblem::dim).sum()
    }

    /// Offsets of each follower's slice in the concatenated `y^F` vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.followers.len() + 1);
        let mut at = 0;
        for f in &self.followers {
            out.push(at);
            at += f.dim();
        }
        out.push(at);
        out
    }

    pub fn slice<'a>(&self, y: &'a [f64], f: usize) -> &'a [f64] {
        let off = self.offsets();
        &y[off[f]..off[f + 1]]
    }

    /// Every declared variable: leader first, then followers in order.
    pub fn all_vars(&self) -> Vec<VarId> {
        let mut v = self.leader.vars();
        for f in &self.followers {
            v.extend(f.vars());
        }
        v
    }

    /// Environment binding `x` and the concatenated follower vector `y`.
    pub fn env<'a>(&'a self, x: &'a [f64], y: &'a [f64]) -> BlockEnv<'a> {
        let mut env = BlockEnv::new().with(LEADER_BLOCK, x);
        let mut at = 0;
        for f in &self.followers {
            for (b, d) in &f.blocks {
                env.push(b.as_str(), &y[at..at + d]);
                at += d;
            }
        }
        env
    }

    pub fn leader_objective(&self, x: &[f64], y: &[f64]) -> f64 {
        self.leader.objective.eval(&self.env(x, y)).expect("validated problem")
    }

    /// Largest `g^f_j(x, y^f)` over follower `f`'s constraints (−∞ if none).
    pub fn max_constraint(&self, f: usize, x: &[f64], y: &[f64]) -> f64 {
        let env = self.env(x, y);
        self.followers[f]
            .constraints
            .iter()
            .map(|g| g.eval(&env).expect("validated problem"))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl GnepProblem {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        validate_layer(&self.leader, &self.followers, &mut out);
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        let mut names = BTreeSet::new();
        for g in &self.groups {
            if !names.insert(g.name.as_str()) {
                out.push(Violation::DuplicateGroup { name: g.name.clone() });
            }
            for m in &g.members {
                if !self.followers.iter().any(|f| f.id == *m) {
                    out.push(Violation::UnknownMember { group: g.name.clone(), id: m.clone() });
                    continue;
                }
                let n = owner.entry(m.as_str()).or_insert(0);
                *n += 1;
                if *n == 2 {
                    out.push(Violation::FollowerInSeveralGroups { id: m.clone() });
                }
            }
        }
        for f in &self.followers {
            if !owner.contains_key(f.id.as_str()) {
                out.push(Violation::UngroupedFollower { id: f.id.clone() });
            }
        }
        let xs: BTreeSet<VarId> = self.leader.vars().into_iter().collect();
        for g in &self.groups {
            let members: Vec<&FollowerProblem> =
                self.followers.iter().filter(|f| g.members.contains(&f.id)).collect();
            let mut scope = xs.clone();
            for m in &members {
                scope.extend(m.vars());
            }
            for (j, s) in g.shared.iter().enumerate() {
                scope_audit(s, &scope, format!("group {} shared constraint {j}", g.name), &mut out);
            }
            for f in &members {
                for peer in members.iter().filter(|p| p.id != f.id) {
                    for var in f.objective.vars() {
                        if peer.owns(&var) {
                            out.push(Violation::PeerInObjective { follower: f.id.clone(), var });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn group_of(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.members.iter().any(|m| m == id))
    }

    /// The follower layer as an ordinary game, ignoring shared constraints.
    pub fn private_game(&self) -> SlmfgProblem {
        SlmfgProblem { leader: self.leader.clone(), followers: self.followers.clone() }
    }
}

/// Declared variables of a leader and followers, for parsing expressions.
pub fn declared_vars(leader_dim: usize, followers: &[FollowerProblem]) -> BTreeSet<VarId> {
    let mut s: BTreeSet<VarId> = (0..leader_dim).map(VarId::leader).collect();
    for f in followers {
        s.extend(f.vars());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn y(id: &str, i: usize) -> Expr {
        Expr::Var(VarId::follower(id, i))
    }

    fn x() -> Expr {
        Expr::Var(VarId::leader(0))
    }

    fn leader() -> LeaderSpec {
        LeaderSpec { dim: 1, objective: x(), constraints: vec![], bounds: None }
    }

    #[test]
    fn well_formed_game_has_no_violations() {
        let p = SlmfgProblem {
            leader: leader(),
            followers: vec![
                FollowerProblem::new("f1", 1, y("f1", 0), vec![Expr::Sum(vec![x(), y("f1", 0)])]),
                FollowerProblem::new("f2", 1, Expr::Product(vec![y("f1", 0), y("f2", 0)]), vec![]),
            ],
        };
        assert!(p.validate().is_empty());
        assert_eq!(p.offsets(), vec![0, 1, 2]);
    }

    #[test]
    fn cross_follower_constraint_is_rejected() {
        let p = SlmfgProblem {
            leader: leader(),
            followers: vec![
                FollowerProblem::new("f1", 1, y("f1", 0), vec![y("f2", 0)]),
                FollowerProblem::new("f2", 1, y("f2", 0), vec![]),
            ],
        };
        let v = p.validate();
        assert_eq!(v, vec![Violation::OutOfScope { location: "follower f1 constraint 0".into(), var: VarId::follower("f2", 0) }]);
    }

    #[test]
    fn duplicate_id_is_one_violation() {
        let p = SlmfgProblem {
            leader: leader(),
            followers: vec![FollowerProblem::new("f1", 1, y("f1", 0), vec![]), FollowerProblem::new("f1", 1, y("f1", 0), vec![])],
        };
        let v = p.validate();
        assert!(v.contains(&Violation::DuplicateFollower { id: "f1".into() }));
    }

    #[test]
    fn group_checks() {
        let g = GnepProblem {
            leader: leader(),
            followers: vec![
                FollowerProblem::new("a", 1, Expr::Product(vec![y("a", 0), y("b", 0)]), vec![]),
                FollowerProblem::new("b", 1, y("b", 0), vec![]),
                FollowerProblem::new("c", 1, y("c", 0), vec![]),
            ],
            groups: vec![Group { name: "g".into(), members: vec!["a".into(), "b".into()], shared: vec![y("c", 0)] }],
        };
        let v = g.validate();
        assert!(v.contains(&Violation::UngroupedFollower { id: "c".into() }));
        assert!(v.contains(&Violation::PeerInObjective { follower: "a".into(), var: VarId::follower("b", 0) }));
        assert!(v.contains(&Violation::OutOfScope { location: "group g shared constraint 0".into(), var: VarId::follower("c", 0) }));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn leader_box() {
        let mut l = leader();
        l.bounds = Some((0.0, 4.0));
        assert!(l.is_feasible(&[0.0], 0.0));
        assert!(!l.is_feasible(&[-0.1], 1e-8));
        assert!((l.violation(&[4.5]) - 0.5).abs() < 1e-15);
    }
}
