//! Problem files: named sections of `key args... ;` statements.
//!
//! ```text
//! # comment
//! leader { dim 1; objective "x.0"; constraint "(neg x.0)"; box 0 4; }
//! follower f1 { dim 2; objective "..."; constraint "..."; }
//! group g { members f1 f2; shared_constraint "..."; }
//! mpcc { objective "..."; multipliers f1 2; stationarity f1 "..."; ... }
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use slmfg_core::expr::{follower_block, multiplier_block, parse_expr, Expr, VarId};
use slmfg_core::model::{declared_vars, FollowerProblem, GnepProblem, Group, InvalidProblem, LeaderSpec, Problem, SlmfgProblem};
use slmfg_core::mpcc::MpccProblem;

pub const EXTENSION: &str = "slmfg";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot access {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error(transparent)]
    Invalid(#[from] InvalidProblem),
}

/// A loaded file: the problem and, when present, its `mpcc` section.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub problem: Problem,
    pub mpcc: Option<MpccProblem>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Open,
    Close,
    Semi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pos {
    line: usize,
    col: usize,
}

fn err(at: Pos, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax { line: at.line, col: at.col, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<Vec<(Pos, Tok)>, FormatError> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let at = Pos { line: ln + 1, col: i + 1 };
            match chars[i] {
                c if c.is_whitespace() => i += 1,
                '#' => break,
                '{' => {
                    out.push((at, Tok::Open));
                    i += 1;
                }
                '}' => {
                    out.push((at, Tok::Close));
                    i += 1;
                }
                ';' => {
                    out.push((at, Tok::Semi));
                    i += 1;
                }
                '"' => {
                    let start = i + 1;
                    let end = (start..chars.len()).find(|&k| chars[k] == '"').ok_or_else(|| err(at, "unterminated string"))?;
                    out.push((at, Tok::Str(chars[start..end].iter().collect())));
                    i = end + 1;
                }
                _ => {
                    let start = i;
                    while i < chars.len() && !chars[i].is_whitespace() && !"{};\"#".contains(chars[i]) {
                        i += 1;
                    }
                    out.push((at, Tok::Word(chars[start..i].iter().collect())));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Arg {
    at: Pos,
    text: String,
    quoted: bool,
}

#[derive(Clone, Debug)]
struct Stmt {
    at: Pos,
    key: String,
    args: Vec<Arg>,
}

#[derive(Clone, Debug)]
struct Section {
    at: Pos,
    kind: String,
    name: Option<String>,
    body: Vec<Stmt>,
}

fn sections(toks: Vec<(Pos, Tok)>) -> Result<Vec<Section>, FormatError> {
    let end = toks.last().map(|(p, _)| *p).unwrap_or(Pos { line: 1, col: 1 });
    let mut it = toks.into_iter().peekable();
    let mut out = Vec::new();
    while let Some((at, tok)) = it.next() {
        let Tok::Word(kind) = tok else {
            return Err(err(at, "expected a section name"));
        };
        let name = match it.next() {
            Some((_, Tok::Open)) => None,
            Some((_, Tok::Word(n))) => match it.next() {
                Some((_, Tok::Open)) => Some(n),
                Some((p, _)) => return Err(err(p, "expected `{`")),
                None => return Err(err(end, "unexpected end of file")),
            },
            Some((p, _)) => return Err(err(p, "expected a name or `{`")),
            None => return Err(err(end, "unexpected end of file")),
        };
        let mut body = Vec::new();
        loop {
            match it.next() {
                Some((_, Tok::Close)) => break,
                Some((sat, Tok::Word(key))) => {
                    let mut args = Vec::new();
                    loop {
                        match it.next() {
                            Some((_, Tok::Semi)) => break,
                            Some((p, Tok::Word(w))) => args.push(Arg { at: p, text: w, quoted: false }),
                            Some((p, Tok::Str(s))) => args.push(Arg { at: p, text: s, quoted: true }),
                            Some((p, _)) => return Err(err(p, "expected `;`")),
                            None => return Err(err(end, "unexpected end of file")),
                        }
                    }
                    body.push(Stmt { at: sat, key, args });
                }
                Some((p, _)) => return Err(err(p, "expected a statement or `}`")),
                None => return Err(err(end, "unexpected end of file")),
            }
        }
        out.push(Section { at, kind, name, body });
    }
    Ok(out)
}

fn arity(s: &Stmt, n: usize) -> Result<(), FormatError> {
    if s.args.len() != n {
        return Err(err(s.at, format!("`{}` takes {n} argument(s), got {}", s.key, s.args.len())));
    }
    Ok(())
}

fn number<T: std::str::FromStr>(a: &Arg) -> Result<T, FormatError> {
    if a.quoted {
        return Err(err(a.at, "expected a number, found a string"));
    }
    a.text.parse().map_err(|_| err(a.at, format!("`{}` is not a valid number", a.text)))
}

fn word(a: &Arg) -> Result<String, FormatError> {
    if a.quoted {
        return Err(err(a.at, "expected a name, found a string"));
    }
    Ok(a.text.clone())
}

fn quoted(a: &Arg) -> Result<&str, FormatError> {
    if !a.quoted {
        return Err(err(a.at, "expected a quoted expression"));
    }
    Ok(&a.text)
}

fn expr(a: &Arg, declared: &BTreeSet<VarId>) -> Result<Expr, FormatError> {
    parse_expr(quoted(a)?, declared).map_err(|e| err(a.at, format!("in expression: {e}")))
}

fn unknown(s: &Stmt, section: &str) -> FormatError {
    err(s.at, format!("unknown statement `{}` in {section}", s.key))
}

/// Follower layout before expressions can be parsed.
struct FollowerShape<'s> {
    sec: &'s Section,
    id: String,
    blocks: Vec<(String, usize)>,
}

fn follower_shape(sec: &Section) -> Result<FollowerShape<'_>, FormatError> {
    let id = sec.name.clone().ok_or_else(|| err(sec.at, "follower needs an id"))?;
    let mut dim = None;
    let mut blocks = Vec::new();
    for s in &sec.body {
        match s.key.as_str() {
            "dim" => {
                arity(s, 1)?;
                if dim.is_some() {
                    return Err(err(s.at, "`dim` given twice"));
                }
                dim = Some(number(&s.args[0])?);
            }
            "block" => {
                arity(s, 2)?;
                blocks.push((word(&s.args[0])?, number(&s.args[1])?));
            }
            "objective" | "constraint" => {}
            _ => return Err(unknown(s, "follower")),
        }
    }
    let blocks = match (dim, blocks.is_empty()) {
        (Some(d), true) => vec![(follower_block(&id), d)],
        (None, false) => blocks,
        (Some(_), false) => return Err(err(sec.at, format!("follower {id} has both `dim` and `block`"))),
        (None, true) => return Err(err(sec.at, format!("follower {id} needs `dim`"))),
    };
    Ok(FollowerShape { sec, id, blocks })
}

fn leader(sec: &Section) -> Result<(usize, Option<(f64, f64)>), FormatError> {
    let mut dim = None;
    let mut bounds = None;
    for s in &sec.body {
        match s.key.as_str() {
            "dim" => {
                arity(s, 1)?;
                dim = Some(number(&s.args[0])?);
            }
            "box" => {
                arity(s, 2)?;
                bounds = Some((number(&s.args[0])?, number(&s.args[1])?));
            }
            "objective" | "constraint" => {}
            _ => return Err(unknown(s, "leader")),
        }
    }
    Ok((dim.ok_or_else(|| err(sec.at, "leader needs `dim`"))?, bounds))
}

fn objective_and_constraints(
    sec: &Section,
    declared: &BTreeSet<VarId>,
    who: &str,
) -> Result<(Expr, Vec<Expr>), FormatError> {
    let mut objective = None;
    let mut constraints = Vec::new();
    for s in &sec.body {
        match s.key.as_str() {
            "objective" => {
                arity(s, 1)?;
                if objective.is_some() {
                    return Err(err(s.at, "`objective` given twice"));
                }
                objective = Some(expr(&s.args[0], declared)?);
            }
            "constraint" => {
                arity(s, 1)?;
                constraints.push(expr(&s.args[0], declared)?);
            }
            _ => {}
        }
    }
    let objective = objective.ok_or_else(|| err(sec.at, format!("{who} needs `objective`")))?;
    Ok((objective, constraints))
}

fn group(sec: &Section, declared: &BTreeSet<VarId>) -> Result<Group, FormatError> {
    let name = sec.name.clone().ok_or_else(|| err(sec.at, "group needs a name"))?;
    let mut members = None;
    let mut shared = Vec::new();
    for s in &sec.body {
        match s.key.as_str() {
            "members" => {
                if s.args.is_empty() {
                    return Err(err(s.at, "`members` needs at least one follower id"));
                }
                members = Some(s.args.iter().map(word).collect::<Result<Vec<_>, _>>()?);
            }
            "shared_constraint" => {
                arity(s, 1)?;
                shared.push(expr(&s.args[0], declared)?);
            }
            _ => return Err(unknown(s, "group")),
        }
    }
    let members = members.ok_or_else(|| err(sec.at, format!("group {name} needs `members`")))?;
    Ok(Group { name, members, shared })
}

fn mpcc(sec: &Section, source: &SlmfgProblem) -> Result<MpccProblem, FormatError> {
    let mut counts: Vec<Option<usize>> = vec![None; source.followers.len()];
    let find = |a: &Arg| -> Result<usize, FormatError> {
        let id = word(a)?;
        source.follower_index(&id).ok_or_else(|| err(a.at, format!("unknown follower {id}")))
    };
    for s in sec.body.iter().filter(|s| s.key == "multipliers") {
        arity(s, 2)?;
        counts[find(&s.args[0])?] = Some(number(&s.args[1])?);
    }
    let mut declared = declared_vars(source.leader.dim, &source.followers);
    let mut multipliers = Vec::new();
    for (f, fp) in source.followers.iter().enumerate() {
        let n = counts[f].ok_or_else(|| err(sec.at, format!("mpcc section lacks `multipliers {}`", fp.id)))?;
        declared.extend((0..n).map(|j| VarId::new(multiplier_block(&fp.id), j)));
        multipliers.push((fp.id.clone(), n));
    }
    let k = source.followers.len();
    let mut objective = None;
    let (mut stationarity, mut feasibility) = (vec![Vec::new(); k], vec![Vec::new(); k]);
    let mut complementarity: Vec<Option<Expr>> = vec![None; k];
    for s in &sec.body {
        match s.key.as_str() {
            "multipliers" => {}
            "objective" => {
                arity(s, 1)?;
                objective = Some(expr(&s.args[0], &declared)?);
            }
            "stationarity" | "feasibility" | "complementarity" => {
                arity(s, 2)?;
                let f = find(&s.args[0])?;
                let e = expr(&s.args[1], &declared)?;
                match s.key.as_str() {
                    "stationarity" => stationarity[f].push(e),
                    "feasibility" => feasibility[f].push(e),
                    _ => complementarity[f] = Some(e),
                }
            }
            _ => return Err(unknown(s, "mpcc")),
        }
    }
    for (f, fp) in source.followers.iter().enumerate() {
        if stationarity[f].len() != fp.dim() || feasibility[f].len() != fp.constraints.len() {
            return Err(err(sec.at, format!("mpcc rows of follower {} do not match its dimension and constraints", fp.id)));
        }
    }
    Ok(MpccProblem {
        source: source.clone(),
        objective: objective.ok_or_else(|| err(sec.at, "mpcc section needs `objective`"))?,
        multipliers,
        stationarity,
        feasibility,
        complementarity: complementarity
            .into_iter()
            .zip(&source.followers)
            .map(|(c, fp)| c.ok_or_else(|| err(sec.at, format!("mpcc section lacks complementarity for {}", fp.id))))
            .collect::<Result<_, _>>()?,
    })
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, FormatError> {
    let secs = sections(tokenize(text)?)?;
    let mut leaders = secs.iter().filter(|s| s.kind == "leader");
    let lsec = leaders.next().ok_or_else(|| err(Pos { line: 1, col: 1 }, "missing `leader` section"))?;
    if let Some(dup) = leaders.next() {
        return Err(err(dup.at, "more than one `leader` section"));
    }
    if let Some(s) = secs.iter().find(|s| !matches!(s.kind.as_str(), "leader" | "follower" | "group" | "mpcc")) {
        return Err(err(s.at, format!("unknown section `{}`", s.kind)));
    }
    if let Some(s) = secs.iter().filter(|s| s.kind == "mpcc").nth(1) {
        return Err(err(s.at, "more than one `mpcc` section"));
    }
    let (dim, bounds) = leader(lsec)?;
    let shapes: Vec<FollowerShape> = secs.iter().filter(|s| s.kind == "follower").map(follower_shape).collect::<Result<_, _>>()?;
    let skeleton: Vec<FollowerProblem> = shapes
        .iter()
        .map(|s| FollowerProblem { id: s.id.clone(), blocks: s.blocks.clone(), objective: Expr::zero(), constraints: Vec::new() })
        .collect();
    let declared = declared_vars(dim, &skeleton);
    let (objective, constraints) = objective_and_constraints(lsec, &declared, "leader")?;
    let leader = LeaderSpec { dim, objective, constraints, bounds };
    let mut followers = Vec::new();
    for s in shapes {
        let (objective, constraints) = objective_and_constraints(s.sec, &declared, &format!("follower {}", s.id))?;
        followers.push(FollowerProblem { id: s.id, blocks: s.blocks, objective, constraints });
    }
    let groups: Vec<Group> = secs.iter().filter(|s| s.kind == "group").map(|s| group(s, &declared)).collect::<Result<_, _>>()?;
    let msec = secs.iter().find(|s| s.kind == "mpcc");
    let problem = if groups.is_empty() {
        Problem::Slmfg(SlmfgProblem { leader, followers })
    } else {
        if let Some(m) = msec {
            return Err(err(m.at, "an `mpcc` section needs a problem without groups"));
        }
        Problem::Gnep(GnepProblem { leader, followers, groups })
    };
    let violations = problem.validate();
    if !violations.is_empty() {
        return Err(InvalidProblem(violations).into());
    }
    let mpcc = match (msec, &problem) {
        (Some(m), Problem::Slmfg(p)) => Some(mpcc(m, p)?),
        _ => None,
    };
    Ok(ProblemFile { problem, mpcc })
}

/// `path` as given, or with the `.slmfg` extension appended.
pub fn resolve(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with = path.with_extension(EXTENSION);
        if with.exists() {
            return with;
        }
    }
    path.to_path_buf()
}

pub fn load_file(path: &Path) -> Result<ProblemFile, FormatError> {
    let path = resolve(path);
    let text = std::fs::read_to_string(&path).map_err(|source| FormatError::Io { path: path.clone(), source })?;
    parse_problem(&text)
}

pub fn load_problem(path: &Path) -> Result<Problem, FormatError> {
    Ok(load_file(path)?.problem)
}

fn q(e: &Expr) -> String {
    format!("\"{e}\"")
}

fn write_leader(out: &mut String, l: &LeaderSpec) {
    out.push_str("leader {\n");
    let _ = writeln!(out, "  dim {};", l.dim);
    let _ = writeln!(out, "  objective {};", q(&l.objective));
    for c in &l.constraints {
        let _ = writeln!(out, "  constraint {};", q(c));
    }
    if let Some((lo, hi)) = l.bounds {
        let _ = writeln!(out, "  box {lo} {hi};");
    }
    out.push_str("}\n");
}

fn write_follower(out: &mut String, f: &FollowerProblem) {
    let _ = writeln!(out, "\nfollower {} {{", f.id);
    if f.blocks.len() == 1 && f.blocks[0].0 == follower_block(&f.id) {
        let _ = writeln!(out, "  dim {};", f.blocks[0].1);
    } else {
        for (b, d) in &f.blocks {
            let _ = writeln!(out, "  block {b} {d};");
        }
    }
    let _ = writeln!(out, "  objective {};", q(&f.objective));
    for c in &f.constraints {
        let _ = writeln!(out, "  constraint {};", q(c));
    }
    out.push_str("}\n");
}

pub fn render_problem(p: &Problem) -> String {
    let mut out = String::new();
    write_leader(&mut out, p.leader());
    for f in p.followers() {
        write_follower(&mut out, f);
    }
    if let Problem::Gnep(g) = p {
        for grp in &g.groups {
            let _ = writeln!(out, "\ngroup {} {{", grp.name);
            let _ = writeln!(out, "  members {};", grp.members.join(" "));
            for s in &grp.shared {
                let _ = writeln!(out, "  shared_constraint {};", q(s));
            }
            out.push_str("}\n");
        }
    }
    out
}

/// The source game followed by the `mpcc` section.
pub fn render_mpcc(m: &MpccProblem) -> String {
    let mut out = render_problem(&Problem::Slmfg(m.source.clone()));
    out.push_str("\nmpcc {\n");
    let _ = writeln!(out, "  objective {};", q(&m.objective));
    for (f, (id, n)) in m.multipliers.iter().enumerate() {
        let _ = writeln!(out, "  multipliers {id} {n};");
        for e in &m.stationarity[f] {
            let _ = writeln!(out, "  stationarity {id} {};", q(e));
        }
        for e in &m.feasibility[f] {
            let _ = writeln!(out, "  feasibility {id} {};", q(e));
        }
        let _ = writeln!(out, "  complementarity {id} {};", q(&m.complementarity[f]));
    }
    out.push_str("}\n");
    out
}

fn write(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub fn save_problem(path: &Path, p: &Problem) -> Result<(), FormatError> {
    write(path, &render_problem(p))
}

pub fn save_mpcc(path: &Path, m: &MpccProblem) -> Result<(), FormatError> {
    write(path, &render_mpcc(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slmfg_core::corpus::{builtin_problem, IDS};
    use slmfg_core::model::Violation;
    use slmfg_core::mpcc::build_mpcc;

    #[test]
    fn corpus_round_trips() {
        for id in IDS {
            let p = builtin_problem(id).unwrap();
            let back = parse_problem(&render_problem(&p)).unwrap();
            assert_eq!(back.problem, p, "{id}");
            assert!(back.mpcc.is_none());
        }
    }

    #[test]
    fn mpcc_section_round_trips() {
        for id in ["ex1", "ex2", "ex3", "ex4"] {
            let Problem::Slmfg(p) = builtin_problem(id).unwrap() else { unreachable!() };
            let m = build_mpcc(&p);
            let back = parse_problem(&render_mpcc(&m)).unwrap();
            assert_eq!(back.mpcc.as_ref(), Some(&m), "{id}");
        }
    }

    #[test]
    fn comments_and_layout_are_free() {
        let text = "# two lines\nleader{dim 1;objective \"x.0\";box 0 1;}  # trailing\nfollower a { dim 1; objective \"(^ y.a.0 2)\";\n constraint \"(+ y.a.0 (neg x.0))\"; }";
        let f = parse_problem(text).unwrap();
        let p = f.problem.as_slmfg().unwrap();
        assert_eq!(p.leader.bounds, Some((0.0, 1.0)));
        assert_eq!(p.followers[0].constraints.len(), 1);
    }

    #[test]
    fn peer_variable_in_constraint_is_rejected() {
        let text = "leader { dim 1; objective \"x.0\"; }\n\
                    follower a { dim 1; objective \"y.a.0\"; constraint \"(+ y.a.0 y.b.0)\"; }\n\
                    follower b { dim 1; objective \"y.b.0\"; }";
        match parse_problem(text) {
            Err(FormatError::Invalid(InvalidProblem(v))) => {
                assert!(matches!(&v[..], [Violation::OutOfScope { var, .. }] if var.to_string() == "y.b.0"), "{v:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse_problem("leader { dim 1; objective \"(+ x.0 z.0)\"; }").unwrap_err().to_string();
        assert!(e.starts_with("line 1, column 27") && e.contains("z.0"), "{e}");
        let e = parse_problem("leader { dim 1;\n objective \"x.0\" }").unwrap_err().to_string();
        assert!(e.starts_with("line 2"), "{e}");
        let e = parse_problem("leader { dim one; objective \"x.0\"; }").unwrap_err().to_string();
        assert!(e.contains("not a valid number"), "{e}");
        assert!(parse_problem("follower a { dim 1; objective \"y.a.0\"; }").is_err());
    }

    #[test]
    fn one_group_of_two_is_a_gnep() {
        let text = "leader { dim 1; objective \"x.0\"; }\n\
                    follower a { dim 1; objective \"(^ y.a.0 2)\"; }\n\
                    follower b { dim 1; objective \"(^ y.b.0 2)\"; }\n\
                    group g { members a b; shared_constraint \"(+ y.a.0 y.b.0 -1)\"; }";
        let g = parse_problem(text).unwrap().problem;
        assert_eq!(g.as_gnep().unwrap().groups.len(), 1);
    }
}
