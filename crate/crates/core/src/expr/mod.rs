//! Symbolic scalar expressions over named real variables.
//!
//! Expressions are immutable trees. Differentiation builds exact trees and
//! only drops structurally-zero branches; numeric folding happens in
//! [`Expr::simplify`], which rewrites a tree into canonical polynomial form.

mod convexity;
mod parse;
mod poly;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

pub use convexity::{classify_convexity, Convexity, ConvexityError};
pub use parse::{parse_expr, ParseError};
pub use poly::{CompiledPoly, Monomial, Polynomial};

/// One scalar variable: `(block, index)`, printed as `block.index`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId {
    pub block: String,
    pub index: usize,
}

impl VarId {
    pub fn new(block: impl Into<String>, index: usize) -> Self {
        VarId { block: block.into(), index }
    }

    /// Leader variable `x.i`.
    pub fn leader(index: usize) -> Self {
        VarId::new(LEADER_BLOCK, index)
    }

    /// Follower variable `y.<id>.i`.
    pub fn follower(id: &str, index: usize) -> Self {
        VarId::new(follower_block(id), index)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.block, self.index)
    }
}

pub const LEADER_BLOCK: &str = "x";

pub fn follower_block(id: &str) -> String {
    format!("y.{id}")
}

pub fn multiplier_block(id: &str) -> String {
    format!("l.{id}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarId),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no value for variable {0}")]
    MissingVariable(VarId),
}

/// Source of variable values during evaluation.
pub trait Env {
    fn get(&self, v: &VarId) -> Option<f64>;
}

/// Explicit map from variables to values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment(pub BTreeMap<VarId, f64>);

/// `{x.0 = 1, y.f1.0 = -0.5}`.
impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, x)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} = {x}")?;
        }
        f.write_str("}")
    }
}

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn with(mut self, v: VarId, value: f64) -> Self {
        self.0.insert(v, value);
        self
    }

    pub fn set(&mut self, v: VarId, value: f64) {
        self.0.insert(v, value);
    }
}

impl Env for Assignment {
    fn get(&self, v: &VarId) -> Option<f64> {
        self.0.get(v).copied()
    }
}

/// Values for whole variable blocks, looked up by block name.
#[derive(Clone, Debug, Default)]
pub struct BlockEnv<'a> {
    entries: Vec<(&'a str, &'a [f64])>,
}

impl<'a> BlockEnv<'a> {
    pub fn new() -> Self {
        BlockEnv { entries: Vec::new() }
    }

    pub fn push(&mut self, block: &'a str, values: &'a [f64]) {
        self.entries.push((block, values));
    }

    pub fn with(mut self, block: &'a str, values: &'a [f64]) -> Self {
        self.push(block, values);
        self
    }
}

impl Env for BlockEnv<'_> {
    fn get(&self, v: &VarId) -> Option<f64> {
        self.entries
            .iter()
            .find(|(b, _)| *b == v.block)
            .and_then(|(_, vals)| vals.get(v.index).copied())
    }
}

/// `vars[i] = vals[i]`, everything else from `base`.
pub struct Overlay<'a, E: Env + ?Sized> {
    pub vars: &'a [VarId],
    pub vals: &'a [f64],
    pub base: &'a E,
}

impl<E: Env + ?Sized> Env for Overlay<'_, E> {
    fn get(&self, v: &VarId) -> Option<f64> {
        match self.vars.iter().position(|w| w == v) {
            Some(i) => Some(self.vals[i]),
            None => self.base.get(v),
        }
    }
}

/// Environment with no variables.
pub struct EmptyEnv;

impl Env for EmptyEnv {
    fn get(&self, _: &VarId) -> Option<f64> {
        None
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: VarId) -> Expr {
        Expr::Var(v)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Expr::Const(c) => *c == 0.0,
            Expr::Sum(xs) => xs.iter().all(Expr::is_zero),
            Expr::Product(xs) => xs.iter().any(Expr::is_zero),
            Expr::Neg(e) => e.is_zero(),
            Expr::Pow(b, n) => *n > 0 && b.is_zero(),
            Expr::Var(_) => false,
        }
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.get(v).ok_or_else(|| EvalError::MissingVariable(v.clone()))?,
            Expr::Sum(xs) => {
                let mut acc = 0.0;
                for x in xs {
                    acc += x.eval(env)?;
                }
                acc
            }
            Expr::Product(xs) => {
                let mut acc = 1.0;
                for x in xs {
                    acc *= x.eval(env)?;
                }
                acc
            }
            Expr::Pow(b, n) => b.eval(env)?.powi(*n as i32),
            Expr::Neg(e) => -e.eval(env)?,
        })
    }

    pub fn for_each_var(&self, f: &mut impl FnMut(&VarId)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(v),
            Expr::Sum(xs) | Expr::Product(xs) => xs.iter().for_each(|x| x.for_each_var(f)),
            Expr::Pow(b, _) => b.for_each_var(f),
            Expr::Neg(e) => e.for_each_var(f),
        }
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.for_each_var(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    pub fn mentions(&self, v: &VarId) -> bool {
        let mut hit = false;
        self.for_each_var(&mut |w| hit |= w == v);
        hit
    }

    pub fn mentions_any(&self, vs: &[VarId]) -> bool {
        let mut hit = false;
        self.for_each_var(&mut |w| hit |= vs.contains(w));
        hit
    }

    /// Partial derivative. Exact; zero branches are dropped, nothing is folded.
    pub fn diff(&self, v: &VarId) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(w) => Expr::Const(if w == v { 1.0 } else { 0.0 }),
            Expr::Sum(xs) => {
                let terms: Vec<Expr> = xs.iter().map(|x| x.diff(v)).filter(|d| !d.is_zero()).collect();
                sum_of(terms)
            }
            Expr::Product(xs) => {
                let mut terms = Vec::new();
                for (i, xi) in xs.iter().enumerate() {
                    let di = xi.diff(v);
                    if di.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(xs.len());
                    for (j, xj) in xs.iter().enumerate() {
                        factors.push(if i == j { di.clone() } else { xj.clone() });
                    }
                    terms.push(product_of(factors));
                }
                sum_of(terms)
            }
            Expr::Pow(b, n) => {
                let db = b.diff(v);
                if *n == 0 || db.is_zero() {
                    return Expr::zero();
                }
                if *n == 1 {
                    return db;
                }
                let lowered = if *n == 2 { (**b).clone() } else { Expr::Pow(b.clone(), n - 1) };
                product_of(alloc::vec![Expr::Const(*n as f64), lowered, db])
            }
            Expr::Neg(e) => {
                let d = e.diff(v);
                if d.is_zero() {
                    Expr::zero()
                } else {
                    Expr::Neg(Box::new(d))
                }
            }
        }
    }

    pub fn grad(&self, vars: &[VarId]) -> Vec<Expr> {
        vars.iter().map(|v| self.diff(v)).collect()
    }

    /// Matrix of second partials, each entry in canonical form.
    pub fn hessian(&self, vars: &[VarId]) -> Vec<Vec<Expr>> {
        let first: Vec<Expr> = vars.iter().map(|v| self.diff(v).simplify()).collect();
        first
            .iter()
            .map(|d| vars.iter().map(|v| d.diff(v).simplify()).collect())
            .collect()
    }

    /// Canonical form: expanded polynomial, sorted monomials, folded coefficients.
    pub fn simplify(&self) -> Expr {
        Polynomial::from_expr(self).to_expr()
    }

    pub fn to_polynomial(&self) -> Polynomial {
        Polynomial::from_expr(self)
    }

    /// Replace variables for which `f` returns a tree.
    pub fn substitute(&self, f: &impl Fn(&VarId) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| x.substitute(f)).collect()),
            Expr::Product(xs) => Expr::Product(xs.iter().map(|x| x.substitute(f)).collect()),
            Expr::Pow(b, n) => Expr::Pow(Box::new(b.substitute(f)), *n),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(f))),
        }
    }

    /// Replace every variable known to `env` by its value.
    pub fn fix<E: Env + ?Sized>(&self, env: &E) -> Expr {
        self.substitute(&|v| env.get(v).map(Expr::Const))
    }

    pub fn rename(&self, f: &impl Fn(&VarId) -> VarId) -> Expr {
        self.substitute(&|v| Some(Expr::Var(f(v))))
    }

    /// Top-level summands that mention any of `vars`; the rest is an additive
    /// constant with respect to `vars` and does not move the argmin.
    pub fn part_depending_on(&self, vars: &[VarId]) -> Expr {
        match self {
            Expr::Sum(xs) => {
                let kept: Vec<Expr> = xs
                    .iter()
                    .map(|x| x.part_depending_on(vars))
                    .filter(|x| !x.is_zero())
                    .collect();
                sum_of(kept)
            }
            other if other.mentions_any(vars) => other.clone(),
            _ => Expr::zero(),
        }
    }
}

fn sum_of(mut terms: Vec<Expr>) -> Expr {
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.pop().unwrap(),
        _ => Expr::Sum(terms),
    }
}

fn product_of(mut factors: Vec<Expr>) -> Expr {
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::Product(factors)
    }
}

/// Prefix form accepted by [`parse_expr`].
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Sum(xs) | Expr::Product(xs) => {
                f.write_str(if matches!(self, Expr::Sum(_)) { "(+" } else { "(*" })?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                f.write_str(")")
            }
            Expr::Pow(b, n) => write!(f, "(^ {b} {n})"),
            Expr::Neg(e) => write!(f, "(neg {e})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn vars() -> BTreeSet<VarId> {
        [
            VarId::leader(0),
            VarId::follower("f1", 0),
            VarId::follower("f1", 1),
            VarId::follower("f2", 0),
        ]
        .into_iter()
        .collect()
    }

    fn p(s: &str) -> Expr {
        parse_expr(s, &vars()).unwrap()
    }

    #[test]
    fn empty_operand_conventions() {
        assert_eq!(Expr::Sum(vec![]).eval(&EmptyEnv).unwrap(), 0.0);
        assert_eq!(Expr::Product(vec![]).eval(&EmptyEnv).unwrap(), 1.0);
        assert_eq!(Expr::Const(5.0).eval(&EmptyEnv).unwrap(), 5.0);
    }

    #[test]
    fn ex1_constraint_vanishes_on_closed_form() {
        // g1 = y1^2 - y2 - x at x = 2, y = (-1, -1)
        let g = p("(+ (^ y.f1.0 2) (neg y.f1.1) (neg x.0))");
        let a = Assignment::new()
            .with(VarId::leader(0), 2.0)
            .with(VarId::follower("f1", 0), -1.0)
            .with(VarId::follower("f1", 1), -1.0);
        assert_eq!(g.eval(&a).unwrap(), 0.0);
    }

    #[test]
    fn missing_variable_is_reported() {
        let e = p("(+ x.0 1)");
        assert_eq!(e.eval(&EmptyEnv), Err(EvalError::MissingVariable(VarId::leader(0))));
    }

    #[test]
    fn power_and_product_rules() {
        let y1 = VarId::follower("f1", 0);
        let d = p("(+ (^ y.f1.0 2) (neg y.f1.1))").diff(&y1).simplify();
        assert_eq!(d, p("(* 2 y.f1.0)"));

        let d = p("(* x.0 (^ y.f1.0 2))").diff(&VarId::leader(0)).simplify();
        assert_eq!(d, p("(^ y.f1.0 2)"));
    }

    #[test]
    fn circle_constraint_derivative() {
        // (y1 - x)^2 + (y2 - x - 1)^2 - 1, d/dy1 = 2 (y1 - x)
        let g = p("(+ (^ (+ y.f1.0 (neg x.0)) 2) (^ (+ y.f1.1 (neg x.0) -1) 2) -1)");
        let d = g.diff(&VarId::follower("f1", 0)).simplify();
        assert_eq!(d, p("(+ (* -2 x.0) (* 2 y.f1.0))").simplify());
    }

    #[test]
    fn grad_and_hessian_shapes() {
        let blk = [VarId::follower("f1", 0), VarId::follower("f1", 1)];
        let g = p("(+ y.f1.0 y.f1.1)").grad(&blk);
        let ones: Vec<f64> = g.iter().map(|e| e.eval(&EmptyEnv).unwrap()).collect();
        assert_eq!(ones, vec![1.0, 1.0]);

        let g = Expr::Const(3.0).grad(&blk);
        assert!(g.iter().all(Expr::is_zero));

        let h = p("(+ (^ y.f1.0 2) (^ y.f1.1 2))").hessian(&blk);
        assert_eq!(h[0][0], Expr::Const(2.0));
        assert_eq!(h[1][1], Expr::Const(2.0));
        assert_eq!(h[0][1], Expr::Const(0.0));

        let h = p("(* x.0 (^ y.f1.0 2))").hessian(&blk[..1]);
        assert_eq!(h[0][0], p("(* 2 x.0)"));

        let h = p("(+ x.0 (* 3 y.f1.0))").hessian(&blk);
        assert!(h.iter().flatten().all(Expr::is_zero));
    }

    #[test]
    fn own_part_drops_foreign_summands() {
        let own = [VarId::follower("f1", 0), VarId::follower("f1", 1)];
        let e = p("(+ y.f1.0 y.f2.0)");
        assert_eq!(e.part_depending_on(&own), p("y.f1.0"));
    }

    #[test]
    fn display_is_prefix_form() {
        let e = p("(+ x.0 (^ y.f1.1 2) (neg -1.5) (*))");
        assert_eq!(e.to_string(), "(+ x.0 (^ y.f1.1 2) (neg -1.5) (*))");
    }
}
