//! Sparse multivariate polynomials, used as the canonical form of [`Expr`].

use alloc::boxed::Box;
use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{Env, EvalError, Expr, VarId};
#[allow(unused_imports)]
use num_traits::Float;

/// Product of variable powers, sorted by variable, exponents ≥ 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial(pub Vec<(VarId, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, k)| k).sum()
    }

    pub fn degree_in(&self, vars: &[VarId]) -> u32 {
        self.0.iter().filter(|(v, _)| vars.contains(v)).map(|(_, k)| k).sum()
    }

    pub fn exponent(&self, v: &VarId) -> u32 {
        self.0.iter().find(|(w, _)| w == v).map(|(_, k)| *k).unwrap_or(0)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(VarId, u32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < other.0.len() {
            match (self.0.get(i), other.0.get(j)) {
                (Some(a), Some(b)) if a.0 == b.0 => {
                    out.push((a.0.clone(), a.1 + b.1));
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if a.0 < b.0 => {
                    out.push(a.clone());
                    i += 1;
                }
                (Some(_), Some(b)) => {
                    out.push(b.clone());
                    j += 1;
                }
                (Some(a), None) => {
                    out.push(a.clone());
                    i += 1;
                }
                (None, Some(b)) => {
                    out.push(b.clone());
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Monomial(out)
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        let mut acc = 1.0;
        for (v, k) in &self.0 {
            let x = env.get(v).ok_or_else(|| EvalError::MissingVariable(v.clone()))?;
            acc *= x.powi(*k as i32);
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    pub terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: VarId) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(Monomial(alloc::vec![(v, 1)]), 1.0);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut out = Polynomial::constant(1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn from_expr(e: &Expr) -> Polynomial {
        match e {
            Expr::Const(c) => Polynomial::constant(*c),
            Expr::Var(v) => Polynomial::var(v.clone()),
            Expr::Sum(xs) => xs.iter().fold(Polynomial::zero(), |acc, x| acc.add(&Polynomial::from_expr(x))),
            Expr::Product(xs) => {
                xs.iter().fold(Polynomial::constant(1.0), |acc, x| acc.mul(&Polynomial::from_expr(x)))
            }
            Expr::Pow(b, n) => Polynomial::from_expr(b).pow(*n),
            Expr::Neg(x) => Polynomial::from_expr(x).scale(-1.0),
        }
    }

    /// Canonical tree: a sum of `c * v1^k1 * ...` terms in monomial order.
    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            let mut factors: Vec<Expr> = Vec::with_capacity(m.0.len() + 1);
            if *c != 1.0 || m.0.is_empty() {
                factors.push(Expr::Const(*c));
            }
            for (v, k) in &m.0 {
                let base = Expr::Var(v.clone());
                factors.push(if *k == 1 { base } else { Expr::Pow(Box::new(base), *k) });
            }
            terms.push(if factors.len() == 1 { factors.pop().unwrap() } else { Expr::Product(factors) });
        }
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.pop().unwrap(),
            _ => Expr::Sum(terms),
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, vars: &[VarId]) -> u32 {
        self.terms.keys().map(|m| m.degree_in(vars)).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            acc += c * m.eval(env)?;
        }
        Ok(acc)
    }

    /// Coefficients of `t^0, t^1, ...` when `t` is the only variable.
    pub fn univariate_coefficients(&self, t: &VarId) -> Option<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.degree() as usize + 1];
        for (m, c) in &self.terms {
            if m.0.iter().any(|(v, _)| v != t) {
                return None;
            }
            out[m.exponent(t) as usize] += c;
        }
        Some(out)
    }
}

/// Polynomial with variables resolved to positions of a dense point vector,
/// for hot evaluation loops.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    /// Compile against `index`; fails with the first variable it cannot place.
    pub fn compile(e: &Expr, index: &BTreeMap<VarId, usize>) -> Result<CompiledPoly, VarId> {
        let poly = Polynomial::from_expr(e);
        let mut terms = Vec::with_capacity(poly.terms.len());
        for (m, c) in &poly.terms {
            let mut factors = Vec::with_capacity(m.0.len());
            for (v, k) in &m.0 {
                let i = *index.get(v).ok_or_else(|| v.clone())?;
                factors.push((i, *k));
            }
            terms.push((*c, factors));
        }
        Ok(CompiledPoly { terms })
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, k) in factors {
                t *= match k {
                    1 => z[i],
                    2 => z[i] * z[i],
                    _ => z[i].powi(k as i32),
                };
            }
            acc += t;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether any term reads a position in `idx`.
    pub fn reads_any(&self, idx: &[usize]) -> bool {
        self.terms.iter().any(|(_, f)| f.iter().any(|(i, _)| idx.contains(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Assignment};
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;

    fn decl() -> BTreeSet<VarId> {
        [VarId::leader(0), VarId::follower("f1", 0), VarId::follower("f1", 1)].into_iter().collect()
    }

    #[test]
    fn expansion_cancels_exactly() {
        let e = parse_expr("(+ (^ (+ x.0 y.f1.0) 2) (neg (^ x.0 2)) (neg (^ y.f1.0 2)))", &decl()).unwrap();
        let s = e.simplify();
        assert_eq!(s.to_string(), "(* 2 x.0 y.f1.0)");
        assert_eq!(parse_expr("(+ x.0 (neg x.0))", &decl()).unwrap().simplify(), Expr::Const(0.0));
    }

    #[test]
    fn canonical_form_is_stable() {
        let e = parse_expr("(* (+ 1 y.f1.1) (+ y.f1.1 -1) 3)", &decl()).unwrap();
        let s = e.simplify();
        assert_eq!(s.simplify(), s);
        let a = Assignment::new().with(VarId::follower("f1", 1), 0.7);
        assert!((s.eval(&a).unwrap() - e.eval(&a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn univariate_coefficients_of_ray() {
        let t = VarId::new("t", 0);
        let p = Polynomial::from_expr(&Expr::Sum(alloc::vec![
            Expr::Const(1.0),
            Expr::Pow(Box::new(Expr::Var(t.clone())), 2)
        ]));
        assert_eq!(p.univariate_coefficients(&t).unwrap(), alloc::vec![1.0, 0.0, 1.0]);
    }
}
