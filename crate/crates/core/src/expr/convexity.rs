//! Convexity classification: exact for quadratics, sampled otherwise.

use alloc::vec::Vec;

use super::{Assignment, EmptyEnv, Expr, Overlay, VarId};
use crate::linalg::{is_psd, Matrix};
use crate::sampling::probe_points;

#[derive(Clone, Debug, PartialEq)]
pub enum Convexity {
    ConvexCertified,
    NonconvexWitness(Assignment),
    /// Every sampled Hessian was PSD; sampling cannot certify.
    Unknown,
}

impl Convexity {
    pub fn is_certified(&self) -> bool {
        matches!(self, Convexity::ConvexCertified)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConvexityError {
    #[error("empty domain box")]
    EmptyBox,
    #[error("box has {got} intervals for {want} variables")]
    DimensionMismatch { want: usize, got: usize },
    #[error("at least one sample is required")]
    NoSamples,
    #[error("expression depends on {0}, which is neither classified nor fixed")]
    FreeVariable(VarId),
}

const PSD_TOL: f64 = 1e-12;

/// Classify `e` as a function of `vars` over `domain_box`. Any variable of `e`
/// outside `vars` must have been fixed beforehand (see [`Expr::fix`]).
pub fn classify_convexity(
    e: &Expr,
    vars: &[VarId],
    domain_box: &[(f64, f64)],
    samples: usize,
) -> Result<Convexity, ConvexityError> {
    if domain_box.len() != vars.len() {
        return Err(ConvexityError::DimensionMismatch { want: vars.len(), got: domain_box.len() });
    }
    if domain_box.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(ConvexityError::EmptyBox);
    }
    if samples == 0 {
        return Err(ConvexityError::NoSamples);
    }
    if let Some(v) = e.vars().into_iter().find(|v| !vars.contains(v)) {
        return Err(ConvexityError::FreeVariable(v));
    }
    let hess = e.hessian(vars);
    let poly = e.to_polynomial();
    let eval_at = |pt: &[f64]| -> Matrix {
        let env = Overlay { vars, vals: pt, base: &EmptyEnv };
        hess.iter().map(|row| row.iter().map(|h| h.eval(&env).expect("scoped")).collect()).collect()
    };
    let witness = |pt: &[f64]| {
        let mut a = Assignment::new();
        for (v, x) in vars.iter().zip(pt) {
            a.set(v.clone(), *x);
        }
        Convexity::NonconvexWitness(a)
    };
    let center: Vec<f64> = domain_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    if poly.degree_in(vars) <= 2 {
        return Ok(if is_psd(&eval_at(&center), PSD_TOL) { Convexity::ConvexCertified } else { witness(&center) });
    }
    for pt in probe_points(domain_box, samples) {
        if !is_psd(&eval_at(&pt), PSD_TOL) {
            return Ok(witness(&pt));
        }
    }
    Ok(Convexity::Unknown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Env};
    use alloc::collections::BTreeSet;

    fn decl() -> BTreeSet<VarId> {
        [VarId::leader(0), VarId::follower("f1", 0), VarId::follower("f1", 1)].into_iter().collect()
    }

    #[test]
    fn sum_of_squares_is_convex() {
        let e = parse_expr("(+ (^ y.f1.0 2) (^ y.f1.1 2))", &decl()).unwrap();
        let vars = [VarId::follower("f1", 0), VarId::follower("f1", 1)];
        let c = classify_convexity(&e, &vars, &[(-1.0, 1.0); 2], 4).unwrap();
        assert_eq!(c, Convexity::ConvexCertified);
    }

    #[test]
    fn bilinear_cubic_has_negative_x_witness() {
        let e = parse_expr("(* x.0 (^ y.f1.0 2))", &decl()).unwrap();
        let vars = [VarId::leader(0), VarId::follower("f1", 0)];
        match classify_convexity(&e, &vars, &[(-1.0, 1.0); 2], 16).unwrap() {
            Convexity::NonconvexWitness(a) => assert!(a.get(&VarId::leader(0)).unwrap() < 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixed_leader_gives_quadratic() {
        let e = parse_expr("(* x.0 (^ y.f1.0 2))", &decl()).unwrap();
        let fixed = e.fix(&Assignment::new().with(VarId::leader(0), 1.0));
        let vars = [VarId::follower("f1", 0)];
        assert_eq!(classify_convexity(&fixed, &vars, &[(-1.0, 1.0)], 1).unwrap(), Convexity::ConvexCertified);
        let neg = e.fix(&Assignment::new().with(VarId::leader(0), -1.0));
        assert!(matches!(
            classify_convexity(&neg, &vars, &[(-1.0, 1.0)], 1).unwrap(),
            Convexity::NonconvexWitness(_)
        ));
    }

    #[test]
    fn quartic_psd_everywhere_is_unknown() {
        let e = parse_expr("(^ y.f1.0 4)", &decl()).unwrap();
        let vars = [VarId::follower("f1", 0)];
        assert_eq!(classify_convexity(&e, &vars, &[(-1.0, 1.0)], 20).unwrap(), Convexity::Unknown);
    }

    #[test]
    fn errors() {
        let e = parse_expr("(* x.0 y.f1.0)", &decl()).unwrap();
        let vars = [VarId::follower("f1", 0)];
        assert_eq!(classify_convexity(&e, &vars, &[(1.0, -1.0)], 1), Err(ConvexityError::EmptyBox));
        assert_eq!(
            classify_convexity(&e, &vars, &[(-1.0, 1.0)], 1),
            Err(ConvexityError::FreeVariable(VarId::leader(0)))
        );
        assert_eq!(classify_convexity(&e, &vars, &[(-1.0, 1.0)], 0), Err(ConvexityError::NoSamples));
        assert!(classify_convexity(&e, &vars, &[], 1).is_err());
    }
}
