//! Independent oracles and generators shared by the property suite and the
//! acceptance target.
#![allow(dead_code)]

use proptest::prelude::*;

use slmfg_core::expr::{BlockEnv, Expr, VarId};
use slmfg_core::model::SlmfgProblem;
use slmfg_core::multipliers::{ActiveSet, MultiplierPolytope};
use slmfg_core::nep::{brute_force_nep, Game, GridSpec, NepError};
use slmfg_core::Config;

pub fn vars() -> Vec<VarId> {
    vec![VarId::leader(0), VarId::follower("f", 0), VarId::follower("f", 1)]
}

pub fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-3i32..=3).prop_map(|c| Expr::Const(c as f64 * 0.5)),
        (0usize..3).prop_map(|i| Expr::Var(vars()[i].clone())),
    ]
}

pub fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::Product),
            (inner.clone(), 0u32..4).prop_map(|(e, k)| Expr::Pow(Box::new(e), k)),
            inner.prop_map(|e| Expr::Neg(Box::new(e))),
        ]
    })
}

pub fn eval_at(e: &Expr, p: &[f64]) -> f64 {
    let (x, y) = (&p[..1], &p[1..]);
    e.eval(&BlockEnv::new().with("x", x).with("y.f", y)).unwrap()
}

/// Central differences against the symbolic gradient, relative to the
/// larger of 1, the derivative and the value.
pub fn gradient_check(e: &Expr, p: [f64; 3]) -> Result<(), String> {
    let h = 1e-5;
    for (i, v) in vars().iter().enumerate() {
        let sym = eval_at(&e.diff(v), &p);
        let (mut a, mut b) = (p, p);
        a[i] += h;
        b[i] -= h;
        let fd = (eval_at(e, &a) - eval_at(e, &b)) / (2.0 * h);
        let scale = 1.0f64.max(sym.abs()).max(eval_at(e, &p).abs());
        if (sym - fd).abs() > 1e-6 * scale {
            return Err(format!("d/d{v}: {sym} vs {fd} for {e}"));
        }
    }
    Ok(())
}

// Exhaustive-intersection vertex oracle: every choice of coordinates forced to
// zero that, stacked under A, pins a unique point; keep the feasible ones.

pub fn solve_unique(rows: &[Vec<f64>], rhs: &[f64], k: usize) -> Option<Vec<f64>> {
    // Normal equations M = RᵀR, solved by Gauss-Jordan with partial pivoting.
    let mut m = vec![vec![0.0; k + 1]; k];
    for (r, row) in rows.iter().enumerate() {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += row[i] * row[j];
            }
            m[i][k] += row[i] * rhs[r];
        }
    }
    let scale = m.iter().flat_map(|r| r[..k].iter()).fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap())?;
        if m[p][c].abs() <= 1e-10 * scale {
            return None;
        }
        m.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..k).map(|i| m[i][k] / m[i][i]).collect();
    let ok = rows.iter().zip(rhs).all(|(row, b)| (row.iter().zip(&sol).map(|(a, x)| a * x).sum::<f64>() - b).abs() <= 1e-8);
    ok.then_some(sol)
}

pub fn oracle_vertices(a: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let k = a[0].len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << k) {
        let mut rows: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for j in 0..k {
            if mask & (1 << j) != 0 {
                let mut e = vec![0.0; k];
                e[j] = 1.0;
                rows.push(e);
                rhs.push(0.0);
            }
        }
        if let Some(s) = solve_unique(&rows, &rhs, k) {
            if s.iter().all(|&v| v >= -1e-9) {
                let s: Vec<f64> = s.into_iter().map(|v| v.max(0.0)).collect();
                if !out.iter().any(|w| w.iter().zip(&s).all(|(p, q)| (p - q).abs() <= 1e-7)) {
                    out.push(s);
                }
            }
        }
    }
    out
}

pub fn polytope() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(n, k)| {
        let a = prop::collection::vec(prop::collection::vec((-3i32..=3).prop_map(|v| v as f64), k), n);
        let lam = prop::collection::vec(prop_oneof![Just(0.0), (0i32..=4).prop_map(|v| v as f64 * 0.5)], k);
        let free_b = prop::collection::vec((-3i32..=3).prop_map(|v| v as f64), n);
        (a, lam, free_b, any::<bool>()).prop_map(|(a, lam, free_b, from_point)| {
            let b = if from_point {
                a.iter().map(|row: &Vec<f64>| row.iter().zip(&lam).map(|(p, q)| p * q).sum()).collect()
            } else {
                free_b
            };
            (a, b)
        })
    })
}

pub fn poly_of(a: Vec<Vec<f64>>, b: Vec<f64>) -> MultiplierPolytope {
    let k = a[0].len();
    MultiplierPolytope {
        active: ActiveSet { follower: "f".into(), indices: (0..k).collect(), values: vec![0.0; k], tol: 1e-6 },
        p: k,
        a,
        b,
    }
}

/// Emptiness, vertex set and membership against the exhaustive oracle.
pub fn vertex_check(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<(), String> {
    let want = oracle_vertices(&a, &b);
    let poly = poly_of(a, b);
    let got = poly.enumerate_vertices().unwrap_or_default();
    if poly.is_empty() != want.is_empty() || got.len() != want.len() {
        return Err(format!("got {got:?} want {want:?}"));
    }
    for v in &got {
        if !poly.contains(v, 1e-9) || !want.iter().any(|w| w.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-7)) {
            return Err(format!("vertex {v:?} not in {want:?}"));
        }
    }
    Ok(())
}

pub fn probes(lo: f64, hi: f64) -> Vec<f64> {
    (0..20).map(|k| lo + (hi - lo) * k as f64 / 19.0).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Points tagged with their leader probe.
pub type Tagged = Vec<(f64, Vec<f64>)>;

/// Solver points off the grid set, and grid points off the solver set.
pub fn disagreements(name: &str, p: &SlmfgProblem) -> (Tagged, Tagged) {
    let cfg = Config::default();
    let g = Game::new(p, &cfg).unwrap();
    let grid = GridSpec::new(-3.0, 3.0, 0.05);
    let (lo, hi) = p.leader.bounds.unwrap_or((-2.0, 2.0));
    let near = |a: &[f64], set: &[Vec<f64>]| set.iter().any(|b| dist(a, b) <= grid.step + 1e-9);
    let (mut off_grid, mut missed) = (Vec::new(), Vec::new());
    for x in probes(lo, hi) {
        let brute = brute_force_nep(p, &[x], &grid);
        assert!(!brute.truncated, "{name} x={x}");
        match g.solve_nep(&[x]) {
            Ok(s) => {
                assert!(!brute.points.is_empty(), "{name} x={x}: grid has no equilibrium");
                for e in &s.equilibria {
                    if !near(&e.point, &brute.points) {
                        off_grid.push((x, e.point.clone()));
                    }
                }
                if !s.continuum_suspected {
                    let pts: Vec<Vec<f64>> = s.equilibria.iter().map(|e| e.point.clone()).collect();
                    for b in &brute.points {
                        if !near(b, &pts) {
                            missed.push((x, b.clone()));
                        }
                    }
                }
            }
            Err(NepError::Unbounded { .. }) => assert!(brute.on_boundary, "{name} x={x}"),
            Err(e) => panic!("{name} x={x}: {e}"),
        }
    }
    (off_grid, missed)
}

