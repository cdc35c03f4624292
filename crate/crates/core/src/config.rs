//! Numerical settings shared by every solver and checker.

/// Tolerances, grids and sampling knobs. `Default` gives the desk-scale values
/// used throughout the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// Constraint violation allowed when calling a point feasible.
    pub feas_tol: f64,
    /// Equilibrium gap and KKT residual tolerance.
    pub tol: f64,
    /// Radius for merging nearby equilibria.
    pub cluster_eps: f64,
    /// `|g| ≤ activity_tol` marks a constraint active.
    pub activity_tol: f64,
    /// Relative pivot threshold for numerical rank.
    pub rank_tol: f64,
    /// Residual tolerance for MPCC feasibility.
    pub mpcc_tol: f64,
    pub starts: usize,
    pub max_iters: usize,
    /// Box in which descent searches for minimizers, per coordinate.
    pub search_box: (f64, f64),
    /// Box of the verification grid, per coordinate.
    pub grid_box: (f64, f64),
    pub grid_step: f64,
    /// Objective decrease that, together with reaching the search-box
    /// boundary, marks a follower problem unbounded.
    pub unbounded_margin: f64,
    /// Surviving cluster count at which a continuum of equilibria is suspected.
    pub continuum_count: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            feas_tol: 1e-8,
            tol: 1e-6,
            cluster_eps: 1e-4,
            activity_tol: 1e-6,
            rank_tol: 1e-9,
            mpcc_tol: 1e-7,
            starts: 16,
            max_iters: 500,
            search_box: (-10.0, 10.0),
            grid_box: (-3.0, 3.0),
            grid_step: 0.05,
            unbounded_margin: 1e-3,
            continuum_count: 4,
            seed: 0,
        }
    }
}
