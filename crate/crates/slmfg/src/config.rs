//! Run settings: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use slmfg_core::Config;

use crate::report::num;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Human,
    Records,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Human => "human",
            Format::Records => "records",
        }
    }
}

/// A coordinate box `lo,hi`, given as `"lo,hi"` or `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range(pub f64, pub f64);

impl std::str::FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = parse_list(s)?;
        match v[..] {
            [lo, hi] => Ok(Range(lo, hi)),
            _ => Err(format!("expected `lo,hi`, got {} value(s)", v.len())),
        }
    }
}

impl<'de> Deserialize<'de> for Range {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Pair(f64, f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Pair(lo, hi) => Ok(Range(lo, hi)),
        }
    }
}

/// Comma-separated numbers; the empty string is the empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", t.trim()))).collect()
}

/// Settings that flags and the config file may override. Keys in the file
/// use the flag names.
#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// Output format
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for every sampler
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Equilibrium gap and KKT residual tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Constraint violation accepted as feasible
    #[arg(long, global = true)]
    pub feas_tol: Option<f64>,
    /// Threshold for calling a constraint active
    #[arg(long, global = true)]
    pub activity_tol: Option<f64>,
    /// Relative pivot threshold for numerical rank
    #[arg(long, global = true)]
    pub rank_tol: Option<f64>,
    /// Residual tolerance for MPCC feasibility
    #[arg(long, global = true)]
    pub mpcc_tol: Option<f64>,
    /// Spacing of verification grids
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Per-coordinate box of verification grids, `lo,hi`
    #[arg(long = "box", global = true, allow_hyphen_values = true)]
    pub r#box: Option<Range>,
    /// Random samples drawn by the checkers
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Multistart count of the equilibrium solver
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    /// TOML file with the same keys as these flags; flags win
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Every setting of a run; embedded in each report.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub format: Format,
    pub seed: u64,
    pub tol: f64,
    pub feas_tol: f64,
    pub activity_tol: f64,
    pub rank_tol: f64,
    pub mpcc_tol: f64,
    pub grid_step: f64,
    pub grid_box: (f64, f64),
    pub samples: usize,
    pub starts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = Config::default();
        RunConfig {
            format: Format::Human,
            seed: c.seed,
            tol: c.tol,
            feas_tol: c.feas_tol,
            activity_tol: c.activity_tol,
            rank_tol: c.rank_tol,
            mpcc_tol: c.mpcc_tol,
            grid_step: c.grid_step,
            grid_box: c.grid_box,
            samples: 64,
            starts: c.starts,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("in {path}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f { self.$f = v; })*};
        }
        set!(format, seed, tol, feas_tol, activity_tol, rank_tol, mpcc_tol, grid_step, samples, starts);
        if let Some(Range(lo, hi)) = o.r#box {
            self.grid_box = (lo, hi);
        }
    }

    /// Defaults, then the file named by `--config`, then the flags.
    pub fn resolve(flags: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            cfg.apply(&read_overrides(path)?);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("tol", self.tol),
            ("feas-tol", self.feas_tol),
            ("activity-tol", self.activity_tol),
            ("rank-tol", self.rank_tol),
            ("mpcc-tol", self.mpcc_tol),
            ("grid-step", self.grid_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let (lo, hi) = self.grid_box;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(ConfigError::Invalid(format!("box must have lo < hi, got {lo},{hi}")));
        }
        Ok(())
    }

    pub fn core(&self) -> Config {
        Config {
            feas_tol: self.feas_tol,
            tol: self.tol,
            activity_tol: self.activity_tol,
            rank_tol: self.rank_tol,
            mpcc_tol: self.mpcc_tol,
            starts: self.starts,
            grid_box: self.grid_box,
            grid_step: self.grid_step,
            seed: self.seed,
            ..Config::default()
        }
    }

    /// `(key, value)` pairs in a fixed order, keyed by flag name.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("format", self.format.name().to_string()),
            ("seed", self.seed.to_string()),
            ("tol", num(self.tol)),
            ("feas-tol", num(self.feas_tol)),
            ("activity-tol", num(self.activity_tol)),
            ("rank-tol", num(self.rank_tol)),
            ("mpcc-tol", num(self.mpcc_tol)),
            ("grid-step", num(self.grid_step)),
            ("box", format!("{},{}", num(self.grid_box.0), num(self.grid_box.1))),
            ("samples", self.samples.to_string()),
            ("starts", self.starts.to_string()),
        ]
    }
}

pub fn read_overrides(path: &Path) -> Result<Overrides, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\ntol = 1e-4\nbox = [-1.0, 2.0]\ngrid-step = 0.1\nformat = \"records\"\n").unwrap();
        let flags = Overrides { seed: Some(3), config: Some(path), ..Overrides::default() };
        let c = RunConfig::resolve(&flags).unwrap();
        assert_eq!((c.seed, c.tol, c.grid_box, c.grid_step, c.format), (3, 1e-4, (-1.0, 2.0), 0.1, Format::Records));
    }

    #[test]
    fn box_accepts_text_and_rejects_bad_values() {
        let o: Overrides = toml::from_str("box = \"-2,2\"").unwrap();
        assert_eq!(o.r#box, Some(Range(-2.0, 2.0)));
        assert!(toml::from_str::<Overrides>("bogus = 1").is_err());
        let mut c = RunConfig::default();
        c.apply(&Overrides { r#box: Some(Range(1.0, -1.0)), ..Overrides::default() });
        assert!(c.validate().is_err());
        c = RunConfig { tol: 0.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list("0, -1.5,2").unwrap(), vec![0.0, -1.5, 2.0]);
        assert_eq!(parse_list("").unwrap(), Vec::<f64>::new());
        assert!(parse_list("1,,2").is_err());
    }
}
