//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sfr_core::data::{Bounds, Format};
use sfr_core::estimators::{Method, SolverConfig};

/// Keys in file order. Every key has a matching `--kebab-case` flag.
pub const KEYS: [&str; 25] = [
    "dataset",
    "format",
    "rating_min",
    "rating_max",
    "threshold",
    "min_support",
    "split_fraction",
    "seed",
    "methods",
    "output_dir",
    "coverage",
    "min_neighbor_ratings",
    "p",
    "smoothing_eps",
    "max_iterations",
    "objective_rel_tol",
    "initial_step",
    "backtrack_factor",
    "source_tolerance",
    "continuation",
    "continuation_start_eps",
    "continuation_factor",
    "restarts",
    "restart_noise",
    "restart_seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: Format,
    pub threshold: f64,
    pub min_support: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub coverage: f64,
    pub min_neighbor_ratings: usize,
    /// Rating bounds live in `solver.bounds`.
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: Format::Csv,
            threshold: 0.5,
            min_support: 3,
            split_fraction: 0.8,
            seed: 42,
            methods: vec![Method::Knn, Method::Hcp, Method::Sfr],
            output_dir: PathBuf::from("out"),
            coverage: 0.9,
            min_neighbor_ratings: 5,
            solver: SolverConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected true or false, got {value:?}"),
    }
}

impl ExperimentConfig {
    /// Reads a config file; keys absent from the file keep their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: duplicate key {key:?}", n + 1);
            }
            config
                .set(key, value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "dataset" => self.dataset = (!value.is_empty()).then(|| PathBuf::from(value)),
            "format" => self.format = value.parse().map_err(|e| anyhow!("format: {e}"))?,
            "rating_min" => s.bounds.low = parse_num(key, value)?,
            "rating_max" => s.bounds.high = parse_num(key, value)?,
            "threshold" => self.threshold = parse_num(key, value)?,
            "min_support" => self.min_support = parse_num(key, value)?,
            "split_fraction" => self.split_fraction = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(|m| m.parse::<Method>().map_err(|e| anyhow!("methods: {e}")))
                    .collect::<Result<_>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "coverage" => self.coverage = parse_num(key, value)?,
            "min_neighbor_ratings" => self.min_neighbor_ratings = parse_num(key, value)?,
            "p" => s.p = parse_num(key, value)?,
            "smoothing_eps" => s.smoothing_eps = parse_num(key, value)?,
            "max_iterations" => s.max_iterations = parse_num(key, value)?,
            "objective_rel_tol" => s.objective_rel_tol = parse_num(key, value)?,
            "initial_step" => s.initial_step = parse_num(key, value)?,
            "backtrack_factor" => s.backtrack_factor = parse_num(key, value)?,
            "source_tolerance" => s.source_tolerance = parse_num(key, value)?,
            "continuation" => s.continuation = parse_bool(key, value)?,
            "continuation_start_eps" => s.continuation_start_eps = parse_num(key, value)?,
            "continuation_factor" => s.continuation_factor = parse_num(key, value)?,
            "restarts" => s.restarts = parse_num(key, value)?,
            "restart_noise" => s.restart_noise = parse_num(key, value)?,
            "restart_seed" => s.restart_seed = parse_num(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.solver;
        Some(match key {
            "dataset" => self
                .dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "format" => self.format.as_str().to_string(),
            "rating_min" => s.bounds.low.to_string(),
            "rating_max" => s.bounds.high.to_string(),
            "threshold" => self.threshold.to_string(),
            "min_support" => self.min_support.to_string(),
            "split_fraction" => self.split_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "methods" => self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
            "output_dir" => self.output_dir.display().to_string(),
            "coverage" => self.coverage.to_string(),
            "min_neighbor_ratings" => self.min_neighbor_ratings.to_string(),
            "p" => s.p.to_string(),
            "smoothing_eps" => s.smoothing_eps.to_string(),
            "max_iterations" => s.max_iterations.to_string(),
            "objective_rel_tol" => s.objective_rel_tol.to_string(),
            "initial_step" => s.initial_step.to_string(),
            "backtrack_factor" => s.backtrack_factor.to_string(),
            "source_tolerance" => s.source_tolerance.to_string(),
            "continuation" => s.continuation.to_string(),
            "continuation_start_eps" => s.continuation_start_eps.to_string(),
            "continuation_factor" => s.continuation_factor.to_string(),
            "restarts" => s.restarts.to_string(),
            "restart_noise" => s.restart_noise.to_string(),
            "restart_seed" => s.restart_seed.to_string(),
            _ => return None,
        })
    }

    /// Every key, in [`KEYS`] order, as it would be written to a file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap_or_default());
        }
        out
    }

    pub fn bounds(&self) -> Bounds {
        self.solver.bounds
    }

    pub fn validate(&self) -> Result<()> {
        Bounds::new(self.solver.bounds.low, self.solver.bounds.high)?;
        if !(-1.0..1.0).contains(&self.threshold) {
            bail!("threshold must lie in [-1, 1), got {}", self.threshold);
        }
        if self.min_support < 2 {
            bail!("min_support must be at least 2, got {}", self.min_support);
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            bail!("split_fraction must lie in (0, 1), got {}", self.split_fraction);
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            bail!("coverage must lie in (0, 1], got {}", self.coverage);
        }
        if self.methods.is_empty() {
            bail!("methods must name at least one method");
        }
        if self.methods.contains(&Method::L0Oracle) {
            bail!("l0_oracle is a toy-scale search, not an evaluation method");
        }
        let mut uniq = self.methods.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != self.methods.len() {
            bail!("methods lists a method twice");
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set("dataset", "data/ml-1m/ratings.dat").unwrap();
        c.set("format", "movielens_dat").unwrap();
        c.set("smoothing_eps", "3e-7").unwrap();
        c.set("methods", "knn, sfr").unwrap();
        c.set("continuation", "false").unwrap();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn every_key_is_settable_and_readable() {
        let c = ExperimentConfig::default();
        for key in KEYS {
            let mut d = c.clone();
            d.set(key, &c.get(key).unwrap()).unwrap();
            assert_eq!(d, c, "{key}");
        }
        assert_eq!(ExperimentConfig::default().to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ExperimentConfig::parse("# x\n\nthreshold = 0.3\n  seed=7  \n").unwrap();
        assert_eq!(c.threshold, 0.3);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("nope = 1").is_err());
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(ExperimentConfig::parse("threshold").is_err());
        assert!(ExperimentConfig::parse("seed = -1").is_err());
        assert!(ExperimentConfig::parse("methods = knn,magic").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ("threshold", "1.5"),
            ("split_fraction", "1"),
            ("coverage", "0"),
            ("min_support", "1"),
            ("methods", "knn,knn"),
            ("methods", "l0"),
            ("p", "1"),
            ("rating_min", "9"),
        ];
        for (k, v) in bad {
            let mut c = ExperimentConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
    }
}
