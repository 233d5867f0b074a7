//! Flat key/value experiment configuration files.
//!
//! The format is one `key = value` pair per line with dotted keys, `#`
//! comments, and blank lines, e.g.
//!
//! ```text
//! # two-source sweep over SNR
//! array.omega      = 1,2,5,7
//! source.thetas_deg = -23,17
//! sweep.snr_db     = -6:3:12
//! sweep.snapshots  = 300
//! trials           = 100
//! methods          = et-focanm,foc-anm-fixed,foc-music
//! seed             = 1
//! ```
//!
//! Grids accept a single number, a comma list, or a `start:step:stop`
//! range (inclusive). Unknown keys are rejected rather than ignored.

use std::collections::BTreeMap;
use std::path::Path;

use crate::bench::{ExperimentConfig, Method, MetricKind, OrderMode};
use crate::error::{DoaError, Result};
use crate::error_stats::CovarianceMode;
use crate::geometry::ArrayGeometry;
use crate::solver::SolverParams;

/// Where the benchmark CSVs go; relative paths resolve against the working
/// directory.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub rows: String,
    pub summary: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            rows: "rows.csv".into(),
            summary: "summary.csv".into(),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "array.omega",
    "source.thetas_deg",
    "source.sigma_s2",
    "noise.ar_coeffs",
    "sweep.snr_db",
    "sweep.snapshots",
    "trials",
    "methods",
    "error.delta",
    "error.mode",
    "error.segments",
    "error.ridge_rel",
    "error.dof",
    "error.metric",
    "error.solver_scale",
    "error.shrinkage",
    "error.signal_check",
    "solver.rho",
    "solver.max_iters",
    "solver.tol",
    "method.fixed_xi_rel",
    "method.fixed_xi_abs",
    "music.grid_step_deg",
    "order.mode",
    "order.threshold_rel",
    "seed",
    "output.rows",
    "output.summary",
];

/// Raw parsed key/value pairs plus typed extraction.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DoaError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(DoaError::Config(format!(
                    "line {}: unknown key {key:?}",
                    lineno + 1
                )));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides (CLI flags win over the file).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                DoaError::Config(format!("override {item:?}: expected key=value"))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(DoaError::Config(format!("unknown key {key:?}")));
            }
            self.entries.insert(key, value.trim().to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn parse_with<T, F>(&self, key: &str, parse: F) -> Result<Option<T>>
    where
        F: FnOnce(&str) -> Result<T>,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse(raw)
                .map(Some)
                .map_err(|e| DoaError::Config(format!("key {key}: {e}"))),
        }
    }

    /// Builds the experiment description, filling unset keys with the
    /// benchmark-protocol defaults.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(g) = self.parse_with("array.omega", |s| s.parse::<ArrayGeometry>())? {
            cfg.geometry = g;
        }
        if let Some(v) = self.parse_with("source.thetas_deg", parse_f64_list)? {
            cfg.thetas_deg = v;
        }
        if let Some(v) = self.parse_with("source.sigma_s2", parse_f64)? {
            cfg.sigma_s2 = v;
        }
        if let Some(v) = self.parse_with("noise.ar_coeffs", parse_f64_list)? {
            cfg.ar_coeffs = v;
        }
        if let Some(v) = self.parse_with("sweep.snr_db", parse_f64_grid)? {
            cfg.snr_grid_db = v;
        }
        if let Some(v) = self.parse_with("sweep.snapshots", parse_usize_grid)? {
            cfg.j_grid = v;
        }
        if let Some(v) = self.parse_with("trials", parse_usize)? {
            cfg.trials = v;
        }
        if let Some(v) = self.parse_with("methods", parse_methods)? {
            cfg.methods = v;
        }
        if let Some(v) = self.parse_with("error.delta", parse_f64)? {
            cfg.delta = v;
        }
        let segments = self.parse_with("error.segments", parse_usize)?.unwrap_or(10);
        match self.get("error.mode") {
            None | Some("asymptotic") => cfg.covariance_mode = CovarianceMode::Asymptotic,
            Some("segment") => {
                cfg.covariance_mode = CovarianceMode::Segment { segments };
            }
            Some(other) => {
                return Err(DoaError::Config(format!(
                    "error.mode must be `segment` or `asymptotic`, got {other:?}"
                )))
            }
        }
        if let Some(v) = self.parse_with("error.ridge_rel", parse_f64)? {
            cfg.ridge_rel = v;
        }
        if let Some(v) = self.parse_with("error.dof", parse_usize)? {
            cfg.dof_override = Some(v);
        }
        match self.get("error.metric") {
            None | Some("isotropic") => cfg.metric = MetricKind::Isotropic,
            Some("estimated") => cfg.metric = MetricKind::Estimated,
            Some(other) => {
                return Err(DoaError::Config(format!(
                    "error.metric must be `isotropic` or `estimated`, got {other:?}"
                )))
            }
        }
        if let Some(v) = self.parse_with("error.solver_scale", parse_f64)? {
            cfg.solver_scale = v;
        }
        if let Some(v) = self.parse_with("error.shrinkage", parse_f64)? {
            cfg.shrinkage = v;
        }
        match self.get("error.signal_check") {
            None | Some("on") => cfg.signal_check = true,
            Some("off") => cfg.signal_check = false,
            Some(other) => {
                return Err(DoaError::Config(format!(
                    "error.signal_check must be `on` or `off`, got {other:?}"
                )))
            }
        }
        let mut solver = SolverParams::default();
        if let Some(v) = self.parse_with("solver.rho", parse_f64)? {
            solver.rho = v;
        }
        if let Some(v) = self.parse_with("solver.max_iters", parse_usize)? {
            solver.max_iters = v;
        }
        if let Some(v) = self.parse_with("solver.tol", parse_f64)? {
            solver.tol_primal = v;
            solver.tol_dual = v;
        }
        cfg.solver = solver;
        if let Some(v) = self.parse_with("method.fixed_xi_rel", parse_f64)? {
            cfg.fixed_xi_rel = v;
        }
        if let Some(v) = self.parse_with("method.fixed_xi_abs", parse_f64)? {
            cfg.fixed_xi_abs = Some(v);
        }
        if let Some(v) = self.parse_with("music.grid_step_deg", parse_f64)? {
            cfg.music_grid_step_deg = v;
        }
        let threshold = self
            .parse_with("order.threshold_rel", parse_f64)?
            .unwrap_or(1e-3);
        match self.get("order.mode") {
            None | Some("known") => cfg.order_mode = OrderMode::Known,
            Some("estimate") => cfg.order_mode = OrderMode::Estimate { threshold_rel: threshold },
            Some(other) => {
                return Err(DoaError::Config(format!(
                    "order.mode must be `known` or `estimate`, got {other:?}"
                )))
            }
        }
        if let Some(v) = self.parse_with("seed", parse_u64)? {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn output_paths(&self) -> OutputPaths {
        let mut out = OutputPaths::default();
        if let Some(v) = self.get("output.rows") {
            out.rows = v.to_string();
        }
        if let Some(v) = self.get("output.summary") {
            out.summary = v.to_string();
        }
        out
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| DoaError::Config(format!("bad number {s:?}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| DoaError::Config(format!("bad integer {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| DoaError::Config(format!("bad integer {s:?}")))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

/// `start:step:stop` (inclusive), a comma list, or a single number.
fn parse_f64_grid(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(DoaError::Config(format!("bad range {s:?}, want start:step:stop")));
        }
        let (start, step, stop) = (parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(DoaError::Config(format!("bad range {s:?}")));
        }
        let mut grid = Vec::new();
        let mut k = 0u32;
        loop {
            let v = start + step * k as f64;
            if v > stop + 1e-9 * step {
                break;
            }
            grid.push(v);
            k += 1;
        }
        Ok(grid)
    } else {
        parse_f64_list(s)
    }
}

fn parse_usize_grid(s: &str) -> Result<Vec<usize>> {
    let grid = parse_f64_grid(s)?;
    grid.into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v >= 1.0 {
                Ok(v as usize)
            } else {
                Err(DoaError::Config(format!("snapshot counts must be positive integers, got {v}")))
            }
        })
        .collect()
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').map(|m| m.trim().parse::<Method>()).collect()
}
