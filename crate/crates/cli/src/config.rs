//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use fpaccel_core::spectral::BetaGrid;
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Offset added to a tensor seed to obtain the seed of the initial guess.
pub const X0_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub problem: ProblemSource,
    /// Replace the synthetic extents by 50 x 50 x 50.
    #[serde(default)]
    pub full_scale: bool,
    /// Number of consecutive seeds used by the table commands.
    #[serde(default = "one")]
    pub replicates: usize,
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub estimate: EstimateOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub analysis: AnalysisToggles,
    #[serde(default)]
    pub tables: TableOptions,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Synthetic(SyntheticConfig),
    TensorFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_rank")]
    pub rank: usize,
    pub collinearity: f64,
    #[serde(default = "default_noise")]
    pub noise_homo: f64,
    #[serde(default = "default_noise")]
    pub noise_hetero: f64,
}

fn default_dims() -> Vec<usize> {
    vec![20, 20, 20]
}

fn default_rank() -> usize {
    3
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Fp,
    Aa,
    Ngmres,
    Nesterov,
    Saa,
    Sngmres,
    SngmresR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    #[default]
    Als,
    Sd,
}

impl fmt::Display for MapName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapName::Als => "ALS",
            MapName::Sd => "SD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unbounded {
    Inf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum WindowSetting {
    Count(usize),
    Unbounded(Unbounded),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRule {
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Values(Vec<f64>),
    Rule(CoefficientRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Optimal,
    OneOverL,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StepSetting {
    Value(f64),
    Rule(StepRule),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub method: MethodName,
    #[serde(default)]
    pub map: MapName,
    pub window: Option<WindowSetting>,
    pub betas: Option<Coefficients>,
    pub alpha: Option<StepSetting>,
    pub globalize: Option<bool>,
    pub label: Option<String>,
    /// ALS sweeps applied to `x0` before the method starts.
    #[serde(default)]
    pub warm_start: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    pub max_iter: usize,
    pub g_tol: f64,
    pub f_tol: f64,
    pub refine_max_iter: usize,
    pub refine_tol: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_iter: 500,
            g_tol: 1e-11,
            f_tol: 0.0,
            refine_max_iter: 20_000,
            refine_tol: 1e-14,
        }
    }
}

/// Sequence the asymptotic factor is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateQuantity {
    /// `||grad f(x_k)||`, contracting like `rho`.
    #[default]
    Gnorm,
    /// `f(x_k) - f*`, contracting like `rho^2`.
    Fgap,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateOptions {
    pub quantity: RateQuantity,
    pub window: usize,
    /// Values below `floor_rel` times `||grad f(x_0)||` (or `|f*|` for gaps) are ignored.
    pub floor_rel: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            quantity: RateQuantity::Gnorm,
            window: 10,
            floor_rel: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisToggles {
    pub spectrum: bool,
    pub bounds: bool,
    pub fov: bool,
    pub gmres_compare: bool,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        Self {
            spectrum: true,
            bounds: true,
            fov: false,
            gmres_compare: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableOptions {
    /// Condition numbers for `sd_factors`; empty means use the generated instances.
    pub kappa_bar: Vec<f64>,
    pub beta_grid: GridConfig,
    /// Grid step of the sNGMRES-R(1) search in `als_bounds`.
    pub bound_grid_step: f64,
    pub fov_angles: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            kappa_bar: Vec::new(),
            beta_grid: GridConfig::default(),
            bound_grid_step: 1e-3,
            fov_angles: fpaccel_core::gmres::DEFAULT_FOV_ANGLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = BetaGrid::standard();
        Self {
            start: g.start,
            stop: g.stop,
            step: g.step,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> fpaccel_core::Result<BetaGrid> {
        BetaGrid::new(self.start, self.stop, self.step)
    }
}

/// A rejected configuration, located by key path and source position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: key `{key}` (line {line}, column {column}): {message}")]
pub struct ConfigError {
    pub path: String,
    pub key: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ExperimentConfig {
    /// Reads and validates a configuration file. Relative paths inside it
    /// are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            key: String::new(),
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let ProblemSource::TensorFile { path: p } = &mut cfg.problem {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Parses and validates configuration text; `origin` names it in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let msg = inner.to_string();
            let mut key = e.path().to_string();
            if let Some(field) = quoted_after(&msg, "missing field ").or_else(|| quoted_after(&msg, "unknown field ")) {
                if key != field && !key.ends_with(&format!(".{field}")) {
                    key = if key == "." { field } else { format!("{key}.{field}") };
                }
            }
            let message = msg
                .rsplit_once(" at line ")
                .map(|(m, _)| m.to_string())
                .unwrap_or(msg.clone());
            ConfigError {
                path: origin.to_string(),
                key,
                line: inner.line(),
                column: inner.column(),
                message,
            }
        })?;
        cfg.validate().map_err(|(key, message)| {
            let (line, column) = locate(text, &key);
            ConfigError {
                path: origin.to_string(),
                key,
                line,
                column,
                message,
            }
        })?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), (String, String)> {
        let err = |k: &str, m: String| Err((k.to_string(), m));
        if self.schema_version != SCHEMA_VERSION {
            return err(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if let ProblemSource::Synthetic(s) = &self.problem {
            if let Err(e) = self.synthetic_spec(s, self.seed).validate() {
                return err("problem.synthetic", e.to_string());
            }
        }
        if self.replicates == 0 {
            return err("replicates", "must be at least 1".into());
        }
        if self.methods.is_empty() {
            return err("methods", "at least one method is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if let Err((field, msg)) = m.validate() {
                return err(&format!("methods[{i}].{field}"), msg);
            }
        }
        if self.estimate.window == 0 || !(self.estimate.floor_rel >= 0.0) {
            return err("estimate", "window must be positive and floor_rel nonnegative".into());
        }
        if !(self.budget.refine_tol > 0.0) || self.budget.g_tol < 0.0 || self.budget.f_tol < 0.0 {
            return err("budget", "tolerances must be nonnegative and refine_tol positive".into());
        }
        if let Err(e) = self.tables.beta_grid.grid() {
            return err("tables.beta_grid", e.to_string());
        }
        if !(self.tables.bound_grid_step > 0.0) {
            return err("tables.bound_grid_step", "must be positive".into());
        }
        if self.tables.fov_angles < 8 {
            return err("tables.fov_angles", "at least 8 angles are required".into());
        }
        if self.tables.kappa_bar.iter().any(|k| !(*k > 1.0 && k.is_finite())) {
            return err("tables.kappa_bar", "condition numbers must exceed 1".into());
        }
        Ok(())
    }

    pub fn synthetic_spec(&self, s: &SyntheticConfig, seed: u64) -> fpaccel_core::SyntheticSpec {
        fpaccel_core::SyntheticSpec {
            dims: if self.full_scale { vec![50; s.dims.len().max(3)] } else { s.dims.clone() },
            rank: s.rank,
            collinearity: s.collinearity,
            noise_homo: s.noise_homo,
            noise_hetero: s.noise_hetero,
            seed,
        }
    }

    /// Seeds of the replicate instances.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

impl MethodEntry {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        use MethodName::*;
        let stationary = matches!(self.method, Saa | Sngmres | SngmresR);
        match (self.map, self.alpha) {
            (MapName::Als, Some(_)) => return Err(("alpha", "the ALS map takes no step length".into())),
            (MapName::Sd, None) => return Err(("alpha", "the SD map needs a step length".into())),
            (MapName::Sd, Some(StepSetting::Value(a))) if !(a > 0.0 && a.is_finite()) => {
                return Err(("alpha", format!("step length must be positive, got {a}")))
            }
            _ => {}
        }
        match self.method {
            Aa | Ngmres => {
                if self.window.is_none() {
                    return Err(("window", format!("{:?} needs a window (a count or \"inf\")", self.method)));
                }
            }
            Fp | Nesterov if self.window.is_some() => {
                return Err(("window", "this method takes no window".into()));
            }
            _ => {}
        }
        if stationary {
            match &self.betas {
                None => return Err(("betas", "stationary methods need betas (a list or \"optimal\")".into())),
                Some(Coefficients::Values(v)) => {
                    let expected = match self.window {
                        Some(WindowSetting::Count(m)) => Some(m),
                        Some(WindowSetting::Unbounded(_)) => {
                            return Err(("window", "stationary methods need a finite window".into()))
                        }
                        None => None,
                    };
                    let need_extra = usize::from(self.method == Sngmres);
                    if v.is_empty() && self.method != Sngmres || v.iter().any(|b| !b.is_finite()) {
                        return Err(("betas", "coefficients must be finite and nonempty".into()));
                    }
                    if let Some(m) = expected {
                        if v.len() != m + need_extra {
                            return Err(("betas", format!("window {m} needs {} coefficients, got {}", m + need_extra, v.len())));
                        }
                    }
                }
                Some(Coefficients::Rule(CoefficientRule::Optimal)) => {
                    if self.method == Sngmres {
                        return Err(("betas", "no closed-form optimum for sngmres; use sngmres_r or explicit betas".into()));
                    }
                    if !matches!(self.window, None | Some(WindowSetting::Count(1))) {
                        return Err(("window", "optimal coefficients are available for window 1 only".into()));
                    }
                    if self.map == MapName::Sd && matches!(self.alpha, Some(StepSetting::Value(_))) {
                        return Err(("betas", "optimal betas on the SD map need alpha \"optimal\" or \"one_over_l\"".into()));
                    }
                    if self.method == SngmresR && self.alpha == Some(StepSetting::Rule(StepRule::OneOverL)) {
                        return Err(("alpha", "sngmres_r has a closed-form optimum with alpha \"optimal\" only".into()));
                    }
                }
            }
        } else if self.betas.is_some() {
            return Err(("betas", "only stationary methods take betas".into()));
        }
        if self.globalize.is_some() && !matches!(self.method, Aa | Ngmres) {
            return Err(("globalize", "only aa and ngmres are globalized".into()));
        }
        Ok(())
    }
}

fn quoted_after(msg: &str, prefix: &str) -> Option<String> {
    let rest = msg.split_once(prefix)?.1;
    let rest = rest.strip_prefix('`')?;
    Some(rest.split('`').next()?.to_string())
}

/// Best-effort source position of a key path such as `methods[1].betas`.
pub fn locate(text: &str, key: &str) -> (usize, usize) {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    for seg in key.split('.') {
        let (name, index) = match seg.split_once('[') {
            Some((n, rest)) => (n, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (seg, None),
        };
        if !name.is_empty() {
            match text[pos..].find(&format!("\"{name}\"")) {
                Some(off) => pos += off,
                None => break,
            }
        }
        if let Some(i) = index {
            if let Some(p) = nth_array_element(bytes, pos, i) {
                pos = p;
            }
        }
    }
    let line = text[..pos].matches('\n').count() + 1;
    let column = pos - text[..pos].rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn nth_array_element(bytes: &[u8], from: usize, n: usize) -> Option<usize> {
    let open = from + bytes[from..].iter().position(|&b| b == b'[')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut count = 0usize;
    let mut start = open + 1;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return None;
                }
            }
            b',' if depth == 1 => {
                count += 1;
                start = i + 1;
            }
            _ => {}
        }
        if count == n && depth == 1 && i >= start && !b.is_ascii_whitespace() && b != b',' {
            return Some(i);
        }
        if depth == 2 && count == n && i > open {
            return Some(i);
        }
    }
    None
}
