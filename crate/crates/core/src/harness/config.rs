//! Line-oriented experiment configuration.
//!
//! `[section]` headers, `key = value` lines and `#` comments. Lists are
//! comma separated. Every key has a default except that `[problem]` and
//! `[controls]` must be present; the keys that fell back to defaults are
//! recorded so reports can list them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::control::{AffineCoefficients, ControlGrid, ControlledModel, CostSpec};
use crate::error::{ConfigError, Error, Result};
use crate::exec::Execution;
use crate::harness::csv::Table;
use crate::hjb::{HjbDomain, Window};
use crate::levy::LevyMeasure;
use crate::martingale::{ControlBounds, MartingaleSimulator};

/// Recipe names accepted by [`crate::harness::run_experiment`].
pub const RECIPES: &[&str] = &[
    "kernel-masses",
    "martingale-stats",
    "structure-residual",
    "ito-check",
    "closed-form-hjb",
    "mc-vs-pdde",
    "dpp-check",
    "counterexample",
    "refine-check",
    "determinism",
];

/// Terminal costs known to the registry.
pub const COSTS: &[&str] = &["quadratic", "cosine", "quartic", "zero"];

/// Lévy measure families known to the registry.
pub const MEASURES: &[&str] = &["inverse-square", "table"];

/// Coefficient families known to the registry.
pub const PROBLEMS: &[&str] = &["affine"];

const REQUIRED_SECTIONS: &[&str] = &["problem", "controls"];

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "name",
            "family",
            "m",
            "d",
            "drift_rate",
            "drift_matrix",
            "drift_offset",
            "sigma",
            "sigma_matrix",
            "pi_scaled",
            "cost",
            "t0",
            "horizon",
        ],
    ),
    ("measure", &["family", "table"]),
    ("controls", &["delta0", "cap", "u_levels", "pi_levels"]),
    (
        "grid",
        &[
            "lower",
            "upper",
            "dy",
            "margin",
            "window_lower",
            "window_upper",
            "dt",
        ],
    ),
    ("mc", &["paths", "dt", "t", "y0"]),
    ("run", &["seed", "out", "parallel"]),
    ("kernel", &["u"]),
    (
        "martingale",
        &["levels", "feedback_level", "orthogonal_u", "horizon"],
    ),
    (
        "residual",
        &["u", "paths", "fine_dt", "rms_paths", "rms_dt"],
    ),
    ("ito", &["u", "paths", "fine_dt"]),
    ("crossval", &["cost", "probes"]),
    ("dpp", &["h", "inner_dt"]),
    ("counterexample", &["horizon", "dt", "pairs", "max_pairs"]),
    ("refine", &["factor"]),
    ("determinism", &["recipe"]),
];

/// Keys excluded from the config hash: they place artifacts but do not
/// change them.
const UNHASHED: &[&str] = &["run.out", "run.parallel"];

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub m: usize,
    pub d: usize,
    /// Row-major `m × m`.
    pub drift_matrix: Vec<f64>,
    pub drift_offset: Vec<f64>,
    /// Row-major `m × d`.
    pub sigma: Vec<f64>,
    pub pi_scaled: bool,
    pub cost: String,
    pub t0: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureConfig {
    InverseSquare,
    /// CSV with columns `x, density`, relative to the config file.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlsConfig {
    pub delta0: f64,
    pub cap: f64,
    pub u_levels: Vec<f64>,
    pub pi_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Region of interest; the lattice adds `margin` on every side.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dy: f64,
    /// `None` picks the largest shift plus six diffusion lengths.
    pub margin: Option<f64>,
    pub window: Option<(Vec<f64>, Vec<f64>)>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub t: f64,
    pub y0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleConfig {
    pub levels: Vec<f64>,
    pub feedback_level: f64,
    pub orthogonal_u: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub u: f64,
    pub paths: usize,
    pub fine_dt: f64,
    pub rms_paths: usize,
    pub rms_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoConfig {
    pub u: f64,
    pub paths: usize,
    pub fine_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalConfig {
    pub cost: String,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppConfig {
    pub h: f64,
    pub inner_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Non-censored pairs to collect; `None` uses `mc.paths`.
    pub pairs: Option<usize>,
    pub max_pairs: usize,
}

/// One effective setting, in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub defaulted: bool,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub measure: MeasureConfig,
    pub controls: ControlsConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub run: RunConfig,
    pub kernel_u: Vec<f64>,
    pub martingale: MartingaleConfig,
    pub residual: ResidualConfig,
    pub ito: ItoConfig,
    pub crossval: CrossvalConfig,
    pub dpp: DppConfig,
    pub counterexample: CounterexampleConfig,
    pub refine_factor: usize,
    pub determinism_recipe: String,
    /// Effective settings in schema order.
    pub settings: Vec<Setting>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let mut out = Vec::new();
        if let Some(s) = self.seed {
            out.push(("run", "seed", s.to_string()));
        }
        if let Some(p) = self.paths {
            out.push(("mc", "paths", p.to_string()));
        }
        if let Some(dt) = self.dt {
            out.push(("mc", "dt", format!("{dt:?}")));
        }
        if let Some(o) = &self.out {
            out.push(("run", "out", o.display().to_string()));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct RawValue {
    text: String,
    line: Option<usize>,
}

#[derive(Debug, Default)]
struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, RawValue>>,
}

fn schema_keys(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

fn lex(text: &str, errors: &mut Vec<ConfigError>) -> RawConfig {
    let mut raw = RawConfig::default();
    let mut headers: BTreeMap<String, usize> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut skipping = false;
    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = full.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(err(
                    Some(line_no),
                    format!("malformed section header `{line}`"),
                ));
                current = None;
                skipping = true;
                continue;
            };
            let name = name.trim().to_string();
            if schema_keys(&name).is_none() {
                errors.push(err(Some(line_no), format!("unknown section [{name}]")));
                current = None;
                skipping = true;
                continue;
            }
            if let Some(&first) = headers.get(&name) {
                errors.push(err(
                    Some(line_no),
                    format!("section [{name}] repeated (lines {first} and {line_no})"),
                ));
            } else {
                headers.insert(name.clone(), line_no);
            }
            raw.sections.entry(name.clone()).or_default();
            current = Some(name);
            skipping = false;
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(err(
                Some(line_no),
                format!("expected `key = value`, found `{line}`"),
            ));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = &current else {
            if !skipping {
                errors.push(err(
                    Some(line_no),
                    format!("key `{key}` outside any known section"),
                ));
            }
            continue;
        };
        if !schema_keys(section).is_some_and(|keys| keys.contains(&key)) {
            errors.push(err(
                Some(line_no),
                format!("unknown key `{key}` in [{section}]"),
            ));
            continue;
        }
        if value.is_empty() {
            errors.push(err(Some(line_no), format!("key `{key}` has no value")));
            continue;
        }
        let entries = raw.sections.get_mut(section).expect("section registered");
        if let Some(prev) = entries.get(key) {
            errors.push(err(
                Some(line_no),
                format!(
                    "duplicate key `{key}` in [{section}] (lines {} and {line_no})",
                    prev.line.unwrap_or(0)
                ),
            ));
            continue;
        }
        entries.insert(
            key.to_string(),
            RawValue {
                text: value.to_string(),
                line: Some(line_no),
            },
        );
    }
    raw
}

fn fmt_f64(v: &f64) -> String {
    format!("{v:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(fmt_f64).collect::<Vec<_>>().join(", ")
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn parse_u64(s: &str) -> std::result::Result<u64, String> {
    s.parse::<u64>()
        .map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not `true` or `false`")),
    }
}

/// Typed access that records every effective value and every error.
struct Reader {
    raw: RawConfig,
    errors: Vec<ConfigError>,
    settings: Vec<Setting>,
}

impl Reader {
    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.raw.sections.get(section)?.get(key)?.line
    }

    fn present(&self, section: &str, key: &str) -> bool {
        self.raw
            .sections
            .get(section)
            .is_some_and(|s| s.contains_key(key))
    }

    fn get<T>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
        show: impl Fn(&T) -> String,
    ) -> T {
        let full = format!("{section}.{key}");
        let raw = self
            .raw
            .sections
            .get(section)
            .and_then(|s| s.get(key))
            .cloned();
        let (value, defaulted) = match raw {
            None => (default, true),
            Some(rv) => match parse(&rv.text) {
                Ok(v) => (v, false),
                Err(msg) => {
                    self.errors.push(err(rv.line, format!("{full}: {msg}")));
                    (default, false)
                }
            },
        };
        self.settings.push(Setting {
            key: full,
            value: show(&value),
            defaulted,
        });
        value
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.get(section, key, default, parse_f64, fmt_f64)
    }

    fn list(&mut self, section: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        self.get(section, key, default, parse_list, |v| fmt_list(v))
    }

    fn usize(&mut self, section: &str, key: &str, default: usize) -> usize {
        self.get(section, key, default, parse_usize, |v| v.to_string())
    }

    fn bool(&mut self, section: &str, key: &str, default: bool) -> bool {
        self.get(section, key, default, parse_bool, |v| v.to_string())
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        self.get(
            section,
            key,
            default.to_string(),
            |s| Ok(s.to_string()),
            |v| v.clone(),
        )
    }

    fn optional_f64(&mut self, section: &str, key: &str, auto: &str) -> Option<f64> {
        self.get(
            section,
            key,
            None,
            |s| {
                if s == auto {
                    Ok(None)
                } else {
                    parse_f64(s).map(Some)
                }
            },
            |v| v.as_ref().map(fmt_f64).unwrap_or_else(|| auto.to_string()),
        )
    }

    fn fail(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let line = self.line(section, key);
        self.errors.push(err(line, message));
    }

    /// Accepts a list of length `n` or a scalar broadcast to `n` entries.
    fn vector(&mut self, section: &str, key: &str, default: f64, n: usize) -> Vec<f64> {
        let v = self.list(section, key, vec![default]);
        match v.len() {
            1 => vec![v[0]; n],
            len if len == n => v,
            len => {
                self.fail(
                    section,
                    key,
                    format!("{section}.{key}: expected 1 or {n} values, found {len}"),
                );
                vec![default; n]
            }
        }
    }

    /// Flags a jump size outside `{0} ∪ [δ₀, C]`.
    fn check_jump(&mut self, section: &str, key: &str, u: f64, delta0: f64, cap: f64) {
        let a = u.abs();
        if u != 0.0 && a < delta0 {
            self.fail(
                section,
                key,
                format!(
                    "{section}.{key}: jump size {u:?} lies in the excluded gap (0, δ₀ = {delta0:?}); \
                     nonzero jump sizes need δ₀ <= |u| <= C"
                ),
            );
        } else if a > cap {
            self.fail(
                section,
                key,
                format!("{section}.{key}: jump size {u:?} exceeds the cap C = {cap:?}"),
            );
        }
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &Overrides::default())
}

/// [`parse_config`] with command-line overrides applied before validation.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let mut raw = lex(text, &mut errors);
    for (section, key, value) in overrides.entries() {
        raw.sections.entry(section.to_string()).or_default().insert(
            key.to_string(),
            RawValue {
                text: value,
                line: None,
            },
        );
    }
    for required in REQUIRED_SECTIONS {
        if !raw.sections.contains_key(*required) {
            errors.push(err(None, format!("missing required section [{required}]")));
        }
    }
    let mut r = Reader {
        raw,
        errors,
        settings: Vec::new(),
    };
    let cfg = read_all(&mut r);
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(Error::Config(r.errors))
    }
}

/// Reads `path` and resolves relative paths against its directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_with(&text, overrides)?;
    cfg.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(cfg)
}

fn read_problem(r: &mut Reader) -> ProblemConfig {
    let name = r.string("problem", "name", "closed-form");
    let family = r.string("problem", "family", "affine");
    if !PROBLEMS.contains(&family.as_str()) {
        r.fail(
            "problem",
            "family",
            format!(
                "problem.family: unknown family `{family}` (known: {})",
                PROBLEMS.join(", ")
            ),
        );
    }
    let mut m = r.usize("problem", "m", 1);
    let mut d = r.usize("problem", "d", 1);
    if m == 0 {
        r.fail("problem", "m", "problem.m must be at least 1");
        m = 1;
    }
    if d == 0 {
        r.fail("problem", "d", "problem.d must be at least 1");
        d = 1;
    }
    let rate = r.f64("problem", "drift_rate", 0.0);
    let mut diag = vec![0.0; m * m];
    for i in 0..m {
        diag[i * m + i] = rate;
    }
    let explicit_drift = r.present("problem", "drift_matrix");
    let drift_matrix = r.list("problem", "drift_matrix", diag.clone());
    let drift_matrix = if drift_matrix.len() == m * m {
        drift_matrix
    } else {
        r.fail(
            "problem",
            "drift_matrix",
            format!(
                "problem.drift_matrix: expected {} values, found {}",
                m * m,
                drift_matrix.len()
            ),
        );
        diag
    };
    if explicit_drift && r.present("problem", "drift_rate") {
        r.fail(
            "problem",
            "drift_matrix",
            "problem.drift_matrix and problem.drift_rate are exclusive",
        );
    }
    let drift_offset = r.vector("problem", "drift_offset", 0.0, m);
    let scale = r.f64("problem", "sigma", 1.0);
    let mut pattern = vec![0.0; m * d];
    for i in 0..d {
        pattern[(i % m) * d + i] = scale;
    }
    let explicit_sigma = r.present("problem", "sigma_matrix");
    let sigma = r.list("problem", "sigma_matrix", pattern.clone());
    let sigma = if sigma.len() == m * d {
        sigma
    } else {
        r.fail(
            "problem",
            "sigma_matrix",
            format!(
                "problem.sigma_matrix: expected {} values, found {}",
                m * d,
                sigma.len()
            ),
        );
        pattern
    };
    if explicit_sigma && r.present("problem", "sigma") {
        r.fail(
            "problem",
            "sigma_matrix",
            "problem.sigma_matrix and problem.sigma are exclusive",
        );
    }
    let pi_scaled = r.bool("problem", "pi_scaled", false);
    let cost = r.string("problem", "cost", "quadratic");
    if !COSTS.contains(&cost.as_str()) {
        r.fail(
            "problem",
            "cost",
            format!(
                "problem.cost: unknown cost `{cost}` (known: {})",
                COSTS.join(", ")
            ),
        );
    }
    let t0 = r.f64("problem", "t0", 0.0);
    let horizon = r.f64("problem", "horizon", 1.0);
    if !(horizon > t0) {
        r.fail(
            "problem",
            "horizon",
            "problem.horizon must exceed problem.t0",
        );
    }
    ProblemConfig {
        name,
        m,
        d,
        drift_matrix,
        drift_offset,
        sigma,
        pi_scaled,
        cost,
        t0,
        horizon,
    }
}

fn read_measure(r: &mut Reader) -> MeasureConfig {
    let family = r.string("measure", "family", "inverse-square");
    let table = r.string("measure", "table", "none");
    match family.as_str() {
        "inverse-square" => MeasureConfig::InverseSquare,
        "table" => {
            if table == "none" {
                r.fail(
                    "measure",
                    "family",
                    "measure.family = table needs measure.table",
                );
            }
            MeasureConfig::Table(PathBuf::from(table))
        }
        other => {
            r.fail(
                "measure",
                "family",
                format!(
                    "measure.family: unknown family `{other}` (known: {})",
                    MEASURES.join(", ")
                ),
            );
            MeasureConfig::InverseSquare
        }
    }
}

fn read_controls(r: &mut Reader) -> ControlsConfig {
    let delta0 = r.f64("controls", "delta0", 0.25);
    let cap = r.f64("controls", "cap", 1.0);
    let u_levels = r.list("controls", "u_levels", vec![0.0, 0.5, -0.5, 1.0, -1.0]);
    let pi_levels = r.list("controls", "pi_levels", vec![1.0]);
    if delta0 < 0.0 {
        r.fail("controls", "delta0", "controls.delta0 must be nonnegative");
    }
    if u_levels.iter().any(|&u| u != 0.0) && !(delta0 > 0.0) {
        r.fail(
            "controls",
            "delta0",
            "controls.delta0 must be positive when a nonzero u level is present",
        );
    }
    if cap < delta0 {
        r.fail(
            "controls",
            "cap",
            "controls.cap must be at least controls.delta0",
        );
    }
    for &u in &u_levels {
        r.check_jump("controls", "u_levels", u, delta0, cap);
    }
    ControlsConfig {
        delta0,
        cap,
        u_levels,
        pi_levels,
    }
}

fn read_grid(r: &mut Reader, m: usize) -> GridConfig {
    let lower = r.vector("grid", "lower", -4.0, m);
    let upper = r.vector("grid", "upper", 4.0, m);
    let dy = r.f64("grid", "dy", 0.05);
    let margin = r.optional_f64("grid", "margin", "auto");
    let has_window = r.present("grid", "window_lower") || r.present("grid", "window_upper");
    let wl = r.vector("grid", "window_lower", f64::NAN, m);
    let wu = r.vector("grid", "window_upper", f64::NAN, m);
    let dt = r.optional_f64("grid", "dt", "auto");
    if !(dy > 0.0) {
        r.fail("grid", "dy", "grid.dy must be positive");
    }
    for k in 0..m {
        let len = upper[k] - lower[k];
        if !(len > 0.0) {
            r.fail(
                "grid",
                "upper",
                "grid.upper must exceed grid.lower on every axis",
            );
        } else if dy > 0.0 && ((len / dy) - (len / dy).round()).abs() > 1e-9 {
            r.fail(
                "grid",
                "dy",
                format!("grid.dy = {dy:?} does not divide the axis length {len:?}"),
            );
        }
    }
    if margin.is_some_and(|v| v < 0.0) {
        r.fail("grid", "margin", "grid.margin must be nonnegative");
    }
    if dt.is_some_and(|v| !(v > 0.0)) {
        r.fail("grid", "dt", "grid.dt must be positive");
    }
    let window = if has_window {
        if wl.iter().chain(&wu).any(|v| v.is_nan()) {
            r.fail(
                "grid",
                "window_lower",
                "grid.window_lower and grid.window_upper go together",
            );
            None
        } else if (0..m).any(|k| !(wl[k] < wu[k])) {
            r.fail(
                "grid",
                "window_upper",
                "grid.window_upper must exceed grid.window_lower",
            );
            None
        } else {
            Some((wl, wu))
        }
    } else {
        None
    };
    GridConfig {
        lower,
        upper,
        dy,
        margin,
        window,
        dt,
    }
}

fn positive(r: &mut Reader, section: &str, key: &str, v: f64) {
    if !(v > 0.0) {
        r.fail(section, key, format!("{section}.{key} must be positive"));
    }
}

fn min_count(r: &mut Reader, section: &str, key: &str, v: usize, min: usize) {
    if v < min {
        r.fail(
            section,
            key,
            format!("{section}.{key} must be at least {min}"),
        );
    }
}

fn check_cost(r: &mut Reader, section: &str, key: &str, name: &str) {
    if !COSTS.contains(&name) {
        r.fail(
            section,
            key,
            format!(
                "{section}.{key}: unknown cost `{name}` (known: {})",
                COSTS.join(", ")
            ),
        );
    }
}

fn read_all(r: &mut Reader) -> ExperimentConfig {
    let problem = read_problem(r);
    let measure = read_measure(r);
    let controls = read_controls(r);
    let (delta0, cap) = (controls.delta0, controls.cap);
    let grid = read_grid(r, problem.m);

    let paths = r.usize("mc", "paths", 10_000);
    min_count(r, "mc", "paths", paths, 2);
    let mc_dt = r.f64("mc", "dt", 1e-3);
    positive(r, "mc", "dt", mc_dt);
    let mc_t = r.f64("mc", "t", problem.t0);
    if !(mc_t >= problem.t0 && mc_t < problem.horizon) {
        r.fail("mc", "t", "mc.t must lie in [problem.t0, problem.horizon)");
    }
    let y0 = r.vector("mc", "y0", 1.0, problem.m);
    let mc = McConfig {
        paths,
        dt: mc_dt,
        t: mc_t,
        y0,
    };

    let seed = r.get("run", "seed", 20_240_611u64, parse_u64, |v| v.to_string());
    if seed == 0 {
        r.fail("run", "seed", "run.seed must be positive");
    }
    let out = PathBuf::from(r.string("run", "out", "out"));
    let parallel = r.bool("run", "parallel", true);
    let run = RunConfig {
        seed,
        out,
        parallel,
    };

    let kernel_u = r.list("kernel", "u", vec![2.0, 1.0]);
    if kernel_u.contains(&0.0) {
        r.fail("kernel", "u", "kernel.u entries must be nonzero");
    }

    let levels = r.list("martingale", "levels", vec![0.0, 0.5]);
    for &u in &levels {
        r.check_jump("martingale", "levels", u, delta0, cap);
    }
    let feedback_level = r.f64("martingale", "feedback_level", 0.5);
    r.check_jump("martingale", "feedback_level", feedback_level, delta0, cap);
    let orthogonal_u = r.f64("martingale", "orthogonal_u", 1.0);
    r.check_jump("martingale", "orthogonal_u", orthogonal_u, delta0, cap);
    let mhorizon = r.f64("martingale", "horizon", 1.0);
    positive(r, "martingale", "horizon", mhorizon);
    let martingale = MartingaleConfig {
        levels,
        feedback_level,
        orthogonal_u,
        horizon: mhorizon,
    };

    let ru = r.f64("residual", "u", 0.5);
    r.check_jump("residual", "u", ru, delta0, cap);
    if ru == 0.0 {
        r.fail("residual", "u", "residual.u must be nonzero");
    }
    let rpaths = r.usize("residual", "paths", 100);
    min_count(r, "residual", "paths", rpaths, 2);
    let fine_dt = r.f64("residual", "fine_dt", 1e-5);
    positive(r, "residual", "fine_dt", fine_dt);
    let rms_paths = r.usize("residual", "rms_paths", 1000);
    min_count(r, "residual", "rms_paths", rms_paths, 2);
    let rms_dt = r.f64("residual", "rms_dt", 1e-4);
    positive(r, "residual", "rms_dt", rms_dt);
    let residual = ResidualConfig {
        u: ru,
        paths: rpaths,
        fine_dt,
        rms_paths,
        rms_dt,
    };

    let iu = r.f64("ito", "u", 0.5);
    r.check_jump("ito", "u", iu, delta0, cap);
    let ipaths = r.usize("ito", "paths", 100);
    min_count(r, "ito", "paths", ipaths, 2);
    let ifine = r.f64("ito", "fine_dt", 1e-5);
    positive(r, "ito", "fine_dt", ifine);
    let ito = ItoConfig {
        u: iu,
        paths: ipaths,
        fine_dt: ifine,
    };

    let ccost = r.string("crossval", "cost", "cosine");
    check_cost(r, "crossval", "cost", &ccost);
    let probes = r.list("crossval", "probes", vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    let crossval = CrossvalConfig {
        cost: ccost,
        probes,
    };

    let h = r.f64("dpp", "h", 0.1);
    if !(h > 0.0 && mc.t + h <= problem.horizon) {
        r.fail(
            "dpp",
            "h",
            "dpp.h must be positive with mc.t + dpp.h <= problem.horizon",
        );
    }
    let inner_dt = r.f64("dpp", "inner_dt", 1e-3);
    positive(r, "dpp", "inner_dt", inner_dt);
    let dpp = DppConfig { h, inner_dt };

    let chorizon = r.f64("counterexample", "horizon", 30.0);
    positive(r, "counterexample", "horizon", chorizon);
    let cdt = r.f64("counterexample", "dt", 1e-2);
    positive(r, "counterexample", "dt", cdt);
    let pairs = r.get(
        "counterexample",
        "pairs",
        None,
        |s| {
            if s == "auto" {
                Ok(None)
            } else {
                parse_usize(s).map(Some)
            }
        },
        |v| v.map(|p| p.to_string()).unwrap_or_else(|| "auto".into()),
    );
    if pairs == Some(0) {
        r.fail(
            "counterexample",
            "pairs",
            "counterexample.pairs must be positive",
        );
    }
    let max_pairs = r.usize("counterexample", "max_pairs", 1_000_000);
    min_count(r, "counterexample", "max_pairs", max_pairs, 1);
    let counterexample = CounterexampleConfig {
        horizon: chorizon,
        dt: cdt,
        pairs,
        max_pairs,
    };

    let refine_factor = r.usize("refine", "factor", 2);
    min_count(r, "refine", "factor", refine_factor, 2);

    let determinism_recipe = r.string("determinism", "recipe", "martingale-stats");
    if determinism_recipe == "determinism" || !RECIPES.contains(&determinism_recipe.as_str()) {
        r.fail(
            "determinism",
            "recipe",
            format!("determinism.recipe: `{determinism_recipe}` is not a repeatable recipe"),
        );
    }

    ExperimentConfig {
        problem,
        measure,
        controls,
        grid,
        mc,
        run,
        kernel_u,
        martingale,
        residual,
        ito,
        crossval,
        dpp,
        counterexample,
        refine_factor,
        determinism_recipe,
        settings: std::mem::take(&mut r.settings),
        base_dir: PathBuf::from("."),
    }
}

/// Builds a registered terminal cost for dimension `m`.
pub fn cost_by_name(name: &str, m: usize) -> Result<CostSpec> {
    match name {
        "quadratic" => Ok(CostSpec::quadratic(m)),
        "cosine" => Ok(CostSpec::cosine(m)),
        "quartic" => Ok(CostSpec::quartic(m)),
        "zero" => Ok(CostSpec::constant(m, 0.0)),
        other => Err(Error::InvalidArgument(format!("unknown cost `{other}`"))),
    }
}

impl ExperimentConfig {
    /// `section.key = value` per hashed setting, one per line.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for s in &self.settings {
            if !UNHASHED.contains(&s.key.as_str()) {
                out.push_str(&format!("{} = {}\n", s.key, s.value));
            }
        }
        out
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn defaults(&self) -> impl Iterator<Item = &Setting> {
        self.settings.iter().filter(|s| s.defaulted)
    }

    pub fn execution(&self) -> Execution {
        if self.run.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn bounds(&self) -> Result<ControlBounds> {
        ControlBounds::new(self.controls.delta0, self.controls.cap)
    }

    pub fn measure(&self) -> Result<LevyMeasure> {
        match &self.measure {
            MeasureConfig::InverseSquare => Ok(LevyMeasure::inverse_square_positive()),
            MeasureConfig::Table(rel) => {
                let path = self.base_dir.join(rel);
                let table = Table::read(&path)?;
                let (Some(x), Some(dens)) = (table.column("x"), table.column("density")) else {
                    return Err(Error::Parse {
                        path,
                        reason: "density table needs columns `x` and `density`".into(),
                    });
                };
                let points: Vec<(f64, f64)> = x.into_iter().zip(dens).collect();
                LevyMeasure::from_table(&points)
            }
        }
    }

    pub fn simulator(&self) -> Result<MartingaleSimulator> {
        MartingaleSimulator::new(self.measure()?, self.bounds()?)
    }

    pub fn coefficients(&self) -> Result<Arc<AffineCoefficients>> {
        let p = &self.problem;
        Ok(Arc::new(AffineCoefficients::new(
            p.m,
            p.d,
            p.drift_matrix.clone(),
            p.drift_offset.clone(),
            p.sigma.clone(),
            p.pi_scaled,
        )?))
    }

    pub fn model(&self) -> Result<ControlledModel> {
        Ok(ControlledModel::new(
            self.simulator()?,
            self.coefficients()?,
        ))
    }

    pub fn control_grid(&self) -> Result<ControlGrid> {
        ControlGrid::from_levels(
            &self.controls.pi_levels,
            &self.controls.u_levels,
            self.problem.d,
            self.bounds()?,
        )
    }

    pub fn cost(&self) -> Result<CostSpec> {
        cost_by_name(&self.problem.cost, self.problem.m)
    }

    /// Largest column norm of `σ`, scaled by the largest `|π|` when `σ`
    /// depends on `π`.
    fn sigma_max(&self) -> f64 {
        let p = &self.problem;
        let col = (0..p.d)
            .map(|i| {
                (0..p.m)
                    .map(|r| p.sigma[r * p.d + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if p.pi_scaled {
            col * self
                .controls
                .pi_levels
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
        } else {
            col
        }
    }

    /// Padding added around the region of interest: the largest jump shift
    /// plus the distance drift and six diffusion lengths cover over the
    /// horizon, rounded up to a multiple of `dy`.
    pub fn margin(&self) -> f64 {
        if let Some(m) = self.grid.margin {
            return (m / self.grid.dy - 1e-9).ceil() * self.grid.dy;
        }
        let p = &self.problem;
        let horizon = p.horizon - p.t0;
        let sigma = self.sigma_max();
        let cap = self
            .controls
            .u_levels
            .iter()
            .map(|u| u.abs())
            .fold(0.0, f64::max);
        let mut drift = 0.0f64;
        for corner in 0..(1usize << p.m) {
            let y: Vec<f64> = (0..p.m)
                .map(|r| {
                    if corner >> r & 1 == 1 {
                        self.grid.upper[r]
                    } else {
                        self.grid.lower[r]
                    }
                })
                .collect();
            for r in 0..p.m {
                let b: f64 = p.drift_offset[r]
                    + (0..p.m)
                        .map(|c| p.drift_matrix[r * p.m + c] * y[c])
                        .sum::<f64>();
                drift = drift.max(b.abs());
            }
        }
        let raw = cap * sigma + drift * horizon + 6.0 * sigma * horizon.sqrt();
        (raw / self.grid.dy - 1e-9).ceil() * self.grid.dy
    }

    /// Lattice, horizon and window of the HJB solve.
    pub fn hjb_domain(&self) -> Result<HjbDomain> {
        let margin = self.margin();
        let g = &self.grid;
        let window = match &g.window {
            Some((lo, hi)) => Window::new(lo.clone(), hi.clone())?,
            None => Window::new(g.lower.clone(), g.upper.clone())?,
        };
        Ok(HjbDomain {
            lower: g.lower.iter().map(|v| v - margin).collect(),
            upper: g.upper.iter().map(|v| v + margin).collect(),
            dy: g.dy,
            t0: self.problem.t0,
            t_end: self.problem.horizon,
            window: Some(window),
            dt: g.dt,
        })
    }

    /// Exact value when the drift vanishes and the cost is `|y|²`:
    /// `V(t, y) = |y|² + k (T − t)` with `k = min π² · ‖σ‖²_F` (π only
    /// when it scales `σ`).
    pub fn closed_form(&self) -> Option<impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static> {
        let p = &self.problem;
        let driftless = p
            .drift_matrix
            .iter()
            .chain(&p.drift_offset)
            .all(|&v| v == 0.0);
        if !driftless || p.cost != "quadratic" {
            return None;
        }
        let frob: f64 = p.sigma.iter().map(|s| s * s).sum();
        let scale = if p.pi_scaled {
            self.controls
                .pi_levels
                .iter()
                .map(|v| v * v)
                .fold(f64::INFINITY, f64::min)
        } else {
            1.0
        };
        let (k, t_end) = (frob * scale, p.horizon);
        Some(move |t: f64, y: &[f64]| y.iter().map(|v| v * v).sum::<f64>() + k * (t_end - t))
    }

    /// Output directory, resolved against the config's directory.
    pub fn out_dir(&self) -> PathBuf {
        if self.run.out.is_absolute() {
            self.run.out.clone()
        } else {
            self.base_dir.join(&self.run.out)
        }
    }
}
