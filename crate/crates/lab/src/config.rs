//! Run configuration: a flat `key = value` text format.
//!
//! Keys carry a section prefix (`model.alpha`, `scheme.kind`, `mc.seed`, ...).
//! Values are numbers, bare words, or bracketed lists; matrices are written
//! row-major as nested lists, e.g. `[[1, 0.5], [0.5, 2]]`. A bare number is
//! accepted wherever a vector or matrix is expected and means a 1x1 value.
//! `#` starts a comment. Unknown keys, duplicate keys and a missing
//! `mc.seed` are errors.

use std::fmt;
use std::path::PathBuf;

use driftlab_core::{DateScheme, Matrix, Model, ModelParams, ValidationError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("seed required (set mc.seed)")]
    SeedRequired,
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("invalid model: {0}")]
    Validation(#[from] ValidationError),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Deterministic,
    Poisson,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Deterministic => "deterministic",
            SchemeKind::Poisson => "poisson",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n: usize,
    pub lambda: f64,
    pub n_list: Vec<usize>,
    pub lambda_list: Vec<f64>,
}

impl SchemeConfig {
    pub fn scheme(&self) -> DateScheme {
        match self.kind {
            SchemeKind::Deterministic => DateScheme::Deterministic { n: self.n },
            SchemeKind::Poisson => DateScheme::Poisson { lambda: self.lambda },
        }
    }

    /// One scheme per level of the list matching `kind`.
    pub fn scheme_list(&self) -> Vec<DateScheme> {
        match self.kind {
            SchemeKind::Deterministic => self.n_list.iter().map(|&n| DateScheme::Deterministic { n }).collect(),
            SchemeKind::Poisson => self.lambda_list.iter().map(|&lambda| DateScheme::Poisson { lambda }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    /// Simulation grid spacing; `None` picks the scheme default per level.
    pub h_max: Option<f64>,
    pub quad_step: f64,
    pub riccati_step: f64,
    pub stationary_tol: f64,
    pub loewner_tol: f64,
    pub checkpoints: usize,
    pub full_sup: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_mc: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub x0: f64,
    pub p: f64,
    pub paths: usize,
    pub table2a_n: Vec<usize>,
    pub table2b_lambda: Vec<f64>,
    pub slope_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub scheme: SchemeConfig,
    pub numerics: Numerics,
    pub mc: McConfig,
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "model.alpha",
    "model.beta",
    "model.delta",
    "model.sigma_r",
    "model.sigma_j",
    "model.m0",
    "model.sigma0",
    "model.horizon",
    "model.rate",
    "scheme.kind",
    "scheme.n",
    "scheme.lambda",
    "scheme.n_list",
    "scheme.lambda_list",
    "numerics.h_max",
    "numerics.quad_step",
    "numerics.riccati_step",
    "numerics.stationary_tol",
    "numerics.loewner_tol",
    "numerics.checkpoints",
    "numerics.full_sup",
    "mc.n_mc",
    "mc.seed",
    "experiment.x0",
    "experiment.p",
    "experiment.paths",
    "experiment.table2a_n",
    "experiment.table2b_lambda",
    "experiment.slope_window",
    "output.dir",
];

impl RunConfig {
    /// Bundled reference defaults with the given seed.
    pub fn table1(seed: u64) -> Self {
        RunConfig {
            model: ModelParams::table1(),
            scheme: SchemeConfig {
                kind: SchemeKind::Deterministic,
                n: 10,
                lambda: 10.0,
                n_list: vec![10, 20, 40, 80, 160, 320],
                lambda_list: vec![10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0],
            },
            numerics: Numerics {
                h_max: None,
                quad_step: 1e-3,
                riccati_step: 1e-3,
                stationary_tol: 1e-12,
                loewner_tol: 1e-8,
                checkpoints: 20,
                full_sup: false,
            },
            mc: McConfig { n_mc: 10_000, seed },
            experiment: ExperimentConfig {
                x0: 1.0,
                p: 2.0,
                paths: 1,
                table2a_n: vec![10, 100, 1000, 10_000],
                table2b_lambda: vec![10.0, 100.0, 1000.0],
                slope_window: None,
            },
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        parse_config(&text)
    }

    pub fn validated_model(&self) -> Result<Model, ConfigError> {
        Ok(self.model.clone().validate()?)
    }

    /// Grid spacing for `scheme`: the configured `h_max`, or the scheme default.
    pub fn h_max_for(&self, scheme: &DateScheme) -> f64 {
        self.numerics.h_max.unwrap_or_else(|| scheme.default_h_max(self.model.horizon))
    }

    /// Step used on value-quadrature grids.
    pub fn value_step(&self) -> f64 {
        self.numerics.quad_step.min(self.numerics.riccati_step)
    }

    /// Normalized `key = value` lines for every key, defaults included.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let s = &self.scheme;
        let n = &self.numerics;
        let e = &self.experiment;
        let vals = [
            fmt_matrix(&m.alpha),
            fmt_matrix(&m.beta),
            fmt_list(&m.delta),
            fmt_matrix(&m.sigma_r),
            fmt_matrix(&m.sigma_j),
            fmt_list(&m.m0),
            fmt_matrix(&m.sigma0),
            m.horizon.to_string(),
            m.rate.to_string(),
            s.kind.name().to_string(),
            s.n.to_string(),
            s.lambda.to_string(),
            fmt_list(&s.n_list),
            fmt_list(&s.lambda_list),
            n.h_max.map_or_else(|| "auto".to_string(), |h| h.to_string()),
            n.quad_step.to_string(),
            n.riccati_step.to_string(),
            n.stationary_tol.to_string(),
            n.loewner_tol.to_string(),
            n.checkpoints.to_string(),
            n.full_sup.to_string(),
            self.mc.n_mc.to_string(),
            self.mc.seed.to_string(),
            e.x0.to_string(),
            e.p.to_string(),
            e.paths.to_string(),
            fmt_list(&e.table2a_n),
            fmt_list(&e.table2b_lambda),
            e.slope_window.map_or_else(|| "none".to_string(), |(a, b)| fmt_list(&[a, b])),
            self.output_dir.display().to_string(),
        ];
        KEYS.iter().copied().zip(vals).collect()
    }

    pub fn echo_text(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn fmt_list<T: fmt::Display>(xs: &[T]) -> String {
    let inner: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", inner.join(", "))
}

fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| fmt_list(&(0..m.cols()).map(|j| m.get(i, j)).collect::<Vec<_>>()))
        .collect();
    format!("[{}]", rows.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Word(String),
    List(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq)]
struct Value {
    kind: Kind,
    col: usize,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    /// Column of `chars[0]` within the line, 1-based.
    base: usize,
}

impl Cursor {
    fn col(&self) -> usize {
        self.base + self.pos
    }

    fn err(&self, col: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::Parse { line: self.line, column: col, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn value(&mut self, in_list: bool) -> Result<Value, ConfigError> {
        self.skip_ws();
        let col = self.col();
        match self.peek() {
            None => Err(self.err(col, "missing value")),
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                self.skip_ws();
                if self.peek() == Some(']') {
                    self.pos += 1;
                    return Ok(Value { kind: Kind::List(items), col });
                }
                loop {
                    items.push(self.value(true)?);
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(']') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) => return Err(self.err(self.col(), format!("expected ',' or ']', found '{c}'"))),
                        None => return Err(self.err(self.col(), "unclosed '['")),
                    }
                }
                Ok(Value { kind: Kind::List(items), col })
            }
            Some(_) => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if in_list && (c == ',' || c == ']' || c.is_whitespace()) {
                        break;
                    }
                    if c == '[' || c == ']' {
                        return Err(self.err(self.col(), format!("unexpected '{c}'")));
                    }
                    self.pos += 1;
                }
                let token: String = self.chars[start..self.pos].iter().collect::<String>().trim_end().to_string();
                if token.is_empty() {
                    return Err(self.err(col, "empty list element"));
                }
                let kind = match token.parse::<f64>() {
                    Ok(v) if looks_numeric(&token) => Kind::Num(v),
                    _ => Kind::Word(token),
                };
                Ok(Value { kind, col })
            }
        }
    }
}

fn looks_numeric(token: &str) -> bool {
    token.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.')
}

struct Entry {
    key: &'static str,
    value: Value,
    line: usize,
}

impl Entry {
    fn err(&self, col: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::Parse { line: self.line, column: col, message: format!("{}: {}", self.key, message.into()) }
    }

    fn f64_of(&self, v: &Value) -> Result<f64, ConfigError> {
        match &v.kind {
            Kind::Num(x) => Ok(*x),
            _ => Err(self.err(v.col, "expected a number")),
        }
    }

    fn number(&self) -> Result<f64, ConfigError> {
        self.f64_of(&self.value)
    }

    fn count_of(&self, v: &Value) -> Result<usize, ConfigError> {
        let x = self.f64_of(v)?;
        if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(self.err(v.col, "expected a nonnegative integer"))
        }
    }

    fn count(&self) -> Result<usize, ConfigError> {
        self.count_of(&self.value)
    }

    fn word(&self) -> Result<&str, ConfigError> {
        match &self.value.kind {
            Kind::Word(w) => Ok(w),
            Kind::Num(_) => Err(self.err(self.value.col, "expected a word")),
            Kind::List(_) => Err(self.err(self.value.col, "expected a word, found a list")),
        }
    }

    fn items(&self) -> Result<Vec<&Value>, ConfigError> {
        match &self.value.kind {
            Kind::List(items) => Ok(items.iter().collect()),
            Kind::Num(_) => Ok(vec![&self.value]),
            Kind::Word(_) => Err(self.err(self.value.col, "expected a list")),
        }
    }

    fn vector(&self) -> Result<Vec<f64>, ConfigError> {
        self.items()?.into_iter().map(|v| self.f64_of(v)).collect()
    }

    fn counts(&self) -> Result<Vec<usize>, ConfigError> {
        self.items()?.into_iter().map(|v| self.count_of(v)).collect()
    }

    fn matrix(&self) -> Result<Matrix, ConfigError> {
        match &self.value.kind {
            Kind::Num(x) => Ok(Matrix::scalar(*x)),
            Kind::List(rows) => {
                if rows.is_empty() {
                    return Err(self.err(self.value.col, "empty matrix"));
                }
                let mut data = Vec::new();
                let mut width = None;
                for row in rows {
                    let Kind::List(cells) = &row.kind else {
                        return Err(self.err(row.col, "matrix rows must be bracketed lists, e.g. [[3]]"));
                    };
                    if *width.get_or_insert(cells.len()) != cells.len() {
                        return Err(self.err(row.col, "matrix rows differ in length"));
                    }
                    for c in cells {
                        data.push(self.f64_of(c)?);
                    }
                }
                let cols = width.unwrap_or(0);
                if cols == 0 {
                    return Err(self.err(self.value.col, "empty matrix row"));
                }
                Ok(Matrix::from_row_major(rows.len(), cols, data).expect("shape checked"))
            }
            Kind::Word(_) => Err(self.err(self.value.col, "expected a matrix")),
        }
    }

    fn flag(&self) -> Result<bool, ConfigError> {
        match self.word()? {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.err(self.value.col, "expected true or false")),
        }
    }

    fn raw(&self) -> String {
        match &self.value.kind {
            Kind::Word(w) => w.clone(),
            Kind::Num(x) => x.to_string(),
            Kind::List(_) => String::new(),
        }
    }
}

fn split_lines(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let Some(eq) = line.find('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                column: line[..lead].chars().count() + 1,
                message: "expected `key = value`".into(),
            });
        };
        let key_text = line[..eq].trim();
        let key_col = line[..lead].chars().count() + 1;
        let Some(&key) = KEYS.iter().find(|k| **k == key_text) else {
            return Err(ConfigError::Parse { line: line_no, column: key_col, message: format!("unknown key `{key_text}`") });
        };
        if entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::Parse { line: line_no, column: key_col, message: format!("duplicate key `{key}`") });
        }
        let rest = &line[eq + 1..];
        let mut cur = Cursor {
            chars: rest.chars().collect(),
            pos: 0,
            line: line_no,
            base: line[..=eq].chars().count() + 1,
        };
        let value = cur.value(false)?;
        cur.skip_ws();
        if cur.pos < cur.chars.len() {
            return Err(cur.err(cur.col(), "unexpected text after value"));
        }
        entries.push(Entry { key, value, line: line_no });
    }
    Ok(entries)
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = split_lines(text)?;
    let mut cfg = RunConfig::table1(0);
    let mut seed = None;
    for e in &entries {
        match e.key {
            "model.alpha" => cfg.model.alpha = e.matrix()?,
            "model.beta" => cfg.model.beta = e.matrix()?,
            "model.delta" => cfg.model.delta = e.vector()?,
            "model.sigma_r" => cfg.model.sigma_r = e.matrix()?,
            "model.sigma_j" => cfg.model.sigma_j = e.matrix()?,
            "model.m0" => cfg.model.m0 = e.vector()?,
            "model.sigma0" => cfg.model.sigma0 = e.matrix()?,
            "model.horizon" => cfg.model.horizon = e.number()?,
            "model.rate" => cfg.model.rate = e.number()?,
            "scheme.kind" => {
                cfg.scheme.kind = match e.word()? {
                    "deterministic" => SchemeKind::Deterministic,
                    "poisson" => SchemeKind::Poisson,
                    _ => return Err(e.err(e.value.col, "expected deterministic or poisson")),
                }
            }
            "scheme.n" => cfg.scheme.n = e.count()?,
            "scheme.lambda" => cfg.scheme.lambda = e.number()?,
            "scheme.n_list" => cfg.scheme.n_list = e.counts()?,
            "scheme.lambda_list" => cfg.scheme.lambda_list = e.vector()?,
            "numerics.h_max" => {
                cfg.numerics.h_max = match &e.value.kind {
                    Kind::Word(w) if w == "auto" => None,
                    _ => Some(e.number()?),
                }
            }
            "numerics.quad_step" => cfg.numerics.quad_step = e.number()?,
            "numerics.riccati_step" => cfg.numerics.riccati_step = e.number()?,
            "numerics.stationary_tol" => cfg.numerics.stationary_tol = e.number()?,
            "numerics.loewner_tol" => cfg.numerics.loewner_tol = e.number()?,
            "numerics.checkpoints" => cfg.numerics.checkpoints = e.count()?,
            "numerics.full_sup" => cfg.numerics.full_sup = e.flag()?,
            "mc.n_mc" => cfg.mc.n_mc = e.count()?,
            "mc.seed" => {
                let x = e.number()?;
                if !(x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53)) {
                    return Err(e.err(e.value.col, "seed must be an integer below 2^53"));
                }
                seed = Some(x as u64);
            }
            "experiment.x0" => cfg.experiment.x0 = e.number()?,
            "experiment.p" => cfg.experiment.p = e.number()?,
            "experiment.paths" => cfg.experiment.paths = e.count()?,
            "experiment.table2a_n" => cfg.experiment.table2a_n = e.counts()?,
            "experiment.table2b_lambda" => cfg.experiment.table2b_lambda = e.vector()?,
            "experiment.slope_window" => {
                cfg.experiment.slope_window = match &e.value.kind {
                    Kind::Word(w) if w == "none" => None,
                    _ => {
                        let v = e.vector()?;
                        if v.len() != 2 || v[0] > v[1] {
                            return Err(e.err(e.value.col, "expected [low, high]"));
                        }
                        Some((v[0], v[1]))
                    }
                }
            }
            "output.dir" => cfg.output_dir = PathBuf::from(e.raw()),
            other => unreachable!("key {other} listed but not handled"),
        }
    }
    cfg.mc.seed = seed.ok_or(ConfigError::SeedRequired)?;
    check(&cfg)?;
    Ok(cfg)
}

fn check(cfg: &RunConfig) -> Result<(), ConfigError> {
    let positive = |key: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { key, message: format!("must be positive, found {v}") })
        }
    };
    if let Some(h) = cfg.numerics.h_max {
        positive("numerics.h_max", h)?;
    }
    positive("numerics.quad_step", cfg.numerics.quad_step)?;
    positive("numerics.riccati_step", cfg.numerics.riccati_step)?;
    positive("numerics.stationary_tol", cfg.numerics.stationary_tol)?;
    positive("numerics.loewner_tol", cfg.numerics.loewner_tol)?;
    positive("experiment.x0", cfg.experiment.x0)?;
    positive("experiment.p", cfg.experiment.p)?;
    positive("scheme.lambda", cfg.scheme.lambda)?;
    let nonzero = |key: &'static str, v: usize| {
        if v > 0 {
            Ok(())
        } else {
            Err(ConfigError::Invalid { key, message: "must be at least 1".into() })
        }
    };
    nonzero("scheme.n", cfg.scheme.n)?;
    nonzero("mc.n_mc", cfg.mc.n_mc)?;
    nonzero("numerics.checkpoints", cfg.numerics.checkpoints)?;
    let increasing = |key: &'static str, v: &[f64]| {
        if v.is_empty() {
            return Err(ConfigError::Invalid { key, message: "must not be empty".into() });
        }
        if v[0] <= 0.0 || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid { key, message: "levels must be positive and strictly increasing".into() });
        }
        Ok(())
    };
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    increasing("scheme.n_list", &as_f64(&cfg.scheme.n_list))?;
    increasing("scheme.lambda_list", &cfg.scheme.lambda_list)?;
    increasing("experiment.table2a_n", &as_f64(&cfg.experiment.table2a_n))?;
    increasing("experiment.table2b_lambda", &cfg.experiment.table2b_lambda)?;
    if cfg.output_dir.as_os_str().is_empty() {
        return Err(ConfigError::Invalid { key: "output.dir", message: "must not be empty".into() });
    }
    cfg.model.clone().validate()?;
    Ok(())
}

/// Text of the bundled `table1.cfg`.
pub const TABLE1_CFG: &str = include_str!("../configs/table1.cfg");

#[cfg(test)]
mod tests {
    use super::*;

    fn with_seed(body: &str) -> String {
        format!("mc.seed = 7\n{body}")
    }

    #[test]
    fn bundled_table1_matches_defaults() {
        let cfg = parse_config(TABLE1_CFG).unwrap();
        assert_eq!(cfg, RunConfig::table1(cfg.mc.seed));
    }

    #[test]
    fn seed_is_required() {
        let err = parse_config("model.horizon = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::SeedRequired));
        assert_eq!(err.to_string(), "seed required (set mc.seed)");
    }

    #[test]
    fn scalar_matrix_forms() {
        let a = parse_config(&with_seed("model.alpha=[[3]]")).unwrap();
        assert_eq!(a.model.alpha, Matrix::scalar(3.0));
        let b = parse_config(&with_seed("model.alpha = 3")).unwrap();
        assert_eq!(b.model.alpha, Matrix::scalar(3.0));
    }

    #[test]
    fn unknown_key_reports_position() {
        match parse_config("mc.seed = 1\n  model.gamma = 2\n").unwrap_err() {
            ConfigError::Parse { line, column, message } => {
                assert_eq!((line, column), (2, 3));
                assert!(message.contains("model.gamma"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_column() {
        match parse_config("mc.seed = 1\nmodel.delta = [0.05, x]\n").unwrap_err() {
            ConfigError::Parse { line, column, .. } => assert_eq!((line, column), (2, 22)),
            other => panic!("{other:?}"),
        }
        match parse_config("mc.seed = 1\nmodel.alpha = [[1, 2]\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(matches!(parse_config("mc.seed = 1\nmc.seed = 2\n"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("mc.seed = 1\njust words\n"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn validation_is_forwarded() {
        let err = parse_config(&with_seed("model.alpha = [[-1]]")).unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
        let err = parse_config(&with_seed("numerics.quad_step = 0")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "numerics.quad_step", .. }));
        let err = parse_config(&with_seed("scheme.n_list = [20, 10, 40]")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "scheme.n_list", .. }));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::table1(99);
        cfg.model = ModelParams {
            alpha: Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(),
            beta: Matrix::identity(2),
            delta: vec![0.05, 0.02],
            sigma_r: Matrix::from_rows(&[[0.2, 0.0, 0.1], [0.0, 0.3, 0.0]]).unwrap(),
            sigma_j: Matrix::identity(2).scale(0.2),
            m0: vec![0.0, 0.1],
            sigma0: Matrix::identity(2).scale(0.1),
            horizon: 2.0,
            rate: 0.01,
        };
        cfg.scheme.kind = SchemeKind::Poisson;
        cfg.numerics.h_max = Some(1e-4);
        cfg.numerics.full_sup = true;
        cfg.experiment.slope_window = Some((-1.2, -0.8));
        cfg.output_dir = PathBuf::from("/tmp/some dir/out");
        let back = parse_config(&cfg.echo_text()).unwrap();
        assert_eq!(back, cfg);
    }
}
