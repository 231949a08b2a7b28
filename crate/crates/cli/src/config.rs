//! Problem files.
//!
//! ```text
//! period = 6.283185307179586
//! [A] mean = 0.0   cos = []   sin = [0.1]
//! [B] mean = 1.0   cos = []   sin = []
//! [C] mean = 0.0   cos = []   sin = []
//! [solver] rel_tol = 1e-9  abs_tol = 1e-12  delta = 1e-4  grid = 2000
//! ```
//!
//! A `[section]` header may be followed by assignments on the same line or
//! on the following lines. `#` starts a comment. Values are decimal
//! literals or bracketed lists of them.

use std::collections::BTreeMap;

use abel_core::coefficients::{AbelSystem, GeneralAbelSystem, PeriodicCoefficient};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientSpec {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl CoefficientSpec {
    pub fn build(&self, period: f64) -> PeriodicCoefficient<f64> {
        PeriodicCoefficient::new(period, self.mean, self.cos.clone(), self.sin.clone())
    }

    pub fn from_coefficient(c: &PeriodicCoefficient<f64>) -> Self {
        Self {
            mean: c.mean(),
            cos: c.cos_coeffs().to_vec(),
            sin: c.sin_coeffs().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Normal {
        a: CoefficientSpec,
        b: CoefficientSpec,
        c: CoefficientSpec,
    },
    General {
        a0: CoefficientSpec,
        a1: CoefficientSpec,
        a2: CoefficientSpec,
        b0: CoefficientSpec,
        b1: CoefficientSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub delta: f64,
    /// Points per period in `solution.csv` and in residual checks.
    pub grid: usize,
    pub exit_fraction: f64,
    pub slope_tol: f64,
    pub residual_tol: f64,
    /// Harmonics kept when a general-form problem is normalised.
    pub harmonics: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            delta: 1e-4,
            grid: 2000,
            exit_fraction: 1e-3,
            slope_tol: 1e-3,
            residual_tol: 1e-7,
            harmonics: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub x_a: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Add the stable eigenvalue to the slope grid.
    pub include_lambda: bool,
    pub u0_min: f64,
    pub u0_max: f64,
    pub u0_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            x_a: vec![1e-12, 1e-3, 0.05],
            slopes: vec![-0.5, -0.3, -0.2, -0.05, 0.0],
            include_lambda: true,
            u0_min: 1e-3,
            u0_max: 10.0,
            u0_points: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub period: f64,
    pub coefficients: Coefficients,
    pub solver: SolverConfig,
    pub analysis: AnalysisConfig,
}

impl ProblemConfig {
    /// The second-kind system, when given directly.
    pub fn normal_system(&self) -> Option<AbelSystem<f64>> {
        match &self.coefficients {
            Coefficients::Normal { a, b, c } => Some(
                AbelSystem::new(a.build(self.period), b.build(self.period), c.build(self.period))
                    .expect("common period"),
            ),
            Coefficients::General { .. } => None,
        }
    }

    pub fn general_system(&self) -> Option<GeneralAbelSystem<f64>> {
        match &self.coefficients {
            Coefficients::General { a0, a1, a2, b0, b1 } => {
                let p = self.period;
                Some(
                    GeneralAbelSystem::new(a0.build(p), a1.build(p), a2.build(p), b0.build(p), b1.build(p))
                        .expect("common period"),
                )
            }
            Coefficients::Normal { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
    col: usize,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

const COEFFICIENT_SECTIONS: [&str; 8] = ["A", "B", "C", "a0", "a1", "a2", "b0", "b1"];

fn parse_err(line: usize, col: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

fn parse_number(tok: &str, line: usize, col: usize) -> Result<f64, ConfigError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(line, col, format!("expected a decimal number, found `{tok}`"))),
    }
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str, line: usize) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn expect(&mut self, c: char) -> Result<(), ConfigError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(parse_err(self.line, self.col(), format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ConfigError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(parse_err(self.line, self.col(), "expected a name"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn number(&mut self) -> Result<f64, ConfigError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let tok: String = self.chars[start..self.pos].iter().collect();
        if tok.is_empty() {
            return Err(parse_err(self.line, start + 1, "expected a value"));
        }
        parse_number(&tok, self.line, start + 1)
    }

    fn value(&mut self) -> Result<Value, ConfigError> {
        self.skip_ws();
        if self.peek() != Some('[') {
            return self.number().map(Value::Num);
        }
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(']') => {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                None => return Err(parse_err(self.line, self.col(), "unterminated list")),
                _ => {}
            }
            items.push(self.number()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {}
                _ => return Err(parse_err(self.line, self.col(), "expected `,` or `]`")),
            }
        }
    }
}

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    sections.insert(current.clone(), BTreeMap::new());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(body, line);
        if cur.at_end() {
            continue;
        }
        if cur.peek() == Some('[') {
            cur.pos += 1;
            let name = cur.ident()?;
            cur.expect(']')?;
            if sections.contains_key(&name) && !name.is_empty() {
                return Err(parse_err(line, 1, format!("section [{name}] appears twice")));
            }
            sections.insert(name.clone(), BTreeMap::new());
            current = name;
        }
        while !cur.at_end() {
            let col = cur.col();
            let key = cur.ident()?;
            cur.expect('=')?;
            let value = cur.value()?;
            let sec = sections.get_mut(&current).expect("current section exists");
            if sec.contains_key(&key) {
                return Err(parse_err(line, col, format!("duplicate key `{key}`")));
            }
            sec.insert(key, Entry { value, line, col });
        }
    }
    Ok(sections)
}

struct Table {
    name: String,
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn num(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Entry {
                value: Value::Num(v),
                ..
            }) => Ok(v),
            Some(e) => Err(parse_err(e.line, e.col, format!("`{key}` must be a number"))),
        }
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Entry {
                value: Value::Num(v),
                ..
            }) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(e) => Err(parse_err(e.line, e.col, format!("`{key}` must be a nonnegative integer"))),
        }
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(Entry {
                value: Value::List(v),
                ..
            }) => Ok(v),
            Some(e) => Err(parse_err(e.line, e.col, format!("`{key}` must be a list"))),
        }
    }

    fn finish(self, unknown: &mut Vec<String>) {
        for k in self.entries.keys() {
            if self.name.is_empty() {
                unknown.push(k.clone());
            } else {
                unknown.push(format!("[{}] {}", self.name, k));
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let mut sections = tokenize(text)?;
    let mut unknown = Vec::new();
    let mut unknown_sections = Vec::new();
    for name in sections.keys() {
        if !name.is_empty()
            && !COEFFICIENT_SECTIONS.contains(&name.as_str())
            && name != "solver"
            && name != "analysis"
        {
            unknown_sections.push(format!("[{name}]"));
        }
    }
    if !unknown_sections.is_empty() {
        return Err(ConfigError::Schema(format!(
            "unknown sections: {}",
            unknown_sections.join(", ")
        )));
    }
    let table = |name: &str, sections: &mut Sections| Table {
        name: name.to_string(),
        entries: sections.remove(name).unwrap_or_default(),
    };

    let mut top = table("", &mut sections);
    let period = match top.take("period") {
        Some(Entry {
            value: Value::Num(v),
            ..
        }) => v,
        Some(e) => return Err(parse_err(e.line, e.col, "`period` must be a number")),
        None => return Err(ConfigError::Schema("missing `period`".into())),
    };
    top.finish(&mut unknown);
    if period <= 0.0 {
        return Err(ConfigError::Schema(format!("period must be positive, got {period}")));
    }

    let mut coeffs: BTreeMap<&str, CoefficientSpec> = BTreeMap::new();
    for name in COEFFICIENT_SECTIONS {
        let present = sections.contains_key(name);
        let mut t = table(name, &mut sections);
        if present {
            coeffs.insert(
                name,
                CoefficientSpec {
                    mean: t.num("mean", 0.0)?,
                    cos: t.list("cos", &[])?,
                    sin: t.list("sin", &[])?,
                },
            );
        }
        t.finish(&mut unknown);
    }

    let mut s = table("solver", &mut sections);
    let d = SolverConfig::default();
    let solver = SolverConfig {
        rel_tol: s.num("rel_tol", d.rel_tol)?,
        abs_tol: s.num("abs_tol", d.abs_tol)?,
        delta: s.num("delta", d.delta)?,
        grid: s.count("grid", d.grid)?,
        exit_fraction: s.num("exit_fraction", d.exit_fraction)?,
        slope_tol: s.num("slope_tol", d.slope_tol)?,
        residual_tol: s.num("residual_tol", d.residual_tol)?,
        harmonics: s.count("harmonics", d.harmonics)?,
    };
    s.finish(&mut unknown);

    let mut a = table("analysis", &mut sections);
    let d = AnalysisConfig::default();
    let analysis = AnalysisConfig {
        x_a: a.list("x_a", &d.x_a)?,
        slopes: a.list("slopes", &d.slopes)?,
        include_lambda: a.num("include_lambda", 1.0)? != 0.0,
        u0_min: a.num("u0_min", d.u0_min)?,
        u0_max: a.num("u0_max", d.u0_max)?,
        u0_points: a.count("u0_points", d.u0_points)?,
    };
    a.finish(&mut unknown);

    if !unknown.is_empty() {
        return Err(ConfigError::Schema(format!("unknown keys: {}", unknown.join(", "))));
    }

    let normal: Vec<&str> = ["A", "B", "C"].into_iter().filter(|k| coeffs.contains_key(k)).collect();
    let general: Vec<&str> = ["a0", "a1", "a2", "b0", "b1"]
        .into_iter()
        .filter(|k| coeffs.contains_key(k))
        .collect();
    let coefficients = match (normal.is_empty(), general.is_empty()) {
        (false, false) => {
            return Err(ConfigError::Schema(format!(
                "both second-kind blocks ({}) and general-form blocks ({}) present",
                normal.join(", "),
                general.join(", ")
            )))
        }
        (true, true) => return Err(ConfigError::Schema("no coefficient blocks".into())),
        (false, true) => {
            let missing: Vec<&str> = ["A", "B"].into_iter().filter(|k| !coeffs.contains_key(k)).collect();
            if !missing.is_empty() {
                return Err(ConfigError::Schema(format!("missing blocks: {}", missing.join(", "))));
            }
            Coefficients::Normal {
                a: coeffs.remove("A").unwrap(),
                b: coeffs.remove("B").unwrap(),
                c: coeffs.remove("C").unwrap_or_default(),
            }
        }
        (true, false) => {
            let missing: Vec<&str> = ["a0", "a1", "b0", "b1"]
                .into_iter()
                .filter(|k| !coeffs.contains_key(k))
                .collect();
            if !missing.is_empty() {
                return Err(ConfigError::Schema(format!("missing blocks: {}", missing.join(", "))));
            }
            Coefficients::General {
                a0: coeffs.remove("a0").unwrap(),
                a1: coeffs.remove("a1").unwrap(),
                a2: coeffs.remove("a2").unwrap_or_default(),
                b0: coeffs.remove("b0").unwrap(),
                b1: coeffs.remove("b1").unwrap(),
            }
        }
    };

    if solver.grid < 100 {
        return Err(ConfigError::Schema("[solver] grid must be at least 100".into()));
    }
    if !(solver.delta > 0.0 && solver.delta <= 1e-3 * period) {
        return Err(ConfigError::Schema("[solver] delta must lie in (0, 1e-3 period]".into()));
    }
    if analysis.slopes.iter().any(|s| *s > 0.0) {
        return Err(ConfigError::Schema("[analysis] slopes must be <= 0".into()));
    }
    if analysis.x_a.iter().any(|x| *x <= 0.0) {
        return Err(ConfigError::Schema("[analysis] x_a values must be positive".into()));
    }
    if !(analysis.u0_min > 0.0 && analysis.u0_max > analysis.u0_min) {
        return Err(ConfigError::Schema("[analysis] need 0 < u0_min < u0_max".into()));
    }
    Ok(ProblemConfig {
        period,
        coefficients,
        solver,
        analysis,
    })
}

fn list_text(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    format!("[{}]", items.join(", "))
}

/// Problem-file text for a second-kind system.
pub fn system_to_config(sys: &AbelSystem<f64>) -> String {
    let mut s = format!("period = {:.16e}\n", sys.period());
    for (name, c) in [("A", &sys.a), ("B", &sys.b), ("C", &sys.c)] {
        s.push_str(&format!(
            "[{name}] mean = {:.16e} cos = {} sin = {}\n",
            c.mean(),
            list_text(c.cos_coeffs()),
            list_text(c.sin_coeffs())
        ));
    }
    s
}
