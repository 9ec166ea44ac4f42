//! Experiment configuration: `key = value` lines under `[section]` headers.
//!
//! ```text
//! [experiment]
//! id = convergence
//! seed = 1
//! r = 0.5
//!
//! [game]
//! kind = bilinear
//! p = 5
//! q = 5
//!
//! [algorithm]
//! name = PM
//! eta = theorem
//! gamma = 1
//! ```
//!
//! Matrices are bracketed row lists such as `[[1, 0], [0, 1]]` and may span
//! several lines. `#` starts a comment. `[algorithm]` may repeat.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dynamics::Algorithm;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_VERIFY_HORIZON: u64 = 10_000;
pub const DEFAULT_SCAN_CAP: u64 = 10_000_000;
pub const DEFAULT_SGA_ETAS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_FLOOR_ETAS: [f64; 7] = [1e-3, 1e-2, 1e-1, 0.3, 1.0, 3.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub enum GameSpec {
    Bilinear {
        p: usize,
        q: usize,
        c: Option<Matrix>,
    },
    /// Stable quadratic; missing blocks are drawn at random with
    /// `λ_min ≥ floor` for `A`, `B`.
    Quadratic {
        p: usize,
        q: usize,
        a: Option<Matrix>,
        b: Option<Matrix>,
        c: Option<Matrix>,
        floor: f64,
    },
    /// `A = B = I` with interaction `C`.
    LowerBound {
        p: usize,
        q: usize,
        c: Option<Matrix>,
    },
    Covariance {
        d: usize,
        k: usize,
        hidden: usize,
        target: Option<Matrix>,
    },
}

impl GameSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            GameSpec::Bilinear { .. } => "bilinear",
            GameSpec::Quadratic { .. } => "quadratic",
            GameSpec::LowerBound { .. } => "lower_bound",
            GameSpec::Covariance { .. } => "covariance",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// Derived from the spectral summary by the matching theorem.
    Theorem,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub eta: StepSize,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySpec {
    /// Steps examined by each per-step check.
    pub horizon: u64,
    /// Iterates scanned when looking for the ε-hit before falling back to
    /// evaluating the iterate at the bound directly.
    pub scan_cap: u64,
    pub sga_etas: Vec<f64>,
    pub floor_etas: Vec<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_VERIFY_HORIZON,
            scan_cap: DEFAULT_SCAN_CAP,
            sga_etas: DEFAULT_SGA_ETAS.to_vec(),
            floor_etas: DEFAULT_FLOOR_ETAS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    /// Cell `i` uses seed `seed + i`.
    pub seed: u64,
    pub seeds: usize,
    pub r: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub stride: usize,
    pub out: Option<PathBuf>,
    pub game: GameSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub verify: VerifySpec,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

fn err(line: usize, field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: field `{field}`: {msg}"))
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn bracket_depth(s: &str) -> i64 {
    s.chars().fold(0, |d, c| match c {
        '[' => d + 1,
        ']' => d - 1,
        _ => d,
    })
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    while let Some((n, raw)) = lines.next() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') && !line.contains('=') {
            let name = line[1..line.len() - 1].trim().to_string();
            if !["experiment", "game", "algorithm", "verify"].contains(&name.as_str()) {
                return Err(Error::Parse(format!("line {n}: unknown section [{name}]")));
            }
            out.push(Section {
                name,
                line: n,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {n}: expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        let mut value = value.trim().to_string();
        while bracket_depth(&value) > 0 {
            let (_, more) = lines
                .next()
                .ok_or_else(|| err(n, &key, "unterminated matrix"))?;
            value.push(' ');
            value.push_str(strip_comment(more));
        }
        if bracket_depth(&value) != 0 {
            return Err(err(n, &key, "unbalanced brackets"));
        }
        let section = out
            .last_mut()
            .ok_or_else(|| Error::Parse(format!("line {n}: `{key}` appears before any [section]")))?;
        if section.entries.contains_key(&key) {
            return Err(err(n, &key, "duplicate field"));
        }
        section.entries.insert(key, Entry { line: n, value });
    }
    Ok(out)
}

struct Fields<'a> {
    section: &'a Section,
    used: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(section: &'a Section) -> Self {
        Self {
            section,
            used: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Entry> {
        self.used.push(key);
        self.section.entries.get(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &'a str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|x| err(e.line, key, x)),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &'a str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let line = self.section.line;
        self.parse(key)?.ok_or_else(|| {
            err(line, key, format!("missing in [{}] section", self.section.name))
        })
    }

    fn positive_f64(&mut self, key: &'a str) -> Result<Option<f64>> {
        let line = self.section.entries.get(key).map(|e| e.line).unwrap_or(self.section.line);
        match self.parse::<f64>(key)? {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(err(line, key, format!("must be positive, got {x}"))),
            other => Ok(other),
        }
    }

    fn matrix(&mut self, key: &'a str) -> Result<Option<Matrix>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => parse_matrix(&e.value).map(Some).map_err(|x| err(e.line, key, x)),
        }
    }

    fn list(&mut self, key: &'a str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => {
                let body = e.value.trim().trim_start_matches('[').trim_end_matches(']');
                body.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|m| err(e.line, key, m)))
                    .collect::<Result<Vec<_>>>()
                    .map(Some)
            }
        }
    }

    fn finish(self) -> Result<()> {
        for (key, entry) in &self.section.entries {
            if !self.used.contains(&key.as_str()) {
                return Err(err(
                    entry.line,
                    key,
                    format!("not recognised in [{}] section", self.section.name),
                ));
            }
        }
        Ok(())
    }
}

/// Parses `[[a, b], [c, d]]`.
pub fn parse_matrix(text: &str) -> std::result::Result<Matrix, String> {
    let t = text.trim();
    if !(t.starts_with("[[") && t.ends_with("]]")) {
        return Err("matrix must be written as [[row], [row], ...]".into());
    }
    let inner = &t[1..t.len() - 1];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for chunk in inner.split(']') {
        let chunk = chunk.trim().trim_start_matches(',').trim();
        if chunk.is_empty() {
            continue;
        }
        let body = chunk
            .strip_prefix('[')
            .ok_or_else(|| format!("malformed row `{chunk}`"))?;
        let row = body
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", x.trim())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| e.to_string())
}

fn check_shape(m: &Option<Matrix>, shape: (usize, usize), line: usize, key: &str) -> Result<()> {
    match m {
        Some(m) if m.shape() != shape => Err(err(
            line,
            key,
            format!("expected {}x{}, got {}x{}", shape.0, shape.1, m.rows(), m.cols()),
        )),
        _ => Ok(()),
    }
}

fn parse_game(section: &Section) -> Result<GameSpec> {
    let mut f = Fields::new(section);
    let kind: String = f.required("kind")?;
    let line_of = |k: &str| section.entries.get(k).map(|e| e.line).unwrap_or(section.line);
    let spec = match kind.as_str() {
        "bilinear" | "lower_bound" => {
            let c = f.matrix("c")?;
            let (p, q) = match &c {
                Some(m) => (
                    f.parse("p")?.unwrap_or(m.rows()),
                    f.parse("q")?.unwrap_or(m.cols()),
                ),
                None => (f.required("p")?, f.required("q")?),
            };
            check_shape(&c, (p, q), line_of("c"), "c")?;
            if kind == "bilinear" {
                GameSpec::Bilinear { p, q, c }
            } else {
                GameSpec::LowerBound { p, q, c }
            }
        }
        "quadratic" => {
            let (a, b, c) = (f.matrix("a")?, f.matrix("b")?, f.matrix("c")?);
            let p = match (f.parse("p")?, &a, &c) {
                (Some(p), _, _) => p,
                (None, Some(a), _) => a.rows(),
                (None, None, Some(c)) => c.rows(),
                _ => return Err(err(section.line, "p", "missing in [game] section")),
            };
            let q = match (f.parse("q")?, &b, &c) {
                (Some(q), _, _) => q,
                (None, Some(b), _) => b.rows(),
                (None, None, Some(c)) => c.cols(),
                _ => return Err(err(section.line, "q", "missing in [game] section")),
            };
            check_shape(&a, (p, p), line_of("a"), "a")?;
            check_shape(&b, (q, q), line_of("b"), "b")?;
            check_shape(&c, (p, q), line_of("c"), "c")?;
            let floor = f.positive_f64("floor")?.unwrap_or(0.5);
            GameSpec::Quadratic { p, q, a, b, c, floor }
        }
        "covariance" => {
            let target = f.matrix("target")?;
            let d = match (&target, f.parse("d")?) {
                (_, Some(d)) => d,
                (Some(t), None) => t.rows(),
                (None, None) => return Err(err(section.line, "d", "missing in [game] section")),
            };
            if let Some(t) = &target {
                if t.rows() != d {
                    return Err(err(line_of("target"), "target", format!("expected {d} rows, got {}", t.rows())));
                }
            }
            let k = f.required("k")?;
            let hidden = f.required("hidden")?;
            GameSpec::Covariance { d, k, hidden, target }
        }
        other => {
            return Err(err(
                line_of("kind"),
                "kind",
                format!("unknown game kind `{other}` (expected bilinear, quadratic, lower_bound, covariance)"),
            ))
        }
    };
    let dims: Vec<usize> = match &spec {
        GameSpec::Bilinear { p, q, .. }
        | GameSpec::LowerBound { p, q, .. }
        | GameSpec::Quadratic { p, q, .. } => vec![*p, *q],
        GameSpec::Covariance { d, k, hidden, .. } => vec![*d, *k, *hidden],
    };
    if dims.contains(&0) {
        return Err(err(section.line, "kind", "dimensions must be at least 1"));
    }
    f.finish()?;
    Ok(spec)
}

fn parse_algorithm(section: &Section) -> Result<AlgorithmSpec> {
    let mut f = Fields::new(section);
    let name: String = f.required("name")?;
    let line_of = |k: &str| section.entries.get(k).map(|e| e.line).unwrap_or(section.line);
    let algorithm: Algorithm = name.parse().map_err(|e| err(line_of("name"), "name", e))?;
    let eta = match f.raw("eta") {
        None => StepSize::Theorem,
        Some(e) if e.value == "theorem" => StepSize::Theorem,
        Some(e) => {
            let x: f64 = e.value.parse().map_err(|m| err(e.line, "eta", format!("`{}`: {m}", e.value)))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(err(e.line, "eta", format!("must be positive or `theorem`, got {x}")));
            }
            StepSize::Fixed(x)
        }
    };
    let gamma = f.parse::<f64>("gamma")?;
    let gamma = match (algorithm.uses_gamma(), gamma) {
        (true, None) => Some(1.0),
        (true, Some(g)) if g > 0.0 && g.is_finite() => Some(g),
        (true, Some(g)) => return Err(err(line_of("gamma"), "gamma", format!("must be positive, got {g}"))),
        (false, Some(_)) => {
            return Err(err(line_of("gamma"), "gamma", format!("{algorithm} takes no γ")))
        }
        (false, None) => None,
    };
    f.finish()?;
    Ok(AlgorithmSpec { algorithm, eta, gamma })
}

fn parse_verify(section: &Section) -> Result<VerifySpec> {
    let mut f = Fields::new(section);
    let d = VerifySpec::default();
    let spec = VerifySpec {
        horizon: f.parse("horizon")?.unwrap_or(d.horizon),
        scan_cap: f.parse("scan_cap")?.unwrap_or(d.scan_cap),
        sga_etas: f.list("sga_etas")?.unwrap_or(d.sga_etas),
        floor_etas: f.list("floor_etas")?.unwrap_or(d.floor_etas),
    };
    f.finish()?;
    Ok(spec)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let sections = sections(text)?;
        let find = |name: &str| -> Result<&Section> {
            let mut it = sections.iter().filter(|s| s.name == name);
            let first = it
                .next()
                .ok_or_else(|| Error::Parse(format!("missing [{name}] section")))?;
            if let Some(dup) = it.next() {
                return Err(Error::Parse(format!("line {}: duplicate [{name}] section", dup.line)));
            }
            Ok(first)
        };
        let exp = find("experiment")?;
        let mut f = Fields::new(exp);
        let id: String = f.required("id")?;
        if id.trim().is_empty() {
            return Err(err(exp.line, "id", "must be nonempty"));
        }
        let seed = f.parse("seed")?.unwrap_or(1);
        let seeds = f.parse("seeds")?.unwrap_or(1);
        let r = f.positive_f64("r")?.unwrap_or(0.5);
        let epsilon = f.positive_f64("epsilon")?.unwrap_or(DEFAULT_EPSILON);
        let max_iters = f.parse("max_iters")?.unwrap_or(DEFAULT_MAX_ITERS);
        let stride = f.parse("stride")?.unwrap_or(1);
        let out = f.parse::<String>("out")?.map(PathBuf::from);
        let line_of = |k: &str| exp.entries.get(k).map(|e| e.line).unwrap_or(exp.line);
        f.finish()?;
        if epsilon >= r {
            return Err(err(line_of("epsilon"), "epsilon", format!("need r > ε, got r = {r}, ε = {epsilon}")));
        }
        if seeds == 0 {
            return Err(err(line_of("seeds"), "seeds", "must be at least 1"));
        }
        if stride == 0 {
            return Err(err(line_of("stride"), "stride", "must be at least 1"));
        }
        let game = parse_game(find("game")?)?;
        let algorithms = sections
            .iter()
            .filter(|s| s.name == "algorithm")
            .map(parse_algorithm)
            .collect::<Result<Vec<_>>>()?;
        if algorithms.is_empty() {
            return Err(Error::Parse("at least one [algorithm] section is required".into()));
        }
        let verify = match sections.iter().filter(|s| s.name == "verify").count() {
            0 => VerifySpec::default(),
            _ => parse_verify(find("verify")?)?,
        };
        Ok(Self {
            id,
            seed,
            seeds,
            r,
            epsilon,
            max_iters,
            stride,
            out,
            game,
            algorithms,
            verify,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
