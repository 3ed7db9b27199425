//! Plain `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dirk::Scheme;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Advec1d,
    Burgers1d,
    ShuOsher,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "advec1d" => Ok(Self::Advec1d),
            "burgers1d" => Ok(Self::Burgers1d),
            "shuosher" => Ok(Self::ShuOsher),
            _ => Err(format!(
                "unknown problem `{s}` (expected advec1d, burgers1d or shuosher)"
            )),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Advec1d => "advec1d",
            Self::Burgers1d => "burgers1d",
            Self::ShuOsher => "shuosher",
        })
    }
}

/// Per-problem settings used when a key is absent.
struct Defaults {
    n_elements: usize,
    eps1: f64,
}

fn defaults(problem: ProblemKind) -> Defaults {
    match problem {
        ProblemKind::Advec1d | ProblemKind::Burgers1d => Defaults {
            n_elements: 20,
            eps1: 1e-6,
        },
        ProblemKind::ShuOsher => Defaults {
            n_elements: 288,
            eps1: 1e-4,
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub p: usize,
    pub q: usize,
    pub n_elements: usize,
    pub scheme: Scheme,
    pub n_steps: usize,
    pub t_final: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    pub lm_gamma: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

const RUN_KEYS: &[&str] = &[
    "problem",
    "p",
    "q",
    "n_elements",
    "scheme",
    "n_steps",
    "t_final",
    "eps1",
    "eps2",
    "max_iters",
    "lm_gamma",
    "output_dir",
    "seed",
];
const RUN_REQUIRED: &[&str] = &["problem", "n_steps", "t_final"];

/// A parsed `key = value` entry with its source line (0 for overrides).
#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn config_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_entries(text: &str, allowed: &[&str]) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            config_error(line, format!("expected `key = value`, found `{content}`"))
        })?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(config_error(line, format!("unknown key `{key}`")));
        }
        if out.iter().any(|e| e.key == key) {
            return Err(config_error(line, format!("key `{key}` given twice")));
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn apply_overrides(entries: &mut Vec<Entry>, overrides: &[String], allowed: &[&str]) -> Result<()> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| config_error(0, format!("override `{o}` is not `key=value`")))?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(config_error(0, format!("unknown key `{key}` in override")));
        }
        let value = value.trim().to_string();
        match entries.iter_mut().find(|e| e.key == key) {
            Some(e) => {
                e.value = value;
                e.line = 0;
            }
            None => entries.push(Entry {
                line: 0,
                key: key.to_string(),
                value,
            }),
        }
    }
    Ok(())
}

struct Lookup<'a> {
    entries: &'a [Entry],
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn required(&self, key: &str) -> Result<&Entry> {
        self.raw(key)
            .ok_or_else(|| config_error(0, format!("missing required key `{key}`")))
    }

    fn parse<T: FromStr>(&self, e: &Entry) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        e.value.parse::<T>().map_err(|err| {
            config_error(
                e.line,
                format!("invalid value `{}` for `{}`: {err}", e.value, e.key),
            )
        })
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some(e) => self.parse(e),
            None => Ok(default),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    v.trim().parse::<T>().map_err(|err| {
                        config_error(e.line, format!("invalid entry `{v}` in `{key}`: {err}"))
                    })
                })
                .collect(),
            None => Ok(default),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map_or(0, |e| e.line)
    }
}

fn positive(value: f64, key: &str, line: usize) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(config_error(line, format!("`{key}` must be positive")))
    }
}

fn at_least(value: usize, min: usize, key: &str, line: usize) -> Result<()> {
    if value >= min {
        Ok(())
    } else {
        Err(config_error(
            line,
            format!("`{key}` must be at least {min}"),
        ))
    }
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = parse_entries(text, RUN_KEYS)?;
        apply_overrides(&mut entries, overrides, RUN_KEYS)?;
        let l = Lookup { entries: &entries };
        for key in RUN_REQUIRED {
            l.required(key)?;
        }
        let problem: ProblemKind = l.parse(l.required("problem")?)?;
        let d = defaults(problem);
        let cfg = Self {
            problem,
            p: l.get("p", 4)?,
            q: l.get("q", 1)?,
            n_elements: l.get("n_elements", d.n_elements)?,
            scheme: l.get("scheme", Scheme::Dirk3)?,
            n_steps: l.parse(l.required("n_steps")?)?,
            t_final: l.parse(l.required("t_final")?)?,
            eps1: l.get("eps1", d.eps1)?,
            eps2: l.get("eps2", 1e-8)?,
            max_iters: l.get("max_iters", 50)?,
            lm_gamma: l.get("lm_gamma", 1e-2)?,
            output_dir: l.get("output_dir", PathBuf::from("output"))?,
            seed: l.get("seed", 0)?,
        };
        at_least(cfg.p, 1, "p", l.line("p"))?;
        at_least(cfg.q, 1, "q", l.line("q"))?;
        at_least(cfg.n_elements, 2, "n_elements", l.line("n_elements"))?;
        at_least(cfg.n_steps, 1, "n_steps", l.line("n_steps"))?;
        at_least(cfg.max_iters, 1, "max_iters", l.line("max_iters"))?;
        positive(cfg.t_final, "t_final", l.line("t_final"))?;
        positive(cfg.eps1, "eps1", l.line("eps1"))?;
        positive(cfg.eps2, "eps2", l.line("eps2"))?;
        positive(cfg.lm_gamma, "lm_gamma", l.line("lm_gamma"))?;
        if !cfg.n_elements.is_multiple_of(2) {
            return Err(config_error(
                l.line("n_elements"),
                "`n_elements` must be even so the shock sits on an interface",
            ));
        }
        Ok(cfg)
    }

    /// Effective configuration in the same text format, every key explicit.
    pub fn to_text(&self) -> String {
        format!(
            "problem = {}\np = {}\nq = {}\nn_elements = {}\nscheme = {}\nn_steps = {}\nt_final = {:e}\neps1 = {:e}\neps2 = {:e}\nmax_iters = {}\nlm_gamma = {:e}\noutput_dir = {}\nseed = {}\n",
            self.problem,
            self.p,
            self.q,
            self.n_elements,
            self.scheme,
            self.n_steps,
            self.t_final,
            self.eps1,
            self.eps2,
            self.max_iters,
            self.lm_gamma,
            self.output_dir.display(),
            self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudyConfig {
    pub problem: ProblemKind,
    pub schemes: Vec<Scheme>,
    pub step_counts: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub n_elements: usize,
    pub t_final: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub output_dir: PathBuf,
}

const STUDY_KEYS: &[&str] = &[
    "problem",
    "schemes",
    "step_counts",
    "p",
    "q",
    "n_elements",
    "t_final",
    "eps1",
    "eps2",
    "output_dir",
];

impl ConvergenceStudyConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = parse_entries(text, STUDY_KEYS)?;
        apply_overrides(&mut entries, overrides, STUDY_KEYS)?;
        let l = Lookup { entries: &entries };
        let problem: ProblemKind = l.get("problem", ProblemKind::Advec1d)?;
        if problem != ProblemKind::Advec1d {
            return Err(config_error(
                l.line("problem"),
                "convergence studies support advec1d only",
            ));
        }
        let cfg = Self {
            problem,
            schemes: l.list("schemes", vec![Scheme::Dirk1, Scheme::Dirk2, Scheme::Dirk3])?,
            step_counts: l.list("step_counts", vec![8, 16, 32, 64])?,
            p: l.get("p", 4)?,
            q: l.get("q", 1)?,
            n_elements: l.get("n_elements", 20)?,
            t_final: l.get("t_final", 0.25)?,
            eps1: l.get("eps1", 1e-6)?,
            eps2: l.get("eps2", 1e-8)?,
            output_dir: l.get("output_dir", PathBuf::from("output"))?,
        };
        let line = l.line("step_counts");
        if cfg.step_counts.len() < 2 {
            return Err(config_error(
                line,
                "`step_counts` needs at least two entries",
            ));
        }
        if cfg.step_counts.windows(2).any(|w| w[1] <= w[0]) || cfg.step_counts[0] == 0 {
            return Err(config_error(
                line,
                "`step_counts` must be positive and strictly increasing",
            ));
        }
        if cfg.schemes.is_empty() {
            return Err(config_error(l.line("schemes"), "`schemes` is empty"));
        }
        positive(cfg.t_final, "t_final", l.line("t_final"))?;
        positive(cfg.eps1, "eps1", l.line("eps1"))?;
        positive(cfg.eps2, "eps2", l.line("eps2"))?;
        Ok(cfg)
    }

    /// Single-run configuration for one scheme and step count.
    pub fn run_config(&self, scheme: Scheme, n_steps: usize) -> RunConfig {
        RunConfig {
            problem: self.problem,
            p: self.p,
            q: self.q,
            n_elements: self.n_elements,
            scheme,
            n_steps,
            t_final: self.t_final,
            eps1: self.eps1,
            eps2: self.eps2,
            max_iters: 50,
            lm_gamma: 1e-2,
            output_dir: self.output_dir.clone(),
            seed: 0,
        }
    }
}
