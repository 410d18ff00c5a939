use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spiked_oamp::engine::MAX_DEGREE;
use spiked_oamp::priors::Prior;
use spiked_oamp::spectral::NoiseSpectrum;

use crate::error::{CliError, Issue};

/// Environment variable that replaces the configured seeds. Accepts one
/// seed or a comma-separated list.
pub const SEED_ENV: &str = "SPIKED_OAMP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Se,
    Simulate,
    Landscape,
    ReplicaCheck,
    Pca,
    SpectrumDump,
    Lifted,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Se => "se",
            Self::Simulate => "simulate",
            Self::Landscape => "landscape",
            Self::ReplicaCheck => "replica-check",
            Self::Pca => "pca",
            Self::SpectrumDump => "spectrum-dump",
            Self::Lifted => "lifted",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scalar, a list, or `{ from, to, points }` (inclusive, uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Single(f64),
    List(Vec<f64>),
    Grid { from: f64, to: f64, points: usize },
}

impl ThetaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Single(t) => vec![*t],
            Self::List(v) => v.clone(),
            Self::Grid { from, to, points } => match points {
                0 => Vec::new(),
                1 => vec![*from],
                &p => (0..p).map(|i| from + (to - from) * i as f64 / (p - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    One(String),
    Many(Vec<String>),
}

impl PriorSpec {
    pub fn names(&self) -> Vec<&str> {
        match self {
            Self::One(s) => vec![s.as_str()],
            Self::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Step size at which the fixed-point iteration stops.
    pub se: f64,
    /// Relative residual for conjugate gradients.
    pub cg: f64,
    /// Bound on the replica residuals.
    pub replica: f64,
    /// Bound on `|empirical − SE|` in `compare`.
    pub compare: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            se: 1e-12,
            cg: 1e-10,
            replica: 1e-8,
            compare: 0.03,
            max_iter: 100_000,
        }
    }
}

fn default_spectrum() -> String {
    "quartic:0".into()
}
fn default_prior() -> PriorSpec {
    PriorSpec::One("two_point:1/2".into())
}
fn default_n() -> usize {
    4096
}
fn default_t() -> usize {
    15
}
fn default_degree() -> usize {
    10
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_noise() -> String {
    "structured".into()
}
fn default_grid() -> usize {
    2000
}
fn default_pca_iters() -> usize {
    300
}

/// One experiment. Every field is explicit after loading, so the echo in
/// output headers reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "default_spectrum")]
    pub spectrum: String,
    #[serde(default = "default_prior")]
    pub prior: PriorSpec,
    pub theta: ThetaSpec,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    /// Largest lifted degree.
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// `structured` or `dense`.
    #[serde(default = "default_noise")]
    pub noise: String,
    /// Points in `landscape` and `spectrum-dump` grids.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_pca_iters")]
    pub pca_iters: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn issue(field: impl Into<String>, reason: impl Into<String>) -> Issue {
    Issue {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Best-effort key name at a parse error position.
fn key_at(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else {
        return "<file>".into();
    };
    let start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or_default();
    match line.split_once('=') {
        Some((k, _)) => k.trim().to_string(),
        None => line.trim().trim_matches(['[', ']']).to_string(),
    }
}

impl ExperimentConfig {
    /// Parses TOML text. A missing `command` is taken from `command`.
    pub fn from_toml(text: &str, command: Option<Command>) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(vec![issue(key_at(text, e.span()), e.message())]))?;
        if let Some(cmd) = command {
            match table.get("command") {
                None => {
                    table.insert("command".into(), toml::Value::String(cmd.as_str().into()));
                }
                Some(v) if v.as_str() == Some(cmd.as_str()) => {}
                Some(v) => {
                    return Err(CliError::Config(vec![issue(
                        "command",
                        format!("config is for {v}, but `{cmd}` was requested"),
                    )]))
                }
            }
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("<file>")
                .to_string();
            CliError::Config(vec![issue(field, msg)])
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path, command: Option<Command>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, command)
    }

    /// Applies [`SEED_ENV`] when it is set.
    pub fn apply_seed_env(&mut self) -> Result<(), CliError> {
        let Ok(raw) = std::env::var(SEED_ENV) else {
            return Ok(());
        };
        let seeds: Result<Vec<u64>, _> = raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
        match seeds {
            Ok(s) if !s.is_empty() && s.iter().all(|&x| x <= i64::MAX as u64) => {
                self.seeds = s;
                Ok(())
            }
            _ => Err(CliError::Config(vec![issue(
                SEED_ENV,
                format!("expected seeds in [0, {}], comma-separated, got {raw:?}", i64::MAX),
            )])),
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.theta.values()
    }

    pub fn spectrum(&self) -> Result<NoiseSpectrum, CliError> {
        NoiseSpectrum::parse(&self.spectrum).map_err(|e| CliError::Config(vec![issue("spectrum", e.to_string())]))
    }

    pub fn priors(&self) -> Result<Vec<Prior>, CliError> {
        self.prior
            .names()
            .into_iter()
            .map(|p| Prior::parse(p).map_err(|e| CliError::Config(vec![issue("prior", e.to_string())])))
            .collect()
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut issues = Vec::new();
        let thetas = self.thetas();
        if thetas.is_empty() {
            issues.push(issue("theta", "no values"));
        }
        for t in &thetas {
            if !(t.is_finite() && *t > 0.0) {
                issues.push(issue("theta", format!("{t} is not a positive finite number")));
            }
        }
        if self.n < 16 {
            issues.push(issue("n", format!("{} < 16", self.n)));
        }
        if self.t < 1 {
            issues.push(issue("t", "must be at least 1"));
        }
        // TOML integers are signed 64-bit, and seeds must survive the echo.
        if let Some(s) = self.seeds.iter().find(|&&s| s > i64::MAX as u64) {
            issues.push(issue("seeds", format!("{s} exceeds {}", i64::MAX)));
        }
        let needs_seeds = matches!(self.command, Command::Simulate | Command::Pca);
        if needs_seeds && self.seeds.is_empty() {
            issues.push(issue("seeds", format!("`{}` needs at least one seed", self.command)));
        }
        if self.command == Command::Lifted && !(1..=MAX_DEGREE).contains(&self.degree) {
            issues.push(issue("degree", format!("{} is outside [1, {MAX_DEGREE}]", self.degree)));
        }
        if let Err(e) = NoiseSpectrum::parse(&self.spectrum) {
            issues.push(issue("spectrum", e.to_string()));
        }
        if self.prior.names().is_empty() {
            issues.push(issue("prior", "no priors"));
        }
        for p in self.prior.names() {
            if let Err(e) = Prior::parse(p) {
                issues.push(issue("prior", e.to_string()));
            }
        }
        if !matches!(self.noise.as_str(), "structured" | "dense") {
            issues.push(issue("noise", format!("{:?} is not `structured` or `dense`", self.noise)));
        }
        if self.grid < 2 {
            issues.push(issue("grid", "needs at least 2 points"));
        }
        if self.pca_iters == 0 {
            issues.push(issue("pca_iters", "must be at least 1"));
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("tolerances.se", tol.se),
            ("tolerances.cg", tol.cg),
            ("tolerances.replica", tol.replica),
            ("tolerances.compare", tol.compare),
        ] {
            if !(v.is_finite() && v > 0.0) {
                issues.push(issue(name, format!("{v} is not positive")));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(issues))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Recovers the config from the `# ` header lines of an output file.
    pub fn from_echo(text: &str) -> Result<Self, CliError> {
        let body: String = text
            .lines()
            .map_while(|l| l.strip_prefix('#'))
            .map(|l| l.strip_prefix(' ').unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n");
        Self::from_toml(&body, None)
    }
}
