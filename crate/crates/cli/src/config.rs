//! Run configuration: command-line flags, or the same fields as a JSON file.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// A malformed configuration; reported with exit code 64.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

/// `x0,x1,y0,y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rect(pub [f64; 4]);

impl FromStr for Rect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s, 4)?;
        Ok(Rect([v[0], v[1], v[2], v[3]]))
    }
}

/// `x,y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pair(pub [f64; 2]);

impl FromStr for Pair {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s, 2)?;
        Ok(Pair([v[0], v[1]]))
    }
}

/// Integer list: `5..20` (inclusive), `5..=20`, or `5,7,9`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IntList(pub Vec<usize>);

impl FromStr for IntList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let int = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
        let v: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (int(a)?, int(b.trim_start_matches('='))?);
            if b < a {
                return Err(format!("empty range {s}"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(int).collect::<Result<_, _>>()?
        };
        if v.is_empty() {
            return Err("empty list".into());
        }
        Ok(IntList(v))
    }
}

impl TryFrom<String> for IntList {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<IntList> for String {
    fn from(l: IntList) -> String {
        l.0.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Names separated by commas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NameList(pub Vec<String>);

impl FromStr for NameList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<String> = s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
        if v.is_empty() {
            return Err("empty list".into());
        }
        Ok(NameList(v))
    }
}

impl TryFrom<String> for NameList {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<NameList> for String {
    fn from(l: NameList) -> String {
        l.0.join(",")
    }
}

/// Nested boxes `V ⊂ V1 ⊂ V2` as twelve numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nest {
    pub v: [f64; 4],
    pub v1: [f64; 4],
    pub v2: [f64; 4],
}

impl FromStr for Nest {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s, 12)?;
        let r = |i: usize| [v[i], v[i + 1], v[i + 2], v[i + 3]];
        Ok(Nest { v: r(0), v1: r(4), v2: r(8) })
    }
}

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "hrenorm", version, about = "Renormalization and normal forms for dissipative planar maps")]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory for JSON and CSV artifacts.
    #[arg(long, global = true, default_value = "hrenorm-out")]
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Seed for all randomized choices.
    #[arg(long, global = true, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Worker threads (default: available parallelism; HR_THREADS overrides).
    #[arg(long, global = true)]
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("hrenorm-out")
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Superstable parameters, window boundaries and the class check.
    Windows(WindowsArgs),
    /// Gap chain of the hyperbolic set of the quadratic family.
    Gapset(GapsetArgs),
    /// Hyperbolicity certificate: M1, M, D_r and R.
    Certify(CertifyArgs),
    /// Top Lyapunov exponent and smoothness budget.
    Lyapunov(LyapunovArgs),
    /// Chart system along a periodic orbit, normal-form stages, verification.
    Charts(ChartsArgs),
    /// Invariant line field of the extended cocycle.
    Linefield(LinefieldArgs),
    /// Renormalization of a homoclinic unfolding, residuals, δ profile.
    Renorm(RenormArgs),
    /// Sink windows of the unfolding and their scaling.
    Sinks(SinksArgs),
    /// Strip of renormalization windows for small b.
    Strip(StripArgs),
    /// Run the configuration stored in a JSON file.
    #[serde(skip)]
    Run(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Windows(_) => "windows",
            Command::Gapset(_) => "gapset",
            Command::Certify(_) => "certify",
            Command::Lyapunov(_) => "lyapunov",
            Command::Charts(_) => "charts",
            Command::Linefield(_) => "linefield",
            Command::Renorm(_) => "renorm",
            Command::Sinks(_) => "sinks",
            Command::Strip(_) => "strip",
            Command::Run(_) => "run",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RunArgs {
    pub config: PathBuf,
}

/// Family selection shared by several subcommands.
pub struct FamilySpec<'a> {
    pub family: &'a str,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

macro_rules! defaults_from_clap {
    ($($t:ident),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                #[derive(Parser)]
                struct Wrap {
                    #[command(flatten)]
                    inner: $t,
                }
                Wrap::parse_from(["hrenorm"]).inner
            }
        }
    )*};
}

defaults_from_clap!(
    WindowsArgs,
    GapsetArgs,
    CertifyArgs,
    LyapunovArgs,
    ChartsArgs,
    LinefieldArgs,
    RenormArgs,
    SinksArgs,
    StripArgs
);

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowsArgs {
    #[arg(long, default_value = "2,3")]
    pub periods: IntList,
    #[arg(long = "C", default_value_t = 0.2)]
    #[serde(rename = "C")]
    pub c: f64,
    #[arg(long = "Lambda", default_value_t = 1.1)]
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    /// Skip the E_{CΛ} class check.
    #[arg(long)]
    pub no_class: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapsetArgs {
    #[arg(long, allow_negative_numbers = true, default_value_t = -1.7548776662466927)]
    pub a: f64,
    #[arg(long = "C", default_value_t = 0.2)]
    #[serde(rename = "C")]
    pub c: f64,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 3)]
    pub period: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyArgs {
    /// Builtin (`henon`, `henon-classic`, `quadratic`, `toy-unfolding`) or a JSON family file.
    #[arg(long, default_value = "henon")]
    pub family: String,
    /// Map parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Jacobian parameter of the Hénon builtins.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long = "C", default_value_t = 0.3)]
    #[serde(rename = "C")]
    pub c: f64,
    #[arg(long = "Lambda", default_value_t = 1.1)]
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    #[arg(long, default_value_t = 12)]
    pub k_max: usize,
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    /// Half-width of the horizontal cone, radians.
    #[arg(long, default_value_t = 0.4)]
    pub cone: f64,
    /// Region `V` as `x0,x1,y0,y1` (default: the family box).
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub region: Option<Rect>,
    /// Preimage depth of the one-dimensional expansion check.
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value = "M1,M,D_r,R")]
    pub tags: NameList,
    /// Resonance order of the R check.
    #[arg(long, default_value_t = 6)]
    pub resonance_order: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub resonance_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovArgs {
    #[arg(long, default_value = "henon-classic")]
    pub family: String,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub transient: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub iterations: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "0,0")]
    pub z0: Pair,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartsArgs {
    /// Builtin (`henon`, `henon-classic`, `quadratic`, `toy-unfolding`) or a JSON family file.
    #[arg(long, default_value = "henon")]
    pub family: String,
    /// Map parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Jacobian parameter of the Hénon builtins.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Serialized chart system to start from instead of a periodic orbit.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    /// Newton seed for the periodic orbit (default: search the family box).
    #[arg(long, allow_hyphen_values = true)]
    pub seed_point: Option<Pair>,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Stages among `unstable`, `fiber-normalize`, `fiber-linearize`.
    #[arg(long)]
    pub stages: Option<NameList>,
    /// Additional straightening runs from random initial guesses.
    #[arg(long, default_value_t = 0)]
    pub random_inits: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 33)]
    pub verify_grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinefieldArgs {
    /// Builtin (`henon`, `henon-classic`, `quadratic`, `toy-unfolding`) or a JSON family file.
    #[arg(long, default_value = "henon")]
    pub family: String,
    /// Map parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Jacobian parameter of the Hénon builtins.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    pub cone: f64,
    #[arg(long, allow_hyphen_values = true, default_value = "0.8,1.4,-0.4,0.2")]
    pub w: Rect,
    /// Nested boxes `V, V1, V2` as twelve numbers; repeat for several components.
    #[arg(long = "boxes", allow_hyphen_values = true, default_value = "1.0,1.2,-0.2,0.0,0.95,1.25,-0.25,0.05,0.9,1.3,-0.3,0.1")]
    pub boxes: Vec<Nest>,
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormArgs {
    /// `toy-unfolding` (with error term), `toy-exact`, or a JSON transition file.
    #[arg(long, default_value = "toy-unfolding")]
    pub family: String,
    #[arg(long, default_value = "5..20")]
    pub n: IntList,
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "-2.5,2.5,-2.5,2.5")]
    pub k_box: Rect,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinksArgs {
    #[arg(long, default_value = "toy-unfolding")]
    pub family: String,
    #[arg(long, default_value = "6..14")]
    pub n: IntList,
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    #[arg(long, default_value_t = 20_000)]
    pub n_iter: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "-2,0.5")]
    pub a_range: Pair,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StripArgs {
    #[arg(long, default_value_t = 2)]
    pub period: usize,
    #[arg(long, default_value_t = 0.05)]
    pub b_max: f64,
    #[arg(long, default_value_t = 21)]
    pub b_steps: usize,
    #[arg(long, default_value = "0.01,0.02,0.05,0.1")]
    pub heights: String,
}

macro_rules! family_spec {
    ($($t:ident),*) => {$(
        impl $t {
            pub fn spec(&self) -> FamilySpec<'_> {
                FamilySpec { family: &self.family, a: self.a, b: self.b }
            }
        }
    )*};
}

family_spec!(CertifyArgs, LyapunovArgs, ChartsArgs, LinefieldArgs);

fn positive(name: &str, v: f64) -> Result<(), Usage> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Usage(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), Usage> {
    if v >= min {
        Ok(())
    } else {
        Err(Usage(format!("{name} must be at least {min}, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Usage> {
        serde_json::from_str(text).map_err(|e| Usage(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), Usage> {
        if let Some(t) = self.threads {
            at_least("threads", t, 1)?;
        }
        match &self.command {
            Command::Windows(a) => {
                positive("C", a.c)?;
                positive("Lambda - 1", a.big_lambda - 1.0)?;
                for &p in &a.periods.0 {
                    at_least("period", p, 2)?;
                }
            }
            Command::Gapset(a) => {
                positive("C", a.c)?;
                at_least("period", a.period, 1)?;
            }
            Command::Certify(a) => {
                positive("C", a.c)?;
                positive("Lambda - 1", a.big_lambda - 1.0)?;
                positive("cone", a.cone)?;
                positive("resonance-tol", a.resonance_tol)?;
                at_least("r", a.r, 2)?;
                at_least("grid", a.grid, 2)?;
                for t in &a.tags.0 {
                    if !["M1", "M", "D_r", "R"].contains(&t.as_str()) {
                        return Err(Usage(format!("unknown tag '{t}'")));
                    }
                }
            }
            Command::Lyapunov(a) => at_least("iterations", a.iterations, 10)?,
            Command::Charts(a) => {
                positive("eps", a.eps)?;
                positive("tol", a.tol)?;
                positive("threshold", a.threshold)?;
                at_least("period", a.period, 1)?;
                if let Some(s) = &a.stages {
                    for t in &s.0 {
                        if !["unstable", "fiber-normalize", "fiber-linearize"].contains(&t.as_str()) {
                            return Err(Usage(format!("unknown stage '{t}'")));
                        }
                    }
                }
            }
            Command::Linefield(a) => {
                positive("cone", a.cone)?;
                positive("tol", a.tol)?;
                at_least("grid", a.grid, 2)?;
            }
            Command::Renorm(a) => {
                at_least("grid", a.grid, 2)?;
                if a.n.0.contains(&0) {
                    return Err(Usage("n must be at least 1".into()));
                }
            }
            Command::Sinks(a) => at_least("samples", a.samples, 2)?,
            Command::Strip(a) => {
                positive("b-max", a.b_max)?;
                at_least("b-steps", a.b_steps, 2)?;
                for h in self.strip_heights()? {
                    positive("height", h)?;
                }
            }
            Command::Run(_) => {}
        }
        Ok(())
    }

    pub fn strip_heights(&self) -> Result<Vec<f64>, Usage> {
        match &self.command {
            Command::Strip(a) => a
                .heights
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Usage(format!("heights '{t}': {e}"))))
                .collect(),
            _ => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_list_forms() {
        assert_eq!("5..8".parse::<IntList>().unwrap().0, vec![5, 6, 7, 8]);
        assert_eq!("5..=6".parse::<IntList>().unwrap().0, vec![5, 6]);
        assert_eq!("3,1".parse::<IntList>().unwrap().0, vec![3, 1]);
        assert!("8..5".parse::<IntList>().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let ok = r#"{"command": {"name": "gapset", "a": -1.75}, "seed": 3}"#;
        let cfg = RunConfig::from_json(ok).unwrap();
        assert!(matches!(cfg.command, Command::Gapset(ref g) if g.a == -1.75 && g.depth == 8));
        assert!(RunConfig::from_json(r#"{"command": {"name": "gapset", "aa": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"command": {"name": "gapset"}, "colour": 1}"#).is_err());
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let cfg = RunConfig::from_json(r#"{"command": {"name": "charts", "tol": 0.0}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
