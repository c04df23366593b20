//! Command-line front end: configuration, dispatch and report files.
//!
//! A run is fully described by a [`RunConfig`]. Configuration files are
//! line-oriented:
//!
//! ```text
//! # comment
//! [run]
//! command = check
//! seed = 1
//! [problem]
//! problem = parabolic
//! a1 = exp(m=1)
//! ```
//!
//! Section headers are `[run]`, `[problem]`, `[grid]`, `[forcing]`,
//! `[rbound]` and `[demo]`; every key belongs to exactly one section and
//! applies to a fixed set of subcommands. Flags `--key-name` override file
//! values. Every report starts with the resolved configuration in this
//! format, followed by results on `#` lines, so a report is itself a valid
//! configuration file.
//!
//! Exit codes: 0 success, 1 error, 2 violated hypothesis.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Arg, ArgAction, ArgMatches};

use crate::conditions::{
    check_condition_3_1, check_condition_4_1, check_gap, coarse_xi_sample, default_xi_sample,
    mikhlin_functional_operator, ConditionItem, ConditionReport, EllipticCoefficients, MikhlinMode,
    ParabolicCoefficients,
};
use crate::error::Error;
use crate::grammar::{parse_complex, split_top_level};
use crate::kernels::Kernel;
use crate::linalg::{op_norm, CMatrix};
use crate::multiplier::{
    apply_multiplier, cauchy_symbol, doe_symbol, elliptic_symbol, estimate_lq_to_lp_norm, lp_norm, parabolic_symbol,
    wave_packet, CauchyTerm, DoeTerm, ENorm, Grid, GridFunction, MultiplierSymbol, ParabolicTerm,
};
use crate::rbound::{estimate_r_bound, OperatorFamily};
use crate::rng::stream;
use crate::sectorial::{log_spaced, SectorialOperator, DEFAULT_PHI};
use crate::solver::{
    causal_pulse, default_half_length, demo_diffusion_system, demo_fading_memory, negative_test_m1, solve_cauchy,
    solve_elliptic, solve_elliptic_doe, solve_parabolic, verify_sobolev, CauchyOptions, DiffusionForcing,
    DiffusionParams, FadingMemoryParams, FadingMemoryReport, OperatorPolynomial, Solution,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FMLAB_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "fmlab-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    SolveElliptic,
    SolveParabolic,
    SolveCauchy,
    SolveEllipticDoe,
    Check,
    Mikhlin,
    Rbound,
    EstimateNorm,
    DemoFadingMemory,
    DemoDiffusion,
    NegativeM1,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::SolveElliptic,
        Command::SolveParabolic,
        Command::SolveCauchy,
        Command::SolveEllipticDoe,
        Command::Check,
        Command::Mikhlin,
        Command::Rbound,
        Command::EstimateNorm,
        Command::DemoFadingMemory,
        Command::DemoDiffusion,
        Command::NegativeM1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SolveElliptic => "solve-elliptic",
            Command::SolveParabolic => "solve-parabolic",
            Command::SolveCauchy => "solve-cauchy",
            Command::SolveEllipticDoe => "solve-elliptic-doe",
            Command::Check => "check",
            Command::Mikhlin => "mikhlin",
            Command::Rbound => "rbound",
            Command::EstimateNorm => "estimate-norm",
            Command::DemoFadingMemory => "demo-fading-memory",
            Command::DemoDiffusion => "demo-diffusion",
            Command::NegativeM1 => "negative-m1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    fn about(self) -> &'static str {
        match self {
            Command::SolveElliptic => "Solve the elliptic convolution equation on R^d (d = 1, 2)",
            Command::SolveParabolic => "Solve the parabolic convolution equation and report the coercive ratio",
            Command::SolveCauchy => "Solve u' + Au = f, u(0) = 0, with a causal forcing",
            Command::SolveEllipticDoe => "Solve -u'' + Au = f on R",
            Command::Check => "Check coefficient conditions or the gap condition",
            Command::Mikhlin => "Evaluate the weighted Mikhlin functional of a symbol",
            Command::Rbound => "Estimate the R-bound of an operator family",
            Command::EstimateNorm => "Estimate the L_q -> L_p norm of a multiplier",
            Command::DemoFadingMemory => "Coercive-estimate study for the fading-memory heat equation",
            Command::DemoDiffusion => "Decoupled diffusion system with Dirichlet Laplacian components",
            Command::NegativeM1 => "Growth of the weighted Cauchy symbol itR(it, A)",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Integer `>= min`.
    Int {
        min: u64,
    },
    /// Power of two `>= 8`.
    Points,
    /// Finite float in `[lo, hi]`, `lo` excluded when `open`.
    Float {
        lo: f64,
        hi: f64,
        open: bool,
    },
    Bool,
    Complex,
    Kernel,
    /// `;`-separated kernels, row-major `d×d`.
    KernelList,
    /// `identity` or `;`-separated rows of complex entries.
    Matrix,
    Operator,
    Family,
    Choice(&'static [&'static str]),
    FloatList,
    Path,
}

struct KeySpec {
    section: &'static str,
    name: &'static str,
    kind: Kind,
    commands: &'static [Command],
    help: &'static str,
}

use Command::*;

const ALL_COMMANDS: &[Command] = &Command::ALL;
const COEFFICIENT_USERS: &[Command] = &[SolveElliptic, SolveParabolic, Check, Mikhlin, EstimateNorm];
const ELLIPTIC_USERS: &[Command] = &[SolveElliptic, Check, Mikhlin, EstimateNorm];
const PARABOLIC_USERS: &[Command] = &[SolveParabolic, Check, Mikhlin, EstimateNorm];
const GRID_USERS: &[Command] =
    &[SolveElliptic, SolveParabolic, SolveCauchy, SolveEllipticDoe, EstimateNorm, DemoFadingMemory, DemoDiffusion];

const EXPONENT: Kind = Kind::Float { lo: 1.0, hi: f64::INFINITY, open: true };
const POSITIVE: Kind = Kind::Float { lo: 0.0, hi: f64::INFINITY, open: true };

const SYMBOLS: &[&str] = &[
    "elliptic",
    "m0",
    "m1",
    "m2",
    "m3",
    "m4",
    "cauchy-m0",
    "cauchy-m1",
    "cauchy-itr",
    "doe-s0",
    "doe-s1",
    "doe-s2",
    "doe-s3",
];

static KEYS: &[KeySpec] = &[
    KeySpec {
        section: "run",
        name: "seed",
        kind: Kind::Int { min: 0 },
        commands: ALL_COMMANDS,
        help: "Base seed of all random streams",
    },
    KeySpec {
        section: "run",
        name: "out",
        kind: Kind::Path,
        commands: ALL_COMMANDS,
        help: "Output directory [env: FMLAB_OUT_DIR]",
    },
    KeySpec {
        section: "run",
        name: "threads",
        kind: Kind::Int { min: 0 },
        commands: ALL_COMMANDS,
        help: "Worker threads, 0 for all cores",
    },
    KeySpec {
        section: "problem",
        name: "problem",
        kind: Kind::Choice(&["elliptic", "parabolic", "gap"]),
        commands: &[Check],
        help: "Which hypothesis to check",
    },
    KeySpec {
        section: "problem",
        name: "d",
        kind: Kind::Int { min: 1 },
        commands: ELLIPTIC_USERS,
        help: "Space dimension",
    },
    KeySpec {
        section: "problem",
        name: "c",
        kind: Kind::Matrix,
        commands: ELLIPTIC_USERS,
        help: "Second-order coefficients: identity or rows `1,0; 0,1`",
    },
    KeySpec {
        section: "problem",
        name: "a",
        kind: Kind::KernelList,
        commands: ELLIPTIC_USERS,
        help: "Second-order kernels a_kj, row-major, `;`-separated",
    },
    KeySpec {
        section: "problem",
        name: "a0",
        kind: Kind::Complex,
        commands: PARABOLIC_USERS,
        help: "Coefficient of u'",
    },
    KeySpec {
        section: "problem",
        name: "a1",
        kind: Kind::Kernel,
        commands: PARABOLIC_USERS,
        help: "Kernel convolved with u'",
    },
    KeySpec {
        section: "problem",
        name: "b0",
        kind: Kind::Complex,
        commands: COEFFICIENT_USERS,
        help: "Coefficient of Au",
    },
    KeySpec {
        section: "problem",
        name: "b1",
        kind: Kind::Kernel,
        commands: COEFFICIENT_USERS,
        help: "Kernel convolved with Au",
    },
    KeySpec {
        section: "problem",
        name: "operator",
        kind: Kind::Operator,
        commands: &[SolveElliptic, SolveParabolic, SolveCauchy, SolveEllipticDoe, Mikhlin, EstimateNorm, NegativeM1],
        help: "Operator A: laplacian(n=, length=, c=), diag(..), scalar(z), identity(n=)",
    },
    KeySpec {
        section: "problem",
        name: "phi",
        kind: Kind::Float { lo: 0.0, hi: std::f64::consts::PI, open: true },
        commands: &[SolveElliptic, SolveParabolic, Check, Mikhlin, EstimateNorm],
        help: "Sector angle",
    },
    KeySpec {
        section: "problem",
        name: "q",
        kind: EXPONENT,
        commands: &[SolveElliptic, SolveCauchy, Check, Mikhlin, EstimateNorm, NegativeM1, DemoDiffusion],
        help: "Exponent of the data space",
    },
    KeySpec {
        section: "problem",
        name: "p",
        kind: Kind::Float { lo: 1.0, hi: f64::INFINITY, open: false },
        commands: &[SolveElliptic, SolveParabolic, Check, Mikhlin, EstimateNorm, Rbound, DemoFadingMemory],
        help: "Exponent of the solution space",
    },
    KeySpec { section: "problem", name: "theta", kind: EXPONENT, commands: &[NegativeM1], help: "Target exponent" },
    KeySpec {
        section: "problem",
        name: "t_list",
        kind: Kind::FloatList,
        commands: &[NegativeM1],
        help: "Window half-widths T",
    },
    KeySpec {
        section: "problem",
        name: "tail",
        kind: POSITIVE,
        commands: &[Check],
        help: "Frequency beyond which the lim inf is taken",
    },
    KeySpec {
        section: "problem",
        name: "symbol",
        kind: Kind::Choice(SYMBOLS),
        commands: &[Mikhlin, EstimateNorm],
        help: "Symbol to analyse",
    },
    KeySpec {
        section: "problem",
        name: "mode",
        kind: Kind::Choice(&["norm", "rbound"]),
        commands: &[Mikhlin],
        help: "Supremum of norms or sampled R-bound",
    },
    KeySpec {
        section: "problem",
        name: "sample",
        kind: Kind::Choice(&["default", "coarse"]),
        commands: &[Check, Mikhlin],
        help: "Frequency sample density",
    },
    KeySpec { section: "grid", name: "n", kind: Kind::Points, commands: GRID_USERS, help: "Points per axis" },
    KeySpec {
        section: "grid",
        name: "half_length",
        kind: Kind::Float { lo: 0.0, hi: f64::INFINITY, open: false },
        commands: GRID_USERS,
        help: "Box half-length L, 0 for automatic",
    },
    KeySpec {
        section: "forcing",
        name: "forcing",
        kind: Kind::Choice(&["wave", "trig", "manufactured"]),
        commands: &[SolveElliptic, SolveParabolic, SolveEllipticDoe],
        help: "Right-hand side",
    },
    KeySpec {
        section: "forcing",
        name: "pattern",
        kind: Kind::Choice(&["identical", "distinct", "first"]),
        commands: &[DemoDiffusion],
        help: "Forcing of the components",
    },
    KeySpec {
        section: "forcing",
        name: "ensemble",
        kind: Kind::Int { min: 0 },
        commands: &[SolveElliptic, EstimateNorm, DemoFadingMemory],
        help: "Ensemble size",
    },
    KeySpec {
        section: "forcing",
        name: "semigroup_check",
        kind: Kind::Bool,
        commands: &[SolveCauchy, DemoDiffusion],
        help: "Also run the semigroup quadrature",
    },
    KeySpec {
        section: "rbound",
        name: "family",
        kind: Kind::Family,
        commands: &[Rbound],
        help: "scalars(z, .., n=), diag(a, b; c, d), resolvent(op=, phi=, count=)",
    },
    KeySpec {
        section: "rbound",
        name: "trials",
        kind: Kind::Int { min: 100 },
        commands: &[Rbound, Mikhlin],
        help: "Monte-Carlo trials",
    },
    KeySpec {
        section: "rbound",
        name: "draw_size",
        kind: Kind::Int { min: 1 },
        commands: &[Rbound, Mikhlin],
        help: "Members per trial",
    },
    KeySpec { section: "demo", name: "m", kind: POSITIVE, commands: &[DemoFadingMemory], help: "Rate of a1" },
    KeySpec { section: "demo", name: "k", kind: POSITIVE, commands: &[DemoFadingMemory], help: "Rate of b1" },
    KeySpec {
        section: "demo",
        name: "shift",
        kind: Kind::Float { lo: f64::NEG_INFINITY, hi: f64::INFINITY, open: false },
        commands: &[DemoFadingMemory, DemoDiffusion],
        help: "Shift c in A = -d_xx + c",
    },
    KeySpec {
        section: "demo",
        name: "n_x",
        kind: Kind::Int { min: 1 },
        commands: &[DemoFadingMemory, DemoDiffusion],
        help: "Interior points of the spatial stencil",
    },
    KeySpec {
        section: "demo",
        name: "q_spatial",
        kind: Kind::Float { lo: 1.0, hi: f64::INFINITY, open: false },
        commands: &[DemoFadingMemory],
        help: "Spatial exponent",
    },
    KeySpec {
        section: "demo",
        name: "caching",
        kind: Kind::Bool,
        commands: &[DemoFadingMemory],
        help: "Reuse resolvent factorizations",
    },
    KeySpec {
        section: "demo",
        name: "components",
        kind: Kind::Int { min: 1 },
        commands: &[DemoDiffusion],
        help: "Number of components K",
    },
    KeySpec {
        section: "demo",
        name: "p_inner",
        kind: Kind::Float { lo: 1.0, hi: f64::INFINITY, open: false },
        commands: &[DemoDiffusion],
        help: "Exponent of l_p(L_p)",
    },
];

const SECTIONS: [&str; 6] = ["run", "problem", "grid", "forcing", "rbound", "demo"];

fn default_value(cmd: Command, key: &str) -> String {
    let s = match (cmd, key) {
        (_, "seed") => "1",
        (_, "out") => DEFAULT_OUT_DIR,
        (_, "threads") => "0",
        (_, "problem") => "parabolic",
        (_, "d") => "1",
        (_, "c") => "identity",
        (_, "a") | (_, "a1") | (_, "b1") => "zero",
        (_, "a0") | (_, "b0") => "1",
        (NegativeM1, "operator") => "scalar(1)",
        (_, "operator") => "laplacian(n=8, c=1)",
        (_, "phi") => return DEFAULT_PHI.to_string(),
        (NegativeM1, "theta") => "4",
        (_, "q") | (_, "p") | (_, "theta") => "2",
        (_, "t_list") => "100, 1000, 10000, 100000",
        (_, "tail") => "1000",
        (_, "symbol") => "elliptic",
        (_, "mode") => "norm",
        (_, "sample") => "default",
        (_, "n") => "1024",
        (_, "half_length") => "0",
        (_, "forcing") => "wave",
        (_, "pattern") => "distinct",
        (EstimateNorm, "ensemble") => "20",
        (DemoFadingMemory, "ensemble") => "50",
        (_, "ensemble") => "0",
        (_, "semigroup_check") | (_, "caching") => "true",
        (_, "family") => "scalars(1, 2, n=1)",
        (_, "trials") => "1000",
        (_, "draw_size") => "2",
        (_, "m") | (_, "k") | (_, "shift") => "1",
        (DemoDiffusion, "n_x") => "16",
        (_, "n_x") => "32",
        (_, "q_spatial") | (_, "p_inner") => "2",
        (_, "components") => "4",
        _ => unreachable!("every key has a default"),
    };
    s.to_string()
}

fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    Floats(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::Floats(v) => {
                let parts: Vec<String> = v.iter().map(f64::to_string).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Help or usage text; `code` is the exit status.
    #[error("{text}")]
    Usage { text: String, code: i32 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { code, .. } => *code,
            CliError::Config(_) => EXIT_ERROR,
            CliError::Run(e) if e.is_hypothesis_failure() => EXIT_HYPOTHESIS,
            CliError::Run(_) => EXIT_ERROR,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Fully resolved and validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<&'static str, Value>,
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn int(&self, key: &str) -> u64 {
        match self.values.get(key) {
            Some(Value::Int(v)) => *v,
            other => panic!("integer key `{key}` missing or mistyped: {other:?}"),
        }
    }

    fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    fn float(&self, key: &str) -> f64 {
        match self.values.get(key) {
            Some(Value::Float(v)) => *v,
            other => panic!("float key `{key}` missing or mistyped: {other:?}"),
        }
    }

    fn flag(&self, key: &str) -> bool {
        match self.values.get(key) {
            Some(Value::Bool(v)) => *v,
            other => panic!("boolean key `{key}` missing or mistyped: {other:?}"),
        }
    }

    fn text(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(Value::Text(v)) => v,
            other => panic!("text key `{key}` missing or mistyped: {other:?}"),
        }
    }

    fn floats(&self, key: &str) -> &[f64] {
        match self.values.get(key) {
            Some(Value::Floats(v)) => v,
            other => panic!("list key `{key}` missing or mistyped: {other:?}"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.int("seed")
    }

    pub fn threads(&self) -> usize {
        self.usize("threads")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.text("out"))
    }

    /// Configuration-file text that parses back to `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        for section in SECTIONS {
            let keys: Vec<&KeySpec> =
                KEYS.iter().filter(|k| k.section == section && self.values.contains_key(k.name)).collect();
            if section != "run" && keys.is_empty() {
                continue;
            }
            let _ = writeln!(s, "[{section}]");
            if section == "run" {
                let _ = writeln!(s, "command = {}", self.command);
            }
            for k in keys {
                let _ = writeln!(s, "{} = {}", k.name, self.values[k.name]);
            }
        }
        s
    }
}

/// Parses one key; the stored text of kernels, operators and families is
/// the validated input.
fn parse_value(key: &KeySpec, raw: &str, d: usize) -> Result<Value, CliError> {
    let raw = raw.trim();
    let bad = |what: &str| config_err(format!("key `{}`: expected {what}, got `{raw}`", key.name));
    if raw.contains('\n') {
        return Err(bad("a single line"));
    }
    let checked = |r: crate::Result<()>| r.map_err(|e| config_err(format!("key `{}`: {e}", key.name)));
    match key.kind {
        Kind::Int { min } => {
            let v: u64 = raw.parse().map_err(|_| bad("an integer"))?;
            if v < min {
                return Err(config_err(format!("key `{}`: must be at least {min}, got {v}", key.name)));
            }
            Ok(Value::Int(v))
        }
        Kind::Points => {
            let v: u64 = raw.parse().map_err(|_| bad("an integer"))?;
            if v < 8 || !v.is_power_of_two() {
                return Err(config_err(format!("key `{}`: must be a power of two >= 8, got {v}", key.name)));
            }
            Ok(Value::Int(v))
        }
        Kind::Float { lo, hi, open } => {
            let v: f64 = raw.parse().map_err(|_| bad("a number"))?;
            let inside = v.is_finite() && v <= hi && if open { v > lo } else { v >= lo };
            if !inside {
                let left = if open { '(' } else { '[' };
                return Err(config_err(format!("key `{}`: must lie in {left}{lo}, {hi}], got {v}", key.name)));
            }
            Ok(Value::Float(v))
        }
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(bad("true or false")),
        },
        Kind::Complex => {
            checked(parse_complex(raw).map(drop))?;
            Ok(Value::Text(raw.to_string()))
        }
        Kind::Kernel => {
            checked(Kernel::parse(raw, 1).map(drop))?;
            Ok(Value::Text(raw.to_string()))
        }
        // grids exist for d <= 2; larger d only reaches the gap check
        Kind::KernelList => {
            if d <= 2 {
                checked(parse_kernel_list(raw, d).map(drop))?;
            }
            Ok(Value::Text(raw.to_string()))
        }
        Kind::Matrix => {
            if d <= 2 {
                checked(parse_matrix(raw, d).map(drop))?;
            }
            Ok(Value::Text(raw.to_string()))
        }
        Kind::Operator => {
            checked(SectorialOperator::parse(raw).map(drop))?;
            Ok(Value::Text(raw.to_string()))
        }
        Kind::Family => {
            checked(OperatorFamily::parse(raw).map(drop))?;
            Ok(Value::Text(raw.to_string()))
        }
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(bad(&format!("one of {}", options.join(", "))))
            }
        }
        Kind::FloatList => {
            let v = raw
                .split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0))
                .collect::<Option<Vec<f64>>>()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| bad("a comma-separated list of positive numbers"))?;
            Ok(Value::Floats(v))
        }
        Kind::Path => {
            if raw.is_empty() {
                return Err(bad("a directory"));
            }
            Ok(Value::Text(raw.to_string()))
        }
    }
}

/// `zero` for all entries, or exactly `d²` kernels separated by `;`.
fn parse_kernel_list(raw: &str, d: usize) -> crate::Result<Vec<Kernel>> {
    let parts = split_top_level(raw, ';').map_err(|m| Error::parse(raw, m))?;
    if parts.len() == 1 && parts[0].trim() == "zero" {
        return (0..d * d).map(|_| Kernel::parse("zero", d)).collect();
    }
    if parts.len() != d * d {
        return Err(Error::parse(raw, format!("expected {} kernels for d = {d}, got {}", d * d, parts.len())));
    }
    parts.iter().map(|p| Kernel::parse(p.trim(), d)).collect()
}

/// `identity` or `d` rows of `d` complex entries.
fn parse_matrix(raw: &str, d: usize) -> crate::Result<CMatrix> {
    if raw.trim() == "identity" {
        return Ok(CMatrix::identity(d, d));
    }
    let rows: Vec<&str> = raw.split(';').collect();
    if rows.len() != d {
        return Err(Error::parse(raw, format!("expected {d} rows, got {}", rows.len())));
    }
    let mut m = CMatrix::zeros(d, d);
    for (i, row) in rows.iter().enumerate() {
        let entries: Vec<&str> = row.split(',').collect();
        if entries.len() != d {
            return Err(Error::parse(raw, format!("row {} has {} entries, expected {d}", i + 1, entries.len())));
        }
        for (j, e) in entries.iter().enumerate() {
            m[(i, j)] = parse_complex(e.trim())?;
        }
    }
    Ok(m)
}

/// Key/value pairs of a configuration file, with the optional command.
struct FileConfig {
    command: Option<String>,
    entries: Vec<(String, String)>,
}

fn parse_file(text: &str) -> Result<FileConfig, CliError> {
    let mut section: Option<String> = None;
    let mut command = None;
    let mut entries: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let at = |msg: String| config_err(format!("line {}: {msg}", lineno + 1));
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| at(format!("malformed section header `{line}`")))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(at(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.as_deref().ok_or_else(|| at(format!("key `{key}` outside any section")))?;
        if sec == "run" && key == "command" {
            command = Some(value.to_string());
            continue;
        }
        match spec(key) {
            Some(k) if k.section == sec => {}
            Some(k) => return Err(at(format!("key `{key}` belongs to section [{}], not [{sec}]", k.section))),
            None => return Err(at(format!("unknown key `{key}` in section [{sec}]"))),
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(at(format!("duplicate key `{key}`")));
        }
        entries.push((key.to_string(), value.to_string()));
    }
    Ok(FileConfig { command, entries })
}

/// Resolves a command, file entries and flag entries into a validated config.
fn resolve(command: Command, file: &[(String, String)], flags: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut raw: BTreeMap<&'static str, String> = BTreeMap::new();
    for k in KEYS.iter().filter(|k| k.commands.contains(&command)) {
        raw.insert(k.name, default_value(command, k.name));
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            raw.insert("out", dir);
        }
    }
    for (key, value) in file.iter().chain(flags) {
        let k = spec(key).ok_or_else(|| config_err(format!("unknown key `{key}`")))?;
        if !k.commands.contains(&command) {
            return Err(config_err(format!("key `{key}` does not apply to `{command}`")));
        }
        raw.insert(k.name, value.clone());
    }

    let d = match raw.get("d") {
        Some(v) => {
            v.trim().parse::<usize>().map_err(|_| config_err(format!("key `d`: expected an integer, got `{v}`")))?
        }
        None => 1,
    };
    let mut values = BTreeMap::new();
    for (name, text) in &raw {
        let k = spec(name).expect("resolved keys are known");
        values.insert(*name, parse_value(k, text, d)?);
    }
    let config = RunConfig { command, values };

    if let (Some(Value::Float(q)), Some(Value::Float(p))) = (config.get("q"), config.get("p")) {
        if matches!(command, SolveElliptic | Check | Mikhlin | EstimateNorm) && q > p {
            return Err(config_err(format!("exponents must satisfy q <= p, got q = {q}, p = {p}")));
        }
    }
    if command == Rbound {
        let family = OperatorFamily::parse(config.text("family")).map_err(|e| config_err(e.to_string()))?;
        let draw = config.usize("draw_size");
        if draw > 4 * family.len() {
            return Err(config_err(format!(
                "key `draw_size`: at most {} for this family, got {draw}",
                4 * family.len()
            )));
        }
    }
    Ok(config)
}

/// The clap command tree; flags mirror the keys of each subcommand.
pub fn cli() -> clap::Command {
    let mut root = clap::Command::new("fmlab")
        .about("Operator-valued Fourier multiplier solvers for elliptic and parabolic convolution equations")
        .version(env!("CARGO_PKG_VERSION"))
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("Configuration file; flags override its values"),
        )
        .after_help("Exit status: 0 success, 1 error, 2 violated hypothesis.");
    for cmd in Command::ALL {
        let mut sub = clap::Command::new(cmd.name()).about(cmd.about());
        for k in KEYS.iter().filter(|k| k.commands.contains(&cmd)) {
            let flag = flag_name(k.name);
            let mut arg = Arg::new(k.name).long(flag).value_name(k.name.to_uppercase()).action(ArgAction::Set);
            arg = arg.help(format!("{} [default: {}]", k.help, default_value(cmd, k.name)));
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

fn flag_entries(m: &ArgMatches, cmd: Command) -> Vec<(String, String)> {
    KEYS.iter()
        .filter(|k| k.commands.contains(&cmd))
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

/// Parses the argument list (without the program name) and optional file
/// text. Without `file_text`, a `--config FILE` flag is read from disk.
pub fn parse_config(args: &[String], file_text: Option<&str>) -> Result<RunConfig, CliError> {
    if args.is_empty() {
        return Err(CliError::Usage { text: cli().render_help().to_string(), code: EXIT_ERROR });
    }
    let argv = std::iter::once("fmlab".to_string()).chain(args.iter().cloned());
    let matches = cli().try_get_matches_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_ERROR,
        };
        CliError::Usage { text: e.render().to_string(), code }
    })?;
    let sub = matches.subcommand();
    let config_path =
        sub.and_then(|(_, m)| m.get_one::<String>("config")).or_else(|| matches.get_one::<String>("config")).cloned();
    let loaded;
    let text = match (file_text, config_path) {
        (Some(t), _) => Some(t),
        (None, Some(path)) => {
            loaded = fs::read_to_string(&path).map_err(|e| config_err(format!("cannot read `{path}`: {e}")))?;
            Some(loaded.as_str())
        }
        (None, None) => None,
    };
    let file = match text {
        Some(t) => parse_file(t)?,
        None => FileConfig { command: None, entries: Vec::new() },
    };
    let (command, flags) = match sub {
        Some((name, m)) => {
            let cmd = Command::from_name(name).expect("subcommands come from Command::ALL");
            (cmd, flag_entries(m, cmd))
        }
        None => {
            let name = file
                .command
                .as_deref()
                .ok_or_else(|| config_err("no subcommand given and the configuration has no `command`"))?;
            let cmd = Command::from_name(name).ok_or_else(|| config_err(format!("unknown command `{name}`")))?;
            (cmd, Vec::new())
        }
    };
    resolve(command, &file.entries, &flags)
}

/// Parses configuration-file text alone.
pub fn parse_config_text(text: &str) -> Result<RunConfig, CliError> {
    let file = parse_file(text)?;
    let name = file.command.as_deref().ok_or_else(|| config_err("missing `command` in [run]"))?;
    let cmd = Command::from_name(name).ok_or_else(|| config_err(format!("unknown command `{name}`")))?;
    resolve(cmd, &file.entries, &[])
}

/// Results of a run; `hypothesis_failed` selects exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub hypothesis_failed: bool,
}

struct Output {
    dir: PathBuf,
    stem: &'static str,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(config: &RunConfig) -> Self {
        Self { dir: config.out_dir(), stem: config.command.name(), files: Vec::new() }
    }

    fn write(&mut self, suffix: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> crate::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{}.{suffix}", self.stem));
        let mut buf = Vec::new();
        body(&mut buf)?;
        fs::write(&path, buf)?;
        self.files.push(path);
        Ok(())
    }

    fn report(&mut self, config: &RunConfig, summary: &str) -> crate::Result<()> {
        let text = report_text(config, summary);
        self.write("report", |w| w.write_all(text.as_bytes()))
    }
}

/// The resolved configuration followed by `summary` on comment lines.
pub fn report_text(config: &RunConfig, summary: &str) -> String {
    let mut s = format!("# fmlab {} report\n", env!("CARGO_PKG_VERSION"));
    s.push_str(&config.emit());
    s.push_str("#\n");
    for line in summary.lines() {
        let _ = writeln!(s, "# {line}");
    }
    s
}

fn name_value_csv(rows: &[(String, f64)]) -> impl FnOnce(&mut Vec<u8>) -> std::io::Result<()> + '_ {
    move |w| {
        writeln!(w, "quantity,value")?;
        for (k, v) in rows {
            writeln!(w, "{k},{v:e}")?;
        }
        Ok(())
    }
}

/// Plot data `(x..., |u(x)|)` on grid nodes.
fn write_profile(w: &mut Vec<u8>, u: &GridFunction) -> std::io::Result<()> {
    let grid = u.grid();
    for i in 0..grid.len() {
        let x: Vec<String> = grid.node(i).iter().map(|v| format!("{v:e}")).collect();
        let norm = u.at(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        writeln!(w, "{} {norm:e}", x.join(" "))?;
    }
    Ok(())
}

/// Plot data `(|ξ|, ‖M(ξ)‖)` along the first axis.
fn write_symbol_profile(w: &mut Vec<u8>, m: &dyn MultiplierSymbol) -> std::io::Result<()> {
    for r in log_spaced(1e-3, 1e3, 200) {
        let mut xi = vec![0.0; m.space_dim()];
        xi[0] = r;
        let norm = m.evaluate(&xi).map(|v| op_norm(&v)).unwrap_or(f64::NAN);
        writeln!(w, "{r:e} {norm:e}")?;
    }
    Ok(())
}

fn operator(config: &RunConfig) -> crate::Result<Arc<SectorialOperator>> {
    let op = SectorialOperator::parse(config.text("operator"))?;
    let op = match config.get("phi") {
        Some(Value::Float(phi)) => op.with_phi(*phi)?,
        _ => op,
    };
    Ok(Arc::new(op))
}

fn elliptic_coefficients(config: &RunConfig) -> crate::Result<EllipticCoefficients> {
    let d = config.usize("d");
    EllipticCoefficients::new(
        parse_matrix(config.text("c"), d)?,
        parse_kernel_list(config.text("a"), d)?,
        parse_complex(config.text("b0"))?,
        Kernel::parse(config.text("b1"), d)?,
    )
}

fn parabolic_coefficients(config: &RunConfig) -> crate::Result<ParabolicCoefficients> {
    ParabolicCoefficients::new(
        parse_complex(config.text("a0"))?,
        Kernel::parse(config.text("a1"), 1)?,
        parse_complex(config.text("b0"))?,
        Kernel::parse(config.text("b1"), 1)?,
    )
}

fn grid(config: &RunConfig, d: usize, min_rate: Option<f64>) -> crate::Result<Grid> {
    let l = match config.float("half_length") {
        l if l > 0.0 => l,
        _ => default_half_length(min_rate),
    };
    Grid::new(d, config.usize("n"), l)
}

/// Forcing by kind; `manufactured` also returns `u*` with `f = L u*`.
fn forcing(
    config: &RunConfig,
    grid: &Grid,
    e_dim: usize,
    forward: impl FnOnce(&GridFunction) -> crate::Result<GridFunction>,
) -> crate::Result<(GridFunction, Option<GridFunction>)> {
    let mut rng = stream(config.seed(), 0);
    Ok(match config.text("forcing") {
        "wave" => (wave_packet(grid, e_dim, &mut rng), None),
        "trig" => (GridFunction::random_trig(grid.clone(), e_dim, grid.n() / 8, &mut rng), None),
        _ => {
            let u_star = GridFunction::random_trig(grid.clone(), e_dim, grid.n() / 8, &mut rng);
            (forward(&u_star)?, Some(u_star))
        }
    })
}

fn relative_l2(a: &GridFunction, b: &GridFunction) -> crate::Result<f64> {
    let nb = lp_norm(b, 2.0);
    let diff = lp_norm(&a.sub(b)?, 2.0);
    Ok(if nb > 0.0 { diff / nb } else { diff })
}

fn solution_rows(s: &Solution, p: f64, u_star: Option<&GridFunction>) -> crate::Result<Vec<(String, f64)>> {
    let mut rows = vec![("residual".to_string(), s.residual), ("norm_u".to_string(), lp_norm(&s.u, p))];
    for (name, g) in &s.derived {
        rows.push((format!("norm_{name}"), lp_norm(g, p)));
    }
    if let Some(u) = u_star {
        rows.push(("error".to_string(), relative_l2(&s.u, u)?));
    }
    Ok(rows)
}

fn rows_summary(rows: &[(String, f64)]) -> String {
    rows.iter().map(|(k, v)| format!("{k} = {v:.6e}")).collect::<Vec<_>>().join("\n")
}

fn symbol(config: &RunConfig) -> crate::Result<Box<dyn MultiplierSymbol>> {
    let op = operator(config)?;
    let name = config.text("symbol");
    let parabolic = |t| -> crate::Result<Box<dyn MultiplierSymbol>> {
        Ok(Box::new(parabolic_symbol(&parabolic_coefficients(config)?, op.clone(), t)))
    };
    Ok(match name {
        "elliptic" => Box::new(elliptic_symbol(&elliptic_coefficients(config)?, op.clone())),
        "m0" => parabolic(ParabolicTerm::M0)?,
        "m1" => parabolic(ParabolicTerm::M1)?,
        "m2" => parabolic(ParabolicTerm::M2)?,
        "m3" => parabolic(ParabolicTerm::M3)?,
        "m4" => parabolic(ParabolicTerm::M4)?,
        "cauchy-m0" => Box::new(cauchy_symbol(op, CauchyTerm::M0)),
        "cauchy-m1" => Box::new(cauchy_symbol(op, CauchyTerm::M1)),
        "cauchy-itr" => Box::new(cauchy_symbol(op, CauchyTerm::ItResolvent)),
        "doe-s0" => Box::new(doe_symbol(op, DoeTerm::Sigma0)),
        "doe-s1" => Box::new(doe_symbol(op, DoeTerm::Sigma1)),
        "doe-s2" => Box::new(doe_symbol(op, DoeTerm::Sigma2)),
        _ => Box::new(doe_symbol(op, DoeTerm::Sigma3)),
    })
}

fn gap_report(q: f64, p: f64, d: usize) -> crate::Result<ConditionReport> {
    let pass = check_gap(q, p, d)?;
    let slack = 2.0 / d as f64 - (1.0 / q - 1.0 / p);
    Ok(ConditionReport {
        problem: "gap".into(),
        phi: f64::NAN,
        items: vec![ConditionItem { label: "1/q - 1/p <= 2/d".into(), pass, constant: slack, worst_xi: Vec::new() }],
        overall: pass,
        constants: vec![("slack".into(), slack)],
    })
}

fn execute(config: &RunConfig, out: &mut Output) -> Result<(String, bool), Error> {
    let seed = config.seed();
    match config.command {
        SolveElliptic => {
            let (q, p, d) = (config.float("q"), config.float("p"), config.usize("d"));
            if !check_gap(q, p, d)? {
                return Err(Error::GapViolated { q, p, d });
            }
            let coeffs = elliptic_coefficients(config)?;
            let op = operator(config)?;
            let g = grid(config, d, coeffs.min_decay_rate())?;
            let forward = OperatorPolynomial::elliptic(&coeffs, op.clone());
            let (f, u_star) = forcing(config, &g, op.dim(), |u| apply_multiplier(&forward, u))?;
            let s = solve_elliptic(&coeffs, &op, &f, q, p)?;
            let mut rows = solution_rows(&s.solution, p, u_star.as_ref())?;
            if let Some(r) = s.sobolev_ratio {
                rows.push(("sobolev_ratio".into(), r));
            }
            let mut summary = format!("{g}, A = {}\n", config.text("operator"));
            if config.usize("ensemble") > 0 {
                let rep = verify_sobolev(&coeffs, &op, q, p, config.usize("ensemble"), seed, &g)?;
                rows.push(("sobolev_max_ratio".into(), rep.max_ratio));
                rows.push(("sobolev_drift_grid".into(), rep.drift_grid));
                rows.push(("sobolev_drift_box".into(), rep.drift_box));
                let _ = writeln!(summary, "{rep}");
            }
            summary.push_str(&rows_summary(&rows));
            out.write("csv", name_value_csv(&rows))?;
            out.write("u.dat", |w| write_profile(w, &s.solution.u))?;
            let sym = elliptic_symbol(&coeffs, op);
            out.write("symbol.dat", |w| write_symbol_profile(w, &sym))?;
            Ok((summary, false))
        }
        SolveParabolic => {
            let p = config.float("p");
            let coeffs = parabolic_coefficients(config)?;
            let op = operator(config)?;
            let g = grid(config, 1, coeffs.min_decay_rate())?;
            let forward = OperatorPolynomial::parabolic(&coeffs, op.clone());
            let (f, u_star) = forcing(config, &g, op.dim(), |u| apply_multiplier(&forward, u))?;
            let (s, rep) = solve_parabolic(&coeffs, &op, &f, p, &ENorm::Euclidean)?;
            let mut rows = solution_rows(&s, p, u_star.as_ref())?;
            rows.extend(rep.ratio_c.map(|r| ("ratio_C".to_string(), r)));
            let summary = format!("{g}, A = {}\n{rep}\n{}", config.text("operator"), rows_summary(&rows));
            let row = crate::solver::MemberRow {
                member_seed: seed,
                residual: s.residual,
                norm_u_prime: rep.norm_u_prime,
                norm_conv_u_prime: rep.norm_conv_u_prime,
                norm_au: rep.norm_au,
                norm_conv_au: rep.norm_conv_au,
                norm_f: rep.norm_f,
                ratio_c: rep.ratio_c,
            };
            out.write("csv", |w| FadingMemoryReport::write_rows(&[row], w))?;
            out.write("u.dat", |w| write_profile(w, &s.u))?;
            let sym = parabolic_symbol(&coeffs, op, ParabolicTerm::M0);
            out.write("symbol.dat", |w| write_symbol_profile(w, &sym))?;
            Ok((summary, false))
        }
        SolveCauchy => {
            let q = config.float("q");
            let op = operator(config)?;
            let g = grid(config, 1, None)?;
            let f = causal_pulse(&g, op.dim(), &mut stream(seed, 0));
            let options = CauchyOptions { semigroup_check: config.flag("semigroup_check") };
            let s = solve_cauchy(&op, &f, q, options)?;
            let mut rows = solution_rows(&s.solution, q, None)?;
            rows.extend(s.discrepancy.map(|d| ("semigroup_discrepancy".to_string(), d)));
            for pair in &s.norm_pairs {
                rows.push((format!("ratio_u_theta{}", pair.theta), pair.u));
                rows.push((format!("ratio_u'_theta{}", pair.theta), pair.u_prime));
                rows.push((format!("ratio_Au_theta{}", pair.theta), pair.au));
            }
            let summary = format!("{g}, A = {}\n{}", config.text("operator"), rows_summary(&rows));
            out.write("csv", name_value_csv(&rows))?;
            out.write("u.dat", |w| write_profile(w, &s.solution.u))?;
            let sym = cauchy_symbol(op, CauchyTerm::M0);
            out.write("symbol.dat", |w| write_symbol_profile(w, &sym))?;
            Ok((summary, false))
        }
        SolveEllipticDoe => {
            let op = operator(config)?;
            let g = grid(config, 1, None)?;
            let forward = OperatorPolynomial::doe(op.clone());
            let (f, u_star) = forcing(config, &g, op.dim(), |u| apply_multiplier(&forward, u))?;
            let s = solve_elliptic_doe(&op, &f)?;
            let rows = solution_rows(&s, 2.0, u_star.as_ref())?;
            let mut summary = format!("{g}, A = {}\n{}", config.text("operator"), rows_summary(&rows));
            if s.mean_projected {
                summary.push_str("\nmean projected out at zero frequency");
            }
            out.write("csv", name_value_csv(&rows))?;
            out.write("u.dat", |w| write_profile(w, &s.u))?;
            let sym = doe_symbol(op, DoeTerm::Sigma0);
            out.write("symbol.dat", |w| write_symbol_profile(w, &sym))?;
            Ok((summary, false))
        }
        Check => {
            let phi = config.float("phi");
            let sample = |d| if config.text("sample") == "coarse" { coarse_xi_sample(d) } else { default_xi_sample(d) };
            let report = match config.text("problem") {
                "gap" => gap_report(config.float("q"), config.float("p"), config.usize("d"))?,
                "elliptic" => {
                    let coeffs = elliptic_coefficients(config)?;
                    check_condition_3_1(&coeffs, phi, &sample(coeffs.dim()))?
                }
                _ => check_condition_4_1(&parabolic_coefficients(config)?, phi, &sample(1), config.float("tail"))?,
            };
            out.write("csv", |w| report.write_csv(w))?;
            Ok((report.to_string(), !report.overall))
        }
        Mikhlin => {
            let m = symbol(config)?;
            let (q, p) = (config.float("q"), config.float("p"));
            let d = m.space_dim();
            let sample = if config.text("sample") == "coarse" { coarse_xi_sample(d) } else { default_xi_sample(d) };
            let mode = match config.text("mode") {
                "rbound" => MikhlinMode::RBoundSample {
                    trials: config.usize("trials"),
                    draw_size: config.usize("draw_size"),
                    seed,
                },
                _ => MikhlinMode::NormSup,
            };
            let report = mikhlin_functional_operator(m.as_ref(), q, p, &sample, mode)?;
            out.write("csv", |w| {
                writeln!(w, "alpha,sup,worst_xi,diverging")?;
                for e in &report.per_alpha {
                    let alpha: Vec<String> = e.alpha.iter().map(u8::to_string).collect();
                    let xi: Vec<String> = e.worst_xi.iter().map(|x| format!("{x:e}")).collect();
                    writeln!(w, "{},{:e},{},{}", alpha.join(" "), e.sup, xi.join(" "), e.diverging)?;
                }
                Ok(())
            })?;
            Ok((format!("symbol {}\n{report}", m.name()), !report.passes()))
        }
        Rbound => {
            let family = OperatorFamily::parse(config.text("family"))?;
            let est =
                estimate_r_bound(&family, config.float("p"), config.usize("trials"), config.usize("draw_size"), seed)?;
            out.write("csv", |w| est.write_csv(w))?;
            Ok((est.to_string(), false))
        }
        EstimateNorm => {
            let m = symbol(config)?;
            let (q, p) = (config.float("q"), config.float("p"));
            let d = m.space_dim();
            if !check_gap(q, p, d)? {
                return Err(Error::GapViolated { q, p, d });
            }
            let rate = match config.text("symbol") {
                "elliptic" => elliptic_coefficients(config)?.min_decay_rate(),
                s if s.starts_with('m') => parabolic_coefficients(config)?.min_decay_rate(),
                _ => None,
            };
            let g = grid(config, d, rate)?;
            let est = estimate_lq_to_lp_norm(m.as_ref(), q, p, &g, config.usize("ensemble"), seed)?;
            out.write("csv", |w| {
                writeln!(w, "q,p,n,half_length,estimate")?;
                writeln!(w, "{q},{p},{},{},{est:e}", g.n(), g.half_length())
            })?;
            Ok((format!("symbol {} on {g}\n|T_M|_(L_{q} -> L_{p}) >= {est:.6e}", m.name()), false))
        }
        DemoFadingMemory => {
            let mut params = FadingMemoryParams::with_rates(
                config.float("m"),
                config.float("k"),
                config.float("shift"),
                config.usize("n"),
            )?;
            if config.float("half_length") > 0.0 {
                params.grid = Grid::new(1, config.usize("n"), config.float("half_length"))?;
            }
            params.n_x = config.usize("n_x");
            params.p = config.float("p");
            params.q_spatial = config.float("q_spatial");
            params.ensemble_size = config.usize("ensemble");
            params.seed = seed;
            params.caching = config.flag("caching");
            let report = demo_fading_memory(&params)?;
            out.write("csv", |w| report.write_csv(w))?;
            Ok((report.to_string(), false))
        }
        DemoDiffusion => {
            let l = match config.float("half_length") {
                l if l > 0.0 => l,
                _ => default_half_length(None),
            };
            let params = DiffusionParams {
                components: config.usize("components"),
                c: config.float("shift"),
                grid: Grid::new(1, config.usize("n"), l)?,
                n_x: config.usize("n_x"),
                p_inner: config.float("p_inner"),
                q: config.float("q"),
                seed,
                forcing: match config.text("pattern") {
                    "identical" => DiffusionForcing::Identical,
                    "first" => DiffusionForcing::FirstOnly,
                    _ => DiffusionForcing::Distinct,
                },
                semigroup_check: config.flag("semigroup_check"),
            };
            let report = demo_diffusion_system(&params)?;
            out.write("csv", |w| report.write_csv(w))?;
            Ok((report.to_string(), false))
        }
        NegativeM1 => {
            let op = SectorialOperator::parse(config.text("operator"))?;
            let table = negative_test_m1(&op, config.float("q"), config.float("theta"), config.floats("t_list"))?;
            out.write("csv", |w| {
                writeln!(w, "T,weighted_sup,literal_sup")?;
                for r in &table.rows {
                    writeln!(w, "{:e},{:e},{:e}", r.t_max, r.weighted_sup, r.literal_sup)?;
                }
                Ok(())
            })?;
            Ok((table.to_string(), false))
        }
    }
}

/// Runs `config` and writes its report and data files. A violated
/// hypothesis is reported in the files and in the outcome, not as an error.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads())
        .build()
        .map_err(|e| config_err(format!("cannot start thread pool: {e}")))?;
    let mut out = Output::new(config);
    let result = pool.install(|| execute(config, &mut out));
    let (summary, failed) = match result {
        Ok(r) => r,
        Err(e) if e.is_hypothesis_failure() => {
            let summary = match &e {
                Error::ConditionFailed(report) => format!("{e}\n{report}"),
                _ => e.to_string(),
            };
            (format!("refused: {summary}"), true)
        }
        Err(e) => return Err(e.into()),
    };
    out.report(config, &summary)?;
    Ok(RunOutcome { summary, files: out.files, hypothesis_failed: failed })
}

/// Full command-line entry point; returns the exit status.
pub fn main_with_args(args: &[String]) -> i32 {
    let config = match parse_config(args, None) {
        Ok(c) => c,
        Err(CliError::Usage { text, code }) => {
            if code == EXIT_OK {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            return code;
        }
        Err(e) => {
            eprintln!("fmlab: {e}");
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.hypothesis_failed {
                EXIT_HYPOTHESIS
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("fmlab: {e}");
            e.exit_code()
        }
    }
}

/// Path of the file a run writes with the given suffix (`csv`, `report`, ...).
pub fn output_path(config: &RunConfig, suffix: &str) -> PathBuf {
    Path::new(&config.out_dir()).join(format!("{}.{suffix}", config.command.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn check_example_parses() {
        let c = parse_config(
            &args(&[
                "check",
                "--problem",
                "parabolic",
                "--a1",
                "exp(m=1)",
                "--b1",
                "exp(m=1)",
                "--phi",
                "1.25",
                "--out",
                "o",
            ]),
            None,
        )
        .unwrap();
        assert_eq!(c.command, Check);
        assert_eq!(c.get("a1"), Some(&Value::Text("exp(m=1)".into())));
        assert_eq!(c.get("phi"), Some(&Value::Float(1.25)));
    }

    #[test]
    fn rejects_q_above_p() {
        let e = parse_config(&args(&["check", "--problem", "gap", "--q", "4", "--p", "2"]), None).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_ERROR);
        assert!(e.to_string().contains("q <= p"), "{e}");
    }

    #[test]
    fn empty_args_give_usage_and_exit_one() {
        let e = parse_config(&[], None).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_ERROR);
        assert!(e.to_string().contains("Usage"));
    }

    #[test]
    fn unknown_keys_and_type_errors_are_rejected() {
        let file = "[run]\ncommand = rbound\n[rbound]\nbogus = 1\n";
        assert!(parse_config_text(file).unwrap_err().to_string().contains("unknown key"));
        let file = "[run]\ncommand = rbound\n[problem]\nfamily = scalars(1)\n";
        assert!(parse_config_text(file).unwrap_err().to_string().contains("section [rbound]"));
        let e = parse_config(&args(&["rbound", "--trials", "many"]), None).unwrap_err();
        assert!(e.to_string().contains("expected an integer"));
        let e = parse_config(&args(&["rbound", "--phi", "1"]), None).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_ERROR);
        let file = "[run]\ncommand = check\n[problem]\nn = 64\n";
        assert!(parse_config_text(file).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = "[run]\ncommand = rbound\nseed = 5\n[rbound]\ntrials = 200\n";
        let c = parse_config(&args(&["rbound", "--trials", "300"]), Some(file)).unwrap();
        assert_eq!(c.get("trials"), Some(&Value::Int(300)));
        assert_eq!(c.seed(), 5);
        let c = parse_config(&args(&["--config", "unused"]), Some(file)).unwrap();
        assert_eq!(c.get("trials"), Some(&Value::Int(200)));
    }

    #[test]
    fn report_reparses_to_the_same_config() {
        let c = parse_config(&args(&["negative-m1", "--theta", "3", "--out", "x"]), None).unwrap();
        let text = report_text(&c, "line one\nline two");
        assert_eq!(parse_config_text(&text).unwrap(), c);
    }

    #[test]
    fn every_command_has_valid_defaults() {
        for cmd in Command::ALL {
            let c = resolve(cmd, &[], &[]).unwrap();
            assert_eq!(parse_config_text(&c.emit()).unwrap(), c, "{cmd}");
        }
    }

    fn float_text() -> impl Strategy<Value = String> {
        (1.0f64..64.0).prop_map(|x| x.to_string())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn emit_then_parse_is_identity(
            cmd in 0usize..11,
            seed in any::<u64>(),
            threads in 0u64..8,
            x in float_text(),
            y in float_text(),
            n_exp in 3u32..14,
            flag in any::<bool>(),
        ) {
            let cmd = Command::ALL[cmd];
            let mut flags = vec![("seed".to_string(), seed.to_string()), ("threads".to_string(), threads.to_string())];
            let keys: Vec<&KeySpec> = KEYS.iter().filter(|k| k.commands.contains(&cmd)).collect();
            let (lo, hi) = if x.parse::<f64>().unwrap() < y.parse::<f64>().unwrap() { (x, y) } else { (y, x) };
            for k in keys {
                let v = match (k.name, k.kind) {
                    ("q", _) | ("theta", _) => lo.clone(),
                    ("p", _) => hi.clone(),
                    ("phi", _) => "1.25".into(),
                    ("n", _) => (1u64 << n_exp).to_string(),
                    (_, Kind::Bool) => flag.to_string(),
                    (_, Kind::Float { .. }) => lo.clone(),
                    ("t_list", _) => format!("{lo}, {hi}"),
                    _ => continue,
                };
                flags.push((k.name.to_string(), v));
            }
            let config = resolve(cmd, &[], &flags).unwrap();
            let again = parse_config_text(&config.emit()).unwrap();
            prop_assert_eq!(again, config);
        }
    }
}
