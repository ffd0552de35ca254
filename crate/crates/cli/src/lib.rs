//! Command-line front end: argument handling, file loading and textual
//! reports over the `locmat` kernel.

pub mod expr;
pub mod input;
pub mod verify;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use locmat::derivations::{
    derivation_commutator, expand_basis, inner_solve_local, peel_derivation, Derivation,
    GeneratorImages, LinearMap,
};
use locmat::endomorphisms::{
    factorize_traced, integrability_profile, skolem_noether, validate_endo, ConjugatorSeq,
    Direction, SolverConfig, UnitalEndo,
};
use locmat::minf::{pattern_commutator, pattern_mul};
use locmat::{FieldSpec, SiteShape};

use crate::expr::{parse_and_eval, parse_pattern, ExprError};
use crate::input::{format_system, parse_input, InputFile};

/// Session settings shared by every subcommand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionConfig {
    pub field: FieldSpec,
    pub shape: SiteShape,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Syntax(#[from] expr::SyntaxError),
    #[error(transparent)]
    Kernel(#[from] locmat::Error),
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Syntax(s) => CliError::Syntax(s),
            ExprError::Eval(k) => CliError::Kernel(k),
        }
    }
}

impl CliError {
    /// 2 for malformed input, 1 when a computation or check fails.
    pub fn exit_code(&self) -> i32 {
        use locmat::Error as E;
        match self {
            CliError::Usage(_) | CliError::Syntax(_) => 2,
            CliError::Kernel(e) => match e {
                E::InvalidField(_)
                | E::InvalidShape(_)
                | E::DivisionByZero
                | E::IndexOutOfRange { .. }
                | E::FieldMismatch
                | E::ShapeMismatch
                | E::ShiftOutOfRange { .. }
                | E::ShapeMismatchAtShiftedSite { .. }
                | E::InvalidSystem(_)
                | E::InvalidEndomorphism(_)
                | E::InvalidSequence(_)
                | E::InvalidFamily(_)
                | E::WrongSupport { .. }
                | E::SupportNotContained { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "locmat",
    about = "Exact algebra on infinite tensor products of matrix algebras"
)]
struct Cli {
    #[command(flatten)]
    session: SessionArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SessionArgs {
    /// Ground field: `q` or `gf:<p>`.
    #[arg(long, global = true, default_value = "q")]
    field: String,
    /// Site sizes: `default=<n>[,<i>=<n_i>...]`.
    #[arg(long, global = true, default_value = "default=2")]
    shape: String,
    /// Seed for randomized stages.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Example1,
    Example2,
    Ladder,
    MinfLadder,
    AfAction,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate an element and print its canonical form.
    Eval {
        #[arg(long)]
        expr: String,
    },
    /// Apply a derivation system to an element.
    ApplyDerivation {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        expr: String,
    },
    /// Bracket two derivation files, or two elements.
    Commutator {
        #[arg(long)]
        file: Vec<PathBuf>,
        #[arg(long)]
        expr: Vec<String>,
    },
    /// Find `b` with `d = ad(b)` on `A_S`.
    InnerSolve {
        #[arg(long)]
        file: PathBuf,
        /// Comma-separated site set `S`.
        #[arg(long)]
        sites: String,
    },
    /// Split a derivation on `A_(1..n)` into centralizing inner steps.
    Peel {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Coefficients against the basis `{ad(e)}`.
    ExpandBasis {
        #[arg(long)]
        file: PathBuf,
        /// Also print the combined coefficients inside `[1, n]`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Find an invertible conjugator implementing an endomorphism on `A_S`.
    SkolemNoether {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated source sites (default `1..n`).
        #[arg(long)]
        sites: Option<String>,
    },
    /// Write an endomorphism of `A_(1..n)` as a product of conjugations.
    Factorize {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Orbit dimensions of an element under a conjugator sequence.
    Integrability {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        expr: String,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Product of two pattern matrices.
    MinfMul {
        #[arg(long, num_args = 1)]
        expr: Vec<String>,
    },
    /// Commutator of two pattern matrices.
    MinfCommutator {
        #[arg(long, num_args = 1)]
        expr: Vec<String>,
    },
    /// Run a built-in verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
}

/// Exit status with the text destined for stdout and stderr.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn parse_field(text: &str) -> Result<FieldSpec, CliError> {
    match text {
        "q" => Ok(FieldSpec::Rationals),
        _ => {
            let p = text
                .strip_prefix("gf:")
                .and_then(|p| p.parse::<u64>().ok())
                .ok_or_else(|| {
                    CliError::Usage(format!("unknown field '{text}'; use q or gf:<p>"))
                })?;
            Ok(FieldSpec::prime(p)?)
        }
    }
}

pub fn parse_shape(text: &str) -> Result<SiteShape, CliError> {
    let mut default = None;
    let mut exceptions = Vec::new();
    for part in text.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("bad shape entry '{part}'")))?;
        let size: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad size '{v}'")))?;
        match k.trim() {
            "default" => default = Some(size),
            site => {
                let site: usize = site
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad site '{site}'")))?;
                exceptions.push((site, size));
            }
        }
    }
    let mut shape = SiteShape::uniform(
        default.ok_or_else(|| CliError::Usage("shape needs default=<n>".into()))?,
    )?;
    for (site, size) in exceptions {
        shape = shape.with_exception(site, size)?;
    }
    Ok(shape)
}

fn parse_sites(text: &str) -> Result<BTreeSet<usize>, CliError> {
    let sites = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(|_| CliError::Usage(format!("bad site list '{text}'")))?;
    if sites.is_empty() || sites.contains(&0) {
        return Err(CliError::Usage(format!("bad site list '{text}'")));
    }
    Ok(sites)
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn load(path: &PathBuf, cfg: &SessionConfig) -> Result<InputFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_input(&text, cfg.field, &cfg.shape)?)
}

fn load_derivation(path: &PathBuf, cfg: &SessionConfig) -> Result<Derivation, CliError> {
    let f = load(path, cfg)?;
    if !f.has_system() {
        return Err(CliError::Usage(format!(
            "{} has no member or family lines",
            path.display()
        )));
    }
    Ok(Derivation::SparseSum(f.system(cfg.field, &cfg.shape)?))
}

/// An endomorphism from `image` lines, or from `conjugator` lines read as
/// `conj(c_1) ∘ ⋯ ∘ conj(c_r)`.
fn load_endo(
    path: &PathBuf,
    n: Option<usize>,
    cfg: &SessionConfig,
) -> Result<UnitalEndo, CliError> {
    let f = load(path, cfg)?;
    if f.has_images() {
        let level = n.unwrap_or(f.image_level());
        let phi = UnitalEndo::new(cfg.field, &cfg.shape, level, f.images())?;
        validate_endo(&phi)?;
        return Ok(phi);
    }
    let cs = f.conjugators();
    if cs.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no image or conjugator lines",
            path.display()
        )));
    }
    let level = n.unwrap_or_else(|| cs.iter().flat_map(|c| c.support()).max().unwrap_or(1));
    Ok(UnitalEndo::from_conjugators(
        cfg.field, &cfg.shape, &cs, level,
    )?)
}

fn two<'a>(v: &'a [String], what: &str) -> Result<(&'a str, &'a str), CliError> {
    match v {
        [a, b] => Ok((a, b)),
        _ => Err(CliError::Usage(format!(
            "{what} needs exactly two --expr arguments"
        ))),
    }
}

fn execute(cmd: Command, cfg: &SessionConfig, out: &mut String) -> Result<bool, CliError> {
    let (field, shape) = (cfg.field, &cfg.shape);
    match cmd {
        Command::Eval { expr } => {
            writeln!(out, "{}", parse_and_eval(&expr, field, shape)?).ok();
        }
        Command::ApplyDerivation { file, expr } => {
            let d = load_derivation(&file, cfg)?;
            let x = parse_and_eval(&expr, field, shape)?;
            writeln!(out, "{}", d.apply(&x)?).ok();
        }
        Command::Commutator { file, expr } => match (file.as_slice(), expr.as_slice()) {
            ([a, b], []) => {
                let d =
                    derivation_commutator(&load_derivation(a, cfg)?, &load_derivation(b, cfg)?)?;
                out.push_str(&format_system(&d.to_system().simplify()));
            }
            ([], [a, b]) => {
                let x = parse_and_eval(a, field, shape)?;
                let y = parse_and_eval(b, field, shape)?;
                writeln!(out, "{}", x.commutator(&y)?).ok();
            }
            _ => {
                return Err(CliError::Usage(
                    "commutator needs two --file or two --expr arguments".into(),
                ))
            }
        },
        Command::InnerSolve { file, sites } => {
            let d = load_derivation(&file, cfg)?;
            let b = inner_solve_local(&d, &parse_sites(&sites)?)?;
            writeln!(out, "{b}").ok();
        }
        Command::Peel { file, n } => {
            let f = load(&file, cfg)?;
            let images = if f.has_images() {
                GeneratorImages::new(field, shape, n.unwrap_or(f.image_level()), f.images())?
            } else {
                let n = n.ok_or_else(|| CliError::Usage("peel of a system needs --n".into()))?;
                let d = Derivation::SparseSum(f.system(field, shape)?);
                GeneratorImages::from_map(&d, n)?
            };
            let terms = peel_derivation(&images)?;
            for t in &terms {
                writeln!(
                    out,
                    "step {} on {{{}}}: {}",
                    t.step,
                    join(&t.sites),
                    t.element
                )
                .ok();
            }
            if terms.is_empty() {
                writeln!(out, "zero on A_(1..{})", images.level()).ok();
            }
        }
        Command::ExpandBasis { file, n } => {
            let d = load_derivation(&file, cfg)?;
            let exp = expand_basis(&d.to_system());
            for (m, c) in &exp.finite {
                writeln!(out, "{c} {m}").ok();
            }
            for fam in &exp.families {
                writeln!(out, "family start={} window={}", fam.start, fam.window).ok();
                for (m, c) in &fam.template {
                    writeln!(out, "  {c} {m}").ok();
                }
            }
            if let Some(n) = n {
                writeln!(out, "inside [1,{n}]:").ok();
                for (m, c) in exp.truncated(n) {
                    writeln!(out, "  {c} {m}").ok();
                }
            }
            if exp.is_empty() {
                writeln!(out, "no coefficients").ok();
            }
        }
        Command::SkolemNoether { file, n, sites } => {
            let phi = load_endo(&file, n, cfg)?;
            let sites = match sites {
                Some(s) => parse_sites(&s)?,
                None => (1..=phi.level()).collect(),
            };
            let ambient: BTreeSet<usize> = (1..=phi.target_level()).collect();
            let a = skolem_noether(&phi, &sites, &ambient, &SolverConfig::with_seed(cfg.seed))?;
            writeln!(out, "{a}").ok();
        }
        Command::Factorize { file, n } => {
            let phi = load_endo(&file, n, cfg)?;
            let (seq, _) = factorize_traced(&phi, &SolverConfig::with_seed(cfg.seed))?;
            for (k, a) in seq.conjugators().iter().enumerate() {
                writeln!(out, "a{} = {a}", k + 1).ok();
            }
            let ok = seq.to_endo(phi.level())? == phi;
            writeln!(out, "recomposition: {}", if ok { "ok" } else { "FAILED" }).ok();
            return Ok(ok);
        }
        Command::Integrability { file, expr, n } => {
            let f = load(&file, cfg)?;
            let cs = f.conjugators();
            let n = n.unwrap_or(cs.len());
            let seq = ConjugatorSeq::new(field, shape, cs, Direction::Forward)?;
            let a = parse_and_eval(&expr, field, shape)?;
            writeln!(
                out,
                "profile: {}",
                join(integrability_profile(&seq, &a, n)?)
            )
            .ok();
        }
        Command::MinfMul { expr } => {
            let (a, b) = two(&expr, "minf-mul")?;
            writeln!(
                out,
                "{}",
                pattern_mul(&parse_pattern(a, field)?, &parse_pattern(b, field)?)?
            )
            .ok();
        }
        Command::MinfCommutator { expr } => {
            let (a, b) = two(&expr, "minf-commutator")?;
            writeln!(
                out,
                "{}",
                pattern_commutator(&parse_pattern(a, field)?, &parse_pattern(b, field)?)?
            )
            .ok();
        }
        Command::Verify { suite, n, k } => {
            let report = match suite {
                Suite::Example1 => {
                    let n = n.unwrap_or(6);
                    if n < 2 {
                        return Err(CliError::Usage("example1 needs --n >= 2".into()));
                    }
                    verify::example1(field, shape, n, cfg.seed)?
                }
                Suite::Example2 => verify::example2(field, shape, n.unwrap_or(10))?,
                Suite::Ladder => verify::ladder(field, shape, k.unwrap_or(5))?,
                Suite::MinfLadder => verify::minf_ladder(field, k.unwrap_or(6))?,
                Suite::AfAction => verify::af_action(field, n.unwrap_or(10), cfg.seed)?,
            };
            for line in &report.lines {
                writeln!(out, "{line}").ok();
            }
            writeln!(out, "{}", if report.ok { "OK" } else { "FAILED" }).ok();
            return Ok(report.ok);
        }
    }
    Ok(true)
}

/// Runs one command line (including the program name) to completion.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let mut stdout = String::new();
    let result = (|| {
        let cfg = SessionConfig {
            field: parse_field(&cli.session.field)?,
            shape: parse_shape(&cli.session.shape)?,
            seed: cli.session.seed,
        };
        execute(cli.command, &cfg, &mut stdout)
    })();
    match result {
        Ok(true) => Outcome {
            code: 0,
            stdout,
            stderr: String::new(),
        },
        Ok(false) => Outcome {
            code: 1,
            stdout,
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout,
            stderr: format!("error: {e}\n"),
        },
    }
}
