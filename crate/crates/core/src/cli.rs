//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure, 3 numerical instability during a run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::basis::{make_space, Interval, SpaceKind};
use crate::diagnostics::{convergence_table, error_report, reference_solution, ErrorReport};
use crate::error::{FsbpError, Result};
use crate::operator::{
    build_operator, from_json_unchecked, verify_norm_rule, verify_sbp, write_operator_file,
};
use crate::quadrature::{find_positive_rule, rule_with_nodes};
use crate::solver::{run, Boundary, ProblemKind, ProblemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_INSTABILITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fsbp", version, about = "Function-space summation-by-parts operators and SAT solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Construct an operator, verify it and write it as JSON.
    Build(BuildArgs),
    /// Check the SBP properties of an operator file.
    Verify(VerifyArgs),
    /// Run one experiment and write diagnostics, solution and summary CSVs.
    Run(RunArgs),
    /// Run a block-refinement study and write convergence.csv.
    Convergence(RunArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Space, e.g. `trig:d=1`, `exp:d=2`, `poly:d=3`, `rbf-cubic:centers=0,0.5,1`.
    #[arg(long)]
    space: String,
    #[arg(long, num_args = 2, value_names = ["XL", "XR"], allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Exact node count; searched upwards from the space default when omitted.
    #[arg(long)]
    nodes: Option<usize>,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    file: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Problem {
    Advection,
    AdvectionSource,
    Burgers,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with the same keys as the long flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<Problem>,
    /// Space per block; repeat for a convergence study over several spaces.
    #[arg(long)]
    space: Vec<String>,
    #[arg(long, num_args = 2, value_names = ["XL", "XR"], allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Nodes per block, once or once per space.
    #[arg(long)]
    nodes: Vec<usize>,
    /// Block count; a comma-separated list for convergence.
    #[arg(long, value_delimiter = ',')]
    blocks: Vec<usize>,
    #[arg(long)]
    tfinal: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long)]
    periodic: bool,
    /// Constant inflow value at the left boundary.
    #[arg(long, allow_negative_numbers = true)]
    inflow: Option<f64>,
    /// Advection speed `a`.
    #[arg(long, allow_negative_numbers = true)]
    speed: Option<f64>,
    /// Source coefficient `c` for advection-source.
    #[arg(long, allow_negative_numbers = true)]
    source: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    #[default]
    None,
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::None => Vec::new(),
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    problem: Option<Problem>,
    #[serde(default)]
    space: OneOrMany<String>,
    domain: Option<[f64; 2]>,
    #[serde(default)]
    nodes: OneOrMany<usize>,
    #[serde(default)]
    blocks: OneOrMany<usize>,
    tfinal: Option<f64>,
    cfl: Option<f64>,
    sigma: Option<f64>,
    periodic: Option<bool>,
    inflow: Option<f64>,
    speed: Option<f64>,
    source: Option<f64>,
    out: Option<PathBuf>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub spaces: Vec<(SpaceKind, usize)>,
    pub domain: Interval,
    pub blocks: Vec<usize>,
    pub t_final: f64,
    pub cfl: f64,
    pub sigma: f64,
    pub periodic: bool,
    pub inflow: Option<f64>,
    pub speed: f64,
    pub source: f64,
    pub out: PathBuf,
}

impl RunConfig {
    fn resolve(args: RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str::<RunConfigFile>(&text)
                    .map_err(|e| FsbpError::InvalidArgument(format!("config file: {e}")))?
            }
            None => RunConfigFile::default(),
        };
        let usage = |msg: &str| FsbpError::InvalidArgument(msg.to_string());

        let problem = args
            .problem
            .or(file.problem)
            .ok_or_else(|| usage("--problem is required"))?;
        let kind = match problem {
            Problem::Advection => ProblemKind::Advection,
            Problem::AdvectionSource => ProblemKind::AdvectionSource,
            Problem::Burgers => ProblemKind::Burgers,
        };
        let preset = preset(kind);

        let space_text = non_empty(args.space, file.space.into_vec());
        if space_text.is_empty() {
            return Err(usage("--space is required"));
        }
        let kinds: Vec<SpaceKind> = space_text
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let nodes = non_empty(args.nodes, file.nodes.into_vec());
        let spaces = match nodes.len() {
            0 => kinds
                .into_iter()
                .map(|k| smallest_grid(&k).map(|n| (k, n)))
                .collect::<Result<_>>()?,
            1 => kinds.into_iter().map(|k| (k, nodes[0])).collect(),
            n if n == kinds.len() => kinds.into_iter().zip(nodes).collect(),
            _ => return Err(usage("--nodes must be given once or once per --space")),
        };

        let domain = match args.domain.or(file.domain.map(Vec::from)) {
            Some(d) => Interval::new(d[0], d[1])?,
            None => preset.domain,
        };
        let mut blocks = non_empty(args.blocks, file.blocks.into_vec());
        if blocks.is_empty() {
            blocks = vec![1];
        }
        if blocks.contains(&0) {
            return Err(usage("block counts must be at least 1"));
        }
        let inflow = args.inflow.or(file.inflow);
        let periodic_flag = args.periodic || file.periodic.unwrap_or(false);
        if periodic_flag && inflow.is_some() {
            return Err(usage("--periodic and --inflow are mutually exclusive"));
        }
        let periodic = periodic_flag || (inflow.is_none() && preset.boundary.is_periodic());
        let cfl = args.cfl.or(file.cfl).unwrap_or(0.5);
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(usage("--cfl must lie in (0, 1]"));
        }
        let t_final = args.tfinal.or(file.tfinal).unwrap_or(default_t_final(kind));
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(usage("--tfinal must be finite and nonnegative"));
        }
        Ok(Self {
            problem: kind,
            spaces,
            domain,
            blocks,
            t_final,
            cfl,
            sigma: args.sigma.or(file.sigma).unwrap_or(preset.sigma),
            periodic,
            inflow,
            speed: args.speed.or(file.speed).unwrap_or(1.0),
            source: args.source.or(file.source).unwrap_or(2.0),
            out: args.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    /// The problem with the built-in initial data for its kind.
    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = preset(self.problem);
        spec.domain = self.domain;
        spec.sigma = self.sigma;
        spec.wave_speed = self.speed;
        spec.source_coefficient = self.source;
        spec.boundary = if self.periodic {
            Boundary::Periodic
        } else {
            match (self.inflow, &spec.boundary) {
                (Some(g), _) => Boundary::constant(g),
                (None, Boundary::Inflow(g)) => Boundary::Inflow(g.clone()),
                (None, Boundary::Periodic) => {
                    let left = spec.initial(self.domain.left());
                    Boundary::constant(left)
                }
            }
        };
        spec
    }
}

/// Smallest node count from the space default upwards that admits a
/// positive exact rule on the unit interval.
fn smallest_grid(kind: &SpaceKind) -> Result<usize> {
    let space = make_space(kind.clone(), Interval::unit())?;
    let start = kind.default_nodes();
    let end = start + 4 * space.dim() + 16;
    (start..=end)
        .find(|&n| rule_with_nodes(&space, n).is_ok())
        .ok_or(FsbpError::NoPositiveRule { start, max: end })
}

fn non_empty<T>(flags: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flags.is_empty() {
        file
    } else {
        flags
    }
}

fn preset(kind: ProblemKind) -> ProblemSpec {
    match kind {
        ProblemKind::Advection => ProblemSpec::oscillatory_advection(),
        ProblemKind::AdvectionSource => ProblemSpec::exponential_source(),
        ProblemKind::Burgers => ProblemSpec::burgers_wave(),
    }
}

fn default_t_final(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::Advection => 1.0,
        ProblemKind::AdvectionSource => 3.5,
        ProblemKind::Burgers => 0.01,
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Verify(a) => cmd_verify(&a.file),
        Command::Run(a) => RunConfig::resolve(a).and_then(|c| cmd_run(&c)),
        Command::Convergence(a) => RunConfig::resolve(a).and_then(|c| cmd_convergence(&c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(err: &FsbpError) -> i32 {
    use FsbpError::*;
    match err {
        Instability { .. } => EXIT_INSTABILITY,
        Verification(_) | Format(_) | RuleNotExact { .. } | NoPositiveRule { .. }
        | NotUnisolvent { .. } | OperatorResidual { .. } | InconsistentConstraints { .. }
        | NewtonDivergence(_) | SvdFailure | Singular(_) => EXIT_VERIFICATION,
        _ => EXIT_USAGE,
    }
}

fn cmd_build(args: BuildArgs) -> Result<i32> {
    let kind: SpaceKind = args.space.parse()?;
    let domain = match args.domain {
        Some(d) => Interval::new(d[0], d[1])?,
        None => Interval::unit(),
    };
    let space = make_space(kind, domain)?;
    let rule = match args.nodes {
        Some(n) => rule_with_nodes(&space, n)?,
        None => {
            let start = space.kind().default_nodes().max(space.dim() + 1);
            find_positive_rule(&space, start, start + 4 * space.dim() + 16)?
        }
    };
    let op = build_operator(&space, &rule)?;
    let report = verify_sbp(&op);
    if !report.passed() {
        for f in report.failures() {
            eprintln!("verification failed: {f}");
        }
        return Ok(EXIT_VERIFICATION);
    }
    match args.out {
        Some(path) => {
            write_operator_file(&op, &path)?;
            eprintln!("wrote {} ({} nodes)", path.display(), op.len());
        }
        None => println!("{}", crate::operator::to_json(&op)?),
    }
    Ok(EXIT_OK)
}

fn cmd_verify(path: &Path) -> Result<i32> {
    let op = from_json_unchecked(&fs::read_to_string(path)?)?;
    let report = verify_sbp(&op);
    let rule = verify_norm_rule(&op);
    println!("space                  {}", op.space().label());
    println!("exactness residual     {:e}", report.exactness_residual);
    println!("antisymmetry residual  {:e}", report.antisymmetry_residual);
    println!("minimum weight         {:e}", report.min_weight);
    println!("D1 residual            {:e}", report.d_one_residual);
    println!("quadrature residual    {:e}", rule.max_residual);
    let mut failures = report.failures();
    if !rule.exact() {
        failures.push(format!(
            "quadrature: weights are not exact on the derivative-of-products space (residual {:e})",
            rule.max_residual
        ));
    }
    if failures.is_empty() {
        println!("ok");
        Ok(EXIT_OK)
    } else {
        for f in failures {
            eprintln!("verification failed: {f}");
        }
        Ok(EXIT_VERIFICATION)
    }
}

/// Shortest round-trip text, switching to exponent form for very small or
/// large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn single<T: Clone>(items: &[T], what: &str) -> Result<T> {
    match items {
        [one] => Ok(one.clone()),
        _ => Err(FsbpError::InvalidArgument(format!(
            "run takes exactly one {what}"
        ))),
    }
}

fn cmd_run(cfg: &RunConfig) -> Result<i32> {
    let (kind, nodes) = single(&cfg.spaces, "--space")?;
    let blocks = single(&cfg.blocks, "--blocks value")?;
    let spec = cfg.problem_spec();
    let started = Instant::now();
    let out = run(&spec, &kind, nodes, blocks, cfg.t_final, cfg.cfl)?;
    let wallclock = started.elapsed().as_secs_f64();

    let mut diag = String::from("t,mass,energy\n");
    for r in &out.history {
        let _ = writeln!(diag, "{},{},{}", num(r.t), num(r.mass), num(r.energy));
    }

    let nodes_x = out.state.grid.nodes();
    let reference: Result<Vec<f64>> = nodes_x
        .iter()
        .map(|&x| reference_solution(&spec, x, out.state.t))
        .collect();
    let (reference, errors) = match reference {
        Ok(r) => {
            let e = error_report(&out.state, &r)?;
            (r, e)
        }
        Err(e) => {
            eprintln!("warning: no reference solution: {e}");
            let nan = ErrorReport {
                err_p: f64::NAN,
                err_2: f64::NAN,
                err_max: f64::NAN,
            };
            (vec![f64::NAN; nodes_x.len()], nan)
        }
    };
    let mut solution = String::from("x,u,u_ref,abs_err\n");
    for ((x, u), r) in nodes_x.iter().zip(&out.state.values).zip(&reference) {
        let _ = writeln!(solution, "{},{},{},{}", num(*x), num(*u), num(*r), num((u - r).abs()));
    }
    let summary = format!(
        "err_P,err_2,err_max,steps,wallclock_s\n{},{},{},{},{}\n",
        num(errors.err_p),
        num(errors.err_2),
        num(errors.err_max),
        out.steps,
        num(wallclock)
    );

    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("diagnostics.csv"), diag)?;
    fs::write(cfg.out.join("solution.csv"), solution)?;
    fs::write(cfg.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn cmd_convergence(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.problem_spec();
    let mut table = String::from("space,I,err_P,err_2,err_max,order\n");
    for (kind, nodes) in &cfg.spaces {
        for row in convergence_table(&spec, kind, *nodes, &cfg.blocks, cfg.t_final, cfg.cfl)? {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{}",
                row.space,
                row.blocks,
                num(row.errors.err_p),
                num(row.errors.err_2),
                num(row.errors.err_max),
                row.order.map(num).unwrap_or_default()
            );
        }
    }
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("convergence.csv"), &table)?;
    print!("{table}");
    Ok(EXIT_OK)
}
