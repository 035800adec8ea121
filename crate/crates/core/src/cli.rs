//! Command-line front end: configure a run, execute it, write the trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{self, Instance, LabelPolicy};
use crate::engine::{CommLedger, ReduceTopology};
use crate::error::{Error, Result};
use crate::linesearch::{PelsParams, WolfeParams};
use crate::losses::{accuracy_proxy, LeastSquares, Logistic, LossModel};
use crate::numerics::SparseVector;
use crate::optimizer::{
    self, default_powell_threshold, Algorithm, LineSearchKind, OptimizerConfig, RunOutput,
    Termination,
};
use crate::report;

/// Scale of the true weight vector; `w_true . x` then has standard
/// deviation 2 for standard normal features.
const SYNTHETIC_MARGIN_SCALE: f64 = 2.0;

/// Logistic-model data: `x ~ N(0, I_m)`, `w_true ~ N(0, I_m) * 2 / sqrt(m)`,
/// `y = 1` with probability `1 / (1 + exp(-w_true . x))`.
pub fn generate_synthetic(n: usize, m: usize, seed: u64) -> Result<Vec<Instance>> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidArgument(
            "synthetic data needs n >= 1 and m >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = SYNTHETIC_MARGIN_SCALE / (m as f64).sqrt();
    let w_true: Vec<f64> = (0..m)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = x.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        let prob = 1.0 / (1.0 + (-t).exp());
        let label = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
        out.push(Instance {
            features: SparseVector::from_dense(&x)?,
            label,
        });
    }
    Ok(out)
}

/// `n=2000,m=50,seed=7`; `seed` is optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub seed: Option<u64>,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (mut n, mut m, mut seed) = (None, None, None);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {part:?}"))?;
            let parse = |v: &str| v.parse::<u64>().map_err(|e| format!("{key}: {e}"));
            match key {
                "n" => n = Some(parse(value)? as usize),
                "m" => m = Some(parse(value)? as usize),
                "seed" => seed = Some(parse(value)?),
                _ => return Err(format!("unknown synthetic key {key:?}")),
            }
        }
        Ok(SyntheticSpec {
            n: n.ok_or("--synthetic needs n=<count>")?,
            m: m.ok_or("--synthetic needs m=<dimension>")?,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Gd,
    Ncg,
    Lbfgs,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Gd => Algorithm::Gd,
            AlgorithmArg::Ncg => Algorithm::Ncg,
            AlgorithmArg::Lbfgs => Algorithm::Lbfgs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LineSearchArg {
    Wolfe,
    Pels,
}

impl From<LineSearchArg> for LineSearchKind {
    fn from(l: LineSearchArg) -> Self {
        match l {
            LineSearchArg::Wolfe => LineSearchKind::Wolfe,
            LineSearchArg::Pels => LineSearchKind::Pels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Logistic,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    /// Wall-clock seconds since the start of the run.
    Wall,
    /// Write 0 so traces are byte-reproducible.
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// LIBSVM input file.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub data: Option<PathBuf>,
    /// Generated logistic data, e.g. `n=2000,m=50,seed=7`.
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    /// Feature dimension before augmentation (inferred from the file if absent).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Seed for `--synthetic` when it does not set one.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip appending the constant feature.
    #[arg(long)]
    pub no_augment: bool,
    /// Shard count.
    #[arg(long, default_value_t = 16)]
    pub shards: usize,
    /// Tree aggregation depth.
    #[arg(long, default_value_t = 4)]
    pub tree_levels: usize,
    /// Send every shard partial straight to the driver.
    #[arg(long)]
    pub all_to_one: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Expansion degree of the polynomial line search.
    #[arg(long, default_value_t = 5)]
    pub degree: usize,
    /// Truncation threshold of the polynomial line search.
    #[arg(long, default_value_t = 1e-4)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub nu1: f64,
    #[arg(long, default_value_t = 0.9)]
    pub nu2: f64,
    /// LBFGS history length.
    #[arg(long, default_value_t = 5)]
    pub history: usize,
    /// NCG Powell restart threshold (0.2 with pels, 1.0 with wolfe when absent).
    #[arg(long)]
    pub powell_threshold: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Trace time column: `off` for `run` (reproducible traces) and `wall`
    /// for `sweep` unless given.
    #[arg(long, value_enum)]
    pub timing: Option<TimingArg>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Lbfgs)]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = LineSearchArg::Pels)]
    pub linesearch: LineSearchArg,
    /// Trace CSV path.
    #[arg(long, default_value = "trace.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Lbfgs)]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = LineSearchArg::Wolfe)]
    pub baseline: LineSearchArg,
    #[arg(long, value_enum, default_value_t = LineSearchArg::Pels)]
    pub candidate: LineSearchArg,
    /// Speedup report CSV path (standard output when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write both traces to `<prefix>_<algorithm>_<linesearch>.csv`.
    #[arg(long)]
    pub trace_prefix: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Train one configuration and write its trace.
    Run(RunArgs),
    /// Compare two line searches and report iterations to reach each
    /// accuracy level.
    Sweep(SweepArgs),
}

#[derive(Debug, Parser)]
#[command(
    name = "pels",
    version,
    about = "Line-search benchmarks for GD/NCG/LBFGS on sharded data",
    args_conflicts_with_subcommands = true,
    subcommand_negates_reqs = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File { path: PathBuf, dim: Option<usize> },
    Synthetic { n: usize, m: usize, seed: u64 },
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub augment: bool,
    pub loss: LossArg,
    pub lambda: f64,
    pub shards: usize,
    pub topology: ReduceTopology,
    pub optimizer: OptimizerConfig,
}

impl RunConfig {
    pub fn from_args(
        data: &DataArgs,
        solver: &SolverArgs,
        algorithm: Algorithm,
        linesearch: LineSearchKind,
    ) -> Result<Self> {
        Self::from_args_with_timing(data, solver, algorithm, linesearch, TimingArg::Off)
    }

    /// `default_timing` applies when `--timing` was not given.
    pub fn from_args_with_timing(
        data: &DataArgs,
        solver: &SolverArgs,
        algorithm: Algorithm,
        linesearch: LineSearchKind,
        default_timing: TimingArg,
    ) -> Result<Self> {
        let source = match (&data.data, data.synthetic) {
            (Some(path), None) => DataSource::File {
                path: path.clone(),
                dim: data.dim,
            },
            (None, Some(spec)) => DataSource::Synthetic {
                n: spec.n,
                m: spec.m,
                seed: spec.seed.unwrap_or(data.seed),
            },
            _ => {
                return Err(Error::InvalidArgument(
                    "exactly one of --data or --synthetic is required".into(),
                ))
            }
        };
        if data.shards < 1 {
            return Err(Error::InvalidArgument("--shards must be >= 1".into()));
        }
        if !(solver.lambda >= 0.0) {
            return Err(Error::InvalidArgument("--lambda must be >= 0".into()));
        }
        let topology = if data.all_to_one {
            ReduceTopology::AllToOne
        } else {
            ReduceTopology::tree(data.tree_levels)?
        };
        let optimizer = OptimizerConfig {
            algorithm,
            linesearch,
            history: solver.history,
            powell_threshold: solver
                .powell_threshold
                .unwrap_or_else(|| default_powell_threshold(linesearch)),
            grad_tol: solver.grad_tol,
            max_iters: solver.max_iters,
            wolfe: WolfeParams {
                nu1: solver.nu1,
                nu2: solver.nu2,
                ..WolfeParams::default()
            },
            pels: PelsParams {
                theta: solver.theta,
                degree: solver.degree,
                ..PelsParams::default()
            },
            record_time: solver.timing.unwrap_or(default_timing) == TimingArg::Wall,
        };
        optimizer.validate()?;
        Ok(Self {
            source,
            augment: !data.no_augment,
            loss: solver.loss,
            lambda: solver.lambda,
            shards: data.shards,
            topology,
            optimizer,
        })
    }

    pub fn load_data(&self) -> Result<dataset::ShardedDataset> {
        let (instances, dim) = match &self.source {
            DataSource::File { path, dim } => {
                let policy = match self.loss {
                    LossArg::Logistic => LabelPolicy::Binary,
                    LossArg::LeastSquares => LabelPolicy::Raw,
                };
                let parsed = dataset::read_libsvm_file(path, policy, *dim)?;
                (parsed.instances, parsed.dim)
            }
            DataSource::Synthetic { n, m, seed } => (generate_synthetic(*n, *m, *seed)?, *m),
        };
        if instances.is_empty() {
            return Err(Error::InvalidArgument("dataset has no instances".into()));
        }
        let instances = if self.augment {
            dataset::augment(instances, dim)?
        } else {
            instances
        };
        dataset::shard(instances, self.shards)
    }

    pub fn loss_model(&self) -> Result<Box<dyn LossModel>> {
        Ok(match self.loss {
            LossArg::Logistic => Box::new(Logistic::new(self.lambda)?),
            LossArg::LeastSquares => Box::new(LeastSquares::new(self.lambda)?),
        })
    }

    pub fn execute(&self) -> Result<(RunOutput, CommLedger)> {
        let data = self.load_data()?;
        self.execute_on(&data)
    }

    pub fn execute_on(&self, data: &dataset::ShardedDataset) -> Result<(RunOutput, CommLedger)> {
        let loss = self.loss_model()?;
        optimizer::train(&self.optimizer, loss.as_ref(), data, self.topology)
    }
}

pub fn summary_line(out: &RunOutput) -> String {
    let last = out.final_record();
    format!(
        "final_loss={} final_grad_norm={} iters={} accuracy_proxy={}",
        last.loss,
        last.grad_norm,
        last.k,
        accuracy_proxy(last.loss)
    )
}

pub fn exit_code(termination: Termination) -> i32 {
    match termination {
        Termination::Converged => 0,
        Termination::MaxIters | Termination::Stalled => 2,
    }
}

fn write_trace_file(path: &std::path::Path, out: &RunOutput) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    report::write_trace_csv(file, &out.trace)
}

fn run_command(args: &RunArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::from_args(
        &args.data,
        &args.solver,
        args.algorithm.into(),
        args.linesearch.into(),
    )?;
    let (out, _) = cfg.execute()?;
    write_trace_file(&args.output, &out)?;
    writeln!(stdout, "{}", summary_line(&out))?;
    Ok(exit_code(out.termination))
}

fn sweep_command(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    let algorithm: Algorithm = args.algorithm.into();
    let config = |ls: LineSearchArg| {
        RunConfig::from_args_with_timing(
            &args.data,
            &args.solver,
            algorithm,
            ls.into(),
            TimingArg::Wall,
        )
    };
    let base_cfg = config(args.baseline)?;
    let cand_cfg = config(args.candidate)?;
    let data = base_cfg.load_data()?;
    let (base, _) = base_cfg.execute_on(&data)?;
    let (cand, _) = cand_cfg.execute_on(&data)?;

    if let Some(prefix) = &args.trace_prefix {
        for (cfg, out) in [(&base_cfg, &base), (&cand_cfg, &cand)] {
            let name = format!(
                "{}_{}_{}.csv",
                prefix.display(),
                cfg.optimizer.algorithm.name(),
                cfg.optimizer.linesearch.name()
            );
            write_trace_file(std::path::Path::new(&name), out)?;
        }
    }

    let rows = report::speedup_report(&base.trace, &cand.trace);
    match &args.output {
        Some(path) => report::write_speedup_csv(BufWriter::new(File::create(path)?), &rows)?,
        None => report::write_speedup_csv(&mut *stdout, &rows)?,
    }
    for (cfg, out) in [(&base_cfg, &base), (&cand_cfg, &cand)] {
        writeln!(
            stdout,
            "{}+{}: {}",
            cfg.optimizer.algorithm.name(),
            cfg.optimizer.linesearch.name(),
            summary_line(out)
        )?;
    }
    Ok(exit_code(base.termination).max(exit_code(cand.termination)))
}

/// Parses `argv` (program name first) and runs. Exit codes: 0 converged,
/// 2 iteration budget reached, 1 error.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Some(Command::Run(args)) => run_command(args, stdout),
        Some(Command::Sweep(args)) => sweep_command(args, stdout),
        None => run_command(&cli.run, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_parsing() {
        assert_eq!(
            "n=2000,m=50,seed=7".parse::<SyntheticSpec>().unwrap(),
            SyntheticSpec {
                n: 2000,
                m: 50,
                seed: Some(7)
            }
        );
        assert_eq!("m=3, n=4".parse::<SyntheticSpec>().unwrap().seed, None);
        assert!("n=4".parse::<SyntheticSpec>().is_err());
        assert!("n=4,m=2,k=1".parse::<SyntheticSpec>().is_err());
        assert!("n=x,m=2".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn synthetic_is_deterministic_per_seed() {
        let a = generate_synthetic(100, 5, 3).unwrap();
        let b = generate_synthetic(100, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(100, 5, 4).unwrap();
        let la: Vec<f64> = a.iter().map(|i| i.label).collect();
        let lc: Vec<f64> = c.iter().map(|i| i.label).collect();
        assert_ne!(la, lc);
        assert!(generate_synthetic(0, 5, 1).is_err());
    }

    #[test]
    fn synthetic_label_balance_over_seed_sweep() {
        for seed in 0..25 {
            let d = generate_synthetic(2000, 50, seed).unwrap();
            let pos = d.iter().filter(|i| i.label == 1.0).count() as f64 / d.len() as f64;
            assert!((0.2..=0.8).contains(&pos), "seed {seed}: {pos}");
        }
    }

    #[test]
    fn accepts_table_style_lambda() {
        let cli = Cli::try_parse_from([
            "pels",
            "--synthetic",
            "n=10,m=2",
            "--algorithm",
            "ncg",
            "--linesearch",
            "wolfe",
            "--lambda",
            "1e-7",
        ])
        .unwrap();
        let args = cli.run;
        let cfg = RunConfig::from_args(
            &args.data,
            &args.solver,
            args.algorithm.into(),
            args.linesearch.into(),
        )
        .unwrap();
        assert_eq!(cfg.lambda, 1e-7);
        assert_eq!(cfg.optimizer.powell_threshold, 1.0);
        assert_eq!(cfg.topology, ReduceTopology::Tree { levels: 4 });
        assert!(!cfg.optimizer.record_time);
    }

    #[test]
    fn subcommands_parse() {
        let cli = Cli::try_parse_from(["pels", "sweep", "--synthetic", "n=10,m=2"]).unwrap();
        assert!(matches!(cli.command, Some(Command::Sweep(_))));
        let cli =
            Cli::try_parse_from(["pels", "run", "--data", "x.svm", "--algorithm", "gd"]).unwrap();
        match cli.command {
            Some(Command::Run(a)) => assert_eq!(a.algorithm, AlgorithmArg::Gd),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["pels"]).is_err());
        assert!(Cli::try_parse_from(["pels", "--data", "a", "--synthetic", "n=1,m=1"]).is_err());
    }

    #[test]
    fn unknown_flag_exits_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["pels", "--bogus"], &mut out, &mut err), 1);
        assert_eq!(main_with(["pels", "--help"], &mut out, &mut err), 0);
    }

    #[test]
    fn unreadable_file_exits_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with(
            [
                "pels",
                "--data",
                "/nonexistent/file.svm",
                "--output",
                "/dev/null",
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 1);
        assert!(String::from_utf8(err).unwrap().starts_with("error:"));
    }

    #[test]
    fn bad_numeric_config_exits_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with(
            [
                "pels",
                "--synthetic",
                "n=10,m=2",
                "--degree",
                "1",
                "--output",
                "/dev/null",
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 1);
        let code = main_with(
            [
                "pels",
                "--synthetic",
                "n=10,m=2",
                "--lambda",
                "-1",
                "--output",
                "/dev/null",
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 1);
    }
}
