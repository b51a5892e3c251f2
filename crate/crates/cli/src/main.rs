use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splitlog::harness::{emit_results, run_experiment, Algo, ExperimentSpec, OutputFormat};
use splitlog::{EnvironmentInstance, Error, ProblemConfig, Regime, Result};

#[derive(Parser)]
#[command(name = "splitlog", version, about = "Logistic bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm over a list of seeds and write the aggregate.
    Run(RunArgs),
    /// Export or verify environment instance files.
    #[command(subcommand)]
    Instance(InstanceCommand),
}

#[derive(Subcommand)]
enum InstanceCommand {
    /// Generate an instance and write it as JSON.
    Export {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        axis_aligned: bool,
    },
    /// Regenerate an exported instance and check its hash.
    Verify { path: PathBuf },
}

#[derive(Args, Default)]
struct ProblemArgs {
    #[arg(long = "d")]
    dim: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long = "K")]
    arms: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "B")]
    radius: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    regime: Option<String>,
}

impl ProblemArgs {
    fn apply(&self, p: &mut ProblemConfig) {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { p.$field = v; })* };
        }
        set!(dim, horizon, arms, kappa, lambda, radius, delta);
    }

    fn regime(&self) -> Result<Option<Regime>> {
        self.regime.as_deref().map(str::parse).transpose()
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated seeds and half-open ranges, e.g. `0..10` or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Fail with exit status 2 if any deterministic invariant is violated.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    fit_steps: Option<usize>,
    #[arg(long)]
    fit_lr: Option<f64>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list {text:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(seeds)
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(algo) = &args.algo {
        spec.algo = algo.parse::<Algo>()?;
    }
    args.problem.apply(&mut spec.problem);
    if let Some(regime) = args.problem.regime()? {
        spec.regime = regime;
    }
    if let Some(seeds) = &args.seeds {
        spec.seeds = parse_seeds(seeds)?;
    }
    if let Some(out) = &args.out {
        spec.output = Some(out.clone());
    }
    if let Some(format) = &args.format {
        spec.format = format.parse::<OutputFormat>()?;
    }
    spec.audit |= args.audit;
    if let Some(steps) = args.fit_steps {
        spec.fit.steps = steps;
    }
    if let Some(lr) = args.fit_lr {
        spec.fit.learning_rate = lr;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &RunArgs) -> Result<()> {
    let spec = build_spec(args)?;
    let result = run_experiment(&spec)?;
    let last = result.regret_mean.len() - 1;
    println!(
        "{} regime={} d={} T={} seeds={} R_T={:.6} ± {:.6}",
        spec.algo,
        spec.regime,
        spec.problem.dim,
        spec.problem.horizon,
        spec.seeds.len(),
        result.regret_mean[last],
        result.regret_std[last],
    );
    if let Some(path) = &spec.output {
        emit_results(&result, path, spec.format)?;
    }
    Ok(())
}

fn instance(cmd: &InstanceCommand) -> Result<()> {
    match cmd {
        InstanceCommand::Export {
            problem,
            seed,
            out,
            axis_aligned,
        } => {
            let mut p = ProblemConfig::default();
            problem.apply(&mut p);
            let regime = problem.regime()?.unwrap_or(Regime::Middle);
            let inst = EnvironmentInstance::generate_with(&p, regime, *seed, *axis_aligned)?;
            inst.write_json(out)?;
            println!("{}", inst.content_hash());
        }
        InstanceCommand::Verify { path } => {
            let inst = EnvironmentInstance::read_json(path)?;
            println!("ok {}", inst.content_hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Instance(cmd) => instance(cmd),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 1,9").unwrap(), vec![4, 1, 9]);
        assert_eq!(parse_seeds("7,7").unwrap(), vec![7, 7]);
        assert!(parse_seeds("a").is_err());
    }
}
