use std::path::PathBuf;
use std::process::ExitCode;

use brownlab::lab::{now_unix, run_suite_on, LabConfig};
use brownlab::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CHECKS_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Brownian occupation and intersection laboratory.
#[derive(Parser, Debug)]
#[command(name = "brownlab", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration with one table per suite.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for records.jsonl, tables and fields.
    #[arg(long, global = true, default_value = "brownlab-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicas and chains.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `section.key=value`, applied after the config file; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the Gagliardo-Nirenberg extremal.
    GnSolve {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// kappa, Theta and rho with residuals against the oracles.
    Constants {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        q: Option<f64>,
        /// Repeatable.
        #[arg(long)]
        gamma: Vec<f64>,
    },
    /// Plain Monte Carlo of the mollified intersection functionals.
    Simulate {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Gibbs-tilted path sampler and comparison with the tilted optimizer.
    Gibbs {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Reweighted conditional estimate from the tilted chain.
    Conditional {
        #[arg(long)]
        level: Option<f64>,
    },
    /// Heat-kernel inequality sweeps and Riesz-moment slopes.
    VerifyEstimates,
    /// Exact Dirichlet integral against simplex Monte Carlo.
    VerifyDirichlet {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Brownian scaling identities for the intersection functionals.
    VerifyScaling {
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Smoothing-error moments along decreasing eps.
    VerifyMoments {
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Metric axioms, profile-sequence battery and marginal additivity.
    MetricSuite {
        #[arg(long)]
        triples: Option<usize>,
    },
}

impl Command {
    fn suite(&self) -> &'static str {
        match self {
            Command::GnSolve { .. } => "gn-solve",
            Command::Constants { .. } => "constants",
            Command::Simulate { .. } => "simulate",
            Command::Gibbs { .. } => "gibbs",
            Command::Conditional { .. } => "conditional",
            Command::VerifyEstimates => "verify-estimates",
            Command::VerifyDirichlet { .. } => "verify-dirichlet",
            Command::VerifyScaling { .. } => "verify-scaling",
            Command::VerifyMoments { .. } => "verify-moments",
            Command::MetricSuite { .. } => "metric-suite",
        }
    }

    /// Subcommand flags as `section.key=value` overrides.
    fn flag_overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut put = |section: &str, key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{section}.{key}={v}"));
            }
        };
        // Debug formatting keeps floats as TOML floats ("1.0", not "1")
        let f = |v: &Option<f64>| v.map(|x| format!("{x:?}"));
        let n = |v: &Option<usize>| v.map(|x| x.to_string());
        match self {
            Command::GnSolve { d, q } => {
                put("gn", "d", n(d));
                put("gn", "q", f(q));
            }
            Command::Constants { d, q, gamma } => {
                put("constants", "d", n(d));
                put("constants", "q", f(q));
                put("constants", "gammas", (!gamma.is_empty()).then(|| format!("{gamma:?}")));
            }
            Command::Simulate { d, t, p, replicas } => {
                put("simulate", "d", n(d));
                put("simulate", "t", f(t));
                put("simulate", "p", n(p));
                put("simulate", "replicas", n(replicas));
            }
            Command::Gibbs { t, gamma, samples, chains } => {
                put("gibbs", "t", f(t));
                put("gibbs", "gamma", f(gamma));
                put("gibbs", "samples", n(samples));
                put("gibbs", "chains", n(chains));
            }
            Command::Conditional { level } => put("conditional", "level", f(level)),
            Command::VerifyEstimates => {}
            Command::VerifyDirichlet { m, t, cases, samples } => {
                put("dirichlet", "m", n(m));
                put("dirichlet", "t", f(t));
                put("dirichlet", "cases", n(cases));
                put("dirichlet", "samples", n(samples));
            }
            Command::VerifyScaling { replicas } => put("scaling", "replicas", n(replicas)),
            Command::VerifyMoments { replicas } => put("moments", "replicas", n(replicas)),
            Command::MetricSuite { triples } => put("metric", "triples", n(triples)),
        }
        out
    }
}

fn build_config(cli: &Cli) -> Result<LabConfig, Error> {
    let mut cfg = match &cli.global.config {
        Some(path) => LabConfig::load(path)?,
        None => LabConfig::default(),
    };
    for o in &cli.global.overrides {
        cfg.apply_override(o)?;
    }
    for o in cli.command.flag_overrides() {
        cfg.apply_override(&o)?;
    }
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let cfg = build_config(cli)?;
    let suite = cli.command.suite();
    let mut output = run_suite_on(suite, &cfg, cli.global.workers)?;
    let files = output.write_to(&cli.global.out, now_unix())?;
    for r in &output.records {
        for line in r.summary_lines() {
            println!("{line}");
        }
    }
    let pass = output.pass();
    println!(
        "{suite}: {} ({} records, {} files in {})",
        if pass { "PASS" } else { "FAIL" },
        output.records.len(),
        files.len(),
        cli.global.out.display()
    );
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECKS_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
