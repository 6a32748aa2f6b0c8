use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brinkman::config::{ConfigError, RunConfig};
use brinkman::grid::{lp_norm, Mask, ScalarField};
use brinkman::harness::{convergence_sweep, monotonicity_violations, worker_count};
use brinkman::io::{write_atomic, write_field};
use brinkman::klevel::run_klevel;
use brinkman::limit::{interface_cells, run_limit};
use brinkman::selftest::{format_table, run_selftest};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

#[derive(Parser)]
#[command(name = "brinkman", version, about = "Brinkman tumor growth at finite k and in the incompressible limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March the finite-k system.
    Klevel { config: PathBuf },
    /// March the limit free-boundary system.
    Limit { config: PathBuf },
    /// Compare a ladder of k-runs against the limit run.
    Converge {
        config: PathBuf,
        /// Comma-separated ascending stiffness values.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<f64>>,
        /// Comma-separated comparison times.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Half-width of the band excluded around the interface.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Check the analytic identities and print a pass/fail table.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Assertion(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("output: {e}"))
    }
}

fn solver<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Solver(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Klevel { config } => cmd_klevel(&config),
        Command::Limit { config } => cmd_limit(&config),
        Command::Converge {
            config,
            ks,
            times,
            delta,
        } => cmd_converge(&config, ks, times, delta),
        Command::Selftest { seed } => cmd_selftest(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver error: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(EXIT_ASSERTION)
        }
    }
}

fn output_dir(cfg: &RunConfig, sub: &str) -> PathBuf {
    Path::new(&cfg.output.dir).join(sub)
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    write_atomic(dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(())
}

fn dump(dir: &Path, name: &str, index: usize, f: &ScalarField) -> Result<(), Failure> {
    write_field(dir.join(format!("{name}_{index:04}.blf")), f)?;
    Ok(())
}

fn cmd_klevel(path: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(path)?;
    let (kcfg, times) = cfg.klevel_config()?;
    let run = run_klevel(&kcfg, &times).map_err(solver)?;
    let dir = output_dir(&cfg, "klevel");
    echo_config(&dir, &cfg)?;
    let mut csv = String::from("index,t,k,min_p,max_p,mass_n,support_measure\n");
    for (i, s) in run.snapshots.iter().enumerate() {
        let mass = lp_norm(&s.n, 1.0, None).map_err(solver)?;
        let support = Mask::above(&s.p, 0.0).measure();
        csv.push_str(&format!(
            "{i},{},{},{:e},{:e},{:e},{:e}\n",
            s.t,
            s.k,
            s.p.min(),
            s.p.max(),
            mass,
            support
        ));
        if cfg.output.dumps {
            dump(&dir, "p", i, &s.p)?;
            dump(&dir, "n", i, &s.n)?;
            dump(&dir, "w", i, &s.w)?;
        }
    }
    write_atomic(dir.join("snapshots.csv"), csv.as_bytes())?;
    let mut speeds = String::from("t,max_speed\n");
    for (t, m) in &run.speed_history {
        speeds.push_str(&format!("{t},{m:e}\n"));
    }
    write_atomic(dir.join("speed_history.csv"), speeds.as_bytes())?;
    println!(
        "k-level run: {} steps, {} snapshots in {}",
        run.steps,
        run.snapshots.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_limit(path: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(path)?;
    let (lcfg, times) = cfg.limit_config()?;
    let states = run_limit(lcfg, &times).map_err(solver)?;
    let dir = output_dir(&cfg, "limit");
    echo_config(&dir, &cfg)?;
    let mut csv = String::from("index,t,region_measure,interface_measure,max_p,max_w\n");
    for (i, s) in states.iter().enumerate() {
        let (_, interface) = interface_cells(&s.theta);
        csv.push_str(&format!(
            "{i},{},{:e},{:e},{:e},{:e}\n",
            s.t,
            s.region().measure(),
            interface,
            s.p.max(),
            s.w.max()
        ));
        if cfg.output.dumps {
            dump(&dir, "theta", i, &s.theta)?;
            dump(&dir, "p", i, &s.p)?;
            dump(&dir, "w", i, &s.w)?;
        }
    }
    write_atomic(dir.join("snapshots.csv"), csv.as_bytes())?;
    println!("limit run: {} snapshots in {}", states.len(), dir.display());
    Ok(())
}

fn cmd_converge(
    path: &Path,
    ks: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
    delta: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(path)?;
    {
        let h = cfg.harness.as_mut().ok_or(ConfigError::Missing("harness"))?;
        if let Some(ks) = ks {
            h.ks = ks;
        }
        if let Some(times) = times {
            h.times = times;
        }
        if delta.is_some() {
            h.delta = delta;
        }
    }
    let (setup, h) = cfg.sweep_setup()?;
    if h.ks.len() < 2 {
        return Err(Failure::Config("need at least two values of k".into()));
    }
    if h.ks.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Failure::Config("k values must be ascending".into()));
    }
    if h.times.is_empty() {
        return Err(Failure::Config("need at least one comparison time".into()));
    }
    let delta = h.delta.expect("resolved by sweep_setup");
    eprintln!("running {} k-values on {} workers", h.ks.len(), worker_count());
    let report = convergence_sweep(&setup, &h.ks, &h.times, delta).map_err(solver)?;
    let dir = output_dir(&cfg, "converge");
    echo_config(&dir, &cfg)?;
    write_atomic(dir.join("report.csv"), report.to_csv().as_bytes())?;
    let summary = report.summary();
    write_atomic(dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    let violations = monotonicity_violations(&report, h.slack);
    if !violations.is_empty() {
        return Err(Failure::Assertion(violations.join("; ")));
    }
    Ok(())
}

fn cmd_selftest(seed: u64) -> Result<(), Failure> {
    let checks = run_selftest(seed);
    print!("{}", format_table(&checks));
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Assertion(format!("{failed} selftest checks failed")));
    }
    Ok(())
}
