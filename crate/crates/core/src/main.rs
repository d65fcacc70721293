use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crpnet::experiment::{emit_results, run_experiment, ExperimentConfig, ExperimentError};
use crpnet::network::{load_network, NetworkFileError, NetworkSpec};
use crpnet::planner::{solve_static_plan, verify_assumptions, StaticPlan};
use crpnet::policy::{make_plan, scale_parameters, PolicyParams};
use crpnet::scaling::{compute_sigma2, scale_events, GRID_POINTS};
use crpnet::sim::{
    monitor_good_events, read_events_csv, run_baseline_trajectory, run_dr_trajectory, write_events_csv,
    write_periods_csv, Discipline, PolicyKind,
};

#[derive(Parser)]
#[command(name = "crpnet", version, about = "Discrete review control for stochastic processing networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the static planning LP and print the policy constants.
    Plan { network: PathBuf },
    /// Check heavy traffic, complete resource pooling and basic activities.
    Check { network: PathBuf },
    /// Print the review plan for one queue-length vector.
    PolicyStep {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        l: f64,
        /// Comma-separated queue lengths.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        q: Vec<f64>,
    },
    /// Simulate one trajectory to `r^2 horizon`.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "dr")]
        policy: PolicyKind,
        #[arg(long)]
        r: u32,
        #[arg(long, default_value_t = 0.1)]
        eps2: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Directory for events.csv and periods.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Gamma and sigma^2.
    Sigma {
        #[arg(long)]
        network: PathBuf,
    },
    /// Diffusion-scale an events file.
    Scale {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        r: u32,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replication study.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Assumption(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Assumption(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<NetworkFileError> for Failure {
    fn from(e: NetworkFileError) -> Self {
        match e {
            NetworkFileError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Assumption(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e.exit_code() {
            3 => Failure::Io(e.to_string()),
            _ => Failure::Assumption(e.to_string()),
        }
    }
}

fn bad<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Assumption(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    // a closed pipe is not an error worth reporting
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn load_plan(path: &Path) -> Result<(NetworkSpec, StaticPlan), Failure> {
    let net = load_network(path)?;
    let plan = StaticPlan::build(&net).map_err(bad)?;
    Ok((net, plan))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Plan { network } => {
            let (_, plan) = load_plan(&network)?;
            print_json(&plan.report());
        }
        Command::Check { network } => {
            let net = load_network(&network)?;
            let lp = solve_static_plan(&net).map_err(bad)?;
            let report = verify_assumptions(&lp, &net);
            print_json(&report);
            if !report.all_hold() {
                return Err(Failure::Assumption(report.to_string()));
            }
        }
        Command::PolicyStep { network, l, q } => {
            let (_, plan) = load_plan(&network)?;
            let params = PolicyParams::with_length(l, &plan).map_err(bad)?;
            print_json(&make_plan(&q, &params, &plan).map_err(bad)?);
        }
        Command::Simulate { network, policy, r, eps2, horizon, seed, replication, out } => {
            let (net, plan) = load_plan(&network)?;
            let rf = r as f64;
            if r == 0 || !(horizon > 0.0) {
                return Err(bad("r and horizon must be positive"));
            }
            let params = scale_parameters(rf, eps2, &plan).map_err(bad)?;
            let end = rf * rf * horizon;
            let traj = match policy {
                PolicyKind::Dr => run_dr_trajectory(&net, &plan, &params, end, seed, replication),
                PolicyKind::Priority => run_baseline_trajectory(&net, &plan, end, seed, replication, Discipline::Priority),
                PolicyKind::LongestQueue => {
                    run_baseline_trajectory(&net, &plan, end, seed, replication, Discipline::LongestQueue)
                }
            };
            std::fs::create_dir_all(&out).map_err(io_at(&out))?;
            let events = out.join("events.csv");
            write_events_csv(&traj, &net.buffer_names, create(&events)?)
                .map_err(|e| Failure::Io(format!("{}: {e}", events.display())))?;
            let periods = out.join("periods.csv");
            let diags = monitor_good_events(&traj, &params, &plan).map_err(bad)?;
            write_periods_csv(&traj, &diags, create(&periods)?)
                .map_err(|e| Failure::Io(format!("{}: {e}", periods.display())))?;
            eprintln!(
                "{} samples, {} periods, case-2 fraction {}",
                traj.samples.len(),
                traj.periods.len(),
                traj.case2_fraction()
            );
        }
        Command::Sigma { network } => {
            let (net, plan) = load_plan(&network)?;
            let stats = compute_sigma2(&net, &plan);
            print_json(&serde_json::json!({ "sigma2": stats.sigma2, "gamma": stats.gamma }));
        }
        Command::Scale { traj, r, out } => {
            if r == 0 {
                return Err(bad("r must be positive"));
            }
            let file = File::open(&traj).map_err(io_at(&traj))?;
            let rows = read_events_csv(file).map_err(|e| Failure::Io(format!("{}: {e}", traj.display())))?;
            let Some(last) = rows.last() else {
                return Err(Failure::Io(format!("{}: no events", traj.display())));
            };
            let rf = r as f64;
            let horizon = last.t / (rf * rf);
            let grid: Vec<f64> =
                (0..GRID_POINTS).map(|k| horizon * k as f64 / (GRID_POINTS - 1) as f64).collect();
            let scaled = scale_events(&rows, rf, &grid);
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = csv::Writer::from_writer(sink);
            let m = rows[0].z.len();
            let mut header = vec!["t".to_string()];
            header.extend((0..m).map(|i| format!("Z_hat_{i}")));
            header.push("W_hat".into());
            let fail = |e: csv::Error| Failure::Io(e.to_string());
            w.write_record(&header).map_err(fail)?;
            for (t, z, wh) in scaled {
                let mut rec = vec![t.to_string()];
                rec.extend(z.iter().map(|v| v.to_string()));
                rec.push(wh.to_string());
                w.write_record(&rec).map_err(fail)?;
            }
            w.flush().map_err(|e| Failure::Io(e.to_string()))?;
        }
        Command::Experiment { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let table = run_experiment(&cfg)?;
            for f in emit_results(&table, &dir)? {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Assumption(msg) | Failure::Io(msg) => eprintln!("crpnet: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
