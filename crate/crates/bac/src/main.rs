use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bac::config::{OpponentSpec, RunConfig};
use bac::error::{HarnessError, EXIT_CONFIG};
use bac::{csvlog, evaluate, plot, replay, selftest, snapshot, train};

#[derive(Parser)]
#[command(name = "bac", version, about = "Actor-critic training with terminal prediction and planner imitation on mini-Pommerman")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from a key=value config file.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value`, applied after the file. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Greedy play of a checkpoint against an opponent.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "static")]
        opponent: String,
        #[arg(long, default_value_t = 100)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Board size to check the checkpoint against.
        #[arg(long)]
        board_size: Option<usize>,
    },
    /// Learning curves from one or more episode CSVs.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
        /// Moving-average window; a tenth of the longest run by default.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Worker ids left out of the curves (demonstrators). Repeatable.
        #[arg(long = "exclude-worker")]
        exclude: Vec<usize>,
    },
    /// Step a snapshot through an action file, printing each tick.
    Replay {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        actions: PathBuf,
    },
    /// Quick oracle and invariant suites.
    Selftest,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Train { config, overrides } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            cfg.apply_overrides(&overrides)?;
            let cap = train::threads_cap_from_env()?;
            let out = train::train(&cfg, cap)?;
            println!("run directory {}", out.dir.display());
            print!("{}", out.summary);
        }
        Cmd::Evaluate { checkpoint, opponent, episodes, seed, board_size } => {
            let spec: OpponentSpec =
                opponent.parse().map_err(|reason| bac::config::ConfigError::Value { key: "opponent".into(), value: opponent.clone(), reason })?;
            let s = evaluate::evaluate(&checkpoint, &spec, episodes, seed, board_size)?;
            print!("{s}");
        }
        Cmd::Plot { csv, window, out, exclude } => {
            let mut runs = Vec::new();
            for p in &csv {
                runs.push((p.display().to_string(), csvlog::read_file(p)?));
            }
            let longest = runs.iter().map(|(_, r)| plot::curve_rows(r, &exclude).len()).max().unwrap_or(0);
            let window = window.unwrap_or_else(|| plot::default_window(longest));
            if window == 0 {
                return Err(bac::config::ConfigError::Invalid("window must be positive".into()).into());
            }
            let series: Vec<plot::Series> =
                runs.iter().map(|(name, rows)| plot::Series::new(name.clone(), &plot::curve_rows(rows, &exclude), window)).collect();
            std::fs::write(&out, plot::render_svg(&series, window)).map_err(HarnessError::io(out.display().to_string()))?;
            for s in &series {
                println!(
                    "{}: {} episodes, final moving average {}",
                    s.label,
                    s.rewards.len(),
                    s.average.last().map_or("n/a".into(), |v| format!("{:.4}", v.1))
                );
            }
        }
        Cmd::Replay { snapshot: snap, actions } => {
            let state = snapshot::load(&snap)?;
            let text = std::fs::read_to_string(&actions).map_err(HarnessError::io(actions.display().to_string()))?;
            let result = replay::replay(state, &replay::parse_actions(&text)?)?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            replay::print(&result, &mut lock).map_err(HarnessError::io("stdout"))?;
            lock.flush().map_err(HarnessError::io("stdout"))?;
        }
        Cmd::Selftest => {
            let dir = std::env::temp_dir().join(format!("bac-selftest-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(HarnessError::io(dir.display().to_string()))?;
            let results = selftest::run(&dir);
            let _ = std::fs::remove_dir_all(&dir);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(HarnessError::Runtime(format!("{failed} suites failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
