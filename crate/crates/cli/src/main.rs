use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colorsort_cli::batch::{self, RunArgs};
use colorsort_cli::exit::{code, Failure};
use colorsort_cli::serve::{self, ServeConfig};
use colorsort_core::{Scenario, Session};

#[derive(Parser)]
#[command(
    name = "colorsort",
    version,
    about = "Color sorting workcell simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless and write its trace.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulated duration, in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Trace output path, or - for stdout.
        #[arg(short, long, default_value = "trace.jsonl")]
        out: PathBuf,
    },
    /// Report the first divergence between two traces.
    Compare {
        left: PathBuf,
        right: PathBuf,
        /// Compare traces of the same scenario under different seeds.
        #[arg(long)]
        allow_seed_mismatch: bool,
    },
    /// Serve a live session over HTTP.
    Serve {
        /// Scenario to load; an idle, empty cell if omitted.
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Simulated seconds per wall second; 0 for manual stepping.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stream messages per second.
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::from(code::OK),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            duration,
            out,
        } => {
            let args = RunArgs {
                scenario,
                seed,
                duration_s: duration,
                out,
            };
            let report = batch::run(&args)?;
            eprintln!(
                "{} events written to {}",
                report.event_count,
                args.out.display()
            );
            if args.out.as_os_str() != "-" {
                let text =
                    serde_json::to_string_pretty(&report.metrics).expect("metrics serialize");
                // a closed pipe is not worth a panic
                let _ = writeln!(std::io::stdout(), "{text}");
            }
            Ok(())
        }
        Cmd::Compare {
            left,
            right,
            allow_seed_mismatch,
        } => {
            let diff = batch::compare(&left, &right, allow_seed_mismatch)?;
            match diff.divergence {
                None => {
                    println!("traces are identical");
                    Ok(())
                }
                Some(d) => {
                    let (t_us, seq) = d.at();
                    println!(
                        "first divergence at event {} (t_us={t_us}, seq={seq})",
                        d.index
                    );
                    let show = |e: &Option<colorsort_core::SimEvent>| match e {
                        Some(e) => serde_json::to_string(e).expect("event serializes"),
                        None => "<end of trace>".to_string(),
                    };
                    println!("< {}", show(&d.left));
                    println!("> {}", show(&d.right));
                    Err(Failure::Diverged)
                }
            }
        }
        Cmd::Serve {
            scenario,
            bind,
            port,
            speed,
            rate,
        } => {
            let scenario = match scenario {
                Some(p) => batch::load_scenario(&p)?,
                None => {
                    let mut s = Scenario::new(3600.0);
                    s.auto_start = false;
                    s
                }
            };
            if !(speed >= 0.0 && speed.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
                return Err(Failure::Invalid(
                    "--speed must be >= 0 and --rate > 0".to_string(),
                ));
            }
            let session = Session::new(scenario)?;
            let config = ServeConfig {
                speed,
                rate_hz: rate,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Service(e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .map_err(|e| Failure::Service(format!("cannot bind {bind}:{port}: {e}")))?;
                let addr = listener
                    .local_addr()
                    .map_err(|e| Failure::Service(e.to_string()))?;
                println!("listening on http://{addr}");
                serve::serve(listener, session, config)
                    .await
                    .map_err(|e| Failure::Service(e.to_string()))
            })
        }
    }
}
