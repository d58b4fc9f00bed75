use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qndsim::expcli::{load_config, run, RunOptions};

#[derive(Parser)]
#[command(name = "qndsim", about = "Squeezing and QND measurement simulator for two-cavity optomechanics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenarios of a config and write artifacts to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Only run the scenario with this label or name.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Parse a config and print the physical validity report.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the toolkit version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Version => {
            println!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
            0
        }
        Cmd::Validate { config } => match load_config(&config) {
            Ok(c) => {
                print!("{}", c.report);
                println!("config digest: {}", c.digest);
                if c.report.passed() {
                    0
                } else {
                    eprintln!("error: physical validity checks failed");
                    2
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Cmd::Run { config, out, seed, scenario } => {
            let result = load_config(&config).and_then(|c| {
                for f in c.report.failures() {
                    eprintln!("warning: validity check {} failed (value {:.4e}, threshold {:.4e})", f.name, f.value, f.threshold);
                }
                run(&c, &out, &RunOptions { seed, scenario })
            });
            match result {
                Ok(m) => {
                    for s in &m.scenarios {
                        let failed = s.points.iter().filter(|p| !p.ok).count();
                        println!("{:<24} {} ({} points, {} failed, {:.2} s)", s.label, if s.ok { "ok" } else { "FAILED" }, s.points.len(), failed, s.seconds);
                        for msg in s.error.iter().chain(s.points.iter().filter_map(|p| p.error.as_ref())) {
                            eprintln!("error: {msg}");
                        }
                    }
                    println!("manifest: {}", out.join(qndsim::expcli::scenario::MANIFEST_FILE).display());
                    m.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
