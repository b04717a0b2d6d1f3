use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use casreg::harness::{self, Grid, HarnessError};
use casreg::units::format_cost;

#[derive(Parser)]
#[command(name = "casreg", version, about = "Simulate and check erasure-coded atomic register protocols")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario; writes <id>.trace.jsonl and <id>.report.json.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scheduler seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario once per seed and print the aggregate as JSON.
    Sweep {
        config: PathBuf,
        /// Half-open range A..B.
        #[arg(long)]
        seeds: String,
        /// Also write the aggregate here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the theoretical and simulated cost table as CSV.
    Table {
        /// Inline spec such as `n=4..7;f=1,2;delta=1`, or a file holding one.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the checkers on an existing trace and print the report.
    Check { trace: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run { config, out, seed } => {
            let r = harness::run_scenario(&config, &out, seed)?;
            println!(
                "{}: {} (write {}, read {}, storage {}) -> {}",
                r.scenario,
                if r.passed { "pass" } else { "FAIL" },
                format_cost(&r.ledger.write_sup),
                format_cost(&r.ledger.read_sup),
                format_cost(&r.ledger.storage_sup),
                out.join(harness::report_file_name(&r.scenario)).display()
            );
            for f in r.failures() {
                println!("  {f}");
            }
            Ok(r.passed)
        }
        Cmd::Sweep { config, seeds, out } => {
            let range = harness::parse_seeds(&seeds).ok_or_else(|| anyhow!("--seeds must look like A..B"))?;
            let cfg = harness::load_config(&config)?;
            let s = harness::sweep(&cfg, range).map_err(HarnessError::from)?;
            let text = serde_json::to_string_pretty(&s)? + "\n";
            if let Some(p) = &out {
                write_or_print(Some(p), &text)?;
            }
            print!("{text}");
            Ok(s.ok())
        }
        Cmd::Table { grid, out } => {
            let spec = match std::fs::read_to_string(&grid) {
                Ok(text) => text,
                Err(_) => grid,
            };
            let rows = harness::cost_table(&Grid::parse(&spec)?);
            write_or_print(out.as_ref(), &harness::table_csv(&rows))?;
            Ok(true)
        }
        Cmd::Check { trace } => {
            let r = harness::check_trace(&trace)?;
            print!("{}", harness::render_report(&r));
            Ok(r.passed)
        }
    }
}
