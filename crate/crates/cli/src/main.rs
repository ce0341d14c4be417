// Copyright 2026 The mosco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! `mosco` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! non-convergence (outputs are still written where possible).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mosco::{Error, Execution};

use commands::{Ctx, Status};

#[derive(Parser)]
#[command(name = "mosco", version, about = "Convex M-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw a dataset from the regression model.
    Simulate,
    /// Fit the penalized L1 estimator to a dataset.
    Fit,
    /// Resolvent and graph-metric diagnostics.
    Mosco,
    /// Monte Carlo for the normal limit of the estimator.
    Lan,
    /// Monte Carlo for the likelihood-ratio statistic.
    Lr,
    /// Generalized-Hessian estimate from a smoothed subgradient.
    Hessian,
}

fn numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::Convergence { .. }
            | Error::SearchBoundary { .. }
            | Error::Instability(_)
            | Error::FitFailed { .. }
            | Error::TooManyFailures { .. }
    )
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let config = cli.config.ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let exec = match cli.threads {
        Some(0) => anyhow::bail!("--threads must be positive"),
        Some(1) => Execution::Sequential,
        Some(t) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
            let _ = t;
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let ctx = Ctx { config, out: cli.out, seed: cli.seed, quiet: cli.quiet, exec };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Fit => commands::fit_cmd(&ctx),
        Command::Mosco => commands::mosco(&ctx),
        Command::Lan => commands::lan(&ctx),
        Command::Lr => commands::lr(&ctx),
        Command::Hessian => commands::hessian(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::NonConvergence) => {
            eprintln!("warning: numerical non-convergence; outputs are flagged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let num = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(numerical));
            ExitCode::from(if num { 2 } else { 1 })
        }
    }
}
