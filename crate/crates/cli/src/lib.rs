//! Command-line front end: one subcommand per pipeline stage, each driven
//! by a TOML run configuration.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod inputs;

use args::{Cli, Command};
use config::RunConfig;
use error::{CliError, Result};

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(CliError::Pool)?;
    let load = |c: &args::Common| RunConfig::load(c.config.as_deref());
    match &cli.command {
        Command::GenData { common, out } => commands::gen_data(&load(common)?, out),
        Command::Train { common, data, out } => commands::train(&load(common)?, data.data.as_deref(), out),
        Command::TrainExplainer {
            common,
            data,
            model,
            out,
        } => commands::train_explainer(&load(common)?, data.data.as_deref(), model.as_deref(), out),
        Command::Attribute {
            common,
            data,
            model,
            method,
            explainer,
            images,
            out,
        } => commands::attribute(
            &load(common)?,
            &pool,
            data.data.as_deref(),
            model.as_deref(),
            method.as_deref(),
            explainer.as_deref(),
            images,
            out,
        ),
        Command::Postprocess { common, attrs, gt, out } => {
            commands::postprocess(&load(common)?, &pool, attrs, gt.as_deref(), out)
        }
        Command::Severity {
            common,
            masks,
            calibration,
            gt,
            out,
        } => commands::severity(&load(common)?, masks, *calibration, gt.as_deref(), out),
        Command::Growth {
            common,
            data,
            model,
            method,
            explainer,
            n,
            out,
        } => commands::growth(
            &load(common)?,
            data.data.as_deref(),
            model.as_deref(),
            method.as_deref(),
            explainer.as_deref(),
            *n,
            out,
        ),
        Command::Benchmark {
            common,
            data,
            model,
            explainer,
            out,
        } => commands::benchmark(
            &load(common)?,
            &pool,
            data.data.as_deref(),
            model.as_deref(),
            explainer.as_deref(),
            out,
        ),
    }
}
