use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use bido_core::analysis::{
    bin_frequencies, binding_metrics, group_by_subject, split_attempts, EntropyReport,
};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use crate::exit::{fail, Class, ClassifyExt, CliResult};
use crate::input::{load_all_frames, load_config};

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-coordinate min-entropy and the joint lower bound.
    Entropy(EntropyArgs),
    /// Match rate, C-FAR and C-FRR over enrollment and authentication sets.
    Binding(BindingArgs),
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Dataset JSONL; each subject's first valid frame is its representative.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Args)]
pub struct BindingArgs {
    /// Enrollment frames, grouped by subject.
    #[arg(long, value_name = "PATH")]
    enroll: PathBuf,
    /// Authentication frames; each subject's frames are split into
    /// `--attempts` equal contiguous attempts.
    #[arg(long, value_name = "PATH")]
    auth: PathBuf,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    attempts: usize,
    /// JSON object mapping subject id to salt. Without it each subject's
    /// salt is derived from its id.
    #[arg(long, value_name = "PATH")]
    salts: Option<PathBuf>,
    /// Other subjects tried against each victim (default: all).
    #[arg(long, value_name = "K")]
    impostors_per_victim: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn emit<T: Serialize>(format: Format, report: &T, table: impl FnOnce() -> String) {
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serializes")
        ),
        Format::Table => print!("{}", table()),
    }
}

pub fn run(cmd: &AnalyzeCommand) -> CliResult<()> {
    match cmd {
        AnalyzeCommand::Entropy(args) => entropy(args),
        AnalyzeCommand::Binding(args) => binding(args),
    }
}

fn entropy(args: &EntropyArgs) -> CliResult<()> {
    let config = load_config(args.config.as_ref())?;
    let frames = load_all_frames(&args.dataset)?;
    let hists = bin_frequencies(frames, &config);
    let report = EntropyReport::from_histograms(&hists, config.q)
        .context("no subject in the dataset has a valid frame")
        .input()?;
    emit(args.format, &report, || {
        report.render_table(config.prominent_indices.indices())
    });
    Ok(())
}

/// Salt used for a subject when no salts file is given.
pub fn default_salt(subject_id: &str) -> String {
    format!("{subject_id}:salt")
}

fn binding(args: &BindingArgs) -> CliResult<()> {
    if args.attempts == 0 {
        return fail(Class::Usage, anyhow!("--attempts must be positive"));
    }
    let config = load_config(args.config.as_ref())?;
    let salt_map: Option<HashMap<String, String>> = match &args.salts {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .input()?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))
                    .input()?,
            )
        }
        None => None,
    };

    let enroll_groups = group_by_subject(load_all_frames(&args.enroll)?);
    let mut auth_groups: HashMap<String, Vec<_>> =
        group_by_subject(load_all_frames(&args.auth)?).into_iter().collect();

    let mut enroll_streams = Vec::with_capacity(enroll_groups.len());
    let mut auth_streams = Vec::with_capacity(enroll_groups.len());
    let mut salts = Vec::with_capacity(enroll_groups.len());
    for (subject, frames) in enroll_groups {
        let Some(auth) = auth_groups.remove(&subject) else {
            return fail(Class::Input, anyhow!("subject {subject} has no authentication frames"));
        };
        let attempts = split_attempts(auth, args.attempts);
        if attempts.len() != args.attempts {
            return fail(
                Class::Input,
                anyhow!("subject {subject} has fewer than {} authentication frames", args.attempts),
            );
        }
        let salt = match &salt_map {
            Some(map) => match map.get(&subject) {
                Some(s) => s.clone(),
                None => return fail(Class::Input, anyhow!("no salt for subject {subject}")),
            },
            None => default_salt(&subject),
        };
        enroll_streams.push(frames);
        auth_streams.push(attempts);
        salts.push(salt);
    }

    let metrics = binding_metrics(
        &enroll_streams,
        &auth_streams,
        &salts,
        &config,
        args.impostors_per_victim,
    )
    .input()?;
    emit(args.format, &metrics, || metrics.render_table());
    Ok(())
}
