use std::fs::File;
use std::io::{self, BufRead, BufReader, IsTerminal};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use bido_core::config::PipelineConfig;
use bido_core::geometry::LandmarkFrame;
use bido_core::wire::{FrameReader, WireError};
use zeroize::Zeroizing;

use crate::exit::{fail, Class, ClassifyExt, CliResult};

/// A JSONL landmark source: a file path, or `-` for stdin.
pub fn open_frames(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let file = File::open(path)
        .with_context(|| format!("opening frames {}", path.display()))
        .input()?;
    Ok(Box::new(BufReader::new(file)))
}

/// Runs `f` over the parsed frames of `path`, stopping at the first
/// malformed line. A parse error takes precedence over `f`'s outcome.
pub fn with_frames<T>(
    path: &Path,
    f: impl FnOnce(&mut dyn Iterator<Item = LandmarkFrame>) -> T,
) -> CliResult<T> {
    let reader = open_frames(path)?;
    itertools::process_results(FrameReader::new(reader), |mut frames| f(&mut frames))
        .map_err(|e: WireError| anyhow!(e).context(format!("reading {}", path.display())))
        .input()
}

pub fn load_all_frames(path: &Path) -> CliResult<Vec<LandmarkFrame>> {
    with_frames(path, |frames| frames.collect())
}

pub fn load_config(path: Option<&PathBuf>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p)
            .with_context(|| format!("loading config {}", p.display()))
            .input(),
        None => Ok(PipelineConfig::default()),
    }
}

/// Reads the memorized secret from an environment variable, or prompts
/// without echo when none is named and a terminal is attached.
pub fn read_salt(env_var: Option<&str>) -> CliResult<Zeroizing<String>> {
    let salt = match env_var {
        Some(var) => match std::env::var(var) {
            Ok(v) => Zeroizing::new(v),
            Err(_) => {
                return fail(Class::Input, anyhow!("environment variable {var} is not set"));
            }
        },
        None if io::stdin().is_terminal() => Zeroizing::new(
            rpassword::prompt_password("salt: ")
                .context("reading salt from terminal")
                .input()?,
        ),
        None => {
            return fail(
                Class::Usage,
                anyhow!("no salt source: pass --salt-env VAR or run on a terminal"),
            );
        }
    };
    if salt.is_empty() {
        return fail(Class::Input, anyhow!("salt is empty"));
    }
    Ok(salt)
}
