use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::{Command, Format, Global, RunConfig, UsageError};

pub fn require_out(global: &Global) -> Result<&Path> {
    global
        .out
        .as_deref()
        .ok_or_else(|| UsageError("--out is required for this command".into()).into())
}

pub fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(UsageError(format!("input {} does not exist", path.display())).into());
    }
    Ok(())
}

pub fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_config(dir: &Path, global: &Global, command: &Command) -> Result<()> {
    let config = RunConfig {
        seed: global.seed,
        strict: global.strict,
        format: global.format,
        command: command.clone(),
    };
    write(dir, "config.json", &(serde_json::to_string_pretty(&config)? + "\n"))?;
    Ok(())
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Writes a table as `<stem>.csv` or `<stem>.json` under `--out`, or prints
/// it when there is no output directory.
pub fn emit<T: Serialize + ?Sized>(global: &Global, stem: &str, csv: &str, rows: &T) -> Result<()> {
    let (ext, body) = match global.format {
        Format::Csv => ("csv", csv.to_string()),
        Format::Json => ("json", json(rows)?),
    };
    match &global.out {
        Some(dir) => {
            write(dir, &format!("{stem}.{ext}"), &body)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(body.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() == ErrorKind::BrokenPipe => {}
                other => other.context("writing to stdout")?,
            }
        }
    }
    Ok(())
}
