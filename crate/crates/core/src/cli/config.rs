//! `--config PATH` support.
//!
//! The file holds `key = value` lines (`#` starts a comment). Keys are flag
//! names without the leading dashes. Entries are spliced into the argument
//! list right after the subcommand, ahead of the user's own flags; with
//! `args_override_self` the later command-line occurrence wins, giving
//! command line > file > built-in defaults.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;

use clap::CommandFactory;

use super::Cli;
use crate::error::{Error, Result};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("config line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("config line {}: empty key", lineno + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn long_flags(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

/// Returns `args` with the config file entries inserted.
pub fn splice_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = find_config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::InvalidConfig(format!("--config {}: {e}", path.to_string_lossy()))
    })?;
    let entries = parse_config(&text)?;

    let root = Cli::command();
    let names: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let Some(pos) = args
        .iter()
        .position(|a| names.iter().any(|n| a.to_string_lossy() == n.as_str()))
    else {
        return Ok(args);
    };
    let sub_name = args[pos].to_string_lossy().into_owned();
    let sub = root.find_subcommand(&sub_name).expect("known subcommand");
    let accepted = long_flags(sub).union(&long_flags(&root)).cloned().collect::<BTreeSet<_>>();
    let anywhere: BTreeSet<String> = root
        .get_subcommands()
        .flat_map(long_flags)
        .chain(long_flags(&root))
        .collect();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        if accepted.contains(&key) {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(value));
        } else if !anywhere.contains(&key) {
            return Err(Error::InvalidConfig(format!("unknown config key {key:?}")));
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
