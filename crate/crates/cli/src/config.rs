//! Flat `key=value` config files and run manifests.
//!
//! A config file supplies values for a subcommand's long flags. Its values
//! are spliced into the argument list ahead of the user's own flags, and
//! every flag overrides itself, so the precedence is flags > file >
//! defaults. A manifest written by a run is a valid config file for the
//! same subcommand.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{ArgMatches, Command};

use crate::CliError;

/// Keys a manifest carries that are not flags.
const RESERVED: [&str; 3] = ["command", "version", "config"];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config PATH` or `--config=PATH` in raw arguments.
fn find_config(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Returns `args` with the config file's values inserted right after the
/// subcommand name.
pub fn merge_config(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let entries = parse_config(&text).map_err(CliError::Usage)?;
    // The subcommand is the first argument after the program name that
    // names one.
    let Some((pos, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).map(|s| (i, s)))
    else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "command" && value != sub.get_name() {
            return Err(CliError::Usage(format!(
                "config was written by `{value}`, not `{}`",
                sub.get_name()
            )));
        }
        if RESERVED.contains(&key.as_str()) {
            continue;
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}` for `{}`", sub.get_name())))?;
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "config key `{key}` expects true or false, got `{other}`"
                    )))
                }
            }
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// The resolved value of every flag of a subcommand, in declaration order.
pub fn resolved_flags(sub: &Command, m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if RESERVED.contains(&long) || long == "help" {
            continue;
        }
        let id = arg.get_id().as_str();
        if let Ok(Some(values)) = m.try_get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push((long.to_string(), joined.join(",")));
        }
    }
    out
}

/// Writes `manifest.txt`: command, tool version, every resolved flag and
/// any derived values the command reports.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    flags: &[(String, String)],
    derived: &[(String, String)],
) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "command={command}");
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    for (k, v) in flags {
        let _ = writeln!(s, "{k}={v}");
    }
    for (k, v) in derived {
        let _ = writeln!(s, "# {k}={v}");
    }
    fs::write(dir.join("manifest.txt"), s).map_err(|e| CliError::Runtime(e.into()))
}
