//! `key=value` configuration files, merged into the command line so that
//! explicit flags win.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

/// Parses a config file into ordered (key, value) pairs. `#` starts a
/// comment line; keys may use `-` or `_`.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{line}`", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Flag value taken by `--name`, or `None` for boolean switches.
fn takes_value(cmd: &Command, name: &str) -> Option<bool> {
    cmd.get_arguments()
        .find(|a| a.get_long() == Some(name))
        .map(|a| a.get_action().takes_values())
}

/// Rewrites `args` so that the entries of the config file named by
/// `--config` appear right after the subcommand, before the user's own
/// flags. Keys belonging only to other subcommands are ignored; keys no
/// subcommand knows are an error.
pub fn merge(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path: Option<OsString> = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().context("--config needs a file")?);
        } else if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("in {}", path.display()))?;

    let sub_at = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| cmd.find_subcommand(s).is_some()));
    let Some(sub_at) = sub_at else { return Ok(rest) };
    let sub = cmd.find_subcommand(rest[sub_at].to_str().unwrap_or_default()).expect("found above");

    let known: HashSet<&str> = cmd
        .get_subcommands()
        .flat_map(|s| s.get_arguments())
        .chain(cmd.get_arguments())
        .filter_map(|a| a.get_long())
        .collect();
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        let takes = takes_value(sub, &key).or_else(|| takes_value(cmd, &key));
        match takes {
            Some(true) => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
            Some(false) => match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => bail!("config key `{key}` is a switch; expected true or false, got `{other}`"),
            },
            None if known.contains(key.as_str()) => {}
            None => bail!("unknown config key `{key}`"),
        }
    }
    let mut merged = rest[..=sub_at].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&rest[sub_at + 1..]);
    Ok(merged)
}
