//! `--config` files: TOML whose keys are long flag names. Top-level keys
//! apply to any subcommand that has the flag, a `[subcommand]` table only to
//! that subcommand. Values are spliced in ahead of the command-line flags,
//! which therefore win.

use std::ffi::OsString;

use clap::Command;

use crate::error::CliError;

/// Position of the subcommand name in `argv`, skipping global options.
fn subcommand_index(argv: &[OsString], cmd: &Command) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" || a == "--jobs" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        return cmd.find_subcommand(a.as_ref()).map(|_| i);
    }
    None
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn value_to_args(flag: &str, v: &toml::Value, out: &mut Vec<OsString>) -> Result<(), CliError> {
    let scalar = |v: &toml::Value| -> Result<String, CliError> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(CliError::usage(format!("config key {flag}: unsupported value {other}"))),
        }
    };
    match v {
        toml::Value::Boolean(true) => out.push(format!("--{flag}").into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
            out.push(format!("--{flag}").into());
            out.push(joined.into());
        }
        other => {
            out.push(format!("--{flag}").into());
            out.push(scalar(other)?.into());
        }
    }
    Ok(())
}

/// `argv` with the config file's values for the chosen subcommand inserted
/// right after its name.
pub fn expand(argv: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(at) = subcommand_index(&argv, cmd) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&name).expect("checked above");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(format!("{}: {e}", path.to_string_lossy())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.to_string_lossy())))?;

    let known = |key: &str| sub.get_arguments().any(|a| a.get_long() == Some(key));
    let mut extra = Vec::new();
    for (key, v) in &table {
        if v.is_table() {
            continue;
        }
        let flag = key.replace('_', "-");
        if known(&flag) {
            value_to_args(&flag, v, &mut extra)?;
        }
    }
    if let Some(own) = table.get(&name).and_then(|v| v.as_table()) {
        for (key, v) in own {
            let flag = key.replace('_', "-");
            if !known(&flag) {
                return Err(CliError::usage(format!("config [{name}]: unknown key {key:?}")));
            }
            value_to_args(&flag, v, &mut extra)?;
        }
    }
    let mut out = argv;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}
