//! `--config <file>` support. The file holds `key = value` lines whose keys
//! are the long flag names of the chosen subcommand; `#` starts a comment.
//! Flags given on the command line win over the file.

use std::ffi::OsString;

use clap::{ArgAction, Command};

use crate::CliError;

fn parse_lines(text: &str, path: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{path}:{}: expected key=value, got {line:?}",
                n + 1
            ))
        })?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(CliError::Usage(format!("{path}:{}: empty key", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<(usize, String)> {
    args.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_str()?;
        if s == "--config" {
            args.get(i + 1)
                .and_then(|v| v.to_str())
                .map(|v| (i, v.to_string()))
        } else {
            s.strip_prefix("--config=").map(|v| (i, v.to_string()))
        }
    })
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefixed = format!("--{key}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&prefixed))
}

/// Appends the config file's settings to `args` as flags, skipping any the
/// user already passed. Unknown keys are rejected.
pub fn merge(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some((_, path)) = config_path(&args) else {
        return Ok(args);
    };
    let sub_name = args
        .get(1)
        .and_then(|a| a.to_str())
        .unwrap_or_default()
        .to_string();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    if !std::path::Path::new(&path).is_file() {
        return Err(CliError::Usage(format!("config file not found: {path}")));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut out = args.clone();
    for (key, value) in parse_lines(&text, &path)? {
        if key == "config" {
            return Err(CliError::Usage(format!(
                "{path}: config files cannot include other config files"
            )));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                CliError::Usage(format!("{path}: unknown key '{key}' for '{sub_name}'"))
            })?;
        if given_on_command_line(&args, &key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => out.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "{path}: '{key}' expects true or false, got {value:?}"
                    )))
                }
            },
            _ => out.push(format!("--{key}={value}").into()),
        }
    }
    Ok(out)
}
