//! Config files can supply any flag of any subcommand. A config is either a
//! JSON object or plain `key = value` lines; keys map to `--kebab-case`
//! flags. The tokens are spliced into argv right after the subcommand, so
//! flags given explicitly on the command line always win (every subcommand
//! parses with args_override_self).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

fn flag_name(key: &str) -> String {
    format!("--{}", key.trim().replace('_', "-"))
}

fn tokens_from_json(value: &serde_json::Value, path: &Path) -> Result<Vec<String>> {
    let obj = match value.as_object() {
        Some(o) => o,
        None => bail!("config {} must be a JSON object of flag: value pairs", path.display()),
    };
    let mut tokens = Vec::new();
    for (key, v) in obj {
        if key == "config" {
            continue;
        }
        match v {
            serde_json::Value::Null => {}
            serde_json::Value::Bool(true) => tokens.push(flag_name(key)),
            serde_json::Value::Bool(false) => {}
            serde_json::Value::Number(n) => {
                tokens.push(flag_name(key));
                tokens.push(n.to_string());
            }
            serde_json::Value::String(s) => {
                tokens.push(flag_name(key));
                tokens.push(s.clone());
            }
            serde_json::Value::Array(items) => {
                for item in items {
                    tokens.push(flag_name(key));
                    match item {
                        serde_json::Value::Number(n) => tokens.push(n.to_string()),
                        serde_json::Value::String(s) => tokens.push(s.clone()),
                        other => bail!(
                            "config {}: key '{key}' has unsupported array element {other}",
                            path.display()
                        ),
                    }
                }
            }
            other => {
                bail!("config {}: key '{key}' has unsupported value {other}", path.display())
            }
        }
    }
    Ok(tokens)
}

fn tokens_from_lines(text: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (line, None),
        };
        if key.is_empty() {
            bail!("config line '{raw}' has an empty key");
        }
        if key == "config" {
            continue;
        }
        match value {
            None | Some("true") => tokens.push(flag_name(key)),
            Some("false") => {}
            Some(v) => {
                tokens.push(flag_name(key));
                tokens.push(v.trim_matches('"').to_string());
            }
        }
    }
    Ok(tokens)
}

/// Loads a config file into flag tokens. JSON objects and `key = value`
/// lines are both accepted; `true` values become bare flags.
pub fn config_tokens(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("config {}", path.display()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", path.display()))?;
        tokens_from_json(&value, path)
    } else {
        tokens_from_lines(&text)
    }
}

/// Rewrites argv so any `--config FILE` contributes default flags: the
/// file's tokens are inserted immediately after the subcommand name, ahead
/// of all explicit flags.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let sub_idx = match argv.iter().enumerate().skip(1).find(|(_, a)| !a.starts_with('-')) {
        Some((i, _)) => i,
        None => return Ok(argv),
    };
    let mut config_path: Option<String> = None;
    let mut i = sub_idx + 1;
    while i < argv.len() {
        if argv[i] == "--config" {
            if let Some(v) = argv.get(i + 1) {
                config_path = Some(v.clone());
                i += 2;
                continue;
            }
        } else if let Some(rest) = argv[i].strip_prefix("--config=") {
            config_path = Some(rest.to_string());
        }
        i += 1;
    }
    let Some(path) = config_path else { return Ok(argv) };
    let tokens = config_tokens(Path::new(&path))?;
    let mut out = argv;
    out.splice(sub_idx + 1..sub_idx + 1, tokens);
    Ok(out)
}
