//! Plain-text `key = value` configuration files with `[section]` headers.

use crate::config::Config;
use crate::error::{Error, Result};
use std::path::Path;

/// Parses configuration text. Unknown keys are returned as warnings;
/// malformed lines and bad values error with their line number.
pub fn parse_config(text: &str) -> Result<(Config, Vec<String>)> {
    let mut cfg = Config::default();
    let mut warnings = Vec::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )));
        };
        let mut full_key = key.trim().to_string();
        if !section.is_empty() && !full_key.contains('.') {
            full_key = format!("{section}.{full_key}");
        }
        let applied = cfg.apply(&full_key, value.trim()).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
            other => other,
        })?;
        if !applied {
            warnings.push(format!("line {}: unknown key `{full_key}`", lineno + 1));
        }
    }
    Ok((cfg, warnings))
}

/// Loads a configuration file, falling back to defaults for absent keys.
pub fn load_config(path: &Path) -> Result<(Config, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_defaults() {
        let (cfg, warnings) = parse_config("").unwrap();
        assert_eq!(cfg.camera.focal, 1.2);
        assert_eq!(cfg.loss.beta, 0.5);
        assert_eq!(cfg.puppet.tau, 0.1);
        assert!(warnings.is_empty());
    }

    #[test]
    fn override_is_reflected() {
        let (cfg, warnings) = parse_config("loss.beta = 0.7\n").unwrap();
        assert_eq!(cfg.loss.beta, 0.7);
        assert!(warnings.is_empty());
    }

    #[test]
    fn sections_prefix_bare_keys() {
        let (cfg, _) = parse_config("[camera]\nf = 2.0\nmargin = 0.1\n").unwrap();
        assert_eq!(cfg.camera.focal, 2.0);
        assert_eq!(cfg.camera.margin, 0.1);
    }

    #[test]
    fn unknown_key_warns_but_does_not_fail() {
        let (_, warnings) = parse_config("no.such.key = 1\n").unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("no.such.key"));
    }

    #[test]
    fn malformed_line_errors_with_line_number() {
        let err = parse_config("loss.beta = 0.5\nthis is not a setting\n").unwrap_err();
        assert!(format!("{err}").contains("line 2"));
    }

    #[test]
    fn type_error_names_the_line() {
        let err = parse_config("\n\nloss.beta = banana\n").unwrap_err();
        assert!(format!("{err}").contains("line 3"));
    }

    #[test]
    fn vector_values_parse() {
        let (cfg, _) = parse_config("camera.bounds.t_lo = -1, -1, 2.0\n").unwrap();
        assert_eq!(cfg.camera.bounds.t_lo, [-1.0, -1.0, 2.0]);
    }
}
