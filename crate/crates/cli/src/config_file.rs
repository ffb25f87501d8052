//! Flat `key = value` config files, merged into argv as long flags.

use std::ffi::OsString;

use fdprox::{Error, Result};

/// Appends every key of the `--config` file as `--key value` unless the
/// flag is already present. Unknown keys surface as clap errors.
pub fn merge(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = find_config(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("config {path}: {}", e.message())))?;
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || given.contains(&flag) {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => argv.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => argv.push(format!("{flag}={s}").into()),
            toml::Value::Integer(i) => argv.push(format!("{flag}={i}").into()),
            toml::Value::Float(f) => argv.push(format!("{flag}={f}").into()),
            toml::Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => Ok(s.clone()),
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        _ => Err(Error::Config(format!("config key '{key}': unsupported list element"))),
                    })
                    .collect::<Result<_>>()?;
                argv.push(format!("{flag}={}", parts.join(",")).into());
            }
            _ => {
                return Err(Error::Config(format!(
                    "config key '{key}': nested values are not supported"
                )))
            }
        }
    }
    Ok(argv)
}

fn find_config(argv: &[OsString]) -> Option<String> {
    let mut it = argv.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(str::to_owned);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_owned());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn explicit_flags_win_and_lists_join() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(
            &cfg,
            "theta = 7\ngamma = 0.5\nchange_points = [10, 20]\nstream = true\n",
        )
        .unwrap();
        let out = merge(args(&[
            "fdprox",
            "detect",
            "--theta",
            "3",
            "--config",
            cfg.to_str().unwrap(),
        ]))
        .unwrap();
        let out: Vec<String> = out.into_iter().map(|s| s.into_string().unwrap()).collect();
        assert!(out.contains(&"--gamma=0.5".to_string()));
        assert!(out.contains(&"--change-points=10,20".to_string()));
        assert!(out.contains(&"--stream".to_string()));
        assert!(!out.iter().any(|a| a.starts_with("--theta=")));
    }

    #[test]
    fn nested_tables_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[detect]\ntheta = 7\n").unwrap();
        assert!(merge(args(&["fdprox", &format!("--config={}", cfg.display())])).is_err());
    }
}
