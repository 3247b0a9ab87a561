//! `key = value` run files. Each key is a long flag name of the subcommand (or a
//! global flag); values are spliced into the argument list after the subcommand
//! unless the same flag was given on the command line.

use std::path::Path;

use debias_core::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, origin: &str) -> Result<Vec<Entry>, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        let value = value.trim().trim_matches('"').to_string();
        out.push(Entry { key, value });
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

/// Value of `--config` in `args`, in either `--config X` or `--config=X` form.
pub fn find_config(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefixed = format!("{flag}=");
    args.iter().any(|a| *a == flag || a.starts_with(&prefixed))
}

/// Inserts config entries right after the subcommand. Boolean entries become a
/// bare flag when true and are dropped when false; list values are comma-separated.
pub fn splice(args: Vec<String>, subcommands: &[&str], entries: &[Entry]) -> Vec<String> {
    let Some(at) = args
        .iter()
        .skip(1)
        .position(|a| subcommands.contains(&a.as_str()))
        .map(|p| p + 2)
    else {
        return args;
    };
    let mut extra = Vec::new();
    for e in entries
        .iter()
        .filter(|e| e.key != "config" && !given(&args, &e.key))
    {
        match e.value.as_str() {
            "true" => extra.push(format!("--{}", e.key)),
            "false" => {}
            v => {
                for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    extra.push(format!("--{}", e.key));
                    extra.push(part.to_string());
                }
            }
        }
    }
    let mut out = args;
    out.splice(at..at, extra);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_keys_and_values() {
        let e = parse(
            "# run\nk = 2\nencoder = \"hash:16\"\npre_normalize = true\n",
            "c",
        )
        .unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[1].value, "hash:16");
        assert_eq!(e[2].key, "pre-normalize");
        assert!(parse("k 2\n", "c").is_err());
    }

    #[test]
    fn command_line_flags_win() {
        let entries = parse(
            "k = 3\nseed = 9\nkeep-mixed = true\ncorpus = a.txt, b.txt\n",
            "c",
        )
        .unwrap();
        let args = strings(&["debias", "--config", "c", "templates", "--k", "1"]);
        let out = splice(args, &["templates"], &entries);
        assert_eq!(
            out,
            strings(&[
                "debias",
                "--config",
                "c",
                "templates",
                "--seed",
                "9",
                "--keep-mixed",
                "--corpus",
                "a.txt",
                "--corpus",
                "b.txt",
                "--k",
                "1"
            ])
        );
    }

    #[test]
    fn finds_the_config_path() {
        assert_eq!(
            find_config(&strings(&["x", "--config=a.cfg"])),
            Some("a.cfg".into())
        );
        assert_eq!(
            find_config(&strings(&["x", "--config", "b"])),
            Some("b".into())
        );
        assert_eq!(find_config(&strings(&["x"])), None);
    }
}
