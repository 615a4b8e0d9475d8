//! Scene list for `evsr dataset`: one clip per line as whitespace-separated
//! `key=value` tokens, e.g.
//! `name=blobs pattern=gaussian-blobs width=64 height=48 frames=5 vx=1 vy=0.5`.

use std::path::Path;

use evsr::datapipe::{Pattern, SceneSpec};

use crate::error::{CliError, Result};

pub const DEFAULT_SIDE: usize = 64;

fn num<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::line(path, line, format!("bad value `{v}` for {key}")))
}

/// Clips without an explicit `seed` get `base_seed + ordinal`.
pub fn parse(text: &str, path: &Path, base_seed: u64) -> Result<Vec<SceneSpec>> {
    let mut specs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut name = None;
        let mut pattern = None;
        let (mut w, mut h) = (DEFAULT_SIDE, DEFAULT_SIDE);
        let mut rest = Vec::new();
        for tok in body.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| {
                CliError::line(path, ln, format!("expected key=value, got `{tok}`"))
            })?;
            match k {
                "name" => name = Some(v.to_string()),
                "pattern" => {
                    pattern = Some(
                        v.parse::<Pattern>()
                            .map_err(|e| CliError::line(path, ln, e.to_string()))?,
                    )
                }
                "width" => w = num(path, ln, k, v)?,
                "height" => h = num(path, ln, k, v)?,
                _ => rest.push((k, v)),
            }
        }
        let name = name.ok_or_else(|| CliError::line(path, ln, "missing name"))?;
        let pattern = pattern.ok_or_else(|| CliError::line(path, ln, "missing pattern"))?;
        let mut spec = SceneSpec::new(name, pattern, w, h);
        spec.seed = base_seed.wrapping_add(specs.len() as u64);
        for (k, v) in rest {
            match k {
                "frames" => spec.frame_count = num(path, ln, k, v)?,
                "vx" => spec.velocity.0 = num(path, ln, k, v)?,
                "vy" => spec.velocity.1 = num(path, ln, k, v)?,
                "seed" => spec.seed = num(path, ln, k, v)?,
                "interval_us" => spec.frame_interval_us = num(path, ln, k, v)?,
                other => return Err(CliError::line(path, ln, format!("unknown key `{other}`"))),
            }
        }
        spec.validate()
            .map_err(|e| CliError::line(path, ln, e.to_string()))?;
        specs.push(spec);
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_overrides() {
        let text = "# scenes\nname=a pattern=checkerboard\n\nname=b pattern=texture-noise width=20 height=10 frames=3 vx=-1 seed=9\n";
        let specs = parse(text, Path::new("s.txt"), 100).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!((specs[0].width, specs[0].seed), (DEFAULT_SIDE, 100));
        assert_eq!(
            (specs[1].width, specs[1].height, specs[1].frame_count),
            (20, 10, 3)
        );
        assert_eq!((specs[1].velocity.0, specs[1].seed), (-1.0, 9));
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("name=a pattern=gradient\nname=b pattern=stripes\n", 2),
            ("\n\nname=a pattern=gradient width=x\n", 3),
            ("pattern=gradient\n", 1),
            ("name=a pattern=gradient colour=red\n", 1),
            ("name=a pattern=gradient frames=1\n", 1),
        ] {
            let err = parse(text, Path::new("s.txt"), 0).unwrap_err();
            assert!(
                err.to_string().starts_with(&format!("s.txt:{line}:")),
                "{err}"
            );
        }
    }
}
