use sarcd::synth::SceneSpec;
use sarcd::{Error, Result};

fn bad(key: &str, v: &str) -> Error {
    Error::Argument(format!("{key}: cannot parse '{v}'"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}

/// Reads a scene description: `key = value` lines over the defaults, `#`
/// starts a comment. `blob_radius` takes `min, max`.
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec> {
    let mut spec = SceneSpec::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: Error| Error::Argument(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("invalid argument: ")));
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Argument(format!("line {}: expected key = value", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        match k {
            "width" => spec.width = num(k, v).map_err(at)?,
            "height" => spec.height = num(k, v).map_err(at)?,
            "changed_fraction" => spec.changed_fraction = num(k, v).map_err(at)?,
            "blob_count" => spec.blob_count = num(k, v).map_err(at)?,
            "blob_radius" => {
                let Some((a, b)) = v.split_once(',') else { return Err(at(bad(k, v))) };
                spec.blob_radius = (num(k, a.trim()).map_err(at)?, num(k, b.trim()).map_err(at)?);
            }
            "looks" => spec.looks = num(k, v).map_err(at)?,
            "contrast" => spec.contrast = num(k, v).map_err(at)?,
            "seed" => spec.seed = num(k, v).map_err(at)?,
            other => return Err(Error::Argument(format!("line {}: unknown scene key '{other}'", n + 1))),
        }
    }
    spec.validate()?;
    Ok(spec)
}
