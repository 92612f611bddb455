//! JSON artifacts: versioned envelope and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliResult, Failure, TOOL_NAME, TOOL_VERSION};

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    data: &'a T,
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Failure::Runtime(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Failure::Runtime(format!("cannot move artifact into place at {}: {e}", path.display()))
    })
}

pub fn to_json<T: Serialize>(command: &str, config: &RunConfig, data: &T) -> CliResult<Vec<u8>> {
    let env = Envelope { tool: TOOL_NAME, version: TOOL_VERSION, command, config, data };
    let mut out = serde_json::to_vec_pretty(&env).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, command: &str, config: &RunConfig, data: &T) -> CliResult<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, &to_json(command, config, data)?)?;
    Ok(path)
}

/// Payload of an artifact written by [`write_json`].
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> CliResult<T> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::Runtime(format!("missing upstream artifact {} ({e}); run the producing command first", path.display()))
    })?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
    let data = v.get_mut("data").map(serde_json::Value::take).ok_or_else(|| {
        Failure::Schema(format!("{} is not an {TOOL_NAME} artifact", path.display()))
    })?;
    serde_json::from_value(data).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_envelope() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let p = write_json(dir.path(), "x.json", "test", &cfg, &vec![1.5, 2.0]).unwrap();
        let back: Vec<f64> = read_json(dir.path(), "x.json").unwrap();
        assert_eq!(back, vec![1.5, 2.0]);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["version"], TOOL_VERSION);
        assert!(v["config"]["benchmark"].get("draws").is_some());
        assert!(v["config"]["benchmark"].get("threads").is_none());
        // no temp files left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_artifact_is_runtime_failure() {
        let dir = tempfile::tempdir().unwrap();
        let e = read_json::<Vec<f64>>(dir.path(), "nope.json").unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }
}
