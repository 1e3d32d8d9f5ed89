//! Artifact writing, provenance records and byte-exact replay.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Kind};
use crate::experiments::{run, Assertion};
use crate::LabError;

pub const PROVENANCE_FILE: &str = "provenance.json";
const TOOL: &str = "sfde-lab";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run. Contains no timestamps or paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub kind: Kind,
    /// Resolved configuration (flag overrides applied, output location removed).
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub passed: bool,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: Kind,
    pub passed: bool,
    pub out: PathBuf,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub kind: Kind,
    pub identical: bool,
    pub artifacts: Vec<String>,
    pub out: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// Runs `kind`, writes artifacts and `provenance.json` into `out`.
pub fn execute(kind: Kind, cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, LabError> {
    let mut recorded = cfg.clone();
    recorded.output = None;
    recorded.kind = Some(kind);
    let outcome = run(kind, &recorded)?;
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let mut artifacts = Vec::with_capacity(outcome.artifacts.len());
    for a in &outcome.artifacts {
        write(&out.join(&a.name), &a.bytes)?;
        artifacts.push(ArtifactRecord {
            name: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
        });
    }
    let prov = Provenance {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: sfde_core::VERSION.into(),
        kind,
        config_sha256: config_hash(&recorded),
        seeds: recorded.seeds(),
        config: recorded,
        passed: outcome.passed(),
        artifacts,
    };
    let mut bytes = serde_json::to_vec_pretty(&prov).expect("provenance serializes");
    bytes.push(b'\n');
    write(&out.join(PROVENANCE_FILE), &bytes)?;
    Ok(RunSummary {
        kind,
        passed: outcome.passed(),
        out: out.to_path_buf(),
        assertions: outcome.assertions,
        artifacts: prov.artifacts.iter().map(|a| a.name.clone()).collect(),
    })
}

pub fn load_provenance(path: &Path) -> Result<Provenance, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

/// Validates a provenance record against its run directory, re-runs it into
/// `out` (default `<run dir>/replay`) and compares every artifact byte for byte.
pub fn replay(
    path: &Path,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<ReplayReport, LabError> {
    let prov = load_provenance(path)?;
    if prov.tool != TOOL {
        return Err(LabError::Mismatch(format!(
            "record was written by `{}`",
            prov.tool
        )));
    }
    let hash = config_hash(&prov.config);
    if hash != prov.config_sha256 {
        return Err(LabError::Mismatch(format!(
            "config hash {hash} differs from recorded {} (the recorded config was modified)",
            prov.config_sha256
        )));
    }
    if prov.config.seeds() != prov.seeds {
        return Err(LabError::Mismatch(
            "recorded seeds do not match the recorded config".into(),
        ));
    }
    if prov.config.kind != Some(prov.kind) {
        return Err(LabError::Mismatch(
            "recorded kind does not match the recorded config".into(),
        ));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut originals = Vec::with_capacity(prov.artifacts.len());
    for a in &prov.artifacts {
        let p = dir.join(&a.name);
        if !p.is_file() {
            return Err(LabError::MissingArtifact(p.display().to_string()));
        }
        let bytes = fs::read(&p).map_err(|e| LabError::io(&p, e))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(LabError::Mismatch(format!(
                "{} does not match its recorded hash",
                a.name
            )));
        }
        originals.push(bytes);
    }

    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("replay"));
    if same_dir(&target, &dir) {
        return Err(LabError::Config(
            "replay output must differ from the original run directory".into(),
        ));
    }
    let mut cfg = prov.config.clone();
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let summary = execute(prov.kind, &cfg, &target)?;
    let names: Vec<&str> = prov.artifacts.iter().map(|a| a.name.as_str()).collect();
    if summary
        .artifacts
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        != names
    {
        return Err(LabError::Mismatch(format!(
            "replay produced artifacts {:?}, recorded {names:?}",
            summary.artifacts
        )));
    }
    let mut differing = Vec::new();
    for (a, original) in prov.artifacts.iter().zip(&originals) {
        let p = target.join(&a.name);
        let bytes = fs::read(&p).map_err(|e| LabError::io(&p, e))?;
        if &bytes != original {
            differing.push(a.name.clone());
        }
    }
    if !differing.is_empty() {
        return Err(LabError::Mismatch(format!(
            "replayed artifacts differ: {}",
            differing.join(", ")
        )));
    }
    Ok(ReplayReport {
        kind: prov.kind,
        identical: true,
        artifacts: names.iter().map(|s| s.to_string()).collect(),
        out: target,
    })
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
