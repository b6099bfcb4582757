//! Run directories, manifests and the exit-code taxonomy.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
/// Copy of the input case kept inside every run directory.
pub const CASE_COPY: &str = "case.txt";

/// Why a command stopped; each kind maps to one exit code.
#[derive(Debug)]
pub enum Failure {
    /// A stored result failed re-verification or an artifact is damaged.
    Verification(String),
    /// Bad flags or an invalid case.
    Usage(String),
    /// A solve or trace could not be completed.
    Compute(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Verification(m) | Failure::Usage(m) | Failure::Compute(m) => f.write_str(m),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Compute(format!("i/o error: {e}"))
    }
}

pub type CmdResult<T> = Result<T, Failure>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseEntry {
    pub path: String,
    pub sha256: String,
    pub copy: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    /// `case`, `boundary`, `surface`, `comparison`, `secure`, `svg` or `csv`.
    pub kind: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub case: CaseEntry,
    pub configurations: Vec<String>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Seconds since the epoch; omitted in deterministic runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub created_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finished_unix: Option<u64>,
    pub outputs: Vec<OutputEntry>,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// A fresh, never-reused directory `<root>/<command>-NNNN`. Files are
/// written once, hashed, and listed in the manifest on [`RunDir::finish`].
pub struct RunDir {
    pub path: PathBuf,
    manifest: Manifest,
    deterministic: bool,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, case: CaseEntry, deterministic: bool) -> CmdResult<Self> {
        fs::create_dir_all(root)?;
        let mut n = 1;
        let path = loop {
            let p = root.join(format!("{command}-{n:04}"));
            match fs::create_dir(&p) {
                Ok(()) => break p,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(e.into()),
            }
        };
        Ok(RunDir {
            path,
            manifest: Manifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                case,
                configurations: vec![],
                parameters: BTreeMap::new(),
                created_unix: (!deterministic).then(now_unix),
                finished_unix: None,
                outputs: vec![],
            },
            deterministic,
        })
    }

    pub fn deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn set_configurations(&mut self, labels: Vec<String>) {
        self.manifest.configurations = labels;
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameters serialize");
        self.manifest.parameters.insert(key.into(), v);
    }

    pub fn write(&mut self, name: &str, kind: &str, bytes: &[u8]) -> CmdResult<()> {
        let target = self.path.join(name);
        if target.exists() {
            return Err(Failure::Compute(format!("refusing to overwrite {}", target.display())));
        }
        fs::write(&target, bytes)?;
        self.manifest.outputs.push(OutputEntry {
            file: name.into(),
            kind: kind.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, kind: &str, value: &impl Serialize) -> CmdResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Compute(e.to_string()))?;
        text.push('\n');
        self.write(name, kind, text.as_bytes())
    }

    pub fn finish(mut self) -> CmdResult<PathBuf> {
        if !self.deterministic {
            self.manifest.finished_unix = Some(now_unix());
        }
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Failure::Compute(e.to_string()))?;
        text.push('\n');
        fs::write(self.path.join(MANIFEST), text)?;
        Ok(self.path)
    }
}

pub fn read_manifest(dir: &Path) -> CmdResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Failure::Usage(format!("no manifest in {}", dir.display())))
        }
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text).map_err(|e| Failure::Verification(format!("{MANIFEST}: unreadable ({e})")))
}

/// File name fragment for a configuration label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
