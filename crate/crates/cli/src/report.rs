use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

pub fn read_input(path: &Path) -> Result<(String, InputFile)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let input = InputFile {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    };
    Ok((text, input))
}

/// Certificate outcome, mapped onto the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Undecided,
}

impl Verdict {
    pub fn exit_code(self) -> u8 {
        match self {
            Verdict::Holds => 0,
            Verdict::Fails => 2,
            Verdict::Undecided => 3,
        }
    }
}

/// Common envelope of every report.
#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: &'a [InputFile],
    pub config: &'a C,
    /// Power of the input map actually iterated.
    pub power: Option<usize>,
    /// False when an enumeration behind the result hit its cap.
    pub complete: bool,
    pub verdict: Verdict,
    pub result: R,
}

pub struct Sink {
    out: Option<PathBuf>,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Result<Sink> {
        if let Some(dir) = &out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Sink { out })
    }

    /// Writes `<name>.json` under the output directory, or prints to stdout.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        match &self.out {
            Some(dir) => {
                let p = dir.join(format!("{name}.json"));
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }

    /// CSV rows are only written with `--out`.
    pub fn csv<T: Serialize>(&self, name: &str, columns: &[&str], rows: &[T]) -> Result<()> {
        let Some(dir) = &self.out else {
            return Ok(());
        };
        let p = dir.join(format!("{name}.csv"));
        let mut buf = format!("# currdyn {name} csv schema v{CSV_SCHEMA}\n").into_bytes();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.write_record(columns)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        fs::write(&p, buf).with_context(|| format!("writing {}", p.display()))
    }
}
