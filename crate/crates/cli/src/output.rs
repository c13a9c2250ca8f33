use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hardy_core::verifier::Verdict;

use crate::config::CampaignConfig;

/// Exit status of a subcommand, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Pass,
    NumericalFailure,
    ConditionFailure,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::ConditionFailure => 1,
            Outcome::NumericalFailure => 2,
        }
    }

    pub fn of(v: &Verdict) -> Self {
        match v {
            Verdict::Pass => Outcome::Pass,
            Verdict::Fail(_) => Outcome::ConditionFailure,
            Verdict::NumericalFailure(_) => Outcome::NumericalFailure,
        }
    }

    pub fn worst(self, other: Self) -> Self {
        self.max(other)
    }
}

pub struct OutDir {
    pub dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

/// Resolved configuration as `#`-prefixed lines.
pub fn header(cfg: &CampaignConfig, command: &str) -> String {
    let mut s = format!("# hardy {command}\n");
    for line in cfg.echo().lines() {
        if line.is_empty() {
            s.push_str("#\n");
        } else {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    s
}

/// CSV document with the config header followed by the records.
pub fn csv_document(
    cfg: &CampaignConfig,
    command: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(format!("{}{}", header(cfg, command), body))
}

/// File-name-safe form of a condition id.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\'' => 'p',
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => c,
            _ => '_',
        })
        .collect()
}
