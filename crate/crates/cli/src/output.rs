//! CSV, summary and manifest writers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats a float with 9 significant digits, using the shortest decimal
/// form of the rounded value.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn opt9(v: Option<f64>) -> String {
    v.map(fmt9).unwrap_or_default()
}

pub struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// One predicate of a run's summary.
#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= threshold,
            value,
            threshold,
        }
    }

    pub fn holds(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
        }
    }
}

#[derive(Serialize)]
pub struct Summary<T: Serialize> {
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub result: T,
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: String,
    out: String,
    seed: Option<u64>,
    wall_clock_secs: f64,
    artifacts: Vec<Artifact>,
}

/// Collects the files of one run and writes the manifest last.
pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: format!("{:x}", Sha256::digest(contents.as_bytes())),
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        self.write(name, &csv.render())
    }

    /// Writes `summary.json` and returns whether every check passed.
    pub fn summary<T: Serialize>(
        &mut self,
        command: &str,
        checks: Vec<Check>,
        result: T,
    ) -> Result<bool> {
        let pass = checks.iter().all(|c| c.pass);
        let summary = Summary {
            command: command.to_string(),
            pass,
            checks,
            result,
        };
        let text = serde_json::to_string_pretty(&summary)?;
        self.write("summary.json", &(text + "\n"))?;
        Ok(pass)
    }

    pub fn finish(self, command: &str, config: &Path, seed: Option<u64>, secs: f64) -> Result<()> {
        let manifest = RunManifest {
            command,
            config: config.display().to_string(),
            out: self.dir.display().to_string(),
            seed,
            wall_clock_secs: secs,
            artifacts: self.artifacts,
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.049242710764070), "0.0492427108");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(123456789012.0), "123456789000");
        assert_eq!(fmt9(-2.5e-7), "-0.00000025");
        assert_eq!(fmt9(f64::NAN), "NaN");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut c = Csv::new(&["a", "b"]);
        c.push(vec!["1".into(), "2".into()]);
        assert_eq!(c.render(), "a,b\n1,2\n");
    }
}
