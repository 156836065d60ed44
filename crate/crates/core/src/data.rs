//! Datasets and their on-disk formats.
//!
//! Profiles are CSV with header `x,u`, optionally preceded by a comment line
//! `# normalized=true|false` saying whether `u` is divided by `c_sat`
//! (default `false`). `x` is always in cm.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellProfile, FixedConstants};

/// Measured live-cell profile in dimensionless form: `x/L` and `u/c_sat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalDataset {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl ExperimentalDataset {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::invalid(format!(
                "dataset arrays differ in length ({} vs {})",
                x.len(),
                z.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if x.iter().chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("dimensionless x = {bad} outside [0, 1]")));
        }
        Ok(Self { x, z })
    }

    pub fn from_profile(p: &CellProfile, consts: &FixedConstants) -> Result<Self> {
        Self::new(
            p.x.iter().map(|x| x / consts.length).collect(),
            p.u.iter().map(|u| u / consts.c_sat).collect(),
        )
    }

    pub fn to_profile(&self, consts: &FixedConstants) -> CellProfile {
        CellProfile {
            x: self.x.iter().map(|x| x * consts.length).collect(),
            u: self.z.iter().map(|z| z * consts.c_sat).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            z: idx.iter().map(|&i| self.z[i]).collect(),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn normalized_flag(text: &str, path: &Path) -> Result<bool> {
    for line in text.lines() {
        let Some(comment) = line.trim().strip_prefix('#') else {
            continue;
        };
        if let Some((key, value)) = comment.split_once('=') {
            if key.trim() == "normalized" {
                return match value.trim() {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    other => Err(Error::format(
                        path,
                        format!("normalized must be true or false, got '{other}'"),
                    )),
                };
            }
        }
    }
    Ok(false)
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str], path: &Path) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            format!(
                "expected header '{}', found '{}'",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_field(rec: &csv::StringRecord, i: usize, row: usize, path: &Path) -> Result<f64> {
    let s = rec.get(i).unwrap_or("").trim();
    s.parse::<f64>()
        .map_err(|_| Error::format(path, format!("row {row}: cannot parse '{s}' as a number")))
}

/// Reads a profile, returning it in physical units.
pub fn read_profile(path: &Path, c_sat: f64) -> Result<CellProfile> {
    let text = read_to_string(path)?;
    let normalized = normalized_flag(&text, path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    check_header(&mut rdr, &["x", "u"], path)?;
    let (mut x, mut u) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        x.push(parse_field(&rec, 0, row + 1, path)?);
        let v = parse_field(&rec, 1, row + 1, path)?;
        u.push(if normalized { v * c_sat } else { v });
    }
    CellProfile::new(x, u).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a physical-unit profile, dividing `u` by `c_sat` when `normalized`.
pub fn write_profile(path: &Path, p: &CellProfile, normalized: bool, c_sat: f64) -> Result<()> {
    let mut out = format!("# normalized={normalized}\nx,u\n");
    for (x, u) in p.x.iter().zip(&p.u) {
        let u = if normalized { u / c_sat } else { *u };
        out.push_str(&format!("{x:e},{u:e}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads fixed constants from a TOML file; absent keys keep their defaults.
pub fn read_constants(path: &Path) -> Result<FixedConstants> {
    let text = read_to_string(path)?;
    let c: FixedConstants = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    c.validate()?;
    Ok(c)
}

pub fn write_constants(path: &Path, c: &FixedConstants) -> Result<()> {
    let text = toml::to_string(c).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
