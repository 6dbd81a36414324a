//! Stable on-disk formats: JSON schemas for systems, candidate functions,
//! and relaxed signals, CSV trajectory dumps, and byte-reproducible float
//! formatting (17 significant digits) so identical runs produce identical
//! artifacts.

use crate::linalg::{Matrix, SymMatrix};
use crate::model::{ActiveInput, RelaxedSignal, SwitchedLinearSystem, Trajectory};
use crate::pmq::PmPqf;
use crate::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// On-disk description of a switched linear system:
/// `{"n": int, "M": int, "modes": [[[row-major reals]]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub modes: Vec<Vec<Vec<f64>>>,
}

impl SystemFile {
    pub fn from_system(sys: &SwitchedLinearSystem) -> SystemFile {
        SystemFile {
            n: sys.n(),
            m: sys.mode_count(),
            modes: sys.modes().iter().map(Matrix::rows).collect(),
        }
    }

    pub fn to_system(&self) -> Result<SwitchedLinearSystem> {
        if self.modes.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "file declares M={} but lists {} modes",
                self.m,
                self.modes.len()
            )));
        }
        let modes = self
            .modes
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let sys = SwitchedLinearSystem::new(modes)?;
        if sys.n() != self.n {
            return Err(Error::InvalidArgument(format!(
                "file declares n={} but matrices are {}-dimensional",
                self.n,
                sys.n()
            )));
        }
        Ok(sys)
    }
}

/// On-disk description of a pointwise-minimum quadratic function:
/// `{"n": int, "matrices": [[[row-major reals]]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfFile {
    pub n: usize,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl ClfFile {
    pub fn from_pmq(f: &PmPqf) -> ClfFile {
        ClfFile {
            n: f.n(),
            matrices: f.matrices().iter().map(|p| p.as_matrix().rows()).collect(),
        }
    }

    pub fn to_pmq(&self) -> Result<PmPqf> {
        let matrices = self
            .matrices
            .iter()
            .map(|rows| SymMatrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let f = PmPqf::new(matrices)?;
        if f.n() != self.n {
            return Err(Error::InvalidArgument(format!(
                "file declares n={} but matrices are {}-dimensional",
                self.n,
                f.n()
            )));
        }
        Ok(f)
    }
}

/// On-disk description of a relaxed switching signal:
/// `{"breakpoints": [...], "weights": [[...]]}`. JSON has no infinity, so an
/// unbounded final breakpoint is stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedFile {
    #[serde(serialize_with = "ser_breakpoints", deserialize_with = "de_breakpoints")]
    pub breakpoints: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

fn ser_breakpoints<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let opts: Vec<Option<f64>> =
        v.iter().map(|t| if t.is_finite() { Some(*t) } else { None }).collect();
    opts.serialize(s)
}

fn de_breakpoints<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<f64>, D::Error> {
    let opts = Vec::<Option<f64>>::deserialize(d)?;
    Ok(opts.into_iter().map(|t| t.unwrap_or(f64::INFINITY)).collect())
}

impl RelaxedFile {
    pub fn from_signal(sig: &RelaxedSignal) -> RelaxedFile {
        RelaxedFile {
            breakpoints: sig.breakpoints().to_vec(),
            weights: sig.weights().to_vec(),
        }
    }

    pub fn to_signal(&self) -> Result<RelaxedSignal> {
        RelaxedSignal::new(self.breakpoints.clone(), self.weights.clone())
    }
}

/// Formats every float with 17 significant digits in scientific notation so
/// serialization is injective on finite doubles and byte-reproducible.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Fixed-format float for CSV cells, matching the JSON formatter.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Compact JSON with reproducible float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("JSON serializer emits UTF-8"))
}

/// Writes `value` as one JSON document followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Trajectory as CSV with header `t,x1,...,xn,mode`. Held modes are written
/// one-based; relaxed samples get mode −1 with their weights in a sibling
/// file (see [`weights_to_csv`]).
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.initial_state().len();
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",mode\n");
    for s in traj.samples() {
        out.push_str(&format_f64(s.t));
        for v in &s.state {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        match &s.input {
            ActiveInput::Mode(i) => out.push_str(&format!(",{}", i + 1)),
            ActiveInput::Weights(_) => out.push_str(",-1"),
        }
        out.push('\n');
    }
    out
}

/// Weights of the relaxed samples as CSV `t,a1,...,aM`; `None` when the
/// trajectory is pure.
pub fn weights_to_csv(traj: &Trajectory) -> Option<String> {
    let m = traj.samples().iter().find_map(|s| match &s.input {
        ActiveInput::Weights(w) => Some(w.len()),
        ActiveInput::Mode(_) => None,
    })?;
    let mut out = String::from("t");
    for i in 1..=m {
        out.push_str(&format!(",a{i}"));
    }
    out.push('\n');
    for s in traj.samples() {
        if let ActiveInput::Weights(w) = &s.input {
            out.push_str(&format_f64(s.t));
            for v in w {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
    }
    Some(out)
}

/// Hex-encoded SHA-256 of a byte string, for recording input digests in run
/// metadata.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
