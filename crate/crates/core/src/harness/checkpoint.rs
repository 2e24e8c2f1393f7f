//! Plain-text parameter checkpoints.
//!
//! ```text
//! # qpgd-checkpoint v1
//! spec 2 32,32,32 1 gelu
//! digest <sha256 of the run configuration>
//! domain <sha256 of the geometry>
//! seed 7
//! -1.2345678901234567e-1
//! ...
//! ```
//!
//! Parameters follow in layout order, one per line, with 17 significant
//! digits; the voltage slot is the final entry.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::autodiff::MlpSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "# qpgd-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: MlpSpec,
    pub digest: String,
    pub domain: String,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn v_hat(&self) -> f64 {
        *self.params.last().expect("checkpoint has parameters")
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_HEADER}")?;
        writeln!(w, "spec {}", self.spec.describe())?;
        writeln!(w, "digest {}", self.digest)?;
        writeln!(w, "domain {}", self.domain)?;
        writeln!(w, "seed {}", self.seed)?;
        for p in &self.params {
            writeln!(w, "{p:.16e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Parse a checkpoint; with `expected_digest`, a different recorded
    /// digest is an error.
    pub fn read<R: BufRead>(r: R, expected_digest: Option<&str>) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::MalformedLine { line: 0, reason: format!("missing {what}") }),
            }
        };
        let (_, header) = next("header")?;
        if header.trim() != CHECKPOINT_HEADER {
            return Err(Error::VersionMismatch { expected: CHECKPOINT_HEADER.into(), found: header.trim().into() });
        }
        let mut field = |key: &str| -> Result<String> {
            let (n, line) = next(key)?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::MalformedLine { line: n, reason: format!("expected '{key} ...'") })
        };
        let spec = MlpSpec::parse(&field("spec")?)?;
        let digest = field("digest")?;
        let domain = field("domain")?;
        let seed_text = field("seed")?;
        let seed = seed_text
            .parse()
            .map_err(|_| Error::MalformedLine { line: 5, reason: format!("bad seed '{seed_text}'") })?;
        if let Some(expected) = expected_digest {
            if expected != digest {
                return Err(Error::DigestMismatch { expected: expected.into(), found: digest });
            }
        }

        let n = spec.n_params();
        let mut params = Vec::with_capacity(n);
        let mut last_line = 5;
        for (i, line) in lines {
            let line = line?;
            last_line = i + 1;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if params.len() == n {
                return Err(Error::MalformedLine { line: last_line, reason: format!("more than {n} parameters") });
            }
            let v: f64 = text
                .parse()
                .map_err(|_| Error::MalformedLine { line: last_line, reason: format!("bad parameter '{text}'") })?;
            params.push(v);
        }
        if params.len() != n {
            return Err(Error::MalformedLine {
                line: last_line + 1,
                reason: format!("expected {n} parameters, found {}", params.len()),
            });
        }
        Ok(Self { spec, digest, domain, seed, params })
    }

    pub fn load(path: &Path, expected_digest: Option<&str>) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?), expected_digest)
    }
}
