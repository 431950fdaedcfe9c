//! Instance files, generators, theorem dispatch and suites.

mod gen;
mod suite;
mod verify;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convexfn::{ConvexFn, FnSpec};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::report::{Outcome, VerificationReport};

pub use gen::{generate, Family, GenRequest};
pub use suite::{run_suite, CriterionRow, Expect, SuiteConfig, SuiteEntry, SuiteEntryResult, SuiteReport};
pub use verify::{verify, Tamper};

pub const SCHEMA_VERSION: u32 = 1;

/// Theorem identifiers accepted by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    Thm1,
    Maxmain,
    Finitecase,
    Increasing0,
    Tmain,
    Cor0,
    Cor1,
    Galb,
    Biz,
    Corolarioimportante,
    Teoepi,
    Ct,
    Rii,
    Spe,
    Lems,
    Diag,
    Lmax,
    Reps,
}

impl TheoremId {
    pub const ALL: [TheoremId; 18] = [
        TheoremId::Thm1,
        TheoremId::Maxmain,
        TheoremId::Finitecase,
        TheoremId::Increasing0,
        TheoremId::Tmain,
        TheoremId::Cor0,
        TheoremId::Cor1,
        TheoremId::Galb,
        TheoremId::Biz,
        TheoremId::Corolarioimportante,
        TheoremId::Teoepi,
        TheoremId::Ct,
        TheoremId::Rii,
        TheoremId::Spe,
        TheoremId::Lems,
        TheoremId::Diag,
        TheoremId::Lmax,
        TheoremId::Reps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Thm1 => "thm1",
            TheoremId::Maxmain => "maxmain",
            TheoremId::Finitecase => "finitecase",
            TheoremId::Increasing0 => "increasing0",
            TheoremId::Tmain => "tmain",
            TheoremId::Cor0 => "cor0",
            TheoremId::Cor1 => "cor1",
            TheoremId::Galb => "galb",
            TheoremId::Biz => "biz",
            TheoremId::Corolarioimportante => "corolarioimportante",
            TheoremId::Teoepi => "teoepi",
            TheoremId::Ct => "ct",
            TheoremId::Rii => "rii",
            TheoremId::Spe => "spe",
            TheoremId::Lems => "lems",
            TheoremId::Diag => "diag",
            TheoremId::Lmax => "lmax",
            TheoremId::Reps => "reps",
        }
    }

    /// Theorems that act on symmetric matrices.
    pub fn is_spectral(self) -> bool {
        matches!(self, TheoremId::Spe | TheoremId::Lems | TheoremId::Diag | TheoremId::Lmax)
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown theorem id '{s}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<ExtReal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

fn default_radius() -> f64 {
    10.0
}
fn default_dirs() -> usize {
    32
}
fn default_tol() -> f64 {
    1e-6
}
fn default_fenchel_tol() -> f64 {
    1e-9
}
fn default_cert_tol() -> f64 {
    1e-4
}
fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Truncation box `[−R, R]ⁿ` for unbounded sets.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_dirs")]
    pub n_dirs: usize,
    /// Set-comparison tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_fenchel_tol")]
    pub fenchel_tol: f64,
    /// Certificate residual tolerance.
    #[serde(default = "default_cert_tol")]
    pub cert_tol: f64,
    /// Random probe points per instance.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            radius: default_radius(),
            n_dirs: default_dirs(),
            tol: default_tol(),
            fenchel_tol: default_fenchel_tol(),
            cert_tol: default_cert_tol(),
            samples: default_samples(),
        }
    }
}

/// A verification instance. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub schema_version: u32,
    /// One function, or the members of a finite family.
    pub functions: Vec<FnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// `X̄` for the spectral theorems (row-major).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_point: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub probe: ProbeConfig,
    /// Explicit probe vectors; generated from `seed` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrix_targets: Vec<Vec<Vec<f64>>>,
    /// Direction `v` for the ratio operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl Instance {
    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(s).map_err(|e| Error::Input(format!("instance: {e}")))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances always serialise")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.probe;
        if !(p.radius > 0.0) || !(p.tol > 0.0) || !(p.fenchel_tol > 0.0) || !(p.cert_tol > 0.0) {
            return Err(Error::Input("probe radius and tolerances must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instances always serialise");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn convex_functions(&self) -> Result<Vec<ConvexFn>> {
        self.functions.iter().cloned().map(ConvexFn::try_from).collect()
    }

    pub fn point_vec(&self) -> Result<DVector<f64>> {
        self.point
            .as_ref()
            .map(|p| DVector::from_column_slice(p))
            .ok_or_else(|| Error::Input("instance needs a point".into()))
    }
}

/// CLI exit code for a verification outcome.
pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Pass => 0,
        Outcome::Fail => 1,
        Outcome::Inconclusive => 3,
    }
}

/// Exit code for an error: 2 for bad input, 3 for numerical trouble.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Dimension { .. }
        | Error::Input(_)
        | Error::Precondition(_)
        | Error::Domain(_)
        | Error::Unsupported(_) => 2,
        Error::Solver { .. } | Error::Oracle(_) | Error::ExtReal(_) => 3,
    }
}

/// Runs one theorem on an instance and stamps the digest.
pub fn run_verify(theorem: TheoremId, inst: &Instance, tamper: &Tamper) -> Result<VerificationReport> {
    inst.validate()?;
    let mut rep = verify(theorem, inst, tamper)?;
    rep.instance_digest = inst.digest();
    Ok(rep)
}
