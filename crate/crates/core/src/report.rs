//! Structured verification results shared by every theorem check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::extreal::ExtReal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// Only boundary-band probes or an exhausted search budget.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    Pass,
    Fail,
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Vec<f64>>,
    pub lhs: ExtReal,
    pub rhs: ExtReal,
    pub gap: ExtReal,
    pub status: ProbeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub theorem: String,
    #[serde(default)]
    pub instance_digest: String,
    pub verdict: Outcome,
    pub probes: Vec<ProbeOutcome>,
    pub worst: BTreeMap<String, ExtReal>,
    #[serde(default)]
    pub certificates: Vec<serde_json::Value>,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Wall-clock time; the only field allowed to differ between identical runs.
    #[serde(default)]
    pub timing_ms: Option<f64>,
}

impl VerificationReport {
    pub fn new(theorem: &str) -> Self {
        VerificationReport {
            theorem: theorem.to_string(),
            instance_digest: String::new(),
            verdict: Outcome::Pass,
            probes: Vec::new(),
            worst: BTreeMap::new(),
            certificates: Vec::new(),
            notes: Vec::new(),
            timing_ms: None,
        }
    }

    pub fn push(&mut self, p: ProbeOutcome) {
        self.probes.push(p);
    }

    /// Records `value` under `key`, keeping the maximum seen so far.
    pub fn track(&mut self, key: &str, value: ExtReal) {
        let e = self.worst.entry(key.to_string()).or_insert(value);
        *e = e.max(value);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn count(&self, s: ProbeStatus) -> usize {
        self.probes.iter().filter(|p| p.status == s).count()
    }

    /// Pass when no probe failed and at least one probe passed; inconclusive when every
    /// probe sits in the band.
    pub fn finalize(&mut self) {
        self.verdict = if self.count(ProbeStatus::Fail) > 0 {
            Outcome::Fail
        } else if self.count(ProbeStatus::Pass) == 0 && !self.probes.is_empty() {
            Outcome::Inconclusive
        } else {
            Outcome::Pass
        };
    }

    pub fn fail(&mut self, why: impl Into<String>) {
        self.verdict = Outcome::Fail;
        self.notes.push(why.into());
    }

    pub fn passed(&self) -> bool {
        self.verdict == Outcome::Pass
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {:?} ({} pass, {} fail, {} band)",
            self.theorem,
            self.verdict,
            self.count(ProbeStatus::Pass),
            self.count(ProbeStatus::Fail),
            self.count(ProbeStatus::Band)
        );
        for (k, v) in &self.worst {
            s.push_str(&format!("\n  worst {k} = {v}"));
        }
        for n in &self.notes {
            s.push_str(&format!("\n  note: {n}"));
        }
        s
    }
}

/// Two-sided comparison probe: passes when `|lhs − rhs| ≤ tol`.
pub fn two_sided(label: String, direction: Option<Vec<f64>>, lhs: ExtReal, rhs: ExtReal, tol: f64) -> ProbeOutcome {
    let gap = crate::geometry::compare::ext_gap(lhs, rhs);
    let ok = match gap {
        ExtReal::Finite(g) => g.abs() <= tol,
        _ => false,
    };
    ProbeOutcome { label, direction, lhs, rhs, gap, status: if ok { ProbeStatus::Pass } else { ProbeStatus::Fail } }
}

/// Two-sided support comparison of two sets on the given directions (probe-parallel).
pub fn support_comparison(
    theorem: &str,
    dirs: &[nalgebra::DVector<f64>],
    lhs: impl Fn(&nalgebra::DVector<f64>) -> crate::Result<ExtReal> + Sync,
    rhs: impl Fn(&nalgebra::DVector<f64>) -> crate::Result<ExtReal> + Sync,
    tol: f64,
) -> crate::Result<VerificationReport> {
    use rayon::prelude::*;
    let probes: Vec<ProbeOutcome> = dirs
        .par_iter()
        .map(|v| -> crate::Result<ProbeOutcome> {
            let l = lhs(v)?;
            let r = rhs(v)?;
            Ok(two_sided(format!("v={:?}", v.as_slice()), Some(v.iter().copied().collect()), l, r, tol))
        })
        .collect::<crate::Result<_>>()?;
    let mut rep = VerificationReport::new(theorem);
    for p in probes {
        let g = match p.gap {
            ExtReal::Finite(x) => ExtReal::Finite(x.abs()),
            _ => ExtReal::PosInf,
        };
        rep.track("support_gap", g);
        rep.push(p);
    }
    rep.finalize();
    Ok(rep)
}
