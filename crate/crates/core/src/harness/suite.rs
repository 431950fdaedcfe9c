//! Suite runs: generated instances per entry, verified concurrently and merged in
//! digest order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{error_exit_code, generate, run_verify, Family, GenRequest, Params, ProbeConfig, Tamper, TheoremId, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::report::{Outcome, ProbeStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expect {
    #[default]
    Pass,
    Fail,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub theorem: TheoremId,
    pub family: Family,
    pub dim: usize,
    pub size: usize,
    #[serde(default = "one")]
    pub count: usize,
    /// Instance `i` is generated with `seed + i`.
    #[serde(default)]
    pub seed: u64,
    /// Overrides for the generated parameters; only the fields given are replaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub tamper: Tamper,
    #[serde(default)]
    pub expect: Expect,
    /// Row of the acceptance table this entry reports under.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub entries: Vec<SuiteEntry>,
}

impl SuiteConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: SuiteConfig = serde_json::from_str(s).map_err(|e| Error::Input(format!("suite config: {e}")))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!("unsupported schema_version {}", c.schema_version)));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntryResult {
    pub label: String,
    pub theorem: TheoremId,
    pub family: Family,
    pub seed: u64,
    pub instance_digest: String,
    pub verdict: Outcome,
    pub expect: Expect,
    pub met: bool,
    pub probes_pass: usize,
    pub probes_fail: usize,
    pub probes_band: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub label: String,
    pub instances: usize,
    pub met: usize,
    pub failures: usize,
    pub status: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub total: usize,
    pub met: usize,
    pub unmet: usize,
    /// Instances whose verdict is `fail`, expected or not.
    pub failures: usize,
    pub table: Vec<CriterionRow>,
    pub results: Vec<SuiteEntryResult>,
}

impl SuiteReport {
    /// 0 when every instance met its expectation.
    pub fn exit_code(&self) -> i32 {
        if self.unmet == 0 {
            0
        } else {
            1
        }
    }

    pub fn table_text(&self) -> String {
        let mut s = format!("{:<24} {:>9} {:>6} {:>9}  status\n", "criterion", "instances", "met", "failures");
        for r in &self.table {
            s.push_str(&format!("{:<24} {:>9} {:>6} {:>9}  {:?}\n", r.label, r.instances, r.met, r.failures, r.status));
        }
        s.push_str(&format!("total {} · met {} · unmet {} · failures {}\n", self.total, self.met, self.unmet, self.failures));
        s
    }
}

fn overlay(base: &mut Params, over: &Params) {
    if over.delta.is_some() {
        base.delta = over.delta;
    }
    if over.eps.is_some() {
        base.eps = over.eps;
    }
    if over.lambda.is_some() {
        base.lambda = over.lambda;
    }
    if over.alpha.is_some() {
        base.alpha = over.alpha;
    }
}

struct Job<'a> {
    entry: &'a SuiteEntry,
    seed: u64,
}

fn run_job(job: &Job) -> Result<SuiteEntryResult> {
    let e = job.entry;
    let ctx = |err: Error| -> Error {
        let msg = format!("{} on {:?} dim {} size {} seed {}: {err}", e.theorem, e.family, e.dim, e.size, job.seed);
        match err {
            Error::Solver { residual, .. } => Error::Solver { message: msg, residual },
            Error::Oracle(_) => Error::Oracle(msg),
            Error::ExtReal(_) => Error::Oracle(msg),
            _ => Error::Input(msg),
        }
    };
    let mut inst = generate(&GenRequest { family: e.family, dim: e.dim, size: e.size, seed: job.seed }).map_err(ctx)?;
    if let Some(p) = &e.params {
        overlay(&mut inst.params, p);
    }
    if let Some(p) = &e.probe {
        inst.probe = p.clone();
    }
    let label = e.label.clone().unwrap_or_else(|| e.theorem.to_string());
    let digest = inst.digest();
    let base = SuiteEntryResult {
        label,
        theorem: e.theorem,
        family: e.family,
        seed: job.seed,
        instance_digest: digest,
        verdict: Outcome::Inconclusive,
        expect: e.expect,
        met: false,
        probes_pass: 0,
        probes_fail: 0,
        probes_band: 0,
        error: None,
    };
    match run_verify(e.theorem, &inst, &e.tamper) {
        Ok(rep) => {
            let met = match e.expect {
                Expect::Pass => rep.verdict == Outcome::Pass,
                Expect::Fail => rep.verdict == Outcome::Fail,
            };
            Ok(SuiteEntryResult {
                verdict: rep.verdict,
                met,
                probes_pass: rep.count(ProbeStatus::Pass),
                probes_fail: rep.count(ProbeStatus::Fail),
                probes_band: rep.count(ProbeStatus::Band),
                ..base
            })
        }
        Err(err) if error_exit_code(&err) == 2 => Err(ctx(err)),
        Err(err) => Ok(SuiteEntryResult { error: Some(err.to_string()), ..base }),
    }
}

/// Runs every entry; `jobs` bounds the number of concurrent instances. Input errors
/// abort the run with the offending entry in the message.
pub fn run_suite(config: &SuiteConfig, jobs: Option<usize>) -> Result<SuiteReport> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(Error::Input(format!("unsupported schema_version {}", config.schema_version)));
    }
    let work: Vec<Job> = config
        .entries
        .iter()
        .flat_map(|e| (0..e.count).map(move |i| Job { entry: e, seed: e.seed.wrapping_add(i as u64) }))
        .collect();
    let exec = || work.par_iter().map(run_job).collect::<Result<Vec<_>>>();
    let mut results = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?
            .install(exec)?,
        None => exec()?,
    };
    results.sort_by(|a, b| {
        (&a.instance_digest, a.theorem, &a.label, a.tamper_key()).cmp(&(&b.instance_digest, b.theorem, &b.label, b.tamper_key()))
    });
    let mut rows: BTreeMap<String, CriterionRow> = BTreeMap::new();
    for r in &results {
        let row = rows.entry(r.label.clone()).or_insert_with(|| CriterionRow {
            label: r.label.clone(),
            instances: 0,
            met: 0,
            failures: 0,
            status: Outcome::Pass,
        });
        row.instances += 1;
        row.met += r.met as usize;
        row.failures += (r.verdict == Outcome::Fail) as usize;
        if !r.met {
            row.status = Outcome::Fail;
        }
    }
    let met = results.iter().filter(|r| r.met).count();
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        total: results.len(),
        met,
        unmet: results.len() - met,
        failures: results.iter().filter(|r| r.verdict == Outcome::Fail).count(),
        table: rows.into_values().collect(),
        results,
    })
}

impl SuiteEntryResult {
    fn tamper_key(&self) -> (u8, u64) {
        (self.expect as u8, self.seed)
    }
}
