//! Replication-study driver: generate data at the truth, run the requested
//! estimators, collect per-replication records, and aggregate relative bias
//! (RB), empirical SE (ESE), and relative bias in SE (RBSE).

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acm::{estimate_acm, AcmConfig};
use crate::dga::draw_components;
use crate::error::{Error, Result};
use crate::model::{StudyModel, TwoStageModel};
use crate::params::{split, ParameterVector};
use crate::rm::{robbins_monro, RmConfig, RmTrace};
use crate::rng;
use crate::study::{truth, ScoreChoice, Study};

/// Stream-domain tag for the observed dataset of each replication.
pub const STREAM_DATA: u64 = 0xDA7A;
/// Stream-domain tag for the naive-estimator bootstrap (BR slope SEs).
pub const STREAM_FSR_BOOT: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fsr,
    Bc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Fsr => "fsr",
            Method::Bc => "bc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fsr" => Ok(Method::Fsr),
            "bc" => Ok(Method::Bc),
            other => Err(Error::Usage(format!("unknown method {other:?} (expected fsr or bc)"))),
        }
    }
}

/// Full description of one replication study run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: u32,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub scores: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_k")]
    pub rm_iterations: usize,
    #[serde(default = "default_a")]
    pub rm_a: f64,
    #[serde(default = "default_b")]
    pub rm_b: f64,
    #[serde(default = "default_one")]
    pub rm_mc_per_iter: usize,
    #[serde(default = "default_m")]
    pub acm_replications: usize,
    /// Perturbation constant; zero means "the study default".
    #[serde(default)]
    pub acm_delta: f64,
    /// Number of consecutive perturbation blocks; zero means the default.
    #[serde(default)]
    pub acm_blocks: usize,
    #[serde(default)]
    pub compute_se: bool,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Fsr, Method::Bc]
}
fn default_k() -> usize {
    1000
}
fn default_a() -> f64 {
    3.0
}
fn default_b() -> f64 {
    0.6
}
fn default_one() -> usize {
    1
}
fn default_m() -> usize {
    1000
}

impl StudyConfig {
    pub fn new(study: Study, n: usize, reps: usize, seed: u64, scores: ScoreChoice) -> Self {
        Self {
            study: study.index(),
            n,
            reps,
            seed,
            scores: scores.label().to_string(),
            methods: default_methods(),
            rm_iterations: default_k(),
            rm_a: default_a(),
            rm_b: default_b(),
            rm_mc_per_iter: 1,
            acm_replications: default_m(),
            acm_delta: 0.0,
            acm_blocks: 0,
            compute_se: false,
        }
    }

    pub fn study_enum(&self) -> Result<Study> {
        Study::from_index(self.study)
    }

    pub fn score_choice(&self) -> Result<ScoreChoice> {
        ScoreChoice::parse(&self.scores)
    }

    /// Study-specific defaults for unset covariance tuning.
    pub fn resolved_delta(&self) -> Result<f64> {
        if self.acm_delta > 0.0 {
            return Ok(self.acm_delta);
        }
        Ok(match self.study_enum()? {
            Study::One | Study::Two => 1e-6,
            Study::Three => 0.005,
        })
    }

    pub fn resolved_blocks(&self) -> Result<usize> {
        if self.acm_blocks > 0 {
            return Ok(self.acm_blocks);
        }
        Ok(match self.study_enum()? {
            Study::One | Study::Two => 1,
            Study::Three => 15,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let study = self.study_enum()?;
        let score = self.score_choice()?;
        if !study.valid_scores().contains(&score) {
            return Err(Error::Usage(format!(
                "scores: {} is not valid for study {}",
                score.label(),
                study.index()
            )));
        }
        if self.reps < 1 {
            return Err(Error::Usage("reps: at least one replication required".into()));
        }
        if self.n < 50 {
            return Err(Error::Usage("n: sample size must be at least 50".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Usage("methods: choose at least one of fsr, bc".into()));
        }
        if !(self.rm_a > 0.0) {
            return Err(Error::Usage("rm_a: learning-rate multiplier must be positive".into()));
        }
        if !(self.rm_b > 0.5 && self.rm_b <= 1.0) {
            return Err(Error::Usage("rm_b: decay exponent must lie in (0.5, 1]".into()));
        }
        if self.rm_iterations < 2 {
            return Err(Error::Usage("rm_iterations: need at least 2".into()));
        }
        if self.compute_se && self.acm_replications < 2 {
            return Err(Error::Usage("acm_replications: need at least 2".into()));
        }
        Ok(())
    }
}

/// One estimate produced by one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub method: String,
    pub param: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub runtime_ms: u64,
    pub flags: String,
}

/// Aggregated metrics for one (method, parameter) cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: String,
    pub param: String,
    pub rb: f64,
    pub ese: f64,
    pub rbse: Option<f64>,
    pub reps: usize,
    pub flags: String,
}

#[derive(Debug, Clone, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, method: &str, param: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.param == param)
    }
}

/// Run one replication: simulate at the truth, apply the requested methods,
/// and return records. Method-level failures come back as flagged records
/// with NaN estimates rather than aborting the replication.
pub fn run_replication(cfg: &StudyConfig, rep: usize) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    let study = cfg.study_enum()?;
    let score = cfg.score_choice()?;
    let model = StudyModel::new(study, score, cfg.n)?;
    let theta_star = truth(study);
    let focal_names = study.focal_names();

    let data_stream = rng::chain(&[STREAM_DATA, rep as u64]);
    let u = draw_components(cfg.n, model.layout(), cfg.seed, data_stream);
    let y = study.generate(&u, &theta_star.values)?;

    let mut records = Vec::new();
    let stage1_start = Instant::now();
    let nu_hat = match model.nuisance_estimate(&y) {
        Ok(nu) => nu,
        Err(e) => {
            for method in &cfg.methods {
                for name in &focal_names {
                    records.push(ReplicationRecord {
                        rep,
                        method: method.label().into(),
                        param: name.clone(),
                        estimate: f64::NAN,
                        se: None,
                        runtime_ms: 0,
                        flags: format!("stage1_failed:{e}"),
                    });
                }
            }
            return Ok(records);
        }
    };
    let stage1_ms = stage1_start.elapsed().as_millis() as u64;

    let naive_start = Instant::now();
    let phi_naive = model.initial_estimate(&y, &nu_hat);
    let naive_ms = stage1_ms + naive_start.elapsed().as_millis() as u64;

    let phi_naive = match phi_naive {
        Ok(p) => p,
        Err(e) => {
            for method in &cfg.methods {
                for name in &focal_names {
                    records.push(ReplicationRecord {
                        rep,
                        method: method.label().into(),
                        param: name.clone(),
                        estimate: f64::NAN,
                        se: None,
                        runtime_ms: naive_ms,
                        flags: format!("stage2_failed:{e}"),
                    });
                }
            }
            return Ok(records);
        }
    };

    let rep_seed = rng::chain(&[cfg.seed, rep as u64]);

    if cfg.methods.contains(&Method::Fsr) {
        let mut ses: Vec<Option<f64>> = vec![None; focal_names.len()];
        let mut flags = String::new();
        let mut fsr_ms = naive_ms;
        if cfg.compute_se && score == ScoreChoice::BR {
            // the mixed-score slope is the one consistent coordinate; its SE
            // comes from a parametric bootstrap of the full naive estimator
            let t = Instant::now();
            match br_slope_bootstrap_se(&model, &nu_hat, &phi_naive, cfg, rep_seed) {
                Ok(se) => {
                    if let Some(idx) = focal_names.iter().position(|n| n == "beta") {
                        ses[idx] = Some(se);
                    }
                }
                Err(e) => flags = format!("fsr_boot_failed:{e}"),
            }
            fsr_ms += t.elapsed().as_millis() as u64;
        }
        for (i, name) in focal_names.iter().enumerate() {
            records.push(ReplicationRecord {
                rep,
                method: "fsr".into(),
                param: name.clone(),
                estimate: phi_naive[i],
                se: ses[i],
                runtime_ms: fsr_ms,
                flags: flags.clone(),
            });
        }
    }

    if cfg.methods.contains(&Method::Bc) {
        let t = Instant::now();
        let rm_cfg = RmConfig {
            iterations: cfg.rm_iterations,
            a: cfg.rm_a,
            b: cfg.rm_b,
            mc_per_iter: cfg.rm_mc_per_iter,
            feasibility: study.feasibility(),
            phi0: phi_naive.clone(),
        };
        match robbins_monro(&phi_naive, &nu_hat, &rm_cfg, &model, rep_seed) {
            Ok(trace) => {
                let mut flags = if trace.projection_hits > 0 {
                    format!("projection_hits={}", trace.projection_hits)
                } else {
                    String::new()
                };
                let mut ses: Vec<Option<f64>> = vec![None; focal_names.len()];
                if cfg.compute_se {
                    let mut theta_bc = nu_hat.clone();
                    theta_bc.extend_from_slice(&trace.phi_bc);
                    let acm_cfg = AcmConfig {
                        replications: cfg.acm_replications,
                        delta: cfg.resolved_delta()?,
                        blocks: AcmConfig::consecutive_blocks(study.q(), cfg.resolved_blocks()?),
                        seed: rep_seed,
                        feasibility: Some(study.feasibility()),
                    };
                    match estimate_acm(&theta_bc, &acm_cfg, &model) {
                        Ok(acm) => {
                            for (i, se) in acm.ses.iter().enumerate() {
                                ses[i] = Some(*se);
                            }
                            if acm.skipped_bootstrap + acm.skipped_sp > 0 {
                                push_flag(
                                    &mut flags,
                                    &format!(
                                        "acm_skipped={}",
                                        acm.skipped_bootstrap + acm.skipped_sp
                                    ),
                                );
                            }
                            for w in &acm.warnings {
                                push_flag(&mut flags, w);
                            }
                        }
                        Err(e) => push_flag(&mut flags, &format!("se_failed:{e}")),
                    }
                }
                let bc_ms = naive_ms + t.elapsed().as_millis() as u64;
                for (i, name) in focal_names.iter().enumerate() {
                    records.push(ReplicationRecord {
                        rep,
                        method: "bc".into(),
                        param: name.clone(),
                        estimate: trace.phi_bc[i],
                        se: ses[i],
                        runtime_ms: bc_ms,
                        flags: flags.clone(),
                    });
                }
            }
            Err(e) => {
                let bc_ms = naive_ms + t.elapsed().as_millis() as u64;
                for name in &focal_names {
                    records.push(ReplicationRecord {
                        rep,
                        method: "bc".into(),
                        param: name.clone(),
                        estimate: f64::NAN,
                        se: None,
                        runtime_ms: bc_ms,
                        flags: format!("bc_failed:{e}"),
                    });
                }
            }
        }
    }

    Ok(records)
}

fn push_flag(flags: &mut String, item: &str) {
    if !flags.is_empty() {
        flags.push(';');
    }
    flags.push_str(item);
}

/// Parametric bootstrap SE of the naive slope at the plug-in estimate,
/// refitting both stages on every draw.
fn br_slope_bootstrap_se(
    model: &StudyModel,
    nu_hat: &[f64],
    phi_naive: &[f64],
    cfg: &StudyConfig,
    rep_seed: u64,
) -> Result<f64> {
    let beta_idx = model
        .study
        .focal_names()
        .iter()
        .position(|n| n == "beta")
        .ok_or_else(|| Error::Structural("no slope parameter in this study".into()))?;
    let mut theta_plug = nu_hat.to_vec();
    theta_plug.extend_from_slice(phi_naive);
    let draws: Vec<Option<f64>> = (0..cfg.acm_replications)
        .into_par_iter()
        .map(|m| {
            let stream = rng::chain(&[STREAM_FSR_BOOT, m as u64]);
            let u = draw_components(model.n(), model.layout(), rep_seed, stream);
            model
                .generate(&u, &theta_plug)
                .and_then(|y| {
                    let nu = model.nuisance_estimate(&y)?;
                    let phi = model.initial_estimate(&y, &nu)?;
                    Ok(phi[beta_idx])
                })
                .ok()
        })
        .collect();
    let kept: Vec<f64> = draws.into_iter().flatten().collect();
    if (cfg.acm_replications - kept.len()) as f64 > 0.05 * cfg.acm_replications as f64 {
        return Err(Error::Numerical("too many bootstrap draws failed".into()));
    }
    let m = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / m;
    Ok((kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
}

/// Run all replications on a worker pool and return records sorted by
/// (rep, method, canonical parameter index). Results are bit-identical for
/// any worker count because every replication derives its own streams.
pub fn run_study(cfg: &StudyConfig, threads: usize) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("worker pool: {e}")))?;
    let per_rep: Vec<Result<Vec<ReplicationRecord>>> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|r| run_replication(cfg, r)).collect());
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    let study = cfg.study_enum()?;
    let order = study.focal_names();
    let param_rank = |p: &str| order.iter().position(|n| n == p).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (a.rep, &a.method, param_rank(&a.param)).cmp(&(b.rep, &b.method, param_rank(&b.param)))
    });
    Ok(records)
}

/// Aggregate records against the truth.
///
/// RB = (mean - truth) / truth, or the absolute bias with a flag when the
/// true value is zero. ESE is the sample SD of the estimates. RBSE compares
/// the root mean squared reported SE against the ESE.
pub fn aggregate(records: &[ReplicationRecord], truth: &ParameterVector) -> Result<SummaryTable> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.param.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::new();
    for (method, param) in keys {
        let cell: Vec<&ReplicationRecord> = records
            .iter()
            .filter(|r| r.method == method && r.param == param && r.estimate.is_finite())
            .collect();
        if cell.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 valid replications for ({method}, {param})"
            )));
        }
        let truth_idx = truth
            .index_of(&param)
            .ok_or_else(|| Error::Data(format!("parameter {param} missing from the truth vector")))?;
        let true_val = truth.values[truth_idx];
        let reps = cell.len();
        let mean = cell.iter().map(|r| r.estimate).sum::<f64>() / reps as f64;
        let ese = (cell.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>()
            / (reps as f64 - 1.0))
            .sqrt();
        let mut flags = String::new();
        let rb = if true_val == 0.0 {
            flags = "absolute_bias".into();
            mean
        } else {
            (mean - true_val) / true_val
        };
        let ses: Vec<f64> = cell.iter().filter_map(|r| r.se).collect();
        let rbse = if ses.is_empty() {
            None
        } else {
            let rmse = (ses.iter().map(|s| s * s).sum::<f64>() / ses.len() as f64).sqrt();
            Some((rmse - ese) / ese)
        };
        rows.push(SummaryRow { method, param, rb, ese, rbse, reps, flags });
    }
    Ok(SummaryTable { rows })
}

// ---------------------------------------------------------------------------
// CSV and JSON persistence
// ---------------------------------------------------------------------------

pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], mut w: W) -> Result<()> {
    writeln!(w, "rep,method,param,estimate,se,runtime_ms,flags")?;
    for r in records {
        let se = r.se.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.rep, r.method, r.param, r.estimate, se, r.runtime_ms, r.flags
        )?;
    }
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<ReplicationRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() < 7 {
            return Err(Error::Data("records CSV needs 7 columns".into()));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Data(format!("bad number {s:?}: {e}")))
        };
        out.push(ReplicationRecord {
            rep: rec[0].parse().map_err(|e| Error::Data(format!("bad rep: {e}")))?,
            method: rec[1].to_string(),
            param: rec[2].to_string(),
            estimate: parse_f(&rec[3])?,
            se: if rec[4].is_empty() { None } else { Some(parse_f(&rec[4])?) },
            runtime_ms: rec[5].parse().unwrap_or(0),
            flags: rec[6].to_string(),
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(table: &SummaryTable, mut w: W) -> Result<()> {
    writeln!(w, "method,param,rb,ese,rbse,reps")?;
    for r in &table.rows {
        let rbse = r.rbse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", r.method, r.param, r.rb, r.ese, rbse, r.reps)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthJson {
    names: Vec<String>,
    values: Vec<f64>,
}

pub fn write_truth_json<W: Write>(theta: &ParameterVector, w: W) -> Result<()> {
    serde_json::to_writer_pretty(
        w,
        &TruthJson { names: theta.names.clone(), values: theta.values.clone() },
    )?;
    Ok(())
}

pub fn read_truth_json<R: Read>(r: R) -> Result<ParameterVector> {
    let t: TruthJson = serde_json::from_reader(r)?;
    ParameterVector::new(t.names, t.values)
}

// ---------------------------------------------------------------------------
// Bias correction of a user-supplied dataset
// ---------------------------------------------------------------------------

/// Tuning for correcting a single dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectOptions {
    pub scores: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub rm_iterations: usize,
    #[serde(default = "default_a")]
    pub rm_a: f64,
    #[serde(default = "default_b")]
    pub rm_b: f64,
    #[serde(default = "default_one")]
    pub rm_mc_per_iter: usize,
    #[serde(default = "default_m")]
    pub acm_replications: usize,
    #[serde(default)]
    pub acm_delta: f64,
    #[serde(default)]
    pub acm_blocks: usize,
    #[serde(default = "default_true")]
    pub compute_se: bool,
}

fn default_seed() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

impl CorrectOptions {
    pub fn new(scores: ScoreChoice) -> Self {
        Self {
            scores: scores.label().to_string(),
            seed: default_seed(),
            rm_iterations: default_k(),
            rm_a: default_a(),
            rm_b: default_b(),
            rm_mc_per_iter: 1,
            acm_replications: default_m(),
            acm_delta: 0.0,
            acm_blocks: 0,
            compute_se: true,
        }
    }
}

/// Result of correcting one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct CorrectOutcome {
    pub study: u32,
    pub n: usize,
    pub scores: String,
    pub focal_names: Vec<String>,
    pub nu_hat: Vec<f64>,
    pub phi_naive: Vec<f64>,
    pub phi_bc: Vec<f64>,
    pub ses: Option<Vec<f64>>,
    pub projection_hits: usize,
    pub warnings: Vec<String>,
}

/// Two-stage fit plus bias correction (and optionally SEs) for one dataset.
pub fn correct_dataset(
    y: &crate::dga::Dataset,
    study: Study,
    opts: &CorrectOptions,
) -> Result<CorrectOutcome> {
    let score = ScoreChoice::parse(&opts.scores)?;
    let model = StudyModel::new(study, score, y.n())?;
    let nu_hat = model.nuisance_estimate(y)?;
    let phi_naive = model.initial_estimate(y, &nu_hat)?;
    let rm_cfg = RmConfig {
        iterations: opts.rm_iterations,
        a: opts.rm_a,
        b: opts.rm_b,
        mc_per_iter: opts.rm_mc_per_iter,
        feasibility: study.feasibility(),
        phi0: phi_naive.clone(),
    };
    let trace = robbins_monro(&phi_naive, &nu_hat, &rm_cfg, &model, opts.seed)?;
    let mut warnings = Vec::new();
    let ses = if opts.compute_se {
        let mut theta_bc = nu_hat.clone();
        theta_bc.extend_from_slice(&trace.phi_bc);
        let delta = if opts.acm_delta > 0.0 {
            opts.acm_delta
        } else if study == Study::Three {
            0.005
        } else {
            1e-6
        };
        let blocks = if opts.acm_blocks > 0 {
            opts.acm_blocks
        } else if study == Study::Three {
            15
        } else {
            1
        };
        let acm_cfg = AcmConfig {
            replications: opts.acm_replications,
            delta,
            blocks: AcmConfig::consecutive_blocks(study.q(), blocks),
            seed: rng::chain(&[opts.seed, 1]),
            feasibility: Some(study.feasibility()),
        };
        let acm = estimate_acm(&theta_bc, &acm_cfg, &model)?;
        warnings.extend(acm.warnings.clone());
        Some(acm.ses)
    } else {
        None
    };
    Ok(CorrectOutcome {
        study: study.index(),
        n: y.n(),
        scores: score.label().to_string(),
        focal_names: study.focal_names(),
        nu_hat,
        phi_naive,
        phi_bc: trace.phi_bc.clone(),
        ses,
        projection_hits: trace.projection_hits,
        warnings,
    })
}

/// Rerun one replication's bias-correction trajectory (for diagnostics).
pub fn replication_trace(cfg: &StudyConfig, rep: usize) -> Result<RmTrace> {
    cfg.validate()?;
    let study = cfg.study_enum()?;
    let score = cfg.score_choice()?;
    let model = StudyModel::new(study, score, cfg.n)?;
    let theta_star = truth(study);
    let u = draw_components(cfg.n, model.layout(), cfg.seed, rng::chain(&[STREAM_DATA, rep as u64]));
    let y = study.generate(&u, &theta_star.values)?;
    let nu_hat = model.nuisance_estimate(&y)?;
    let phi_naive = model.initial_estimate(&y, &nu_hat)?;
    let rm_cfg = RmConfig {
        iterations: cfg.rm_iterations,
        a: cfg.rm_a,
        b: cfg.rm_b,
        mc_per_iter: cfg.rm_mc_per_iter,
        feasibility: study.feasibility(),
        phi0: phi_naive.clone(),
    };
    robbins_monro(&phi_naive, &nu_hat, &rm_cfg, &model, rng::chain(&[cfg.seed, rep as u64]))
}

/// The split truth vector for a study: (full, focal-only with names).
pub fn focal_truth(study: Study) -> ParameterVector {
    let theta = truth(study);
    let (_, phi) = split(&theta, &study.partition()).expect("study partition is valid");
    ParameterVector::new(study.focal_names(), phi).expect("focal names are unique")
}
