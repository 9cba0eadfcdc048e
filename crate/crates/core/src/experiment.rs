//! Configuration-driven studies: error scaling in the number of copies and in
//! the number of input states, ensemble comparisons, design audits and the
//! dense cross-check.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{cnot_channel, identity_channel, random_channel, KrausChannel};
use crate::detectors::{cube_povm, design_metrics_c, mub_povm, random_bases_povm, sic_povm, DesignReportC, PovmCollection};
use crate::ensembles::{
    design_metrics_v, mub_states, natural_basis_states, product_ensemble, random_states,
    sic_states, DesignReportV, InputEnsemble,
};
use crate::error::{QptError, Result};
use crate::io::JsonDocument;
use crate::metrics::{design_bound, ErrorReport};
use crate::simulator::{ideal_probabilities, sample_record, MeasurementRecord};
use crate::tensorkit::{kron, max_abs, r_map, CMatrix};
use crate::tss::oracle::{dense_b, dense_oracle_estimate};
use crate::tss::Reconstructor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Cnot,
    Identity { d: usize },
    /// Three-Kraus random channel; `seed` defaults to one derived from the global seed.
    Random {
        d: usize,
        #[serde(default = "yes")]
        tp: bool,
        #[serde(default)]
        seed: Option<u64>,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnsembleSpec {
    Sic { d: usize },
    Mub { d: usize },
    Natural { d: usize },
    /// `fresh = true` draws a new ensemble for every trial.
    Random {
        d: usize,
        m: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        fresh: bool,
    },
    /// Products of single-qubit MUB states on `qubits` qubits.
    ProductMub { qubits: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PovmSpec {
    Cube { qubits: usize },
    Mub { d: usize },
    Sic { d: usize },
    RandomBases { d: usize, sets: usize, seed: u64 },
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

fn default_trials() -> usize {
    20
}

/// Study configuration, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub tp_prior: bool,
    /// Total copies `N_t` per point of a copies-scaling study or comparison.
    #[serde(default)]
    pub copies_total: Vec<u64>,
    /// Copies per input state for the M-scaling study.
    #[serde(default)]
    pub copies_per_state: Option<u64>,
    /// Ensemble sizes for the M-scaling study (random states).
    #[serde(default)]
    pub m_values: Vec<usize>,
    /// Ensembles to compare at each `N_t`.
    #[serde(default)]
    pub compare: Vec<EnsembleSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    pub povm: PovmSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| QptError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| QptError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(QptError::Config("trials must be at least 1".into()));
        }
        if self.copies_total.contains(&0) {
            return Err(QptError::Config("copies_total entries must be positive".into()));
        }
        if self.copies_per_state == Some(0) {
            return Err(QptError::Config("copies_per_state must be positive".into()));
        }
        Ok(())
    }

    pub fn build_channel(&self) -> Result<KrausChannel> {
        match &self.channel {
            ChannelSpec::Cnot => Ok(cnot_channel()),
            ChannelSpec::Identity { d } => Ok(identity_channel(*d)),
            ChannelSpec::Random { d, tp, seed } => {
                random_channel(*d, *tp, seed.unwrap_or_else(|| derive_seed(self.seed, &[0xC4A7])))
            }
            ChannelSpec::File { path } => KrausChannel::load(path),
        }
    }

    pub fn build_povm(&self) -> Result<PovmCollection> {
        build_povm(&self.povm)
    }

    /// The configured ensemble, drawn with the study-wide seed if random.
    pub fn build_ensemble(&self) -> Result<InputEnsemble> {
        build_ensemble(self.ensemble_spec()?, shared_seed(self.seed))
    }

    fn ensemble_spec(&self) -> Result<&EnsembleSpec> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| QptError::Config("missing [ensemble] section".into()))
    }
}

pub fn build_povm(spec: &PovmSpec) -> Result<PovmCollection> {
    match spec {
        PovmSpec::Cube { qubits } => cube_povm(*qubits),
        PovmSpec::Mub { d } => mub_povm(*d),
        PovmSpec::Sic { d } => sic_povm(*d),
        PovmSpec::RandomBases { d, sets, seed } => random_bases_povm(*d, *sets, *seed),
        PovmSpec::File { path } => PovmCollection::load(path),
    }
}

/// Build an ensemble; `draw_seed` is used for random ensembles without a fixed seed.
pub fn build_ensemble(spec: &EnsembleSpec, draw_seed: u64) -> Result<InputEnsemble> {
    match spec {
        EnsembleSpec::Sic { d } => sic_states(*d),
        EnsembleSpec::Mub { d } => mub_states(*d),
        EnsembleSpec::Natural { d } => natural_basis_states(*d),
        EnsembleSpec::Random { d, m, seed, fresh } => {
            let s = if *fresh { draw_seed } else { seed.unwrap_or(draw_seed) };
            random_states(*d, *m, s)
        }
        EnsembleSpec::ProductMub { qubits } => {
            let q = mub_states(2)?;
            product_ensemble(&vec![q; (*qubits).max(1)])
        }
        EnsembleSpec::File { path } => InputEnsemble::load(path),
    }
}

fn shared_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0xE5])
}

fn is_fresh(spec: &EnsembleSpec) -> bool {
    matches!(spec, EnsembleSpec::Random { fresh: true, .. })
}

/// Deterministic seed from a global seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("32-byte digest"))
}

/// One point of a study (one `N_t`, one `M` or one ensemble).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub ensemble: String,
    pub m: usize,
    pub copies_total: u64,
    pub copies_per_state: u64,
    pub trials: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_frob: f64,
    pub mean_infidelity: f64,
    pub std_infidelity: f64,
    pub bound_functional: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: String,
    pub channel: String,
    pub povm: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<StudyRow>,
    /// Log-log slope of mean MSE against the study's abscissa.
    pub mse_slope: Option<f64>,
    pub infidelity_slope: Option<f64>,
}

/// All trials of one point. Unless the ensemble is redrawn per trial, the
/// ensemble, its reconstructor and the ideal probabilities are built once.
fn run_point(
    cfg: &ExperimentConfig,
    channel: &KrausChannel,
    povm: &PovmCollection,
    spec: &EnsembleSpec,
    copies_per_state: u64,
    point: u64,
    copies_total: u64,
) -> Result<StudyRow> {
    let start = Instant::now();
    let x = channel.process_matrix();
    let shared = if is_fresh(spec) {
        None
    } else {
        let e = build_ensemble(spec, shared_seed(cfg.seed))?;
        let rc = Reconstructor::new(&e, povm)?;
        let probs = ideal_probabilities(&x, &e, povm)?;
        Some((e, rc, probs))
    };
    let outcomes: Vec<Result<(ErrorReport, String, usize)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(cfg.seed, &[point, t as u64]);
            let local;
            let (e, rc, probs) = match &shared {
                Some((e, rc, p)) => (e, rc, p),
                None => {
                    let e = build_ensemble(spec, shared_seed(trial_seed))?;
                    let rc = Reconstructor::new(&e, povm)?;
                    let p = ideal_probabilities(&x, &e, povm)?;
                    local = (e, rc, p);
                    (&local.0, &local.1, &local.2)
                }
            };
            let rec = sample_record(probs, &povm.sizes(), copies_per_state, trial_seed)?;
            let est = rc.estimate(&rec, cfg.tp_prior)?;
            let bound = design_bound(&x, e, povm, copies_per_state)?;
            Ok((
                ErrorReport::new(&est.x_hat, x.matrix(), bound)?,
                e.label().to_owned(),
                e.len(),
            ))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mses: Vec<f64> = outcomes.iter().map(|o| o.0.mse).collect();
    let infs: Vec<f64> = outcomes.iter().map(|o| o.0.infidelity).collect();
    let frobs: Vec<f64> = outcomes.iter().map(|o| o.0.frob_error).collect();
    let bounds: Vec<f64> = outcomes.iter().map(|o| o.0.bound_functional).collect();
    let (label, m) = (outcomes[0].1.clone(), outcomes[0].2);
    let label = if is_fresh(spec) {
        format!("random-{}-{m}-fresh", x.dim())
    } else {
        label
    };
    Ok(StudyRow {
        ensemble: label,
        m,
        copies_total,
        copies_per_state,
        trials: cfg.trials,
        mean_mse: mean(&mses),
        std_mse: std_dev(&mses),
        mean_frob: mean(&frobs),
        mean_infidelity: mean(&infs),
        std_infidelity: std_dev(&infs),
        bound_functional: mean(&bounds),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn ensemble_size(spec: &EnsembleSpec) -> Result<usize> {
    Ok(match spec {
        EnsembleSpec::Sic { d } | EnsembleSpec::Natural { d } => d * d,
        EnsembleSpec::Mub { d } => d * (d + 1),
        EnsembleSpec::Random { m, .. } => *m,
        EnsembleSpec::ProductMub { qubits } => 6usize.pow(*qubits as u32),
        EnsembleSpec::File { .. } => build_ensemble(spec, 0)?.len(),
    })
}

fn per_state(copies_total: u64, m: usize) -> Result<u64> {
    if !copies_total.is_multiple_of(m as u64) {
        return Err(QptError::Config(format!(
            "N_t = {copies_total} is not divisible by M = {m}"
        )));
    }
    Ok(copies_total / m as u64)
}

fn context(cfg: &ExperimentConfig) -> Result<(KrausChannel, PovmCollection)> {
    let channel = cfg.build_channel()?;
    let povm = cfg.build_povm()?;
    if channel.dim() != povm.dim() {
        return Err(QptError::Config(format!(
            "channel acts on d = {}, POVM on d = {}",
            channel.dim(),
            povm.dim()
        )));
    }
    Ok((channel, povm))
}

fn result(
    study: &str,
    cfg: &ExperimentConfig,
    channel: &KrausChannel,
    povm: &PovmCollection,
    rows: Vec<StudyRow>,
    x_of: impl Fn(&StudyRow) -> f64,
) -> StudyResult {
    let xs: Vec<f64> = rows.iter().map(&x_of).collect();
    let mse: Vec<f64> = rows.iter().map(|r| r.mean_mse).collect();
    let inf: Vec<f64> = rows.iter().map(|r| r.mean_infidelity).collect();
    StudyResult {
        study: study.into(),
        channel: channel.label().unwrap_or("channel").to_owned(),
        povm: povm.label().to_owned(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        mse_slope: loglog_slope(&xs, &mse),
        infidelity_slope: loglog_slope(&xs, &inf),
        rows,
    }
}

/// Error against total copies `N_t` for the configured ensemble.
pub fn run_scaling_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.copies_total.is_empty() {
        return Err(QptError::Config("copies_total is empty".into()));
    }
    let (channel, povm) = context(cfg)?;
    let spec = cfg.ensemble_spec()?;
    let m = ensemble_size(spec)?;
    let rows = cfg
        .copies_total
        .iter()
        .enumerate()
        .map(|(i, &nt)| run_point(cfg, &channel, &povm, spec, per_state(nt, m)?, i as u64, nt))
        .collect::<Result<Vec<_>>>()?;
    Ok(result("scaling", cfg, &channel, &povm, rows, |r| r.copies_total as f64))
}

/// Error against the number `M` of random input states at fixed copies per state.
/// Every trial draws a fresh Hilbert-Schmidt ensemble.
pub fn run_m_scaling_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let n = cfg
        .copies_per_state
        .ok_or_else(|| QptError::Config("copies_per_state is required".into()))?;
    if cfg.m_values.is_empty() {
        return Err(QptError::Config("m_values is empty".into()));
    }
    let (channel, povm) = context(cfg)?;
    let d = channel.dim();
    let rows = cfg
        .m_values
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let spec = EnsembleSpec::Random {
                d,
                m,
                seed: None,
                fresh: true,
            };
            run_point(cfg, &channel, &povm, &spec, n, i as u64, n * m as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(result("m-scaling", cfg, &channel, &povm, rows, |r| r.m as f64))
}

/// Mean error of each ensemble in `compare` at every `N_t`.
pub fn run_ensemble_comparison(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.compare.is_empty() || cfg.copies_total.is_empty() {
        return Err(QptError::Config("compare and copies_total must be non-empty".into()));
    }
    let (channel, povm) = context(cfg)?;
    let mut rows = Vec::new();
    for (k, spec) in cfg.compare.iter().enumerate() {
        let m = ensemble_size(spec)?;
        for (i, &nt) in cfg.copies_total.iter().enumerate() {
            let point = ((k as u64) << 32) | i as u64;
            rows.push(run_point(cfg, &channel, &povm, spec, per_state(nt, m)?, point, nt)?);
        }
    }
    let mut res = result("ensemble-comparison", cfg, &channel, &povm, rows, |r| r.copies_total as f64);
    res.mse_slope = None;
    res.infidelity_slope = None;
    Ok(res)
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (zero for a single value).
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

const CSV_COLUMNS: &str = "ensemble,m,copies_total,copies_per_state,trials,mean_mse,std_mse,mean_frob,mean_infidelity,std_infidelity,bound_functional,runtime_s";

/// Result table as comma-separated text with `#` provenance lines.
pub fn study_to_csv(res: &StudyResult) -> String {
    let mut s = String::new();
    let fmt = |v: Option<f64>| v.map_or_else(|| "none".into(), |x| format!("{x:.6}"));
    let _ = writeln!(
        s,
        "# study={} channel={} povm={} seed={} config_sha256={}",
        res.study, res.channel, res.povm, res.seed, res.config_hash
    );
    let _ = writeln!(
        s,
        "# mse_slope={} infidelity_slope={}",
        fmt(res.mse_slope),
        fmt(res.infidelity_slope)
    );
    let _ = writeln!(s, "{CSV_COLUMNS}");
    for r in &res.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:.4}",
            r.ensemble,
            r.m,
            r.copies_total,
            r.copies_per_state,
            r.trials,
            r.mean_mse,
            r.std_mse,
            r.mean_frob,
            r.mean_infidelity,
            r.std_infidelity,
            r.bound_functional,
            r.runtime_s
        );
    }
    s
}

/// Append the CSV block to `path` and one JSON line (result plus config) to
/// `path` with extension `.jsonl`.
pub fn append_outputs(res: &StudyResult, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut csv = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    csv.write_all(study_to_csv(res).as_bytes())?;
    let line = serde_json::json!({ "result": res, "config": cfg });
    let mut jsonl = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path.with_extension("jsonl"))?;
    writeln!(jsonl, "{}", serde_json::to_string(&line)?)?;
    Ok(())
}

/// Parsed target of a design audit.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignTarget {
    Ensemble(EnsembleSpec),
    Povm(PovmSpec),
}

/// Parse targets such as `sic 4`, `mub 2`, `natural 4`, `random 4 20 7`,
/// `product-mub 2`, `cube 2`, `mub-povm 4`, `sic-povm 4`,
/// `ensemble-file PATH`, `povm-file PATH`.
pub fn parse_design_target(s: &str) -> Result<DesignTarget> {
    let words: Vec<&str> = s.split_whitespace().collect();
    let num = |i: usize| -> Result<usize> {
        words
            .get(i)
            .ok_or_else(|| QptError::Config(format!("{s:?}: missing argument {i}")))?
            .parse()
            .map_err(|_| QptError::Config(format!("{s:?}: argument {i} is not a number")))
    };
    use DesignTarget::*;
    Ok(match words.first().copied() {
        Some("sic") => Ensemble(EnsembleSpec::Sic { d: num(1)? }),
        Some("mub") => Ensemble(EnsembleSpec::Mub { d: num(1)? }),
        Some("natural") => Ensemble(EnsembleSpec::Natural { d: num(1)? }),
        Some("random") => Ensemble(EnsembleSpec::Random {
            d: num(1)?,
            m: num(2)?,
            seed: Some(if words.len() > 3 { num(3)? as u64 } else { 0 }),
            fresh: false,
        }),
        Some("product-mub") => Ensemble(EnsembleSpec::ProductMub { qubits: num(1)? }),
        Some("cube") => Povm(PovmSpec::Cube { qubits: num(1)? }),
        Some("mub-povm") => Povm(PovmSpec::Mub { d: num(1)? }),
        Some("sic-povm") => Povm(PovmSpec::Sic { d: num(1)? }),
        Some("ensemble-file") if words.len() == 2 => Ensemble(EnsembleSpec::File { path: words[1].into() }),
        Some("povm-file") if words.len() == 2 => Povm(PovmSpec::File { path: words[1].into() }),
        _ => return Err(QptError::Config(format!("unknown design target {s:?}"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AuditReport {
    Ensemble { label: String, report: DesignReportV },
    Povm { label: String, report: DesignReportC },
}

impl AuditReport {
    pub fn achieves(&self) -> bool {
        match self {
            Self::Ensemble { report, .. } => report.achieves,
            Self::Povm { report, .. } => report.achieves,
        }
    }

    pub fn render(&self) -> String {
        let eigs = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        match self {
            Self::Ensemble { label, report: r } => {
                let _ = writeln!(s, "ensemble {label} (d = {}, M = {})", r.d, r.m);
                let _ = writeln!(s, "  cost      {:.6}   lower bound {:.6}", r.cost, r.lower_cost);
                let _ = writeln!(s, "  cond      {:.6}   lower bound {:.6}", r.cond, r.lower_cond);
                let _ = writeln!(s, "  eigs      {}", eigs(&r.eigs));
                let _ = writeln!(s, "  achieves  {}", r.achieves);
            }
            Self::Povm { label, report: r } => {
                let _ = writeln!(s, "povm {label} (d = {}, J = {}, sizes {:?})", r.d, r.j, r.sizes);
                let _ = writeln!(s, "  cost      {:.6}   lower bound {:.6}", r.cost, r.lower_cost);
                let _ = writeln!(s, "  cond      {:.6}   lower bound {:.6}", r.cond, r.lower_cond);
                let _ = writeln!(s, "  s         {:.6}", r.s);
                let _ = writeln!(s, "  eigs      {}", eigs(&r.eigs));
                let _ = writeln!(s, "  achieves  {}", r.achieves);
            }
        }
        s
    }
}

pub fn design_audit(target: &DesignTarget) -> Result<AuditReport> {
    match target {
        DesignTarget::Ensemble(spec) => {
            let e = build_ensemble(spec, 0)?;
            Ok(AuditReport::Ensemble {
                label: e.label().to_owned(),
                report: design_metrics_v(&e)?,
            })
        }
        DesignTarget::Povm(spec) => {
            let p = build_povm(spec)?;
            Ok(AuditReport::Povm {
                label: p.label().to_owned(),
                report: design_metrics_c(&p)?,
            })
        }
    }
}

/// Largest deviations found by [`oracle_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub d: usize,
    /// `max |B - (I ⊗ V^T) R|`
    pub b_factorization: f64,
    /// `max |D̂_dense - D̂_structured|` on a noisy record.
    pub two_step: f64,
    /// `‖X̂ - X‖` of the global least squares on exact data.
    pub global_exact: f64,
    /// `‖D̂ - X‖` of the structured solution on exact data.
    pub structured_exact: f64,
}

impl OracleCheck {
    pub const B_TOL: f64 = 1e-12;
    pub const TWO_STEP_TOL: f64 = 1e-10;
    pub const EXACT_TOL: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.b_factorization <= Self::B_TOL
            && self.two_step <= Self::TWO_STEP_TOL
            && self.global_exact <= Self::EXACT_TOL
            && self.structured_exact <= Self::EXACT_TOL
    }
}

/// Compare the structured pipeline with the dense reference on a random
/// non-trace-preserving channel, random states and random-basis measurements.
pub fn oracle_check(d: usize, seed: u64) -> Result<OracleCheck> {
    let channel = random_channel(d, false, derive_seed(seed, &[1]))?;
    let e = random_states(d, d * d + 2, derive_seed(seed, &[2]))?;
    let p = random_bases_povm(d, d + 2, derive_seed(seed, &[3]))?;
    let x = channel.process_matrix();
    let d2 = d * d;
    let structured_b = kron(&CMatrix::identity(d2, d2), &e.v_matrix().transpose()) * r_map(d).to_dense();
    let b_factorization = max_abs(&(dense_b(&e)? - structured_b));

    let probs = ideal_probabilities(&x, &e, &p)?;
    let rc = Reconstructor::new(&e, &p)?;
    let noisy = sample_record(&probs, &p.sizes(), 1000 * (d as u64 + 2), derive_seed(seed, &[4]))?;
    let dense = dense_oracle_estimate(&noisy, &e, &p)?;
    let d_hat = rc.step2(&rc.step1(&noisy)?)?;
    let two_step = max_abs(&(dense.two_step - d_hat));

    let exact = MeasurementRecord::exact(probs, p.sizes(), 1000)?;
    let dense = dense_oracle_estimate(&exact, &e, &p)?;
    let structured = rc.step2(&rc.step1(&exact)?)?;
    Ok(OracleCheck {
        d,
        b_factorization,
        two_step,
        global_exact: (dense.global_ls - x.matrix()).norm(),
        structured_exact: (structured - x.matrix()).norm(),
    })
}
