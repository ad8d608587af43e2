//! Predictive simulation and the recursive (pseudo-real-time) backtest.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{advance, Dataset, History, ModelSpec, StepShocks, Variant};
use crate::period::Quarter;
use crate::priors::PriorSettings;
use crate::rv::{mix_seed, RngHandle};
use crate::sampler::{self, Chain, PathStorage, SamplerOptions};

/// Share of rejected forecast paths above which simulation fails.
pub const MAX_REJECT_SHARE: f64 = 0.10;

/// Draws from the `h`-step predictive distributions, `h = 1..=H`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDraws {
    pub origin: Quarter,
    pub labels: Vec<String>,
    /// `draws[h-1]` is `n_sim × N`.
    pub draws: Vec<DMatrix<f64>>,
    /// Per variable: `true` when horizons hold cumulative sums.
    pub cumulative: Vec<bool>,
    pub rejected: usize,
}

impl PredictiveDraws {
    pub fn horizons(&self) -> usize {
        self.draws.len()
    }

    pub fn n_sim(&self) -> usize {
        self.draws.first().map(|d| d.nrows()).unwrap_or(0)
    }

    /// Mean of the draws at horizon `h` (1-based).
    pub fn point(&self, h: usize) -> DVector<f64> {
        self.draws[h - 1].row_mean().transpose()
    }
}

/// Simulates `paths_per_draw` future paths of length `horizon` per stored draw,
/// starting after the last row of `data`. Paths whose log-variances leave the
/// admissible range are redrawn.
pub fn simulate_forecast(
    chain: &Chain,
    data: &Dataset,
    horizon: usize,
    paths_per_draw: usize,
    rng: &mut RngHandle,
) -> Result<PredictiveDraws> {
    let spec = &chain.spec;
    if chain.is_empty() {
        return Err(Error::invalid("chain has no stored draws"));
    }
    if horizon == 0 || paths_per_draw == 0 {
        return Err(Error::invalid("horizon and paths_per_draw must be positive"));
    }
    let n = spec.n_vars;
    let target = chain.len() * paths_per_draw;
    let max_rejects = (MAX_REJECT_SHARE * target as f64).floor() as usize;
    let mut out = vec![DMatrix::zeros(target, n); horizon];
    let mut rejected = 0;
    let last = data.n_obs() - 1;
    let mut row = 0;
    for (params, path) in chain.draws.iter().zip(&chain.paths) {
        let q_chol = linalg::cholesky(&params.state_cov, "Q")?.l();
        let a_inv = params.a_inverse();
        let start = History::at_end(spec, data, last, path)?;
        for _ in 0..paths_per_draw {
            loop {
                let mut hist = start.clone();
                let mut ok = true;
                let mut ys = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    let shocks = StepShocks::draw(spec, rng);
                    let step = advance(spec, params, &q_chol, &a_inv, &mut hist, &shocks, None);
                    if !step.in_bounds || step.y.iter().any(|v| !v.is_finite()) {
                        ok = false;
                        break;
                    }
                    ys.push(step.y);
                }
                if ok {
                    for (h, y) in ys.iter().enumerate() {
                        out[h].row_mut(row).copy_from(&y.transpose());
                    }
                    row += 1;
                    break;
                }
                rejected += 1;
                if rejected > max_rejects {
                    return Err(Error::TooManyRejections {
                        rejected,
                        attempted: row + rejected,
                    });
                }
            }
        }
    }
    Ok(PredictiveDraws {
        origin: *data.dates.last().expect("non-empty dataset"),
        labels: data.labels.clone(),
        draws: out,
        cumulative: vec![false; n],
        rejected,
    })
}

/// Replaces horizon `h` by the running sum over horizons `1..=h` for masked variables.
pub fn cumulate_growth(draws: &PredictiveDraws, mask: &[bool]) -> PredictiveDraws {
    let mut out = draws.clone();
    for (v, &on) in mask.iter().enumerate() {
        if !on || draws.cumulative[v] {
            continue;
        }
        for h in 1..out.draws.len() {
            let prev = out.draws[h - 1].column(v).into_owned();
            let mut col = out.draws[h].column_mut(v);
            col += prev;
        }
        out.cumulative[v] = true;
    }
    out
}

/// Realized value matching a forecast from `origin_row` at horizon `h`: the level
/// at `origin_row + h`, or the sum over `origin_row+1..=origin_row+h` for cumulative variables.
pub fn realized(data: &Dataset, origin_row: usize, h: usize, cumulative: &[bool]) -> Option<DVector<f64>> {
    let target = origin_row + h;
    if target >= data.n_obs() {
        return None;
    }
    Some(DVector::from_fn(data.n_vars(), |v, _| {
        if cumulative.get(v).copied().unwrap_or(false) {
            (origin_row + 1..=target).map(|r| data.y[(r, v)]).sum()
        } else {
            data.y[(target, v)]
        }
    }))
}

/// Origins, horizon and variants of a recursive backtest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestPlan {
    pub first_origin: Quarter,
    pub last_origin: Quarter,
    pub horizon: usize,
    pub variants: Vec<Variant>,
    pub paths_per_draw: usize,
    /// Variables (by label) forecast as cumulative growth.
    #[serde(default)]
    pub cumulate: Vec<String>,
}

impl BacktestPlan {
    pub fn origins(&self) -> Vec<Quarter> {
        (0..self.first_origin.count_to(self.last_origin))
            .map(|i| self.first_origin.offset(i as i64))
            .collect()
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let mut problems = Vec::new();
        if self.last_origin < self.first_origin {
            problems.push("backtest.last_origin precedes backtest.first_origin".to_string());
        }
        if self.horizon == 0 {
            problems.push("backtest.horizon must be >= 1".into());
        }
        if self.variants.is_empty() {
            problems.push("backtest.variants must not be empty".into());
        }
        if self.paths_per_draw == 0 {
            problems.push("backtest.paths_per_draw must be >= 1".into());
        }
        for name in &self.cumulate {
            if !data.labels.contains(name) {
                problems.push(format!("backtest.cumulate names unknown variable `{name}`"));
            }
        }
        if data.row_of(self.first_origin).is_none() || data.row_of(self.last_origin).is_none() {
            problems.push(format!(
                "backtest origins {}..{} fall outside the data ({}..{})",
                self.first_origin,
                self.last_origin,
                data.dates.first().map(|d| d.to_string()).unwrap_or_default(),
                data.dates.last().map(|d| d.to_string()).unwrap_or_default()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn cumulate_mask(&self, labels: &[String]) -> Vec<bool> {
        labels.iter().map(|l| self.cumulate.contains(l)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub variant: Variant,
    pub origin: Quarter,
    pub status: String,
    pub n_sim: usize,
    pub rejected: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ModelSpec,
    pub prior: PriorSettings,
    pub plan: BacktestPlan,
    pub seed: u64,
    pub labels: Vec<String>,
    pub data_hash: String,
    pub entries: Vec<EntryRecord>,
    /// SHA-256 over every draw file, in sorted path order.
    pub content_hash: String,
}

#[derive(Clone, Debug)]
pub struct BacktestSummary {
    pub manifest: Manifest,
    pub failed: usize,
    pub skipped: usize,
}

pub fn format_float(v: f64) -> String {
    format!("{v}")
}

fn entry_dir(out: &Path, variant: Variant, origin: Quarter) -> PathBuf {
    out.join(variant.tag()).join(origin.to_string())
}

pub fn hash_dataset(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for l in &data.labels {
        h.update(l.as_bytes());
        h.update([0]);
    }
    for d in &data.dates {
        h.update(d.to_string().as_bytes());
    }
    for v in data.y.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Writes `h<h>.csv` files plus `entry.json` into `dir` via a temporary sibling directory.
fn write_entry(dir: &Path, draws: &PredictiveDraws, record: &EntryRecord) -> Result<()> {
    let parent = dir
        .parent()
        .ok_or_else(|| Error::Backtest("archive entry has no parent".into()))?;
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".{}.tmp", dir.file_name().unwrap().to_string_lossy()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    for (h, m) in draws.draws.iter().enumerate() {
        write_draw_csv(&tmp.join(format!("h{}.csv", h + 1)), &draws.labels, m)?;
    }
    fs::write(tmp.join("entry.json"), serde_json::to_string_pretty(record)?)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

pub fn write_draw_csv(path: &Path, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(labels)?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| format_float(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draw_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let labels: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    let mut vals = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for f in rec.iter() {
            vals.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("`{f}`: {e}"),
            })?);
        }
        rows += 1;
    }
    Ok((labels.clone(), DMatrix::from_row_slice(rows, labels.len(), &vals)))
}

/// Read access to a backtest archive.
pub struct Archive {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Archive {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(root.join("manifest.json"))?)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn load(&self, variant: Variant, origin: Quarter) -> Result<PredictiveDraws> {
        load_entry(&self.root, variant, origin, &self.manifest.plan, &self.manifest.labels)
    }

    /// Origins with a completed entry for `variant`.
    pub fn origins(&self, variant: Variant) -> Vec<Quarter> {
        self.manifest
            .entries
            .iter()
            .filter(|e| e.variant == variant && e.status == "ok")
            .map(|e| e.origin)
            .collect()
    }
}

fn load_entry(
    root: &Path,
    variant: Variant,
    origin: Quarter,
    plan: &BacktestPlan,
    labels: &[String],
) -> Result<PredictiveDraws> {
    let dir = entry_dir(root, variant, origin);
    let record: EntryRecord = serde_json::from_str(&fs::read_to_string(dir.join("entry.json"))?)?;
    let mut draws = Vec::with_capacity(plan.horizon);
    for h in 1..=plan.horizon {
        draws.push(read_draw_csv(&dir.join(format!("h{h}.csv")))?.1);
    }
    Ok(PredictiveDraws {
        origin,
        labels: labels.to_vec(),
        draws,
        cumulative: plan.cumulate_mask(labels),
        rejected: record.rejected,
    })
}

fn content_hash(root: &Path, entries: &[EntryRecord], horizon: usize) -> Result<String> {
    let mut files: Vec<PathBuf> = Vec::new();
    for e in entries.iter().filter(|e| e.status == "ok") {
        let dir = entry_dir(root, e.variant, e.origin);
        for h in 1..=horizon {
            files.push(dir.join(format!("h{h}.csv")));
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.strip_prefix(root).unwrap_or(&f).to_string_lossy().as_bytes());
        hasher.update(fs::read(&f)?);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Seed for one (origin, variant) task.
pub fn task_seed(master: u64, origin: Quarter, variant: Variant) -> u64 {
    let v = match variant {
        Variant::Full => 1,
        Variant::RestrictedNoFeedback => 2,
        Variant::SvOnly => 3,
    };
    mix_seed(master, &[origin.ordinal() as u64, v])
}

/// Estimates and forecasts one (origin, variant) pair.
pub fn forecast_at_origin(
    spec: &ModelSpec,
    data: &Dataset,
    origin_row: usize,
    plan: &BacktestPlan,
    settings: &PriorSettings,
    seed: u64,
) -> Result<PredictiveDraws> {
    let sample = data.truncate(origin_row);
    let mut rng = RngHandle::new(seed, 0);
    let options = SamplerOptions {
        storage: PathStorage::Tail,
    };
    let chain = sampler::estimate(spec, &sample, settings, &options, &mut rng)?;
    let draws = simulate_forecast(&chain, &sample, plan.horizon, plan.paths_per_draw, &mut rng)?;
    Ok(cumulate_growth(&draws, &plan.cumulate_mask(&data.labels)))
}

/// Runs every (origin, variant) task on a pool of `workers` threads and writes the
/// archive under `out`. Completed entries already present are kept.
pub fn run_backtest(
    plan: &BacktestPlan,
    data: &Dataset,
    spec: &ModelSpec,
    settings: &PriorSettings,
    seed: u64,
    out: &Path,
    workers: usize,
) -> Result<BacktestSummary> {
    plan.validate(data)?;
    spec.validate()?;
    settings.validate()?;
    let mut settings = settings.clone();
    if settings.training_rows.is_none() {
        // Real-time-valid default: the sample up to the first origin.
        settings.training_rows = data.row_of(plan.first_origin).map(|r| r + 1);
    }
    fs::create_dir_all(out)?;
    let tasks: Vec<(Quarter, Variant)> = plan
        .origins()
        .into_iter()
        .flat_map(|o| plan.variants.iter().map(move |v| (o, *v)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Backtest(format!("thread pool: {e}")))?;
    let results: Vec<(EntryRecord, bool)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(origin, variant)| {
                let seed_t = task_seed(seed, origin, variant);
                let dir = entry_dir(out, variant, origin);
                if let Ok(text) = fs::read_to_string(dir.join("entry.json")) {
                    if let Ok(rec) = serde_json::from_str::<EntryRecord>(&text) {
                        if rec.status == "ok" && rec.seed == seed_t {
                            return (rec, true);
                        }
                    }
                }
                let origin_row = data.row_of(origin).expect("validated origin");
                let vspec = spec.with_variant(variant);
                let outcome = forecast_at_origin(&vspec, data, origin_row, plan, &settings, seed_t).and_then(|d| {
                    let rec = EntryRecord {
                        variant,
                        origin,
                        status: "ok".into(),
                        n_sim: d.n_sim(),
                        rejected: d.rejected,
                        seed: seed_t,
                        error: None,
                    };
                    write_entry(&dir, &d, &rec)?;
                    Ok(rec)
                });
                let rec = outcome.unwrap_or_else(|e| EntryRecord {
                    variant,
                    origin,
                    status: "failed".into(),
                    n_sim: 0,
                    rejected: 0,
                    seed: seed_t,
                    error: Some(e.to_string()),
                });
                (rec, false)
            })
            .collect()
    });
    let skipped = results.iter().filter(|(_, s)| *s).count();
    let entries: Vec<EntryRecord> = results.into_iter().map(|(r, _)| r).collect();
    let failed = entries.iter().filter(|e| e.status != "ok").count();
    let manifest = Manifest {
        spec: spec.clone(),
        prior: settings.clone(),
        plan: plan.clone(),
        seed,
        labels: data.labels.clone(),
        data_hash: hash_dataset(data),
        content_hash: content_hash(out, &entries, plan.horizon)?,
        entries,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    if failed as f64 > 0.05 * tasks.len() as f64 {
        let first = manifest
            .entries
            .iter()
            .find_map(|e| e.error.clone())
            .unwrap_or_default();
        return Err(Error::Backtest(format!(
            "{failed} of {} backtest tasks failed (first error: {first})",
            tasks.len()
        )));
    }
    Ok(BacktestSummary {
        manifest,
        failed,
        skipped,
    })
}
