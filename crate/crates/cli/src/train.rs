//! `train`: run the sweeps, record per-sweep traces, checkpoint after every
//! sweep so an interrupted run resumes from the last completed sweep.

use crate::artifacts::{
    write_atomic, RunLock, RunState, Trace, ENTROPY, MAGNETIZATION, METRICS, RHO, SCORES,
    SCORE_SAMPLES, SNAPSHOT, STATE,
};
use crate::config::{Config, DatasetSpec, ScoreSeries};
use anyhow::{bail, Context, Result};
use qmask_core::datasets::{
    load_idx, stratified_subset_split, synthetic_image_set, synthetic_spectral, write_idx,
    PreparedDataset, CLASS_CODES,
};
use qmask_core::diagnostics::SweepDiagnostics;
use qmask_core::mps::{classify, encode_sample, EncodedSample, MpsClassifier};
use std::path::Path;

pub const LABELS: usize = 3;

pub const METRICS_HEADER: &str =
    "sweep,cost,acc_train,acc_test,acc_train_0,acc_train_1,acc_train_2,acc_test_0,acc_test_1,acc_test_2";
pub const ENTROPY_HEADER: &str = "sweep,bond,S,S_0,S_1,S_2";
pub const MAGNETIZATION_HEADER: &str = "sweep,label,site,value";
pub const RHO_HEADER: &str = "sweep,row,col,value";
pub const SCORES_HEADER: &str = "sweep,label,value";
pub const SCORE_SAMPLES_HEADER: &str = "sweep,label,sample,value";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub resume: bool,
    /// Stop after this many completed sweeps (used to exercise resume).
    pub stop_after: Option<usize>,
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

/// Materialize the configured dataset. The synthetic image set is written to
/// IDX files in the run directory and read back through the real parser.
pub fn prepare_dataset(cfg: &Config, out: &Path) -> Result<(PreparedDataset, PreparedDataset)> {
    match &cfg.dataset {
        DatasetSpec::Idx {
            images,
            labels,
            fraction,
        } => {
            let raw = load_idx(images, labels)?;
            Ok(stratified_subset_split(&raw, &CLASS_CODES, *fraction, cfg.seed)?)
        }
        DatasetSpec::SyntheticImage {
            n_per_class,
            fraction,
        } => {
            let raw = synthetic_image_set(*n_per_class, cfg.seed);
            let images = out.join("data-images.idx");
            let labels = out.join("data-labels.idx");
            write_idx(&raw, &images, &labels)?;
            let raw = load_idx(&images, &labels)?;
            Ok(stratified_subset_split(&raw, &CLASS_CODES, *fraction, cfg.seed)?)
        }
        DatasetSpec::SyntheticSpectral {
            n_per_class,
            n_features,
            class_sep,
            noise,
        } => Ok(synthetic_spectral(
            *n_per_class,
            *n_features,
            *class_sep,
            *noise,
            cfg.seed,
        )?),
    }
}

fn encode_set(set: &PreparedDataset) -> Result<Vec<EncodedSample>> {
    set.samples
        .iter()
        .map(|(f, l)| encode_sample(f, *l).map_err(Into::into))
        .collect()
}

struct Traces {
    metrics: Trace,
    entropy: Trace,
    magnetization: Trace,
    rho: Trace,
    scores: Trace,
    /// Per-test-sample scores; present only in `ensemble` score-series mode.
    score_samples: Option<Trace>,
}

impl Traces {
    fn new(ensemble: bool) -> Self {
        Self {
            metrics: Trace::new(METRICS_HEADER),
            entropy: Trace::new(ENTROPY_HEADER),
            magnetization: Trace::new(MAGNETIZATION_HEADER),
            rho: Trace::new(RHO_HEADER),
            scores: Trace::new(SCORES_HEADER),
            score_samples: ensemble.then(|| Trace::new(SCORE_SAMPLES_HEADER)),
        }
    }

    /// Reload the traces of an interrupted run, keeping exactly the rows of
    /// the completed sweeps.
    fn resume(out: &Path, completed: usize, n_sites: usize, n_test: Option<usize>) -> Result<Self> {
        let load = |name, header, per_sweep: usize| -> Result<Trace> {
            let mut t = Trace::read(out, name, header)?;
            let want = completed * per_sweep;
            if t.rows.len() < want {
                bail!("{name}: {} rows, need {want} for {completed} sweeps", t.rows.len());
            }
            t.rows.truncate(want);
            Ok(t)
        };
        Ok(Self {
            metrics: load(METRICS, METRICS_HEADER, 1)?,
            entropy: load(ENTROPY, ENTROPY_HEADER, n_sites - 1)?,
            magnetization: load(MAGNETIZATION, MAGNETIZATION_HEADER, LABELS * n_sites)?,
            rho: load(RHO, RHO_HEADER, LABELS * LABELS)?,
            scores: load(SCORES, SCORES_HEADER, LABELS)?,
            score_samples: match n_test {
                Some(n) => Some(load(SCORE_SAMPLES, SCORE_SAMPLES_HEADER, LABELS * n)?),
                None => None,
            },
        })
    }

    fn write_all(&self, out: &Path) -> Result<()> {
        self.metrics.write(out, METRICS)?;
        self.entropy.write(out, ENTROPY)?;
        self.magnetization.write(out, MAGNETIZATION)?;
        self.rho.write(out, RHO)?;
        self.scores.write(out, SCORES)?;
        if let Some(t) = &self.score_samples {
            t.write(out, SCORE_SAMPLES)?;
        }
        Ok(())
    }
}

/// Overall and per-label accuracy of the classifier on a sample set.
fn accuracies(mps: &MpsClassifier, data: &[EncodedSample]) -> Result<(f64, [f64; LABELS])> {
    let mut correct = 0usize;
    let mut per = [0usize; LABELS];
    let mut count = [0usize; LABELS];
    for sample in data {
        count[sample.label] += 1;
        if classify(&mps.predict_scores(sample)?)? == sample.label {
            correct += 1;
            per[sample.label] += 1;
        }
    }
    let overall = correct as f64 / data.len() as f64;
    let mut out = [0.0; LABELS];
    for l in 0..LABELS {
        out[l] = if count[l] == 0 {
            0.0
        } else {
            per[l] as f64 / count[l] as f64
        };
    }
    Ok((overall, out))
}

/// Per-label score reduction for the O-information series.
fn score_row(mps: &MpsClassifier, test: &[EncodedSample], series: ScoreSeries) -> Result<[f64; LABELS]> {
    let mut out = [0.0; LABELS];
    match series {
        // in ensemble mode scores.csv still records the test-set mean; the
        // per-sample values go to their own trace
        ScoreSeries::Mean | ScoreSeries::Ensemble => {
            for sample in test {
                let f = mps.predict_scores(sample)?;
                for l in 0..LABELS {
                    out[l] += f[l];
                }
            }
            for v in &mut out {
                *v /= test.len() as f64;
            }
        }
        ScoreSeries::Single => {
            let f = mps.predict_scores(&test[0])?;
            out.copy_from_slice(&f[..LABELS]);
        }
    }
    Ok(out)
}

pub fn cmd_train(cfg: &Config, out: &Path, opts: &TrainOptions) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating run directory {}", out.display()))?;
    let _lock = RunLock::acquire(out, opts.resume)?;

    let snapshot = cfg.serialize();
    let snap_path = out.join(SNAPSHOT);
    if opts.resume && snap_path.exists() {
        let existing = std::fs::read_to_string(&snap_path)?;
        if existing != snapshot {
            bail!("config differs from the snapshot of the existing run");
        }
    } else {
        write_atomic(&snap_path, &snapshot)?;
    }

    let (train_set, test_set) = prepare_dataset(cfg, out)?;
    if train_set.samples.is_empty() || test_set.samples.is_empty() {
        bail!("empty train or test split");
    }
    let n = cfg.n_sites();
    if train_set.n_features() != n {
        bail!(
            "dataset has {} features, model expects {n} sites",
            train_set.n_features()
        );
    }
    let train = encode_set(&train_set)?;
    let test = encode_set(&test_set)?;

    let ensemble = cfg.score_series == ScoreSeries::Ensemble;
    let (mut mps, start, mut traces) = if opts.resume && out.join(STATE).exists() {
        let state = RunState::read(out)?;
        let mps = MpsClassifier::from_checkpoint_string(&state.checkpoint)?;
        let n_test = ensemble.then_some(test.len());
        let traces = Traces::resume(out, state.completed_sweeps, n, n_test)?;
        (mps, state.completed_sweeps, traces)
    } else {
        (
            MpsClassifier::init(n, cfg.chi, LABELS, cfg.seed.wrapping_add(1))?,
            0,
            Traces::new(ensemble),
        )
    };

    let end = opts.stop_after.map_or(cfg.sweeps, |s| s.min(cfg.sweeps));
    for sweep in start..end {
        let record = mps
            .sweep(&train, cfg.learning_rate)
            .with_context(|| format!("sweep {sweep}"))?;
        let diag = SweepDiagnostics::compute(&mps, &record)
            .with_context(|| format!("diagnostics at sweep {sweep}"))?;

        let cost = mps.cost(&train)?;
        let (acc_train, per_train) = accuracies(&mps, &train)?;
        let (acc_test, per_test) = accuracies(&mps, &test)?;
        let mut row = format!("{sweep},{},{},{}", fmt(cost), fmt(acc_train), fmt(acc_test));
        for v in per_train.iter().chain(per_test.iter()) {
            row.push(',');
            row.push_str(&fmt(*v));
        }
        traces.metrics.rows.push(row);

        for (bond, s) in diag.bond_entropy.iter().enumerate() {
            let mut row = format!("{sweep},{bond},{}", fmt(*s));
            for l in 0..LABELS {
                row.push(',');
                row.push_str(&fmt(diag.label_bond_entropy[l][bond]));
            }
            traces.entropy.rows.push(row);
        }
        for l in 0..LABELS {
            for site in 0..n {
                traces
                    .magnetization
                    .rows
                    .push(format!("{sweep},{l},{site},{}", fmt(diag.magnetization[l][site])));
            }
        }
        for r in 0..LABELS {
            for c in 0..LABELS {
                traces
                    .rho
                    .rows
                    .push(format!("{sweep},{r},{c},{}", fmt(diag.label_rho[r][c])));
            }
        }
        let scores = score_row(&mps, &test, cfg.score_series)?;
        for (l, v) in scores.iter().enumerate() {
            traces.scores.rows.push(format!("{sweep},{l},{}", fmt(*v)));
        }
        if let Some(t) = &mut traces.score_samples {
            let mut per_label = vec![Vec::with_capacity(test.len()); LABELS];
            for (i, sample) in test.iter().enumerate() {
                let f = mps.predict_scores(sample)?;
                for l in 0..LABELS {
                    per_label[l].push(format!("{sweep},{l},{i},{}", fmt(f[l])));
                }
            }
            for rows in per_label {
                t.rows.extend(rows);
            }
        }

        traces.write_all(out)?;
        RunState {
            completed_sweeps: sweep + 1,
            checkpoint: mps.to_checkpoint_string(),
        }
        .write(out)?;
    }
    Ok(())
}
