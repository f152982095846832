//! Flat key-value experiment configuration with explicit schema versioning.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA: u32 = 1;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Fashion-MNIST style IDX pair on disk.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        fraction: f64,
    },
    /// Procedurally generated three-class 28x28 image set, written to and
    /// re-read from IDX files inside the run directory.
    SyntheticImage { n_per_class: usize, fraction: f64 },
    /// Smooth spectral curves with Gaussian noise; the hard regime.
    SyntheticSpectral {
        n_per_class: usize,
        n_features: usize,
        class_sep: f64,
        noise: f64,
    },
}

/// How the score record feeding the O-information estimator is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSeries {
    /// Mean of f^l over the test set; O-information runs on sliding sweep
    /// windows of the resulting time series.
    Mean,
    /// f^l of the first test sample; windowed like `Mean`.
    Single,
    /// Per-sample scores over the whole test set; O-information treats the
    /// test set as the statistical ensemble and yields one estimate per
    /// sweep.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dataset: DatasetSpec,
    pub chi: usize,
    pub sweeps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub tau_max: usize,
    pub k: usize,
    pub score_series: ScoreSeries,
    /// Sliding-window length (in sweeps) for the O-information series.
    pub oinfo_window: usize,
    /// Keep only spins whose peak |magnetization| reaches this value when
    /// averaging transfer entropy; 0 keeps every spin.
    pub spin_threshold: f64,
    /// Optional analysis-window override `start..end` (sweep indices); when
    /// absent the window centers on the detected entanglement transition.
    pub window: Option<(usize, usize)>,
}

impl Config {
    /// Number of chain sites implied by the dataset.
    pub fn n_sites(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Idx { .. } | DatasetSpec::SyntheticImage { .. } => 36,
            DatasetSpec::SyntheticSpectral { n_features, .. } => *n_features,
        }
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
            if kv.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{}`", lineno + 1, key.trim());
            }
        }
        let mut used = std::collections::BTreeSet::new();
        let mut get = |key: &str| -> Option<String> {
            used.insert(key.to_string());
            kv.get(key).cloned()
        };

        let schema: u32 = match get("schema") {
            Some(v) => v.parse().context("schema")?,
            None => bail!("missing `schema` key"),
        };
        if schema != CONFIG_SCHEMA {
            bail!("unsupported config schema {schema}, expected {CONFIG_SCHEMA}");
        }

        fail_unless_known(&kv, &ALL_KEYS)?;

        let dataset_kind = get("dataset").context("missing `dataset` key")?;
        let dataset = match dataset_kind.as_str() {
            "idx" => DatasetSpec::Idx {
                images: base.join(get("images").context("idx dataset needs `images`")?),
                labels: base.join(get("labels").context("idx dataset needs `labels`")?),
                fraction: parse_or(get("fraction"), 0.1)?,
            },
            "synthetic-image" => DatasetSpec::SyntheticImage {
                n_per_class: parse_or(get("n_per_class"), 600)?,
                fraction: parse_or(get("fraction"), 1.0)?,
            },
            "synthetic-spectral" => DatasetSpec::SyntheticSpectral {
                n_per_class: parse_or(get("n_per_class"), 150)?,
                n_features: parse_or(get("n_features"), 43)?,
                class_sep: parse_or(get("class_sep"), 0.5)?,
                noise: parse_or(get("noise"), 0.1)?,
            },
            other => bail!("unknown dataset kind `{other}`"),
        };

        let window = match get("window") {
            None => None,
            Some(v) => {
                let (a, b) = v
                    .split_once("..")
                    .with_context(|| format!("window `{v}`: expected `start..end`"))?;
                Some((a.trim().parse()?, b.trim().parse()?))
            }
        };

        let score_series = match get("score_series").as_deref() {
            None | Some("mean") => ScoreSeries::Mean,
            Some("single") => ScoreSeries::Single,
            Some("ensemble") => ScoreSeries::Ensemble,
            Some(other) => bail!("unknown score_series `{other}`"),
        };

        Ok(Self {
            dataset,
            chi: parse_or(get("chi"), 10)?,
            sweeps: parse_or(get("sweeps"), 40)?,
            learning_rate: parse_or(get("learning_rate"), 0.05)?,
            seed: parse_or(get("seed"), 7)?,
            tau_max: parse_or(get("tau_max"), 10)?,
            k: parse_or(get("k"), 4)?,
            score_series,
            oinfo_window: parse_or(get("oinfo_window"), 21)?,
            spin_threshold: parse_or(get("spin_threshold"), 0.0)?,
            window,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Canonical serialization; equality of snapshots means equality of runs.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema = {CONFIG_SCHEMA}");
        match &self.dataset {
            DatasetSpec::Idx {
                images,
                labels,
                fraction,
            } => {
                let _ = writeln!(s, "dataset = idx");
                let _ = writeln!(s, "images = {}", images.display());
                let _ = writeln!(s, "labels = {}", labels.display());
                let _ = writeln!(s, "fraction = {fraction}");
            }
            DatasetSpec::SyntheticImage {
                n_per_class,
                fraction,
            } => {
                let _ = writeln!(s, "dataset = synthetic-image");
                let _ = writeln!(s, "n_per_class = {n_per_class}");
                let _ = writeln!(s, "fraction = {fraction}");
            }
            DatasetSpec::SyntheticSpectral {
                n_per_class,
                n_features,
                class_sep,
                noise,
            } => {
                let _ = writeln!(s, "dataset = synthetic-spectral");
                let _ = writeln!(s, "n_per_class = {n_per_class}");
                let _ = writeln!(s, "n_features = {n_features}");
                let _ = writeln!(s, "class_sep = {class_sep}");
                let _ = writeln!(s, "noise = {noise}");
            }
        }
        let _ = writeln!(s, "chi = {}", self.chi);
        let _ = writeln!(s, "sweeps = {}", self.sweeps);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tau_max = {}", self.tau_max);
        let _ = writeln!(s, "k = {}", self.k);
        let series = match self.score_series {
            ScoreSeries::Mean => "mean",
            ScoreSeries::Single => "single",
            ScoreSeries::Ensemble => "ensemble",
        };
        let _ = writeln!(s, "score_series = {series}");
        let _ = writeln!(s, "oinfo_window = {}", self.oinfo_window);
        let _ = writeln!(s, "spin_threshold = {}", self.spin_threshold);
        if let Some((a, b)) = self.window {
            let _ = writeln!(s, "window = {a}..{b}");
        }
        s
    }
}

const ALL_KEYS: [&str; 19] = [
    "schema",
    "dataset",
    "images",
    "labels",
    "fraction",
    "n_per_class",
    "n_features",
    "class_sep",
    "noise",
    "chi",
    "sweeps",
    "learning_rate",
    "seed",
    "tau_max",
    "k",
    "score_series",
    "oinfo_window",
    "spin_threshold",
    "window",
];

fn fail_unless_known(
    kv: &std::collections::BTreeMap<String, String>,
    known: &[&str],
) -> Result<()> {
    for key in kv.keys() {
        if !known.contains(&key.as_str()) {
            bail!("unknown config key `{key}`");
        }
    }
    Ok(())
}

fn parse_or<T: std::str::FromStr>(value: Option<String>, default: T) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    match value {
        None => Ok(default),
        Some(v) => v.parse().with_context(|| format!("bad value `{v}`")),
    }
}
