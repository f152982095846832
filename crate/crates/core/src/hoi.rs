//! Kraskov-Stogbauer-Grassberger k-nearest-neighbor estimators: differential
//! entropy, mutual information, conditional mutual information, transfer
//! entropy between per-sweep magnetization series, and O-information over the
//! three score series. All quantities are in nats and all neighbor searches
//! use the Chebyshev (maximum) norm with strict-inequality counting.

use crate::tensor::digamma;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate distances: {0}")]
    Degenerate(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value in series")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// Time-indexed real matrix: T rows (training sweeps), D channels.
#[derive(Debug, Clone)]
pub struct SeriesMatrix {
    t: usize,
    d: usize,
    data: Vec<f64>,
}

impl SeriesMatrix {
    pub fn new(t: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if t * d != data.len() {
            return Err(EstimatorError::Dimension(format!(
                "{t} x {d} matrix needs {} values, got {}",
                t * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        Ok(Self { t, d, data })
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(EstimatorError::Dimension("no columns".into()));
        }
        let t = columns[0].len();
        if columns.iter().any(|c| c.len() != t) {
            return Err(EstimatorError::Dimension("ragged columns".into()));
        }
        let mut data = Vec::with_capacity(t * d);
        for i in 0..t {
            for c in columns {
                data.push(c[i]);
            }
        }
        Self::new(t, d, data)
    }

    pub fn rows(&self) -> usize {
        self.t
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Horizontal concatenation.
    fn hcat(parts: &[&SeriesMatrix]) -> Result<SeriesMatrix> {
        let t = parts[0].t;
        if parts.iter().any(|p| p.t != t) {
            return Err(EstimatorError::Dimension("row count mismatch".into()));
        }
        let d: usize = parts.iter().map(|p| p.d).sum();
        let mut data = Vec::with_capacity(t * d);
        for i in 0..t {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        SeriesMatrix::new(t, d, data)
    }
}

/// KSG configuration: neighbor count and tie-breaking jitter.
#[derive(Debug, Clone, Copy)]
pub struct KsgConfig {
    pub k: usize,
    /// Jitter amplitude relative to each channel's standard deviation.
    pub jitter_scale: f64,
    pub jitter_seed: u64,
}

impl Default for KsgConfig {
    fn default() -> Self {
        Self {
            k: 4,
            jitter_scale: 1e-10,
            jitter_seed: 0,
        }
    }
}

/// Delay-embedding lengths for transfer entropy: `tau` for the source past,
/// `tau_target` for the target's own past.
#[derive(Debug, Clone, Copy)]
pub struct TeSpec {
    pub tau: usize,
    pub tau_target: usize,
}

impl TeSpec {
    pub fn symmetric(tau: usize) -> Self {
        Self {
            tau,
            tau_target: tau,
        }
    }
}

fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d > m {
            m = d;
        }
    }
    m
}

/// Chebyshev distance to the k-th nearest neighbor of every point, self
/// excluded. Exhaustive scan; T stays in the hundreds for sweep series.
pub fn knn_distances(points: &SeriesMatrix, k: usize) -> Result<Vec<f64>> {
    let t = points.rows();
    if t <= k {
        return Err(EstimatorError::InsufficientData(format!(
            "need more than k = {k} points, got {t}"
        )));
    }
    let mut out = Vec::with_capacity(t);
    let mut dists = Vec::with_capacity(t - 1);
    for i in 0..t {
        dists.clear();
        let ri = points.row(i);
        for j in 0..t {
            if j != i {
                dists.push(chebyshev(ri, points.row(j)));
            }
        }
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        out.push(*kth);
    }
    Ok(out)
}

/// Deterministic tie-breaking jitter: uniform noise scaled by each channel's
/// standard deviation. Constant channels are left untouched.
fn jittered(m: &SeriesMatrix, scale: f64, seed: u64) -> SeriesMatrix {
    if scale == 0.0 {
        return m.clone();
    }
    let t = m.rows();
    let d = m.dims();
    let mut stds = vec![0.0; d];
    for c in 0..d {
        let mean: f64 = (0..t).map(|i| m.row(i)[c]).sum::<f64>() / t as f64;
        let var: f64 = (0..t).map(|i| (m.row(i)[c] - mean).powi(2)).sum::<f64>() / t as f64;
        let max_abs = (0..t).map(|i| m.row(i)[c].abs()).fold(0.0, f64::max);
        // floor the amplitude at a fraction of the channel magnitude: when
        // the spread is many orders below the values themselves (for example
        // a converged plateau quantized by serialization), a spread-scaled
        // perturbation would vanish in floating-point addition
        stds[c] = var.sqrt().max(1e-4 * max_abs).max(if max_abs == 0.0 { 1.0 } else { 0.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        for (c, &s) in stds.iter().enumerate() {
            let noise: f64 = rng.gen_range(-1.0..1.0);
            data.push(m.row(i)[c] + scale * s * noise);
        }
    }
    SeriesMatrix { t, d, data }
}

fn check_series(x: &SeriesMatrix, cfg: &KsgConfig) -> Result<()> {
    if x.rows() < cfg.k + 2 {
        return Err(EstimatorError::InsufficientData(format!(
            "T = {} rows with k = {}",
            x.rows(),
            cfg.k
        )));
    }
    Ok(())
}

/// Count points strictly within `radius` of point `i` (Chebyshev, self
/// excluded).
fn count_within(m: &SeriesMatrix, i: usize, radius: f64) -> usize {
    let ri = m.row(i);
    let mut n = 0;
    for j in 0..m.rows() {
        if j != i && chebyshev(ri, m.row(j)) < radius {
            n += 1;
        }
    }
    n
}

/// Neighbor radii in a joint space, with one jitter retry on exact ties.
fn joint_radii(parts: &[&SeriesMatrix], cfg: &KsgConfig) -> Result<(Vec<SeriesMatrix>, Vec<f64>)> {
    for attempt in 0..2 {
        let scale = cfg.jitter_scale * if attempt == 0 { 1.0 } else { 1e6 };
        let jp: Vec<SeriesMatrix> = parts
            .iter()
            .map(|p| jittered(p, scale, cfg.jitter_seed))
            .collect();
        let refs: Vec<&SeriesMatrix> = jp.iter().collect();
        let joint = SeriesMatrix::hcat(&refs)?;
        let radii = knn_distances(&joint, cfg.k)?;
        if radii.iter().all(|&r| r > 0.0) {
            return Ok((jp, radii));
        }
    }
    Err(EstimatorError::Degenerate(
        "duplicate points persist after jitter".into(),
    ))
}

/// KSG differential entropy estimate:
/// H = -psi(k) + psi(T) + (d/T) sum_i log eps(i), where eps(i) is twice the
/// distance to the k-th nearest neighbor.
pub fn ksg_entropy(x: &SeriesMatrix, cfg: &KsgConfig) -> Result<f64> {
    check_series(x, cfg)?;
    let (_, radii) = joint_radii(&[x], cfg)?;
    let t = x.rows() as f64;
    let d = x.dims() as f64;
    let psi_k = digamma(cfg.k as f64).expect("k >= 1");
    let psi_t = digamma(t).expect("T >= 1");
    let log_sum: f64 = radii.iter().map(|&r| (2.0 * r).ln()).sum();
    Ok(-psi_k + psi_t + d / x.rows() as f64 * log_sum)
}

/// KSG mutual information:
/// I = psi(k) + psi(T) - < psi(N_x + 1) + psi(N_y + 1) >,
/// counting marginal points strictly inside the joint neighbor radius.
pub fn ksg_mutual_information(x: &SeriesMatrix, y: &SeriesMatrix, cfg: &KsgConfig) -> Result<f64> {
    check_series(x, cfg)?;
    if x.rows() != y.rows() {
        return Err(EstimatorError::Dimension("row count mismatch".into()));
    }
    let (jp, radii) = joint_radii(&[x, y], cfg)?;
    let t = x.rows();
    let psi_k = digamma(cfg.k as f64).expect("k >= 1");
    let psi_t = digamma(t as f64).expect("T >= 1");
    let mut acc = 0.0;
    for i in 0..t {
        let nx = count_within(&jp[0], i, radii[i]);
        let ny = count_within(&jp[1], i, radii[i]);
        acc += digamma((nx + 1) as f64).expect(">= 1") + digamma((ny + 1) as f64).expect(">= 1");
    }
    Ok(psi_k + psi_t - acc / t as f64)
}

/// KSG conditional mutual information:
/// I(X; Y | Z) = psi(k) + < psi(N_z + 1) - psi(N_xz + 1) - psi(N_yz + 1) >.
pub fn ksg_conditional_mi(
    x: &SeriesMatrix,
    y: &SeriesMatrix,
    z: &SeriesMatrix,
    cfg: &KsgConfig,
) -> Result<f64> {
    check_series(x, cfg)?;
    if x.rows() != y.rows() || x.rows() != z.rows() {
        return Err(EstimatorError::Dimension("row count mismatch".into()));
    }
    let (jp, radii) = joint_radii(&[x, y, z], cfg)?;
    let t = x.rows();
    let xz = SeriesMatrix::hcat(&[&jp[0], &jp[2]])?;
    let yz = SeriesMatrix::hcat(&[&jp[1], &jp[2]])?;
    let psi_k = digamma(cfg.k as f64).expect("k >= 1");
    let mut acc = 0.0;
    for i in 0..t {
        let nz = count_within(&jp[2], i, radii[i]);
        let nxz = count_within(&xz, i, radii[i]);
        let nyz = count_within(&yz, i, radii[i]);
        acc += digamma((nz + 1) as f64).expect(">= 1")
            - digamma((nxz + 1) as f64).expect(">= 1")
            - digamma((nyz + 1) as f64).expect(">= 1");
    }
    Ok(psi_k + acc / t as f64)
}

/// Delay-embedded rows `(series[t], ..., series[t - len + 1])` for
/// t = start..start + count.
fn embed(series: &[f64], start: usize, count: usize, len: usize) -> SeriesMatrix {
    let mut data = Vec::with_capacity(count * len);
    for t in start..start + count {
        for back in 0..len {
            data.push(series[t - back]);
        }
    }
    SeriesMatrix {
        t: count,
        d: len,
        data,
    }
}

/// Transfer entropy source -> target: the conditional mutual information
/// between the target's next value and the source past of length `tau`,
/// given the target past of length `tau_target`.
pub fn transfer_entropy(
    source: &[f64],
    target: &[f64],
    spec: &TeSpec,
    cfg: &KsgConfig,
) -> Result<f64> {
    if source.len() != target.len() {
        return Err(EstimatorError::Dimension("series length mismatch".into()));
    }
    if spec.tau == 0 || spec.tau_target == 0 {
        return Err(EstimatorError::Dimension("delays must be >= 1".into()));
    }
    let t_len = target.len();
    let start = spec.tau.max(spec.tau_target) - 1;
    // embeddings exist for t in [start, t_len - 2]
    if t_len < start + 2 {
        return Err(EstimatorError::InsufficientData("series shorter than delay".into()));
    }
    let count = t_len - 1 - start;
    if count < cfg.k + 2 {
        return Err(EstimatorError::InsufficientData(format!(
            "{count} embedded points with k = {}",
            cfg.k
        )));
    }
    let future: Vec<f64> = (start..start + count).map(|t| target[t + 1]).collect();
    let x = SeriesMatrix::from_column(&future)?;
    let y = embed(source, start, count, spec.tau);
    let z = embed(target, start, count, spec.tau_target);
    ksg_conditional_mi(&x, &y, &z, cfg)
}

/// Mean and (population) standard deviation of the transfer entropy over all
/// ordered spin pairs between two sets of per-spin series. Evaluation order
/// is fixed: target spin outer, source spin inner.
pub fn averaged_mask_te(
    mag_source: &[Vec<f64>],
    mag_target: &[Vec<f64>],
    spec: &TeSpec,
    cfg: &KsgConfig,
) -> Result<(f64, f64)> {
    if mag_source.is_empty() || mag_target.is_empty() {
        return Err(EstimatorError::Dimension("empty spin set".into()));
    }
    let mut values = Vec::with_capacity(mag_source.len() * mag_target.len());
    for target in mag_target {
        for source in mag_source {
            values.push(transfer_entropy(source, target, spec, cfg)?);
        }
    }
    Ok(mean_std(&values))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// O-information of three scalar series: Omega = I(a, b) - I(a, b | c),
/// averaged over the six orderings of the arguments. Returns (mean, std).
pub fn o_information(f0: &[f64], f1: &[f64], f2: &[f64], cfg: &KsgConfig) -> Result<(f64, f64)> {
    let series = [f0, f1, f2];
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mats: Vec<SeriesMatrix> = series
        .iter()
        .map(|s| SeriesMatrix::from_column(s))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(6);
    for perm in PERMS {
        let a = &mats[perm[0]];
        let b = &mats[perm[1]];
        let c = &mats[perm[2]];
        let mi = ksg_mutual_information(a, b, cfg)?;
        let cmi = ksg_conditional_mi(a, b, c, cfg)?;
        values.push(mi - cmi);
    }
    Ok(mean_std(&values))
}

/// Dispersion-normalized separation between two (mean, std) summaries:
/// z = |mean_a - mean_b| / sqrt(std_a^2 + std_b^2).
pub fn z_score(mean_a: f64, std_a: f64, mean_b: f64, std_b: f64) -> f64 {
    let denom = (std_a * std_a + std_b * std_b).sqrt();
    let diff = (mean_a - mean_b).abs();
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / denom
    }
}
