//! Matrix-product-state multi-class classifier trained by two-site gradient
//! descent sweeps.
//!
//! The trainable object is a chain of rank-3 site tensors in mixed-canonical
//! form. One tensor, the orthogonality center, carries an extra label leg of
//! extent `label_dim`; tensors left of it are left-isometries and tensors
//! right of it are right-isometries. Site tensors are laid out
//! `(left bond, physical, right bond)` and the center as
//! `(left bond, physical, label, right bond)`.

use crate::tensor::{contract, svd_truncate, DenseTensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("feature {index} = {value} outside [0, 1]")]
    FeatureRange { index: usize, value: f64 },
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, MpsError>;

/// Product state built by the local feature map, plus its ground-truth label.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub qubits: Vec<[f64; 2]>,
    pub label: usize,
}

/// Map raw features in [0, 1] to unit 2-vectors (cos, sin) with the angle
/// scaled so that intensity 0 and 1 land on orthogonal states.
pub fn encode_sample(raw: &[f64], label: usize) -> Result<EncodedSample> {
    encode_sample_scaled(raw, label, std::f64::consts::FRAC_PI_2)
}

/// Same as [`encode_sample`] with a configurable angle scale.
pub fn encode_sample_scaled(raw: &[f64], label: usize, angle_scale: f64) -> Result<EncodedSample> {
    let mut qubits = Vec::with_capacity(raw.len());
    for (index, &value) in raw.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(MpsError::FeatureRange { index, value });
        }
        let theta = angle_scale * value;
        qubits.push([theta.cos(), theta.sin()]);
    }
    Ok(EncodedSample { qubits, label })
}

/// Sweep hyper-parameters.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub learning_rate: f64,
    pub n_sweeps: usize,
    pub chi_max: usize,
    pub rel_threshold: f64,
    pub rng_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            n_sweeps: 30,
            chi_max: 10,
            rel_threshold: 1e-12,
            rng_seed: 0,
        }
    }
}

/// Per-bond record emitted by a two-site update.
#[derive(Debug, Clone)]
pub struct BondRecord {
    pub bond: usize,
    /// Kept singular values of the updated two-site tensor.
    pub singular_values: Vec<f64>,
    pub discarded_weight: f64,
    /// Singular values of each label slice of the updated two-site tensor.
    pub label_singular_values: Vec<Vec<f64>>,
}

/// Records of one full right-then-left sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    /// Bond records from the final (leftward) pass, indexed by bond.
    pub bond_records: Vec<BondRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Right,
    Left,
}

/// MPS classifier in mixed-canonical form.
#[derive(Debug, Clone)]
pub struct MpsClassifier {
    sites: Vec<DenseTensor>,
    center: usize,
    label_dim: usize,
    chi_max: usize,
    rel_threshold: f64,
}

impl MpsClassifier {
    /// Random initialization: i.i.d. uniform(-1, 1) entries, brought to
    /// mixed-canonical form with the center (and label leg) at site 0, then
    /// normalized. Deterministic for a fixed seed.
    pub fn init(n_sites: usize, chi_max: usize, label_dim: usize, seed: u64) -> Result<Self> {
        if n_sites < 2 {
            return Err(MpsError::Dimension("need at least 2 sites".into()));
        }
        if chi_max == 0 {
            return Err(MpsError::Dimension("chi_max must be >= 1".into()));
        }
        if label_dim < 2 {
            return Err(MpsError::Dimension("label_dim must be >= 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // maximal bond dimensions capped at chi_max
        let bond_dim = |j: usize| -> usize {
            let left = 2f64.powi(j.min(30) as i32);
            let right = 2f64.powi((n_sites - j).min(30) as i32);
            (left.min(right).min(chi_max as f64)) as usize
        };
        let mut sites = Vec::with_capacity(n_sites);
        for j in 0..n_sites {
            let dl = bond_dim(j);
            let dr = bond_dim(j + 1);
            let shape = if j == 0 {
                vec![1, 2, label_dim, dr]
            } else {
                vec![dl, 2, dr]
            };
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            sites.push(DenseTensor::new(shape, data)?);
        }
        let mut mps = Self {
            sites,
            center: 0,
            label_dim,
            chi_max,
            rel_threshold: 1e-12,
        };
        mps.canonicalize_from_right()?;
        mps.normalize()?;
        Ok(mps)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn label_dim(&self) -> usize {
        self.label_dim
    }

    pub fn chi_max(&self) -> usize {
        self.chi_max
    }

    pub fn site(&self, j: usize) -> &DenseTensor {
        &self.sites[j]
    }

    /// Bring every site right of the center into right-isometric form by
    /// sweeping SVDs from the last site towards site 0.
    fn canonicalize_from_right(&mut self) -> Result<()> {
        let n = self.sites.len();
        for j in (1..n).rev() {
            let t = &self.sites[j];
            let (dl, rest): (usize, usize) = (t.shape()[0], t.len() / t.shape()[0]);
            let m = t.reshape(vec![dl, rest])?;
            let r = svd_truncate(&m, self.chi_max, self.rel_threshold)?;
            let keep = r.singular_values.len();
            // V^dagger is the new right-isometric site
            let mut new_shape = t.shape().to_vec();
            new_shape[0] = keep;
            self.sites[j] = r.vt.reshape(new_shape)?;
            // absorb U * Sigma into the left neighbor
            let mut us = r.u.clone();
            for i in 0..us.shape()[0] {
                for p in 0..keep {
                    let v = us.get(&[i, p]) * r.singular_values[p];
                    us.set(&[i, p], v);
                }
            }
            let left = &self.sites[j - 1];
            let right_axis = left.rank() - 1;
            self.sites[j - 1] = contract(left, &us, &[(right_axis, 0)])?;
        }
        self.center = 0;
        Ok(())
    }

    /// Divide the center tensor by the global state norm.
    fn normalize(&mut self) -> Result<()> {
        let norm = self.sites[self.center].norm();
        if norm < 1e-300 {
            return Err(MpsError::Degenerate("state norm underflow".into()));
        }
        self.sites[self.center].scale(1.0 / norm);
        Ok(())
    }

    /// Global squared norm, valid in canonical form.
    pub fn norm_squared(&self) -> f64 {
        let c = &self.sites[self.center];
        c.data().iter().map(|v| v * v).sum()
    }

    /// Scores f^l for one sample via a left-to-right contraction.
    pub fn predict_scores(&self, sample: &EncodedSample) -> Result<Vec<f64>> {
        let n = self.sites.len();
        if sample.qubits.len() != n {
            return Err(MpsError::Dimension(format!(
                "sample has {} qubits, chain has {n} sites",
                sample.qubits.len()
            )));
        }
        // left vector over the bond entering the center
        let mut left = vec![1.0];
        for j in 0..self.center {
            left = apply_site_left(&self.sites[j], &left, &sample.qubits[j]);
        }
        let mut right = vec![1.0];
        for j in (self.center + 1..n).rev() {
            right = apply_site_right(&self.sites[j], &right, &sample.qubits[j]);
        }
        let c = &self.sites[self.center];
        let (dl, l_dim, dr) = (c.shape()[0], c.shape()[2], c.shape()[3]);
        let phi = &sample.qubits[self.center];
        let data = c.data();
        let mut scores = vec![0.0; l_dim];
        for a in 0..dl {
            let la = left[a];
            if la == 0.0 {
                continue;
            }
            for s in 0..2 {
                let w = la * phi[s];
                for l in 0..l_dim {
                    let base = ((a * 2 + s) * l_dim + l) * dr;
                    let mut acc = 0.0;
                    for (b, rb) in right.iter().enumerate() {
                        acc += data[base + b] * rb;
                    }
                    scores[l] += w * acc;
                }
            }
        }
        Ok(scores)
    }

    /// Mean squared error cost over a dataset with one-hot targets.
    pub fn cost(&self, data: &[EncodedSample]) -> Result<f64> {
        let mut c = 0.0;
        for sample in data {
            let scores = self.predict_scores(sample)?;
            for (l, &f) in scores.iter().enumerate() {
                let y = if l == sample.label { 1.0 } else { 0.0 };
                c += (f - y) * (f - y);
            }
        }
        Ok(0.5 * c)
    }

    /// Merge the two tensors at `bond` into one tensor laid out
    /// `(left bond, phys_j, label, phys_{j+1}, right bond)`. The center must
    /// sit on one of the two sites.
    pub fn merged_bond_tensor(&self, bond: usize) -> Result<DenseTensor> {
        if bond + 1 >= self.sites.len() {
            return Err(MpsError::Dimension(format!("bond {bond} out of range")));
        }
        if self.center == bond {
            // (dl, 2, L, x) * (x, 2, dr) -> (dl, 2, L, 2, dr)
            let b = contract(&self.sites[bond], &self.sites[bond + 1], &[(3, 0)])?;
            Ok(b)
        } else if self.center == bond + 1 {
            // (dl, 2, x) * (x, 2, L, dr) -> (dl, 2, 2, L, dr) -> permute
            let b = contract(&self.sites[bond], &self.sites[bond + 1], &[(2, 0)])?;
            Ok(b.permute(&[0, 1, 3, 2, 4])?)
        } else {
            Err(MpsError::Dimension(format!(
                "center {} not adjacent to bond {bond}",
                self.center
            )))
        }
    }

    /// Left/right environment vectors of every sample at `bond`: the chain
    /// contracted with the encoded qubits on sites `< bond` and `> bond + 1`.
    fn environments(&self, bond: usize, data: &[EncodedSample]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.sites.len();
        let mut lefts = Vec::with_capacity(data.len());
        let mut rights = Vec::with_capacity(data.len());
        for sample in data {
            let mut left = vec![1.0];
            for j in 0..bond {
                left = apply_site_left(&self.sites[j], &left, &sample.qubits[j]);
            }
            let mut right = vec![1.0];
            for j in (bond + 2..n).rev() {
                right = apply_site_right(&self.sites[j], &right, &sample.qubits[j]);
            }
            lefts.push(left);
            rights.push(right);
        }
        (lefts, rights)
    }

    /// Negative cost gradient with respect to the merged two-site tensor:
    /// DeltaB^l = sum_omega |Phi~(x)> (y^l - f^l(x)).
    pub fn gradient_at_bond(&self, bond: usize, data: &[EncodedSample]) -> Result<DenseTensor> {
        let b = self.merged_bond_tensor(bond)?;
        let (lefts, rights) = self.environments(bond, data);
        Ok(accumulate_gradient(&b, bond, data, &lefts, &rights))
    }

    /// One two-site gradient step at `bond`. The sweep direction follows the
    /// center: center at `bond` moves it right, center at `bond + 1` moves it
    /// left. Splits with a truncated SVD, renormalizes, and reports the bond
    /// spectra.
    pub fn two_site_update(
        &mut self,
        bond: usize,
        data: &[EncodedSample],
        learning_rate: f64,
    ) -> Result<BondRecord> {
        let direction = if self.center == bond {
            Direction::Right
        } else if self.center == bond + 1 {
            Direction::Left
        } else {
            return Err(MpsError::Dimension(format!(
                "center {} not adjacent to bond {bond}",
                self.center
            )));
        };
        let (lefts, rights) = self.environments(bond, data);
        self.update_bond(bond, direction, data, &lefts, &rights, learning_rate)
    }

    /// Core two-site step with caller-supplied environments.
    fn update_bond(
        &mut self,
        bond: usize,
        direction: Direction,
        data: &[EncodedSample],
        lefts: &[Vec<f64>],
        rights: &[Vec<f64>],
        learning_rate: f64,
    ) -> Result<BondRecord> {
        let mut b = self.merged_bond_tensor(bond)?;
        if learning_rate != 0.0 {
            let grad = accumulate_gradient(&b, bond, data, lefts, rights);
            let bd = b.data_mut();
            for (v, g) in bd.iter_mut().zip(grad.data()) {
                *v += learning_rate * g;
            }
        }
        if b.norm() < 1e-300 {
            return Err(MpsError::Degenerate(format!(
                "two-site tensor vanished at bond {bond}"
            )));
        }
        let shape = b.shape().to_vec(); // (dl, 2, L, 2, dr)
        let (dl, l_dim, dr) = (shape[0], shape[2], shape[4]);

        let label_singular_values = label_spectra(&b)?;

        let record;
        match direction {
            Direction::Right => {
                // rows (dl, s_j), cols (L, s_{j+1}, dr); the label leg rides
                // with the center as it moves right
                let m = b.reshape(vec![dl * 2, l_dim * 2 * dr])?;
                let r = svd_truncate(&m, self.chi_max, self.rel_threshold)?;
                let keep = r.singular_values.len();
                self.sites[bond] = r.u.reshape(vec![dl, 2, keep])?;
                let mut sv = r.vt.clone();
                for p in 0..keep {
                    let row = &mut sv.data_mut()[p * l_dim * 2 * dr..(p + 1) * l_dim * 2 * dr];
                    for v in row.iter_mut() {
                        *v *= r.singular_values[p];
                    }
                }
                let center = sv.reshape(vec![keep, l_dim, 2, dr])?.permute(&[0, 2, 1, 3])?;
                self.sites[bond + 1] = center;
                self.center = bond + 1;
                record = BondRecord {
                    bond,
                    singular_values: r.singular_values,
                    discarded_weight: r.discarded_weight,
                    label_singular_values,
                };
            }
            Direction::Left => {
                // rows (dl, s_j, L), cols (s_{j+1}, dr)
                let m = b.reshape(vec![dl * 2 * l_dim, 2 * dr])?;
                let r = svd_truncate(&m, self.chi_max, self.rel_threshold)?;
                let keep = r.singular_values.len();
                self.sites[bond + 1] = r.vt.reshape(vec![keep, 2, dr])?;
                let mut us = r.u.clone();
                for i in 0..dl * 2 * l_dim {
                    for p in 0..keep {
                        let v = us.get(&[i, p]) * r.singular_values[p];
                        us.set(&[i, p], v);
                    }
                }
                self.sites[bond] = us.reshape(vec![dl, 2, l_dim, keep])?;
                self.center = bond;
                record = BondRecord {
                    bond,
                    singular_values: r.singular_values,
                    discarded_weight: r.discarded_weight,
                    label_singular_values,
                };
            }
        }
        self.normalize()?;
        Ok(record)
    }

    /// One full right-then-left pass of two-site updates over all bonds. The
    /// center must be at site 0 on entry and returns there on exit. The
    /// returned records come from the leftward pass.
    pub fn sweep(&mut self, data: &[EncodedSample], learning_rate: f64) -> Result<SweepRecord> {
        let n = self.sites.len();
        if self.center != 0 {
            return Err(MpsError::Dimension(format!(
                "sweep expects the center at site 0, found {}",
                self.center
            )));
        }
        // per-sample right environments at every bond, computed once
        let mut right_envs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(data.len());
        for sample in data {
            let mut envs = vec![Vec::new(); n + 1];
            envs[n] = vec![1.0];
            for j in (1..n).rev() {
                envs[j] = apply_site_right(&self.sites[j], &envs[j + 1], &sample.qubits[j]);
            }
            envs[0] = Vec::new(); // unused: bond 0 has a trivial left side
            right_envs.push(envs);
        }
        let mut left_envs: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n + 1]; data.len()];
        for envs in &mut left_envs {
            envs[0] = vec![1.0];
        }

        // rightward pass
        for bond in 0..n - 1 {
            let lefts: Vec<Vec<f64>> = left_envs.iter().map(|e| e[bond].clone()).collect();
            let rights: Vec<Vec<f64>> = right_envs.iter().map(|e| e[bond + 2].clone()).collect();
            self.update_bond(bond, Direction::Right, data, &lefts, &rights, learning_rate)?;
            for (w, sample) in data.iter().enumerate() {
                left_envs[w][bond + 1] =
                    apply_site_left(&self.sites[bond], &left_envs[w][bond], &sample.qubits[bond]);
            }
        }
        // leftward pass
        let mut records = vec![None; n - 1];
        for bond in (0..n - 1).rev() {
            let lefts: Vec<Vec<f64>> = left_envs.iter().map(|e| e[bond].clone()).collect();
            let rights: Vec<Vec<f64>> = right_envs.iter().map(|e| e[bond + 2].clone()).collect();
            let rec = self.update_bond(bond, Direction::Left, data, &lefts, &rights, learning_rate)?;
            records[bond] = Some(rec);
            for (w, sample) in data.iter().enumerate() {
                right_envs[w][bond + 1] = apply_site_right(
                    &self.sites[bond + 1],
                    &right_envs[w][bond + 2],
                    &sample.qubits[bond + 1],
                );
            }
        }
        Ok(SweepRecord {
            bond_records: records.into_iter().map(|r| r.unwrap()).collect(),
        })
    }

    /// Maximal isometry deviation over all off-center tensors: left tensors
    /// against U^T U = 1, right tensors against V V^T = 1.
    pub fn isometry_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, t) in self.sites.iter().enumerate() {
            if j == self.center {
                continue;
            }
            let dl = t.shape()[0];
            let dr = *t.shape().last().unwrap();
            if j < self.center {
                // rows (dl * 2), cols dr
                let rows = dl * 2;
                for p in 0..dr {
                    for q in 0..dr {
                        let mut acc = 0.0;
                        for i in 0..rows {
                            acc += t.data()[i * dr + p] * t.data()[i * dr + q];
                        }
                        let target = if p == q { 1.0 } else { 0.0 };
                        worst = worst.max((acc - target).abs());
                    }
                }
            } else {
                // rows dl, cols (2 * dr)
                let cols = 2 * dr;
                for p in 0..dl {
                    for q in 0..dl {
                        let mut acc = 0.0;
                        for i in 0..cols {
                            acc += t.data()[p * cols + i] * t.data()[q * cols + i];
                        }
                        let target = if p == q { 1.0 } else { 0.0 };
                        worst = worst.max((acc - target).abs());
                    }
                }
            }
        }
        worst
    }

    /// Dense mask W^l as a full 2^N vector (s_1 fastest-varying last).
    /// Exponential in the chain length; intended for small-N oracles.
    pub fn dense_mask(&self, label: usize) -> Result<Vec<f64>> {
        if label >= self.label_dim {
            return Err(MpsError::Dimension(format!("label {label} out of range")));
        }
        // running tensor over (accumulated physical, current bond)
        let mut acc = DenseTensor::new(vec![1, 1], vec![1.0])?;
        for (j, site) in self.sites.iter().enumerate() {
            let t = if j == self.center {
                // fix the label leg
                let (dl, dr) = (site.shape()[0], site.shape()[3]);
                let mut data = vec![0.0; dl * 2 * dr];
                for a in 0..dl {
                    for s in 0..2 {
                        for b in 0..dr {
                            data[(a * 2 + s) * dr + b] = site.get(&[a, s, label, b]);
                        }
                    }
                }
                DenseTensor::new(vec![dl, 2, dr], data)?
            } else {
                site.clone()
            };
            // (P, dl) x (dl, 2, dr) -> (P, 2, dr) -> (P * 2, dr)
            let merged = contract(&acc, &t, &[(1, 0)])?;
            let p = merged.shape()[0] * 2;
            let dr = merged.shape()[2];
            acc = merged.reshape(vec![p, dr])?;
        }
        Ok(acc.into_data())
    }
}

/// Predicted class: argmax over |f^l|, ties to the lowest index.
pub fn classify(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(MpsError::Dimension("empty score vector".into()));
    }
    let mut best = 0;
    let mut best_val = scores[0].abs();
    for (l, &f) in scores.iter().enumerate().skip(1) {
        if f.abs() > best_val {
            best = l;
            best_val = f.abs();
        }
    }
    Ok(best)
}

/// l'[b] = sum_{a,s} l[a] phi[s] T[a,s,b]
fn apply_site_left(site: &DenseTensor, left: &[f64], phi: &[f64; 2]) -> Vec<f64> {
    let dl = site.shape()[0];
    let dr = *site.shape().last().unwrap();
    let data = site.data();
    let mut out = vec![0.0; dr];
    for (a, &la) in left.iter().enumerate().take(dl) {
        if la == 0.0 {
            continue;
        }
        for s in 0..2 {
            let w = la * phi[s];
            let base = (a * 2 + s) * dr;
            for b in 0..dr {
                out[b] += w * data[base + b];
            }
        }
    }
    out
}

/// r'[a] = sum_{b,s} T[a,s,b] phi[s] r[b]
fn apply_site_right(site: &DenseTensor, right: &[f64], phi: &[f64; 2]) -> Vec<f64> {
    let dl = site.shape()[0];
    let dr = *site.shape().last().unwrap();
    let data = site.data();
    let mut out = vec![0.0; dl];
    for a in 0..dl {
        let mut acc = 0.0;
        for s in 0..2 {
            let base = (a * 2 + s) * dr;
            let mut inner = 0.0;
            for (b, &rb) in right.iter().enumerate().take(dr) {
                inner += data[base + b] * rb;
            }
            acc += phi[s] * inner;
        }
        out[a] = acc;
    }
    out
}

/// Batch gradient over the merged tensor `b` at `bond`, shaped like `b`.
fn accumulate_gradient(
    b: &DenseTensor,
    bond: usize,
    data: &[EncodedSample],
    lefts: &[Vec<f64>],
    rights: &[Vec<f64>],
) -> DenseTensor {
    let shape = b.shape(); // (dl, 2, L, 2, dr)
    let (dl, l_dim, dr) = (shape[0], shape[2], shape[4]);
    let bd = b.data();
    let mut grad = vec![0.0; bd.len()];
    let mut residual = vec![0.0; l_dim];
    for (w, sample) in data.iter().enumerate() {
        let left = &lefts[w];
        let right = &rights[w];
        let phi1 = &sample.qubits[bond];
        let phi2 = &sample.qubits[bond + 1];
        // f^l with the current merged tensor
        residual.iter_mut().for_each(|v| *v = 0.0);
        for (a, &la) in left.iter().enumerate().take(dl) {
            for s1 in 0..2 {
                let w1 = la * phi1[s1];
                if w1 == 0.0 {
                    continue;
                }
                for l in 0..l_dim {
                    for s2 in 0..2 {
                        let w2 = w1 * phi2[s2];
                        let base = (((a * 2 + s1) * l_dim + l) * 2 + s2) * dr;
                        let mut acc = 0.0;
                        for (bb, &rb) in right.iter().enumerate().take(dr) {
                            acc += bd[base + bb] * rb;
                        }
                        residual[l] += w2 * acc;
                    }
                }
            }
        }
        for (l, r) in residual.iter_mut().enumerate() {
            let y = if l == sample.label { 1.0 } else { 0.0 };
            *r = y - *r;
        }
        // grad += Phi~ (y - f)
        for (a, &la) in left.iter().enumerate().take(dl) {
            if la == 0.0 {
                continue;
            }
            for s1 in 0..2 {
                let w1 = la * phi1[s1];
                for l in 0..l_dim {
                    let wl = w1 * residual[l];
                    if wl == 0.0 {
                        continue;
                    }
                    for s2 in 0..2 {
                        let w2 = wl * phi2[s2];
                        let base = (((a * 2 + s1) * l_dim + l) * 2 + s2) * dr;
                        for (bb, &rb) in right.iter().enumerate().take(dr) {
                            grad[base + bb] += w2 * rb;
                        }
                    }
                }
            }
        }
    }
    DenseTensor::new(shape.to_vec(), grad).expect("gradient shape matches tensor")
}

/// Singular spectra of the label slices of a merged two-site tensor.
fn label_spectra(b: &DenseTensor) -> Result<Vec<Vec<f64>>> {
    let shape = b.shape();
    let (dl, l_dim, dr) = (shape[0], shape[2], shape[4]);
    let mut out = Vec::with_capacity(l_dim);
    for l in 0..l_dim {
        let mut slice = vec![0.0; dl * 2 * 2 * dr];
        for a in 0..dl {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    for bb in 0..dr {
                        slice[((a * 2 + s1) * 2 + s2) * dr + bb] = b.get(&[a, s1, l, s2, bb]);
                    }
                }
            }
        }
        let m = DenseTensor::new(vec![dl * 2, 2 * dr], slice)?;
        let (_, sigma, _) = crate::tensor::svd(&m)?;
        out.push(sigma);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &str = "qmask-checkpoint v1";

impl MpsClassifier {
    /// Serialize to a versioned text form. Scalars are written with 17
    /// significant digits, which round-trips f64 exactly.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "n_sites {} label_dim {} chi_max {} center {} rel_threshold {:.16e}\n",
            self.sites.len(),
            self.label_dim,
            self.chi_max,
            self.center,
            self.rel_threshold
        ));
        for (j, t) in self.sites.iter().enumerate() {
            out.push_str(&format!("site {j}"));
            for e in t.shape() {
                out.push_str(&format!(" {e}"));
            }
            out.push('\n');
            for v in t.data() {
                out.push_str(&format!("{v:.16e}\n"));
            }
        }
        out
    }

    pub fn from_checkpoint_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != CHECKPOINT_MAGIC {
            return Err(MpsError::Checkpoint(format!("bad magic line: {magic:?}")));
        }
        let header = lines
            .next()
            .ok_or_else(|| MpsError::Checkpoint("missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let grab = |key: &str| -> Result<f64> {
            fields
                .iter()
                .position(|&f| f == key)
                .and_then(|i| fields.get(i + 1))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| MpsError::Checkpoint(format!("missing field {key}")))
        };
        let n_sites = grab("n_sites")? as usize;
        let label_dim = grab("label_dim")? as usize;
        let chi_max = grab("chi_max")? as usize;
        let center = grab("center")? as usize;
        let rel_threshold = grab("rel_threshold")?;
        let mut sites = Vec::with_capacity(n_sites);
        for j in 0..n_sites {
            let head = lines
                .next()
                .ok_or_else(|| MpsError::Checkpoint(format!("missing site {j} header")))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() < 3 || parts[0] != "site" {
                return Err(MpsError::Checkpoint(format!("bad site header: {head:?}")));
            }
            let shape: Vec<usize> = parts[2..]
                .iter()
                .map(|p| p.parse().map_err(|_| MpsError::Checkpoint(format!("bad extent {p}"))))
                .collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let line = lines
                    .next()
                    .ok_or_else(|| MpsError::Checkpoint("truncated tensor payload".into()))?;
                data.push(
                    line.trim()
                        .parse()
                        .map_err(|_| MpsError::Checkpoint(format!("bad scalar {line:?}")))?,
                );
            }
            sites.push(DenseTensor::new(shape, data)?);
        }
        Ok(Self {
            sites,
            center,
            label_dim,
            chi_max,
            rel_threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_endpoints() {
        let s = encode_sample(&[0.0, 1.0], 0).unwrap();
        assert_eq!(s.qubits[0], [1.0, 0.0]);
        assert!((s.qubits[1][0]).abs() < 1e-15);
        assert!((s.qubits[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn encode_unit_norm() {
        let s = encode_sample(&[0.3, 0.77, 0.123], 1).unwrap();
        for q in &s.qubits {
            let n = (q[0] * q[0] + q[1] * q[1]).sqrt();
            assert!((n - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(encode_sample(&[1.5], 0).is_err());
        assert!(encode_sample(&[-0.1], 0).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = MpsClassifier::init(6, 4, 3, 42).unwrap();
        let b = MpsClassifier::init(6, 4, 3, 42).unwrap();
        assert_eq!(a.to_checkpoint_string(), b.to_checkpoint_string());
        let c = MpsClassifier::init(6, 4, 3, 43).unwrap();
        assert_ne!(a.to_checkpoint_string(), c.to_checkpoint_string());
    }

    #[test]
    fn init_satisfies_invariants() {
        let mps = MpsClassifier::init(8, 4, 3, 7).unwrap();
        assert!(mps.isometry_deviation() < 1e-8);
        assert!((mps.norm_squared() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&[0.1, -0.9, 0.3]).unwrap(), 1);
        assert_eq!(classify(&[0.5, 0.5, 0.1]).unwrap(), 0);
        assert_eq!(classify(&[0.0, 0.0, 0.0]).unwrap(), 0);
        assert!(classify(&[]).is_err());
    }

    #[test]
    fn cost_of_zero_predictor() {
        // an all-zero predictor contributes 1/2 per sample
        let mps = MpsClassifier::init(4, 2, 3, 1).unwrap();
        let mut zeroed = mps.clone();
        zeroed.sites[0].scale(0.0);
        let data: Vec<EncodedSample> = (0..5)
            .map(|i| encode_sample(&[0.1, 0.4, 0.6, 0.9], i % 3).unwrap())
            .collect();
        let c = zeroed.cost(&data).unwrap();
        assert!((c - 2.5).abs() < 1e-12);
    }

    #[test]
    fn cost_matches_naive_loop() {
        let mps = MpsClassifier::init(5, 3, 3, 11).unwrap();
        let data: Vec<EncodedSample> = (0..7)
            .map(|i| {
                let raw: Vec<f64> = (0..5).map(|j| ((i * 5 + j) as f64 * 0.13) % 1.0).collect();
                encode_sample(&raw, i % 3).unwrap()
            })
            .collect();
        let mut naive = 0.0;
        for s in &data {
            let f = mps.predict_scores(s).unwrap();
            for (l, &fv) in f.iter().enumerate() {
                let y = if l == s.label { 1.0 } else { 0.0 };
                naive += 0.5 * (fv - y) * (fv - y);
            }
        }
        assert!((mps.cost(&data).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_dense_contraction() {
        let mps = MpsClassifier::init(4, 4, 3, 5).unwrap();
        let raw = [0.2, 0.8, 0.5, 0.1];
        let sample = encode_sample(&raw, 0).unwrap();
        let scores = mps.predict_scores(&sample).unwrap();
        for l in 0..3 {
            let w = mps.dense_mask(l).unwrap();
            let mut acc = 0.0;
            for (idx, wv) in w.iter().enumerate() {
                // index bits: s_1 is the most significant
                let mut prod = 1.0;
                for j in 0..4 {
                    let bit = (idx >> (3 - j)) & 1;
                    prod *= sample.qubits[j][bit];
                }
                acc += wv * prod;
            }
            assert!(
                (scores[l] - acc).abs() < 1e-10,
                "label {l}: {} vs {}",
                scores[l],
                acc
            );
        }
    }

    #[test]
    fn predict_scales_linearly() {
        let mps = MpsClassifier::init(5, 3, 3, 9).unwrap();
        let sample = encode_sample(&[0.3, 0.6, 0.1, 0.8, 0.4], 1).unwrap();
        let base = mps.predict_scores(&sample).unwrap();
        let mut scaled = mps.clone();
        scaled.sites[scaled.center].scale(3.0);
        let tripled = scaled.predict_scores(&sample).unwrap();
        for (a, b) in base.iter().zip(&tripled) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_step_preserves_scores() {
        // score invariance under a zero step needs chi_max at full rank:
        // the label leg riding with the center widens the exact bond
        let mut mps = MpsClassifier::init(6, 64, 3, 3).unwrap();
        let data: Vec<EncodedSample> = (0..4)
            .map(|i| {
                let raw: Vec<f64> = (0..6).map(|j| ((i + j) as f64 * 0.17) % 1.0).collect();
                encode_sample(&raw, i % 3).unwrap()
            })
            .collect();
        let before: Vec<Vec<f64>> = data.iter().map(|s| mps.predict_scores(s).unwrap()).collect();
        mps.sweep(&data, 0.0).unwrap();
        assert!(mps.isometry_deviation() < 1e-8);
        assert!((mps.norm_squared() - 1.0).abs() < 1e-8);
        for (s, b) in data.iter().zip(&before) {
            let after = mps.predict_scores(s).unwrap();
            for (x, y) in b.iter().zip(&after) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn single_sample_tiny_step_decreases_cost() {
        let mut mps = MpsClassifier::init(5, 3, 3, 21).unwrap();
        let data = vec![encode_sample(&[0.1, 0.9, 0.5, 0.3, 0.7], 2).unwrap()];
        let before = mps.cost(&data).unwrap();
        mps.two_site_update(0, &data, 1e-3).unwrap();
        let after = mps.cost(&data).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn update_preserves_invariants() {
        let mut mps = MpsClassifier::init(6, 4, 3, 17).unwrap();
        let data: Vec<EncodedSample> = (0..6)
            .map(|i| {
                let raw: Vec<f64> = (0..6).map(|j| ((i * 3 + j) as f64 * 0.11) % 1.0).collect();
                encode_sample(&raw, i % 3).unwrap()
            })
            .collect();
        for bond in 0..5 {
            mps.two_site_update(bond, &data, 0.05).unwrap();
            assert!(mps.isometry_deviation() < 1e-8, "bond {bond}");
            assert!((mps.norm_squared() - 1.0).abs() < 1e-8, "bond {bond}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mps = MpsClassifier::init(6, 4, 3, 99).unwrap();
        let text = mps.to_checkpoint_string();
        let back = MpsClassifier::from_checkpoint_string(&text).unwrap();
        assert_eq!(text, back.to_checkpoint_string());
        for (a, b) in mps.sites.iter().zip(&back.sites) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        assert!(MpsClassifier::from_checkpoint_string("nonsense\n").is_err());
    }
}
