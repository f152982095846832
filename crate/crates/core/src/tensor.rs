//! Dense row-major tensors with the handful of primitives the sweep
//! optimizer needs: reshaping, axis permutation, pairwise contraction and a
//! deterministic truncated SVD. Everything is `f64`; the masks and encodings
//! in this model are real-valued throughout.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements, got {actual}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense multi-dimensional array, row-major, all extents >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::Dimension(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// Linear offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Reorder axes: `perm[k]` names the source axis that becomes axis `k`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.rank() {
            return Err(TensorError::Dimension(format!(
                "permutation of length {} on rank-{} tensor",
                perm.len(),
                self.rank()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(TensorError::Dimension(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut out = vec![0.0; self.data.len()];
        // strides of the source tensor
        let mut strides = vec![1usize; self.rank()];
        for i in (0..self.rank().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        let perm_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let mut idx = vec![0usize; self.rank()];
        for slot in out.iter_mut() {
            let mut src = 0;
            for (k, &ix) in idx.iter().enumerate() {
                src += ix * perm_strides[k];
            }
            *slot = self.data[src];
            // odometer increment over the permuted shape
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < new_shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self::new(new_shape, out)
    }
}

/// Plain matrix product of row-major buffers: (m x k) * (k x n).
fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// Contract `a` and `b` over the given axis pairs `(axis_of_a, axis_of_b)`.
/// The result carries the free axes of `a` (in order) followed by the free
/// axes of `b`. A full contraction yields a rank-1 tensor of extent 1.
pub fn contract(a: &DenseTensor, b: &DenseTensor, axes: &[(usize, usize)]) -> Result<DenseTensor> {
    for &(ai, bi) in axes {
        if ai >= a.rank() || bi >= b.rank() {
            return Err(TensorError::Dimension(format!(
                "contraction axes ({ai},{bi}) out of range for ranks ({},{})",
                a.rank(),
                b.rank()
            )));
        }
        if a.shape[ai] != b.shape[bi] {
            return Err(TensorError::Dimension(format!(
                "extent mismatch on axes ({ai},{bi}): {} vs {}",
                a.shape[ai], b.shape[bi]
            )));
        }
    }
    let a_contracted: Vec<usize> = axes.iter().map(|&(ai, _)| ai).collect();
    let b_contracted: Vec<usize> = axes.iter().map(|&(_, bi)| bi).collect();
    let a_free: Vec<usize> = (0..a.rank()).filter(|i| !a_contracted.contains(i)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|i| !b_contracted.contains(i)).collect();

    let mut a_perm = a_free.clone();
    a_perm.extend_from_slice(&a_contracted);
    let mut b_perm = b_contracted.clone();
    b_perm.extend_from_slice(&b_free);

    let ap = a.permute(&a_perm)?;
    let bp = b.permute(&b_perm)?;

    let m: usize = a_free.iter().map(|&i| a.shape[i]).product();
    let kk: usize = a_contracted.iter().map(|&i| a.shape[i]).product();
    let n: usize = b_free.iter().map(|&i| b.shape[i]).product();

    let out = matmul(&ap.data, &bp.data, m, kk, n);
    let mut out_shape: Vec<usize> = a_free.iter().map(|&i| a.shape[i]).collect();
    out_shape.extend(b_free.iter().map(|&i| b.shape[i]));
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    DenseTensor::new(out_shape, out)
}

/// Result of a (possibly truncated) singular value decomposition.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left isometry, rows x kept.
    pub u: DenseTensor,
    /// Kept singular values, non-increasing.
    pub singular_values: Vec<f64>,
    /// Right isometry (rows are right singular vectors), kept x cols.
    pub vt: DenseTensor,
    /// Sum of squared dropped singular values.
    pub discarded_weight: f64,
}

/// One-sided Jacobi SVD of an m x n matrix stored column-wise.
/// Orthogonalizes the columns of `a` in place; `v` accumulates the applied
/// rotations. Deterministic for a fixed input.
fn jacobi_svd(cols: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = cols.len();
    let eps = 1e-15;
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..cols[p].len() {
                    alpha += cols[p][i] * cols[p][i];
                    beta += cols[q][i] * cols[q][i];
                    gamma += cols[p][i] * cols[q][i];
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..cols[p].len() {
                    let cp = cols[p][i];
                    let cq = cols[q][i];
                    cols[p][i] = c * cp - s * cq;
                    cols[q][i] = s * cp + c * cq;
                }
                for i in 0..n {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Full SVD of a rank-2 tensor. Columns of U and rows of Vt are returned in
/// non-increasing singular value order; ties keep the earlier index first.
pub fn svd(m: &DenseTensor) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    if m.rank() != 2 {
        return Err(TensorError::Dimension(format!(
            "svd expects a matrix, got rank {}",
            m.rank()
        )));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::Numeric("non-finite entry in svd input".into()));
    }
    let rows = m.shape[0];
    let cols_n = m.shape[1];

    // One-sided Jacobi wants at least as many rows as columns; work on the
    // transpose otherwise and swap the factors back.
    let transposed = rows < cols_n;
    let (wr, wc) = if transposed { (cols_n, rows) } else { (rows, cols_n) };
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; wr]; wc];
    for i in 0..rows {
        for j in 0..cols_n {
            let v = m.data[i * cols_n + j];
            if transposed {
                cols[i][j] = v;
            } else {
                cols[j][i] = v;
            }
        }
    }
    let mut v: Vec<Vec<f64>> = vec![vec![0.0; wc]; wc];
    for (j, col) in v.iter_mut().enumerate() {
        col[j] = 1.0;
    }
    jacobi_svd(&mut cols, &mut v);

    let mut order: Vec<usize> = (0..wc).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut sigma = Vec::with_capacity(wc);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(wc);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(wc);
    for &j in &order {
        let s = norms[j];
        sigma.push(s);
        let uc = if s > 0.0 {
            cols[j].iter().map(|x| x / s).collect()
        } else {
            vec![0.0; wr]
        };
        u_cols.push(uc);
        v_cols.push(v[j].clone());
    }

    if transposed {
        Ok((v_cols, sigma, u_cols))
    } else {
        Ok((u_cols, sigma, v_cols))
    }
}

/// Truncated SVD: keep at most `chi_max` singular values, additionally drop
/// any value below `rel_threshold` relative to the largest one, and report
/// the squared weight of everything dropped.
pub fn svd_truncate(m: &DenseTensor, chi_max: usize, rel_threshold: f64) -> Result<SvdResult> {
    if chi_max == 0 {
        return Err(TensorError::Dimension("chi_max must be >= 1".into()));
    }
    let (u_cols, sigma, v_cols) = svd(m)?;
    let rows = m.shape()[0];
    let cols_n = m.shape()[1];

    let lead = sigma.first().copied().unwrap_or(0.0);
    let mut keep = 0;
    for (j, &s) in sigma.iter().enumerate() {
        if j >= chi_max || s <= 0.0 {
            break;
        }
        if lead > 0.0 && s / lead < rel_threshold {
            break;
        }
        keep = j + 1;
    }
    // A strictly zero matrix keeps a single zero value so downstream shapes
    // stay well-formed.
    if keep == 0 {
        keep = 1;
    }

    let discarded_weight: f64 = sigma[keep..].iter().map(|s| s * s).sum();

    let mut u = vec![0.0; rows * keep];
    for (j, col) in u_cols.iter().take(keep).enumerate() {
        for i in 0..rows {
            u[i * keep + j] = col[i];
        }
    }
    let mut vt = vec![0.0; keep * cols_n];
    for (j, col) in v_cols.iter().take(keep).enumerate() {
        for i in 0..cols_n {
            vt[j * cols_n + i] = col[i];
        }
    }

    Ok(SvdResult {
        u: DenseTensor::new(vec![rows, keep], u)?,
        singular_values: sigma[..keep].to_vec(),
        vt: DenseTensor::new(vec![keep, cols_n], vt)?,
        discarded_weight,
    })
}

/// Digamma function for x > 0: upward recurrence into the asymptotic regime,
/// then the Bernoulli series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(TensorError::Domain(format!("digamma requires x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^{2n})
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    Ok(acc + x.ln() - 0.5 * inv - series)
}
