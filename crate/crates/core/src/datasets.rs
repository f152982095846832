//! Data ingestion and preparation: IDX container parsing, 28x28 -> 6x6 area
//! downsampling, stratified class subsetting, and synthetic generators (a
//! spectral stand-in for the satellite source and an image stand-in for
//! offline runs).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path} at offset {offset}: {message}")]
    Format {
        path: String,
        offset: usize,
        message: String,
    },
    #[error("data error: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw byte images with their labels, as parsed from the IDX pair.
#[derive(Debug, Clone)]
pub struct RawImageSet {
    /// Row-major 28x28 pixel bytes per image.
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

/// Which half of a prepared split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Features in [0, 1] plus remapped labels, ready for encoding.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub samples: Vec<(Vec<f64>, usize)>,
    pub split: Split,
}

impl PreparedDataset {
    pub fn n_features(&self) -> usize {
        self.samples.first().map(|(f, _)| f.len()).unwrap_or(0)
    }

    /// CSV export with header `label,f0,...,f{n-1}`.
    pub fn to_csv(&self) -> String {
        let n = self.n_features();
        let mut out = String::from("label");
        for j in 0..n {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (features, label) in &self.samples {
            out.push_str(&label.to_string());
            for f in features {
                out.push_str(&format!(",{f:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Format {
            path: path.to_string(),
            offset,
            message: "truncated header".into(),
        })
}

/// Parse an IDX image/label file pair, validating magic numbers, dimension
/// headers and count agreement.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImageSet> {
    let img_bytes = read_file(images_path)?;
    let img_name = images_path.display().to_string();
    let magic = be_u32(&img_bytes, 0, &img_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::Format {
            path: img_name,
            offset: 0,
            message: format!("expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}"),
        });
    }
    let count = be_u32(&img_bytes, 4, &img_name)? as usize;
    let rows = be_u32(&img_bytes, 8, &img_name)? as usize;
    let cols = be_u32(&img_bytes, 12, &img_name)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(DataError::Format {
            path: img_name,
            offset: 8,
            message: format!("expected 28x28 images, got {rows}x{cols}"),
        });
    }
    let expected = 16 + count * rows * cols;
    if img_bytes.len() < expected {
        return Err(DataError::Format {
            path: img_name,
            offset: img_bytes.len(),
            message: format!("truncated payload: need {expected} bytes, have {}", img_bytes.len()),
        });
    }

    let lbl_bytes = read_file(labels_path)?;
    let lbl_name = labels_path.display().to_string();
    let magic = be_u32(&lbl_bytes, 0, &lbl_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::Format {
            path: lbl_name,
            offset: 0,
            message: format!("expected label magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{magic:08x}"),
        });
    }
    let lbl_count = be_u32(&lbl_bytes, 4, &lbl_name)? as usize;
    if lbl_count != count {
        return Err(DataError::Format {
            path: lbl_name,
            offset: 4,
            message: format!("label count {lbl_count} != image count {count}"),
        });
    }
    if lbl_bytes.len() < 8 + count {
        return Err(DataError::Format {
            path: lbl_name,
            offset: lbl_bytes.len(),
            message: format!("truncated payload: need {} bytes, have {}", 8 + count, lbl_bytes.len()),
        });
    }

    let images: Vec<Vec<u8>> = (0..count)
        .map(|i| img_bytes[16 + i * IMAGE_PIXELS..16 + (i + 1) * IMAGE_PIXELS].to_vec())
        .collect();
    let labels = lbl_bytes[8..8 + count].to_vec();
    Ok(RawImageSet { images, labels })
}

/// Serialize an image set back to the IDX container pair.
pub fn write_idx(set: &RawImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let count = set.images.len() as u32;
    let mut img = Vec::with_capacity(16 + set.images.len() * IMAGE_PIXELS);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&count.to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for image in &set.images {
        img.extend_from_slice(image);
    }
    let mut lbl = Vec::with_capacity(8 + set.labels.len());
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&count.to_be_bytes());
    lbl.extend_from_slice(&set.labels);
    std::fs::write(images_path, img).map_err(|source| DataError::Io {
        path: images_path.display().to_string(),
        source,
    })?;
    std::fs::write(labels_path, lbl).map_err(|source| DataError::Io {
        path: labels_path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Area-average a 28x28 byte image onto a 6x6 grid (fractional cell overlap),
/// scale to [0, 1], and flatten row-wise.
pub fn downsample_6x6(img: &[u8]) -> Vec<f64> {
    const OUT: usize = 6;
    let scale = IMAGE_SIDE as f64 / OUT as f64;
    let mut out = Vec::with_capacity(OUT * OUT);
    for oy in 0..OUT {
        let y0 = oy as f64 * scale;
        let y1 = (oy + 1) as f64 * scale;
        for ox in 0..OUT {
            let x0 = ox as f64 * scale;
            let x1 = (ox + 1) as f64 * scale;
            let mut acc = 0.0;
            for py in y0.floor() as usize..(y1.ceil() as usize).min(IMAGE_SIDE) {
                let wy = (y1.min((py + 1) as f64) - y0.max(py as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for px in x0.floor() as usize..(x1.ceil() as usize).min(IMAGE_SIDE) {
                    let wx = (x1.min((px + 1) as f64) - x0.max(px as f64)).max(0.0);
                    acc += wy * wx * img[py * IMAGE_SIDE + px] as f64;
                }
            }
            // area weights can overshoot by a rounding ulp on saturated blocks
            out.push((acc / (scale * scale * 255.0)).clamp(0.0, 1.0));
        }
    }
    out
}

/// The three fashion-MNIST class codes used throughout: dress, sneaker, bag.
pub const CLASS_CODES: [u8; 3] = [3, 7, 8];

/// Stratified per-class sampling of `fraction` of the selected classes,
/// split evenly per class into train and test, labels remapped to 0/1/2,
/// features downsampled to 6x6. Deterministic per seed.
pub fn stratified_subset_split(
    raw: &RawImageSet,
    classes: &[u8; 3],
    fraction: f64,
    seed: u64,
) -> Result<(PreparedDataset, PreparedDataset)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (new_label, &code) in classes.iter().enumerate() {
        let mut indices: Vec<usize> = raw
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == code)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Err(DataError::Invalid(format!("no samples with class code {code}")));
        }
        // Fisher-Yates with the shared seeded generator
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let take = ((fraction * indices.len() as f64).floor() as usize).max(2);
        let take = take.min(indices.len());
        let n_train = take.div_ceil(2);
        for (pos, &idx) in indices[..take].iter().enumerate() {
            let features = downsample_6x6(&raw.images[idx]);
            let sample = (features, new_label);
            if pos < n_train {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((
        PreparedDataset {
            samples: train,
            split: Split::Train,
        },
        PreparedDataset {
            samples: test,
            split: Split::Test,
        },
    ))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(1e-15..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Synthetic spectral stand-in for the hyperspectral source: three smooth
/// class-mean spectra (low-order trigonometric mixtures, min-max scaled),
/// pulled toward the global mean by `class_sep`, plus Gaussian noise clipped
/// to [0, 1]. Low separation with high noise gives the hard, overfitting-prone
/// regime.
pub fn synthetic_spectral(
    n_per_class: usize,
    n_features: usize,
    class_sep: f64,
    noise: f64,
    seed: u64,
) -> Result<(PreparedDataset, PreparedDataset)> {
    if n_per_class < 2 {
        return Err(DataError::Invalid("need at least 2 samples per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // smooth class means from a handful of random harmonics
    let mut means = vec![vec![0.0; n_features]; 3];
    for mean in &mut means {
        for h in 1..=4usize {
            let amp: f64 = rng.gen_range(0.2..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            for (j, v) in mean.iter_mut().enumerate() {
                *v += amp
                    * (std::f64::consts::TAU * h as f64 * j as f64 / n_features as f64 + phase)
                        .sin();
            }
        }
    }
    // joint min-max scale into [0.15, 0.85] to leave headroom for noise
    let lo = means
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = means
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for mean in &mut means {
        for v in mean.iter_mut() {
            *v = 0.15 + 0.7 * (*v - lo) / span;
        }
    }
    // shrink class means toward the global mean: class_sep = 1 keeps them,
    // class_sep = 0 collapses them
    let global: Vec<f64> = (0..n_features)
        .map(|j| (means[0][j] + means[1][j] + means[2][j]) / 3.0)
        .collect();
    for mean in &mut means {
        for (j, v) in mean.iter_mut().enumerate() {
            *v = global[j] + class_sep * (*v - global[j]);
        }
    }

    let draw = |rng: &mut ChaCha8Rng, split: Split| -> PreparedDataset {
        let mut samples = Vec::with_capacity(3 * n_per_class);
        for label in 0..3 {
            for _ in 0..n_per_class {
                let features: Vec<f64> = means[label]
                    .iter()
                    .map(|&m| (m + noise * normal(rng)).clamp(0.0, 1.0))
                    .collect();
                samples.push((features, label));
            }
        }
        PreparedDataset { samples, split }
    };
    let train = draw(&mut rng, Split::Train);
    let test = draw(&mut rng, Split::Test);
    Ok((train, test))
}

/// Procedural 28x28 image stand-in for the three fashion-MNIST classes when
/// the real IDX files are unavailable offline. Class geometry mirrors the
/// qualitative difficulty ordering of the benchmark: sneakers form a compact
/// two-parameter family (easy to generalize), while dresses and bags are
/// finite mixtures of per-class random texture prototypes (learnable only by
/// partial memorization), so the trained classifier polarizes on the sneaker
/// label first.
pub fn synthetic_image_set(n_per_class: usize, seed: u64) -> RawImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // texture prototypes for dress and bag: each class is a finite mixture of
    // random binary cell patterns. A prototype is coherent enough for the
    // classifier to memorize transiently, but no single prototype carries
    // enough samples to hold a bond-dimension slot against the sneaker family
    let n_proto = 24usize;
    let prototypes: Vec<Vec<bool>> = (0..2 * n_proto)
        .map(|_| (0..24).map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    let mut images = Vec::with_capacity(3 * n_per_class);
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for (code_idx, &code) in CLASS_CODES.iter().enumerate() {
        for _ in 0..n_per_class {
            let mut img = vec![0u8; IMAGE_PIXELS];
            let put = |img: &mut [u8], x: i32, y: i32, v: f64| {
                if (0..IMAGE_SIDE as i32).contains(&x) && (0..IMAGE_SIDE as i32).contains(&y) {
                    let cur = img[(y as usize) * IMAGE_SIDE + x as usize] as f64;
                    img[(y as usize) * IMAGE_SIDE + x as usize] = cur.max(v).min(255.0) as u8;
                }
            };
            if code_idx == 1 {
                // sneaker: fixed high-contrast sole plus an upper whose
                // shading varies smoothly across samples in both level and
                // left-right gradient. The class is a two-parameter family
                // confined to the bottom band, so it generalizes from few
                // samples while carrying enough internal structure to fill
                // several bond-dimension slots once learned
                let s0 = rng.gen_range(110.0..250.0);
                let s1 = rng.gen_range(-60.0..60.0);
                for y in 21..26 {
                    for x in 2..26 {
                        put(&mut img, x, y, 255.0);
                    }
                }
                for y in 16..21 {
                    for x in 7..23 {
                        let shade = s0 + s1 * (x as f64 - 14.0) / 14.0;
                        put(&mut img, x, y, shade.clamp(0.0, 255.0));
                    }
                }
            } else {
                // dress (code_idx 0) and bag (code_idx 2): full-contrast
                // binary texture in the upper four coarse rows, kept clear of
                // the sneaker band. Cells are aligned to the 6x6 downsampling
                // grid so they stay high-contrast after coarse-graining. Each
                // sample is a randomly chosen class prototype with a few
                // cells flipped, so the texture classes decompose into many
                // medium-coherence clusters rather than one coherent mean
                let proto = &prototypes[(code_idx / 2) * n_proto + rng.gen_range(0..n_proto)];
                let grid = |i: usize| -> (i32, i32) {
                    (
                        (i * IMAGE_SIDE / 6) as i32,
                        ((i + 1) * IMAGE_SIDE / 6) as i32,
                    )
                };
                for cell in 0..24usize {
                    let lit = proto[cell] != rng.gen_bool(0.08);
                    if !lit {
                        continue;
                    }
                    let (y0, y1) = grid(cell / 6);
                    let (x0, x1) = grid(cell % 6);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            put(&mut img, x, y, 255.0);
                        }
                    }
                }
            }
            // illumination noise per coarse cell: independent brightness
            // offsets aligned to the 6x6 downsampling grid, so they survive
            // coarse-graining instead of averaging away like per-pixel noise
            let cell_noise: Vec<f64> = (0..36).map(|_| rng.gen_range(-60.0..60.0)).collect();
            for (idx, p) in img.iter_mut().enumerate() {
                let (y, x) = (idx / IMAGE_SIDE, idx % IMAGE_SIDE);
                let cell = (y * 6 / IMAGE_SIDE) * 6 + x * 6 / IMAGE_SIDE;
                let n = cell_noise[cell] + rng.gen_range(-25.0..25.0);
                *p = (*p as f64 + n).clamp(0.0, 255.0) as u8;
            }
            images.push(img);
            labels.push(code);
        }
    }
    RawImageSet { images, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_two_images() -> RawImageSet {
        RawImageSet {
            images: vec![vec![0u8; IMAGE_PIXELS], vec![255u8; IMAGE_PIXELS]],
            labels: vec![3, 7],
        }
    }

    #[test]
    fn idx_roundtrip() {
        let dir = std::env::temp_dir().join(format!("qmask-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images-idx3-ubyte");
        let lbl_path = dir.join("labels-idx1-ubyte");
        let set = fixture_two_images();
        write_idx(&set, &img_path, &lbl_path).unwrap();
        let back = load_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(back.images.len(), 2);
        assert_eq!(back.images[0].len(), IMAGE_PIXELS);
        assert_eq!(back.labels, vec![3, 7]);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn idx_rejects_wrong_magic() {
        let dir = std::env::temp_dir().join(format!("qmask-idx-magic-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images");
        let lbl_path = dir.join("labels");
        let set = fixture_two_images();
        write_idx(&set, &img_path, &lbl_path).unwrap();
        // corrupt the image magic to 0x00000802
        let mut bytes = std::fs::read(&img_path).unwrap();
        bytes[3] = 0x02;
        std::fs::write(&img_path, bytes).unwrap();
        match load_idx(&img_path, &lbl_path) {
            Err(DataError::Format { offset: 0, .. }) => {}
            other => panic!("expected format error at offset 0, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn idx_rejects_truncated_labels() {
        let dir = std::env::temp_dir().join(format!("qmask-idx-trunc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images");
        let lbl_path = dir.join("labels");
        let set = fixture_two_images();
        write_idx(&set, &img_path, &lbl_path).unwrap();
        let bytes = std::fs::read(&lbl_path).unwrap();
        std::fs::write(&lbl_path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx(&img_path, &lbl_path), Err(DataError::Format { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn downsample_constant_images() {
        let ones = downsample_6x6(&vec![255u8; IMAGE_PIXELS]);
        assert_eq!(ones.len(), 36);
        for v in &ones {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let zeros = downsample_6x6(&vec![0u8; IMAGE_PIXELS]);
        for v in &zeros {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn downsample_half_split() {
        // rows 0..14 bright, rows 14..28 dark: 14 rows map onto exactly
        // three 28/6-high output rows
        let mut img = vec![0u8; IMAGE_PIXELS];
        for y in 0..14 {
            for x in 0..IMAGE_SIDE {
                img[y * IMAGE_SIDE + x] = 255;
            }
        }
        let out = downsample_6x6(&img);
        for (i, v) in out.iter().enumerate() {
            if i < 18 {
                assert!((v - 1.0).abs() < 1e-12, "cell {i} = {v}");
            } else {
                assert!(v.abs() < 1e-12, "cell {i} = {v}");
            }
        }
    }

    #[test]
    fn stratified_split_full_fraction() {
        let raw = synthetic_image_set(10, 1);
        let (train, test) = stratified_subset_split(&raw, &CLASS_CODES, 1.0, 7).unwrap();
        assert_eq!(train.samples.len() + test.samples.len(), 30);
        for label in 0..3 {
            let tr = train.samples.iter().filter(|(_, l)| *l == label).count();
            let te = test.samples.iter().filter(|(_, l)| *l == label).count();
            assert_eq!(tr, 5);
            assert_eq!(te, 5);
        }
        for (features, _) in train.samples.iter().chain(&test.samples) {
            assert_eq!(features.len(), 36);
            for f in features {
                assert!((0.0..=1.0).contains(f));
            }
        }
    }

    #[test]
    fn stratified_split_is_deterministic() {
        let raw = synthetic_image_set(20, 5);
        let (a_train, a_test) = stratified_subset_split(&raw, &CLASS_CODES, 0.5, 9).unwrap();
        let (b_train, b_test) = stratified_subset_split(&raw, &CLASS_CODES, 0.5, 9).unwrap();
        assert_eq!(a_train.samples, b_train.samples);
        assert_eq!(a_test.samples, b_test.samples);
    }

    #[test]
    fn stratified_split_rejects_missing_class() {
        let raw = RawImageSet {
            images: vec![vec![0u8; IMAGE_PIXELS]; 4],
            labels: vec![3, 3, 7, 7], // no bag
        };
        assert!(stratified_subset_split(&raw, &CLASS_CODES, 1.0, 0).is_err());
    }

    #[test]
    fn spectral_noiseless_is_nearest_mean_separable() {
        let (train, test) = synthetic_spectral(20, 43, 1.0, 0.0, 3).unwrap();
        // class means from the training set
        let mut means = vec![vec![0.0; 43]; 3];
        let mut counts = [0usize; 3];
        for (f, l) in &train.samples {
            counts[*l] += 1;
            for (j, v) in f.iter().enumerate() {
                means[*l][j] += v;
            }
        }
        for (l, mean) in means.iter_mut().enumerate() {
            for v in mean.iter_mut() {
                *v /= counts[l] as f64;
            }
        }
        for (f, l) in &test.samples {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = f.iter().zip(&means[a]).map(|(x, m)| (x - m) * (x - m)).sum();
                    let db: f64 = f.iter().zip(&means[b]).map(|(x, m)| (x - m) * (x - m)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(best, *l);
        }
    }

    #[test]
    fn spectral_is_deterministic() {
        let a = synthetic_spectral(5, 43, 0.4, 0.2, 11).unwrap();
        let b = synthetic_spectral(5, 43, 0.4, 0.2, 11).unwrap();
        assert_eq!(a.0.samples, b.0.samples);
        assert_eq!(a.1.samples, b.1.samples);
    }

    #[test]
    fn csv_header_matches_feature_count() {
        let (train, _) = synthetic_spectral(2, 5, 1.0, 0.0, 1).unwrap();
        let csv = train.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "label,f0,f1,f2,f3,f4");
        assert_eq!(csv.lines().count(), 1 + train.samples.len());
    }
}
