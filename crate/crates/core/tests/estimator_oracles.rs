//! Closed-form oracles for the KSG estimators: entropies, mutual information,
//! conditional MI, transfer entropy, and O-information on Gaussian and uniform
//! test distributions.

use qmask_core::hoi::{
    ksg_conditional_mi, ksg_entropy, ksg_mutual_information, o_information, transfer_entropy,
    KsgConfig, SeriesMatrix, TeSpec,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn normals(t: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..t).map(|_| normal(r)).collect()
}

/// Bivariate standard Gaussian with correlation rho.
fn gaussian_pair(t: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let mut x = Vec::with_capacity(t);
    let mut y = Vec::with_capacity(t);
    let c = (1.0 - rho * rho).sqrt();
    for _ in 0..t {
        let a = normal(&mut r);
        let b = normal(&mut r);
        x.push(a);
        y.push(rho * a + c * b);
    }
    (x, y)
}

#[test]
fn entropy_of_uniform_unit_interval() {
    let mut r = rng(11);
    let x: Vec<f64> = (0..10_000).map(|_| r.gen_range(0.0..1.0)).collect();
    let h = ksg_entropy(&SeriesMatrix::from_column(&x).unwrap(), &KsgConfig::default()).unwrap();
    assert!(h.abs() < 0.05, "H(uniform(0,1)) = {h}");
}

#[test]
fn entropy_scales_with_support() {
    let mut r = rng(12);
    let x: Vec<f64> = (0..10_000).map(|_| r.gen_range(0.0..2.0)).collect();
    let h = ksg_entropy(&SeriesMatrix::from_column(&x).unwrap(), &KsgConfig::default()).unwrap();
    assert!((h - 2.0f64.ln()).abs() < 0.05, "H(uniform(0,2)) = {h}");
}

#[test]
fn entropy_of_standard_normal() {
    let mut r = rng(13);
    let x = normals(10_000, &mut r);
    let h = ksg_entropy(&SeriesMatrix::from_column(&x).unwrap(), &KsgConfig::default()).unwrap();
    let exact = 0.5 * (std::f64::consts::TAU * std::f64::consts::E).ln();
    assert!((h - exact).abs() < 0.05, "H(normal) = {h}, exact {exact}");
}

#[test]
fn mi_of_independent_uniforms_vanishes() {
    let mut r = rng(21);
    let x: Vec<f64> = (0..5000).map(|_| r.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..5000).map(|_| r.gen_range(0.0..1.0)).collect();
    let mi = ksg_mutual_information(
        &SeriesMatrix::from_column(&x).unwrap(),
        &SeriesMatrix::from_column(&y).unwrap(),
        &KsgConfig::default(),
    )
    .unwrap();
    assert!(mi.abs() < 0.05, "MI(independent) = {mi}");
}

#[test]
fn mi_of_correlated_gaussians_matches_closed_form() {
    let (x, y) = gaussian_pair(5000, 0.9, 22);
    let mi = ksg_mutual_information(
        &SeriesMatrix::from_column(&x).unwrap(),
        &SeriesMatrix::from_column(&y).unwrap(),
        &KsgConfig::default(),
    )
    .unwrap();
    let exact = -0.5 * (1.0 - 0.81f64).ln();
    assert!((mi - exact).abs() < 0.05, "MI = {mi}, exact {exact}");
}

#[test]
fn mi_of_identical_series_is_large() {
    let mut r = rng(23);
    let x = normals(2000, &mut r);
    let mi = ksg_mutual_information(
        &SeriesMatrix::from_column(&x).unwrap(),
        &SeriesMatrix::from_column(&x).unwrap(),
        &KsgConfig::default(),
    )
    .unwrap();
    assert!(mi > 2.0, "MI(x, x) = {mi}");
}

#[test]
fn cmi_of_independent_gaussians_vanishes() {
    let mut r = rng(31);
    let x = normals(3000, &mut r);
    let y = normals(3000, &mut r);
    let z = normals(3000, &mut r);
    let cmi = ksg_conditional_mi(
        &SeriesMatrix::from_column(&x).unwrap(),
        &SeriesMatrix::from_column(&y).unwrap(),
        &SeriesMatrix::from_column(&z).unwrap(),
        &KsgConfig::default(),
    )
    .unwrap();
    assert!(cmi.abs() < 0.05, "CMI(independent) = {cmi}");
}

#[test]
fn conditioning_removes_common_cause() {
    // x and y are correlated only through z; I(x;y|z) ~ 0 while I(x;y) > 0
    let mut r = rng(32);
    let t = 3000;
    let z = normals(t, &mut r);
    let x: Vec<f64> = z.iter().map(|&v| v + 0.5 * normal(&mut r)).collect();
    let y: Vec<f64> = z.iter().map(|&v| v + 0.5 * normal(&mut r)).collect();
    let xm = SeriesMatrix::from_column(&x).unwrap();
    let ym = SeriesMatrix::from_column(&y).unwrap();
    let zm = SeriesMatrix::from_column(&z).unwrap();
    let cfg = KsgConfig::default();
    let mi = ksg_mutual_information(&xm, &ym, &cfg).unwrap();
    let cmi = ksg_conditional_mi(&xm, &ym, &zm, &cfg).unwrap();
    assert!(mi > 0.3, "marginal MI too small: {mi}");
    assert!(cmi.abs() < 0.05, "CMI = {cmi}");
}

#[test]
fn cmi_matches_gaussian_closed_form() {
    // z ~ N(0,1), x = z + u, y = x/2 + v with unit-variance u, v:
    // I(x;y|z) = (1/2) ln(det S_xz det S_yz / (det S_z det S_xyz)) = (1/2) ln 1.25
    let mut r = rng(33);
    let t = 5000;
    let z = normals(t, &mut r);
    let x: Vec<f64> = z.iter().map(|&v| v + normal(&mut r)).collect();
    let y: Vec<f64> = x.iter().map(|&v| 0.5 * v + normal(&mut r)).collect();
    let cmi = ksg_conditional_mi(
        &SeriesMatrix::from_column(&x).unwrap(),
        &SeriesMatrix::from_column(&y).unwrap(),
        &SeriesMatrix::from_column(&z).unwrap(),
        &KsgConfig::default(),
    )
    .unwrap();
    let exact = 0.5 * 1.25f64.ln();
    assert!((cmi - exact).abs() < 0.05, "CMI = {cmi}, exact {exact}");
}

#[test]
fn te_of_independent_noise_vanishes() {
    let mut r = rng(41);
    let x = normals(2000, &mut r);
    let y = normals(2000, &mut r);
    let te = transfer_entropy(&x, &y, &TeSpec::symmetric(1), &KsgConfig::default()).unwrap();
    assert!(te.abs() < 0.05, "TE(independent) = {te}");
}

#[test]
fn te_of_linear_ar_coupling_matches_closed_form() {
    // y(t+1) = 0.5 y(t) + 0.5 x(t) + eta, eta ~ N(0, 0.25), x white noise:
    // TE(x -> y) = (1/2) ln((0.25 + 0.25) / 0.25) = (1/2) ln 2
    let mut r = rng(42);
    let t = 5000;
    let x = normals(t, &mut r);
    let mut y = vec![0.0; t];
    for i in 0..t - 1 {
        y[i + 1] = 0.5 * y[i] + 0.5 * x[i] + 0.5 * normal(&mut r);
    }
    let cfg = KsgConfig::default();
    let spec = TeSpec::symmetric(1);
    let forward = transfer_entropy(&x, &y, &spec, &cfg).unwrap();
    let backward = transfer_entropy(&y, &x, &spec, &cfg).unwrap();
    let exact = 0.5 * 2.0f64.ln();
    assert!(
        (forward - exact).abs() < 0.05,
        "TE(x->y) = {forward}, exact {exact}"
    );
    assert!(backward.abs() < 0.05, "TE(y->x) = {backward}");
}

#[test]
fn te_from_own_past_vanishes() {
    // the target's own series as source adds nothing beyond the conditioning
    let mut r = rng(43);
    let t = 2000;
    let mut y = vec![0.0; t];
    for i in 0..t - 1 {
        y[i + 1] = 0.7 * y[i] + normal(&mut r);
    }
    let te = transfer_entropy(&y, &y, &TeSpec::symmetric(2), &KsgConfig::default()).unwrap();
    assert!(te.abs() < 0.05, "self-TE = {te}");
}

#[test]
fn o_information_of_independent_triple_vanishes() {
    let mut r = rng(51);
    let f0 = normals(2000, &mut r);
    let f1 = normals(2000, &mut r);
    let f2 = normals(2000, &mut r);
    let (mean, _) = o_information(&f0, &f1, &f2, &KsgConfig::default()).unwrap();
    assert!(mean.abs() < 0.05, "O-info(independent) = {mean}");
}

#[test]
fn common_source_gives_redundancy() {
    let mut r = rng(52);
    let t = 2000;
    let z = normals(t, &mut r);
    let f0: Vec<f64> = z.iter().map(|&v| v + 0.3 * normal(&mut r)).collect();
    let f1: Vec<f64> = z.iter().map(|&v| v + 0.3 * normal(&mut r)).collect();
    let f2: Vec<f64> = z.iter().map(|&v| v + 0.3 * normal(&mut r)).collect();
    let (mean, _) = o_information(&f0, &f1, &f2, &KsgConfig::default()).unwrap();
    assert!(mean > 0.2, "redundant O-info = {mean}");
}

#[test]
fn xor_like_sum_gives_synergy() {
    // f2 = f0 + f1 + w with unit-variance w:
    // interaction information = -(1/2) ln((1+1)^2 / ((2+1) * 1)) = -(1/2) ln(4/3)
    let mut r = rng(53);
    let t = 2000;
    let f0 = normals(t, &mut r);
    let f1 = normals(t, &mut r);
    let f2: Vec<f64> = f0
        .iter()
        .zip(&f1)
        .map(|(a, b)| a + b + normal(&mut r))
        .collect();
    let (mean, spread) = o_information(&f0, &f1, &f2, &KsgConfig::default()).unwrap();
    let exact = -0.5 * (4.0f64 / 3.0).ln();
    assert!((mean - exact).abs() < 0.05, "O-info = {mean}, exact {exact}");
    // permutation spread stays small at T = 2000
    assert!(spread < 0.1, "permutation spread = {spread}");
}

#[test]
fn mi_error_shrinks_with_sample_size() {
    // medians of |estimate - closed form| over 20 seeded trials must decrease
    // monotonically across T in {500, 2000, 8000}
    let exact = -0.5 * (1.0 - 0.81f64).ln();
    let cfg = KsgConfig::default();
    let mut medians = Vec::new();
    for (ti, &t) in [500usize, 2000, 8000].iter().enumerate() {
        let mut errs: Vec<f64> = (0..20)
            .map(|trial| {
                let (x, y) = gaussian_pair(t, 0.9, 1000 + (ti * 100 + trial) as u64);
                let mi = ksg_mutual_information(
                    &SeriesMatrix::from_column(&x).unwrap(),
                    &SeriesMatrix::from_column(&y).unwrap(),
                    &cfg,
                )
                .unwrap();
                (mi - exact).abs()
            })
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push((errs[9] + errs[10]) / 2.0);
    }
    assert!(
        medians[0] > medians[1] && medians[1] > medians[2],
        "medians not decreasing: {medians:?}"
    );
}
