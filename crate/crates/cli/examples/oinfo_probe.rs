//! Ad-hoc probe: ensemble O-information of normalized scores at random init,
//! as a function of per-pixel noise amplitude in the image generator.

use qmask_core::datasets::{stratified_subset_split, synthetic_image_set, CLASS_CODES};
use qmask_core::hoi::{o_information, KsgConfig};
use qmask_core::mps::{encode_sample, MpsClassifier};

fn main() -> anyhow::Result<()> {
    let ksg = KsgConfig::default();
    for (n_per_class, data_seed, seed) in [
        (200usize, 99u64, 7u64),
        (200, 99, 11),
        (200, 99, 23),
        (1200, 11, 11),
        (1200, 23, 23),
        (1200, 42, 42),
        (1200, 23, 11),
        (200, 23, 23),
    ] {
        let raw = synthetic_image_set(n_per_class, data_seed);
        let (_, set) = stratified_subset_split(&raw, &CLASS_CODES, 1.0, data_seed)?;
        let test: Vec<_> = set
            .samples
            .iter()
            .map(|(f, l)| encode_sample(f, *l).unwrap())
            .collect();
        print!("n/cls {n_per_class:5} data {data_seed:3} mps {seed:3} n_test {:5}: ", test.len());
        let mps = MpsClassifier::init(36, 10, 3, seed)?;
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        let mut pcols = [Vec::new(), Vec::new(), Vec::new()];
        for enc in &test {
            let s = mps.predict_scores(enc)?;
            let tot: f64 = s.iter().map(|v| v.abs()).sum();
            for l in 0..3 {
                cols[l].push(s[l]);
                pcols[l].push(s[l].abs() / tot);
            }
        }
        let (raw, rs) = o_information(&cols[0], &cols[1], &cols[2], &ksg)?;
        let (prob, ps) = o_information(&pcols[0], &pcols[1], &pcols[2], &ksg)?;
        // rank-one dominance diagnostic: correlation between p0 and p1
        let n = pcols[0].len() as f64;
        let mu: Vec<f64> = (0..3).map(|l| pcols[l].iter().sum::<f64>() / n).collect();
        let mut c01 = 0.0;
        let mut v0 = 0.0;
        let mut v1 = 0.0;
        for i in 0..pcols[0].len() {
            let a = pcols[0][i] - mu[0];
            let b = pcols[1][i] - mu[1];
            c01 += a * b;
            v0 += a * a;
            v1 += b * b;
        }
        println!(
            "raw {raw:+.3} ({rs:.3})  prob {prob:+.3} ({ps:.3})  corr(p0,p1) {:+.3}",
            c01 / (v0 * v1).sqrt()
        );
    }
    Ok(())
}
