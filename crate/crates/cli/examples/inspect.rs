//! Ad-hoc probe: per-sweep ensemble O-information of test-set scores,
//! trained in-process.

use qmask_cli::config::Config;
use qmask_cli::train::prepare_dataset;
use qmask_core::hoi::{o_information, KsgConfig};
use qmask_core::mps::{encode_sample, MpsClassifier};
use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let cfg_path = PathBuf::from(std::env::args().nth(1).expect("usage: inspect <config>"));
    let sweeps: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(60);
    let cfg = Config::load(&cfg_path)?;
    let tmp = std::env::temp_dir().join(format!("inspect_probe_{}", cfg.seed));
    std::fs::create_dir_all(&tmp)?;
    let (train, test) = prepare_dataset(&cfg, &tmp)?;
    let data: Vec<_> = train
        .samples
        .iter()
        .map(|(f, l)| encode_sample(f, *l).unwrap())
        .collect();
    let test_enc: Vec<_> = test
        .samples
        .iter()
        .map(|(f, l)| encode_sample(f, *l).unwrap())
        .collect();
    let mut mps = MpsClassifier::init(36, cfg.chi, 3, cfg.seed)?;
    let ksg = KsgConfig::default();
    println!("sweep  oinfo_raw  std      oinfo_prob  mean_f1");
    for sweep in 0..sweeps {
        mps.sweep(&data, cfg.learning_rate)?;
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        let mut pcols = [Vec::new(), Vec::new(), Vec::new()];
        for enc in &test_enc {
            let s = mps.predict_scores(enc)?;
            let tot: f64 = s.iter().map(|v| v.abs()).sum();
            for l in 0..3 {
                cols[l].push(s[l]);
                pcols[l].push(if tot == 0.0 { 1.0 / 3.0 } else { s[l].abs() / tot });
            }
        }
        let (raw, rs) = o_information(&cols[0], &cols[1], &cols[2], &ksg)?;
        let (prob, _) = o_information(&pcols[0], &pcols[1], &pcols[2], &ksg)?;
        let m1: f64 = cols[1].iter().sum::<f64>() / cols[1].len() as f64;
        println!("{sweep:5}  {raw:+9.3}  {rs:6.3}  {prob:+10.3}  {m1:+.3e}");
    }
    Ok(())
}
