use qmask_core::mps::MpsClassifier;

fn main() {
    for n in [4usize, 6, 8] {
        for seed in [1u64, 2, 3] {
            let mut mps = MpsClassifier::init(n, 4, 3, seed).unwrap();
            let r1 = mps.sweep(&[], 0.0).unwrap();
            let w1: f64 = r1
                .bond_records
                .iter()
                .map(|r| r.discarded_weight)
                .fold(0.0, f64::max);
            let r2 = mps.sweep(&[], 0.0).unwrap();
            let w2: f64 = r2
                .bond_records
                .iter()
                .map(|r| r.discarded_weight)
                .fold(0.0, f64::max);
            println!("n={n} seed={seed} max_discard sweep1={w1:.3e} sweep2={w2:.3e}");
        }
    }
}
