//! End-to-end contracts of the train/analyze/plot/compare pipeline on a
//! small synthetic run: artifact shapes, determinism, resume equality.

use qmask_cli::analyze::{cmd_analyze, cmd_compare};
use qmask_cli::artifacts::{
    ENTROPY, MAGNETIZATION, METRICS, OINFO, RHO, SCORES, SCORE_SAMPLES, STATE, SUMMARY, TE_TABLE,
};
use qmask_cli::config::Config;
use qmask_cli::plot::{cmd_plot, PLOT_FILES};
use qmask_cli::train::{cmd_train, TrainOptions, LABELS};
use std::path::Path;

const SWEEPS: usize = 12;
const N_PER_CLASS: usize = 40;

fn small_config(score_series: &str) -> Config {
    let text = format!(
        "schema = 1\n\
         dataset = synthetic-image\n\
         n_per_class = {N_PER_CLASS}\n\
         fraction = 1.0\n\
         chi = 6\n\
         sweeps = {SWEEPS}\n\
         learning_rate = 0.003\n\
         seed = 6\n\
         tau_max = 2\n\
         k = 4\n\
         oinfo_window = 5\n\
         score_series = {score_series}\n"
    );
    Config::parse(&text, Path::new(".")).expect("config parses")
}

fn train(cfg: &Config, dir: &Path) {
    cmd_train(cfg, dir, &TrainOptions::default()).expect("train succeeds");
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn data_rows(text: &str) -> usize {
    text.lines().count().saturating_sub(2) // version line + header line
}

#[test]
fn trace_row_counts_match_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("ensemble");
    train(&cfg, dir.path());

    let n = cfg.n_sites();
    assert_eq!(data_rows(&read(dir.path(), METRICS)), SWEEPS);
    assert_eq!(data_rows(&read(dir.path(), ENTROPY)), SWEEPS * (n - 1));
    assert_eq!(
        data_rows(&read(dir.path(), MAGNETIZATION)),
        SWEEPS * LABELS * n
    );
    assert_eq!(data_rows(&read(dir.path(), RHO)), SWEEPS * LABELS * LABELS);
    assert_eq!(data_rows(&read(dir.path(), SCORES)), SWEEPS * LABELS);
    let sample_rows = data_rows(&read(dir.path(), SCORE_SAMPLES));
    assert!(sample_rows > 0 && sample_rows % (SWEEPS * LABELS) == 0);
}

#[test]
fn mean_mode_omits_sample_trace() {
    let dir = tempfile::tempdir().unwrap();
    train(&small_config("mean"), dir.path());
    assert!(!dir.path().join(SCORE_SAMPLES).exists());
}

#[test]
fn identical_config_and_seed_give_byte_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config("ensemble");
    train(&cfg, a.path());
    train(&cfg, b.path());
    cmd_analyze(a.path(), None, None).unwrap();
    cmd_analyze(b.path(), None, None).unwrap();
    for name in [
        METRICS, ENTROPY, MAGNETIZATION, RHO, SCORES, SCORE_SAMPLES, STATE, TE_TABLE, OINFO,
        SUMMARY,
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn interrupted_and_resumed_run_equals_uninterrupted() {
    let (full, cut) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config("ensemble");
    train(&cfg, full.path());
    cmd_train(
        &cfg,
        cut.path(),
        &TrainOptions {
            resume: false,
            stop_after: Some(2),
        },
    )
    .unwrap();
    cmd_train(
        &cfg,
        cut.path(),
        &TrainOptions {
            resume: true,
            stop_after: None,
        },
    )
    .unwrap();
    for name in [METRICS, ENTROPY, MAGNETIZATION, RHO, SCORES, SCORE_SAMPLES, STATE] {
        assert_eq!(
            read(full.path(), name),
            read(cut.path(), name),
            "{name} differs after resume"
        );
    }
}

#[test]
fn config_snapshot_round_trips() {
    let cfg = small_config("ensemble");
    let text = cfg.serialize();
    let back = Config::parse(&text, Path::new(".")).expect("snapshot parses");
    assert_eq!(cfg, back);
}

#[test]
fn analyze_cardinality_and_summary_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("ensemble");
    train(&cfg, dir.path());
    cmd_analyze(dir.path(), None, None).unwrap();

    // 6 ordered label pairs x tau_max delays
    assert_eq!(data_rows(&read(dir.path(), TE_TABLE)), 6 * cfg.tau_max);
    // ensemble mode: one O-information row per sweep
    assert_eq!(data_rows(&read(dir.path(), OINFO)), SWEEPS);
    let summary = read(dir.path(), SUMMARY);
    for field in [
        "sweeps =",
        "transition_sweep =",
        "mean_entropy_initial =",
        "mean_entropy_final =",
        "mean_entropy_after_transition =",
        "analysis_window =",
        "window_oinfo_mean =",
    ] {
        assert!(summary.contains(field), "summary missing `{field}`");
    }
}

#[test]
fn windowed_mode_oinfo_rows_cover_interior_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("mean");
    train(&cfg, dir.path());
    cmd_analyze(dir.path(), None, None).unwrap();
    // window w = max(oinfo_window, k + 2) = 6: one row per full window
    assert_eq!(data_rows(&read(dir.path(), OINFO)), SWEEPS - 6 + 1);
}

#[test]
fn compare_run_with_itself_gives_zero_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("ensemble");
    train(&cfg, dir.path());
    cmd_analyze(dir.path(), None, None).unwrap();
    let table = cmd_compare(dir.path(), dir.path(), None).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 6 * cfg.tau_max);
    for row in rows {
        let z: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(z, 0.0, "self-comparison must give z = 0: {row}");
    }
}

#[test]
fn plots_are_wellformed_svg_and_replot_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("ensemble");
    train(&cfg, dir.path());
    cmd_analyze(dir.path(), None, None).unwrap();
    cmd_plot(dir.path()).unwrap();
    let first: Vec<String> = PLOT_FILES.iter().map(|f| read(dir.path(), f)).collect();
    for (name, body) in PLOT_FILES.iter().zip(&first) {
        assert!(body.starts_with("<svg"), "{name} is not an SVG document");
        assert!(body.trim_end().ends_with("</svg>"), "{name} is truncated");
    }
    cmd_plot(dir.path()).unwrap();
    let second: Vec<String> = PLOT_FILES.iter().map(|f| read(dir.path(), f)).collect();
    assert_eq!(first, second, "re-plot changed plot bytes");
}
