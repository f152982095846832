//! `analyze`: transfer entropy between mask magnetization series for every
//! ordered label pair and delay, the sliding-window O-information of the
//! score series, and the entanglement-transition detector. `compare` turns
//! the TE tables of two runs into a z-score table.

use crate::artifacts::{
    fields, write_atomic, Trace, ANALYSIS_VERSION, ENTROPY, MAGNETIZATION, OINFO, SCORES,
    SCORE_SAMPLES, SNAPSHOT, SUMMARY, TE_TABLE,
};
use crate::config::{Config, ScoreSeries};
use crate::train::{
    ENTROPY_HEADER, LABELS, MAGNETIZATION_HEADER, SCORES_HEADER, SCORE_SAMPLES_HEADER,
};
use anyhow::{bail, Context, Result};
use qmask_core::hoi::{averaged_mask_te, o_information, z_score, KsgConfig, TeSpec};
use std::fmt::Write as _;
use std::path::Path;

pub const TE_HEADER: &str = "source,target,tau,mean,std";
pub const OINFO_HEADER: &str = "sweep,mean,std";
pub const Z_HEADER: &str = "source,target,tau,z";

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

pub fn load_run_config(run: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(run.join(SNAPSHOT))
        .with_context(|| format!("no config snapshot in {}", run.display()))?;
    Config::parse(&text, run)
}

/// Magnetization series per (label, site): `out[l][site][sweep]`.
fn magnetization_series(run: &Path, n_sites: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let trace = Trace::read(run, MAGNETIZATION, MAGNETIZATION_HEADER)?;
    let sweeps = trace.rows.len() / (LABELS * n_sites);
    let mut out = vec![vec![vec![0.0; sweeps]; n_sites]; LABELS];
    for row in &trace.rows {
        let f = fields(row)?;
        let (sweep, l, site, v) = (f[0] as usize, f[1] as usize, f[2] as usize, f[3]);
        if l >= LABELS || site >= n_sites || sweep >= sweeps {
            bail!("magnetization row out of range: {row}");
        }
        out[l][site][sweep] = v;
    }
    Ok(out)
}

/// Score series per label: `out[l][sweep]`.
fn score_series(run: &Path) -> Result<Vec<Vec<f64>>> {
    let trace = Trace::read(run, SCORES, SCORES_HEADER)?;
    let sweeps = trace.rows.len() / LABELS;
    let mut out = vec![vec![0.0; sweeps]; LABELS];
    for row in &trace.rows {
        let f = fields(row)?;
        out[f[1] as usize][f[0] as usize] = f[2];
    }
    Ok(out)
}

/// Per-sample score ensemble: `out[sweep][l][sample]`.
fn score_sample_ensembles(run: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let trace = Trace::read(run, SCORE_SAMPLES, SCORE_SAMPLES_HEADER)?;
    let mut out: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in &trace.rows {
        let f = fields(row)?;
        let (sweep, l, i, v) = (f[0] as usize, f[1] as usize, f[2] as usize, f[3]);
        if l >= LABELS {
            bail!("score sample row out of range: {row}");
        }
        if out.len() <= sweep {
            out.resize(sweep + 1, vec![Vec::new(); LABELS]);
        }
        let col = &mut out[sweep][l];
        if col.len() != i {
            bail!("score sample rows out of order: {row}");
        }
        col.push(v);
    }
    Ok(out)
}

/// Mean bond entropy per sweep.
pub fn mean_entropy_series(run: &Path, n_sites: usize) -> Result<Vec<f64>> {
    let trace = Trace::read(run, ENTROPY, ENTROPY_HEADER)?;
    let bonds = n_sites - 1;
    let sweeps = trace.rows.len() / bonds;
    let mut out = vec![0.0; sweeps];
    for row in &trace.rows {
        let f = fields(row)?;
        out[f[0] as usize] += f[2] / bonds as f64;
    }
    Ok(out)
}

/// The sweep with the largest single-sweep drop of the mean bond entropy.
pub fn detect_transition(mean_s: &[f64]) -> usize {
    let mut best = 1usize;
    let mut drop = f64::NEG_INFINITY;
    for t in 1..mean_s.len() {
        let d = mean_s[t - 1] - mean_s[t];
        if d > drop {
            drop = d;
            best = t;
        }
    }
    best
}

fn worker_count() -> usize {
    std::env::var("QMASK_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Sites whose peak |magnetization| reaches the threshold; falls back to the
/// full chain when the cut empties a label.
fn spin_subset(series: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let strong: Vec<usize> = (0..series.len())
        .filter(|&site| series[site].iter().any(|m| m.abs() >= threshold))
        .collect();
    if strong.is_empty() {
        (0..series.len()).collect()
    } else {
        strong
    }
}

pub struct Analysis {
    pub te_rows: Vec<String>,
    pub oinfo_rows: Vec<String>,
    pub transition: usize,
    pub summary: String,
}

pub fn analyze(run: &Path, tau_max: Option<usize>, k: Option<usize>) -> Result<Analysis> {
    let cfg = load_run_config(run)?;
    let tau_max = tau_max.unwrap_or(cfg.tau_max);
    let k = k.unwrap_or(cfg.k);
    let n = cfg.n_sites();

    let mag = magnetization_series(run, n)?;
    let scores = score_series(run)?;
    let mean_s = mean_entropy_series(run, n)?;
    let sweeps = mean_s.len();
    if sweeps == 0 {
        bail!("run {} has no completed sweeps", run.display());
    }
    let transition = detect_transition(&mean_s);

    let ksg = KsgConfig {
        k,
        jitter_scale: 1e-10,
        jitter_seed: cfg.seed.wrapping_add(2),
    };

    // transfer entropy for the 6 ordered label pairs x tau_max delays
    let mut tasks = Vec::new();
    for src in 0..LABELS {
        for tgt in 0..LABELS {
            if src != tgt {
                for tau in 1..=tau_max {
                    tasks.push((src, tgt, tau));
                }
            }
        }
    }
    let subsets: Vec<Vec<usize>> = mag
        .iter()
        .map(|series| spin_subset(series, cfg.spin_threshold))
        .collect();
    let pick = |l: usize| -> Vec<Vec<f64>> {
        subsets[l].iter().map(|&site| mag[l][site].clone()).collect()
    };
    let label_series: Vec<Vec<Vec<f64>>> = (0..LABELS).map(pick).collect();

    let workers = worker_count().min(tasks.len()).max(1);
    let mut results: Vec<Option<(f64, f64)>> = vec![None; tasks.len()];
    let chunks: Vec<Vec<usize>> = (0..workers)
        .map(|w| (w..tasks.len()).step_by(workers).collect())
        .collect();
    let partials: Vec<Result<Vec<(usize, (f64, f64))>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                let tasks = &tasks;
                let label_series = &label_series;
                let ksg = &ksg;
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&i| {
                            let (src, tgt, tau) = tasks[i];
                            let te = averaged_mask_te(
                                &label_series[src],
                                &label_series[tgt],
                                &TeSpec::symmetric(tau),
                                ksg,
                            )
                            .with_context(|| format!("TE {src}->{tgt} at tau {tau}"))?;
                            Ok((i, te))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for partial in partials {
        for (i, te) in partial? {
            results[i] = Some(te);
        }
    }
    let te_rows: Vec<String> = tasks
        .iter()
        .zip(&results)
        .map(|(&(src, tgt, tau), r)| {
            let (mean, std) = r.expect("task not computed");
            format!("{src},{tgt},{tau},{},{}", fmt(mean), fmt(std))
        })
        .collect();

    // O-information over the three score series. In `ensemble` mode the test
    // set is the statistical ensemble, giving one estimate per sweep; in the
    // reduced modes a sliding sweep window over the per-sweep series is the
    // ensemble instead.
    let w = cfg.oinfo_window.max(k + 2);
    let half = (w - 1) / 2;
    let mut oinfo_rows = Vec::new();
    let mut series_oinfo = Vec::new();
    if cfg.score_series == ScoreSeries::Ensemble {
        let ensembles = score_sample_ensembles(run)?;
        if ensembles.len() != sweeps {
            bail!(
                "score sample trace covers {} sweeps, expected {sweeps}",
                ensembles.len()
            );
        }
        let workers = worker_count().min(sweeps).max(1);
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (w..sweeps).step_by(workers).collect())
            .collect();
        let partials: Vec<Result<Vec<(usize, (f64, f64))>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    let ensembles = &ensembles;
                    let ksg = &ksg;
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|&t| {
                                let e = &ensembles[t];
                                let v = o_information(&e[0], &e[1], &e[2], ksg)
                                    .with_context(|| format!("O-information at sweep {t}"))?;
                                Ok((t, v))
                            })
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut per_sweep: Vec<Option<(f64, f64)>> = vec![None; sweeps];
        for partial in partials {
            for (t, v) in partial? {
                per_sweep[t] = Some(v);
            }
        }
        for (t, v) in per_sweep.iter().enumerate() {
            let (mean, std) = v.expect("sweep not computed");
            oinfo_rows.push(format!("{t},{},{}", fmt(mean), fmt(std)));
            series_oinfo.push((t, mean));
        }
    } else {
        for center in half..sweeps.saturating_sub(w - 1 - half) {
            let lo = center - half;
            let hi = lo + w;
            let (mean, std) = o_information(
                &scores[0][lo..hi],
                &scores[1][lo..hi],
                &scores[2][lo..hi],
                &ksg,
            )
            .with_context(|| format!("O-information window centered at sweep {center}"))?;
            oinfo_rows.push(format!("{center},{},{}", fmt(mean), fmt(std)));
            series_oinfo.push((center, mean));
        }
    }

    // analysis window: explicit override, else centered on the transition
    let (win_lo, win_hi) = cfg.window.unwrap_or_else(|| {
        let lo = transition.saturating_sub(half);
        (lo, (lo + w).min(sweeps))
    });
    if win_hi <= win_lo || win_hi > sweeps {
        bail!("analysis window {win_lo}..{win_hi} outside 0..{sweeps}");
    }
    let window_oinfo = if cfg.score_series == ScoreSeries::Ensemble {
        let vals: Vec<f64> = series_oinfo
            .iter()
            .filter(|(t, _)| (win_lo..win_hi).contains(t))
            .map(|&(_, v)| v)
            .collect();
        if vals.is_empty() {
            None
        } else {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            Some((m, var.sqrt()))
        }
    } else if win_hi - win_lo >= k + 2 {
        Some(o_information(
            &scores[0][win_lo..win_hi],
            &scores[1][win_lo..win_hi],
            &scores[2][win_lo..win_hi],
            &ksg,
        )?)
    } else {
        None
    };

    let mut summary = String::new();
    let _ = writeln!(summary, "sweeps = {sweeps}");
    let _ = writeln!(summary, "transition_sweep = {transition}");
    let _ = writeln!(summary, "mean_entropy_initial = {}", fmt(mean_s[0]));
    let _ = writeln!(summary, "mean_entropy_final = {}", fmt(mean_s[sweeps - 1]));
    let after: f64 =
        mean_s[transition..].iter().sum::<f64>() / (sweeps - transition) as f64;
    let _ = writeln!(summary, "mean_entropy_after_transition = {}", fmt(after));
    let _ = writeln!(summary, "analysis_window = {win_lo}..{win_hi}");
    if let Some((m, s)) = window_oinfo {
        let _ = writeln!(summary, "window_oinfo_mean = {}", fmt(m));
        let _ = writeln!(summary, "window_oinfo_std = {}", fmt(s));
    }

    Ok(Analysis {
        te_rows,
        oinfo_rows,
        transition,
        summary,
    })
}

fn render_analysis(header: &str, rows: &[String]) -> String {
    let mut s = String::new();
    s.push_str(ANALYSIS_VERSION);
    s.push('\n');
    s.push_str(header);
    s.push('\n');
    for row in rows {
        s.push_str(row);
        s.push('\n');
    }
    s
}

pub fn cmd_analyze(run: &Path, tau_max: Option<usize>, k: Option<usize>) -> Result<()> {
    let analysis = analyze(run, tau_max, k)?;
    write_atomic(&run.join(TE_TABLE), &render_analysis(TE_HEADER, &analysis.te_rows))?;
    write_atomic(&run.join(OINFO), &render_analysis(OINFO_HEADER, &analysis.oinfo_rows))?;
    write_atomic(&run.join(SUMMARY), &analysis.summary)?;
    Ok(())
}

/// Read back an analysis CSV, enforcing version and header.
pub fn read_analysis(run: &Path, name: &str, header: &str) -> Result<Vec<String>> {
    let path = run.join(name);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(v) if v == ANALYSIS_VERSION => {}
        Some(v) => bail!("{name}: version `{v}`, expected `{ANALYSIS_VERSION}`"),
        None => bail!("{name}: empty file"),
    }
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => bail!("{name}: header `{h}`, expected `{header}`"),
        None => bail!("{name}: missing header"),
    }
    Ok(lines.map(str::to_string).collect())
}

/// z-score table between the TE tables of two runs.
pub fn cmd_compare(run_a: &Path, run_b: &Path, out: Option<&Path>) -> Result<String> {
    let rows_a = read_analysis(run_a, TE_TABLE, TE_HEADER)
        .with_context(|| format!("{}: run `analyze` first", run_a.display()))?;
    let rows_b = read_analysis(run_b, TE_TABLE, TE_HEADER)
        .with_context(|| format!("{}: run `analyze` first", run_b.display()))?;
    if rows_a.len() != rows_b.len() {
        bail!(
            "TE tables differ in size ({} vs {} rows)",
            rows_a.len(),
            rows_b.len()
        );
    }
    let mut z_rows = Vec::with_capacity(rows_a.len());
    for (ra, rb) in rows_a.iter().zip(&rows_b) {
        let fa = fields(ra)?;
        let fb = fields(rb)?;
        if fa[..3] != fb[..3] {
            bail!("TE tables are not aligned: `{ra}` vs `{rb}`");
        }
        let z = z_score(fa[3], fa[4], fb[3], fb[4]);
        z_rows.push(format!(
            "{},{},{},{}",
            fa[0] as usize, fa[1] as usize, fa[2] as usize,
            fmt(z)
        ));
    }
    let table = render_analysis(Z_HEADER, &z_rows);
    if let Some(path) = out {
        write_atomic(path, &table)?;
    }
    Ok(table)
}
