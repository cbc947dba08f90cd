//! Experiment orchestration: each subcommand resolves its config, opens a
//! run directory keyed by `hash(spec, seed)`, trains/evaluates through the
//! core crate, and leaves `manifest.json`, CSV logs, checkpoints, plots, and
//! a final `report.json`. Grid experiments persist per-cell done markers so
//! an interrupted run resumes after the last finished cell.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gptk_core::conditional::{
    sample_images_conditional, train_acgan, AcGanConfig, AcGanInit,
};
use gptk_core::data::{make_synthetic, subset, DatasetHandle, SyntheticKind};
use gptk_core::metrics::{
    classifier_accuracy_eval, fid, fid_per_class, fit_embedding_with, gaussian_stats, iw,
    train_classifier, train_iw_critic, ClassifierConfig, EmbeddingNet, GaussianStats,
    IwCriticConfig, MetricKind, MetricReport, EMBED_DIM_DEFAULT,
};
use gptk_core::model_zoo::{
    load_checkpoint, save_checkpoint, ArchitectureSpec, Checkpoint, Conditioning, ParamStore,
};
use gptk_core::selection::{load_zoo_manifest, rank_sources, SelectionConfig};
use gptk_core::train::{train_gan, IterationRecord, TrainConfig, TrainHooks};
use gptk_core::transfer::{
    cell_seed, run_transfer_cell, sample_images, CellReport, EvalCfg, ExperimentReport,
    InitSource, TransferConfig,
};
use gptk_core::{Error, Result};

use crate::config::ConfigFile;
use crate::data_cfg::DataSpec;
use crate::grid::sample_grid;
use crate::layout::{append_csv, run_id, RunDir};
use crate::plot::{moving_average, render_svg, Curve};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct GlobalOpts {
    pub config: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub force: bool,
}

pub const TRAIN_LOG_HEADER: &str = "run_id,iteration,loss_d,loss_g,grad_norm_d,wall_ms";

fn train_log_rows(run_id: &str, log: &[IterationRecord]) -> Vec<String> {
    log.iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                run_id, r.iteration, r.loss_d, r.loss_g, r.grad_norm_d, r.wall_ms
            )
        })
        .collect()
}

/// Architecture pair from `[model]`, sized to the dataset.
fn model_specs(cfg: &ConfigFile, image_size: usize) -> Result<(ArchitectureSpec, ArchitectureSpec)> {
    let mut s = cfg.section("model");
    let base_width = s.get("base_width", 8usize)?;
    let noise_dim = s.get("noise_dim", 16usize)?;
    s.finish()?;
    Ok((
        ArchitectureSpec::generator(image_size, base_width).with_noise_dim(noise_dim),
        ArchitectureSpec::discriminator(image_size, base_width),
    ))
}

fn train_cfg(cfg: &ConfigFile, seed: u64) -> Result<TrainConfig> {
    let base = TrainConfig::source();
    let mut s = cfg.section("train");
    let tc = TrainConfig {
        batch_size: s.get("batch_size", base.batch_size)?,
        lr: s.get("lr", base.lr)?,
        beta1: s.get("beta1", base.beta1)?,
        beta2: s.get("beta2", base.beta2)?,
        iterations: s.get("iterations", base.iterations)?,
        n_critic: s.get("n_critic", base.n_critic)?,
        gp_lambda: s.get("gp_lambda", base.gp_lambda)?,
        seed,
    };
    s.finish()?;
    tc.validate()?;
    Ok(tc)
}

#[derive(Debug, Clone)]
struct EvalOpts {
    n_eval_samples: usize,
    hook_interval: u64,
    embed_dim: usize,
    embed_iterations: u64,
    embed_seed: u64,
}

fn eval_opts(cfg: &ConfigFile) -> Result<EvalOpts> {
    let mut s = cfg.section("eval");
    let opts = EvalOpts {
        n_eval_samples: s.get("n_eval_samples", 256usize)?,
        hook_interval: s.get("hook_interval", 0u64)?,
        embed_dim: s.get("embed_dim", EMBED_DIM_DEFAULT)?,
        embed_iterations: s.get("embed_iterations", 500u64)?,
        embed_seed: s.get("embed_seed", 0u64)?,
    };
    s.finish()?;
    Ok(opts)
}

fn iw_cfg(cfg: &ConfigFile, seed: u64) -> Result<Option<IwCriticConfig>> {
    let mut s = cfg.section("iw");
    let enabled = s.get("enabled", false)?;
    let base = IwCriticConfig::default();
    let out = IwCriticConfig {
        iterations: s.get("iterations", base.iterations)?,
        batch_size: s.get("batch_size", base.batch_size)?,
        lr: s.get("lr", base.lr)?,
        gp_lambda: s.get("gp_lambda", base.gp_lambda)?,
        seed,
    };
    s.finish()?;
    Ok(if enabled { Some(out) } else { None })
}

fn fit_embedder(data: &DatasetHandle, opts: &EvalOpts) -> Result<EmbeddingNet> {
    fit_embedding_with(data, opts.embed_seed, opts.embed_dim, opts.embed_iterations)
}

/// Every implicit default lands in the run manifest.
#[allow(clippy::too_many_arguments)]
fn manifest_json(
    command: &str,
    run_id: &str,
    seed: u64,
    cfg: &ConfigFile,
    tc: Option<&TrainConfig>,
    acgan: Option<&AcGanConfig>,
    noise_dim: usize,
    embedder_checksum: &str,
) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "run_id": run_id,
        "seed": seed,
        "config": cfg.canonical(),
        "defaults": {
            "gp_lambda": tc.map(|t| t.gp_lambda).unwrap_or(10.0),
            "n_critic": tc.map(|t| t.n_critic).unwrap_or(5),
            "alpha_g": acgan.map(|a| a.alpha_g).unwrap_or(1.0),
            "alpha_d": acgan.map(|a| a.alpha_d).unwrap_or(1.0),
            "noise_dim": noise_dim,
            "embedder_checksum": embedder_checksum,
        },
        "versions": {
            "code": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": 1,
        },
    })
}

fn embed_stats(embedder: &EmbeddingNet, images: &ndarray::Array4<f32>) -> Result<GaussianStats> {
    gaussian_stats(&embedder.embed(images)?)
}

fn generator_fid(
    g: &ParamStore,
    embedder: &EmbeddingNet,
    real_stats: &GaussianStats,
    n: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let images = sample_images(g, n, seed)?;
    let stats = embed_stats(embedder, &images)?;
    Ok((fid(&stats, real_stats)?, n))
}

fn metric_row(
    run_id: &str,
    iteration: u64,
    metric: MetricKind,
    label: &str,
    value: f64,
    checksum: &str,
    n1: usize,
    n2: usize,
) -> MetricReport {
    MetricReport {
        run_id: run_id.to_string(),
        iteration,
        metric,
        label: label.to_string(),
        value,
        embedding_checksum: checksum.to_string(),
        n1,
        n2,
    }
}

fn write_metrics(rd: &RunDir, rows: &[MetricReport]) -> Result<()> {
    let lines: Vec<String> = rows.iter().map(|r| r.to_csv_row()).collect();
    // Single atomic write at completion so resumed runs never duplicate rows.
    let mut text = String::from(MetricReport::csv_header());
    text.push('\n');
    for line in &lines {
        text.push_str(line);
        text.push('\n');
    }
    std::fs::write(rd.metrics_path(), text)?;
    Ok(())
}

/// Runs `tasks` with at most `jobs` worker threads; results keep task order.
fn run_parallel<T, F>(jobs: usize, tasks: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let jobs = jobs.max(1);
    let n = tasks.len();
    let queue: Mutex<Vec<(usize, F)>> = Mutex::new(tasks.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop();
                match item {
                    Some((i, task)) => {
                        let value = task();
                        results.lock().unwrap()[i] = Some(value);
                    }
                    None => break,
                }
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("task completed"))
        .collect()
}

// ---------------------------------------------------------------------------
// train-source
// ---------------------------------------------------------------------------

pub fn cmd_train_source(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "model", "train", "eval"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let (g_spec, d_spec) = model_specs(&cfg, data.image_size)?;
    let tc = train_cfg(&cfg, opts.seed)?;
    let ev = eval_opts(&cfg)?;

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    let embedder = fit_embedder(&data, &ev)?;
    rd.write_manifest(&manifest_json(
        "train-source",
        &id,
        opts.seed,
        &cfg,
        Some(&tc),
        None,
        g_spec.noise_dim,
        &embedder.checksum,
    ))?;

    let real_stats = embed_stats(&embedder, data.images())?;
    let g0 = gptk_core::model_zoo::build_network(&g_spec, opts.seed)?;
    let d0 = gptk_core::model_zoo::build_network(&d_spec, opts.seed.wrapping_add(1))?;

    let metrics: Mutex<Vec<MetricReport>> = Mutex::new(Vec::new());
    let (g, d, log) = {
        let mut hooks = TrainHooks {
            interval: ev.hook_interval,
            on_snapshot: Some(Box::new(|iter, g_now: &ParamStore, _| {
                let (v, n) =
                    generator_fid(g_now, &embedder, &real_stats, ev.n_eval_samples, opts.seed ^ iter)?;
                metrics.lock().unwrap().push(metric_row(
                    &id,
                    iter,
                    MetricKind::Fid,
                    "",
                    v,
                    &embedder.checksum,
                    n,
                    data.size(),
                ));
                save_checkpoint(
                    &Checkpoint::new(g_now.clone(), iter, data.dataset_id.clone(), opts.seed),
                    rd.checkpoint_path(&format!("g_iter{}.gptk", iter)),
                )?;
                Ok(())
            })),
        };
        train_gan(&g0, &d0, &data, &tc, &mut hooks)?
    };
    let mut metrics = metrics.into_inner().unwrap();
    if metrics.last().map(|m| m.iteration) != Some(tc.iterations) {
        let (v, n) = generator_fid(&g, &embedder, &real_stats, ev.n_eval_samples, opts.seed ^ tc.iterations)?;
        metrics.push(metric_row(
            &id,
            tc.iterations,
            MetricKind::Fid,
            "",
            v,
            &embedder.checksum,
            n,
            data.size(),
        ));
    }

    append_csv(&rd.train_log_path(), TRAIN_LOG_HEADER, &train_log_rows(&id, &log))?;
    write_metrics(&rd, &metrics)?;
    save_checkpoint(
        &Checkpoint::new(g.clone(), tc.iterations, data.dataset_id.clone(), opts.seed),
        rd.checkpoint_path("g_final.gptk"),
    )?;
    save_checkpoint(
        &Checkpoint::new(d.clone(), tc.iterations, data.dataset_id.clone(), opts.seed),
        rd.checkpoint_path("d_final.gptk"),
    )?;
    plot_fid_curves(
        &rd,
        &[("fid".to_string(), metrics.iter().map(|m| (m.iteration as f64, m.value)).collect())],
        "FID during source training",
    )?;
    sample_grid(&g, 4, 4, opts.seed, false, &rd.plot_path("samples.png"))?;
    rd.write_report(&serde_json::json!({
        "final_fid": metrics.last().map(|m| m.value),
        "g_checksum": g.checksum_hex(),
        "d_checksum": d.checksum_hex(),
        "embedding_checksum": embedder.checksum,
        "iterations": tc.iterations,
    }))?;
    rd.check_artifacts(&[
        "manifest.json",
        "metrics.csv",
        "train_log.csv",
        "checkpoints/g_final.gptk",
        "checkpoints/d_final.gptk",
        "plots/fid.svg",
        "plots/samples.png",
        "report.json",
    ])?;
    println!("run {} complete: {}", id, rd.root.display());
    Ok(())
}

fn plot_fid_curves(rd: &RunDir, curves: &[(String, Vec<(f64, f64)>)], title: &str) -> Result<()> {
    let curves: Vec<Curve> = curves
        .iter()
        .filter(|(_, pts)| !pts.is_empty())
        .map(|(label, pts)| Curve {
            label: label.clone(),
            points: pts.clone(),
        })
        .collect();
    if curves.is_empty() {
        // Nothing evaluated (e.g. zero-iteration smoke runs): emit a stub so
        // the artifact check stays meaningful.
        std::fs::write(rd.plot_path("fid.svg"), "<svg xmlns=\"http://www.w3.org/2000/svg\"/>")?;
        return Ok(());
    }
    render_svg(&curves, title, "iteration", "FID", &rd.plot_path("fid.svg"))
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

fn parse_cell(label: &str, source_g: &Option<String>, source_d: &Option<String>) -> Result<(InitSource, InitSource)> {
    let pretrained = |which: &Option<String>, name: &str| {
        which
            .as_ref()
            .map(|p| InitSource::Pretrained(PathBuf::from(p)))
            .ok_or_else(|| {
                Error::validation(format!(
                    "cell `{}` needs [transfer] {} pointing at a source checkpoint",
                    label, name
                ))
            })
    };
    match label {
        "scratch_scratch" => Ok((InitSource::Scratch, InitSource::Scratch)),
        "pretrained_scratch" => Ok((pretrained(source_g, "source_g")?, InitSource::Scratch)),
        "scratch_pretrained" => Ok((InitSource::Scratch, pretrained(source_d, "source_d")?)),
        "pretrained_pretrained" => Ok((
            pretrained(source_g, "source_g")?,
            pretrained(source_d, "source_d")?,
        )),
        other => Err(Error::validation(format!(
            "unknown transfer cell `{}` (expected scratch_scratch, pretrained_scratch, scratch_pretrained, pretrained_pretrained)",
            other
        ))),
    }
}

pub fn cmd_transfer(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "model", "train", "transfer", "eval", "iw"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let (g_spec, d_spec) = model_specs(&cfg, data.image_size)?;
    let tc = train_cfg(&cfg, opts.seed)?;
    let ev = eval_opts(&cfg)?;
    let iw_critic_cfg = iw_cfg(&cfg, opts.seed)?;

    let mut t = cfg.section("transfer");
    let source_g = t.get_str("source_g");
    let source_d = t.get_str("source_d");
    let cells: Vec<String> = t.get_list("cells")?.unwrap_or_else(|| {
        vec![
            "scratch_scratch".into(),
            "pretrained_scratch".into(),
            "scratch_pretrained".into(),
            "pretrained_pretrained".into(),
        ]
    });
    t.finish()?;

    let grid: Vec<TransferConfig> = cells
        .iter()
        .map(|label| {
            let (gi, di) = parse_cell(label, &source_g, &source_d)?;
            Ok(TransferConfig {
                generator_init: gi,
                discriminator_init: di,
                finetune_cfg: tc.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    let embedder = fit_embedder(&data, &ev)?;
    rd.write_manifest(&manifest_json(
        "transfer",
        &id,
        opts.seed,
        &cfg,
        Some(&tc),
        None,
        g_spec.noise_dim,
        &embedder.checksum,
    ))?;

    let eval_cfg = EvalCfg {
        n_eval_samples: ev.n_eval_samples,
        hook_interval: ev.hook_interval,
        iw: iw_critic_cfg,
    };
    let report = run_grid_cells(
        &rd,
        &grid,
        &g_spec,
        &d_spec,
        &data,
        &embedder,
        &eval_cfg,
        opts.seed,
        opts.jobs,
    )?;

    let mut metrics = Vec::new();
    let mut curves = Vec::new();
    for cell in &report.cells {
        let label = format!("g:{} d:{}", cell.generator_init, cell.discriminator_init);
        for &(iter, v) in &cell.fid_trajectory {
            metrics.push(metric_row(
                &id,
                iter,
                MetricKind::Fid,
                &label,
                v,
                &embedder.checksum,
                ev.n_eval_samples,
                data.size(),
            ));
        }
        if let Some(v) = cell.final_iw {
            metrics.push(metric_row(
                &id,
                tc.iterations,
                MetricKind::Iw,
                &label,
                v,
                &embedder.checksum,
                data.size(),
                ev.n_eval_samples,
            ));
        }
        curves.push((
            label,
            cell.fid_trajectory
                .iter()
                .map(|&(i, v)| (i as f64, v))
                .collect(),
        ));
    }
    write_metrics(&rd, &metrics)?;
    plot_fid_curves(&rd, &curves, "FID by initialization")?;
    rd.write_report(&serde_json::to_value(&report).unwrap())?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json", "plots/fid.svg"])?;
    println!("run {} complete: {}", id, rd.root.display());
    for cell in &report.cells {
        println!(
            "  g:{:<10} d:{:<10} final_fid={:?} error={:?}",
            cell.generator_init, cell.discriminator_init, cell.final_fid, cell.error
        );
    }
    Ok(())
}

/// Runs grid cells with done-marker resume and a `--jobs` thread limit,
/// saving the fine-tuned generator checkpoint per cell.
#[allow(clippy::too_many_arguments)]
fn run_grid_cells(
    rd: &RunDir,
    grid: &[TransferConfig],
    g_spec: &ArchitectureSpec,
    d_spec: &ArchitectureSpec,
    data: &DatasetHandle,
    embedder: &EmbeddingNet,
    eval_cfg: &EvalCfg,
    experiment_seed: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    let mut cells: Vec<Option<CellReport>> = (0..grid.len()).map(|i| rd.load_cell(i)).collect();
    let pending: Vec<usize> = (0..grid.len()).filter(|&i| cells[i].is_none()).collect();

    let tasks: Vec<_> = pending
        .iter()
        .map(|&i| {
            let tc = &grid[i];
            move || -> CellReport {
                let seed = cell_seed(experiment_seed, i);
                let mut report = CellReport {
                    cell_index: i,
                    generator_init: tc.generator_init.label().to_string(),
                    discriminator_init: tc.discriminator_init.label().to_string(),
                    seed,
                    final_fid: None,
                    final_iw: None,
                    fid_trajectory: Vec::new(),
                    g_checksum: None,
                    d_checksum: None,
                    error: None,
                };
                match run_transfer_cell(g_spec, d_spec, tc, data, embedder, eval_cfg, None, seed) {
                    Ok((g, d, trajectory, final_iw)) => {
                        report.final_fid = trajectory.last().map(|&(_, v)| v);
                        report.final_iw = final_iw;
                        report.fid_trajectory = trajectory;
                        report.g_checksum = Some(g.checksum_hex());
                        report.d_checksum = Some(d.checksum_hex());
                        let ckpt = Checkpoint::new(
                            g,
                            tc.finetune_cfg.iterations,
                            data.dataset_id.clone(),
                            seed,
                        );
                        if let Err(e) =
                            save_checkpoint(&ckpt, rd.checkpoint_path(&format!("cell{}_g.gptk", i)))
                        {
                            report.error = Some(e.to_string());
                        }
                    }
                    Err(e) => report.error = Some(e.to_string()),
                }
                report
            }
        })
        .collect();
    let finished = run_parallel(jobs, tasks);
    for report in finished {
        let idx = report.cell_index;
        rd.save_cell(idx, &report)?;
        cells[idx] = Some(report);
    }
    Ok(ExperimentReport {
        embedding_checksum: embedder.checksum.clone(),
        cells: cells.into_iter().map(|c| c.expect("cell complete")).collect(),
    })
}

// ---------------------------------------------------------------------------
// size-sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepCell {
    pub size: usize,
    pub init: String,
    pub final_fid: Option<f64>,
    /// FID between the training subset and the full real dataset — the
    /// real-data lower-bound observation.
    pub subset_real_fid: Option<f64>,
    pub error: Option<String>,
}

pub fn cmd_size_sweep(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "model", "train", "transfer", "sweep", "eval"])?;
    let full = DataSpec::from_config(&cfg, "data")?.load()?;
    let (g_spec, d_spec) = model_specs(&cfg, full.image_size)?;
    let tc = train_cfg(&cfg, opts.seed)?;
    let ev = eval_opts(&cfg)?;

    let mut sw = cfg.section("sweep");
    let sizes: Vec<usize> = sw
        .get_list("sizes")?
        .unwrap_or_else(|| vec![100, 1000, 5000]);
    sw.finish()?;
    let mut t = cfg.section("transfer");
    let source_g = t.get_str("source_g");
    let source_d = t.get_str("source_d");
    t.finish()?;

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    let embedder = fit_embedder(&full, &ev)?;
    rd.write_manifest(&manifest_json(
        "size-sweep",
        &id,
        opts.seed,
        &cfg,
        Some(&tc),
        None,
        g_spec.noise_dim,
        &embedder.checksum,
    ))?;

    let full_stats = embed_stats(&embedder, full.images())?;
    let inits: Vec<(&str, InitSource, InitSource)> = {
        let mut v = vec![("scratch", InitSource::Scratch, InitSource::Scratch)];
        if let (Some(gp), Some(dp)) = (&source_g, &source_d) {
            v.push((
                "pretrained",
                InitSource::Pretrained(PathBuf::from(gp)),
                InitSource::Pretrained(PathBuf::from(dp)),
            ));
        }
        v
    };

    // One cell per (size, init), resumable.
    let mut plan = Vec::new();
    for &size in &sizes {
        for (label, gi, di) in &inits {
            plan.push((size, label.to_string(), gi.clone(), di.clone()));
        }
    }
    let mut cells: Vec<Option<SweepCell>> = (0..plan.len()).map(|i| rd.load_cell(i)).collect();
    let pending: Vec<usize> = (0..plan.len()).filter(|&i| cells[i].is_none()).collect();
    let eval_cfg = EvalCfg {
        n_eval_samples: ev.n_eval_samples,
        hook_interval: ev.hook_interval,
        iw: None,
    };
    let tasks: Vec<_> = pending
        .iter()
        .map(|&i| {
            let (size, label, gi, di) = plan[i].clone();
            let g_spec = &g_spec;
            let d_spec = &d_spec;
            let full = &full;
            let embedder = &embedder;
            let full_stats = &full_stats;
            let tc = &tc;
            let eval_cfg = &eval_cfg;
            move || -> (usize, SweepCell) {
                let seed = cell_seed(opts.seed, i);
                let mut cell = SweepCell {
                    size,
                    init: label,
                    final_fid: None,
                    subset_real_fid: None,
                    error: None,
                };
                let outcome = (|| -> Result<(f64, f64)> {
                    let sub = subset(full, size, seed)?;
                    let sub_stats = embed_stats(embedder, sub.images())?;
                    let lower_bound = fid(&sub_stats, full_stats)?;
                    let cell_tc = TransferConfig {
                        generator_init: gi,
                        discriminator_init: di,
                        finetune_cfg: tc.clone(),
                    };
                    let (g, _, _, _) =
                        run_transfer_cell(g_spec, d_spec, &cell_tc, &sub, embedder, eval_cfg, None, seed)?;
                    // Final FID is measured against the FULL real set: the
                    // sweep asks how well the model covers the domain, not
                    // the subset it saw.
                    let images = sample_images(&g, eval_cfg.n_eval_samples, seed ^ 0x51)?;
                    let gen_stats = embed_stats(embedder, &images)?;
                    Ok((fid(&gen_stats, full_stats)?, lower_bound))
                })();
                match outcome {
                    Ok((final_fid, lower_bound)) => {
                        cell.final_fid = Some(final_fid);
                        cell.subset_real_fid = Some(lower_bound);
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
                (i, cell)
            }
        })
        .collect();
    for (i, cell) in run_parallel(opts.jobs, tasks) {
        rd.save_cell(i, &cell)?;
        cells[i] = Some(cell);
    }
    let cells: Vec<SweepCell> = cells.into_iter().map(|c| c.expect("cell complete")).collect();

    let mut metrics = Vec::new();
    for cell in &cells {
        if let Some(v) = cell.final_fid {
            metrics.push(metric_row(
                &id,
                tc.iterations,
                MetricKind::Fid,
                &format!("{}@{}", cell.init, cell.size),
                v,
                &embedder.checksum,
                ev.n_eval_samples,
                full.size(),
            ));
        }
        if let Some(v) = cell.subset_real_fid {
            metrics.push(metric_row(
                &id,
                0,
                MetricKind::Fid,
                &format!("subset_real@{}", cell.size),
                v,
                &embedder.checksum,
                cell.size,
                full.size(),
            ));
        }
    }
    write_metrics(&rd, &metrics)?;
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (label, _, _) in &inits {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.init == *label)
            .filter_map(|c| c.final_fid.map(|v| (c.size as f64, v)))
            .collect();
        curves.push((label.to_string(), pts));
    }
    plot_fid_curves(&rd, &curves, "Final FID vs target-set size")?;
    rd.write_report(&serde_json::json!({
        "embedding_checksum": embedder.checksum,
        "cells": cells,
    }))?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json", "plots/fid.svg"])?;
    println!("run {} complete: {}", id, rd.root.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MatrixCell {
    pub source: String,
    pub target: String,
    pub final_fid: Option<f64>,
    pub error: Option<String>,
}

pub fn cmd_matrix(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "model", "train", "matrix", "eval"])?;
    // [data] here describes the target template: n, image_size, seed.
    let template = DataSpec::from_config(&cfg, "data")?;
    let tc = train_cfg(&cfg, opts.seed)?;
    let ev = eval_opts(&cfg)?;

    let mut m = cfg.section("matrix");
    let sources_raw: Vec<String> = m
        .get_list("sources")?
        .ok_or_else(|| Error::validation("[matrix] needs `sources = name=run_dir,...`"))?;
    let targets: Vec<String> = m
        .get_list("targets")?
        .ok_or_else(|| Error::validation("[matrix] needs `targets = kind,...`"))?;
    m.finish()?;
    let sources: Vec<(String, PathBuf)> = sources_raw
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(n, p)| (n.to_string(), PathBuf::from(p)))
                .ok_or_else(|| Error::validation(format!("source `{}` is not name=run_dir", s)))
        })
        .collect::<Result<_>>()?;

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;

    // Target datasets and their embedders (one per target domain).
    let mut target_data = Vec::new();
    for kind in &targets {
        let data = make_synthetic(
            SyntheticKind::parse(kind)?,
            template.n,
            template.image_size,
            template.seed,
        )?;
        let embedder = fit_embedder(&data, &ev)?;
        target_data.push((kind.clone(), data, embedder));
    }
    rd.write_manifest(&manifest_json(
        "matrix",
        &id,
        opts.seed,
        &cfg,
        Some(&tc),
        None,
        0,
        &target_data
            .iter()
            .map(|(k, _, e)| format!("{}:{}", k, e.checksum))
            .collect::<Vec<_>>()
            .join(";"),
    ))?;

    let mut plan = Vec::new();
    for (si, (sname, sdir)) in sources.iter().enumerate() {
        for (ti, (tname, _, _)) in target_data.iter().enumerate() {
            plan.push((si, ti, sname.clone(), sdir.clone(), tname.clone()));
        }
    }
    let mut cells: Vec<Option<MatrixCell>> = (0..plan.len()).map(|i| rd.load_cell(i)).collect();
    let pending: Vec<usize> = (0..plan.len()).filter(|&i| cells[i].is_none()).collect();
    let eval_cfg = EvalCfg {
        n_eval_samples: ev.n_eval_samples,
        hook_interval: 0,
        iw: None,
    };
    let tasks: Vec<_> = pending
        .iter()
        .map(|&i| {
            let (_, ti, sname, sdir, tname) = plan[i].clone();
            let target_data = &target_data;
            let tc = &tc;
            let eval_cfg = &eval_cfg;
            let cfg_ref = &cfg;
            move || -> (usize, MatrixCell) {
                let seed = cell_seed(opts.seed, i);
                let mut cell = MatrixCell {
                    source: sname,
                    target: tname,
                    final_fid: None,
                    error: None,
                };
                let outcome = (|| -> Result<f64> {
                    let (_, data, embedder) = &target_data[ti];
                    let (g_spec, d_spec) = model_specs(cfg_ref, data.image_size)?;
                    let cell_tc = TransferConfig {
                        generator_init: InitSource::Pretrained(
                            sdir.join("checkpoints").join("g_final.gptk"),
                        ),
                        discriminator_init: InitSource::Pretrained(
                            sdir.join("checkpoints").join("d_final.gptk"),
                        ),
                        finetune_cfg: tc.clone(),
                    };
                    let (_, _, trajectory, _) = run_transfer_cell(
                        &g_spec, &d_spec, &cell_tc, data, embedder, eval_cfg, None, seed,
                    )?;
                    trajectory
                        .last()
                        .map(|&(_, v)| v)
                        .ok_or_else(|| Error::validation("no evaluation points"))
                })();
                match outcome {
                    Ok(v) => cell.final_fid = Some(v),
                    Err(e) => cell.error = Some(e.to_string()),
                }
                (i, cell)
            }
        })
        .collect();
    for (i, cell) in run_parallel(opts.jobs, tasks) {
        rd.save_cell(i, &cell)?;
        cells[i] = Some(cell);
    }
    let cells: Vec<MatrixCell> = cells.into_iter().map(|c| c.expect("cell complete")).collect();

    let mut metrics = Vec::new();
    for cell in &cells {
        if let Some(v) = cell.final_fid {
            metrics.push(metric_row(
                &id,
                tc.iterations,
                MetricKind::Fid,
                &format!("{}->{}", cell.source, cell.target),
                v,
                "per-target",
                ev.n_eval_samples,
                template.n,
            ));
        }
    }
    write_metrics(&rd, &metrics)?;
    rd.write_report(&serde_json::json!({ "cells": cells }))?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json"])?;
    println!("run {} complete: {}", id, rd.root.display());
    for cell in &cells {
        println!(
            "  {} -> {}: fid={:?} error={:?}",
            cell.source, cell.target, cell.final_fid, cell.error
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// acgan
// ---------------------------------------------------------------------------

pub fn cmd_acgan(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "model", "train", "acgan", "eval"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let (g_spec, d_spec) = model_specs(&cfg, data.image_size)?;
    let tc = train_cfg(&cfg, opts.seed)?;
    let ev = eval_opts(&cfg)?;

    let mut a = cfg.section("acgan");
    let conditioning = match a.get_str("conditioning").as_deref() {
        None | Some("concat") => Conditioning::Concat,
        Some("cond_bnorm") => Conditioning::CondBnorm,
        Some(other) => {
            return Err(Error::validation(format!(
                "unknown conditioning `{}` (expected concat or cond_bnorm)",
                other
            )))
        }
    };
    let n_classes = a.get("n_classes", data.n_classes())?;
    let alpha_g = a.get("alpha_g", 1.0f64)?;
    let alpha_d = a.get("alpha_d", 1.0f64)?;
    let source_g = a.get_str("source_g");
    let source_d = a.get_str("source_d");
    a.finish()?;

    let mut ac_cfg = AcGanConfig::new(conditioning, n_classes, tc.clone());
    ac_cfg.alpha_g = alpha_g;
    ac_cfg.alpha_d = alpha_d;
    let init = match (&source_g, &source_d) {
        (Some(gp), Some(dp)) => AcGanInit::FromCheckpoint {
            generator: PathBuf::from(gp),
            discriminator: PathBuf::from(dp),
        },
        (None, None) => AcGanInit::Scratch {
            g_spec: g_spec.clone(),
            d_spec: d_spec.clone(),
        },
        _ => {
            return Err(Error::validation(
                "[acgan] needs both source_g and source_d, or neither",
            ))
        }
    };

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    let embedder = fit_embedder(&data, &ev)?;
    rd.write_manifest(&manifest_json(
        "acgan",
        &id,
        opts.seed,
        &cfg,
        Some(&tc),
        Some(&ac_cfg),
        g_spec.noise_dim,
        &embedder.checksum,
    ))?;

    let real_emb = embedder.embed(data.images())?;
    let real_labels: Vec<usize> = data.labels().unwrap_or(&[]).to_vec();
    let n_per_class = (ev.n_eval_samples / n_classes.max(1)).max(embedder.embed_dim + 1);

    let metrics: Mutex<Vec<MetricReport>> = Mutex::new(Vec::new());
    let eval_snapshot = |iter: u64, g_now: &ParamStore| -> Result<()> {
        let (gen_images, gen_labels) = sample_images_conditional(g_now, n_per_class, opts.seed ^ iter)?;
        let gen_emb = embedder.embed(&gen_images)?;
        let pcf = fid_per_class(&real_emb, &real_labels, &gen_emb, &gen_labels)?;
        let mut rows = metrics.lock().unwrap();
        for (class, value) in &pcf.per_class {
            if let Ok(v) = value {
                rows.push(metric_row(
                    &id,
                    iter,
                    MetricKind::FidPerClass,
                    &class.to_string(),
                    *v,
                    &embedder.checksum,
                    n_per_class,
                    data.size(),
                ));
            }
        }
        rows.push(metric_row(
            &id,
            iter,
            MetricKind::Fid,
            "avg",
            pcf.avg,
            &embedder.checksum,
            n_per_class * n_classes,
            data.size(),
        ));
        rows.push(metric_row(
            &id,
            iter,
            MetricKind::FidAll,
            "",
            pcf.all,
            &embedder.checksum,
            n_per_class * n_classes,
            data.size(),
        ));
        Ok(())
    };

    let (g, d, log) = {
        let mut hooks = TrainHooks {
            interval: ev.hook_interval,
            on_snapshot: Some(Box::new(|iter, g_now: &ParamStore, _| {
                eval_snapshot(iter, g_now)?;
                save_checkpoint(
                    &Checkpoint::new(g_now.clone(), iter, data.dataset_id.clone(), opts.seed),
                    rd.checkpoint_path(&format!("g_iter{}.gptk", iter)),
                )?;
                Ok(())
            })),
        };
        train_acgan(&ac_cfg, &init, &data, &mut hooks)?
    };
    if metrics.lock().unwrap().last().map(|m| m.iteration) != Some(tc.iterations) {
        eval_snapshot(tc.iterations, &g)?;
    }
    let metrics = metrics.into_inner().unwrap();

    append_csv(&rd.train_log_path(), TRAIN_LOG_HEADER, &train_log_rows(&id, &log))?;
    write_metrics(&rd, &metrics)?;
    save_checkpoint(
        &Checkpoint::new(g.clone(), tc.iterations, data.dataset_id.clone(), opts.seed),
        rd.checkpoint_path("g_final.gptk"),
    )?;
    save_checkpoint(
        &Checkpoint::new(d.clone(), tc.iterations, data.dataset_id.clone(), opts.seed),
        rd.checkpoint_path("d_final.gptk"),
    )?;
    let curves: Vec<(String, Vec<(f64, f64)>)> = vec![
        (
            "overall".to_string(),
            metrics
                .iter()
                .filter(|m| m.metric == MetricKind::FidAll)
                .map(|m| (m.iteration as f64, m.value))
                .collect(),
        ),
        (
            "class avg".to_string(),
            metrics
                .iter()
                .filter(|m| m.metric == MetricKind::Fid)
                .map(|m| (m.iteration as f64, m.value))
                .collect(),
        ),
    ];
    plot_fid_curves(&rd, &curves, "Conditional FID during training")?;
    sample_grid(
        &g,
        n_classes.min(8),
        6,
        opts.seed,
        true,
        &rd.plot_path("samples.png"),
    )?;
    rd.write_report(&serde_json::json!({
        "init": match &init { AcGanInit::Scratch{..} => "scratch", AcGanInit::FromCheckpoint{..} => "from_checkpoint" },
        "aux_head_init": "fresh",
        "trunk_init": match &init { AcGanInit::Scratch{..} => "fresh", AcGanInit::FromCheckpoint{..} => "copied" },
        "final_fid_all": metrics.iter().rev().find(|m| m.metric == MetricKind::FidAll).map(|m| m.value),
        "g_checksum": g.checksum_hex(),
        "d_checksum": d.checksum_hex(),
        "embedding_checksum": embedder.checksum,
    }))?;
    rd.check_artifacts(&[
        "manifest.json",
        "metrics.csv",
        "train_log.csv",
        "checkpoints/g_final.gptk",
        "plots/fid.svg",
        "plots/samples.png",
        "report.json",
    ])?;
    println!("run {} complete: {}", id, rd.root.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

pub fn cmd_select(opts: &GlobalOpts) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "select", "eval"])?;
    let target = DataSpec::from_config(&cfg, "data")?.load()?;
    let ev = eval_opts(&cfg)?;

    let mut s = cfg.section("select");
    let zoo_path = s
        .get_str("zoo")
        .ok_or_else(|| Error::validation("[select] needs `zoo = <manifest.json>`"))?;
    let n_samples = s.get("n_samples", 10_000usize)?;
    let source_kinds: Vec<String> = s.get_list("sources")?.unwrap_or_default();
    s.finish()?;

    let zoo = load_zoo_manifest(Path::new(&zoo_path))?;
    let mut sources = BTreeMap::new();
    for pair in &source_kinds {
        let (dataset_id, kind) = pair
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("source `{}` is not id=kind", pair)))?;
        let data = make_synthetic(
            SyntheticKind::parse(kind)?,
            target.size(),
            target.image_size,
            target.seed,
        )?;
        sources.insert(dataset_id.to_string(), data);
    }

    let id = run_id(&cfg.canonical(), opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    let embedder = fit_embedder(&target, &ev)?;
    rd.write_manifest(&manifest_json(
        "select",
        &id,
        opts.seed,
        &cfg,
        None,
        None,
        0,
        &embedder.checksum,
    ))?;

    let sel_cfg = SelectionConfig {
        n_samples,
        seed: opts.seed,
    };
    let report = rank_sources(&zoo, &sources, &target, &embedder, &sel_cfg)?;
    let mut metrics = Vec::new();
    for row in &report.ranked {
        metrics.push(metric_row(
            &id,
            0,
            MetricKind::Fid,
            &row.dataset_id,
            row.gen_vs_target_fid,
            &embedder.checksum,
            n_samples,
            target.size(),
        ));
    }
    write_metrics(&rd, &metrics)?;
    rd.write_report(&serde_json::to_value(&report).unwrap())?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json"])?;
    print!("{}", report.to_table());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval-fid / eval-iw / eval-classifier
// ---------------------------------------------------------------------------

fn open_eval_run(
    opts: &GlobalOpts,
    cfg: &ConfigFile,
    command: &str,
    checkpoint: &Path,
) -> Result<(RunDir, String)> {
    let spec = format!("{}\ncheckpoint = {}\n{}", command, checkpoint.display(), cfg.canonical());
    let id = run_id(&spec, opts.seed);
    let rd = RunDir::open(&opts.out, &id, opts.force)?;
    Ok((rd, id))
}

pub fn cmd_eval_fid(opts: &GlobalOpts, checkpoint: &Path) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "eval"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let ev = eval_opts(&cfg)?;
    let g = load_checkpoint(checkpoint)?.param_store;

    let (rd, id) = open_eval_run(opts, &cfg, "eval-fid", checkpoint)?;
    let embedder = fit_embedder(&data, &ev)?;
    rd.write_manifest(&manifest_json(
        "eval-fid",
        &id,
        opts.seed,
        &cfg,
        None,
        None,
        g.spec.noise_dim,
        &embedder.checksum,
    ))?;
    let real_stats = embed_stats(&embedder, data.images())?;
    let (v, n) = generator_fid(&g, &embedder, &real_stats, ev.n_eval_samples, opts.seed)?;
    write_metrics(
        &rd,
        &[metric_row(&id, 0, MetricKind::Fid, "", v, &embedder.checksum, n, data.size())],
    )?;
    rd.write_report(&serde_json::json!({
        "fid": v,
        "embedding_checksum": embedder.checksum,
        "n_samples": n,
    }))?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json"])?;
    println!("fid = {:.6} (embedding {})", v, embedder.checksum);
    Ok(())
}

pub fn cmd_eval_iw(opts: &GlobalOpts, checkpoint: &Path) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "eval", "iw", "model"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let ev = eval_opts(&cfg)?;
    let critic_cfg = iw_cfg(&cfg, opts.seed)?.unwrap_or(IwCriticConfig {
        seed: opts.seed,
        ..IwCriticConfig::default()
    });
    let g = load_checkpoint(checkpoint)?.param_store;
    let (_, d_spec) = model_specs(&cfg, data.image_size)?;

    let (rd, id) = open_eval_run(opts, &cfg, "eval-iw", checkpoint)?;
    rd.write_manifest(&manifest_json(
        "eval-iw",
        &id,
        opts.seed,
        &cfg,
        None,
        None,
        g.spec.noise_dim,
        "",
    ))?;
    let generated = sample_images(&g, ev.n_eval_samples, opts.seed)?;
    let critic_spec = ArchitectureSpec::critic(data.image_size, d_spec.base_width);
    let critic = train_iw_critic(&data, &generated, &critic_spec, &critic_cfg)?;
    let v = iw(&critic, data.images(), &generated)?;
    write_metrics(
        &rd,
        &[metric_row(&id, 0, MetricKind::Iw, "", v, "", data.size(), ev.n_eval_samples)],
    )?;
    rd.write_report(&serde_json::json!({
        "iw": v,
        "critic_checksum": critic.checksum_hex(),
        "critic_iterations": critic_cfg.iterations,
    }))?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json"])?;
    println!("iw = {:.6}", v);
    Ok(())
}

pub fn cmd_eval_classifier(opts: &GlobalOpts, checkpoint: &Path) -> Result<()> {
    let cfg = ConfigFile::load(&opts.config)?;
    cfg.check_sections(&["data", "eval", "classifier"])?;
    let data = DataSpec::from_config(&cfg, "data")?.load()?;
    let ev = eval_opts(&cfg)?;
    let mut c = cfg.section("classifier");
    let cls_cfg = ClassifierConfig {
        iterations: c.get("iterations", ClassifierConfig::default().iterations)?,
        batch_size: c.get("batch_size", ClassifierConfig::default().batch_size)?,
        lr: c.get("lr", ClassifierConfig::default().lr)?,
        seed: c.get("seed", opts.seed)?,
    };
    let base_width = c.get("base_width", 16usize)?;
    c.finish()?;
    let g = load_checkpoint(checkpoint)?.param_store;

    let (rd, id) = open_eval_run(opts, &cfg, "eval-classifier", checkpoint)?;
    rd.write_manifest(&manifest_json(
        "eval-classifier",
        &id,
        opts.seed,
        &cfg,
        None,
        None,
        g.spec.noise_dim,
        "",
    ))?;
    let spec = ArchitectureSpec::classifier(data.image_size, base_width, data.n_classes());
    let classifier = train_classifier(&data, &spec, &cls_cfg)?;
    let n_per_class = (ev.n_eval_samples / data.n_classes().max(1)).max(1);
    let report = classifier_accuracy_eval(&classifier, &g, n_per_class, opts.seed)?;
    let mut metrics = Vec::new();
    for (class, acc) in &report.per_class {
        metrics.push(metric_row(
            &id,
            0,
            MetricKind::Accuracy,
            &class.to_string(),
            *acc,
            "",
            n_per_class,
            data.size(),
        ));
    }
    metrics.push(metric_row(
        &id,
        0,
        MetricKind::Accuracy,
        "avg",
        report.average,
        "",
        n_per_class * data.n_classes(),
        data.size(),
    ));
    write_metrics(&rd, &metrics)?;
    rd.write_report(&serde_json::to_value(&report).unwrap())?;
    rd.check_artifacts(&["manifest.json", "metrics.csv", "report.json"])?;
    println!("accuracy avg = {:.4}", report.average);
    Ok(())
}

// ---------------------------------------------------------------------------
// plot / sample
// ---------------------------------------------------------------------------

/// Plots one smoothed curve per input log. `column` selects the CSV column
/// (e.g. `loss_d`, `loss_g`, `value`); the x axis is `iteration`.
pub fn cmd_plot(logs: &[PathBuf], column: &str, window: usize, out: &Path) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::validation("plot needs at least one log file"));
    }
    let mut curves = Vec::new();
    for path in logs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("{}: {}", path.display(), e)))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::validation(format!("{}: empty log", path.display())))?
            .split(',')
            .collect();
        let iter_idx = header
            .iter()
            .position(|&h| h == "iteration")
            .ok_or_else(|| Error::validation(format!("{}: no iteration column", path.display())))?;
        let val_idx = header.iter().position(|&h| h == column).ok_or_else(|| {
            Error::validation(format!("{}: no `{}` column", path.display(), column))
        })?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() <= iter_idx.max(val_idx) {
                continue;
            }
            if let (Ok(x), Ok(y)) = (fields[iter_idx].parse::<f64>(), fields[val_idx].parse::<f64>())
            {
                xs.push(x);
                ys.push(y);
            }
        }
        if ys.is_empty() {
            return Err(Error::validation(format!(
                "{}: no plottable rows for column `{}`",
                path.display(),
                column
            )));
        }
        let smoothed = moving_average(&ys, window)?;
        curves.push(Curve {
            label: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            points: xs.into_iter().zip(smoothed).collect(),
        });
    }
    render_svg(&curves, column, "iteration", column, out)
}

pub fn cmd_sample(
    checkpoint: &Path,
    rows: usize,
    cols: usize,
    seed: u64,
    per_class: bool,
    out: &Path,
) -> Result<()> {
    let g = load_checkpoint(checkpoint)?.param_store;
    sample_grid(&g, rows, cols, seed, per_class, out)?;
    println!("wrote {}", out.display());
    Ok(())
}
