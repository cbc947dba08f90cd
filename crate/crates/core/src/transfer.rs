//! Initializing target-domain GANs from source checkpoints and running the
//! four-cell init grid (generator and discriminator each scratch or
//! pre-trained), with per-cell isolation and full per-parameter provenance.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::metrics::{fid, gaussian_stats, iw, train_iw_critic, EmbeddingNet, IwCriticConfig};
use crate::model_zoo::{
    build_network, forward_generator, load_checkpoint, manifest, sample_noise, ArchitectureSpec,
    Init, ParamDef, ParamStore,
};
use crate::train::{train_gan, TrainConfig, TrainHooks};

/// Where a network's initial weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitSource {
    Scratch,
    Pretrained(PathBuf),
}

impl InitSource {
    pub fn label(&self) -> &'static str {
        match self {
            InitSource::Scratch => "scratch",
            InitSource::Pretrained(_) => "pretrained",
        }
    }
}

/// One cell of the init grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub generator_init: InitSource,
    pub discriminator_init: InitSource,
    pub finetune_cfg: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Copied,
    Fresh,
}

/// Networks produced by [`apply_transfer`], with per-parameter provenance.
#[derive(Debug)]
pub struct TransferOutcome {
    pub g: ParamStore,
    pub d: ParamStore,
    pub provenance_g: BTreeMap<String, Provenance>,
    pub provenance_d: BTreeMap<String, Provenance>,
}

/// Copies every parameter of `source` into a store with `target_spec`'s
/// layout. Every target parameter must exist in the source with an identical
/// shape; the first mismatch aborts with a transfer error naming it.
pub fn copy_into_layout(target_spec: &ArchitectureSpec, source: &ParamStore) -> Result<ParamStore> {
    let defs = manifest(target_spec)?;
    let mut params = BTreeMap::new();
    for def in &defs {
        let value = source.get(&def.name).ok_or_else(|| Error::Transfer {
            parameter: def.name.clone(),
            reason: "missing from source checkpoint".to_string(),
        })?;
        if value.shape() != def.shape.as_slice() {
            return Err(Error::Transfer {
                parameter: def.name.clone(),
                reason: format!(
                    "shape {:?} in source, {:?} required by target",
                    value.shape(),
                    def.shape
                ),
            });
        }
        params.insert(def.name.clone(), value.clone());
    }
    Ok(ParamStore::new(target_spec.clone(), params))
}

fn init_component(
    spec: &ArchitectureSpec,
    init: &InitSource,
    seed: u64,
) -> Result<(ParamStore, BTreeMap<String, Provenance>)> {
    match init {
        InitSource::Scratch => {
            let store = build_network(spec, seed)?;
            let prov = store
                .names()
                .map(|n| (n.clone(), Provenance::Fresh))
                .collect();
            Ok((store, prov))
        }
        InitSource::Pretrained(path) => {
            let ckpt = load_checkpoint(path)?;
            let store = copy_into_layout(spec, &ckpt.param_store)?;
            let prov = store
                .names()
                .map(|n| (n.clone(), Provenance::Copied))
                .collect();
            Ok((store, prov))
        }
    }
}

/// Builds the (generator, discriminator) pair for one grid cell. Scratch
/// components draw fresh weights from `seed` (the discriminator from a
/// decorrelated stream); pre-trained components carry source parameters
/// bit-exactly, including normalization running statistics.
pub fn apply_transfer(
    g_spec: &ArchitectureSpec,
    d_spec: &ArchitectureSpec,
    tc: &TransferConfig,
    seed: u64,
) -> Result<TransferOutcome> {
    tc.finetune_cfg.validate()?;
    let (g, provenance_g) = init_component(g_spec, &tc.generator_init, seed)?;
    // Generator and discriminator share parameter names (stem.w, fc.b, ...);
    // offsetting the seed keeps their fresh draws decorrelated.
    let (d, provenance_d) = init_component(d_spec, &tc.discriminator_init, seed.wrapping_add(1))?;
    Ok(TransferOutcome {
        g,
        d,
        provenance_g,
        provenance_d,
    })
}

/// Widens a `[out, in_src]` weight matrix to `[out, new_in]`: the original
/// columns are copied bit-exactly and the appended columns are drawn from
/// the layer's He-normal initialization for the widened fan-in,
/// deterministically from `(seed, name)`.
pub fn surgery_expand_input(
    source: &ArrayD<f32>,
    new_in: usize,
    seed: u64,
    name: &str,
) -> Result<ArrayD<f32>> {
    if source.ndim() != 2 {
        return Err(Error::validation("surgery_expand_input needs a 2-d weight"));
    }
    let (out, in_src) = (source.shape()[0], source.shape()[1]);
    if new_in <= in_src {
        return Err(Error::validation(format!(
            "new input width {} must exceed current width {}",
            new_in, in_src
        )));
    }
    let def = ParamDef {
        name: name.to_string(),
        shape: vec![out, new_in],
        init: Init::HeNormal { fan_in: new_in },
        trainable: true,
    };
    let mut widened = crate::model_zoo::init_tensor(&def, seed);
    for i in 0..out {
        for j in 0..in_src {
            widened[[i, j]] = source[[i, j]];
        }
    }
    Ok(widened)
}

/// Per-cell deterministic seed: hash(experiment_seed, cell_index).
pub fn cell_seed(experiment_seed: u64, cell_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(experiment_seed.to_le_bytes());
    hasher.update((cell_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Evaluation settings for [`run_transfer_experiment`].
#[derive(Debug, Clone)]
pub struct EvalCfg {
    /// Generated samples per evaluation point.
    pub n_eval_samples: usize,
    /// Iterations between FID evaluations (0 = final only).
    pub hook_interval: u64,
    /// When set, a fresh critic is trained per cell for the final IW value.
    pub iw: Option<IwCriticConfig>,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            n_eval_samples: 256,
            hook_interval: 0,
            iw: None,
        }
    }
}

/// Outcome of one grid cell; failures are recorded, not propagated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub cell_index: usize,
    pub generator_init: String,
    pub discriminator_init: String,
    pub seed: u64,
    pub final_fid: Option<f64>,
    pub final_iw: Option<f64>,
    /// (iteration, FID) evaluation points, final included.
    pub fid_trajectory: Vec<(u64, f64)>,
    pub g_checksum: Option<String>,
    pub d_checksum: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub embedding_checksum: String,
    pub cells: Vec<CellReport>,
}

fn eval_fid(
    g: &ParamStore,
    embedder: &EmbeddingNet,
    target_stats: &crate::metrics::GaussianStats,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut embedded = Vec::new();
    let mut produced = 0;
    while produced < n_samples {
        let b = (n_samples - produced).min(64);
        let z = sample_noise(&mut rng, b, g.spec.noise_dim);
        let images = forward_generator(g, &z, None)?;
        embedded.push(embedder.embed(&images)?);
        produced += b;
    }
    let views: Vec<_> = embedded.iter().map(|a| a.view()).collect();
    let all = ndarray::concatenate(ndarray::Axis(0), &views).expect("embedding concat");
    let gen_stats = gaussian_stats(&all)?;
    fid(&gen_stats, target_stats)
}

/// Samples `n` generated images (unconditional).
pub fn sample_images(g: &ParamStore, n: usize, seed: u64) -> Result<ndarray::Array4<f32>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chunks = Vec::new();
    let mut produced = 0;
    while produced < n {
        let b = (n - produced).min(64);
        let z = sample_noise(&mut rng, b, g.spec.noise_dim);
        chunks.push(forward_generator(g, &z, None)?);
        produced += b;
    }
    let views: Vec<_> = chunks.iter().map(|a| a.view()).collect();
    Ok(ndarray::concatenate(ndarray::Axis(0), &views).expect("sample concat"))
}

/// Runs one grid cell: initialize per the cell's config, fine-tune, and
/// evaluate. Public so orchestration layers can persist and resume cells
/// individually; returns `(g, d, fid_trajectory, final_iw)`.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer_cell(
    g_spec: &ArchitectureSpec,
    d_spec: &ArchitectureSpec,
    tc: &TransferConfig,
    target_data: &DatasetHandle,
    embedder: &EmbeddingNet,
    eval: &EvalCfg,
    iw_val: Option<&DatasetHandle>,
    seed: u64,
) -> Result<(ParamStore, ParamStore, Vec<(u64, f64)>, Option<f64>)> {
    let outcome = apply_transfer(g_spec, d_spec, tc, seed)?;
    let target_emb = embedder.embed(target_data.images())?;
    let target_stats = gaussian_stats(&target_emb)?;

    let mut cfg = tc.finetune_cfg.clone();
    cfg.seed = seed;
    let traj: std::cell::RefCell<Vec<(u64, f64)>> = std::cell::RefCell::new(Vec::new());
    let (g, d) = {
        let mut hooks = TrainHooks {
            interval: eval.hook_interval,
            on_snapshot: Some(Box::new(|iter, g_now: &ParamStore, _| {
                let v =
                    eval_fid(g_now, embedder, &target_stats, eval.n_eval_samples, seed ^ iter)?;
                traj.borrow_mut().push((iter, v));
                Ok(())
            })),
        };
        let (g, d, _log) = train_gan(&outcome.g, &outcome.d, target_data, &cfg, &mut hooks)?;
        (g, d)
    };
    let mut trajectory = traj.into_inner();
    if trajectory.last().map(|&(i, _)| i) != Some(cfg.iterations) {
        let v = eval_fid(&g, embedder, &target_stats, eval.n_eval_samples, seed ^ cfg.iterations)?;
        trajectory.push((cfg.iterations, v));
    }

    let final_iw = match (&eval.iw, iw_val) {
        (Some(iw_cfg), Some(val)) => {
            let generated = sample_images(&g, val.size().min(eval.n_eval_samples), seed ^ 0xA5)?;
            let mut cfg = iw_cfg.clone();
            cfg.seed = seed;
            let critic = train_iw_critic(val, &generated, &d.spec, &cfg)?;
            Some(iw(&critic, val.images(), &generated)?)
        }
        _ => None,
    };
    Ok((g, d, trajectory, final_iw))
}

/// Runs every grid cell in isolation: a failing cell contributes an error
/// entry while the rest proceed. Deterministic given `experiment_seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer_experiment(
    g_spec: &ArchitectureSpec,
    d_spec: &ArchitectureSpec,
    grid: &[TransferConfig],
    target_data: &DatasetHandle,
    embedder: &EmbeddingNet,
    eval: &EvalCfg,
    iw_val: Option<&DatasetHandle>,
    experiment_seed: u64,
) -> Result<ExperimentReport> {
    let mut cells = Vec::with_capacity(grid.len());
    for (i, tc) in grid.iter().enumerate() {
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
        match run_transfer_cell(g_spec, d_spec, tc, target_data, embedder, eval, iw_val, seed) {
            Ok((g, d, trajectory, final_iw)) => {
                report.final_fid = trajectory.last().map(|&(_, v)| v);
                report.final_iw = final_iw;
                report.fid_trajectory = trajectory;
                report.g_checksum = Some(g.checksum_hex());
                report.d_checksum = Some(d.checksum_hex());
            }
            Err(e) => report.error = Some(e.to_string()),
        }
        cells.push(report);
    }
    Ok(ExperimentReport {
        embedding_checksum: embedder.checksum.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind};
    use crate::metrics::fit_embedding_with;
    use crate::model_zoo::{save_checkpoint, Checkpoint};
    use rand_distr::{Distribution, Normal};

    fn specs() -> (ArchitectureSpec, ArchitectureSpec) {
        (
            ArchitectureSpec::generator(4, 4).with_noise_dim(4),
            ArchitectureSpec::critic(4, 4),
        )
    }

    fn finetune() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            iterations: 2,
            n_critic: 1,
            gp_lambda: 10.0,
            seed: 0,
        }
    }

    fn save_sources(dir: &std::path::Path) -> (PathBuf, PathBuf) {
        let (g_spec, d_spec) = specs();
        let g = build_network(&g_spec, 77).unwrap();
        let d = build_network(&d_spec, 78).unwrap();
        let gp = dir.join("g.gptk");
        let dp = dir.join("d.gptk");
        save_checkpoint(&Checkpoint::new(g, 100, "src", 77), &gp).unwrap();
        save_checkpoint(&Checkpoint::new(d, 100, "src", 78), &dp).unwrap();
        (gp, dp)
    }

    #[test]
    fn scratch_scratch_matches_build_network() {
        let (g_spec, d_spec) = specs();
        let tc = TransferConfig {
            generator_init: InitSource::Scratch,
            discriminator_init: InitSource::Scratch,
            finetune_cfg: finetune(),
        };
        let out = apply_transfer(&g_spec, &d_spec, &tc, 5).unwrap();
        assert_eq!(out.g.checksum(), build_network(&g_spec, 5).unwrap().checksum());
        assert_eq!(
            out.d.checksum(),
            build_network(&d_spec, 6).unwrap().checksum()
        );
        assert!(out.provenance_g.values().all(|p| *p == Provenance::Fresh));
        assert!(out.provenance_d.values().all(|p| *p == Provenance::Fresh));
        assert_eq!(out.provenance_g.len(), out.g.names().count());
    }

    #[test]
    fn pretrained_copies_bit_exactly_and_preserves_source_file() {
        let dir = tempfile::tempdir().unwrap();
        let (gp, dp) = save_sources(dir.path());
        let before = std::fs::read(&gp).unwrap();
        let (g_spec, d_spec) = specs();
        let tc = TransferConfig {
            generator_init: InitSource::Pretrained(gp.clone()),
            discriminator_init: InitSource::Pretrained(dp),
            finetune_cfg: finetune(),
        };
        let out = apply_transfer(&g_spec, &d_spec, &tc, 5).unwrap();
        assert_eq!(
            out.g.checksum(),
            build_network(&g_spec, 77).unwrap().checksum()
        );
        assert_eq!(
            out.d.checksum(),
            build_network(&d_spec, 78).unwrap().checksum()
        );
        assert!(out.provenance_g.values().all(|p| *p == Provenance::Copied));
        assert!(out.provenance_d.values().all(|p| *p == Provenance::Copied));
        // The checkpoint file itself is untouched.
        assert_eq!(std::fs::read(&gp).unwrap(), before);
    }

    #[test]
    fn width_mismatch_names_first_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let (gp, _) = save_sources(dir.path());
        let wide = ArchitectureSpec::generator(4, 8).with_noise_dim(4);
        let tc = TransferConfig {
            generator_init: InitSource::Pretrained(gp),
            discriminator_init: InitSource::Scratch,
            finetune_cfg: finetune(),
        };
        match apply_transfer(&wide, &specs().1, &tc, 0) {
            Err(Error::Transfer { parameter, .. }) => {
                // First manifest entry whose shape depends on the width.
                assert!(!parameter.is_empty());
            }
            other => panic!("expected transfer error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn surgery_copies_then_draws_fresh_columns() {
        let src = crate::model_zoo::init_tensor(
            &ParamDef {
                name: "fc.w".into(),
                shape: vec![16, 8],
                init: Init::HeNormal { fan_in: 8 },
                trainable: true,
            },
            1,
        );
        let widened = surgery_expand_input(&src, 11, 2, "fc.w").unwrap();
        assert_eq!(widened.shape(), &[16, 11]);
        for i in 0..16 {
            for j in 0..8 {
                assert_eq!(widened[[i, j]].to_bits(), src[[i, j]].to_bits());
            }
        }
        let again = surgery_expand_input(&src, 11, 2, "fc.w").unwrap();
        assert_eq!(widened, again);
        let other = surgery_expand_input(&src, 11, 3, "fc.w").unwrap();
        assert_ne!(widened, other);
        assert!(surgery_expand_input(&src, 8, 0, "fc.w").is_err());
        assert!(surgery_expand_input(&src, 5, 0, "fc.w").is_err());
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (n, m) = (a.len(), b.len());
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < m {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
        }
        d
    }

    #[test]
    fn surgery_fresh_columns_match_init_distribution() {
        // 100 x 164 expansion of a 100 x 64 layer: 10^4 fresh entries,
        // compared against direct draws from He-normal(fan_in = 164).
        let src = ArrayD::zeros(ndarray::IxDyn(&[100, 64]));
        let new_in = 164;
        let widened = surgery_expand_input(&src, new_in, 9, "fc.w").unwrap();
        let fresh: Vec<f64> = (0..100)
            .flat_map(|i| (64..new_in).map(move |j| (i, j)))
            .map(|(i, j)| widened[[i, j]] as f64)
            .collect();
        assert_eq!(fresh.len(), 10_000);
        let std = (2.0 / new_in as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let mut rng = crate::model_zoo::param_rng(12345, "reference");
        let reference: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let d = ks_statistic(fresh, reference);
        // alpha = 0.01 critical value for n = m = 10^4.
        let crit = 1.628 * (2.0f64 / 10_000.0).sqrt();
        assert!(d < crit, "KS statistic {} >= {}", d, crit);
    }

    #[test]
    fn empty_grid_is_empty_report() {
        let (g_spec, d_spec) = specs();
        let data = make_synthetic(SyntheticKind::ShapesA, 24, 4, 0).unwrap();
        let embedder = fit_embedding_with(&data, 0, 4, 30).unwrap();
        let report = run_transfer_experiment(
            &g_spec,
            &d_spec,
            &[],
            &data,
            &embedder,
            &EvalCfg::default(),
            None,
            0,
        )
        .unwrap();
        assert!(report.cells.is_empty());
        assert_eq!(report.embedding_checksum, embedder.checksum);
    }

    #[test]
    fn grid_is_deterministic_and_isolates_failures() {
        let dir = tempfile::tempdir().unwrap();
        let (gp, _) = save_sources(dir.path());
        let (g_spec, d_spec) = specs();
        let data = make_synthetic(SyntheticKind::ShapesA, 24, 4, 0).unwrap();
        let embedder = fit_embedding_with(&data, 0, 4, 30).unwrap();
        let grid = vec![
            TransferConfig {
                generator_init: InitSource::Scratch,
                discriminator_init: InitSource::Scratch,
                finetune_cfg: finetune(),
            },
            TransferConfig {
                generator_init: InitSource::Pretrained(dir.path().join("missing.gptk")),
                discriminator_init: InitSource::Scratch,
                finetune_cfg: finetune(),
            },
            TransferConfig {
                generator_init: InitSource::Pretrained(gp),
                discriminator_init: InitSource::Scratch,
                finetune_cfg: finetune(),
            },
        ];
        let eval = EvalCfg {
            n_eval_samples: 24,
            hook_interval: 1,
            iw: None,
        };
        let run = || {
            run_transfer_experiment(&g_spec, &d_spec, &grid, &data, &embedder, &eval, None, 3)
                .unwrap()
        };
        let r1 = run();
        let r2 = run();
        assert_eq!(r1.cells.len(), 3);
        assert!(r1.cells[0].error.is_none());
        assert!(r1.cells[1].error.is_some());
        assert!(r1.cells[2].error.is_none());
        assert_eq!(r1.cells[0].fid_trajectory.len(), 2);
        for (a, b) in r1.cells.iter().zip(&r2.cells) {
            assert_eq!(a.g_checksum, b.g_checksum);
            assert_eq!(a.final_fid, b.final_fid);
            assert_eq!(a.error, b.error);
        }
        // Distinct cells get distinct derived seeds.
        assert_ne!(r1.cells[0].seed, r1.cells[1].seed);
    }
}
