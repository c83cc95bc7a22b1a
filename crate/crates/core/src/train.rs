//! Joint training of filterbank, relevance heads, and classifier, plus
//! evaluation and the CSV metrics emitted alongside run artifacts.

use crate::config::{FrontendKind, RunConfig};
use crate::dataio::{read_wav, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::frontend::{MU_MAX, MU_MIN};
use crate::optim::{SgdMomentum, WarmRestartSchedule};
use crate::pipeline::{bind, build_batch_graph, plan_from_config, BatchMode, ClipInput, ModelParams};
use crate::rng::derive_rng;
use crate::tape::Tape;
use rand::Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub wave: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Vec<LabeledClip>,
    pub test: Vec<LabeledClip>,
    /// Sorted label vocabulary; positions are the class indices.
    pub labels: Vec<String>,
}

fn load_entries(
    entries: &[&ManifestEntry],
    manifest: &DatasetManifest,
    cfg: &RunConfig,
) -> Result<Vec<LabeledClip>> {
    let mut clips = Vec::with_capacity(entries.len());
    for e in entries {
        let clip = read_wav(&e.path)?;
        if clip.sample_rate != cfg.sample_rate {
            return Err(Error::Config(format!(
                "{} is {} Hz but frame.sample_rate = {}; resampling is not supported",
                e.path.display(),
                clip.sample_rate,
                cfg.sample_rate
            )));
        }
        let label = manifest
            .label_index(&e.label)
            .expect("manifest vocabulary covers its own entries");
        clips.push(LabeledClip {
            wave: clip.samples,
            label,
        });
    }
    Ok(clips)
}

/// Loads every WAV named by the config's manifest and splits by test fold.
pub fn load_dataset(cfg: &RunConfig) -> Result<LoadedData> {
    let manifest = crate::dataio::load_manifest(cfg.manifest_path()?)?;
    let (train, test) = manifest.fold_split(cfg.test_fold)?;
    Ok(LoadedData {
        train: load_entries(&train, &manifest, cfg)?,
        test: load_entries(&test, &manifest, cfg)?,
        labels: manifest.labels.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    /// Mean training cross-entropy over the epoch.
    pub loss: f64,
    /// Argmax-vs-primary-label accuracy on the augmented training batches.
    pub train_acc: f64,
    /// Macro accuracy on the held-out fold.
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
    /// μ snapshots: entry 0 is the initialization, entry e+1 follows epoch e.
    /// Empty for the mel frontend.
    pub mu_trajectory: Vec<(usize, Vec<f64>)>,
}

fn clamp_mu(params: &mut ModelParams) {
    if let Some((_, t)) = params.named.iter_mut().find(|(n, _)| n == "frontend.mu") {
        for v in t.data_mut() {
            *v = v.clamp(MU_MIN, MU_MAX);
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains from a fresh seeded initialization. Deterministic: identical
/// (config, data) inputs give bit-identical parameters and metrics.
pub fn train_joint(
    cfg: &RunConfig,
    train_set: &[LabeledClip],
    val_set: &[LabeledClip],
    n_classes: usize,
) -> Result<TrainOutput> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut params = ModelParams::init(cfg, n_classes)?;
    let plan = plan_from_config(cfg);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch);
    let schedule = WarmRestartSchedule::new(
        cfg.lr_max,
        cfg.lr_min,
        cfg.t0_epochs * steps_per_epoch,
        cfg.t_mult,
    )?;
    let mut optimizer = SgdMomentum::new(cfg.momentum)?;
    let track_mu = cfg.frontend_kind == FrontendKind::CosGauss;
    let mut mu_trajectory = Vec::new();
    if track_mu {
        mu_trajectory.push((0, params.mu()?.data().to_vec()));
    }
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = derive_rng(cfg.seed, "shuffle", &[epoch as u64]);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut epoch_lr = schedule.lr_at(global_step);
        for (step, chunk) in order.chunks(cfg.batch).enumerate() {
            let clips: Vec<ClipInput> = chunk
                .iter()
                .enumerate()
                .map(|(o, &idx)| ClipInput {
                    wave: &train_set[idx].wave,
                    label: train_set[idx].label,
                    example_id: step * cfg.batch + o,
                })
                .collect();
            let lr = schedule.lr_at(global_step);
            if step == 0 {
                epoch_lr = lr;
            }
            let mut tape = Tape::new();
            let bound = bind(&mut tape, &params, cfg, true)?;
            let mode = BatchMode::Train {
                plan: &plan,
                epoch,
                step,
            };
            let graph = build_batch_graph(&mut tape, &bound, cfg, &clips, n_classes, &mode)?;
            let loss = tape.scalar(graph.loss);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            for (i, &l) in graph.logits.iter().enumerate() {
                if argmax(tape.value(l).data()) == clips[i].label {
                    correct += 1;
                }
            }
            tape.backward(graph.loss)?;
            let grads = tape.param_grads();
            optimizer.step(&mut params.named, &grads, lr)?;
            clamp_mu(&mut params);
            loss_sum += loss * chunk.len() as f64;
            global_step += 1;
        }
        let val = evaluate(cfg, &params, val_set, n_classes)?;
        metrics.push(EpochMetrics {
            epoch,
            lr: epoch_lr,
            loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc: val.macro_acc,
        });
        if track_mu {
            mu_trajectory.push((epoch + 1, params.mu()?.data().to_vec()));
        }
        log::info!(
            "epoch {epoch}: lr {epoch_lr:.5} loss {:.4} train_acc {:.3} val_acc {:.3}",
            metrics[epoch].loss,
            metrics[epoch].train_acc,
            metrics[epoch].val_acc
        );
    }
    Ok(TrainOutput {
        params,
        metrics,
        mu_trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub label: usize,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// One row per class, in class-index order.
    pub per_class: Vec<ClassAccuracy>,
    /// Mean of per-class accuracies over classes that appear in the set.
    pub macro_acc: f64,
    pub overall_acc: f64,
}

/// Deterministic argmax evaluation with unaugmented, center-cropped features.
pub fn evaluate(
    cfg: &RunConfig,
    params: &ModelParams,
    set: &[LabeledClip],
    n_classes: usize,
) -> Result<EvalResult> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut per_class: Vec<ClassAccuracy> = (0..n_classes)
        .map(|label| ClassAccuracy {
            label,
            correct: 0,
            total: 0,
        })
        .collect();
    for chunk in set.chunks(cfg.batch) {
        let clips: Vec<ClipInput> = chunk
            .iter()
            .enumerate()
            .map(|(i, c)| ClipInput {
                wave: &c.wave,
                label: c.label,
                example_id: i,
            })
            .collect();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, params, cfg, false)?;
        let graph = build_batch_graph(&mut tape, &bound, cfg, &clips, n_classes, &BatchMode::Eval)?;
        for (i, &l) in graph.logits.iter().enumerate() {
            let row = &mut per_class[chunk[i].label];
            row.total += 1;
            if argmax(tape.value(l).data()) == chunk[i].label {
                row.correct += 1;
            }
        }
    }
    let present: Vec<&ClassAccuracy> = per_class.iter().filter(|c| c.total > 0).collect();
    let macro_acc = present
        .iter()
        .map(|c| c.correct as f64 / c.total as f64)
        .sum::<f64>()
        / present.len() as f64;
    let overall_acc =
        per_class.iter().map(|c| c.correct).sum::<usize>() as f64 / set.len() as f64;
    Ok(EvalResult {
        per_class,
        macro_acc,
        overall_acc,
    })
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,lr,loss,train_acc,val_acc\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.epoch, m.lr, m.loss, m.train_acc, m.val_acc
        );
    }
    s
}

pub fn mu_trajectory_csv(trajectory: &[(usize, Vec<f64>)]) -> String {
    let bands = trajectory.first().map_or(0, |(_, mu)| mu.len());
    let mut s = String::from("epoch");
    for i in 0..bands {
        let _ = write!(s, ",mu{i}");
    }
    s.push('\n');
    for (epoch, mu) in trajectory {
        let _ = write!(s, "{epoch}");
        for v in mu {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_clip;
    use crate::relevance::SplitScheme;

    fn micro_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.f_bands = 4;
        cfg.kernel_len = 9;
        cfg.frame_len = 32;
        cfg.hop = 16;
        cfg.heads = 2;
        cfg.split = SplitScheme::Contiguous(vec![2, 2]);
        cfg.context_c = 1;
        cfg.hidden = 3;
        cfg.freq_masks = 1;
        cfg.freq_width = 1;
        cfg.time_masks = 1;
        cfg.time_width = 2;
        cfg.crop_t = 6;
        cfg.mixup_alpha = 0.2;
        cfg.batch = 4;
        cfg.lr_max = 0.02;
        cfg.lr_min = 0.001;
        cfg.channels = vec![2];
        cfg.dense = 4;
        cfg.epochs = 2;
        cfg.validate().unwrap();
        cfg
    }

    fn micro_set(cfg: &RunConfig, per_class: usize) -> Vec<LabeledClip> {
        let mut set = Vec::new();
        for class in 0..6 {
            for i in 0..per_class {
                set.push(LabeledClip {
                    wave: synth_clip(cfg.seed, class, i, cfg.sample_rate, cfg.frame_len + 9 * cfg.hop),
                    label: class,
                });
            }
        }
        set
    }

    #[test]
    fn training_is_bit_deterministic() {
        let cfg = micro_cfg();
        let train = micro_set(&cfg, 2);
        let val = micro_set(&cfg, 1);
        let a = train_joint(&cfg, &train, &val, 6).unwrap();
        let b = train_joint(&cfg, &train, &val, 6).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
        assert!(a.metrics.iter().all(|m| m.loss.is_finite()));
        assert_eq!(a.mu_trajectory.len(), cfg.epochs + 1);
        // μ moved somewhere but stayed inside its domain.
        let first = &a.mu_trajectory[0].1;
        let last = &a.mu_trajectory[cfg.epochs].1;
        assert!(last.iter().all(|&m| (MU_MIN..=MU_MAX).contains(&m)));
        assert_ne!(first, last);
    }

    #[test]
    fn frozen_frontend_keeps_mu_bit_identical() {
        let mut cfg = micro_cfg();
        cfg.freeze_frontend = true;
        let train = micro_set(&cfg, 1);
        let out = train_joint(&cfg, &train, &train, 6).unwrap();
        let init = ModelParams::init(&cfg, 6).unwrap();
        assert_eq!(out.params.mu().unwrap(), init.mu().unwrap());
        assert_eq!(
            out.params.get("head0.w1").unwrap(),
            init.get("head0.w1").unwrap()
        );
        assert_ne!(
            out.params.get("backend.out.w").unwrap(),
            init.get("backend.out.w").unwrap()
        );
    }

    #[test]
    fn constant_predictor_scores_one_sixth_macro() {
        let mut cfg = micro_cfg();
        cfg.frontend_kind = FrontendKind::Mel;
        let mut params = ModelParams::init(&cfg, 6).unwrap();
        for (name, t) in &mut params.named {
            if name == "backend.out.b" {
                t.data_mut().copy_from_slice(&[0.0, 0.0, 5.0, 0.0, 0.0, 0.0]);
            } else {
                t.data_mut().fill(0.0);
            }
        }
        let set = micro_set(&cfg, 2);
        let r = evaluate(&cfg, &params, &set, 6).unwrap();
        assert_eq!(r.per_class.len(), 6);
        assert!((r.macro_acc - 1.0 / 6.0).abs() < 1e-12);
        assert!((r.overall_acc - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.per_class[2].correct, r.per_class[2].total);
        assert_eq!(r.per_class[0].correct, 0);
        assert!(evaluate(&cfg, &params, &[], 6).is_err());
    }

    #[test]
    fn mel_training_skips_mu_trajectory() {
        let mut cfg = micro_cfg();
        cfg.frontend_kind = FrontendKind::Mel;
        cfg.epochs = 1;
        let set = micro_set(&cfg, 1);
        let out = train_joint(&cfg, &set, &set, 6).unwrap();
        assert!(out.mu_trajectory.is_empty());
        assert_eq!(out.metrics.len(), 1);
    }

    #[test]
    fn csv_emission_formats() {
        let metrics = vec![EpochMetrics {
            epoch: 0,
            lr: 0.05,
            loss: 1.5,
            train_acc: 0.25,
            val_acc: 0.5,
        }];
        let csv = metrics_csv(&metrics);
        assert_eq!(csv, "epoch,lr,loss,train_acc,val_acc\n0,0.05,1.5,0.25,0.5\n");
        let mu = mu_trajectory_csv(&[(0, vec![0.1, 0.2]), (1, vec![0.15, 0.2])]);
        assert_eq!(mu, "epoch,mu0,mu1\n0,0.1,0.2\n1,0.15,0.2\n");
    }

    #[test]
    fn dataset_loading_checks_sample_rate() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = crate::dataio::gen_synthetic(dir.path(), 3, 2, 8000, 0.05).unwrap();
        let mut cfg = micro_cfg();
        cfg.manifest = Some(manifest);
        cfg.test_fold = 1;
        let err = load_dataset(&cfg).unwrap_err();
        assert!(err.is_usage(), "{err}");

        cfg.sample_rate = 8000;
        let data = load_dataset(&cfg).unwrap();
        assert_eq!(data.labels.len(), 6);
        assert_eq!(data.train.len() + data.test.len(), 12);
        assert!(!data.test.is_empty());
    }
}
