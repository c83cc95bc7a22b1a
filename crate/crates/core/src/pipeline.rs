//! Model assembly: parameter initialization, the taped batch graph used for
//! training and evaluation, the pure feature-extraction path, and the
//! full-pipeline gradient check.

use crate::augment::{self, AugmentPlan, SpecAugPlan};
use crate::config::{FrontendKind, RunConfig};
use crate::error::{Error, Result};
use crate::frontend::{
    self, filterbank_forward, frame_signal, init_mu_mel, mel_spectrogram, order_bands,
    FilterbankParams, FrameConfig, LOG_FLOOR_EPS,
};
use crate::gradcheck::{check_gradients, GradCheckReport, ParamSpan};
use crate::relevance::{
    apply_relevance, head_forward, split_bands, splice, HeadArch, RelevanceHead, CONV_CHANNELS,
    CONV_KERNEL,
};
use crate::rng::derive_rng;
use crate::tape::{BufId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Regression half-window of the delta features.
pub const DELTA_WINDOW: usize = 2;

/// The model as an ordered list of named tensors; the order is the parameter
/// layout used by the optimizer, the params file, and the gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub named: Vec<(String, Tensor)>,
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape consistent with element count")
}

/// Feature-map plan through the conv blocks: pool flags per block, given the
/// [3, F, crop_T] backend input. Errors if a block would underflow 3×3 valid
/// convolution.
fn backend_plan(f_bands: usize, crop_t: usize, channels: &[usize]) -> Result<Vec<bool>> {
    let (mut h, mut w) = (f_bands, crop_t);
    let mut pools = Vec::with_capacity(channels.len());
    for (i, _) in channels.iter().enumerate() {
        if h < 3 || w < 3 {
            return Err(Error::Config(format!(
                "feature map {h}×{w} too small for conv block {i}; \
                 reduce backend.channels depth or enlarge F/crop_T"
            )));
        }
        h -= 2;
        w -= 2;
        let pool = h >= 2 && w >= 2;
        if pool {
            h /= 2;
            w /= 2;
        }
        pools.push(pool);
    }
    Ok(pools)
}

impl ModelParams {
    /// Seeded initialization: μ on the mel scale, Xavier-uniform weights,
    /// zero biases. A pure function of (config, class count).
    pub fn init(cfg: &RunConfig, n_classes: usize) -> Result<ModelParams> {
        cfg.validate()?;
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        let mut rng = derive_rng(cfg.seed, "init", &[]);
        let mut named: Vec<(String, Tensor)> = Vec::new();
        if cfg.frontend_kind == FrontendKind::CosGauss {
            let mu = init_mu_mel(cfg.f_bands, cfg.sample_rate, cfg.f_min)?;
            named.push((
                "frontend.mu".into(),
                Tensor::from_vec(&[cfg.f_bands], mu)?,
            ));
            if cfg.heads > 0 {
                let ctx = 2 * cfg.context_c + 1;
                for h in 0..cfg.heads {
                    let (w1, b1, w2) = match cfg.arch {
                        HeadArch::Fc => (
                            xavier(&mut rng, ctx, cfg.hidden, &[cfg.hidden, ctx]),
                            Tensor::zeros(&[cfg.hidden]),
                            xavier(&mut rng, cfg.hidden, 1, &[1, cfg.hidden]),
                        ),
                        HeadArch::Conv1d => {
                            let flat = CONV_CHANNELS * (ctx - CONV_KERNEL + 1);
                            (
                                xavier(
                                    &mut rng,
                                    CONV_KERNEL,
                                    CONV_CHANNELS,
                                    &[CONV_CHANNELS, CONV_KERNEL],
                                ),
                                Tensor::zeros(&[CONV_CHANNELS]),
                                xavier(&mut rng, flat, 1, &[1, flat]),
                            )
                        }
                    };
                    named.push((format!("head{h}.w1"), w1));
                    named.push((format!("head{h}.b1"), b1));
                    named.push((format!("head{h}.w2"), w2));
                    named.push((format!("head{h}.b2"), Tensor::zeros(&[1])));
                }
            }
        }
        backend_plan(cfg.f_bands, cfg.crop_t, &cfg.channels)?;
        let mut cin = 3;
        for (i, &cout) in cfg.channels.iter().enumerate() {
            named.push((
                format!("backend.conv{i}.w"),
                xavier(&mut rng, cin * 9, cout * 9, &[cout, cin, 3, 3]),
            ));
            named.push((format!("backend.conv{i}.b"), Tensor::zeros(&[cout])));
            cin = cout;
        }
        named.push((
            "backend.fc.w".into(),
            xavier(&mut rng, cin, cfg.dense, &[cin, cfg.dense]),
        ));
        named.push(("backend.fc.b".into(), Tensor::zeros(&[cfg.dense])));
        named.push((
            "backend.out.w".into(),
            xavier(&mut rng, cfg.dense, n_classes, &[cfg.dense, n_classes]),
        ));
        named.push(("backend.out.b".into(), Tensor::zeros(&[n_classes])));
        Ok(ModelParams { named })
    }

    pub fn from_named(named: Vec<(String, Tensor)>) -> ModelParams {
        ModelParams { named }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Config(format!("parameters are missing tensor {name:?}")))
    }

    pub fn mu(&self) -> Result<&Tensor> {
        self.get("frontend.mu")
    }

    pub fn total_params(&self) -> usize {
        self.named.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Class count, recovered from the output bias.
    pub fn n_classes(&self) -> Result<usize> {
        Ok(self.get("backend.out.b")?.numel())
    }

    /// The relevance heads as standalone structs (for the pure path).
    pub fn heads(&self, cfg: &RunConfig) -> Result<Vec<RelevanceHead>> {
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let head = RelevanceHead {
                arch: cfg.arch,
                c: cfg.context_c,
                w1: self.get(&format!("head{h}.w1"))?.clone(),
                b1: self.get(&format!("head{h}.b1"))?.clone(),
                w2: self.get(&format!("head{h}.w2"))?.clone(),
                b2: self.get(&format!("head{h}.b2"))?.data()[0],
            };
            head.validate()?;
            heads.push(head);
        }
        Ok(heads)
    }
}

/// Tape ids of every model tensor, keyed by parameter name.
pub struct Bound {
    ids: HashMap<String, BufId>,
}

impl Bound {
    fn id(&self, name: &str) -> Result<BufId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameters are missing tensor {name:?}")))
    }
}

/// Registers the model on a tape. With `trainable`, tensors become tracked
/// parameters; `train.freeze_frontend` additionally pins μ and the heads as
/// constants so only the backend receives gradients.
pub fn bind(tape: &mut Tape, params: &ModelParams, cfg: &RunConfig, trainable: bool) -> Result<Bound> {
    let mut ids = HashMap::new();
    for (name, tensor) in &params.named {
        let frontend_param = name == "frontend.mu" || name.starts_with("head");
        let track = trainable && !(cfg.freeze_frontend && frontend_param);
        let id = if track {
            tape.param(name, tensor.clone())?
        } else {
            tape.constant(tensor.clone())
        };
        ids.insert(name.clone(), id);
    }
    Ok(Bound { ids })
}

/// One clip of a batch. `example_id` keys the augmentation stream and must be
/// unique within an epoch.
pub struct ClipInput<'a> {
    pub wave: &'a [f64],
    pub label: usize,
    pub example_id: usize,
}

pub enum BatchMode<'a> {
    /// Augmented graph: SpecAug, random crop, mixup.
    Train {
        plan: &'a AugmentPlan,
        epoch: usize,
        /// Batch index within the epoch (keys the mixup pairing).
        step: usize,
    },
    /// Deterministic graph: no masking, center crop, hard labels.
    Eval,
}

pub struct BatchGraph {
    /// Mean cross-entropy over the batch, shape [1].
    pub loss: BufId,
    /// Per-clip logits, each [1, n_classes].
    pub logits: Vec<BufId>,
    /// Per-clip backend input, each [3, F, crop_T] in [0, 1].
    pub features: Vec<BufId>,
    /// The (possibly mixed) soft labels the loss used.
    pub soft_labels: Vec<Vec<f64>>,
}

/// Builds the full differentiable pipeline for one batch:
/// audio → filterbank → band order → head masks → skip-add → splice → deltas
/// → (SpecAug, crop, mixup) → [0,1] scale → CNN → cross-entropy.
pub fn build_batch_graph(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &RunConfig,
    clips: &[ClipInput],
    n_classes: usize,
    mode: &BatchMode,
) -> Result<BatchGraph> {
    if clips.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(bad) = clips.iter().find(|c| c.label >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {n_classes} classes",
            bad.label
        )));
    }
    let frame_cfg = FrameConfig {
        frame_len: cfg.frame_len,
        hop: cfg.hop,
        sample_rate: cfg.sample_rate,
    };
    frame_cfg.validate()?;
    let cosgauss = cfg.frontend_kind == FrontendKind::CosGauss;
    let with_heads = cosgauss && cfg.heads > 0;

    // Shared nodes: the kernel bank and the band order by current μ.
    let (kernels, perm, head_rows) = if cosgauss {
        let mu_id = bound.id("frontend.mu")?;
        let kernels = tape.cosgauss_kernels(mu_id, cfg.kernel_len)?;
        let perm = frontend::sort_perm(tape.value(mu_id).data());
        let rows = if with_heads {
            cfg.split.head_rows(cfg.f_bands)?
        } else {
            vec![(0..cfg.f_bands).collect()]
        };
        (Some(kernels), perm, rows)
    } else {
        (None, Vec::new(), vec![(0..cfg.f_bands).collect()])
    };
    // Row origin of each global band after splicing head outputs.
    let mut layout = vec![(0usize, 0usize); cfg.f_bands];
    for (h, rows) in head_rows.iter().enumerate() {
        for (pos, &g) in rows.iter().enumerate() {
            layout[g] = (h, pos);
        }
    }

    let mut cropped = Vec::with_capacity(clips.len());
    let mut lambdas = Vec::with_capacity(clips.len());
    for clip in clips {
        let rep = if cosgauss {
            let frames = tape.constant(frame_signal(clip.wave, &frame_cfg)?);
            let energies = tape.band_energies(frames, kernels.expect("cosgauss kernels"))?;
            let logf = tape.log_floor(energies, LOG_FLOOR_EPS)?;
            tape.gather_rows(logf, &perm)?
        } else {
            tape.constant(mel_spectrogram(clip.wave, &frame_cfg, cfg.f_bands)?.values)
        };
        let spliced = if with_heads {
            let mut parts = Vec::with_capacity(head_rows.len());
            for (h, rows) in head_rows.iter().enumerate() {
                let seg = tape.gather_rows(rep, rows)?;
                let cells = tape.context_windows(seg, cfg.context_c)?;
                let pre = match cfg.arch {
                    HeadArch::Fc => {
                        let w1t = tape.transpose(bound.id(&format!("head{h}.w1"))?)?;
                        let z1 = tape.matmul(cells, w1t)?;
                        tape.row_bias(z1, bound.id(&format!("head{h}.b1"))?)?
                    }
                    HeadArch::Conv1d => {
                        let z1 =
                            tape.conv_row_bank(cells, bound.id(&format!("head{h}.w1"))?)?;
                        tape.channel_block_bias(z1, bound.id(&format!("head{h}.b1"))?)?
                    }
                };
                let a1 = tape.sigmoid(pre)?;
                let w2t = tape.transpose(bound.id(&format!("head{h}.w2"))?)?;
                let z2 = tape.matmul(a1, w2t)?;
                let z2 = tape.row_bias(z2, bound.id(&format!("head{h}.b2"))?)?;
                let mask = tape.sigmoid(z2)?;
                let t = tape.value(seg).shape()[1];
                let mask = tape.reshape(mask, &[rows.len(), t])?;
                let weighted = tape.mul(seg, mask)?;
                parts.push(if cfg.skip_add {
                    tape.add(seg, weighted)?
                } else {
                    weighted
                });
            }
            tape.assemble_rows(&parts, &layout)?
        } else {
            rep
        };
        let t = tape.value(spliced).shape()[1];
        if t <= 2 * DELTA_WINDOW + 2 {
            return Err(Error::InvalidArgument(format!(
                "clip yields only {t} frames; deltas need more context"
            )));
        }
        let d1 = tape.delta_time(spliced, DELTA_WINDOW)?;
        let d2 = tape.delta_time(d1, DELTA_WINDOW)?;
        let stack = tape.stack_channels(&[spliced, d1, d2])?;

        let (x, lambda) = match mode {
            BatchMode::Train { plan, epoch, .. } => {
                plan.validate(cfg.f_bands, t)?;
                let mut rng = plan.rng(*epoch, clip.example_id);
                let mask = augment::specaug_mask(
                    cfg.f_bands,
                    t,
                    &head_rows,
                    &plan.specaug,
                    plan.aligned,
                    &mut rng,
                );
                let masked = tape.mask_fill_mean(stack, &mask)?;
                let start = augment::draw_crop_start(t, plan.crop_t, &mut rng)?;
                let x = tape.crop_cols(masked, &vec![start; cfg.f_bands], plan.crop_t)?;
                (x, augment::draw_mixup_lambda(plan.mixup_alpha, &mut rng))
            }
            BatchMode::Eval => {
                let start = augment::center_crop_start(t, cfg.crop_t)?;
                let x = tape.crop_cols(stack, &vec![start; cfg.f_bands], cfg.crop_t)?;
                (x, 1.0)
            }
        };
        cropped.push(x);
        lambdas.push(lambda);
    }

    // Mixup pairing: a seeded shuffle of the batch.
    let mut partner: Vec<usize> = (0..clips.len()).collect();
    if let BatchMode::Train { plan, epoch, step } = mode {
        if plan.mixup_alpha > 0.0 && clips.len() > 1 {
            let mut rng = derive_rng(plan.seed, "mixup", &[*epoch as u64, *step as u64]);
            for i in (1..partner.len()).rev() {
                let j = rng.random_range(0..=i);
                partner.swap(i, j);
            }
        }
    }

    let pools = backend_plan(cfg.f_bands, cfg.crop_t, &cfg.channels)?;
    let mut logits_ids = Vec::with_capacity(clips.len());
    let mut features = Vec::with_capacity(clips.len());
    let mut losses = Vec::with_capacity(clips.len());
    let mut soft_labels = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let (mixed, label) = {
            let (j, lambda) = (partner[i], lambdas[i]);
            let mut label = vec![0.0; n_classes];
            if j == i || lambda == 1.0 {
                label[clip.label] = 1.0;
                (cropped[i], label)
            } else {
                label[clip.label] += lambda;
                label[clips[j].label] += 1.0 - lambda;
                (tape.lerp(cropped[i], cropped[j], lambda)?, label)
            }
        };
        let scaled = tape.minmax_scale(mixed)?;
        features.push(scaled);
        let mut cur = scaled;
        for (b, &pool) in pools.iter().enumerate() {
            cur = tape.conv2d(cur, bound.id(&format!("backend.conv{b}.w"))?)?;
            cur = tape.conv_bias(cur, bound.id(&format!("backend.conv{b}.b"))?)?;
            cur = tape.relu(cur)?;
            if pool {
                cur = tape.maxpool2(cur)?;
            }
        }
        let emb = tape.gap(cur)?;
        let z = tape.matmul(emb, bound.id("backend.fc.w")?)?;
        let z = tape.row_bias(z, bound.id("backend.fc.b")?)?;
        let a = tape.relu(z)?;
        let z = tape.matmul(a, bound.id("backend.out.w")?)?;
        let logits = tape.row_bias(z, bound.id("backend.out.b")?)?;
        logits_ids.push(logits);
        losses.push(tape.softmax_xent(logits, &label)?);
        soft_labels.push(label);
    }
    let total = tape.sum_n(&losses)?;
    let loss = tape.scale_const(total, 1.0 / clips.len() as f64)?;
    Ok(BatchGraph {
        loss,
        logits: logits_ids,
        features,
        soft_labels,
    })
}

/// The augmentation plan a config describes.
pub fn plan_from_config(cfg: &RunConfig) -> AugmentPlan {
    AugmentPlan {
        seed: cfg.seed,
        specaug: SpecAugPlan {
            n_freq_masks: cfg.freq_masks,
            max_freq_width: cfg.freq_width,
            n_time_masks: cfg.time_masks,
            max_time_width: cfg.time_width,
        },
        crop_t: cfg.crop_t,
        mixup_alpha: cfg.mixup_alpha,
        aligned: cfg.aligned,
    }
}

/// Pure (tape-free) representation of one clip: the enhanced [3, F, T]
/// feature stack in [0, 1], per-head masks, and the ordered band frequencies.
pub struct Extraction {
    pub features: Tensor,
    pub masks: Vec<Tensor>,
    pub band_mu: Vec<f64>,
}

pub fn extract_features(cfg: &RunConfig, params: &ModelParams, wave: &[f64]) -> Result<Extraction> {
    let frame_cfg = FrameConfig {
        frame_len: cfg.frame_len,
        hop: cfg.hop,
        sample_rate: cfg.sample_rate,
    };
    let (values, band_mu, masks) = match cfg.frontend_kind {
        FrontendKind::CosGauss => {
            let frames = frame_signal(wave, &frame_cfg)?;
            let fb = FilterbankParams {
                mu: params.mu()?.data().to_vec(),
                kernel_len: cfg.kernel_len,
            };
            let rep = order_bands(&filterbank_forward(&frames, &fb, LOG_FLOOR_EPS)?);
            if cfg.heads > 0 {
                let heads = params.heads(cfg)?;
                let segments = split_bands(&rep.values, &cfg.split)?;
                let mut masks = Vec::with_capacity(heads.len());
                let mut outs = Vec::with_capacity(heads.len());
                for (seg, head) in segments.iter().zip(&heads) {
                    let mask = head_forward(seg, head)?;
                    outs.push(apply_relevance(seg, &mask, cfg.skip_add)?);
                    masks.push(mask);
                }
                (splice(&outs, &cfg.split, cfg.f_bands)?, rep.band_mu, masks)
            } else {
                (rep.values, rep.band_mu, Vec::new())
            }
        }
        FrontendKind::Mel => {
            let rep = mel_spectrogram(wave, &frame_cfg, cfg.f_bands)?;
            (rep.values, rep.band_mu, Vec::new())
        }
    };
    let stack = frontend::feature_stack(&values, DELTA_WINDOW)?;
    Ok(Extraction {
        features: frontend::minmax_scale(&stack),
        masks,
        band_mu,
    })
}

fn flatten(named: &[(String, Tensor)]) -> (Vec<f64>, Vec<ParamSpan>) {
    let mut flat = Vec::new();
    let mut layout = Vec::with_capacity(named.len());
    for (name, tensor) in named {
        flat.extend_from_slice(tensor.data());
        layout.push(ParamSpan {
            name: name.clone(),
            len: tensor.numel(),
        });
    }
    (flat, layout)
}

fn scatter(params: &mut ModelParams, flat: &[f64]) {
    let mut at = 0;
    for (_, tensor) in &mut params.named {
        let n = tensor.numel();
        tensor.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}

/// Runs the full-pipeline finite-difference gradient check on a 2-clip batch
/// with the given config. `corrupt` deliberately perturbs one analytic
/// gradient entry to prove the harness detects failures.
pub fn gradcheck_run(cfg: &RunConfig, corrupt: bool) -> Result<GradCheckReport> {
    let n_classes = 6;
    let clip_samples = cfg.frame_len + 30 * cfg.hop;
    let waves: Vec<Vec<f64>> = [1usize, 3]
        .iter()
        .map(|&class| crate::dataio::synth_clip(cfg.seed, class, 0, cfg.sample_rate, clip_samples))
        .collect();
    let clips: Vec<ClipInput> = waves
        .iter()
        .enumerate()
        .map(|(i, w)| ClipInput {
            wave: w,
            label: i + 1,
            example_id: i,
        })
        .collect();
    let plan = plan_from_config(cfg);
    let mode = BatchMode::Train {
        plan: &plan,
        epoch: 0,
        step: 0,
    };

    let params = ModelParams::init(cfg, n_classes)?;
    let (flat0, layout) = flatten(&params.named);

    let analytic = {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &params, cfg, true)?;
        let graph = build_batch_graph(&mut tape, &bound, cfg, &clips, n_classes, &mode)?;
        tape.backward(graph.loss)?;
        let grads: HashMap<String, Tensor> = tape.param_grads().into_iter().collect();
        let mut flat = Vec::with_capacity(flat0.len());
        for (name, tensor) in &params.named {
            let g = grads.get(name).ok_or_else(|| {
                Error::Config(format!("no gradient recorded for {name:?}"))
            })?;
            if g.numel() != tensor.numel() {
                return Err(Error::Shape(format!("gradient shape mismatch for {name:?}")));
            }
            flat.extend_from_slice(g.data());
        }
        if corrupt && !flat.is_empty() {
            flat[0] += 0.5 * flat[0].abs().max(1.0);
        }
        flat
    };

    let mut work = params.clone();
    let loss_at = move |theta: &[f64]| -> Result<f64> {
        scatter(&mut work, theta);
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &work, cfg, false)?;
        let graph = build_batch_graph(&mut tape, &bound, cfg, &clips, n_classes, &mode)?;
        Ok(tape.scalar(graph.loss))
    };
    check_gradients(&flat0, &layout, &analytic, loss_at, 1e-5, 1e-4)
}
