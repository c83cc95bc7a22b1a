//! Browser bindings for the interactive demo page: a filter explorer, a
//! synthetic-clip representation viewer with relevance masks, and the
//! warm-restart learning-rate curve.

use rwfb::config::RunConfig;
use rwfb::dataio::{synth_clip, SYNTH_CLASSES};
use rwfb::frontend::{
    cosgauss_kernel, filterbank_forward, frame_signal, order_bands, sinc_kernel,
    FilterbankParams, FrameConfig, LOG_FLOOR_EPS,
};
use rwfb::optim::WarmRestartSchedule;
use rwfb::pipeline::ModelParams;
use rwfb::relevance::{head_forward, splice, split_bands, SplitScheme};
use wasm_bindgen::prelude::*;

const SAMPLE_RATE: u32 = 16000;
const CLIP_SAMPLES: usize = 8000;

fn js_err(e: rwfb::Error) -> String {
    e.to_string()
}

/// Cosine-modulated Gaussian kernel samples for plotting.
#[wasm_bindgen]
pub fn kernel_wave(mu: f64, k: usize) -> Result<Vec<f64>, String> {
    cosgauss_kernel(mu, k).map_err(js_err)
}

/// Band-pass sinc kernel (Hamming windowed) for side-by-side comparison.
#[wasm_bindgen]
pub fn sinc_wave(f_low: f64, f_high: f64, k: usize) -> Result<Vec<f64>, String> {
    sinc_kernel(f_low, f_high, k).map_err(js_err)
}

/// The demo class names, comma separated in class-index order.
#[wasm_bindgen]
pub fn class_names() -> String {
    SYNTH_CLASSES.join(",")
}

fn demo_config(seed: u32) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed as u64;
    cfg.f_bands = 24;
    cfg.kernel_len = 65;
    cfg.frame_len = 256;
    cfg.hop = 256;
    cfg.sample_rate = SAMPLE_RATE;
    cfg.heads = 2;
    cfg.split = SplitScheme::Contiguous(vec![12, 12]);
    cfg.context_c = 5;
    cfg.hidden = 20;
    cfg.crop_t = 16;
    cfg
}

/// A [F, T] time-frequency view of one synthetic clip plus the relevance
/// mask the freshly initialized heads produce for it.
#[wasm_bindgen]
pub struct ClipView {
    f_bands: usize,
    t_frames: usize,
    values: Vec<f64>,
    mask: Vec<f64>,
    band_hz: Vec<f64>,
}

#[wasm_bindgen]
impl ClipView {
    #[wasm_bindgen(getter)]
    pub fn f_bands(&self) -> usize {
        self.f_bands
    }

    #[wasm_bindgen(getter)]
    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    /// Log band energies, row-major [F, T], low band first.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Relevance weights in (0, 1), row-major [F, T].
    pub fn mask(&self) -> Vec<f64> {
        self.mask.clone()
    }

    /// Center frequency of each band in Hz.
    pub fn band_hz(&self) -> Vec<f64> {
        self.band_hz.clone()
    }
}

/// Renders one synthetic clip through the mel-initialized filterbank.
/// `mask_bias` shifts every head's output bias so the mask response is
/// explorable; 0 shows the untrained heads as-is.
#[wasm_bindgen]
pub fn clip_view(class_idx: usize, seed: u32, mask_bias: f64) -> Result<ClipView, String> {
    if class_idx >= SYNTH_CLASSES.len() {
        return Err("class index out of range".to_string());
    }
    let cfg = demo_config(seed);
    let wave = synth_clip(cfg.seed, class_idx, 0, SAMPLE_RATE, CLIP_SAMPLES);
    let inner = || -> rwfb::Result<ClipView> {
        let params = ModelParams::init(&cfg, SYNTH_CLASSES.len())?;
        let frames = frame_signal(&wave, &FrameConfig {
            frame_len: cfg.frame_len,
            hop: cfg.hop,
            sample_rate: cfg.sample_rate,
        })?;
        let fb = FilterbankParams {
            mu: params.mu()?.data().to_vec(),
            kernel_len: cfg.kernel_len,
        };
        let rep = order_bands(&filterbank_forward(&frames, &fb, LOG_FLOOR_EPS)?);
        let mut heads = params.heads(&cfg)?;
        for head in &mut heads {
            head.b2 += mask_bias;
        }
        let segments = split_bands(&rep.values, &cfg.split)?;
        let masks = segments
            .iter()
            .zip(&heads)
            .map(|(seg, head)| head_forward(seg, head))
            .collect::<rwfb::Result<Vec<_>>>()?;
        let full_mask = splice(&masks, &cfg.split, cfg.f_bands)?;
        let (f, t) = (rep.values.shape()[0], rep.values.shape()[1]);
        Ok(ClipView {
            f_bands: f,
            t_frames: t,
            values: rep.values.data().to_vec(),
            mask: full_mask.data().to_vec(),
            band_hz: rep.band_mu.iter().map(|m| m * SAMPLE_RATE as f64).collect(),
        })
    };
    inner().map_err(js_err)
}

/// Learning rate at each optimizer step under cosine annealing with warm
/// restarts.
#[wasm_bindgen]
pub fn schedule_curve(
    lr_max: f64,
    lr_min: f64,
    t0: usize,
    t_mult: usize,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let schedule = WarmRestartSchedule::new(lr_max, lr_min, t0, t_mult).map_err(js_err)?;
    Ok((0..steps).map(|s| schedule.lr_at(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_even_with_unit_center() {
        let k = kernel_wave(0.1, 65).unwrap();
        assert_eq!(k.len(), 65);
        assert_eq!(k[32], 1.0);
        for i in 0..65 {
            assert!((k[i] - k[64 - i]).abs() < 1e-15);
        }
        assert!(kernel_wave(0.7, 65).is_err());
    }

    #[test]
    fn clip_view_shapes_and_mask_range() {
        let v = clip_view(2, 11, 0.0).unwrap();
        assert_eq!(v.f_bands(), 24);
        assert_eq!(v.values().len(), v.f_bands() * v.t_frames());
        assert_eq!(v.mask().len(), v.values().len());
        assert!(v.mask().iter().all(|&m| m > 0.0 && m < 1.0));
        assert_eq!(v.band_hz().len(), 24);
        assert!(v.band_hz().windows(2).all(|w| w[0] <= w[1]));
        assert!(clip_view(9, 11, 0.0).is_err());

        // A strong positive bias pushes every mask weight up.
        let hi = clip_view(2, 11, 4.0).unwrap();
        let mean =
            |m: &[f64]| m.iter().sum::<f64>() / m.len() as f64;
        assert!(mean(&hi.mask()) > mean(&v.mask()));
    }

    #[test]
    fn schedule_restarts_at_cycle_boundaries() {
        let curve = schedule_curve(0.1, 0.001, 10, 2, 31).unwrap();
        assert_eq!(curve[0], 0.1);
        assert_eq!(curve[10], 0.1);
        assert_eq!(curve[30], 0.1);
        assert!(curve[9] < 0.01);
        assert_eq!(class_names().split(',').count(), 6);
    }
}
