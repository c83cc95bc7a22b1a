//! Flat `key = value` run configuration: parsing, validation, and the
//! canonical echo written next to run artifacts so results can be reproduced
//! from the output directory alone.

use crate::error::{Error, Result};
use crate::relevance::{HeadArch, SplitScheme};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendKind {
    /// Learnable cosine-modulated Gaussian filterbank.
    CosGauss,
    /// Fixed log-mel baseline (no relevance weighting, no learnable μ).
    Mel,
}

impl FrontendKind {
    fn parse(s: &str) -> Result<FrontendKind> {
        match s {
            "cosgauss" => Ok(FrontendKind::CosGauss),
            "mel" => Ok(FrontendKind::Mel),
            other => Err(Error::Config(format!(
                "frontend.kind must be 'cosgauss' or 'mel', got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FrontendKind::CosGauss => "cosgauss",
            FrontendKind::Mel => "mel",
        }
    }
}

/// Every key has a documented default; `data.manifest` alone has none and is
/// required by commands that touch a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub frontend_kind: FrontendKind,
    pub f_bands: usize,
    pub kernel_len: usize,
    pub f_min: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub heads: usize,
    pub split: SplitScheme,
    pub context_c: usize,
    pub hidden: usize,
    pub skip_add: bool,
    pub arch: HeadArch,
    pub freq_masks: usize,
    pub freq_width: usize,
    pub time_masks: usize,
    pub time_width: usize,
    pub crop_t: usize,
    pub mixup_alpha: f64,
    pub aligned: bool,
    pub momentum: f64,
    pub batch: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub t0_epochs: usize,
    pub t_mult: usize,
    pub channels: Vec<usize>,
    pub dense: usize,
    pub manifest: Option<PathBuf>,
    pub test_fold: u32,
    pub epochs: usize,
    pub freeze_frontend: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 17,
            frontend_kind: FrontendKind::CosGauss,
            f_bands: 40,
            kernel_len: 101,
            f_min: 0.0,
            frame_len: 400,
            hop: 160,
            sample_rate: 16000,
            heads: 2,
            split: SplitScheme::EvenOdd,
            context_c: 10,
            hidden: 50,
            skip_add: true,
            arch: HeadArch::Fc,
            freq_masks: 1,
            freq_width: 6,
            time_masks: 1,
            time_width: 10,
            crop_t: 96,
            mixup_alpha: 0.2,
            aligned: true,
            momentum: 0.9,
            batch: 16,
            lr_max: 0.05,
            lr_min: 0.001,
            t0_epochs: 10,
            t_mult: 2,
            channels: vec![8, 16],
            dense: 64,
            manifest: None,
            test_fold: 1,
            epochs: 60,
            freeze_frontend: false,
        }
    }
}

impl RunConfig {
    /// Parses config text. Relative `data.manifest` paths resolve against
    /// `base_dir`. Unknown and duplicate keys are rejected.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value, base_dir)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::parse_str(&text, base)
    }

    fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!(
                    "{key} must be 'true' or 'false', got {value:?}"
                ))),
            }
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "frontend.kind" => self.frontend_kind = FrontendKind::parse(value)?,
            "frontend.F" => self.f_bands = num(key, value)?,
            "frontend.k" => self.kernel_len = num(key, value)?,
            "frontend.f_min" => self.f_min = num(key, value)?,
            "frame.S" => self.frame_len = num(key, value)?,
            "frame.hop" => self.hop = num(key, value)?,
            "frame.sample_rate" => self.sample_rate = num(key, value)?,
            "relevance.heads" => self.heads = num(key, value)?,
            "relevance.split" => self.split = SplitScheme::parse(value)?,
            "relevance.context_c" => self.context_c = num(key, value)?,
            "relevance.hidden" => self.hidden = num(key, value)?,
            "relevance.skip_add" => self.skip_add = flag(key, value)?,
            "relevance.arch" => {
                self.arch = match value {
                    "fc" => HeadArch::Fc,
                    "conv" => HeadArch::Conv1d,
                    other => {
                        return Err(Error::Config(format!(
                            "relevance.arch must be 'fc' or 'conv', got {other:?}"
                        )))
                    }
                }
            }
            "augment.freq_masks" => self.freq_masks = num(key, value)?,
            "augment.freq_width" => self.freq_width = num(key, value)?,
            "augment.time_masks" => self.time_masks = num(key, value)?,
            "augment.time_width" => self.time_width = num(key, value)?,
            "augment.crop_t" => self.crop_t = num(key, value)?,
            "augment.mixup_alpha" => self.mixup_alpha = num(key, value)?,
            "augment.aligned" => self.aligned = flag(key, value)?,
            "optimizer.momentum" => self.momentum = num(key, value)?,
            "optimizer.batch" => self.batch = num(key, value)?,
            "schedule.lr_max" => self.lr_max = num(key, value)?,
            "schedule.lr_min" => self.lr_min = num(key, value)?,
            "schedule.t0_epochs" => self.t0_epochs = num(key, value)?,
            "schedule.t_mult" => self.t_mult = num(key, value)?,
            "backend.channels" => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|p| p.trim().parse()).collect();
                match parsed {
                    Ok(v) if !v.is_empty() => self.channels = v,
                    _ => {
                        return Err(Error::Config(format!(
                            "backend.channels must be a comma list like '8,16', got {value:?}"
                        )))
                    }
                }
            }
            "backend.dense" => self.dense = num(key, value)?,
            "data.manifest" => self.manifest = Some(base_dir.join(value)),
            "data.test_fold" => self.test_fold = num(key, value)?,
            "train.epochs" => self.epochs = num(key, value)?,
            "train.freeze_frontend" => self.freeze_frontend = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.f_bands == 0 {
            return fail("frontend.F must be >= 1".into());
        }
        if self.kernel_len < 3 || self.kernel_len % 2 == 0 {
            return fail(format!(
                "frontend.k must be odd and >= 3, got {}",
                self.kernel_len
            ));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.sample_rate as f64 / 2.0) {
            return fail(format!(
                "frontend.f_min must be in [0, Nyquist), got {}",
                self.f_min
            ));
        }
        if self.frame_len < self.kernel_len {
            return fail(format!(
                "frame.S ({}) must be >= frontend.k ({})",
                self.frame_len, self.kernel_len
            ));
        }
        if self.hop == 0 || self.sample_rate == 0 {
            return fail("frame.hop and frame.sample_rate must be positive".into());
        }
        if self.frontend_kind == FrontendKind::CosGauss && self.heads > 0 {
            let rows = self.split.head_rows(self.f_bands).map_err(|e| {
                Error::Config(format!("relevance.split does not fit frontend.F: {e}"))
            })?;
            if rows.len() != self.heads {
                return fail(format!(
                    "relevance.heads is {} but relevance.split {:?} defines {} heads",
                    self.heads,
                    self.split.canonical(),
                    rows.len()
                ));
            }
            if self.hidden == 0 {
                return fail("relevance.hidden must be >= 1".into());
            }
            if self.arch == HeadArch::Conv1d && self.context_c == 0 {
                return fail("relevance.arch = conv needs relevance.context_c >= 1".into());
            }
        }
        if self.hop > self.frame_len {
            return fail(format!(
                "frame.hop ({}) must be <= frame.S ({})",
                self.hop, self.frame_len
            ));
        }
        if self.crop_t == 0 {
            return fail("augment.crop_t must be >= 1".into());
        }
        if !(self.mixup_alpha >= 0.0 && self.mixup_alpha.is_finite()) {
            return fail(format!(
                "augment.mixup_alpha must be finite and >= 0, got {}",
                self.mixup_alpha
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!(
                "optimizer.momentum must be in [0, 1), got {}",
                self.momentum
            ));
        }
        if self.batch == 0 {
            return fail("optimizer.batch must be >= 1".into());
        }
        if !(self.lr_max.is_finite()
            && self.lr_min.is_finite()
            && self.lr_min >= 0.0
            && self.lr_max >= self.lr_min)
        {
            return fail(format!(
                "schedule requires 0 <= lr_min <= lr_max, got {} / {}",
                self.lr_min, self.lr_max
            ));
        }
        if self.t0_epochs == 0 || self.t_mult == 0 {
            return fail("schedule.t0_epochs and schedule.t_mult must be >= 1".into());
        }
        if self.channels.iter().any(|&c| c == 0) || self.dense == 0 {
            return fail("backend.channels entries and backend.dense must be >= 1".into());
        }
        if self.test_fold == 0 {
            return fail("data.test_fold must be >= 1".into());
        }
        if self.epochs == 0 {
            return fail("train.epochs must be >= 1".into());
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::Config("data.manifest is required for this command".into()))
    }

    /// The canonical echo: every key with its effective value, suitable for
    /// re-running the exact same configuration.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let channels = self
            .channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "frontend.kind = {}", self.frontend_kind.as_str());
        let _ = writeln!(s, "frontend.F = {}", self.f_bands);
        let _ = writeln!(s, "frontend.k = {}", self.kernel_len);
        let _ = writeln!(s, "frontend.f_min = {}", self.f_min);
        let _ = writeln!(s, "frame.S = {}", self.frame_len);
        let _ = writeln!(s, "frame.hop = {}", self.hop);
        let _ = writeln!(s, "frame.sample_rate = {}", self.sample_rate);
        let _ = writeln!(s, "relevance.heads = {}", self.heads);
        let _ = writeln!(s, "relevance.split = {}", self.split.canonical());
        let _ = writeln!(s, "relevance.context_c = {}", self.context_c);
        let _ = writeln!(s, "relevance.hidden = {}", self.hidden);
        let _ = writeln!(s, "relevance.skip_add = {}", self.skip_add);
        let _ = writeln!(
            s,
            "relevance.arch = {}",
            match self.arch {
                HeadArch::Fc => "fc",
                HeadArch::Conv1d => "conv",
            }
        );
        let _ = writeln!(s, "augment.freq_masks = {}", self.freq_masks);
        let _ = writeln!(s, "augment.freq_width = {}", self.freq_width);
        let _ = writeln!(s, "augment.time_masks = {}", self.time_masks);
        let _ = writeln!(s, "augment.time_width = {}", self.time_width);
        let _ = writeln!(s, "augment.crop_t = {}", self.crop_t);
        let _ = writeln!(s, "augment.mixup_alpha = {}", self.mixup_alpha);
        let _ = writeln!(s, "augment.aligned = {}", self.aligned);
        let _ = writeln!(s, "optimizer.momentum = {}", self.momentum);
        let _ = writeln!(s, "optimizer.batch = {}", self.batch);
        let _ = writeln!(s, "schedule.lr_max = {}", self.lr_max);
        let _ = writeln!(s, "schedule.lr_min = {}", self.lr_min);
        let _ = writeln!(s, "schedule.t0_epochs = {}", self.t0_epochs);
        let _ = writeln!(s, "schedule.t_mult = {}", self.t_mult);
        let _ = writeln!(s, "backend.channels = {channels}");
        let _ = writeln!(s, "backend.dense = {}", self.dense);
        if let Some(m) = &self.manifest {
            let _ = writeln!(s, "data.manifest = {}", m.display());
        }
        let _ = writeln!(s, "data.test_fold = {}", self.test_fold);
        let _ = writeln!(s, "train.epochs = {}", self.epochs);
        let _ = writeln!(s, "train.freeze_frontend = {}", self.freeze_frontend);
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.canonical_text())?;
        Ok(())
    }

    /// The small gradient-check configuration: F=8, k=65, S=256, c=2,
    /// hidden=5, 2 heads, and a backend sized so every coordinate can be
    /// finite-difference probed quickly.
    pub fn apply_tiny(&mut self) {
        self.frontend_kind = FrontendKind::CosGauss;
        self.f_bands = 8;
        self.kernel_len = 65;
        self.frame_len = 256;
        self.hop = 128;
        self.heads = 2;
        self.split = SplitScheme::EvenOdd;
        self.context_c = 2;
        self.hidden = 5;
        self.skip_add = true;
        self.freq_masks = 1;
        self.freq_width = 2;
        self.time_masks = 1;
        self.time_width = 3;
        self.crop_t = 24;
        self.mixup_alpha = 0.2;
        self.aligned = true;
        self.batch = 2;
        self.channels = vec![4, 8];
        self.dense = 16;
        self.epochs = 1;
        self.freeze_frontend = false;
    }
}
