//! Reverse-mode automatic differentiation on a recorded operation tape.
//!
//! Values live in an arena indexed by [`BufId`]; every operation computes its
//! output eagerly, records which buffers it read, and saves whatever
//! auxiliary data its backward pass needs (argmax indices, convolution
//! intermediates, softmax probabilities). [`Tape::backward`] then walks the
//! record in reverse, accumulating gradients in a fixed left-to-right order
//! so results are bit-reproducible across runs.
//!
//! The op set is exactly what the training pipeline uses: dense and
//! convolutional primitives for the classifier, windowing/banking ops for the
//! relevance heads, the fused kernel-synthesis and band-energy ops of the
//! learned front-end, and the augmentation/scaling ops that sit between.

use crate::error::{Error, Result};
use crate::frontend;
use crate::tensor::{dot, sigmoid, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufId(usize);

struct OpRecord {
    op: Op,
    out: usize,
}

enum Op {
    Matmul { a: usize, b: usize },
    Transpose { a: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Square { a: usize },
    ScaleConst { a: usize, c: f64 },
    LogFloor { a: usize, eps: f64 },
    Sigmoid { a: usize },
    Relu { a: usize },
    RowBias { a: usize, b: usize },
    ConvRowBank { a: usize, k: usize },
    ChannelBlockBias { a: usize, b: usize },
    ContextWindows { x: usize, c: usize },
    GatherRows { x: usize, rows: Vec<usize> },
    AssembleRows { parts: Vec<usize>, layout: Vec<(usize, usize)> },
    DeltaTime { x: usize, window: usize },
    StackChannels { parts: Vec<usize> },
    MaskFillMean { x: usize, mask: Vec<bool> },
    CropCols { x: usize, starts: Vec<usize>, crop: usize },
    Lerp { a: usize, b: usize, lambda: f64 },
    MinMaxScale { x: usize, saved: Vec<ChannelExtrema> },
    Conv2d { x: usize, k: usize },
    ConvBias { x: usize, b: usize },
    MaxPool2 { x: usize, arg: Vec<usize> },
    Gap { x: usize },
    SoftmaxXent { z: usize, y: Vec<f64>, probs: Vec<f64> },
    SumN { parts: Vec<usize> },
    SumAll { x: usize },
    Reshape { x: usize },
    CosGaussKernels { mu: usize, k: usize },
    BandEnergies { frames: usize, kernels: usize, conv: Vec<f64> },
}

#[derive(Debug, Clone, Copy)]
struct ChannelExtrema {
    argmin: usize,
    argmax: usize,
    min: f64,
    max: f64,
}

/// Wengert-list tape: one per training batch.
pub struct Tape {
    vals: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    needs: Vec<bool>,
    ops: Vec<OpRecord>,
    params: Vec<(String, usize)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            vals: Vec::new(),
            grads: Vec::new(),
            needs: Vec::new(),
            ops: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, needs: bool) -> usize {
        self.vals.push(value);
        self.grads.push(None);
        self.needs.push(needs);
        self.vals.len() - 1
    }

    fn record(&mut self, op: Op, value: Tensor, needs: bool) -> BufId {
        let out = self.push(value, needs);
        if needs {
            self.ops.push(OpRecord { op, out });
        }
        BufId(out)
    }

    /// Leaf with no gradient (inputs, precomputed features, constants).
    pub fn constant(&mut self, value: Tensor) -> BufId {
        BufId(self.push(value, false))
    }

    /// Generic leaf; `needs` controls gradient tracking.
    pub fn leaf(&mut self, value: Tensor, needs: bool) -> BufId {
        BufId(self.push(value, needs))
    }

    /// Named trainable leaf; names must be unique per tape.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<BufId> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let id = self.push(value, true);
        self.params.push((name.to_string(), id));
        Ok(BufId(id))
    }

    pub fn value(&self, id: BufId) -> &Tensor {
        &self.vals[id.0]
    }

    pub fn scalar(&self, id: BufId) -> f64 {
        debug_assert_eq!(self.vals[id.0].numel(), 1);
        self.vals[id.0].data()[0]
    }

    pub fn grad(&self, id: BufId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradients of all named parameters, zeros where the loss does not
    /// depend on the parameter.
    pub fn param_grads(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|(name, id)| {
                let g = match &self.grads[*id] {
                    Some(t) => t.clone(),
                    None => Tensor::zeros(self.vals[*id].shape()),
                };
                (name.clone(), g)
            })
            .collect()
    }

    fn needs_of(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.needs[i])
    }

    fn shape2(&self, id: BufId, what: &str) -> Result<(usize, usize)> {
        match self.vals[id.0].shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape(format!("{what} must be 2-d, got {other:?}"))),
        }
    }

    fn shape3(&self, id: BufId, what: &str) -> Result<(usize, usize, usize)> {
        match self.vals[id.0].shape() {
            [a, b, c] => Ok((*a, *b, *c)),
            other => Err(Error::Shape(format!("{what} must be 3-d, got {other:?}"))),
        }
    }

    // ---- dense / pointwise ops ----

    pub fn matmul(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let (m, ka) = self.shape2(a, "matmul lhs")?;
        let (kb, n) = self.shape2(b, "matmul rhs")?;
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul inner dims differ: {ka} vs {kb}"
            )));
        }
        let bt = transpose_data(&self.vals[b.0]);
        let av = &self.vals[a.0];
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let arow = av.row(i);
            for j in 0..n {
                let v = dot(arow, &bt.data()[j * ka..(j + 1) * ka]);
                out.set2(i, j, v);
            }
        }
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::Matmul { a: a.0, b: b.0 }, out, needs))
    }

    pub fn transpose(&mut self, a: BufId) -> Result<BufId> {
        self.shape2(a, "transpose")?;
        let out = transpose_data(&self.vals[a.0]);
        let needs = self.needs[a.0];
        Ok(self.record(Op::Transpose { a: a.0 }, out, needs))
    }

    pub fn add(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        self.same_shape(a, b, "add")?;
        let data = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::Add { a: a.0, b: b.0 }, out, needs))
    }

    pub fn mul(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        self.same_shape(a, b, "mul")?;
        let data = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::Mul { a: a.0, b: b.0 }, out, needs))
    }

    fn same_shape(&self, a: BufId, b: BufId, what: &str) -> Result<()> {
        if self.vals[a.0].shape() != self.vals[b.0].shape() {
            return Err(Error::Shape(format!(
                "{what}: shapes differ, {:?} vs {:?}",
                self.vals[a.0].shape(),
                self.vals[b.0].shape()
            )));
        }
        Ok(())
    }

    pub fn square(&mut self, a: BufId) -> Result<BufId> {
        let data = self.vals[a.0].data().iter().map(|&x| x * x).collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs[a.0];
        Ok(self.record(Op::Square { a: a.0 }, out, needs))
    }

    pub fn scale_const(&mut self, a: BufId, c: f64) -> Result<BufId> {
        let data = self.vals[a.0].data().iter().map(|&x| c * x).collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs[a.0];
        Ok(self.record(Op::ScaleConst { a: a.0, c }, out, needs))
    }

    /// ln(max(x, eps)) elementwise; gradient is 1/x above the floor, 0 below.
    pub fn log_floor(&mut self, a: BufId, eps: f64) -> Result<BufId> {
        if eps <= 0.0 {
            return Err(Error::InvalidArgument("log floor must be positive".into()));
        }
        let data = self.vals[a.0]
            .data()
            .iter()
            .map(|&x| x.max(eps).ln())
            .collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs[a.0];
        Ok(self.record(Op::LogFloor { a: a.0, eps }, out, needs))
    }

    pub fn sigmoid(&mut self, a: BufId) -> Result<BufId> {
        let data = self.vals[a.0].data().iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs[a.0];
        Ok(self.record(Op::Sigmoid { a: a.0 }, out, needs))
    }

    pub fn relu(&mut self, a: BufId) -> Result<BufId> {
        let data = self.vals[a.0].data().iter().map(|&x| x.max(0.0)).collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs[a.0];
        Ok(self.record(Op::Relu { a: a.0 }, out, needs))
    }

    /// Adds a length-n bias to every row of an [m, n] matrix.
    pub fn row_bias(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let (m, n) = self.shape2(a, "row_bias input")?;
        if self.vals[b.0].shape() != [n] {
            return Err(Error::Shape(format!(
                "row bias must be [{n}], got {:?}",
                self.vals[b.0].shape()
            )));
        }
        let bias = self.vals[b.0].data().to_vec();
        let mut out = self.vals[a.0].clone();
        for i in 0..m {
            for (v, bj) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&bias) {
                *v += bj;
            }
        }
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::RowBias { a: a.0, b: b.0 }, out, needs))
    }

    // ---- relevance-head ops ----

    /// Valid 1-D cross-correlation of every row with every kernel.
    ///
    /// Input [n, w], kernels [ch, kw] → output [n, ch·(w−kw+1)] laid out
    /// channel-major: column ch·L+p holds kernel ch at position p.
    pub fn conv_row_bank(&mut self, a: BufId, k: BufId) -> Result<BufId> {
        let (n, w) = self.shape2(a, "conv_row_bank input")?;
        let (ch, kw) = self.shape2(k, "conv_row_bank kernels")?;
        if kw > w {
            return Err(Error::Shape(format!(
                "kernel width {kw} exceeds row width {w}"
            )));
        }
        let l = w - kw + 1;
        let mut out = Tensor::zeros(&[n, ch * l]);
        {
            let av = &self.vals[a.0];
            let kv = &self.vals[k.0];
            let od = out.data_mut();
            for r in 0..n {
                let row = av.row(r);
                for c in 0..ch {
                    let kernel = kv.row(c);
                    for p in 0..l {
                        od[r * ch * l + c * l + p] = dot(&row[p..p + kw], kernel);
                    }
                }
            }
        }
        let needs = self.needs_of(&[a.0, k.0]);
        Ok(self.record(Op::ConvRowBank { a: a.0, k: k.0 }, out, needs))
    }

    /// Adds bias[ch] to the ch-th contiguous column block of each row.
    pub fn channel_block_bias(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let (n, cols) = self.shape2(a, "channel_block_bias input")?;
        let ch = self.vals[b.0].numel();
        if ch == 0 || cols % ch != 0 {
            return Err(Error::Shape(format!(
                "column count {cols} not divisible by {ch} channels"
            )));
        }
        let l = cols / ch;
        let bias = self.vals[b.0].data().to_vec();
        let mut out = self.vals[a.0].clone();
        for r in 0..n {
            for (c, bc) in bias.iter().enumerate() {
                for v in &mut out.data_mut()[r * cols + c * l..r * cols + (c + 1) * l] {
                    *v += bc;
                }
            }
        }
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::ChannelBlockBias { a: a.0, b: b.0 }, out, needs))
    }

    /// Edge-replicated temporal context: [f, t] → [f·t, 2c+1], row k·t+j
    /// holding the window of cell (k, j).
    pub fn context_windows(&mut self, x: BufId, c: usize) -> Result<BufId> {
        let (f, t) = self.shape2(x, "context_windows input")?;
        let ctx = 2 * c + 1;
        let mut out = Tensor::zeros(&[f * t, ctx]);
        {
            let xv = &self.vals[x.0];
            let od = out.data_mut();
            for k in 0..f {
                let row = xv.row(k);
                for j in 0..t {
                    crate::relevance::context_row_into(
                        row,
                        j,
                        c,
                        &mut od[(k * t + j) * ctx..(k * t + j + 1) * ctx],
                    );
                }
            }
        }
        let needs = self.needs[x.0];
        Ok(self.record(Op::ContextWindows { x: x.0, c }, out, needs))
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn gather_rows(&mut self, x: BufId, rows: &[usize]) -> Result<BufId> {
        let (f, t) = self.shape2(x, "gather_rows input")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= f) {
            return Err(Error::Shape(format!("row {bad} out of range for F={f}")));
        }
        let mut data = Vec::with_capacity(rows.len() * t);
        for &r in rows {
            data.extend_from_slice(self.vals[x.0].row(r));
        }
        let out = Tensor::from_vec(&[rows.len(), t], data)?;
        let needs = self.needs[x.0];
        Ok(self.record(
            Op::GatherRows {
                x: x.0,
                rows: rows.to_vec(),
            },
            out,
            needs,
        ))
    }

    /// Builds an [F, t] matrix row by row from segment rows.
    ///
    /// `layout[g] = (part, row)` names the source of global row g.
    pub fn assemble_rows(&mut self, parts: &[BufId], layout: &[(usize, usize)]) -> Result<BufId> {
        if parts.is_empty() {
            return Err(Error::Shape("assemble_rows needs at least one part".into()));
        }
        let t = self.shape2(parts[0], "assemble_rows part")?.1;
        for &p in parts {
            if self.shape2(p, "assemble_rows part")?.1 != t {
                return Err(Error::Shape("assemble_rows parts differ in T".into()));
            }
        }
        let mut data = Vec::with_capacity(layout.len() * t);
        for &(part, row) in layout {
            if part >= parts.len() || row >= self.vals[parts[part].0].shape()[0] {
                return Err(Error::Shape(format!(
                    "layout entry ({part}, {row}) out of range"
                )));
            }
            data.extend_from_slice(self.vals[parts[part].0].row(row));
        }
        let out = Tensor::from_vec(&[layout.len(), t], data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs_of(&ids);
        Ok(self.record(
            Op::AssembleRows {
                parts: ids,
                layout: layout.to_vec(),
            },
            out,
            needs,
        ))
    }

    // ---- feature ops ----

    /// Regression deltas along time with edge replication (see
    /// `frontend::delta_features`).
    pub fn delta_time(&mut self, x: BufId, window: usize) -> Result<BufId> {
        let (f, t) = self.shape2(x, "delta_time input")?;
        if window == 0 || t <= 2 * window {
            return Err(Error::InvalidArgument(format!(
                "delta window {window} needs T > {}, got {t}",
                2 * window
            )));
        }
        let mut out = Tensor::zeros(&[f, t]);
        frontend::delta_into(self.vals[x.0].data(), f, t, window, out.data_mut());
        let needs = self.needs[x.0];
        Ok(self.record(Op::DeltaTime { x: x.0, window }, out, needs))
    }

    /// Stacks equal-shape [f, t] planes into a [n, f, t] tensor.
    pub fn stack_channels(&mut self, parts: &[BufId]) -> Result<BufId> {
        if parts.is_empty() {
            return Err(Error::Shape("stack_channels needs parts".into()));
        }
        let (f, t) = self.shape2(parts[0], "stack_channels part")?;
        let mut data = Vec::with_capacity(parts.len() * f * t);
        for &p in parts {
            self.same_shape(parts[0], p, "stack_channels")?;
            data.extend_from_slice(self.vals[p.0].data());
        }
        let out = Tensor::from_vec(&[parts.len(), f, t], data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs_of(&ids);
        Ok(self.record(Op::StackChannels { parts: ids }, out, needs))
    }

    /// SpecAug fill: masked (f, t) cells of every channel take that channel's
    /// global mean (computed from the pre-mask values).
    pub fn mask_fill_mean(&mut self, x: BufId, mask: &[bool]) -> Result<BufId> {
        let (ch, f, t) = self.shape3(x, "mask_fill_mean input")?;
        if mask.len() != f * t {
            return Err(Error::Shape(format!(
                "mask len {} vs plane size {}",
                mask.len(),
                f * t
            )));
        }
        let per = f * t;
        let mut out = self.vals[x.0].clone();
        for c in 0..ch {
            let plane = &mut out.data_mut()[c * per..(c + 1) * per];
            let mean = plane.iter().sum::<f64>() / per as f64;
            for (v, &m) in plane.iter_mut().zip(mask) {
                if m {
                    *v = mean;
                }
            }
        }
        let needs = self.needs[x.0];
        Ok(self.record(
            Op::MaskFillMean {
                x: x.0,
                mask: mask.to_vec(),
            },
            out,
            needs,
        ))
    }

    /// Keeps `crop` consecutive time columns per row, starting at
    /// `starts[row]` (one entry per frequency row, shared across channels).
    pub fn crop_cols(&mut self, x: BufId, starts: &[usize], crop: usize) -> Result<BufId> {
        let (ch, f, t) = self.shape3(x, "crop_cols input")?;
        if starts.len() != f {
            return Err(Error::Shape(format!(
                "need {f} crop starts, got {}",
                starts.len()
            )));
        }
        if let Some(&bad) = starts.iter().find(|&&s| s + crop > t) {
            return Err(Error::InvalidArgument(format!(
                "crop [{bad}, {}) exceeds T={t}",
                bad + crop
            )));
        }
        let mut data = Vec::with_capacity(ch * f * crop);
        for c in 0..ch {
            for (row, &s) in starts.iter().enumerate() {
                let base = (c * f + row) * t + s;
                data.extend_from_slice(&self.vals[x.0].data()[base..base + crop]);
            }
        }
        let out = Tensor::from_vec(&[ch, f, crop], data)?;
        let needs = self.needs[x.0];
        Ok(self.record(
            Op::CropCols {
                x: x.0,
                starts: starts.to_vec(),
                crop,
            },
            out,
            needs,
        ))
    }

    /// λ·a + (1−λ)·b (mixup).
    pub fn lerp(&mut self, a: BufId, b: BufId, lambda: f64) -> Result<BufId> {
        self.same_shape(a, b, "lerp")?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "lerp λ must lie in [0,1], got {lambda}"
            )));
        }
        let data = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        let out = Tensor::from_vec(self.vals[a.0].shape(), data)?;
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.record(Op::Lerp { a: a.0, b: b.0, lambda }, out, needs))
    }

    /// Per-channel min-max scaling to [0,1]; constant channels map to zeros.
    ///
    /// Differentiated through the min/max picks, so the scaled minimum and
    /// maximum have exact zero sensitivity, matching finite differences.
    pub fn minmax_scale(&mut self, x: BufId) -> Result<BufId> {
        let (ch, f, t) = self.shape3(x, "minmax_scale input")?;
        let per = f * t;
        let mut out = self.vals[x.0].clone();
        let mut saved = Vec::with_capacity(ch);
        for c in 0..ch {
            let plane = &mut out.data_mut()[c * per..(c + 1) * per];
            let mut argmin = 0;
            let mut argmax = 0;
            for (i, &v) in plane.iter().enumerate() {
                if v < plane[argmin] {
                    argmin = i;
                }
                if v > plane[argmax] {
                    argmax = i;
                }
            }
            let (mn, mx) = (plane[argmin], plane[argmax]);
            if mx > mn {
                let d = mx - mn;
                for v in plane.iter_mut() {
                    *v = (*v - mn) / d;
                }
            } else {
                plane.fill(0.0);
            }
            saved.push(ChannelExtrema {
                argmin,
                argmax,
                min: mn,
                max: mx,
            });
        }
        let needs = self.needs[x.0];
        Ok(self.record(Op::MinMaxScale { x: x.0, saved }, out, needs))
    }

    // ---- classifier ops ----

    /// Valid 2-D cross-correlation: x [Cin, H, W] with kernels
    /// [Cout, Cin, kh, kw] → [Cout, H−kh+1, W−kw+1].
    pub fn conv2d(&mut self, x: BufId, k: BufId) -> Result<BufId> {
        let (cin, h, w) = self.shape3(x, "conv2d input")?;
        let (cout, kcin, kh, kw) = match self.vals[k.0].shape() {
            [a, b, c, d] => (*a, *b, *c, *d),
            other => {
                return Err(Error::Shape(format!(
                    "conv2d kernels must be 4-d, got {other:?}"
                )))
            }
        };
        if kcin != cin || kh > h || kw > w {
            return Err(Error::Shape(format!(
                "conv2d shape mismatch: x [{cin},{h},{w}] vs k [{cout},{kcin},{kh},{kw}]"
            )));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut out = Tensor::zeros(&[cout, oh, ow]);
        {
            let xv = self.vals[x.0].data();
            let kv = self.vals[k.0].data();
            let od = out.data_mut();
            for co in 0..cout {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for di in 0..kh {
                                let xrow = (ci * h + i + di) * w + j;
                                let krow = ((co * cin + ci) * kh + di) * kw;
                                acc += dot(&xv[xrow..xrow + kw], &kv[krow..krow + kw]);
                            }
                        }
                        od[(co * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        let needs = self.needs_of(&[x.0, k.0]);
        Ok(self.record(Op::Conv2d { x: x.0, k: k.0 }, out, needs))
    }

    /// Per-channel additive bias on a [C, H, W] tensor.
    pub fn conv_bias(&mut self, x: BufId, b: BufId) -> Result<BufId> {
        let (ch, h, w) = self.shape3(x, "conv_bias input")?;
        if self.vals[b.0].shape() != [ch] {
            return Err(Error::Shape(format!(
                "conv bias must be [{ch}], got {:?}",
                self.vals[b.0].shape()
            )));
        }
        let bias = self.vals[b.0].data().to_vec();
        let mut out = self.vals[x.0].clone();
        for (c, bc) in bias.iter().enumerate() {
            for v in &mut out.data_mut()[c * h * w..(c + 1) * h * w] {
                *v += bc;
            }
        }
        let needs = self.needs_of(&[x.0, b.0]);
        Ok(self.record(Op::ConvBias { x: x.0, b: b.0 }, out, needs))
    }

    /// 2×2 max pooling with stride 2 (floor semantics on odd extents).
    pub fn maxpool2(&mut self, x: BufId) -> Result<BufId> {
        let (ch, h, w) = self.shape3(x, "maxpool2 input")?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Shape(format!(
                "maxpool2 needs H, W >= 2, got [{ch},{h},{w}]"
            )));
        }
        let mut out = Tensor::zeros(&[ch, oh, ow]);
        let mut arg = vec![0usize; ch * oh * ow];
        {
            let xv = self.vals[x.0].data();
            let od = out.data_mut();
            for c in 0..ch {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best_idx = (c * h + 2 * i) * w + 2 * j;
                        let mut best = xv[best_idx];
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (c * h + 2 * i + di) * w + 2 * j + dj;
                            if xv[idx] > best {
                                best = xv[idx];
                                best_idx = idx;
                            }
                        }
                        od[(c * oh + i) * ow + j] = best;
                        arg[(c * oh + i) * ow + j] = best_idx;
                    }
                }
            }
        }
        let needs = self.needs[x.0];
        Ok(self.record(Op::MaxPool2 { x: x.0, arg }, out, needs))
    }

    /// Global average pooling: [C, H, W] → [1, C] row vector.
    pub fn gap(&mut self, x: BufId) -> Result<BufId> {
        let (ch, h, w) = self.shape3(x, "gap input")?;
        let per = h * w;
        let data = (0..ch)
            .map(|c| self.vals[x.0].data()[c * per..(c + 1) * per].iter().sum::<f64>() / per as f64)
            .collect();
        let out = Tensor::from_vec(&[1, ch], data)?;
        let needs = self.needs[x.0];
        Ok(self.record(Op::Gap { x: x.0 }, out, needs))
    }

    /// Cross-entropy of softmax(logits) against a soft label, as a [1]
    /// tensor. Uses the log-sum-exp form for stability.
    pub fn softmax_xent(&mut self, logits: BufId, target: &[f64]) -> Result<BufId> {
        let (rows, n) = self.shape2(logits, "softmax_xent logits")?;
        if rows != 1 || target.len() != n {
            return Err(Error::Shape(format!(
                "logits must be [1, {}], got [{rows}, {n}]",
                target.len()
            )));
        }
        let z = self.vals[logits.0].data();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = z.iter().map(|&v| (v - lse).exp()).collect();
        let loss: f64 = target.iter().zip(z).map(|(&y, &v)| y * (lse - v)).sum();
        let out = Tensor::from_vec(&[1], vec![loss])?;
        let needs = self.needs[logits.0];
        Ok(self.record(
            Op::SoftmaxXent {
                z: logits.0,
                y: target.to_vec(),
                probs,
            },
            out,
            needs,
        ))
    }

    /// Elementwise sum of same-shape tensors (batch loss aggregation).
    pub fn sum_n(&mut self, parts: &[BufId]) -> Result<BufId> {
        if parts.is_empty() {
            return Err(Error::Shape("sum_n needs at least one part".into()));
        }
        let mut out = self.vals[parts[0].0].clone();
        for &p in &parts[1..] {
            self.same_shape(parts[0], p, "sum_n")?;
            for (o, v) in out.data_mut().iter_mut().zip(self.vals[p.0].data()) {
                *o += v;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs_of(&ids);
        Ok(self.record(Op::SumN { parts: ids }, out, needs))
    }

    /// Sum of all entries, as a [1] tensor.
    pub fn sum_all(&mut self, x: BufId) -> Result<BufId> {
        let s: f64 = self.vals[x.0].data().iter().sum();
        let out = Tensor::from_vec(&[1], vec![s])?;
        let needs = self.needs[x.0];
        Ok(self.record(Op::SumAll { x: x.0 }, out, needs))
    }

    pub fn reshape(&mut self, x: BufId, shape: &[usize]) -> Result<BufId> {
        if shape.iter().product::<usize>() != self.vals[x.0].numel() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {shape:?}",
                self.vals[x.0].shape()
            )));
        }
        let out = Tensor::from_vec(shape, self.vals[x.0].data().to_vec())?;
        let needs = self.needs[x.0];
        Ok(self.record(Op::Reshape { x: x.0 }, out, needs))
    }

    // ---- front-end ops ----

    /// Synthesizes the [F, k] cosine-Gaussian kernel bank from μ, with the
    /// analytic ∂g/∂μ backward.
    pub fn cosgauss_kernels(&mut self, mu: BufId, k: usize) -> Result<BufId> {
        let f = match self.vals[mu.0].shape() {
            [f] => *f,
            other => return Err(Error::Shape(format!("mu must be 1-d, got {other:?}"))),
        };
        if k < 3 || k % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel length must be odd and >= 3, got {k}"
            )));
        }
        for &m in self.vals[mu.0].data() {
            if !(m > 0.0 && m <= frontend::MU_MAX) {
                return Err(Error::InvalidArgument(format!(
                    "center frequency must lie in (0, 0.5], got {m}"
                )));
            }
        }
        let mut out = Tensor::zeros(&[f, k]);
        for i in 0..f {
            let mu_i = self.vals[mu.0].data()[i];
            frontend::cosgauss_into(mu_i, &mut out.data_mut()[i * k..(i + 1) * k]);
        }
        let needs = self.needs[mu.0];
        Ok(self.record(Op::CosGaussKernels { mu: mu.0, k }, out, needs))
    }

    /// Fused per-band energy: valid 1-D convolution of every frame with
    /// every kernel, then mean of squares. frames [T, S] × kernels [F, k]
    /// → [F, T]. The raw convolution outputs are saved when a gradient will
    /// be required.
    pub fn band_energies(&mut self, frames: BufId, kernels: BufId) -> Result<BufId> {
        let (t, s) = self.shape2(frames, "band_energies frames")?;
        let (f, k) = self.shape2(kernels, "band_energies kernels")?;
        if k > s {
            return Err(Error::InvalidArgument(format!(
                "kernel length k={k} exceeds frame length S={s}"
            )));
        }
        let needs = self.needs_of(&[frames.0, kernels.0]);
        let l = s - k + 1;
        let mut conv = if needs { vec![0.0; f * t * l] } else { Vec::new() };
        let mut energies = vec![0.0; f * t];
        frontend::band_energies_into(
            self.vals[frames.0].data(),
            t,
            s,
            self.vals[kernels.0].data(),
            f,
            k,
            &mut energies,
            if needs { Some(&mut conv) } else { None },
        );
        let out = Tensor::from_vec(&[f, t], energies)?;
        Ok(self.record(
            Op::BandEnergies {
                frames: frames.0,
                kernels: kernels.0,
                conv,
            },
            out,
            needs,
        ))
    }

    // ---- backward ----

    /// Accumulates gradients of `loss` (a [1] tensor) into every tracked
    /// buffer, walking the tape in reverse with a fixed accumulation order.
    pub fn backward(&mut self, loss: BufId) -> Result<()> {
        if self.vals[loss.0].numel() != 1 {
            return Err(Error::Shape(format!(
                "loss must be a single value, got {:?}",
                self.vals[loss.0].shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::filled(&[1], 1.0));
        let vals = &self.vals;
        let needs = &self.needs;
        let grads = &mut self.grads;
        for rec in self.ops.iter().rev() {
            let Some(g) = grads[rec.out].take() else {
                continue;
            };
            step_backward(&rec.op, &g, vals, needs, grads);
            grads[rec.out] = Some(g);
        }
        Ok(())
    }
}

fn transpose_data(t: &Tensor) -> Tensor {
    let (m, n) = (t.shape()[0], t.shape()[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.set2(j, i, t.at2(i, j));
        }
    }
    out
}

/// Gradient buffer for `id`, created on first touch; None when untracked.
fn slot<'a>(
    grads: &'a mut [Option<Tensor>],
    needs: &[bool],
    vals: &[Tensor],
    id: usize,
) -> Option<&'a mut [f64]> {
    if !needs[id] {
        return None;
    }
    if grads[id].is_none() {
        grads[id] = Some(Tensor::zeros(vals[id].shape()));
    }
    grads[id].as_mut().map(|t| t.data_mut())
}

fn step_backward(
    op: &Op,
    g: &Tensor,
    vals: &[Tensor],
    needs: &[bool],
    grads: &mut [Option<Tensor>],
) {
    match op {
        Op::Matmul { a, b } => {
            let (m, k) = (vals[*a].shape()[0], vals[*a].shape()[1]);
            let n = vals[*b].shape()[1];
            if let Some(da) = slot(grads, needs, vals, *a) {
                // dA = G · Bᵀ
                let bv = vals[*b].data();
                for i in 0..m {
                    for kk in 0..k {
                        let brow = &bv[kk * n..(kk + 1) * n];
                        da[i * k + kk] += dot(g.row(i), brow);
                    }
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                // dB = Aᵀ · G
                let av = vals[*a].data();
                for i in 0..m {
                    let grow = g.row(i);
                    for kk in 0..k {
                        let aik = av[i * k + kk];
                        if aik != 0.0 {
                            for j in 0..n {
                                db[kk * n + j] += aik * grow[j];
                            }
                        }
                    }
                }
            }
        }
        Op::Transpose { a } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                let (n, m) = (g.shape()[0], g.shape()[1]);
                for i in 0..n {
                    for j in 0..m {
                        da[j * n + i] += g.at2(i, j);
                    }
                }
            }
        }
        Op::Add { a, b } => {
            for id in [a, b] {
                if let Some(d) = slot(grads, needs, vals, *id) {
                    for (s, gv) in d.iter_mut().zip(g.data()) {
                        *s += gv;
                    }
                }
            }
        }
        Op::Mul { a, b } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for ((s, gv), bv) in da.iter_mut().zip(g.data()).zip(vals[*b].data()) {
                    *s += gv * bv;
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                for ((s, gv), av) in db.iter_mut().zip(g.data()).zip(vals[*a].data()) {
                    *s += gv * av;
                }
            }
        }
        Op::Square { a } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for ((s, gv), av) in da.iter_mut().zip(g.data()).zip(vals[*a].data()) {
                    *s += 2.0 * av * gv;
                }
            }
        }
        Op::ScaleConst { a, c } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for (s, gv) in da.iter_mut().zip(g.data()) {
                    *s += c * gv;
                }
            }
        }
        Op::LogFloor { a, eps } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for ((s, gv), av) in da.iter_mut().zip(g.data()).zip(vals[*a].data()) {
                    if *av >= *eps {
                        *s += gv / av;
                    }
                }
            }
        }
        Op::Sigmoid { a } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for ((s, gv), av) in da.iter_mut().zip(g.data()).zip(vals[*a].data()) {
                    let y = sigmoid(*av);
                    *s += gv * y * (1.0 - y);
                }
            }
        }
        Op::Relu { a } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for ((s, gv), av) in da.iter_mut().zip(g.data()).zip(vals[*a].data()) {
                    if *av > 0.0 {
                        *s += gv;
                    }
                }
            }
        }
        Op::RowBias { a, b } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for (s, gv) in da.iter_mut().zip(g.data()) {
                    *s += gv;
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                let n = db.len();
                for (i, gv) in g.data().iter().enumerate() {
                    db[i % n] += gv;
                }
            }
        }
        Op::ConvRowBank { a, k } => {
            let (n, w) = (vals[*a].shape()[0], vals[*a].shape()[1]);
            let (ch, kw) = (vals[*k].shape()[0], vals[*k].shape()[1]);
            let l = w - kw + 1;
            if let Some(da) = slot(grads, needs, vals, *a) {
                let kv = vals[*k].data();
                for r in 0..n {
                    for c in 0..ch {
                        for p in 0..l {
                            let gv = g.data()[r * ch * l + c * l + p];
                            if gv != 0.0 {
                                for q in 0..kw {
                                    da[r * w + p + q] += gv * kv[c * kw + q];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(dk) = slot(grads, needs, vals, *k) {
                let av = vals[*a].data();
                for r in 0..n {
                    for c in 0..ch {
                        for p in 0..l {
                            let gv = g.data()[r * ch * l + c * l + p];
                            if gv != 0.0 {
                                for q in 0..kw {
                                    dk[c * kw + q] += gv * av[r * w + p + q];
                                }
                            }
                        }
                    }
                }
            }
        }
        Op::ChannelBlockBias { a, b } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for (s, gv) in da.iter_mut().zip(g.data()) {
                    *s += gv;
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                let ch = db.len();
                let cols = vals[*a].shape()[1];
                let l = cols / ch;
                for (i, gv) in g.data().iter().enumerate() {
                    db[(i % cols) / l] += gv;
                }
            }
        }
        Op::ContextWindows { x, c } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let (f, t) = (vals[*x].shape()[0], vals[*x].shape()[1]);
                let ctx = 2 * c + 1;
                for k in 0..f {
                    for j in 0..t {
                        let grow = &g.data()[(k * t + j) * ctx..(k * t + j + 1) * ctx];
                        for (q, gv) in grow.iter().enumerate() {
                            let idx =
                                (j as isize + q as isize - *c as isize).clamp(0, t as isize - 1);
                            dx[k * t + idx as usize] += gv;
                        }
                    }
                }
            }
        }
        Op::GatherRows { x, rows } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let t = vals[*x].shape()[1];
                for (i, &r) in rows.iter().enumerate() {
                    for (s, gv) in dx[r * t..(r + 1) * t].iter_mut().zip(g.row(i)) {
                        *s += gv;
                    }
                }
            }
        }
        Op::AssembleRows { parts, layout } => {
            for (global, &(part, row)) in layout.iter().enumerate() {
                let id = parts[part];
                if let Some(dp) = slot(grads, needs, vals, id) {
                    let t = vals[id].shape()[1];
                    for (s, gv) in dp[row * t..(row + 1) * t].iter_mut().zip(g.row(global)) {
                        *s += gv;
                    }
                }
            }
        }
        Op::DeltaTime { x, window } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let (f, t) = (vals[*x].shape()[0], vals[*x].shape()[1]);
                let denom: f64 = 2.0 * (1..=*window).map(|w| (w * w) as f64).sum::<f64>();
                for row in 0..f {
                    for j in 0..t {
                        let gv = g.data()[row * t + j] / denom;
                        if gv != 0.0 {
                            for w in 1..=*window {
                                let fwd = (j + w).min(t - 1);
                                let bwd = j.saturating_sub(w);
                                dx[row * t + fwd] += w as f64 * gv;
                                dx[row * t + bwd] -= w as f64 * gv;
                            }
                        }
                    }
                }
            }
        }
        Op::StackChannels { parts } => {
            let mut offset = 0;
            for &p in parts {
                let numel = vals[p].numel();
                if let Some(dp) = slot(grads, needs, vals, p) {
                    for (s, gv) in dp.iter_mut().zip(&g.data()[offset..offset + numel]) {
                        *s += gv;
                    }
                }
                offset += numel;
            }
        }
        Op::MaskFillMean { x, mask } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let per = mask.len();
                let ch = vals[*x].shape()[0];
                for c in 0..ch {
                    let gp = &g.data()[c * per..(c + 1) * per];
                    let masked_sum: f64 = gp
                        .iter()
                        .zip(mask)
                        .filter(|&(_, &m)| m)
                        .map(|(gv, _)| *gv)
                        .sum();
                    let spread = masked_sum / per as f64;
                    let dp = &mut dx[c * per..(c + 1) * per];
                    for ((s, gv), &m) in dp.iter_mut().zip(gp).zip(mask) {
                        if !m {
                            *s += gv;
                        }
                        *s += spread;
                    }
                }
            }
        }
        Op::CropCols { x, starts, crop } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let (ch, f, t) = (
                    vals[*x].shape()[0],
                    vals[*x].shape()[1],
                    vals[*x].shape()[2],
                );
                for c in 0..ch {
                    for (row, &s0) in starts.iter().enumerate() {
                        let src = &g.data()[(c * f + row) * crop..(c * f + row + 1) * crop];
                        let dst = &mut dx[(c * f + row) * t + s0..(c * f + row) * t + s0 + crop];
                        for (s, gv) in dst.iter_mut().zip(src) {
                            *s += gv;
                        }
                    }
                }
            }
        }
        Op::Lerp { a, b, lambda } => {
            if let Some(da) = slot(grads, needs, vals, *a) {
                for (s, gv) in da.iter_mut().zip(g.data()) {
                    *s += lambda * gv;
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                for (s, gv) in db.iter_mut().zip(g.data()) {
                    *s += (1.0 - lambda) * gv;
                }
            }
        }
        Op::MinMaxScale { x, saved } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let per = vals[*x].numel() / saved.len();
                let xv = vals[*x].data();
                for (c, ex) in saved.iter().enumerate() {
                    let d = ex.max - ex.min;
                    if d <= 0.0 {
                        continue;
                    }
                    let gp = &g.data()[c * per..(c + 1) * per];
                    let xp = &xv[c * per..(c + 1) * per];
                    let dp = &mut dx[c * per..(c + 1) * per];
                    let mut dot_min = 0.0;
                    let mut dot_max = 0.0;
                    for (gv, xi) in gp.iter().zip(xp) {
                        dot_min += gv * (xi - ex.max);
                        dot_max += gv * (xi - ex.min);
                    }
                    for (s, gv) in dp.iter_mut().zip(gp) {
                        *s += gv / d;
                    }
                    dp[ex.argmin] += dot_min / (d * d);
                    dp[ex.argmax] -= dot_max / (d * d);
                }
            }
        }
        Op::Conv2d { x, k } => {
            let (cin, h, w) = (
                vals[*x].shape()[0],
                vals[*x].shape()[1],
                vals[*x].shape()[2],
            );
            let (cout, kh, kw) = (vals[*k].shape()[0], vals[*k].shape()[2], vals[*k].shape()[3]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let kv = vals[*k].data();
                for co in 0..cout {
                    for i in 0..oh {
                        for j in 0..ow {
                            let gv = g.data()[(co * oh + i) * ow + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for ci in 0..cin {
                                for di in 0..kh {
                                    let krow = ((co * cin + ci) * kh + di) * kw;
                                    let xrow = (ci * h + i + di) * w + j;
                                    for dj in 0..kw {
                                        dx[xrow + dj] += gv * kv[krow + dj];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(dk) = slot(grads, needs, vals, *k) {
                let xv = vals[*x].data();
                for co in 0..cout {
                    for ci in 0..cin {
                        for di in 0..kh {
                            for dj in 0..kw {
                                let mut acc = 0.0;
                                for i in 0..oh {
                                    let grow = &g.data()[(co * oh + i) * ow..(co * oh + i + 1) * ow];
                                    let xrow = (ci * h + i + di) * w + dj;
                                    acc += dot(grow, &xv[xrow..xrow + ow]);
                                }
                                dk[((co * cin + ci) * kh + di) * kw + dj] += acc;
                            }
                        }
                    }
                }
            }
        }
        Op::ConvBias { x, b } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                for (s, gv) in dx.iter_mut().zip(g.data()) {
                    *s += gv;
                }
            }
            if let Some(db) = slot(grads, needs, vals, *b) {
                let per = vals[*x].numel() / db.len();
                for (c, s) in db.iter_mut().enumerate() {
                    *s += g.data()[c * per..(c + 1) * per].iter().sum::<f64>();
                }
            }
        }
        Op::MaxPool2 { x, arg } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                for (gv, &idx) in g.data().iter().zip(arg) {
                    dx[idx] += gv;
                }
            }
        }
        Op::Gap { x } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let ch = g.numel();
                let per = vals[*x].numel() / ch;
                for c in 0..ch {
                    let gv = g.data()[c] / per as f64;
                    for s in &mut dx[c * per..(c + 1) * per] {
                        *s += gv;
                    }
                }
            }
        }
        Op::SoftmaxXent { z, y, probs } => {
            if let Some(dz) = slot(grads, needs, vals, *z) {
                let g0 = g.data()[0];
                let sy: f64 = y.iter().sum();
                for ((s, &p), &yi) in dz.iter_mut().zip(probs).zip(y) {
                    *s += g0 * (p * sy - yi);
                }
            }
        }
        Op::SumN { parts } => {
            for &p in parts {
                if let Some(dp) = slot(grads, needs, vals, p) {
                    for (s, gv) in dp.iter_mut().zip(g.data()) {
                        *s += gv;
                    }
                }
            }
        }
        Op::SumAll { x } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                let g0 = g.data()[0];
                for s in dx.iter_mut() {
                    *s += g0;
                }
            }
        }
        Op::Reshape { x } => {
            if let Some(dx) = slot(grads, needs, vals, *x) {
                for (s, gv) in dx.iter_mut().zip(g.data()) {
                    *s += gv;
                }
            }
        }
        Op::CosGaussKernels { mu, k } => {
            if let Some(dmu) = slot(grads, needs, vals, *mu) {
                let mut dgdmu = vec![0.0; *k];
                for (i, s) in dmu.iter_mut().enumerate() {
                    frontend::cosgauss_grad_into(vals[*mu].data()[i], &mut dgdmu);
                    *s += dot(g.row(i), &dgdmu);
                }
            }
        }
        Op::BandEnergies {
            frames,
            kernels,
            conv,
        } => {
            let (t, s) = (vals[*frames].shape()[0], vals[*frames].shape()[1]);
            let (f, k) = (vals[*kernels].shape()[0], vals[*kernels].shape()[1]);
            let l = s - k + 1;
            let scale = 2.0 / l as f64;
            if let Some(dk) = slot(grads, needs, vals, *kernels) {
                let fv = vals[*frames].data();
                for i in 0..f {
                    for tt in 0..t {
                        let gv = g.data()[i * t + tt] * scale;
                        if gv == 0.0 {
                            continue;
                        }
                        let crow = &conv[(i * t + tt) * l..(i * t + tt + 1) * l];
                        let frame = &fv[tt * s..(tt + 1) * s];
                        for q in 0..k {
                            dk[i * k + q] += gv * dot(crow, &frame[q..q + l]);
                        }
                    }
                }
            }
            if let Some(df) = slot(grads, needs, vals, *frames) {
                let kv = vals[*kernels].data();
                for i in 0..f {
                    let kernel = &kv[i * k..(i + 1) * k];
                    for tt in 0..t {
                        let gv = g.data()[i * t + tt] * scale;
                        if gv == 0.0 {
                            continue;
                        }
                        let crow = &conv[(i * t + tt) * l..(i * t + tt + 1) * l];
                        for (p, cv) in crow.iter().enumerate() {
                            let c = gv * cv;
                            for (q, kq) in kernel.iter().enumerate() {
                                df[tt * s + p + q] += c * kq;
                            }
                        }
                    }
                }
            }
        }
    }
}
