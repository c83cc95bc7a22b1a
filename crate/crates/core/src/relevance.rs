//! Multi-head relevance weighting over frequency-split representations.
//!
//! Each head turns a per-cell temporal context vector into a soft mask
//! `W_{k,j} = σ(Ω₂·σ(Ω₁·y_{k,j} + b₁) + b₂)` shared across all cells of its
//! segment, applies it multiplicatively (optionally with a skip connection),
//! and the segments are spliced back into the full-band representation.

use crate::error::{Error, Result};
use crate::tensor::{dot, sigmoid, Tensor};

/// How the F bands are partitioned across heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitScheme {
    /// Consecutive row blocks with explicit sizes, e.g. [40, 40].
    Contiguous(Vec<usize>),
    /// Head 1 takes even-indexed rows (0, 2, …), head 2 odd-indexed rows.
    EvenOdd,
    /// One head per band; no weight sharing across bands.
    PerBand,
}

impl SplitScheme {
    /// Parses the textual form used in config files: "40-40", "even-odd",
    /// "per-band".
    pub fn parse(s: &str) -> Result<SplitScheme> {
        match s.trim() {
            "even-odd" => Ok(SplitScheme::EvenOdd),
            "per-band" => Ok(SplitScheme::PerBand),
            sizes => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    sizes.split('-').map(|p| p.trim().parse::<usize>()).collect();
                match parsed {
                    Ok(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => {
                        Ok(SplitScheme::Contiguous(v))
                    }
                    _ => Err(Error::Config(format!(
                        "invalid split scheme {s:?}; expected sizes like \"40-40\", \
                         \"even-odd\", or \"per-band\""
                    ))),
                }
            }
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            SplitScheme::Contiguous(sizes) => sizes
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("-"),
            SplitScheme::EvenOdd => "even-odd".into(),
            SplitScheme::PerBand => "per-band".into(),
        }
    }

    /// Global row indices owned by each head; every row appears exactly once.
    pub fn head_rows(&self, f_bands: usize) -> Result<Vec<Vec<usize>>> {
        match self {
            SplitScheme::Contiguous(sizes) => {
                let total: usize = sizes.iter().sum();
                if total != f_bands {
                    return Err(Error::InvalidArgument(format!(
                        "split sizes {sizes:?} sum to {total}, need F={f_bands}"
                    )));
                }
                let mut start = 0;
                Ok(sizes
                    .iter()
                    .map(|&n| {
                        let rows = (start..start + n).collect();
                        start += n;
                        rows
                    })
                    .collect())
            }
            SplitScheme::EvenOdd => {
                if f_bands < 2 {
                    return Err(Error::InvalidArgument(
                        "even-odd split needs at least 2 bands".into(),
                    ));
                }
                Ok(vec![
                    (0..f_bands).step_by(2).collect(),
                    (1..f_bands).step_by(2).collect(),
                ])
            }
            SplitScheme::PerBand => Ok((0..f_bands).map(|i| vec![i]).collect()),
        }
    }

    pub fn head_count(&self, f_bands: usize) -> usize {
        match self {
            SplitScheme::Contiguous(sizes) => sizes.len(),
            SplitScheme::EvenOdd => 2,
            SplitScheme::PerBand => f_bands,
        }
    }
}

/// First-layer architecture of a head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadArch {
    Fc,
    Conv1d,
}

/// Number of kernels in the conv-1d first layer.
pub const CONV_CHANNELS: usize = 8;
/// Kernel width of the conv-1d first layer.
pub const CONV_KERNEL: usize = 3;

/// A two-layer mask generator applied independently at every (band, frame)
/// cell of its segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceHead {
    pub arch: HeadArch,
    /// Context half-width in frames; the input vector has 2c+1 entries.
    pub c: usize,
    /// Fc: [hidden, 2c+1]. Conv1d: [8, 3] kernel bank.
    pub w1: Tensor,
    /// Fc: [hidden]. Conv1d: [8] per-channel bias.
    pub b1: Tensor,
    /// [1, hidden] for Fc, [1, 8·(2c−1)] for Conv1d.
    pub w2: Tensor,
    pub b2: f64,
}

impl RelevanceHead {
    /// Head with all parameters at zero (mask fixpoint 0.5).
    pub fn zeros(arch: HeadArch, c: usize, hidden: usize) -> Result<RelevanceHead> {
        let ctx = 2 * c + 1;
        let head = match arch {
            HeadArch::Fc => {
                if hidden == 0 {
                    return Err(Error::InvalidArgument("hidden width must be > 0".into()));
                }
                RelevanceHead {
                    arch,
                    c,
                    w1: Tensor::zeros(&[hidden, ctx]),
                    b1: Tensor::zeros(&[hidden]),
                    w2: Tensor::zeros(&[1, hidden]),
                    b2: 0.0,
                }
            }
            HeadArch::Conv1d => {
                if ctx < CONV_KERNEL {
                    return Err(Error::InvalidArgument(format!(
                        "conv-1d head needs 2c+1 >= {CONV_KERNEL}, got c={c}"
                    )));
                }
                let flat = CONV_CHANNELS * (ctx - CONV_KERNEL + 1);
                RelevanceHead {
                    arch,
                    c,
                    w1: Tensor::zeros(&[CONV_CHANNELS, CONV_KERNEL]),
                    b1: Tensor::zeros(&[CONV_CHANNELS]),
                    w2: Tensor::zeros(&[1, flat]),
                    b2: 0.0,
                }
            }
        };
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = 2 * self.c + 1;
        let ok = match self.arch {
            HeadArch::Fc => {
                let hidden = self.w1.shape()[0];
                self.w1.shape() == [hidden, ctx]
                    && self.b1.shape() == [hidden]
                    && self.w2.shape() == [1, hidden]
            }
            HeadArch::Conv1d => {
                ctx >= CONV_KERNEL
                    && self.w1.shape() == [CONV_CHANNELS, CONV_KERNEL]
                    && self.b1.shape() == [CONV_CHANNELS]
                    && self.w2.shape() == [1, CONV_CHANNELS * (ctx - CONV_KERNEL + 1)]
            }
        };
        if !ok {
            return Err(Error::Shape(format!(
                "inconsistent head shapes: w1 {:?}, b1 {:?}, w2 {:?}, c={}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.c
            )));
        }
        for t in [&self.w1, &self.b1, &self.w2] {
            t.ensure_finite("head parameters")?;
        }
        if !self.b2.is_finite() {
            return Err(Error::InvalidArgument("b2 is not finite".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.w1.numel() + self.b1.numel() + self.w2.numel() + 1
    }
}

/// Splits an F×T representation into per-head segments (rows copied).
pub fn split_bands(x: &Tensor, scheme: &SplitScheme) -> Result<Vec<Tensor>> {
    let (f_bands, t_frames) = match x.shape() {
        [f, t] => (*f, *t),
        other => return Err(Error::Shape(format!("expected [F,T], got {other:?}"))),
    };
    let rows = scheme.head_rows(f_bands)?;
    rows.iter()
        .map(|head| {
            let mut data = Vec::with_capacity(head.len() * t_frames);
            for &r in head {
                data.extend_from_slice(x.row(r));
            }
            Tensor::from_vec(&[head.len(), t_frames], data)
        })
        .collect()
}

/// Reassembles segments into the F×T layout; exact inverse of `split_bands`.
pub fn splice(segments: &[Tensor], scheme: &SplitScheme, f_bands: usize) -> Result<Tensor> {
    let rows = scheme.head_rows(f_bands)?;
    if rows.len() != segments.len() {
        return Err(Error::Shape(format!(
            "scheme yields {} heads, got {} segments",
            rows.len(),
            segments.len()
        )));
    }
    let t_frames = segments
        .first()
        .map(|s| s.shape()[1])
        .ok_or_else(|| Error::Shape("no segments to splice".into()))?;
    let mut out = Tensor::zeros(&[f_bands, t_frames]);
    for (head, seg) in rows.iter().zip(segments) {
        if seg.shape() != [head.len(), t_frames] {
            return Err(Error::Shape(format!(
                "segment shape {:?} does not match head rows {} × T {}",
                seg.shape(),
                head.len(),
                t_frames
            )));
        }
        for (local, &global) in head.iter().enumerate() {
            let src = seg.row(local).to_vec();
            out.data_mut()[global * t_frames..(global + 1) * t_frames].copy_from_slice(&src);
        }
    }
    Ok(out)
}

/// Edge-replicated context window of row `row` centered at frame `j`.
pub(crate) fn context_row_into(row: &[f64], j: usize, c: usize, out: &mut [f64]) {
    let t = row.len();
    for (slot, offset) in out.iter_mut().zip(-(c as isize)..=c as isize) {
        let idx = (j as isize + offset).clamp(0, t as isize - 1) as usize;
        *slot = row[idx];
    }
}

/// The (2c+1)-dimensional input vector y_{k,j} with edge replication.
pub fn context_vector(segment: &Tensor, k: usize, j: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * c + 1];
    context_row_into(segment.row(k), j, c, &mut out);
    out
}

fn head_cell(head: &RelevanceHead, y: &[f64]) -> f64 {
    let z = match head.arch {
        HeadArch::Fc => {
            let hidden = head.w1.shape()[0];
            let mut acc = head.b2;
            for h in 0..hidden {
                let pre = dot(head.w1.row(h), y) + head.b1.data()[h];
                acc += head.w2.data()[h] * sigmoid(pre);
            }
            acc
        }
        HeadArch::Conv1d => {
            let positions = y.len() - CONV_KERNEL + 1;
            let mut acc = head.b2;
            for ch in 0..CONV_CHANNELS {
                let kernel = head.w1.row(ch);
                for p in 0..positions {
                    let pre = dot(&y[p..p + CONV_KERNEL], kernel) + head.b1.data()[ch];
                    acc += head.w2.data()[ch * positions + p] * sigmoid(pre);
                }
            }
            acc
        }
    };
    sigmoid(z)
}

/// Evaluates the mask W^(i) over an f_i×T segment; the head parameters are
/// shared across every (k, j) cell.
pub fn head_forward(segment: &Tensor, head: &RelevanceHead) -> Result<Tensor> {
    head.validate()?;
    let (f_i, t_frames) = match segment.shape() {
        [f, t] => (*f, *t),
        other => return Err(Error::Shape(format!("expected [f_i,T], got {other:?}"))),
    };
    let mut mask = Tensor::zeros(&[f_i, t_frames]);
    let mut y = vec![0.0; 2 * head.c + 1];
    for k in 0..f_i {
        let row = segment.row(k).to_vec();
        for j in 0..t_frames {
            context_row_into(&row, j, head.c, &mut y);
            mask.set2(k, j, head_cell(head, &y));
        }
    }
    Ok(mask)
}

/// Masks a segment: `x ⊙ (1 + W)` with skip-add, `x ⊙ W` without.
pub fn apply_relevance(segment: &Tensor, mask: &Tensor, skip_add: bool) -> Result<Tensor> {
    if segment.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "segment {:?} vs mask {:?}",
            segment.shape(),
            mask.shape()
        )));
    }
    let data = segment
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&x, &w)| if skip_add { x * (1.0 + w) } else { x * w })
        .collect();
    Tensor::from_vec(segment.shape(), data)
}

/// Parameters added on top of the backend classifier: F filterbank centers
/// plus every head's weights and biases.
pub fn count_frontend_params(f_bands: usize, heads: &[RelevanceHead]) -> usize {
    f_bands + heads.iter().map(RelevanceHead::param_count).sum::<usize>()
}
