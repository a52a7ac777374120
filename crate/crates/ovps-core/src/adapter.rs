//! Projection of a backbone feature map into language space, mask pooling
//! of the projected map into per-proposal embeddings, and cross-attention
//! enhancement of query embeddings.
//!
//! The projection is a per-location (1x1 convolution) re-parameterization of
//! an attention-pooling layer, so the feature map keeps its spatial
//! resolution and one pooling pass serves every proposal.

use crate::error::{Error, Result};
use crate::tensor::{l2_normalize, sigmoid, tempered_softmax_slice, DenseTensor};

/// Total mask weight below this threshold counts as an empty mask.
pub const EPS_MASK: f64 = 1e-6;

/// Backbone feature map (H x W x D_in) with optional positional grid.
///
/// The positional grid, when present, is added to the features before
/// projection; it is bilinearly resized if its spatial extent differs.
#[derive(Debug, Clone)]
pub struct SpatialFeatureMap {
    features: DenseTensor,
    positional: Option<DenseTensor>,
}

impl SpatialFeatureMap {
    pub fn new(features: DenseTensor, positional: Option<DenseTensor>) -> Result<Self> {
        features.expect_rank(3, "feature map")?;
        if let Some(pos) = &positional {
            pos.expect_rank(3, "positional grid")?;
            if pos.shape()[2] != features.shape()[2] {
                return Err(Error::ShapeMismatch {
                    context: "positional grid channels".into(),
                    expected: format!("{}", features.shape()[2]),
                    actual: format!("{}", pos.shape()[2]),
                });
            }
        }
        Ok(Self {
            features,
            positional,
        })
    }

    pub fn features(&self) -> &DenseTensor {
        &self.features
    }

    pub fn height(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.features.shape()[2]
    }
}

/// Two-stage per-location projection: D_in -> D_mid -> D, each stage a
/// matrix plus bias.
#[derive(Debug, Clone)]
pub struct AdapterWeights {
    v_proj: DenseTensor,
    v_bias: Vec<f64>,
    c_proj: DenseTensor,
    c_bias: Vec<f64>,
}

impl AdapterWeights {
    pub fn new(
        v_proj: DenseTensor,
        v_bias: Vec<f64>,
        c_proj: DenseTensor,
        c_bias: Vec<f64>,
    ) -> Result<Self> {
        v_proj.expect_rank(2, "v_proj")?;
        c_proj.expect_rank(2, "c_proj")?;
        let d_mid = v_proj.shape()[1];
        if v_bias.len() != d_mid || c_proj.shape()[0] != d_mid || c_bias.len() != c_proj.shape()[1]
        {
            return Err(Error::ShapeMismatch {
                context: "adapter weight chain".into(),
                expected: format!("D_in x {d_mid} -> {d_mid} x D"),
                actual: format!(
                    "v_bias {}, c_proj {:?}, c_bias {}",
                    v_bias.len(),
                    c_proj.shape(),
                    c_bias.len()
                ),
            });
        }
        Ok(Self {
            v_proj,
            v_bias,
            c_proj,
            c_bias,
        })
    }

    /// Identity projection for a given width (both stages the identity).
    pub fn identity(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        let eye = DenseTensor::new(vec![dim, dim], eye).expect("identity matrix");
        Self {
            v_proj: eye.clone(),
            v_bias: vec![0.0; dim],
            c_proj: eye,
            c_bias: vec![0.0; dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.v_proj.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.c_proj.shape()[1]
    }
}

/// Single-head cross-attention weights with a residual output projection.
#[derive(Debug, Clone)]
pub struct CrossAttentionWeights {
    w_q: DenseTensor,
    w_k: DenseTensor,
    w_v: DenseTensor,
    w_o: DenseTensor,
    scale: f64,
}

impl CrossAttentionWeights {
    /// Build attention weights; the score scale is fixed to `1/sqrt(d_k)`.
    pub fn new(
        w_q: DenseTensor,
        w_k: DenseTensor,
        w_v: DenseTensor,
        w_o: DenseTensor,
    ) -> Result<Self> {
        w_q.expect_rank(2, "w_q")?;
        w_k.expect_rank(2, "w_k")?;
        w_v.expect_rank(2, "w_v")?;
        w_o.expect_rank(2, "w_o")?;
        let d = w_q.shape()[0];
        let d_k = w_q.shape()[1];
        let d_v = w_v.shape()[1];
        let chain_ok = w_k.shape() == [d, d_k] && w_v.shape()[0] == d && w_o.shape() == [d_v, d];
        if !chain_ok {
            return Err(Error::ShapeMismatch {
                context: "cross-attention weight chain".into(),
                expected: format!("w_q {d}x{d_k}, w_k {d}x{d_k}, w_v {d}x{d_v}, w_o {d_v}x{d}"),
                actual: format!(
                    "w_k {:?}, w_v {:?}, w_o {:?}",
                    w_k.shape(),
                    w_v.shape(),
                    w_o.shape()
                ),
            });
        }
        let scale = 1.0 / (d_k as f64).sqrt();
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            scale,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

fn matvec(m: &DenseTensor, x: &[f64], bias: &[f64], out: &mut Vec<f64>) {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    debug_assert_eq!(rows, x.len());
    out.clear();
    out.extend_from_slice(bias);
    for (i, &xi) in x.iter().enumerate() {
        let mrow = &m.data()[i * cols..(i + 1) * cols];
        for (o, &w) in out.iter_mut().zip(mrow) {
            *o += xi * w;
        }
    }
}

/// Bilinear resize of a rank-3 grid (H' x W' x C) to (H x W x C), corners
/// aligned.
fn resize_bilinear(grid: &DenseTensor, height: usize, width: usize) -> DenseTensor {
    let (gh, gw, c) = (grid.shape()[0], grid.shape()[1], grid.shape()[2]);
    if gh == height && gw == width {
        return grid.clone();
    }
    let mut out = Vec::with_capacity(height * width * c);
    let sy = if height > 1 {
        (gh - 1) as f64 / (height - 1) as f64
    } else {
        0.0
    };
    let sx = if width > 1 {
        (gw - 1) as f64 / (width - 1) as f64
    } else {
        0.0
    };
    for y in 0..height {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(gh - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(gw - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let v00 = grid.at3(y0, x0, ch);
                let v01 = grid.at3(y0, x1, ch);
                let v10 = grid.at3(y1, x0, ch);
                let v11 = grid.at3(y1, x1, ch);
                let top = v00 + (v01 - v00) * wx;
                let bot = v10 + (v11 - v10) * wx;
                out.push(top + (bot - top) * wy);
            }
        }
    }
    DenseTensor::new(vec![height, width, c], out).expect("resized grid")
}

/// Project a feature map into language space, one location at a time.
///
/// `out[h][w] = c_proj(v_proj(features[h][w] + positional[h][w]))`; the
/// positional grid is optional and resized to the feature extent if needed.
pub fn spatial_project(map: &SpatialFeatureMap, weights: &AdapterWeights) -> Result<DenseTensor> {
    let (h, w, d_in) = (map.height(), map.width(), map.channels());
    if weights.input_dim() != d_in {
        return Err(Error::ShapeMismatch {
            context: "spatial_project".into(),
            expected: format!("adapter input width {d_in}"),
            actual: format!("{}", weights.input_dim()),
        });
    }
    let positional = map
        .positional
        .as_ref()
        .map(|pos| resize_bilinear(pos, h, w));
    let d_out = weights.output_dim();
    let mut out = Vec::with_capacity(h * w * d_out);
    let mut loc = vec![0.0; d_in];
    let mut mid = Vec::new();
    let mut fin = Vec::new();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..d_in {
                loc[ch] = map.features.at3(y, x, ch);
            }
            if let Some(pos) = &positional {
                for ch in 0..d_in {
                    loc[ch] += pos.at3(y, x, ch);
                }
            }
            matvec(&weights.v_proj, &loc, &weights.v_bias, &mut mid);
            matvec(&weights.c_proj, &mid, &weights.c_bias, &mut fin);
            out.extend_from_slice(&fin);
        }
    }
    DenseTensor::new(vec![h, w, d_out], out)
}

/// Pool a projected feature map (H x W x D) under K mask weight maps
/// (K x H x W, values in [0, 1]) into K unit-norm embeddings.
///
/// Each output row is the mask-weighted mean of the feature map, then
/// l2-normalized so it is comparable with unit text embeddings.
pub fn mask_pool(projected: &DenseTensor, masks: &DenseTensor) -> Result<DenseTensor> {
    projected.expect_rank(3, "mask_pool features")?;
    masks.expect_rank(3, "mask_pool masks")?;
    let (h, w, d) = (
        projected.shape()[0],
        projected.shape()[1],
        projected.shape()[2],
    );
    let k = masks.shape()[0];
    if masks.shape()[1] != h || masks.shape()[2] != w {
        return Err(Error::ShapeMismatch {
            context: "mask_pool".into(),
            expected: format!("masks K x {h} x {w}"),
            actual: format!("{:?}", masks.shape()),
        });
    }
    let mut rows = Vec::with_capacity(k * d);
    for ki in 0..k {
        let weights = masks.plane(ki);
        let total: f64 = weights.iter().sum();
        if total < EPS_MASK {
            return Err(Error::EmptyMask {
                index: ki,
                sum: total,
            });
        }
        let mut acc = vec![0.0; d];
        for (pix, &weight) in weights.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let feat = &projected.data()[pix * d..(pix + 1) * d];
            for (a, &f) in acc.iter_mut().zip(feat) {
                *a += weight * f;
            }
        }
        rows.extend(acc.into_iter().map(|v| v / total));
    }
    let pooled = DenseTensor::new(vec![k, d], rows)?;
    l2_normalize(&pooled)
}

/// Threshold sigmoid(mask logits) at `threshold` into a {0, 1} tensor.
/// The comparison is inclusive: sigmoid(0) = 0.5 passes a 0.5 threshold.
pub fn binarize_masks(mask_logits: &DenseTensor, threshold: f64) -> Result<DenseTensor> {
    mask_logits.expect_rank(3, "binarize_masks")?;
    let data = mask_logits
        .data()
        .iter()
        .map(|&x| if sigmoid(x) >= threshold { 1.0 } else { 0.0 })
        .collect();
    DenseTensor::new(mask_logits.shape().to_vec(), data)
}

/// Enhance query embeddings (K x D) with single-head cross-attention over
/// the flattened feature map, with a residual connection.
///
/// `out = queries + softmax(scale * (Q Wq)(X Wk)^T) (X Wv) Wo`.
pub fn cross_attend(
    queries: &DenseTensor,
    projected: &DenseTensor,
    weights: &CrossAttentionWeights,
) -> Result<DenseTensor> {
    queries.expect_rank(2, "cross_attend queries")?;
    projected.expect_rank(3, "cross_attend features")?;
    let (k, d) = (queries.shape()[0], queries.shape()[1]);
    let (h, w, dc) = (
        projected.shape()[0],
        projected.shape()[1],
        projected.shape()[2],
    );
    if dc != d || weights.w_q.shape()[0] != d {
        return Err(Error::ShapeMismatch {
            context: "cross_attend".into(),
            expected: format!("feature/query width {d}"),
            actual: format!("features {dc}, w_q {:?}", weights.w_q.shape()),
        });
    }
    let locations = h * w;
    let d_k = weights.w_q.shape()[1];
    let d_v = weights.w_v.shape()[1];

    let mut q = Vec::new();
    let mut q_rows = Vec::with_capacity(k);
    let zero_dk = vec![0.0; d_k];
    let zero_dv = vec![0.0; d_v];
    for i in 0..k {
        matvec(&weights.w_q, queries.row(i), &zero_dk, &mut q);
        q_rows.push(q.clone());
    }
    let mut keys = Vec::with_capacity(locations);
    let mut vals = Vec::with_capacity(locations);
    let mut tmp = Vec::new();
    for l in 0..locations {
        let feat = &projected.data()[l * d..(l + 1) * d];
        matvec(&weights.w_k, feat, &zero_dk, &mut tmp);
        keys.push(tmp.clone());
        matvec(&weights.w_v, feat, &zero_dv, &mut tmp);
        vals.push(tmp.clone());
    }

    let mut out = Vec::with_capacity(k * d);
    let mut scores = vec![0.0; locations];
    for i in 0..k {
        for (l, key) in keys.iter().enumerate() {
            let s: f64 = q_rows[i].iter().zip(key).map(|(a, b)| a * b).sum();
            scores[l] = weights.scale * s;
        }
        let attn = tempered_softmax_slice(&scores, 1.0)?;
        let mut ctx = vec![0.0; d_v];
        for (a, val) in attn.iter().zip(&vals) {
            for (c, &v) in ctx.iter_mut().zip(val) {
                *c += a * v;
            }
        }
        matvec(&weights.w_o, &ctx, &vec![0.0; d], &mut tmp);
        out.extend(queries.row(i).iter().zip(&tmp).map(|(&qv, &cv)| qv + cv));
    }
    DenseTensor::new(vec![k, d], out)
}

/// Attention matrix (K x HW) of [`cross_attend`], exposed for diagnostics
/// and the row-sum property tests.
pub fn attention_matrix(
    queries: &DenseTensor,
    projected: &DenseTensor,
    weights: &CrossAttentionWeights,
) -> Result<DenseTensor> {
    queries.expect_rank(2, "attention queries")?;
    projected.expect_rank(3, "attention features")?;
    let (k, d) = (queries.shape()[0], queries.shape()[1]);
    let locations = projected.shape()[0] * projected.shape()[1];
    let d_k = weights.w_q.shape()[1];
    let zero = vec![0.0; d_k];
    let mut out = Vec::with_capacity(k * locations);
    let mut q = Vec::new();
    let mut key = Vec::new();
    let mut scores = vec![0.0; locations];
    for i in 0..k {
        matvec(&weights.w_q, queries.row(i), &zero, &mut q);
        for l in 0..locations {
            let feat = &projected.data()[l * d..(l + 1) * d];
            matvec(&weights.w_k, feat, &zero, &mut key);
            let s: f64 = q.iter().zip(&key).map(|(a, b)| a * b).sum();
            scores[l] = weights.scale * s;
        }
        out.extend(tempered_softmax_slice(&scores, 1.0)?);
    }
    DenseTensor::new(vec![k, locations], out)
}
