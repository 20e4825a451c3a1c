//! Point-cloud encoder: shared per-point MLP → node attention → max-pool →
//! projection, with a reverse-mode backward pass over the flat parameter
//! vector.
//!
//! The attention block keeps a small set of learned query nodes; each node
//! forms a softmax distribution over the cloud's points, gathers a context,
//! mixes it through a value matrix, and adds the result back residually.
//! Queries and values start at zero, so at initialization the block is an
//! exact identity and the encoder degenerates to a per-point MLP with
//! max-pooling.

use ndarray::{s, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::nn::{
    dense_backward, dense_forward, ensure_finite, init_fan_in, init_zero, softmax_cols, tanh,
    tanh_backward, Layout, LayoutBuilder,
};
use crate::scalar::{real, Real};

// ── configuration ───────────────────────────────────────────────────────────

/// Architecture hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Widths of the shared per-point MLP applied to xyz inputs.
    pub point_mlp_widths: Vec<usize>,
    /// Output embedding dimension.
    pub embed_dim: usize,
    /// Number of attention query nodes.
    pub attention_nodes: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { point_mlp_widths: vec![64, 128, 256], embed_dim: 256, attention_nodes: 4 }
    }
}

impl EncoderConfig {
    /// Channel width entering the attention block.
    pub fn feature_width(&self) -> usize {
        *self.point_mlp_widths.last().expect("validated non-empty widths")
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_mlp_widths.is_empty() {
            return Err(Error::Config("encoder needs at least one point MLP layer".into()));
        }
        if self.point_mlp_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("encoder layer widths must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed dim must be positive".into()));
        }
        if self.attention_nodes == 0 {
            return Err(Error::Config("attention node count must be positive".into()));
        }
        Ok(())
    }

    /// Register all encoder parameters on a layout builder.
    pub fn register(&self, b: &mut LayoutBuilder) {
        let mut prev = 3;
        for (i, &w) in self.point_mlp_widths.iter().enumerate() {
            b.add(format!("enc.point{i}.w"), vec![prev, w]);
            b.add(format!("enc.point{i}.b"), vec![w]);
            prev = w;
        }
        let c = self.feature_width();
        b.add("enc.attn.q", vec![self.attention_nodes, c]);
        b.add("enc.attn.v", vec![c, c]);
        b.add("enc.proj.w", vec![c, self.embed_dim]);
        b.add("enc.proj.b", vec![self.embed_dim]);
    }

    /// Initialize encoder parameters in place: fan-in uniform for dense
    /// layers, zeros for biases and for the attention block.
    pub fn init<T: Real>(&self, layout: &Layout, params: &mut [T], rng: &mut ChaCha8Rng) {
        let mut prev = 3;
        for (i, &w) in self.point_mlp_widths.iter().enumerate() {
            let seg = layout.seg(&format!("enc.point{i}.w")).clone();
            init_fan_in(rng, prev, &mut params[seg.offset..seg.offset + seg.len()]);
            let seg = layout.seg(&format!("enc.point{i}.b")).clone();
            init_zero(&mut params[seg.offset..seg.offset + seg.len()]);
            prev = w;
        }
        for name in ["enc.attn.q", "enc.attn.v"] {
            let seg = layout.seg(name).clone();
            init_zero(&mut params[seg.offset..seg.offset + seg.len()]);
        }
        let c = self.feature_width();
        let seg = layout.seg("enc.proj.w").clone();
        init_fan_in(rng, c, &mut params[seg.offset..seg.offset + seg.len()]);
        let seg = layout.seg("enc.proj.b").clone();
        init_zero(&mut params[seg.offset..seg.offset + seg.len()]);
    }
}

// ── forward ─────────────────────────────────────────────────────────────────

/// Saved intermediates for one encode call.
#[derive(Debug, Clone)]
pub struct EncodeTape<T> {
    pub batch: usize,
    pub n_points: usize,
    /// (B·N)×3 stacked input coordinates.
    pub x: Array2<T>,
    /// Post-tanh activations of each point MLP layer, (B·N)×w.
    pub acts: Vec<Array2<T>>,
    /// Per-cloud N×A attention weights (each column sums to 1).
    pub attn_w: Vec<Array2<T>>,
    /// Per-cloud A×c contexts.
    pub attn_ctx: Vec<Array2<T>>,
    /// (B·N)×c features after the attention residual.
    pub hidden: Array2<T>,
    /// B×c row index (within the cloud) of each pooled maximum.
    pub pool_idx: Vec<Vec<usize>>,
    /// B×c pooled features.
    pub pooled: Array2<T>,
    /// B×d final embedding (post-tanh).
    pub emb: Array2<T>,
}

/// Encode a batch of clouds into B×d embeddings, keeping a tape for the
/// backward pass. All clouds must share the same point count.
pub fn encode<T: Real>(
    clouds: &[&PointCloud],
    cfg: &EncoderConfig,
    layout: &Layout,
    params: &[T],
) -> Result<(Array2<T>, EncodeTape<T>)> {
    let b = clouds.len();
    let d = cfg.embed_dim;
    let c = cfg.feature_width();
    if b == 0 {
        let tape = EncodeTape {
            batch: 0,
            n_points: 0,
            x: Array2::zeros((0, 3)),
            acts: Vec::new(),
            attn_w: Vec::new(),
            attn_ctx: Vec::new(),
            hidden: Array2::zeros((0, c)),
            pool_idx: Vec::new(),
            pooled: Array2::zeros((0, c)),
            emb: Array2::zeros((0, d)),
        };
        return Ok((Array2::zeros((0, d)), tape));
    }
    let n = clouds[0].points.nrows();
    for cloud in clouds {
        if cloud.points.nrows() != n {
            return Err(Error::Shape(format!(
                "all clouds in a batch must share a point count; found {} and {n}",
                cloud.points.nrows()
            )));
        }
    }

    // Stack inputs.
    let mut x = Array2::<T>::zeros((b * n, 3));
    for (i, cloud) in clouds.iter().enumerate() {
        for (p, row) in cloud.points.rows().into_iter().enumerate() {
            for k in 0..3 {
                x[[i * n + p, k]] = real(row[k] as f64);
            }
        }
    }

    // Shared per-point MLP.
    let mut acts: Vec<Array2<T>> = Vec::with_capacity(cfg.point_mlp_widths.len());
    let mut h = x.clone();
    for i in 0..cfg.point_mlp_widths.len() {
        let w = layout.view2(params, &format!("enc.point{i}.w"));
        let bias = layout.view1(params, &format!("enc.point{i}.b"));
        h = tanh(&dense_forward(&h.view(), &w, &bias)?);
        ensure_finite(&h.view(), &format!("enc.point{i}"))?;
        acts.push(h.clone());
    }

    // Node attention with residual update, per cloud.
    let q = layout.view2(params, "enc.attn.q");
    let v = layout.view2(params, "enc.attn.v");
    let scale = real::<T>(1.0 / (c as f64).sqrt());
    let mut hidden = h.clone();
    let mut attn_w = Vec::with_capacity(b);
    let mut attn_ctx = Vec::with_capacity(b);
    for i in 0..b {
        let block = h.slice(s![i * n..(i + 1) * n, ..]);
        let scores = block.dot(&q.t()) * scale;
        let weights = softmax_cols(&scores.view());
        let ctx = weights.t().dot(&block);
        let val = ctx.dot(&v);
        let update = weights.dot(&val);
        let mut out = hidden.slice_mut(s![i * n..(i + 1) * n, ..]);
        out += &update;
        attn_w.push(weights);
        attn_ctx.push(ctx);
    }
    ensure_finite(&hidden.view(), "enc.attn")?;

    // Max-pool over points, first index wins ties.
    let mut pooled = Array2::<T>::zeros((b, c));
    let mut pool_idx = vec![vec![0usize; c]; b];
    for i in 0..b {
        let block = hidden.slice(s![i * n..(i + 1) * n, ..]);
        for ch in 0..c {
            let mut best = block[[0, ch]];
            let mut best_p = 0usize;
            for p in 1..n {
                if block[[p, ch]] > best {
                    best = block[[p, ch]];
                    best_p = p;
                }
            }
            pooled[[i, ch]] = best;
            pool_idx[i][ch] = best_p;
        }
    }

    // Projection to the embedding space.
    let pw = layout.view2(params, "enc.proj.w");
    let pb = layout.view1(params, "enc.proj.b");
    let emb = tanh(&dense_forward(&pooled.view(), &pw, &pb)?);
    ensure_finite(&emb.view(), "enc.proj")?;

    let tape = EncodeTape {
        batch: b,
        n_points: n,
        x,
        acts,
        attn_w,
        attn_ctx,
        hidden,
        pool_idx,
        pooled,
        emb: emb.clone(),
    };
    Ok((emb, tape))
}

// ── backward ────────────────────────────────────────────────────────────────

/// Accumulate parameter gradients for one encode call given dL/d embedding.
pub fn encode_backward<T: Real>(
    cfg: &EncoderConfig,
    layout: &Layout,
    params: &[T],
    tape: &EncodeTape<T>,
    d_emb: &ArrayView2<T>,
    grads: &mut [T],
) -> Result<()> {
    let b = tape.batch;
    if b == 0 {
        return Ok(());
    }
    let n = tape.n_points;
    let c = cfg.feature_width();
    if d_emb.dim() != tape.emb.dim() {
        return Err(Error::Shape(format!(
            "embedding gradient shape {:?} does not match {:?}",
            d_emb.dim(),
            tape.emb.dim()
        )));
    }

    // Projection.
    let d_pre = tanh_backward(&tape.emb.view(), d_emb);
    let pw = layout.view2(params, "enc.proj.w");
    let d_pooled = {
        let seg_w = layout.seg("enc.proj.w").clone();
        let seg_b = layout.seg("enc.proj.b").clone();
        let (left, right) = split_two(grads, &seg_w, &seg_b);
        let dw = ndarray::ArrayViewMut2::from_shape((seg_w.shape[0], seg_w.shape[1]), left)
            .expect("segment bounds");
        let db = ndarray::ArrayViewMut1::from_shape(seg_b.shape[0], right).expect("segment bounds");
        dense_backward(&tape.pooled.view(), &pw, &d_pre.view(), dw, db)
    };

    // Un-pool: route each channel gradient to its argmax row.
    let mut d_hidden = Array2::<T>::zeros((b * n, c));
    for i in 0..b {
        for ch in 0..c {
            d_hidden[[i * n + tape.pool_idx[i][ch], ch]] += d_pooled[[i, ch]];
        }
    }

    // Attention backward per cloud; assembles dL/dH for the MLP output H.
    let q = layout.view2(params, "enc.attn.q");
    let v = layout.view2(params, "enc.attn.v");
    let h_out = tape.acts.last().expect("at least one point layer");
    let scale = real::<T>(1.0 / (c as f64).sqrt());
    let mut d_h = Array2::<T>::zeros((b * n, c));
    let mut d_q = Array2::<T>::zeros(q.raw_dim());
    let mut d_v = Array2::<T>::zeros(v.raw_dim());
    for i in 0..b {
        let g_out = d_hidden.slice(s![i * n..(i + 1) * n, ..]);
        let block = h_out.slice(s![i * n..(i + 1) * n, ..]);
        let weights = &tape.attn_w[i];
        let ctx = &tape.attn_ctx[i];
        let val = ctx.dot(&v);

        // H' = H + W·VAL.
        let mut d_weights = g_out.dot(&val.t());
        let d_val = weights.t().dot(&g_out);
        // VAL = CTX·V.
        d_v += &ctx.t().dot(&d_val);
        let d_ctx = d_val.dot(&v.t());
        // CTX = Wᵀ·H.
        d_weights += &block.dot(&d_ctx.t());
        let mut d_block = weights.dot(&d_ctx);
        // Column softmax.
        let mut d_scores = Array2::<T>::zeros(weights.raw_dim());
        for a in 0..weights.ncols() {
            let wcol = weights.column(a);
            let gcol = d_weights.column(a);
            let dot = wcol.iter().zip(gcol.iter()).map(|(&w, &g)| w * g).sum::<T>();
            for p in 0..n {
                d_scores[[p, a]] = wcol[p] * (gcol[p] - dot);
            }
        }
        // S = H·Qᵀ·scale.
        d_block += &(d_scores.dot(&q) * scale);
        d_q += &(d_scores.t().dot(&block) * scale);

        let mut dst = d_h.slice_mut(s![i * n..(i + 1) * n, ..]);
        dst += &g_out;
        dst += &d_block;
    }
    accumulate(grads, layout, "enc.attn.q", &d_q);
    accumulate(grads, layout, "enc.attn.v", &d_v);

    // Point MLP backward.
    let mut g = d_h;
    for i in (0..cfg.point_mlp_widths.len()).rev() {
        g = tanh_backward(&tape.acts[i].view(), &g.view());
        let prev: ArrayView2<T> =
            if i == 0 { tape.x.view() } else { tape.acts[i - 1].view() };
        let w = layout.view2(params, &format!("enc.point{i}.w"));
        let seg_w = layout.seg(&format!("enc.point{i}.w")).clone();
        let seg_b = layout.seg(&format!("enc.point{i}.b")).clone();
        let (left, right) = split_two(grads, &seg_w, &seg_b);
        let dw = ndarray::ArrayViewMut2::from_shape((seg_w.shape[0], seg_w.shape[1]), left)
            .expect("segment bounds");
        let db = ndarray::ArrayViewMut1::from_shape(seg_b.shape[0], right).expect("segment bounds");
        g = dense_backward(&prev, &w, &g.view(), dw, db);
    }
    Ok(())
}

/// Disjoint mutable slices for a weight/bias segment pair.
fn split_two<'a, T>(
    grads: &'a mut [T],
    seg_w: &crate::nn::Segment,
    seg_b: &crate::nn::Segment,
) -> (&'a mut [T], &'a mut [T]) {
    assert_eq!(seg_w.offset + seg_w.len(), seg_b.offset, "bias follows weight");
    let (_, rest) = grads.split_at_mut(seg_w.offset);
    let (w, rest) = rest.split_at_mut(seg_w.len());
    (w, &mut rest[..seg_b.len()])
}

/// grads[name] += delta.
fn accumulate<T: Real>(grads: &mut [T], layout: &Layout, name: &str, delta: &Array2<T>) {
    let mut view = layout.view2_mut(grads, name);
    view += delta;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{estimate_gradient, gradient_rel_error};
    use crate::rng;
    use ndarray::Array2;
    use rand::Rng;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig { point_mlp_widths: vec![8, 12], embed_dim: 10, attention_nodes: 2 }
    }

    fn layout_for(cfg: &EncoderConfig) -> Layout {
        let mut b = Layout::builder();
        cfg.register(&mut b);
        b.finish()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut r = rng::stream(seed, "cloud", 0);
        PointCloud {
            points: Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0f32..1.0)),
            class_id: 0,
            domain_id: 0,
        }
    }

    fn random_params<T: Real>(layout: &Layout, seed: u64) -> Vec<T> {
        let mut r = rng::stream(seed, "params", 0);
        (0..layout.total()).map(|_| real(r.random_range(-0.3..0.3))).collect()
    }

    #[test]
    fn encode_shapes_and_empty_batch() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let params: Vec<f32> = random_params(&layout, 1);
        let c0 = random_cloud(16, 2);
        let c1 = random_cloud(16, 3);
        let (emb, tape) = encode(&[&c0, &c1], &cfg, &layout, &params).unwrap();
        assert_eq!(emb.shape(), &[2, 10]);
        assert_eq!(tape.hidden.shape(), &[32, 12]);
        let (empty, _) = encode::<f32>(&[], &cfg, &layout, &params).unwrap();
        assert_eq!(empty.shape(), &[0, 10]);
    }

    #[test]
    fn encode_rejects_mixed_point_counts() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let params: Vec<f32> = random_params(&layout, 1);
        let c0 = random_cloud(16, 2);
        let c1 = random_cloud(17, 3);
        assert!(encode(&[&c0, &c1], &cfg, &layout, &params).is_err());
    }

    #[test]
    fn features_are_invariant_to_point_order() {
        let cfg = EncoderConfig::default();
        let layout = layout_for(&cfg);
        let params: Vec<f32> = random_params(&layout, 4);
        let cloud = random_cloud(64, 5);
        let mut permuted = cloud.clone();
        let reversed: Vec<usize> = (0..64).rev().collect();
        let mut pts = Array2::<f32>::zeros((64, 3));
        for (dst, &src) in reversed.iter().enumerate() {
            pts.row_mut(dst).assign(&cloud.points.row(src));
        }
        permuted.points = pts;
        let (a, _) = encode(&[&cloud], &cfg, &layout, &params).unwrap();
        let (b, _) = encode(&[&permuted], &cfg, &layout, &params).unwrap();
        let max_diff = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 1e-5, "permutation changed features by {max_diff}");
    }

    #[test]
    fn attention_weights_are_column_stochastic() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let params: Vec<f64> = random_params(&layout, 6);
        let cloud = random_cloud(24, 7);
        let (_, tape) = encode(&[&cloud], &cfg, &layout, &params).unwrap();
        for w in &tape.attn_w {
            assert_eq!(w.shape(), &[24, 2]);
            for col in w.columns() {
                assert!((col.sum() - 1.0).abs() < 1e-9);
                assert!(col.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn zero_initialized_attention_is_identity() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let mut params: Vec<f32> = vec![0.0; layout.total()];
        let mut r = rng::stream(8, "init", 0);
        cfg.init(&layout, &mut params, &mut r);
        let cloud = random_cloud(20, 9);
        let (_, tape) = encode(&[&cloud], &cfg, &layout, &params).unwrap();
        // With Q = V = 0 the residual update is exactly zero.
        assert_eq!(tape.hidden, *tape.acts.last().unwrap());
    }

    #[test]
    fn batch_composition_does_not_change_features() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let params: Vec<f32> = random_params(&layout, 10);
        let c0 = random_cloud(16, 11);
        let c1 = random_cloud(16, 12);
        let (solo, _) = encode(&[&c0], &cfg, &layout, &params).unwrap();
        let (both, _) = encode(&[&c0, &c1], &cfg, &layout, &params).unwrap();
        for (a, b) in solo.row(0).iter().zip(both.row(0).iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn small_input_perturbations_stay_small() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let params: Vec<f32> = random_params(&layout, 13);
        let cloud = random_cloud(32, 14);
        let mut shifted = cloud.clone();
        shifted.points.mapv_inplace(|v| v + 1e-6);
        let (a, _) = encode(&[&cloud], &cfg, &layout, &params).unwrap();
        let (b, _) = encode(&[&shifted], &cfg, &layout, &params).unwrap();
        let dist: f32 = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f32>()
            .sqrt();
        assert!(dist < 1e-3, "feature distance {dist} too large for 1e-6 jitter");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = small_cfg();
        let layout = layout_for(&cfg);
        let mut params: Vec<f64> = random_params(&layout, 15);
        let c0 = random_cloud(6, 16);
        let c1 = random_cloud(6, 17);
        let clouds = [&c0, &c1];
        // Random linear readout makes every embedding coordinate matter.
        let mut r = rng::stream(18, "readout", 0);
        let readout = Array2::<f64>::from_shape_fn((2, cfg.embed_dim), |_| r.random_range(-1.0..1.0));

        let mut objective = |p: &[f64]| {
            let (emb, _) = encode(&clouds, &cfg, &layout, p).unwrap();
            (&emb * &readout).sum()
        };
        let numeric = estimate_gradient(&mut objective, &mut params, 1e-5);

        let (_, tape) = encode(&clouds, &cfg, &layout, &params).unwrap();
        let mut analytic = vec![0.0f64; layout.total()];
        encode_backward(&cfg, &layout, &params, &tape, &readout.view(), &mut analytic).unwrap();

        let rel = gradient_rel_error(&analytic, &numeric, 1e-12);
        assert!(rel < 1e-4, "encoder gradient relative error {rel}");
    }
}
