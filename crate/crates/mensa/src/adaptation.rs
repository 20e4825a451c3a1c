//! Latent-space mixing, gradient reversal, and classifier heads.
//!
//! Mixing operates on encoder embeddings: a Beta-distributed coefficient λ
//! blends source features with target features, and the blend is scored by
//! the domain classifier against the soft label λ (the source share). The
//! strategies differ in how multiple targets combine:
//!
//! * `sep`    — one pair blend per target, each scored separately;
//! * `mensa`  — the ensemble average of all pair blends, scored once;
//! * `factor` — λ·source + Σ (1−λ)/n · target_i (algebraically the same
//!   features as `mensa`, kept as a distinct formulation);
//! * `concat` — width-wise concatenation of the scaled parts, scored by a
//!   dedicated (n+1)-way head against a soft slot distribution;
//! * `inter`  — target-target blends only, scored against label 0;
//! * `none`   — mixing disabled.
//!
//! The domain heads sit behind a gradient-reversal layer: identity forward,
//! gradient scaled by −μ on the way back into the encoder.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::nn::{
    dense_forward, init_fan_in, init_zero, sigmoid, softmax_rows, Layout, LayoutBuilder,
};
use crate::scalar::{real, Real};

// ── strategy and λ ──────────────────────────────────────────────────────────

/// Feature-mixing strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MixupStrategy {
    None,
    Sep,
    MEnsA,
    Factor,
    Concat,
    Inter,
}

impl MixupStrategy {
    pub const ALL: [MixupStrategy; 6] = [
        MixupStrategy::None,
        MixupStrategy::Sep,
        MixupStrategy::MEnsA,
        MixupStrategy::Factor,
        MixupStrategy::Concat,
        MixupStrategy::Inter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MixupStrategy::None => "none",
            MixupStrategy::Sep => "sep",
            MixupStrategy::MEnsA => "mensa",
            MixupStrategy::Factor => "factor",
            MixupStrategy::Concat => "concat",
            MixupStrategy::Inter => "inter",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mixup strategy `{s}`, expected none|sep|mensa|factor|concat|inter"
                ))
            })
    }

    /// Whether the strategy scores through the dedicated concat head.
    pub fn needs_concat_head(self) -> bool {
        matches!(self, MixupStrategy::Concat)
    }
}

/// Mixing hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixupConfig {
    pub strategy: MixupStrategy,
    /// Both Beta shape parameters of the λ distribution.
    pub alpha: f64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig { strategy: MixupStrategy::MEnsA, alpha: 2.0 }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "mixup.alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Draw one mixing coefficient λ ~ Beta(α, α).
pub fn sample_lambda(alpha: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Config(format!("invalid Beta parameter {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

// ── mixing operations ───────────────────────────────────────────────────────

fn check_same_shape<T>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "mixing inputs differ in shape: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Pair blend: λ·source + (1−λ)·target. Its soft domain label is λ.
pub fn mix_pair<T: Real>(
    source: &ArrayView2<T>,
    target: &ArrayView2<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_same_shape(source, target)?;
    let mut out = source.to_owned() * lambda;
    out.scaled_add(T::one() - lambda, target);
    Ok(out)
}

/// Ensemble blend: the mean of all per-target pair blends. Label λ.
pub fn mensa_mix<T: Real>(pair_mixes: &[Array2<T>]) -> Result<Array2<T>> {
    let first = pair_mixes
        .first()
        .ok_or_else(|| Error::Shape("ensemble mixing needs at least one pair blend".into()))?;
    let mut out = first.clone();
    for m in &pair_mixes[1..] {
        check_same_shape(&first.view(), &m.view())?;
        out += m;
    }
    Ok(out / real::<T>(pair_mixes.len() as f64))
}

/// Factor blend: λ·source + Σ_i (1−λ)/n · target_i. Label λ.
pub fn factor_mix<T: Real>(
    source: &ArrayView2<T>,
    targets: &[ArrayView2<T>],
    lambda: T,
) -> Result<Array2<T>> {
    if targets.is_empty() {
        return Err(Error::Shape("factor mixing needs at least one target".into()));
    }
    let mut out = source.to_owned() * lambda;
    let w = (T::one() - lambda) / real::<T>(targets.len() as f64);
    for t in targets {
        check_same_shape(source, t)?;
        out.scaled_add(w, t);
    }
    Ok(out)
}

/// Concat blend: the scaled parts side by side, B×(n+1)d, with a soft label
/// distribution over the n+1 slots: raw [λ, 2·1·(1−λ)/n, …, 2·n·(1−λ)/n],
/// normalized to sum 1.
pub fn concat_mix<T: Real>(
    source: &ArrayView2<T>,
    targets: &[ArrayView2<T>],
    lambda: T,
) -> Result<(Array2<T>, Array1<T>)> {
    if targets.is_empty() {
        return Err(Error::Shape("concat mixing needs at least one target".into()));
    }
    let n = targets.len();
    let (b, d) = source.dim();
    let mut features = Array2::<T>::zeros((b, (n + 1) * d));
    features.slice_mut(ndarray::s![.., 0..d]).assign(&(source.to_owned() * lambda));
    let w = (T::one() - lambda) / real::<T>(n as f64);
    for (i, t) in targets.iter().enumerate() {
        check_same_shape(source, t)?;
        features
            .slice_mut(ndarray::s![.., (i + 1) * d..(i + 2) * d])
            .assign(&(t.to_owned() * w));
    }
    let mut label = Array1::<T>::zeros(n + 1);
    label[0] = lambda;
    for i in 1..=n {
        label[i] = real::<T>(2.0 * i as f64 / n as f64) * (T::one() - lambda);
    }
    let sum = label.sum();
    label.mapv_inplace(|v| v / sum);
    Ok((features, label))
}

/// Number of unordered target pairs blended by the inter strategy.
pub fn inter_pair_count(n_targets: usize) -> usize {
    n_targets * n_targets.saturating_sub(1) / 2
}

/// Inter-target blend with one coefficient per unordered pair (i < j), in
/// lexicographic pair order: the mean over pairs of λ_p·target_i +
/// (1−λ_p)·target_j. Pure target content, so its label is 0.
pub fn inter_mix_with<T: Real>(targets: &[ArrayView2<T>], lambdas: &[T]) -> Result<Array2<T>> {
    if targets.len() < 2 {
        return Err(Error::Config(format!(
            "inter mixing needs at least two target domains, got {}",
            targets.len()
        )));
    }
    let pairs = inter_pair_count(targets.len());
    if lambdas.len() != pairs {
        return Err(Error::Shape(format!(
            "inter mixing over {} targets needs {pairs} coefficients, got {}",
            targets.len(),
            lambdas.len()
        )));
    }
    let mut out = Array2::<T>::zeros(targets[0].raw_dim());
    let mut p = 0usize;
    for i in 0..targets.len() {
        for j in (i + 1)..targets.len() {
            check_same_shape(&targets[i], &targets[j])?;
            out.scaled_add(lambdas[p], &targets[i]);
            out.scaled_add(T::one() - lambdas[p], &targets[j]);
            p += 1;
        }
    }
    Ok(out / real::<T>(pairs as f64))
}

/// Inter-target blend with one shared coefficient for every pair.
pub fn inter_mix<T: Real>(targets: &[ArrayView2<T>], lambda: T) -> Result<Array2<T>> {
    let pairs = inter_pair_count(targets.len());
    inter_mix_with(targets, &vec![lambda; pairs.max(1)])
}

// ── gradient reversal ───────────────────────────────────────────────────────

/// Forward pass of the reversal layer: the identity.
pub fn grl_forward<T: Real>(x: &ArrayView2<T>) -> Array2<T> {
    x.to_owned()
}

/// Backward pass of the reversal layer: g ↦ −μ·g.
pub fn grl_backward<T: Real>(g: &ArrayView2<T>, mu: f64) -> Array2<T> {
    let scale = -real::<T>(mu);
    g.mapv(|v| v * scale)
}

// ── heads ───────────────────────────────────────────────────────────────────

/// Head sizes derived from the experiment setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    pub embed_dim: usize,
    pub n_classes: usize,
    pub n_targets: usize,
    /// Register the (n+1)-way concat head.
    pub concat_head: bool,
}

impl HeadConfig {
    pub fn register(&self, b: &mut LayoutBuilder) {
        b.add("head.class.w", vec![self.embed_dim, self.n_classes]);
        b.add("head.class.b", vec![self.n_classes]);
        b.add("head.domain.w", vec![self.embed_dim, 1]);
        b.add("head.domain.b", vec![1]);
        if self.concat_head {
            let slots = self.n_targets + 1;
            b.add("head.concat.w", vec![slots * self.embed_dim, slots]);
            b.add("head.concat.b", vec![slots]);
        }
    }

    pub fn init<T: Real>(&self, layout: &Layout, params: &mut [T], rng: &mut ChaCha8Rng) {
        let pairs: &[(&str, usize)] = &[
            ("head.class", self.embed_dim),
            ("head.domain", self.embed_dim),
            ("head.concat", (self.n_targets + 1) * self.embed_dim),
        ];
        for (prefix, fan_in) in pairs {
            let w_name = format!("{prefix}.w");
            if !layout.contains(&w_name) {
                continue;
            }
            let seg = layout.seg(&w_name).clone();
            init_fan_in(rng, *fan_in, &mut params[seg.offset..seg.offset + seg.len()]);
            let seg = layout.seg(&format!("{prefix}.b")).clone();
            init_zero(&mut params[seg.offset..seg.offset + seg.len()]);
        }
    }
}

/// Object classifier: row-stochastic class probabilities, B×K.
pub fn classify_object<T: Real>(
    features: &ArrayView2<T>,
    layout: &Layout,
    params: &[T],
) -> Result<Array2<T>> {
    let w = layout.view2(params, "head.class.w");
    let b = layout.view1(params, "head.class.b");
    Ok(softmax_rows(&dense_forward(features, &w, &b)?.view()))
}

/// Binary domain classifier: sigmoid score per row (1 ⇒ source-like).
pub fn classify_domain<T: Real>(
    features: &ArrayView2<T>,
    layout: &Layout,
    params: &[T],
) -> Result<Array1<T>> {
    let w = layout.view2(params, "head.domain.w");
    let b = layout.view1(params, "head.domain.b");
    let z = dense_forward(features, &w, &b)?;
    Ok(sigmoid(&z.column(0)))
}

/// (n+1)-way domain classifier over concatenated blends, row-stochastic.
pub fn classify_domain_concat<T: Real>(
    features: &ArrayView2<T>,
    layout: &Layout,
    params: &[T],
) -> Result<Array2<T>> {
    let w = layout.view2(params, "head.concat.w");
    let b = layout.view1(params, "head.concat.b");
    Ok(softmax_rows(&dense_forward(features, &w, &b)?.view()))
}

// ── head backward passes ────────────────────────────────────────────────────

fn accumulate_head<T: Real>(
    layout: &Layout,
    grads: &mut [T],
    prefix: &str,
    features: &ArrayView2<T>,
    dlogits: &Array2<T>,
) {
    let dw = features.t().dot(dlogits);
    let db = dlogits.sum_axis(Axis(0));
    let mut w = layout.view2_mut(grads, &format!("{prefix}.w"));
    w += &dw;
    let mut b = layout.view1_mut(grads, &format!("{prefix}.b"));
    b += &db;
}

/// Backward of row-weighted cross-entropy through the object head.
/// `row_weights` are the aggregation weights (they sum to 1 and already
/// contain any 1/B factor). Returns dL/d features.
pub fn object_head_backward<T: Real>(
    features: &ArrayView2<T>,
    probs: &ArrayView2<T>,
    labels: &[usize],
    row_weights: &ArrayView1<T>,
    layout: &Layout,
    params: &[T],
    grads: &mut [T],
) -> Result<Array2<T>> {
    let (b, k) = probs.dim();
    if labels.len() != b || row_weights.len() != b {
        return Err(Error::Shape("label/weight count does not match batch".into()));
    }
    let mut dlogits = probs.to_owned();
    for i in 0..b {
        if labels[i] >= k {
            return Err(Error::Shape(format!("label {} out of range for {k} classes", labels[i])));
        }
        dlogits[[i, labels[i]]] -= T::one();
        let wt = row_weights[i];
        for v in dlogits.row_mut(i) {
            *v *= wt;
        }
    }
    accumulate_head(layout, grads, "head.class", features, &dlogits);
    let w = layout.view2(params, "head.class.w");
    Ok(dlogits.dot(&w.t()))
}

/// Backward of `coeff · soft_binary_ce(scores, target)` through the binary
/// domain head and its reversal layer. Head parameters receive the true
/// gradient; the returned feature gradient is scaled by −μ.
pub fn domain_head_backward<T: Real>(
    features: &ArrayView2<T>,
    scores: &ArrayView1<T>,
    target: T,
    coeff: T,
    mu: f64,
    layout: &Layout,
    params: &[T],
    grads: &mut [T],
) -> Result<Array2<T>> {
    let b = scores.len();
    if features.nrows() != b {
        return Err(Error::Shape("score count does not match batch".into()));
    }
    let scale = coeff / real::<T>(b as f64);
    let mut dlogits = Array2::<T>::zeros((b, 1));
    for i in 0..b {
        dlogits[[i, 0]] = (scores[i] - target) * scale;
    }
    accumulate_head(layout, grads, "head.domain", features, &dlogits);
    let w = layout.view2(params, "head.domain.w");
    Ok(grl_backward(&dlogits.dot(&w.t()).view(), mu))
}

/// Backward of `coeff · soft_ce_rows(probs, target)` through the concat head
/// and its reversal layer.
pub fn concat_head_backward<T: Real>(
    features: &ArrayView2<T>,
    probs: &ArrayView2<T>,
    target: &ArrayView1<T>,
    coeff: T,
    mu: f64,
    layout: &Layout,
    params: &[T],
    grads: &mut [T],
) -> Result<Array2<T>> {
    let (b, k) = probs.dim();
    if target.len() != k {
        return Err(Error::Shape("target distribution does not match slot count".into()));
    }
    let scale = coeff / real::<T>(b as f64);
    let mut dlogits = Array2::<T>::zeros((b, k));
    for i in 0..b {
        for j in 0..k {
            dlogits[[i, j]] = (probs[[i, j]] - target[j]) * scale;
        }
    }
    accumulate_head(layout, grads, "head.concat", features, &dlogits);
    let w = layout.view2(params, "head.concat.w");
    Ok(grl_backward(&dlogits.dot(&w.t()).view(), mu))
}
