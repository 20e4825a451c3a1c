//! Training loop, optimizer, evaluation protocol, ablation grid, and
//! checkpointing.
//!
//! One training step encodes a source batch and one batch per target domain,
//! scores the source batch with the object classifier, scores every domain
//! with the reversal-guarded domain classifier, blends features according to
//! the configured strategy, and aggregates the loss terms into the scalar
//! total. Gradients flow back through every branch (domain-classifier
//! gradients reach the encoder negated by the reversal layer) and one
//! decoupled-weight-decay adaptive-moment update is applied.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{
    classify_domain, classify_domain_concat, classify_object, concat_head_backward, concat_mix,
    domain_head_backward, factor_mix, inter_mix_with, inter_pair_count, mensa_mix, mix_pair,
    object_head_backward, sample_lambda, HeadConfig, MixupConfig, MixupStrategy,
};
use crate::data::{make_folds, DomainDataset, PointCloud};
use crate::data::npy::load_domain_dir;
use crate::data::Split;
use crate::encoder::{encode, encode_backward, EncoderConfig};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial, aggregate_total, cross_entropy, domain_confusion, median_bandwidths, rbf_mmd,
    rbf_mmd_backward, soft_binary_ce, soft_ce_rows, EtaSchedule, LossWeights,
};
use crate::nn::Layout;
use crate::rng;
use crate::scalar::{real, to_f64, Real};

/// Batch size used for chunked test-set evaluation.
pub const EVAL_BATCH: usize = 64;

// ── run configuration ───────────────────────────────────────────────────────

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.lr must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "train.weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        for (name, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "train.epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "train.batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// What the run optimizes and on which labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TrainMode {
    /// Labeled training on the source domain, evaluated on the source test
    /// split: the in-domain reference upper bound.
    Supervised,
    /// Labeled source training only, evaluated on the target test splits:
    /// the transfer lower bound.
    NoAdaptation,
    /// Adaptation to a single target domain.
    Stda,
    /// Joint adaptation to all target domains.
    Mtda,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Supervised,
        TrainMode::NoAdaptation,
        TrainMode::Stda,
        TrainMode::Mtda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Supervised => "supervised",
            TrainMode::NoAdaptation => "no_adaptation",
            TrainMode::Stda => "stda",
            TrainMode::Mtda => "mtda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown mode `{s}`, expected supervised|no_adaptation|stda|mtda"
            ))
        })
    }

    /// Whether the mode trains any adaptation loss at all.
    pub fn adapts(self) -> bool {
        matches!(self, TrainMode::Stda | TrainMode::Mtda)
    }
}

/// Which adaptation loss terms stay active; the ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TermMask {
    pub dc: bool,
    pub mmd: bool,
    pub mix: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        TermMask { dc: true, mmd: true, mix: true }
    }
}

impl TermMask {
    /// The seven nonempty subsets, singletons first, full set last.
    pub const SUBSETS: [TermMask; 7] = [
        TermMask { dc: true, mmd: false, mix: false },
        TermMask { dc: false, mmd: true, mix: false },
        TermMask { dc: false, mmd: false, mix: true },
        TermMask { dc: true, mmd: true, mix: false },
        TermMask { dc: true, mmd: false, mix: true },
        TermMask { dc: false, mmd: true, mix: true },
        TermMask { dc: true, mmd: true, mix: true },
    ];

    pub fn name(self) -> String {
        let mut parts = Vec::new();
        if self.dc {
            parts.push("dc");
        }
        if self.mmd {
            parts.push("mmd");
        }
        if self.mix {
            parts.push("mix");
        }
        parts.join("+")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut mask = TermMask { dc: false, mmd: false, mix: false };
        for part in s.split('+') {
            match part.trim() {
                "dc" => mask.dc = true,
                "mmd" => mask.mmd = true,
                "mix" => mask.mix = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown loss term `{other}` in `{s}`, expected dc|mmd|mix joined by `+`"
                    )))
                }
            }
        }
        if mask.is_empty() {
            return Err(Error::Config("loss-term subset must not be empty".into()));
        }
        Ok(mask)
    }

    pub fn is_empty(self) -> bool {
        !(self.dc || self.mmd || self.mix)
    }
}

/// Everything that defines one experiment besides the optimizer loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    pub source: String,
    pub targets: Vec<String>,
    pub mode: TrainMode,
    pub folds: usize,
    pub mixup: MixupConfig,
    pub weights: LossWeights,
    pub eta: EtaSchedule,
    /// Reversal-layer coefficient μ.
    pub grl_mu: f64,
    pub terms: TermMask,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            source: "clean".into(),
            targets: vec!["noisy".into(), "sparse".into()],
            mode: TrainMode::Mtda,
            folds: 3,
            mixup: MixupConfig::default(),
            weights: LossWeights::default(),
            eta: EtaSchedule::default(),
            grl_mu: 1.0,
            terms: TermMask::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.mixup.validate()?;
        self.weights.validate()?;
        self.eta.validate()?;
        if self.source.is_empty() {
            return Err(Error::Config("data.source must not be empty".into()));
        }
        if self.targets.contains(&self.source) {
            return Err(Error::Config(format!(
                "source domain `{}` must not appear among the targets",
                self.source
            )));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(t) {
                return Err(Error::Config(format!("duplicate target domain `{t}`")));
            }
        }
        match self.mode {
            TrainMode::Supervised => {}
            TrainMode::Stda => {
                if self.targets.len() != 1 {
                    return Err(Error::Config(format!(
                        "stda mode needs exactly one target, got {}",
                        self.targets.len()
                    )));
                }
            }
            TrainMode::NoAdaptation | TrainMode::Mtda => {
                if self.targets.is_empty() {
                    return Err(Error::Config(format!(
                        "{} mode needs at least one target",
                        self.mode.name()
                    )));
                }
            }
        }
        if self.mode.adapts() {
            if self.terms.is_empty() {
                return Err(Error::Config("loss-term subset must not be empty".into()));
            }
            if self.mixup.strategy == MixupStrategy::Inter && self.targets.len() < 2 {
                return Err(Error::Config(
                    "inter mixing needs at least two target domains".into(),
                ));
            }
        }
        if !(self.grl_mu >= 0.0 && self.grl_mu.is_finite()) {
            return Err(Error::Config(format!(
                "train.grl_mu must be nonnegative, got {}",
                self.grl_mu
            )));
        }
        if self.folds == 0 {
            return Err(Error::Config("train.folds must be at least 1".into()));
        }
        Ok(())
    }
}

// ── model ───────────────────────────────────────────────────────────────────

/// Encoder plus head sizing for one experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub n_classes: usize,
    pub n_targets: usize,
    pub concat_head: bool,
}

impl ModelConfig {
    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            embed_dim: self.encoder.embed_dim,
            n_classes: self.n_classes,
            n_targets: self.n_targets,
            concat_head: self.concat_head,
        }
    }

    pub fn layout(&self) -> Layout {
        let mut b = Layout::builder();
        self.encoder.register(&mut b);
        self.head_config().register(&mut b);
        b.finish()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.concat_head && self.n_targets == 0 {
            return Err(Error::Config(
                "concat mixing needs at least one target domain".into(),
            ));
        }
        Ok(())
    }
}

/// Flat-parameter model: encoder and heads share one parameter vector
/// addressed through the layout.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout();
        let mut params = vec![T::zero(); layout.total()];
        let mut init_rng = rng::stream(seed, "init", 0);
        cfg.encoder.init(&layout, &mut params, &mut init_rng);
        cfg.head_config().init(&layout, &mut params, &mut init_rng);
        Ok(Model { cfg, layout, params })
    }
}

// ── optimizer ───────────────────────────────────────────────────────────────

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T: Real> {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> AdamW<T> {
    pub fn new(cfg: &TrainConfig, n_params: usize) -> Self {
        AdamW {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    /// Rebuild an optimizer from checkpointed state.
    pub fn from_state(
        learning_rate: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        m: Vec<T>,
        v: Vec<T>,
    ) -> Self {
        AdamW { learning_rate, weight_decay, beta1, beta2, epsilon, step, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    pub fn apply(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let b1 = real::<T>(self.beta1);
        let b2 = real::<T>(self.beta2);
        let one_b1 = real::<T>(1.0 - self.beta1);
        let one_b2 = real::<T>(1.0 - self.beta2);
        let inv_bc1 = real::<T>(1.0 / bc1);
        let inv_bc2 = real::<T>(1.0 / bc2);
        let lr = real::<T>(self.learning_rate);
        let wd = real::<T>(self.weight_decay);
        let eps = real::<T>(self.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            let m_hat = self.m[i] * inv_bc1;
            let v_hat = self.v[i] * inv_bc2;
            params[i] = params[i] - lr * (m_hat / (v_hat.sqrt() + eps) + wd * params[i]);
        }
    }
}

// ── batching ────────────────────────────────────────────────────────────────

/// Cycling mini-batch sampler over a fixed index subset of one dataset.
/// Reshuffles whenever the pool is exhausted, so every batch has exactly the
/// requested size.
pub struct DomainStream<'a> {
    dataset: &'a DomainDataset,
    pool: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> DomainStream<'a> {
    pub fn new(dataset: &'a DomainDataset, subset: Vec<usize>, rng: ChaCha8Rng) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::Config(format!(
                "domain `{}` has no training samples to draw from",
                dataset.name
            )));
        }
        let mut stream = DomainStream { dataset, pool: subset, pos: 0, rng };
        stream.reshuffle();
        Ok(stream)
    }

    fn reshuffle(&mut self) {
        self.pool.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self, size: usize) -> (Vec<&'a PointCloud>, Vec<usize>) {
        let mut clouds = Vec::with_capacity(size);
        let mut labels = Vec::with_capacity(size);
        for _ in 0..size {
            if self.pos == self.pool.len() {
                self.reshuffle();
            }
            let sample = &self.dataset.samples[self.pool[self.pos]];
            self.pos += 1;
            clouds.push(sample);
            labels.push(sample.class_id);
        }
        (clouds, labels)
    }
}

// ── one training step ───────────────────────────────────────────────────────

/// Per-step loss values; `eta` is the schedule value that entered the total.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub dc: f64,
    pub mmd: f64,
    pub mixup: f64,
    pub adv: f64,
    pub total: f64,
    pub eta: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        LossBreakdown { cls: 0.0, dc: 0.0, mmd: 0.0, mixup: 0.0, adv: 0.0, total: 0.0, eta: 0.0 }
    }
}

/// Number of mixing coefficients one step of this spec consumes.
pub fn lambda_count(spec: &ExperimentSpec, n_targets: usize) -> usize {
    if !spec.mode.adapts() || !spec.terms.mix {
        return 0;
    }
    match spec.mixup.strategy {
        MixupStrategy::None => 0,
        MixupStrategy::Inter => inter_pair_count(n_targets),
        _ => 1,
    }
}

fn check_term_finite<T: Real>(value: T, term: &str) -> Result<T> {
    if !to_f64(value).is_finite() {
        return Err(Error::Numeric(format!("non-finite {term} loss; aborting the step")));
    }
    Ok(value)
}

/// Forward (and optionally backward) pass of one step. Mixing coefficients
/// are supplied by the caller so the whole computation is a deterministic
/// function of parameters. When `grads` is given, parameter gradients of the
/// total accumulate into it (domain-branch feature gradients reversed).
/// Returns the breakdown plus the total in working precision.
pub fn step_core<T: Real>(
    model: &Model<T>,
    spec: &ExperimentSpec,
    lambdas: &[T],
    eta: f64,
    source: &[&PointCloud],
    labels: &[usize],
    targets: &[Vec<&PointCloud>],
    mut grads: Option<&mut [T]>,
) -> Result<(LossBreakdown, T)> {
    let layout = &model.layout;
    let params = &model.params[..];
    let enc = &model.cfg.encoder;
    let w = &spec.weights;
    let adapting = spec.mode.adapts();
    let n = targets.len();
    if adapting && n == 0 {
        return Err(Error::Config("adaptation step needs at least one target batch".into()));
    }
    if lambdas.len() != lambda_count(spec, n) {
        return Err(Error::Shape(format!(
            "expected {} mixing coefficients, got {}",
            lambda_count(spec, n),
            lambdas.len()
        )));
    }

    let (fs, tape_s) = encode(source, enc, layout, params)?;
    let probs = classify_object(&fs.view(), layout, params)?;
    let (per_cls, cls_mean) = cross_entropy(&probs.view(), labels)?;
    check_term_finite(cls_mean, "classification")?;

    let mut tgt_feats = Vec::with_capacity(n);
    if adapting {
        for batch in targets {
            tgt_feats.push(encode(batch, enc, layout, params)?);
        }
    }

    let use_dc = adapting && spec.terms.dc;
    let use_mmd = adapting && spec.terms.mmd;
    let use_mix = adapting && spec.terms.mix && spec.mixup.strategy != MixupStrategy::None;

    let mut dc_val = T::zero();
    let mut src_scores = None;
    let mut tgt_scores = Vec::new();
    if use_dc {
        let ss = classify_domain(&fs.view(), layout, params)?;
        for (ft, _) in &tgt_feats {
            tgt_scores.push(classify_domain(&ft.view(), layout, params)?);
        }
        let views: Vec<ArrayView1<T>> = tgt_scores.iter().map(|s| s.view()).collect();
        dc_val = check_term_finite(domain_confusion(&ss.view(), &views)?, "domain-confusion")?;
        src_scores = Some(ss);
    }

    let mut mmd_val = T::zero();
    let mut mmd_bands: Vec<Vec<f64>> = Vec::new();
    if use_mmd {
        let mut total = T::zero();
        for (ft, _) in &tgt_feats {
            let bands = median_bandwidths(&fs.view(), &ft.view());
            total += rbf_mmd(&fs.view(), &ft.view(), &bands)?;
            mmd_bands.push(bands);
        }
        mmd_val = check_term_finite(total / real::<T>(n as f64), "discrepancy")?;
    }

    enum MixState<T: Real> {
        Off,
        PerTarget { mixes: Vec<Array2<T>>, scores: Vec<Array1<T>> },
        Pooled { mix: Array2<T>, scores: Array1<T> },
        Wide { wide: Array2<T>, probs: Array2<T>, label: Array1<T> },
        TargetOnly { mix: Array2<T>, scores: Array1<T> },
    }

    let mut mix_val = T::zero();
    let mix_state = if use_mix {
        let tviews: Vec<_> = tgt_feats.iter().map(|(ft, _)| ft.view()).collect();
        match spec.mixup.strategy {
            MixupStrategy::None => MixState::Off,
            MixupStrategy::Sep => {
                let lam = lambdas[0];
                let mut mixes = Vec::with_capacity(n);
                let mut scores = Vec::with_capacity(n);
                let mut sum = T::zero();
                for tv in &tviews {
                    let m = mix_pair(&fs.view(), tv, lam)?;
                    let s = classify_domain(&m.view(), layout, params)?;
                    sum += soft_binary_ce(&s.view(), lam)?;
                    mixes.push(m);
                    scores.push(s);
                }
                mix_val = sum / real::<T>(n as f64);
                MixState::PerTarget { mixes, scores }
            }
            MixupStrategy::MEnsA => {
                let lam = lambdas[0];
                let pairs: Result<Vec<Array2<T>>> =
                    tviews.iter().map(|tv| mix_pair(&fs.view(), tv, lam)).collect();
                let mix = mensa_mix(&pairs?)?;
                let scores = classify_domain(&mix.view(), layout, params)?;
                mix_val = soft_binary_ce(&scores.view(), lam)?;
                MixState::Pooled { mix, scores }
            }
            MixupStrategy::Factor => {
                let lam = lambdas[0];
                let mix = factor_mix(&fs.view(), &tviews, lam)?;
                let scores = classify_domain(&mix.view(), layout, params)?;
                mix_val = soft_binary_ce(&scores.view(), lam)?;
                MixState::Pooled { mix, scores }
            }
            MixupStrategy::Concat => {
                let lam = lambdas[0];
                let (wide, label) = concat_mix(&fs.view(), &tviews, lam)?;
                let probs = classify_domain_concat(&wide.view(), layout, params)?;
                mix_val = soft_ce_rows(&probs.view(), &label.view())?;
                MixState::Wide { wide, probs, label }
            }
            MixupStrategy::Inter => {
                let mix = inter_mix_with(&tviews, lambdas)?;
                let scores = classify_domain(&mix.view(), layout, params)?;
                mix_val = soft_binary_ce(&scores.view(), T::zero())?;
                MixState::TargetOnly { mix, scores }
            }
        }
    } else {
        MixState::Off
    };
    check_term_finite(mix_val, "mixup")?;

    let adv_val = adversarial(mmd_val, dc_val, mix_val, w);
    let (total, row_weights) = aggregate_total(&per_cls.view(), dc_val, adv_val, eta, w)?;

    let breakdown = LossBreakdown {
        cls: to_f64(cls_mean),
        dc: to_f64(dc_val),
        mmd: to_f64(mmd_val),
        mixup: to_f64(mix_val),
        adv: to_f64(adv_val),
        total: to_f64(total),
        eta,
    };

    let Some(grads) = grads.as_deref_mut() else {
        return Ok((breakdown, total));
    };

    let mu = spec.grl_mu;
    let n_t = real::<T>(n.max(1) as f64);
    let mut d_fs = object_head_backward(
        &fs.view(),
        &probs.view(),
        labels,
        &row_weights.view(),
        layout,
        params,
        grads,
    )?;
    let mut d_ft: Vec<Array2<T>> =
        tgt_feats.iter().map(|(ft, _)| Array2::zeros(ft.raw_dim())).collect();

    if use_dc {
        let c_dc = real::<T>(eta + w.zeta * w.lambda2);
        let ss = src_scores.as_ref().unwrap();
        d_fs += &domain_head_backward(
            &fs.view(),
            &ss.view(),
            T::one(),
            c_dc,
            mu,
            layout,
            params,
            grads,
        )?;
        for (i, scores) in tgt_scores.iter().enumerate() {
            let (ft, _) = &tgt_feats[i];
            d_ft[i] += &domain_head_backward(
                &ft.view(),
                &scores.view(),
                T::zero(),
                c_dc / n_t,
                mu,
                layout,
                params,
                grads,
            )?;
        }
    }

    if use_mmd {
        let c_pair = real::<T>(w.zeta * w.lambda1) / n_t;
        for (i, (ft, _)) in tgt_feats.iter().enumerate() {
            let (dx, dy) = rbf_mmd_backward(&fs.view(), &ft.view(), &mmd_bands[i], c_pair);
            d_fs += &dx;
            d_ft[i] += &dy;
        }
    }

    let c_mix = w.zeta * w.lambda3;
    if c_mix != 0.0 {
        match &mix_state {
            MixState::Off => {}
            MixState::PerTarget { mixes, scores } => {
                let lam = lambdas[0];
                for i in 0..n {
                    let d_mix = domain_head_backward(
                        &mixes[i].view(),
                        &scores[i].view(),
                        lam,
                        real::<T>(c_mix) / n_t,
                        mu,
                        layout,
                        params,
                        grads,
                    )?;
                    d_fs.scaled_add(lam, &d_mix);
                    d_ft[i].scaled_add(T::one() - lam, &d_mix);
                }
            }
            MixState::Pooled { mix, scores } => {
                let lam = lambdas[0];
                let d_mix = domain_head_backward(
                    &mix.view(),
                    &scores.view(),
                    lam,
                    real::<T>(c_mix),
                    mu,
                    layout,
                    params,
                    grads,
                )?;
                d_fs.scaled_add(lam, &d_mix);
                let share = (T::one() - lam) / n_t;
                for df in d_ft.iter_mut() {
                    df.scaled_add(share, &d_mix);
                }
            }
            MixState::Wide { wide, probs, label } => {
                let lam = lambdas[0];
                let d_wide = concat_head_backward(
                    &wide.view(),
                    &probs.view(),
                    &label.view(),
                    real::<T>(c_mix),
                    mu,
                    layout,
                    params,
                    grads,
                )?;
                let d = model.cfg.encoder.embed_dim;
                d_fs.scaled_add(lam, &d_wide.slice(s![.., 0..d]));
                let share = (T::one() - lam) / n_t;
                for (i, df) in d_ft.iter_mut().enumerate() {
                    df.scaled_add(share, &d_wide.slice(s![.., (i + 1) * d..(i + 2) * d]));
                }
            }
            MixState::TargetOnly { mix, scores } => {
                let d_mix = domain_head_backward(
                    &mix.view(),
                    &scores.view(),
                    T::zero(),
                    real::<T>(c_mix),
                    mu,
                    layout,
                    params,
                    grads,
                )?;
                let pairs = real::<T>(inter_pair_count(n) as f64);
                let mut p = 0usize;
                for i in 0..n {
                    for j in (i + 1)..n {
                        d_ft[i].scaled_add(lambdas[p] / pairs, &d_mix);
                        d_ft[j].scaled_add((T::one() - lambdas[p]) / pairs, &d_mix);
                        p += 1;
                    }
                }
            }
        }
    }

    encode_backward(enc, layout, params, &tape_s, &d_fs.view(), grads)?;
    for (i, (_, tape)) in tgt_feats.iter().enumerate() {
        encode_backward(enc, layout, params, tape, &d_ft[i].view(), grads)?;
    }

    Ok((breakdown, total))
}

/// Owns the model, optimizer, gradient buffer, and the mixing-coefficient
/// stream for one training run.
pub struct Trainer<T: Real> {
    pub model: Model<T>,
    pub opt: AdamW<T>,
    pub spec: ExperimentSpec,
    total_epochs: usize,
    lambda_rng: ChaCha8Rng,
    grads: Vec<T>,
}

impl<T: Real> Trainer<T> {
    pub fn new(
        model: Model<T>,
        opt: AdamW<T>,
        spec: ExperimentSpec,
        total_epochs: usize,
        seed: u64,
        fold: usize,
    ) -> Self {
        let grads = vec![T::zero(); model.layout.total()];
        Trainer {
            model,
            opt,
            spec,
            total_epochs,
            lambda_rng: rng::stream(seed, "lambda", fold as u64),
            grads,
        }
    }

    /// Position of the mixing-coefficient stream, for exact resumption.
    pub fn lambda_state(&self) -> u128 {
        self.lambda_rng.get_word_pos()
    }

    pub fn seek_lambda(&mut self, pos: u128) {
        self.lambda_rng.set_word_pos(pos);
    }

    fn draw_lambdas(&mut self, n_targets: usize) -> Result<Vec<T>> {
        let count = lambda_count(&self.spec, n_targets);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(real::<T>(sample_lambda(self.spec.mixup.alpha, &mut self.lambda_rng)?));
        }
        Ok(out)
    }

    /// One optimization step on the given batches.
    pub fn step(
        &mut self,
        source: &[&PointCloud],
        labels: &[usize],
        targets: &[Vec<&PointCloud>],
        epoch: usize,
    ) -> Result<LossBreakdown> {
        let breakdown = self.compute_gradients(source, labels, targets, epoch)?;
        self.opt.apply(&mut self.model.params, &self.grads);
        Ok(breakdown)
    }

    /// Forward + backward without applying the update; gradients stay
    /// readable through [`Trainer::gradients`].
    pub fn compute_gradients(
        &mut self,
        source: &[&PointCloud],
        labels: &[usize],
        targets: &[Vec<&PointCloud>],
        epoch: usize,
    ) -> Result<LossBreakdown> {
        let eta = self.spec.eta.eta(epoch, self.total_epochs);
        let lambdas = self.draw_lambdas(targets.len())?;
        self.grads.iter_mut().for_each(|g| *g = T::zero());
        let (breakdown, _) = step_core(
            &self.model,
            &self.spec,
            &lambdas,
            eta,
            source,
            labels,
            targets,
            Some(&mut self.grads),
        )?;
        Ok(breakdown)
    }

    pub fn gradients(&self) -> &[T] {
        &self.grads
    }
}

// ── corpus ──────────────────────────────────────────────────────────────────

/// Train and test splits of one domain.
pub struct DomainData {
    pub name: String,
    pub train: DomainDataset,
    pub test: DomainDataset,
}

/// All domains of one experiment, class-consistent.
pub struct Corpus {
    pub source: DomainData,
    pub targets: Vec<DomainData>,
    pub class_names: Vec<String>,
}

impl Corpus {
    pub fn new(source: DomainData, targets: Vec<DomainData>) -> Result<Self> {
        let class_names = source.train.class_names.clone();
        for ds in [&source.train, &source.test]
            .into_iter()
            .chain(targets.iter().flat_map(|t| [&t.train, &t.test]))
        {
            if ds.class_names != class_names {
                return Err(Error::Config(format!(
                    "domain `{}` has classes {:?}, expected {:?}",
                    ds.name, ds.class_names, class_names
                )));
            }
            if ds.samples.is_empty() {
                return Err(Error::Config(format!(
                    "domain `{}` {} split is empty",
                    ds.name,
                    ds.split.dir_name()
                )));
            }
        }
        if class_names.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        Ok(Corpus { source, targets, class_names })
    }

    /// Load source and targets from `<root>/<domain>/<class>/<split>/*.npy`.
    pub fn load(
        root: &Path,
        source: &str,
        targets: &[String],
        n_points: usize,
        seed: u64,
    ) -> Result<Self> {
        let load_domain = |name: &str, id: usize| -> Result<DomainData> {
            Ok(DomainData {
                name: name.to_string(),
                train: load_domain_dir(root, name, id, Split::Train, n_points, seed)?,
                test: load_domain_dir(root, name, id, Split::Test, n_points, seed)?,
            })
        };
        let source_data = load_domain(source, 0)?;
        let mut target_data = Vec::with_capacity(targets.len());
        for (i, t) in targets.iter().enumerate() {
            target_data.push(load_domain(t, i + 1)?);
        }
        Corpus::new(source_data, target_data)
    }
}

// ── evaluation ──────────────────────────────────────────────────────────────

/// Top-1 evaluation outcome over one test split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Percentage of samples whose highest-probability class is correct.
    pub accuracy: f64,
    /// Per-class accuracy percentages (0 for classes absent from the split).
    pub per_class: Vec<f64>,
    pub class_counts: Vec<usize>,
}

fn argmax_row<T: Real>(row: &ArrayView1<T>) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Chunked top-1 accuracy of the object classifier on one dataset.
pub fn evaluate_top1<T: Real>(model: &Model<T>, dataset: &DomainDataset) -> Result<EvalResult> {
    if dataset.samples.is_empty() {
        return Err(Error::data(
            Path::new(&dataset.name),
            "cannot evaluate an empty dataset",
        ));
    }
    let k = model.cfg.n_classes;
    let mut counts = vec![0usize; k];
    let mut correct = vec![0usize; k];
    for chunk in dataset.samples.chunks(EVAL_BATCH) {
        let refs: Vec<&PointCloud> = chunk.iter().collect();
        let (emb, _) = encode(&refs, &model.cfg.encoder, &model.layout, &model.params)?;
        let probs = classify_object(&emb.view(), &model.layout, &model.params)?;
        for (row, cloud) in probs.rows().into_iter().zip(chunk) {
            if cloud.class_id >= k {
                return Err(Error::Shape(format!(
                    "sample class id {} out of range for {k} classes",
                    cloud.class_id
                )));
            }
            counts[cloud.class_id] += 1;
            if argmax_row(&row) == cloud.class_id {
                correct[cloud.class_id] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let right: usize = correct.iter().sum();
    let per_class = counts
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
        .collect();
    Ok(EvalResult {
        accuracy: 100.0 * right as f64 / total as f64,
        per_class,
        class_counts: counts,
    })
}

// ── full runs ───────────────────────────────────────────────────────────────

/// Per-domain accuracy statistics over folds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TargetMetrics {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub fold_accuracies: Vec<f64>,
    /// Per-class accuracies averaged over folds.
    pub per_class: Vec<f64>,
}

/// Final artifact of one experiment run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub source: String,
    pub mode: String,
    pub strategy: String,
    pub aggregator: String,
    pub terms: String,
    pub seed: u64,
    pub folds: usize,
    pub epochs: usize,
    pub class_names: Vec<String>,
    /// Evaluated domains: the targets, or the source itself in supervised
    /// mode.
    pub targets: Vec<TargetMetrics>,
    /// Arithmetic mean of the per-domain means.
    pub average: f64,
    /// Per-epoch step-averaged losses, averaged over folds.
    pub epoch_losses: Vec<LossBreakdown>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data { path: "<report>".into(), reason: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data { path: path.into(), reason: format!("invalid report: {e}") })
    }
}

/// Model, optimizer, and report produced by [`train_mtda`]; the model is the
/// one trained on the last fold.
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub opt: AdamW<f32>,
    pub report: MetricsReport,
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Run one experiment end to end: per fold, train on the fold's complement
/// of each training split and evaluate on the fixed test splits; aggregate
/// accuracies over folds.
pub fn train_mtda(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    tcfg: &TrainConfig,
    enc: &EncoderConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    tcfg.validate()?;
    if corpus.source.name != spec.source {
        return Err(Error::Config(format!(
            "corpus source `{}` does not match configured source `{}`",
            corpus.source.name, spec.source
        )));
    }
    let corpus_targets: Vec<&str> = corpus.targets.iter().map(|t| t.name.as_str()).collect();
    let spec_targets: Vec<&str> = spec.targets.iter().map(|s| s.as_str()).collect();
    if corpus_targets != spec_targets {
        return Err(Error::Config(format!(
            "corpus targets {corpus_targets:?} do not match configured targets {spec_targets:?}"
        )));
    }

    let adapting = spec.mode.adapts();
    let seed = tcfg.seed;
    let folds = spec.folds;
    let mcfg = ModelConfig {
        encoder: enc.clone(),
        n_classes: corpus.class_names.len(),
        n_targets: spec.targets.len(),
        concat_head: adapting && spec.mixup.strategy.needs_concat_head(),
    };

    let src_ids: Vec<usize> =
        corpus.source.train.samples.iter().map(|s| s.class_id).collect();
    let src_folds = if folds > 1 {
        Some(make_folds(&src_ids, folds, &mut rng::stream(seed, "folds", 0))?)
    } else {
        None
    };
    let mut tgt_folds = Vec::new();
    if adapting {
        for (i, t) in corpus.targets.iter().enumerate() {
            tgt_folds.push(if folds > 1 {
                let unlabeled = vec![0usize; t.train.samples.len()];
                Some(make_folds(&unlabeled, folds, &mut rng::stream(seed, "folds", 1 + i as u64))?)
            } else {
                None
            });
        }
    }

    let eval_domains: Vec<&DomainData> = match spec.mode {
        TrainMode::Supervised => vec![&corpus.source],
        _ => corpus.targets.iter().collect(),
    };

    let mut fold_accs: Vec<Vec<f64>> = vec![Vec::new(); eval_domains.len()];
    let mut fold_classes: Vec<Vec<Vec<f64>>> = vec![Vec::new(); eval_domains.len()];
    let mut fold_epochs: Vec<Vec<LossBreakdown>> = Vec::new();
    let mut last: Option<(Model<f32>, AdamW<f32>)> = None;

    for fold in 0..folds {
        let model = Model::<f32>::new(mcfg.clone(), seed)?;
        let opt = AdamW::new(tcfg, model.layout.total());
        let mut trainer =
            Trainer::new(model, opt, spec.clone(), tcfg.epochs, seed, fold);

        let src_subset = match &src_folds {
            Some(f) => f.complement_indices(fold),
            None => (0..corpus.source.train.samples.len()).collect(),
        };
        let steps_per_epoch = src_subset.len().div_ceil(tcfg.batch_size).max(1);
        let mut src_stream = DomainStream::new(
            &corpus.source.train,
            src_subset,
            rng::stream(seed, &format!("batch:{}", corpus.source.name), fold as u64),
        )?;
        let mut tgt_streams = Vec::new();
        if adapting {
            for (i, t) in corpus.targets.iter().enumerate() {
                let subset = match &tgt_folds[i] {
                    Some(f) => f.complement_indices(fold),
                    None => (0..t.train.samples.len()).collect(),
                };
                tgt_streams.push(DomainStream::new(
                    &t.train,
                    subset,
                    rng::stream(seed, &format!("batch:{}", t.name), fold as u64),
                )?);
            }
        }

        let mut epoch_rows = Vec::with_capacity(tcfg.epochs);
        for epoch in 0..tcfg.epochs {
            let mut acc = LossBreakdown::zero();
            for _ in 0..steps_per_epoch {
                let (src_batch, labels) = src_stream.next_batch(tcfg.batch_size);
                let tgt_batches: Vec<Vec<&PointCloud>> = tgt_streams
                    .iter_mut()
                    .map(|s| s.next_batch(tcfg.batch_size).0)
                    .collect();
                let bd = trainer.step(&src_batch, &labels, &tgt_batches, epoch)?;
                acc.cls += bd.cls;
                acc.dc += bd.dc;
                acc.mmd += bd.mmd;
                acc.mixup += bd.mixup;
                acc.adv += bd.adv;
                acc.total += bd.total;
                acc.eta = bd.eta;
            }
            let steps = steps_per_epoch as f64;
            acc.cls /= steps;
            acc.dc /= steps;
            acc.mmd /= steps;
            acc.mixup /= steps;
            acc.adv /= steps;
            acc.total /= steps;
            epoch_rows.push(acc);
        }
        fold_epochs.push(epoch_rows);

        for (d, dom) in eval_domains.iter().enumerate() {
            let res = evaluate_top1(&trainer.model, &dom.test)?;
            fold_accs[d].push(res.accuracy);
            fold_classes[d].push(res.per_class);
        }
        last = Some((trainer.model, trainer.opt));
    }

    let k = corpus.class_names.len();
    let mut targets_out = Vec::with_capacity(eval_domains.len());
    for (d, dom) in eval_domains.iter().enumerate() {
        let accs = &fold_accs[d];
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let per_class = (0..k)
            .map(|c| fold_classes[d].iter().map(|f| f[c]).sum::<f64>() / folds as f64)
            .collect();
        targets_out.push(TargetMetrics {
            name: dom.name.clone(),
            mean,
            std: population_std(accs, mean),
            fold_accuracies: accs.clone(),
            per_class,
        });
    }
    let average =
        targets_out.iter().map(|t| t.mean).sum::<f64>() / targets_out.len().max(1) as f64;
    let epoch_losses = (0..tcfg.epochs)
        .map(|e| {
            let mut acc = LossBreakdown::zero();
            for rows in &fold_epochs {
                acc.cls += rows[e].cls;
                acc.dc += rows[e].dc;
                acc.mmd += rows[e].mmd;
                acc.mixup += rows[e].mixup;
                acc.adv += rows[e].adv;
                acc.total += rows[e].total;
                acc.eta = rows[e].eta;
            }
            let f = folds as f64;
            acc.cls /= f;
            acc.dc /= f;
            acc.mmd /= f;
            acc.mixup /= f;
            acc.adv /= f;
            acc.total /= f;
            acc
        })
        .collect();

    let (model, opt) = last.expect("at least one fold");
    let report = MetricsReport {
        source: spec.source.clone(),
        mode: spec.mode.name().to_string(),
        strategy: spec.mixup.strategy.name().to_string(),
        aggregator: spec.weights.aggregator.name().to_string(),
        terms: spec.terms.name(),
        seed,
        folds,
        epochs: tcfg.epochs,
        class_names: corpus.class_names.clone(),
        targets: targets_out,
        average,
        epoch_losses,
    };
    Ok(TrainOutcome { model, opt, report })
}

/// Train one run per loss-term subset; the full subset reproduces the
/// unrestricted run exactly.
pub fn run_ablation(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    tcfg: &TrainConfig,
    enc: &EncoderConfig,
) -> Result<Vec<(String, MetricsReport)>> {
    let mut rows = Vec::with_capacity(TermMask::SUBSETS.len());
    for mask in TermMask::SUBSETS {
        let mut sub = spec.clone();
        sub.terms = mask;
        let outcome = train_mtda(corpus, &sub, tcfg, enc)?;
        rows.push((mask.name(), outcome.report));
    }
    Ok(rows)
}

// ── loss CSV ────────────────────────────────────────────────────────────────

pub const LOSS_CSV_HEADER: &str = "epoch,loss_cls,loss_dc,loss_mmd,loss_mixup,loss_total,eta";

/// Write the per-epoch loss table.
pub fn write_losses_csv(path: &Path, rows: &[LossBreakdown]) -> Result<()> {
    let mut text = String::from(LOSS_CSV_HEADER);
    text.push('\n');
    for (epoch, bd) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{epoch},{},{},{},{},{},{}\n",
            bd.cls, bd.dc, bd.mmd, bd.mixup, bd.total, bd.eta
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ── checkpointing ───────────────────────────────────────────────────────────

const CKPT_MAGIC: &[u8; 8] = b"MTDACKPT";
const CKPT_VERSION: u32 = 1;

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint {}: needed {} bytes at offset {}, file has {}",
                self.path.display(),
                n,
                self.pos,
                self.data.len()
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            Error::Checkpoint(format!(
                "corrupt checkpoint {}: non-UTF-8 parameter name",
                self.path.display()
            ))
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Checkpoint(format!(
                "corrupt checkpoint {}: {} trailing bytes",
                self.path.display(),
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_string(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

/// Serialize model and optimizer to a single binary file, written atomically
/// via a temporary sibling.
pub fn save_checkpoint(model: &Model<f32>, opt: &AdamW<f32>, path: &Path) -> Result<()> {
    let cfg = &model.cfg;
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut buf, CKPT_VERSION);
    put_u32(&mut buf, cfg.n_classes as u32);
    put_u32(&mut buf, cfg.n_targets as u32);
    put_u32(&mut buf, cfg.concat_head as u32);
    put_u32(&mut buf, cfg.encoder.embed_dim as u32);
    put_u32(&mut buf, cfg.encoder.attention_nodes as u32);
    put_u32(&mut buf, cfg.encoder.point_mlp_widths.len() as u32);
    for w in &cfg.encoder.point_mlp_widths {
        put_u32(&mut buf, *w as u32);
    }
    buf.extend_from_slice(&opt.step_count().to_le_bytes());
    for v in [opt.learning_rate, opt.weight_decay, opt.beta1, opt.beta2, opt.epsilon] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    put_u32(&mut buf, model.layout.segments().len() as u32);
    for seg in model.layout.segments() {
        put_string(&mut buf, &seg.name);
        put_u32(&mut buf, seg.shape.len() as u32);
        for d in &seg.shape {
            put_u32(&mut buf, *d as u32);
        }
    }
    let (m, v) = opt.moments();
    for arr in [&model.params[..], m, v] {
        for x in arr {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Read a checkpoint back. When `expected` is given, its layout must match
/// the stored one parameter by parameter.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<(Model<f32>, AdamW<f32>)> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader { data: &data, pos: 0, path };
    let magic = r.take(8)?;
    if magic != CKPT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} has format version {version}, this build reads version {CKPT_VERSION}",
            path.display()
        )));
    }
    let n_classes = r.u32()? as usize;
    let n_targets = r.u32()? as usize;
    let concat_head = r.u32()? != 0;
    let embed_dim = r.u32()? as usize;
    let attention_nodes = r.u32()? as usize;
    let n_widths = r.u32()? as usize;
    let mut point_mlp_widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        point_mlp_widths.push(r.u32()? as usize);
    }
    let cfg = ModelConfig {
        encoder: EncoderConfig { point_mlp_widths, embed_dim, attention_nodes },
        n_classes,
        n_targets,
        concat_head,
    };
    cfg.validate()?;

    let step = r.u64()?;
    let learning_rate = r.f64()?;
    let weight_decay = r.f64()?;
    let beta1 = r.f64()?;
    let beta2 = r.f64()?;
    let epsilon = r.f64()?;

    let layout = cfg.layout();
    let n_segs = r.u32()? as usize;
    if n_segs != layout.segments().len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} stores {n_segs} parameter tensors, layout has {}",
            path.display(),
            layout.segments().len()
        )));
    }
    for seg in layout.segments() {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if name != seg.name || shape != seg.shape {
            return Err(Error::Checkpoint(format!(
                "checkpoint parameter `{name}` with shape {shape:?} does not match \
                 expected `{}` with shape {:?}",
                seg.name, seg.shape
            )));
        }
    }

    if let Some(exp) = expected {
        for (a, b) in exp.layout().segments().iter().zip(layout.segments()) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Checkpoint(format!(
                    "checkpoint parameter `{}` has shape {:?}, expected `{}` with shape {:?}",
                    b.name, b.shape, a.name, a.shape
                )));
            }
        }
        if exp != &cfg {
            return Err(Error::Checkpoint(format!(
                "checkpoint model configuration {cfg:?} does not match expected {exp:?}"
            )));
        }
    }

    let total = layout.total();
    let params = r.f32_vec(total)?;
    let m = r.f32_vec(total)?;
    let v = r.f32_vec(total)?;
    r.finish()?;

    let model = Model { cfg, layout, params };
    let opt =
        AdamW::from_state(learning_rate, weight_decay, beta1, beta2, epsilon, step, m, v);
    Ok((model, opt))
}
