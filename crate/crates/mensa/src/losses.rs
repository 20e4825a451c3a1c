//! Loss terms and their composition.
//!
//! The total objective combines per-sample classification loss with two
//! batch-level alignment terms: a domain-confusion loss and an adversarial
//! bundle (kernel two-sample penalty + domain confusion + mixup loss, fixed
//! weights λ1/λ2/λ3). Batches aggregate either by mean or by a smooth
//! log-sum-exp that emphasizes the worst samples; both expose per-sample
//! weights so backward passes reuse one code path.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Real};

/// Floor for probabilities entering a logarithm.
const LOG_EPS: f64 = 1e-12;

// ── weights and schedule ────────────────────────────────────────────────────

/// Batch aggregation mode for the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Aggregator {
    /// Smooth maximum: (1/γ)·ln Σ exp(γ·v_b).
    Lse,
    /// Plain mean over the batch.
    Sum,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Lse => "lse",
            Aggregator::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lse" => Ok(Aggregator::Lse),
            "sum" => Ok(Aggregator::Sum),
            other => Err(Error::Config(format!("unknown aggregator `{other}`, expected lse|sum"))),
        }
    }
}

/// Fixed mixing weights of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// Weight of the kernel two-sample term inside the adversarial bundle.
    pub lambda1: f64,
    /// Weight of the domain-confusion term inside the adversarial bundle.
    pub lambda2: f64,
    /// Weight of the mixup term inside the adversarial bundle.
    pub lambda3: f64,
    /// Weight of the adversarial bundle in the per-sample objective.
    pub zeta: f64,
    /// LSE sharpness.
    pub gamma: f64,
    pub aggregator: Aggregator,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 5.0,
            lambda2: 5.0,
            lambda3: 1.2,
            zeta: 1.0,
            gamma: 1.0,
            aggregator: Aggregator::Lse,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("loss.lambda1", self.lambda1),
            ("loss.lambda2", self.lambda2),
            ("loss.lambda3", self.lambda3),
            ("loss.zeta", self.zeta),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{key} must be finite and non-negative, got {v}")));
            }
        }
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::Config(format!("loss.gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Exponential ramp of the domain-confusion weight over training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EtaSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule { start: 0.1, end: 0.9 }
    }
}

impl EtaSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.start <= 0.0 || self.end <= 0.0 {
            return Err(Error::Config(format!(
                "schedule endpoints must be positive, got start {} end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// η at `epoch` of `total_epochs`: start·exp(ln(end/start)·e/N).
    pub fn eta(&self, epoch: usize, total_epochs: usize) -> f64 {
        let n = total_epochs.max(1) as f64;
        self.start * ((self.end / self.start).ln() * epoch as f64 / n).exp()
    }
}

// ── classification losses ───────────────────────────────────────────────────

/// Cross-entropy between row-stochastic predictions and integer labels.
/// Returns per-sample losses and their mean.
pub fn cross_entropy<T: Real>(
    probs: &ArrayView2<T>,
    labels: &[usize],
) -> Result<(Array1<T>, T)> {
    let (b, k) = probs.dim();
    if b == 0 {
        return Err(Error::Shape("cross entropy on an empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::Shape(format!("{b} predictions but {} labels", labels.len())));
    }
    let eps = real::<T>(LOG_EPS);
    let mut per_sample = Array1::<T>::zeros(b);
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Shape(format!("label {label} out of range for {k} classes")));
        }
        per_sample[i] = -probs[[i, label]].max(eps).ln();
    }
    let mean = per_sample.sum() / real::<T>(b as f64);
    if !mean.is_finite() {
        return Err(Error::Numeric("classification loss is not finite".into()));
    }
    Ok((per_sample, mean))
}

/// Binary cross-entropy of sigmoid scores against one soft target, averaged
/// over the batch.
pub fn soft_binary_ce<T: Real>(scores: &ArrayView1<T>, target: T) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Shape("binary cross entropy on an empty batch".into()));
    }
    let eps = real::<T>(LOG_EPS);
    let one = T::one();
    let mut total = T::zero();
    for &p in scores {
        let p_pos = p.max(eps);
        let p_neg = (one - p).max(eps);
        total += -(target * p_pos.ln() + (one - target) * p_neg.ln());
    }
    let mean = total / real::<T>(scores.len() as f64);
    if !mean.is_finite() {
        return Err(Error::Numeric("domain loss is not finite".into()));
    }
    Ok(mean)
}

/// Cross-entropy of row-stochastic predictions against one shared soft label
/// distribution, averaged over rows.
pub fn soft_ce_rows<T: Real>(probs: &ArrayView2<T>, target: &ArrayView1<T>) -> Result<T> {
    let (b, k) = probs.dim();
    if b == 0 {
        return Err(Error::Shape("soft cross entropy on an empty batch".into()));
    }
    if target.len() != k {
        return Err(Error::Shape(format!("{k} slots but target has {}", target.len())));
    }
    let eps = real::<T>(LOG_EPS);
    let mut total = T::zero();
    for row in probs.rows() {
        for (p, y) in row.iter().zip(target.iter()) {
            total += -*y * p.max(eps).ln();
        }
    }
    let mean = total / real::<T>(b as f64);
    if !mean.is_finite() {
        return Err(Error::Numeric("mixup loss is not finite".into()));
    }
    Ok(mean)
}

/// Domain-confusion loss: source scored against 1 plus the mean over targets
/// of each target scored against 0.
pub fn domain_confusion<T: Real>(
    source_scores: &ArrayView1<T>,
    target_scores: &[ArrayView1<T>],
) -> Result<T> {
    if target_scores.is_empty() {
        return Err(Error::Shape("domain confusion needs at least one target".into()));
    }
    let mut loss = soft_binary_ce(source_scores, T::one())?;
    let mut target_sum = T::zero();
    for scores in target_scores {
        target_sum += soft_binary_ce(scores, T::zero())?;
    }
    loss += target_sum / real::<T>(target_scores.len() as f64);
    Ok(loss)
}

/// Adversarial bundle: λ1·mmd + λ2·dc + λ3·mixup.
pub fn adversarial<T: Real>(mmd: T, dc: T, mixup: T, w: &LossWeights) -> T {
    real::<T>(w.lambda1) * mmd + real::<T>(w.lambda2) * dc + real::<T>(w.lambda3) * mixup
}

// ── kernel two-sample penalty ───────────────────────────────────────────────

/// Default multipliers applied to the median-heuristic bandwidth.
pub const BANDWIDTH_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Median-heuristic bandwidth set: the median pairwise distance of the pooled
/// rows, scaled by [`BANDWIDTH_FACTORS`]. Falls back to 1 when all rows
/// coincide.
pub fn median_bandwidths<T: Real>(x: &ArrayView2<T>, y: &ArrayView2<T>) -> Vec<f64> {
    let mut dists: Vec<f64> = Vec::new();
    let rows: Vec<ArrayView1<T>> =
        x.rows().into_iter().chain(y.rows()).collect();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d: f64 = rows[i]
                .iter()
                .zip(rows[j].iter())
                .map(|(&a, &b)| {
                    let d = to_f64(a - b);
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            dists.push(d);
        }
    }
    let sigma = if dists.is_empty() {
        1.0
    } else {
        let mid = dists.len() / 2;
        let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
        if *median > 0.0 {
            *median
        } else {
            1.0
        }
    };
    BANDWIDTH_FACTORS.iter().map(|f| f * sigma).collect()
}

/// Squared Euclidean distances between all row pairs.
fn sq_dists<T: Real>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Array2<T> {
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = Array2::<T>::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut s = T::zero();
            for (&x, &y) in a.row(i).iter().zip(b.row(j).iter()) {
                let d = x - y;
                s += d * d;
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Biased (V-statistic) multi-bandwidth RBF maximum mean discrepancy:
/// Σ_σ [ mean k_σ(X,X) + mean k_σ(Y,Y) − 2·mean k_σ(X,Y) ], with
/// k_σ(a,b) = exp(−‖a−b‖² / (2σ²)). Tiny negative totals clamp to zero.
pub fn rbf_mmd<T: Real>(
    x: &ArrayView2<T>,
    y: &ArrayView2<T>,
    bandwidths: &[f64],
) -> Result<T> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::Shape(format!(
            "two-sample penalty needs at least 2 rows per side, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "two-sample penalty dims differ: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if bandwidths.is_empty() {
        return Err(Error::Config("bandwidth set must not be empty".into()));
    }
    let dxx = sq_dists(x, x);
    let dyy = sq_dists(y, y);
    let dxy = sq_dists(x, y);
    let mut total = T::zero();
    for &sigma in bandwidths {
        if sigma <= 0.0 {
            return Err(Error::Config(format!("bandwidths must be positive, got {sigma}")));
        }
        let inv = real::<T>(-1.0 / (2.0 * sigma * sigma));
        let kxx = dxx.mapv(|d| (d * inv).exp());
        let kyy = dyy.mapv(|d| (d * inv).exp());
        let kxy = dxy.mapv(|d| (d * inv).exp());
        let m2 = real::<T>((x.nrows() * x.nrows()) as f64);
        let n2 = real::<T>((y.nrows() * y.nrows()) as f64);
        let mn = real::<T>((x.nrows() * y.nrows()) as f64);
        total += kxx.sum() / m2 + kyy.sum() / n2 - real::<T>(2.0) * kxy.sum() / mn;
    }
    if !total.is_finite() {
        return Err(Error::Numeric("two-sample penalty is not finite".into()));
    }
    if total < T::zero() {
        total = T::zero();
    }
    Ok(total)
}

/// Gradient of `coeff · rbf_mmd(x, y, bandwidths)` with respect to both
/// inputs; bandwidths are treated as constants.
pub fn rbf_mmd_backward<T: Real>(
    x: &ArrayView2<T>,
    y: &ArrayView2<T>,
    bandwidths: &[f64],
    coeff: T,
) -> (Array2<T>, Array2<T>) {
    let m = x.nrows();
    let n = y.nrows();
    let dxx = sq_dists(x, x);
    let dyy = sq_dists(y, y);
    let dxy = sq_dists(x, y);
    let mut dx = Array2::<T>::zeros(x.raw_dim());
    let mut dy = Array2::<T>::zeros(y.raw_dim());
    for &sigma in bandwidths {
        let inv = real::<T>(-1.0 / (2.0 * sigma * sigma));
        let kxx = dxx.mapv(|d| (d * inv).exp());
        let kyy = dyy.mapv(|d| (d * inv).exp());
        let kxy = dxy.mapv(|d| (d * inv).exp());
        let s2 = real::<T>(sigma * sigma);
        // d mean k(X,X) / dx_i = −2/(m²σ²) · Σ_j k_ij (x_i − x_j).
        let cxx = coeff * real::<T>(-2.0 / (m * m) as f64) / s2;
        let row_xx = kxx.sum_axis(ndarray::Axis(1));
        for i in 0..m {
            for c in 0..x.ncols() {
                dx[[i, c]] += cxx * (row_xx[i] * x[[i, c]] - kxx.row(i).dot(&x.column(c)));
            }
        }
        let cyy = coeff * real::<T>(-2.0 / (n * n) as f64) / s2;
        let row_yy = kyy.sum_axis(ndarray::Axis(1));
        for i in 0..n {
            for c in 0..y.ncols() {
                dy[[i, c]] += cyy * (row_yy[i] * y[[i, c]] - kyy.row(i).dot(&y.column(c)));
            }
        }
        // −2·mean k(X,Y): pushes x_i toward near y_j and vice versa.
        let cxy = coeff * real::<T>(2.0 / (m * n) as f64) / s2;
        let row_xy = kxy.sum_axis(ndarray::Axis(1));
        let col_xy = kxy.sum_axis(ndarray::Axis(0));
        for i in 0..m {
            for c in 0..x.ncols() {
                dx[[i, c]] += cxy * (row_xy[i] * x[[i, c]] - kxy.row(i).dot(&y.column(c)));
            }
        }
        for j in 0..n {
            for c in 0..y.ncols() {
                dy[[j, c]] += cxy * (col_xy[j] * y[[j, c]] - kxy.column(j).dot(&x.column(c)));
            }
        }
    }
    (dx, dy)
}

// ── aggregation ─────────────────────────────────────────────────────────────

/// Combine per-sample classification losses with batch-level terms into the
/// total loss: v_b = cls_b + η·dc + ζ·adv, aggregated per `w.aggregator`.
///
/// Also returns per-sample weights w_b with Σw_b = 1 such that
/// ∂total/∂cls_b = w_b; batch-level terms then have ∂total/∂dc = η + ζ·λ2
/// (via the bundle) and so on, identically for both aggregators.
pub fn aggregate_total<T: Real>(
    cls_per_sample: &ArrayView1<T>,
    dc: T,
    adv: T,
    eta: f64,
    w: &LossWeights,
) -> Result<(T, Array1<T>)> {
    let b = cls_per_sample.len();
    if b == 0 {
        return Err(Error::Shape("cannot aggregate an empty batch".into()));
    }
    let shared = real::<T>(eta) * dc + real::<T>(w.zeta) * adv;
    let v = cls_per_sample.mapv(|c| c + shared);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("total loss input is not finite".into()));
    }
    match w.aggregator {
        Aggregator::Sum => {
            let inv_b = real::<T>(1.0 / b as f64);
            let total = v.sum() * inv_b;
            Ok((total, Array1::from_elem(b, inv_b)))
        }
        Aggregator::Lse => {
            let gamma = real::<T>(w.gamma);
            let m = v.iter().cloned().fold(T::neg_infinity(), T::max);
            let exps = v.mapv(|x| ((x - m) * gamma).exp());
            let z = exps.sum();
            let total = m + z.ln() / gamma;
            if !total.is_finite() {
                return Err(Error::Numeric("aggregated loss is not finite".into()));
            }
            Ok((total, exps / z))
        }
    }
}
