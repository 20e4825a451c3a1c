//! Point-cloud datasets: containers, normalization, resampling, fold splits,
//! augmentation, and cloud-level distances.
//!
//! Clouds are stored as N×3 f32 row matrices. Every randomized operation
//! takes an explicit generator so callers control determinism.

pub mod npy;
pub mod synthetic;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Clouds smaller than this are considered degenerate.
pub const MIN_CLOUD_POINTS: usize = 8;

/// Dataset split role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Directory name used in the on-disk layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One labeled point cloud.
#[derive(Debug, Clone)]
pub struct PointCloud {
    /// N×3 coordinates.
    pub points: Array2<f32>,
    /// Index into the owning dataset's `class_names`.
    pub class_id: usize,
    /// Index of the domain this cloud belongs to.
    pub domain_id: usize,
}

/// All samples of one split of one domain.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    /// Domain name, e.g. `clean` or `modelnet`.
    pub name: String,
    pub domain_id: usize,
    pub split: Split,
    /// Sorted class vocabulary shared by every sample.
    pub class_names: Vec<String>,
    pub samples: Vec<PointCloud>,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }
}

// ── normalization ───────────────────────────────────────────────────────────

/// Center on the centroid and scale so the farthest point sits on the unit
/// sphere. A cloud of identical points collapses to all zeros.
pub fn normalize_unit_sphere<T: Real>(points: &mut Array2<T>) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::Shape("cannot normalize an empty point cloud".into()));
    }
    if points.ncols() != 3 {
        return Err(Error::Shape(format!("expected N×3 points, got N×{}", points.ncols())));
    }
    let centroid = points.mean_axis(Axis(0)).expect("non-empty");
    for mut row in points.rows_mut() {
        row -= &centroid;
    }
    let max_r = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    if max_r > T::zero() {
        points.mapv_inplace(|v| v / max_r);
    }
    Ok(())
}

// ── resampling ──────────────────────────────────────────────────────────────

/// Index plan for resampling `m` points to exactly `n`: a uniform subsample
/// without replacement when `m ≥ n`, otherwise all originals followed by
/// uniform draws with replacement.
pub fn resample_indices(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Shape("cannot resample an empty point cloud".into()));
    }
    if n == 0 {
        return Err(Error::Shape("cannot resample to zero points".into()));
    }
    if m >= n {
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..n {
            let j = rng.random_range(i..m);
            idx.swap(i, j);
        }
        idx.truncate(n);
        Ok(idx)
    } else {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.extend((0..n - m).map(|_| rng.random_range(0..m)));
        Ok(idx)
    }
}

/// Resample a cloud to exactly `n` points via [`resample_indices`].
pub fn resample_points<T: Real>(
    points: &ArrayView2<T>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<T>> {
    let indices = resample_indices(points.nrows(), n, rng)?;
    let mut out = Array2::<T>::zeros((n, 3));
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).assign(&points.row(i));
    }
    Ok(out)
}

// ── fold splits ─────────────────────────────────────────────────────────────

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub k: usize,
    /// `assignments[i]` is the fold of sample `i`.
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    /// Indices held out by fold `fold`.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of every sample *not* in fold `fold`.
    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-fold sample counts.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment: samples of each class are shuffled and dealt
/// round-robin, with the dealing position carried across classes so global
/// fold sizes differ by at most one.
pub fn make_folds(class_ids: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    let n_classes = class_ids.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in class_ids.iter().enumerate() {
        by_class[c].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Config(format!(
                "class {c} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
    }
    let mut assignments = vec![0usize; class_ids.len()];
    let mut offset = 0usize;
    for members in by_class.iter_mut() {
        for i in 0..members.len() {
            let j = rng.random_range(i..members.len());
            members.swap(i, j);
        }
        for (pos, &sample) in members.iter().enumerate() {
            assignments[sample] = (offset + pos) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldSplit { k, assignments })
}

// ── augmentation ────────────────────────────────────────────────────────────

/// Optional training-time augmentation: uniform rotation about z, then
/// per-coordinate Gaussian jitter clipped to ±3σ.
pub fn augment(
    points: &mut Array2<f32>,
    jitter_sigma: f64,
    rotate_z: bool,
    rng: &mut ChaCha8Rng,
) {
    if rotate_z {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (sin, cos) = (theta.sin() as f32, theta.cos() as f32);
        for mut row in points.rows_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = cos * x - sin * y;
            row[1] = sin * x + cos * y;
        }
    }
    if jitter_sigma > 0.0 {
        let dist = rand_distr::Normal::new(0.0f64, jitter_sigma).expect("positive sigma");
        let clip = 3.0 * jitter_sigma;
        for v in points.iter_mut() {
            let d = rng.sample(dist).clamp(-clip, clip);
            *v += d as f32;
        }
    }
}

// ── cloud distance ──────────────────────────────────────────────────────────

/// Symmetric Chamfer distance: mean nearest-neighbor Euclidean distance from
/// `a` to `b` plus the reverse.
pub fn chamfer(a: &ArrayView2<f32>, b: &ArrayView2<f32>) -> f64 {
    fn one_way(from: &ArrayView2<f32>, to: &ArrayView2<f32>) -> f64 {
        let mut total = 0.0f64;
        for p in from.rows() {
            let mut best = f64::INFINITY;
            for q in to.rows() {
                let d = p
                    .iter()
                    .zip(q.iter())
                    .map(|(x, y)| {
                        let d = (x - y) as f64;
                        d * d
                    })
                    .sum::<f64>();
                if d < best {
                    best = d;
                }
            }
            total += best.sqrt();
        }
        total / from.nrows() as f64
    }
    one_way(a, b) + one_way(b, a)
}
