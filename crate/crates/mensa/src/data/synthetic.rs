//! Synthetic multi-domain point-cloud benchmark.
//!
//! Classes are geometric primitives sampled area-uniformly on their surface.
//! A domain is defined by a distortion pipeline applied to each raw cloud:
//! occlusion cut → density subsample → clipped jitter → Euler rotation →
//! normalize → resample to the configured point count.
//!
//! Every pipeline stage draws from its own derived RNG stream keyed by
//! (seed, stage, split, class, sample) — deliberately *not* by domain — so
//! two domains generated from the same seed contain the same underlying
//! object instances, distorted according to each domain's shift. That makes
//! the domain gap a controlled transform rather than an object resampling.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

use super::{
    normalize_unit_sphere, resample_indices, DomainDataset, PointCloud, Split, MIN_CLOUD_POINTS,
};

// ── shape classes ───────────────────────────────────────────────────────────

/// Primitive shape families used as classification classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] =
        [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Cone, ShapeKind::Torus];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }

    pub fn parse(s: &str) -> Result<ShapeKind> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown shape class `{s}`")))
    }
}

// ── domain shift ────────────────────────────────────────────────────────────

/// Distortion pipeline defining one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainShiftSpec {
    pub name: String,
    /// Fraction of points kept by the density subsample, in (0, 1].
    pub density_keep: f64,
    /// Per-coordinate Gaussian jitter σ (clipped to ±3σ), ≥ 0.
    pub jitter_sigma: f64,
    /// Fraction of points removed by the half-space occlusion cut, in [0, 1).
    pub occlusion_fraction: f64,
    /// Half-widths (radians) of the uniform Euler angle draw about x, y, z.
    pub rot_x: f64,
    pub rot_y: f64,
    pub rot_z: f64,
    /// Centers (radians) of the Euler angle draws: a systematic orientation
    /// bias shared by every cloud of the domain.
    pub rot_x_bias: f64,
    pub rot_y_bias: f64,
    pub rot_z_bias: f64,
}

impl DomainShiftSpec {
    /// No-op shift: the clean domain.
    pub fn identity(name: impl Into<String>) -> Self {
        DomainShiftSpec {
            name: name.into(),
            density_keep: 1.0,
            jitter_sigma: 0.0,
            occlusion_fraction: 0.0,
            rot_x: 0.0,
            rot_y: 0.0,
            rot_z: 0.0,
            rot_x_bias: 0.0,
            rot_y_bias: 0.0,
            rot_z_bias: 0.0,
        }
    }

    fn rotates(&self) -> bool {
        self.rot_x > 0.0
            || self.rot_y > 0.0
            || self.rot_z > 0.0
            || self.rot_x_bias != 0.0
            || self.rot_y_bias != 0.0
            || self.rot_z_bias != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density_keep > 0.0 && self.density_keep <= 1.0) {
            return Err(Error::Config(format!(
                "density keep fraction for `{}` must lie in (0, 1], got {}",
                self.name, self.density_keep
            )));
        }
        if self.jitter_sigma < 0.0 {
            return Err(Error::Config(format!(
                "jitter sigma for `{}` must be non-negative, got {}",
                self.name, self.jitter_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::Config(format!(
                "occlusion fraction for `{}` must lie in [0, 1), got {}",
                self.name, self.occlusion_fraction
            )));
        }
        for (axis, v) in [("x", self.rot_x), ("y", self.rot_y), ("z", self.rot_z)] {
            if v < 0.0 {
                return Err(Error::Config(format!(
                    "rotation half-range {axis} for `{}` must be non-negative, got {v}",
                    self.name
                )));
            }
        }
        for (axis, v) in
            [("x", self.rot_x_bias), ("y", self.rot_y_bias), ("z", self.rot_z_bias)]
        {
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "rotation bias {axis} for `{}` must be finite, got {v}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Size and sampling parameters shared by all domains of one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<ShapeKind>,
    /// Training samples per class.
    pub per_class: usize,
    /// Test samples per class.
    pub test_per_class: usize,
    /// Final points per cloud after resampling.
    pub cloud_points: usize,
    /// Raw surface samples drawn before distortion.
    pub surface_points: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("synthetic benchmark needs at least one class".into()));
        }
        if self.per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("per-class sample counts must be positive".into()));
        }
        if self.cloud_points < MIN_CLOUD_POINTS {
            return Err(Error::Config(format!(
                "cloud point count must be at least {MIN_CLOUD_POINTS}, got {}",
                self.cloud_points
            )));
        }
        if self.surface_points < MIN_CLOUD_POINTS {
            return Err(Error::Config(format!(
                "surface point count must be at least {MIN_CLOUD_POINTS}, got {}",
                self.surface_points
            )));
        }
        Ok(())
    }
}

// ── generation ──────────────────────────────────────────────────────────────

fn stage_rng(seed: u64, stage: &str, split: Split, class: usize, sample: usize) -> ChaCha8Rng {
    let split_id = match split {
        Split::Train => 0u64,
        Split::Test => 1u64,
    };
    let index = (split_id << 60) | ((class as u64) << 40) | sample as u64;
    rng::stream(seed, stage, index)
}

/// Generate one full domain (all classes, one split).
pub fn generate_domain(
    spec: &SynthSpec,
    shift: &DomainShiftSpec,
    domain_id: usize,
    split: Split,
) -> Result<DomainDataset> {
    spec.validate()?;
    shift.validate()?;
    let per_class = match split {
        Split::Train => spec.per_class,
        Split::Test => spec.test_per_class,
    };
    let mut samples = Vec::with_capacity(per_class * spec.classes.len());
    for (class_id, kind) in spec.classes.iter().enumerate() {
        for sample_idx in 0..per_class {
            let points = generate_sample(spec, shift, split, *kind, class_id, sample_idx)?;
            samples.push(PointCloud { points, class_id, domain_id });
        }
    }
    Ok(DomainDataset {
        name: shift.name.clone(),
        domain_id,
        split,
        class_names: spec.classes.iter().map(|k| k.name().to_string()).collect(),
        samples,
    })
}

/// Run the full distortion pipeline for one sample.
fn generate_sample(
    spec: &SynthSpec,
    shift: &DomainShiftSpec,
    split: Split,
    kind: ShapeKind,
    class_id: usize,
    sample_idx: usize,
) -> Result<Array2<f32>> {
    let mut geom = stage_rng(spec.seed, "geom", split, class_id, sample_idx);
    let mut pts = sample_surface(kind, spec.surface_points, &mut geom);

    if shift.occlusion_fraction > 0.0 {
        let mut occ = stage_rng(spec.seed, "occlusion", split, class_id, sample_idx);
        pts = occlusion_cut(&pts, shift.occlusion_fraction, &mut occ);
    }
    if shift.density_keep < 1.0 {
        let mut dens = stage_rng(spec.seed, "density", split, class_id, sample_idx);
        pts = density_subsample(&pts, shift.density_keep, &mut dens);
    }
    if pts.nrows() < MIN_CLOUD_POINTS {
        return Err(Error::Generation(format!(
            "sample {sample_idx} of class `{}` in domain `{}` degenerated to {} points \
             (minimum {MIN_CLOUD_POINTS}); raise surface points or lower occlusion/density loss",
            kind.name(),
            shift.name,
            pts.nrows()
        )));
    }
    if shift.jitter_sigma > 0.0 {
        let mut jit = stage_rng(spec.seed, "jitter", split, class_id, sample_idx);
        apply_jitter(&mut pts, shift.jitter_sigma, &mut jit);
    }
    if shift.rotates() {
        let mut rot = stage_rng(spec.seed, "rotation", split, class_id, sample_idx);
        let alpha = draw_angle(shift.rot_x_bias, shift.rot_x, &mut rot);
        let beta = draw_angle(shift.rot_y_bias, shift.rot_y, &mut rot);
        let gamma = draw_angle(shift.rot_z_bias, shift.rot_z, &mut rot);
        apply_euler(&mut pts, alpha, beta, gamma);
    }

    normalize_unit_sphere(&mut pts)?;
    let mut res = stage_rng(spec.seed, "resample", split, class_id, sample_idx);
    let indices = resample_indices(pts.nrows(), spec.cloud_points, &mut res)?;
    let mut out = Array2::<f32>::zeros((spec.cloud_points, 3));
    for (row, &i) in indices.iter().enumerate() {
        for c in 0..3 {
            out[[row, c]] = pts[[i, c]] as f32;
        }
    }
    Ok(out)
}

fn draw_angle(bias: f64, half_range: f64, rng: &mut ChaCha8Rng) -> f64 {
    if half_range > 0.0 {
        bias + rng.random_range(-half_range..half_range)
    } else {
        bias
    }
}

// ── pipeline stages ─────────────────────────────────────────────────────────

/// Remove the `fraction` of points farthest along a random direction.
fn occlusion_cut(pts: &Array2<f64>, fraction: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = pts.nrows();
    let cut = ((fraction * m as f64).round() as usize).min(m);
    if cut == 0 {
        return pts.clone();
    }
    let dir = random_unit_vector(rng);
    let mut order: Vec<usize> = (0..m).collect();
    let proj: Vec<f64> = (0..m)
        .map(|i| pts[[i, 0]] * dir[0] + pts[[i, 1]] * dir[1] + pts[[i, 2]] * dir[2])
        .collect();
    order.sort_unstable_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    order.truncate(m - cut);
    order.sort_unstable();
    gather(pts, &order)
}

/// Keep a uniform random subset of round(keep · m) points.
fn density_subsample(pts: &Array2<f64>, keep: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = pts.nrows();
    let target = ((keep * m as f64).round() as usize).min(m);
    if target == m {
        return pts.clone();
    }
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..target {
        let j = rng.random_range(i..m);
        idx.swap(i, j);
    }
    idx.truncate(target);
    idx.sort_unstable();
    gather(pts, &idx)
}

fn apply_jitter(pts: &mut Array2<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    let dist = Normal::new(0.0, sigma).expect("positive sigma");
    let clip = 3.0 * sigma;
    for v in pts.iter_mut() {
        *v += dist.sample(rng).clamp(-clip, clip);
    }
}

/// Apply R = Rz(γ)·Ry(β)·Rx(α) to every point.
fn apply_euler(pts: &mut Array2<f64>, alpha: f64, beta: f64, gamma: f64) {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let r = [
        [cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa],
        [sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa],
        [-sb, cb * sa, cb * ca],
    ];
    for mut row in pts.rows_mut() {
        let p = [row[0], row[1], row[2]];
        for (k, rk) in r.iter().enumerate() {
            row[k] = rk[0] * p[0] + rk[1] * p[1] + rk[2] * p[2];
        }
    }
}

fn gather(pts: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((idx.len(), 3));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&pts.row(i));
    }
    out
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

// ── surface sampling ────────────────────────────────────────────────────────

/// Area-weighted surface sample of one shape instance; geometry parameters
/// are drawn from `rng` first, so each sample is a distinct object.
fn sample_surface(kind: ShapeKind, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    match kind {
        ShapeKind::Sphere => sample_sphere(m, rng),
        ShapeKind::Box => sample_box(m, rng),
        ShapeKind::Cylinder => sample_cylinder(m, rng),
        ShapeKind::Cone => sample_cone(m, rng),
        ShapeKind::Torus => sample_torus(m, rng),
    }
}

fn sample_sphere(m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((m, 3));
    for mut row in out.rows_mut() {
        let u = random_unit_vector(rng);
        row[0] = u[0];
        row[1] = u[1];
        row[2] = u[2];
    }
    out
}

fn sample_box(m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = rng.random_range(0.4..1.0);
    let b = rng.random_range(0.4..1.0);
    let c = rng.random_range(0.4..1.0);
    let half = [a, b, c];
    // Face areas for the pairs (y,z), (x,z), (x,y); each pair has two faces.
    let areas = [b * c, a * c, a * b];
    let total: f64 = areas.iter().sum::<f64>() * 2.0;
    let mut out = Array2::<f64>::zeros((m, 3));
    for mut row in out.rows_mut() {
        let mut pick = rng.random_range(0.0..total);
        let mut axis = 0;
        for (i, &ar) in areas.iter().enumerate() {
            if pick < 2.0 * ar {
                axis = i;
                break;
            }
            pick -= 2.0 * ar;
        }
        let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
        let mut p = [0.0f64; 3];
        p[axis] = sign * half[axis];
        let others = [(axis + 1) % 3, (axis + 2) % 3];
        for &o in &others {
            p[o] = rng.random_range(-half[o]..half[o]);
        }
        row[0] = p[0];
        row[1] = p[1];
        row[2] = p[2];
    }
    out
}

fn sample_cylinder(m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let r = rng.random_range(0.25..0.5);
    let h = rng.random_range(1.2..2.0);
    let lateral = std::f64::consts::TAU * r * h;
    let caps = 2.0 * std::f64::consts::PI * r * r;
    let total = lateral + caps;
    let mut out = Array2::<f64>::zeros((m, 3));
    for mut row in out.rows_mut() {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        if rng.random_range(0.0..total) < lateral {
            let z = rng.random_range(-h / 2.0..h / 2.0);
            row[0] = r * theta.cos();
            row[1] = r * theta.sin();
            row[2] = z;
        } else {
            let rho = r * rng.random_range(0.0f64..1.0).sqrt();
            let z = if rng.random_range(0.0..1.0) < 0.5 { -h / 2.0 } else { h / 2.0 };
            row[0] = rho * theta.cos();
            row[1] = rho * theta.sin();
            row[2] = z;
        }
    }
    out
}

fn sample_cone(m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let r: f64 = rng.random_range(0.4..0.7);
    let h: f64 = rng.random_range(0.9..1.5);
    let slant = (r * r + h * h).sqrt();
    let lateral = std::f64::consts::PI * r * slant;
    let base = std::f64::consts::PI * r * r;
    let total = lateral + base;
    let mut out = Array2::<f64>::zeros((m, 3));
    for mut row in out.rows_mut() {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        if rng.random_range(0.0..total) < lateral {
            // Area density grows linearly from the apex: t = √u.
            let t = rng.random_range(0.0f64..1.0).sqrt();
            let rho = r * t;
            row[0] = rho * theta.cos();
            row[1] = rho * theta.sin();
            row[2] = h * (1.0 - t);
        } else {
            let rho = r * rng.random_range(0.0f64..1.0).sqrt();
            row[0] = rho * theta.cos();
            row[1] = rho * theta.sin();
            row[2] = 0.0;
        }
    }
    out
}

fn sample_torus(m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let big_r = rng.random_range(0.6..0.8);
    let small_r = rng.random_range(0.15..0.3);
    let mut out = Array2::<f64>::zeros((m, 3));
    for mut row in out.rows_mut() {
        // Rejection on the tube angle keeps the sample area-uniform.
        let phi = loop {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let accept = (big_r + small_r * phi.cos()) / (big_r + small_r);
            if rng.random_range(0.0..1.0) < accept {
                break phi;
            }
        };
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let ring = big_r + small_r * phi.cos();
        row[0] = ring * theta.cos();
        row[1] = ring * theta.sin();
        row[2] = small_r * phi.sin();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chamfer;

    fn tiny_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            classes: vec![ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Cone],
            per_class: 3,
            test_per_class: 2,
            cloud_points: 64,
            surface_points: 256,
            seed,
        }
    }

    #[test]
    fn domain_has_expected_counts_and_labels() {
        let spec = tiny_spec(11);
        let shift = DomainShiftSpec::identity("clean");
        let train = generate_domain(&spec, &shift, 0, Split::Train).unwrap();
        let test = generate_domain(&spec, &shift, 0, Split::Test).unwrap();
        assert_eq!(train.len(), 12);
        assert_eq!(test.len(), 8);
        assert_eq!(train.class_counts(), vec![3, 3, 3, 3]);
        assert_eq!(test.class_counts(), vec![2, 2, 2, 2]);
        for s in &train.samples {
            assert_eq!(s.points.shape(), &[64, 3]);
            assert_eq!(s.domain_id, 0);
        }
    }

    #[test]
    fn clouds_sit_inside_the_unit_ball() {
        let spec = tiny_spec(11);
        let shift = DomainShiftSpec {
            density_keep: 0.5,
            jitter_sigma: 0.01,
            occlusion_fraction: 0.3,
            rot_x: 0.4,
            rot_y: 0.4,
            rot_z: std::f64::consts::PI,
            ..DomainShiftSpec::identity("sparse")
        };
        let ds = generate_domain(&spec, &shift, 2, Split::Train).unwrap();
        for s in &ds.samples {
            for p in s.points.rows() {
                let r: f32 = p.iter().map(|v| v * v).sum::<f32>().sqrt();
                assert!(r <= 1.0 + 1e-5, "point radius {r} outside unit ball");
            }
        }
    }

    #[test]
    fn pure_rotation_bias_rigidly_rotates_the_clean_cloud() {
        let spec = tiny_spec(33);
        let clean = DomainShiftSpec::identity("clean");
        let tilted = DomainShiftSpec {
            rot_z_bias: std::f64::consts::FRAC_PI_2,
            ..DomainShiftSpec::identity("clean")
        };
        let a = generate_domain(&spec, &clean, 1, Split::Train).unwrap();
        let b = generate_domain(&spec, &tilted, 1, Split::Train).unwrap();
        for (ca, cb) in a.samples.iter().zip(&b.samples) {
            for (pa, pb) in ca.points.rows().into_iter().zip(cb.points.rows()) {
                // 90° about z maps (x, y, z) to (−y, x, z); normalization
                // commutes with a rigid rotation.
                assert!((pb[0] + pa[1]).abs() < 1e-5, "{pb} vs {pa}");
                assert!((pb[1] - pa[0]).abs() < 1e-5, "{pb} vs {pa}");
                assert!((pb[2] - pa[2]).abs() < 1e-5, "{pb} vs {pa}");
            }
        }
    }

    #[test]
    fn generation_is_bit_identical_for_same_seed() {
        let spec = tiny_spec(42);
        let shift = DomainShiftSpec {
            density_keep: 0.8,
            jitter_sigma: 0.02,
            occlusion_fraction: 0.2,
            rot_x: 0.3,
            rot_y: 0.3,
            rot_z: 1.0,
            ..DomainShiftSpec::identity("noisy")
        };
        let a = generate_domain(&spec, &shift, 1, Split::Train).unwrap();
        let b = generate_domain(&spec, &shift, 1, Split::Train).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.points, y.points);
            assert_eq!(x.class_id, y.class_id);
        }
        let other = generate_domain(&tiny_spec(43), &shift, 1, Split::Train).unwrap();
        assert!(a.samples.iter().zip(&other.samples).any(|(x, y)| x.points != y.points));
    }

    #[test]
    fn jitter_displacement_matches_sigma() {
        // Same seed, identity vs jitter-only shift: stage streams are keyed
        // identically, so clouds correspond point-to-point and the empirical
        // displacement std must track σ (clipping at 3σ shaves ≈1.5%).
        let spec = SynthSpec {
            classes: vec![ShapeKind::Box],
            per_class: 10,
            test_per_class: 1,
            cloud_points: 512,
            surface_points: 512,
            seed: 7,
        };
        let sigma = 0.02;
        let clean = generate_domain(&spec, &DomainShiftSpec::identity("clean"), 0, Split::Train)
            .unwrap();
        let jittered = generate_domain(
            &spec,
            &DomainShiftSpec {
                jitter_sigma: sigma,
                ..DomainShiftSpec::identity("jit")
            },
            1,
            Split::Train,
        )
        .unwrap();
        let mut sq_sum = 0.0f64;
        let mut count = 0usize;
        for (a, b) in clean.samples.iter().zip(&jittered.samples) {
            for (p, q) in a.points.rows().into_iter().zip(b.points.rows()) {
                for k in 0..3 {
                    let d = (q[k] - p[k]) as f64;
                    sq_sum += d * d;
                    count += 1;
                }
            }
        }
        assert!(count >= 10_000, "need at least 10k displacement coordinates");
        let std = (sq_sum / count as f64).sqrt();
        assert!(
            (std - sigma).abs() <= 0.2 * sigma,
            "displacement std {std} strays more than 20% from σ = {sigma}"
        );
    }

    #[test]
    fn heavier_shift_increases_chamfer_distance() {
        // Mean cloud distance to the clean rendition must grow with σ.
        let spec = SynthSpec {
            classes: vec![ShapeKind::Box, ShapeKind::Cone],
            per_class: 50,
            test_per_class: 1,
            cloud_points: 64,
            surface_points: 128,
            seed: 3,
        };
        let clean = generate_domain(&spec, &DomainShiftSpec::identity("clean"), 0, Split::Train)
            .unwrap();
        let mut means = Vec::new();
        for sigma in [0.02, 0.08] {
            let shifted = generate_domain(
                &spec,
                &DomainShiftSpec { jitter_sigma: sigma, ..DomainShiftSpec::identity("s") },
                1,
                Split::Train,
            )
            .unwrap();
            let total: f64 = clean
                .samples
                .iter()
                .zip(&shifted.samples)
                .map(|(a, b)| chamfer(&a.points.view(), &b.points.view()))
                .sum();
            means.push(total / clean.len() as f64);
        }
        assert!(
            means[1] > means[0],
            "chamfer should grow with jitter: {means:?}"
        );
    }

    #[test]
    fn occlusion_removes_exact_fraction() {
        let mut rng = rng::stream(5, "occl", 0);
        let pts = sample_sphere(1000, &mut rng);
        let cut = occlusion_cut(&pts, 0.4, &mut rng);
        assert_eq!(cut.nrows(), 600);
        let cut_zero = occlusion_cut(&pts, 0.0, &mut rng);
        assert_eq!(cut_zero.nrows(), 1000);
    }

    #[test]
    fn degenerate_sample_reports_generation_error() {
        let spec = SynthSpec {
            classes: vec![ShapeKind::Sphere],
            per_class: 1,
            test_per_class: 1,
            cloud_points: 16,
            surface_points: 16,
            seed: 0,
        };
        let shift = DomainShiftSpec {
            density_keep: 0.3,
            occlusion_fraction: 0.4,
            ..DomainShiftSpec::identity("harsh")
        };
        let err = generate_domain(&spec, &shift, 0, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Generation(_)), "got {err:?}");
        assert!(err.to_string().contains("harsh"));
    }

    #[test]
    fn shapes_have_plausible_extents() {
        let mut rng = rng::stream(9, "shape", 0);
        for kind in ShapeKind::ALL {
            let pts = sample_surface(kind, 512, &mut rng);
            assert_eq!(pts.nrows(), 512);
            let max_r = pts
                .rows()
                .into_iter()
                .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
                .fold(0.0f64, f64::max);
            assert!(max_r > 0.3 && max_r < 2.5, "{} extent {max_r}", kind.name());
            assert!(pts.iter().all(|v| v.is_finite()));
        }
    }
}
