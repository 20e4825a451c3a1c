//! Flat-parameter neural-net substrate.
//!
//! All trainable weights for a model live in one contiguous `Vec<T>`; a
//! [`Layout`] maps stable names to (offset, shape) segments. Gradients use a
//! second vector with the identical layout. This keeps the optimizer a single
//! loop, makes checkpoints a name/shape manifest plus raw arrays, and lets
//! finite-difference checks perturb any scalar by index.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

// ── parameter layout ────────────────────────────────────────────────────────

/// One named parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    /// Element count of this segment.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered name → segment map covering a flat parameter vector.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    segments: Vec<Segment>,
    by_name: HashMap<String, usize>,
    total: usize,
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder { layout: Layout::default() }
    }

    /// Total scalar count across all segments.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Segments in registration order.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Look up a segment by name; panics on unknown names since every name
    /// is a compile-time constant owned by this crate.
    pub fn seg(&self, name: &str) -> &Segment {
        let idx = self.by_name.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.segments[*idx]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    /// Immutable 2-D view of one segment.
    pub fn view2<'a, T>(&self, data: &'a [T], name: &str) -> ArrayView2<'a, T> {
        let s = self.seg(name);
        assert_eq!(s.shape.len(), 2, "{name} is not 2-D");
        ArrayView2::from_shape((s.shape[0], s.shape[1]), &data[s.offset..s.offset + s.len()])
            .expect("segment bounds")
    }

    /// Immutable 1-D view of one segment.
    pub fn view1<'a, T>(&self, data: &'a [T], name: &str) -> ArrayView1<'a, T> {
        let s = self.seg(name);
        assert_eq!(s.shape.len(), 1, "{name} is not 1-D");
        ArrayView1::from_shape(s.shape[0], &data[s.offset..s.offset + s.len()]).expect("segment bounds")
    }

    /// Mutable 2-D view of one segment.
    pub fn view2_mut<'a, T>(&self, data: &'a mut [T], name: &str) -> ArrayViewMut2<'a, T> {
        let s = self.seg(name);
        assert_eq!(s.shape.len(), 2, "{name} is not 2-D");
        ArrayViewMut2::from_shape((s.shape[0], s.shape[1]), &mut data[s.offset..s.offset + s.len()])
            .expect("segment bounds")
    }

    /// Mutable 1-D view of one segment.
    pub fn view1_mut<'a, T>(&self, data: &'a mut [T], name: &str) -> ArrayViewMut1<'a, T> {
        let s = self.seg(name);
        assert_eq!(s.shape.len(), 1, "{name} is not 1-D");
        ArrayViewMut1::from_shape(s.shape[0], &mut data[s.offset..s.offset + s.len()])
            .expect("segment bounds")
    }
}

/// Incremental layout construction in registration order.
pub struct LayoutBuilder {
    layout: Layout,
}

impl LayoutBuilder {
    /// Register one tensor; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>) -> &mut Self {
        let name = name.into();
        assert!(!self.layout.by_name.contains_key(&name), "duplicate parameter {name}");
        let seg = Segment { name: name.clone(), shape, offset: self.layout.total };
        self.layout.total += seg.len();
        self.layout.by_name.insert(name, self.layout.segments.len());
        self.layout.segments.push(seg);
        self
    }

    pub fn finish(self) -> Layout {
        self.layout
    }
}

// ── initialization ──────────────────────────────────────────────────────────

/// Fan-in uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_fan_in<T: Real>(rng: &mut ChaCha8Rng, fan_in: usize, out: &mut [T]) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in out.iter_mut() {
        *v = real(rng.random_range(-bound..bound));
    }
}

/// Zero init for residual branches and biases.
pub fn init_zero<T: Real>(out: &mut [T]) {
    for v in out.iter_mut() {
        *v = T::zero();
    }
}

// ── dense layer ─────────────────────────────────────────────────────────────

/// y = x · W + b, with W: in×out and b: out.
pub fn dense_forward<T: Real>(
    x: &ArrayView2<T>,
    w: &ArrayView2<T>,
    b: &ArrayView1<T>,
) -> Result<Array2<T>> {
    if x.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "dense input width {} does not match weight rows {}",
            x.ncols(),
            w.nrows()
        )));
    }
    let mut y = x.dot(w);
    y += b;
    Ok(y)
}

/// Backward pass for `dense_forward`; accumulates into `dw`/`db`, returns dx.
pub fn dense_backward<T: Real>(
    x: &ArrayView2<T>,
    w: &ArrayView2<T>,
    dy: &ArrayView2<T>,
    mut dw: ArrayViewMut2<T>,
    mut db: ArrayViewMut1<T>,
) -> Array2<T> {
    dw += &x.t().dot(dy);
    db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

// ── activations ─────────────────────────────────────────────────────────────

/// Elementwise tanh.
pub fn tanh<T: Real>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| v.tanh())
}

/// Backward through tanh given the forward *output* `y`: dx = dy ⊙ (1 − y²).
pub fn tanh_backward<T: Real>(y: &ArrayView2<T>, dy: &ArrayView2<T>) -> Array2<T> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(y, |g, &t| *g *= T::one() - t * t);
    dx
}

/// Row-wise softmax with max-shift for stability.
pub fn softmax_rows<T: Real>(x: &ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Column-wise softmax with max-shift for stability.
pub fn softmax_cols<T: Real>(x: &ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut col in out.columns_mut() {
        let m = col.iter().cloned().fold(T::neg_infinity(), T::max);
        col.mapv_inplace(|v| (v - m).exp());
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    out
}

/// Elementwise logistic sigmoid.
pub fn sigmoid<T: Real>(x: &ArrayView1<T>) -> Array1<T> {
    x.mapv(|v| T::one() / (T::one() + (-v).exp()))
}

// ── numeric hygiene ─────────────────────────────────────────────────────────

/// Fast finiteness check: a single sum propagates any NaN/Inf.
pub fn all_finite<T: Real>(a: &ArrayView2<T>) -> bool {
    a.sum().is_finite()
}

/// Error unless every element of `a` is finite; `what` names the layer.
pub fn ensure_finite<T: Real>(a: &ArrayView2<T>, what: &str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

// ── finite differences ──────────────────────────────────────────────────────

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn estimate_gradient<F>(f: &mut F, params: &mut [f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + eps;
        let plus = f(params);
        params[i] = orig - eps;
        let minus = f(params);
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Relative error between two gradient vectors: ‖a − b‖ / max(‖a‖, ‖b‖, τ).
pub fn gradient_rel_error(a: &[f64], b: &[f64], tau: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn layout_offsets_and_views() {
        let mut b = Layout::builder();
        b.add("a.w", vec![2, 3]).add("a.b", vec![3]).add("c", vec![4]);
        let l = b.finish();
        assert_eq!(l.total(), 6 + 3 + 4);
        assert_eq!(l.seg("a.b").offset, 6);
        let data: Vec<f64> = (0..13).map(|i| i as f64).collect();
        assert_eq!(l.view2(&data, "a.w")[[1, 2]], 5.0);
        assert_eq!(l.view1(&data, "a.b")[1], 7.0);
    }

    #[test]
    fn dense_matches_manual_gradient() {
        let x = array![[1.0f64, 2.0], [3.0, -1.0]];
        let w = array![[0.5, -0.25, 1.0], [2.0, 0.0, -1.0]];
        let b = array![0.1, 0.2, 0.3];
        let y = dense_forward(&x.view(), &w.view(), &b.view()).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        // Scalar objective: sum(y). Its gradient wrt b is all-ones * nrows.
        let dy = Array2::<f64>::ones((2, 3));
        let mut dw = Array2::<f64>::zeros((2, 3));
        let mut db = Array1::<f64>::zeros(3);
        let dx = dense_backward(&x.view(), &w.view(), &dy.view(), dw.view_mut(), db.view_mut());
        assert_eq!(db, array![2.0, 2.0, 2.0]);
        // dx = dy · W^T ⇒ each row is the row-sum of W.
        assert_eq!(dx[[0, 0]], 0.5 - 0.25 + 1.0);
        assert_eq!(dx[[0, 1]], 2.0 + 0.0 - 1.0);
        // dw = x^T · dy.
        assert_eq!(dw[[0, 0]], 4.0);
        assert_eq!(dw[[1, 0]], 1.0);
    }

    #[test]
    fn dense_rejects_width_mismatch() {
        let x = Array2::<f64>::zeros((2, 3));
        let w = Array2::<f64>::zeros((4, 5));
        let b = Array1::<f64>::zeros(5);
        assert!(dense_forward(&x.view(), &w.view(), &b.view()).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng::stream(3, "test", 0);
        let x = Array2::<f64>::from_shape_fn((5, 7), |_| r.random_range(-4.0..4.0));
        let p = softmax_rows(&x.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_cols_sum_to_one() {
        let mut r = rng::stream(3, "test", 1);
        let x = Array2::<f64>::from_shape_fn((6, 4), |_| r.random_range(-4.0..4.0));
        let p = softmax_cols(&x.view());
        for col in p.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_backward_matches_finite_difference() {
        let mut r = rng::stream(3, "test", 2);
        let mut x = vec![0.0f64; 6];
        for v in x.iter_mut() {
            *v = r.random_range(-2.0..2.0);
        }
        let mut f = |p: &[f64]| {
            let a = Array2::from_shape_vec((2, 3), p.to_vec()).unwrap();
            tanh(&a).sum()
        };
        let num = estimate_gradient(&mut f, &mut x, 1e-6);
        let a = Array2::from_shape_vec((2, 3), x.clone()).unwrap();
        let y = tanh(&a);
        let dy = Array2::<f64>::ones((2, 3));
        let ana = tanh_backward(&y.view(), &dy.view());
        let ana: Vec<f64> = ana.iter().cloned().collect();
        assert!(gradient_rel_error(&ana, &num, 1e-12) < 1e-8);
    }

    #[test]
    fn finiteness_check_catches_nan_and_inf() {
        let ok = array![[1.0f32, 2.0], [3.0, 4.0]];
        assert!(ensure_finite(&ok.view(), "layer").is_ok());
        let bad = array![[1.0f32, f32::NAN]];
        assert!(ensure_finite(&bad.view(), "layer").is_err());
        let inf = array![[1.0f32, f32::INFINITY]];
        assert!(ensure_finite(&inf.view(), "layer").is_err());
    }
}
