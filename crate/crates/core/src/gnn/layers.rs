//! Dense layers, message passing and readout.

use super::GnnError;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Uniform in `[-1/sqrt(in), 1/sqrt(in)]` for weights and bias.
    pub fn uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = Array2::from_shape_simple_fn((input, output), || rng.gen_range(-bound..=bound));
        let b = Array1::from_shape_simple_fn(output, || rng.gen_range(-bound..=bound));
        Self { w, b }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Array2::zeros((input, output)), b: Array1::zeros(output) }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w.nrows(), self.w.ncols())
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn sum_sq(&self) -> f64 {
        self.w.iter().chain(self.b.iter()).map(|x| x * x).sum()
    }
}

/// GIN-0 aggregation: each node's own row plus its undirected neighbours'.
pub fn aggregate(h: &Array2<f64>, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut out = h.clone();
    for &(u, v) in edges {
        let hv = h.row(v).to_owned();
        let hu = h.row(u).to_owned();
        out.row_mut(u).scaled_add(1.0, &hv);
        out.row_mut(v).scaled_add(1.0, &hu);
    }
    out
}

/// Mean of node rows per graph; graph `i` owns rows `offsets[i]..offsets[i + 1]`.
pub fn mean_readout(h: &Array2<f64>, offsets: &[usize]) -> Result<Array2<f64>, GnnError> {
    let graphs = offsets.len().saturating_sub(1);
    let mut out = Array2::zeros((graphs, h.ncols()));
    for g in 0..graphs {
        let (a, b) = (offsets[g], offsets[g + 1]);
        if b <= a {
            return Err(GnnError::Precondition(format!("graph {g} has no nodes")));
        }
        let rows = h.slice(ndarray::s![a..b, ..]);
        out.row_mut(g).assign(&rows.mean_axis(Axis(0)).expect("non-empty"));
    }
    Ok(out)
}

/// Gradient of [`mean_readout`] with respect to the node rows.
pub(crate) fn mean_readout_backward(dg: &Array2<f64>, offsets: &[usize]) -> Array2<f64> {
    let n = *offsets.last().unwrap_or(&0);
    let mut out = Array2::zeros((n, dg.ncols()));
    for g in 0..dg.nrows() {
        let (a, b) = (offsets[g], offsets[g + 1]);
        let share = dg.row(g).mapv(|x| x / (b - a) as f64);
        for r in a..b {
            out.row_mut(r).assign(&share);
        }
    }
    out
}

pub(crate) fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Zeroes `dy` where the pre-activation was not positive.
pub(crate) fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    out
}

/// Inverted dropout mask: 0 with probability `p`, otherwise `1 / (1 - p)`.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { 0.0 } else { keep })
}
