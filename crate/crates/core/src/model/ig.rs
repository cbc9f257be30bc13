//! Integrated Gradients attribution.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::net::{sigmoid, Mode, ModelParams};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const DEFAULT_IG_STEPS: usize = 256;

/// A scalar function of a flat input row with an analytic gradient.
pub trait Differentiable {
    fn width(&self) -> usize;
    /// Values and input gradients for every row of `x`.
    fn value_and_grad(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

/// Linear scorer `w . x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array1<f64>,
}

impl Differentiable for Linear {
    fn width(&self) -> usize {
        self.w.len()
    }

    fn value_and_grad(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let g = Array2::from_shape_fn(x.raw_dim(), |(_, j)| self.w[j]);
        Ok((x.dot(&self.w), g))
    }
}

/// The fused model's eval-mode probability over the concatenated blocks.
impl Differentiable for ModelParams {
    fn width(&self) -> usize {
        self.input_width()
    }

    fn value_and_grad(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let mut col = 0;
        let blocks: Vec<ArrayView2<f64>> = self
            .spec
            .blocks
            .iter()
            .map(|b| {
                let v = x.slice(s![.., col..col + b.input_width]);
                col += b.input_width;
                v
            })
            .collect();
        let cache = self.forward(&blocks, Mode::Eval, &[], &mut rng_for(0, "eval"))?;
        let p = cache.logits.mapv(sigmoid);
        let d = p.mapv(|v| v * (1.0 - v));
        let (_, d_inputs) = self.backward(&cache, &d);
        let views: Vec<_> = d_inputs.iter().map(|a| a.view()).collect();
        Ok((p, concatenate(Axis(1), &views).expect("row counts agree")))
    }
}

/// Midpoint Riemann approximation of the path integral from `baseline` to `x`.
pub fn integrated_gradients<F: Differentiable>(f: &F, x: ArrayView1<f64>, baseline: ArrayView1<f64>, steps: usize) -> Result<Array1<f64>> {
    if steps < 2 {
        return Err(Error::Config("integrated gradients needs at least two steps".into()));
    }
    if x.len() != f.width() || baseline.len() != f.width() {
        return Err(Error::Shape {
            block: "attribution input".into(),
            expected: f.width(),
            actual: x.len().min(baseline.len()),
        });
    }
    let delta = &x - &baseline;
    let path = Array2::from_shape_fn((steps, x.len()), |(k, j)| baseline[j] + (k as f64 + 0.5) / steps as f64 * delta[j]);
    let (_, g) = f.value_and_grad(path.view())?;
    Ok(g.mean_axis(Axis(0)).expect("steps > 0") * &delta)
}
