//! Dense layers with explicit reverse-mode passes.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{ParamSet, TensorId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `z * sigmoid(z)`
    #[default]
    Silu,
    Tanh,
    /// No nonlinearity; every MLP collapses to an affine map.
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = x · W + b` with `W` stored as `[fan_in, fan_out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: TensorId,
    pub bias: TensorId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub(crate) fn new(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: params.push(format!("{name}.weight"), vec![fan_in, fan_out]),
            bias: params.push(format!("{name}.bias"), vec![fan_out]),
            fan_in,
            fan_out,
        }
    }

    pub(crate) fn forward(&self, p: &ParamSet, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&p.matrix(self.weight));
        y += &p.vector(self.bias);
        y
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub(crate) fn backward(
        &self,
        p: &ParamSet,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        self.accumulate(x, dy, grads);
        dy.dot(&p.matrix(self.weight).t())
    }

    pub(crate) fn accumulate(
        &self,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grads: &mut ParamSet,
    ) {
        grads
            .matrix_mut(self.weight)
            .scaled_add(1.0, &x.t().dot(&dy));
        grads
            .vector_mut(self.bias)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
    }
}

/// Affine layers with an activation between consecutive layers; the last
/// layer stays linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Default)]
pub struct MlpCache {
    input: Option<Array2<f64>>,
    /// Pre-activation of every layer except the last.
    hidden_pre: Vec<Array2<f64>>,
    /// Input of every layer after the first.
    hidden_in: Vec<Array2<f64>>,
}

impl Mlp {
    /// Widths `[in, hidden, ..., hidden, out]` with `n_layers` affine maps.
    pub(crate) fn new(
        params: &mut ParamSet,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        n_layers: usize,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|i| {
                let a = if i == 0 { fan_in } else { hidden };
                let b = if i + 1 == n_layers { fan_out } else { hidden };
                Linear::new(params, &format!("{name}.{i}"), a, b)
            })
            .collect();
        Mlp { layers }
    }

    pub fn fan_in(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Plain evaluation of a single input vector.
    pub fn apply(&self, p: &ParamSet, act: Activation, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.fan_in() {
            return Err(Error::Shape {
                context: "mlp input",
                expected: self.fan_in(),
                actual: v.len(),
            });
        }
        let x = ArrayView2::from_shape((1, v.len()), v).expect("row vector");
        let (y, _) = self.forward(p, act, x.to_owned());
        Ok(y.into_raw_vec_and_offset().0)
    }

    pub(crate) fn forward(
        &self,
        p: &ParamSet,
        act: Activation,
        x: Array2<f64>,
    ) -> (Array2<f64>, MlpCache) {
        let z0 = self.layers[0].forward(p, x.view());
        let (y, mut cache) = self.forward_tail(p, act, z0);
        cache.input = Some(x);
        (y, cache)
    }

    /// Continues from the pre-activation of the first layer, for callers that
    /// evaluate the first affine map themselves.
    pub(crate) fn forward_tail(
        &self,
        p: &ParamSet,
        act: Activation,
        z0: Array2<f64>,
    ) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache::default();
        let mut z = z0;
        for layer in &self.layers[1..] {
            let a = z.mapv(|v| act.apply(v));
            let next = layer.forward(p, a.view());
            cache.hidden_pre.push(z);
            cache.hidden_in.push(a);
            z = next;
        }
        (z, cache)
    }

    /// Backward through layers `1..`, returning the gradient with respect to
    /// the first layer's pre-activation.
    pub(crate) fn backward_tail(
        &self,
        p: &ParamSet,
        act: Activation,
        cache: &MlpCache,
        dy: Array2<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let mut dz = dy;
        for i in (1..self.layers.len()).rev() {
            let da = self.layers[i].backward(p, cache.hidden_in[i - 1].view(), dz.view(), grads);
            let pre = &cache.hidden_pre[i - 1];
            dz = da;
            dz.zip_mut_with(pre, |d, &z| *d *= act.derivative(z));
        }
        dz
    }

    /// Full backward pass; returns the gradient with respect to the input.
    pub(crate) fn backward(
        &self,
        p: &ParamSet,
        act: Activation,
        cache: &MlpCache,
        dy: Array2<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let dz0 = self.backward_tail(p, act, cache, dy, grads);
        let x = cache.input.as_ref().expect("forward() cache");
        self.layers[0].backward(p, x.view(), dz0.view(), grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n_layers: usize, fan_in: usize, hidden: usize, fan_out: usize) -> (ParamSet, Mlp) {
        let mut p = ParamSet::new();
        let m = Mlp::new(&mut p, "m", fan_in, hidden, fan_out, n_layers);
        (p, m)
    }

    #[test]
    fn zero_weights_give_zero() {
        let (p, m) = net(3, 4, 5, 2);
        let y = m
            .apply(&p, Activation::Silu, &[1.0, -2.0, 3.0, 0.5])
            .unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let (mut p, m) = net(1, 3, 7, 3);
        let w = m.layers[0].weight;
        for i in 0..3 {
            p.matrix_mut(w)[[i, i]] = 1.0;
        }
        let y = m.apply(&p, Activation::Silu, &[0.25, -4.0, 9.0]).unwrap();
        assert_eq!(y, vec![0.25, -4.0, 9.0]);
    }

    #[test]
    fn hand_computed_two_layer() {
        // W0 = [[1, -1], [0.5, 2]], b0 = [0, 1]; input [1, 2]
        // z0 = [1*1 + 2*0.5, -1*1 + 2*2 + 1] = [2, 4]
        // tanh activation; W1 = [[1], [-1]], b1 = [0.5]
        let (mut p, m) = net(2, 2, 2, 1);
        let l0 = m.layers[0];
        let l1 = m.layers[1];
        p.tensor_mut(l0.weight)
            .data_mut()
            .copy_from_slice(&[1.0, -1.0, 0.5, 2.0]);
        p.tensor_mut(l0.bias)
            .data_mut()
            .copy_from_slice(&[0.0, 1.0]);
        p.tensor_mut(l1.weight)
            .data_mut()
            .copy_from_slice(&[1.0, -1.0]);
        p.tensor_mut(l1.bias).data_mut().copy_from_slice(&[0.5]);
        let y = m.apply(&p, Activation::Tanh, &[1.0, 2.0]).unwrap();
        let expect = 2f64.tanh() - 4f64.tanh() + 0.5;
        assert!((y[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch() {
        let (p, m) = net(2, 3, 4, 1);
        assert!(matches!(
            m.apply(&p, Activation::Silu, &[1.0]),
            Err(Error::Shape {
                expected: 3,
                actual: 1,
                ..
            })
        ));
    }

    #[test]
    fn activation_derivatives() {
        for act in [Activation::Silu, Activation::Tanh, Activation::Identity] {
            for &z in &[-3.0, -0.4, 0.0, 0.9, 5.0] {
                let h = 1e-6;
                let numeric = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((numeric - act.derivative(z)).abs() < 1e-8);
            }
        }
    }
}
