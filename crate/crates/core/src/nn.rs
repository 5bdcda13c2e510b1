//! One-hidden-layer feed-forward network with a scalar output, shared by
//! the accuracy predictor and the skip gate.

use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            // log(1 + e^z) without overflow
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `out = b2 + w2 . act(W1 x + b1)`; `w1` is row-major `hidden x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Pass {
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub out: f64,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            inputs,
            hidden,
            activation,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// He-style initialisation from a seeded stream.
    pub fn seeded(inputs: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut r = rng::stream(seed, "nn/init", 0);
        let mut net = Self::zeros(inputs, hidden, activation);
        let s1 = (2.0 / inputs.max(1) as f64).sqrt();
        net.w1.iter_mut().for_each(|w| *w = s1 * rng::normal(&mut r));
        let s2 = (1.0 / hidden.max(1) as f64).sqrt();
        net.w2.iter_mut().for_each(|w| *w = s2 * rng::normal(&mut r));
        net
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = d[0];
    }

    pub fn forward(&self, x: &[f64]) -> Pass {
        debug_assert_eq!(x.len(), self.inputs);
        let z: Vec<f64> = (0..self.hidden)
            .map(|j| self.b1[j] + self.w1[j * self.inputs..(j + 1) * self.inputs].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        self.finish(z)
    }

    /// Forward pass over an input given as `(index, value)` pairs; every
    /// other input is zero.
    pub fn forward_sparse(&self, x: &[(usize, f64)]) -> Pass {
        let z: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                self.b1[j] + x.iter().map(|&(i, v)| row[i] * v).sum::<f64>()
            })
            .collect();
        self.finish(z)
    }

    fn finish(&self, z: Vec<f64>) -> Pass {
        let h: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
        let out = self.b2 + h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>();
        Pass { z, h, out }
    }

    /// Adds `dout * d(out)/d(params)` to `grad`, laid out like [`Mlp::params`].
    /// `mask` scales hidden units (dropout); `None` keeps them all.
    pub fn accumulate_grad(&self, x: &[(usize, f64)], pass: &Pass, dout: f64, mask: Option<&[f64]>, grad: &mut [f64]) {
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        gb2[0] += dout;
        for j in 0..self.hidden {
            let m = mask.map_or(1.0, |m| m[j]);
            gw2[j] += dout * pass.h[j] * m;
            let dz = dout * self.w2[j] * m * self.activation.derivative(pass.z[j]);
            if dz == 0.0 {
                continue;
            }
            gb1[j] += dz;
            let row = &mut gw1[j * self.inputs..(j + 1) * self.inputs];
            for &(i, v) in x {
                row[i] += dz * v;
            }
        }
    }

    /// Output with hidden units scaled by `mask`.
    pub fn masked_out(&self, pass: &Pass, mask: &[f64]) -> f64 {
        self.b2 + pass.h.iter().zip(&self.w2).zip(mask).map(|((h, w), m)| h * w * m).sum::<f64>()
    }
}

pub fn dense_pairs(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect()
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; params], v: vec![0.0; params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(Activation::Softplus.apply(800.0), 800.0);
        assert!(Activation::Softplus.apply(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn sparse_and_dense_agree() {
        let net = Mlp::seeded(5, 4, Activation::Softplus, 3);
        let x = [0.0, 1.5, 0.0, -2.0, 0.25];
        assert_eq!(net.forward(&x).out, net.forward_sparse(&dense_pairs(&x)).out);
    }

    #[test]
    fn params_round_trip() {
        let net = Mlp::seeded(3, 2, Activation::Relu, 9);
        let mut other = Mlp::zeros(3, 2, Activation::Relu);
        other.set_params(&net.params());
        assert_eq!(net, other);
    }
}
