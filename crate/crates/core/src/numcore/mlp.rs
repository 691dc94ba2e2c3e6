use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{shape_err, Result};

/// Two-layer perceptron `out = W2 · tanh(W1 · x + b1) + b2`.
///
/// Weights are stored row-major: `w1` is `hidden × input`, `w2` is
/// `output × hidden`. The flat parameter order is `w1, b1, w2, b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpPass {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            input,
            hidden,
            output,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every weight and bias.
    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        let mut m = Mlp::zeros(input, hidden, output);
        let a1 = 1.0 / (input.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        for w in m.w1.iter_mut().chain(m.b1.iter_mut()) {
            *w = rng.uniform(-a1, a1);
        }
        for w in m.w2.iter_mut().chain(m.b2.iter_mut()) {
            *w = rng.uniform(-a2, a2);
        }
        m
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.w1.len() != self.hidden * self.input
            || self.b1.len() != self.hidden
            || self.w2.len() != self.output * self.hidden
            || self.b2.len() != self.output
        {
            return Err(shape_err("mlp weight buffers do not match declared sizes"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<MlpPass> {
        if x.len() != self.input {
            return Err(shape_err(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input
            )));
        }
        let mut hidden = self.b1.clone();
        for (h, row) in hidden.iter_mut().zip(self.w1.chunks_exact(self.input)) {
            *h = (*h + dot(row, x)).tanh();
        }
        let mut out = self.b2.clone();
        for (o, row) in out.iter_mut().zip(self.w2.chunks_exact(self.hidden)) {
            *o += dot(row, &hidden);
        }
        Ok(MlpPass { hidden, out })
    }

    /// Backpropagates `d_out` (gradient w.r.t. the outputs).
    ///
    /// Parameter gradients are accumulated into `grad` (flat order, length
    /// `num_params`) scaled by `scale`; the input gradient is returned when
    /// requested.
    pub fn backward_into(
        &self,
        x: &[f64],
        pass: &MlpPass,
        d_out: &[f64],
        scale: f64,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (g_w1, rest) = grad.split_at_mut(self.w1.len());
        let (g_b1, rest) = rest.split_at_mut(self.b1.len());
        let (g_w2, g_b2) = rest.split_at_mut(self.w2.len());

        let mut d_hidden = vec![0.0; self.hidden];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let g_row = &mut g_w2[o * self.hidden..(o + 1) * self.hidden];
            for j in 0..self.hidden {
                g_row[j] += scale * g * pass.hidden[j];
                d_hidden[j] += g * row[j];
            }
            g_b2[o] += scale * g;
        }
        // tanh' = 1 - h^2
        for (dh, h) in d_hidden.iter_mut().zip(&pass.hidden) {
            *dh *= 1.0 - h * h;
        }
        for (j, &dh) in d_hidden.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            let g_row = &mut g_w1[j * self.input..(j + 1) * self.input];
            for (gw, xi) in g_row.iter_mut().zip(x) {
                *gw += scale * dh * xi;
            }
            g_b1[j] += scale * dh;
        }
        if !want_input {
            return None;
        }
        let mut d_x = vec![0.0; self.input];
        for (j, &dh) in d_hidden.iter().enumerate() {
            let row = &self.w1[j * self.input..(j + 1) * self.input];
            for (dx, w) in d_x.iter_mut().zip(row) {
                *dx += dh * w;
            }
        }
        Some(d_x)
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
    }

    /// Reads parameters from the front of `flat`, returning the rest.
    pub fn read_flat<'a>(&mut self, flat: &'a [f64]) -> Result<&'a [f64]> {
        if flat.len() < self.num_params() {
            return Err(shape_err("flat parameter vector too short for mlp"));
        }
        let mut rest = flat;
        for buf in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(buf.len());
            buf.copy_from_slice(head);
            rest = tail;
        }
        Ok(rest)
    }

    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        let mut off = 0;
        for buf in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let n = buf.len();
            for (w, d) in buf.iter_mut().zip(&delta[off..off + n]) {
                *w += scale * d;
            }
            off += n;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|w| w.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_bias() {
        let mut m = Mlp::zeros(3, 4, 2);
        m.b2 = vec![0.5, -1.0];
        let p = m.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.out, vec![0.5, -1.0]);
    }

    #[test]
    fn wrong_input_len_is_shape_error() {
        let m = Mlp::zeros(3, 4, 2);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = Rng::new(1);
        let m = Mlp::random(3, 5, 2, &mut rng);
        let mut flat = Vec::new();
        m.write_flat(&mut flat);
        let mut z = Mlp::zeros(3, 5, 2);
        let rest = z.read_flat(&flat).unwrap();
        assert!(rest.is_empty());
        assert_eq!(z, m);
    }

    #[test]
    fn doubling_output_layer_doubles_output() {
        let mut rng = Rng::new(2);
        let mut m = Mlp::random(3, 5, 1, &mut rng);
        m.b2 = vec![0.0];
        let x = [0.3, -0.2, 0.9];
        let v = m.forward(&x).unwrap().out[0];
        for w in &mut m.w2 {
            *w *= 2.0;
        }
        let v2 = m.forward(&x).unwrap().out[0];
        assert!((v2 - 2.0 * v).abs() < 1e-14);
    }
}
