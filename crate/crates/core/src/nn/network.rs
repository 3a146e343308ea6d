use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax;
use super::matrix::{add_outer, Matrix};
use crate::error::{Error, Result};
use crate::store::Cell;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Fully connected layer `y = W·x + b`, `W` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: Matrix::glorot(outputs, inputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs()];
        self.weight.affine(x, &self.bias, &mut out);
        out
    }
}

/// One hidden layer feeding a softmax head per facet.
#[derive(Clone, Debug, PartialEq)]
pub struct FacetNetwork {
    pub hidden: Dense,
    pub activation: Activation,
    pub heads: Vec<Dense>,
}

/// Values cached by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub input: Vec<f64>,
    /// Post-activation hidden units.
    pub hidden: Vec<f64>,
    /// Per-facet distributions; `None` for heads that were not evaluated.
    pub probs: Vec<Option<Vec<f64>>>,
}

impl FacetNetwork {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        head_sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let hidden_layer = Dense::new(input, hidden, rng);
        let heads = head_sizes.iter().map(|&v| Dense::new(hidden, v, rng)).collect();
        FacetNetwork {
            hidden: hidden_layer,
            activation,
            heads,
        }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    /// Total output width `Σ v_i`.
    pub fn output_width(&self) -> usize {
        self.heads.iter().map(Dense::outputs).sum()
    }

    /// Forward pass evaluating the heads selected by `heads` (all when `None`).
    pub fn forward(&self, x: &[f64], heads: Option<&[bool]>) -> Result<ForwardPass> {
        if x.len() != self.input_width() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_width().to_string(),
                actual: x.len().to_string(),
            });
        }
        let mut hidden = self.hidden.forward(x);
        for h in hidden.iter_mut() {
            *h = self.activation.apply(*h);
        }
        let probs = self
            .heads
            .iter()
            .enumerate()
            .map(|(i, head)| {
                let wanted = heads.is_none_or(|m| m[i]);
                wanted.then(|| softmax(&head.forward(&hidden)))
            })
            .collect();
        Ok(ForwardPass {
            input: x.to_vec(),
            hidden,
            probs,
        })
    }

    /// Number of parameter tensors, in the order used by [`Self::params`].
    pub fn tensor_count(&self) -> usize {
        2 + 2 * self.heads.len()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.hidden.weight.as_slice(), &self.hidden.bias];
        for h in &self.heads {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.hidden.weight.as_mut_slice(), &mut self.hidden.bias];
        for h in &mut self.heads {
            out.push(h.weight.as_mut_slice());
            out.push(&mut h.bias);
        }
        out
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// Accumulate `scale · ∂L/∂θ` into `grads` for the categorical cross-entropy
    /// over facets with a known target, and return `scale · ∂L/∂x`.
    ///
    /// Every facet with a target must have been evaluated in `pass`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        targets: &[Cell],
        grads: &mut [Vec<f64>],
        scale: f64,
    ) -> Result<Vec<f64>> {
        if targets.len() != self.heads.len() || grads.len() != self.tensor_count() {
            return Err(Error::Shape {
                context: "network backward",
                expected: format!("{} targets, {} grad tensors", self.heads.len(), self.tensor_count()),
                actual: format!("{} targets, {} grad tensors", targets.len(), grads.len()),
            });
        }
        let mut d_hidden = vec![0.0; self.hidden_width()];
        for (i, (head, target)) in self.heads.iter().zip(targets).enumerate() {
            let Some(t) = *target else { continue };
            let probs = pass.probs[i].as_ref().ok_or(Error::Shape {
                context: "network backward",
                expected: format!("evaluated head {i}"),
                actual: "head skipped in forward pass".into(),
            })?;
            if t as usize >= probs.len() {
                return Err(Error::TargetOutOfRange {
                    index: t,
                    size: probs.len(),
                });
            }
            // softmax + cross-entropy: ∂L/∂logits = z - onehot(t)
            let mut d_logits: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            d_logits[t as usize] -= scale;
            add_outer(&mut grads[2 + 2 * i], &d_logits, &pass.hidden);
            for (g, d) in grads[3 + 2 * i].iter_mut().zip(&d_logits) {
                *g += d;
            }
            head.weight.add_transpose_mul(&d_logits, &mut d_hidden);
        }
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&pass.hidden)
            .map(|(d, &y)| d * self.activation.derivative_from_output(y))
            .collect();
        add_outer(&mut grads[0], &d_pre, &pass.input);
        for (g, d) in grads[1].iter_mut().zip(&d_pre) {
            *g += d;
        }
        let mut d_input = vec![0.0; self.input_width()];
        self.hidden.weight.add_transpose_mul(&d_pre, &mut d_input);
        Ok(d_input)
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(input: usize, hidden: usize, heads: &[usize]) -> FacetNetwork {
        FacetNetwork {
            hidden: Dense::zeros(input, hidden),
            activation: Activation::Tanh,
            heads: heads.iter().map(|&v| Dense::zeros(hidden, v)).collect(),
        }
    }

    #[test]
    fn zero_weights_give_uniform_heads() {
        let net = zeroed(6, 4, &[2, 5, 3]);
        let pass = net.forward(&[1.0; 6], None).unwrap();
        for (p, v) in pass.probs.iter().zip([2, 5, 3]) {
            for x in p.as_ref().unwrap() {
                assert_abs_diff_eq!(*x, 1.0 / v as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = zeroed(6, 4, &[2]);
        match net.forward(&[0.0; 5], None) {
            Err(Error::Shape { expected, actual, .. }) => assert_eq!((expected.as_str(), actual.as_str()), ("6", "5")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heads_sum_to_one_and_argmax_follows_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = FacetNetwork::new(5, 7, &[4, 3], Activation::Tanh, &mut rng);
        let x = [0.3, -0.1, 0.8, 0.0, -0.5];
        let pass = net.forward(&x, None).unwrap();
        for (i, p) in pass.probs.iter().enumerate() {
            let p = p.as_ref().unwrap();
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            let logits = net.heads[i].forward(&pass.hidden);
            let am = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            assert_eq!(am(p), am(&logits));
        }
    }

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = FacetNetwork::new(3, 4, &[2, 3], Activation::Tanh, &mut rng);
        let x = [0.7, -0.2, 0.4];
        let pass = net.forward(&x, None).unwrap();
        // independent evaluation with explicit loops
        let mut h = [0.0; 4];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut s = net.hidden.bias[j];
            for k in 0..3 {
                s += net.hidden.weight.get(j, k) * x[k];
            }
            *hj = s.tanh();
        }
        for (i, head) in net.heads.iter().enumerate() {
            let v = head.outputs();
            let mut logits = vec![0.0; v];
            for (c, l) in logits.iter_mut().enumerate() {
                *l = head.bias[c] + (0..4).map(|j| head.weight.get(c, j) * h[j]).sum::<f64>();
            }
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for c in 0..v {
                assert_abs_diff_eq!(pass.probs[i].as_ref().unwrap()[c], logits[c].exp() / z, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn output_gradient_is_z_minus_onehot() {
        let net = zeroed(2, 3, &[4]);
        let pass = net.forward(&[0.0, 0.0], None).unwrap();
        let mut grads = net.zero_grads();
        net.backward(&pass, &[Some(1)], &mut grads, 1.0).unwrap();
        assert_eq!(grads[3], vec![0.25, -0.75, 0.25, 0.25]);
    }

    #[test]
    fn no_targets_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = FacetNetwork::new(3, 4, &[2, 3], Activation::Tanh, &mut rng);
        let pass = net.forward(&[1.0, 2.0, 3.0], None).unwrap();
        let mut grads = net.zero_grads();
        let d_in = net.backward(&pass, &[None, None], &mut grads, 1.0).unwrap();
        assert!(grads.iter().flatten().all(|g| *g == 0.0));
        assert!(d_in.iter().all(|g| *g == 0.0));
    }
}
