//! Multilayer perceptron trained with exact backpropagation on the squared
//! error `1/2 ||y - out||^2` (summed over units, averaged over the batch).
//!
//! The forward pass is the same formula as [`PcNetwork::predict`], so a
//! perceptron and a predictive-coding network with equal weights produce
//! bit-identical outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encodings::{predicted_rate, Bias};
use crate::error::{Error, Result};
use crate::linalg::{activate_deriv, matmul, matmul_tn, outer_mean, ActivationKind, Matrix};
use crate::network::{init_forward_weights, PcNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    bias: Bias,
    hidden_activation: ActivationKind,
    output_activation: ActivationKind,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `a_0 = x`, then `a_l = f(p_l) + b`.
    pub activations: Vec<Matrix>,
    /// `p_l` for `l` in `1..=L` (index `l-1`).
    pub preacts: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("at least the input")
    }
}

impl Mlp {
    /// Same Glorot draws as [`PcNetwork::init`] for the same seed.
    pub fn init(
        dims: &[usize],
        hidden_activation: ActivationKind,
        output_activation: ActivationKind,
        bias: Bias,
        seed: u64,
    ) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = init_forward_weights(dims, &mut rng);
        Ok(Mlp {
            dims: dims.to_vec(),
            weights,
            bias,
            hidden_activation,
            output_activation,
        })
    }

    pub fn from_parts(
        dims: &[usize],
        weights: Vec<Matrix>,
        hidden_activation: ActivationKind,
        output_activation: ActivationKind,
        bias: Bias,
    ) -> Result<Self> {
        Self::check_dims(dims)?;
        if weights.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} weight matrices, got {}",
                dims.len() - 1,
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.shape() != (dims[l + 1], dims[l]) {
                return Err(Error::ShapeMismatch {
                    op: "weights",
                    left: (dims[l + 1], dims[l]),
                    right: w.shape(),
                });
            }
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            weights,
            bias,
            hidden_activation,
            output_activation,
        })
    }

    /// A perceptron sharing the network's forward weights and activations.
    pub fn from_network(net: &PcNetwork) -> Self {
        let spec = net.spec();
        Mlp {
            dims: spec.dims.clone(),
            weights: net.weights().to_vec(),
            bias: spec.bias,
            hidden_activation: spec.hidden_activation,
            output_activation: spec.output_activation,
        }
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }

    pub fn hidden_activation(&self) -> ActivationKind {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> ActivationKind {
        self.output_activation
    }

    fn activation_at(&self, level: usize) -> ActivationKind {
        if level == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        if x.rows() != self.dims[0] {
            return Err(Error::ShapeMismatch {
                op: "mlp input",
                left: (self.dims[0], x.cols()),
                right: x.shape(),
            });
        }
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        let mut preacts = Vec::with_capacity(self.weights.len());
        activations.push(x.clone());
        for (l, w) in (1..).zip(&self.weights) {
            let p = matmul(w, &activations[l - 1])?;
            activations.push(predicted_rate(&p, self.activation_at(l), self.bias));
            preacts.push(p);
        }
        Ok(ForwardPass {
            activations,
            preacts,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.activations.pop().expect("output"))
    }

    /// Mean squared-error loss of a forward pass against targets.
    pub fn loss(pass: &ForwardPass, y: &Matrix) -> Result<f64> {
        let diff = y.sub(pass.output())?;
        Ok(0.5 * diff.sum_squares() / y.cols() as f64)
    }

    /// Exact gradients `dLoss/dW_l` for every layer, from a fresh forward
    /// pass on `x`.
    pub fn backward(&self, x: &Matrix, y: &Matrix) -> Result<Vec<Matrix>> {
        let pass = self.forward(x)?;
        self.backward_from(&pass, y)
    }

    pub fn backward_from(&self, pass: &ForwardPass, y: &Matrix) -> Result<Vec<Matrix>> {
        let depth = self.weights.len();
        let out = pass.output();
        if y.shape() != out.shape() {
            return Err(Error::ShapeMismatch {
                op: "mlp target",
                left: out.shape(),
                right: y.shape(),
            });
        }
        let mut grads = vec![None; depth];
        // dLoss/dp_L = (out - y) * f'(p_L)
        let fprime = activate_deriv(self.output_activation, &pass.preacts[depth - 1]);
        let mut delta = out.zip_map(y, "mlp residual", |o, t| o - t)?;
        delta = delta.zip_map(&fprime, "mlp delta", |d, f| d * f)?;
        for l in (0..depth).rev() {
            grads[l] = Some(outer_mean(&delta, &pass.activations[l])?);
            if l > 0 {
                let back = matmul_tn(&self.weights[l], &delta)?;
                let fprime = activate_deriv(self.activation_at(l), &pass.preacts[l - 1]);
                delta = back.zip_map(&fprime, "mlp delta", |d, f| d * f)?;
            }
        }
        Ok(grads.into_iter().map(|g| g.expect("filled")).collect())
    }

    pub fn apply_increments(&mut self, increments: &[Matrix]) -> Result<()> {
        if increments.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "expected {} increments, got {}",
                self.weights.len(),
                increments.len()
            )));
        }
        for (w, inc) in self.weights.iter_mut().zip(increments) {
            w.axpy(1.0, inc)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelSpec;

    fn net_and_mlp(dims: &[usize], seed: u64) -> (PcNetwork, Mlp) {
        let net = PcNetwork::init(ModelSpec::with_dims(dims), seed).unwrap();
        let mlp = Mlp::from_network(&net);
        (net, mlp)
    }

    #[test]
    fn same_seed_same_weights_as_network() {
        let (net, _) = net_and_mlp(&[6, 4, 3], 17);
        let mlp = Mlp::init(&[6, 4, 3], ActivationKind::Sigmoid, ActivationKind::Sigmoid, Bias::ZERO, 17).unwrap();
        assert_eq!(mlp.weights(), net.weights());
    }

    #[test]
    fn forward_matches_network_predict_bitwise() {
        let (net, mlp) = net_and_mlp(&[6, 5, 3], 2);
        let x = Matrix::from_fn(6, 4, |r, c| ((r * 4 + c) as f64 * 0.31).cos());
        assert_eq!(mlp.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert_eq!(mlp.predict(&x).unwrap(), mlp.predict(&x).unwrap());
    }

    #[test]
    fn zero_weights_output_half() {
        let w = vec![Matrix::zeros(3, 2), Matrix::zeros(2, 3)];
        let mlp = Mlp::from_parts(&[2, 3, 2], w, ActivationKind::Sigmoid, ActivationKind::Sigmoid, Bias::ZERO).unwrap();
        assert_eq!(mlp.predict(&Matrix::ones(2, 3)).unwrap(), Matrix::filled(2, 3, 0.5));
    }

    #[test]
    fn gradient_zero_at_target() {
        let (_, mlp) = net_and_mlp(&[4, 3, 2], 5);
        let x = Matrix::from_fn(4, 2, |r, c| (r + c) as f64 * 0.2);
        let y = mlp.predict(&x).unwrap();
        for g in mlp.backward(&x, &y).unwrap() {
            assert_eq!(g.max_abs(), 0.0);
        }
    }

    #[test]
    fn scalar_hand_gradient() {
        let mlp = Mlp::from_parts(
            &[1, 1],
            vec![Matrix::zeros(1, 1)],
            ActivationKind::Sigmoid,
            ActivationKind::Sigmoid,
            Bias::ZERO,
        )
        .unwrap();
        let g = mlp.backward(&Matrix::ones(1, 1), &Matrix::ones(1, 1)).unwrap();
        assert_eq!(g[0].get(0, 0), -0.125);
    }

    #[test]
    fn target_shape_checked() {
        let (_, mlp) = net_and_mlp(&[4, 3, 2], 5);
        assert!(mlp.backward(&Matrix::ones(4, 2), &Matrix::ones(3, 2)).is_err());
        assert!(mlp.forward(&Matrix::ones(3, 2)).is_err());
    }
}
