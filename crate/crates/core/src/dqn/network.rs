use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-layer Q-network: rectified hidden layer, linear output layer with
/// one unit per action. Weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layer_sizes: [usize; 3],
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient of a loss with respect to every [`QNetwork`] parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// One regression example: input state, action whose output is fitted, target value.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

impl QNetwork {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            layer_sizes: [input, hidden, output],
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        for w in &mut net.w1 {
            *w = rng.random_range(-l1..l1);
        }
        let l2 = (6.0 / (hidden + output) as f64).sqrt();
        for w in &mut net.w2 {
            *w = rng.random_range(-l2..l2);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.layer_sizes[1]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_sizes[2]
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "state has length {}, network expects {}",
                state.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations `W1 s + b1`.
    pub fn pre_activations(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(state)?;
        let n_in = self.input_dim();
        Ok(self
            .b1
            .iter()
            .enumerate()
            .map(|(h, b)| {
                let row = &self.w1[h * n_in..(h + 1) * n_in];
                b + row.iter().zip(state).map(|(w, s)| w * s).sum::<f64>()
            })
            .collect())
    }

    fn output_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        let n_h = self.hidden_dim();
        self.b2
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &self.w2[o * n_h..(o + 1) * n_h];
                b + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        let hidden: Vec<f64> = self.pre_activations(state)?.into_iter().map(|z| z.max(0.0)).collect();
        Ok(self.output_from_hidden(&hidden))
    }

    /// Mean squared error over `batch` and its gradient.
    pub fn loss_and_gradients(&self, batch: &[Sample<'_>]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let [n_in, n_h, n_out] = self.layer_sizes;
        let mut grad = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; n_h],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; n_out],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for sample in batch {
            if sample.action >= n_out {
                return Err(Error::Shape(format!(
                    "action {} outside {n_out} outputs",
                    sample.action
                )));
            }
            let z1 = self.pre_activations(sample.state)?;
            let h: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
            let a = sample.action;
            let w2_row = &self.w2[a * n_h..(a + 1) * n_h];
            let q = self.b2[a] + w2_row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
            let err = q - sample.target;
            loss += err * err * scale;

            let dq = 2.0 * err * scale;
            grad.b2[a] += dq;
            for j in 0..n_h {
                grad.w2[a * n_h + j] += dq * h[j];
                if z1[j] > 0.0 {
                    let dz = dq * w2_row[j];
                    grad.b1[j] += dz;
                    for (g, s) in grad.w1[j * n_in..(j + 1) * n_in].iter_mut().zip(sample.state) {
                        *g += dz * s;
                    }
                }
            }
        }
        Ok((loss, grad))
    }

    pub fn apply_sgd(&mut self, grad: &Gradients, learning_rate: f64) {
        let step = |p: &mut [f64], g: &[f64]| {
            for (p, g) in p.iter_mut().zip(g) {
                *p -= learning_rate * g;
            }
        };
        step(&mut self.w1, &grad.w1);
        step(&mut self.b1, &grad.b1);
        step(&mut self.w2, &grad.w2);
        step(&mut self.b2, &grad.b2);
    }

    /// All parameters flattened as `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let total = self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len();
        if params.len() != total {
            return Err(Error::Shape(format!("expected {total} parameters, got {}", params.len())));
        }
        let mut rest = params;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.is_finite())
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Overwrites `target` with the parameters of `local`.
pub fn sync_target(local: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if local.layer_sizes != target.layer_sizes {
        return Err(Error::Shape(format!(
            "cannot copy {:?} network into {:?}",
            local.layer_sizes, target.layer_sizes
        )));
    }
    target.clone_from(local);
    Ok(())
}
