use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::dropout::{check_rate, dropout, Mode};
use super::mat::{gemm, View, ViewMut};
use super::params::{prefixed, Params};
use crate::error::{FitError, Result};

/// Affine map `y = W x + b` with `W` stored row-major as `output × input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense { input, output, w: vec![0.0; input * output], b: vec![0.0; output] }
    }

    /// Weights and biases uniform in ±1/√input.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut d = Dense::zeros(input, output);
        for v in d.w.iter_mut().chain(d.b.iter_mut()) {
            *v = rng.gen_range(-bound..=bound);
        }
        d
    }

    pub fn from_parts(input: usize, output: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.len() != input * output || b.len() != output {
            return Err(FitError::dims(format!(
                "dense {output}x{input} given {} weights and {} biases",
                w.len(),
                b.len()
            )));
        }
        Ok(Dense { input, output, w, b })
    }

    /// Pre-activations for a row-major `batch × input` block.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.input {
            return Err(FitError::dims(format!(
                "dense input of {} values, expected {batch}x{}",
                x.len(),
                self.input
            )));
        }
        let mut y = Vec::with_capacity(batch * self.output);
        for _ in 0..batch {
            y.extend_from_slice(&self.b);
        }
        gemm(
            1.0,
            View::new(x, batch, self.input),
            View::new(&self.w, self.output, self.input).t(),
            1.0,
            ViewMut::new(&mut y, batch, self.output),
        );
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], batch: usize, grads: &mut Dense) -> Vec<f64> {
        debug_assert_eq!(dy.len(), batch * self.output);
        gemm(
            1.0,
            View::new(dy, batch, self.output).t(),
            View::new(x, batch, self.input),
            1.0,
            ViewMut::new(&mut grads.w, self.output, self.input),
        );
        for row in dy.chunks(self.output) {
            for (g, d) in grads.b.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; batch * self.input];
        gemm(
            1.0,
            View::new(dy, batch, self.output),
            View::new(&self.w, self.output, self.input),
            0.0,
            ViewMut::new(&mut dx, batch, self.input),
        );
        dx
    }
}

impl Params for Dense {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.w, &self.b]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.b]
    }
    fn names(&self) -> Vec<String> {
        vec!["w".into(), "b".into()]
    }
    fn zeros_like(&self) -> Self {
        Dense::zeros(self.input, self.output)
    }
}

/// Feed-forward network: ReLU hidden layers with dropout, sigmoid output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// `widths = [input, hidden.., output]`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(FitError::InvalidArgument(format!("invalid MLP widths {widths:?}")));
        }
        Mlp::from_layers(widths.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect())
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FitError::InvalidArgument("MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(FitError::dims(format!(
                    "layer widths do not chain: {} then {}",
                    pair[0].output, pair[1].input
                )));
            }
        }
        Ok(Mlp { layers, generation: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Sigmoid
        } else {
            Activation::Relu
        }
    }
}

impl Params for Mlp {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
    fn names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layer{i}"), l.names()).collect::<Vec<_>>())
            .collect()
    }
    fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(Dense::zeros_like).collect(), generation: 0 }
    }
    fn mark_updated(&mut self) {
        self.generation += 1;
    }
}

/// Intermediate values of an MLP forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    batch: usize,
    /// Input to each layer, after dropout.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

/// Forward pass on a row-major `batch × input` block. Returns the sigmoid
/// outputs (`batch × output`) and the cache for [`mlp_backward`].
pub fn mlp_forward<R: Rng + ?Sized>(
    mlp: &Mlp,
    x: &[f64],
    batch: usize,
    dropout_p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, MlpCache)> {
    check_rate(dropout_p)?;
    let mut cache = MlpCache {
        generation: mlp.generation,
        batch,
        inputs: Vec::with_capacity(mlp.layers.len()),
        pre: Vec::with_capacity(mlp.layers.len()),
        post: Vec::with_capacity(mlp.layers.len()),
        masks: Vec::with_capacity(mlp.layers.len()),
    };
    let mut current = x.to_vec();
    for (i, layer) in mlp.layers.iter().enumerate() {
        let z = layer.forward(&current, batch)?;
        let act = mlp.activation_of(i);
        let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        cache.inputs.push(current);
        cache.pre.push(z);
        let next = if i + 1 < mlp.layers.len() {
            let (dropped, mask) = dropout(&a, dropout_p, rng, mode)?;
            cache.masks.push(mask);
            dropped
        } else {
            cache.masks.push(None);
            a.clone()
        };
        cache.post.push(a);
        current = next;
    }
    Ok((current, cache))
}

/// Exact reverse pass. Returns parameter gradients and the input gradient.
pub fn mlp_backward(mlp: &Mlp, cache: &MlpCache, upstream: &[f64]) -> Result<(Mlp, Vec<f64>)> {
    if cache.generation != mlp.generation || cache.inputs.len() != mlp.layers.len() {
        return Err(FitError::StaleCache("MLP parameters changed since the forward pass".into()));
    }
    if upstream.len() != cache.batch * mlp.output_dim() {
        return Err(FitError::dims(format!(
            "upstream gradient of {} values, expected {}",
            upstream.len(),
            cache.batch * mlp.output_dim()
        )));
    }
    let mut grads = mlp.zeros_like();
    let mut d = upstream.to_vec();
    for i in (0..mlp.layers.len()).rev() {
        if let Some(mask) = &cache.masks[i] {
            for (g, m) in d.iter_mut().zip(mask) {
                *g *= m;
            }
        }
        let act = mlp.activation_of(i);
        for ((g, &z), &a) in d.iter_mut().zip(&cache.pre[i]).zip(&cache.post[i]) {
            *g *= act.derivative(z, a);
        }
        d = mlp.layers[i].backward(&cache.inputs[i], &d, cache.batch, &mut grads.layers[i]);
    }
    Ok((grads, d))
}

/// Convenience evaluation-mode prediction.
pub fn mlp_predict(mlp: &Mlp, x: &[f64], batch: usize) -> Result<Vec<f64>> {
    let mut current = x.to_vec();
    for (i, layer) in mlp.layers.iter().enumerate() {
        let act = mlp.activation_of(i);
        current = layer.forward(&current, batch)?.into_iter().map(|v| act.apply(v)).collect();
    }
    Ok(current)
}
