//! Stacked bidirectional LSTM with a heart-rate head on the first layer and
//! a speed head on the second.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::dense::Dense;
use super::dropout::{check_rate, dropout, Mode};
use super::lstm::{bilstm_forward, bptt_backward, BiLstm, BiLstmCache, Seq};
use super::params::{prefixed, Params};
use crate::error::{FitError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualHeadNet {
    pub layer1: BiLstm,
    pub layer2: BiLstm,
    pub hr_head: Dense,
    pub speed_head: Dense,
    /// Dropout between the two recurrent layers.
    pub dropout: f64,
}

/// Per-step outputs, time-major `L × batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadOutput {
    pub speed: Vec<f64>,
    pub heart_rate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DualHeadCache {
    len: usize,
    batch: usize,
    c1: BiLstmCache,
    c2: BiLstmCache,
    h1: Seq,
    h2_in: Seq,
    mask: Option<Vec<f64>>,
    h2: Seq,
    hr_pre: Vec<f64>,
    speed_pre: Vec<f64>,
    out: DualHeadOutput,
}

impl DualHeadNet {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden1: usize, hidden2: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        check_rate(dropout)?;
        if input == 0 || hidden1 == 0 || hidden2 == 0 {
            return Err(FitError::InvalidArgument("network widths must be positive".into()));
        }
        Ok(DualHeadNet {
            layer1: BiLstm::init(hidden1, input, rng),
            layer2: BiLstm::init(hidden2, 2 * hidden1, rng),
            hr_head: Dense::init(2 * hidden1, 1, rng),
            speed_head: Dense::init(2 * hidden2, 1, rng),
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input()
    }

    pub fn forward<R: Rng + ?Sized>(&self, input: &Seq, mode: Mode, rng: &mut R) -> Result<(DualHeadOutput, DualHeadCache)> {
        let (h1, c1) = bilstm_forward(&self.layer1, input)?;
        let (dropped, mask) = dropout(&h1.data, self.dropout, rng, mode)?;
        let h2_in = Seq { data: dropped, ..h1.clone() };
        let (h2, c2) = bilstm_forward(&self.layer2, &h2_in)?;
        let rows = input.len * input.batch;
        let hr_pre = self.hr_head.forward(&h1.data, rows)?;
        let speed_pre = self.speed_head.forward(&h2.data, rows)?;
        let out = DualHeadOutput {
            speed: speed_pre.iter().map(|&v| Activation::Selu.apply(v)).collect(),
            heart_rate: hr_pre.iter().map(|&v| Activation::Selu.apply(v)).collect(),
        };
        let cache = DualHeadCache {
            len: input.len,
            batch: input.batch,
            c1,
            c2,
            h1,
            h2_in,
            mask,
            h2,
            hr_pre,
            speed_pre,
            out: out.clone(),
        };
        Ok((out, cache))
    }

    /// Gradients of the loss given its derivatives with respect to each
    /// output. Returns parameter gradients and the input gradient.
    pub fn backward(&self, cache: &DualHeadCache, d_speed: &[f64], d_hr: &[f64]) -> Result<(DualHeadNet, Seq)> {
        let rows = cache.len * cache.batch;
        if d_speed.len() != rows || d_hr.len() != rows {
            return Err(FitError::dims(format!(
                "output gradients of {} and {} values for {rows} steps",
                d_speed.len(),
                d_hr.len()
            )));
        }
        let mut grads = self.zeros_like();
        let selu_grad = |d: &[f64], pre: &[f64], out: &[f64]| -> Vec<f64> {
            d.iter()
                .zip(pre)
                .zip(out)
                .map(|((g, &z), &y)| g * Activation::Selu.derivative(z, y))
                .collect()
        };
        let ds = selu_grad(d_speed, &cache.speed_pre, &cache.out.speed);
        let dh = selu_grad(d_hr, &cache.hr_pre, &cache.out.heart_rate);
        let dh2 = self.speed_head.backward(&cache.h2.data, &ds, rows, &mut grads.speed_head);
        let mut dh1 = self.hr_head.backward(&cache.h1.data, &dh, rows, &mut grads.hr_head);
        let dh2 = Seq { data: dh2, ..cache.h2.clone() };
        let (g2, mut d_mid) = bptt_backward(&self.layer2, &cache.c2, &dh2)?;
        grads.layer2 = g2;
        if let Some(mask) = &cache.mask {
            for (g, m) in d_mid.data.iter_mut().zip(mask) {
                *g *= m;
            }
        }
        debug_assert_eq!(d_mid.data.len(), cache.h2_in.data.len());
        for (a, b) in dh1.iter_mut().zip(&d_mid.data) {
            *a += b;
        }
        let dh1 = Seq { data: dh1, ..cache.h1.clone() };
        let (g1, dx) = bptt_backward(&self.layer1, &cache.c1, &dh1)?;
        grads.layer1 = g1;
        Ok((grads, dx))
    }
}

impl Params for DualHeadNet {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.layer1.slices();
        v.extend(self.layer2.slices());
        v.extend(self.hr_head.slices());
        v.extend(self.speed_head.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.layer1.slices_mut();
        v.extend(self.layer2.slices_mut());
        v.extend(self.hr_head.slices_mut());
        v.extend(self.speed_head.slices_mut());
        v
    }
    fn names(&self) -> Vec<String> {
        prefixed("layer1", self.layer1.names())
            .chain(prefixed("layer2", self.layer2.names()))
            .chain(prefixed("hr_head", self.hr_head.names()))
            .chain(prefixed("speed_head", self.speed_head.names()))
            .collect()
    }
    fn zeros_like(&self) -> Self {
        DualHeadNet {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            hr_head: self.hr_head.zeros_like(),
            speed_head: self.speed_head.zeros_like(),
            dropout: self.dropout,
        }
    }
}

/// Equal-weight sum of the per-output mean squared errors, with its
/// derivatives with respect to each output.
pub fn joint_mse(out: &DualHeadOutput, speed: &[f64], heart_rate: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = out.speed.len();
    if speed.len() != n || heart_rate.len() != n || n == 0 {
        return Err(FitError::dims(format!(
            "targets of {} and {} values for {n} outputs",
            speed.len(),
            heart_rate.len()
        )));
    }
    let scale = 2.0 / n as f64;
    let mut loss = 0.0;
    let mut ds = Vec::with_capacity(n);
    let mut dh = Vec::with_capacity(n);
    for k in 0..n {
        let es = out.speed[k] - speed[k];
        let eh = out.heart_rate[k] - heart_rate[k];
        loss += es * es + eh * eh;
        ds.push(scale * es);
        dh.push(scale * eh);
    }
    Ok((loss / n as f64, ds, dh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::selu;
    use crate::nn::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (DualHeadNet, Seq, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DualHeadNet::init(3, 4, 3, 0.2, &mut rng).unwrap();
        // unit-scale weights keep every gradient well above difference roundoff
        crate::nn::fill_uniform(&mut net, &mut rng, 1.0);
        let x = Seq::new(3, 2, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let ts = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let th = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        (net, x, ts, th)
    }

    #[test]
    fn output_shapes() {
        let (net, x, _, _) = setup(0);
        let (out, _) = net.forward(&x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.speed.len(), 6);
        assert_eq!(out.heart_rate.len(), 6);
        assert_eq!(net.hr_head.input, 8);
        assert_eq!(net.speed_head.input, 6);
    }

    #[test]
    fn zero_heads_give_constant_selu_of_bias() {
        let (mut net, x, _, _) = setup(1);
        net.hr_head = Dense::from_parts(8, 1, vec![0.0; 8], vec![-0.4]).unwrap();
        net.speed_head = Dense::from_parts(6, 1, vec![0.0; 6], vec![0.3]).unwrap();
        let (out, _) = net.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.heart_rate.iter().all(|&v| v == selu(-0.4)));
        assert!(out.speed.iter().all(|&v| v == selu(0.3)));
    }

    #[test]
    fn full_model_gradient_check() {
        for seed in 0..10 {
            let (net, x, ts, th) = setup(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (out, cache) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
            let (_, ds, dh) = joint_mse(&out, &ts, &th).unwrap();
            let (g, dx) = net.backward(&cache, &ds, &dh).unwrap();
            let loss = |m: &DualHeadNet| {
                let (o, _) = m.forward(&x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
                Ok(joint_mse(&o, &ts, &th)?.0)
            };
            let r = grad_check(&net, &g, loss, 1e-5, 1e-4).unwrap();
            assert!(r.pass, "{r:?}");
            for k in 0..x.data.len() {
                let mut p = x.clone();
                let mut m = x.clone();
                p.data[k] += 1e-5;
                m.data[k] -= 1e-5;
                let f = |s: &Seq| {
                    let (o, _) = net.forward(s, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                    joint_mse(&o, &ts, &th).unwrap().0
                };
                let num = (f(&p) - f(&m)) / 2e-5;
                assert!(crate::nn::relative_error(dx.data[k], num) < 1e-4);
            }
        }
    }

    #[test]
    fn dropout_mask_flows_into_gradient() {
        // with a fixed mask the train-mode loss is smooth in the parameters
        let (net, x, ts, th) = setup(4);
        let (out, cache) = net.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (_, ds, dh) = joint_mse(&out, &ts, &th).unwrap();
        let (g, _) = net.backward(&cache, &ds, &dh).unwrap();
        let loss = |m: &DualHeadNet| {
            let (o, _) = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9))?;
            Ok(joint_mse(&o, &ts, &th)?.0)
        };
        assert!(grad_check(&net, &g, loss, 1e-5, 1e-4).unwrap().pass);
    }
}
