//! Single-hidden-layer voter networks: ReLU hidden layer, sigmoid output,
//! class-weighted cross-entropy loss, exact analytic gradients, and Adam.
//!
//! Training runs mini-batches through GEMM-shaped forward/backward passes
//! (samples as matrix columns); the per-sample [`forward`]/[`backward`]
//! functions define the reference semantics and the batched path is tested
//! to agree with their mean.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output probabilities are clamped to [EPS, 1 - EPS] inside the loss so
/// log terms stay finite.
const PROB_EPS: f64 = 1e-12;

/// Class weights of the cross-entropy loss: w0 scales negative samples,
/// w1 positives (the minority class).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub w0: f64,
    pub w1: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { w0: 1.0, w1: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VoterDoc", into = "VoterDoc")]
pub struct VoterNet {
    /// Hidden weights, hidden x input.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// Output weights over hidden activations.
    pub w2: DVector<f64>,
    pub b2: f64,
}

impl VoterNet {
    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Glorot-uniform initialization, biases zero. Entries are drawn in
    /// column-major order so the result is a pure function of the rng state.
    pub fn init(hidden: usize, input: usize, rng: &mut ChaCha8Rng) -> VoterNet {
        let lim1 = (6.0 / (input + hidden) as f64).sqrt();
        let mut w1 = DMatrix::zeros(hidden, input);
        for j in 0..input {
            for i in 0..hidden {
                w1[(i, j)] = rng.gen_range(-lim1..lim1);
            }
        }
        let lim2 = (6.0 / (hidden + 1) as f64).sqrt();
        let mut w2 = DVector::zeros(hidden);
        for i in 0..hidden {
            w2[i] = rng.gen_range(-lim2..lim2);
        }
        VoterNet {
            w1,
            b1: DVector::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let h = self.w1.nrows();
        if self.b1.len() != h || self.w2.len() != h {
            return Err(Error::Dimension(format!(
                "voter shapes disagree: w1 {}x{}, b1 {}, w2 {}",
                h,
                self.w1.ncols(),
                self.b1.len(),
                self.w2.len()
            )));
        }
        let finite = self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.is_finite();
        if !finite {
            return Err(Error::validation("voter", "non-finite parameter"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct VoterDoc {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl From<VoterNet> for VoterDoc {
    fn from(net: VoterNet) -> Self {
        VoterDoc {
            w1: net.w1.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b1: net.b1.iter().copied().collect(),
            w2: net.w2.iter().copied().collect(),
            b2: net.b2,
        }
    }
}

impl TryFrom<VoterDoc> for VoterNet {
    type Error = Error;

    fn try_from(doc: VoterDoc) -> Result<Self> {
        let hidden = doc.w1.len();
        let input = doc.w1.first().map_or(0, Vec::len);
        if doc.w1.iter().any(|r| r.len() != input) {
            return Err(Error::validation("voter", "ragged w1 matrix"));
        }
        let net = VoterNet {
            w1: DMatrix::from_row_iterator(hidden, input, doc.w1.into_iter().flatten()),
            b1: DVector::from_vec(doc.b1),
            w2: DVector::from_vec(doc.w2),
            b2: doc.b2,
        };
        net.validate()?;
        Ok(net)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Forward pass for one sample: hidden ReLU activations and the sigmoid
/// output probability.
pub fn forward(net: &VoterNet, x: &[f64]) -> Result<(DVector<f64>, f64)> {
    if x.len() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "input length {} != voter width {}",
            x.len(),
            net.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("voter input", "non-finite value"));
    }
    let xv = DVector::from_column_slice(x);
    let z1 = &net.w1 * xv + &net.b1;
    let hidden = z1.map(relu);
    let z2 = net.w2.dot(&hidden) + net.b2;
    Ok((hidden, sigmoid(z2)))
}

/// Class-weighted cross-entropy of one prediction, with the probability
/// clamped away from 0 and 1.
pub fn sample_loss(p: f64, y: bool, cfg: &LossConfig) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y {
        -cfg.w1 * p.ln()
    } else {
        -cfg.w0 * (1.0 - p).ln()
    }
}

/// Parameter-shaped gradient record.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

/// Exact gradient of `sample_loss(forward(net, x), y)` w.r.t. all trainable
/// parameters. The ReLU subgradient at exactly 0 is taken as 0.
pub fn backward(net: &VoterNet, x: &[f64], y: bool, cfg: &LossConfig) -> Result<Gradients> {
    let xv = DVector::from_column_slice(x);
    if x.len() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "input length {} != voter width {}",
            x.len(),
            net.input_dim()
        )));
    }
    let z1 = &net.w1 * &xv + &net.b1;
    let hidden = z1.map(relu);
    let p = sigmoid(net.w2.dot(&hidden) + net.b2);

    // d loss / d z2 for the weighted sigmoid cross-entropy.
    let dz2 = if y { cfg.w1 * (p - 1.0) } else { cfg.w0 * p };
    let dw2 = &hidden * dz2;
    let dz1 = DVector::from_fn(net.hidden_dim(), |i, _| {
        if z1[i] > 0.0 {
            net.w2[i] * dz2
        } else {
            0.0
        }
    });
    let dw1 = &dz1 * xv.transpose();
    Ok(Gradients {
        w1: dw1,
        b1: dz1,
        w2: dw2,
        b2: dz2,
    })
}

/// Adam accumulators for one voter's parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m_w1: DMatrix<f64>,
    v_w1: DMatrix<f64>,
    m_b1: DVector<f64>,
    v_b1: DVector<f64>,
    m_w2: DVector<f64>,
    v_w2: DVector<f64>,
    m_b2: f64,
    v_b2: f64,
}

impl AdamState {
    pub fn new(learning_rate: f64, hidden: usize, input: usize) -> AdamState {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m_w1: DMatrix::zeros(hidden, input),
            v_w1: DMatrix::zeros(hidden, input),
            m_b1: DVector::zeros(hidden),
            v_b1: DVector::zeros(hidden),
            m_w2: DVector::zeros(hidden),
            v_w2: DVector::zeros(hidden),
            m_b2: 0.0,
            v_b2: 0.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Scalar coefficients of one Adam step, shared across parameter groups.
#[derive(Clone, Copy)]
struct StepScale {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], k: StepScale) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * g;
        v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * g * g;
        let m_hat = m[i] / k.bc1;
        let v_hat = v[i] / k.bc2;
        params[i] -= k.lr * m_hat / (v_hat.sqrt() + k.eps);
    }
}

/// One Adam step with bias correction; increments the step counter once.
pub fn adam_step(state: &mut AdamState, net: &mut VoterNet, g: &Gradients) -> Result<()> {
    if g.w1.shape() != net.w1.shape() || g.b1.len() != net.b1.len() || g.w2.len() != net.w2.len() {
        return Err(Error::Dimension("gradient/parameter shape mismatch".into()));
    }
    state.t += 1;
    let k = StepScale {
        lr: state.learning_rate,
        beta1: state.beta1,
        beta2: state.beta2,
        eps: state.epsilon,
        bc1: 1.0 - state.beta1.powi(state.t as i32),
        bc2: 1.0 - state.beta2.powi(state.t as i32),
    };
    adam_update(
        net.w1.as_mut_slice(),
        g.w1.as_slice(),
        state.m_w1.as_mut_slice(),
        state.v_w1.as_mut_slice(),
        k,
    );
    adam_update(
        net.b1.as_mut_slice(),
        g.b1.as_slice(),
        state.m_b1.as_mut_slice(),
        state.v_b1.as_mut_slice(),
        k,
    );
    adam_update(
        net.w2.as_mut_slice(),
        g.w2.as_slice(),
        state.m_w2.as_mut_slice(),
        state.v_w2.as_mut_slice(),
        k,
    );
    let mut b2_param = [net.b2];
    let mut m_b2 = [state.m_b2];
    let mut v_b2 = [state.v_b2];
    adam_update(&mut b2_param, &[g.b2], &mut m_b2, &mut v_b2, k);
    net.b2 = b2_param[0];
    state.m_b2 = m_b2[0];
    state.v_b2 = v_b2[0];
    Ok(())
}

/// Hyperparameters of one voter's training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoterHyper {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossConfig,
}

impl Default for VoterHyper {
    fn default() -> Self {
        VoterHyper {
            hidden: 20,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.001,
            loss: LossConfig::default(),
        }
    }
}

/// Train one voter with mini-batch Adam. `xt` holds one sample per COLUMN
/// (input-dim x n); `y` are 0/1 labels. Returns the net and the per-epoch
/// mean training loss. Fully deterministic in the rng state.
pub fn train_voter(
    xt: &DMatrix<f64>,
    y: &[f64],
    hyper: &VoterHyper,
    rng: &mut ChaCha8Rng,
) -> Result<(VoterNet, Vec<f64>)> {
    let (dim, n) = (xt.nrows(), xt.ncols());
    if n == 0 {
        return Err(Error::validation("training set", "empty"));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} samples",
            y.len()
        )));
    }
    if hyper.hidden == 0
        || hyper.batch_size == 0
        || !(hyper.learning_rate.is_finite() && hyper.learning_rate > 0.0)
    {
        return Err(Error::Config(
            "hidden, batch_size and learning_rate must be positive".into(),
        ));
    }
    if !(hyper.loss.w0.is_finite()
        && hyper.loss.w0 > 0.0
        && hyper.loss.w1.is_finite()
        && hyper.loss.w1 > 0.0)
    {
        return Err(Error::Config("class weights must be positive".into()));
    }

    let mut net = VoterNet::init(hyper.hidden, dim, rng);
    let mut adam = AdamState::new(hyper.learning_rate, hyper.hidden, dim);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let (w0, w1) = (hyper.loss.w0, hyper.loss.w1);

    let mut xb = DMatrix::zeros(dim, hyper.batch_size.min(n));
    let mut xbt = DMatrix::zeros(hyper.batch_size.min(n), dim);
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let b = chunk.len();
            if xb.ncols() != b {
                xb = DMatrix::zeros(dim, b);
                xbt = DMatrix::zeros(b, dim);
            }
            for (k, &i) in chunk.iter().enumerate() {
                xb.column_mut(k).copy_from(&xt.column(i));
                for j in 0..dim {
                    xbt[(k, j)] = xb[(j, k)];
                }
            }

            // Forward: hidden x batch activations, then batch probabilities.
            let mut z1 = &net.w1 * &xb;
            for mut col in z1.column_iter_mut() {
                col += &net.b1;
            }
            let h = z1.map(relu);
            let z2 = h.tr_mul(&net.w2).add_scalar(net.b2);

            // Mean gradient over the batch, folded into d loss / d z2.
            let mut dz2 = DVector::zeros(b);
            for k in 0..b {
                let p = sigmoid(z2[k]);
                let label = y[chunk[k]] != 0.0;
                loss_sum += sample_loss(p, label, &hyper.loss);
                dz2[k] = if label { w1 * (p - 1.0) } else { w0 * p } / b as f64;
            }

            let dw2 = &h * &dz2;
            let db2 = dz2.sum();
            let mut dz1 = &net.w2 * dz2.transpose(); // hidden x batch
            for (v, &z) in dz1.iter_mut().zip(z1.iter()) {
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
            let dw1 = &dz1 * &xbt;
            let db1 = dz1.column_sum();

            adam_step(
                &mut adam,
                &mut net,
                &Gradients {
                    w1: dw1,
                    b1: db1,
                    w2: dw2,
                    b2: db2,
                },
            )?;
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok((net, epoch_losses))
}
