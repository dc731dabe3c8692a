use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ForecastError, Forecaster, Result, WindowInput, WindowSample};

pub const CHECKPOINT_FORMAT: &str = "stlf-gru";
pub const CHECKPOINT_VERSION: u32 = 1;

fn d_hidden() -> usize {
    64
}
fn d_layers() -> usize {
    4
}
fn d_lr() -> f64 {
    1e-4
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_batch() -> usize {
    64
}
fn d_epochs() -> usize {
    500
}
fn d_patience() -> usize {
    20
}
fn d_min_delta() -> f64 {
    1e-4
}
fn d_dropout() -> f64 {
    0.1
}

/// Network size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruConfig {
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_layers")]
    pub layers: usize,
}

impl Default for GruConfig {
    fn default() -> Self {
        Self {
            hidden: d_hidden(),
            layers: d_layers(),
        }
    }
}

impl GruConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 {
            return Err(ForecastError::InvalidConfig(
                "GRU hidden size and layer count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Optimizer and stopping settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_min_delta")]
    pub min_delta: f64,
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: d_lr(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            batch_size: d_batch(),
            max_epochs: d_epochs(),
            patience: d_patience(),
            min_delta: d_min_delta(),
            dropout: d_dropout(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, max epochs and patience must be at least 1");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max epochs");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min delta must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Tracks validation MAE and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    /// Records one epoch; returns true when the score is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score < self.best - self.min_delta {
            self.best = score;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
    pub train_loss: Vec<f64>,
    pub val_mae: Vec<f64>,
}

/// Dimensions fixing the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruShape {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerAt {
    input: usize,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    layers: Vec<LayerAt>,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl GruShape {
    fn layout(&self) -> Layout {
        let h = self.hidden;
        let mut at = 0;
        let mut layers = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let input = if l == 0 { self.input } else { h };
            let w_ih = at;
            let w_hh = w_ih + 3 * h * input;
            let b_ih = w_hh + 3 * h * h;
            let b_hh = b_ih + 3 * h;
            at = b_hh + 3 * h;
            layers.push(LayerAt {
                input,
                w_ih,
                w_hh,
                b_ih,
                b_hh,
            });
        }
        let head_w = at;
        let head_b = head_w + self.horizon * h;
        Layout {
            layers,
            head_w,
            head_b,
            total: head_b + self.horizon,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().total
    }
}

/// Serialized model: format tag, version, shape header and flat weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCheckpoint {
    pub format: String,
    pub version: u32,
    pub shape: GruShape,
    pub params: Vec<f64>,
}

/// Stacked GRU with a linear head on the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    shape: GruShape,
    layout: Layout,
    params: Vec<f64>,
}

impl PartialEq for Layout {
    fn eq(&self, other: &Self) -> bool {
        self.total == other.total
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// out += W x for row-major `W` with `x.len()` columns.
fn matvec_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += Wᵀ v for row-major `W` with `out.len()` columns.
fn matvec_t_acc(out: &mut [f64], w: &[f64], v: &[f64]) {
    let cols = out.len();
    for (row, &vi) in w.chunks_exact(cols).zip(v) {
        if vi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }
}

/// G += v xᵀ for row-major `G`.
fn outer_acc(g: &mut [f64], v: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &vi) in g.chunks_exact_mut(cols).zip(v) {
        if vi != 0.0 {
            for (o, a) in row.iter_mut().zip(x) {
                *o += vi * a;
            }
        }
    }
}

/// Per-layer forward record needed for backpropagation.
struct LayerTrace {
    /// Inputs per step, after dropout.
    x: Vec<f64>,
    /// Hidden states h_0..h_T.
    h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// W_hn h + b_hn per step.
    hn: Vec<f64>,
    /// Dropout multipliers applied to this layer's input (empty when none).
    mask: Vec<f64>,
}

struct Trace {
    layers: Vec<LayerTrace>,
    output: Vec<f64>,
}

impl GruModel {
    /// Fresh model: orthogonal recurrent blocks, uniform ±1/√fan_in input and
    /// head matrices, zero biases.
    pub fn init(shape: GruShape, seed: u64) -> Result<Self> {
        if shape.input == 0 || shape.hidden == 0 || shape.layers == 0 || shape.horizon == 0 {
            return Err(ForecastError::InvalidConfig(
                "GRU dimensions must be at least 1".into(),
            ));
        }
        let layout = shape.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = shape.hidden;
        for la in &layout.layers {
            let bound = 1.0 / (la.input as f64).sqrt();
            for p in &mut params[la.w_ih..la.w_ih + 3 * h * la.input] {
                *p = rng.random_range(-bound..bound);
            }
            for g in 0..3 {
                let q = orthogonal(h, &mut rng);
                let base = la.w_hh + g * h * h;
                for i in 0..h {
                    for j in 0..h {
                        params[base + i * h + j] = q[(i, j)];
                    }
                }
            }
        }
        let bound = 1.0 / (h as f64).sqrt();
        for p in &mut params[layout.head_w..layout.head_b] {
            *p = rng.random_range(-bound..bound);
        }
        Ok(Self {
            shape,
            layout,
            params,
        })
    }

    pub fn shape(&self) -> GruShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(ForecastError::ShapeMismatch {
                expected: self.layout.total,
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn checkpoint(&self) -> GruCheckpoint {
        GruCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            shape: self.shape,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: GruCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(ForecastError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut m = Self::init(ck.shape, 0)?;
        m.set_params(ck.params)
            .map_err(|e| ForecastError::Checkpoint(e.to_string()))?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: GruCheckpoint =
            serde_json::from_str(s).map_err(|e| ForecastError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ck)
    }

    fn check_input(&self, input: &WindowInput) -> Result<()> {
        if input.n_features != self.shape.input
            || input.x.len() != input.n_features * input.lookback()
            || input.lookback() == 0
        {
            return Err(ForecastError::ShapeMismatch {
                expected: self.shape.input,
                got: input.n_features,
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate. `dropout` is
    /// `(rate, rng)` during training.
    fn forward(
        &self,
        params: &[f64],
        input: &WindowInput,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Trace {
        let h = self.shape.hidden;
        let steps = input.lookback();
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.shape.layers);
        for (l, la) in self.layout.layers.iter().enumerate() {
            let mut x = if l == 0 {
                input.x.clone()
            } else {
                layers[l - 1].h[h..].to_vec()
            };
            let mut mask = Vec::new();
            if l > 0 {
                if let Some((rate, rng)) = dropout.as_mut() {
                    if *rate > 0.0 {
                        let keep = 1.0 / (1.0 - *rate);
                        mask = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < *rate {
                                    0.0
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        for (v, m) in x.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                    }
                }
            }
            let w_ih = &params[la.w_ih..la.w_hh];
            let w_hh = &params[la.w_hh..la.b_ih];
            let b_ih = &params[la.b_ih..la.b_hh];
            let b_hh = &params[la.b_hh..la.b_hh + 3 * h];
            let mut tr = LayerTrace {
                x: Vec::new(),
                h: vec![0.0; (steps + 1) * h],
                r: vec![0.0; steps * h],
                z: vec![0.0; steps * h],
                n: vec![0.0; steps * h],
                hn: vec![0.0; steps * h],
                mask,
            };
            let mut gi = vec![0.0; 3 * h];
            let mut gh = vec![0.0; 3 * h];
            for t in 0..steps {
                let xt = &x[t * la.input..(t + 1) * la.input];
                gi.copy_from_slice(b_ih);
                matvec_acc(&mut gi, w_ih, xt);
                gh.copy_from_slice(b_hh);
                matvec_acc(&mut gh, w_hh, &tr.h[t * h..(t + 1) * h]);
                for k in 0..h {
                    let r = sigmoid(gi[k] + gh[k]);
                    let z = sigmoid(gi[h + k] + gh[h + k]);
                    let n = (gi[2 * h + k] + r * gh[2 * h + k]).tanh();
                    let prev = tr.h[t * h + k];
                    tr.r[t * h + k] = r;
                    tr.z[t * h + k] = z;
                    tr.n[t * h + k] = n;
                    tr.hn[t * h + k] = gh[2 * h + k];
                    tr.h[(t + 1) * h + k] = (1.0 - z) * n + z * prev;
                }
            }
            tr.x = x;
            layers.push(tr);
        }
        let last = &layers.last().expect("at least one layer").h[steps * h..];
        let mut output = params[self.layout.head_b..self.layout.total].to_vec();
        matvec_acc(
            &mut output,
            &params[self.layout.head_w..self.layout.head_b],
            last,
        );
        Trace { layers, output }
    }

    /// Accumulates into `grad` the gradient of `dy · output`.
    fn backward(&self, params: &[f64], trace: &Trace, dy: &[f64], grad: &mut [f64]) {
        let h = self.shape.hidden;
        let steps = trace.layers[0].r.len() / h;
        let lay = &self.layout;
        let top = trace.layers.last().expect("at least one layer");
        outer_acc(&mut grad[lay.head_w..lay.head_b], dy, &top.h[steps * h..]);
        for (g, d) in grad[lay.head_b..lay.total].iter_mut().zip(dy) {
            *g += d;
        }
        // gradient w.r.t. the outputs h_1..h_T of the current layer
        let mut dout = vec![0.0; steps * h];
        matvec_t_acc(
            &mut dout[(steps - 1) * h..],
            &params[lay.head_w..lay.head_b],
            dy,
        );

        let mut da = vec![0.0; 3 * h];
        let mut dhn = vec![0.0; h];
        for l in (0..self.shape.layers).rev() {
            let la = lay.layers[l];
            let tr = &trace.layers[l];
            let mut dx = vec![0.0; steps * la.input];
            let mut dh_next = vec![0.0; h];
            for t in (0..steps).rev() {
                let prev = &tr.h[t * h..(t + 1) * h];
                for k in 0..h {
                    let i = t * h + k;
                    let dh = dout[i] + dh_next[k];
                    let (r, z, n) = (tr.r[i], tr.z[i], tr.n[i]);
                    let dn = dh * (1.0 - z);
                    let dz = dh * (prev[k] - n);
                    let dan = dn * (1.0 - n * n);
                    let dr = dan * tr.hn[i];
                    da[k] = dr * r * (1.0 - r);
                    da[h + k] = dz * z * (1.0 - z);
                    da[2 * h + k] = dan;
                    dhn[k] = dan * r;
                    dh_next[k] = dh * z;
                }
                let xt = &tr.x[t * la.input..(t + 1) * la.input];
                outer_acc(&mut grad[la.w_ih..la.w_hh], &da, xt);
                for (g, d) in grad[la.b_ih..la.b_hh].iter_mut().zip(&da) {
                    *g += d;
                }
                // recurrent gates r and z see da directly; the candidate sees dhn
                let (wr, wn) = (la.w_hh, la.w_hh + 2 * h * h);
                outer_acc(&mut grad[wr..wn], &da[..2 * h], prev);
                outer_acc(&mut grad[wn..la.b_ih], &dhn, prev);
                let bh = la.b_hh;
                for k in 0..2 * h {
                    grad[bh + k] += da[k];
                }
                for k in 0..h {
                    grad[bh + 2 * h + k] += dhn[k];
                }
                matvec_t_acc(&mut dh_next, &params[wr..wn], &da[..2 * h]);
                matvec_t_acc(&mut dh_next, &params[wn..la.b_ih], &dhn);
                if l > 0 {
                    matvec_t_acc(
                        &mut dx[t * la.input..(t + 1) * la.input],
                        &params[la.w_ih..la.w_hh],
                        &da,
                    );
                }
            }
            if l > 0 {
                if !tr.mask.is_empty() {
                    for (d, m) in dx.iter_mut().zip(&tr.mask) {
                        *d *= m;
                    }
                }
                dout = dx;
            }
        }
    }

    /// Mean squared error over all samples and horizon steps with its
    /// gradient, without dropout.
    pub fn loss_and_grad(&self, samples: &[WindowSample]) -> Result<(f64, Vec<f64>)> {
        self.batch_loss_and_grad(&self.params, samples, None)
    }

    fn batch_loss_and_grad(
        &self,
        params: &[f64],
        samples: &[WindowSample],
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.layout.total];
        let denom = (samples.len() * self.shape.horizon) as f64;
        let mut loss = 0.0;
        for s in samples {
            self.check_input(&s.input)?;
            if s.y.len() != self.shape.horizon {
                return Err(ForecastError::ShapeMismatch {
                    expected: self.shape.horizon,
                    got: s.y.len(),
                });
            }
            let drop = dropout.as_mut().map(|(p, r)| (*p, &mut **r));
            let trace = self.forward(params, &s.input, drop);
            let dy: Vec<f64> = trace
                .output
                .iter()
                .zip(&s.y)
                .map(|(p, y)| {
                    loss += (p - y) * (p - y);
                    2.0 * (p - y) / denom
                })
                .collect();
            self.backward(params, &trace, &dy, &mut grad);
        }
        Ok((loss / denom, grad))
    }

    /// Trains on `train`, early-stopping on MAE over `val`, and returns the
    /// weights of the best validation epoch.
    pub fn fit(
        train: &[WindowSample],
        val: &[WindowSample],
        gcfg: &GruConfig,
        tcfg: &TrainConfig,
    ) -> Result<(Self, TrainSummary)> {
        gcfg.validate()?;
        tcfg.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(ForecastError::InsufficientSamples {
                needed: 1,
                got: train.len().min(val.len()),
            });
        }
        let shape = GruShape {
            input: train[0].input.n_features,
            hidden: gcfg.hidden,
            layers: gcfg.layers,
            horizon: train[0].y.len(),
        };
        let mut model = Self::init(shape, tcfg.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x005e_ed0f_74a1);
        let mut adam = Adam::new(model.layout.total, tcfg);
        let mut stopper = EarlyStopper::new(tcfg.patience, tcfg.min_delta);
        let mut best = model.params.clone();
        let mut summary = TrainSummary {
            epochs_run: 0,
            best_epoch: 0,
            best_val_mae: f64::INFINITY,
            stopped_early: false,
            train_loss: Vec::new(),
            val_mae: Vec::new(),
        };
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut batch = Vec::with_capacity(tcfg.batch_size);
        for epoch in 1..=tcfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(tcfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| train[i].clone()));
                let (loss, grad) = model.batch_loss_and_grad(
                    &model.params,
                    &batch,
                    Some((tcfg.dropout, &mut rng)),
                )?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(ForecastError::Diverged { epoch });
                }
                epoch_loss += loss * chunk.len() as f64;
                adam.step(&mut model.params, &grad);
            }
            let val_mae = super::mean_abs_error(&model, val)?;
            if !val_mae.is_finite() {
                return Err(ForecastError::Diverged { epoch });
            }
            summary.train_loss.push(epoch_loss / train.len() as f64);
            summary.val_mae.push(val_mae);
            summary.epochs_run = epoch;
            if stopper.observe(epoch, val_mae) {
                best.copy_from_slice(&model.params);
            }
            if stopper.should_stop() {
                summary.stopped_early = true;
                break;
            }
        }
        model.params = best;
        summary.best_epoch = stopper.best_epoch().unwrap_or(0);
        summary.best_val_mae = stopper.best();
        Ok((model, summary))
    }
}

impl Forecaster for GruModel {
    fn name(&self) -> &'static str {
        "gru"
    }

    fn horizon(&self) -> usize {
        self.shape.horizon
    }

    fn predict(&self, input: &WindowInput) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward(&self.params, input, None).output)
    }
}

/// Gradient of the mean squared error of `model` at `params`, used by the
/// finite-difference check.
pub fn gru_loss_and_grad(
    model: &GruModel,
    params: &[f64],
    samples: &[WindowSample],
) -> Result<(f64, Vec<f64>)> {
    if params.len() != model.layout.total {
        return Err(ForecastError::ShapeMismatch {
            expected: model.layout.total,
            got: params.len(),
        });
    }
    model.batch_loss_and_grad(params, samples, None)
}

fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            b1: cfg.beta1,
            b2: cfg.beta2,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * grad[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}
