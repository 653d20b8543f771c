//! Trainable heads over the frozen embedder: a three-layer occupancy MLP
//! (300/70/4 sigmoid units) and a one-unit fusion head that concatenates MLP
//! activations with the competency vector to score a candidate.
//!
//! Forward, backward and the optimizer are written out explicitly; the
//! gradient path is validated against central finite differences and the
//! optimizer against an independent scalar oracle in the test suite.

mod optimizer;
mod snapshot;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{self, tags};
use crate::{Error, Result};

pub use optimizer::{adamw_step, adamw_step_filtered, AdamWConfig, OptimizerState};
pub use snapshot::{load_snapshot, save_snapshot, SnapshotMeta};
pub use train::{
    one_hot, overall_accuracy, predict_occupancy, predict_scores, scoring_rmse, sector_accuracy,
    train, CurvePoint, LearningCurve, ScoreTarget, Split, Task, TrainConfig,
};

pub const HIDDEN1: usize = 300;
pub const HIDDEN2: usize = 70;
pub const GROUPS_OUT: usize = 4;
pub const COMPETENCIES: usize = 7;

/// Which activations are concatenated with the competency vector before the
/// fusion unit. The widest reading (all three layer outputs) is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionInputs {
    G,
    H2G,
    H1H2G,
}

impl FusionInputs {
    pub fn dim(self) -> usize {
        match self {
            FusionInputs::G => GROUPS_OUT + COMPETENCIES,
            FusionInputs::H2G => HIDDEN2 + GROUPS_OUT + COMPETENCIES,
            FusionInputs::H1H2G => HIDDEN1 + HIDDEN2 + GROUPS_OUT + COMPETENCIES,
        }
    }
}

/// All trainable parameters. Weight matrices are row-major with shape
/// `(output, input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    pub fusion: FusionInputs,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub ws: Vec<f64>,
    pub bs: f64,
}

fn xavier_fill(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out.iter_mut() {
        *v = -bound + rng.gen::<f64>() * (2.0 * bound);
    }
}

/// Initialize weights uniformly in the Xavier/Glorot range for each layer;
/// biases start at zero. Fully determined by `(input_dim, fusion, seed)`.
pub fn init_params(input_dim: usize, fusion: FusionInputs, seed: u64) -> Result<ModelParams> {
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(exec::stream_seed(seed, tags::PARAM_INIT, 0));
    let mut w1 = vec![0.0; HIDDEN1 * input_dim];
    let mut w2 = vec![0.0; HIDDEN2 * HIDDEN1];
    let mut w3 = vec![0.0; GROUPS_OUT * HIDDEN2];
    let mut ws = vec![0.0; fusion.dim()];
    // Fill order is part of the determinism contract: w1, w2, w3, ws.
    xavier_fill(&mut rng, &mut w1, input_dim, HIDDEN1);
    xavier_fill(&mut rng, &mut w2, HIDDEN1, HIDDEN2);
    xavier_fill(&mut rng, &mut w3, HIDDEN2, GROUPS_OUT);
    xavier_fill(&mut rng, &mut ws, fusion.dim(), 1);
    Ok(ModelParams {
        input_dim,
        fusion,
        w1,
        b1: vec![0.0; HIDDEN1],
        w2,
        b2: vec![0.0; HIDDEN2],
        w3,
        b3: vec![0.0; GROUPS_OUT],
        ws,
        bs: 0.0,
    })
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w3.len()
            + self.b3.len()
            + self.ws.len()
            + 1
    }
}

/// Per-parameter values with the same shapes as [`ModelParams`]; used for
/// gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub ws: Vec<f64>,
    pub bs: f64,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
            w3: vec![0.0; params.w3.len()],
            b3: vec![0.0; params.b3.len()],
            ws: vec![0.0; params.ws.len()],
            bs: 0.0,
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        let add = |a: &mut [f64], b: &[f64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.w1, &other.w1);
        add(&mut self.b1, &other.b1);
        add(&mut self.w2, &other.w2);
        add(&mut self.b2, &other.b2);
        add(&mut self.w3, &other.w3);
        add(&mut self.b3, &other.b3);
        add(&mut self.ws, &other.ws);
        self.bs += other.bs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activations recorded by a training-mode forward pass, as needed by
/// [`backward`]. Eval-mode passes return no cache.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub h1: Vec<f64>,
    pub h1d: Vec<f64>,
    pub mask1: Vec<bool>,
    pub h2: Vec<f64>,
    pub h2d: Vec<f64>,
    pub mask2: Vec<bool>,
    pub g: Vec<f64>,
    pub fusion_in: Option<Vec<f64>>,
    pub y_hat: Option<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `bias + W x` for a row-major `(rows, cols)` matrix.
fn affine(w: &[f64], bias: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = bias[r];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        out.push(acc);
    }
    out
}

/// `W^T dy` for a row-major `(rows, cols)` matrix.
fn matvec_transpose(w: &[f64], dy: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let d = dy[r];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += d * wv;
        }
    }
    out
}

/// Accumulate the outer product `dy ⊗ x` into a row-major gradient matrix.
fn outer_acc(grad: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, d) in dy.iter().enumerate() {
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

struct CoreActs {
    h1: Vec<f64>,
    h1d: Vec<f64>,
    mask1: Vec<bool>,
    h2: Vec<f64>,
    h2d: Vec<f64>,
    mask2: Vec<bool>,
    g: Vec<f64>,
}

fn forward_core(
    features: &[f64],
    params: &ModelParams,
    mode: Mode,
    dropout_rate: f64,
    dropout_seed: u64,
) -> Result<CoreActs> {
    if features.len() != params.input_dim {
        return Err(Error::Shape(format!(
            "feature vector has dimension {}, model expects {}",
            features.len(),
            params.input_dim
        )));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0,1): {dropout_rate}"
        )));
    }

    // Inverted dropout: zero with probability p, scale survivors by 1/(1-p);
    // eval mode applies neither. A rate of zero draws nothing at all, so
    // train-mode output then equals eval-mode output exactly.
    let use_dropout = mode == Mode::Train && dropout_rate > 0.0;
    let (mask1, mask2) = if use_dropout {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let m1: Vec<bool> = (0..HIDDEN1).map(|_| rng.gen::<f64>() >= dropout_rate).collect();
        let m2: Vec<bool> = (0..HIDDEN2).map(|_| rng.gen::<f64>() >= dropout_rate).collect();
        (m1, m2)
    } else {
        (vec![true; HIDDEN1], vec![true; HIDDEN2])
    };
    let scale = if use_dropout { 1.0 / (1.0 - dropout_rate) } else { 1.0 };
    let drop = |h: &[f64], mask: &[bool]| -> Vec<f64> {
        h.iter()
            .zip(mask)
            .map(|(v, keep)| if *keep { v * scale } else { 0.0 })
            .collect()
    };

    let mut h1 = affine(&params.w1, &params.b1, features, HIDDEN1, params.input_dim);
    h1.iter_mut().for_each(|v| *v = sigmoid(*v));
    let h1d = drop(&h1, &mask1);

    let mut h2 = affine(&params.w2, &params.b2, &h1d, HIDDEN2, HIDDEN1);
    h2.iter_mut().for_each(|v| *v = sigmoid(*v));
    let h2d = drop(&h2, &mask2);

    let mut g = affine(&params.w3, &params.b3, &h2d, GROUPS_OUT, HIDDEN2);
    g.iter_mut().for_each(|v| *v = sigmoid(*v));

    Ok(CoreActs {
        h1,
        h1d,
        mask1,
        h2,
        h2d,
        mask2,
        g,
    })
}

/// Occupancy head: four independent sigmoid units. Returns the activation
/// vector and, in training mode, the cache for [`backward`].
pub fn forward_occupancy(
    features: &[f64],
    params: &ModelParams,
    mode: Mode,
    dropout_rate: f64,
    dropout_seed: u64,
) -> Result<(Vec<f64>, Option<ForwardCache>)> {
    let acts = forward_core(features, params, mode, dropout_rate, dropout_seed)?;
    let g = acts.g.clone();
    let cache = (mode == Mode::Train).then(|| ForwardCache {
        h1: acts.h1,
        h1d: acts.h1d,
        mask1: acts.mask1,
        h2: acts.h2,
        h2d: acts.h2d,
        mask2: acts.mask2,
        g: acts.g,
        fusion_in: None,
        y_hat: None,
    });
    Ok((g, cache))
}

fn fusion_input(acts: &CoreActs, competencies: &[f64], fusion: FusionInputs) -> Vec<f64> {
    let mut u = Vec::with_capacity(fusion.dim());
    if fusion == FusionInputs::H1H2G {
        u.extend_from_slice(&acts.h1d);
    }
    if fusion != FusionInputs::G {
        u.extend_from_slice(&acts.h2d);
    }
    u.extend_from_slice(&acts.g);
    u.extend_from_slice(competencies);
    u
}

/// Scoring head: concatenates MLP activations with the competency vector and
/// applies one sigmoid unit, yielding a score in (0, 1).
pub fn forward_score(
    features: &[f64],
    competencies: &[f64],
    params: &ModelParams,
    mode: Mode,
    dropout_rate: f64,
    dropout_seed: u64,
) -> Result<(f64, Option<ForwardCache>)> {
    if competencies.len() != COMPETENCIES {
        return Err(Error::Shape(format!(
            "competency vector has {} components, expected {COMPETENCIES}",
            competencies.len()
        )));
    }
    let acts = forward_core(features, params, mode, dropout_rate, dropout_seed)?;
    let u = fusion_input(&acts, competencies, params.fusion);
    if u.len() != params.ws.len() {
        return Err(Error::Shape(format!(
            "fusion input has dimension {}, weights expect {}",
            u.len(),
            params.ws.len()
        )));
    }
    let mut pre = params.bs;
    for (wv, uv) in params.ws.iter().zip(&u) {
        pre += wv * uv;
    }
    let y_hat = sigmoid(pre);
    let cache = (mode == Mode::Train).then(|| ForwardCache {
        h1: acts.h1,
        h1d: acts.h1d,
        mask1: acts.mask1,
        h2: acts.h2,
        h2d: acts.h2d,
        mask2: acts.mask2,
        g: acts.g,
        fusion_in: Some(u),
        y_hat: Some(y_hat),
    });
    Ok((y_hat, cache))
}

/// Root-mean-square error over all samples and output components.
pub fn rmse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Shape(format!(
            "predictions ({}) and targets ({}) must be equal-length and non-empty",
            predictions.len(),
            targets.len()
        )));
    }
    let k = targets[0].len();
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != k || t.len() != k {
            return Err(Error::Shape("ragged prediction or target vectors".into()));
        }
        for (pv, tv) in p.iter().zip(t) {
            let d = pv - tv;
            sum += d * d;
        }
    }
    Ok((sum / (predictions.len() * k) as f64).sqrt())
}

/// One training example paired with its target.
pub struct TrainSample<'a> {
    pub features: &'a [f64],
    pub competencies: Option<&'a [f64]>,
    pub target: SampleTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleTarget {
    Groups([f64; GROUPS_OUT]),
    Score(f64),
}

/// Below this batch RMSE the sqrt in the loss is treated as
/// non-differentiable and the gradient is defined to be zero.
pub const RMSE_GRADIENT_GUARD: f64 = 1e-12;

fn sample_gradient(
    sample: &TrainSample,
    params: &ModelParams,
    cache: &ForwardCache,
    dropout_rate: f64,
    rmse: f64,
    denom: f64,
) -> Gradients {
    let mut grads = Gradients::zeros_like(params);
    let keep_scale = if dropout_rate > 0.0 {
        1.0 / (1.0 - dropout_rate)
    } else {
        1.0
    };

    // dL/d(output) for batch RMSE: (prediction - target) / (N * K * rmse).
    let mut d_g = vec![0.0; GROUPS_OUT];
    let mut du_h1: Option<Vec<f64>> = None;
    let mut du_h2: Option<Vec<f64>> = None;
    match (&sample.target, &cache.fusion_in, &cache.y_hat) {
        (SampleTarget::Groups(target), _, _) => {
            for k in 0..GROUPS_OUT {
                d_g[k] = (cache.g[k] - target[k]) / (denom * rmse);
            }
        }
        (SampleTarget::Score(target), Some(u), Some(y_hat)) => {
            let dy = (y_hat - target) / (denom * rmse);
            let ds = dy * y_hat * (1.0 - y_hat);
            for (gw, uv) in grads.ws.iter_mut().zip(u) {
                *gw = ds * uv;
            }
            grads.bs = ds;
            let du: Vec<f64> = params.ws.iter().map(|w| ds * w).collect();
            let mut offset = 0;
            if params.fusion == FusionInputs::H1H2G {
                du_h1 = Some(du[..HIDDEN1].to_vec());
                offset += HIDDEN1;
            }
            if params.fusion != FusionInputs::G {
                du_h2 = Some(du[offset..offset + HIDDEN2].to_vec());
                offset += HIDDEN2;
            }
            d_g.copy_from_slice(&du[offset..offset + GROUPS_OUT]);
            // Competency slots receive no gradient: they are inputs.
        }
        _ => unreachable!("cache/target mismatch is checked by backward"),
    }

    let da3: Vec<f64> = d_g
        .iter()
        .zip(&cache.g)
        .map(|(d, g)| d * g * (1.0 - g))
        .collect();
    outer_acc(&mut grads.w3, &da3, &cache.h2d);
    grads.b3.copy_from_slice(&da3);

    let mut dh2d = matvec_transpose(&params.w3, &da3, GROUPS_OUT, HIDDEN2);
    if let Some(extra) = du_h2 {
        for (d, e) in dh2d.iter_mut().zip(&extra) {
            *d += e;
        }
    }
    let da2: Vec<f64> = dh2d
        .iter()
        .zip(&cache.mask2)
        .zip(&cache.h2)
        .map(|((d, keep), h)| if *keep { d * keep_scale * h * (1.0 - h) } else { 0.0 })
        .collect();
    outer_acc(&mut grads.w2, &da2, &cache.h1d);
    grads.b2.copy_from_slice(&da2);

    let mut dh1d = matvec_transpose(&params.w2, &da2, HIDDEN2, HIDDEN1);
    if let Some(extra) = du_h1 {
        for (d, e) in dh1d.iter_mut().zip(&extra) {
            *d += e;
        }
    }
    let da1: Vec<f64> = dh1d
        .iter()
        .zip(&cache.mask1)
        .zip(&cache.h1)
        .map(|((d, keep), h)| if *keep { d * keep_scale * h * (1.0 - h) } else { 0.0 })
        .collect();
    outer_acc(&mut grads.w1, &da1, sample.features);
    grads.b1.copy_from_slice(&da1);

    grads
}

/// Exact analytic gradients of the batch RMSE with respect to every
/// parameter, honoring the dropout masks recorded in the caches. The frozen
/// embedder receives no gradient. Per-sample contributions are computed
/// independently (in parallel when enabled) and summed in sample order, so
/// the result is bit-identical across thread counts.
pub fn backward(
    samples: &[TrainSample],
    params: &ModelParams,
    caches: &[ForwardCache],
    dropout_rate: f64,
) -> Result<Gradients> {
    if samples.is_empty() || samples.len() != caches.len() {
        return Err(Error::Contract(format!(
            "batch of {} samples with {} caches",
            samples.len(),
            caches.len()
        )));
    }
    let k = match samples[0].target {
        SampleTarget::Groups(_) => GROUPS_OUT,
        SampleTarget::Score(_) => 1,
    };
    let mut predictions = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for (sample, cache) in samples.iter().zip(caches) {
        if cache.h1.len() != HIDDEN1 || cache.h2.len() != HIDDEN2 || cache.g.len() != GROUPS_OUT {
            return Err(Error::Contract("cache shapes do not match the model".into()));
        }
        match sample.target {
            SampleTarget::Groups(t) => {
                predictions.push(cache.g.clone());
                targets.push(t.to_vec());
            }
            SampleTarget::Score(t) => {
                let y = cache.y_hat.ok_or_else(|| {
                    Error::Contract("scoring sample paired with an occupancy cache".into())
                })?;
                predictions.push(vec![y]);
                targets.push(vec![t]);
            }
        }
    }
    let rmse = rmse_loss(&predictions, &targets)?;
    if rmse < RMSE_GRADIENT_GUARD {
        return Ok(Gradients::zeros_like(params));
    }
    let denom = (samples.len() * k) as f64;

    let indices: Vec<usize> = (0..samples.len()).collect();
    let per_sample = exec::map_ordered(&indices, true, |&i| {
        sample_gradient(&samples[i], params, &caches[i], dropout_rate, rmse, denom)
    });
    let mut total = Gradients::zeros_like(params);
    for g in &per_sample {
        total.add_assign(g);
    }
    Ok(total)
}
