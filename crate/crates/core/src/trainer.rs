//! Adversarially penalised linear outcome model on the synthetic SCM.
//!
//! The predictor is `y_hat = w_x'x + w_t't + b`. Its treatment representation
//! is the per-coordinate contribution `h_T = t * w_t`. A bilinear critic
//! minimises the InfoNCE loss between `h_T` and the confounder `x`; the same
//! loss reaches `w_t` through a gradient-reversal layer scaled by
//! [`grl_schedule`], so the predictor is pushed to make `h_T` uninformative
//! about `x` while it fits `y` by mean squared error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{self, BilinearCritic, GradReverse};
use crate::optim::{Adam, AdamConfig};
use crate::rng;
use crate::scm::{self, Dataset, LinearScmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub w_x: Array1<f64>,
    pub w_t: Array1<f64>,
    pub b: f64,
}

impl LinearPredictor {
    pub fn zeros(dx: usize, d: usize) -> Self {
        Self {
            w_x: Array1::zeros(dx),
            w_t: Array1::zeros(d),
            b: 0.0,
        }
    }

    /// Weights of the generating equation `Y = 1'T_C + 1'X`.
    pub fn structural(config: &LinearScmConfig) -> Self {
        Self {
            w_x: Array1::ones(config.d),
            w_t: Array1::from_shape_fn(config.d, |j| if j < config.d_c { 1.0 } else { 0.0 }),
            b: 0.0,
        }
    }

    fn check(&self, x: &ArrayView2<'_, f64>, t: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.w_x.len() || t.ncols() != self.w_t.len() || x.nrows() != t.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "predictor is {}+{} wide, data is {}x{} / {}x{}",
                self.w_x.len(),
                self.w_t.len(),
                x.nrows(),
                x.ncols(),
                t.nrows(),
                t.ncols()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x: &ArrayView2<'_, f64>, t: &ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check(x, t)?;
        Ok(x.dot(&self.w_x) + t.dot(&self.w_t) + self.b)
    }

    /// `h_T = t * w_t`, row-wise.
    pub fn representation(&self, t: &ArrayView2<'_, f64>) -> Array2<f64> {
        t * &self.w_t.view().insert_axis(Axis(0))
    }

    fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w_x.iter().chain(self.w_t.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    /// `lambda_max * ((epoch - start) / (end - start))^3`
    #[default]
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticSettings {
    /// Shared embedding dimension of the two projections.
    pub k: usize,
    pub lr: f64,
    pub tau: f64,
}

impl Default for CriticSettings {
    fn default() -> Self {
        Self {
            k: 10,
            lr: 3e-4,
            tau: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_max: f64,
    pub ramp_start: usize,
    pub ramp_end: usize,
    pub ramp_shape: RampShape,
    pub seed: u64,
    pub critic: CriticSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch_size: 64,
            epochs: 4000,
            lambda_max: 0.5,
            ramp_start: 200,
            ramp_end: 1000,
            ramp_shape: RampShape::Cubic,
            seed: 0,
            critic: CriticSettings::default(),
        }
    }
}

impl TrainConfig {
    /// Same settings with the adversarial penalty switched off.
    pub fn baseline(&self) -> Self {
        Self {
            lambda_max: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch_size", "must be at least 2 (InfoNCE needs negatives)"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return Err(invalid("lambda_max", format!("must be >= 0, got {}", self.lambda_max)));
        }
        if self.ramp_start > self.ramp_end || self.ramp_end > self.epochs {
            return Err(invalid(
                "ramp",
                format!(
                    "need ramp_start <= ramp_end <= epochs, got {} / {} / {}",
                    self.ramp_start, self.ramp_end, self.epochs
                ),
            ));
        }
        if self.critic.k == 0
            || self.critic.lr.is_nan()
            || self.critic.lr < 0.0
            || self.critic.tau.is_nan()
            || self.critic.tau <= 0.0
        {
            return Err(invalid("critic", format!("{:?}", self.critic)));
        }
        Ok(())
    }
}

/// Gradient-reversal coefficient for `epoch`: zero before the ramp, a
/// normalised cubic inside it, `lambda_max` from `ramp_end` on.
pub fn grl_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch < config.ramp_start {
        return 0.0;
    }
    if epoch >= config.ramp_end {
        return config.lambda_max;
    }
    let frac = (epoch - config.ramp_start) as f64 / (config.ramp_end - config.ramp_start) as f64;
    match config.ramp_shape {
        RampShape::Cubic => config.lambda_max * frac * frac * frac,
    }
}

/// One record per training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    /// Outcome noise of the generating SCM, when known.
    pub sigma_y: Option<f64>,
    pub lambda_max: f64,
    /// Validation MAE.
    pub mae: f64,
    /// Validation intervention sensitivity.
    pub sensitivity: f64,
    /// Per-epoch InfoNCE lower bound on `I(h_T; X)`, validation batch.
    pub trace_lower: Vec<f64>,
    /// Per-epoch NCE-CLUB estimate on the same batch.
    pub trace_upper: Vec<f64>,
    pub predictor: LinearPredictor,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Gradient of the predictor's combined objective on one batch.
#[derive(Debug, Clone)]
pub struct PredictorGrad {
    pub mse: f64,
    pub infonce_loss: f64,
    pub d_w_x: Array1<f64>,
    pub d_w_t: Array1<f64>,
    pub d_b: f64,
    /// Critic gradient of the InfoNCE loss on the same batch.
    pub critic_d_w_g: Array2<f64>,
    pub critic_d_w_x: Array2<f64>,
    pub infonce_lower: f64,
}

/// The objective the predictor descends: `MSE - lambda * InfoNCE(h_T, x)`.
/// The sign on the second term is what gradient reversal produces.
pub fn predictor_objective(
    model: &LinearPredictor,
    critic: &BilinearCritic,
    x: &ArrayView2<'_, f64>,
    t: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<f64> {
    let pred = model.predict(x, t)?;
    let mse = (&pred - y).mapv(|r| r * r).mean().unwrap_or(0.0);
    let h = model.representation(t);
    let nce = estimators::infonce_loss(critic, &h.view(), x)?;
    Ok(mse - lambda * nce.loss)
}

/// Analytic gradient of [`predictor_objective`], plus the critic's gradient of
/// the InfoNCE loss on the same forward pass.
pub fn predictor_gradient(
    model: &LinearPredictor,
    critic: &BilinearCritic,
    x: &ArrayView2<'_, f64>,
    t: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<PredictorGrad> {
    let n = y.len() as f64;
    let pred = model.predict(x, t)?;
    let resid = &pred - y;
    let mse = resid.mapv(|r| r * r).mean().unwrap_or(0.0);
    let scaled = &resid * (2.0 / n);
    let d_w_x = x.t().dot(&scaled);
    let mut d_w_t = t.t().dot(&scaled);
    let d_b = scaled.sum();

    let h = model.representation(t);
    let nce = estimators::infonce_with_grad(critic, &h.view(), x)?;
    let mut d_h = nce.d_reps;
    GradReverse { lambda }.backward(&mut d_h);
    // h = t * w_t, so dh/dw_t[j] = t[:, j]
    Zip::from(&mut d_h).and(t).for_each(|g, &tv| *g *= tv);
    d_w_t += &d_h.sum_axis(Axis(0));

    Ok(PredictorGrad {
        mse,
        infonce_loss: nce.loss,
        d_w_x,
        d_w_t,
        d_b,
        critic_d_w_g: nce.d_w_g,
        critic_d_w_x: nce.d_w_x,
        infonce_lower: nce.lower_bound,
    })
}

/// Mean absolute prediction error.
pub fn evaluate_mae(model: &LinearPredictor, data: &Dataset) -> Result<f64> {
    let pred = model.predict(&data.x.view(), &data.t.view())?;
    Ok((&pred - &data.y).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// Mean `|y_hat(T) - y_hat(T')|` where `T'` re-draws the non-causal noise.
pub fn intervention_sensitivity(model: &LinearPredictor, data: &Dataset, seed: u64) -> Result<f64> {
    let intervened = scm::intervene_noncausal(data, seed)?;
    let before = model.predict(&data.x.view(), &data.t.view())?;
    let after = model.predict(&intervened.x.view(), &intervened.t.view())?;
    Ok((&before - &after).mapv(f64::abs).mean().unwrap_or(0.0))
}

fn non_finite(epoch: usize, step: usize, what: impl Into<String>) -> Error {
    Error::NonFinite {
        epoch,
        step,
        what: what.into(),
    }
}

/// Mini-batch training on `train`; metrics and the diagnostic trace are
/// computed on `valid`.
///
/// Each step takes one Adam step for the predictor on
/// [`predictor_objective`] and one Adam step for the critic on the InfoNCE
/// loss, both from the same forward pass.
pub fn train(config: &TrainConfig, train: &Dataset, valid: &Dataset) -> Result<RunResult> {
    config.validate()?;
    train.validate()?;
    valid.validate()?;
    let (dx, d) = (train.dx(), train.d());
    if valid.dx() != dx || valid.d() != d || valid.d_c != train.d_c {
        return Err(Error::DimensionMismatch(
            "train and validation sets have different layouts".to_string(),
        ));
    }
    if train.n() < 2 || valid.n() < 2 {
        return Err(invalid("data", "need at least two rows in each split"));
    }

    let seed = config.seed;
    let mut model = LinearPredictor::zeros(dx, d);
    let mut critic = BilinearCritic::random(
        config.critic.k,
        d,
        dx,
        config.critic.tau,
        rng::child_seed(seed, "critic"),
    )?;
    let mut model_opt = Adam::new(AdamConfig::with_lr(config.lr), &[dx, d, 1]);
    let mut critic_opt = Adam::new(
        AdamConfig::with_lr(config.critic.lr),
        &[critic.w_g.len(), critic.w_x.len()],
    );
    let mut shuffle_rng = rng::stream(seed, "trainer/shuffle");

    let n = train.n();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let valid_bs = config.batch_size.min(valid.n());
    let valid_chunks = valid.n() / valid_bs;

    let mut trace_lower = Vec::with_capacity(config.epochs);
    let mut trace_upper = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let lambda = grl_schedule(epoch, config);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(bs) {
            // a trailing single row has no in-batch negatives
            if chunk.len() < 2 {
                continue;
            }
            let x = train.x.select(Axis(0), chunk);
            let t = train.t.select(Axis(0), chunk);
            let y = train.y.select(Axis(0), chunk);
            let g = predictor_gradient(&model, &critic, &x.view(), &t.view(), &y.view(), lambda)?;
            if !(g.mse.is_finite() && g.infonce_loss.is_finite()) {
                return Err(non_finite(
                    epoch,
                    step,
                    format!("mse = {}, infonce = {}", g.mse, g.infonce_loss),
                ));
            }
            let mut b = [model.b];
            model_opt.step(
                &mut [
                    model.w_x.as_slice_mut().expect("contiguous"),
                    model.w_t.as_slice_mut().expect("contiguous"),
                    &mut b,
                ],
                &[
                    g.d_w_x.as_slice().expect("contiguous"),
                    g.d_w_t.as_slice().expect("contiguous"),
                    &[g.d_b],
                ],
            );
            model.b = b[0];
            critic_opt.step(
                &mut [
                    critic.w_g.as_slice_mut().expect("contiguous"),
                    critic.w_x.as_slice_mut().expect("contiguous"),
                ],
                &[
                    g.critic_d_w_g.as_slice().expect("contiguous"),
                    g.critic_d_w_x.as_slice().expect("contiguous"),
                ],
            );
            if !model.is_finite() {
                return Err(non_finite(epoch, step, "predictor weights"));
            }
            step += 1;
        }

        let start = (epoch % valid_chunks) * valid_bs;
        let rows = valid.rows(start..start + valid_bs);
        let h = model.representation(&rows.t.view());
        let est = estimators::estimate(&critic, &h.view(), &rows.x.view())?;
        if !(est.lower_bound_nats.is_finite() && est.upper_bound_nats.is_finite()) {
            return Err(non_finite(epoch, step, "diagnostic estimate"));
        }
        trace_lower.push(est.lower_bound_nats);
        trace_upper.push(est.upper_bound_nats);
    }

    let mae = evaluate_mae(&model, valid)?;
    let sensitivity = intervention_sensitivity(&model, valid, rng::child_seed(seed, "trainer/intervention"))?;
    Ok(RunResult {
        seed,
        sigma_y: None,
        lambda_max: config.lambda_max,
        mae,
        sensitivity,
        trace_lower,
        trace_upper,
        predictor: model,
    })
}

/// Number of training and validation rows drawn per run.
pub const TRAIN_ROWS: usize = 1000;
pub const VALID_ROWS: usize = 1000;

/// Draw a fresh train/validation pair from the linear SCM for `data_seed`.
pub fn sample_split(scm_config: &LinearScmConfig, data_seed: u64) -> Result<(Dataset, Dataset)> {
    let train = scm::sample_linear_scm(scm_config, TRAIN_ROWS, rng::child_seed(data_seed, "split/train"))?;
    let valid = scm::sample_linear_scm(scm_config, VALID_ROWS, rng::child_seed(data_seed, "split/valid"))?;
    Ok((train, valid))
}

/// Sample a split for `data_seed`, train on it and tag the result with `sigma_y`.
pub fn run_on_linear_scm(config: &TrainConfig, scm_config: &LinearScmConfig, data_seed: u64) -> Result<RunResult> {
    let (tr, va) = sample_split(scm_config, data_seed)?;
    let mut result = train(config, &tr, &va)?;
    result.sigma_y = Some(scm_config.sigma_y);
    Ok(result)
}
