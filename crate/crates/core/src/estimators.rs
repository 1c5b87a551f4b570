//! Variational mutual-information estimators built on a bilinear critic.
//!
//! The critic scores a representation `g` against a conditioner `x` as
//! `f(g, x) = (W_g g)'(W_x x) / tau`. Over a batch of `B` aligned pairs the
//! full `B x B` score matrix serves two estimators:
//!
//! * InfoNCE: mean cross-entropy of each row against its diagonal entry;
//!   `ln B - loss` lower-bounds the mutual information and never exceeds `ln B`.
//! * NCE-CLUB: mean score of aligned (joint) pairs minus mean score of
//!   independent (product) pairs, an upper-bound diagnostic when the critic
//!   approximates the log density ratio.
//!
//! [`grad_reverse`] turns the InfoNCE loss, minimised by the critic, into an
//! adversarial penalty for whatever produced the representation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, StreamRng};

/// Bias-free bilinear critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearCritic {
    /// `k x p` projection of the representation.
    pub w_g: Array2<f64>,
    /// `k x q` projection of the conditioner.
    pub w_x: Array2<f64>,
    pub tau: f64,
}

impl BilinearCritic {
    pub fn new(w_g: Array2<f64>, w_x: Array2<f64>, tau: f64) -> Result<Self> {
        if w_g.nrows() != w_x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "projection dims differ: {} vs {}",
                w_g.nrows(),
                w_x.nrows()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        Ok(Self { w_g, w_x, tau })
    }

    /// Gaussian initialisation with entry scale `1 / sqrt(input dim)`.
    pub fn random(k: usize, p: usize, q: usize, tau: f64, seed: u64) -> Result<Self> {
        if k == 0 || p == 0 || q == 0 {
            return Err(invalid("dims", "projection and input dimensions must be positive"));
        }
        let mut rng = rng::stream(seed, "critic/init");
        let mut draw = |rows: usize, cols: usize| {
            let scale = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
        };
        let w_g = draw(k, p);
        let w_x = draw(k, q);
        Self::new(w_g, w_x, tau)
    }

    pub fn rep_dim(&self) -> usize {
        self.w_g.ncols()
    }

    pub fn cond_dim(&self) -> usize {
        self.w_x.ncols()
    }

    fn check_inputs(&self, reps: &ArrayView2<'_, f64>, conds: &ArrayView2<'_, f64>) -> Result<()> {
        if reps.ncols() != self.rep_dim() || conds.ncols() != self.cond_dim() {
            return Err(Error::DimensionMismatch(format!(
                "critic expects {}/{} columns, got {}/{}",
                self.rep_dim(),
                self.cond_dim(),
                reps.ncols(),
                conds.ncols()
            )));
        }
        if reps.nrows() != conds.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} representations vs {} conditioners",
                reps.nrows(),
                conds.nrows()
            )));
        }
        Ok(())
    }

    /// Raw bilinear score `(W_g g)'(W_x x)` of each aligned row pair, without temperature.
    pub fn pair_scores(&self, reps: &ArrayView2<'_, f64>, conds: &ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_inputs(reps, conds)?;
        let a = reps.dot(&self.w_g.t());
        let b = conds.dot(&self.w_x.t());
        Ok((&a * &b).sum_axis(Axis(1)))
    }

    /// Full `B x B` score matrix `S = (reps W_g')(conds W_x')' / tau`.
    pub fn score_matrix(&self, reps: &ArrayView2<'_, f64>, conds: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_inputs(reps, conds)?;
        let a = reps.dot(&self.w_g.t());
        let b = conds.dot(&self.w_x.t());
        Ok(a.dot(&b.t()) / self.tau)
    }
}

/// Paired lower / upper estimates on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub lower_bound_nats: f64,
    pub upper_bound_nats: f64,
    pub batch_size: usize,
}

/// InfoNCE value on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoNce {
    pub loss: f64,
    pub lower_bound: f64,
}

/// InfoNCE value together with its gradients.
#[derive(Debug, Clone)]
pub struct InfoNceGrad {
    pub loss: f64,
    pub lower_bound: f64,
    /// NCE-CLUB on the same batch, using all off-diagonal pairs as product samples.
    pub nce_club: f64,
    pub d_w_g: Array2<f64>,
    pub d_w_x: Array2<f64>,
    pub d_reps: Array2<f64>,
}

fn check_batch(b: usize) -> Result<()> {
    if b < 2 {
        Err(invalid(
            "batch",
            format!("InfoNCE needs at least 2 rows for negatives, got {b}"),
        ))
    } else {
        Ok(())
    }
}

/// Row-wise softmax of `scores` in place; returns the summed cross-entropy
/// against the diagonal.
fn softmax_rows_in_place(scores: &mut Array2<f64>) -> f64 {
    let cols = scores.ncols();
    let data = scores.as_slice_mut().expect("score matrix is contiguous");
    let mut total = 0.0;
    for (i, row) in data.chunks_exact_mut(cols).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let diag = row[i];
        let mut sum = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        total += max + sum.ln() - diag;
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|e| *e *= inv);
    }
    total
}

fn mean_diag_minus_offdiag(raw: &Array2<f64>) -> f64 {
    let b = raw.nrows();
    let diag: f64 = raw.diag().sum();
    let all: f64 = raw.sum();
    diag / b as f64 - (all - diag) / (b * (b - 1)) as f64
}

/// InfoNCE loss of `critic` on aligned rows of `reps` and `conds`.
pub fn infonce_loss(
    critic: &BilinearCritic,
    reps: &ArrayView2<'_, f64>,
    conds: &ArrayView2<'_, f64>,
) -> Result<InfoNce> {
    let b = reps.nrows();
    check_batch(b)?;
    let mut s = critic.score_matrix(reps, conds)?;
    let loss = softmax_rows_in_place(&mut s) / b as f64;
    Ok(InfoNce {
        loss,
        lower_bound: (b as f64).ln() - loss,
    })
}

/// InfoNCE loss and its gradient with respect to both projections and the
/// representation rows.
pub fn infonce_with_grad(
    critic: &BilinearCritic,
    reps: &ArrayView2<'_, f64>,
    conds: &ArrayView2<'_, f64>,
) -> Result<InfoNceGrad> {
    let b = reps.nrows();
    check_batch(b)?;
    critic.check_inputs(reps, conds)?;
    let a = reps.dot(&critic.w_g.t());
    let c = conds.dot(&critic.w_x.t());
    let raw = a.dot(&c.t());
    let nce_club = mean_diag_minus_offdiag(&raw);
    let mut s = raw / critic.tau;
    let loss = softmax_rows_in_place(&mut s) / b as f64;
    // dL/dS = (softmax - I) / B, folded with the 1/tau of the score.
    for i in 0..b {
        s[[i, i]] -= 1.0;
    }
    s /= b as f64 * critic.tau;
    let d_a = s.dot(&c);
    let d_c = s.t().dot(&a);
    Ok(InfoNceGrad {
        loss,
        lower_bound: (b as f64).ln() - loss,
        nce_club,
        d_w_g: d_a.t().dot(reps),
        d_w_x: d_c.t().dot(conds),
        d_reps: d_a.dot(&critic.w_g),
    })
}

/// NCE-CLUB plug-in estimate: mean raw score of the joint pairs minus mean
/// raw score of the marginal pairs.
pub fn nce_club_estimate(
    critic: &BilinearCritic,
    joint_reps: &ArrayView2<'_, f64>,
    joint_conds: &ArrayView2<'_, f64>,
    marginal_reps: &ArrayView2<'_, f64>,
    marginal_conds: &ArrayView2<'_, f64>,
) -> Result<f64> {
    let pos = critic.pair_scores(joint_reps, joint_conds)?;
    let neg = critic.pair_scores(marginal_reps, marginal_conds)?;
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid(
            "batch",
            "NCE-CLUB needs at least one joint and one marginal pair",
        ));
    }
    Ok(pos.mean().unwrap_or(0.0) - neg.mean().unwrap_or(0.0))
}

/// Break the alignment of `conds` by a random row permutation.
pub fn shuffled_rows(conds: &ArrayView2<'_, f64>, rng: &mut impl Rng) -> Array2<f64> {
    let mut order: Vec<usize> = (0..conds.nrows()).collect();
    order.shuffle(rng);
    conds.select(Axis(0), &order)
}

/// NCE-CLUB on one batch, pairing each representation with a shuffled
/// conditioner for the product term.
pub fn nce_club_shuffled(
    critic: &BilinearCritic,
    reps: &ArrayView2<'_, f64>,
    conds: &ArrayView2<'_, f64>,
    rng: &mut impl Rng,
) -> Result<f64> {
    let marginal = shuffled_rows(conds, rng);
    nce_club_estimate(critic, reps, conds, reps, &marginal.view())
}

/// Lower (InfoNCE) and upper (NCE-CLUB, in-batch negatives) estimates on one batch.
pub fn estimate(
    critic: &BilinearCritic,
    reps: &ArrayView2<'_, f64>,
    conds: &ArrayView2<'_, f64>,
) -> Result<MiEstimate> {
    let b = reps.nrows();
    check_batch(b)?;
    critic.check_inputs(reps, conds)?;
    let a = reps.dot(&critic.w_g.t());
    let c = conds.dot(&critic.w_x.t());
    let raw = a.dot(&c.t());
    let upper = mean_diag_minus_offdiag(&raw);
    let mut s = raw / critic.tau;
    let loss = softmax_rows_in_place(&mut s) / b as f64;
    Ok(MiEstimate {
        lower_bound_nats: (b as f64).ln() - loss,
        upper_bound_nats: upper,
        batch_size: b,
    })
}

/// Backward pass of a gradient-reversal layer: the forward pass is the
/// identity, the backward pass returns `-lambda * gradient`.
pub fn grad_reverse(gradient: &[f64], lambda: f64) -> Vec<f64> {
    gradient.iter().map(|g| -lambda * g).collect()
}

/// Gradient-reversal layer with a mutable coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReverse {
    pub lambda: f64,
}

impl GradReverse {
    pub fn forward<T>(&self, activations: T) -> T {
        activations
    }

    pub fn backward(&self, gradient: &mut Array2<f64>) {
        let l = self.lambda;
        gradient.mapv_inplace(|g| -l * g);
    }
}

/// Source of aligned `(representation, conditioner)` batches.
pub trait PairSource {
    fn rep_dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn next_batch(&mut self, rng: &mut StreamRng, batch: usize) -> (Array2<f64>, Array2<f64>);
}

/// Scalar Gaussian pairs with correlation `corr`; `I = -1/2 ln(1 - corr^2)`.
#[derive(Debug, Clone, Copy)]
pub struct CorrelatedGaussian {
    pub corr: f64,
}

impl CorrelatedGaussian {
    pub fn true_mi(&self) -> f64 {
        -0.5 * (-self.corr * self.corr).ln_1p()
    }
}

impl PairSource for CorrelatedGaussian {
    fn rep_dim(&self) -> usize {
        1
    }
    fn cond_dim(&self) -> usize {
        1
    }
    fn next_batch(&mut self, rng: &mut StreamRng, batch: usize) -> (Array2<f64>, Array2<f64>) {
        let resid = (1.0 - self.corr * self.corr).sqrt();
        let mut g = Array2::zeros((batch, 1));
        let mut x = Array2::zeros((batch, 1));
        for i in 0..batch {
            let u: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            g[[i, 0]] = u;
            x[[i, 0]] = self.corr * u + resid * e;
        }
        (g, x)
    }
}

/// Independent standard-normal representation and conditioner vectors.
#[derive(Debug, Clone, Copy)]
pub struct IndependentGaussian {
    pub rep_dim: usize,
    pub cond_dim: usize,
}

impl PairSource for IndependentGaussian {
    fn rep_dim(&self) -> usize {
        self.rep_dim
    }
    fn cond_dim(&self) -> usize {
        self.cond_dim
    }
    fn next_batch(&mut self, rng: &mut StreamRng, batch: usize) -> (Array2<f64>, Array2<f64>) {
        let g = Array2::from_shape_simple_fn((batch, self.rep_dim), || rng.sample(StandardNormal));
        let x = Array2::from_shape_simple_fn((batch, self.cond_dim), || rng.sample(StandardNormal));
        (g, x)
    }
}

/// Conditioner identical to the representation: directions drawn uniformly
/// on the unit sphere of dimension `dim`.
#[derive(Debug, Clone, Copy)]
pub struct TiedSphere {
    pub dim: usize,
}

impl PairSource for TiedSphere {
    fn rep_dim(&self) -> usize {
        self.dim
    }
    fn cond_dim(&self) -> usize {
        self.dim
    }
    fn next_batch(&mut self, rng: &mut StreamRng, batch: usize) -> (Array2<f64>, Array2<f64>) {
        let mut g: Array2<f64> = Array2::from_shape_simple_fn((batch, self.dim), || rng.sample(StandardNormal));
        for mut row in g.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
            row /= norm;
        }
        (g.clone(), g)
    }
}

/// Critic optimisation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Train `critic` to minimise the InfoNCE loss (maximise the lower bound) on
/// batches drawn from `source`. The batch stream is a pure function of `seed`.
pub fn train_critic(
    mut critic: BilinearCritic,
    source: &mut impl PairSource,
    config: CriticTrainConfig,
    seed: u64,
) -> Result<BilinearCritic> {
    if config.steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    check_batch(config.batch_size)?;
    let mut rng = rng::stream(seed, "critic/train");
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &[critic.w_g.len(), critic.w_x.len()]);
    for step in 0..config.steps {
        let (g, x) = source.next_batch(&mut rng, config.batch_size);
        let grad = infonce_with_grad(&critic, &g.view(), &x.view())?;
        if !grad.loss.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                step,
                what: format!("critic InfoNCE loss = {}", grad.loss),
            });
        }
        let (wg, wx) = (&mut critic.w_g, &mut critic.w_x);
        adam.step(
            &mut [
                wg.as_slice_mut().expect("standard layout"),
                wx.as_slice_mut().expect("standard layout"),
            ],
            &[
                grad.d_w_g.as_slice().expect("standard layout"),
                grad.d_w_x.as_slice().expect("standard layout"),
            ],
        );
        if critic.w_g.iter().chain(critic.w_x.iter()).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                epoch: 0,
                step,
                what: "critic weights diverged".to_string(),
            });
        }
    }
    Ok(critic)
}

/// Average of [`estimate`] over `batches` fresh batches.
pub fn mean_estimate(
    critic: &BilinearCritic,
    source: &mut impl PairSource,
    batch_size: usize,
    batches: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let mut rng = rng::stream(seed, "critic/evaluate");
    let (mut lo, mut hi) = (0.0, 0.0);
    for _ in 0..batches {
        let (g, x) = source.next_batch(&mut rng, batch_size);
        let e = estimate(critic, &g.view(), &x.view())?;
        lo += e.lower_bound_nats;
        hi += e.upper_bound_nats;
    }
    let n = batches.max(1) as f64;
    Ok(MiEstimate {
        lower_bound_nats: lo / n,
        upper_bound_nats: hi / n,
        batch_size,
    })
}
