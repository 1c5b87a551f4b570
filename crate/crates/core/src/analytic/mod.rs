//! Closed-form information quantities for the scalar Gaussian SCM
//!
//! ```text
//! Z   = e_Z
//! T_C = alpha * Z + e_C
//! T_N = beta  * Z + e_N
//! Y   = rho * T_C + delta * Z + e_Y
//! ```
//!
//! with independent zero-mean Gaussian noises of variances `var_z`, `var_c`,
//! `var_n`, `var_y`, together with the disentanglement objective
//! `J(g) = I(g;Y|Z) - lambda * I(g;Z)` evaluated on a small menu of
//! representations, its bounded reparameterisation `L_gamma`, and exact
//! plug-in oracles over finite joint tables ([`discrete`]).
//!
//! Every quantity is in nats.

pub mod discrete;
pub mod empirical;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use discrete::{discrete_mi, DiscreteJoint, MiQuery};

/// Coefficients and noise variances of the scalar Gaussian SCM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianScmParams {
    /// Z -> T_C
    pub alpha: f64,
    /// Z -> T_nC
    pub beta: f64,
    /// T_C -> Y
    pub rho: f64,
    /// Z -> Y
    pub delta: f64,
    pub var_z: f64,
    pub var_c: f64,
    pub var_n: f64,
    pub var_y: f64,
}

impl GaussianScmParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        beta: f64,
        rho: f64,
        delta: f64,
        var_z: f64,
        var_c: f64,
        var_n: f64,
        var_y: f64,
    ) -> Result<Self> {
        let params = Self {
            alpha,
            beta,
            rho,
            delta,
            var_z,
            var_c,
            var_n,
            var_y,
        };
        params.validate()?;
        Ok(params)
    }

    /// All coefficients and variances equal to one.
    pub fn all_ones() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            rho: 1.0,
            delta: 1.0,
            var_z: 1.0,
            var_c: 1.0,
            var_n: 1.0,
            var_y: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho", self.rho),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("var_z", self.var_z),
            ("var_c", self.var_c),
            ("var_n", self.var_n),
            ("var_y", self.var_y),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which representation of the treatment is being scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepresentationSpec {
    /// `g(T) = T_C`
    Causal,
    /// `g(T) = (T_C, T_nC)`
    Naive,
    /// `g(T) = T_C + e_G`, `e_G ~ N(0, var_g)`
    CompressedCausal { var_g: f64 },
}

impl RepresentationSpec {
    pub fn label(&self) -> String {
        match self {
            RepresentationSpec::Causal => "causal".to_string(),
            RepresentationSpec::Naive => "naive".to_string(),
            RepresentationSpec::CompressedCausal { var_g } => format!("compressed({var_g})"),
        }
    }
}

fn check_var_g(var_g: f64) -> Result<()> {
    if var_g >= 0.0 && !var_g.is_nan() {
        Ok(())
    } else {
        Err(invalid("var_g", format!("must be >= 0, got {var_g}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")))
    }
}

/// `I(T_C; Z) = 1/2 ln(1 + alpha^2 var_z / var_c)`.
pub fn mi_tc_z(p: &GaussianScmParams) -> f64 {
    0.5 * (p.alpha * p.alpha * p.var_z / p.var_c).ln_1p()
}

/// `I(T_nC; Z | T_C)`, the leakage the non-causal component adds on top of
/// the causal one.
pub fn mi_tnc_z_given_tc(p: &GaussianScmParams) -> f64 {
    let a2vz = p.alpha * p.alpha * p.var_z;
    let ratio = p.beta * p.beta * p.var_z * p.var_c / (p.var_n * (a2vz + p.var_c));
    0.5 * ratio.ln_1p()
}

/// `U(var_g) = I(T_C + e_G; Y | Z)`.
pub fn utility(p: &GaussianScmParams, var_g: f64) -> Result<f64> {
    check_var_g(var_g)?;
    if var_g.is_infinite() {
        return Ok(0.0);
    }
    let r2 = p.rho * p.rho;
    let var_y_given_z = r2 * p.var_c + p.var_y;
    // Var(Y | G, Z) = Var(Y | Z) - explained part; written as a ratio to keep
    // the argument of ln_1p small when var_g is large.
    let explained = r2 * p.var_c * p.var_c / (p.var_c + var_g);
    Ok(0.5 * (explained / (var_y_given_z - explained)).ln_1p())
}

/// `P(var_g) = I(T_C + e_G; Z)`.
pub fn penalty(p: &GaussianScmParams, var_g: f64) -> Result<f64> {
    check_var_g(var_g)?;
    if var_g.is_infinite() {
        return Ok(0.0);
    }
    Ok(0.5 * (p.alpha * p.alpha * p.var_z / (p.var_c + var_g)).ln_1p())
}

/// Utility term `I(g(T); Y | Z)` of a representation.
pub fn representation_utility(p: &GaussianScmParams, rep: RepresentationSpec) -> Result<f64> {
    match rep {
        // Y is independent of T_nC given (T_C, Z), so the naive representation
        // carries exactly the causal utility.
        RepresentationSpec::Causal | RepresentationSpec::Naive => utility(p, 0.0),
        RepresentationSpec::CompressedCausal { var_g } => utility(p, var_g),
    }
}

/// Penalty term `I(g(T); Z)` of a representation.
pub fn representation_penalty(p: &GaussianScmParams, rep: RepresentationSpec) -> Result<f64> {
    match rep {
        RepresentationSpec::Causal => penalty(p, 0.0),
        // chain rule: I(T_C, T_nC; Z) = I(T_C; Z) + I(T_nC; Z | T_C)
        RepresentationSpec::Naive => Ok(mi_tc_z(p) + mi_tnc_z_given_tc(p)),
        RepresentationSpec::CompressedCausal { var_g } => penalty(p, var_g),
    }
}

/// The disentanglement objective `J = utility - lambda * penalty`.
pub fn j_value(p: &GaussianScmParams, rep: RepresentationSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(representation_utility(p, rep)? - lambda * representation_penalty(p, rep)?)
}

/// Bounded reparameterised loss `L_gamma = (1 - gamma) * penalty - gamma * utility`,
/// minimised where `J` is maximised.
pub fn l_gamma(p: &GaussianScmParams, rep: RepresentationSpec, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((1.0 - gamma) * representation_penalty(p, rep)? - gamma * representation_utility(p, rep)?)
}

/// Critical penalty weight: the ratio of marginal utility loss to marginal
/// penalty reduction at zero compression,
/// `(rho^2 / (2 var_y)) / (alpha^2 var_z / (2 var_c (var_c + alpha^2 var_z)))`.
pub fn lambda_crit(p: &GaussianScmParams) -> Result<f64> {
    if p.alpha == 0.0 {
        return Err(Error::DegenerateParams(
            "alpha = 0: the penalty does not depend on compression, lambda_crit is undefined".to_string(),
        ));
    }
    let a2vz = p.alpha * p.alpha * p.var_z;
    let du = p.rho * p.rho / (2.0 * p.var_y);
    let dp = a2vz / (2.0 * p.var_c * (p.var_c + a2vz));
    Ok(du / dp)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")))
    }
}

/// `gamma = 1 / (1 + lambda)`
pub fn gamma_of_lambda(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(1.0 / (1.0 + lambda))
}

/// Inverse of [`gamma_of_lambda`]. `gamma = 0` would be an infinite lambda and
/// is rejected.
pub fn lambda_of_gamma(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((1.0 - gamma) / gamma)
}

/// Indices of `reps` sorted from best to worst under `J` at `lambda`.
pub fn rank_by_j(p: &GaussianScmParams, reps: &[RepresentationSpec], lambda: f64) -> Result<Vec<usize>> {
    let scores = reps
        .iter()
        .map(|r| j_value(p, *r, lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut idx: Vec<usize> = (0..reps.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(idx)
}

/// Indices of `reps` sorted from best to worst under `L_gamma` (ascending loss).
pub fn rank_by_l_gamma(p: &GaussianScmParams, reps: &[RepresentationSpec], gamma: f64) -> Result<Vec<usize>> {
    let scores = reps.iter().map(|r| l_gamma(p, *r, gamma)).collect::<Result<Vec<_>>>()?;
    let mut idx: Vec<usize> = (0..reps.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Ok(idx)
}
