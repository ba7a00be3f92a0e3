//! Parameters of the one-dimensional equivalent workload problem derived from
//! the static plan: Brownian drift and covariance, effective holding and
//! idling costs, and the quadratic drift-cost curvature.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EconParams, NetworkModel};
use crate::static_plan::{ser_matrix, StaticPlan};

#[derive(Debug, Clone, Serialize)]
pub struct EwfParams {
    pub gamma: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub sigma: DMatrix<f64>,
    /// Workload drift `e'γ`.
    pub a: f64,
    /// Workload variance `e'Σe`.
    pub sigma2: f64,
    pub eta: f64,
    /// Limit-scale holding cost `√n (min_i h_i − h0)`.
    pub h: f64,
    /// Limit-scale idling cost `c_{k*}/λ*_{k*}` with `c = cⁿ/√n`.
    pub r: f64,
    pub alpha: Vec<f64>,
    pub alpha_hat: f64,
    pub i_star: usize,
    pub k_star: usize,
    /// Per-system holding cost difference `min_i h_i − h0` before scaling.
    pub h_unscaled: f64,
    /// Limit-scale idleness costs `cⁿ/√n`.
    pub c_scaled: Vec<f64>,
}

impl EwfParams {
    pub fn derive(model: &NetworkModel, econ: &EconParams, plan: &StaticPlan) -> Result<Self> {
        let (gamma, sigma, a, sigma2) = brownian_params(model, plan);
        let costs = ewf_costs(model, econ, plan)?;
        Ok(Self {
            gamma,
            sigma,
            a,
            sigma2,
            eta: plan.eta,
            h: costs.h,
            r: costs.r,
            alpha: costs.alpha,
            alpha_hat: costs.alpha_hat,
            i_star: costs.i_star,
            k_star: costs.k_star,
            h_unscaled: costs.h_unscaled,
            c_scaled: costs.c_scaled,
        })
    }

    /// Long-run limit of the value-function derivative.
    pub fn limit(&self) -> f64 {
        self.h / self.eta
    }
}

/// Drift vector `γ = η̂ q`, covariance `Σ`, and the workload drift/variance.
pub fn brownian_params(
    model: &NetworkModel,
    plan: &StaticPlan,
) -> (Vec<f64>, DMatrix<f64>, f64, f64) {
    let i_count = model.num_regions;
    let gamma: Vec<f64> = model.q.iter().map(|q| plan.eta_hat * q).collect();
    let mut served = vec![0.0; i_count];
    for (j, act) in model.activities.iter().enumerate() {
        served[act.buffer] += plan.mu_star[j] * plan.x_star[j];
    }
    let q = &model.q;
    let eta = plan.eta;
    let sigma = DMatrix::from_fn(i_count, i_count, |i, k| {
        if i == k {
            q[i] * eta + served[i]
        } else {
            q[i] * q[k] * eta
        }
    });
    let a = gamma.iter().sum();
    let sigma2 = sigma.sum();
    (gamma, sigma, a, sigma2)
}

#[derive(Debug, Clone)]
pub struct EwfCosts {
    pub h: f64,
    pub r: f64,
    pub i_star: usize,
    pub k_star: usize,
    pub alpha: Vec<f64>,
    pub alpha_hat: f64,
    pub h_unscaled: f64,
    pub c_scaled: Vec<f64>,
}

fn argmin_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Effective holding/idling costs and drift-cost curvature. Costs in `econ`
/// are per-system; the holding cost is scaled up by `√n` and idleness costs
/// down by `√n` to reach the limit problem.
pub fn ewf_costs(model: &NetworkModel, econ: &EconParams, plan: &StaticPlan) -> Result<EwfCosts> {
    if let Some(i) = plan.lambda_star.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Assumption(format!(
            "lambda*_{} = 0: effective idling cost undefined",
            i + 1
        )));
    }
    let sqrt_n = model.sqrt_n();
    let i_star = argmin_lowest(econ.h.iter().copied());
    let h_unscaled = econ.h[i_star] - econ.h0;
    let h = sqrt_n * h_unscaled;
    let c_scaled: Vec<f64> = econ.c.iter().map(|c| c / sqrt_n).collect();
    let k_star = argmin_lowest(
        c_scaled
            .iter()
            .zip(&plan.lambda_star)
            .map(|(c, l)| c / l),
    );
    let r = c_scaled[k_star] / plan.lambda_star[k_star];
    // For linear demand Λ⁻¹ has slope −1/b and no curvature, so α_i = 1/b_i.
    let alpha: Vec<f64> = econ.demand_b.iter().map(|b| 1.0 / b).collect();
    let alpha_hat = alpha.iter().map(|a| 1.0 / a).sum();
    Ok(EwfCosts {
        h,
        r,
        i_star,
        k_star,
        alpha,
        alpha_hat,
        h_unscaled,
        c_scaled,
    })
}

/// Minimal quadratic drift cost `x²/α̂` and its minimizing split
/// `ζ_i = x/(α_i α̂)` across regions.
pub fn ewf_cost_function(x: f64, alpha: &[f64], alpha_hat: f64) -> (f64, Vec<f64>) {
    let zeta = alpha.iter().map(|a| x / (a * alpha_hat)).collect();
    (x * x / alpha_hat, zeta)
}
