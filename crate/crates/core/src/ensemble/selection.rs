use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;

/// Floor on the normalizer `max |Q̂|`.
pub const NORM_EPS: f64 = 1e-8;

/// Where the temperature enters the selection softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// `logits = β · Q̂ / max|Q̂|`: β = 0 is uniform, larger β is sharper.
    NormalizedLogits,
    /// `logits = Q̂ / α` with `α = β / max Q̂`; larger β is flatter and β = 0
    /// is undefined.
    AsPrinted,
}

impl TemperatureMode {
    pub fn name(self) -> &'static str {
        match self {
            TemperatureMode::NormalizedLogits => "normalized_logits",
            TemperatureMode::AsPrinted => "as_printed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normalized_logits" => Some(TemperatureMode::NormalizedLogits),
            "as_printed" => Some(TemperatureMode::AsPrinted),
            _ => None,
        }
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("selection over zero agents"));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(NORM_EPS)
}

/// Selection distribution over proposals valued `q_hat` by the oldest agent.
pub fn selection_probs(q_hat: &[f64], beta: f64) -> Result<Vec<f64>> {
    selection_probs_with(q_hat, beta, TemperatureMode::NormalizedLogits)
}

pub fn selection_probs_with(q_hat: &[f64], beta: f64, mode: TemperatureMode) -> Result<Vec<f64>> {
    check_finite(q_hat, "selection values")?;
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    let logits: Vec<f64> = match mode {
        TemperatureMode::NormalizedLogits => {
            let scale = beta / max_abs(q_hat);
            q_hat.iter().map(|q| scale * q).collect()
        }
        TemperatureMode::AsPrinted => {
            if beta == 0.0 {
                return Err(Error::invalid("as_printed temperature needs beta != 0"));
            }
            let max = q_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q_hat.iter().map(|q| q * max / beta).collect()
        }
    };
    softmax(&logits)
}

/// Cost-side distribution: lower CVaR estimates get more mass.
pub fn safe_selection_probs(c_hat: &[f64], beta: f64) -> Result<Vec<f64>> {
    safe_selection_probs_with(c_hat, beta, TemperatureMode::NormalizedLogits)
}

pub fn safe_selection_probs_with(
    c_hat: &[f64],
    beta: f64,
    mode: TemperatureMode,
) -> Result<Vec<f64>> {
    check_finite(c_hat, "selection costs")?;
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    let logits: Vec<f64> = match mode {
        TemperatureMode::NormalizedLogits => {
            let scale = beta / max_abs(c_hat);
            c_hat.iter().map(|c| -scale * c).collect()
        }
        TemperatureMode::AsPrinted => {
            if beta == 0.0 {
                return Err(Error::invalid("as_printed temperature needs beta != 0"));
            }
            let norm = max_abs(c_hat);
            c_hat.iter().map(|c| -c * norm / beta).collect()
        }
    };
    softmax(&logits)
}

/// `κ · p_reward + (1 − κ) · p_cost`.
pub fn mix_safe(p_reward: &[f64], p_cost: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if p_reward.len() != p_cost.len() {
        return Err(Error::shape(format!(
            "mixing distributions of length {} and {}",
            p_reward.len(),
            p_cost.len()
        )));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    Ok(p_reward
        .iter()
        .zip(p_cost)
        .map(|(r, c)| kappa * r + (1.0 - kappa) * c)
        .collect())
}
