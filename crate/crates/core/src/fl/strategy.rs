//! Prior-selection strategies: how each local step picks the mean `μ` of
//! the personalized prior from the current local model.
//!
//! All strategies are meta-steps `μ = w − η ∇Φ(w)` for different `Φ`:
//!
//! | name         | displacement subtracted from `w`                          |
//! |--------------|-----------------------------------------------------------|
//! | `vanilla`    | none                                                      |
//! | `lg`         | `η_α ∇f(w)`                                               |
//! | `meg`        | `η (w_mem − θ_prev)`                                      |
//! | `mh`         | both of the above                                         |
//! | `mh_variant` | `η η̃_α ∇f(w − η̃ ∇f(w))` and `η (w_mem − θ_prev)`          |
//!
//! `w_mem` is the client's own local model at the end of its previous
//! round; it stands in for the envelope gradient at `w`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::params::ParamVector;

/// Everything a strategy may read when producing `μ`.
#[derive(Clone, Copy, Debug)]
pub struct MuInputs<'a> {
    pub w_local: &'a ParamVector,
    /// `∇f(w_local)` on a mini-batch; present when the strategy asked for it.
    pub grad_f_at_w: Option<&'a ParamVector>,
    /// `∇f` at [`PriorStrategy::lookahead_point`], on the same mini-batch.
    pub lookahead_grad: Option<&'a ParamVector>,
    pub memorized_local: &'a ParamVector,
    pub theta_prev: &'a ParamVector,
}

pub trait PriorStrategy: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Whether `compute_mu` reads `grad_f_at_w`.
    fn needs_loss_gradient(&self) -> bool {
        false
    }

    /// A second point at which the caller must evaluate `∇f` (same batch).
    fn lookahead_point(&self, _w: &ParamVector, _grad: &ParamVector) -> Result<Option<ParamVector>> {
        Ok(None)
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector>;
}

/// Step sizes shared by the strategy family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub eta_alpha: f64,
    pub eta: f64,
    /// Defaults to `eta_alpha / eta` when unset.
    pub eta_tilde_alpha: Option<f64>,
    /// Defaults to `eta_alpha` when unset.
    pub eta_tilde: Option<f64>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            eta_alpha: 0.01,
            eta: 0.05,
            eta_tilde_alpha: None,
            eta_tilde: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Vanilla,
    Lg,
    Meg,
    Mh,
    MhVariant,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Vanilla,
        StrategyKind::Lg,
        StrategyKind::Meg,
        StrategyKind::Mh,
        StrategyKind::MhVariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Lg => "lg",
            StrategyKind::Meg => "meg",
            StrategyKind::Mh => "mh",
            StrategyKind::MhVariant => "mh_variant",
        }
    }

    pub fn build(self, params: &StrategyParams) -> Box<dyn PriorStrategy> {
        match self {
            StrategyKind::Vanilla => Box::new(Vanilla),
            StrategyKind::Lg => Box::new(LossGradient { eta_alpha: params.eta_alpha }),
            StrategyKind::Meg => Box::new(MemorizedEnvelope { eta: params.eta }),
            StrategyKind::Mh => Box::new(MemorizedHybrid {
                eta_alpha: params.eta_alpha,
                eta: params.eta,
            }),
            StrategyKind::MhVariant => Box::new(MemorizedHybridVariant {
                outer_coefficient: params
                    .eta_tilde_alpha
                    .map_or(params.eta_alpha, |eta_tilde_alpha| params.eta * eta_tilde_alpha),
                lookahead_step: params.eta_tilde.unwrap_or(params.eta_alpha),
                eta: params.eta,
            }),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "strategy",
                name: s.to_string(),
                known: StrategyKind::ALL.map(StrategyKind::name).join(", "),
            })
    }
}

/// Looks a strategy up by name.
pub fn strategy_by_name(name: &str, params: &StrategyParams) -> Result<Box<dyn PriorStrategy>> {
    Ok(name.parse::<StrategyKind>()?.build(params))
}

fn require<'a>(v: Option<&'a ParamVector>, what: &str) -> Result<&'a ParamVector> {
    v.ok_or_else(|| Error::Degenerate(format!("strategy needs {what} but the caller supplied none")))
}

fn check_inputs(inputs: &MuInputs<'_>) -> Result<()> {
    let n = inputs.w_local.len();
    check_dims(n, inputs.memorized_local.len())?;
    check_dims(n, inputs.theta_prev.len())?;
    for v in [inputs.grad_f_at_w, inputs.lookahead_grad].into_iter().flatten() {
        check_dims(n, v.len())?;
    }
    Ok(())
}

/// `w − step·g − η (m − θ)` coordinate-wise, in that order of operations.
fn displaced(w: &ParamVector, grad_term: Option<(f64, &ParamVector)>, memo_term: Option<(f64, &MuInputs<'_>)>) -> ParamVector {
    let mut out = w.as_slice().to_vec();
    if let Some((step, g)) = grad_term {
        for (o, gj) in out.iter_mut().zip(g.as_slice()) {
            *o -= step * gj;
        }
    }
    if let Some((eta, inputs)) = memo_term {
        let m = inputs.memorized_local.as_slice();
        let t = inputs.theta_prev.as_slice();
        for ((o, mj), tj) in out.iter_mut().zip(m).zip(t) {
            *o -= eta * (mj - tj);
        }
    }
    ParamVector::new(out)
}

/// `μ = w`: no personalization of the prior.
#[derive(Clone, Copy, Debug)]
pub struct Vanilla;

impl PriorStrategy for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector> {
        check_inputs(inputs)?;
        Ok(inputs.w_local.clone())
    }
}

/// `lg`: one loss-gradient meta-step.
#[derive(Clone, Copy, Debug)]
pub struct LossGradient {
    pub eta_alpha: f64,
}

impl PriorStrategy for LossGradient {
    fn name(&self) -> &'static str {
        "lg"
    }

    fn needs_loss_gradient(&self) -> bool {
        true
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector> {
        check_inputs(inputs)?;
        let g = require(inputs.grad_f_at_w, "the loss gradient")?;
        Ok(displaced(inputs.w_local, Some((self.eta_alpha, g)), None))
    }
}

/// `meg`: memorized envelope-gradient meta-step.
#[derive(Clone, Copy, Debug)]
pub struct MemorizedEnvelope {
    pub eta: f64,
}

impl PriorStrategy for MemorizedEnvelope {
    fn name(&self) -> &'static str {
        "meg"
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector> {
        check_inputs(inputs)?;
        Ok(displaced(inputs.w_local, None, Some((self.eta, inputs))))
    }
}

/// `mh`: `lg` and `meg` displacements together.
#[derive(Clone, Copy, Debug)]
pub struct MemorizedHybrid {
    pub eta_alpha: f64,
    pub eta: f64,
}

impl PriorStrategy for MemorizedHybrid {
    fn name(&self) -> &'static str {
        "mh"
    }

    fn needs_loss_gradient(&self) -> bool {
        true
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector> {
        check_inputs(inputs)?;
        let g = require(inputs.grad_f_at_w, "the loss gradient")?;
        Ok(displaced(inputs.w_local, Some((self.eta_alpha, g)), Some((self.eta, inputs))))
    }
}

/// `mh` with the loss gradient taken after a look-ahead step.
#[derive(Clone, Copy, Debug)]
pub struct MemorizedHybridVariant {
    /// `η · η̃_α`
    pub outer_coefficient: f64,
    /// `η̃`
    pub lookahead_step: f64,
    pub eta: f64,
}

impl PriorStrategy for MemorizedHybridVariant {
    fn name(&self) -> &'static str {
        "mh_variant"
    }

    fn needs_loss_gradient(&self) -> bool {
        true
    }

    fn lookahead_point(&self, w: &ParamVector, grad: &ParamVector) -> Result<Option<ParamVector>> {
        w.sub_scaled(self.lookahead_step, grad).map(Some)
    }

    fn compute_mu(&self, inputs: &MuInputs<'_>) -> Result<ParamVector> {
        check_inputs(inputs)?;
        let g = require(inputs.lookahead_grad, "the look-ahead gradient")?;
        Ok(displaced(inputs.w_local, Some((self.outer_coefficient, g)), Some((self.eta, inputs))))
    }
}

/// Evaluates one strategy. `lookahead_grad` is only read by `mh_variant`.
pub fn compute_mu(
    strategy: &dyn PriorStrategy,
    w_local: &ParamVector,
    grad_f_at_w: &ParamVector,
    lookahead_grad: Option<&ParamVector>,
    memorized_local: &ParamVector,
    theta_prev: &ParamVector,
) -> Result<ParamVector> {
    strategy.compute_mu(&MuInputs {
        w_local,
        grad_f_at_w: Some(grad_f_at_w),
        lookahead_grad,
        memorized_local,
        theta_prev,
    })
}
