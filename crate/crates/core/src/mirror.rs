//! Bregman geometry: divergences, Bregman proximal points and Bregman-Moreau
//! envelopes over a registry of separable mirror maps.
//!
//! A mirror map `g` is strictly convex and differentiable. Its Fenchel
//! conjugate `g*` is what the personalized objective regularizes with:
//!
//! ```text
//! prox(μ) = argmin_θ f(θ) + λ D_{g*}(θ, μ)
//! env(μ)  =    min_θ f(θ) + λ D_{g*}(θ, μ)
//! ∇env(μ) = λ ∇²g*(μ) [μ − prox(μ)]
//! ```
//!
//! Every registered map is a sum of identical one-dimensional convex
//! functions, so the trait is expressed per coordinate and the vector
//! operations are provided on top.

use crate::error::{check_dims, Error, Result};
use crate::model::{sample_batch, full_batch, LossOracle};
use crate::params::ParamVector;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Reals,
    PositiveOrthant,
    NegativeOrthant,
    UnitInterval,
}

impl Domain {
    pub fn contains(self, v: f64) -> bool {
        match self {
            Domain::Reals => v.is_finite(),
            Domain::PositiveOrthant => v.is_finite() && v > 0.0,
            Domain::NegativeOrthant => v.is_finite() && v < 0.0,
            Domain::UnitInterval => v > 0.0 && v < 1.0,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Domain::Reals => "all reals",
            Domain::PositiveOrthant => "positive orthant",
            Domain::NegativeOrthant => "negative orthant",
            Domain::UnitInterval => "open unit interval",
        }
    }
}

/// A separable strictly convex function `g(x) = Σ_j φ(x_j)` together with
/// its conjugate. Implementors provide the scalar pieces.
pub trait MirrorMap: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// Domain of `g`.
    fn domain(&self) -> Domain;
    /// Domain of `g*` (the image of `∇g`).
    fn conj_domain(&self) -> Domain;

    fn phi(&self, x: f64) -> f64;
    fn phi_prime(&self, x: f64) -> f64;
    fn phi_conj(&self, y: f64) -> f64;
    fn phi_conj_prime(&self, y: f64) -> f64;
    fn phi_conj_second(&self, y: f64) -> f64;

    fn eval_g(&self, x: &ParamVector) -> f64 {
        x.as_slice().iter().map(|&v| self.phi(v)).sum()
    }

    fn grad_g(&self, x: &ParamVector) -> ParamVector {
        x.as_slice().iter().map(|&v| self.phi_prime(v)).collect::<Vec<_>>().into()
    }

    fn eval_g_conj(&self, y: &ParamVector) -> f64 {
        y.as_slice().iter().map(|&v| self.phi_conj(v)).sum()
    }

    fn grad_g_conj(&self, y: &ParamVector) -> ParamVector {
        y.as_slice().iter().map(|&v| self.phi_conj_prime(v)).collect::<Vec<_>>().into()
    }

    /// `∇²g*(point) · direction` (diagonal for separable maps).
    fn hess_g_conj_apply(&self, point: &ParamVector, direction: &ParamVector) -> Result<ParamVector> {
        check_dims(point.len(), direction.len())?;
        Ok(point
            .as_slice()
            .iter()
            .zip(direction.as_slice())
            .map(|(&p, &d)| self.phi_conj_second(p) * d)
            .collect::<Vec<_>>()
            .into())
    }
}

/// `g(x) = ½‖x‖²`; the spherical Gaussian prior. Self-conjugate.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredNorm;

impl MirrorMap for SquaredNorm {
    fn name(&self) -> &'static str {
        "squared_norm"
    }
    fn domain(&self) -> Domain {
        Domain::Reals
    }
    fn conj_domain(&self) -> Domain {
        Domain::Reals
    }
    fn phi(&self, x: f64) -> f64 {
        0.5 * x * x
    }
    fn phi_prime(&self, x: f64) -> f64 {
        x
    }
    fn phi_conj(&self, y: f64) -> f64 {
        0.5 * y * y
    }
    fn phi_conj_prime(&self, y: f64) -> f64 {
        y
    }
    fn phi_conj_second(&self, _y: f64) -> f64 {
        1.0
    }

    // Exact identity, so the Gaussian path performs no extra rounding.
    fn hess_g_conj_apply(&self, point: &ParamVector, direction: &ParamVector) -> Result<ParamVector> {
        check_dims(point.len(), direction.len())?;
        Ok(direction.clone())
    }
}

/// `g(x) = Σ x ln x` on the positive orthant (Poisson row); `D_g` is the
/// generalized KL divergence.
#[derive(Clone, Copy, Debug, Default)]
pub struct NegativeEntropy;

impl MirrorMap for NegativeEntropy {
    fn name(&self) -> &'static str {
        "negative_entropy"
    }
    fn domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn conj_domain(&self) -> Domain {
        Domain::Reals
    }
    fn phi(&self, x: f64) -> f64 {
        x * x.ln()
    }
    fn phi_prime(&self, x: f64) -> f64 {
        x.ln() + 1.0
    }
    fn phi_conj(&self, y: f64) -> f64 {
        (y - 1.0).exp()
    }
    fn phi_conj_prime(&self, y: f64) -> f64 {
        (y - 1.0).exp()
    }
    fn phi_conj_second(&self, y: f64) -> f64 {
        (y - 1.0).exp()
    }
}

/// `g(x) = Σ x ln x + (1 − x) ln(1 − x)` on `(0, 1)` (Bernoulli row).
#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

impl MirrorMap for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }
    fn domain(&self) -> Domain {
        Domain::UnitInterval
    }
    fn conj_domain(&self) -> Domain {
        Domain::Reals
    }
    fn phi(&self, x: f64) -> f64 {
        x * x.ln() + (1.0 - x) * (1.0 - x).ln()
    }
    fn phi_prime(&self, x: f64) -> f64 {
        (x / (1.0 - x)).ln()
    }
    fn phi_conj(&self, y: f64) -> f64 {
        // softplus
        y.max(0.0) + (-y.abs()).exp().ln_1p()
    }
    fn phi_conj_prime(&self, y: f64) -> f64 {
        sigmoid(y)
    }
    fn phi_conj_second(&self, y: f64) -> f64 {
        let s = sigmoid(y);
        s * (1.0 - s)
    }
}

/// `g(x) = −Σ ln x` on the positive orthant (exponential row). The conjugate
/// lives on the negative orthant.
#[derive(Clone, Copy, Debug, Default)]
pub struct NegativeLog;

impl MirrorMap for NegativeLog {
    fn name(&self) -> &'static str {
        "negative_log"
    }
    fn domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn conj_domain(&self) -> Domain {
        Domain::NegativeOrthant
    }
    fn phi(&self, x: f64) -> f64 {
        -x.ln()
    }
    fn phi_prime(&self, x: f64) -> f64 {
        -1.0 / x
    }
    fn phi_conj(&self, y: f64) -> f64 {
        -1.0 - (-y).ln()
    }
    fn phi_conj_prime(&self, y: f64) -> f64 {
        -1.0 / y
    }
    fn phi_conj_second(&self, y: f64) -> f64 {
        1.0 / (y * y)
    }
}

pub const MIRROR_NAMES: &[&str] = &["squared_norm", "negative_entropy", "logistic", "negative_log"];

pub fn mirror_map_by_name(name: &str) -> Result<Box<dyn MirrorMap>> {
    match name {
        "squared_norm" => Ok(Box::new(SquaredNorm)),
        "negative_entropy" => Ok(Box::new(NegativeEntropy)),
        "logistic" => Ok(Box::new(Logistic)),
        "negative_log" => Ok(Box::new(NegativeLog)),
        other => Err(Error::UnknownName {
            kind: "mirror map",
            name: other.to_string(),
            known: MIRROR_NAMES.join(", "),
        }),
    }
}

fn check_domain(map: &dyn MirrorMap, domain: Domain, x: &ParamVector) -> Result<()> {
    match x.as_slice().iter().position(|&v| !domain.contains(v)) {
        None => Ok(()),
        Some(index) => Err(Error::Domain {
            map: map.name(),
            domain: domain.describe(),
            index,
            value: x[index],
        }),
    }
}

/// Coordinate-wise Bregman residual `φ(x) − φ(y) − φ'(y)(x − y)`, clamped at
/// zero against rounding.
fn separable_divergence(
    x: &[f64],
    y: &[f64],
    phi: impl Fn(f64) -> f64,
    phi_prime: impl Fn(f64) -> f64,
) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            if a == b {
                0.0
            } else {
                (phi(a) - phi(b) - phi_prime(b) * (a - b)).max(0.0)
            }
        })
        .sum()
}

/// `D_g(x, y) = g(x) − g(y) − ⟨∇g(y), x − y⟩`.
pub fn bregman_divergence(map: &dyn MirrorMap, x: &ParamVector, y: &ParamVector) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    check_domain(map, map.domain(), x)?;
    check_domain(map, map.domain(), y)?;
    Ok(separable_divergence(
        x.as_slice(),
        y.as_slice(),
        |v| map.phi(v),
        |v| map.phi_prime(v),
    ))
}

/// `D_{g*}(θ, μ)`, the divergence of the conjugate.
pub fn conjugate_divergence(map: &dyn MirrorMap, theta: &ParamVector, mu: &ParamVector) -> Result<f64> {
    check_dims(theta.len(), mu.len())?;
    check_domain(map, map.conj_domain(), theta)?;
    check_domain(map, map.conj_domain(), mu)?;
    Ok(separable_divergence(
        theta.as_slice(),
        mu.as_slice(),
        |v| map.phi_conj(v),
        |v| map.phi_conj_prime(v),
    ))
}

/// Settings of the iterative proximal solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxConfig {
    pub inner_steps: usize,
    pub inner_step_size: f64,
    pub batch_size: usize,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            inner_steps: 5,
            inner_step_size: 0.01,
            batch_size: 20,
        }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::config("K", "inner_steps must be at least 1"));
        }
        if !(self.inner_step_size > 0.0 && self.inner_step_size.is_finite()) {
            return Err(Error::config("alpha", "inner_step_size must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch", "batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Approximate Bregman proximal point
/// `argmin_θ f(θ) + λ D_{g*}(θ, μ)`.
///
/// Runs `inner_steps` plain gradient steps from `μ`. One mini-batch is drawn
/// from `rng` and shared by all inner steps, so the solver descends a single
/// fixed stochastic objective.
pub fn bregman_prox(
    map: &dyn MirrorMap,
    lambda: f64,
    loss: &dyn LossOracle,
    mu: &ParamVector,
    cfg: &ProxConfig,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config("lambda", "must be positive and finite"));
    }
    check_domain(map, map.conj_domain(), mu)?;
    let batch = sample_batch(loss.num_examples(), cfg.batch_size, rng);
    let anchor = map.grad_g_conj(mu);
    let mut theta = mu.clone();
    let step = cfg.inner_step_size;
    for k in 0..cfg.inner_steps {
        let grad = loss.gradient(&theta, &batch)?;
        check_dims(theta.len(), grad.len())?;
        if let Some(j) = grad.first_non_finite() {
            return Err(Error::Numerical {
                step: k,
                what: format!("loss gradient coordinate {j} is {}", grad[j]),
            });
        }
        for ((t, g), a) in theta
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(anchor.as_slice())
        {
            *t -= step * (g + lambda * (map.phi_conj_prime(*t) - a));
        }
        if let Some(j) = theta.first_non_finite() {
            return Err(Error::Numerical {
                step: k,
                what: format!("proximal iterate coordinate {j} is {}", theta[j]),
            });
        }
        check_domain(map, map.conj_domain(), &theta)?;
    }
    Ok(theta)
}

/// First-order envelope gradient `λ (μ − θ̃)`: the Jacobian of the mean map
/// and `∇²g*` are both replaced by the identity.
pub fn envelope_gradient_first_order(
    lambda: f64,
    mu: &ParamVector,
    theta_tilde: &ParamVector,
) -> Result<ParamVector> {
    Ok(mu.sub(theta_tilde)?.scale(lambda))
}

/// `λ ∇²g*(μ) [μ − θ̃]`, the envelope gradient with the mirror curvature
/// kept. Identical to [`envelope_gradient_first_order`] for [`SquaredNorm`].
pub fn envelope_gradient(
    map: &dyn MirrorMap,
    lambda: f64,
    mu: &ParamVector,
    theta_tilde: &ParamVector,
) -> Result<ParamVector> {
    let diff = mu.sub(theta_tilde)?;
    Ok(map.hess_g_conj_apply(mu, &diff)?.scale(lambda))
}

/// `f(θ) + λ D_{g*}(θ, μ)` with `f` evaluated on the full example set.
pub fn envelope_value(
    map: &dyn MirrorMap,
    lambda: f64,
    loss: &dyn LossOracle,
    mu: &ParamVector,
    theta: &ParamVector,
) -> Result<f64> {
    let f = loss.value(theta, &full_batch(loss.num_examples()))?;
    Ok(f + lambda * conjugate_divergence(map, theta, mu)?)
}
