//! Robust Hamiltonian, forward Hamilton equations and the learning step.
//!
//! State `[h, θ]` and costate `[z, ω]` evolve together:
//!
//! ```text
//! ḣ = f^h(u, h, θ^h)
//! θ̇ = −β ⊙ ω
//! ż = −s (∂H′/∂h)ᵀ − η z
//! ω̇ = −s (∂H′/∂θ)ᵀ − η ω
//! H′ = φ_t L(y, ŷ) + zᵀ ḣ
//! ```
//!
//! With `s = −1` all four are integrated forward in time with explicit Euler
//! steps, starting from a zero costate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::netspec::{check_tau, ModelState, NetSpec, Recorded};
use crate::stream::StreamItem;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Differentiable loss `L(y, ŷ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossKind {
    /// `½ · mean((y − ŷ)²)`.
    Mse,
    /// `−Σ ŷ_i log softmax(y)_i`; `ŷ` is a one-hot (or probability) vector.
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn record(self, tape: &mut Tape, y: Var, target: Var) -> Result<Var> {
        match self {
            LossKind::Mse => tape.mse(y, target),
            LossKind::SoftmaxCrossEntropy => tape.softmax_cross_entropy(y, target),
        }
    }

    pub fn value(self, y: &Tensor, target: &Tensor) -> Result<f64> {
        let op = match self {
            LossKind::Mse => crate::tape::Op::Mse,
            LossKind::SoftmaxCrossEntropy => crate::tape::Op::SoftmaxCrossEntropy,
        };
        crate::tape::forward_op(op, &[y, target])?.item()
    }
}

/// Loss scale schedule `φ_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Phi {
    Constant {
        value: f64,
    },
    /// `a · e^{b t}`.
    Exponential {
        a: f64,
        b: f64,
    },
    /// `1 / τ` for the current step size.
    Reciprocal,
    /// `before` for `t < switch`, `after` from then on.
    Step {
        before: f64,
        after: f64,
        switch: f64,
    },
}

impl Phi {
    pub fn constant(value: f64) -> Self {
        Phi::Constant { value }
    }

    pub fn at(&self, t: f64, tau: f64) -> f64 {
        match *self {
            Phi::Constant { value } => value,
            Phi::Exponential { a, b } => a * math::exp(b * t),
            Phi::Reciprocal => 1.0 / tau,
            Phi::Step { before, after, switch } => {
                if t < switch {
                    before
                } else {
                    after
                }
            }
        }
    }

    fn checked_at(&self, t: f64, tau: f64) -> Result<f64> {
        let v = self.at(t, tau);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::invalid("phi must be positive"))
        }
    }
}

/// Direction-of-time flag of the costate equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Sign {
    /// `s = −1`: forward-in-time learning.
    #[default]
    Minus,
    /// `s = +1`: the sign of the original boundary-value equations.
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

/// Whether the weight update uses `ω_t` or the freshly integrated `ω_{t+τ}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Ordering {
    /// All four equations integrated from time-`t` values.
    #[default]
    Simultaneous,
    /// Costate first, then `θ_{t+τ} = θ_t − τ β ⊙ ω_{t+τ}`.
    Sequential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HlConfig {
    pub tau: f64,
    /// Per-parameter rates, length `|θ|`.
    pub beta: Tensor,
    pub eta: f64,
    pub phi: Phi,
    pub s: Sign,
    pub ordering: Ordering,
}

impl HlConfig {
    /// Same `β` for every parameter.
    pub fn uniform(tau: f64, beta: f64, theta_len: usize, eta: f64, phi: Phi) -> Result<Self> {
        let cfg = Self {
            tau,
            beta: Tensor::filled(&[theta_len], beta),
            eta,
            phi,
            s: Sign::Minus,
            ordering: Ordering::Simultaneous,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_sign(mut self, s: Sign) -> Self {
        self.s = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if self.beta.data().iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid("beta must be non-negative"));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid("eta must be non-negative"));
        }
        Ok(())
    }
}

/// Adjoint pair `[z, ω^h, ω^y]`, shaped like [`ModelState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Costate {
    pub z: Tensor,
    pub omega_h: Tensor,
    pub omega_y: Tensor,
}

/// Which costate parts [`Costate::reset`] clears.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CostatePart {
    Z,
    Omega,
    Both,
}

impl Costate {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            z: Tensor::zeros_like(&state.h),
            omega_h: Tensor::zeros_like(&state.theta_h),
            omega_y: Tensor::zeros_like(&state.theta_y),
        }
    }

    pub fn omega(&self) -> Tensor {
        Tensor::concat(&[&self.omega_h, &self.omega_y]).expect("flat costate")
    }

    pub fn set_omega(&mut self, omega: &Tensor) -> Result<()> {
        let nh = self.omega_h.len();
        if omega.len() != nh + self.omega_y.len() {
            return Err(Error::Shape { op: "set_omega", shapes: vec![omega.shape().to_vec()] });
        }
        self.omega_h = omega.slice(0, nh)?;
        self.omega_y = omega.slice(nh, self.omega_y.len())?;
        Ok(())
    }

    pub fn reset(&self, which: CostatePart) -> Costate {
        let mut out = self.clone();
        if matches!(which, CostatePart::Z | CostatePart::Both) {
            out.z = Tensor::zeros_like(&self.z);
        }
        if matches!(which, CostatePart::Omega | CostatePart::Both) {
            out.omega_h = Tensor::zeros_like(&self.omega_h);
            out.omega_y = Tensor::zeros_like(&self.omega_y);
        }
        out
    }

    pub fn mirrors(&self, state: &ModelState) -> bool {
        self.z.same_shape(&state.h)
            && self.omega_h.same_shape(&state.theta_h)
            && self.omega_y.same_shape(&state.theta_y)
    }
}

/// Time derivatives of the costate.
#[derive(Clone, Debug, PartialEq)]
pub struct CostateRates {
    pub z: Tensor,
    pub omega_h: Tensor,
    pub omega_y: Tensor,
}

impl CostateRates {
    pub fn omega(&self) -> Tensor {
        Tensor::concat(&[&self.omega_h, &self.omega_y]).expect("flat costate rate")
    }
}

/// Per-step knobs that are not part of the run configuration.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub tau: f64,
    /// Step index `κ` for grouped masked updates; `None` updates every neuron.
    pub group_step: Option<usize>,
    /// Replaces `cfg.beta` for this step only.
    pub beta: Option<&'a Tensor>,
}

impl StepContext<'_> {
    pub fn new(tau: f64) -> Self {
        Self { tau, group_step: None, beta: None }
    }
}

/// The tape-recorded pieces of one Hamiltonian evaluation.
struct HamiltonianTape {
    tape: Tape,
    rec: Recorded,
    rate: Var,
    hamiltonian: Option<Var>,
    loss: Option<Var>,
}

#[allow(clippy::too_many_arguments)]
fn record_hamiltonian(
    spec: &NetSpec,
    state: &ModelState,
    costate: &Costate,
    u: &Tensor,
    y_hat: Option<&Tensor>,
    phi: f64,
    ctx: &StepContext<'_>,
    loss: LossKind,
) -> Result<HamiltonianTape> {
    if !costate.mirrors(state) {
        return Err(Error::Shape { op: "costate", shapes: vec![costate.z.shape().to_vec(), state.h.shape().to_vec()] });
    }
    let mut tape = Tape::new();
    let rec = spec.record(&mut tape, u, state, ctx.tau)?;
    let rate = match ctx.group_step {
        Some(k) => {
            let mask = tape.constant(spec.group_mask(k)?)?;
            tape.hadamard(mask, rec.rate)?
        }
        None => rec.rate,
    };
    let mut terms = Vec::with_capacity(2);
    let mut loss_var = None;
    if let Some(target) = y_hat {
        let t = tape.constant(target.clone())?;
        let l = loss.record(&mut tape, rec.y, t)?;
        loss_var = Some(l);
        terms.push(tape.scale(l, phi)?);
    }
    if !costate.z.is_empty() {
        let z = tape.constant(costate.z.clone())?;
        terms.push(tape.matmul(z, rate)?);
    }
    let hamiltonian = match terms.as_slice() {
        [] => None,
        [one] => Some(*one),
        [a, b] => Some(tape.add(*a, *b)?),
        _ => unreachable!(),
    };
    Ok(HamiltonianTape { tape, rec, rate, hamiltonian, loss: loss_var })
}

/// `H′ = φ_t L(y_t, ŷ_t) + z_tᵀ ḣ_t`; the loss term is dropped without a target.
#[allow(clippy::too_many_arguments)]
pub fn robust_hamiltonian(
    spec: &NetSpec,
    state: &ModelState,
    costate: &Costate,
    u: &Tensor,
    y_hat: Option<&Tensor>,
    t: f64,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<f64> {
    let phi = cfg.phi.checked_at(t, cfg.tau)?;
    let ht = record_hamiltonian(spec, state, costate, u, y_hat, phi, &StepContext::new(cfg.tau), loss)?;
    match ht.hamiltonian {
        Some(h) => ht.tape.value(h).item(),
        None => Ok(0.0),
    }
}

/// `ḣ_t = f^h(u_t, h_t, θ^h_t)`.
pub fn he_state_rhs(spec: &NetSpec, state: &ModelState, u: &Tensor, tau: f64) -> Result<Tensor> {
    spec.eval_state_net(u, state, tau)
}

/// `θ̇ = −β ⊙ ω` over the concatenated `ω`.
pub fn he_param_rhs(costate: &Costate, beta: &Tensor) -> Result<Tensor> {
    let omega = costate.omega();
    if beta.len() != omega.len() {
        return Err(Error::Shape { op: "he_param_rhs", shapes: vec![beta.shape().to_vec(), omega.shape().to_vec()] });
    }
    beta.flatten().hadamard(&omega).map(|t| t.neg())
}

fn costate_rates(ht: &HamiltonianTape, costate: &Costate, s: Sign, eta: f64) -> Result<CostateRates> {
    let (dh, dth, dty) = match ht.hamiltonian {
        Some(hv) => {
            let grads = ht.tape.vjp(hv, &Tensor::scalar(1.0))?;
            (grads.wrt(ht.rec.h), ht.rec.theta_h.gather(&grads), ht.rec.theta_y.gather(&grads))
        }
        None => {
            (Tensor::zeros_like(&costate.z), Tensor::zeros_like(&costate.omega_h), Tensor::zeros_like(&costate.omega_y))
        }
    };
    let ms = -s.value();
    Ok(CostateRates {
        z: dh.scale(ms).axpy(-eta, &costate.z)?,
        omega_h: dth.scale(ms).axpy(-eta, &costate.omega_h)?,
        omega_y: dty.scale(ms).axpy(-eta, &costate.omega_y)?,
    })
}

/// `ż = −s(∂H′/∂h)ᵀ − ηz` and `ω̇ = −s(∂H′/∂θ)ᵀ − ηω`, from one backward pass.
#[allow(clippy::too_many_arguments)]
pub fn he_costate_rhs(
    spec: &NetSpec,
    state: &ModelState,
    costate: &Costate,
    u: &Tensor,
    y_hat: Option<&Tensor>,
    t: f64,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<CostateRates> {
    let phi = cfg.phi.checked_at(t, cfg.tau)?;
    let ht = record_hamiltonian(spec, state, costate, u, y_hat, phi, &StepContext::new(cfg.tau), loss)?;
    costate_rates(&ht, costate, cfg.s, cfg.eta)
}

/// Explicit Euler step `value + τ · rate`.
pub fn euler_step(value: &Tensor, rate: &Tensor, tau: f64) -> Result<Tensor> {
    check_tau(tau)?;
    value.axpy(tau, rate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub state: ModelState,
    pub costate: Costate,
    /// Prediction `y_t` made with the pre-update state.
    pub y: Tensor,
    /// `L(y_t, ŷ_t)` (without `φ`) when a target was present.
    pub loss: Option<f64>,
}

/// One pass of the Hamiltonian learning loop for a single stream item.
pub fn hl_step(
    spec: &NetSpec,
    state: &ModelState,
    costate: &Costate,
    item: &StreamItem,
    ctx: &StepContext<'_>,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<StepOutput> {
    let tau = ctx.tau;
    check_tau(tau)?;
    let phi = cfg.phi.checked_at(item.timestamp, tau)?;
    let ht = record_hamiltonian(spec, state, costate, &item.u, item.y_hat.as_ref(), phi, ctx, loss)?;
    let rates = costate_rates(&ht, costate, cfg.s, cfg.eta)?;

    let h_next = match (ht.rec.next, ctx.group_step) {
        // Direct assignment keeps h_{t+τ} bitwise equal to f̂^h.
        (Some(next), None) => ht.tape.value(next).clone(),
        (Some(next), Some(k)) => {
            let mask = spec.group_mask(k)?;
            let f = ht.tape.value(next);
            let data = mask
                .data()
                .iter()
                .zip(f.data().iter().zip(state.h.data()))
                .map(|(&m, (&n, &h))| if m != 0.0 { n } else { h })
                .collect();
            Tensor::vector(data)
        }
        (None, _) => euler_step(&state.h, ht.tape.value(ht.rate), tau)?,
    };

    let next_costate = Costate {
        z: euler_step(&costate.z, &rates.z, tau)?,
        omega_h: euler_step(&costate.omega_h, &rates.omega_h, tau)?,
        omega_y: euler_step(&costate.omega_y, &rates.omega_y, tau)?,
    };
    let beta = ctx.beta.unwrap_or(&cfg.beta);
    let theta_rate = match cfg.ordering {
        Ordering::Simultaneous => he_param_rhs(costate, beta)?,
        Ordering::Sequential => he_param_rhs(&next_costate, beta)?,
    };
    let mut next_state = ModelState { h: h_next, theta_h: state.theta_h.clone(), theta_y: state.theta_y.clone() };
    next_state.set_theta(&euler_step(&state.theta(), &theta_rate, tau)?)?;

    let y = ht.tape.value(ht.rec.y).clone();
    let loss_value = match ht.loss {
        Some(l) => Some(ht.tape.value(l).item()?),
        None => None,
    };
    Ok(StepOutput { state: next_state, costate: next_costate, y, loss: loss_value })
}

/// How the learner picks `τ` for each item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Spacing {
    /// Always `cfg.tau`.
    #[default]
    Fixed,
    /// The gap to the previously processed item (`cfg.tau` for the first).
    FromStream,
}

/// Owns one run's state and costate and feeds it stream items.
#[derive(Clone, Debug)]
pub struct Learner {
    pub spec: NetSpec,
    pub cfg: HlConfig,
    pub loss: LossKind,
    pub state: ModelState,
    pub costate: Costate,
    pub spacing: Spacing,
    last_time: Option<f64>,
}

impl Learner {
    pub fn new(spec: NetSpec, cfg: HlConfig, loss: LossKind, state: ModelState) -> Result<Self> {
        cfg.validate()?;
        if cfg.beta.len() != spec.theta_len() {
            return Err(Error::Shape { op: "beta", shapes: vec![cfg.beta.shape().to_vec(), vec![spec.theta_len()]] });
        }
        let costate = Costate::zeros_like(&state);
        Ok(Self { spec, cfg, loss, state, costate, spacing: Spacing::Fixed, last_time: None })
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn next_tau(&self, item: &StreamItem) -> Result<f64> {
        if let Some(last) = self.last_time {
            if !(item.timestamp > last) {
                return Err(Error::invalid("stream timestamps must strictly increase"));
            }
        }
        Ok(match (self.spacing, self.last_time) {
            (Spacing::FromStream, Some(last)) => item.timestamp - last,
            _ => self.cfg.tau,
        })
    }

    /// Runs [`hl_step`] and commits the result.
    pub fn step(&mut self, item: &StreamItem) -> Result<StepOutput> {
        let tau = self.next_tau(item)?;
        let out = hl_step(&self.spec, &self.state, &self.costate, item, &StepContext::new(tau), &self.cfg, self.loss)?;
        self.state = out.state.clone();
        self.costate = out.costate.clone();
        self.last_time = Some(item.timestamp);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::{Activation, Dense, OutputNet, Source, StateNet};

    /// FF-output scalar model y = θ·u with no neuron state.
    fn scalar_model() -> (NetSpec, ModelState) {
        let spec = NetSpec::new(
            1,
            StateNet::Empty,
            OutputNet::Mlp {
                source: Source::Input,
                layers: vec![Dense::new(1, 1, Activation::Identity).without_bias()],
            },
        )
        .unwrap();
        let state = spec.state_with(Tensor::vector(vec![]), Tensor::vector(vec![0.0])).unwrap();
        (spec, state)
    }

    fn item(u: f64, y: Option<f64>, t: f64) -> StreamItem {
        StreamItem { u: Tensor::vector(vec![u]), y_hat: y.map(|v| Tensor::vector(vec![v])), delta: true, timestamp: t }
    }

    #[test]
    fn hamiltonian_with_zero_costate_is_the_loss() {
        let (spec, mut state) = scalar_model();
        state.theta_y = Tensor::vector(vec![0.5]);
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let co = Costate::zeros_like(&state);
        let it = item(2.0, Some(0.0), 0.0);
        let h = robust_hamiltonian(&spec, &state, &co, &it.u, it.y_hat.as_ref(), 0.0, &cfg, LossKind::Mse).unwrap();
        assert_eq!(h, LossKind::Mse.value(&Tensor::vector(vec![1.0]), &Tensor::vector(vec![0.0])).unwrap());
        assert_eq!(h, 0.5);
    }

    #[test]
    fn hamiltonian_inner_product_term() {
        // Perfect prediction, z = [1], ḣ = [2] → H′ = 2.
        let spec = NetSpec::new(
            1,
            StateNet::Mlp { layers: vec![Dense::new(1, 1, Activation::Identity).without_bias()] },
            OutputNet::Identity,
        )
        .unwrap();
        let state = spec.state_with(Tensor::vector(vec![2.0]), Tensor::vector(vec![])).unwrap();
        let mut co = Costate::zeros_like(&state);
        co.z = Tensor::vector(vec![1.0]);
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let u = Tensor::vector(vec![1.0]);
        let h = robust_hamiltonian(&spec, &state, &co, &u, Some(&state.h.clone()), 0.0, &cfg, LossKind::Mse).unwrap();
        assert_eq!(h, 2.0);
    }

    #[test]
    fn param_rhs_examples() {
        let (_, state) = scalar_model();
        let mut co = Costate::zeros_like(&state);
        assert_eq!(he_param_rhs(&co, &Tensor::vector(vec![0.1])).unwrap().data(), &[0.0]);
        co.omega_y = Tensor::vector(vec![-1.0]);
        assert_eq!(he_param_rhs(&co, &Tensor::vector(vec![0.0])).unwrap().data(), &[0.0]);
        assert_eq!(he_param_rhs(&co, &Tensor::vector(vec![0.1])).unwrap().data(), &[0.1]);
    }

    #[test]
    fn costate_rhs_scalar_example() {
        // θ = 0, u = 1, ŷ = 1, φ = 1, s = −1 → ω̇^y = ∂L/∂θ = −1.
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let co = Costate::zeros_like(&state);
        let it = item(1.0, Some(1.0), 0.0);
        let r = he_costate_rhs(&spec, &state, &co, &it.u, it.y_hat.as_ref(), 0.0, &cfg, LossKind::Mse).unwrap();
        assert_eq!(r.omega_y.data(), &[-1.0]);
    }

    #[test]
    fn costate_rhs_flat_loss_and_pure_decay() {
        let (spec, mut state) = scalar_model();
        state.theta_y = Tensor::vector(vec![1.0]);
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let co = Costate::zeros_like(&state);
        let it = item(1.0, Some(1.0), 0.0);
        let r = he_costate_rhs(&spec, &state, &co, &it.u, it.y_hat.as_ref(), 0.0, &cfg, LossKind::Mse).unwrap();
        assert_eq!(r.omega_y.data(), &[0.0]);

        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.5, Phi::constant(1.0)).unwrap();
        let mut co = co;
        co.omega_y = Tensor::vector(vec![4.0]);
        let r = he_costate_rhs(&spec, &state, &co, &it.u, it.y_hat.as_ref(), 0.0, &cfg, LossKind::Mse).unwrap();
        assert_eq!(r.omega_y.data(), &[-2.0]);
    }

    #[test]
    fn euler_examples() {
        let v = Tensor::vector(vec![1.0]);
        assert_eq!(euler_step(&v, &Tensor::vector(vec![0.0]), 0.3).unwrap(), v);
        assert_eq!(euler_step(&v, &Tensor::vector(vec![2.0]), 0.5).unwrap().data(), &[2.0]);
        assert!(euler_step(&v, &Tensor::vector(vec![1.0, 2.0]), 0.5).is_err());
        assert!(euler_step(&v, &v, 0.0).is_err());
    }

    #[test]
    fn scalar_chain_sequential_step() {
        // ω' = (1 − τη)·0 + τφ(−1) = −1; θ' = 0 − τβω' = 0.1.
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 1.0, Phi::constant(1.0)).unwrap().with_ordering(Ordering::Sequential);
        let co = Costate::zeros_like(&state);
        let out = hl_step(&spec, &state, &co, &item(1.0, Some(1.0), 0.0), &StepContext::new(1.0), &cfg, LossKind::Mse)
            .unwrap();
        assert_eq!(out.state.theta_y.data(), &[0.1]);
        assert_eq!(out.costate.omega_y.data(), &[-1.0]);
        assert_eq!(out.loss, Some(0.5));
    }

    #[test]
    fn simultaneous_step_uses_old_omega() {
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 1.0, Phi::constant(1.0)).unwrap();
        let co = Costate::zeros_like(&state);
        let out = hl_step(&spec, &state, &co, &item(1.0, Some(1.0), 0.0), &StepContext::new(1.0), &cfg, LossKind::Mse)
            .unwrap();
        assert_eq!(out.state.theta_y.data(), &[0.0]);
        assert_eq!(out.costate.omega_y.data(), &[-1.0]);
    }

    #[test]
    fn zero_beta_freezes_weights() {
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.0, 1, 0.0, Phi::constant(1.0)).unwrap().with_ordering(Ordering::Sequential);
        let mut learner = Learner::new(spec, cfg, LossKind::Mse, state.clone()).unwrap();
        for k in 0..5 {
            learner.step(&item(1.0 + k as f64, Some(2.0), k as f64)).unwrap();
            assert_eq!(learner.state.theta_y, state.theta_y);
        }
        assert!(learner.costate.omega_y.data()[0] < 0.0);
    }

    #[test]
    fn missing_target_skips_loss_term() {
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let co = Costate::zeros_like(&state);
        let out =
            hl_step(&spec, &state, &co, &item(1.0, None, 0.0), &StepContext::new(1.0), &cfg, LossKind::Mse).unwrap();
        assert_eq!(out.loss, None);
        assert_eq!(out.costate, co);
    }

    #[test]
    fn reset_costate_parts() {
        let co = Costate {
            z: Tensor::vector(vec![1.0]),
            omega_h: Tensor::vector(vec![2.0, 3.0]),
            omega_y: Tensor::vector(vec![4.0]),
        };
        let both = co.reset(CostatePart::Both);
        assert_eq!(both.z.data(), &[0.0]);
        assert_eq!(both.omega().data(), &[0.0, 0.0, 0.0]);
        let z_only = co.reset(CostatePart::Z);
        assert_eq!(z_only.z.data(), &[0.0]);
        assert_eq!(z_only.omega(), co.omega());
        let om = co.reset(CostatePart::Omega);
        assert_eq!(om.z, co.z);
    }

    #[test]
    fn learner_rejects_non_increasing_timestamps() {
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let mut learner = Learner::new(spec, cfg, LossKind::Mse, state).unwrap();
        learner.step(&item(1.0, Some(1.0), 1.0)).unwrap();
        assert!(learner.step(&item(1.0, Some(1.0), 1.0)).is_err());
    }

    #[test]
    fn learner_uses_stream_spacing() {
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(1.0)).unwrap();
        let mut learner = Learner::new(spec, cfg, LossKind::Mse, state).unwrap().with_spacing(Spacing::FromStream);
        assert_eq!(learner.next_tau(&item(0.0, None, 0.0)).unwrap(), 1.0);
        learner.step(&item(0.0, None, 0.0)).unwrap();
        assert_eq!(learner.next_tau(&item(0.0, None, 0.25)).unwrap(), 0.25);
    }

    #[test]
    fn config_validation() {
        assert!(HlConfig::uniform(0.0, 0.1, 1, 0.0, Phi::constant(1.0)).is_err());
        assert!(HlConfig::uniform(1.0, -0.1, 1, 0.0, Phi::constant(1.0)).is_err());
        assert!(HlConfig::uniform(1.0, 0.1, 1, -1.0, Phi::constant(1.0)).is_err());
        let (spec, state) = scalar_model();
        let cfg = HlConfig::uniform(1.0, 0.1, 1, 0.0, Phi::constant(0.0)).unwrap();
        let co = Costate::zeros_like(&state);
        assert!(hl_step(&spec, &state, &co, &item(1.0, Some(1.0), 0.0), &StepContext::new(1.0), &cfg, LossKind::Mse)
            .is_err());
    }

    #[test]
    fn phi_schedules() {
        assert_eq!(Phi::constant(2.0).at(5.0, 1.0), 2.0);
        assert_eq!(Phi::Reciprocal.at(0.0, 0.5), 2.0);
        assert_eq!(Phi::Exponential { a: 2.0, b: 0.0 }.at(3.0, 1.0), 2.0);
        let step = Phi::Step { before: 2.0, after: 1.0, switch: 1.0 };
        assert_eq!(step.at(0.0, 1.0), 2.0);
        assert_eq!(step.at(1.0, 1.0), 1.0);
    }
}
