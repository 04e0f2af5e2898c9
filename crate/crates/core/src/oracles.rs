//! Reference implementations: momentum SGD, BPTT, and the parameter map
//! between SGD hyper-parameters and Hamiltonian learning rates.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hamiltonian::{HlConfig, LossKind, Ordering, Phi, Sign};
use crate::netspec::{check_tau, BoundParams, NetSpec, StateNet};
use crate::stream::Sequence;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// How the momentum buffer starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BufferInit {
    /// `b_1 = g_0`, as in common deep-learning libraries.
    #[default]
    FirstGradient,
    /// `b_0 = 0`, so `b_1 = (1 − ρ) g_0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SgdConfig {
    pub gamma: f64,
    pub mu: f64,
    pub rho: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub buffer_init: BufferInit,
}

impl SgdConfig {
    pub fn new(gamma: f64, mu: f64, rho: f64) -> Result<Self> {
        let cfg = Self { gamma, mu, rho, buffer_init: BufferInit::FirstGradient };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_buffer_init(mut self, init: BufferInit) -> Self {
        self.buffer_init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be positive"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid("mu must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `b′ = μ b + (1 − ρ) g` (first call per [`BufferInit`]), `θ′ = θ − γ b′`.
pub fn sgd_momentum_step(
    theta: &Tensor,
    grad: &Tensor,
    buffer: Option<&Tensor>,
    cfg: &SgdConfig,
) -> Result<(Tensor, Tensor)> {
    if !theta.same_shape(grad) {
        return Err(Error::Shape {
            op: "sgd_momentum_step",
            shapes: alloc::vec![theta.shape().to_vec(), grad.shape().to_vec()],
        });
    }
    let next = match (buffer, cfg.buffer_init) {
        (Some(b), _) => b.scale(cfg.mu).axpy(1.0 - cfg.rho, grad)?,
        (None, BufferInit::FirstGradient) => grad.clone(),
        (None, BufferInit::Zero) => grad.scale(1.0 - cfg.rho),
    };
    let theta = theta.axpy(-cfg.gamma, &next)?;
    Ok((theta, next))
}

/// Hamiltonian learning rates equivalent to an [`SgdConfig`] at step `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappedParams {
    pub beta: f64,
    pub eta: f64,
    pub phi: f64,
    pub tau: f64,
}

impl MappedParams {
    /// Sequential-ordering config with uniform `β` and constant `φ`.
    pub fn hl_config(&self, theta_len: usize) -> Result<HlConfig> {
        let cfg = HlConfig {
            tau: self.tau,
            beta: Tensor::filled(&[theta_len], self.beta),
            eta: self.eta,
            phi: Phi::constant(self.phi),
            s: Sign::Minus,
            ordering: Ordering::Sequential,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `β = γ/τ`, `η = (1 − μ)/τ`, `φ = (1 − ρ)/τ`.
pub fn map_params(sgd: &SgdConfig, tau: f64) -> Result<MappedParams> {
    check_tau(tau)?;
    if !(sgd.gamma > 0.0) {
        return Err(Error::InvalidMapping("gamma must be positive".into()));
    }
    if !(sgd.mu >= 0.0 && sgd.mu <= 1.0) {
        return Err(Error::InvalidMapping("mu outside [0, 1] gives a negative or undefined eta".into()));
    }
    if !(sgd.rho >= 0.0 && sgd.rho < 1.0) {
        return Err(Error::InvalidMapping("rho outside [0, 1) gives a non-positive phi".into()));
    }
    Ok(MappedParams { beta: sgd.gamma / tau, eta: (1.0 - sgd.mu) / tau, phi: (1.0 - sgd.rho) / tau, tau })
}

/// Inverse of [`map_params`]; the buffer convention defaults to the first gradient.
pub fn unmap_params(m: &MappedParams) -> Result<SgdConfig> {
    check_tau(m.tau)?;
    if !(m.beta > 0.0) || !(m.eta >= 0.0) || !(m.phi > 0.0) {
        return Err(Error::InvalidMapping("beta and phi must be positive, eta non-negative".into()));
    }
    Ok(SgdConfig {
        gamma: m.beta * m.tau,
        mu: 1.0 - m.tau * m.eta,
        rho: 1.0 - m.tau * m.phi,
        buffer_init: BufferInit::FirstGradient,
    })
}

/// Result of [`bptt_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct BpttResult {
    /// `∂ Σ_κ L(h_{κ+1}, ŷ_κ) / ∂θ^h`.
    pub grad: Tensor,
    /// `h_0 ..= h_n`.
    pub states: Vec<Tensor>,
    pub loss: f64,
}

fn transition(spec: &NetSpec) -> Result<&StateNet> {
    match &spec.state {
        s @ StateNet::Recurrent { .. } => Ok(s),
        _ => Err(Error::IncompatibleMode { mode: "bptt", reason: "state network must be a recurrent cell".into() }),
    }
}

/// `h_{κ+1} = f̂(u_κ, h_κ, θ)`.
pub fn rnn_forward(seq: &Sequence, init_h: &Tensor, theta_h: &Tensor, spec: &NetSpec) -> Result<Vec<Tensor>> {
    let net = transition(spec)?;
    let mut states = Vec::with_capacity(seq.len() + 1);
    states.push(init_h.clone());
    for u in &seq.tokens {
        let mut tape = Tape::new();
        let uv = tape.constant(u.clone())?;
        let hv = tape.constant(states.last().expect("non-empty").clone())?;
        let p = BoundParams::bind(&mut tape, &net.param_shapes(), theta_h)?;
        let next = net.record(&mut tape, uv, hv, &p.vars)?;
        states.push(tape.value(next).clone());
    }
    Ok(states)
}

/// Classical BPTT for `h_{κ+1} = f̂(u_κ, h_κ, θ)` with loss `Σ L(h_{κ+1}, ŷ_κ)`
/// over the tokens that carry a target. `init_h` is treated as a constant.
pub fn bptt_gradients(
    seq: &Sequence,
    init_h: &Tensor,
    theta_h: &Tensor,
    spec: &NetSpec,
    loss: LossKind,
) -> Result<BpttResult> {
    if seq.is_empty() {
        return Err(Error::Empty("sequence"));
    }
    let net = transition(spec)?;
    let states = rnn_forward(seq, init_h, theta_h, spec)?;
    let mut grad = Tensor::zeros(&[theta_h.len()]);
    // Adjoint of h_{q} flowing in from later steps.
    let mut carry = Tensor::zeros_like(init_h);
    let mut total = 0.0;
    for q in (1..=seq.len()).rev() {
        let mut g = carry;
        if let Some(target) = &seq.targets[q - 1] {
            let mut tape = Tape::new();
            let h = tape.leaf(states[q].clone())?;
            let t = tape.constant(target.clone())?;
            let l = loss.record(&mut tape, h, t)?;
            total += tape.value(l).item()?;
            g = g.add(&tape.vjp(l, &Tensor::scalar(1.0))?.wrt(h))?;
        }
        let mut tape = Tape::new();
        let uv = tape.constant(seq.tokens[q - 1].clone())?;
        let hv = tape.leaf(states[q - 1].clone())?;
        let p = BoundParams::bind(&mut tape, &net.param_shapes(), theta_h)?;
        let next = net.record(&mut tape, uv, hv, &p.vars)?;
        let grads = tape.vjp(next, &g)?;
        grad = grad.add(&p.gather(&grads))?;
        carry = grads.wrt(hv);
    }
    Ok(BpttResult { grad, states, loss: total })
}

/// BPTT restricted to the last `r` transitions, starting from the state
/// reached by the full forward pass.
pub fn truncated_bptt_gradients(
    seq: &Sequence,
    init_h: &Tensor,
    theta_h: &Tensor,
    spec: &NetSpec,
    loss: LossKind,
    r: usize,
) -> Result<BpttResult> {
    let n = seq.len();
    if r == 0 || r > n {
        return Err(Error::invalid("truncation window must satisfy 1 <= r <= n"));
    }
    let states = rnn_forward(seq, init_h, theta_h, spec)?;
    let window = Sequence { tokens: seq.tokens[n - r..].to_vec(), targets: seq.targets[n - r..].to_vec() };
    bptt_gradients(&window, &states[n - r], theta_h, spec, loss)
}
