//! Midpoint-rule state chains and activation-free backpropagation.
//!
//! `h_{k+1} = h_{k−1} + τ f(u, h_k, θ)` can be run backwards exactly:
//! `h_{k−1} = h_{k+1} − τ f(u, h_k, θ)` evaluates `f` on the same point as
//! the forward step, so a reverse sweep rebuilds every state from the last
//! two while accumulating gradients. The chain is seeded with one Euler step
//! `h_1 = h_0 + τ f(u, h_0, θ)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hamiltonian::LossKind;
use crate::netspec::{check_tau, BoundParams, NetSpec, ResidualMode, StateNet};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Two-state window `(h_{k−1}, h_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointChain {
    window: Option<(Tensor, Tensor)>,
    pub tau: f64,
    /// Transitions taken so far (the bootstrap counts as one).
    pub steps: usize,
}

fn check_spec(spec: &NetSpec) -> Result<()> {
    if spec.residual_mode != ResidualMode::Plain || matches!(spec.state, StateNet::Empty) {
        return Err(Error::IncompatibleMode {
            mode: "midpoint",
            reason: "needs a non-empty state network returning the state derivative".into(),
        });
    }
    Ok(())
}

/// `f(u, h, θ)` and, when `seed` is given, its vector-Jacobian products
/// with respect to `h` and `θ`.
fn eval_f(
    spec: &NetSpec,
    u: &Tensor,
    h: &Tensor,
    theta_h: &Tensor,
    seed: Option<&Tensor>,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    let mut tape = Tape::new();
    let uv = tape.constant(u.clone())?;
    let hv = tape.leaf(h.clone())?;
    let p = BoundParams::bind(&mut tape, &spec.state.param_shapes(), theta_h)?;
    let f = spec.state.record(&mut tape, uv, hv, &p.vars)?;
    let value = tape.value(f).clone();
    let grads = match seed {
        Some(s) => {
            let g = tape.vjp(f, s)?;
            Some((g.wrt(hv), p.gather(&g)))
        }
        None => None,
    };
    Ok((value, grads))
}

impl MidpointChain {
    pub fn empty(tau: f64) -> Self {
        Self { window: None, tau, steps: 0 }
    }

    pub fn seeded(h_prev: Tensor, h_curr: Tensor, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if !h_prev.same_shape(&h_curr) {
            return Err(Error::Shape {
                op: "midpoint_seed",
                shapes: alloc::vec![h_prev.shape().to_vec(), h_curr.shape().to_vec()],
            });
        }
        Ok(Self { window: Some((h_prev, h_curr)), tau, steps: 0 })
    }

    /// `(h_0, h_0 + τ f(u, h_0, θ))`.
    pub fn bootstrap(spec: &NetSpec, u: &Tensor, theta_h: &Tensor, h0: Tensor, tau: f64) -> Result<Self> {
        check_spec(spec)?;
        check_tau(tau)?;
        let (f, _) = eval_f(spec, u, &h0, theta_h, None)?;
        let h1 = h0.axpy(tau, &f)?;
        Ok(Self { window: Some((h0, h1)), tau, steps: 1 })
    }

    /// `(h_{k−1}, h_k)`.
    pub fn window(&self) -> Result<(&Tensor, &Tensor)> {
        self.window.as_ref().map(|(a, b)| (a, b)).ok_or(Error::Empty("midpoint chain"))
    }
}

/// Slides the window forward by one midpoint step.
pub fn midpoint_forward(chain: &MidpointChain, u: &Tensor, theta_h: &Tensor, spec: &NetSpec) -> Result<MidpointChain> {
    check_spec(spec)?;
    let (prev, curr) = chain.window()?;
    let (f, _) = eval_f(spec, u, curr, theta_h, None)?;
    let next = prev.axpy(chain.tau, &f)?;
    Ok(MidpointChain { window: Some((curr.clone(), next)), tau: chain.tau, steps: chain.steps + 1 })
}

/// Given the window `(h_k, h_{k+1})`, returns `h_{k−1}`.
pub fn midpoint_reverse(chain: &MidpointChain, u: &Tensor, theta_h: &Tensor, spec: &NetSpec) -> Result<Tensor> {
    check_spec(spec)?;
    let (curr, next) = chain.window()?;
    let (f, _) = eval_f(spec, u, curr, theta_h, None)?;
    next.axpy(-chain.tau, &f)
}

/// Optional check of reconstructed states against forward checkpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftMonitor {
    /// Checkpoint every `every` transitions.
    pub every: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReversibleGradient {
    /// `∂L/∂θ^h`.
    pub theta: Tensor,
    /// `∂L/∂h_0`.
    pub h0: Tensor,
    pub loss: f64,
    /// Final state `h_depth`.
    pub final_state: Tensor,
    /// Most chain states held at once (checkpoints excluded).
    pub peak_retained: usize,
    /// Largest reconstruction error seen at a checkpoint or at `h_0`.
    pub max_drift: f64,
}

#[derive(Default)]
struct Retained {
    live: usize,
    peak: usize,
}

impl Retained {
    fn alloc(&mut self) {
        self.live += 1;
        self.peak = self.peak.max(self.live);
    }
}

/// Gradient of `L(h_depth, target)` through a `depth`-transition midpoint
/// chain, rebuilding earlier states on the way back instead of storing them.
#[allow(clippy::too_many_arguments)]
pub fn reversible_backprop(
    spec: &NetSpec,
    u: &Tensor,
    theta_h: &Tensor,
    h0: &Tensor,
    depth: usize,
    tau: f64,
    loss: LossKind,
    target: &Tensor,
    monitor: Option<DriftMonitor>,
) -> Result<ReversibleGradient> {
    check_spec(spec)?;
    check_tau(tau)?;
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if monitor.is_some_and(|m| m.every == 0) {
        return Err(Error::invalid("drift monitor period must be positive"));
    }
    let mut retained = Retained::default();
    let mut checkpoints: Vec<(usize, Tensor)> = Vec::new();
    let keep = |k: usize| monitor.is_some_and(|m| k.is_multiple_of(m.every));

    // Forward: window (prev, curr) = (h_{k−1}, h_k), updated in place.
    let mut prev = h0.clone();
    retained.alloc();
    let (f0, _) = eval_f(spec, u, &prev, theta_h, None)?;
    let mut curr = prev.axpy(tau, &f0)?;
    retained.alloc();
    if keep(1) {
        checkpoints.push((1, curr.clone()));
    }
    for k in 1..depth {
        let (f, _) = eval_f(spec, u, &curr, theta_h, None)?;
        prev.axpy_assign(tau, &f)?;
        core::mem::swap(&mut prev, &mut curr);
        if keep(k + 1) {
            checkpoints.push((k + 1, curr.clone()));
        }
    }
    let final_state = curr.clone();

    let mut lt = Tape::new();
    let hv = lt.leaf(curr.clone())?;
    let tv = lt.constant(target.clone())?;
    let l = loss.record(&mut lt, hv, tv)?;
    let loss_value = lt.value(l).item()?;
    let mut a_curr = lt.vjp(l, &Tensor::scalar(1.0))?.wrt(hv);
    let mut a_prev = Tensor::zeros_like(&a_curr);
    let mut g_theta = Tensor::zeros_like(theta_h).flatten();
    let mut max_drift: f64 = 0.0;

    // Reverse: window (prev, curr) = (h_k, h_{k+1}) at the top of each turn.
    for k in (1..depth).rev() {
        let (f, grads) = eval_f(spec, u, &prev, theta_h, Some(&a_curr))?;
        let (dh, dth) = grads.expect("seeded");
        curr.axpy_assign(-tau, &f)?;
        core::mem::swap(&mut prev, &mut curr);
        a_prev.axpy_assign(tau, &dh)?;
        g_theta.axpy_assign(tau, &dth)?;
        core::mem::swap(&mut a_prev, &mut a_curr);
        if let Some(m) = monitor {
            if let Some((_, saved)) = checkpoints.iter().find(|(i, _)| *i == k - 1) {
                let drift = prev.max_abs_diff(saved)?;
                max_drift = max_drift.max(drift);
                if drift > m.threshold {
                    return Err(Error::Divergence { step: k - 1, drift, threshold: m.threshold });
                }
            }
        }
    }

    // Bootstrap step h_1 = h_0 + τ f(h_0): window is (h_0, h_1).
    let (_, grads) = eval_f(spec, u, &prev, theta_h, Some(&a_curr))?;
    let (dh, dth) = grads.expect("seeded");
    let mut g_h0 = a_prev.add(&a_curr)?;
    g_h0.axpy_assign(tau, &dh)?;
    g_theta.axpy_assign(tau, &dth)?;
    let drift = prev.max_abs_diff(h0)?;
    max_drift = max_drift.max(drift);
    if let Some(m) = monitor {
        if drift > m.threshold {
            return Err(Error::Divergence { step: 0, drift, threshold: m.threshold });
        }
    }

    Ok(ReversibleGradient {
        theta: g_theta,
        h0: g_h0,
        loss: loss_value,
        final_state,
        peak_retained: retained.peak,
        max_drift,
    })
}
