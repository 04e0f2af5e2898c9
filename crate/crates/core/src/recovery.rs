//! Backpropagation and BPTT expressed as Hamiltonian learning runs.
//!
//! * `FfOutput`: no neuron state; the output net is the whole model.
//! * `FfState`: the model lives in the state net; `h` and `z` are cleared
//!   every step and the output net is the identity.
//! * `RnnUnfold`: an unrolled recurrent net used as a feed-forward output net.
//! * `RnnHlBptt`: every sequence is streamed forward and then backward; the
//!   costate recursion over the reversed half is exactly BPTT.
//! * `RnnTruncated`: as above, but only the last `r − 1` tokens are replayed.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hamiltonian::{
    hl_step, Costate, CostatePart, HlConfig, Learner, LossKind, Ordering, Spacing, StepContext, StepOutput,
};
use crate::netspec::{BoundParams, ModelState, NetSpec, OutputNet, ResidualMode, Source, StateNet};
use crate::stream::{truncated_replay_stream, Sequence, Stream, StreamItem};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ModeKind {
    /// Plain Hamiltonian learning with the configured ordering.
    Online,
    FfOutput,
    FfState,
    RnnUnfold,
    RnnHlBptt,
    RnnTruncated {
        window: usize,
    },
}

impl ModeKind {
    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Online => "online",
            ModeKind::FfOutput => "ff_output",
            ModeKind::FfState => "ff_state",
            ModeKind::RnnUnfold => "rnn_unfold",
            ModeKind::RnnHlBptt => "rnn_hl_bptt",
            ModeKind::RnnTruncated { .. } => "rnn_truncated",
        }
    }

    fn is_recurrent_replay(self) -> bool {
        matches!(self, ModeKind::RnnHlBptt | ModeKind::RnnTruncated { .. })
    }
}

/// When the weight costate `ω` is cleared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OmegaReset {
    /// Never: `ω` keeps a momentum memory across samples.
    #[default]
    Never,
    /// Before every stream item.
    EveryItem,
    /// Before every sequence (replay modes) or every item otherwise.
    EverySequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BetaSchedule {
    Constant,
    /// `β = 0` except on the last item of each replay.
    FinalStepOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecoveryMode {
    pub kind: ModeKind,
    pub omega_reset: OmegaReset,
    pub beta_schedule: BetaSchedule,
}

impl RecoveryMode {
    pub fn new(kind: ModeKind) -> Self {
        let (omega_reset, beta_schedule) = if kind.is_recurrent_replay() {
            (OmegaReset::EverySequence, BetaSchedule::FinalStepOnly)
        } else {
            (OmegaReset::Never, BetaSchedule::Constant)
        };
        Self { kind, omega_reset, beta_schedule }
    }

    pub fn with_omega_reset(mut self, reset: OmegaReset) -> Self {
        self.omega_reset = reset;
        self
    }

    /// Checks that `spec` has the shape the mode needs.
    pub fn check_spec(&self, spec: &NetSpec) -> Result<()> {
        let fail = |reason: &str| Err(Error::IncompatibleMode { mode: self.kind.name(), reason: reason.into() });
        match self.kind {
            ModeKind::Online => Ok(()),
            ModeKind::FfOutput => match spec.output {
                OutputNet::Mlp { source: Source::Input, .. } | OutputNet::Unrolled { .. } => Ok(()),
                _ => fail("output network must read the input only"),
            },
            ModeKind::RnnUnfold => match spec.output {
                OutputNet::Unrolled { .. } => Ok(()),
                _ => fail("output network must be an unrolled recurrent cell"),
            },
            ModeKind::FfState => {
                if spec.output != OutputNet::Identity {
                    return fail("output network must be the identity");
                }
                if spec.residual_mode != ResidualMode::Instantaneous {
                    return fail("state network must use the instantaneous residual form");
                }
                match spec.state {
                    StateNet::Mlp { .. } => Ok(()),
                    _ => fail("state network must be a delay-free feed-forward stack"),
                }
            }
            ModeKind::RnnHlBptt | ModeKind::RnnTruncated { .. } => {
                if spec.output != OutputNet::Identity {
                    return fail("output network must be the identity");
                }
                if spec.residual_mode != ResidualMode::Instantaneous {
                    return fail("state network must use the instantaneous residual form");
                }
                match spec.state {
                    StateNet::Recurrent { .. } => Ok(()),
                    _ => fail("state network must be a recurrent cell"),
                }
            }
        }
    }
}

/// One processed stream item.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub step: usize,
    pub time: f64,
    pub loss: Option<f64>,
    /// Prediction paired with the item's target, when one was made.
    pub y: Option<Tensor>,
    pub target: Option<Tensor>,
    /// `θ` after the step.
    pub theta: Tensor,
}

impl RunRow {
    /// Whether the arg-max of `y` matches the arg-max of the target.
    pub fn correct(&self) -> Option<bool> {
        match (&self.y, &self.target) {
            (Some(y), Some(t)) if t.len() > 1 => Some(y.argmax() == t.argmax()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub state: ModelState,
    pub costate: Costate,
}

/// `h_κ` (and `u_κ`) snapshots for the most recent `capacity` indices.
#[derive(Clone, Debug)]
pub struct StoredTrajectory {
    capacity: usize,
    first: usize,
    states: VecDeque<Tensor>,
    inputs: VecDeque<Option<Tensor>>,
    peak: usize,
}

impl StoredTrajectory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), first: 0, states: VecDeque::new(), inputs: VecDeque::new(), peak: 0 }
    }

    /// Appends the entry for index `first + len`.
    pub fn push(&mut self, h: Tensor, u: Option<Tensor>) {
        if self.states.len() == self.capacity {
            self.states.pop_front();
            self.inputs.pop_front();
            self.first += 1;
        }
        self.states.push_back(h);
        self.inputs.push_back(u);
        self.peak = self.peak.max(self.states.len());
    }

    pub fn next_index(&self) -> usize {
        self.first + self.states.len()
    }

    pub fn state(&self, index: usize) -> Result<&Tensor> {
        index.checked_sub(self.first).and_then(|i| self.states.get(i)).ok_or(Error::MissingStoredState(index))
    }

    pub fn input(&self, index: usize) -> Result<&Tensor> {
        index
            .checked_sub(self.first)
            .and_then(|i| self.inputs.get(i))
            .and_then(Option::as_ref)
            .ok_or(Error::MissingStoredState(index))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest number of snapshots held at once.
    pub fn peak(&self) -> usize {
        self.peak
    }
}

fn row(step: usize, item: &StreamItem, out: &StepOutput) -> RunRow {
    RunRow {
        step,
        time: item.timestamp,
        loss: out.loss,
        y: Some(out.y.clone()),
        target: item.y_hat.clone(),
        theta: out.state.theta(),
    }
}

fn sequential(cfg: &HlConfig) -> HlConfig {
    cfg.clone().with_ordering(Ordering::Sequential)
}

/// One step of the feed-forward-through-state construction.
///
/// `h_{t+τ} = f̂^h(u_t, 0, θ^h)`, `z_{t+τ} = −s τ φ_t ∂L(h_{t+τ}, ŷ_t)/∂h`,
/// then `ω^h` and `θ^h` are integrated with the fresh `z`.
pub fn ff_state_step(
    spec: &NetSpec,
    state: &ModelState,
    costate: &Costate,
    item: &StreamItem,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<StepOutput> {
    RecoveryMode::new(ModeKind::FfState).check_spec(spec)?;
    let tau = cfg.tau;
    let cleared = ModelState { h: Tensor::zeros_like(&state.h), ..state.clone() };
    let mut tape = Tape::new();
    let rec = spec.record(&mut tape, &item.u, &cleared, tau)?;
    let next = rec.next.expect("instantaneous mode records f̂");
    let h_next = tape.value(next).clone();
    let s = cfg.s.value();

    let (z_next, loss_value) = match &item.y_hat {
        Some(target) => {
            let mut lt = Tape::new();
            let hv = lt.leaf(h_next.clone())?;
            let tv = lt.constant(target.clone())?;
            let l = loss.record(&mut lt, hv, tv)?;
            let phi = cfg.phi.at(item.timestamp, tau);
            let g = lt.vjp(l, &Tensor::scalar(1.0))?.wrt(hv);
            (g.scale(-s * tau * phi), Some(lt.value(l).item()?))
        }
        None => (Tensor::zeros_like(&h_next), None),
    };

    let dtheta = rec.theta_h.gather(&tape.vjp(rec.rate, &z_next)?);
    let omega_rate = dtheta.scale(-s).axpy(-cfg.eta, &costate.omega_h)?;
    let omega_h = costate.omega_h.axpy(tau, &omega_rate)?;
    let beta_h = cfg.beta.slice(0, state.theta_h.len())?;
    let theta_h = state.theta_h.axpy(-tau, &beta_h.hadamard(&omega_h)?)?;

    Ok(StepOutput {
        state: ModelState { h: h_next.clone(), theta_h, theta_y: state.theta_y.clone() },
        costate: Costate { z: z_next, omega_h, omega_y: costate.omega_y.clone() },
        y: h_next,
        loss: loss_value,
    })
}

/// Outcome of one replayed sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub state: ModelState,
    pub costate: Costate,
    /// `ω^h` after the last replay item, before any decay of later items.
    pub omega_h: Tensor,
    pub rows: Vec<RunRow>,
    /// Peak number of stored `h` snapshots.
    pub stored_peak: usize,
}

/// Full forward-then-reverse replay of one sequence. With `τ φ = 1` and
/// `η = 0`, the final `ω^h` (from a zero start) equals the BPTT gradient.
pub fn hl_bptt_replay(
    seq: &Sequence,
    state: &ModelState,
    costate: &Costate,
    spec: &NetSpec,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<ReplayOutcome> {
    truncated_replay(seq, seq.len(), state, costate, spec, cfg, loss)
}

/// Replay of the last `r − 1` tokens after a full forward pass; matches
/// BPTT truncated to the last `r` transitions.
pub fn truncated_replay(
    seq: &Sequence,
    r: usize,
    state: &ModelState,
    costate: &Costate,
    spec: &NetSpec,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<ReplayOutcome> {
    RecoveryMode::new(ModeKind::RnnHlBptt).check_spec(spec)?;
    let tau = cfg.tau;
    let stream = truncated_replay_stream(seq, r, tau)?;
    let net = &spec.state;
    let shapes = net.param_shapes();
    let n = seq.len();
    let s = cfg.s.value();
    let theta_h = state.theta_h.clone();

    let mut store = StoredTrajectory::new(r + 1);
    let mut h = state.h.clone();
    let mut z = costate.z.clone();
    let mut omega_h = costate.omega_h.clone();
    let mut theta_next = theta_h.clone();
    let mut rows = Vec::with_capacity(stream.len());

    for (pos, item) in stream.iter().enumerate() {
        let mut row_loss = None;
        let mut row_y = None;
        if pos < n {
            // Forward phase: h_{pos+1} = f̂(u_pos, h_pos); weights frozen.
            let next = eval_transition(net, &shapes, &item.u, &h, &theta_h)?;
            store.push(h.clone(), Some(item.u.clone()));
            if let Some(target) = &item.y_hat {
                row_loss = Some(loss.value(&next, target)?);
            }
            row_y = Some(next.clone());
            h = next;
            if pos == n - 1 {
                store.push(h.clone(), None);
                z = Tensor::zeros_like(&z);
            }
        }
        if pos + 1 >= n {
            let j = pos + 1 - n;
            let q = n - j;
            let phi = cfg.phi.at(item.timestamp, tau);

            // z update from H′ = φ L(h_q, ŷ_{q−1}) + zᵀ ḣ(u_q, h_q).
            let h_q = store.state(q)?.clone();
            let mut tape = Tape::new();
            let hv = tape.leaf(h_q.clone())?;
            let mut terms = Vec::with_capacity(2);
            if let Some(target) = &item.y_hat {
                let tv = tape.constant(target.clone())?;
                let l = loss.record(&mut tape, hv, tv)?;
                terms.push(tape.scale(l, phi)?);
            }
            if q < n && z.data().iter().any(|&v| v != 0.0) {
                let uv = tape.constant(store.input(q)?.clone())?;
                let p = BoundParams::bind(&mut tape, &shapes, &theta_h)?;
                let f = net.record(&mut tape, uv, hv, &p.vars)?;
                let d = tape.sub(f, hv)?;
                let rate = tape.scale(d, 1.0 / tau)?;
                let zc = tape.constant(z.clone())?;
                terms.push(tape.matmul(zc, rate)?);
            }
            let dh = match terms.as_slice() {
                [] => Tensor::zeros_like(&h_q),
                [a] => tape.vjp(*a, &Tensor::scalar(1.0))?.wrt(hv),
                [a, b] => {
                    let hsum = tape.add(*a, *b)?;
                    tape.vjp(hsum, &Tensor::scalar(1.0))?.wrt(hv)
                }
                _ => unreachable!(),
            };
            z = z.axpy(tau, &dh.scale(-s).axpy(-cfg.eta, &z)?)?;

            // ω update through ḣ(u_{q−1}, h_{q−1}) with the fresh z.
            let h_prev = store.state(q - 1)?.clone();
            let mut tape = Tape::new();
            let uv = tape.constant(item.u.clone())?;
            let hv = tape.constant(h_prev.clone())?;
            let p = BoundParams::bind(&mut tape, &shapes, &theta_h)?;
            let f = net.record(&mut tape, uv, hv, &p.vars)?;
            let d = tape.sub(f, hv)?;
            let rate = tape.scale(d, 1.0 / tau)?;
            let dtheta = p.gather(&tape.vjp(rate, &z)?);
            omega_h = omega_h.axpy(tau, &dtheta.scale(-s).axpy(-cfg.eta, &omega_h)?)?;

            if pos + 1 == stream.len() {
                let beta_h = cfg.beta.slice(0, theta_h.len())?;
                theta_next = theta_h.axpy(-tau, &beta_h.hadamard(&omega_h)?)?;
            }
        }
        rows.push(RunRow {
            step: pos,
            time: item.timestamp,
            loss: row_loss,
            y: row_y,
            target: if pos < n { item.y_hat.clone() } else { None },
            theta: Tensor::concat(&[&theta_next, &state.theta_y])?,
        });
    }

    Ok(ReplayOutcome {
        state: ModelState { h, theta_h: theta_next, theta_y: state.theta_y.clone() },
        costate: Costate { z, omega_h: omega_h.clone(), omega_y: costate.omega_y.clone() },
        omega_h,
        rows,
        stored_peak: store.peak(),
    })
}

fn eval_transition(net: &StateNet, shapes: &[Vec<usize>], u: &Tensor, h: &Tensor, theta_h: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let uv = tape.constant(u.clone())?;
    let hv = tape.constant(h.clone())?;
    let p = BoundParams::bind(&mut tape, shapes, theta_h)?;
    let out = net.record(&mut tape, uv, hv, &p.vars)?;
    Ok(tape.value(out).clone())
}

/// Runs a whole stream under `mode`. Parity modes always use sequential
/// ordering and the configured `τ`; `Online` takes `τ` from the stream.
pub fn run_mode(
    mode: &RecoveryMode,
    stream: &Stream,
    spec: &NetSpec,
    init: &ModelState,
    cfg: &HlConfig,
    loss: LossKind,
) -> Result<RunRecord> {
    mode.check_spec(spec)?;
    cfg.validate()?;
    if cfg.beta.len() != spec.theta_len() {
        return Err(Error::Shape {
            op: "beta",
            shapes: alloc::vec![cfg.beta.shape().to_vec(), alloc::vec![spec.theta_len()]],
        });
    }
    match mode.kind {
        ModeKind::Online => {
            let mut learner =
                Learner::new(spec.clone(), cfg.clone(), loss, init.clone())?.with_spacing(Spacing::FromStream);
            let mut rows = Vec::with_capacity(stream.len());
            for (k, item) in stream.iter().enumerate() {
                if mode.omega_reset != OmegaReset::Never {
                    learner.costate = learner.costate.reset(CostatePart::Omega);
                }
                let out = learner.step(item)?;
                rows.push(row(k, item, &out));
            }
            Ok(RunRecord { rows, state: learner.state, costate: learner.costate })
        }
        ModeKind::FfOutput | ModeKind::RnnUnfold | ModeKind::FfState => {
            let cfg = sequential(cfg);
            let mut state = init.clone();
            let mut costate = Costate::zeros_like(init);
            let mut rows = Vec::with_capacity(stream.len());
            for (k, item) in stream.iter().enumerate() {
                if mode.omega_reset != OmegaReset::Never {
                    costate = costate.reset(CostatePart::Omega);
                }
                state.h = Tensor::zeros_like(&state.h);
                costate = costate.reset(CostatePart::Z);
                let out = if mode.kind == ModeKind::FfState {
                    ff_state_step(spec, &state, &costate, item, &cfg, loss)?
                } else {
                    hl_step(spec, &state, &costate, item, &StepContext::new(cfg.tau), &cfg, loss)?
                };
                rows.push(row(k, item, &out));
                state = out.state;
                costate = out.costate;
            }
            Ok(RunRecord { rows, state, costate })
        }
        ModeKind::RnnHlBptt | ModeKind::RnnTruncated { .. } => {
            let cfg = sequential(cfg);
            let mut state = init.clone();
            let mut costate = Costate::zeros_like(init);
            let mut rows = Vec::new();
            let mut time = 0.0;
            for seq in stream.sequences() {
                let r = match mode.kind {
                    ModeKind::RnnTruncated { window } => window,
                    _ => seq.len(),
                };
                if r == 0 || r > seq.len() {
                    return Err(Error::invalid("truncation window must satisfy 1 <= r <= n"));
                }
                if mode.omega_reset != OmegaReset::Never {
                    costate = costate.reset(CostatePart::Omega);
                }
                state.h = Tensor::zeros_like(&state.h);
                let cfg_seq = match mode.beta_schedule {
                    BetaSchedule::FinalStepOnly => cfg.clone(),
                    BetaSchedule::Constant => {
                        return Err(Error::IncompatibleMode {
                            mode: mode.kind.name(),
                            reason: "replay modes update weights on the final item only".into(),
                        })
                    }
                };
                let out = truncated_replay(&seq, r, &state, &costate, spec, &cfg_seq, loss)?;
                for mut rw in out.rows {
                    rw.step = rows.len();
                    rw.time = time;
                    time += cfg.tau;
                    rows.push(rw);
                }
                state = out.state;
                costate = out.costate;
            }
            Ok(RunRecord { rows, state, costate })
        }
    }
}
