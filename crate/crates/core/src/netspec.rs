//! State network `f^h` and output network `f^y`.
//!
//! A model is split into a neuron-state network, whose output is the time
//! derivative of the neuron state `h`, and a recurrence-free output network
//! mapping `(u, h)` to the prediction `y`. Learnable parameters are kept as
//! two flat vectors `θ^h` and `θ^y`; each dense layer stores its weight
//! matrix row-major (`outputs × inputs`) followed by its bias.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn record(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Fully connected layer `act(W x + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub bias: bool,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, activation, bias: true }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    fn param_shapes(&self, out: &mut Vec<Vec<usize>>) {
        out.push(vec![self.outputs, self.inputs]);
        if self.bias {
            out.push(vec![self.outputs]);
        }
    }

    fn blocks(&self) -> usize {
        1 + self.bias as usize
    }

    fn record(&self, tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
        let mut z = tape.matmul(params[0], x)?;
        if self.bias {
            z = tape.add(z, params[1])?;
        }
        self.activation.record(tape, z)
    }
}

/// Simple recurrent cell `act(W_x u + W_h h + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecurrentCell {
    pub inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl RecurrentCell {
    fn param_shapes(&self, out: &mut Vec<Vec<usize>>) {
        out.push(vec![self.hidden, self.inputs]);
        out.push(vec![self.hidden, self.hidden]);
        out.push(vec![self.hidden]);
    }

    fn record(&self, tape: &mut Tape, u: Var, h: Var, params: &[Var]) -> Result<Var> {
        let a = tape.matmul(params[0], u)?;
        let b = tape.matmul(params[1], h)?;
        let s = tape.add(a, b)?;
        let s = tape.add(s, params[2])?;
        self.activation.record(tape, s)
    }
}

/// Architecture of the neuron-state network.
///
/// In [`ResidualMode::Plain`] the network output is `ḣ` itself; in
/// [`ResidualMode::Instantaneous`] it is the next state `f̂^h` and
/// `ḣ = (f̂^h − h) / τ`.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum StateNet {
    /// No neuron state: `h` has length zero.
    Empty,
    /// `f̂(u, h) = h`.
    Identity { dim: usize },
    /// Delay-free feed-forward stack on `u`; the state is the last layer.
    Mlp { layers: Vec<Dense> },
    /// Layer `k` reads the state slot of layer `k − 1` (layer 0 reads `u`);
    /// the state is the concatenation of every layer's output.
    Pipelined { layers: Vec<Dense> },
    /// Single recurrent cell; the state is its hidden vector.
    Recurrent { cell: RecurrentCell },
}

impl StateNet {
    pub fn state_dim(&self) -> usize {
        match self {
            StateNet::Empty => 0,
            StateNet::Identity { dim } => *dim,
            StateNet::Mlp { layers } => layers.last().map_or(0, |l| l.outputs),
            StateNet::Pipelined { layers } => layers.iter().map(|l| l.outputs).sum(),
            StateNet::Recurrent { cell } => cell.hidden,
        }
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        match self {
            StateNet::Empty | StateNet::Identity { .. } => {}
            StateNet::Mlp { layers } | StateNet::Pipelined { layers } => {
                layers.iter().for_each(|l| l.param_shapes(&mut out))
            }
            StateNet::Recurrent { cell } => cell.param_shapes(&mut out),
        }
        out
    }

    /// Index ranges of each layer's slot inside `h` (pipelined nets only).
    pub fn layer_slots(&self) -> Vec<(usize, usize)> {
        match self {
            StateNet::Pipelined { layers } => {
                let mut start = 0;
                layers
                    .iter()
                    .map(|l| {
                        let slot = (start, l.outputs);
                        start += l.outputs;
                        slot
                    })
                    .collect()
            }
            _ => vec![(0, self.state_dim())],
        }
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        let chain = |layers: &[Dense], first_in: usize| -> Result<()> {
            if layers.is_empty() {
                return Err(Error::invalid("layer stack is empty"));
            }
            let mut expect = first_in;
            for l in layers {
                if l.inputs != expect || l.outputs == 0 {
                    return Err(Error::invalid("layer sizes do not chain"));
                }
                expect = l.outputs;
            }
            Ok(())
        };
        match self {
            StateNet::Empty => Ok(()),
            StateNet::Identity { dim } if *dim > 0 => Ok(()),
            StateNet::Identity { .. } => Err(Error::invalid("identity state net needs dim > 0")),
            StateNet::Mlp { layers } | StateNet::Pipelined { layers } => chain(layers, input_dim),
            StateNet::Recurrent { cell } => {
                if cell.inputs != input_dim || cell.hidden == 0 {
                    Err(Error::invalid("recurrent cell does not match the input size"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Records the raw network output for input `u` and state `h`.
    pub fn record(&self, tape: &mut Tape, u: Var, h: Var, params: &[Var]) -> Result<Var> {
        match self {
            StateNet::Empty => tape.identity(h),
            StateNet::Identity { .. } => tape.identity(h),
            StateNet::Mlp { layers } => record_stack(layers, tape, u, params),
            StateNet::Pipelined { layers } => {
                let mut outs = Vec::with_capacity(layers.len());
                let mut p = 0;
                let mut start = 0;
                let mut prev_slot: Option<(usize, usize)> = None;
                for l in layers {
                    let x = match prev_slot {
                        None => u,
                        Some((s, len)) => tape.slice(h, s, len)?,
                    };
                    outs.push(l.record(tape, x, &params[p..p + l.blocks()])?);
                    p += l.blocks();
                    prev_slot = Some((start, l.outputs));
                    start += l.outputs;
                }
                tape.concat(&outs)
            }
            StateNet::Recurrent { cell } => cell.record(tape, u, h, params),
        }
    }
}

fn record_stack(layers: &[Dense], tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
    let mut x = x;
    let mut p = 0;
    for l in layers {
        x = l.record(tape, x, &params[p..p + l.blocks()])?;
        p += l.blocks();
    }
    Ok(x)
}

/// Which signal feeds an output MLP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Source {
    Input,
    State,
}

/// Architecture of the (recurrence-free) output network.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum OutputNet {
    /// `y = h`.
    Identity,
    /// Feed-forward stack on `u` or on `h`.
    Mlp { source: Source, layers: Vec<Dense> },
    /// A recurrent cell unfolded over `steps` tokens packed into `u`,
    /// followed by an optional head on the final hidden state.
    Unrolled { cell: RecurrentCell, steps: usize, head: Vec<Dense> },
}

impl OutputNet {
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        match self {
            OutputNet::Identity => {}
            OutputNet::Mlp { layers, .. } => layers.iter().for_each(|l| l.param_shapes(&mut out)),
            OutputNet::Unrolled { cell, head, .. } => {
                cell.param_shapes(&mut out);
                head.iter().for_each(|l| l.param_shapes(&mut out));
            }
        }
        out
    }

    pub fn output_dim(&self, state_dim: usize) -> usize {
        match self {
            OutputNet::Identity => state_dim,
            OutputNet::Mlp { layers, .. } => layers.last().map_or(0, |l| l.outputs),
            OutputNet::Unrolled { cell, head, .. } => head.last().map_or(cell.hidden, |l| l.outputs),
        }
    }

    fn validate(&self, input_dim: usize, state_dim: usize) -> Result<()> {
        let check_chain = |layers: &[Dense], mut expect: usize| -> Result<()> {
            for l in layers {
                if l.inputs != expect || l.outputs == 0 {
                    return Err(Error::invalid("output layer sizes do not chain"));
                }
                expect = l.outputs;
            }
            Ok(())
        };
        match self {
            OutputNet::Identity if state_dim == 0 => Err(Error::invalid("identity output needs a non-empty state")),
            OutputNet::Identity => Ok(()),
            OutputNet::Mlp { source, layers } => {
                if layers.is_empty() {
                    return Err(Error::invalid("output stack is empty"));
                }
                let first = match source {
                    Source::Input => input_dim,
                    Source::State => state_dim,
                };
                check_chain(layers, first)
            }
            OutputNet::Unrolled { cell, steps, head } => {
                if *steps == 0 || cell.inputs * steps != input_dim || cell.hidden == 0 {
                    return Err(Error::invalid("unrolled cell does not tile the input"));
                }
                check_chain(head, cell.hidden)
            }
        }
    }

    pub fn record(&self, tape: &mut Tape, u: Var, h: Var, params: &[Var]) -> Result<Var> {
        match self {
            OutputNet::Identity => tape.identity(h),
            OutputNet::Mlp { source, layers } => {
                let x = match source {
                    Source::Input => u,
                    Source::State => h,
                };
                record_stack(layers, tape, x, params)
            }
            OutputNet::Unrolled { cell, steps, head } => {
                let mut hid = tape.constant(Tensor::zeros(&[cell.hidden]))?;
                for k in 0..*steps {
                    let tok = tape.slice(u, k * cell.inputs, cell.inputs)?;
                    hid = cell.record(tape, tok, hid, &params[..3])?;
                }
                record_stack(head, tape, hid, &params[3..])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResidualMode {
    /// The state network returns `ḣ` directly.
    #[default]
    Plain,
    /// `ḣ = τ^{-1}(−h + f̂^h)`, so one Euler step lands on `f̂^h`.
    Instantaneous,
}

/// Full model description.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetSpec {
    pub input_dim: usize,
    pub state: StateNet,
    pub output: OutputNet,
    #[cfg_attr(feature = "serde", serde(default))]
    pub residual_mode: ResidualMode,
    /// Disjoint neuron index sets covering the whole state, one per group.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub groups: Option<Vec<Vec<usize>>>,
}

/// Extended state `[h, θ^h, θ^y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub h: Tensor,
    pub theta_h: Tensor,
    pub theta_y: Tensor,
}

impl ModelState {
    /// `θ = [θ^h, θ^y]`.
    pub fn theta(&self) -> Tensor {
        Tensor::concat(&[&self.theta_h, &self.theta_y]).expect("flat parameters")
    }

    /// Replaces `θ` from its concatenated form, keeping the partition.
    pub fn set_theta(&mut self, theta: &Tensor) -> Result<()> {
        let nh = self.theta_h.len();
        if theta.len() != nh + self.theta_y.len() {
            return Err(Error::Shape {
                op: "set_theta",
                shapes: vec![theta.shape().to_vec(), vec![nh + self.theta_y.len()]],
            });
        }
        self.theta_h = theta.slice(0, nh)?;
        self.theta_y = theta.slice(nh, self.theta_y.len())?;
        Ok(())
    }

    pub fn same_shapes(&self, other: &ModelState) -> bool {
        self.h.same_shape(&other.h)
            && self.theta_h.same_shape(&other.theta_h)
            && self.theta_y.same_shape(&other.theta_y)
    }
}

/// How to draw the initial neuron state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialState {
    Zeros,
    /// Uniform in `[-scale, scale]`.
    Uniform {
        scale: f64,
    },
}

/// Tape leaves for one flat parameter vector, one leaf per weight block.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

impl BoundParams {
    /// Splits `flat` into blocks of `shapes` and records each as a leaf.
    pub fn bind(tape: &mut Tape, shapes: &[Vec<usize>], flat: &Tensor) -> Result<Self> {
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if total != flat.len() {
            return Err(Error::Shape { op: "bind_params", shapes: vec![flat.shape().to_vec(), vec![total]] });
        }
        let mut vars = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for s in shapes {
            let n: usize = s.iter().product();
            let block = Tensor::new(s.clone(), flat.data()[offset..offset + n].to_vec())?;
            vars.push(tape.leaf(block)?);
            offset += n;
        }
        Ok(Self { vars })
    }

    /// Flat gradient in the same layout as the bound vector.
    pub fn gather(&self, grads: &crate::tape::Gradients) -> Tensor {
        let mut data = Vec::new();
        for &v in &self.vars {
            data.extend_from_slice(grads.wrt(v).data());
        }
        Tensor::vector(data)
    }
}

/// Tape handles for one joint evaluation of both networks.
#[derive(Clone, Debug)]
pub struct Recorded {
    pub u: Var,
    pub h: Var,
    pub theta_h: BoundParams,
    pub theta_y: BoundParams,
    /// `ḣ`.
    pub rate: Var,
    /// `f̂^h(u, h)` when the residual mode is instantaneous.
    pub next: Option<Var>,
    pub y: Var,
}

impl NetSpec {
    pub fn new(input_dim: usize, state: StateNet, output: OutputNet) -> Result<Self> {
        let spec = Self { input_dim, state, output, residual_mode: ResidualMode::Plain, groups: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_residual(mut self, mode: ResidualMode) -> Self {
        self.residual_mode = mode;
        self
    }

    pub fn with_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        self.groups = Some(groups);
        self.validate()?;
        Ok(self)
    }

    /// One group per pipelined layer.
    pub fn with_layer_groups(self) -> Result<Self> {
        let groups = self.state.layer_slots().into_iter().map(|(s, n)| (s..s + n).collect()).collect();
        self.with_groups(groups)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        self.state.validate(self.input_dim)?;
        self.output.validate(self.input_dim, self.state_dim())?;
        if let Some(groups) = &self.groups {
            let m = self.state_dim();
            let mut seen = vec![false; m];
            for g in groups {
                if g.is_empty() {
                    return Err(Error::invalid("empty neuron group"));
                }
                for &i in g {
                    if i >= m || seen[i] {
                        return Err(Error::invalid("groups must cover every state neuron exactly once"));
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid("groups must cover every state neuron exactly once"));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state.state_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim(self.state_dim())
    }

    pub fn theta_h_len(&self) -> usize {
        self.state.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn theta_y_len(&self) -> usize {
        self.output.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn theta_len(&self) -> usize {
        self.theta_h_len() + self.theta_y_len()
    }

    /// Parameters drawn uniformly in `±1/sqrt(fan_in)` per block (biases use
    /// the fan-in of their layer), state drawn according to `init`.
    pub fn init_state(&self, seed: u64, init: InitialState) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shapes: Vec<Vec<usize>>| {
            let mut data = Vec::new();
            let mut fan_in = 1;
            for s in shapes {
                if s.len() == 2 {
                    fan_in = s[1];
                }
                let bound = 1.0 / math::sqrt(fan_in as f64);
                let n: usize = s.iter().product();
                data.extend((0..n).map(|_| rng.random_range(-bound..bound)));
            }
            Tensor::vector(data)
        };
        let theta_h = draw(self.state.param_shapes());
        let theta_y = draw(self.output.param_shapes());
        let m = self.state_dim();
        let h = match init {
            InitialState::Zeros => Tensor::zeros(&[m]),
            InitialState::Uniform { scale } => {
                Tensor::vector((0..m).map(|_| rng.random_range(-scale..=scale)).collect())
            }
        };
        ModelState { h, theta_h, theta_y }
    }

    /// Zero-initialised state with the given parameters.
    pub fn state_with(&self, theta_h: Tensor, theta_y: Tensor) -> Result<ModelState> {
        if theta_h.len() != self.theta_h_len() || theta_y.len() != self.theta_y_len() {
            return Err(Error::Shape {
                op: "state_with",
                shapes: vec![vec![theta_h.len(), theta_y.len()], vec![self.theta_h_len(), self.theta_y_len()]],
            });
        }
        Ok(ModelState { h: Tensor::zeros(&[self.state_dim()]), theta_h: theta_h.flatten(), theta_y: theta_y.flatten() })
    }

    fn check_inputs(&self, u: &Tensor, state: &ModelState) -> Result<()> {
        let ok = u.shape() == [self.input_dim]
            && state.h.shape() == [self.state_dim()]
            && state.theta_h.len() == self.theta_h_len()
            && state.theta_y.len() == self.theta_y_len();
        if ok {
            Ok(())
        } else {
            Err(Error::Shape {
                op: "netspec",
                shapes: vec![
                    u.shape().to_vec(),
                    state.h.shape().to_vec(),
                    vec![state.theta_h.len(), state.theta_y.len()],
                ],
            })
        }
    }

    /// Records `ḣ` (and `f̂^h` in instantaneous mode) and `y` on `tape`.
    pub fn record(&self, tape: &mut Tape, u: &Tensor, state: &ModelState, tau: f64) -> Result<Recorded> {
        self.check_inputs(u, state)?;
        let uv = tape.constant(u.clone())?;
        let hv = tape.leaf(state.h.clone())?;
        let th = BoundParams::bind(tape, &self.state.param_shapes(), &state.theta_h)?;
        let ty = BoundParams::bind(tape, &self.output.param_shapes(), &state.theta_y)?;
        let raw = self.state.record(tape, uv, hv, &th.vars)?;
        let (rate, next) = match self.residual_mode {
            ResidualMode::Plain => (raw, None),
            ResidualMode::Instantaneous => (self.record_residual(tape, raw, hv, tau)?, Some(raw)),
        };
        let y = self.output.record(tape, uv, hv, &ty.vars)?;
        Ok(Recorded { u: uv, h: hv, theta_h: th, theta_y: ty, rate, next, y })
    }

    fn record_residual(&self, tape: &mut Tape, next: Var, h: Var, tau: f64) -> Result<Var> {
        check_tau(tau)?;
        let diff = tape.sub(next, h)?;
        tape.scale(diff, 1.0 / tau)
    }

    /// `ḣ = f^h(u, h, θ^h)` (in instantaneous mode, the residual form).
    pub fn eval_state_net(&self, u: &Tensor, state: &ModelState, tau: f64) -> Result<Tensor> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, u, state, tau)?;
        Ok(tape.value(rec.rate).clone())
    }

    /// Raw state-network output `f̂^h(u, h, θ^h)`.
    pub fn eval_state_raw(&self, u: &Tensor, state: &ModelState) -> Result<Tensor> {
        self.check_inputs(u, state)?;
        let mut tape = Tape::new();
        let uv = tape.constant(u.clone())?;
        let hv = tape.constant(state.h.clone())?;
        let th = BoundParams::bind(&mut tape, &self.state.param_shapes(), &state.theta_h)?;
        let out = self.state.record(&mut tape, uv, hv, &th.vars)?;
        Ok(tape.value(out).clone())
    }

    /// `y = f^y(u, h, θ^y)`; never touches `state`.
    pub fn eval_output_net(&self, u: &Tensor, state: &ModelState) -> Result<Tensor> {
        self.check_inputs(u, state)?;
        let mut tape = Tape::new();
        let uv = tape.constant(u.clone())?;
        let hv = tape.constant(state.h.clone())?;
        let ty = BoundParams::bind(&mut tape, &self.output.param_shapes(), &state.theta_y)?;
        let y = self.output.record(&mut tape, uv, hv, &ty.vars)?;
        Ok(tape.value(y).clone())
    }

    /// `τ^{-1}(−h + f̂^h(u, h, θ^h))`.
    pub fn residual_state_fn(&self, u: &Tensor, state: &ModelState, tau: f64) -> Result<Tensor> {
        check_tau(tau)?;
        if self.residual_mode != ResidualMode::Instantaneous {
            return Err(Error::invalid("residual_state_fn needs the instantaneous residual mode"));
        }
        self.eval_state_net(u, state, tau)
    }

    /// Indicator vector of group `step_index mod ν`.
    pub fn group_mask(&self, step_index: usize) -> Result<Tensor> {
        let groups = self.groups.as_ref().ok_or_else(|| Error::invalid("no group partition defined"))?;
        let active = &groups[step_index % groups.len()];
        let mut mask = vec![0.0; self.state_dim()];
        for &i in active {
            mask[i] = 1.0;
        }
        Ok(Tensor::vector(mask))
    }

    pub fn group_count(&self) -> Option<usize> {
        self.groups.as_ref().map(|g| g.len())
    }

    /// `1_{κ mod ν} ⊙ τ^{-1}(−h + f̂^h(u, h, θ^h))`.
    pub fn masked_group_update(&self, u: &Tensor, state: &ModelState, step_index: usize, tau: f64) -> Result<Tensor> {
        let mask = self.group_mask(step_index)?;
        let rate = self.residual_state_fn(u, state, tau)?;
        mask.hadamard(&rate)
    }

    /// Next state under the masked update: active coordinates take the
    /// value of `f̂^h`, the rest are kept.
    pub fn masked_group_next(&self, u: &Tensor, state: &ModelState, step_index: usize) -> Result<Tensor> {
        let mask = self.group_mask(step_index)?;
        let next = self.eval_state_raw(u, state)?;
        let data = mask
            .data()
            .iter()
            .zip(next.data().iter().zip(state.h.data()))
            .map(|(&m, (&n, &h))| if m != 0.0 { n } else { h })
            .collect();
        Ok(Tensor::vector(data))
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("tau must be positive and finite"))
    }
}
