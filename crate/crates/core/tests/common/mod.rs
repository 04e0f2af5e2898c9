#![allow(dead_code)]

use hamlearn::stream::Sequence;
use hamlearn::{Activation, Dense, NetSpec, OutputNet, RecurrentCell, ResidualMode, Source, StateNet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn rnn_spec(inputs: usize, hidden: usize, activation: Activation) -> NetSpec {
    NetSpec::new(
        inputs,
        StateNet::Recurrent { cell: RecurrentCell { inputs, hidden, activation } },
        OutputNet::Identity,
    )
    .unwrap()
    .with_residual(ResidualMode::Instantaneous)
}

pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize, inputs: usize, hidden: usize) -> Sequence {
    let tokens = (0..len).map(|_| random_vec(rng, inputs, 1.0)).collect();
    let targets =
        (0..len).map(|k| (k + 1 == len || rng.random_bool(0.7)).then(|| random_vec(rng, hidden, 0.8))).collect();
    Sequence::new(tokens, targets).unwrap()
}

/// Feed-forward classifier on the input with an empty neuron state.
pub fn output_mlp(inputs: usize, hidden: &[usize], outputs: usize, act: Activation) -> NetSpec {
    let mut layers = Vec::new();
    let mut prev = inputs;
    for &h in hidden {
        layers.push(Dense::new(prev, h, act));
        prev = h;
    }
    layers.push(Dense::new(prev, outputs, Activation::Identity));
    NetSpec::new(inputs, StateNet::Empty, OutputNet::Mlp { source: Source::Input, layers }).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let d = a.sub(b).unwrap().norm();
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}
