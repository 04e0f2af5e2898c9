mod common;

use common::*;
use hamlearn::hamiltonian::{he_costate_rhs, StepContext};
use hamlearn::oracles::{map_params, sgd_momentum_step, unmap_params, BufferInit, MappedParams};
use hamlearn::reversible::{midpoint_forward, midpoint_reverse, MidpointChain};
use hamlearn::stream::{from_dataset_epochs, reverse_replay, truncated_replay_stream, StreamItem};
use hamlearn::{
    hl_step, Activation, Costate, Dense, HlConfig, InitialState, LossKind, NetSpec, OutputNet, Phi, ResidualMode,
    SgdConfig, Sign, Source, StateNet, Tensor,
};
use proptest::prelude::*;

fn item(u: Tensor, y: Option<Tensor>) -> StreamItem {
    StreamItem { u, y_hat: y, delta: true, timestamp: 0.0 }
}

/// Plain-mode net whose state derivative and output read only `u`.
fn input_only_net(inputs: usize, state: usize, outputs: usize) -> NetSpec {
    NetSpec::new(
        inputs,
        StateNet::Mlp { layers: vec![Dense::new(inputs, state, Activation::Tanh)] },
        OutputNet::Mlp { source: Source::Input, layers: vec![Dense::new(inputs, outputs, Activation::Identity)] },
    )
    .unwrap()
}

fn tau_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.25), Just(0.5), Just(1.0), Just(2.0), 0.01f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hl_step_preserves_shapes(
        seed in any::<u64>(),
        inputs in 1usize..5,
        hidden in 1usize..7,
        tau in tau_strategy(),
        eta in 0.0f64..2.0,
        recurrent in any::<bool>(),
        sequential in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let spec = if recurrent {
            NetSpec::new(
                inputs,
                StateNet::Recurrent { cell: hamlearn::RecurrentCell { inputs, hidden, activation: Activation::Tanh } },
                OutputNet::Mlp { source: Source::State, layers: vec![Dense::new(hidden, 2, Activation::Identity)] },
            )
            .unwrap()
        } else {
            output_mlp(inputs, &[hidden], 2, Activation::Tanh)
        };
        let state = spec.init_state(seed, InitialState::Uniform { scale: 0.5 });
        let mut costate = Costate::zeros_like(&state);
        costate.z = random_vec(&mut r, state.h.len(), 1.0);
        let mut cfg = HlConfig::uniform(tau, 0.1, spec.theta_len(), eta, Phi::constant(1.0)).unwrap();
        if sequential {
            cfg = cfg.with_ordering(hamlearn::Ordering::Sequential);
        }
        let it = item(random_vec(&mut r, inputs, 1.0), Some(Tensor::one_hot(1, 2).unwrap()));
        let out = hl_step(&spec, &state, &costate, &it, &StepContext::new(tau), &cfg, LossKind::SoftmaxCrossEntropy).unwrap();
        prop_assert!(out.state.same_shapes(&state));
        prop_assert!(out.costate.mirrors(&out.state));
        prop_assert_eq!(out.y.len(), 2);
        prop_assert!(out.loss.unwrap().is_finite());
    }

    #[test]
    fn costate_without_loss_contracts_by_one_minus_tau_eta(
        seed in any::<u64>(),
        tau_eta in prop_oneof![Just(0.0), Just(0.25), Just(0.5), Just(1.0)],
        tau in prop_oneof![Just(0.25), Just(0.5), Just(1.0), Just(2.0)],
        steps in 1usize..20,
    ) {
        let mut r = rng(seed);
        let spec = input_only_net(3, 4, 2);
        let mut state = spec.init_state(seed, InitialState::Uniform { scale: 1.0 });
        let mut costate = Costate::zeros_like(&state);
        costate.z = random_vec(&mut r, 4, 2.0);
        let eta = tau_eta / tau;
        let cfg = HlConfig::uniform(tau, 0.05, spec.theta_len(), eta, Phi::constant(1.0)).unwrap();
        for _ in 0..steps {
            let before = costate.z.norm();
            let it = item(random_vec(&mut r, 3, 1.0), None);
            let out = hl_step(&spec, &state, &costate, &it, &StepContext::new(tau), &cfg, LossKind::Mse).unwrap();
            let expected = (1.0 - tau_eta) * before;
            prop_assert!((out.costate.z.norm() - expected).abs() <= 1e-14 * before.max(1e-300));
            state = out.state;
            costate = out.costate;
        }
    }

    #[test]
    fn sign_flag_flips_the_gradient_part(seed in any::<u64>(), eta in 0.0f64..1.5) {
        let mut r = rng(seed);
        let spec = NetSpec::new(
            2,
            StateNet::Recurrent { cell: hamlearn::RecurrentCell { inputs: 2, hidden: 3, activation: Activation::Tanh } },
            OutputNet::Mlp { source: Source::State, layers: vec![Dense::new(3, 2, Activation::Identity)] },
        )
        .unwrap();
        let state = spec.init_state(seed, InitialState::Uniform { scale: 0.5 });
        let mut costate = Costate::zeros_like(&state);
        costate.z = random_vec(&mut r, 3, 1.0);
        costate.omega_h = random_vec(&mut r, spec.theta_h_len(), 1.0);
        let u = random_vec(&mut r, 2, 1.0);
        let y = random_vec(&mut r, 2, 1.0);
        let minus = HlConfig::uniform(1.0, 0.1, spec.theta_len(), eta, Phi::constant(1.0)).unwrap();
        let plus = minus.clone().with_sign(Sign::Plus);
        let a = he_costate_rhs(&spec, &state, &costate, &u, Some(&y), 0.0, &minus, LossKind::Mse).unwrap();
        let b = he_costate_rhs(&spec, &state, &costate, &u, Some(&y), 0.0, &plus, LossKind::Mse).unwrap();
        // rate + ηx isolates the gradient term, which must change sign.
        let grad_part = |rate: &Tensor, x: &Tensor| rate.axpy(eta, x).unwrap();
        let ga = grad_part(&a.z, &costate.z);
        let gb = grad_part(&b.z, &costate.z);
        prop_assert!(ga.add(&gb).unwrap().max_abs() <= 1e-14 * ga.max_abs().max(1.0));
        let wa = grad_part(&a.omega_h, &costate.omega_h);
        let wb = grad_part(&b.omega_h, &costate.omega_h);
        prop_assert!(wa.add(&wb).unwrap().max_abs() <= 1e-14 * wa.max_abs().max(1.0));
    }

    #[test]
    fn momentum_buffer_follows_its_recurrence(
        seed in any::<u64>(),
        gamma in 1e-4f64..0.5,
        mu in 0.0f64..=1.0,
        rho in 0.0f64..1.0,
        n in 1usize..8,
        steps in 1usize..10,
        zero_init in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let init = if zero_init { BufferInit::Zero } else { BufferInit::FirstGradient };
        let cfg = SgdConfig::new(gamma, mu, rho).unwrap().with_buffer_init(init);
        let mut theta = random_vec(&mut r, n, 1.0);
        let mut buffer: Option<Tensor> = None;
        for _ in 0..steps {
            let g = random_vec(&mut r, n, 1.0);
            let (t2, b2) = sgd_momentum_step(&theta, &g, buffer.as_ref(), &cfg).unwrap();
            for i in 0..n {
                let b_prev = buffer.as_ref().map(|b| b.data()[i]);
                let expected_b = match (b_prev, init) {
                    (Some(b), _) => mu * b + (1.0 - rho) * g.data()[i],
                    (None, BufferInit::FirstGradient) => g.data()[i],
                    (None, BufferInit::Zero) => (1.0 - rho) * g.data()[i],
                };
                prop_assert!((b2.data()[i] - expected_b).abs() <= 1e-15 * expected_b.abs().max(1.0));
                prop_assert!((t2.data()[i] - (theta.data()[i] - gamma * b2.data()[i])).abs() <= 1e-15);
            }
            theta = t2;
            buffer = Some(b2);
        }
    }

    #[test]
    fn param_mapping_round_trips(gamma in 1e-5f64..1.0, mu in 0.0f64..=1.0, rho in 0.0f64..0.999, tau in 1e-3f64..10.0) {
        let sgd = SgdConfig::new(gamma, mu, rho).unwrap();
        let m = map_params(&sgd, tau).unwrap();
        prop_assert!((m.beta * tau - gamma).abs() <= 1e-15 * gamma.max(1.0) * 4.0);
        prop_assert!(m.eta >= 0.0 && m.phi > 0.0);
        let back = unmap_params(&m).unwrap();
        prop_assert!((back.gamma - gamma).abs() <= 4.0 * f64::EPSILON * gamma);
        prop_assert!((back.mu - mu).abs() <= 4.0 * f64::EPSILON);
        prop_assert!((back.rho - rho).abs() <= 4.0 * f64::EPSILON);
        let again = map_params(&back, tau).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 8.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0 / tau);
        prop_assert!(close(again.beta, m.beta) && close(again.eta, m.eta) && close(again.phi, m.phi));
    }

    #[test]
    fn mapping_rejects_out_of_range(mu in prop_oneof![-2.0f64..-1e-9, 1.0000001f64..3.0], rho in prop_oneof![-2.0f64..-1e-9, 1.0f64..3.0]) {
        let bad_mu = SgdConfig { gamma: 0.1, mu, rho: 0.0, buffer_init: BufferInit::FirstGradient };
        prop_assert!(map_params(&bad_mu, 1.0).is_err());
        let bad_rho = SgdConfig { gamma: 0.1, mu: 0.0, rho, buffer_init: BufferInit::FirstGradient };
        prop_assert!(map_params(&bad_rho, 1.0).is_err());
        let negative_eta = MappedParams { beta: 0.1, eta: -1.0, phi: 1.0, tau: 1.0 };
        prop_assert!(unmap_params(&negative_eta).is_err());
    }

    #[test]
    fn reverse_replay_is_a_palindrome(seed in any::<u64>(), n in 1usize..15, tau in 0.01f64..2.0) {
        let mut r = rng(seed);
        let seq = random_sequence(&mut r, n, 2, 2);
        let replay = reverse_replay(&seq, tau).unwrap();
        prop_assert_eq!(replay.len(), 2 * n - 1);
        let items = replay.items();
        for k in 0..replay.len() {
            prop_assert_eq!(&items[k].u, &items[replay.len() - 1 - k].u);
        }
        prop_assert_eq!(&items[n - 1].u, &seq.tokens[n - 1]);
        prop_assert!(items[..replay.len() - 1].iter().all(|i| !i.delta) && items[replay.len() - 1].delta);
        prop_assert!(items.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
    }

    #[test]
    fn truncated_replay_has_n_plus_r_minus_one_items(seed in any::<u64>(), n in 1usize..12, r_frac in 0.0f64..1.0) {
        let mut g = rng(seed);
        let seq = random_sequence(&mut g, n, 2, 2);
        let r = 1 + ((n - 1) as f64 * r_frac) as usize;
        let s = truncated_replay_stream(&seq, r, 1.0).unwrap();
        prop_assert_eq!(s.len(), n + r - 1);
        for j in 1..r {
            prop_assert_eq!(&s.items()[n - 1 + j].u, &seq.tokens[n - 1 - j]);
        }
        prop_assert!(truncated_replay_stream(&seq, n + 1, 1.0).is_err());
    }

    #[test]
    fn dataset_stream_timestamps_increase(seed in any::<u64>(), n in 1usize..30, epochs in 0usize..4, tau in 1e-3f64..5.0) {
        let samples: Vec<(Tensor, Tensor)> =
            (0..n).map(|i| (Tensor::vector(vec![i as f64]), Tensor::one_hot(i % 2, 2).unwrap())).collect();
        let s = from_dataset_epochs(&samples, Some(seed), tau, epochs).unwrap();
        prop_assert_eq!(s.len(), n * epochs);
        prop_assert!(s.items().windows(2).all(|w| w[1].timestamp > w[0].timestamp));
        // Every epoch is a permutation of the table.
        for e in 0..epochs {
            let mut seen: Vec<usize> = s.items()[e * n..(e + 1) * n].iter().map(|i| i.u.data()[0] as usize).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn instantaneous_step_assigns_the_network_output(
        seed in any::<u64>(),
        tau in prop_oneof![Just(0.25), Just(0.5), Just(1.0), Just(2.0)],
        hidden in 1usize..8,
    ) {
        let mut r = rng(seed);
        let spec = rnn_spec(3, hidden, Activation::Tanh);
        let state = spec.init_state(seed, InitialState::Uniform { scale: 1.0 });
        let mut costate = Costate::zeros_like(&state);
        costate.z = random_vec(&mut r, hidden, 1.0);
        let cfg = HlConfig::uniform(tau, 0.1, spec.theta_len(), 0.3, Phi::constant(1.0)).unwrap();
        let u = random_vec(&mut r, 3, 1.0);
        let expected = spec.eval_state_raw(&u, &state).unwrap();
        let out = hl_step(&spec, &state, &costate, &item(u, Some(random_vec(&mut r, hidden, 1.0))), &StepContext::new(tau), &cfg, LossKind::Mse).unwrap();
        let same = out.state.h.data().iter().zip(expected.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same, "{:?} vs {:?}", out.state.h, expected);
    }

    #[test]
    fn midpoint_chain_round_trips(seed in any::<u64>(), depth in 1usize..=100, hidden in 1usize..6, tau in 0.01f64..0.2) {
        let mut r = rng(seed);
        let spec = NetSpec::new(
            2,
            StateNet::Recurrent { cell: hamlearn::RecurrentCell { inputs: 2, hidden, activation: Activation::Tanh } },
            OutputNet::Identity,
        )
        .unwrap();
        let theta = random_vec(&mut r, spec.theta_h_len(), 0.5);
        let u = random_vec(&mut r, 2, 1.0);
        let h0 = random_vec(&mut r, hidden, 1.0);
        let mut chain = MidpointChain::bootstrap(&spec, &u, &theta, h0.clone(), tau).unwrap();
        let mut history = vec![h0, chain.window().unwrap().1.clone()];
        for _ in 1..depth {
            chain = midpoint_forward(&chain, &u, &theta, &spec).unwrap();
            history.push(chain.window().unwrap().1.clone());
        }
        // Walk back with only the two-state window.
        let (a, b) = chain.window().unwrap();
        let (mut curr, mut next) = (a.clone(), b.clone());
        for k in (0..depth.saturating_sub(1)).rev() {
            let w = MidpointChain::seeded(curr.clone(), next.clone(), tau).unwrap();
            let prev = midpoint_reverse(&w, &u, &theta, &spec).unwrap();
            prop_assert!(prev.max_abs_diff(&history[k]).unwrap() <= 1e-10);
            next = curr;
            curr = prev;
        }
    }

    #[test]
    fn residual_mode_is_the_scaled_difference(seed in any::<u64>(), tau in 0.05f64..3.0) {
        let mut r = rng(seed);
        let spec = rnn_spec(2, 3, Activation::Tanh);
        let mut state = spec.init_state(seed, InitialState::Zeros);
        state.h = random_vec(&mut r, 3, 1.0);
        let u = random_vec(&mut r, 2, 1.0);
        let raw = spec.eval_state_raw(&u, &state).unwrap();
        let rate = spec.residual_state_fn(&u, &state, tau).unwrap();
        let expected = raw.sub(&state.h).unwrap().scale(1.0 / tau);
        prop_assert!(rate.max_abs_diff(&expected).unwrap() <= 1e-15 * expected.max_abs().max(1.0));
        let plain = NetSpec { residual_mode: ResidualMode::Plain, ..spec };
        prop_assert!(plain.residual_state_fn(&u, &state, tau).is_err());
    }
}
