use genctl::cartpole::{Action, CartPole, CartState, EnvConfig, TerminalReason};
use proptest::prelude::*;

mod common;
use common::reference_step;

fn scripted(i: usize) -> bool {
    // Deterministic, irregular push pattern.
    (i * 7 + i / 3) % 5 < 2 || i % 11 == 0
}

#[test]
fn matches_reference_integrator_for_100_steps() {
    let cfg = EnvConfig::default();
    for start in [
        [0.0, 0.0, 0.0, 0.0],
        [0.03, -0.02, 0.04, -0.01],
        [-1.0, 0.5, -0.1, 0.3],
    ] {
        let mut env = CartPole::new(cfg);
        env.reset_to(CartState::from_array(start));
        let mut reference = start;
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let action = if scripted(i) { Action::Right } else { Action::Left };
            let got = env.step(action).unwrap().state.to_array();
            reference = reference_step(&cfg, reference, scripted(i));
            for k in 0..4 {
                worst = worst.max((got[k] - reference[k]).abs());
            }
        }
        assert!(worst < 1e-9, "start {start:?}: max deviation {worst:e}");
    }
}

#[test]
fn termination_reasons() {
    let cfg = EnvConfig::default();
    let mut env = CartPole::new(cfg);
    env.reset_to(CartState::new(0.0, 0.0, 0.25, 0.0));
    assert_eq!(env.step(Action::Left).unwrap().terminal, Some(TerminalReason::Angle));

    env.reset_to(CartState::new(2.45, 0.0, 0.0, 0.0));
    assert_eq!(env.step(Action::Left).unwrap().terminal, Some(TerminalReason::Position));

    let short = EnvConfig {
        max_steps: 3,
        ..cfg
    };
    let mut env = CartPole::new(short);
    env.reset_to(CartState::default());
    let reasons: Vec<_> = (0..3).map(|i| env.step(if i % 2 == 0 { Action::Left } else { Action::Right }).unwrap().terminal).collect();
    assert_eq!(reasons, vec![None, None, Some(TerminalReason::Cap)]);
    assert!(!TerminalReason::Cap.is_failure());
}

#[test]
fn non_finite_state_is_rejected() {
    let cfg = EnvConfig::default();
    assert!(cfg.transition(CartState::new(f64::NAN, 0.0, 0.0, 0.0), Action::Left).is_err());
}

proptest! {
    #[test]
    fn mirror_symmetry(
        x in -2.0..2.0f64, v in -2.0..2.0f64, th in -0.2..0.2f64, om in -2.0..2.0f64,
        right in any::<bool>(),
    ) {
        let cfg = EnvConfig::default();
        let s = CartState::new(x, v, th, om);
        let a = if right { Action::Right } else { Action::Left };
        let direct = cfg.transition(s, a).unwrap();
        let mirrored = cfg.transition(-s, a.mirrored()).unwrap();
        for (p, q) in direct.to_array().iter().zip((-mirrored).to_array()) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn transition_is_a_pure_function(
        x in -2.0..2.0f64, th in -0.2..0.2f64, right in any::<bool>(),
    ) {
        let cfg = EnvConfig::default();
        let s = CartState::new(x, 0.1, th, -0.3);
        let a = if right { Action::Right } else { Action::Left };
        prop_assert_eq!(cfg.transition(s, a).unwrap(), cfg.transition(s, a).unwrap());
    }

    #[test]
    fn initial_states_lie_in_range(seed in any::<u64>()) {
        use rand::SeedableRng;
        let cfg = EnvConfig::default();
        let s = cfg.sample_initial(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        for c in s.to_array() {
            prop_assert!(c.abs() <= cfg.init_range);
        }
    }
}
