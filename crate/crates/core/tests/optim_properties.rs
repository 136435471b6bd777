use homeadam::optim::{
    step, stepsize_function, update_moments, HyperParams, OptState, OptimizerKind, StepsizeMode,
};
use homeadam::problems::{Generator, Problem, ProblemKind};
use homeadam::numkit::{draw_index, RngStream};
use homeadam::Vec64;
use proptest::prelude::*;

/// Parameter iterates θ_0..θ_T on a logistic problem with a shared stream.
fn trajectory(kind: OptimizerKind, hp: &HyperParams, seed: u64, horizon: u64) -> (Vec<Vec64>, Vec<f64>) {
    let gen = Generator::new(Problem::new(ProblemKind::Logistic, 4).unwrap(), seed).unwrap();
    let data = gen.dataset(20).unwrap();
    let p = gen.problem();
    let stream = RngStream::new(seed, 99);
    let mut theta = gen.theta0();
    let mut state = OptState::new(p.dim());
    let mut thetas = vec![theta.clone()];
    let mut rhos = Vec::new();
    for t in 1..=horizon {
        let j = draw_index(&stream, t, data.n()).unwrap();
        let (_, g) = p.loss_grad(&theta, &data.samples()[j]).unwrap();
        let out = step(kind, hp, &state, &theta, &g).unwrap();
        rhos.push(out.record.rho_t);
        theta = out.theta;
        state = out.state;
        thetas.push(theta.clone());
    }
    (thetas, rhos)
}

fn bits(thetas: &[Vec64]) -> Vec<Vec<u64>> {
    thetas
        .iter()
        .map(|t| t.iter().map(|x| x.to_bits()).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn home_with_low_threshold_is_srf(seed in 0u64..1000, eta in 1e-3f64..0.1, b1 in 0.5f64..0.99, lam in prop_oneof![Just(0.0), 1e-4f64..1e-1]) {
        let (srf_kind, home_kind) = if lam > 0.0 {
            (OptimizerKind::AdamWSrf, OptimizerKind::HomeAdamW)
        } else {
            (OptimizerKind::AdamSrf, OptimizerKind::HomeAdam)
        };
        let hp = HyperParams::new(eta).with_betas(b1, 0.999).with_eps(1e-7).with_lambda(lam);
        let (srf, rhos) = trajectory(srf_kind, &hp, seed, 60);
        let tau = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
        let (home, _) = trajectory(home_kind, &hp.with_tau(tau), seed, 60);
        prop_assert_eq!(bits(&srf), bits(&home));
    }

    #[test]
    fn home_with_infinite_threshold_is_sgdm_bc(seed in 0u64..1000, eta in 1e-3f64..0.5, b1 in 0.5f64..0.99) {
        let hp = HyperParams::new(eta).with_betas(b1, 0.99);
        let (bc, _) = trajectory(OptimizerKind::SgdmBc, &hp, seed, 60);
        let (home, _) = trajectory(OptimizerKind::HomeAdam, &hp.with_tau(f64::INFINITY), seed, 60);
        prop_assert_eq!(bits(&bc), bits(&home));
    }

    #[test]
    fn elementwise_collapses_when_uniform(seed in 0u64..1000, eta in 1e-3f64..0.1, all_adaptive in any::<bool>()) {
        let hp = HyperParams::new(eta).with_eps(1e-7);
        let tau = if all_adaptive {
            let (_, rhos) = trajectory(OptimizerKind::AdamSrf, &hp, seed, 40);
            rhos.iter().cloned().fold(f64::INFINITY, f64::min)
        } else {
            f64::INFINITY
        };
        let hp = hp.with_tau(tau);
        let (ew, _) = trajectory(OptimizerKind::HomeAdamEw, &hp, seed, 40);
        let (global, _) = trajectory(OptimizerKind::HomeAdam, &hp, seed, 40);
        prop_assert_eq!(bits(&ew), bits(&global));
    }

    #[test]
    fn moments_stay_bounded(grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..40),
                            b1 in 0.01f64..0.99, b2 in 0.01f64..0.999) {
        let big_g = grads.iter().map(|g| Vec64::from_slice(g).unwrap().l2_norm()).fold(0.0, f64::max);
        let hp = HyperParams::new(0.1).with_betas(b1, b2);
        let mut state = OptState::new(3);
        for g in &grads {
            state = update_moments(&state, &Vec64::from_slice(g).unwrap(), &hp).unwrap().state;
            prop_assert!(state.m.l2_norm() <= big_g * (1.0 + 1e-12));
            prop_assert!(state.v.iter().all(|&x| x >= 0.0 && x <= big_g * big_g * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn decay_term_contracts(theta in prop::collection::vec(-10.0f64..10.0, 1..6), eta in 1e-3f64..1.0, frac in 0.01f64..0.99) {
        // With a zero gradient only the decay term acts: θ' = (1 − ηλ)θ.
        let lam = frac / eta;
        let theta = Vec64::from_slice(&theta).unwrap();
        let zero = Vec64::zeros(theta.dim());
        let state = OptState::new(theta.dim());
        let hp_w = HyperParams::new(eta).with_lambda(lam).with_eps(1e-3);
        let hp_a = HyperParams::new(eta).with_eps(1e-3);
        for (w, a) in [(OptimizerKind::AdamWSrf, OptimizerKind::AdamSrf), (OptimizerKind::AdamW, OptimizerKind::Adam)] {
            let tw = step(w, &hp_w, &state, &theta, &zero).unwrap().theta;
            let ta = step(a, &hp_a, &state, &theta, &zero).unwrap().theta;
            prop_assert!(tw.l2_norm() <= ta.l2_norm());
            prop_assert!((tw.l2_norm() - (1.0 - eta * lam) * theta.l2_norm()).abs() <= 1e-12 * theta.l2_norm().max(1.0));
        }
    }

    #[test]
    fn steps_are_deterministic(seed in 0u64..1000) {
        let hp = HyperParams::new(0.01).with_tau(1e-2);
        let (a, _) = trajectory(OptimizerKind::HomeAdamEw, &hp, seed, 20);
        let (b, _) = trajectory(OptimizerKind::HomeAdamEw, &hp, seed, 20);
        prop_assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn huge_threshold_matches_sgdm_bc() {
    let hp = HyperParams::new(0.05);
    let (bc, _) = trajectory(OptimizerKind::SgdmBc, &hp, 3, 100);
    let (home, _) = trajectory(OptimizerKind::HomeAdam, &hp.with_tau(1e9), 3, 100);
    assert_eq!(bits(&bc), bits(&home));
}

#[test]
fn srf_and_sqrt_modes_are_distinct() {
    // For v̂ ≠ 0, 1 the two maps differ; srf never takes a root.
    let v = Vec64::from_slice(&[4.0, 0.25]).unwrap();
    let srf = stepsize_function(&v, StepsizeMode::Srf, 1.0, 0.0).unwrap();
    let sqrt = stepsize_function(&v, StepsizeMode::Sqrt, 1.0, 0.0).unwrap();
    assert_eq!(srf.as_slice(), &[0.25, 4.0]);
    assert_eq!(sqrt.as_slice(), &[0.5, 2.0]);
    let home = stepsize_function(&v, StepsizeMode::Home, 0.25, 0.0).unwrap();
    assert_eq!(home, srf);

    // One srf step equals −η m̂ · R_srf(v̂) at t = 1.
    let hp = HyperParams::new(0.1).with_eps(1e-3);
    let g = Vec64::from_slice(&[2.0, 0.5]).unwrap();
    let out = step(OptimizerKind::AdamSrf, &hp, &OptState::new(2), &Vec64::zeros(2), &g).unwrap();
    let r = stepsize_function(&g.square(), StepsizeMode::Srf, 0.0, 1e-3).unwrap();
    for j in 0..2 {
        let expected = -0.1 * g[j] * r[j];
        assert!((out.theta[j] - expected).abs() <= 1e-15 * expected.abs());
    }
}
