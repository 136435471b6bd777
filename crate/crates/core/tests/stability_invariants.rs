use homeadam::numkit::RngStream;
use homeadam::optim::{step, HyperParams, OptState, OptimizerKind};
use homeadam::problems::{Generator, Problem, ProblemKind};
use homeadam::stability::{make_twin, run_twin, TwinRun};
use homeadam::Vec64;
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = OptimizerKind> {
    prop::sample::select(OptimizerKind::ALL.to_vec())
}

fn hp_for(kind: OptimizerKind, eta: f64, tau: f64) -> HyperParams {
    let mut hp = HyperParams::new(eta).with_eps(1e-6);
    if kind.is_decoupled() {
        hp = hp.with_lambda(1e-2);
    }
    if kind.is_home() {
        hp = hp.with_tau(tau);
    }
    hp
}

fn quadratic_twin(kind: OptimizerKind, hp: HyperParams, n: usize, i: usize, seed: u64, horizon: u64) -> TwinRun {
    let curv = Vec64::from_slice(&[0.5, 2.0, 1.0]).unwrap();
    let p = Problem::new(ProblemKind::Quadratic, 3).unwrap().with_curvature(curv).unwrap();
    let gen = Generator::new(p, seed).unwrap();
    let base = gen.dataset(n).unwrap();
    let perturbed = make_twin(&gen, &base, i, seed + 1).unwrap();
    TwinRun {
        problem: gen.problem().clone(),
        base,
        perturbed,
        replaced_index: i,
        index_stream: RngStream::new(seed, 7),
        kind,
        hp,
        horizon,
        theta0: gen.theta0(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn twins_agree_until_the_replaced_sample_is_drawn(
        kind in kind_strategy(),
        problem in prop::sample::select(vec![ProblemKind::Quadratic, ProblemKind::Logistic, ProblemKind::TinyMlp]),
        seed in 0u64..10_000,
        n in 2usize..30,
        eta in 1e-4f64..0.05,
        tau in 1e-6f64..2.0,
    ) {
        let i = (seed as usize) % n;
        let gen = Generator::new(Problem::new(problem, 4).unwrap(), seed).unwrap();
        let base = gen.dataset(n).unwrap();
        let cfg = TwinRun {
            problem: gen.problem().clone(),
            perturbed: make_twin(&gen, &base, i, seed ^ 0xabc).unwrap(),
            base,
            replaced_index: i,
            index_stream: RngStream::new(seed, 7),
            kind,
            hp: hp_for(kind, eta, tau),
            horizon: 40,
            theta0: gen.theta0(),
        };
        let trace = run_twin(&cfg).unwrap();
        let hit = trace.first_hit().unwrap_or(u64::MAX);
        for r in &trace.records {
            if r.t < hit {
                prop_assert_eq!(r.div_l2, 0.0);
                prop_assert_eq!(r.div_m, 0.0);
                prop_assert_eq!(r.div_v, 0.0);
            } else if r.t == hit {
                prop_assert!(r.div_m > 0.0);
            }
        }
    }

    #[test]
    fn momentum_gap_contracts_on_shared_samples(
        kind in kind_strategy(),
        seed in 0u64..10_000,
        eta in 1e-3f64..0.2,
        tau in 1e-3f64..2.0,
    ) {
        let cfg = quadratic_twin(kind, hp_for(kind, eta, tau), 8, 3, seed, 80);
        let b1 = cfg.hp.beta1;
        // Per-sample smoothness of the quadratic equals its largest curvature.
        let l_hat = 2.0;
        let trace = run_twin(&cfg).unwrap();
        for w in trace.records.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if cur.hit_replaced {
                continue;
            }
            let bound = b1 * prev.div_m + (1.0 - b1) * l_hat * prev.div_l2;
            prop_assert!(cur.div_m <= bound * (1.0 + 1e-12) + 1e-15, "t {}: {} > {}", cur.t, cur.div_m, bound);
        }
    }

    #[test]
    fn home_step_is_no_larger_than_its_multiplier_allows(
        g in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..30),
        tau in 1e-4f64..3.0,
        eta in 1e-3f64..1.0,
        elementwise in any::<bool>(),
    ) {
        let kind = if elementwise { OptimizerKind::HomeAdamEw } else { OptimizerKind::HomeAdam };
        let hp = HyperParams::new(eta).with_eps(1e-8).with_tau(tau);
        let cap = 1.0f64.max(1.0 / (tau + hp.eps));
        let mut state = OptState::new(4);
        let mut theta = Vec64::zeros(4);
        for gk in &g {
            let gk = Vec64::from_slice(gk).unwrap();
            let out = step(kind, &hp, &state, &theta, &gk).unwrap();
            let t = out.state.t as i32;
            let m_hat_norm = out.state.m.l2_norm() / (1.0 - hp.beta1.powi(t));
            prop_assert!(out.record.step_norm <= eta * m_hat_norm * cap * (1.0 + 1e-9));
            theta = out.theta;
            state = out.state;
        }
    }
}

#[test]
fn identical_datasets_never_diverge() {
    let cfg = quadratic_twin(OptimizerKind::HomeAdamW, hp_for(OptimizerKind::HomeAdamW, 0.05, 0.5), 6, 2, 4, 100);
    let cfg = TwinRun {
        perturbed: cfg.base.clone(),
        ..cfg
    };
    let trace = run_twin(&cfg).unwrap();
    assert!(trace.records.iter().all(|r| r.div_l2 == 0.0 && r.div_m == 0.0 && r.div_v == 0.0));
}
