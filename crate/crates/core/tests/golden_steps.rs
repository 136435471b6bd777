//! Optimizer updates against values frozen from `oracle/golden_steps.py`.

use homeadam::optim::{step, HyperParams, OptState, OptimizerKind};
use homeadam::Vec64;

const GOLDEN: &str = include_str!("data/golden_steps.txt");

struct Case {
    kind: OptimizerKind,
    hp: HyperParams,
    grads: Vec<Vec64>,
    expected: Vec<f64>,
}

fn floats(s: &str) -> Vec<f64> {
    s.split(',').map(|x| x.parse().unwrap()).collect()
}

fn cases() -> Vec<Case> {
    GOLDEN
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let parts: Vec<&str> = line.split(';').collect();
            let kind: OptimizerKind = parts[0].parse().unwrap();
            let fields: Vec<&str> = parts[1].split(',').collect();
            let num = |k: usize| fields[k].parse::<f64>().unwrap();
            let mut hp = HyperParams::new(num(0))
                .with_betas(num(1), num(2))
                .with_eps(num(3))
                .with_lambda(num(4));
            if fields[5] != "none" {
                hp = hp.with_tau(num(5));
            }
            let grads = parts[2]
                .split('|')
                .map(|g| Vec64::new(floats(g)).unwrap())
                .collect();
            Case {
                kind,
                hp,
                grads,
                expected: floats(parts[3]),
            }
        })
        .collect()
}

fn run(case: &Case) -> Vec64 {
    let d = case.grads[0].dim();
    let mut theta = Vec64::zeros(d);
    let mut state = OptState::new(d);
    for g in &case.grads {
        let out = step(case.kind, &case.hp, &state, &theta, g).unwrap();
        theta = out.theta;
        state = out.state;
    }
    theta
}

#[test]
fn every_kind_matches_reference() {
    let cases = cases();
    for kind in OptimizerKind::ALL {
        let n = cases.iter().filter(|c| c.kind == kind).count();
        assert!(n >= 5, "{kind}: only {n} cases");
    }
    for case in &cases {
        let got = run(case);
        for (j, (&a, &b)) in got.iter().zip(&case.expected).enumerate() {
            let tol = 1e-15 * b.abs();
            assert!(
                (a - b).abs() <= tol,
                "{} coordinate {j}: got {a:e}, reference {b:e}",
                case.kind
            );
        }
    }
}

#[test]
fn first_step_moments_are_exact() {
    for kind in OptimizerKind::ALL {
        let mut hp = HyperParams::new(1e-2).with_betas(0.9, 0.99);
        if kind.is_decoupled() || kind == OptimizerKind::SgdmBc {
            hp = hp.with_lambda(1e-3);
        }
        if kind.is_home() {
            hp = hp.with_tau(0.5);
        }
        let g = Vec64::from_slice(&[0.3, -1.7, 2.5]).unwrap();
        let m = homeadam::optim::update_moments(&OptState::new(3), &g, &hp).unwrap();
        assert_eq!(m.m_hat, g, "{kind}");
        assert_eq!(m.v_hat, g.square(), "{kind}");
    }
}
