//! Named hyperparameter regimes from the image-classification and
//! language-modelling experiments.

use super::{HyperParams, OptimizerKind};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = [
    "cifar_vgg16",
    "tinyimagenet_resnet34",
    "wikitext2_tf8",
    "wikitext103_tf24",
];

/// Switch threshold used for Home variants when a regime does not state one.
const DEFAULT_TAU: f64 = 1.0;

struct Regime {
    sgd_eta: f64,
    adam_beta2: f64,
    adamw_lambda: f64,
    srf_eps: f64,
    srf_beta2: f64,
    srf_lambda: f64,
    batch: usize,
}

fn regime(name: &str) -> Result<Regime> {
    let r = match name {
        "cifar_vgg16" => Regime {
            sgd_eta: 1e-4,
            adam_beta2: 0.99,
            adamw_lambda: 1e-5,
            srf_eps: 1e-7,
            srf_beta2: 0.99,
            srf_lambda: 1e-5,
            batch: 64,
        },
        "tinyimagenet_resnet34" => Regime {
            sgd_eta: 4e-4,
            adam_beta2: 0.99,
            adamw_lambda: 1e-4,
            srf_eps: 1e-7,
            srf_beta2: 0.99,
            srf_lambda: 1e-4,
            batch: 64,
        },
        "wikitext2_tf8" => Regime {
            sgd_eta: 2e-5,
            adam_beta2: 0.999,
            adamw_lambda: 1e-4,
            srf_eps: 1e-5,
            srf_beta2: 0.999,
            srf_lambda: 1e-4,
            batch: 32,
        },
        "wikitext103_tf24" => Regime {
            sgd_eta: 2e-5,
            adam_beta2: 0.999,
            adamw_lambda: 1e-4,
            srf_eps: 1e-5,
            srf_beta2: 0.999,
            srf_lambda: 1e-4,
            batch: 10,
        },
        _ => {
            return Err(Error::UnknownName {
                what: "preset",
                name: name.to_string(),
                valid: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(r)
}

/// Hyperparameters for `kind` under the named regime.
///
/// SGD-type kinds only use `eta` and `beta1`; the remaining fields carry
/// neutral placeholders. Home variants get `tau = 1` unless overridden.
pub fn preset(name: &str, kind: OptimizerKind) -> Result<HyperParams> {
    let r = regime(name)?;
    use OptimizerKind::*;
    let hp = match kind {
        Sgd | Sgdm | SgdmBc => HyperParams::new(r.sgd_eta).with_betas(0.9, 0.999),
        Adam => HyperParams::new(1e-6).with_betas(0.9, r.adam_beta2).with_eps(1e-8),
        AdamW => HyperParams::new(1e-6)
            .with_betas(0.9, r.adam_beta2)
            .with_eps(1e-8)
            .with_lambda(r.adamw_lambda),
        AdamSrf | HomeAdam | HomeAdamEw | AdamWSrf | HomeAdamW | HomeAdamWEw => {
            let mut hp = HyperParams::new(1e-6)
                .with_betas(0.9, r.srf_beta2)
                .with_eps(r.srf_eps);
            if kind.is_decoupled() {
                hp = hp.with_lambda(r.srf_lambda);
            }
            if kind.is_home() {
                hp = hp.with_tau(DEFAULT_TAU);
            }
            hp
        }
    };
    hp.validate_for(kind)?;
    Ok(hp)
}

/// Minibatch size the regime was run with (informational; runs here use 1).
pub fn preset_batch_size(name: &str) -> Result<usize> {
    Ok(regime(name)?.batch)
}
