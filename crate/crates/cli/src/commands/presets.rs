use homeadam::optim::{preset, preset_batch_size, OptimizerKind, PRESET_NAMES};

use crate::error::CliError;
use crate::output::{Cell, Csv};

/// Every named regime resolved for every optimizer kind.
pub fn presets_table() -> Result<Csv, CliError> {
    let mut csv = Csv::new(&[
        "preset", "kind", "eta", "beta1", "beta2", "eps", "lambda", "tau", "batch",
    ]);
    for name in PRESET_NAMES {
        let batch = preset_batch_size(name)?;
        for kind in OptimizerKind::ALL {
            let hp = preset(name, kind)?;
            csv.push(vec![
                name.into(),
                kind.name().into(),
                hp.eta.into(),
                hp.beta1.into(),
                hp.beta2.into(),
                hp.eps.into(),
                hp.lambda.into(),
                hp.tau.map_or(Cell::from(""), Cell::from),
                batch.into(),
            ]);
        }
    }
    Ok(csv)
}
