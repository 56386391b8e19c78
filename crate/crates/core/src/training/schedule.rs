use crate::error::{Error, Result};

/// `base_lr · min(e^(−1/2), e · warmup^(−3/2))` for epochs `e ≥ 1`.
///
/// Rises linearly to its peak `base_lr / √warmup` at `e = warmup`, where the
/// two branches meet, then decays as the inverse square root.
pub fn lr_schedule(epoch: u64, base_lr: f64, warmup: u64) -> Result<f64> {
    if epoch == 0 {
        return Err(Error::Contract("the learning-rate schedule starts at epoch 1".into()));
    }
    if warmup == 0 {
        return Err(Error::Config("warmup_epochs must be positive".into()));
    }
    let e = epoch as f64;
    let decay = e.powf(-0.5);
    let ramp = e * (warmup as f64).powf(-1.5);
    Ok(base_lr * decay.min(ramp))
}

/// Weight of the global (FK) loss terms: 0 through warm-up, then a linear
/// ramp to 1 over `ramp` epochs.
pub fn alpha_g(epoch: u64, warmup: u64, ramp: u64) -> f64 {
    if epoch <= warmup {
        return 0.0;
    }
    if ramp == 0 {
        return 1.0;
    }
    ((epoch - warmup) as f64 / ramp as f64).min(1.0)
}

/// The local loss weight is fixed.
pub const ALPHA_L: f64 = 1.0;
