//! Seeded, severity-parameterised perturbations applied to model-input
//! windows.
//!
//! Every stressor is a pure function of `(batch, spec)`. Randomness is
//! derived per window from `(seed, window index)`, so results do not depend
//! on scheduling. Severity 0 is the identity for every kind.

mod calibrate;
mod mask;
mod ops;
mod spec;

pub use calibrate::{calibrate_severity, reference_std, NoiseReference, StressMaxima};
pub use mask::{channel_count_for_fraction, ChannelMask, MaskOrigin};
pub use ops::{
    apply_failure_and_scale, apply_linear_drift, apply_log_drift, apply_noise, apply_zero_channels, linear_multiplier,
    log_multiplier,
};
pub use spec::{compose, StressKind, StressParams, StressSpec};
