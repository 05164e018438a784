//! Analytical oracles, error metrics and the benchmark case runner.

pub mod analytical;
pub mod cases;
pub mod metrics;

pub use analytical::{block_analytical, hertz_half_width, hertz_pressure, lame_analytical, lame_fields, LameSolution};
pub use cases::{
    contact_pressure_profile, evaluate, predict, run_case, Case, CaseConfig, CaseRun, ContactReport, ErrorReport,
    FieldErrors, Mode, Preset, PressureProfile, SurrogateScore,
};
pub use metrics::{polar_transform, relative_l2_integral, relative_l2_vector};
