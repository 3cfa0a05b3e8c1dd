//! Evaluation bench: center-rotation sweeps on synthetic pairs, per-pixel
//! RMSE, Welch's t-test and checkerboard mosaics.

mod metrics;
mod stats;
pub mod sweep;
pub mod synth;

pub use metrics::{checkerboard, rmse, rotate_about_center};
pub use stats::{
    ln_gamma, regularized_incomplete_beta, student_t_two_sided_p, welch_t, StatsError, WelchResult,
};
pub use sweep::{
    run_cell, run_sweep, AngleRow, CellResult, Comparison, EvalReport, DEFAULT_ANGLES,
};
pub use synth::{synth_pair, SynthPair, SynthSpec, SynthView, World};
