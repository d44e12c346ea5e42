//! Fixtures shared by the kernel benchmarks.

use flatcircle_core::construction::{init_stage0, StageState};
use flatcircle_core::rotation::GOLDEN;

pub const EPS: f64 = 0.176_776_695_296_636_9;
pub const L: f64 = 0.75;

/// Tuned stage-0 state of the reference construction.
pub fn stage0() -> StageState {
    init_stage0(EPS, GOLDEN, L, None).expect("reference stage 0")
}
