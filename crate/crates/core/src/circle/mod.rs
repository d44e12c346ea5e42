//! Lifts of monotone degree-one circle maps built from flat and closed-form
//! smooth pieces, with derivative and norm machinery.

mod analysis;
mod descriptor;
pub mod format;
mod interval;

pub use analysis::{
    cj_distance, flat_set, measured_order, tangency_order, validate, Check, CjDistance,
    ValidationReport, TANGENCY_TOL,
};
pub use descriptor::{
    Breakpoint, Editor, Junction, MapDescriptor, Piece, Side, Smoothness, MAX_ORDER,
};
pub use interval::{Image, IntervalOnCircle};
