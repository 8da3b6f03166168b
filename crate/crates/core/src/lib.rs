// NaN must fail the positivity guards, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decomp;
pub mod error;
pub mod instances;
pub mod io;
pub mod metric;
pub mod nearly;
pub mod report;
pub mod skeleton;
pub mod verify;
