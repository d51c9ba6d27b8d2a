//! The DigitalTwin RAN emulator.

mod alloc;
mod cell;
mod emulator;

pub use alloc::{allocate_rbs, Allocator};
pub use cell::{
    calibrated_bytes_per_rb, BytesPerRb, CellConfig, CellError, CALIBRATION, LTE_CQI_EFFICIENCY,
    RE_PER_RB,
};
pub use emulator::{RanEmulator, RanError, TtiRecord, UeContext, UeTti, WeightSource};
