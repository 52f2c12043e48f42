//! Fixtures shared by the benchmarks.

use tbeam_core::{assemble_beam, BeamParams, Result, SemiDiscreteSystem, TipParams};

/// Unit-coefficient beam, midpoint damper, hybrid tip.
pub fn reference_system(ne: usize) -> Result<SemiDiscreteSystem> {
    assemble_beam(&BeamParams::unit(), &TipParams::hybrid(0.01), ne)
}
