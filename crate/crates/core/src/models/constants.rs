//! Widths of the reconstructed architectures.
//!
//! Only FFCIR's width and depth are published; the others are chosen so that
//! the parameter count lands close to the published totals (see the figures
//! quoted next to each constant, for the x4 model).

/// Published: 8 blocks of width 36. 395,112 parameters at x4 (383,412 at x2).
pub const FFCIR_CHANNELS: usize = 36;
pub const FFCIR_BLOCKS: usize = 8;
pub const SAFM_LEVELS: usize = 4;

/// Three stride-2 paths of 21 channels each (63 total). 185,916 at x4.
pub const ATHENA_PATH_CHANNELS: usize = 21;
pub const ATHENA_KERNELS: [usize; 3] = [3, 5, 7];
pub const ATHENA_BODY_CONVS: usize = 2;

/// 235,872 at x4 with two convolutions per processed half.
pub const CSPSR_CHANNELS: usize = 68;
pub const CSPSR_BLOCKS: usize = 8;
pub const CSPSR_DEPTH: usize = 2;

/// 309,643 at either scale: the reconstruction has no scale-dependent weights.
pub const VACV_CHANNELS: usize = 40;
pub const VACV_BLOCKS: usize = 9;

/// d = 56, s = 12, m = 4 on RGB: 24,683 parameters.
pub const FSRCNN_D: usize = 56;
pub const FSRCNN_S: usize = 12;
pub const FSRCNN_M: usize = 4;

pub const LEAKY_SLOPE: f64 = 0.1;
