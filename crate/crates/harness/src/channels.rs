//! Reproducible Rayleigh channel draws.
//!
//! Every matrix comes from its own ChaCha stream keyed by (kind, user index),
//! so adding users of one kind never reshuffles the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use swipt_core::{CMat, ChannelSet, NetworkScenario, C64};

/// Large-scale gain `10^{-3/2}`: pathloss exponent 3 at 10 m from a 1 m reference.
pub const PATHLOSS_AMPLITUDE: f64 = 0.031_622_776_601_683_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Information = 0,
    Energy = 1,
    Primary = 2,
}

/// Stream id of one user's matrix; the kind lives in the top bits.
pub fn stream_id(kind: ChannelKind, user: usize) -> u64 {
    ((kind as u64) << 32) | user as u64
}

/// `rows x cols` matrix of `PATHLOSS_AMPLITUDE * CN(0, 1)` entries from one stream.
pub fn draw_matrix(seed: u64, kind: ChannelKind, user: usize, rows: usize, cols: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(kind, user));
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    // Row-major fill keeps the draw order independent of nalgebra's storage.
    let mut out = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            out[(r, c)] = C64::new(re, im) * PATHLOSS_AMPLITUDE;
        }
    }
    out
}

pub fn generate_channels(sc: &NetworkScenario, seed: u64) -> ChannelSet {
    let h = (0..sc.k_i).map(|k| draw_matrix(seed, ChannelKind::Information, k, sc.n_i, sc.m)).collect();
    let g = (0..sc.k_e).map(|i| draw_matrix(seed, ChannelKind::Energy, i, sc.n_e, sc.m)).collect();
    let t = (0..sc.k_p).map(|j| draw_matrix(seed, ChannelKind::Primary, j, sc.n_p, sc.m)).collect();
    ChannelSet { h, g, t }
}
