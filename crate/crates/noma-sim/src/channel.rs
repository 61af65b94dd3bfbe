//! Block-fading uplink channel: per-frame gains and the superimposed
//! noisy observation y_i = sum_u h_u x_{u,i} + w_i.
//!
//! Noise convention: `noise_power` is the total complex variance,
//! E|w|^2 = nu, split nu/2 per real component. Per-user SNR is
//! |h_u|^2 / nu, which reduces to |h_u|^2 at the default nu = 1.

use crate::ricode::IqFrame;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("fixed-snr mode needs at least one SNR target")]
    EmptyTargets,
    #[error("user frame {user} has length {got}, expected {expected}")]
    FrameLengthMismatch { user: usize, got: usize, expected: usize },
}

/// How per-user gains are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMode {
    /// Each gain i.i.d. circular symmetric complex Gaussian, unit variance.
    Rayleigh { users: usize },
    /// Gain magnitudes pinned to exact SNR targets (dB, sorted descending so
    /// user 1 is the strongest), phases uniform on [0, 2pi).
    FixedSnr { targets_db: Vec<f64> },
}

/// Channel draw specification: gain mode plus the noise power nu.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSpec {
    pub mode: ChannelMode,
    pub noise_power: f64,
}

impl SnrSpec {
    pub fn fixed_snr(targets_db: Vec<f64>) -> Self {
        Self { mode: ChannelMode::FixedSnr { targets_db }, noise_power: 1.0 }
    }

    pub fn rayleigh(users: usize) -> Self {
        Self { mode: ChannelMode::Rayleigh { users }, noise_power: 1.0 }
    }

    pub fn users(&self) -> usize {
        match &self.mode {
            ChannelMode::Rayleigh { users } => *users,
            ChannelMode::FixedSnr { targets_db } => targets_db.len(),
        }
    }
}

/// One frame's channel: complex gain per user plus the noise power. The
/// gains are constant over the frame (block fading).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub noise_power: f64,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.gains.len()
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Zero-mean complex Gaussian with E|w|^2 = variance.
fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * standard_normal(rng), s * standard_normal(rng))
}

/// Draw one channel realization.
///
/// Fixed-snr mode sets |h_u|^2 = 10^(dB/10) * nu exactly and randomizes only
/// the phase, so configured SNR gaps hold frame by frame; rayleigh mode
/// draws h_u ~ CN(0, 1).
pub fn realize_channel(spec: &SnrSpec, rng: &mut impl Rng) -> Result<ChannelRealization, ChannelError> {
    let gains = match &spec.mode {
        ChannelMode::Rayleigh { users } => {
            if *users == 0 {
                return Err(ChannelError::EmptyTargets);
            }
            (0..*users).map(|_| complex_gaussian(rng, 1.0)).collect()
        }
        ChannelMode::FixedSnr { targets_db } => {
            if targets_db.is_empty() {
                return Err(ChannelError::EmptyTargets);
            }
            targets_db
                .iter()
                .map(|&db| {
                    let magnitude = (10f64.powf(db / 10.0) * spec.noise_power).sqrt();
                    let phase = TAU * rng.random::<f64>();
                    Complex64::from_polar(magnitude, phase)
                })
                .collect()
        }
    };
    Ok(ChannelRealization { gains, noise_power: spec.noise_power })
}

/// Superimpose the users' frames through the channel and add noise.
pub fn transmit(
    frames: &[IqFrame],
    ch: &ChannelRealization,
    rng: &mut impl Rng,
) -> Result<IqFrame, ChannelError> {
    assert_eq!(frames.len(), ch.users(), "one frame per channel gain");
    let n = frames.first().map_or(0, |f| f.len());
    for (user, f) in frames.iter().enumerate() {
        if f.len() != n {
            return Err(ChannelError::FrameLengthMismatch { user: user + 1, got: f.len(), expected: n });
        }
    }
    let mut received = Vec::with_capacity(n);
    for i in 0..n {
        let mut y = complex_gaussian(rng, ch.noise_power);
        for (h, f) in ch.gains.iter().zip(frames) {
            y += h * f[i];
        }
        received.push(y);
    }
    Ok(IqFrame(received))
}
