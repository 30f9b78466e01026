//! Maximum-ratio and zero-forcing beams for two transmit antennas, per-user
//! SINR and instantaneous rates.

use std::fmt;
use std::str::FromStr;

use crate::channel::{inner, norm_sqr, ChannelRealization, ChannelVector, UserPopulation};
use crate::error::{Error, Result};
use crate::schedulers::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamformerId {
    Mrt,
    Zf,
}

impl BeamformerId {
    pub const ALL: [BeamformerId; 2] = [BeamformerId::Mrt, BeamformerId::Zf];

    pub fn as_str(self) -> &'static str {
        match self {
            BeamformerId::Mrt => "mrt",
            BeamformerId::Zf => "zf",
        }
    }
}

impl fmt::Display for BeamformerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BeamformerId {
    type Err = Error;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mrt" => Ok(BeamformerId::Mrt),
            "zf" => Ok(BeamformerId::Zf),
            other => Err(Error::Config(format!("unknown beamformer '{other}' (expected mrt|zf)"))),
        }
    }
}

/// Unit-norm beams, one per scheduled user in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSet {
    w: Vec<ChannelVector>,
}

impl BeamSet {
    pub fn beams(&self) -> &[ChannelVector] {
        &self.w
    }
}

fn normalized(v: &ChannelVector) -> Result<ChannelVector> {
    let n = norm_sqr(v);
    if !(n > 0.0) {
        return Err(Error::DegenerateChannel("cannot normalize a zero channel".into()));
    }
    let s = 1.0 / n.sqrt();
    Ok([v[0] * s, v[1] * s])
}

/// `w_i = h_i/‖h_i‖`.
pub fn mrt_weights(schedule: &Schedule, real: &ChannelRealization) -> Result<BeamSet> {
    let w = schedule
        .users()
        .map(|u| normalized(real.vector(u)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamSet { w })
}

/// Unit vector orthogonal to `h` in ℂ²: `(conj(h₂), −conj(h₁))/‖h‖`, so
/// `h^H w = 0` exactly.
fn orthogonal_complement(h: &ChannelVector) -> Result<ChannelVector> {
    normalized(&[h[1].conj(), -h[0].conj()])
}

/// Zero-forcing beams; single-user schedules fall back to MRT.
pub fn zf_weights(schedule: &Schedule, real: &ChannelRealization) -> Result<BeamSet> {
    let Some(pi2) = schedule.pi2 else {
        return mrt_weights(schedule, real);
    };
    let h1 = real.vector(schedule.pi1);
    let h2 = real.vector(pi2);
    let det = h1[0] * h2[1] - h1[1] * h2[0];
    if det.norm_sqr() <= 1e-28 * norm_sqr(h1) * norm_sqr(h2) {
        return Err(Error::RankDeficient);
    }
    Ok(BeamSet {
        w: vec![orthogonal_complement(h2)?, orthogonal_complement(h1)?],
    })
}

pub fn beam_weights(bf: BeamformerId, schedule: &Schedule, real: &ChannelRealization) -> Result<BeamSet> {
    match bf {
        BeamformerId::Mrt => mrt_weights(schedule, real),
        BeamformerId::Zf => zf_weights(schedule, real),
    }
}

/// Per-scheduled-user SINR
/// `g_i|h_i^H w_i|² / (σ̃² + g_i Σ_{j≠i}|h_i^H w_j|²)` with `σ̃² = σ²|U|/P_t`.
pub fn sinr(schedule: &Schedule, beams: &BeamSet, pop: &UserPopulation, real: &ChannelRealization) -> Vec<f64> {
    let noise = pop.effective_noise(schedule.mode).sigma2_eff;
    let users: Vec<usize> = schedule.users().collect();
    debug_assert_eq!(users.len(), beams.w.len());
    users
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let h = real.vector(u);
            let g = pop.gains()[u];
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (j, w) in beams.w.iter().enumerate() {
                let p = inner(h, w).norm_sqr();
                if i == j {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            g * signal / (noise + g * interference)
        })
        .collect()
}

/// `Σ ln(1 + SINR_i)` in nats.
pub fn instantaneous_sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| s.ln_1p()).sum()
}

/// `|h̃_i^H w|²` for a unit beam `w`.
pub fn normalized_gain(h: &ChannelVector, w: &ChannelVector) -> f64 {
    inner(h, w).norm_sqr() / norm_sqr(h)
}
