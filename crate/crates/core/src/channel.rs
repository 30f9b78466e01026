//! User populations, Rayleigh channel draws and the geometric quantities
//! (received SNR, channel coherence) the schedulers and beamformers consume.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::stream::complex_normal;

/// Total transmit power; with two antennas this is unit power per antenna.
pub const DEFAULT_PT: f64 = 2.0;

/// Reference distance for the path-loss law, in km.
pub const DEFAULT_D0_KM: f64 = 1.0;

pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 4.0;

/// A single user's 2×1 channel vector.
pub type ChannelVector = [Complex64; 2];

/// Transmission mode: one user at full power or two users sharing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Su,
    Mu,
}

impl Mode {
    pub fn scheduled_users(self) -> usize {
        match self {
            Mode::Su => 1,
            Mode::Mu => 2,
        }
    }
}

/// Heterogeneous user population: linear large-scale gains, noise power and
/// total transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPopulation {
    gains: Vec<f64>,
    sigma2: f64,
    pt: f64,
}

impl UserPopulation {
    pub fn new(gains: Vec<f64>, sigma2: f64, pt: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::domain("population needs at least one user"));
        }
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::domain(format!(
                "path gains must be positive and finite, got {g}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!("noise power must be positive, got {sigma2}")));
        }
        if !(pt > 0.0 && pt.is_finite()) {
            return Err(Error::domain(format!("transmit power must be positive, got {pt}")));
        }
        Ok(Self { gains, sigma2, pt })
    }

    /// Population with `P_t = 2` and noise set from the transmit SNR `P_t/σ²` in dB.
    pub fn from_snr_db(gains: Vec<f64>, snr_db: f64) -> Result<Self> {
        Self::new(gains, sigma2_from_snr_db(snr_db, DEFAULT_PT), DEFAULT_PT)
    }

    pub fn homogeneous(users: usize, gain: f64, sigma2: f64, pt: f64) -> Result<Self> {
        Self::new(vec![gain; users], sigma2, pt)
    }

    pub fn users(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn pt(&self) -> f64 {
        self.pt
    }

    pub fn transmit_snr_db(&self) -> f64 {
        10.0 * (self.pt / self.sigma2).log10()
    }

    pub fn effective_noise(&self, mode: Mode) -> EffectiveNoise {
        let rho = self.pt / mode.scheduled_users() as f64;
        EffectiveNoise {
            rho,
            sigma2_eff: self.sigma2 / rho,
        }
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.gains.clone(), sigma2, self.pt)
    }

    pub fn with_gains(&self, gains: Vec<f64>) -> Result<Self> {
        Self::new(gains, self.sigma2, self.pt)
    }
}

/// Per-stream power share `ρ = P_t/|U|` and the resulting noise `σ̃² = σ²/ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveNoise {
    pub rho: f64,
    pub sigma2_eff: f64,
}

pub fn sigma2_from_snr_db(snr_db: f64, pt: f64) -> f64 {
    pt / 10f64.powf(snr_db / 10.0)
}

/// `g_k = (d_k/d₀)^{−exponent}`.
pub fn path_loss_from_distances(distances: &[f64], d0: f64, exponent: f64) -> Result<Vec<f64>> {
    if !(d0 > 0.0) {
        return Err(Error::domain(format!("reference distance must be positive, got {d0}")));
    }
    if !(exponent > 0.0) {
        return Err(Error::domain(format!(
            "path-loss exponent must be positive, got {exponent}"
        )));
    }
    distances
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                Ok((d / d0).powf(-exponent))
            } else {
                Err(Error::domain(format!("distance must be positive, got {d}")))
            }
        })
        .collect()
}

/// `users` points evenly spaced on `[0.5, 1.5]` km; a lone user sits at 1 km.
pub fn default_layout(users: usize) -> Vec<f64> {
    match users {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let step = 1.0 / (users - 1) as f64;
            (0..users).map(|i| 0.5 + step * i as f64).collect()
        }
    }
}

/// Path gains for the evenly spaced layout with the default path-loss law.
pub fn default_gains(users: usize) -> Vec<f64> {
    path_loss_from_distances(&default_layout(users), DEFAULT_D0_KM, DEFAULT_PATH_LOSS_EXPONENT)
        .expect("default layout distances are positive")
}

/// Channel vectors of all users for one fading block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: Vec<ChannelVector>,
}

impl ChannelRealization {
    pub fn new(h: Vec<ChannelVector>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::domain("channel realization needs at least one user"));
        }
        if h.iter().flatten().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::domain("channel entries must be finite"));
        }
        Ok(Self { h })
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn vector(&self, user: usize) -> &ChannelVector {
        &self.h[user]
    }

    pub fn vectors(&self) -> &[ChannelVector] {
        &self.h
    }

    /// Squared norm ‖h_k‖².
    pub fn norm_sqr(&self, user: usize) -> f64 {
        norm_sqr(&self.h[user])
    }
}

/// Draw `users` i.i.d. channel vectors with CN(0,1) entries.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, users: usize) -> ChannelRealization {
    let h = (0..users).map(|_| [complex_normal(rng), complex_normal(rng)]).collect();
    ChannelRealization { h }
}

#[inline]
pub fn norm_sqr(h: &ChannelVector) -> f64 {
    h[0].norm_sqr() + h[1].norm_sqr()
}

/// Inner product `a^H b`.
#[inline]
pub fn inner(a: &ChannelVector, b: &ChannelVector) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// `S_k = g_k‖h_k‖²/σ̃²`.
pub fn received_snr(gain: f64, h: &ChannelVector, sigma2_eff: f64) -> f64 {
    gain * norm_sqr(h) / sigma2_eff
}

/// Squared normalized inner product `|h_a^H h_b|²/(‖h_a‖²‖h_b‖²)`.
pub fn so_coherence(a: &ChannelVector, b: &ChannelVector) -> Result<f64> {
    let na = norm_sqr(a);
    let nb = norm_sqr(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateChannel("coherence of a zero vector".into()));
    }
    Ok(coherence_unchecked(a, b, na, nb))
}

/// Coherence with precomputed squared norms; NaN when a norm is zero.
#[inline]
pub(crate) fn coherence_unchecked(a: &ChannelVector, b: &ChannelVector, na: f64, nb: f64) -> f64 {
    (inner(a, b).norm_sqr() / (na * nb)).min(1.0)
}
