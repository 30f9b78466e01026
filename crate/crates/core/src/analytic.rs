//! Exact ergodic rates of the three selection schemes.
//!
//! Every multi-user rate is an expectation of `ln(1 + SINR)` over the
//! selected user's SNR `S` and the beam-gain variable `Y`, uniform on
//! `[0, α²]` (MRT cross term) or `[1−α², 1]` (ZF own-beam gain). The inner
//! average over `Y` is the kernel `Υ(x)/α²`; the outer expectation is a
//! one-dimensional integral against the selected user's SNR density.
//!
//! SU-mode quantities use `σ̃² = σ²/ρ` with `ρ = P_t`; MU-mode quantities use
//! `ρ = P_t/2`. With the default `P_t = 2` these are `σ²/2` and `σ²`.

use crate::beamforming::BeamformerId;
use crate::channel::{Mode, UserPopulation};
use crate::combinatorics::{combo_matrices, combo_weight, mu_mode_probability, rank_selection_prob, UserLaws};
use crate::error::{Error, Result};
use crate::numerics::{g_function, gamma2_cdf, gamma2_sf, integrate_semi_infinite_scaled, QuadratureSpec};
use crate::schedulers::SchemeId;

/// Below this `α²` the single-user closed forms of the RUS multi-user rate
/// lose digits to cancellation and quadrature of the kernel is used instead.
const RUS_CLOSED_FORM_MIN_ALPHA2: f64 = 1e-3;

/// Components of the ergodic sum-rate `λR_S + (1−λ)(R_M1 + R_M2)`, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub lambda: f64,
    pub r_s: f64,
    pub r_m1: f64,
    pub r_m2: f64,
    pub sum_rate: f64,
}

impl RateBreakdown {
    pub fn new(lambda: f64, r_s: f64, r_m1: f64, r_m2: f64) -> Self {
        let sum_rate = if lambda >= 1.0 {
            r_s
        } else {
            lambda * r_s + (1.0 - lambda) * (r_m1 + r_m2)
        };
        Self {
            lambda,
            r_s,
            r_m1,
            r_m2,
            sum_rate,
        }
    }

    /// SU-only breakdown, used at `α = 0` and for a single user. The
    /// multi-user components carry zero weight and are reported as 0.
    pub fn su_only(r_s: f64) -> Self {
        Self::new(1.0, r_s, 0.0, 0.0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_alpha_positive(alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::domain("multi-user rates need alpha > 0"));
    }
    Ok(())
}

fn check_multi_user(pop: &UserPopulation) -> Result<()> {
    if pop.users() < 2 {
        return Err(Error::domain("multi-user mode needs at least two users"));
    }
    Ok(())
}

/// `λ = (1−α²)^{K−1}`.
pub fn su_mode_probability(alpha: f64, users: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if users == 0 {
        return Err(Error::domain("user count must be positive"));
    }
    Ok(1.0 - mu_mode_probability(alpha * alpha, users))
}

/// `(ln(1+t) − t)/t`, which is `−t/2 + t²/3 − …` near zero.
fn log1p_excess(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        t * (-0.5 + t * (1.0 / 3.0 - 0.25 * t))
    } else {
        t.ln_1p() / t - 1.0
    }
}

/// Mean of `ln(1 + SINR)` over the uniform beam-gain variable given SNR `x`,
/// i.e. `Υ(x)/α²` written in a form free of cancellation at small `α`.
/// `alpha2 = 0` gives the limit `ln(1+x)` for both beamformers.
pub(crate) fn upsilon_mean(bf: BeamformerId, x: f64, alpha2: f64) -> f64 {
    match bf {
        BeamformerId::Mrt => {
            (x / (1.0 + alpha2 * x)).ln_1p() + log1p_excess(alpha2 * x / (1.0 + x)) - log1p_excess(alpha2 * x)
        }
        BeamformerId::Zf => x.ln_1p() + log1p_excess(alpha2 * x / (1.0 + (1.0 - alpha2) * x)),
    }
}

/// The inner beam-gain integrals
/// `Υ^MRT(x) = ∫₀^{α²} ln(1 + (x⁻¹+y)⁻¹) dy` and
/// `Υ^ZF(x) = ∫_{1−α²}^1 ln(1 + xy) dy`.
pub fn upsilon(bf: BeamformerId, x: f64, alpha: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("upsilon requires x > 0, got {x}")));
    }
    check_alpha_positive(alpha)?;
    let a2 = alpha * alpha;
    Ok(a2 * upsilon_mean(bf, x, a2))
}

/// Per-user closed-form single-user rate `1 + G(c)(c − 1)`, `c = σ̃²/g`.
fn single_user_rate(c: f64) -> Result<f64> {
    if c == 1.0 {
        return Ok(1.0);
    }
    Ok(1.0 + g_function(c)? * (c - 1.0))
}

/// RUS SU-mode rate: the average over users of `E[ln(1 + S_k)]`.
pub fn rus_rate_su(pop: &UserPopulation) -> Result<f64> {
    let s2 = pop.effective_noise(Mode::Su).sigma2_eff;
    let mut total = 0.0;
    for g in pop.gains() {
        total += single_user_rate(s2 / g)?;
    }
    Ok(total / pop.users() as f64)
}

/// RUS per-user MU-mode rate for one user with `s = σ̃²/g`.
fn rus_user_rate_mu(bf: BeamformerId, s: f64, a2: f64) -> Result<f64> {
    match bf {
        BeamformerId::Mrt => {
            Ok(g_function(s / a2)? + g_function(s)? / a2 - (1.0 + a2) / a2 * g_function(s / (1.0 + a2))?)
        }
        BeamformerId::Zf => {
            let head = if a2 >= 1.0 {
                0.0
            } else {
                (1.0 - a2) / a2 * g_function(s / (1.0 - a2))?
            };
            Ok(head - g_function(s)? / a2)
        }
    }
}

/// RUS MU-mode rate `R_M1 = R_M2`, averaged over the (uniformly chosen) users.
/// A single-user population is accepted and gives that user's MU-mode rate.
pub fn rus_rate_mu(bf: BeamformerId, alpha: f64, pop: &UserPopulation) -> Result<f64> {
    rus_rate_mu_with(bf, alpha, pop, &QuadratureSpec::default())
}

/// [`rus_rate_mu`] with an explicit quadrature spec for the small-`α` branch.
pub fn rus_rate_mu_with(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    check_alpha_positive(alpha)?;
    let a2 = alpha * alpha;
    let s2 = pop.effective_noise(Mode::Mu).sigma2_eff;
    let mut total = 0.0;
    for &g in pop.gains() {
        let s = s2 / g;
        total += if a2 >= RUS_CLOSED_FORM_MIN_ALPHA2 {
            rus_user_rate_mu(bf, s, a2)?
        } else {
            integrate_semi_infinite_scaled(
                |x| {
                    let e = (-s * x).exp();
                    if e == 0.0 {
                        return 0.0;
                    }
                    s * s * x * e * upsilon_mean(bf, x, a2)
                },
                2.0 / s,
                spec,
            )?
        };
    }
    Ok(total / pop.users() as f64)
}

/// Quadrature scale near the upper end of the users' SNR laws.
fn snr_scale(gains: &[f64], sigma2_eff: f64) -> f64 {
    2.0 * gains.iter().cloned().fold(0.0, f64::max) / sigma2_eff
}

/// `1 − Π_k F_k` from survival values without cancellation.
fn one_minus_product(sf: &[f64]) -> f64 {
    let log_prod: f64 = sf.iter().map(|&q| (-q).ln_1p()).sum();
    -log_prod.exp_m1()
}

/// MUS SU-mode rate `E[ln(1 + max_k S_k)] = ∫₀^∞ (1 − Π_k F_k(u))/(1+u) du`.
pub fn mus_rate_su(pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    let s2 = pop.effective_noise(Mode::Su).sigma2_eff;
    let rates: Vec<f64> = pop.gains().iter().map(|g| s2 / g).collect();
    integrate_semi_infinite_scaled(
        |u| {
            let sf: Vec<f64> = rates.iter().map(|c| gamma2_sf(c * u)).collect();
            one_minus_product(&sf) / (1.0 + u)
        },
        snr_scale(pop.gains(), s2),
        spec,
    )
}

/// Scratch buffers for evaluating all users' laws at one point.
struct LawBuffers {
    cdf: Vec<f64>,
    sf: Vec<f64>,
    pdf: Vec<f64>,
}

impl LawBuffers {
    fn new(users: usize) -> Self {
        Self {
            cdf: vec![0.0; users],
            sf: vec![0.0; users],
            pdf: vec![0.0; users],
        }
    }
}

/// Integrate `Σ_k f_k(x)·w_k(x)·υ(x)` where `f_k` is user `k`'s MU-mode SNR
/// density and `υ` the normalized beam kernel.
fn integrate_mu<W>(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec, weight: W) -> Result<f64>
where
    W: Fn(usize, &LawBuffers) -> f64,
{
    let a2 = alpha * alpha;
    let s2 = pop.effective_noise(Mode::Mu).sigma2_eff;
    let laws = UserLaws::new(pop.gains(), s2);
    let users = pop.users();
    integrate_semi_infinite_scaled(
        |x| {
            let mut buf = LawBuffers::new(users);
            laws.eval(x, &mut buf.cdf, &mut buf.sf, &mut buf.pdf);
            let mut total = 0.0;
            for k in 0..users {
                if buf.pdf[k] != 0.0 {
                    total += buf.pdf[k] * weight(k, &buf);
                }
            }
            if total == 0.0 {
                return 0.0;
            }
            total * upsilon_mean(bf, x, a2)
        },
        snr_scale(pop.gains(), s2),
        spec,
    )
}

/// MUS rate of the first selected user: `π(1)` is the SNR maximum and its
/// beam gain is uniform, so the rate is `E[υ(max_k S_k)]`.
pub fn mus_rate_mu_first(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    check_alpha_positive(alpha)?;
    check_multi_user(pop)?;
    integrate_mu(bf, alpha, pop, spec, |k, buf| {
        buf.cdf
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, f)| f)
            .product()
    })
}

/// MUS rate of the second selected user: a mixture over the rank `i` of
/// `π(2)` among all users, weighted by the rank law, of the `i`-th order
/// statistic density expanded over the combination matrices.
pub fn mus_rate_mu_second(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    check_alpha_positive(alpha)?;
    check_multi_user(pop)?;
    let users = pop.users();
    let mut ranks = Vec::new();
    for rank in 2..=users {
        let p = rank_selection_prob(rank, alpha, users)?;
        if p > 0.0 {
            ranks.push(rank);
        }
    }
    let mut terms = Vec::with_capacity(users);
    for k in 0..users {
        let mut per_rank = Vec::with_capacity(ranks.len());
        for &rank in &ranks {
            per_rank.push((
                rank_selection_prob(rank, alpha, users)?,
                combo_matrices(users, rank, k)?,
            ));
        }
        terms.push(per_rank);
    }
    integrate_mu(bf, alpha, pop, spec, |k, buf| {
        terms[k]
            .iter()
            .map(|(p, pair)| p * combo_weight(pair, &buf.cdf, &buf.sf))
            .sum()
    })
}

/// MUS rates `(R_S, R_M1, R_M2)` for `K` users sharing one path gain `g`,
/// with the default transmit power.
pub fn mus_rates_homogeneous(
    bf: BeamformerId,
    alpha: f64,
    g: f64,
    users: usize,
    sigma2: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    check_alpha_positive(alpha)?;
    let pop = UserPopulation::homogeneous(users, g, sigma2, crate::channel::DEFAULT_PT)?;
    check_multi_user(&pop)?;
    let k = users as f64;
    let su = pop.effective_noise(Mode::Su).sigma2_eff / g;
    let mu = pop.effective_noise(Mode::Mu).sigma2_eff / g;
    let r_s = integrate_semi_infinite_scaled(
        |u| -(k * (-gamma2_sf(su * u)).ln_1p()).exp_m1() / (1.0 + u),
        2.0 / su,
        spec,
    )?;
    let a2 = alpha * alpha;
    let density = |x: f64| mu * mu * x * (-mu * x).exp();
    let r_m1 = integrate_semi_infinite_scaled(
        |x| {
            let f = density(x);
            if f == 0.0 {
                return 0.0;
            }
            k * f * gamma2_cdf(mu * x).powi(users as i32 - 1) * upsilon_mean(bf, x, a2)
        },
        2.0 / mu,
        spec,
    )?;
    let mu_prob = mu_mode_probability(a2, users);
    let r_m2 = integrate_semi_infinite_scaled(
        |x| {
            let f = density(x);
            if f == 0.0 {
                return 0.0;
            }
            let big = gamma2_sf(mu * x);
            let small = gamma2_cdf(mu * x);
            // ([1 − α²Γ]^{K−1} − γ^{K−1})/(1 − α²) = Γ·Σ_j X^j γ^{K−2−j}
            let top = 1.0 - a2 * big;
            let mut sum = 0.0;
            let mut xp = 1.0;
            for j in 0..users - 1 {
                sum += xp * small.powi((users - 2 - j) as i32);
                xp *= top;
            }
            k * f * a2 * big * sum / mu_prob * upsilon_mean(bf, x, a2)
        },
        2.0 / mu,
        spec,
    )?;
    Ok((r_s, r_m1, r_m2))
}

/// CUS SU-mode rate: `π(1)` maximizes the uniform score `F_k(S_k)`, so user
/// `k` is chosen with density `f_k(x)F_k(x)^{K−1}` at SNR `x`.
pub fn cus_rate_su(pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    let s2 = pop.effective_noise(Mode::Su).sigma2_eff;
    let laws = UserLaws::new(pop.gains(), s2);
    let users = pop.users();
    integrate_semi_infinite_scaled(
        |x| {
            let mut buf = LawBuffers::new(users);
            laws.eval(x, &mut buf.cdf, &mut buf.sf, &mut buf.pdf);
            let w: f64 = (0..users).map(|k| buf.pdf[k] * buf.cdf[k].powi(users as i32 - 1)).sum();
            if w == 0.0 {
                0.0
            } else {
                w * x.ln_1p()
            }
        },
        snr_scale(pop.gains(), s2),
        spec,
    )
}

/// CUS rate of the first selected user.
pub fn cus_rate_mu_first(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    check_alpha_positive(alpha)?;
    check_multi_user(pop)?;
    let users = pop.users();
    integrate_mu(bf, alpha, pop, spec, |k, buf| buf.cdf[k].powi(users as i32 - 1))
}

/// `c_m = Pr{m semi-orthogonal candidates | MU-Mode}` for `m = 1..K−1`,
/// i.e. a binomial `(K−1, α²)` law conditioned on `m ≥ 1`.
pub fn cus_candidate_weights(alpha: f64, users: usize) -> Result<Vec<f64>> {
    check_alpha_positive(alpha)?;
    if users < 2 {
        return Err(Error::domain("multi-user mode needs at least two users"));
    }
    let a2 = alpha * alpha;
    let mu_prob = mu_mode_probability(a2, users);
    let n = users - 1;
    Ok((1..=n)
        .map(|m| {
            crate::combinatorics::binomial(n, m) as f64 * a2.powi(m as i32) * (1.0 - a2).powi((n - m) as i32) / mu_prob
        })
        .collect())
}

/// `Ψ_{m,k} = m F^{m−1}(1 − F^{K−m})/(K−m)` from `F` and its complement `1−F`.
///
/// Multiplied by `f_k`, this is the density of user `k` being the
/// best-scoring of `m` candidates that all score below `π(1)`.
pub fn psi(m: usize, users: usize, cdf: f64, sf: f64) -> f64 {
    debug_assert!(m >= 1 && m < users);
    let n = (users - m) as f64;
    let tail = if cdf > 0.5 {
        -(n * (-sf).ln_1p()).exp_m1()
    } else {
        1.0 - cdf.powi((users - m) as i32)
    };
    m as f64 * cdf.powi(m as i32 - 1) * tail / n
}

/// CUS rate of the second selected user: a mixture over the number `m` of
/// semi-orthogonal candidates.
pub fn cus_rate_mu_second(bf: BeamformerId, alpha: f64, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    check_alpha_positive(alpha)?;
    check_multi_user(pop)?;
    let users = pop.users();
    let weights = cus_candidate_weights(alpha, users)?;
    integrate_mu(bf, alpha, pop, spec, |k, buf| {
        weights
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(i, c)| c * psi(i + 1, users, buf.cdf[k], buf.sf[k]))
            .sum()
    })
}

/// SU-mode rate of `scheme`.
pub fn rate_su(scheme: SchemeId, pop: &UserPopulation, spec: &QuadratureSpec) -> Result<f64> {
    match scheme {
        SchemeId::Rus => rus_rate_su(pop),
        SchemeId::Mus => mus_rate_su(pop, spec),
        SchemeId::Cus => cus_rate_su(pop, spec),
    }
}

/// Full breakdown of the ergodic sum-rate. `α = 0` and `K = 1` never enter
/// MU mode; both return the SU rate with zero MU components.
pub fn ergodic_sum_rate(
    scheme: SchemeId,
    bf: BeamformerId,
    alpha: f64,
    pop: &UserPopulation,
    spec: &QuadratureSpec,
) -> Result<RateBreakdown> {
    check_alpha(alpha)?;
    let r_s = rate_su(scheme, pop, spec)?;
    if alpha == 0.0 || pop.users() == 1 {
        return Ok(RateBreakdown::su_only(r_s));
    }
    let lambda = su_mode_probability(alpha, pop.users())?;
    let (r_m1, r_m2) = match scheme {
        SchemeId::Rus => {
            let r = rus_rate_mu_with(bf, alpha, pop, spec)?;
            (r, r)
        }
        SchemeId::Mus => (
            mus_rate_mu_first(bf, alpha, pop, spec)?,
            mus_rate_mu_second(bf, alpha, pop, spec)?,
        ),
        SchemeId::Cus => (
            cus_rate_mu_first(bf, alpha, pop, spec)?,
            cus_rate_mu_second(bf, alpha, pop, spec)?,
        ),
    };
    Ok(RateBreakdown::new(lambda, r_s, r_m1, r_m2))
}
