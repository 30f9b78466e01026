//! Search for the orthogonality threshold `α*` that maximizes the analytic
//! ergodic sum-rate, sweeps of `α*` over SNR or user count, and the
//! comparison against a threshold tuned while ignoring path loss.

use rayon::prelude::*;

use crate::analytic::ergodic_sum_rate;
use crate::beamforming::BeamformerId;
use crate::channel::{default_gains, sigma2_from_snr_db, UserPopulation};
use crate::error::{Error, Result};
use crate::numerics::QuadratureSpec;
use crate::schedulers::SchemeId;

pub const DEFAULT_GRID_STEP: f64 = 0.02;

/// Final bracket width of the golden-section refinement.
pub const REFINE_WIDTH: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    pub alpha: f64,
    pub rate: f64,
    pub evaluations: usize,
    pub grid_resolution: f64,
}

/// Objective values on the coarse grid `0, step, …, 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
}

impl GridScan {
    /// Number of sign changes of the discrete differences, ignoring flat steps.
    pub fn direction_changes(&self) -> usize {
        let signs: Vec<f64> = self
            .rates
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d != 0.0)
            .map(f64::signum)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

fn grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("grid step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {step} does not divide [0, 1]")));
    }
    Ok((0..=n).map(|i| if i == n { 1.0 } else { i as f64 * step }).collect())
}

/// Evaluate the sum-rate at every coarse grid point (concurrently).
pub fn scan_alpha(
    scheme: SchemeId,
    bf: BeamformerId,
    pop: &UserPopulation,
    spec: &QuadratureSpec,
    step: f64,
) -> Result<GridScan> {
    let alphas = grid(step)?;
    let rates = alphas
        .par_iter()
        .map(|&a| ergodic_sum_rate(scheme, bf, a, pop, spec).map(|r| r.sum_rate))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridScan { alphas, rates })
}

/// `α*` with the default 0.02 grid.
pub fn optimize_alpha(
    scheme: SchemeId,
    bf: BeamformerId,
    pop: &UserPopulation,
    spec: &QuadratureSpec,
) -> Result<AlphaStar> {
    optimize_alpha_with_step(scheme, bf, pop, spec, DEFAULT_GRID_STEP)
}

/// Grid scan followed by golden-section refinement on the bracket around the
/// best grid point. A single user has a flat objective and gets `α = 0`.
pub fn optimize_alpha_with_step(
    scheme: SchemeId,
    bf: BeamformerId,
    pop: &UserPopulation,
    spec: &QuadratureSpec,
    step: f64,
) -> Result<AlphaStar> {
    if pop.users() == 1 {
        let rate = ergodic_sum_rate(scheme, bf, 0.0, pop, spec)?.sum_rate;
        return Ok(AlphaStar {
            alpha: 0.0,
            rate,
            evaluations: 1,
            grid_resolution: step,
        });
    }
    let scan = scan_alpha(scheme, bf, pop, spec, step)?;
    let mut best = 0;
    for (i, &r) in scan.rates.iter().enumerate() {
        if r > scan.rates[best] {
            best = i;
        }
    }
    if scan.direction_changes() > 1 {
        log::warn!(
            "{scheme}/{bf}: objective is not unimodal on the grid ({} direction changes)",
            scan.direction_changes()
        );
    }
    let mut evaluations = scan.alphas.len();
    let lo = scan.alphas[best.saturating_sub(1)];
    let hi = scan.alphas[(best + 1).min(scan.alphas.len() - 1)];
    let f = |a: f64| ergodic_sum_rate(scheme, bf, a, pop, spec).map(|r| r.sum_rate);
    let (alpha, rate, used) = golden_section_max(f, lo, hi, REFINE_WIDTH)?;
    evaluations += used;
    let (alpha, rate) = if rate > scan.rates[best] {
        (alpha, rate)
    } else {
        (scan.alphas[best], scan.rates[best])
    };
    let star = AlphaStar {
        alpha,
        rate,
        evaluations,
        grid_resolution: step,
    };
    check_continuity(scheme, bf, pop, spec, &star);
    Ok(star)
}

/// Warn when the objective jumps around `α*` by more than quadrature noise
/// could explain.
fn check_continuity(scheme: SchemeId, bf: BeamformerId, pop: &UserPopulation, spec: &QuadratureSpec, star: &AlphaStar) {
    for a in [star.alpha - 1e-3, star.alpha + 1e-3] {
        if !(0.0..=1.0).contains(&a) {
            continue;
        }
        if let Ok(r) = ergodic_sum_rate(scheme, bf, a, pop, spec) {
            if (r.sum_rate - star.rate).abs() > 1e-2 * star.rate.abs() {
                log::warn!(
                    "{scheme}/{bf}: sum-rate changes from {} to {} within 1e-3 of alpha* = {}",
                    star.rate,
                    r.sum_rate,
                    star.alpha
                );
            }
        }
    }
}

/// Golden-section maximization of `f` on `[lo, hi]` down to `width`.
/// Returns `(argmax, max, evaluations)`.
pub fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, width: f64) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evals = 2;
    while hi - lo > width {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evals += 1;
    }
    Ok(if f1 >= f2 { (x1, f1, evals) } else { (x2, f2, evals) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SnrDb,
    Users,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr-db" | "snr_db" | "snr" => Ok(SweepAxis::SnrDb),
            "users" | "k" => Ok(SweepAxis::Users),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected snr-db|users)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::SnrDb => "snr-db",
            SweepAxis::Users => "users",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub users: usize,
    pub star: AlphaStar,
    /// Expected number of semi-orthogonal candidates `(K−1)α*²`.
    pub expected_candidates: f64,
}

/// Population for one sweep point. The SNR axis keeps the template's gains
/// and sets `σ² = P_t/SNR`; the users axis regenerates the even layout and
/// keeps `σ²`.
pub fn sweep_population(axis: SweepAxis, value: f64, template: &UserPopulation) -> Result<UserPopulation> {
    match axis {
        SweepAxis::SnrDb => template.with_sigma2(sigma2_from_snr_db(value, template.pt())),
        SweepAxis::Users => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!(
                    "user count must be a positive integer, got {value}"
                )));
            }
            template.with_gains(default_gains(value as usize))
        }
    }
}

pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    scheme: SchemeId,
    bf: BeamformerId,
    template: &UserPopulation,
    spec: &QuadratureSpec,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let pop = sweep_population(axis, v, template)?;
            let star = optimize_alpha(scheme, bf, &pop, spec)?;
            Ok(SweepRow {
                value: v,
                users: pop.users(),
                star,
                expected_candidates: (pop.users() as f64 - 1.0) * star.alpha * star.alpha,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousComparison {
    pub alpha_star: f64,
    pub alpha_star_homo: f64,
    pub rate_at_star: f64,
    pub rate_at_homo: f64,
}

impl HomogeneousComparison {
    pub fn rate_gap(&self) -> f64 {
        self.rate_at_star - self.rate_at_homo
    }
}

/// Tune `α` with every path gain set to 1 (same `K`, `σ²`), then evaluate
/// that threshold on the true population.
pub fn compare_homogeneous(
    scheme: SchemeId,
    bf: BeamformerId,
    pop: &UserPopulation,
    spec: &QuadratureSpec,
) -> Result<HomogeneousComparison> {
    let star = optimize_alpha(scheme, bf, pop, spec)?;
    let flat = pop.with_gains(vec![1.0; pop.users()])?;
    let homo = optimize_alpha(scheme, bf, &flat, spec)?;
    let rate_at_homo = ergodic_sum_rate(scheme, bf, homo.alpha, pop, spec)?.sum_rate;
    Ok(HomogeneousComparison {
        alpha_star: star.alpha,
        alpha_star_homo: homo.alpha,
        rate_at_star: star.rate,
        rate_at_homo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx, n) = golden_section_max(|x| Ok(-(x - 0.337) * (x - 0.337)), 0.0, 1.0, 1e-6).unwrap();
        assert!((x - 0.337).abs() < 1e-6);
        assert!(fx <= 0.0);
        assert!(n > 10);
    }

    #[test]
    fn grid_covers_unit_interval() {
        let g = grid(0.02).unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[50], 1.0);
        assert!(grid(0.3).is_err());
        assert!(grid(0.0).is_err());
    }

    #[test]
    fn direction_changes_counts_turns() {
        let s = GridScan {
            alphas: vec![0.0; 5],
            rates: vec![1.0, 2.0, 3.0, 2.0, 1.0],
        };
        assert_eq!(s.direction_changes(), 1);
        let s = GridScan {
            alphas: vec![0.0; 5],
            rates: vec![1.0, 2.0, 1.0, 2.0, 1.0],
        };
        assert_eq!(s.direction_changes(), 3);
    }

    #[test]
    fn single_user_returns_zero() {
        let pop = UserPopulation::from_snr_db(vec![1.0], 10.0).unwrap();
        let s = optimize_alpha(SchemeId::Mus, BeamformerId::Zf, &pop, &QuadratureSpec::default()).unwrap();
        assert_eq!(s.alpha, 0.0);
    }

    #[test]
    fn optimum_beats_every_grid_point() {
        let pop = UserPopulation::from_snr_db(default_gains(4), 10.0).unwrap();
        let spec = QuadratureSpec::default();
        for bf in BeamformerId::ALL {
            let star = optimize_alpha(SchemeId::Rus, bf, &pop, &spec).unwrap();
            let scan = scan_alpha(SchemeId::Rus, bf, &pop, &spec, DEFAULT_GRID_STEP).unwrap();
            assert!(scan.rates.iter().all(|&r| star.rate >= r));
            assert!((0.0..=1.0).contains(&star.alpha));
        }
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!("snr-db".parse::<SweepAxis>().unwrap(), SweepAxis::SnrDb);
        assert_eq!("users".parse::<SweepAxis>().unwrap(), SweepAxis::Users);
        assert!("x".parse::<SweepAxis>().is_err());
        let t = UserPopulation::from_snr_db(default_gains(3), 10.0).unwrap();
        assert_eq!(sweep_population(SweepAxis::Users, 5.0, &t).unwrap().users(), 5);
        assert!(sweep_population(SweepAxis::Users, 2.5, &t).is_err());
    }
}
