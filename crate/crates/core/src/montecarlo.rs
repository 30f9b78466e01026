//! Monte-Carlo simulation of the scheduling and beamforming pipeline.
//!
//! Trial `t` reads random stream `t` of the configured seed. Trials are
//! grouped into fixed blocks; each block is reduced sequentially and the
//! block results are merged in block order, so an [`Estimate`] is
//! bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::beamforming::{beam_weights, instantaneous_sum_rate, normalized_gain, sinr, zf_weights, BeamformerId};
use crate::channel::{draw_channel, so_coherence, ChannelRealization, UserPopulation};
use crate::error::{Error, Result};
use crate::schedulers::{select, Schedule, SchemeId};
use crate::stream::Stream;

const BLOCK: u64 = 1 << 14;

/// Retries allowed for a trial whose channel cannot be beamformed.
const MAX_REDRAWS: u64 = 16;

/// Minimum MU-mode samples for the beam-gain distribution checks.
pub const MIN_MU_SAMPLES: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub scheme: SchemeId,
    pub bf: BeamformerId,
    pub alpha: f64,
    pub pop: UserPopulation,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Sample standard deviation; 0 for fewer than two samples.
    pub fn std_dev(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std_dev() / (self.count as f64).sqrt()
        }
    }
}

/// Monte-Carlo estimate of the ergodic sum-rate and selection statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub su_count: u64,
    pub mu_count: u64,
    /// Times each user was scheduled as `π(1)`.
    pub pi1_counts: Vec<u64>,
    /// Times each user was scheduled as `π(2)`.
    pub pi2_counts: Vec<u64>,
    /// Per-user rate averaged over all trials (zero when not scheduled).
    pub per_user_rate: Vec<f64>,
    /// `pi2_rank_counts[i]` counts MU trials with `π(2)` at 1-based rank `i+1`
    /// of the scheme's candidate ordering.
    pub pi2_rank_counts: Vec<u64>,
    /// SU-mode rate, conditional on SU mode.
    pub su_rate: Moments,
    /// Rate of `π(1)`, conditional on MU mode.
    pub mu_first_rate: Moments,
    /// Rate of `π(2)`, conditional on MU mode.
    pub mu_second_rate: Moments,
    /// Trials redrawn because the channel could not be beamformed.
    pub redrawn: u64,
}

impl Estimate {
    pub fn su_fraction(&self) -> f64 {
        self.su_count as f64 / self.trials as f64
    }
}

/// Result of one trial.
#[derive(Debug, Clone, Copy)]
struct Trial {
    schedule: Schedule,
    /// Rates of the scheduled users in selection order.
    rates: [f64; 2],
}

#[derive(Debug, Clone)]
struct Accumulator {
    total: Moments,
    su_count: u64,
    mu_count: u64,
    pi1: Vec<u64>,
    pi2: Vec<u64>,
    user_rate: Vec<f64>,
    ranks: Vec<u64>,
    su_rate: Moments,
    mu_first: Moments,
    mu_second: Moments,
    redrawn: u64,
}

impl Accumulator {
    fn new(users: usize) -> Self {
        Self {
            total: Moments::default(),
            su_count: 0,
            mu_count: 0,
            pi1: vec![0; users],
            pi2: vec![0; users],
            user_rate: vec![0.0; users],
            ranks: vec![0; users],
            su_rate: Moments::default(),
            mu_first: Moments::default(),
            mu_second: Moments::default(),
            redrawn: 0,
        }
    }

    fn push(&mut self, trial: &Trial) {
        let s = &trial.schedule;
        self.pi1[s.pi1] += 1;
        self.user_rate[s.pi1] += trial.rates[0];
        match s.pi2 {
            None => {
                self.su_count += 1;
                self.su_rate.push(trial.rates[0]);
                self.total.push(trial.rates[0]);
            }
            Some(p2) => {
                self.mu_count += 1;
                self.pi2[p2] += 1;
                self.user_rate[p2] += trial.rates[1];
                if let Some(rank) = s.pi2_rank {
                    self.ranks[rank - 1] += 1;
                }
                self.mu_first.push(trial.rates[0]);
                self.mu_second.push(trial.rates[1]);
                self.total.push(trial.rates[0] + trial.rates[1]);
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.total.merge(&other.total);
        self.su_count += other.su_count;
        self.mu_count += other.mu_count;
        for (a, b) in self.pi1.iter_mut().zip(&other.pi1) {
            *a += b;
        }
        for (a, b) in self.pi2.iter_mut().zip(&other.pi2) {
            *a += b;
        }
        for (a, b) in self.user_rate.iter_mut().zip(&other.user_rate) {
            *a += b;
        }
        for (a, b) in self.ranks.iter_mut().zip(&other.ranks) {
            *a += b;
        }
        self.su_rate.merge(&other.su_rate);
        self.mu_first.merge(&other.mu_first);
        self.mu_second.merge(&other.mu_second);
        self.redrawn += other.redrawn;
    }

    fn finish(self) -> Estimate {
        let n = self.total.count;
        Estimate {
            mean: self.total.mean,
            stderr: self.total.stderr(),
            trials: n,
            su_count: self.su_count,
            mu_count: self.mu_count,
            pi1_counts: self.pi1,
            pi2_counts: self.pi2,
            per_user_rate: self.user_rate.into_iter().map(|r| r / n as f64).collect(),
            pi2_rank_counts: self.ranks,
            su_rate: self.su_rate,
            mu_first_rate: self.mu_first,
            mu_second_rate: self.mu_second,
            redrawn: self.redrawn,
        }
    }
}

/// Stream for attempt `attempt` of trial `trial`. Attempt 0 is the plain
/// `(seed, trial)` stream; redraws perturb the seed.
fn trial_stream(seed: u64, trial: u64, attempt: u64) -> Stream {
    Stream::new(seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15), trial)
}

fn is_redrawable(e: &Error) -> bool {
    matches!(e, Error::RankDeficient | Error::DegenerateChannel(_))
}

/// Run `trials` trials of `body` and reduce deterministically.
fn run_trials<F>(trials: u64, users: usize, seed: u64, body: F) -> Result<Estimate>
where
    F: Fn(&mut Stream) -> Result<Trial> + Sync,
{
    let blocks = trials.div_ceil(BLOCK);
    let parts: Vec<Accumulator> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::new(users);
            for t in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                let mut attempt = 0;
                loop {
                    match body(&mut trial_stream(seed, t, attempt)) {
                        Ok(trial) => {
                            acc.push(&trial);
                            break;
                        }
                        Err(e) if is_redrawable(&e) && attempt < MAX_REDRAWS => {
                            acc.redrawn += 1;
                            attempt += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = Accumulator::new(users);
    for p in &parts {
        total.merge(p);
    }
    Ok(total.finish())
}

fn schedule_rates(
    schedule: &Schedule,
    bf: BeamformerId,
    pop: &UserPopulation,
    real: &ChannelRealization,
) -> Result<[f64; 2]> {
    let beams = beam_weights(bf, schedule, real)?;
    let s = sinr(schedule, &beams, pop, real);
    let mut rates = [0.0; 2];
    for (r, v) in rates.iter_mut().zip(&s) {
        *r = instantaneous_sum_rate(std::slice::from_ref(v));
    }
    Ok(rates)
}

fn check_channel(real: &ChannelRealization) -> Result<()> {
    if (0..real.users()).any(|k| real.norm_sqr(k) == 0.0) {
        return Err(Error::DegenerateChannel("zero channel drawn".into()));
    }
    Ok(())
}

/// Empirical ergodic sum-rate of the configured scheme and beamformer.
pub fn simulate_ergodic(cfg: &SimConfig) -> Result<Estimate> {
    cfg.validate()?;
    let users = cfg.pop.users();
    run_trials(cfg.trials, users, cfg.seed, |rng| {
        let real = draw_channel(rng, users);
        check_channel(&real)?;
        let schedule = select(cfg.scheme, &real, &cfg.pop, cfg.alpha, rng);
        let rates = schedule_rates(&schedule, cfg.bf, &cfg.pop, &real)?;
        Ok(Trial { schedule, rates })
    })
}

/// Best instantaneous sum-rate over every single user and every unordered
/// pair, with no semi-orthogonality constraint. Within a pair, `π(1)` is the
/// member with the larger rate.
pub fn exhaustive_optimal(pop: &UserPopulation, bf: BeamformerId, trials: u64, seed: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let users = pop.users();
    run_trials(trials, users, seed, |rng| {
        let real = draw_channel(rng, users);
        check_channel(&real)?;
        let mut best: Option<Trial> = None;
        let mut consider = |trial: Trial| {
            let sum = trial.rates[0] + trial.rates[1];
            if best.is_none_or(|b| sum > b.rates[0] + b.rates[1]) {
                best = Some(trial);
            }
        };
        for k in 0..users {
            let schedule = Schedule::single(k);
            let rates = schedule_rates(&schedule, bf, pop, &real)?;
            consider(Trial { schedule, rates });
        }
        for a in 0..users {
            for b in a + 1..users {
                let schedule = Schedule::pair(a, b);
                let rates = match schedule_rates(&schedule, bf, pop, &real) {
                    Ok(r) => r,
                    // a parallel pair is never better than its singletons
                    Err(Error::RankDeficient) => continue,
                    Err(e) => return Err(e),
                };
                let trial = if rates[1] > rates[0] {
                    Trial {
                        schedule: Schedule::pair(b, a),
                        rates: [rates[1], rates[0]],
                    }
                } else {
                    Trial { schedule, rates }
                };
                consider(trial);
            }
        }
        Ok(best.expect("at least one candidate set"))
    })
}

/// Number of candidate sets the exhaustive search compares for `users` users.
pub fn exhaustive_candidate_count(users: usize) -> usize {
    users + users * users.saturating_sub(1) / 2
}

/// Kolmogorov–Smirnov statistics of the MU-mode beam gains against their
/// uniform laws.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    pub mu_samples: u64,
    /// KS statistic of `Y^MRT` against `U[0, α²]`.
    pub ks_mrt: f64,
    /// KS statistic of `Y^ZF` against `U[1−α², 1]`.
    pub ks_zf: f64,
    /// Asymptotic 1% critical value `1.6276/√n`.
    pub critical_1pct: f64,
    /// Largest `|Y^ZF − (1 − Y^MRT)|` seen.
    pub max_identity_error: f64,
}

/// KS statistic of `samples` against `U[lo, hi]`; sorts in place.
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = ((y - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov 1% critical value for `n` samples.
pub fn ks_critical_1pct(n: u64) -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Collect `(Y^MRT, Y^ZF)` of `π(1)` over the MU trials of `cfg` and test both
/// against their uniform laws.
pub fn empirical_distribution_checks(cfg: &SimConfig) -> Result<DistributionReport> {
    cfg.validate()?;
    let users = cfg.pop.users();
    let blocks = cfg.trials.div_ceil(BLOCK);
    let parts: Vec<Vec<(f64, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut out = Vec::new();
            for t in b * BLOCK..((b + 1) * BLOCK).min(cfg.trials) {
                let mut rng = trial_stream(cfg.seed, t, 0);
                let real = draw_channel(&mut rng, users);
                let s = select(cfg.scheme, &real, &cfg.pop, cfg.alpha, &mut rng);
                let Some(p2) = s.pi2 else { continue };
                let h1 = real.vector(s.pi1);
                let y_mrt = so_coherence(h1, real.vector(p2))?;
                let zf = match zf_weights(&s, &real) {
                    Ok(z) => z,
                    Err(Error::RankDeficient) => continue,
                    Err(e) => return Err(e),
                };
                out.push((y_mrt, normalized_gain(h1, &zf.beams()[0])));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = parts.into_iter().flatten().collect();
    let n = pairs.len() as u64;
    if n < MIN_MU_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: n,
            need: MIN_MU_SAMPLES,
        });
    }
    let max_identity_error = pairs.iter().map(|(m, z)| (z - (1.0 - m)).abs()).fold(0.0, f64::max);
    let a2 = cfg.alpha * cfg.alpha;
    let mut mrt: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut zf: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(DistributionReport {
        mu_samples: n,
        ks_mrt: ks_uniform(&mut mrt, 0.0, a2),
        ks_zf: ks_uniform(&mut zf, 1.0 - a2, 1.0),
        critical_1pct: ks_critical_1pct(n),
        max_identity_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::default_gains;

    fn cfg(scheme: SchemeId, alpha: f64, users: usize, trials: u64) -> SimConfig {
        SimConfig {
            trials,
            seed: 17,
            scheme,
            bf: BeamformerId::Zf,
            alpha,
            pop: UserPopulation::from_snr_db(default_gains(users), 10.0).unwrap(),
        }
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut seq = Moments::default();
        xs.iter().for_each(|&x| seq.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - seq.mean).abs() < 1e-12);
        assert!((a.std_dev() - seq.std_dev()).abs() < 1e-12);
    }

    #[test]
    fn counts_are_consistent() {
        let est = simulate_ergodic(&cfg(SchemeId::Mus, 0.6, 5, 40_000)).unwrap();
        assert_eq!(est.su_count + est.mu_count, est.trials);
        assert_eq!(est.pi1_counts.iter().sum::<u64>(), est.trials);
        assert_eq!(est.pi2_counts.iter().sum::<u64>(), est.mu_count);
        assert_eq!(est.pi2_rank_counts.iter().sum::<u64>(), est.mu_count);
        assert_eq!(est.pi2_rank_counts[0], 0);
        let per_user: f64 = est.per_user_rate.iter().sum();
        assert!((per_user - est.mean).abs() < 1e-9);
    }

    #[test]
    fn zero_alpha_is_su_only() {
        let est = simulate_ergodic(&cfg(SchemeId::Rus, 0.0, 4, 10_000)).unwrap();
        assert_eq!(est.mu_count, 0);
    }

    #[test]
    fn single_trial_has_zero_stderr() {
        let est = simulate_ergodic(&cfg(SchemeId::Cus, 0.5, 3, 1)).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.trials, 1);
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let c = cfg(SchemeId::Rus, 0.7, 6, 3 * BLOCK + 123);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_ergodic(&c)).unwrap();
        let b = four.install(|| simulate_ergodic(&c)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    #[test]
    fn exhaustive_single_user_matches_su_simulation() {
        let pop = UserPopulation::from_snr_db(vec![1.0], 10.0).unwrap();
        let ex = exhaustive_optimal(&pop, BeamformerId::Mrt, 5000, 3).unwrap();
        let sim = simulate_ergodic(&SimConfig {
            trials: 5000,
            seed: 3,
            scheme: SchemeId::Mus,
            bf: BeamformerId::Mrt,
            alpha: 0.5,
            pop,
        })
        .unwrap();
        assert_eq!(ex.mean, sim.mean);
        assert_eq!(exhaustive_candidate_count(2), 3);
        assert_eq!(exhaustive_candidate_count(1), 1);
    }

    #[test]
    fn exhaustive_dominates_per_trial() {
        let pop = UserPopulation::from_snr_db(default_gains(4), 10.0).unwrap();
        let ex = exhaustive_optimal(&pop, BeamformerId::Zf, 20_000, 5).unwrap();
        for alpha in [0.3, 0.7, 1.0] {
            let sim = simulate_ergodic(&SimConfig {
                trials: 20_000,
                seed: 5,
                scheme: SchemeId::Mus,
                bf: BeamformerId::Zf,
                alpha,
                pop: pop.clone(),
            })
            .unwrap();
            // same channel draws, so the dominance holds sample by sample
            assert!(ex.mean >= sim.mean);
        }
    }

    #[test]
    fn ks_of_a_perfect_grid_is_small() {
        let mut v: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&mut v, 0.0, 1.0) <= 0.0005 + 1e-12);
        assert!((ks_critical_1pct(10_000) - 0.016276).abs() < 1e-5);
    }

    #[test]
    fn distribution_checks_need_mu_samples() {
        let c = cfg(SchemeId::Rus, 0.05, 2, 2000);
        assert!(matches!(
            empirical_distribution_checks(&c),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
