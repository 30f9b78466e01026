//! Random (RUS), max-gain (MUS) and CDF-based (CUS) semi-orthogonal user
//! selection over one channel realization.
//!
//! All three schemes walk a ranked candidate list: the head becomes `π(1)`
//! and the first later candidate whose coherence with `π(1)` is at most `α²`
//! becomes `π(2)`. They differ only in how the list is ordered.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{coherence_unchecked, ChannelRealization, Mode, UserPopulation};
use crate::error::Error;
use crate::numerics::gamma2_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    Rus,
    Mus,
    Cus,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Rus, SchemeId::Mus, SchemeId::Cus];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Rus => "rus",
            SchemeId::Mus => "mus",
            SchemeId::Cus => "cus",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rus" => Ok(SchemeId::Rus),
            "mus" => Ok(SchemeId::Mus),
            "cus" => Ok(SchemeId::Cus),
            other => Err(Error::Config(format!(
                "unknown scheme '{other}' (expected rus|mus|cus)"
            ))),
        }
    }
}

/// Outcome of one scheduling decision.
///
/// `pi2_rank` is the 1-based position of `π(2)` in the scheme's candidate
/// ordering (random order for RUS, received power for MUS, `‖h‖²` for CUS).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub mode: Mode,
    pub pi1: usize,
    pub pi2: Option<usize>,
    pub pi2_rank: Option<usize>,
}

impl Schedule {
    pub fn single(pi1: usize) -> Self {
        Self {
            mode: Mode::Su,
            pi1,
            pi2: None,
            pi2_rank: None,
        }
    }

    pub fn pair(pi1: usize, pi2: usize) -> Self {
        assert_ne!(pi1, pi2, "a user cannot be paired with itself");
        Self {
            mode: Mode::Mu,
            pi1,
            pi2: Some(pi2),
            pi2_rank: None,
        }
    }

    /// Scheduled users in selection order.
    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.pi1).chain(self.pi2)
    }
}

/// Walk `order`: head is `π(1)`, first SO-feasible follower is `π(2)`.
fn first_feasible(real: &ChannelRealization, order: &[usize], alpha: f64) -> Schedule {
    let alpha2 = alpha * alpha;
    let head = order[0];
    let h1 = real.vector(head);
    let n1 = real.norm_sqr(head);
    for (pos, &cand) in order.iter().enumerate().skip(1) {
        let coh = coherence_unchecked(h1, real.vector(cand), n1, real.norm_sqr(cand));
        if coh <= alpha2 {
            return Schedule {
                pi2_rank: Some(pos + 1),
                ..Schedule::pair(head, cand)
            };
        }
    }
    Schedule::single(head)
}

/// Users sorted by descending `key`, ties to the lowest index.
fn ranked_by(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order
}

/// Random user selection: shuffle, then take the first feasible follower.
pub fn rus_select<R: Rng + ?Sized>(real: &ChannelRealization, alpha: f64, rng: &mut R) -> Schedule {
    let mut order: Vec<usize> = (0..real.users()).collect();
    order.shuffle(rng);
    first_feasible(real, &order, alpha)
}

/// Max-gain user selection on received power `g_k‖h_k‖²`.
pub fn mus_select(real: &ChannelRealization, pop: &UserPopulation, alpha: f64) -> Schedule {
    let keys: Vec<f64> = pop
        .gains()
        .iter()
        .enumerate()
        .map(|(k, g)| g * real.norm_sqr(k))
        .collect();
    first_feasible(real, &ranked_by(&keys), alpha)
}

/// CDF-based user selection.
///
/// The score `p_k = γ(2, ‖h_k‖²)` is monotone in `‖h_k‖²`, so ranking on the
/// squared norm gives the same decision without evaluating the CDF.
pub fn cus_select(real: &ChannelRealization, alpha: f64) -> Schedule {
    let keys: Vec<f64> = (0..real.users()).map(|k| real.norm_sqr(k)).collect();
    first_feasible(real, &ranked_by(&keys), alpha)
}

/// The CUS transformation `p_k = F_{S_k}(S_k) = γ(2, ‖h_k‖²)`.
pub fn cus_score(real: &ChannelRealization, user: usize) -> f64 {
    gamma2_cdf(real.norm_sqr(user))
}

pub fn select<R: Rng + ?Sized>(
    scheme: SchemeId,
    real: &ChannelRealization,
    pop: &UserPopulation,
    alpha: f64,
    rng: &mut R,
) -> Schedule {
    match scheme {
        SchemeId::Rus => rus_select(real, alpha, rng),
        SchemeId::Mus => mus_select(real, pop, alpha),
        SchemeId::Cus => cus_select(real, alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, so_coherence};
    use crate::stream::Stream;
    use num_complex::Complex64;

    fn real_from(v: &[[f64; 2]]) -> ChannelRealization {
        ChannelRealization::new(
            v.iter()
                .map(|p| [Complex64::new(p[0], 0.0), Complex64::new(p[1], 0.0)])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_user_is_always_su() {
        let real = real_from(&[[1.0, 0.5]]);
        let pop = UserPopulation::new(vec![1.0], 1.0, 2.0).unwrap();
        let mut rng = Stream::new(0, 0);
        for s in [
            rus_select(&real, 1.0, &mut rng),
            mus_select(&real, &pop, 1.0),
            cus_select(&real, 1.0),
        ] {
            assert_eq!(s, Schedule::single(0));
        }
    }

    #[test]
    fn zero_alpha_never_pairs() {
        let pop = UserPopulation::new(vec![1.0; 6], 1.0, 2.0).unwrap();
        for t in 0..200 {
            let mut rng = Stream::new(11, t);
            let real = draw_channel(&mut rng, 6);
            for s in [
                rus_select(&real, 0.0, &mut rng),
                mus_select(&real, &pop, 0.0),
                cus_select(&real, 0.0),
            ] {
                assert_eq!(s.mode, Mode::Su);
            }
        }
    }

    #[test]
    fn mus_prefers_dominant_gain() {
        let real = real_from(&[[1.0, 0.0], [0.0, 1.0]]);
        let pop = UserPopulation::new(vec![1.0, 100.0], 1.0, 2.0).unwrap();
        let s = mus_select(&real, &pop, 1.0);
        assert_eq!(s.pi1, 1);
        assert_eq!(s.pi2, Some(0));
    }

    #[test]
    fn cus_ignores_path_gain() {
        let real = real_from(&[[1.0, 1.0], [1.0, 0.0]]);
        let s = cus_select(&real, 1.0);
        assert_eq!(s.pi1, 0);
        // the same realization under MUS with a huge gain on user 1 flips it
        let pop = UserPopulation::new(vec![1.0, 1e6], 1.0, 2.0).unwrap();
        assert_eq!(mus_select(&real, &pop, 1.0).pi1, 1);
    }

    #[test]
    fn full_alpha_always_pairs_two_users() {
        let pop = UserPopulation::new(vec![1.0, 2.0], 1.0, 2.0).unwrap();
        for t in 0..200 {
            let real = draw_channel(&mut Stream::new(5, t), 2);
            assert_eq!(mus_select(&real, &pop, 1.0).mode, Mode::Mu);
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let real = real_from(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let s = cus_select(&real, 0.5);
        assert_eq!(s.pi1, 0);
        assert_eq!(s.pi2, Some(2));
        assert_eq!(s.pi2_rank, Some(3));
    }

    #[test]
    fn cus_ranking_matches_cdf_score_ranking() {
        for t in 0..1000 {
            let real = draw_channel(&mut Stream::new(21, t), 5);
            let scores: Vec<f64> = (0..5).map(|k| cus_score(&real, k)).collect();
            let by_score = ranked_by(&scores);
            let norms: Vec<f64> = (0..5).map(|k| real.norm_sqr(k)).collect();
            assert_eq!(by_score, ranked_by(&norms));
        }
    }

    #[test]
    fn pairs_respect_so_constraint() {
        let pop = UserPopulation::new(vec![1.0, 3.0, 0.5, 2.0, 9.0], 1.0, 2.0).unwrap();
        for t in 0..2000 {
            let mut rng = Stream::new(99, t);
            let real = draw_channel(&mut rng, 5);
            let alpha = 0.6;
            for s in [
                rus_select(&real, alpha, &mut rng),
                mus_select(&real, &pop, alpha),
                cus_select(&real, alpha),
            ] {
                let h1 = real.vector(s.pi1);
                match s.pi2 {
                    Some(p2) => {
                        assert_ne!(p2, s.pi1);
                        assert!(so_coherence(h1, real.vector(p2)).unwrap() <= alpha * alpha);
                    }
                    None => {
                        for k in (0..5).filter(|&k| k != s.pi1) {
                            assert!(so_coherence(h1, real.vector(k)).unwrap() > alpha * alpha);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.to_string().parse::<SchemeId>().unwrap(), s);
        }
        assert!("greedy".parse::<SchemeId>().is_err());
    }
}
