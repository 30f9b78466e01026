//! Combination matrices and the order-statistic density of independent,
//! non-identically distributed received SNRs.
//!
//! The density of the `i`-th largest of `K` independent variables is a
//! permanent; expanding it along the single row of densities gives
//!
//! ```text
//! f_(i)(x) = Σ_k f_k(x) Σ_rows Π_{j∈C} F_j(x) Π_{j∈C̄} (1 − F_j(x))
//! ```
//!
//! where the rows of `C` enumerate the `K−i` users (other than `k`) that sit
//! below rank `i` and `C̄` holds the `i−1` users above it. User indices here
//! are zero-based.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::channel::UserPopulation;
use crate::error::{Error, Result};
use crate::numerics::{gamma2_cdf, gamma2_sf};

/// Largest population for which the combinatorial expansion is evaluated.
/// The expansion touches `2^{K−1}` rows per user.
pub const MAX_USERS: usize = 16;

/// Row-major matrix of user indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<usize>,
}

impl IndexMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn to_nested(&self) -> Vec<Vec<usize>> {
        self.iter_rows().map(<[usize]>::to_vec).collect()
    }
}

/// Paired `C^k_(i)` (users below rank `i`) and `C̄^k_(i)` (users above it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboPair {
    pub included: IndexMatrix,
    pub excluded: IndexMatrix,
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| acc * (n - j) as u64 / (j + 1) as u64)
}

fn build_pair(users: usize, rank: usize, user: usize) -> ComboPair {
    let others: Vec<usize> = (0..users).filter(|&j| j != user).collect();
    let take = users - rank;
    let rows = binomial(users - 1, take) as usize;
    let mut included = Vec::with_capacity(rows * take);
    let mut excluded = Vec::with_capacity(rows * (rank - 1));
    // lexicographic walk over index tuples into `others`
    let mut idx: Vec<usize> = (0..take).collect();
    let mut in_row = vec![false; others.len()];
    loop {
        in_row.iter_mut().for_each(|b| *b = false);
        for &p in &idx {
            included.push(others[p]);
            in_row[p] = true;
        }
        excluded.extend(others.iter().zip(&in_row).filter(|(_, &b)| !b).map(|(&o, _)| o));
        // advance
        let n = others.len();
        let Some(pos) = (0..take).rev().find(|&p| idx[p] != p + n - take) else {
            break;
        };
        idx[pos] += 1;
        for q in pos + 1..take {
            idx[q] = idx[q - 1] + 1;
        }
    }
    debug_assert_eq!(included.len(), rows * take);
    ComboPair {
        included: IndexMatrix {
            rows,
            cols: take,
            data: included,
        },
        excluded: IndexMatrix {
            rows,
            cols: rank - 1,
            data: excluded,
        },
    }
}

type ComboCache = RwLock<HashMap<(usize, usize, usize), Arc<ComboPair>>>;

fn cache() -> &'static ComboCache {
    static CACHE: OnceLock<ComboCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Combination matrices for `users = K`, rank `i ∈ [2, K]` and user `k`
/// (zero-based). Rows are in lexicographic order and cached per key.
pub fn combo_matrices(users: usize, rank: usize, user: usize) -> Result<Arc<ComboPair>> {
    if users < 2 {
        return Err(Error::domain(format!("combo matrices need K >= 2, got {users}")));
    }
    if users > MAX_USERS {
        return Err(Error::UserLimit {
            users,
            limit: MAX_USERS,
        });
    }
    if !(2..=users).contains(&rank) {
        return Err(Error::domain(format!("rank must lie in [2, {users}], got {rank}")));
    }
    if user >= users {
        return Err(Error::domain(format!("user index {user} out of range for K = {users}")));
    }
    let key = (users, rank, user);
    if let Some(hit) = cache().read().expect("combo cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let pair = Arc::new(build_pair(users, rank, user));
    let mut guard = cache().write().expect("combo cache poisoned");
    Ok(Arc::clone(guard.entry(key).or_insert(pair)))
}

/// Pointwise CDF, survival function and density of every user's SNR.
#[derive(Debug, Clone)]
pub(crate) struct UserLaws {
    /// `σ̃²/g_k`, the rate parameter of user `k`'s Gamma(2) law.
    pub rates: Vec<f64>,
}

impl UserLaws {
    pub fn new(gains: &[f64], sigma2_eff: f64) -> Self {
        Self {
            rates: gains.iter().map(|g| sigma2_eff / g).collect(),
        }
    }

    /// Fill `cdf`, `sf` and `pdf` at `x`.
    pub fn eval(&self, x: f64, cdf: &mut [f64], sf: &mut [f64], pdf: &mut [f64]) {
        for (k, &c) in self.rates.iter().enumerate() {
            let cx = c * x;
            cdf[k] = gamma2_cdf(cx);
            sf[k] = gamma2_sf(cx);
            pdf[k] = c * c * x * (-cx).exp();
        }
    }
}

/// `Σ_rows Π_{C} F Π_{C̄} (1−F)` for one combo pair.
#[inline]
pub(crate) fn combo_weight(pair: &ComboPair, cdf: &[f64], sf: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in 0..pair.included.rows() {
        let mut prod = 1.0;
        for &j in pair.included.row(r) {
            prod *= cdf[j];
        }
        for &j in pair.excluded.row(r) {
            prod *= sf[j];
        }
        total += prod;
    }
    total
}

/// Density of the `rank`-th largest of the users' SNRs `S_k` (CDFs
/// `γ(2, σ̃²x/g_k)`) at `x`.
pub fn order_stat_pdf(x: f64, rank: usize, pop: &UserPopulation, sigma2_eff: f64) -> Result<f64> {
    let users = pop.users();
    if !(1..=users).contains(&rank) {
        return Err(Error::domain(format!("rank must lie in [1, {users}], got {rank}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("order_stat_pdf requires x >= 0, got {x}")));
    }
    if !(sigma2_eff > 0.0) {
        return Err(Error::domain("effective noise must be positive"));
    }
    let laws = UserLaws::new(pop.gains(), sigma2_eff);
    let mut cdf = vec![0.0; users];
    let mut sf = vec![0.0; users];
    let mut pdf = vec![0.0; users];
    laws.eval(x, &mut cdf, &mut sf, &mut pdf);
    if rank == 1 {
        // the maximum: all other users below
        return Ok((0..users)
            .map(|k| pdf[k] * (0..users).filter(|&j| j != k).map(|j| cdf[j]).product::<f64>())
            .sum());
    }
    let mut total = 0.0;
    for (k, &density) in pdf.iter().enumerate() {
        let pair = combo_matrices(users, rank, k)?;
        total += density * combo_weight(&pair, &cdf, &sf);
    }
    Ok(total)
}

/// `Pr{π(2) is the i-th ranked user | MU-Mode} = α²(1−α²)^{i−2}/(1−λ)`.
pub fn rank_selection_prob(rank: usize, alpha: f64, users: usize) -> Result<f64> {
    if users < 2 {
        return Err(Error::domain("rank law needs at least two users"));
    }
    if !(2..=users).contains(&rank) {
        return Err(Error::domain(format!("rank must lie in [2, {users}], got {rank}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let a2 = alpha * alpha;
    let mu_prob = mu_mode_probability(a2, users);
    Ok(a2 * (1.0 - a2).powi(rank as i32 - 2) / mu_prob)
}

/// `1 − (1−α²)^{K−1}` without cancellation at small `α`.
pub(crate) fn mu_mode_probability(alpha2: f64, users: usize) -> f64 {
    if alpha2 >= 1.0 {
        return if users >= 2 { 1.0 } else { 0.0 };
    }
    -((users as f64 - 1.0) * (-alpha2).ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_example_k4_i2_k1() {
        let p = combo_matrices(4, 2, 0).unwrap();
        let plus_one = |m: &IndexMatrix| -> Vec<Vec<usize>> {
            m.to_nested()
                .into_iter()
                .map(|r| r.into_iter().map(|v| v + 1).collect())
                .collect()
        };
        assert_eq!(plus_one(&p.included), vec![vec![2, 3], vec![2, 4], vec![3, 4]]);
        assert_eq!(plus_one(&p.excluded), vec![vec![4], vec![3], vec![2]]);
    }

    #[test]
    fn two_users_single_empty_row() {
        let p = combo_matrices(2, 2, 0).unwrap();
        assert_eq!(p.included.rows(), 1);
        assert_eq!(p.included.cols(), 0);
        assert_eq!(p.excluded.to_nested(), vec![vec![1]]);
    }

    #[test]
    fn row_counts_are_binomial() {
        assert_eq!(combo_matrices(5, 3, 1).unwrap().included.rows(), 6);
        for k_users in 2..=7 {
            for rank in 2..=k_users {
                for user in 0..k_users {
                    let p = combo_matrices(k_users, rank, user).unwrap();
                    assert_eq!(p.included.rows() as u64, binomial(k_users - 1, k_users - rank));
                }
            }
        }
    }

    #[test]
    fn rows_partition_the_other_users() {
        for k_users in 2..=7 {
            for rank in 2..=k_users {
                for user in 0..k_users {
                    let p = combo_matrices(k_users, rank, user).unwrap();
                    let mut seen = std::collections::HashSet::new();
                    for r in 0..p.included.rows() {
                        let mut all: Vec<usize> = p.included.row(r).to_vec();
                        all.extend_from_slice(p.excluded.row(r));
                        all.sort_unstable();
                        let want: Vec<usize> = (0..k_users).filter(|&j| j != user).collect();
                        assert_eq!(all, want);
                        assert!(seen.insert(p.included.row(r).to_vec()), "duplicate row");
                        // lexicographic ordering
                        if r > 0 {
                            assert!(p.included.row(r - 1) < p.included.row(r));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn subsets_match_brute_force_enumeration() {
        // every (K−i)-subset of the other users appears exactly once
        for k_users in 2..=7usize {
            for rank in 2..=k_users {
                let user = k_users / 2;
                let others: Vec<usize> = (0..k_users).filter(|&j| j != user).collect();
                let mut brute: Vec<Vec<usize>> = (0u32..1 << others.len())
                    .filter(|m| m.count_ones() as usize == k_users - rank)
                    .map(|m| {
                        others
                            .iter()
                            .enumerate()
                            .filter(|(b, _)| m >> b & 1 == 1)
                            .map(|(_, &o)| o)
                            .collect()
                    })
                    .collect();
                brute.sort();
                let got = combo_matrices(k_users, rank, user).unwrap().included.to_nested();
                assert_eq!(got, brute);
            }
        }
    }

    #[test]
    fn domain_and_guard_errors() {
        assert!(matches!(combo_matrices(1, 2, 0), Err(Error::Domain(_))));
        assert!(matches!(combo_matrices(4, 1, 0), Err(Error::Domain(_))));
        assert!(matches!(combo_matrices(4, 5, 0), Err(Error::Domain(_))));
        assert!(matches!(combo_matrices(4, 2, 4), Err(Error::Domain(_))));
        assert!(matches!(combo_matrices(17, 2, 0), Err(Error::UserLimit { .. })));
    }

    #[test]
    fn single_user_density() {
        let pop = UserPopulation::new(vec![2.0], 1.0, 2.0).unwrap();
        let s2: f64 = 0.5;
        for x in [0.1, 1.0, 3.0, 10.0] {
            let c = s2 / 2.0;
            let want = c * c * x * (-c * x).exp();
            assert!((order_stat_pdf(x, 1, &pop, s2).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn ranks_sum_to_marginal_densities() {
        let pop = UserPopulation::new(vec![16.0, 1.7, 0.6, 0.2], 0.2, 2.0).unwrap();
        let s2 = 0.1;
        for i in 1..=40 {
            let x = 0.5 * i as f64;
            let total: f64 = (1..=4).map(|r| order_stat_pdf(x, r, &pop, s2).unwrap()).sum();
            let marginal: f64 = pop
                .gains()
                .iter()
                .map(|g| {
                    let c = s2 / g;
                    c * c * x * (-c * x).exp()
                })
                .sum();
            assert!((total - marginal).abs() <= 1e-14 * marginal.max(1e-300), "x={x}");
        }
    }

    #[test]
    fn identical_users_reduce_to_iid_formula() {
        let k = 5usize;
        let pop = UserPopulation::homogeneous(k, 1.3, 1.0, 2.0).unwrap();
        let s2 = 0.7;
        let c = s2 / 1.3;
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        for i in 1..=k {
            for step in 1..=30 {
                let x = 0.3 * step as f64;
                let cdf = gamma2_cdf(c * x);
                let pdf = c * c * x * (-c * x).exp();
                let want = fact(k) / (fact(i - 1) * fact(k - i))
                    * cdf.powi((k - i) as i32)
                    * (1.0 - cdf).powi(i as i32 - 1)
                    * pdf;
                let got = order_stat_pdf(x, i, &pop, s2).unwrap();
                assert!((got - want).abs() <= 1e-10, "i={i} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn rank_law_examples() {
        assert!((rank_selection_prob(2, 0.5f64.sqrt(), 3).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!((rank_selection_prob(3, 0.5f64.sqrt(), 3).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(rank_selection_prob(2, 1.0, 5).unwrap(), 1.0);
        assert_eq!(rank_selection_prob(4, 1.0, 5).unwrap(), 0.0);
        assert!(rank_selection_prob(2, 0.0, 5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rank_law_normalises(users in 2usize..20, alpha in 0.01f64..=1.0) {
            let s: f64 = (2..=users).map(|i| rank_selection_prob(i, alpha, users).unwrap()).sum();
            proptest::prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
