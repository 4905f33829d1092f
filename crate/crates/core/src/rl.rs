//! Reward, tabular value updates and action selection.
//!
//! Each REM entry is an independent bandit (actions never influence which
//! state comes next), so the default update is the myopic `1 - alpha` filter.
//!
//! Values stored in the REM are rewards multiplied by
//! [`LearnerConfig::reward_scale`]; the default scale of 1e-6 keeps them in
//! Mbit/J, the unit the exploration constants `c` and `alpha_gb` are tuned in.
//!
//! Ties between equally scored actions are always broken toward fewer active
//! BSs, then toward the lower action encoding.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::hausdorff;
use crate::net::{EpisodeContext, EpisodeOutcome};
use crate::rem::{ActiveSet, EntryId, RemDb, RemEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EpsilonGreedy,
    Ucb,
    GradientBandit,
    RemEa,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::EpsilonGreedy => "epsilon_greedy",
            Strategy::Ucb => "ucb",
            Strategy::GradientBandit => "gradient_bandit",
            Strategy::RemEa => "rem_ea",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon_greedy" | "egreedy" => Ok(Strategy::EpsilonGreedy),
            "ucb" => Ok(Strategy::Ucb),
            "gradient_bandit" | "gb" => Ok(Strategy::GradientBandit),
            "rem_ea" | "remea" => Ok(Strategy::RemEa),
            other => Err(Error::validation("learner.strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub strategy: Strategy,
    /// Step size of the value filter, in (0, 1].
    pub alpha: f64,
    /// Discount factor in [0, 1]; 0 gives the contextual-bandit update.
    pub xi: f64,
    /// Root exponent of the epsilon schedule, >= 1.
    pub beta: f64,
    /// UCB / REM-EA exploration weight, >= 0.
    pub c: f64,
    pub alpha_gb: f64,
    /// REM-EA distance exponent, > 0.
    pub gamma: f64,
    pub asr_enabled: bool,
    /// Initial value of every REM slot (in scaled reward units).
    pub optimistic_init: f64,
    /// Multiplier from bit/J rewards to stored values.
    pub reward_scale: f64,
    pub rng_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ucb,
            alpha: 0.5,
            xi: 0.0,
            beta: 1.0,
            c: 0.01,
            alpha_gb: 20.0,
            gamma: 1.5,
            asr_enabled: false,
            optimistic_init: 0.0,
            reward_scale: 1e-6,
            rng_seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::validation(format!("learner.{f}"), why));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return bad("xi", "must lie in [0, 1]");
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return bad("beta", "must be at least 1");
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad("c", "must be non-negative");
        }
        if !(self.alpha_gb > 0.0 && self.alpha_gb.is_finite()) {
            return bad("alpha_gb", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", "must be positive");
        }
        if !(self.optimistic_init >= 0.0 && self.optimistic_init.is_finite()) {
            return bad("optimistic_init", "must be non-negative");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        Ok(())
    }

    /// Short label used in sweep tables, e.g. `ucb(c=0.01,asr)`.
    pub fn label(&self) -> String {
        let p = match self.strategy {
            Strategy::EpsilonGreedy => format!("beta={}", self.beta),
            Strategy::Ucb => format!("c={}", self.c),
            Strategy::GradientBandit => format!("alpha_gb={}", self.alpha_gb),
            Strategy::RemEa => format!("c={},gamma={}", self.c, self.gamma),
        };
        let asr = if self.asr_enabled { ",asr" } else { "" };
        format!("{}({p}{asr})", self.strategy.name())
    }
}

/// EE if the action serves as many UEs as the all-on network, otherwise 0.
pub fn reward(outcome: &EpisodeOutcome) -> f64 {
    if outcome.served_count >= outcome.all_on_served_count {
        outcome.ee
    } else {
        0.0
    }
}

/// One Q-learning step. With `xi = 0` this is `(1 - alpha) q + alpha r`.
pub fn q_update(q_old: f64, r: f64, alpha: f64, xi: f64, max_next_q: f64) -> f64 {
    if xi == 0.0 {
        (1.0 - alpha) * q_old + alpha * r
    } else {
        q_old + alpha * (r + xi * max_next_q - q_old)
    }
}

/// Exploration probability `1 / total^(1/beta)`; an unvisited state always explores.
pub fn epsilon_schedule(total_visits: u64, beta: f64) -> f64 {
    if total_visits == 0 {
        return 1.0;
    }
    (1.0 / (total_visits as f64).powf(1.0 / beta)).min(1.0)
}

fn better(a: (f64, ActiveSet), b: (f64, ActiveSet)) -> bool {
    let sa = if a.0.is_nan() { f64::NEG_INFINITY } else { a.0 };
    let sb = if b.0.is_nan() { f64::NEG_INFINITY } else { b.0 };
    match sa.partial_cmp(&sb).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1.tie_key() < b.1.tie_key(),
    }
}

/// Highest score under the global tie rule.
pub fn argmax_by(candidates: &[ActiveSet], mut score: impl FnMut(ActiveSet) -> f64) -> ActiveSet {
    assert!(!candidates.is_empty(), "candidate set must not be empty");
    let mut best = (score(candidates[0]), candidates[0]);
    for &a in &candidates[1..] {
        let s = (score(a), a);
        if better(s, best) {
            best = s;
        }
    }
    best.1
}

fn first_by_tie_rule(it: impl Iterator<Item = ActiveSet>) -> Option<ActiveSet> {
    it.min_by_key(|a| a.tie_key())
}

pub fn greedy_action(entry: &RemEntry, candidates: &[ActiveSet]) -> ActiveSet {
    argmax_by(candidates, |a| entry.q(a))
}

/// Greedy choice restricted to actions the learner has taken, so untried
/// actions holding an optimistic initial value are not picked; plain greedy
/// when none was taken.
pub fn exploit_action(entry: &RemEntry, candidates: &[ActiveSet]) -> ActiveSet {
    let tried: Vec<ActiveSet> = candidates.iter().copied().filter(|&a| entry.n(a) > 0).collect();
    greedy_action(entry, if tried.is_empty() { candidates } else { &tried })
}

pub fn select_epsilon_greedy(entry: &RemEntry, candidates: &[ActiveSet], beta: f64, rng: &mut impl Rng) -> ActiveSet {
    let eps = epsilon_schedule(entry.total_visits(), beta);
    select_epsilon_greedy_with(entry, candidates, eps, rng)
}

/// Epsilon-greedy with an explicit exploration probability.
pub fn select_epsilon_greedy_with(
    entry: &RemEntry,
    candidates: &[ActiveSet],
    epsilon: f64,
    rng: &mut impl Rng,
) -> ActiveSet {
    assert!(!candidates.is_empty(), "candidate set must not be empty");
    if rng.random::<f64>() < epsilon {
        candidates[rng.random_range(0..candidates.len())]
    } else {
        greedy_action(entry, candidates)
    }
}

/// Shared UCB rule over per-action (value, count) estimates. Counts of
/// exactly zero are tried first; `ln` of a total below one is clamped to 0.
fn ucb_rule(candidates: &[ActiveSet], stats: &[(f64, f64)], c: f64) -> ActiveSet {
    assert!(!candidates.is_empty(), "candidate set must not be empty");
    if let Some(a) = first_by_tie_rule(
        candidates
            .iter()
            .zip(stats)
            .filter(|(_, s)| s.1 == 0.0)
            .map(|(a, _)| *a),
    ) {
        return a;
    }
    let total: f64 = stats.iter().map(|s| s.1).sum();
    let ln_total = total.ln().max(0.0);
    let mut k = 0;
    argmax_by(candidates, |_| {
        let (q, n) = stats[k];
        k += 1;
        q + c * (ln_total / n).sqrt()
    })
}

pub fn select_ucb(entry: &RemEntry, candidates: &[ActiveSet], c: f64) -> ActiveSet {
    let stats: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&a| (entry.q(a), entry.n(a) as f64))
        .collect();
    ucb_rule(candidates, &stats, c)
}

/// Softmax of entry values over the candidates, in candidate order.
pub fn softmax(entry: &RemEntry, candidates: &[ActiveSet]) -> Vec<f64> {
    let max = candidates
        .iter()
        .map(|&a| entry.q(a))
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = candidates.iter().map(|&a| (entry.q(a) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn select_gradient_bandit(entry: &RemEntry, candidates: &[ActiveSet], rng: &mut impl Rng) -> ActiveSet {
    assert!(!candidates.is_empty(), "candidate set must not be empty");
    let pi = softmax(entry, candidates);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in candidates.iter().zip(&pi) {
        acc += p;
        if u < acc {
            return *a;
        }
    }
    *candidates.last().unwrap()
}

/// Running reward baseline per REM entry for the gradient bandit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GbState {
    pub avg_reward: Vec<f64>,
    pub reward_count: Vec<u64>,
}

impl GbState {
    fn ensure(&mut self, id: EntryId) {
        if self.avg_reward.len() <= id {
            self.avg_reward.resize(id + 1, 0.0);
            self.reward_count.resize(id + 1, 0);
        }
    }

    pub fn baseline(&self, id: EntryId) -> f64 {
        self.avg_reward.get(id).copied().unwrap_or(0.0)
    }

    fn push(&mut self, id: EntryId, r: f64) {
        self.ensure(id);
        self.reward_count[id] += 1;
        self.avg_reward[id] += (r - self.avg_reward[id]) / self.reward_count[id] as f64;
    }
}

/// Preference update of the gradient bandit; also counts the visit.
pub fn gb_update(
    entry: &mut RemEntry,
    gb: &mut GbState,
    id: EntryId,
    candidates: &[ActiveSet],
    taken: ActiveSet,
    r: f64,
    alpha_gb: f64,
) {
    let pi = softmax(entry, candidates);
    let advantage = r - gb.baseline(id);
    for (&a, p) in candidates.iter().zip(&pi) {
        let i = a.index();
        if a == taken {
            entry.q[i] += alpha_gb * advantage * (1.0 - p);
        } else {
            entry.q[i] -= alpha_gb * advantage * p;
        }
    }
    entry.n[taken.index()] += 1;
    gb.push(id, r);
}

/// Actions that keep the maximal number of UEs above the RSS threshold.
pub fn asr_filter(ctx: &EpisodeContext) -> Vec<ActiveSet> {
    let n_bs = ctx.network().n_bs();
    let counts: Vec<(ActiveSet, usize)> = ActiveSet::all(n_bs).map(|a| (a, ctx.served_count(&a))).collect();
    let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
    counts.into_iter().filter(|c| c.1 == max).map(|c| c.0).collect()
}

/// Distance-weighted value and count estimates for REM-EA, in candidate order.
///
/// Other entries are weighted by `d^-gamma`; values equal to zero are left
/// out of the value average but every entry contributes to the count average.
/// A neighbour whose weight vanishes next to the current entry's unit weight
/// (`1 + w == 1`) is skipped entirely.
pub fn rem_ea_estimates(db: &RemDb, current: EntryId, candidates: &[ActiveSet], gamma: f64) -> Vec<(f64, f64)> {
    let cur = db.entry(current);
    let neighbours: Vec<(&RemEntry, f64)> = db
        .entries()
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != current)
        .filter_map(|(_, e)| {
            let d = hausdorff(&e.state, &cur.state);
            assert!(d > 0.0, "two REM entries share one position set");
            let w = d.powf(-gamma);
            (1.0 + w != 1.0).then_some((e, w))
        })
        .collect();
    let n_den = 1.0 + neighbours.iter().map(|(_, w)| w).sum::<f64>();
    candidates
        .iter()
        .map(|&a| {
            let (mut q_num, mut q_den) = (cur.q(a), 1.0);
            let mut n_num = cur.n(a) as f64;
            for (e, w) in &neighbours {
                let q = e.q(a);
                if q != 0.0 {
                    q_num += w * q;
                    q_den += w;
                }
                n_num += w * e.n(a) as f64;
            }
            (q_num / q_den, n_num / n_den)
        })
        .collect()
}

pub fn select_rem_ea(db: &RemDb, current: EntryId, candidates: &[ActiveSet], c: f64, gamma: f64) -> ActiveSet {
    let stats = rem_ea_estimates(db, current, candidates, gamma);
    ucb_rule(candidates, &stats, c)
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    entry: EntryId,
    action: ActiveSet,
    reward: f64,
}

/// A configured learner: strategy dispatch, its RNG and gradient-bandit state.
#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    rng: ChaCha8Rng,
    gb: GbState,
    pending: Option<Pending>,
}

impl Learner {
    pub fn new(cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            gb: GbState::default(),
            pending: None,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn select(&mut self, db: &RemDb, entry: EntryId, candidates: &[ActiveSet]) -> ActiveSet {
        let e = db.entry(entry);
        match self.cfg.strategy {
            Strategy::EpsilonGreedy => select_epsilon_greedy(e, candidates, self.cfg.beta, &mut self.rng),
            Strategy::Ucb => select_ucb(e, candidates, self.cfg.c),
            Strategy::GradientBandit => select_gradient_bandit(e, candidates, &mut self.rng),
            Strategy::RemEa => select_rem_ea(db, entry, candidates, self.cfg.c, self.cfg.gamma),
        }
    }

    /// Called when a new state has been recognised; settles a deferred
    /// discounted update against the new entry's best value.
    pub fn enter_state(&mut self, db: &mut RemDb, entry: EntryId) {
        if let Some(p) = self.pending.take() {
            let next_max = db.entry(entry).q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.apply(db, p, next_max);
        }
    }

    /// Feeds a reward in bit/J for `action` taken in `entry`.
    pub fn observe(
        &mut self,
        db: &mut RemDb,
        entry: EntryId,
        candidates: &[ActiveSet],
        action: ActiveSet,
        reward_bit_per_joule: f64,
    ) {
        let r = reward_bit_per_joule * self.cfg.reward_scale;
        if self.cfg.strategy == Strategy::GradientBandit {
            gb_update(db.entry_mut(entry), &mut self.gb, entry, candidates, action, r, self.cfg.alpha_gb);
            return;
        }
        let p = Pending { entry, action, reward: r };
        if self.cfg.xi == 0.0 {
            self.apply(db, p, 0.0);
        } else {
            self.pending = Some(p);
        }
    }

    /// Applies a deferred update with no successor state.
    pub fn finish(&mut self, db: &mut RemDb) {
        if let Some(p) = self.pending.take() {
            self.apply(db, p, 0.0);
        }
    }

    fn apply(&mut self, db: &mut RemDb, p: Pending, max_next_q: f64) {
        let e = db.entry_mut(p.entry);
        let q = q_update(e.q(p.action), p.reward, self.cfg.alpha, self.cfg.xi, max_next_q);
        e.record(p.action, q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UePositionSet;
    use crate::net::{dbm_to_watts, BsConfig, BsKind, ChannelParams, Network, PowerParams, RssMatrix};
    use crate::geometry::Point;
    use proptest::prelude::*;

    fn entry(n_bs: usize) -> RemEntry {
        RemEntry::new(UePositionSet::from_cells(vec![(0, 0)], 3.0).unwrap(), n_bs, 0.0)
    }

    fn a(n_bs: usize, i: usize) -> ActiveSet {
        ActiveSet::from_index(n_bs, i).unwrap()
    }

    fn outcome(ee: f64, served: usize, all_on: usize) -> EpisodeOutcome {
        EpisodeOutcome {
            bitrates: vec![],
            serving: vec![],
            served_count: served,
            all_on_served_count: all_on,
            avg_power: 1.0,
            median_bitrate: ee,
            ee,
            reward: 0.0,
        }
    }

    #[test]
    fn reward_gate() {
        assert_eq!(reward(&outcome(0.4e6, 50, 50)), 0.4e6);
        assert_eq!(reward(&outcome(0.9e6, 49, 50)), 0.0);
        assert_eq!(reward(&outcome(0.3e6, 50, 49)), 0.3e6);
    }

    #[test]
    fn q_update_examples() {
        assert!((q_update(0.2, 0.6, 0.25, 0.0, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(q_update(0.7, 0.1, 1.0, 0.0, 123.0), 0.1);
        assert_eq!(q_update(0.2, 0.6, 0.25, 0.0, 99.0), q_update(0.2, 0.6, 0.25, 0.0, 0.0));
        // discounted branch
        assert!((q_update(0.0, 1.0, 0.5, 0.5, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exploit_skips_untried_optimistic_actions() {
        let mut e = RemEntry::new(UePositionSet::from_cells(vec![(0, 0)], 3.0).unwrap(), 3, 0.3);
        let all: Vec<ActiveSet> = ActiveSet::all(3).collect();
        assert_eq!(exploit_action(&e, &all), a(3, 0));
        e.record(a(3, 3), 0.25);
        e.record(a(3, 2), 0.2);
        assert_eq!(greedy_action(&e, &all), a(3, 0));
        assert_eq!(exploit_action(&e, &all), a(3, 3));
        assert_eq!(exploit_action(&e, &[a(3, 1), a(3, 2)]), a(3, 2));
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_schedule(16, 2.0), 0.25);
        assert_eq!(epsilon_schedule(4, 1.0), 0.25);
        assert_eq!(epsilon_schedule(1, 3.0), 1.0);
        assert_eq!(epsilon_schedule(0, 1.0), 1.0);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut e = entry(3);
        e.q = vec![0.1, 0.5, 0.3, 0.2];
        let cands: Vec<_> = ActiveSet::all(3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(select_epsilon_greedy_with(&e, &cands, 0.0, &mut rng), a(3, 1));
        }
    }

    #[test]
    fn ties_prefer_fewer_bs() {
        let e = entry(4);
        let cands = vec![a(4, 7), a(4, 6), a(4, 4), a(4, 3)];
        assert_eq!(greedy_action(&e, &cands), a(4, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_epsilon_greedy_with(&e, &cands, 0.0, &mut rng), a(4, 4));
    }

    #[test]
    fn epsilon_one_is_uniform() {
        // chi-square goodness of fit over 8 candidates; 1% critical value for 7 dof is 18.475
        let e = entry(4);
        let cands: Vec<_> = ActiveSet::all(4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 20_000;
        let mut hist = [0usize; 8];
        for _ in 0..draws {
            hist[select_epsilon_greedy_with(&e, &cands, 1.0, &mut rng).index()] += 1;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 18.475, "chi2 = {chi2}, hist = {hist:?}");
    }

    #[test]
    fn ucb_examples() {
        let mut e = entry(2);
        e.q = vec![0.5, 0.5];
        e.n = vec![1, 3];
        let cands = vec![a(2, 0), a(2, 1)];
        assert_eq!(select_ucb(&e, &cands, 0.1), a(2, 0));
        let b0 = 0.1 * (4f64.ln() / 1.0).sqrt();
        let b1 = 0.1 * (4f64.ln() / 3.0).sqrt();
        assert!((b0 - 0.1177).abs() < 1e-4 && (b1 - 0.0680).abs() < 1e-4);

        e.q = vec![0.1, 0.9];
        e.n = vec![5, 0];
        assert_eq!(select_ucb(&e, &cands, 0.0), a(2, 1));

        e.q = vec![0.1, 0.9];
        e.n = vec![1, 50];
        assert_eq!(select_ucb(&e, &cands, 0.0), a(2, 1));
    }

    #[test]
    fn ucb_unvisited_ties_prefer_fewer_bs() {
        let mut e = entry(3);
        e.n = vec![2, 0, 0, 1];
        e.q = vec![0.9, 0.0, 0.0, 0.5];
        let cands: Vec<_> = ActiveSet::all(3).collect();
        assert_eq!(select_ucb(&e, &cands, 0.01), a(3, 1));
    }

    #[test]
    fn softmax_uniform_and_gb_step() {
        let e = entry(3);
        let cands: Vec<_> = ActiveSet::all(3).collect();
        assert!(softmax(&e, &cands).iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let mut e = entry(2);
        let mut gb = GbState::default();
        let cands = vec![a(2, 0), a(2, 1)];
        gb_update(&mut e, &mut gb, 0, &cands, a(2, 0), 1.0, 0.1);
        assert!((e.q[0] - 0.05).abs() < 1e-15 && (e.q[1] + 0.05).abs() < 1e-15);
        assert_eq!(e.n, vec![1, 0]);
        assert_eq!(gb.baseline(0), 1.0);

        let before = e.q.clone();
        gb_update(&mut e, &mut gb, 0, &cands, a(2, 1), 1.0, 0.1);
        assert_eq!(e.q, before);
        assert_eq!(gb.reward_count[0], 2);
    }

    #[test]
    fn gb_sampling_follows_softmax() {
        let mut e = entry(2);
        e.q = vec![0.0, 2.0f64.ln()];
        let cands = vec![a(2, 0), a(2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..30_000)
            .filter(|_| select_gradient_bandit(&e, &cands, &mut rng) == a(2, 1))
            .count();
        let frac = hits as f64 / 30_000.0;
        assert!((frac - 2.0 / 3.0).abs() < 0.015, "{frac}");
    }

    fn two_entry_db() -> RemDb {
        let mut db = RemDb::new(1.0, 2, 0.0).unwrap();
        db.match_or_insert(UePositionSet::from_cells(vec![(0, 0)], 1.0).unwrap()).unwrap();
        db.match_or_insert(UePositionSet::from_cells(vec![(2, 0)], 1.0).unwrap()).unwrap();
        db
    }

    #[test]
    fn rem_ea_hand_values() {
        let mut db = two_entry_db();
        let act = a(2, 1);
        db.entry_mut(0).q[1] = 0.4;
        db.entry_mut(0).n[1] = 2;
        db.entry_mut(1).q[1] = 0.8;
        db.entry_mut(1).n[1] = 4;
        let est = rem_ea_estimates(&db, 0, &[act], 1.0);
        assert!((est[0].0 - 0.8 / 1.5).abs() < 1e-12);
        assert!((est[0].0 - 0.5333).abs() < 1e-4);
        assert!((est[0].1 - 4.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn rem_ea_excludes_zero_values_only_from_value_average() {
        let mut db = two_entry_db();
        db.entry_mut(0).q[0] = 0.4;
        db.entry_mut(0).n[0] = 1;
        db.entry_mut(1).n[0] = 3; // visited, zero reward
        let est = rem_ea_estimates(&db, 0, &[a(2, 0)], 1.0);
        assert_eq!(est[0].0, 0.4);
        assert!((est[0].1 - (1.0 + 1.5) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn rem_ea_single_entry_is_ucb() {
        let mut db = RemDb::new(3.0, 3, 0.0).unwrap();
        db.match_or_insert(UePositionSet::from_cells(vec![(1, 1)], 3.0).unwrap()).unwrap();
        let cands: Vec<_> = ActiveSet::all(3).collect();
        let e = db.entry_mut(0);
        e.q = vec![0.3, 0.31, 0.29, 0.2];
        e.n = vec![4, 2, 7, 1];
        assert_eq!(
            select_rem_ea(&db, 0, &cands, 0.05, 1.5),
            select_ucb(db.entry(0), &cands, 0.05)
        );
    }

    fn pico_net(n_pico: usize) -> Network {
        let mut bs = vec![BsConfig::new(0, BsKind::Macro, Point::new(0.0, 0.0), 128, 46.0).unwrap()];
        for i in 1..=n_pico {
            bs.push(BsConfig::new(i, BsKind::Pico, Point::new(100.0 * i as f64, 0.0), 32, 30.0).unwrap());
        }
        Network {
            bs,
            power: PowerParams::default(),
            channel: ChannelParams::default(),
            rss_threshold: dbm_to_watts(-120.0),
            map_seed: 0,
        }
    }

    #[test]
    fn asr_keeps_indispensable_pico() {
        let net = pico_net(5);
        // UE 0 hears everyone; UE 1 only pico 3.
        let rows = vec![
            vec![dbm_to_watts(-70.0); 6],
            vec![
                dbm_to_watts(-140.0),
                dbm_to_watts(-140.0),
                dbm_to_watts(-140.0),
                dbm_to_watts(-100.0),
                dbm_to_watts(-140.0),
                dbm_to_watts(-140.0),
            ],
        ];
        let ctx = EpisodeContext::from_rss(&net, RssMatrix::from_rows(rows).unwrap());
        let kept = asr_filter(&ctx);
        // brute-force enumeration: every action with pico 3 on, and nothing else
        let expected: Vec<ActiveSet> = ActiveSet::all(6).filter(|a| a.is_active(3)).collect();
        assert_eq!(kept.len(), 16);
        assert_eq!(kept, expected);
    }

    #[test]
    fn asr_keeps_everything_under_macro_coverage() {
        let net = pico_net(3);
        let rows = vec![vec![dbm_to_watts(-70.0), dbm_to_watts(-130.0), dbm_to_watts(-80.0), dbm_to_watts(-90.0)]; 3];
        let ctx = EpisodeContext::from_rss(&net, RssMatrix::from_rows(rows).unwrap());
        assert_eq!(asr_filter(&ctx).len(), 8);
    }

    #[test]
    fn learner_filter_update() {
        let mut db = RemDb::new(3.0, 2, 0.0).unwrap();
        let m = db.match_or_insert(UePositionSet::from_cells(vec![(0, 0)], 3.0).unwrap()).unwrap();
        let mut l = Learner::new(LearnerConfig { alpha: 0.25, ..LearnerConfig::default() }).unwrap();
        let cands: Vec<_> = ActiveSet::all(2).collect();
        l.observe(&mut db, m.entry, &cands, a(2, 1), 0.4e6);
        assert!((db.entry(0).q[1] - 0.1).abs() < 1e-15);
        assert_eq!(db.entry(0).n[1], 1);
    }

    #[test]
    fn discounted_updates_wait_for_next_state() {
        let mut db = RemDb::new(3.0, 2, 0.0).unwrap();
        db.match_or_insert(UePositionSet::from_cells(vec![(0, 0)], 3.0).unwrap()).unwrap();
        db.match_or_insert(UePositionSet::from_cells(vec![(9, 0)], 3.0).unwrap()).unwrap();
        db.entry_mut(1).q = vec![0.2, 0.6];
        let cfg = LearnerConfig { alpha: 0.5, xi: 0.5, reward_scale: 1.0, ..LearnerConfig::default() };
        let mut l = Learner::new(cfg).unwrap();
        let cands: Vec<_> = ActiveSet::all(2).collect();
        l.observe(&mut db, 0, &cands, a(2, 0), 1.0);
        assert_eq!(db.entry(0).n[0], 0);
        l.enter_state(&mut db, 1);
        assert!((db.entry(0).q[0] - 0.5 * (1.0 + 0.5 * 0.6)).abs() < 1e-15);
        assert_eq!(db.entry(0).n[0], 1);
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig { beta: 0.5, ..Default::default() }.validate().is_err());
        let e = LearnerConfig { gamma: -1.0, ..Default::default() }.validate().unwrap_err();
        assert!(e.to_string().contains("learner.gamma"));
    }

    proptest! {
        #[test]
        fn filter_closed_form(q0 in -1.0f64..1.0, r in 0.0f64..1.0, alpha in 0.01f64..1.0, k in 1usize..60) {
            let mut q = q0;
            for _ in 0..k {
                q = q_update(q, r, alpha, 0.0, 0.0);
            }
            let decay = (1.0 - alpha).powi(k as i32);
            let closed = decay * q0 + (1.0 - decay) * r;
            prop_assert!((q - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }

        #[test]
        fn softmax_shift_invariant(qs in prop::collection::vec(-3.0f64..3.0, 4), shift in -50.0f64..50.0) {
            let mut e = entry(3);
            e.q = qs.clone();
            let cands: Vec<_> = ActiveSet::all(3).collect();
            let p1 = softmax(&e, &cands);
            e.q = qs.iter().map(|v| v + shift).collect();
            let p2 = softmax(&e, &cands);
            for (x, y) in p1.iter().zip(&p2) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn ucb_relabelling_commutes(
            qs in prop::collection::vec(0.0f64..1.0, 4),
            ns in prop::collection::vec(1u64..20, 4),
            c in 0.0f64..0.5,
        ) {
            // Permuting which action holds which statistics permutes the choice.
            let cands: Vec<_> = ActiveSet::all(3).collect();
            let mut e = entry(3);
            e.q = qs.clone();
            e.n = ns.clone();
            let chosen = select_ucb(&e, &cands, c);
            let perm = [2usize, 0, 3, 1];
            let mut p = entry(3);
            for (i, &j) in perm.iter().enumerate() {
                p.q[j] = qs[i];
                p.n[j] = ns[i];
            }
            let scores: Vec<f64> = (0..4).map(|i| qs[i] + c * ((ns.iter().sum::<u64>() as f64).ln() / ns[i] as f64).sqrt()).collect();
            let distinct = scores.iter().all(|s| scores.iter().filter(|t| (*t - s).abs() < 1e-12).count() == 1);
            prop_assume!(distinct);
            prop_assert_eq!(select_ucb(&p, &cands, c).index(), perm[chosen.index()]);
        }
    }
}
