//! Reference policies: exhaustive search over all actions and the SWES
//! greedy switch-off heuristic.

use crate::error::{Error, Result};
use crate::net::{EpisodeContext, Network, UeState};
use crate::rem::ActiveSet;
use crate::rl::argmax_by;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: ActiveSet,
    pub best_reward: f64,
    /// Reward of every action, indexed by action encoding.
    pub rewards: Vec<f64>,
}

fn best_of(n_bs: usize, rewards: Vec<f64>) -> OracleResult {
    let all: Vec<ActiveSet> = ActiveSet::all(n_bs).collect();
    let best = argmax_by(&all, |a| rewards[a.index()]);
    OracleResult {
        best,
        best_reward: rewards[best.index()],
        rewards,
    }
}

/// Evaluates every action under one channel realization.
pub fn exhaustive_oracle(ctx: &EpisodeContext) -> Result<OracleResult> {
    let n_bs = ctx.network().n_bs();
    let rewards = ActiveSet::all(n_bs)
        .map(|a| ctx.outcome(&a).map(|o| o.reward))
        .collect::<Result<Vec<_>>>()?;
    Ok(best_of(n_bs, rewards))
}

/// Oracle on the mean reward over several episode seeds.
pub fn exhaustive_oracle_averaged(net: &Network, ues: &[UeState], episode_seeds: &[u64]) -> Result<OracleResult> {
    if episode_seeds.is_empty() {
        return Err(Error::Contract("averaged oracle needs at least one seed".into()));
    }
    let ls = net.large_scale(ues);
    let mut sum = vec![0.0; ActiveSet::action_count(net.n_bs())];
    for &seed in episode_seeds {
        if ues.is_empty() {
            return Err(Error::EmptyState);
        }
        let ctx = EpisodeContext::from_rss(net, net.rss_from(&ls, seed));
        for (s, r) in sum.iter_mut().zip(exhaustive_oracle(&ctx)?.rewards) {
            *s += r;
        }
    }
    let k = episode_seeds.len() as f64;
    Ok(best_of(net.n_bs(), sum.into_iter().map(|s| s / k).collect()))
}

/// SWES adapted to full-buffer traffic.
///
/// Starting from all-on, each round evaluates switching off every active
/// pico. A removal is admissible when all UEs the all-on network serves stay
/// served and the median bitrate stays within `budget` of the initial all-on
/// median (the budget is cumulative). The admissible removal that lowers the
/// median least is applied, lowest id on ties, until none is left.
pub fn swes(ctx: &EpisodeContext, budget: f64) -> Result<ActiveSet> {
    if !(0.0..1.0).contains(&budget) {
        return Err(Error::Contract(format!("degradation budget must lie in [0, 1), got {budget}")));
    }
    let n_bs = ctx.network().n_bs();
    let mut current = ActiveSet::all_on(n_bs);
    let initial = ctx.outcome(&current)?.median_bitrate;
    let floor = (1.0 - budget) * initial;
    loop {
        let here = ctx.outcome(&current)?.median_bitrate;
        let mut pick: Option<(f64, ActiveSet)> = None;
        for bs in 1..n_bs {
            if !current.is_active(bs) {
                continue;
            }
            let trial = current.with(bs, false)?;
            let o = ctx.outcome(&trial)?;
            if o.served_count < ctx.all_on_served() || o.median_bitrate < floor {
                continue;
            }
            let drop = here - o.median_bitrate;
            if pick.is_none_or(|(d, _)| drop < d) {
                pick = Some((drop, trial));
            }
        }
        match pick {
            Some((_, next)) => current = next,
            None => return Ok(current),
        }
    }
}
