//! Experiment orchestration: the episode loop, convergence measurement,
//! parameter sweeps, policy comparison and CSV export.
//!
//! One pass visits every batch of the plan once. The UEs replay the same
//! trajectories on every pass while the channel realization changes with
//! each episode, so a batch usually maps to the same REM entry on every pass.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_oracle, swes};
use crate::error::{Error, Result};
use crate::geometry::quantize;
use crate::net::{EpisodeContext, LargeScale, UeState};
use crate::rem::{ActiveSet, RemDb};
use crate::rl::{asr_filter, exploit_action, Learner, LearnerConfig};
use crate::scenario::{ConvergenceRule, NetworkScenario};

/// One row of a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub pass: usize,
    pub batch: usize,
    pub state_id: usize,
    pub new_state: bool,
    /// Action encoding; see [`ActiveSet`].
    pub action: usize,
    pub active_bs: u32,
    pub candidates: usize,
    /// bit/J
    pub reward: f64,
    /// bit/J
    pub ee: f64,
    /// bit/s
    pub median_bitrate: f64,
    /// W
    pub avg_power: f64,
    pub served_count: usize,
    pub all_on_served_count: usize,
    pub entry_count: usize,
}

/// Result of [`converge_metric`] on one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// First index from which every moving average stays near the final
    /// mean; `None` when the trace never settles.
    pub index: Option<usize>,
    pub final_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateConvergence {
    pub state_id: usize,
    pub visits: usize,
    /// In visits of this state; `None` if unsettled or too few visits.
    pub converged_at: Option<usize>,
    pub final_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub records: Vec<EpisodeRecord>,
    /// Mean reward of each pass, bit/J.
    pub pass_rewards: Vec<f64>,
    /// Convergence of `pass_rewards`, in passes.
    pub convergence: Convergence,
    pub per_state: Vec<StateConvergence>,
    /// W, constant for a given network.
    pub all_on_power: f64,
}

impl RunReport {
    pub fn passes(&self) -> usize {
        self.pass_rewards.len()
    }

    /// Passes to converge, counting an unsettled run as the full run length.
    pub fn passes_to_converge(&self) -> usize {
        self.convergence.index.unwrap_or(self.passes())
    }

    pub fn final_mean_reward(&self) -> f64 {
        self.convergence.final_mean
    }

    pub fn mean_power(&self) -> f64 {
        mean(self.records.iter().map(|r| r.avg_power))
    }

    /// Fraction of the all-on power saved on average.
    pub fn energy_savings(&self) -> f64 {
        energy_savings(&self.records, self.all_on_power)
    }

    pub fn entry_count(&self) -> usize {
        self.records.last().map_or(0, |r| r.entry_count)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let conv = match self.convergence.index {
            Some(i) => i.to_string(),
            None => "none".into(),
        };
        let settled = self.per_state.iter().filter(|p| p.converged_at.is_some()).count();
        writeln!(s, "policy: {}", self.label).unwrap();
        writeln!(s, "episodes: {}", self.records.len()).unwrap();
        writeln!(s, "passes: {}", self.passes()).unwrap();
        writeln!(s, "rem_entries: {}", self.entry_count()).unwrap();
        writeln!(s, "passes_to_converge: {conv}").unwrap();
        writeln!(s, "final_mean_reward_mbit_per_j: {:.6}", self.final_mean_reward() * 1e-6).unwrap();
        writeln!(s, "mean_power_w: {:.3}", self.mean_power()).unwrap();
        writeln!(s, "all_on_power_w: {:.3}", self.all_on_power).unwrap();
        writeln!(s, "energy_savings_pct: {:.2}", 100.0 * self.energy_savings()).unwrap();
        writeln!(s, "states_converged: {settled}/{}", self.per_state.len()).unwrap();
        s
    }

    pub fn export(&self, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
        let path = path.as_ref();
        let text = match format {
            ExportFormat::Csv => self.to_csv()?,
            ExportFormat::Summary => self.summary(),
        };
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Summary,
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// `1 - mean power / all-on power` over the records.
pub fn energy_savings(records: &[EpisodeRecord], all_on_power: f64) -> f64 {
    1.0 - mean(records.iter().map(|r| r.avg_power)) / all_on_power
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records_csv(&text)
}

pub fn parse_records_csv(text: &str) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Episodes until the moving average of `trace` settles.
///
/// `MA[i]` is the mean of `trace[i..i + window]`; the final mean is the mean
/// of the last `final_window` samples (or all of them, if fewer). The result
/// is the smallest `i` such that every `MA[j]`, `j >= i`, lies within
/// `tolerance * |final mean|` of the final mean.
pub fn converge_metric(trace: &[f64], rule: &ConvergenceRule) -> Result<Convergence> {
    let k = rule.window;
    if k == 0 {
        return Err(Error::Contract("moving-average window must be at least 1".into()));
    }
    if trace.len() < k {
        return Err(Error::Contract(format!(
            "trace of {} samples is shorter than the window of {k}",
            trace.len()
        )));
    }
    let tail = rule.final_window.clamp(1, trace.len());
    let final_mean = mean(trace[trace.len() - tail..].iter().copied());
    let band = rule.tolerance * final_mean.abs();
    let mut index = None;
    for i in (0..=trace.len() - k).rev() {
        let ma = mean(trace[i..i + k].iter().copied());
        if (ma - final_mean).abs() <= band {
            index = Some(i);
        } else {
            break;
        }
    }
    Ok(Convergence { index, final_mean })
}

struct Batch {
    ues: Vec<UeState>,
    large_scale: LargeScale,
}

fn prepare_batches(sc: &NetworkScenario) -> Vec<Batch> {
    (0..sc.plan.batches)
        .map(|b| {
            let ues = sc.ues_at(sc.batch_time(b));
            let large_scale = sc.network.large_scale(&ues);
            Batch { ues, large_scale }
        })
        .collect()
}

fn fresh_db(sc: &NetworkScenario, cfg: &LearnerConfig) -> Result<RemDb> {
    RemDb::new(sc.grid, sc.network.n_bs(), cfg.optimistic_init)
}

/// Runs the learner over the scenario's episode plan.
///
/// A warm-start REM must use the scenario's grid size and BS count.
pub fn run(sc: &NetworkScenario, cfg: &LearnerConfig, rem: Option<RemDb>) -> Result<(RunReport, RemDb)> {
    let mut db = match rem {
        Some(db) => {
            if db.grid() != sc.grid || db.n_bs() != sc.network.n_bs() {
                return Err(Error::Contract(format!(
                    "REM (grid {} m, {} BSs) does not fit the scenario (grid {} m, {} BSs)",
                    db.grid(),
                    db.n_bs(),
                    sc.grid,
                    sc.network.n_bs()
                )));
            }
            db
        }
        None => fresh_db(sc, cfg)?,
    };
    let mut learner = Learner::new(cfg.clone())?;
    let net = &sc.network;
    let all_actions: Vec<ActiveSet> = ActiveSet::all(net.n_bs()).collect();
    let batches = prepare_batches(sc);
    let mut records = Vec::with_capacity(sc.plan.passes * batches.len());

    for pass in 0..sc.plan.passes {
        for (b, batch) in batches.iter().enumerate() {
            let positions: Vec<_> = batch.ues.iter().map(|u| u.position).collect();
            let m = db.match_or_insert(quantize(&positions, sc.grid)?)?;
            learner.enter_state(&mut db, m.entry);
            let ctx = EpisodeContext::from_rss(net, net.rss_from(&batch.large_scale, sc.episode_seed(pass, b)));
            let candidates = if cfg.asr_enabled { asr_filter(&ctx) } else { all_actions.clone() };
            let action = learner.select(&db, m.entry, &candidates);
            let out = ctx.outcome(&action)?;
            learner.observe(&mut db, m.entry, &candidates, action, out.reward);
            records.push(EpisodeRecord {
                episode: records.len(),
                pass,
                batch: b,
                state_id: m.entry,
                new_state: m.was_new,
                action: action.index(),
                active_bs: action.active_count(),
                candidates: candidates.len(),
                reward: out.reward,
                ee: out.ee,
                median_bitrate: out.median_bitrate,
                avg_power: out.avg_power,
                served_count: out.served_count,
                all_on_served_count: out.all_on_served_count,
                entry_count: db.len(),
            });
        }
    }
    learner.finish(&mut db);

    let all_on_power = net.total_power(&ActiveSet::all_on(net.n_bs()))?;
    let report = build_report(cfg.label(), records, &sc.convergence, all_on_power, db.len())?;
    Ok((report, db))
}

/// Derives pass and per-state convergence from the episode records.
pub fn build_report(
    label: String,
    records: Vec<EpisodeRecord>,
    rule: &ConvergenceRule,
    all_on_power: f64,
    n_states: usize,
) -> Result<RunReport> {
    let passes = records.iter().map(|r| r.pass + 1).max().unwrap_or(0);
    let mut sums = vec![(0.0, 0usize); passes];
    let mut per_state_trace: Vec<Vec<f64>> = vec![Vec::new(); n_states];
    for r in &records {
        sums[r.pass].0 += r.reward;
        sums[r.pass].1 += 1;
        if r.state_id >= per_state_trace.len() {
            per_state_trace.resize(r.state_id + 1, Vec::new());
        }
        per_state_trace[r.state_id].push(r.reward);
    }
    let pass_rewards: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
    let convergence = if pass_rewards.len() >= rule.window {
        converge_metric(&pass_rewards, rule)?
    } else {
        Convergence { index: None, final_mean: mean(pass_rewards.iter().copied()) }
    };
    let per_state = per_state_trace
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(id, t)| {
            let c = if t.len() >= rule.window {
                converge_metric(t, rule).expect("length checked")
            } else {
                Convergence { index: None, final_mean: mean(t.iter().copied()) }
            };
            StateConvergence { state_id: id, visits: t.len(), converged_at: c.index, final_mean: c.final_mean }
        })
        .collect();
    Ok(RunReport { label, records, pass_rewards, convergence, per_state, all_on_power })
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: String,
    /// Seed as text, or `mean` on aggregate rows.
    pub seed: String,
    /// bit/J
    pub final_mean_reward: f64,
    /// Unsettled runs count as the full number of passes.
    pub passes_to_converge: f64,
    /// Share of runs that settled.
    pub converged: f64,
    pub energy_savings: f64,
    pub rem_entries: f64,
}

/// Seeds the channel realizations and the learner from one sweep seed.
pub fn seeded(sc: &NetworkScenario, cfg: &LearnerConfig, seed: u64) -> Result<(NetworkScenario, LearnerConfig)> {
    let sc = sc.modified(|c| {
        c.seeds.channel = seed;
        c.seeds.learner = seed;
    })?;
    let cfg = LearnerConfig { rng_seed: seed, ..cfg.clone() };
    Ok((sc, cfg))
}

/// Runs every (config, seed) cell, in parallel; rows keep grid order and
/// each config is followed by its mean row.
pub fn sweep(sc: &NetworkScenario, configs: &[LearnerConfig], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::Contract("sweep needs at least one learner configuration".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Contract("sweep needs at least one seed".into()));
    }
    let cells: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(c, seed)| {
            let (sc, cfg) = seeded(sc, &configs[c], seed)?;
            let (rep, _) = run(&sc, &cfg, None)?;
            Ok(SweepRow {
                config: configs[c].label(),
                seed: seed.to_string(),
                final_mean_reward: rep.final_mean_reward(),
                passes_to_converge: rep.passes_to_converge() as f64,
                converged: if rep.convergence.index.is_some() { 1.0 } else { 0.0 },
                energy_savings: rep.energy_savings(),
                rem_entries: rep.entry_count() as f64,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(rows.len() + configs.len());
    for chunk in rows.chunks(seeds.len()) {
        out.extend_from_slice(chunk);
        let avg = |f: fn(&SweepRow) -> f64| mean(chunk.iter().map(f));
        out.push(SweepRow {
            config: chunk[0].config.clone(),
            seed: "mean".into(),
            final_mean_reward: avg(|r| r.final_mean_reward),
            passes_to_converge: avg(|r| r.passes_to_converge),
            converged: avg(|r| r.converged),
            energy_savings: avg(|r| r.energy_savings),
            rem_entries: avg(|r| r.rem_entries),
        });
    }
    Ok(out)
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Baseline policies on one batch under one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub batch: usize,
    pub oracle_action: usize,
    pub oracle_reward: f64,
    pub oracle_power: f64,
    pub swes_action: usize,
    pub swes_reward: f64,
    pub swes_power: f64,
    pub all_on_reward: f64,
    pub all_on_power: f64,
    pub asr_candidates: usize,
}

/// Oracle, SWES and all-on for every batch of `pass`.
pub fn baselines(sc: &NetworkScenario, pass: usize, swes_budget: f64) -> Result<Vec<BaselineRow>> {
    let net = &sc.network;
    let all_on = ActiveSet::all_on(net.n_bs());
    prepare_batches(sc)
        .iter()
        .enumerate()
        .map(|(b, batch)| {
            let ctx = EpisodeContext::from_rss(net, net.rss_from(&batch.large_scale, sc.episode_seed(pass, b)));
            let o = exhaustive_oracle(&ctx)?;
            let s = swes(&ctx, swes_budget)?;
            let so = ctx.outcome(&s)?;
            let ao = ctx.outcome(&all_on)?;
            Ok(BaselineRow {
                batch: b,
                oracle_action: o.best.index(),
                oracle_reward: o.best_reward,
                oracle_power: net.total_power(&o.best)?,
                swes_action: s.index(),
                swes_reward: so.reward,
                swes_power: so.avg_power,
                all_on_reward: ao.reward,
                all_on_power: ao.avg_power,
                asr_candidates: asr_filter(&ctx).len(),
            })
        })
        .collect()
}

/// Learned greedy policy next to the baselines, evaluated on a fresh
/// channel realization (the pass after the training plan).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub batch: usize,
    pub learned_action: usize,
    pub learned_reward: f64,
    pub learned_power: f64,
    pub oracle_reward: f64,
    pub oracle_power: f64,
    pub swes_reward: f64,
    pub swes_power: f64,
    pub all_on_reward: f64,
    pub all_on_power: f64,
}

/// The learned policy exploits the REM (see [`exploit_action`]) among the
/// ASR candidates when `asr` is set, otherwise among all actions; states
/// missing from the REM fall back to all-on.
pub fn compare(sc: &NetworkScenario, db: &RemDb, asr: bool, swes_budget: f64) -> Result<Vec<CompareRow>> {
    let net = &sc.network;
    let eval_pass = sc.plan.passes;
    let rows = baselines(sc, eval_pass, swes_budget)?;
    prepare_batches(sc)
        .iter()
        .zip(rows)
        .enumerate()
        .map(|(b, (batch, base))| {
            let positions: Vec<_> = batch.ues.iter().map(|u| u.position).collect();
            let ctx = EpisodeContext::from_rss(net, net.rss_from(&batch.large_scale, sc.episode_seed(eval_pass, b)));
            let candidates: Vec<ActiveSet> =
                if asr { asr_filter(&ctx) } else { ActiveSet::all(net.n_bs()).collect() };
            let action = match db.find(&quantize(&positions, sc.grid)?) {
                Some((id, _)) => exploit_action(db.entry(id), &candidates),
                None => ActiveSet::all_on(net.n_bs()),
            };
            let o = ctx.outcome(&action)?;
            Ok(CompareRow {
                batch: b,
                learned_action: action.index(),
                learned_reward: o.reward,
                learned_power: o.avg_power,
                oracle_reward: base.oracle_reward,
                oracle_power: base.oracle_power,
                swes_reward: base.swes_reward,
                swes_power: base.swes_power,
                all_on_reward: base.all_on_reward,
                all_on_power: base.all_on_power,
            })
        })
        .collect()
}

/// Mean reward and power savings per policy over compare rows.
pub fn compare_summary(rows: &[CompareRow]) -> String {
    let m = |f: fn(&CompareRow) -> f64| mean(rows.iter().map(f));
    let all_on_p = m(|r| r.all_on_power);
    let all_on_r = m(|r| r.all_on_reward);
    let mut s = String::new();
    writeln!(s, "policy,mean_reward_mbit_per_j,energy_savings_pct,gain_vs_all_on_pct").unwrap();
    for (name, r, p) in [
        ("all_on", all_on_r, all_on_p),
        ("swes", m(|r| r.swes_reward), m(|r| r.swes_power)),
        ("oracle", m(|r| r.oracle_reward), m(|r| r.oracle_power)),
        ("learned", m(|r| r.learned_reward), m(|r| r.learned_power)),
    ] {
        let gain = if all_on_r > 0.0 { 100.0 * (r / all_on_r - 1.0) } else { 0.0 };
        writeln!(s, "{name},{:.6},{:.2},{:.2}", r * 1e-6, 100.0 * (1.0 - p / all_on_p), gain).unwrap();
    }
    s
}
