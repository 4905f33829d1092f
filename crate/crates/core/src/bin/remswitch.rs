use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use remswitch::harness::{self, ExportFormat};
use remswitch::scenario::Loaded;
use remswitch::{Error, LearnerConfig, NetworkScenario, RemDb, Result, Strategy};

/// REM-driven base-station switching: simulate, learn and compare policies.
#[derive(Parser)]
#[command(name = "remswitch", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one learner over the scenario's episode plan.
    Run {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[command(flatten)]
        learner: LearnerArgs,
        /// Warm-start from this REM file.
        #[arg(long)]
        rem_in: Option<PathBuf>,
        /// Write the final REM here.
        #[arg(long)]
        rem_out: Option<PathBuf>,
        /// Per-episode CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary text file (also printed to stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run a grid of learner configurations over several seeds.
    Sweep {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[command(flatten)]
        learner: LearnerArgs,
        /// Parameter values to sweep, e.g. `beta=1,2,3`; repeat for a product grid.
        #[arg(long = "vary", value_name = "NAME=V1,V2,..")]
        vary: Vec<String>,
        /// Seeds as a list or range, e.g. `1-20` or `1,4,9`.
        #[arg(long, default_value = "1-5")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive-search oracle, SWES and all-on on every batch of one pass.
    Oracle {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        pass: usize,
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SWES actions on every batch of one pass.
    Swes {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        pass: usize,
        /// Allowed cumulative median-bitrate degradation.
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a learner, then score it against oracle, SWES and all-on.
    Compare {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[command(flatten)]
        learner: LearnerArgs,
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// REM file utilities.
    Rem {
        #[command(subcommand)]
        cmd: RemCmd,
    },
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
}

#[derive(Subcommand)]
enum RemCmd {
    /// Print the entries of a REM file.
    Inspect {
        path: PathBuf,
        /// Also list every action's value and count.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Print the resolved scenario and the defaults that were applied.
    Show {
        #[command(flatten)]
        sc: ScenarioArgs,
    },
    /// Print the bundled default scenario file.
    Default,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML; the bundled default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Scenario, channel and learner seeds.
    #[arg(long, num_args = 3, value_names = ["SCENARIO", "CHANNEL", "LEARNER"])]
    seed: Option<Vec<u64>>,
    /// REM grid size in meters.
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
}

#[derive(Args, Default)]
struct LearnerArgs {
    /// epsilon_greedy | ucb | gradient_bandit | rem_ea
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    alpha_gb: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Enable action space reduction.
    #[arg(long)]
    asr: bool,
    #[arg(long)]
    optimistic_init: Option<f64>,
    #[arg(long)]
    reward_scale: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Loaded> {
        let loaded = match &self.scenario {
            Some(p) => NetworkScenario::load(p)?,
            None => NetworkScenario::from_toml_str(NetworkScenario::default_toml())?,
        };
        let scenario = loaded.scenario.modified(|c| {
            if let Some(s) = &self.seed {
                c.seeds.scenario = s[0];
                c.seeds.channel = s[1];
                c.seeds.learner = s[2];
            }
            if let Some(g) = self.grid {
                c.grid_m = g;
            }
            if let Some(p) = self.passes {
                c.plan.passes = p;
            }
            if let Some(b) = self.batches {
                c.plan.batches = b;
            }
        })?;
        Ok(Loaded { scenario, defaults: loaded.defaults })
    }

    fn scenario(&self) -> Result<NetworkScenario> {
        let l = self.load()?;
        if !l.defaults.is_empty() {
            eprintln!("{} scenario fields took default values (see `remswitch scenario show`)", l.defaults.len());
        }
        Ok(l.scenario)
    }
}

impl LearnerArgs {
    fn config(&self, sc: &NetworkScenario) -> Result<LearnerConfig> {
        let mut c = sc.learner.clone();
        c.rng_seed = sc.seeds.learner;
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(alpha, xi, beta, c, alpha_gb, gamma, optimistic_init, reward_scale);
        if self.asr {
            c.asr_enabled = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.into(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Validation { path: "--seeds".into(), reason: format!("cannot parse `{s}`") };
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn expand_grid(base: &LearnerConfig, vary: &[String]) -> Result<Vec<LearnerConfig>> {
    let mut grid = vec![base.clone()];
    for item in vary {
        let bad = |why: &str| Error::Validation { path: format!("--vary {item}"), reason: why.into() };
        let (name, values) = item.split_once('=').ok_or_else(|| bad("expected NAME=V1,V2,.."))?;
        let mut next = Vec::new();
        for cfg in &grid {
            for v in values.split(',') {
                let mut c = cfg.clone();
                let num = || v.trim().parse::<f64>().map_err(|_| bad("not a number"));
                match name.trim() {
                    "alpha" => c.alpha = num()?,
                    "xi" => c.xi = num()?,
                    "beta" => c.beta = num()?,
                    "c" => c.c = num()?,
                    "alpha_gb" => c.alpha_gb = num()?,
                    "gamma" => c.gamma = num()?,
                    "optimistic_init" => c.optimistic_init = num()?,
                    "strategy" => c.strategy = v.trim().parse()?,
                    "asr" => c.asr_enabled = v.trim().parse().map_err(|_| bad("expected true or false"))?,
                    _ => return Err(bad("unknown learner parameter")),
                }
                c.validate()?;
                next.push(c);
            }
        }
        grid = next;
    }
    Ok(grid)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { sc, learner, rem_in, rem_out, out, summary } => {
            let sc = sc.scenario()?;
            let cfg = learner.config(&sc)?;
            let warm = rem_in.map(RemDb::load).transpose()?;
            let (report, db) = harness::run(&sc, &cfg, warm)?;
            if let Some(p) = out {
                report.export(p, ExportFormat::Csv)?;
            }
            if let Some(p) = summary {
                report.export(p, ExportFormat::Summary)?;
            }
            if let Some(p) = rem_out {
                db.save(p)?;
            }
            print!("{}", report.summary());
        }
        Cmd::Sweep { sc, learner, vary, seeds, out } => {
            let sc = sc.scenario()?;
            let grid = expand_grid(&learner.config(&sc)?, &vary)?;
            let seeds = parse_seeds(&seeds)?;
            let rows = harness::sweep(&sc, &grid, &seeds)?;
            write_or_print(out.as_deref(), &harness::rows_to_csv(&rows)?)?;
        }
        Cmd::Oracle { sc, pass, budget, out } => {
            let sc = sc.scenario()?;
            let rows = harness::baselines(&sc, pass, budget)?;
            write_or_print(out.as_deref(), &harness::rows_to_csv(&rows)?)?;
        }
        Cmd::Swes { sc, pass, budget, out } => {
            let sc = sc.scenario()?;
            let rows = harness::baselines(&sc, pass, budget)?;
            let mut text = String::from("batch,swes_action,swes_bits,swes_reward,swes_power\n");
            for r in rows {
                let bits = remswitch::ActiveSet::from_index(sc.network.n_bs(), r.swes_action)?;
                text += &format!("{},{},{},{},{}\n", r.batch, r.swes_action, bits, r.swes_reward, r.swes_power);
            }
            write_or_print(out.as_deref(), &text)?;
        }
        Cmd::Compare { sc, learner, budget, out } => {
            let sc = sc.scenario()?;
            let cfg = learner.config(&sc)?;
            let (_, db) = harness::run(&sc, &cfg, None)?;
            let rows = harness::compare(&sc, &db, cfg.asr_enabled, budget)?;
            if let Some(p) = out {
                write_or_print(Some(&p), &harness::rows_to_csv(&rows)?)?;
            }
            print!("{}", harness::compare_summary(&rows));
        }
        Cmd::Rem { cmd: RemCmd::Inspect { path, full } } => {
            let db = RemDb::load(&path)?;
            println!("grid_m: {}", db.grid());
            println!("n_bs: {}", db.n_bs());
            println!("entries: {}", db.len());
            let all: Vec<_> = remswitch::ActiveSet::all(db.n_bs()).collect();
            for (id, e) in db.entries().iter().enumerate() {
                let best = remswitch::rl::greedy_action(e, &all);
                println!(
                    "entry {id}: ues={} cells={} visits={} greedy={} q={:.6}",
                    e.state.len(),
                    e.state.distinct_cells().len(),
                    e.total_visits(),
                    best,
                    e.q(best)
                );
                if full {
                    for a in &all {
                        println!("  {a} q={} n={}", e.q(*a), e.n(*a));
                    }
                }
            }
        }
        Cmd::Scenario { cmd: ScenarioCmd::Show { sc } } => {
            let l = sc.load()?;
            print!("{}", l.scenario.to_toml_string()?);
            for (k, v) in &l.defaults {
                eprintln!("default: {k} = {v}");
            }
        }
        Cmd::Scenario { cmd: ScenarioCmd::Default } => print!("{}", NetworkScenario::default_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
