//! C ABI for `remswitch`.
//!
//! Handles are opaque pointers created by `rs_*_new`/`rs_*_load`-style calls
//! and released with the matching `rs_*_free`. Every fallible call returns an
//! [`RsStatus`]; on failure `rs_last_error_message` describes the most recent
//! error on the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use remswitch::harness::{self, RunReport};
use remswitch::{ActiveSet, Error, LearnerConfig, NetworkScenario, RemDb, Strategy};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration value; the message names the field.
    Validation = 3,
    Contract = 4,
    Io = 5,
    Version = 6,
    Corrupt = 7,
    Invariant = 8,
    EmptyState = 9,
    OutOfRange = 10,
    /// Unexpected failure, including a caught panic.
    Internal = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStrategy {
    EpsilonGreedy = 0,
    Ucb = 1,
    GradientBandit = 2,
    RemEa = 3,
}

/// Learner settings. Rewards and values are in bit/J times `reward_scale`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsLearnerConfig {
    pub strategy: RsStrategy,
    pub alpha: f64,
    pub xi: f64,
    pub beta: f64,
    pub c: f64,
    pub alpha_gb: f64,
    pub gamma: f64,
    pub asr_enabled: bool,
    pub optimistic_init: f64,
    pub reward_scale: f64,
    pub rng_seed: u64,
}

/// Headline numbers of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsReportSummary {
    pub episodes: usize,
    pub passes: usize,
    /// Unsettled runs count as `passes`.
    pub passes_to_converge: usize,
    pub converged: bool,
    /// bit/J
    pub final_mean_reward: f64,
    /// W
    pub mean_power: f64,
    /// Fraction of the all-on power.
    pub energy_savings: f64,
    pub rem_entries: usize,
}

pub struct RsScenario {
    inner: NetworkScenario,
}

pub struct RsRemDb {
    inner: RemDb,
}

pub struct RsReport {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail {
    status: RsStatus,
    message: String,
}

impl Fail {
    fn new(status: RsStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Contract(_) => RsStatus::Contract,
            Error::EmptyState | Error::EmptySet => RsStatus::EmptyState,
            Error::Validation { .. } => RsStatus::Validation,
            Error::Io { .. } => RsStatus::Io,
            Error::Version { .. } => RsStatus::Version,
            Error::Corrupt { .. } => RsStatus::Corrupt,
            Error::Invariant(_) => RsStatus::Invariant,
            _ => RsStatus::Internal,
        };
        Fail::new(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|l| *l.borrow_mut() = Some(c));
}

fn call(f: impl FnOnce() -> Result<(), Fail>) -> RsStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {what}"));
            RsStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::new(RsStatus::NullPointer, format!("`{what}` must not be null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(RsStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(p: *mut T, what: &str, value: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

impl From<Strategy> for RsStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::EpsilonGreedy => RsStrategy::EpsilonGreedy,
            Strategy::Ucb => RsStrategy::Ucb,
            Strategy::GradientBandit => RsStrategy::GradientBandit,
            Strategy::RemEa => RsStrategy::RemEa,
        }
    }
}

impl From<RsStrategy> for Strategy {
    fn from(s: RsStrategy) -> Self {
        match s {
            RsStrategy::EpsilonGreedy => Strategy::EpsilonGreedy,
            RsStrategy::Ucb => Strategy::Ucb,
            RsStrategy::GradientBandit => Strategy::GradientBandit,
            RsStrategy::RemEa => Strategy::RemEa,
        }
    }
}

impl From<&LearnerConfig> for RsLearnerConfig {
    fn from(c: &LearnerConfig) -> Self {
        Self {
            strategy: c.strategy.into(),
            alpha: c.alpha,
            xi: c.xi,
            beta: c.beta,
            c: c.c,
            alpha_gb: c.alpha_gb,
            gamma: c.gamma,
            asr_enabled: c.asr_enabled,
            optimistic_init: c.optimistic_init,
            reward_scale: c.reward_scale,
            rng_seed: c.rng_seed,
        }
    }
}

impl From<&RsLearnerConfig> for LearnerConfig {
    fn from(c: &RsLearnerConfig) -> Self {
        Self {
            strategy: c.strategy.into(),
            alpha: c.alpha,
            xi: c.xi,
            beta: c.beta,
            c: c.c,
            alpha_gb: c.alpha_gb,
            gamma: c.gamma,
            asr_enabled: c.asr_enabled,
            optimistic_init: c.optimistic_init,
            reward_scale: c.reward_scale,
            rng_seed: c.rng_seed,
        }
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failed call on this thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn rs_clear_last_error() {
    LAST_ERROR.with(|l| *l.borrow_mut() = None);
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- scenarios ----------------------------------------------------------

/// The bundled desk-scale scenario.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_default(out: *mut *mut RsScenario) -> RsStatus {
    call(|| put(out, "out", boxed(RsScenario { inner: NetworkScenario::default_scenario() })))
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_from_toml(toml: *const c_char, out: *mut *mut RsScenario) -> RsStatus {
    call(|| {
        let t = text(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = NetworkScenario::from_toml_str(t)?.scenario;
        put(out, "out", boxed(RsScenario { inner: sc }))
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_load(path: *const c_char, out: *mut *mut RsScenario) -> RsStatus {
    call(|| {
        let p = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = NetworkScenario::load(p)?.scenario;
        put(out, "out", boxed(RsScenario { inner: sc }))
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_free(s: *mut RsScenario) {
    free(s)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_n_bs(s: *const RsScenario, out: *mut usize) -> RsStatus {
    call(|| put(out, "out", get(s, "scenario")?.inner.network.n_bs()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_n_ue(s: *const RsScenario, out: *mut usize) -> RsStatus {
    call(|| put(out, "out", get(s, "scenario")?.inner.n_ue()))
}

/// Network power in watts for an action (bit k = pico k+1, macro always on).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_total_power(s: *const RsScenario, action: usize, out_w: *mut f64) -> RsStatus {
    call(|| {
        let net = &get(s, "scenario")?.inner.network;
        let a = ActiveSet::from_index(net.n_bs(), action)
            .map_err(|e| Fail::new(RsStatus::OutOfRange, e.to_string()))?;
        put(out_w, "out_w", net.total_power(&a)?)
    })
}

/// Learner settings stored in the scenario file.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_learner_config(s: *const RsScenario, out: *mut RsLearnerConfig) -> RsStatus {
    call(|| {
        let sc = &get(s, "scenario")?.inner;
        let mut c = sc.learner.clone();
        c.rng_seed = sc.seeds.learner;
        put(out, "out", RsLearnerConfig::from(&c))
    })
}

/// Built-in learner defaults.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_learner_config_default(out: *mut RsLearnerConfig) -> RsStatus {
    call(|| put(out, "out", RsLearnerConfig::from(&LearnerConfig::default())))
}

// ---- runs ---------------------------------------------------------------

/// Runs a learner over the scenario's episode plan.
///
/// `warm` may be NULL for a cold start; it is copied, not consumed.
/// `out_rem` may be NULL when the final REM is not needed.
///
/// # Safety
/// Non-NULL pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_run(
    s: *const RsScenario,
    config: *const RsLearnerConfig,
    warm: *const RsRemDb,
    out_report: *mut *mut RsReport,
    out_rem: *mut *mut RsRemDb,
) -> RsStatus {
    call(|| {
        let sc = &get(s, "scenario")?.inner;
        let cfg = LearnerConfig::from(get(config, "config")?);
        if out_report.is_null() {
            return Err(null("out_report"));
        }
        let prior = warm.as_ref().map(|w| w.inner.clone());
        let (report, db) = harness::run(sc, &cfg, prior)?;
        put(out_report, "out_report", boxed(RsReport { inner: report }))?;
        if !out_rem.is_null() {
            out_rem.write(boxed(RsRemDb { inner: db }));
        }
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_report_free(r: *mut RsReport) {
    free(r)
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_report_summary(r: *const RsReport, out: *mut RsReportSummary) -> RsStatus {
    call(|| {
        let rep = &get(r, "report")?.inner;
        put(
            out,
            "out",
            RsReportSummary {
                episodes: rep.records.len(),
                passes: rep.passes(),
                passes_to_converge: rep.passes_to_converge(),
                converged: rep.convergence.index.is_some(),
                final_mean_reward: rep.final_mean_reward(),
                mean_power: rep.mean_power(),
                energy_savings: rep.energy_savings(),
                rem_entries: rep.entry_count(),
            },
        )
    })
}

/// Copies the action of each episode into `buf`.
///
/// Writes at most `len` values; `out_total` receives the episode count, so a
/// first call with `len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must hold `len` values (may be NULL when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn rs_report_actions(
    r: *const RsReport,
    buf: *mut usize,
    len: usize,
    out_total: *mut usize,
) -> RsStatus {
    call(|| {
        let rep = &get(r, "report")?.inner;
        let values: Vec<usize> = rep.records.iter().map(|e| e.action).collect();
        copy_out(&values, buf, len)?;
        put(out_total, "out_total", values.len())
    })
}

/// Copies the mean reward of each pass (bit/J); same sizing rule as
/// `rs_report_actions`.
///
/// # Safety
/// `buf` must hold `len` values (may be NULL when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn rs_report_pass_rewards(
    r: *const RsReport,
    buf: *mut f64,
    len: usize,
    out_total: *mut usize,
) -> RsStatus {
    call(|| {
        let rep = &get(r, "report")?.inner;
        copy_out(&rep.pass_rewards, buf, len)?;
        put(out_total, "out_total", rep.pass_rewards.len())
    })
}

unsafe fn copy_out<T: Copy>(values: &[T], buf: *mut T, len: usize) -> Result<(), Fail> {
    let n = values.len().min(len);
    if n > 0 {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, n);
    }
    Ok(())
}

/// Per-episode CSV report; release with `rs_string_free`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_report_to_csv(r: *const RsReport, out: *mut *mut c_char) -> RsStatus {
    call(|| {
        let csv = get(r, "report")?.inner.to_csv()?;
        let c = CString::new(csv).map_err(|_| Fail::new(RsStatus::Internal, "report contains a NUL byte"))?;
        put(out, "out", c.into_raw())
    })
}

// ---- REM ----------------------------------------------------------------

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_rem_load(path: *const c_char, out: *mut *mut RsRemDb) -> RsStatus {
    call(|| {
        let p = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let db = RemDb::load(p)?;
        put(out, "out", boxed(RsRemDb { inner: db }))
    })
}

/// # Safety
/// `db` must be a valid handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rs_rem_save(db: *const RsRemDb, path: *const c_char) -> RsStatus {
    call(|| {
        let d = get(db, "db")?;
        Ok(d.inner.save(text(path, "path")?)?)
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_rem_len(db: *const RsRemDb, out: *mut usize) -> RsStatus {
    call(|| put(out, "out", get(db, "db")?.inner.len()))
}

/// Greedy action and its value for one REM entry.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_rem_greedy(
    db: *const RsRemDb,
    entry: usize,
    out_action: *mut usize,
    out_q: *mut f64,
) -> RsStatus {
    call(|| {
        let d = &get(db, "db")?.inner;
        if entry >= d.len() {
            return Err(Fail::new(RsStatus::OutOfRange, format!("entry {entry} of {}", d.len())));
        }
        let e = d.entry(entry);
        let all: Vec<ActiveSet> = ActiveSet::all(d.n_bs()).collect();
        let best = remswitch::rl::greedy_action(e, &all);
        put(out_action, "out_action", best.index())?;
        put(out_q, "out_q", e.q(best))
    })
}

/// # Safety
/// `db` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_rem_free(db: *mut RsRemDb) {
    free(db)
}
