//! C ABI over the salesim core.
//!
//! Every fallible function returns a [`SalesimStatus`]; on failure the
//! message is available from [`salesim_last_error`] on the same thread.
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Passing NULL to a `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use salesim::config::Config;
use salesim::policies::{rule_based_choose, LinUcbState, PolicyKind, PolicySpec};
use salesim::sim::log::write_result_log;
use salesim::sim::{collect_logged_data, replay_verify, simulate, CollectionScenario, SimulationConfig, SimulationResult};
use salesim::world::{World, WorldBase, WorldSnapshot};
use salesim::{Action, ContextVector, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SalesimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Verification = 6,
    Untrained = 7,
    MissingKey = 8,
    Internal = 9,
    Panic = 10,
}

impl SalesimStatus {
    fn of(err: &Error) -> SalesimStatus {
        match err {
            Error::InvalidInput(_) | Error::Schema(_) => SalesimStatus::InvalidArgument,
            Error::Config(_) => SalesimStatus::Config,
            Error::Parse { .. } => SalesimStatus::Parse,
            Error::Io { .. } => SalesimStatus::Io,
            Error::Verification(_) => SalesimStatus::Verification,
            Error::Untrained => SalesimStatus::Untrained,
            Error::MissingKey(_) => SalesimStatus::MissingKey,
            Error::Internal(_) => SalesimStatus::Internal,
        }
    }
}

/// Channel codes used across the ABI.
pub const SALESIM_ACTION_A: u32 = 0;
pub const SALESIM_ACTION_B: u32 = 1;
pub const SALESIM_ACTION_C: u32 = 2;

/// A realized simulation world.
pub struct SalesimWorld(World);

/// Incremental LinUCB learner.
pub struct SalesimLinUcb(LinUcbState);

/// Outcome of one evaluation run.
pub struct SalesimResult(SimulationResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SalesimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SalesimStatus::of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SalesimStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SalesimStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SalesimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SalesimStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SalesimStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn context<'a>(ctx: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if ctx.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null("context")) };
    }
    Ok(std::slice::from_raw_parts(ctx, len))
}

fn action_of(code: u32) -> Result<Action, Failure> {
    Action::from_index(code as usize).ok_or_else(|| invalid(format!("unknown action code {code}")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SalesimStatus::Internal, "string contains NUL".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn salesim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn salesim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn salesim_status_name(status: SalesimStatus) -> *const c_char {
    let s: &'static str = match status {
        SalesimStatus::Ok => "ok\0",
        SalesimStatus::NullPointer => "null_pointer\0",
        SalesimStatus::InvalidArgument => "invalid_argument\0",
        SalesimStatus::Config => "config\0",
        SalesimStatus::Parse => "parse\0",
        SalesimStatus::Io => "io\0",
        SalesimStatus::Verification => "verification\0",
        SalesimStatus::Untrained => "untrained\0",
        SalesimStatus::MissingKey => "missing_key\0",
        SalesimStatus::Internal => "internal\0",
        SalesimStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn salesim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Channel chosen by the fixed rule for a propensity estimate.
#[no_mangle]
pub extern "C" fn salesim_rule_based_choose(fhat: f64) -> u32 {
    rule_based_choose(fhat).index() as u32
}

/// Fit and realize a world. `config_toml` may be NULL for defaults; the
/// reference pool comes from the config's data section.
///
/// # Safety
/// `config_toml` must be NULL or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_world_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut SalesimWorld,
) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let cfg = match opt_str(config_toml, "config_toml")? {
            Some(text) => Config::from_toml_str(text, "config")?,
            None => Config::default(),
        };
        let base = WorldBase::fit(cfg.load_pool()?, &cfg.world, seed)?;
        let world = base.realize(&cfg.world, seed)?;
        *out = Box::into_raw(Box::new(SalesimWorld(world)));
        Ok(())
    })
}

/// Load a world from its JSON snapshot.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_world_from_json(json: *const c_char, out: *mut *mut SalesimWorld) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let world = WorldSnapshot::from_json(req_str(json, "json")?, "snapshot")?.into_world()?;
        *out = Box::into_raw(Box::new(SalesimWorld(world)));
        Ok(())
    })
}

/// Serialize a world snapshot. Free the string with `salesim_string_free`.
///
/// # Safety
/// `world` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_world_to_json(world: *const SalesimWorld, out: *mut *mut c_char) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let w = handle(world, "world")?;
        *out = into_c_string(WorldSnapshot::from_world(&w.0).to_json()?)?;
        Ok(())
    })
}

/// Length of the context vectors this world produces.
///
/// # Safety
/// `world` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_world_context_dim(world: *const SalesimWorld, out: *mut usize) -> SalesimStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(world, "world")?.0.context_dim();
        Ok(())
    })
}

/// # Safety
/// `world` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn salesim_world_free(world: *mut SalesimWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Collect logged data under `collection` (a scenario name such as
/// "observational", or NULL to skip the warm start) and run `policy`
/// (a kind name such as "lin_ucb") for `horizon_days`.
///
/// # Safety
/// `world` must be a live handle; strings must be NUL-terminated or NULL
/// where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_simulate(
    world: *const SalesimWorld,
    policy: *const c_char,
    collection: *const c_char,
    collection_days: u32,
    horizon_days: u32,
    leads_per_day: usize,
    seed: u64,
    out: *mut *mut SalesimResult,
) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let w = &handle(world, "world")?.0;
        let kind: PolicyKind = req_str(policy, "policy")?.parse()?;
        let logged = match opt_str(collection, "collection")? {
            Some(name) => {
                let scenario: CollectionScenario = name.parse()?;
                Some(collect_logged_data(scenario, w, collection_days, leads_per_day, seed)?)
            }
            None => None,
        };
        let mut p = PolicySpec::new(kind).build(w.context_dim())?;
        let cfg = SimulationConfig::new(horizon_days, leads_per_day, seed);
        let result = simulate(p.as_mut(), w, logged.as_ref(), &cfg)?;
        *out = Box::into_raw(Box::new(SalesimResult(result)));
        Ok(())
    })
}

/// Rewards observed by the end of the horizon.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_cumulative_reward(
    result: *const SalesimResult,
    out: *mut u64,
) -> SalesimStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(result, "result")?.0.cumulative_reward;
        Ok(())
    })
}

/// Number of allocation events (one per lead).
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_event_count(result: *const SalesimResult, out: *mut usize) -> SalesimStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(result, "result")?.0.events.len();
        Ok(())
    })
}

/// Copy per-day observed rewards into `buf`. `*len` holds the capacity on
/// entry and the horizon on exit; a short buffer yields InvalidArgument
/// with `*len` set to the required size.
///
/// # Safety
/// `result` must be a live handle; `buf` must hold `*len` values.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_daily_rewards(
    result: *const SalesimResult,
    buf: *mut u64,
    len: *mut usize,
) -> SalesimStatus {
    guard(|| {
        let r = &handle(result, "result")?.0;
        let len = out_ref(len, "len")?;
        let need = r.daily_rewards.len();
        let cap = std::mem::replace(len, need);
        if cap < need {
            return Err(invalid(format!("buffer holds {cap} values, {need} needed")));
        }
        if need > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, need).copy_from_slice(&r.daily_rewards);
        }
        Ok(())
    })
}

/// Recount the result from its event log. Verification on mismatch.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_verify(result: *const SalesimResult) -> SalesimStatus {
    guard(|| {
        replay_verify(&handle(result, "result")?.0)?;
        Ok(())
    })
}

/// The result log as text. Free the string with `salesim_string_free`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_log(result: *const SalesimResult, out: *mut *mut c_char) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(write_result_log(&handle(result, "result")?.0))?;
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn salesim_result_free(result: *mut SalesimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// New learner over `dim`-dimensional contexts with exploration weight `alpha`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_new(dim: usize, alpha: f64, out: *mut *mut SalesimLinUcb) -> SalesimStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        *out = Box::into_raw(Box::new(SalesimLinUcb(LinUcbState::new(dim, alpha)?)));
        Ok(())
    })
}

/// Fold one observed (context, action, reward) triple into the learner.
///
/// # Safety
/// `state` must be a live handle; `ctx` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_update(
    state: *mut SalesimLinUcb,
    ctx: *const f64,
    dim: usize,
    action: u32,
    reward: u8,
) -> SalesimStatus {
    guard(|| {
        let s = out_ref(state, "state")?;
        let x = ContextVector(context(ctx, dim)?.to_vec());
        s.0.update(&x, action_of(action)?, reward)?;
        Ok(())
    })
}

/// Upper-confidence scores for A, B and C into `scores[3]`.
///
/// # Safety
/// `state` must be a live handle; `ctx` must hold `dim` values; `scores`
/// must hold three values.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_scores(
    state: *mut SalesimLinUcb,
    ctx: *const f64,
    dim: usize,
    scores: *mut f64,
) -> SalesimStatus {
    guard(|| {
        let s = out_ref(state, "state")?;
        if scores.is_null() {
            return Err(null("scores"));
        }
        let x = ContextVector(context(ctx, dim)?.to_vec());
        let v = s.0.scores(&x)?;
        std::slice::from_raw_parts_mut(scores, Action::COUNT).copy_from_slice(&v);
        Ok(())
    })
}

/// Highest-scoring channel; ties go to the earlier channel.
///
/// # Safety
/// `state` must be a live handle; `ctx` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_choose(
    state: *mut SalesimLinUcb,
    ctx: *const f64,
    dim: usize,
    action: *mut u32,
) -> SalesimStatus {
    guard(|| {
        let s = out_ref(state, "state")?;
        let out = out_ref(action, "action")?;
        let x = ContextVector(context(ctx, dim)?.to_vec());
        *out = s.0.choose(&x)?.index() as u32;
        Ok(())
    })
}

/// Ridge coefficients of one arm into `theta[dim]`.
///
/// # Safety
/// `state` must be a live handle; `theta` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_theta(
    state: *mut SalesimLinUcb,
    action: u32,
    theta: *mut f64,
    dim: usize,
) -> SalesimStatus {
    guard(|| {
        let s = out_ref(state, "state")?;
        if dim != s.0.dim() {
            return Err(invalid(format!("dim {dim} does not match learner dim {}", s.0.dim())));
        }
        if theta.is_null() && dim > 0 {
            return Err(null("theta"));
        }
        let t = s.0.theta(action_of(action)?);
        if dim > 0 {
            std::slice::from_raw_parts_mut(theta, dim).copy_from_slice(&t);
        }
        Ok(())
    })
}

/// # Safety
/// `state` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn salesim_linucb_free(state: *mut SalesimLinUcb) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}
