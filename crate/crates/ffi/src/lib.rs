//! C interface to `lowimpact`.
//!
//! Scenarios are opaque [`LiScenario`] handles. Every fallible call returns
//! an [`LiStatus`]; on failure [`li_last_error`] describes what went wrong.
//! Strings handed to the caller are NUL-terminated, owned by the caller, and
//! released with [`li_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lowimpact::report::{self, MuChoice, RunOptions};
use lowimpact::scenario::Scenario;
use lowimpact::{Error, ErrorClass};

/// Result of every fallible call. The first four match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiStatus {
    Ok = 0,
    /// Unknown measure, policy or condition name, or a bad setting.
    Usage = 1,
    /// The scenario failed to parse or validate.
    Validation = 2,
    /// A numeric failure such as conditioning on an impossible event.
    Numeric = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
    Io = 6,
    /// An internal error; the handle involved should not be reused.
    Panic = 7,
}

/// A loaded scenario.
pub struct LiScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(LiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match (&e, e.class()) {
            (Error::Io(_), _) => LiStatus::Io,
            (_, ErrorClass::Usage) => LiStatus::Usage,
            (_, ErrorClass::Validation) => LiStatus::Validation,
            (_, ErrorClass::Numeric) => LiStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> LiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LiStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LiStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LiStatus::NullArgument, format!("`{what}` is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure(LiStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or_else(|| null(what))
}

unsafe fn scenario<'a>(p: *const LiScenario) -> Result<&'a Scenario, Failure> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("scenario"))
}

unsafe fn give_string(out: *mut *mut c_char, text: String) -> Outcome {
    let c = CString::new(text).map_err(|_| Failure(LiStatus::Panic, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn check_out<T>(out: *mut T, what: &str) -> Outcome {
    if out.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

/// Loads a built-in scenario by name, or a TOML file by path.
///
/// # Safety
/// `name_or_path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_load(name_or_path: *const c_char, out: *mut *mut LiScenario) -> LiStatus {
    guard(|| {
        check_out(out, "out")?;
        let name = req_str(name_or_path, "name_or_path")?;
        let inner = Scenario::load(name)?;
        *out = Box::into_raw(Box::new(LiScenario { inner }));
        Ok(())
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_from_toml(text: *const c_char, out: *mut *mut LiScenario) -> LiStatus {
    guard(|| {
        check_out(out, "out")?;
        let inner = Scenario::from_toml(req_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(LiScenario { inner }));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_free(scenario: *mut LiScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Sets the seed of both the planner and the detectability sampler.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_set_seed(scenario: *mut LiScenario, seed: u64) -> LiStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.inner = s.inner.clone().with_seed(seed);
        Ok(())
    })
}

/// Sets the Monte Carlo sample count of the detectability measure.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_set_samples(scenario: *mut LiScenario, samples: usize) -> LiStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.inner = s.inner.clone().with_samples(samples)?;
        Ok(())
    })
}

/// Writes the scenario as TOML to `*out`.
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn li_scenario_to_toml(scenario: *const LiScenario, out: *mut *mut c_char) -> LiStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = self::scenario(scenario)?.to_toml()?;
        give_string(out, text)
    })
}

/// Optimizes the planner agent and writes the run CSV to `*out_csv`.
///
/// `measure` and `condition` may be null for the scenario defaults. A NaN
/// `mu` uses the scenario's default weight; `sweep` non-zero uses its grid.
///
/// # Safety
/// Pointers must be null or valid as described; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn li_run(
    scenario: *const LiScenario,
    measure: *const c_char,
    condition: *const c_char,
    mu: f64,
    sweep: bool,
    out_csv: *mut *mut c_char,
) -> LiStatus {
    guard(|| {
        check_out(out_csv, "out_csv")?;
        let s = self::scenario(scenario)?;
        let opts = RunOptions {
            measure: opt_str(measure, "measure")?.map(String::from),
            condition: opt_str(condition, "condition")?.map(String::from),
            mu: match (sweep, mu.is_nan()) {
                (true, _) => MuChoice::Grid,
                (false, true) => MuChoice::Default,
                (false, false) => MuChoice::Explicit(vec![mu]),
            },
            search: None,
        };
        give_string(out_csv, report::run(s, &opts)?.csv())
    })
}

/// Evaluates one policy under several measures and writes the CSV.
///
/// `measures` is comma-separated, or null for every measure; `policy` null
/// means the null policy; `condition` null is the scenario default.
///
/// # Safety
/// Pointers must be null or valid as described; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn li_compare(
    scenario: *const LiScenario,
    measures: *const c_char,
    policy: *const c_char,
    condition: *const c_char,
    out_csv: *mut *mut c_char,
) -> LiStatus {
    guard(|| {
        check_out(out_csv, "out_csv")?;
        let s = self::scenario(scenario)?;
        let measures: Vec<String> = opt_str(measures, "measures")?
            .map(|m| m.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
            .unwrap_or_default();
        let policy = opt_str(policy, "policy")?.unwrap_or("null");
        let r = report::compare(s, &measures, policy, opt_str(condition, "condition")?)?;
        give_string(out_csv, r.csv())
    })
}

/// Conditional optima of every agent and their joint success probability.
/// `measure` may be null and `mu` NaN for the scenario defaults;
/// `out_p_success` may be null.
///
/// # Safety
/// Pointers must be null or valid as described; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn li_joint(
    scenario: *const LiScenario,
    measure: *const c_char,
    mu: f64,
    out_csv: *mut *mut c_char,
    out_p_success: *mut f64,
) -> LiStatus {
    guard(|| {
        check_out(out_csv, "out_csv")?;
        let s = self::scenario(scenario)?;
        let mu = (!mu.is_nan()).then_some(mu);
        let r = report::joint(s, opt_str(measure, "measure")?, mu, None)?;
        if !out_p_success.is_null() {
            *out_p_success = r.p_success;
        }
        give_string(out_csv, r.csv())
    })
}

/// Baseline probability of the named announcement with every agent inactive.
///
/// # Safety
/// `scenario` must be a live handle, `event` a string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn li_announcement_probability(
    scenario: *const LiScenario,
    event: *const c_char,
    out: *mut f64,
) -> LiStatus {
    guard(|| {
        check_out(out, "out")?;
        let s = self::scenario(scenario)?;
        let name = req_str(event, "event")?;
        let a = s
            .announcements()
            .iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Failure(LiStatus::Usage, format!("unknown announcement `{name}`")))?;
        *out = lowimpact::conditioning::announcement_probability(s.model(), a)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn li_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn li_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn li_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version has a NUL"),
    };
    VERSION.as_ptr()
}
