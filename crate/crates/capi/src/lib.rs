//! C ABI for the divlab optimal-dividend library.
//!
//! Conventions: every fallible call returns a [`DivlabStatus`]; results come
//! back through out-pointers holding opaque handles, freed with the matching
//! `*_free` function.  On failure, `divlab_last_error_message` returns a
//! thread-local NUL-terminated description valid until the next failing call
//! on the same thread.  Strings returned by `*_to_json` are owned by the
//! caller and released with `divlab_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::c_char;

use divlab::diffusion::{solve_diffusion, DiffusionSolution};
use divlab::model::{CLParameters, ClaimDistribution};
use divlab::piecewise::PiecewiseValueFunction;
use divlab::sim::{simulate_payoff, SimConfig};
use divlab::strategy::{barrier_payoff, construct_band_value, BandStrategy};
use divlab::Error;

/// Result of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivlabStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// Invalid parameters or malformed JSON.
    InvalidArgument = 2,
    /// A numerical routine failed (divergent tilt, no convergence, ...).
    Numeric = 3,
    /// The request needs a claim family or feature that is not supported.
    Unsupported = 4,
    /// An internal panic was caught; the handle state is unchanged.
    Panic = 5,
}

/// Opaque Cramér–Lundberg parameter set.
pub struct DivlabParams(CLParameters);
/// Opaque diffusion free-boundary solution.
pub struct DivlabDiffusion(DiffusionSolution);
/// Opaque piecewise value function.
pub struct DivlabValueFn(PiecewiseValueFunction);
/// Opaque band strategy.
pub struct DivlabStrategy(BandStrategy);

/// Plain view of the diffusion solution.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DivlabDiffusionInfo {
    pub gamma1: f64,
    pub gamma2: f64,
    pub b_d: f64,
    pub c_norm: f64,
    pub value_at_barrier: f64,
}

/// Monte Carlo estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DivlabSimResult {
    pub mean: f64,
    pub std_error: f64,
    pub truncation_bound: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> DivlabStatus {
    match err {
        Error::InvalidParameter(_) | Error::Structural(_) | Error::InvalidBarrier { .. } => {
            DivlabStatus::InvalidArgument
        }
        Error::Unsupported(_) => DivlabStatus::Unsupported,
        _ => DivlabStatus::Numeric,
    }
}

fn guard<F: FnOnce() -> DivlabStatus>(f: F) -> DivlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            DivlabStatus::Panic
        }
    }
}

/// Message of the last failure on this thread; valid until the next failure.
#[no_mangle]
pub extern "C" fn divlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by a `*_to_json` call.
///
/// # Safety
/// `s` must originate from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn divlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Build parameters directly.  `family`: 0 exponential, 1 gamma (with
/// integer `shape`); `rate` is the claim rate parameter.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn divlab_params_new(
    lambda: f64,
    theta: f64,
    delta: f64,
    family: u32,
    shape: u32,
    rate: f64,
    out: *mut *mut DivlabParams,
) -> DivlabStatus {
    if out.is_null() {
        return DivlabStatus::NullArgument;
    }
    guard(|| {
        let claim = match family {
            0 => ClaimDistribution::exponential(rate),
            1 => ClaimDistribution::gamma(shape, rate),
            other => Err(Error::InvalidParameter(format!("unknown family code {other}"))),
        };
        let params = claim.and_then(|c| CLParameters::new(lambda, theta, delta, c));
        match params {
            Ok(p) => {
                *out = Box::into_raw(Box::new(DivlabParams(p)));
                DivlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Parse the JSON parameter schema
/// `{"lambda", "theta", "delta", "claim": {"family", "shape"?, "rate"}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_params_from_json(
    json: *const c_char,
    out: *mut *mut DivlabParams,
) -> DivlabStatus {
    if out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let Some(text) = read_str(json) else {
        set_error("json must be valid UTF-8 and non-NULL");
        return DivlabStatus::NullArgument;
    };
    guard(|| match CLParameters::from_json(text) {
        Ok(p) => {
            *out = Box::into_raw(Box::new(DivlabParams(p)));
            DivlabStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    })
}

/// # Safety
/// `p` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn divlab_params_free(p: *mut DivlabParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

/// Solve the diffusion free-boundary problem for the given parameters.
///
/// # Safety
/// `p` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_diffusion_solve(
    p: *const DivlabParams,
    out: *mut *mut DivlabDiffusion,
) -> DivlabStatus {
    if p.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let params = &(*p).0;
    guard(|| match solve_diffusion(params) {
        Ok(sol) => {
            *out = Box::into_raw(Box::new(DivlabDiffusion(sol)));
            DivlabStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    })
}

/// # Safety
/// `d` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_diffusion_info(
    d: *const DivlabDiffusion,
    out: *mut DivlabDiffusionInfo,
) -> DivlabStatus {
    if d.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let sol = &(*d).0;
    *out = DivlabDiffusionInfo {
        gamma1: sol.gamma1,
        gamma2: sol.gamma2,
        b_d: sol.b_d,
        c_norm: sol.c_norm,
        value_at_barrier: sol.value_at_barrier(),
    };
    DivlabStatus::Ok
}

/// V_D(x); the oscillatory branch extends below 0.
///
/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn divlab_vd_eval(d: *const DivlabDiffusion, x: f64) -> f64 {
    if d.is_null() {
        return f64::NAN;
    }
    (*d).0.vd(x)
}

/// First and second derivatives of V_D at x.
///
/// # Safety
/// `d`, `d1`, `d2` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_vd_derivatives(
    d: *const DivlabDiffusion,
    x: f64,
    d1: *mut f64,
    d2: *mut f64,
) -> DivlabStatus {
    if d.is_null() || d1.is_null() || d2.is_null() {
        return DivlabStatus::NullArgument;
    }
    let (a, b) = (*d).0.vd_derivatives(x);
    *d1 = a;
    *d2 = b;
    DivlabStatus::Ok
}

/// # Safety
/// `d` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn divlab_diffusion_free(d: *mut DivlabDiffusion) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

// ---------------------------------------------------------------------------
// Value functions and strategies
// ---------------------------------------------------------------------------

/// Optimal band value function for scale `n`.  `x_max <= 0` selects the
/// default search range 4·b_D.  Either out-pointer may be NULL if only one
/// of the two results is wanted.
///
/// # Safety
/// `p` must be a live handle; non-NULL out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_bands_solve(
    p: *const DivlabParams,
    n: f64,
    x_max: f64,
    out_value: *mut *mut DivlabValueFn,
    out_strategy: *mut *mut DivlabStrategy,
) -> DivlabStatus {
    if p.is_null() || (out_value.is_null() && out_strategy.is_null()) {
        return DivlabStatus::NullArgument;
    }
    let params = (*p).0;
    guard(|| {
        let run = || -> divlab::Result<_> {
            let scaled = params.scale(n)?;
            let sol = solve_diffusion(&params)?;
            let xm = if x_max > 0.0 { x_max } else { 4.0 * sol.b_d };
            construct_band_value(&scaled, xm)
        };
        match run() {
            Ok((v, s)) => {
                if !out_value.is_null() {
                    *out_value = Box::into_raw(Box::new(DivlabValueFn(v)));
                }
                if !out_strategy.is_null() {
                    *out_strategy = Box::into_raw(Box::new(DivlabStrategy(s)));
                }
                DivlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Barrier payoff V_{b,n}.  `b <= 0` selects the diffusion barrier b_D.
///
/// # Safety
/// `p` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_barrier_payoff(
    p: *const DivlabParams,
    n: f64,
    b: f64,
    out: *mut *mut DivlabValueFn,
) -> DivlabStatus {
    if p.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let params = (*p).0;
    guard(|| {
        let run = || -> divlab::Result<_> {
            let scaled = params.scale(n)?;
            let level = if b > 0.0 { b } else { solve_diffusion(&params)?.b_d };
            barrier_payoff(&scaled, level)
        };
        match run() {
            Ok(v) => {
                *out = Box::into_raw(Box::new(DivlabValueFn(v)));
                DivlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `v` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn divlab_valuefn_eval(v: *const DivlabValueFn, x: f64) -> f64 {
    if v.is_null() {
        return f64::NAN;
    }
    (*v).0.value(x)
}

/// Right derivative at x.
///
/// # Safety
/// `v` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn divlab_valuefn_derivative(v: *const DivlabValueFn, x: f64) -> f64 {
    if v.is_null() {
        return f64::NAN;
    }
    (*v).0.derivative(x)
}

/// Serialize the piecewise structure; free with `divlab_string_free`.
///
/// # Safety
/// `v` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_valuefn_to_json(
    v: *const DivlabValueFn,
    out: *mut *mut c_char,
) -> DivlabStatus {
    if v.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let json = (*v).0.to_json();
    match CString::new(json) {
        Ok(c) => {
            *out = c.into_raw();
            DivlabStatus::Ok
        }
        Err(_) => {
            set_error("serialized JSON contained NUL");
            DivlabStatus::Numeric
        }
    }
}

/// # Safety
/// `v` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn divlab_valuefn_free(v: *mut DivlabValueFn) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Barrier strategy at level `b`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_strategy_barrier(
    b: f64,
    out: *mut *mut DivlabStrategy,
) -> DivlabStatus {
    if out.is_null() {
        return DivlabStatus::NullArgument;
    }
    *out = Box::into_raw(Box::new(DivlabStrategy(BandStrategy::barrier(b))));
    DivlabStatus::Ok
}

/// Parse a strategy from its JSON form.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_strategy_from_json(
    json: *const c_char,
    out: *mut *mut DivlabStrategy,
) -> DivlabStatus {
    if out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let Some(text) = read_str(json) else {
        set_error("json must be valid UTF-8 and non-NULL");
        return DivlabStatus::NullArgument;
    };
    match BandStrategy::from_json(text) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(DivlabStrategy(s)));
            DivlabStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Lower end of the unbounded pay interval.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn divlab_strategy_top_threshold(s: *const DivlabStrategy) -> f64 {
    if s.is_null() {
        return f64::NAN;
    }
    (*s).0.top_threshold()
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn divlab_strategy_free(s: *mut DivlabStrategy) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Bounds and simulation
// ---------------------------------------------------------------------------

/// Bound certificate (A, q, p, C', C'') as JSON; free with
/// `divlab_string_free`.  `n_tilt <= 0` selects the default tilt scale.
///
/// # Safety
/// `p` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_bounds_json(
    p: *const DivlabParams,
    n_tilt: f64,
    out: *mut *mut c_char,
) -> DivlabStatus {
    if p.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let params = (*p).0;
    guard(|| {
        let tilt = if n_tilt > 0.0 { Some(n_tilt) } else { None };
        match divlab::analysis::bound_certificate(&params, tilt, None) {
            Ok(cert) => {
                *out = CString::new(cert.to_json()).expect("no NUL in JSON").into_raw();
                DivlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Monte Carlo payoff of `strat` at scale `n`.  `horizon <= 0` selects the
/// default 50/δ.
///
/// # Safety
/// `p` and `strat` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn divlab_simulate(
    p: *const DivlabParams,
    n: f64,
    strat: *const DivlabStrategy,
    paths: u64,
    seed: u64,
    x0: f64,
    horizon: f64,
    out: *mut DivlabSimResult,
) -> DivlabStatus {
    if p.is_null() || strat.is_null() || out.is_null() {
        return DivlabStatus::NullArgument;
    }
    let params = (*p).0;
    let strategy = &(*strat).0;
    guard(|| {
        let run = || -> divlab::Result<_> {
            let scaled = params.scale(n)?;
            let cfg = SimConfig {
                paths,
                horizon: if horizon > 0.0 { horizon } else { 50.0 / params.delta },
                seed,
                x0,
            };
            simulate_payoff(&scaled, strategy, &cfg)
        };
        match run() {
            Ok(r) => {
                *out = DivlabSimResult {
                    mean: r.mean,
                    std_error: r.std_error,
                    truncation_bound: r.truncation_bound,
                };
                DivlabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
