//! C ABI over the bnsens engine.
//!
//! Networks live behind an opaque `BnsNetwork` handle created by
//! `bns_network_from_json` or `bns_network_builtin` and released with
//! `bns_network_free`. Every fallible call returns a `BnsStatus`; on failure
//! `bns_last_error` gives a message for the calling thread. Strings returned
//! through `char **` are owned by the caller and released with
//! `bns_string_free`. Evidence uses the `VAR=state,VAR=state` syntax; NULL
//! or an empty string means no evidence. Parameters are named by their JSON
//! form, e.g. `{"node":"B","kind":"table","state":"t_B","given":["t_A"]}`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bnsens::formats::{self, to_canonical_json};
use bnsens::model::scale_to_unit;
use bnsens::montecarlo::{estimate_sensitivities, SamplerConfig, SamplingMethod};
use bnsens::sensitivity::{sensitivities_with, Scenario, SensitivitySummary};
use bnsens::{Error, Evidence, InferenceContext, ParamIndex};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidNetwork = 4,
    UnknownName = 5,
    ZeroProbabilityEvidence = 6,
    FrozenParameter = 7,
    InvalidArgument = 8,
    BufferTooSmall = 9,
    SamplingFailed = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnsSampler {
    LogicRejection = 0,
    LikelihoodWeighting = 1,
}

/// Opaque network with its compiled inference structure.
pub struct BnsNetwork {
    ctx: InferenceContext,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(BnsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownVariable(_) | Error::UnknownState { .. } | Error::UnknownParameter(_) => {
                BnsStatus::UnknownName
            }
            Error::InvalidNetwork(_) | Error::Format(_) => BnsStatus::InvalidNetwork,
            Error::ZeroProbabilityEvidence => BnsStatus::ZeroProbabilityEvidence,
            Error::FrozenParameter(_) => BnsStatus::FrozenParameter,
            Error::NoAcceptedSamples { .. } => BnsStatus::SamplingFailed,
            _ => BnsStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Res<()>) -> BnsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BnsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BnsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Fail(BnsStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BnsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(net: *const BnsNetwork) -> Res<&'a BnsNetwork> {
    net.as_ref()
        .ok_or_else(|| Fail(BnsStatus::NullPointer, "network handle is NULL".into()))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Fail(BnsStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn scenario(evidence: *const c_char, target: *const c_char) -> Res<Scenario> {
    let ev = if evidence.is_null() {
        Evidence::new()
    } else {
        let s = text(evidence, "evidence")?;
        if s.trim().is_empty() {
            Evidence::new()
        } else {
            Evidence::parse(s).map_err(|e| Fail(BnsStatus::ParseError, e.to_string()))?
        }
    };
    Ok(Scenario::new(ev, text(target, "target")?))
}

fn give_string(s: String, out: &mut *mut c_char) -> Res<()> {
    *out = CString::new(s)
        .map_err(|_| Fail(BnsStatus::InvalidArgument, "output contains NUL".into()))?
        .into_raw();
    Ok(())
}

fn new_handle(net: bnsens::Network, out: &mut *mut BnsNetwork) {
    let net = scale_to_unit(&net);
    *out = Box::into_raw(Box::new(BnsNetwork {
        ctx: InferenceContext::new(&net),
    }));
}

/// Parses a JSON document and returns a handle to its network, with table
/// rows rescaled to unit sums.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bns_network_from_json(json: *const c_char, out: *mut *mut BnsNetwork) -> BnsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let doc = formats::parse_document(text(json, "json")?).map_err(|e| Fail(BnsStatus::ParseError, e.to_string()))?;
        new_handle(doc.network, out);
        Ok(())
    })
}

/// Handle to a bundled network; `"dyspnea"` is the only one.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bns_network_builtin(name: *const c_char, out: *mut *mut BnsNetwork) -> BnsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        match text(name, "name")? {
            "dyspnea" => {
                new_handle(formats::dyspnea(), out);
                Ok(())
            }
            other => Err(Fail(BnsStatus::UnknownName, format!("no bundled network `{other}`"))),
        }
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bns_network_free(net: *mut BnsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of variables, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bns_network_len(net: *const BnsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.ctx.network().len())
}

/// Canonical JSON document for the network.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bns_network_to_json(net: *const BnsNetwork, out: *mut *mut c_char) -> BnsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let net = handle(net)?;
        give_string(formats::serialize_document(&formats::network_document(net.ctx.network())), out)
    })
}

/// Replaces one raw parameter. Frozen entries are refused.
///
/// # Safety
/// `net` must be a live handle and `param` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bns_set_param(net: *mut BnsNetwork, param: *const c_char, value: f64) -> BnsStatus {
    guard(|| {
        let h = net
            .as_mut()
            .ok_or_else(|| Fail(BnsStatus::NullPointer, "network handle is NULL".into()))?;
        let p: ParamIndex = serde_json_param(text(param, "param")?)?;
        let current = h.ctx.network();
        let (i, k) = current.resolve(&p)?;
        if current.is_frozen(i, k) {
            return Err(Error::FrozenParameter(p.to_string()).into());
        }
        let next = current.with_param(i, k, value)?;
        h.ctx = InferenceContext::new(&next);
        Ok(())
    })
}

fn serde_json_param(s: &str) -> Res<ParamIndex> {
    formats::parse_param(s).map_err(|e| Fail(BnsStatus::ParseError, e.to_string()))
}

/// Writes `P(target | evidence)` into `probs`. `len` receives the number of
/// target states; if it exceeds `capacity` nothing is written and
/// `BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// Pointers must be valid; `probs` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bns_query(
    net: *const BnsNetwork,
    evidence: *const c_char,
    target: *const c_char,
    probs: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> BnsStatus {
    guard(|| {
        let net = handle(net)?;
        let len = out_ptr(len, "len")?;
        let sc = scenario(evidence, target)?;
        let dist = net.ctx.query_marginal(&sc.evidence, &sc.target)?;
        *len = dist.len();
        if dist.len() > capacity {
            return Err(Fail(
                BnsStatus::BufferTooSmall,
                format!("{} states, capacity {capacity}", dist.len()),
            ));
        }
        if probs.is_null() {
            return Err(Fail(BnsStatus::NullPointer, "probs is NULL".into()));
        }
        ptr::copy_nonoverlapping(dist.as_ptr(), probs, dist.len());
        Ok(())
    })
}

/// `∂P(target = state | evidence) / ∂θ` for one parameter.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bns_sensitivity(
    net: *const BnsNetwork,
    evidence: *const c_char,
    target: *const c_char,
    param: *const c_char,
    state: *const c_char,
    out: *mut f64,
) -> BnsStatus {
    guard(|| {
        let net = handle(net)?;
        let out = out_ptr(out, "out")?;
        let sc = scenario(evidence, target)?;
        let p = serde_json_param(text(param, "param")?)?;
        let state = text(state, "state")?;
        let (i, k) = net.ctx.network().resolve(&p)?;
        if net.ctx.network().is_frozen(i, k) {
            return Err(Error::FrozenParameter(p.to_string()).into());
        }
        let nodes = [p.node.clone()];
        let report = sensitivities_with(&net.ctx, &sc, Some(&nodes))?;
        net.ctx.network().state_index(net.ctx.network().var_index(&sc.target)?, state)?;
        *out = report.get(&p, state).unwrap_or(0.0);
        Ok(())
    })
}

/// Largest absolute sensitivity over the parameters of `node`.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bns_node_max(
    net: *const BnsNetwork,
    evidence: *const c_char,
    target: *const c_char,
    node: *const c_char,
    out: *mut f64,
) -> BnsStatus {
    guard(|| {
        let net = handle(net)?;
        let out = out_ptr(out, "out")?;
        let sc = scenario(evidence, target)?;
        let node = text(node, "node")?.to_string();
        let nodes = [node.clone()];
        let report = sensitivities_with(&net.ctx, &sc, Some(&nodes))?;
        *out = report.node_max.get(&node).map_or(0.0, |m| m.value);
        Ok(())
    })
}

/// Full sensitivity report, or the per-node summary when `summary` is
/// true, as canonical JSON.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bns_sensitivities_json(
    net: *const BnsNetwork,
    evidence: *const c_char,
    target: *const c_char,
    summary: bool,
    out: *mut *mut c_char,
) -> BnsStatus {
    guard(|| {
        let net = handle(net)?;
        let out = out_ptr(out, "out")?;
        let sc = scenario(evidence, target)?;
        let report = sensitivities_with(&net.ctx, &sc, None)?;
        let json = if summary {
            to_canonical_json(&SensitivitySummary::from(&report))
        } else {
            to_canonical_json(&report)
        };
        give_string(json, out)
    })
}

/// Sampling estimates with standard errors as canonical JSON.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bns_mc_sensitivities_json(
    net: *const BnsNetwork,
    evidence: *const c_char,
    target: *const c_char,
    method: BnsSampler,
    samples: u64,
    seed: u64,
    out: *mut *mut c_char,
) -> BnsStatus {
    guard(|| {
        let net = handle(net)?;
        let out = out_ptr(out, "out")?;
        let sc = scenario(evidence, target)?;
        let cfg = SamplerConfig {
            method: match method {
                BnsSampler::LogicRejection => SamplingMethod::LogicRejection,
                BnsSampler::LikelihoodWeighting => SamplingMethod::LikelihoodWeighting,
            },
            sample_count: samples,
            seed,
        };
        let report = estimate_sensitivities(net.ctx.network(), &sc, &cfg)?;
        give_string(to_canonical_json(&report), out)
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn bns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn bns_status_name(status: BnsStatus) -> *const c_char {
    let s: &'static CStr = match status {
        BnsStatus::Ok => c"ok",
        BnsStatus::NullPointer => c"null pointer",
        BnsStatus::InvalidUtf8 => c"invalid utf-8",
        BnsStatus::ParseError => c"parse error",
        BnsStatus::InvalidNetwork => c"invalid network",
        BnsStatus::UnknownName => c"unknown name",
        BnsStatus::ZeroProbabilityEvidence => c"zero-probability evidence",
        BnsStatus::FrozenParameter => c"frozen parameter",
        BnsStatus::InvalidArgument => c"invalid argument",
        BnsStatus::BufferTooSmall => c"buffer too small",
        BnsStatus::SamplingFailed => c"sampling failed",
        BnsStatus::Panic => c"panic",
    };
    s.as_ptr()
}
