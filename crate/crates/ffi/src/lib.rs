//! C ABI over `mixcut`.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every function returns a [`MixStatus`]; on failure
//! the message is available from [`mix_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mixcut::kernel::{self, SearchOptions, Start, TimeMode};
use mixcut::product::{self, ProductSpec, ProductStarts};
use mixcut::{spectral_gap, DistanceKind, Distribution, Error, MarkovChain, StochasticMatrix};

pub const MIX_KIND_TV: u32 = 0;
pub const MIX_KIND_HELLINGER: u32 = 1;
pub const MIX_KIND_L2: u32 = 2;

/// Passed as a start state to mean "worst case over all point-mass starts".
pub const MIX_START_MAX: i64 = -1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    ValidationFailed = 3,
    Numeric = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque chain handle.
pub struct MixChain {
    inner: MarkovChain,
}

/// Opaque product handle.
pub struct MixProduct {
    inner: ProductSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> MixStatus {
    match e {
        Error::Validation(_) | Error::Reducible | Error::NotReversible => MixStatus::ValidationFailed,
        e if e.is_numeric() => MixStatus::Numeric,
        _ => MixStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MixStatus>) -> MixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MixStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside mixcut");
            MixStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, MixStatus>;
}

impl<T> OrStatus<T> for mixcut::Result<T> {
    fn or_status(self) -> Result<T, MixStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null() -> MixStatus {
    set_error("null pointer argument");
    MixStatus::NullPointer
}

fn kind_of(kind: u32) -> Result<DistanceKind, MixStatus> {
    match kind {
        MIX_KIND_TV => Ok(DistanceKind::Tv),
        MIX_KIND_HELLINGER => Ok(DistanceKind::Hellinger),
        MIX_KIND_L2 => Ok(DistanceKind::L2),
        other => {
            set_error(format!("unknown distance kind {other}"));
            Err(MixStatus::InvalidInput)
        }
    }
}

fn start_of(chain: &MarkovChain, state: i64) -> Result<Start, MixStatus> {
    if state == MIX_START_MAX {
        return Ok(Start::Max);
    }
    match usize::try_from(state) {
        Ok(i) if i < chain.size() => Ok(Start::point(chain.size(), i)),
        _ => {
            set_error(format!("start state {state} outside 0..{}", chain.size()));
            Err(MixStatus::InvalidInput)
        }
    }
}

/// # Safety
/// `p` must be null or valid for reads of `len` values.
unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], MixStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or valid for a write.
unsafe fn write<T>(out: *mut T, v: T) -> Result<(), MixStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Copies the last error message (NUL-terminated, truncated to fit) and
/// returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mix_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a chain from an `n × n` row-major kernel; the stationary
/// distribution is solved for. Fails with `ValidationFailed` on a bad kernel.
///
/// # Safety
/// `data` must be valid for `n * n` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_from_dense(n: usize, data: *const f64, out: *mut *mut MixChain) -> MixStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or(MixStatus::InvalidInput)?;
        let data = slice(data, len)?.to_vec();
        let kernel = StochasticMatrix::from_row_major(n, data).or_status()?;
        let inner = MarkovChain::new("ffi", kernel).or_status()?;
        write(out, Box::into_raw(Box::new(MixChain { inner })))
    })
}

/// Builds a chain from the JSON chain-file format.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_from_json(json: *const c_char, out: *mut *mut MixChain) -> MixStatus {
    guard(|| {
        if json.is_null() {
            return Err(null());
        }
        let s = CStr::from_ptr(json).to_str().map_err(|_| {
            set_error("chain JSON is not UTF-8");
            MixStatus::InvalidInput
        })?;
        let inner = MarkovChain::from_json_str(s).or_status()?;
        write(out, Box::into_raw(Box::new(MixChain { inner })))
    })
}

/// # Safety
/// `chain` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_free(chain: *mut MixChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// # Safety
/// `chain` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_num_states(chain: *const MixChain, out: *mut usize) -> MixStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(null)?;
        write(out, c.inner.size())
    })
}

/// Writes the stationary distribution into `buf` (`len ≥ num_states`).
///
/// # Safety
/// `chain` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_stationary(chain: *const MixChain, buf: *mut f64, len: usize) -> MixStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(null)?;
        let pi = c.inner.stationary().as_slice();
        if buf.is_null() {
            return Err(null());
        }
        if len < pi.len() {
            set_error(format!("buffer holds {len} values, need {}", pi.len()));
            return Err(MixStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(pi.as_ptr(), buf, pi.len());
        Ok(())
    })
}

/// # Safety
/// `chain` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_spectral_gap(chain: *const MixChain, out: *mut f64) -> MixStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(null)?;
        write(out, spectral_gap(&c.inner).or_status()?)
    })
}

/// Distance between two distributions of length `len` (`nu` is the reference for L²).
///
/// # Safety
/// `mu`, `nu` valid for `len` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_distance(kind: u32, mu: *const f64, nu: *const f64, len: usize, out: *mut f64) -> MixStatus {
    guard(|| {
        let kind = kind_of(kind)?;
        let mu = Distribution::new(slice(mu, len)?.to_vec()).or_status()?;
        let nu = Distribution::new(slice(nu, len)?.to_vec()).or_status()?;
        write(out, kind.eval(mu.as_slice(), nu.as_slice()).or_status()?)
    })
}

/// Distance to stationarity at continuous time `t` from `start_state`
/// (or the worst start for [`MIX_START_MAX`]).
///
/// # Safety
/// `chain` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_distance_at(chain: *const MixChain, kind: u32, start_state: i64, t: f64, out: *mut f64) -> MixStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(null)?;
        let kind = kind_of(kind)?;
        let start = start_of(&c.inner, start_state)?;
        let opts = SearchOptions::default();
        write(out, kernel::distance_at_start(&c.inner, kind, &start, t, &opts.params).or_status()?)
    })
}

/// Mixing time `inf{t : d(t) ≤ epsilon}`; steps when `discrete` is true.
///
/// # Safety
/// `chain` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_chain_mixing_time(
    chain: *const MixChain,
    kind: u32,
    epsilon: f64,
    start_state: i64,
    discrete: bool,
    out: *mut f64,
) -> MixStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(null)?;
        let kind = kind_of(kind)?;
        let start = start_of(&c.inner, start_state)?;
        let mode = if discrete { TimeMode::Discrete } else { TimeMode::Continuous };
        let m = kernel::mixing_time(&c.inner, kind, epsilon, &start, mode, &SearchOptions::default()).or_status()?;
        write(out, m.value)
    })
}

/// Product of `len` chains (copied) with positive weights.
///
/// # Safety
/// `chains` and `weights` valid for `len` reads, each chain a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_product_new(
    chains: *const *const MixChain,
    weights: *const f64,
    len: usize,
    out: *mut *mut MixProduct,
) -> MixStatus {
    guard(|| {
        let hs = slice(chains, len)?;
        let mut coords = Vec::with_capacity(len);
        for h in hs {
            coords.push(h.as_ref().ok_or_else(null)?.inner.clone());
        }
        let w = slice(weights, len)?.to_vec();
        let inner = ProductSpec::new(coords, w).or_status()?;
        write(out, Box::into_raw(Box::new(MixProduct { inner })))
    })
}

/// # Safety
/// `p` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mix_product_free(p: *mut MixProduct) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Exact worst-start Hellinger distance of the product at time `t`.
///
/// # Safety
/// `p` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mix_product_hellinger(p: *const MixProduct, t: f64, out: *mut f64) -> MixStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(null)?;
        let opts = SearchOptions::default();
        write(out, product::product_hellinger_exact(&p.inner, t, &ProductStarts::Max, &opts.params).or_status()?)
    })
}

/// Bracket on the worst-start TV distance of the product at time `t`.
///
/// # Safety
/// `p` must be a live handle; `lower`, `upper` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn mix_product_tv_bracket(p: *const MixProduct, t: f64, lower: *mut f64, upper: *mut f64) -> MixStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(null)?;
        let opts = SearchOptions::default();
        let b = product::product_tv_bracket(&p.inner, t, &ProductStarts::Max, &opts.params).or_status()?;
        write(lower, b.lower)?;
        write(upper, b.upper)
    })
}
