//! C ABI for `meg`.
//!
//! Every function returns a [`MegStatus`] and writes results through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free` function. After a failing call, [`meg_last_error`] describes
//! what went wrong on the calling thread.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meg::graph::EventPayload;
use meg::monitor::{MembershipDirectory, SignatureScheme, SignedEnvelope, SigningKey};
use meg::replica::Replica;
use meg::sim::{run_scenario, RunSummary, ScenarioSpec};
use meg::urn;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Urn parameters outside the domain of the formulas.
    Domain = 3,
    /// The reference monitor refused an inbound envelope.
    Rejected = 4,
    /// Malformed wire bytes or scenario JSON.
    Parse = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MegScheme {
    KeyedHash = 0,
    Ed25519 = 1,
}

/// A byte buffer owned by the library. Release with [`meg_bytes_free`].
#[repr(C)]
pub struct MegBytes {
    pub data: *mut u8,
    pub len: usize,
}

pub struct MegReplica {
    inner: Replica,
    rng: ChaCha8Rng,
}

pub struct MegDirectory {
    inner: MembershipDirectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: MegStatus, msg: impl ToString) -> MegStatus {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
    status
}

fn guard(f: impl FnOnce() -> MegStatus) -> MegStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MegStatus::Internal, "panic inside meg"))
}

fn urn_status(e: urn::UrnError) -> MegStatus {
    fail(MegStatus::Domain, e)
}

/// Message for the last failure on this thread. Valid until the next call
/// on the same thread.
#[no_mangle]
pub extern "C" fn meg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn meg_status_name(status: MegStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MegStatus::Ok => c"ok",
        MegStatus::NullPointer => c"null pointer",
        MegStatus::InvalidArgument => c"invalid argument",
        MegStatus::Domain => c"domain error",
        MegStatus::Rejected => c"rejected",
        MegStatus::Parse => c"parse error",
        MegStatus::BufferTooSmall => c"buffer too small",
        MegStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

// Width analysis.

macro_rules! out_or_null {
    ($out:expr) => {
        if $out.is_null() {
            return fail(MegStatus::NullPointer, "output pointer is null");
        }
    };
}

/// # Safety
/// `out` must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn meg_expected_removed(u: u64, d: u64, k: u64, out: *mut f64) -> MegStatus {
    out_or_null!(out);
    guard(|| match urn::expected_removed(u, d, k) {
        Ok(v) => {
            *out = v;
            MegStatus::Ok
        }
        Err(e) => urn_status(e),
    })
}

/// # Safety
/// `out` must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn meg_variance_removed(u: u64, d: u64, k: u64, out: *mut f64) -> MegStatus {
    out_or_null!(out);
    guard(|| match urn::variance_removed(u, d, k) {
        Ok(v) => {
            *out = v;
            MegStatus::Ok
        }
        Err(e) => urn_status(e),
    })
}

/// Writes `P(R = j)` for `j = 0..=u` into `out`, which must hold at least
/// `u + 1` values.
///
/// # Safety
/// `out` must be valid for `len` writes of `double`.
#[no_mangle]
pub unsafe extern "C" fn meg_pmf_removed(u: u64, d: u64, k: u64, out: *mut f64, len: usize) -> MegStatus {
    out_or_null!(out);
    guard(|| {
        let pmf = match urn::pmf_removed(u, d, k) {
            Ok(p) => p,
            Err(e) => return urn_status(e),
        };
        if len < pmf.probs.len() {
            return fail(MegStatus::BufferTooSmall, format!("need {} values, got {len}", pmf.probs.len()));
        }
        ptr::copy_nonoverlapping(pmf.probs.as_ptr(), out, pmf.probs.len());
        MegStatus::Ok
    })
}

/// # Safety
/// `out` must be valid for a write of one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn meg_fixed_point(d: u64, k: u64, out: *mut u64) -> MegStatus {
    out_or_null!(out);
    guard(|| match urn::fixed_point(d, k) {
        Ok(v) => {
            *out = v;
            MegStatus::Ok
        }
        Err(e) => urn_status(e),
    })
}

/// # Safety
/// `out` must be valid for a write of one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn meg_rounds_until_convergence(u0: f64, d: u64, k: u64, out: *mut u64) -> MegStatus {
    out_or_null!(out);
    guard(|| match urn::rounds_until_convergence(u0, d, k) {
        Ok(v) => {
            *out = v;
            MegStatus::Ok
        }
        Err(e) => urn_status(e),
    })
}

// Replicas.

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, MegStatus> {
    if s.is_null() {
        return Err(fail(MegStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(MegStatus::InvalidArgument, e))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], MegStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(MegStatus::NullPointer, "data pointer is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn into_bytes(v: Vec<u8>) -> MegBytes {
    let mut boxed = v.into_boxed_slice();
    let out = MegBytes { data: boxed.as_mut_ptr(), len: boxed.len() };
    std::mem::forget(boxed);
    out
}

/// Creates a replica of room `room_id` whose key derives from the 32-byte
/// `key_seed`. Parent selection draws from a generator seeded with `rng_seed`.
///
/// # Safety
/// `key_seed` must point to 32 readable bytes, `room_id` must be a
/// NUL-terminated string, and `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_new(
    scheme: MegScheme,
    key_seed: *const u8,
    room_id: *const c_char,
    rng_seed: u64,
    out: *mut *mut MegReplica,
) -> MegStatus {
    out_or_null!(out);
    if key_seed.is_null() {
        return fail(MegStatus::NullPointer, "key seed is null");
    }
    let room = match c_str(room_id) {
        Ok(r) => r,
        Err(s) => return s,
    };
    guard(|| {
        let mut seed = [0u8; 32];
        ptr::copy_nonoverlapping(key_seed, seed.as_mut_ptr(), 32);
        let scheme = match scheme {
            MegScheme::KeyedHash => SignatureScheme::KeyedHash,
            MegScheme::Ed25519 => SignatureScheme::Ed25519,
        };
        let replica = MegReplica {
            inner: Replica::new(SigningKey::from_seed(scheme, seed), room),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        };
        *out = Box::into_raw(Box::new(replica));
        MegStatus::Ok
    })
}

/// # Safety
/// `replica` must come from [`meg_replica_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_free(replica: *mut MegReplica) {
    if !replica.is_null() {
        drop(Box::from_raw(replica));
    }
}

/// Writes the 32-byte replica id.
///
/// # Safety
/// `replica` must be a live handle and `out` valid for 32 writes.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_id(replica: *const MegReplica, out: *mut u8) -> MegStatus {
    out_or_null!(out);
    let Some(r) = replica.as_ref() else {
        return fail(MegStatus::NullPointer, "replica is null");
    };
    ptr::copy_nonoverlapping(r.inner.id().as_bytes().as_ptr(), out, 32);
    MegStatus::Ok
}

/// Number of forward extremities, or 0 for a null handle.
///
/// # Safety
/// `replica` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_width(replica: *const MegReplica) -> usize {
    replica.as_ref().map_or(0, |r| r.inner.width())
}

/// Number of applied vertices including the root, or 0 for a null handle.
///
/// # Safety
/// `replica` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_len(replica: *const MegReplica) -> usize {
    replica.as_ref().map_or(0, |r| r.inner.state().len())
}

/// Number of operations waiting for missing parents, or 0 for a null handle.
///
/// # Safety
/// `replica` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_pending(replica: *const MegReplica) -> usize {
    replica.as_ref().map_or(0, |r| r.inner.buffer().len())
}

/// Writes the 32-byte state digest.
///
/// # Safety
/// `replica` must be a live handle and `out` valid for 32 writes.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_digest(replica: *const MegReplica, out: *mut u8) -> MegStatus {
    out_or_null!(out);
    let Some(r) = replica.as_ref() else {
        return fail(MegStatus::NullPointer, "replica is null");
    };
    ptr::copy_nonoverlapping(r.inner.state().digest().as_bytes().as_ptr(), out, 32);
    MegStatus::Ok
}

/// Creates, signs and applies an event with at most `cap` parents. The
/// wire form for broadcasting is written to `out`.
///
/// # Safety
/// `replica` must be a live handle, `kind` a NUL-terminated string, `body`
/// valid for `body_len` reads, and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_create_event(
    replica: *mut MegReplica,
    kind: *const c_char,
    body: *const u8,
    body_len: usize,
    cap: usize,
    out: *mut MegBytes,
) -> MegStatus {
    out_or_null!(out);
    let Some(r) = replica.as_mut() else {
        return fail(MegStatus::NullPointer, "replica is null");
    };
    let (kind, body) = match (c_str(kind), bytes(body, body_len)) {
        (Ok(k), Ok(b)) => (k, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    guard(|| {
        let payload = match EventPayload::new(kind, body.to_vec()) {
            Ok(p) => p,
            Err(e) => return fail(MegStatus::InvalidArgument, e),
        };
        match r.inner.create_event(payload, cap, &BTreeSet::new(), &mut r.rng) {
            Ok(env) => {
                *out = into_bytes(env.to_wire());
                MegStatus::Ok
            }
            Err(e) => fail(MegStatus::InvalidArgument, e),
        }
    })
}

/// Passes wire bytes through the reference monitor and ingests them. Ops
/// with missing parents are buffered and still report `Ok`.
///
/// # Safety
/// `replica` and `directory` must be live handles and `wire` valid for
/// `len` reads.
#[no_mangle]
pub unsafe extern "C" fn meg_replica_receive(
    replica: *mut MegReplica,
    directory: *const MegDirectory,
    wire: *const u8,
    len: usize,
) -> MegStatus {
    let (Some(r), Some(dir)) = (replica.as_mut(), directory.as_ref()) else {
        return fail(MegStatus::NullPointer, "replica or directory is null");
    };
    let wire = match bytes(wire, len) {
        Ok(w) => w,
        Err(s) => return s,
    };
    guard(|| {
        let env = match SignedEnvelope::from_wire(wire) {
            Ok(e) => e,
            Err(e) => return fail(MegStatus::Parse, e),
        };
        match r.inner.receive(env, &dir.inner) {
            Ok(_) => MegStatus::Ok,
            Err(e) => fail(MegStatus::Rejected, e),
        }
    })
}

/// Builds the membership directory from `n` replica handles, tolerating
/// `f` faulty members.
///
/// # Safety
/// `replicas` must point to `n` live handles and `out` be valid for one
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn meg_directory_new(
    replicas: *const *const MegReplica,
    n: usize,
    f: usize,
    out: *mut *mut MegDirectory,
) -> MegStatus {
    out_or_null!(out);
    if replicas.is_null() && n > 0 {
        return fail(MegStatus::NullPointer, "replica array is null");
    }
    let mut keys = Vec::with_capacity(n);
    for i in 0..n {
        match (*replicas.add(i)).as_ref() {
            Some(r) => keys.push(r.inner.key().verifying_key()),
            None => return fail(MegStatus::NullPointer, format!("replica {i} is null")),
        }
    }
    match MembershipDirectory::new(keys, f) {
        Ok(dir) => {
            *out = Box::into_raw(Box::new(MegDirectory { inner: dir }));
            MegStatus::Ok
        }
        Err(e) => fail(MegStatus::InvalidArgument, e),
    }
}

/// # Safety
/// `directory` must come from [`meg_directory_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn meg_directory_free(directory: *mut MegDirectory) {
    if !directory.is_null() {
        drop(Box::from_raw(directory));
    }
}

/// # Safety
/// `bytes` must have been filled by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn meg_bytes_free(bytes: MegBytes) {
    if !bytes.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes.data, bytes.len)));
    }
}

// Simulation.

/// Runs a scenario given as JSON and writes a JSON run summary to `out`.
/// Release it with [`meg_string_free`]. A run whose verdicts fail still
/// returns `Ok`; inspect the summary.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string and `out` valid for one
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn meg_run_scenario_json(scenario_json: *const c_char, out: *mut *mut c_char) -> MegStatus {
    out_or_null!(out);
    let text = match c_str(scenario_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    guard(|| {
        let spec = match ScenarioSpec::from_json(text) {
            Ok(s) => s,
            Err(e) => return fail(MegStatus::Parse, e),
        };
        match run_scenario(&spec) {
            Ok((metrics, verdict)) => {
                let json = serde_json::to_string(&RunSummary::new(&metrics, verdict)).expect("summary serializes");
                *out = CString::new(json).expect("json has no NUL").into_raw();
                MegStatus::Ok
            }
            Err(e) => fail(MegStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed before.
#[no_mangle]
pub unsafe extern "C" fn meg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
