//! C ABI over `dse_core`.
//!
//! Every fallible call returns a [`DseStatus`]; on failure the message is
//! kept per thread and read back with [`dse_last_error_message`]. Handles
//! are opaque and freed with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dse_core::objective::{reward_perf_per_bw, reward_perf_per_cost, Evaluation, Evaluator, Objective};
use dse_core::schema::{check_constraints, constrained_cardinality, raw_cardinality, ActionVector, Cardinality, DesignPoint, Schema};
use dse_core::sim::{collective_time_1d, Algorithm, SystemFixture};
use dse_core::workload::{CollectivePattern, ModelSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DseObjective {
    PerfPerBw = 0,
    PerfPerCost = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DseCollective {
    AllReduce = 0,
    AllGather = 1,
    ReduceScatter = 2,
    AllToAll = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DseAlgorithm {
    Ring = 0,
    Direct = 1,
    HalvingDoubling = 2,
    DoubleBinaryTree = 3,
}

/// Result of one evaluation. `latency` is seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DseEvaluation {
    pub reward: f64,
    pub latency: f64,
    pub valid: bool,
}

/// Opaque schema handle.
pub struct DseSchema(Schema);

/// Opaque evaluator handle.
pub struct DseEvaluator(Evaluator);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

type Fallible<T> = Result<T, (DseStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible<()>) -> DseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DseStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DseStatus::Panic
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> (DseStatus, String) {
    (DseStatus::InvalidInput, e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err((DseStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DseStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Fallible<&'a T> {
    p.as_ref().ok_or_else(|| (DseStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Fallible<()> {
    if out.is_null() {
        return Err((DseStatus::NullPointer, format!("{what} is null")));
    }
    out.write(v);
    Ok(())
}

/// Copy `s` NUL-terminated into `buf` of `len` bytes. `needed` receives the
/// length including the terminator.
unsafe fn write_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Fallible<()> {
    let n = s.len() + 1;
    if !needed.is_null() {
        needed.write(n);
    }
    if buf.is_null() || len < n {
        return Err((DseStatus::BufferTooSmall, format!("buffer needs {n} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    buf.add(s.len()).write(0);
    Ok(())
}

/// Copies the calling thread's last error message into `buf`. Returns the
/// buffer size needed, including the terminator; 1 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dse_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let mut needed = 0;
        let _ = write_string(&msg, buf, len, &mut needed);
        needed
    })
}

/// Parse a schema document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_parse(json: *const c_char, out: *mut *mut DseSchema) -> DseStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let s = Schema::parse(text).map_err(invalid)?;
        write_out(out, Box::into_raw(Box::new(DseSchema(s))), "out")
    })
}

/// Load a schema from a file path.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_load(path: *const c_char, out: *mut *mut DseSchema) -> DseStatus {
    guard(|| {
        let p = read_str(path, "path")?;
        let s = Schema::from_file(p).map_err(invalid)?;
        write_out(out, Box::into_raw(Box::new(DseSchema(s))), "out")
    })
}

/// # Safety
/// `schema` must be null or a handle from `dse_schema_parse`/`dse_schema_load`
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_free(schema: *mut DseSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Number of action-vector slots.
///
/// # Safety
/// `schema` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_slot_count(schema: *const DseSchema, out: *mut usize) -> DseStatus {
    guard(|| {
        let s = deref(schema, "schema")?;
        write_out(out, s.0.slot_count(), "out")
    })
}

/// Point count as a decimal string; it can exceed 64 bits.
///
/// # Safety
/// `schema` must be a live handle; `buf` must be null or hold `len` bytes;
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_cardinality(
    schema: *const DseSchema,
    constrained: bool,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> DseStatus {
    guard(|| {
        let s = deref(schema, "schema")?;
        let n = if constrained {
            match constrained_cardinality(&s.0, u64::MAX) {
                Cardinality::Exact(n) => n,
                Cardinality::TooLarge => return Err(invalid("count exceeds 2^64")),
            }
        } else {
            raw_cardinality(&s.0)
        };
        write_string(&n.to_string(), buf, len, needed)
    })
}

/// Whether a design point (JSON object) satisfies every constraint.
///
/// # Safety
/// `schema` must be a live handle; `point_json` NUL-terminated; `valid`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dse_schema_check_point(
    schema: *const DseSchema,
    point_json: *const c_char,
    valid: *mut bool,
) -> DseStatus {
    guard(|| {
        let s = deref(schema, "schema")?;
        let p = DesignPoint::from_json(&s.0, read_str(point_json, "point_json")?).map_err(invalid)?;
        let v = check_constraints(&s.0, &p).map_err(invalid)?;
        write_out(valid, v.valid, "valid")
    })
}

/// Build an evaluator for `schema` (copied) with a model and system given
/// by built-in name or file path.
///
/// # Safety
/// `schema` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dse_evaluator_new(
    schema: *const DseSchema,
    model: *const c_char,
    system: *const c_char,
    objective: DseObjective,
    out: *mut *mut DseEvaluator,
) -> DseStatus {
    guard(|| {
        let mut s = deref(schema, "schema")?.0.clone();
        let model = ModelSpec::resolve(read_str(model, "model")?).map_err(invalid)?;
        let system = SystemFixture::resolve(read_str(system, "system")?).map_err(invalid)?;
        s.npu_count = system.npu_count;
        let objective = match objective {
            DseObjective::PerfPerBw => Objective::PerfPerBw,
            DseObjective::PerfPerCost => Objective::PerfPerCost,
        };
        let ev = Evaluator::new(s, model, system, objective);
        write_out(out, Box::into_raw(Box::new(DseEvaluator(ev))), "out")
    })
}

/// # Safety
/// `evaluator` must be null or a live handle from `dse_evaluator_new`.
#[no_mangle]
pub unsafe extern "C" fn dse_evaluator_free(evaluator: *mut DseEvaluator) {
    if !evaluator.is_null() {
        drop(Box::from_raw(evaluator));
    }
}

/// Set the per-NPU memory limit in GB (default 24).
///
/// # Safety
/// `evaluator` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dse_evaluator_set_memory_limit(evaluator: *mut DseEvaluator, gigabytes: f64) -> DseStatus {
    guard(|| {
        let ev = evaluator.as_mut().ok_or_else(|| (DseStatus::NullPointer, "evaluator is null".to_string()))?;
        if !(gigabytes > 0.0) {
            return Err(invalid("memory limit must be positive"));
        }
        ev.0.memory_limit = gigabytes * 1e9;
        Ok(())
    })
}

fn to_c(e: &Evaluation) -> DseEvaluation {
    DseEvaluation { reward: e.reward, latency: e.latency, valid: e.valid }
}

/// Evaluate an action vector. An invalid point is not an error: it yields
/// `valid = false` and reward 0.
///
/// # Safety
/// `evaluator` must be a live handle; `action` must point to `len` values;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dse_evaluate_action(
    evaluator: *const DseEvaluator,
    action: *const usize,
    len: usize,
    out: *mut DseEvaluation,
) -> DseStatus {
    guard(|| {
        let ev = deref(evaluator, "evaluator")?;
        if action.is_null() && len > 0 {
            return Err((DseStatus::NullPointer, "action is null".into()));
        }
        let a = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(action, len).to_vec() };
        write_out(out, to_c(&ev.0.evaluate_action(&ActionVector(a))), "out")
    })
}

/// Evaluate a design point given as a JSON object.
///
/// # Safety
/// `evaluator` must be a live handle; `point_json` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dse_evaluate_point(
    evaluator: *const DseEvaluator,
    point_json: *const c_char,
    out: *mut DseEvaluation,
) -> DseStatus {
    guard(|| {
        let ev = deref(evaluator, "evaluator")?;
        let p = DesignPoint::from_json(&ev.0.schema, read_str(point_json, "point_json")?).map_err(invalid)?;
        write_out(out, to_c(&ev.0.evaluate(&p)), "out")
    })
}

/// Reward for latency (s) against per-dim bandwidths (GB/s).
///
/// # Safety
/// `bandwidth` must point to `len` values or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn dse_reward_perf_per_bw(latency: f64, bandwidth: *const f64, len: usize) -> f64 {
    let bw = if bandwidth.is_null() || len == 0 { &[][..] } else { std::slice::from_raw_parts(bandwidth, len) };
    reward_perf_per_bw(latency, bw)
}

#[no_mangle]
pub extern "C" fn dse_reward_perf_per_cost(latency: f64, network_cost: f64) -> f64 {
    reward_perf_per_cost(latency, network_cost)
}

/// One-dimension collective time in seconds. Bandwidth is bytes/s and
/// latency seconds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dse_collective_time(
    pattern: DseCollective,
    algorithm: DseAlgorithm,
    npus: u64,
    payload_bytes: f64,
    link_bandwidth: f64,
    link_latency: f64,
    chunks: u32,
    out: *mut f64,
) -> DseStatus {
    guard(|| {
        if npus == 0 || chunks == 0 || !(link_bandwidth > 0.0) || !(link_latency >= 0.0) || !(payload_bytes >= 0.0) {
            return Err(invalid("npus and chunks must be positive, bandwidth positive, latency and payload non-negative"));
        }
        let pattern = match pattern {
            DseCollective::AllReduce => CollectivePattern::AllReduce,
            DseCollective::AllGather => CollectivePattern::AllGather,
            DseCollective::ReduceScatter => CollectivePattern::ReduceScatter,
            DseCollective::AllToAll => CollectivePattern::AllToAll,
        };
        let algorithm = match algorithm {
            DseAlgorithm::Ring => Algorithm::Ring,
            DseAlgorithm::Direct => Algorithm::Direct,
            DseAlgorithm::HalvingDoubling => Algorithm::HalvingDoubling,
            DseAlgorithm::DoubleBinaryTree => Algorithm::DoubleBinaryTree,
        };
        let t = collective_time_1d(pattern, algorithm, npus, payload_bytes, link_bandwidth, link_latency, chunks);
        write_out(out, t, "out")
    })
}
