//! C ABI over `crpnet`.
//!
//! Handles are opaque and owned by the caller; every `*_new` has a `*_free`.
//! Functions return a `CrpStatus`; on failure `crp_last_error` describes it.
//! Strings returned through `char **` are released with `crp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crpnet::network::{parse_network, NetworkSpec};
use crpnet::planner::{PlanError, StaticPlan};
use crpnet::policy::{make_plan, scale_parameters, PolicyParams};
use crpnet::scaling::{compute_sigma2, rbm_tail, regulator_map, StepPath};
use crpnet::sim::{accumulate_cost, run_baseline_trajectory, run_dr_trajectory, Discipline};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Assumption = 4,
    Policy = 5,
    Domain = 6,
    Dimension = 7,
    Panic = 8,
}

/// Policy selector for `crp_simulate_summary_json`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpPolicy {
    Dr = 0,
    Priority = 1,
    LongestQueue = 2,
}

/// Scalar policy constants of a plan.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrpConstants {
    pub rho_star: f64,
    pub c0: f64,
    pub c1: f64,
    pub delta: f64,
    pub delta_bound: f64,
    pub cheapest_buffer: usize,
}

/// Parsed network.
pub struct CrpNetwork {
    spec: NetworkSpec,
}

/// Static plan built from a network; keeps its own copy of the network.
pub struct CrpPlan {
    net: NetworkSpec,
    plan: StaticPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Fail(CrpStatus, String);

impl Fail {
    fn new(status: CrpStatus, msg: impl std::fmt::Display) -> Self {
        Fail(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CrpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside crpnet");
            CrpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(CrpStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail::new(CrpStatus::InvalidUtf8, e))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::new(CrpStatus::NullPointer, format!("null {what}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::new(CrpStatus::NullPointer, "null array argument"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if len != src.len() {
        return Err(Fail::new(CrpStatus::Dimension, format!("expected length {}, got {len}", src.len())));
    }
    if len > 0 {
        if out.is_null() {
            return Err(Fail::new(CrpStatus::NullPointer, "null output array"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    }
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(CrpStatus::NullPointer, "null output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, value: &serde_json::Value) -> Result<(), Fail> {
    let text = CString::new(value.to_string()).expect("JSON has no interior NUL");
    put(out, text.into_raw())
}

fn plan_status(e: &PlanError) -> CrpStatus {
    match e {
        PlanError::Assumptions(_) | PlanError::Infeasible | PlanError::Unbounded | PlanError::NonUnique { .. } => {
            CrpStatus::Assumption
        }
        _ => CrpStatus::Domain,
    }
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next `crp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn crp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` is null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn crp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a network JSON document.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_network_from_json(json: *const c_char, out: *mut *mut CrpNetwork) -> CrpStatus {
    guard(|| {
        let text = str_arg(json)?;
        let spec = parse_network(text).map_err(|e| Fail::new(CrpStatus::Parse, e))?;
        put(out, Box::into_raw(Box::new(CrpNetwork { spec })))
    })
}

/// # Safety
/// `net` is null or a handle from `crp_network_from_json`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn crp_network_free(net: *mut CrpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crp_network_num_buffers(net: *const CrpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.num_buffers())
}

/// # Safety
/// `net` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crp_network_num_activities(net: *const CrpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.num_activities())
}

/// # Safety
/// `net` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crp_network_num_servers(net: *const CrpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.num_servers())
}

/// Solves the static plan and builds the policy matrix and constants.
/// `CRP_STATUS_ASSUMPTION` when heavy traffic, CRP, BAB or uniqueness fail.
///
/// # Safety
/// `net` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_new(net: *const CrpNetwork, out: *mut *mut CrpPlan) -> CrpStatus {
    guard(|| {
        let net = &ref_arg(net, "network")?.spec;
        let plan = StaticPlan::build(net).map_err(|e| Fail::new(plan_status(&e), e))?;
        put(out, Box::into_raw(Box::new(CrpPlan { net: net.clone(), plan })))
    })
}

/// # Safety
/// `plan` is null or a handle from `crp_plan_new`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_free(plan: *mut CrpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Copies `x*` (length n) into `out`.
///
/// # Safety
/// `plan` is live; `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_x_star(plan: *const CrpPlan, out: *mut f64, len: usize) -> CrpStatus {
    guard(|| copy_out(&ref_arg(plan, "plan")?.plan.x_star, out, len))
}

/// Copies `y` (length m) into `out`.
///
/// # Safety
/// `plan` is live; `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_y(plan: *const CrpPlan, out: *mut f64, len: usize) -> CrpStatus {
    guard(|| copy_out(&ref_arg(plan, "plan")?.plan.y, out, len))
}

/// Copies `pi` (length p) into `out`.
///
/// # Safety
/// `plan` is live; `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_pi(plan: *const CrpPlan, out: *mut f64, len: usize) -> CrpStatus {
    guard(|| copy_out(&ref_arg(plan, "plan")?.plan.pi, out, len))
}

/// Copies `theta*` (length m) into `out`.
///
/// # Safety
/// `plan` is live; `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_theta_star(plan: *const CrpPlan, out: *mut f64, len: usize) -> CrpStatus {
    guard(|| copy_out(&ref_arg(plan, "plan")?.plan.theta_star, out, len))
}

/// # Safety
/// `plan` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_constants(plan: *const CrpPlan, out: *mut CrpConstants) -> CrpStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.plan;
        put(
            out,
            CrpConstants {
                rho_star: p.rho_star,
                c0: p.c0,
                c1: p.c1,
                delta: p.delta,
                delta_bound: p.delta_bound,
                cheapest_buffer: p.cheapest_buffer(),
            },
        )
    })
}

/// Full plan report as JSON.
///
/// # Safety
/// `plan` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_plan_report_json(plan: *const CrpPlan, out: *mut *mut c_char) -> CrpStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.plan;
        put_json(out, &serde_json::to_value(p.report()).expect("report serializes"))
    })
}

/// Brownian workload variance `sigma^2`.
///
/// # Safety
/// `plan` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_sigma2(plan: *const CrpPlan, out: *mut f64) -> CrpStatus {
    guard(|| {
        let h = ref_arg(plan, "plan")?;
        put(out, compute_sigma2(&h.net, &h.plan).sigma2)
    })
}

/// Review plan for queue lengths `q` (length m) at planning length `l`, as JSON.
///
/// # Safety
/// `plan` is live; `q` holds `len` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_policy_step_json(
    plan: *const CrpPlan,
    l: f64,
    q: *const f64,
    len: usize,
    out: *mut *mut c_char,
) -> CrpStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.plan;
        let q = slice_arg(q, len)?;
        let params = PolicyParams::with_length(l, p).map_err(|e| Fail::new(CrpStatus::Policy, e))?;
        let review = make_plan(q, &params, p).map_err(|e| Fail::new(CrpStatus::Policy, e))?;
        put_json(out, &serde_json::to_value(review).expect("plan serializes"))
    })
}

/// Simulates one trajectory to `r^2 horizon` and reports a JSON summary:
/// sample and period counts, Case-2 fraction, final queue lengths and
/// workload, time-average holding cost.
///
/// # Safety
/// `plan` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_simulate_summary_json(
    plan: *const CrpPlan,
    policy: u32,
    r: u32,
    eps2: f64,
    horizon: f64,
    seed: u64,
    replication: u64,
    out: *mut *mut c_char,
) -> CrpStatus {
    guard(|| {
        let h = ref_arg(plan, "plan")?;
        if r == 0 || !(horizon > 0.0) {
            return Err(Fail::new(CrpStatus::Domain, "r and horizon must be positive"));
        }
        let rf = r as f64;
        let params = scale_parameters(rf, eps2, &h.plan).map_err(|e| Fail::new(CrpStatus::Policy, e))?;
        let end = rf * rf * horizon;
        let traj = match policy {
            p if p == CrpPolicy::Dr as u32 => run_dr_trajectory(&h.net, &h.plan, &params, end, seed, replication),
            p if p == CrpPolicy::Priority as u32 => {
                run_baseline_trajectory(&h.net, &h.plan, end, seed, replication, Discipline::Priority)
            }
            p if p == CrpPolicy::LongestQueue as u32 => {
                run_baseline_trajectory(&h.net, &h.plan, end, seed, replication, Discipline::LongestQueue)
            }
            other => return Err(Fail::new(CrpStatus::Domain, format!("unknown policy {other}"))),
        };
        let last = traj.samples.last().expect("trajectory has a start sample");
        let cost = accumulate_cost(&traj, &h.net.holding_cost, 0.0);
        let summary = serde_json::json!({
            "samples": traj.samples.len(),
            "periods": traj.periods.len(),
            "case2_fraction": traj.case2_fraction(),
            "final_z": last.z,
            "final_w": last.w,
            "average_cost": cost.average,
        });
        put_json(out, &summary)
    })
}

/// `P(W*(t) > w)` for driftless RBM with variance `sigma^2` started at 0.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn crp_rbm_tail(w: f64, t: f64, sigma: f64, out: *mut f64) -> CrpStatus {
    guard(|| put(out, rbm_tail(w, t, sigma).map_err(|e| Fail::new(CrpStatus::Domain, e))?))
}

/// One-dimensional regulator on a sampled path `x` of length `len`:
/// `psi` and `phi` each receive `len` values.
///
/// # Safety
/// `x`, `psi`, `phi` each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn crp_regulator_map(x: *const f64, len: usize, psi: *mut f64, phi: *mut f64) -> CrpStatus {
    guard(|| {
        let x = slice_arg(x, len)?;
        let path = StepPath::new((0..len).map(|k| k as f64).collect(), x.to_vec());
        let (p, f) = regulator_map(&path);
        copy_out(&p.value, psi, len)?;
        copy_out(&f.value, phi, len)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_pointers_are_reported() {
        let mut out: *mut CrpNetwork = ptr::null_mut();
        let status = unsafe { crp_network_from_json(ptr::null(), &mut out) };
        assert_eq!(status, CrpStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(crp_last_error()) };
        assert!(!msg.to_bytes().is_empty());
        assert_eq!(unsafe { crp_network_num_buffers(ptr::null()) }, 0);
    }

    #[test]
    fn regulator_through_abi() {
        let x = [0.0, -1.0, -3.0, -2.0];
        let (mut psi, mut phi) = ([0.0; 4], [0.0; 4]);
        let s = unsafe { crp_regulator_map(x.as_ptr(), 4, psi.as_mut_ptr(), phi.as_mut_ptr()) };
        assert_eq!(s, CrpStatus::Ok);
        assert_eq!(psi, [0.0, 1.0, 3.0, 3.0]);
        assert_eq!(phi, [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn tail_domain_error() {
        let mut p = 0.0;
        assert_eq!(unsafe { crp_rbm_tail(1.0, 0.0, 1.0, &mut p) }, CrpStatus::Domain);
        assert_eq!(unsafe { crp_rbm_tail(0.0, 1.0, 1.0, &mut p) }, CrpStatus::Ok);
        assert_eq!(p, 1.0);
    }
}
