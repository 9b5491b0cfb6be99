//! C ABI over the `relaxtube` library.
//!
//! Every function returns an [`RtStatus`]; on failure a message is kept per thread and
//! can be read with [`rt_last_error_message`]. Objects are opaque handles released by
//! their `_free` function, strings returned to the caller are released with
//! [`rt_string_free`]. Point arrays are row-major, `count * dim` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use relaxtube::cli::counterexample::counterexample_pair;
use relaxtube::cli::{run, to_json_pretty, Overrides, Scenario, Task};
use relaxtube::inclusion::{builtin, parse_system, SetMap};
use relaxtube::integrate::{integrate, SelectionPolicy, TimeGrid, Trajectory};
use relaxtube::setgeom::{hausdorff, Point, PointSet};
use relaxtube::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Parse = 4,
    Numeric = 5,
    Verification = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Set-valued right-hand side.
pub struct RtSetMap(SetMap);

/// Sampled trajectory.
pub struct RtTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(RtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => RtStatus::Parse,
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Domain { .. } => RtStatus::InvalidInput,
            Error::Verification(_) => RtStatus::Verification,
            _ => RtStatus::Numeric,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RtStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {m}"));
            RtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(RtStatus::InvalidInput, "string contains NUL".into()))
}

fn point_set(data: &[f64], count: usize, dim: usize, convex: bool) -> Result<PointSet, Fail> {
    if dim == 0 || count == 0 || data.len() != count * dim {
        return Err(Fail(RtStatus::InvalidInput, "point array must hold count * dim > 0 values".into()));
    }
    let pts = data.chunks(dim).map(|c| Point::new(c.to_vec())).collect::<Result<Vec<_>, _>>()?;
    Ok(PointSet::new(pts, convex)?)
}

/// Parses equation text into a new map.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_setmap_parse(source: *const c_char, out: *mut *mut RtSetMap) -> RtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let src = str_arg(source, "source")?;
        *out = Box::into_raw(Box::new(RtSetMap(parse_system(src)?)));
        Ok(())
    })
}

/// One of `binary_switch`, `linear_decay`, `example41`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_setmap_builtin(name: *const c_char, out: *mut *mut RtSetMap) -> RtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        *out = Box::into_raw(Box::new(RtSetMap(builtin(name)?)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rt_setmap_free(map: *mut RtSetMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rt_setmap_dim(map: *const RtSetMap, out: *mut usize) -> RtStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(|| null("map"))?;
        *out_arg(out, "out")? = m.0.dim();
        Ok(())
    })
}

/// Writes the points of `F(t, x)` into `out` (capacity `cap` doubles) and their number
/// into `count`. With too small a buffer, `count` is still set and
/// `BufferTooSmall` returned.
///
/// # Safety
/// `x` must hold `n` doubles, `out` `cap` doubles (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn rt_setmap_eval(
    map: *const RtSetMap,
    t: f64,
    x: *const f64,
    n: usize,
    out: *mut f64,
    cap: usize,
    count: *mut usize,
) -> RtStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(|| null("map"))?;
        let count = out_arg(count, "count")?;
        let x = Point::new(slice_arg(x, n, "x")?.to_vec())?;
        let set = m.0.eval(t, &x)?;
        *count = set.len();
        let need = set.len() * set.dim();
        if cap < need {
            return Err(Fail(RtStatus::BufferTooSmall, format!("need {need} doubles, have {cap}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (chunk, p) in dst.chunks_mut(set.dim()).zip(set.points()) {
            chunk.copy_from_slice(p.coords());
        }
        Ok(())
    })
}

/// Hausdorff distance of two point sets (or their hulls when the flag is nonzero;
/// both flags must agree).
///
/// # Safety
/// `a` must hold `na * dim` doubles, `b` `nb * dim`, and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rt_hausdorff(
    a: *const f64,
    na: usize,
    a_convex: c_int,
    b: *const f64,
    nb: usize,
    b_convex: c_int,
    dim: usize,
    out: *mut f64,
) -> RtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ka = point_set(slice_arg(a, na * dim, "a")?, na, dim, a_convex != 0)?;
        let kb = point_set(slice_arg(b, nb * dim, "b")?, nb, dim, b_convex != 0)?;
        *out = hausdorff(&ka, &kb)?;
        Ok(())
    })
}

/// Euler integration on `[0, t_end]` with step `h`, always taking point `atom` of `F`.
///
/// # Safety
/// `x0` must hold `n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rt_integrate_constant_atom(
    map: *const RtSetMap,
    atom: usize,
    x0: *const f64,
    n: usize,
    t_end: f64,
    h: f64,
    out: *mut *mut RtTrajectory,
) -> RtStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(|| null("map"))?;
        let out = out_arg(out, "out")?;
        let x0 = Point::new(slice_arg(x0, n, "x0")?.to_vec())?;
        let grid = TimeGrid::uniform(0.0, t_end, h)?;
        let x = integrate(&m.0, &SelectionPolicy::ConstantAtom(atom), &x0, &grid)?;
        *out = Box::into_raw(Box::new(RtTrajectory(x)));
        Ok(())
    })
}

/// # Safety
/// `traj` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rt_trajectory_len(traj: *const RtTrajectory, out: *mut usize) -> RtStatus {
    guard(|| {
        let x = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        *out_arg(out, "out")? = x.0.len();
        Ok(())
    })
}

/// # Safety
/// `traj` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rt_trajectory_dim(traj: *const RtTrajectory, out: *mut usize) -> RtStatus {
    guard(|| {
        let x = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        *out_arg(out, "out")? = x.0.dim();
        Ok(())
    })
}

unsafe fn copy_out(values: impl ExactSizeIterator<Item = f64>, out: *mut f64, cap: usize) -> Result<(), Fail> {
    let need = values.len();
    if cap < need {
        return Err(Fail(RtStatus::BufferTooSmall, format!("need {need} doubles, have {cap}")));
    }
    if need == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

/// Node times, `len` doubles.
///
/// # Safety
/// `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_trajectory_times(traj: *const RtTrajectory, out: *mut f64, cap: usize) -> RtStatus {
    guard(|| {
        let x = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        copy_out(x.0.times().iter().copied(), out, cap)
    })
}

/// Node states, `len * dim` doubles, row-major.
///
/// # Safety
/// `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_trajectory_states(traj: *const RtTrajectory, out: *mut f64, cap: usize) -> RtStatus {
    guard(|| {
        let x = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let flat: Vec<f64> = x.0.states().iter().flat_map(|p| p.coords().iter().copied()).collect();
        copy_out(flat.into_iter(), out, cap)
    })
}

/// # Safety
/// `traj` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rt_trajectory_free(traj: *mut RtTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Escape and bounded-witness results for `eps` as JSON (escape horizon 3).
///
/// # Safety
/// `json_out` must be a valid pointer; the string is released with `rt_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rt_counterexample_run(eps: f64, horizon: f64, h: f64, json_out: *mut *mut c_char) -> RtStatus {
    guard(|| {
        let out = out_arg(json_out, "json_out")?;
        let res = counterexample_pair(eps, 3.0, horizon, h)?;
        *out = to_c_string(to_json_pretty(&res)?)?;
        Ok(())
    })
}

/// Runs a scenario as the command-line tool would, writing artifacts into `out_dir`.
/// `exit_code` receives the tool's exit code and `report_json` the report; the
/// status is `Ok` whenever the report could be produced, even for failed runs.
///
/// # Safety
/// String arguments must be NUL-terminated; `exit_code` and `report_json` valid.
#[no_mangle]
pub unsafe extern "C" fn rt_run_scenario_json(
    task: *const c_char,
    config_json: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut c_int,
    report_json: *mut *mut c_char,
) -> RtStatus {
    guard(|| {
        let code = out_arg(exit_code, "exit_code")?;
        let report = out_arg(report_json, "report_json")?;
        let name = str_arg(task, "task")?;
        let task = Task::from_name(name).ok_or_else(|| Fail(RtStatus::InvalidInput, format!("unknown task `{name}`")))?;
        let cfg = str_arg(config_json, "config_json")?;
        let dir = Path::new(str_arg(out_dir, "out_dir")?);
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        let outcome = run(task, Scenario::from_json(cfg), &Overrides::default(), dir);
        *code = outcome.exit_code;
        *report = to_c_string(to_json_pretty(&outcome.report)?)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be a string returned by this library; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
