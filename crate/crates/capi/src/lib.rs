//! C ABI over the core library.
//!
//! Conventions: every function returns a status code (`VXP_OK` = 0); outputs
//! go through pointers. Objects cross the boundary as opaque handles that
//! must be released with the matching `_free`. On failure the thread-local
//! message retrieved by [`vxp_last_error`] describes the cause. Panics are
//! caught at the boundary and reported as `VXP_PANIC`; nothing unwinds into
//! the caller.
//!
//! The authoritative header is `include/varlap.h`, maintained by hand and
//! covered by `tests/header_sync.rs`, which checks that every exported
//! symbol is declared there.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use varlap::exponent::ExponentField;
use varlap::grid::{Grid, ScalarField};
use varlap::infconv::{inf_convolve, Kernel};
use varlap::operator::nondiv_eval;
use varlap::solver::{solve_dirichlet, SolveOptions, StepRule};
use varlap::spaces::{luxemburg_norm, modular};
use varlap::verify::{
    test_viscosity_supersolution, test_weak_supersolution, SamplingPlan, Verdict,
};
use varlap::Error;

pub const VXP_OK: i32 = 0;
/// A checked property failed (the verdict-style calls never use this; they
/// report through their `passed` output instead).
pub const VXP_FAILED: i32 = 1;
/// Invalid configuration or arguments.
pub const VXP_INVALID: i32 = 2;
/// Numerical failure inside the library.
pub const VXP_NUMERIC: i32 = 3;
/// A required pointer was null.
pub const VXP_NULL: i32 = 4;
/// A panic was caught at the boundary.
pub const VXP_PANIC: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> i32 {
    match err.exit_code() {
        2 => VXP_INVALID,
        _ => VXP_NUMERIC,
    }
}

fn guard(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_error("panic caught at the FFI boundary");
            VXP_PANIC
        }
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("null pointer: ", stringify!($p)));
            return VXP_NULL;
        })+
    };
}

fn fail(e: Error) -> i32 {
    let code = status_of(&e);
    set_error(e.to_string());
    code
}

/// Opaque grid handle.
pub struct VxpGrid(Grid);
/// Opaque field handle; carries its grid.
pub struct VxpField(ScalarField);
/// Opaque exponent handle.
pub struct VxpExponent(ExponentField);

/// Copies the last error message (UTF-8, NUL-terminated, truncated to `len`)
/// into `buf`; returns the full message length in bytes excluding the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn vxp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a rectangular grid. `bounds` holds `2*dim` values (lo, hi per
/// axis); `n_cells` holds `dim` cell counts.
///
/// # Safety
/// `bounds` and `n_cells` must be readable arrays of the stated lengths;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vxp_grid_new(
    dim: usize,
    bounds: *const f64,
    n_cells: *const usize,
    out: *mut *mut VxpGrid,
) -> i32 {
    guard(|| {
        nonnull!(bounds, n_cells, out);
        let bs = std::slice::from_raw_parts(bounds, 2 * dim);
        let ns = std::slice::from_raw_parts(n_cells, dim);
        let pairs: Vec<[f64; 2]> = bs.chunks(2).map(|c| [c[0], c[1]]).collect();
        match Grid::new(&pairs, ns) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(VxpGrid(g)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `grid` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn vxp_grid_free(grid: *mut VxpGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vxp_grid_node_count(grid: *const VxpGrid, out: *mut usize) -> i32 {
    guard(|| {
        nonnull!(grid, out);
        *out = (*grid).0.node_count();
        VXP_OK
    })
}

/// Creates a field from `len` node values in row-major order (last axis
/// fastest).
///
/// # Safety
/// `grid`, `values` (readable for `len` doubles) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_field_from_values(
    grid: *const VxpGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut VxpField,
) -> i32 {
    guard(|| {
        nonnull!(grid, values, out);
        let vs = std::slice::from_raw_parts(values, len).to_vec();
        match ScalarField::new((*grid).0.clone(), vs) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(VxpField(f)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vxp_field_constant(
    grid: *const VxpGrid,
    value: f64,
    out: *mut *mut VxpField,
) -> i32 {
    guard(|| {
        nonnull!(grid, out);
        match ScalarField::constant((*grid).0.clone(), value) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(VxpField(f)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of nodes of the field's grid.
///
/// # Safety
/// `field` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vxp_field_len(field: *const VxpField, out: *mut usize) -> i32 {
    guard(|| {
        nonnull!(field, out);
        *out = (*field).0.values().len();
        VXP_OK
    })
}

/// Copies the node values into `buf`; `len` must equal the field length.
///
/// # Safety
/// `field` must be valid; `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vxp_field_values(
    field: *const VxpField,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        nonnull!(field, buf);
        let vs = (*field).0.values();
        if vs.len() != len {
            set_error(format!("field has {} values, buffer holds {len}", vs.len()));
            return VXP_INVALID;
        }
        ptr::copy_nonoverlapping(vs.as_ptr(), buf, len);
        VXP_OK
    })
}

/// # Safety
/// `field` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn vxp_field_free(field: *mut VxpField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Parses an exponent expression (constants, x1..x3, + - * /, sin, cos, exp)
/// and certifies its bounds on the grid.
///
/// # Safety
/// `src` must be a NUL-terminated string; `grid` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_exponent_parse(
    src: *const c_char,
    grid: *const VxpGrid,
    out: *mut *mut VxpExponent,
) -> i32 {
    guard(|| {
        nonnull!(src, grid, out);
        let text = match CStr::from_ptr(src).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("exponent source is not valid UTF-8");
                return VXP_INVALID;
            }
        };
        match ExponentField::parse(text, &(*grid).0) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(VxpExponent(p)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `exponent` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn vxp_exponent_free(exponent: *mut VxpExponent) {
    if !exponent.is_null() {
        drop(Box::from_raw(exponent));
    }
}

/// Writes the certified grid bounds p_minus, p_plus and the gradient bound
/// kappa.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_exponent_bounds(
    exponent: *const VxpExponent,
    p_minus: *mut f64,
    p_plus: *mut f64,
    kappa: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(exponent, p_minus, p_plus, kappa);
        let (lo, hi, k) = (*exponent).0.bounds();
        *p_minus = lo;
        *p_plus = hi;
        *kappa = k;
        VXP_OK
    })
}

/// Trapezoid modular of |u|^p(x).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_modular(
    field: *const VxpField,
    exponent: *const VxpExponent,
    out: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent, out);
        match modular(&(*field).0, &(*exponent).0) {
            Ok(m) => {
                *out = m;
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Luxemburg norm by bisection to relative tolerance `tol`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_luxemburg_norm(
    field: *const VxpField,
    exponent: *const VxpExponent,
    tol: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent, out);
        match luxemburg_norm(&(*field).0, &(*exponent).0, tol) {
            Ok(r) => {
                *out = r.norm;
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

fn infconv_impl(
    field: *const VxpField,
    kernel: Result<Kernel, Error>,
    out: *mut *mut VxpField,
    out_r_eps: *mut f64,
) -> i32 {
    let kernel = match kernel {
        Ok(k) => k,
        Err(e) => return fail(e),
    };
    unsafe {
        match inf_convolve(&(*field).0, &kernel) {
            Ok(r) => {
                if !out_r_eps.is_null() {
                    *out_r_eps = r.r_eps;
                }
                *out = Box::into_raw(Box::new(VxpField(r.field)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    }
}

/// Quadratic-kernel infimal convolution; the result lives on the effective
/// subdomain and `out_r_eps` (optional) receives the crop radius.
///
/// # Safety
/// `field` and `out` must be valid; `out_r_eps` may be null.
#[no_mangle]
pub unsafe extern "C" fn vxp_inf_convolve_degenerate(
    field: *const VxpField,
    eps: f64,
    out: *mut *mut VxpField,
    out_r_eps: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, out);
        infconv_impl(field, Kernel::degenerate(eps), out, out_r_eps)
    })
}

/// q-power-kernel infimal convolution (q >= 2).
///
/// # Safety
/// `field` and `out` must be valid; `out_r_eps` may be null.
#[no_mangle]
pub unsafe extern "C" fn vxp_inf_convolve_singular(
    field: *const VxpField,
    eps: f64,
    q: f64,
    out: *mut *mut VxpField,
    out_r_eps: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, out);
        infconv_impl(field, Kernel::singular(eps, q), out, out_r_eps)
    })
}

/// Nondivergence evaluation at a node. `components`, when non-null, receives
/// the trace, gradient-direction and log terms.
///
/// # Safety
/// `field`, `exponent`, `out_total` must be valid; `components` must be null
/// or writable for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn vxp_nondiv_eval(
    field: *const VxpField,
    exponent: *const VxpExponent,
    node: usize,
    out_total: *mut f64,
    components: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent, out_total);
        match nondiv_eval(&(*field).0, &(*exponent).0, node) {
            Ok(ev) => {
                *out_total = ev.total;
                if !components.is_null() {
                    *components = ev.trace_term;
                    *components.add(1) = ev.infinity_term;
                    *components.add(2) = ev.log_term;
                }
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Discrete Dirichlet energy of the field.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vxp_energy(
    field: *const VxpField,
    exponent: *const VxpExponent,
    out: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent, out);
        match varlap::solver::energy(&(*field).0, &(*exponent).0) {
            Ok(e) => {
                *out = e;
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Minimizes the Dirichlet energy with the boundary values of `boundary`.
///
/// # Safety
/// `exponent`, `boundary`, `out` must be valid; `out_iterations`,
/// `out_residual`, `out_converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn vxp_solve_dirichlet(
    exponent: *const VxpExponent,
    boundary: *const VxpField,
    max_iters: usize,
    tol: f64,
    out: *mut *mut VxpField,
    out_iterations: *mut usize,
    out_residual: *mut f64,
    out_converged: *mut i32,
) -> i32 {
    guard(|| {
        nonnull!(exponent, boundary, out);
        let opts = SolveOptions { max_iters, tol, step_rule: StepRule::Auto };
        let g = (*boundary).0.grid().clone();
        match solve_dirichlet(&(*exponent).0, &(*boundary).0, &g, &opts) {
            Ok(rep) => {
                if !out_iterations.is_null() {
                    *out_iterations = rep.iterations;
                }
                if !out_residual.is_null() {
                    *out_residual = rep.final_residual;
                }
                if !out_converged.is_null() {
                    *out_converged = rep.converged as i32;
                }
                *out = Box::into_raw(Box::new(VxpField(rep.u)));
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn write_verdict(v: &Verdict, out_passed: *mut i32, out_margin: *mut f64) {
    if !out_passed.is_null() {
        *out_passed = v.passed as i32;
    }
    if !out_margin.is_null() {
        *out_margin = v.margin;
    }
}

/// Weak-form supersolution test with `n_tests` seeded bumps.
///
/// # Safety
/// `field` and `exponent` must be valid; `out_passed` / `out_margin` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn vxp_weak_test(
    field: *const VxpField,
    exponent: *const VxpExponent,
    n_tests: usize,
    tol: f64,
    out_passed: *mut i32,
    out_margin: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent);
        match test_weak_supersolution(&(*field).0, &(*exponent).0, n_tests, tol) {
            Ok(v) => {
                write_verdict(&v, out_passed, out_margin);
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Viscosity supersolution test over the paraboloid dictionary.
///
/// # Safety
/// `field` and `exponent` must be valid; `out_passed` / `out_margin` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn vxp_viscosity_test(
    field: *const VxpField,
    exponent: *const VxpExponent,
    max_nodes: usize,
    curvature_levels: u32,
    seed: u64,
    tol: f64,
    out_passed: *mut i32,
    out_margin: *mut f64,
) -> i32 {
    guard(|| {
        nonnull!(field, exponent);
        let plan = SamplingPlan { max_nodes, curvature_levels, seed };
        match test_viscosity_supersolution(&(*field).0, &(*exponent).0, &plan, tol) {
            Ok(v) => {
                write_verdict(&v, out_passed, out_margin);
                VXP_OK
            }
            Err(e) => fail(e),
        }
    })
}
