use std::ffi::CStr;
use std::ptr;

use radau_guidance_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let mut needed = 0usize;
    let st = unsafe { rg_last_error_message(buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(st, RgStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn example(beta: f64) -> *mut RgProblem {
    let mut p = ptr::null_mut();
    let st = unsafe { rg_problem_new_example(2.0, beta, 0.01, 16, 6, 2.0, &mut p) };
    assert_eq!(st, RgStatus::Ok, "{}", last_error());
    assert!(!p.is_null());
    p
}

#[test]
fn basis_matches_known_values() {
    let (mut nodes, mut weights, mut diff) = ([0.0; 2], [0.0; 2], [0.0; 6]);
    let st = unsafe {
        rg_lgr_basis(
            2,
            nodes.as_mut_ptr(),
            2,
            weights.as_mut_ptr(),
            2,
            diff.as_mut_ptr(),
            6,
        )
    };
    assert_eq!(st, RgStatus::Ok);
    assert_eq!(nodes[0], -1.0);
    assert!((nodes[1] - 1.0 / 3.0).abs() < 1e-15);
    assert!((weights[0] - 0.5).abs() < 1e-15 && (weights[1] - 1.5).abs() < 1e-15);
    // Rows of a differentiation matrix annihilate constants.
    for row in diff.chunks(3) {
        assert!(row.iter().sum::<f64>().abs() < 1e-13);
    }
}

#[test]
fn short_buffers_and_nulls_are_reported() {
    let mut small = [0.0; 1];
    let mut w = [0.0; 3];
    let mut d = [0.0; 12];
    let st = unsafe {
        rg_lgr_basis(
            3,
            small.as_mut_ptr(),
            1,
            w.as_mut_ptr(),
            3,
            d.as_mut_ptr(),
            12,
        )
    };
    assert_eq!(st, RgStatus::BufferTooSmall);
    assert!(last_error().contains("nodes"));

    let st = unsafe { rg_lgr_basis(3, ptr::null_mut(), 3, w.as_mut_ptr(), 3, d.as_mut_ptr(), 12) };
    assert_eq!(st, RgStatus::NullPointer);

    let st = unsafe {
        rg_lgr_basis(
            0,
            small.as_mut_ptr(),
            1,
            w.as_mut_ptr(),
            3,
            d.as_mut_ptr(),
            12,
        )
    };
    assert_eq!(st, RgStatus::InvalidArgument);

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rg_solve_reference(ptr::null(), false, &mut out) },
        RgStatus::NullPointer
    );
    unsafe { rg_problem_free(ptr::null_mut()) };
    unsafe { rg_trajectory_free(ptr::null_mut()) };
}

#[test]
fn invalid_problem_arguments() {
    let mut p = ptr::null_mut();
    let st = unsafe { rg_problem_new_example(-1.0, 5.0, 0.01, 16, 6, 2.0, &mut p) };
    assert_eq!(st, RgStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("alpha"));
}

#[test]
fn reference_solve_meets_boundary_conditions() {
    let p = example(5.0);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { rg_solve_reference(p, true, &mut t) }, RgStatus::Ok);
    let (mut n, mut m) = (0, 0);
    assert_eq!(
        unsafe { rg_trajectory_dims(t, &mut n, &mut m) },
        RgStatus::Ok
    );
    assert_eq!((n, m), (1, 1));
    let (mut t0, mut tf) = (0.0, 0.0);
    assert_eq!(
        unsafe { rg_trajectory_time_span(t, &mut t0, &mut tf) },
        RgStatus::Ok
    );
    assert_eq!((t0, tf), (0.0, 50.0));
    let mut x = [0.0];
    unsafe { rg_trajectory_state_at(t, 0.0, x.as_mut_ptr(), 1) };
    assert!((x[0] - 1.5).abs() < 1e-8);
    unsafe { rg_trajectory_state_at(t, 50.0, x.as_mut_ptr(), 1) };
    assert!((x[0] - 1.0).abs() < 1e-8);
    let mut u = [0.0];
    assert_eq!(
        unsafe { rg_trajectory_control_at(t, 25.0, u.as_mut_ptr(), 1) },
        RgStatus::Ok
    );
    let mut j = 0.0;
    assert_eq!(unsafe { rg_trajectory_objective(t, &mut j) }, RgStatus::Ok);
    assert!(j > 0.78 && j < 0.80, "{j}");
    assert_eq!(
        unsafe { rg_trajectory_state_at(t, 51.0, x.as_mut_ptr(), 1) },
        RgStatus::InvalidArgument
    );
    unsafe {
        rg_trajectory_free(t);
        rg_problem_free(p);
    }
}

#[test]
fn nominal_mission_has_small_epsilon() {
    let p = example(5.0);
    for method in [RG_METHOD_OC, RG_METHOD_OG] {
        let (mut eps, mut xf, mut iters) = (1.0, [0.0], 0usize);
        let st =
            unsafe { rg_run_mission(p, method, 2.0, &mut eps, xf.as_mut_ptr(), 1, &mut iters) };
        assert_eq!(st, RgStatus::Ok, "{}", last_error());
        assert!(eps.abs() < 1e-5, "method {method}: {eps}");
    }
    let (mut eps, mut xf, mut iters) = (0.0, [0.0], 0usize);
    let st = unsafe { rg_run_mission(p, 9, 2.0, &mut eps, xf.as_mut_ptr(), 1, &mut iters) };
    assert_eq!(st, RgStatus::InvalidArgument);
    unsafe { rg_problem_free(p) };
}

#[test]
fn sampling_matches_core() {
    let mut out = [0.0; 5];
    assert_eq!(
        unsafe { rg_sample_alpha(7, 5, 2.0, 0.02, out.as_mut_ptr(), 5) },
        RgStatus::Ok
    );
    let core = radau_guidance::monte_carlo::sample_alpha(7, 5, 2.0, 0.02).unwrap();
    assert_eq!(out.to_vec(), core);
    assert_eq!(
        unsafe { rg_sample_alpha(7, 5, 2.0, -1.0, out.as_mut_ptr(), 5) },
        RgStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { rg_sample_alpha(7, 5, 2.0, 0.0, out.as_mut_ptr(), 4) },
        RgStatus::BufferTooSmall
    );
}

#[test]
fn error_message_reports_required_size() {
    let mut w = [0.0; 1];
    unsafe { rg_lgr_basis(0, w.as_mut_ptr(), 1, w.as_mut_ptr(), 1, w.as_mut_ptr(), 1) };
    let mut needed = 0;
    let mut tiny = [0 as std::ffi::c_char; 2];
    let st = unsafe { rg_last_error_message(tiny.as_mut_ptr(), 2, &mut needed) };
    assert_eq!(st, RgStatus::BufferTooSmall);
    assert!(needed > 2);
}
