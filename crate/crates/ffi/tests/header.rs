use std::path::{Path, PathBuf};
use std::process::Command;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header_dir().join("radau_guidance.h")).unwrap();
    for name in [
        "rg_lgr_basis",
        "rg_problem_new_example",
        "rg_problem_free",
        "rg_solve_reference",
        "rg_trajectory_free",
        "rg_trajectory_dims",
        "rg_trajectory_time_span",
        "rg_trajectory_objective",
        "rg_trajectory_state_at",
        "rg_trajectory_control_at",
        "rg_run_mission",
        "rg_sample_alpha",
        "rg_last_error_message",
        "RG_STATUS_BUFFER_TOO_SMALL = 4",
        "typedef struct RgProblem RgProblem",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Target profile directory holding the static library (`target/<profile>`).
fn profile_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    exe.parent()?.parent().map(Path::to_path_buf)
}

#[test]
fn c_program_links_and_runs() {
    let dir = profile_dir().expect("test binary location");
    let lib = dir.join("libradau_guidance_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("rg_smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let msg = String::from_utf8_lossy(&run.stdout);
    assert!(msg.contains("outside the support"), "{msg}");
}
