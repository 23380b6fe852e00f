use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qsync_ffi::*;

fn scenario(name: &str, seed: u64) -> *mut QsyncSimulation {
    let name = CString::new(name).unwrap();
    let mut sim = ptr::null_mut();
    let st = unsafe { qsync_simulation_from_scenario(name.as_ptr(), seed, &mut sim) };
    assert_eq!(st, QsyncStatus::Ok);
    assert!(!sim.is_null());
    sim
}

fn last_error() -> String {
    let p = qsync_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn catalog_is_exposed() {
    let n = qsync_scenario_count();
    assert!(n >= 10);
    let first = unsafe { CStr::from_ptr(qsync_scenario_name(0)) };
    assert!(!first.to_bytes().is_empty());
    assert!(qsync_scenario_name(n).is_null());
}

#[test]
fn step_summary_and_buffers() {
    let sim = scenario("model1_absolute", 2);
    let mut n = 0usize;
    assert_eq!(unsafe { qsync_simulation_oscillators(sim, &mut n) }, QsyncStatus::Ok);
    assert_eq!(n, 6);

    let mut masses = vec![0.0; n];
    assert_eq!(unsafe { qsync_simulation_masses(sim, masses.as_mut_ptr(), n) }, QsyncStatus::Ok);
    assert!(masses.iter().all(|m| *m > 0.0 && m.is_finite()));
    let mut short = vec![0.0; n - 1];
    assert_eq!(
        unsafe { qsync_simulation_thetas(sim, short.as_mut_ptr(), n - 1) },
        QsyncStatus::BufferTooSmall
    );

    assert_eq!(unsafe { qsync_simulation_step(sim, 10) }, QsyncStatus::Ok);
    let mut s = QsyncSummary::default();
    assert_eq!(unsafe { qsync_simulation_summary(sim, &mut s) }, QsyncStatus::Ok);
    assert!((s.time - 0.01).abs() < 1e-12);
    let mut thetas = vec![0.0; n];
    assert_eq!(unsafe { qsync_simulation_thetas(sim, thetas.as_mut_ptr(), n) }, QsyncStatus::Ok);
    assert!((thetas.iter().sum::<f64>() / n as f64 - 1.0).abs() < 1e-12);
    unsafe { qsync_simulation_free(sim) };
}

#[test]
fn checkpoint_restore_through_handles() {
    let a = scenario("two_identical", 5);
    let b = scenario("two_identical", 5);
    unsafe {
        assert_eq!(qsync_simulation_step(a, 20), QsyncStatus::Ok);
        let mut need = 0;
        assert_eq!(qsync_simulation_checkpoint(a, ptr::null_mut(), 0, &mut need), QsyncStatus::BufferTooSmall);
        let mut buf = vec![0u8; need];
        let mut written = 0;
        assert_eq!(qsync_simulation_checkpoint(a, buf.as_mut_ptr(), need, &mut written), QsyncStatus::Ok);
        assert_eq!(written, need);
        assert_eq!(qsync_simulation_restore(b, buf.as_ptr(), buf.len()), QsyncStatus::Ok);
        assert_eq!(qsync_simulation_step(a, 7), QsyncStatus::Ok);
        assert_eq!(qsync_simulation_step(b, 7), QsyncStatus::Ok);
        let (mut sa, mut sb) = (QsyncSummary::default(), QsyncSummary::default());
        qsync_simulation_summary(a, &mut sa);
        qsync_simulation_summary(b, &mut sb);
        assert_eq!(sa, sb);

        assert_eq!(qsync_simulation_restore(b, buf.as_ptr(), buf.len() - 3), QsyncStatus::Checkpoint);
        let mut after = QsyncSummary::default();
        qsync_simulation_summary(b, &mut after);
        assert_eq!(after, sb);

        let c = scenario("model1_absolute", 0);
        assert_eq!(qsync_simulation_restore(c, buf.as_ptr(), buf.len()), QsyncStatus::Checkpoint);
        qsync_simulation_free(a);
        qsync_simulation_free(b);
        qsync_simulation_free(c);
    }
}

#[test]
fn config_constructor_reports_bad_keys() {
    let good = CString::new(r#"{"model": {"kind": "model2", "n": 2, "mu": 0.5}, "initial": {"oscillators": [{"center": [-1.0]}, {"center": [1.0], "amplitude": 0.8}]}}"#).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { qsync_simulation_from_config(good.as_ptr(), &mut sim) }, QsyncStatus::Ok);
    unsafe { qsync_simulation_free(sim) };

    let bad = CString::new(r#"{"model": {"kind": "model2", "n": 2, "dampening": 1}, "initial": {}}"#).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { qsync_simulation_from_config(bad.as_ptr(), &mut sim) }, QsyncStatus::Config);
    assert!(sim.is_null());
    assert!(last_error().contains("dampening"));
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(qsync_simulation_step(ptr::null_mut(), 1), QsyncStatus::NullPointer);
        assert_eq!(qsync_simulation_from_scenario(ptr::null(), 0, &mut ptr::null_mut()), QsyncStatus::NullPointer);
        assert_eq!(qsync_lambda_param(1.0, 1.0, 1.0, 1.0, ptr::null_mut()), QsyncStatus::NullPointer);
        qsync_simulation_free(ptr::null_mut());
    }
}

#[test]
fn reduced_helpers() {
    let mut lam = 0.0;
    assert_eq!(unsafe { qsync_lambda_param(1.0, 4.0, 1.0, 1.0, &mut lam) }, QsyncStatus::Ok);
    assert!((lam - 0.5).abs() < 1e-15);

    let (mut z1, mut z2) = (QsyncComplex { re: 0.0, im: 0.0 }, QsyncComplex { re: 0.0, im: 0.0 });
    assert_eq!(unsafe { qsync_fixed_points(0.6, &mut z1, &mut z2) }, QsyncStatus::Ok);
    assert!((z1.re - 0.8).abs() < 1e-15 && (z1.im - 0.6).abs() < 1e-15);
    assert!((z2.re + 0.8).abs() < 1e-15);
    assert_eq!(unsafe { qsync_fixed_points(1.5, &mut z1, &mut z2) }, QsyncStatus::InvalidArgument);

    let mut y = QsyncComplex { re: 0.0, im: 0.0 };
    let y0 = QsyncComplex { re: 0.3, im: 0.1 };
    assert_eq!(unsafe { qsync_y_exact(0.0, y0, 1.0, 0.5, &mut y) }, QsyncStatus::Ok);
    assert!((y.re - 0.3).abs() < 1e-12 && (y.im - 0.1).abs() < 1e-12);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !have_cc() {
        eprintln!("no C compiler found; skipping");
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for lang in ["c", "c++"] {
        let out = Command::new("cc")
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(include.join("qsync.h"))
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_staticlib() {
    let lib = target_dir().join("libqsync_ffi.a");
    if !have_cc() || !lib.exists() {
        eprintln!("no C compiler or static library; skipping");
        return;
    }
    let dir = tempfile_dir();
    let exe = dir.join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "link failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "smoke exited {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
    let _ = std::fs::remove_dir_all(dir);
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("qsync-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
