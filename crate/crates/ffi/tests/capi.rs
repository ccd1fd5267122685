use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use nnse::model::{save_model, ModelBuilder};
use nnse_ffi::*;
use tempfile::TempDir;

/// Logits `[x, 10 - x]`.
fn seesaw_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    let m = ModelBuilder::new("seesaw", &[1])
        .dense(vec![1.0, -1.0], vec![0.0, 10.0])
        .build()
        .unwrap();
    save_model(&m, dir.path()).unwrap();
    dir
}

fn load(dir: &Path) -> *mut NnseModel {
    let c = CString::new(dir.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { nnse_model_load(c.as_ptr(), &mut m) }, NnseStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = nnse_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn forward_through_the_handle() {
    let dir = seesaw_dir();
    let m = load(dir.path());
    unsafe {
        assert_eq!((nnse_model_input_len(m), nnse_model_num_classes(m)), (1, 2));
        let mut logits = [0.0; 2];
        let mut label = 9;
        assert_eq!(
            nnse_forward(m, [3.0].as_ptr(), 1, logits.as_mut_ptr(), 2, &mut label),
            NnseStatus::Ok
        );
        assert_eq!((logits, label), ([3.0, 7.0], 1));

        assert_eq!(
            nnse_forward(m, [3.0].as_ptr(), 1, logits.as_mut_ptr(), 1, &mut label),
            NnseStatus::BufferTooSmall
        );
        assert_eq!(
            nnse_forward(m, [3.0, 4.0].as_ptr(), 2, logits.as_mut_ptr(), 2, &mut label),
            NnseStatus::ShapeMismatch
        );
        assert!(last_error().starts_with("ShapeMismatch"), "{}", last_error());
        assert_eq!(
            nnse_forward(m, ptr::null(), 1, logits.as_mut_ptr(), 2, &mut label),
            NnseStatus::NullPointer
        );
        nnse_model_free(m);
        nnse_model_free(ptr::null_mut());
        assert_eq!(nnse_model_input_len(ptr::null()), 0);
    }
}

#[test]
fn load_errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/model").unwrap();
    assert_eq!(
        unsafe { nnse_model_load(missing.as_ptr(), &mut m) },
        NnseStatus::MissingFile
    );
    assert!(m.is_null());
    assert!(last_error().starts_with("MissingFile"));

    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("model.json"), "{").unwrap();
    let c = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { nnse_model_load(c.as_ptr(), &mut m) },
        NnseStatus::MalformedInput
    );
    assert_eq!(unsafe { nnse_model_load(ptr::null(), &mut m) }, NnseStatus::NullPointer);

    // A successful call clears the previous message.
    let dir = seesaw_dir();
    let m = load(dir.path());
    assert!(nnse_last_error().is_null());
    unsafe { nnse_model_free(m) };
}

#[test]
fn attack_pixel_outcomes() {
    let dir = seesaw_dir();
    let m = load(dir.path());
    let x = [2.0];
    let mut adv = [0.0];
    let mut label = 0;
    let mut outcome = NnseAttackOutcome::NoneWithinBudget;
    let run = |lo: f64, hi: f64, outcome: &mut NnseAttackOutcome, adv: &mut [f64; 1], label: &mut usize| unsafe {
        nnse_attack_pixel(
            m,
            x.as_ptr(),
            1,
            [0usize].as_ptr(),
            1,
            lo,
            hi,
            10.0,
            outcome,
            adv.as_mut_ptr(),
            label,
        )
    };
    assert_eq!(run(0.0, 255.0, &mut outcome, &mut adv, &mut label), NnseStatus::Ok);
    assert_eq!((outcome, label), (NnseAttackOutcome::Found, 0));
    assert!(adv[0] >= 5.0);

    assert_eq!(run(0.0, 4.0, &mut outcome, &mut adv, &mut label), NnseStatus::Ok);
    assert_eq!(outcome, NnseAttackOutcome::ProvenRobust);

    assert_eq!(
        run(5.0, 1.0, &mut outcome, &mut adv, &mut label),
        NnseStatus::InvalidArgument
    );
    assert!(last_error().starts_with("InvalidMarking"));
    unsafe { nnse_model_free(m) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(nnse_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// `target/<profile>`, where cargo places the static library.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = artifact_dir().join("libnnse_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = TempDir::new().unwrap();
    let exe = tmp.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = seesaw_dir();
    let run = |lo: &str, hi: &str| {
        let o = Command::new(&exe).arg(dir.path()).args([lo, hi]).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    assert_eq!(run("0", "255"), "label 1 outcome 0\n");
    assert_eq!(run("0", "4"), "label 1 outcome 2\n");
}
