use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sparsemix_ffi::*;

fn last_error() -> String {
    let p = sm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset(rows: &[&[u32]], dim: usize) -> *mut SmDataset {
    let mut indices = Vec::new();
    let mut offsets = vec![0usize];
    for r in rows {
        indices.extend_from_slice(r);
        offsets.push(indices.len());
    }
    let mut out = ptr::null_mut();
    let status =
        unsafe { sm_dataset_from_rows(dim, indices.as_ptr(), offsets.as_ptr(), rows.len(), &mut out) };
    assert_eq!(status, SmStatus::Ok);
    out
}

#[test]
fn cluster_round_trip() {
    let rows: Vec<&[u32]> = (0..12).map(|i| if i % 2 == 0 { &[0, 1, 2][..] } else { &[4, 5][..] }).collect();
    let data = dataset(&rows, 6);
    assert_eq!(unsafe { sm_dataset_len(data) }, 12);
    assert_eq!(unsafe { sm_dataset_dim(data) }, 6);

    let mut config = std::mem::MaybeUninit::<SmConfig>::uninit();
    assert_eq!(unsafe { sm_config_default(config.as_mut_ptr()) }, SmStatus::Ok);
    let mut config = unsafe { config.assume_init() };
    assert_eq!(config.threshold, 0.5);
    config.beta = 0.0;
    config.init = SmInit::Random as i32;

    let mut result = ptr::null_mut();
    assert_eq!(unsafe { sm_cluster(data, &config, &mut result) }, SmStatus::Ok);
    assert_eq!(unsafe { sm_result_num_clusters(result) }, 2);
    assert!(unsafe { sm_result_total_cost(result) }.abs() < 1e-12);
    let mut ids = vec![usize::MAX; 12];
    assert_eq!(unsafe { sm_result_assignment(result, ids.as_mut_ptr(), 12) }, SmStatus::Ok);
    assert!(ids.iter().step_by(2).all(|&c| c == ids[0]));
    assert!(ids.iter().skip(1).step_by(2).all(|&c| c == ids[1] && c != ids[0]));

    unsafe {
        sm_result_free(result);
        sm_dataset_free(data);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { sm_dataset_load(ptr::null(), 0, 0, &mut out) },
        SmStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/rows.sv").unwrap();
    assert_eq!(unsafe { sm_dataset_load(missing.as_ptr(), 0, 0, &mut out) }, SmStatus::Io);
    assert!(last_error().contains("/nonexistent/rows.sv"));
    assert_eq!(unsafe { sm_dataset_load(missing.as_ptr(), 9, 0, &mut out) }, SmStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sv");
    std::fs::write(&bad, "1:1 1:1\n").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sm_dataset_load(bad.as_ptr(), 0, 0, &mut out) }, SmStatus::Parse);
    assert!(out.is_null());

    // unsorted row
    let (indices, offsets) = ([3u32, 1], [0usize, 2]);
    assert_eq!(
        unsafe { sm_dataset_from_rows(4, indices.as_ptr(), offsets.as_ptr(), 1, &mut out) },
        SmStatus::Parse
    );
    let offsets = [1usize, 2];
    assert_eq!(
        unsafe { sm_dataset_from_rows(4, indices.as_ptr(), offsets.as_ptr(), 1, &mut out) },
        SmStatus::InvalidArgument
    );

    let data = dataset(&[&[0], &[1]], 2);
    let mut config = std::mem::MaybeUninit::<SmConfig>::uninit();
    unsafe { sm_config_default(config.as_mut_ptr()) };
    let mut config = unsafe { config.assume_init() };
    config.init = 7;
    let mut result = ptr::null_mut();
    assert_eq!(unsafe { sm_cluster(data, &config, &mut result) }, SmStatus::InvalidArgument);
    config.init = 0;
    config.k_init = 5;
    assert_eq!(unsafe { sm_cluster(data, &config, &mut result) }, SmStatus::InvalidArgument);
    assert!(result.is_null());
    unsafe { sm_dataset_free(data) };

    // a success clears the previous message
    let mut ari = 0.0;
    let labels = [1i64, 1, 2];
    assert_eq!(
        unsafe { sm_adjusted_rand_index(labels.as_ptr(), labels.as_ptr(), 3, &mut ari) },
        SmStatus::Ok
    );
    assert!(sm_last_error().is_null());
    assert_eq!(ari, 1.0);
}

#[test]
fn analytic_costs_balanced_case() {
    let (mut one, mut two, mut two_wins) = (0.0, 0.0, true);
    let status = unsafe { sm_analytic_costs(0.1, 0.5, 50, 100, 0.5, &mut one, &mut two, &mut two_wins) };
    assert_eq!(status, SmStatus::Ok);
    assert!((two - one - 1.0).abs() < 1e-12);
    assert!(!two_wins);
    let status = unsafe { sm_analytic_costs(0.1, 0.05, 50, 100, 0.5, &mut one, &mut two, &mut two_wins) };
    assert_eq!(status, SmStatus::Ok);
    assert!(two_wins);
    let status = unsafe { sm_analytic_costs(0.1, 0.05, 500, 100, 0.5, &mut one, &mut two, &mut two_wins) };
    assert_eq!(status, SmStatus::InvalidArgument);
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        sm_dataset_free(ptr::null_mut());
        sm_result_free(ptr::null_mut());
        assert_eq!(sm_dataset_len(ptr::null()), 0);
        assert!(sm_result_total_cost(ptr::null()).is_nan());
    }
}

#[test]
fn header_declares_the_exported_symbols() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sparsemix.h")).unwrap();
    for symbol in [
        "sm_last_error",
        "sm_config_default",
        "sm_dataset_load",
        "sm_dataset_from_rows",
        "sm_dataset_free",
        "sm_cluster",
        "sm_result_assignment",
        "sm_result_free",
        "sm_adjusted_rand_index",
        "sm_analytic_costs",
        "typedef struct SmDataset SmDataset;",
        "SM_STATUS_PANIC = 6",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}

/// Compiles the C smoke program against the header and static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    // `cargo test` only builds the rlib, so build the static library into its
    // own target dir (next to <target>/<profile>/deps) to avoid the main lock.
    let exe_path = std::env::current_exe().unwrap();
    let target_dir = exe_path.ancestors().nth(3).unwrap().join("c-smoke");
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let built = Command::new(cargo)
        .args(["build", "--quiet", "--lib", "--manifest-path"])
        .arg(manifest.join("Cargo.toml"))
        .arg("--target-dir")
        .arg(&target_dir)
        .status()
        .unwrap();
    assert!(built.success());
    let lib = target_dir.join("debug/libsparsemix_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
