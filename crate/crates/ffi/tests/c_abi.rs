use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use etlpv_ffi::*;

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/etlpv.h");

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(HEADER).unwrap();
    for f in [
        "etlpv_last_error",
        "etlpv_min_data_length",
        "etlpv_config_parse",
        "etlpv_config_bundled",
        "etlpv_config_set_seed",
        "etlpv_config_to_json",
        "etlpv_config_free",
        "etlpv_run",
        "etlpv_reproduce",
        "etlpv_report_passed",
        "etlpv_report_failed_checks",
        "etlpv_report_transmissions",
        "etlpv_report_to_json",
        "etlpv_report_free",
        "etlpv_string_free",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct EtlpvConfig EtlpvConfig;"));
    assert!(h.contains("ETLPV_STATUS_CONFIG = 3"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"etlpv.h\"\nint probe(void) {\n  EtlpvConfig *c = 0;\n  EtlpvStatus s = etlpv_config_bundled(\"1\", &c);\n  return s == ETLPV_STATUS_OK ? (int)etlpv_min_data_length(2, 1, 2) : -1;\n}\n",
    )
    .unwrap();
    let inc = Path::new(HEADER).parent().unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(inc)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}

#[test]
fn bundled_config_round_trip_through_handles() {
    let id = CString::new("2a").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { etlpv_config_bundled(id.as_ptr(), &mut cfg) }, EtlpvStatus::Ok);
    assert_eq!(unsafe { etlpv_config_set_seed(cfg, 5) }, EtlpvStatus::Ok);
    let json = unsafe { etlpv_config_to_json(cfg) };
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"seed\": 5"));
    let mut again = ptr::null_mut();
    let c_text = CString::new(text).unwrap();
    assert_eq!(unsafe { etlpv_config_parse(c_text.as_ptr(), &mut again) }, EtlpvStatus::Ok);
    unsafe {
        etlpv_string_free(json);
        etlpv_config_free(cfg);
        etlpv_config_free(again);
    }
}

#[test]
fn infeasible_run_still_returns_a_report() {
    let id = CString::new("1").unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { etlpv_reproduce(id.as_ptr(), ptr::null(), &mut rep) }, EtlpvStatus::Ok);
    assert!(!unsafe { etlpv_report_passed(rep) });
    assert!(unsafe { etlpv_report_failed_checks(rep) } > 0);
    assert_eq!(unsafe { etlpv_report_transmissions(rep) }, -1);
    let json = unsafe { etlpv_report_to_json(rep) };
    assert!(unsafe { CStr::from_ptr(json) }.to_str().unwrap().contains("stabilization_infeasible"));
    unsafe {
        etlpv_string_free(json);
        etlpv_report_free(rep);
    }
}

#[test]
fn tracking_run_through_handles() {
    let id = CString::new("2a").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { etlpv_config_bundled(id.as_ptr(), &mut cfg) }, EtlpvStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { etlpv_run(cfg, out_dir.as_ptr(), &mut rep) }, EtlpvStatus::Ok);
    assert!(unsafe { etlpv_report_passed(rep) });
    let tx = unsafe { etlpv_report_transmissions(rep) };
    assert!(tx > 0 && tx < 600);
    assert!(dir.path().join("example2_sine.csv").exists());
    unsafe {
        etlpv_report_free(rep);
        etlpv_config_free(cfg);
    }
}

#[test]
fn unknown_example_sets_config_status() {
    let id = CString::new("7").unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { etlpv_reproduce(id.as_ptr(), ptr::null(), &mut rep) }, EtlpvStatus::Config);
    assert!(rep.is_null());
    assert!(unsafe { etlpv_last_error(ptr::null_mut(), 0) } > 0);
}
