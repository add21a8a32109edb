use std::ffi::{CStr, CString};
use std::ptr;

use nftrack_ffi::*;

const DESK: &str = "[array]\nelements = 64\n[region]\nr_min_m = 2.0\nr_max_m = 8.0\n[protocol]\nduration_s = 0.2\n";

fn scenario(toml: &str) -> *mut NftScenario {
    let text = CString::new(toml).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nft_scenario_from_toml(text.as_ptr(), &mut s) }, NftStatus::Ok);
    s
}

fn last_error() -> String {
    let p = nft_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_and_read_back() {
    let s = scenario(DESK);
    let policy = CString::new("genie").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { nft_run(s, policy.as_ptr(), 1, 10.0, 0.75, &mut t) }, NftStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { nft_trace_len(t, &mut n) }, NftStatus::Ok);
    assert_eq!(n, 6000);
    let mut gains = vec![0.0; n];
    assert_eq!(unsafe { nft_trace_gains(t, gains.as_mut_ptr(), n) }, NftStatus::Ok);
    assert!(gains.iter().all(|g| (0.0..=1.0).contains(g)));
    let mut mean = 0.0;
    assert_eq!(unsafe { nft_trace_mean_gain(t, &mut mean) }, NftStatus::Ok);
    assert!((mean - gains.iter().sum::<f64>() / n as f64).abs() < 1e-12);
    assert_eq!(unsafe { nft_trace_gains(t, gains.as_mut_ptr(), n - 1) }, NftStatus::BufferTooSmall);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { nft_trace_write_csv(t, cpath.as_ptr()) }, NftStatus::Ok);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), n + 1);
    unsafe {
        nft_trace_free(t);
        nft_scenario_free(s);
    }
}

#[test]
fn desk_scale_switch() {
    let s = scenario("");
    assert_eq!(unsafe { nft_scenario_desk_scale(s) }, NftStatus::Ok);
    assert_eq!(unsafe { nft_scenario_desk_scale(ptr::null_mut()) }, NftStatus::NullPointer);
    unsafe { nft_scenario_free(s) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let bad = CString::new("[array]\nelements = \"many\"\n").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nft_scenario_from_toml(bad.as_ptr(), &mut s) }, NftStatus::Config);
    assert!(s.is_null());
    assert!(last_error().contains("elements"));

    assert_eq!(unsafe { nft_scenario_from_toml(ptr::null(), &mut s) }, NftStatus::NullPointer);
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { nft_scenario_from_toml(invalid.as_ptr().cast(), &mut s) }, NftStatus::InvalidUtf8);

    let s = scenario(DESK);
    let mut t = ptr::null_mut();
    let policy = CString::new("oracle").unwrap();
    assert_eq!(unsafe { nft_run(s, policy.as_ptr(), 1, 10.0, 0.75, &mut t) }, NftStatus::Config);
    assert!(last_error().contains("oracle"));
    let ts = CString::new("ts").unwrap();
    assert_eq!(unsafe { nft_run(s, ts.as_ptr(), 1, 10.0, 0.0001, &mut t) }, NftStatus::Config);
    assert_eq!(unsafe { nft_run(ptr::null(), ts.as_ptr(), 1, 10.0, 0.75, &mut t) }, NftStatus::NullPointer);
    assert!(t.is_null());
    unsafe {
        nft_scenario_free(s);
        nft_scenario_free(ptr::null_mut());
        nft_trace_free(ptr::null_mut());
    }
}

#[test]
fn runs_are_repeatable_through_the_boundary() {
    let s = scenario(DESK);
    let ts = CString::new("ts").unwrap();
    let gains = || {
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { nft_run(s, ts.as_ptr(), 3, 10.0, 0.75, &mut t) }, NftStatus::Ok);
        let mut n = 0;
        unsafe { nft_trace_len(t, &mut n) };
        let mut g = vec![0.0; n];
        unsafe {
            nft_trace_gains(t, g.as_mut_ptr(), n);
            nft_trace_free(t);
        }
        g
    };
    assert_eq!(gains(), gains());
    unsafe { nft_scenario_free(s) };
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nftrack.h")).unwrap();
    for name in [
        "typedef struct NftScenario NftScenario",
        "typedef struct NftTrace NftTrace",
        "NFT_STATUS_OK = 0",
        "NFT_STATUS_PANIC = 8",
        "nft_last_error(void)",
        "nft_scenario_from_toml(",
        "nft_run(",
        "nft_trace_gains(",
        "nft_trace_free(",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
    let v = unsafe { CStr::from_ptr(nft_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
