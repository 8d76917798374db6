use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hadamard_core::config::RunConfig;
use hadamard_core::grid::GridFunction;
use hadamard_core::parametrix::{CauchyData, ParametrixBundle};
use hadamard_ffi::*;
use num_complex::Complex64;

const SMALL: &str = r#"
seed = 1
truncation = 4
[grid]
n = 64
[window]
t_max = 0.5
nodes = 9
[model]
preset = "static-massive"
[verify]
bands = [4, 8]
frequency_bands = [8]
times = [0.25, 0.5]
[state]
bands = [4, 8]
[egorov]
t = 0.4
base_mode = 6
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { hd_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn config(toml: &str) -> *mut HdConfig {
    let s = CString::new(toml).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hd_config_from_toml(s.as_ptr(), &mut cfg) }, HdStatus::Ok, "{}", last_error());
    cfg
}

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn bad_config_reports_status_and_message() {
    let s = CString::new("[grid]\nn = 63\n").unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { hd_config_from_toml(s.as_ptr(), &mut cfg) };
    assert_eq!(st, HdStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().starts_with("config error"), "{}", last_error());
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { hd_config_from_toml(bad.as_ptr() as *const c_char, &mut cfg) }, HdStatus::InvalidUtf8);
}

#[test]
fn null_handles_are_rejected() {
    let mut n = 0usize;
    unsafe {
        assert_eq!(hd_bundle_grid_size(ptr::null(), &mut n), HdStatus::NullPointer);
        assert_eq!(hd_config_from_toml(ptr::null(), ptr::null_mut()), HdStatus::NullPointer);
        assert_eq!(hd_config_set_seed(ptr::null_mut(), 3), HdStatus::NullPointer);
        hd_config_free(ptr::null_mut());
        hd_bundle_free(ptr::null_mut());
    }
    assert_eq!(last_error(), "cfg is null");
}

#[test]
fn bundle_roundtrip() {
    let cfg = config(SMALL);
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(hd_bundle_build(cfg, &mut b), HdStatus::Ok, "{}", last_error());
        let mut n = 0usize;
        assert_eq!(hd_bundle_grid_size(b, &mut n), HdStatus::Ok);
        assert_eq!(n, 64);

        let mut r = vec![0.0; 2 * n * n];
        assert_eq!(hd_bundle_r(b, r.as_mut_ptr(), r.len() - 1), HdStatus::InvalidArgument);
        assert_eq!(hd_bundle_r(b, r.as_mut_ptr(), r.len()), HdStatus::Ok);
        assert!(r.iter().all(|v| v.is_finite()) && r.iter().any(|&v| v != 0.0));

        // matches the core route bit for bit
        let f0: Vec<f64> = (0..2 * n).map(|k| ((k * 7 % 13) as f64 - 6.0) / 10.0).collect();
        let f1: Vec<f64> = (0..2 * n).map(|k| ((k * 5 % 11) as f64 - 5.0) / 10.0).collect();
        let (mut o0, mut o1) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        assert_eq!(hd_bundle_evolve(b, 0.3, f0.as_ptr(), f1.as_ptr(), o0.as_mut_ptr(), o1.as_mut_ptr()), HdStatus::Ok, "{}", last_error());
        let rc = RunConfig::from_toml(SMALL).unwrap();
        let bundle = ParametrixBundle::build(&rc.model().unwrap(), &rc.parametrix_options()).unwrap();
        let grid = bundle.grid().clone();
        let gf = |v: &[f64]| GridFunction::new(&grid, v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
        let want = bundle.evolve(&[CauchyData::new(gf(&f0), gf(&f1)).unwrap()], &[0.3]).unwrap();
        assert_eq!(want[0][0].f0.values(), gf(&o0).values());
        assert_eq!(want[0][0].f1.values(), gf(&o1).values());

        assert_eq!(hd_bundle_evolve(b, 5.0, f0.as_ptr(), f1.as_ptr(), o0.as_mut_ptr(), o1.as_mut_ptr()), HdStatus::InvalidArgument);
        hd_bundle_free(b);
        hd_config_free(cfg);
    }
}

#[test]
fn run_writes_report() {
    let cfg = config(SMALL);
    let dir = scratch("ffi-run");
    let out = CString::new(dir.to_str().unwrap()).unwrap();
    unsafe {
        let bogus = CString::new("bogus").unwrap();
        assert_eq!(hd_run(cfg, bogus.as_ptr(), out.as_ptr()), HdStatus::InvalidArgument);
        let reduce = CString::new("reduce").unwrap();
        assert_eq!(hd_run(cfg, reduce.as_ptr(), out.as_ptr()), HdStatus::Ok, "{}", last_error());
        let glue = CString::new("glue").unwrap();
        assert_eq!(hd_run(cfg, glue.as_ptr(), out.as_ptr()), HdStatus::Config);
        hd_config_free(cfg);
    }
    assert!(dir.join("reduce.json").exists() && dir.join("reduce.csv").exists());
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let libdir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !libdir.join("libhadamard_ffi.so").exists() {
        eprintln!("shared library not built; skipped");
        return;
    }
    let tmp = scratch("ffi-c");
    std::fs::create_dir_all(&tmp).unwrap();
    let src = tmp.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "hadamard.h"
int main(void) {
    HdConfig *cfg = NULL;
    HdStatus s = hd_config_from_toml("[grid]\nn = 63\n", &cfg);
    char msg[128];
    hd_last_error(msg, sizeof msg);
    if (s != HD_STATUS_CONFIG || cfg != NULL || strncmp(msg, "config error", 12) != 0) return 1;
    size_t n = 0;
    if (hd_bundle_grid_size(NULL, &n) != HD_STATUS_NULL_POINTER) return 2;
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.join("smoke");
    let st =
        Command::new(cc).arg(&src).arg("-I").arg(manifest.join("include")).arg("-L").arg(&libdir).arg("-lhadamard_ffi").arg("-o").arg(&exe).status().unwrap();
    assert!(st.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &libdir).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()).ok_or(())
}
