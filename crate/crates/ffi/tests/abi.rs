use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use alphagate_ffi::*;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(manifest().join("../core/fixtures/pass").join(name)).unwrap()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest().join("include/alphagate.h")).unwrap();
    for f in [
        "ag_series_load_csv",
        "ag_series_generate",
        "ag_series_len",
        "ag_series_free",
        "ag_protocol_run",
        "ag_max_drawdown",
        "ag_sharpe",
        "ag_cagr",
        "ag_last_error",
        "ag_string_free",
        "ag_version",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct AgSeries AgSeries;"));
    assert!(header.contains("AG_STATUS_OK = 0"));
    assert!(header.contains("#define AG_OUTCOME_REFACTOR 3"));
}

#[test]
fn protocol_through_the_abi() {
    let spec = CString::new(fixture("data.json")).unwrap();
    let config = CString::new(fixture("config.json")).unwrap();
    let mut series = ptr::null_mut();
    assert_eq!(unsafe { ag_series_generate(spec.as_ptr(), 11, &mut series) }, AgStatus::Ok);
    let mut pack = ptr::null_mut();
    let mut outcome = -1;
    let status = unsafe { ag_protocol_run(series, config.as_ptr(), &mut pack, &mut outcome) };
    assert_eq!(status, AgStatus::Ok, "{:?}", unsafe { CStr::from_ptr(ag_last_error()) });
    assert_eq!(outcome, AG_OUTCOME_DEPLOY);
    let text = unsafe { CStr::from_ptr(pack) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["verdict"]["outcome"], "Deploy");
    unsafe {
        ag_string_free(pack);
        ag_series_free(series);
    }

    let bad = CString::new("{\"strategy\": \"grid\"}").unwrap();
    let mut series = ptr::null_mut();
    unsafe { ag_series_generate(spec.as_ptr(), 11, &mut series) };
    let status = unsafe { ag_protocol_run(series, bad.as_ptr(), &mut pack, &mut outcome) };
    assert_eq!(status, AgStatus::Config);
    assert!(!unsafe { CStr::from_ptr(ag_last_error()) }.to_bytes().is_empty());
    unsafe { ag_series_free(series) };
    assert_eq!(unsafe { ag_protocol_run(ptr::null(), config.as_ptr(), &mut pack, &mut outcome) }, AgStatus::NullPointer);
}

/// `cargo test` only builds the rlib, so the static library is built here.
fn staticlib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let target_dir = profile_dir.parent()?;
    let status = Command::new(env!("CARGO"))
        .args(["build", "-q", "-p", "alphagate-ffi", "--lib", "--target-dir"])
        .arg(target_dir)
        .current_dir(manifest())
        .status()
        .ok()?;
    let lib = target_dir.join("debug").join("libalphagate_ffi.a");
    (status.success() && lib.exists()).then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_the_static_library() {
    if !have_cc() {
        eprintln!("cc not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "alphagate.h"
int main(void) {
    double eq[4] = {100.0, 110.0, 99.0, 120.0};
    double mdd = 0.0;
    if (ag_max_drawdown(eq, 4, &mdd) != AG_STATUS_OK) return 1;
    if (mdd < 0.0999 || mdd > 0.1001) return 2;
    if (ag_max_drawdown(NULL, 4, &mdd) != AG_STATUS_NULL_POINTER) return 3;
    if (ag_last_error()[0] == '\0') return 4;
    printf("%s\n", ag_version());
    return 0;
}
"#,
    )
    .unwrap();
    let include = manifest().join("include");
    let syntax = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(syntax.success(), "header does not compile");

    let Some(lib) = staticlib() else {
        eprintln!("static library not found; compile check only");
        return;
    };
    let exe = dir.path().join("smoke");
    let link = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success(), "smoke exited {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
