//! Builds a C program against the generated header and static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libsalesim_ffi.a");
    lib.exists().then_some(lib)
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok()?.status.success().then_some(cc)
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(header_dir().join("salesim.h")).unwrap();
    for sym in [
        "typedef struct SalesimWorld SalesimWorld",
        "typedef struct SalesimLinUcb SalesimLinUcb",
        "typedef struct SalesimResult SalesimResult",
        "SALESIM_STATUS_VERIFICATION = 6",
        "salesim_last_error(void)",
        "salesim_simulate(",
        "salesim_result_verify(",
        "salesim_linucb_theta(",
    ] {
        assert!(h.contains(sym), "missing {sym}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let dir = tempfile::tempdir().unwrap();
    let Some(lib) = static_lib() else {
        let st = Command::new(&cc)
            .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(header_dir())
            .arg(&src)
            .status()
            .unwrap();
        assert!(st.success(), "header does not compile");
        return;
    };
    let bin = dir.path().join("smoke");
    let st = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
