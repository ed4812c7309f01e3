use std::path::PathBuf;
use std::process::Command;

// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libfouriermamba_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let bin = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
