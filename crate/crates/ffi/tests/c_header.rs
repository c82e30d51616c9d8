//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "soaksim.h"

int main(void) {
    double h = 0.0;
    if (soaksim_initial_height(1e-8, 3.141592653589793e-4, &h) != SOAKSIM_STATUS_OK) return 1;
    if (h < 3.18e-5 || h > 3.19e-5) return 2;

    SoaksimConfig *cfg = NULL;
    if (soaksim_config_new(0.0, &cfg) != SOAKSIM_STATUS_OK) return 3;
    soaksim_config_set_number(cfg, "plate_radius_m", 0.02);
    soaksim_config_set_number(cfg, "particle_weight_mol", 1e-10);
    soaksim_config_set_number(cfg, "end_time_s", 600.0);
    double times[2] = {0.0, 600.0};
    soaksim_config_set_snapshot_times(cfg, times, 2);

    SoaksimRun *run = NULL;
    if (soaksim_run(cfg, 1, &run) != SOAKSIM_STATUS_OK) return 4;
    SoaksimSample s;
    if (soaksim_run_sample(run, soaksim_run_series_len(run) - 1, &s) != SOAKSIM_STATUS_OK) return 5;
    if (s.released != s.in_agar + s.consumed || s.consumed != 0) return 6;

    if (soaksim_config_set_number(cfg, "bogus", 1.0) != SOAKSIM_STATUS_INVALID_ARGUMENT) return 7;
    char msg[128];
    soaksim_last_error(msg, sizeof msg);
    printf("%llu released; last error: %s\n", (unsigned long long)s.released, msg);

    soaksim_run_free(run);
    soaksim_config_free(cfg);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/c_header-xxxx
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libsoaksim_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap_or_else(|e| panic!("running {cc}: {e}"));
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout}", out.status.code());
    assert!(stdout.contains("unknown numeric key 'bogus'"), "{stdout}");
}
