use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use meg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(meg_last_error()) }.to_string_lossy().into_owned()
}

fn replica(seed: u8) -> *mut MegReplica {
    let room = CString::new("!ffi:example.org").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { meg_replica_new(MegScheme::KeyedHash, [seed; 32].as_ptr(), room.as_ptr(), seed as u64, &mut out) };
    assert_eq!(st, MegStatus::Ok);
    out
}

#[test]
fn analytic_functions() {
    let mut x = 0.0;
    unsafe {
        assert_eq!(meg_expected_removed(4, 2, 2, &mut x), MegStatus::Ok);
        assert!((x - 3.0).abs() < 1e-12);
        assert_eq!(meg_variance_removed(4, 2, 2, &mut x), MegStatus::Ok);
        assert!((x - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(meg_expected_removed(2, 2, 2, &mut x), MegStatus::Domain);
        assert!(last_error().contains("smaller than the urn size"));
        assert_eq!(meg_expected_removed(4, 2, 2, ptr::null_mut()), MegStatus::NullPointer);

        let mut pmf = [0.0; 5];
        assert_eq!(meg_pmf_removed(4, 2, 2, pmf.as_mut_ptr(), 4), MegStatus::BufferTooSmall);
        assert_eq!(meg_pmf_removed(4, 2, 2, pmf.as_mut_ptr(), 5), MegStatus::Ok);
        assert!((pmf[3] - 2.0 / 3.0).abs() < 1e-15);

        let mut n = 0;
        assert_eq!(meg_fixed_point(5, 10, &mut n), MegStatus::Ok);
        assert_eq!(n, 11);
        assert_eq!(meg_rounds_until_convergence(30.0, 2, 3, &mut n), MegStatus::Ok);
        assert_eq!(n, 12);
    }
}

#[test]
fn replicas_exchange_events() {
    let a = replica(1);
    let b = replica(2);
    unsafe {
        let handles = [a as *const MegReplica, b as *const MegReplica];
        let mut dir = ptr::null_mut();
        assert_eq!(meg_directory_new(handles.as_ptr(), 2, 0, &mut dir), MegStatus::Ok);

        let kind = CString::new("m.room.message").unwrap();
        let mut wires = Vec::new();
        for i in 0..5u8 {
            let mut out = MegBytes { data: ptr::null_mut(), len: 0 };
            let body = [i; 4];
            assert_eq!(meg_replica_create_event(a, kind.as_ptr(), body.as_ptr(), body.len(), 3, &mut out), MegStatus::Ok);
            wires.push(out);
        }
        // Newest first, so everything but the last delivery gets buffered.
        for w in wires.iter().rev() {
            assert_eq!(meg_replica_receive(b, dir, w.data, w.len), MegStatus::Ok);
        }
        assert_eq!(meg_replica_pending(b), 0);
        assert_eq!(meg_replica_len(b), 6);
        assert_eq!(meg_replica_width(b), 1);

        let mut da = [0u8; 32];
        let mut db = [1u8; 32];
        meg_replica_digest(a, da.as_mut_ptr());
        meg_replica_digest(b, db.as_mut_ptr());
        assert_eq!(da, db);

        let mut tampered = std::slice::from_raw_parts(wires[0].data, wires[0].len).to_vec();
        let last = tampered.len() - 1;
        tampered[last] ^= 1;
        assert_eq!(meg_replica_receive(b, dir, tampered.as_ptr(), tampered.len()), MegStatus::Rejected);
        assert_eq!(meg_replica_receive(b, dir, [1u8, 2, 3].as_ptr(), 3), MegStatus::Parse);

        for w in wires {
            meg_bytes_free(w);
        }
        meg_directory_free(dir);
        meg_replica_free(a);
        meg_replica_free(b);
    }
}

#[test]
fn runs_scenarios() {
    let json = CString::new(meg::sim::ScenarioSpec::default().to_json()).unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(meg_run_scenario_json(json.as_ptr(), &mut out), MegStatus::Ok);
        let summary: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
        assert_eq!(summary["verdict"]["strong_convergence"], true);
        meg_string_free(out);

        let bad = CString::new("{\"n\": 3}").unwrap();
        assert_eq!(meg_run_scenario_json(bad.as_ptr(), &mut out), MegStatus::Parse);
        assert_eq!(CStr::from_ptr(meg_status_name(MegStatus::Parse)).to_str().unwrap(), "parse error");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/meg.h");
    let source = format!("#include \"{header}\"\nint main(void) {{ return MEG_STATUS_OK; }}\n");
    let dir = tempfile::tempdir().unwrap();
    for (compiler, file, extra) in [("cc", "t.c", "-std=c11"), ("c++", "t.cpp", "-std=c++17")] {
        let path = dir.path().join(file);
        std::fs::write(&path, &source).unwrap();
        match Command::new(compiler).args([extra, "-Wall", "-Werror", "-fsyntax-only"]).arg(&path).output() {
            Ok(out) => assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr)),
            Err(_) => eprintln!("{compiler} not found, skipping"),
        }
    }
}
