//! Exercises the C ABI from Rust: handle lifecycle, status codes and the
//! certify -> run -> analyze flow over the boundary.

use std::env;
use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use teleop_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn full_flow_over_the_c_boundary() {
    unsafe {
        let path = scenario_path("nodelay_example.toml");
        let mut sc: *mut TeleopScenario = ptr::null_mut();
        assert_eq!(
            teleop_scenario_load(path.as_ptr(), &mut sc),
            TeleopStatus::Ok
        );
        assert!(!sc.is_null());

        let mut cert: *mut TeleopCertificate = ptr::null_mut();
        assert_eq!(teleop_certify(sc, &mut cert), TeleopStatus::Ok);
        let mut passed = false;
        assert_eq!(
            teleop_certificate_passed(cert, &mut passed),
            TeleopStatus::Ok
        );
        assert!(passed);
        let mut kappa = 0.0;
        assert_eq!(teleop_certificate_kappa(cert, &mut kappa), TeleopStatus::Ok);
        assert_eq!(kappa, 0.5);

        let mut report: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(
            teleop_certificate_report_json(cert, &mut report),
            TeleopStatus::Ok
        );
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        assert!(text.contains("\"passed\": true"));
        teleop_string_free(report);

        let mut trace: *mut TeleopTrace = ptr::null_mut();
        assert_eq!(teleop_run(sc, cert, &mut trace), TeleopStatus::Ok);
        let mut steps = 0usize;
        assert_eq!(teleop_trace_steps(trace, &mut steps), TeleopStatus::Ok);
        assert_eq!(steps, 10_001);
        let mut err = f64::NAN;
        assert_eq!(teleop_trace_final_error(trace, &mut err), TeleopStatus::Ok);
        assert!(err.is_finite() && err < 0.1);

        let dir = env::temp_dir().join("teleop_ffi_trace.csv");
        let csv_path = CString::new(dir.to_str().unwrap()).unwrap();
        assert_eq!(
            teleop_trace_write_csv(trace, csv_path.as_ptr()),
            TeleopStatus::Ok
        );
        let csv = std::fs::read_to_string(&dir).unwrap();
        assert!(csv.starts_with("t,qm0,"));
        std::fs::remove_file(&dir).ok();

        let mut analysis: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(
            teleop_analyze_json(trace, cert, 0.01, &mut analysis),
            TeleopStatus::Ok
        );
        let text = CStr::from_ptr(analysis).to_str().unwrap().to_owned();
        assert!(text.contains("\"decay\""));
        teleop_string_free(analysis);

        let mut meta: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(
            teleop_trace_metadata_json(trace, &mut meta),
            TeleopStatus::Ok
        );
        assert!(CStr::from_ptr(meta).to_str().unwrap().contains("\"mode\""));
        teleop_string_free(meta);

        teleop_trace_free(trace);
        teleop_certificate_free(cert);
        teleop_scenario_free(sc);
    }
}

#[test]
fn parse_error_reports_message() {
    unsafe {
        let bogus = CString::new("step = \"nope\"").unwrap();
        let mut sc: *mut TeleopScenario = ptr::null_mut();
        let status = teleop_scenario_parse(bogus.as_ptr(), &mut sc);
        assert_eq!(status, TeleopStatus::ParseError);
        assert!(sc.is_null());
        let msg = teleop_last_error_message();
        assert!(!msg.is_null());
        let text = CStr::from_ptr(msg).to_str().unwrap();
        assert!(text.contains("config error"), "{text}");
    }
}

#[test]
fn null_arguments_rejected() {
    unsafe {
        let mut sc: *mut TeleopScenario = ptr::null_mut();
        assert_eq!(
            teleop_scenario_load(ptr::null(), &mut sc),
            TeleopStatus::NullArgument
        );
        assert_eq!(
            teleop_certify(ptr::null(), ptr::null_mut()),
            TeleopStatus::NullArgument
        );
        let mut passed = false;
        assert_eq!(
            teleop_certificate_passed(ptr::null(), &mut passed),
            TeleopStatus::NullArgument
        );
        // Destructors ignore null.
        teleop_scenario_free(ptr::null_mut());
        teleop_certificate_free(ptr::null_mut());
        teleop_trace_free(ptr::null_mut());
        teleop_string_free(ptr::null_mut());
    }
}

#[test]
fn divergence_status_propagates() {
    unsafe {
        let template = std::fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/nodelay_example.toml"),
        )
        .unwrap();
        let diverging = template.replace("blowup = 1.0e6", "blowup = 0.4");
        let text = CString::new(diverging).unwrap();
        let mut sc: *mut TeleopScenario = ptr::null_mut();
        assert_eq!(
            teleop_scenario_parse(text.as_ptr(), &mut sc),
            TeleopStatus::Ok
        );
        let mut cert: *mut TeleopCertificate = ptr::null_mut();
        assert_eq!(teleop_certify(sc, &mut cert), TeleopStatus::Ok);
        let mut trace: *mut TeleopTrace = ptr::null_mut();
        assert_eq!(teleop_run(sc, cert, &mut trace), TeleopStatus::Divergence);
        assert!(trace.is_null());
        let msg = CStr::from_ptr(teleop_last_error_message())
            .to_str()
            .unwrap();
        assert!(msg.contains("diverged"), "{msg}");
        teleop_certificate_free(cert);
        teleop_scenario_free(sc);
    }
}

#[test]
fn generated_header_exists_with_key_symbols() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/teleop.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    for symbol in [
        "typedef struct TeleopScenario TeleopScenario;",
        "TeleopStatus_Ok",
        "teleop_scenario_load",
        "teleop_certify",
        "teleop_run",
        "teleop_analyze_json",
        "teleop_string_free",
        "TELEOP_H",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
