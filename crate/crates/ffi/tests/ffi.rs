use std::ffi::{CStr, CString};
use std::ptr;

use vanetsim_ffi::*;

const SMALL: &str = r#"{"protocols": ["dfcv", "baseline"], "densities": [20, 40], "seeds": [3], "sim_duration": 2.0}"#;

fn config(json: &str) -> *mut VanetConfig {
    let json = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { vanet_config_from_json(json.as_ptr(), &mut cfg) };
    assert_eq!(status, VanetStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

fn last_error() -> String {
    let p = vanet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn sweep_round_trip() {
    let cfg = config(SMALL);
    let mut sweep = ptr::null_mut();
    assert_eq!(unsafe { vanet_run_sweep(cfg, false, &mut sweep) }, VanetStatus::Ok);
    assert_eq!(unsafe { vanet_sweep_row_count(sweep) }, 4);

    let mut row = VanetRow {
        protocol: VanetProtocol::Dfcv,
        vehicle_count: 0,
        seed: 0,
        mean_e2e_delay_s: 0.0,
        delivery_probability: 0.0,
        plr: 0.0,
        avg_throughput_bps: 0.0,
        n_sent: 0,
        n_delivered: 0,
        n_lost: 0,
    };
    assert_eq!(unsafe { vanet_sweep_row(sweep, 0, &mut row) }, VanetStatus::Ok);
    assert_eq!(row.protocol, VanetProtocol::Baseline);
    assert_eq!((row.vehicle_count, row.seed), (20, 3));
    assert_eq!(row.n_sent, row.n_delivered + row.n_lost);
    assert_eq!(unsafe { vanet_sweep_row(sweep, 3, &mut row) }, VanetStatus::Ok);
    assert_eq!((row.protocol, row.vehicle_count), (VanetProtocol::Dfcv, 40));
    assert_eq!(unsafe { vanet_sweep_row(sweep, 4, &mut row) }, VanetStatus::OutOfRange);
    assert!(last_error().contains("out of range"));

    let csv = unsafe { vanet_sweep_csv(sweep) };
    let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_owned();
    unsafe { vanet_string_free(csv) };
    assert!(text.starts_with("protocol,vehicle_count,seed,"));
    assert_eq!(text.lines().count(), 5);

    // same bytes from the parallel path
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { vanet_run_sweep(cfg, true, &mut again) }, VanetStatus::Ok);
    let csv2 = unsafe { vanet_sweep_csv(again) };
    assert_eq!(unsafe { CStr::from_ptr(csv2) }.to_str().unwrap(), text);
    unsafe {
        vanet_string_free(csv2);
        vanet_sweep_free(again);
        vanet_sweep_free(sweep);
        vanet_config_free(cfg);
    }
}

#[test]
fn config_errors_carry_key_paths() {
    let json = CString::new(r#"{"radio": {"range": -1}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vanet_config_from_json(json.as_ptr(), &mut cfg) }, VanetStatus::ConfigError);
    assert!(cfg.is_null());
    assert!(last_error().starts_with("radio.range"));

    let json = CString::new(r#"{"radio": {"fading": 1}}"#).unwrap();
    assert_eq!(unsafe { vanet_config_from_json(json.as_ptr(), &mut cfg) }, VanetStatus::ConfigError);
    assert!(last_error().starts_with("radio.fading"));

    let path = CString::new("/nonexistent/scenario.json").unwrap();
    assert_eq!(unsafe { vanet_config_load(path.as_ptr(), &mut cfg) }, VanetStatus::ConfigError);
}

#[test]
fn config_load_from_file() {
    let dir = std::env::temp_dir().join(format!("vanetsim-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("scenario.json");
    std::fs::write(&file, SMALL).unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vanet_config_load(path.as_ptr(), &mut cfg) }, VanetStatus::Ok);
    unsafe { vanet_config_free(cfg) };
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vanet_config_from_json(ptr::null(), &mut cfg) }, VanetStatus::NullArgument);
    assert_eq!(unsafe { vanet_config_load(ptr::null(), &mut cfg) }, VanetStatus::NullArgument);
    let json = CString::new("{}").unwrap();
    assert_eq!(unsafe { vanet_config_from_json(json.as_ptr(), ptr::null_mut()) }, VanetStatus::NullArgument);
    let mut sweep = ptr::null_mut();
    assert_eq!(unsafe { vanet_run_sweep(ptr::null(), false, &mut sweep) }, VanetStatus::NullArgument);
    assert_eq!(unsafe { vanet_sweep_row_count(ptr::null()) }, 0);
    assert!(unsafe { vanet_sweep_csv(ptr::null()) }.is_null());
    unsafe {
        vanet_config_free(ptr::null_mut());
        vanet_sweep_free(ptr::null_mut());
        vanet_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_reported() {
    let bytes = CString::new(vec![b'{', 0xff, b'}']).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vanet_config_from_json(bytes.as_ptr(), &mut cfg) }, VanetStatus::InvalidUtf8);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(vanet_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vanetsim.h")).unwrap();
    for name in [
        "vanet_last_error",
        "vanet_version",
        "vanet_config_from_json",
        "vanet_config_load",
        "vanet_config_free",
        "vanet_run_sweep",
        "vanet_sweep_row_count",
        "vanet_sweep_row",
        "vanet_sweep_csv",
        "vanet_sweep_free",
        "vanet_string_free",
        "typedef struct VanetConfig VanetConfig",
        "typedef struct VanetSweep VanetSweep",
        "VANET_STATUS_CONFIG_ERROR = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = std::env::temp_dir().join(format!("vanetsim-hdr-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        "#include \"vanetsim.h\"\nint probe(void) { VanetRow r; VanetConfig *c = 0; (void)r; return vanet_config_from_json(\"{}\", &c) == VANET_STATUS_OK; }\n",
    )
    .unwrap();
    let out = match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include]).arg(&src).output() {
        Ok(o) => o,
        Err(_) => {
            eprintln!("no C compiler on PATH; skipping header syntax check");
            return;
        }
    };
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
