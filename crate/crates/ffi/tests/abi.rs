use std::ffi::{CStr, CString};
use std::ptr;

use longtail_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(lt_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn endpoint_and_survivor() {
    assert!((lt_gp_endpoint(110.0, 1.546, -0.108) - 124.3148).abs() < 1e-3);
    assert!(lt_gp_endpoint(110.0, 1.0, 0.1).is_infinite());
    let mut s = 0.0;
    let st = unsafe { lt_survivor(c(r#"{"family": "exponential", "sigma": 1.38}"#).as_ptr(), 1.0, &mut s) };
    assert_eq!(st, LtStatus::Ok);
    assert!((s - (-1.0f64 / 1.38).exp()).abs() < 1e-15);
    let st = unsafe { lt_survivor(c(r#"{"family": "exponential", "sigma": -1}"#).as_ptr(), 1.0, &mut s) };
    assert_eq!(st, LtStatus::InputError);
    assert!(!last_error().is_empty());
}

#[test]
fn dataset_fit_round_trip() {
    unsafe {
        let ds = lt_dataset_new();
        // Untruncated exponential data: the estimate is the sample mean.
        let times = [0.3, 1.2, 2.5, 0.7, 1.9, 3.3, 0.1, 0.8];
        for &t in &times {
            assert_eq!(lt_dataset_push_truncated(ds, t, 0.0, f64::INFINITY, 110.0), LtStatus::Ok);
        }
        assert_eq!(lt_dataset_len(ds), times.len());
        assert_eq!(lt_dataset_push_truncated(ds, 5.0, 0.0, 2.0, 110.0), LtStatus::InputError);
        assert_eq!(lt_dataset_len(ds), times.len());

        let mut fit = ptr::null_mut();
        assert_eq!(lt_fit(ds, c("exponential").as_ptr(), 110.0, &mut fit), LtStatus::Ok);
        assert_eq!(lt_fit_converged(fit), 1);
        let (mut v, mut se) = (0.0, 0.0);
        assert_eq!(lt_fit_estimate(fit, c("sigma").as_ptr(), &mut v, &mut se), LtStatus::Ok);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        assert!((v - mean).abs() < 1e-8 * mean);
        assert!(se > 0.0);
        assert_eq!(lt_fit_estimate(fit, c("xi").as_ptr(), &mut v, &mut se), LtStatus::InputError);
        assert!(lt_fit_loglik(fit).is_finite());

        let mut json = ptr::null_mut();
        assert_eq!(lt_fit_to_json(fit, &mut json), LtStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        lt_string_free(json);
        let parsed: longtail::likelihood::FitResult = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.n_used, times.len());

        let mut np = ptr::null_mut();
        assert_eq!(lt_turnbull(ds, &mut np), LtStatus::Ok);
        lt_string_free(np);

        lt_fit_free(fit);
        lt_dataset_free(ds);
    }
}

#[test]
fn json_dataset_and_bootstrap() {
    let records: Vec<longtail::LifetimeRecord> = longtail::Params::Exponential { sigma: 1.5 }
        .sample_seeded(60, 3, None)
        .unwrap()
        .into_iter()
        .map(longtail::LifetimeRecord::untruncated)
        .collect();
    let json = c(&serde_json::to_string(&records).unwrap());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(lt_dataset_from_json(json.as_ptr(), &mut ds), LtStatus::Ok);
        assert_eq!(lt_dataset_len(ds), 60);
        let (mut w, mut pa, mut pb) = (0.0, 0.0, 0.0);
        let st = lt_bootstrap_lrt(ds, c("exponential").as_ptr(), c("gompertz").as_ptr(), 0.0, 19, 4, &mut w, &mut pa, &mut pb);
        assert_eq!(st, LtStatus::Ok, "{}", last_error());
        assert!(w >= 0.0 && (0.0..=1.0).contains(&pa) && pb >= 0.05 && pb <= 1.0);
        let st = lt_bootstrap_lrt(ds, c("gen_pareto").as_ptr(), c("exponential").as_ptr(), 0.0, 19, 4, &mut w, &mut pa, &mut pb);
        assert_eq!(st, LtStatus::InputError);
        lt_dataset_free(ds);
    }
}

#[test]
fn null_and_malformed_arguments() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(lt_dataset_from_json(ptr::null(), &mut ds), LtStatus::NullPointer);
        assert_eq!(lt_dataset_from_json(c("[{").as_ptr(), &mut ds), LtStatus::InputError);
        assert!(ds.is_null());
        let mut fit = ptr::null_mut();
        assert_eq!(lt_fit(ptr::null(), c("exponential").as_ptr(), 0.0, &mut fit), LtStatus::NullPointer);
        let empty = lt_dataset_new();
        assert_eq!(lt_fit(empty, c("no_such_family").as_ptr(), 0.0, &mut fit), LtStatus::InputError);
        assert!(last_error().contains("no_such_family"));
        assert_ne!(lt_fit(empty, c("exponential").as_ptr(), 0.0, &mut fit), LtStatus::Ok);
        lt_dataset_free(empty);
        assert_eq!(lt_dataset_len(ptr::null()), 0);
        assert!(lt_fit_loglik(ptr::null()).is_nan());
        lt_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/longtail.h")).unwrap();
    for name in [
        "lt_dataset_new",
        "lt_dataset_from_json",
        "lt_fit",
        "lt_fit_estimate",
        "lt_bootstrap_lrt",
        "lt_last_error",
        "LT_STATUS_INPUT_ERROR",
        "typedef struct LtDataset LtDataset",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile_dir();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"longtail.h\"\nint main(void) { LtDataset *d = lt_dataset_new(); lt_dataset_free(d); return (int)LT_STATUS_OK; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("longtail-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
