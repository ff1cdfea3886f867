use std::ffi::{CStr, CString};
use std::ptr;

use rsm_core::data::{generate_synthetic, save_csv, SyntheticSpec};
use rsm_ffi::*;

fn last_error() -> Option<String> {
    let p = rsm_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn two_state_chain_matches_closed_form() {
    let (a, b) = (0.3, 0.1);
    let p = [1.0 - a, a, b, 1.0 - b];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { rsm_stationary(p.as_ptr(), 2, out.as_mut_ptr()) }, RsmStatus::Ok);
    assert!((out[0] - b / (a + b)).abs() < 1e-14);
    assert!((out[1] - a / (a + b)).abs() < 1e-14);
    assert!(last_error().is_none());
}

#[test]
fn rank_encoding_by_hand() {
    let values = [1.0, 2.0, 3.0];
    let mut out = [0.0; 9];
    assert_eq!(unsafe { rsm_encode_rank_topology(values.as_ptr(), 3, true, out.as_mut_ptr()) }, RsmStatus::Ok);
    // row i: 3 + rank(j) - rank(i) with ranks 1, 2, 3
    let expect = [3.0, 4.0, 5.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0];
    for i in 0..3 {
        let s: f64 = expect[i * 3..i * 3 + 3].iter().sum();
        for j in 0..3 {
            assert!((out[i * 3 + j] - expect[i * 3 + j] / s).abs() < 1e-15);
        }
    }
}

#[test]
fn failures_set_status_and_message() {
    let bad = [0.5, 0.6, 0.5, 0.5];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { rsm_stationary(bad.as_ptr(), 2, out.as_mut_ptr()) }, RsmStatus::NotStochastic);
    assert!(last_error().unwrap().contains("stochastic"));

    assert_eq!(unsafe { rsm_stationary(ptr::null(), 2, out.as_mut_ptr()) }, RsmStatus::NullPointer);
    // two absorbing states: no unique answer
    let id = [1.0, 0.0, 0.0, 1.0];
    assert_eq!(unsafe { rsm_stationary(id.as_ptr(), 2, out.as_mut_ptr()) }, RsmStatus::NoUniqueStationary);

    let mut ds = ptr::null_mut();
    let missing = CString::new("/nonexistent/log.json").unwrap();
    assert_ne!(unsafe { rsm_dataset_load(missing.as_ptr(), ptr::null(), &mut ds) }, RsmStatus::Ok);
    assert!(ds.is_null());
    assert_eq!(unsafe { rsm_dataset_len(ptr::null()) }, 0);
    unsafe { rsm_model_free(ptr::null_mut()) };
}

#[test]
fn fit_and_score_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let synth = generate_synthetic(&SyntheticSpec::simple(2, 4, 25, vec![0.7, 0.3], 5)).unwrap();
    let csv = dir.path().join("log.csv");
    save_csv(&csv, &synth.rows, &synth.schema).unwrap();
    let schema = dir.path().join("schema.json");
    std::fs::write(&schema, serde_json::to_string(&synth.schema).unwrap()).unwrap();

    let (c, s) = (CString::new(csv.to_str().unwrap()).unwrap(), CString::new(schema.to_str().unwrap()).unwrap());
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { rsm_dataset_load(c.as_ptr(), s.as_ptr(), &mut ds) }, RsmStatus::Ok);
    assert_eq!(unsafe { rsm_dataset_len(ds) }, 25);
    assert_eq!(unsafe { rsm_dataset_num_features(ds) }, 2);

    let config = rsm_fit_config_default();
    assert_eq!(config.lambda, 0.15);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { rsm_fit(ds, &config, &mut model) }, RsmStatus::Ok);
    let mut w = [0.0; 2];
    assert_eq!(unsafe { rsm_model_weights(model, w.as_mut_ptr(), 2) }, RsmStatus::Ok);
    assert!((w[0] - 0.7).abs() < 1e-3 && (w[1] - 0.3).abs() < 1e-3, "{w:?}");
    let (mut err, mut converged) = (f64::NAN, false);
    assert_eq!(unsafe { rsm_model_fit_info(model, &mut err, ptr::null_mut(), &mut converged) }, RsmStatus::Ok);
    assert!(converged && err < 1e-6);

    let mut scores = [0.0; 4];
    let mut written = 0;
    assert_eq!(unsafe { rsm_model_score_context(model, ds, 0, scores.as_mut_ptr(), 1, &mut written) }, RsmStatus::BufferTooSmall);
    assert_eq!(written, 4);
    assert_eq!(unsafe { rsm_model_score_context(model, ds, 0, scores.as_mut_ptr(), 4, &mut written) }, RsmStatus::Ok);
    for (a, b) in scores.iter().zip(&synth.labels[0]) {
        assert!((a - b).abs() < 1e-4);
    }

    let mut planted = ptr::null_mut();
    let truth = [0.7, 0.3];
    assert_eq!(unsafe { rsm_model_from_weights(ds, truth.as_ptr(), 2, 0.15, &mut planted) }, RsmStatus::Ok);
    assert_eq!(unsafe { rsm_model_score_context(planted, ds, 3, scores.as_mut_ptr(), 4, &mut written) }, RsmStatus::Ok);
    for (a, b) in scores.iter().zip(&synth.labels[3]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(unsafe { rsm_model_from_weights(ds, truth.as_ptr(), 1, 0.15, &mut planted) }, RsmStatus::InvalidArgument);

    unsafe {
        rsm_model_free(model);
        rsm_model_free(planted);
        rsm_dataset_free(ds);
    }
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rsm.h")).unwrap();
    for name in ["rsm_stationary", "rsm_encode_rank_topology", "rsm_fit", "rsm_last_error", "RSM_STATUS_OK", "typedef struct RsmModel RsmModel"] {
        assert!(h.contains(name), "{name}");
    }
}
