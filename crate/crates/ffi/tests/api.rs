//! The C entry points called from Rust, as a C caller would use them.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use steertest::artifact::{schema, write_json};
use steertest::detector::{train_detector, TrainingConfig};
use steertest::synth::{detector_corpus, SynthConfig};
use steertest_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        steertest_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn cstr(s: impl AsRef<str>) -> CString {
    CString::new(s.as_ref()).unwrap()
}

fn fixture_config() -> CString {
    cstr(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/pipeline.toml").to_str().unwrap())
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(steertest_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn reweighting_and_metrics() {
    let row = [0.5, 0.25, 0.25];
    let highlighted = [1usize];
    let mut out = [0.0; 3];
    let status = unsafe { steertest_reweight_row(row.as_ptr(), 3, highlighted.as_ptr(), 1, 0.0, out.as_mut_ptr()) };
    assert_eq!(status, SteertestStatus::Ok);
    assert_eq!(out, [0.0, 1.0, 0.0]);
    let status = unsafe { steertest_reweight_row(row.as_ptr(), 3, highlighted.as_ptr(), 1, 1.5, out.as_mut_ptr()) };
    assert_eq!(status, SteertestStatus::InvalidArgument);
    assert!(last_error().contains("1.5"), "{}", last_error());

    let mut f = 0.0;
    assert_eq!(unsafe { steertest_f1(0.272, 0.502, &mut f) }, SteertestStatus::Ok);
    assert!((f - 0.353).abs() <= 0.001);
    assert_eq!(unsafe { steertest_f1(0.0, 0.0, &mut f) }, SteertestStatus::Undefined);
    assert_eq!(unsafe { steertest_f1(0.5, 0.5, ptr::null_mut()) }, SteertestStatus::NullPointer);

    let scores = [0.9, 0.8, 0.7];
    let labels = [1u8, 0, 1];
    let mut auc = 0.0;
    assert_eq!(unsafe { steertest_pr_auc(scores.as_ptr(), labels.as_ptr(), 3, &mut auc) }, SteertestStatus::Ok);
    // Recall steps of 1/2 at precision 1 and 2/3.
    assert!((auc - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    let none = [0u8, 0, 0];
    assert_eq!(unsafe { steertest_pr_auc(scores.as_ptr(), none.as_ptr(), 3, &mut auc) }, SteertestStatus::Undefined);
}

#[test]
fn classification_table() {
    use SteertestClassification as C;
    use SteertestRunResult as R;
    assert_eq!(steertest_classify(R::Fail, R::Pass), C::TruePositive);
    assert_eq!(steertest_classify(R::Fail, R::Fail), C::FalsePositive);
    assert_eq!(steertest_classify(R::Pass, R::Pass), C::TrueNegative);
    assert_eq!(steertest_classify(R::Pass, R::Fail), C::FalseNegative);
    assert_eq!(steertest_classify(R::Timeout, R::Pass), C::Invalid);
    assert_eq!(steertest_classify(R::Fail, R::CompileError), C::Invalid);
}

#[test]
fn configuration_and_stage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: *mut SteertestConfig = ptr::null_mut();
    unsafe {
        assert_eq!(steertest_config_load(fixture_config().as_ptr(), &mut cfg), SteertestStatus::Ok);
        assert!(!cfg.is_null());
        assert_eq!(last_error(), "");
        let out = cstr(tmp.path().to_str().unwrap());
        assert_eq!(steertest_config_set_output_dir(cfg, out.as_ptr()), SteertestStatus::Ok);
        assert_eq!(steertest_config_set_alpha(cfg, -0.1), SteertestStatus::InvalidArgument);
        assert_eq!(steertest_config_set_seed(cfg, 3), SteertestStatus::Ok);
        assert_eq!(steertest_run_stage(cfg, cstr("locate").as_ptr()), SteertestStatus::MissingArtifact);
        assert!(last_error().contains("detect"), "{}", last_error());
        assert_eq!(steertest_run_stage(cfg, cstr("deploy").as_ptr()), SteertestStatus::InvalidArgument);
        assert_eq!(steertest_run_stage(ptr::null(), cstr("detect").as_ptr()), SteertestStatus::NullPointer);
        steertest_config_free(cfg);
        steertest_config_free(ptr::null_mut());

        let missing = cstr(tmp.path().join("nope.toml").to_str().unwrap());
        assert_eq!(steertest_config_load(missing.as_ptr(), &mut cfg), SteertestStatus::ConfigError);
        assert!(last_error().contains("nope.toml"));
        let bad = [0xffu8, 0];
        assert_eq!(steertest_config_load(bad.as_ptr().cast(), &mut cfg), SteertestStatus::InvalidUtf8);
    }
}

#[test]
fn detector_round_trip() {
    let corpus = detector_corpus(&SynthConfig { samples: 40, seed: 5, ..SynthConfig::default() });
    let data: Vec<_> = corpus.iter().map(|s| (s.method.clone(), s.label)).collect();
    let cfg = TrainingConfig { max_epochs: 2, ..TrainingConfig::default() };
    let (model, _) = train_detector(&data, &cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("detector.json");
    write_json(&path, schema::DETECTOR_MODEL, "detect", &model).unwrap();

    let mut handle: *mut SteertestDetector = ptr::null_mut();
    unsafe {
        assert_eq!(steertest_detector_load(cstr(path.to_str().unwrap()).as_ptr(), &mut handle), SteertestStatus::Ok);
        let method = &corpus[0];
        let mut p = -1.0;
        let status = steertest_detector_predict(handle, cstr(&method.code).as_ptr(), &mut p);
        assert_eq!(status, SteertestStatus::Ok, "{}", last_error());
        let expected = steertest::detector::predict_defect(&model, &method.method).unwrap().prob_defective;
        assert_eq!(p, expected);
        let status = steertest_detector_predict(handle, cstr("not a method").as_ptr(), &mut p);
        assert_eq!(status, SteertestStatus::InvalidArgument);
        steertest_detector_free(handle);
    }
}
