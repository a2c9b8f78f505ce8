use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use co2occ::svm::{self, KernelParams, SolverConfig, TrainingProblem};
use co2occ::Matrix;
use co2occ_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> Option<String> {
    let p = co2occ_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn simulate_room1(root: &Path) -> std::path::PathBuf {
    let dirs = co2occ::cli::cmd_presets(&root.join("presets"), 42).unwrap();
    let out = root.join("room1");
    let status = unsafe {
        co2occ_simulate(
            cstr(&dirs[0].join("config.json")).as_ptr(),
            cstr(&dirs[0].join("schedule.json")).as_ptr(),
            cstr(&out).as_ptr(),
        )
    };
    assert_eq!(status, Co2occStatus::Ok, "{:?}", last_error());
    out
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(co2occ_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn rbf_kernel_through_the_abi() {
    let x = [1.0, 2.0, 3.0];
    let z = [0.0, 2.0, 5.0];
    let mut out = 0.0;
    let status = unsafe { co2occ_rbf_kernel(x.as_ptr(), z.as_ptr(), 3, 0.5, &mut out) };
    assert_eq!(status, Co2occStatus::Ok);
    assert!((out - (-0.5f64 * 5.0).exp()).abs() < 1e-15);
    assert!(last_error().is_none());

    let status = unsafe { co2occ_rbf_kernel(x.as_ptr(), z.as_ptr(), 3, -1.0, &mut out) };
    assert_eq!(status, Co2occStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("gamma"));
}

#[test]
fn srocc_through_the_abi() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [5.0, 6.0, 7.0, 8.0, 7.0];
    let mut out = 0.0;
    let status = unsafe { co2occ_srocc(a.as_ptr(), b.as_ptr(), 5, &mut out) };
    assert_eq!(status, Co2occStatus::Ok);
    // ranks of b: 1, 2, 3.5, 5, 3.5
    let rb = [1.0, 2.0, 3.5, 5.0, 3.5];
    let (ma, mb) = (3.0, 3.0);
    let cov: f64 = (0..5).map(|i| (i as f64 + 1.0 - ma) * (rb[i] - mb)).sum();
    let va: f64 = (0..5).map(|i| (i as f64 + 1.0 - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|r| (r - mb).powi(2)).sum();
    assert!((out - cov / (va * vb).sqrt()).abs() < 1e-12);

    let flat = [2.0; 5];
    let status = unsafe { co2occ_srocc(a.as_ptr(), flat.as_ptr(), 5, &mut out) };
    assert_eq!(status, Co2occStatus::DegenerateData);
    assert!(last_error().is_some());
}

#[test]
fn null_arguments_are_reported() {
    let x = [1.0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { co2occ_rbf_kernel(ptr::null(), x.as_ptr(), 1, 1.0, &mut out) },
        Co2occStatus::NullArgument
    );
    assert!(last_error().unwrap().contains("`x`"));
    assert_eq!(
        unsafe { co2occ_srocc(x.as_ptr(), x.as_ptr(), 1, ptr::null_mut()) },
        Co2occStatus::NullArgument
    );
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { co2occ_model_load(ptr::null(), &mut model) },
        Co2occStatus::NullArgument
    );
    assert!(model.is_null());
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { co2occ_dataset_load(ptr::null(), 15, 300, &mut ds) },
        Co2occStatus::NullArgument
    );
    let mut len = 0;
    assert_eq!(
        unsafe { co2occ_dataset_occupants(ptr::null(), ptr::null_mut(), 0, &mut len) },
        Co2occStatus::NullArgument
    );
    assert_eq!(unsafe { co2occ_dataset_len(ptr::null()) }, 0);
    assert_eq!(unsafe { co2occ_model_n_features(ptr::null()) }, 0);
    unsafe {
        co2occ_model_free(ptr::null_mut());
        co2occ_dataset_free(ptr::null_mut());
    }
}

#[test]
fn model_round_trip_and_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let y: Vec<i64> = (0..30).map(|i| (i / 10) as i64).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let problem = TrainingProblem::balanced(x.clone(), y).unwrap();
    let params = KernelParams::new(0.05, 10.0).unwrap();
    let model = svm::train_multiclass(&problem, &params, &SolverConfig::default()).unwrap();
    let path = tmp.path().join("model.json");
    model.save(&path).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { co2occ_model_load(cstr(&path).as_ptr(), &mut handle) },
        Co2occStatus::Ok
    );
    assert!(!handle.is_null());
    assert_eq!(unsafe { co2occ_model_n_features(handle) }, 2);
    assert_eq!(unsafe { co2occ_model_n_classes(handle) }, 3);

    let flat: Vec<f64> = rows.concat();
    let mut batch = vec![-1i64; rows.len()];
    let status = unsafe {
        co2occ_model_predict_batch(handle, flat.as_ptr(), rows.len(), 2, batch.as_mut_ptr())
    };
    assert_eq!(status, Co2occStatus::Ok);
    for (row, &label) in rows.iter().zip(&batch) {
        let mut one = -1;
        assert_eq!(
            unsafe { co2occ_model_predict(handle, row.as_ptr(), 2, &mut one) },
            Co2occStatus::Ok
        );
        assert_eq!(one, label);
        assert_eq!(label, model.predict_raw(row).unwrap());
    }

    let mut one = -1;
    assert_eq!(
        unsafe { co2occ_model_predict(handle, flat.as_ptr(), 3, &mut one) },
        Co2occStatus::Dimension
    );
    unsafe { co2occ_model_free(handle) };

    let missing = tmp.path().join("absent.json");
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { co2occ_model_load(cstr(&missing).as_ptr(), &mut handle) },
        Co2occStatus::Io
    );
    assert!(last_error().unwrap().contains("absent.json"));
    let garbage = tmp.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(
        unsafe { co2occ_model_load(cstr(&garbage).as_ptr(), &mut handle) },
        Co2occStatus::Parse
    );
    assert!(handle.is_null());
}

#[test]
fn simulate_then_load_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = simulate_room1(tmp.path());
    let mut ds = ptr::null_mut();
    let status = unsafe { co2occ_dataset_load(cstr(&dir).as_ptr(), 15, 300, &mut ds) };
    assert_eq!(status, Co2occStatus::Ok, "{:?}", last_error());
    let n = unsafe { co2occ_dataset_len(ds) };
    // ten recorded days of nine hours at five-minute steps
    assert_eq!(n, 10 * 9 * 12);

    let mut len = 0;
    let mut small = vec![0u32; 3];
    let status = unsafe { co2occ_dataset_occupants(ds, small.as_mut_ptr(), small.len(), &mut len) };
    assert_eq!(status, Co2occStatus::Dimension);
    assert_eq!(len, n);

    let mut occ = vec![u32::MAX; n];
    let status = unsafe { co2occ_dataset_occupants(ds, occ.as_mut_ptr(), occ.len(), &mut len) };
    assert_eq!(status, Co2occStatus::Ok);
    assert!(occ.iter().all(|&o| o <= 18));
    assert!(occ.contains(&0) && occ.iter().any(|&o| o >= 6));
    unsafe { co2occ_dataset_free(ds) };

    let mut ds = ptr::null_mut();
    let status = unsafe { co2occ_dataset_load(cstr(&dir).as_ptr(), 15, 7, &mut ds) };
    assert_eq!(status, Co2occStatus::InvalidArgument);
    assert!(ds.is_null());
}

#[test]
fn experiment_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = simulate_room1(tmp.path());
    let out = tmp.path().join("report.json");
    let features = CString::new("avg,fd").unwrap();
    let task = CString::new("state").unwrap();
    let status = unsafe {
        co2occ_experiment(
            cstr(&dir).as_ptr(),
            features.as_ptr(),
            task.as_ptr(),
            300,
            1,
            7,
            cstr(&out).as_ptr(),
        )
    };
    assert_eq!(status, Co2occStatus::Ok, "{:?}", last_error());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"accuracy\""));

    let bad = CString::new("presence").unwrap();
    let status = unsafe {
        co2occ_experiment(
            cstr(&dir).as_ptr(),
            features.as_ptr(),
            bad.as_ptr(),
            300,
            1,
            7,
            cstr(&out).as_ptr(),
        )
    };
    assert_eq!(status, Co2occStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("presence"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/co2occ.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "co2occ_version",
        "co2occ_model_predict_batch",
        "co2occ_experiment",
        "CO2OCC_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"co2occ.h\"\nint main(void) { double k; Co2occModel *m = 0; (void)m;\n\
         return co2occ_rbf_kernel(0, 0, 0, 1.0, &k) == CO2OCC_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let result = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(include)
            .arg(&src)
            .output();
        match result {
            Ok(o) => assert!(
                o.status.success(),
                "{compiler}: {}",
                String::from_utf8_lossy(&o.stderr)
            ),
            Err(_) => eprintln!("{compiler} not found, skipping"),
        }
    }
}
