use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use diachron::compass::{save_model, train_diachronic, DiachronicModel, TrainingMode};
use diachron::corpus::{SlicedCorpus, SpeakerFilter};
use diachron::synth::PlantedConfig;
use diachron_ffi::*;

fn trained(dir: &Path) -> (DiachronicModel, PathBuf) {
    let planted = PlantedConfig::default();
    let corpus = SlicedCorpus::from_utterances(
        SpeakerFilter::Combined,
        planted.age_range(),
        planted.utterances().unwrap(),
    )
    .unwrap();
    let model = train_diachronic(&corpus, &planted.compass_config(3), TrainingMode::Incremental).unwrap();
    let path = dir.join("model");
    save_model(&model, &path).unwrap();
    (model, path)
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = diachron_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut DiachronModel);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { diachron_model_free(self.0) };
    }
}

fn load(path: &Path) -> Handle {
    let mut h = ptr::null_mut();
    let status = unsafe { diachron_model_load(c(path.to_str().unwrap()).as_ptr(), &mut h) };
    assert_eq!(status, DiachronStatus::Ok);
    assert!(diachron_last_error().is_null());
    Handle(h)
}

#[test]
fn handle_queries_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = trained(dir.path());
    let h = load(&path);
    unsafe {
        let mut n = 0usize;
        assert_eq!(diachron_model_vocab_size(h.0, &mut n), DiachronStatus::Ok);
        assert_eq!(n, model.vocabulary().len());
        assert_eq!(diachron_model_dim(h.0, &mut n), DiachronStatus::Ok);
        assert_eq!(n, 32);

        let mut months = [0u32; 2];
        assert_eq!(
            diachron_model_months(h.0, months.as_mut_ptr(), 2, &mut n),
            DiachronStatus::BufferTooSmall
        );
        assert_eq!(n, 6);
        let mut months = vec![0u32; n];
        assert_eq!(
            diachron_model_months(h.0, months.as_mut_ptr(), n, &mut n),
            DiachronStatus::Ok
        );
        assert_eq!(months, model.trained_months());

        let mut v = vec![0.0; 32];
        let word = c("t0n0");
        assert_eq!(
            diachron_model_word_vector(h.0, word.as_ptr(), 23, v.as_mut_ptr(), 32, &mut n),
            DiachronStatus::Ok
        );
        assert_eq!(v.as_slice(), model.vector("t0n0", 23).unwrap());

        let mut sim = 0.0;
        assert_eq!(
            diachron_model_similarity(h.0, word.as_ptr(), c("t0n1").as_ptr(), 23, &mut sim),
            DiachronStatus::Ok
        );
        assert_eq!(sim, model.similarity("t0n0", "t0n1", 23).unwrap());

        let mut delta = 0.0;
        assert_eq!(
            diachron_model_semantic_change(h.0, word.as_ptr(), 20, &mut delta),
            DiachronStatus::Ok
        );
        let expected = 1.0
            - diachron::trainer::cosine(model.vector("t0n0", 20).unwrap(), model.vector("t0n0", 21).unwrap()).unwrap();
        assert_eq!(delta, expected);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = trained(dir.path());
    let h = load(&path);
    unsafe {
        let mut out = 0.0;
        let status = diachron_model_similarity(h.0, c("t0n0").as_ptr(), c("t0m0").as_ptr(), 23, &mut out);
        assert_eq!(status, DiachronStatus::UnknownWord);
        assert!(last_error().contains("t0n0"), "suggestions expected: {}", last_error());

        let status = diachron_model_similarity(h.0, c("t0n0").as_ptr(), c("t0n1").as_ptr(), 99, &mut out);
        assert_eq!(status, DiachronStatus::UnknownMonth);

        let status = diachron_model_semantic_change(h.0, c("t0n0").as_ptr(), 23, &mut out);
        assert_eq!(status, DiachronStatus::UnknownMonth, "last month has no successor");

        let status = diachron_model_similarity(ptr::null(), c("a").as_ptr(), c("b").as_ptr(), 23, &mut out);
        assert_eq!(status, DiachronStatus::NullPointer);

        let bad = [0xffu8, 0];
        let status = diachron_model_similarity(h.0, bad.as_ptr().cast(), c("t0n1").as_ptr(), 23, &mut out);
        assert_eq!(status, DiachronStatus::InvalidUtf8);

        let mut handle = ptr::null_mut();
        let missing = c(dir.path().join("nothing").to_str().unwrap());
        assert_eq!(diachron_model_load(missing.as_ptr(), &mut handle), DiachronStatus::Data);
        assert!(handle.is_null());
        assert!(!last_error().is_empty());

        diachron_model_free(ptr::null_mut());
    }
}

#[test]
fn spearman_through_the_abi() {
    let x = [1.0, 2.0, 2.0, 4.0, 5.0];
    let y = [2.0, 1.0, 4.0, 3.0, 5.0];
    let mut rho = 0.0;
    let status = unsafe { diachron_spearman(x.as_ptr(), y.as_ptr(), 5, &mut rho) };
    assert_eq!(status, DiachronStatus::Ok);
    assert!((rho - diachron::rsa::spearman(&x, &y).unwrap()).abs() < 1e-15);

    let flat = [1.0; 5];
    let status = unsafe { diachron_spearman(flat.as_ptr(), y.as_ptr(), 5, &mut rho) };
    assert_eq!(status, DiachronStatus::Numeric);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(diachron_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the generated header and shared library.
#[test]
fn c_program_uses_the_header() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    if !lib_dir.join("libdiachron_ffi.so").exists() {
        eprintln!("skipping: no shared library in {}", lib_dir.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = trained(dir.path());
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-ldiachron_ffi")
        .output();
    let build = match build {
        Ok(b) => b,
        Err(e) => {
            eprintln!("skipping: cannot run {cc}: {e}");
            return;
        }
    };
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = std::process::Command::new(&exe)
        .arg(&path)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(
        stdout.trim(),
        format!("vocab={} dim=32 months=6 unknown=6", model.vocabulary().len())
    );
}
