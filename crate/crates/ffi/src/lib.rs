//! C ABI over saved diachronic models.
//!
//! Every function returns a [`DiachronStatus`]; on failure the message is
//! available from [`diachron_last_error`] on the same thread. Models are
//! opaque handles created by [`diachron_model_load`] and released with
//! [`diachron_model_free`]. Buffers are caller-owned: functions that fill
//! one take its capacity and report the length they need.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use diachron::compass::{load_model, DiachronicModel};
use diachron::Error;

/// Status codes returned by every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiachronStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad arguments or configuration.
    Config = 3,
    /// Unreadable, corrupt or mismatched model files.
    Data = 4,
    /// Undefined or failed computation, e.g. a zero vector.
    Numeric = 5,
    UnknownWord = 6,
    /// The month has no trained slice.
    UnknownMonth = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque model handle.
pub struct DiachronModel {
    inner: DiachronicModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DiachronStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownWord { .. } => DiachronStatus::UnknownWord,
            _ => match e.exit_code() {
                2 => DiachronStatus::Config,
                3 => DiachronStatus::Data,
                _ => DiachronStatus::Numeric,
            },
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: DiachronStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F>(f: F) -> DiachronStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DiachronStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DiachronStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(DiachronStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(DiachronStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const DiachronModel) -> Result<&'a DiachronicModel, Failure> {
    match m.as_ref() {
        Some(m) => Ok(&m.inner),
        None => fail(DiachronStatus::NullPointer, "model handle is null"),
    }
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    match p.as_mut() {
        Some(p) => Ok(p),
        None => fail(DiachronStatus::NullPointer, "output pointer is null"),
    }
}

/// Copies `src` into a caller buffer of `cap` elements and stores the
/// needed length in `len`.
unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Failure> {
    *out_arg(len)? = src.len();
    if cap < src.len() {
        return fail(
            DiachronStatus::BufferTooSmall,
            format!("buffer holds {cap} elements, {} needed", src.len()),
        );
    }
    if !src.is_empty() {
        if buf.is_null() {
            return fail(DiachronStatus::NullPointer, "buffer is null");
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

fn vector<'a>(m: &'a DiachronicModel, word: &str, month: u32) -> Result<&'a [f64], Failure> {
    if m.slice(month).is_none() {
        return fail(
            DiachronStatus::UnknownMonth,
            format!("no trained slice for month {month}"),
        );
    }
    match m.vector(word, month) {
        Some(v) => Ok(v),
        None => Err(m.vocabulary().unknown_word(word).into()),
    }
}

/// Last error message on this thread, or NULL after a successful call.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn diachron_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn diachron_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model directory written by the `diachron` tool.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_load(dir: *const c_char, out: *mut *mut DiachronModel) -> DiachronStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = std::ptr::null_mut();
        let dir = str_arg(dir, "dir")?;
        let inner = load_model(Path::new(dir))?;
        *out = Box::into_raw(Box::new(DiachronModel { inner }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from [`diachron_model_load`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_free(model: *mut DiachronModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_vocab_size(model: *const DiachronModel, out: *mut usize) -> DiachronStatus {
    guard(|| {
        *out_arg(out)? = model_arg(model)?.vocabulary().len();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_dim(model: *const DiachronModel, out: *mut usize) -> DiachronStatus {
    guard(|| {
        *out_arg(out)? = model_arg(model)?.dim();
        Ok(())
    })
}

/// Trained months in increasing order. `len` receives the number of months
/// even when `cap` is too small.
///
/// # Safety
/// `months` must hold `cap` elements; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_months(
    model: *const DiachronModel,
    months: *mut u32,
    cap: usize,
    len: *mut usize,
) -> DiachronStatus {
    guard(|| fill(&model_arg(model)?.trained_months(), months, cap, len))
}

/// Copies a word's vector at `month` into `buf`; `len` receives the
/// dimension.
///
/// # Safety
/// `word` must be NUL-terminated, `buf` must hold `cap` doubles and `len`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_word_vector(
    model: *const DiachronModel,
    word: *const c_char,
    month: u32,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> DiachronStatus {
    guard(|| {
        let m = model_arg(model)?;
        let v = vector(m, str_arg(word, "word")?, month)?;
        fill(v, buf, cap, len)
    })
}

/// Cosine similarity of two words at `month`.
///
/// # Safety
/// `a` and `b` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_similarity(
    model: *const DiachronModel,
    a: *const c_char,
    b: *const c_char,
    month: u32,
    out: *mut f64,
) -> DiachronStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out_arg(out)?;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        let (va, vb) = (vector(m, a, month)?, vector(m, b, month)?);
        match diachron::trainer::cosine(va, vb) {
            Some(c) => *out = c,
            None => {
                return Err(Error::ZeroVector {
                    word: format!("{a}/{b}"),
                    month,
                }
                .into())
            }
        }
        Ok(())
    })
}

/// Change of `word` from `month` to the next trained month, one minus the
/// cosine of the two vectors.
///
/// # Safety
/// `word` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn diachron_model_semantic_change(
    model: *const DiachronModel,
    word: *const c_char,
    month: u32,
    out: *mut f64,
) -> DiachronStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out_arg(out)?;
        let word = str_arg(word, "word")?;
        let before = vector(m, word, month)?;
        let Some(&next) = m.trained_months().iter().find(|&&t| t > month) else {
            return fail(DiachronStatus::UnknownMonth, format!("no trained month after {month}"));
        };
        let after = vector(m, word, next)?;
        match diachron::trainer::cosine(before, after) {
            Some(c) => *out = 1.0 - c,
            None => {
                return Err(Error::ZeroVector {
                    word: word.to_string(),
                    month,
                }
                .into())
            }
        }
        Ok(())
    })
}

/// Spearman rank correlation of two arrays of length `n`, ties given their
/// average rank.
///
/// # Safety
/// `x` and `y` must each point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn diachron_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> DiachronStatus {
    guard(|| {
        let out = out_arg(out)?;
        if x.is_null() || y.is_null() {
            return fail(DiachronStatus::NullPointer, "input array is null");
        }
        let (x, y) = (std::slice::from_raw_parts(x, n), std::slice::from_raw_parts(y, n));
        *out = diachron::rsa::spearman(x, y)?;
        Ok(())
    })
}
