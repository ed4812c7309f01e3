//! C ABI for the fouriermamba library.
//!
//! Every function returns an [`FmStatus`]. On failure the message is kept per
//! thread and read with [`fm_last_error_message`]. Objects are opaque and
//! owned by the caller once created; release them with the matching `_free`.
//!
//! Images cross the boundary as row-major `H x W x 3` arrays of `double` in
//! `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fouriermamba::harness::cli::derain_image;
use fouriermamba::harness::metrics::{psnr_y, ssim_y};
use fouriermamba::net::{ModelConfig, ModelWeights};
use fouriermamba::{Error, ScanOrder, ScanVariant, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NotPowerOfTwo = 4,
    NonFinite = 5,
    Format = 6,
    Config = 7,
    Io = 8,
    Image = 9,
    Panic = 10,
}

/// Model weights.
pub struct FmWeights(ModelWeights);

/// A scan order: a list of `(row, col)` positions.
pub struct FmScanOrder(Vec<(usize, usize)>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::Shape(_) => FmStatus::Shape,
        Error::InvalidArgument(_) => FmStatus::InvalidArgument,
        Error::NotPowerOfTwo { .. } => FmStatus::NotPowerOfTwo,
        Error::NonFinite { .. } => FmStatus::NonFinite,
        Error::Format(_) => FmStatus::Format,
        Error::Config(_) => FmStatus::Config,
        Error::Io { .. } => FmStatus::Io,
        Error::Image { .. } => FmStatus::Image,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FmStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn image_arg(data: *const f64, h: usize, w: usize, what: &'static str) -> Result<Tensor, Fail> {
    if data.is_null() {
        return Err(Fail::Null(what));
    }
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| Error::InvalidArgument(format!("{what}: {h}x{w} overflows")))?;
    Ok(Tensor::new(&[h, w, 3], std::slice::from_raw_parts(data, n).to_vec())?)
}

/// The most recent error message on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fresh weights for a named preset (`"toy"`, `"minimal"` or `"full"`).
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_weights_init(preset: *const c_char, seed: u64, out: *mut *mut FmWeights) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = match str_arg(preset, "preset")? {
            "toy" => ModelConfig::toy(),
            "minimal" => ModelConfig::minimal(),
            "full" => ModelConfig::full_depth(),
            other => return Err(Error::InvalidArgument(format!("unknown preset {other:?}")).into()),
        };
        let w = ModelWeights::init(&cfg, &mut fouriermamba::rng::seeded(seed))?;
        *out = Box::into_raw(Box::new(FmWeights(w)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_weights_load(path: *const c_char, out: *mut *mut FmWeights) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let w = ModelWeights::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FmWeights(w)));
        Ok(())
    })
}

/// # Safety
/// `weights` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fm_weights_save(weights: *const FmWeights, path: *const c_char) -> FmStatus {
    guard(|| {
        let w = ref_arg(weights, "weights")?;
        w.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Smallest image side the weights accept after padding.
///
/// # Safety
/// `weights` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_weights_min_side(weights: *const FmWeights, out: *mut usize) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(weights, "weights")?.0.config.min_side();
        Ok(())
    })
}

/// # Safety
/// `weights` must be NULL or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn fm_weights_free(weights: *mut FmWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// Derains an `H x W x 3` image of any size into `out` (same size). The
/// image is reflection-padded to a power of two and cropped back.
///
/// # Safety
/// `input` and `out` must each hold `h * w * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_derain(
    weights: *const FmWeights,
    input: *const f64,
    h: usize,
    w: usize,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        let wt = ref_arg(weights, "weights")?;
        let img = image_arg(input, h, w, "input")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let y = derain_image(&img, &wt.0)?;
        std::slice::from_raw_parts_mut(out, y.len()).copy_from_slice(y.data());
        Ok(())
    })
}

/// PSNR of the luma channels, in dB. Identical images give +infinity.
///
/// # Safety
/// `a` and `b` must each hold `h * w * 3` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_psnr_y(a: *const f64, b: *const f64, h: usize, w: usize, out: *mut f64) -> FmStatus {
    guard(|| {
        let (ta, tb) = (image_arg(a, h, w, "a")?, image_arg(b, h, w, "b")?);
        *out_arg(out, "out")? = psnr_y(&ta, &tb)?;
        Ok(())
    })
}

/// Mean SSIM of the luma channels. Needs `h, w >= 11`.
///
/// # Safety
/// `a` and `b` must each hold `h * w * 3` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_ssim_y(a: *const f64, b: *const f64, h: usize, w: usize, out: *mut f64) -> FmStatus {
    guard(|| {
        let (ta, tb) = (image_arg(a, h, w, "a")?, image_arg(b, h, w, "b")?);
        *out_arg(out, "out")? = ssim_y(&ta, &tb)?;
        Ok(())
    })
}

/// Builds the scan `variant` (e.g. `"progressive-zigzag"`) over an `h x w`
/// grid. Spectral variants visit only the Hermitian half.
///
/// # Safety
/// `variant` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_scan_order_new(
    variant: *const c_char,
    h: usize,
    w: usize,
    out: *mut *mut FmScanOrder,
) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let v: ScanVariant = str_arg(variant, "variant")?.parse()?;
        let order = ScanOrder::build(v, h, w)?;
        *out = Box::into_raw(Box::new(FmScanOrder(order.display_coords())));
        Ok(())
    })
}

/// # Safety
/// `order` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_scan_order_len(order: *const FmScanOrder, out: *mut usize) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(order, "order")?.0.len();
        Ok(())
    })
}

/// Copies the visiting order into `rows` and `cols`, which hold `capacity`
/// entries each. Fails with `InvalidArgument` when `capacity` is too small.
///
/// # Safety
/// `rows` and `cols` must each hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn fm_scan_order_coords(
    order: *const FmScanOrder,
    rows: *mut usize,
    cols: *mut usize,
    capacity: usize,
) -> FmStatus {
    guard(|| {
        let o = &ref_arg(order, "order")?.0;
        if rows.is_null() || cols.is_null() {
            return Err(Fail::Null("rows/cols"));
        }
        if capacity < o.len() {
            return Err(Error::InvalidArgument(format!("capacity {capacity} < {}", o.len())).into());
        }
        let (r, c) = (
            std::slice::from_raw_parts_mut(rows, o.len()),
            std::slice::from_raw_parts_mut(cols, o.len()),
        );
        for (i, &(y, x)) in o.iter().enumerate() {
            r[i] = y;
            c[i] = x;
        }
        Ok(())
    })
}

/// # Safety
/// `order` must be NULL or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn fm_scan_order_free(order: *mut FmScanOrder) {
    if !order.is_null() {
        drop(Box::from_raw(order));
    }
}
