use std::ffi::{CStr, CString};
use std::ptr;

use fouriermamba_ffi::*;

fn last_error() -> String {
    let p = fm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn gradient(h: usize, w: usize) -> Vec<f64> {
    (0..h * w * 3).map(|i| ((i * 7) % 97) as f64 / 120.0).collect()
}

#[test]
fn weights_roundtrip_and_derain() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.fmw").to_str().unwrap()).unwrap();
    let preset = CString::new("toy").unwrap();
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(fm_weights_init(preset.as_ptr(), 3, &mut w), FmStatus::Ok);
        assert_eq!(fm_weights_save(w, path.as_ptr()), FmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fm_weights_load(path.as_ptr(), &mut back), FmStatus::Ok);
        let mut side = 0usize;
        assert_eq!(fm_weights_min_side(back, &mut side), FmStatus::Ok);
        assert!(side >= 1);

        let (h, w_) = (13, 20);
        let img = gradient(h, w_);
        let mut a = vec![0.0; img.len()];
        let mut b = vec![0.0; img.len()];
        assert_eq!(fm_derain(w, img.as_ptr(), h, w_, a.as_mut_ptr()), FmStatus::Ok);
        assert_eq!(fm_derain(back, img.as_ptr(), h, w_, b.as_mut_ptr()), FmStatus::Ok);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        fm_weights_free(w);
        fm_weights_free(back);
    }
}

#[test]
fn metrics() {
    let img = gradient(16, 16);
    let mut noisy = img.clone();
    noisy[5] += 0.1;
    let mut v = 0.0;
    unsafe {
        assert_eq!(fm_psnr_y(img.as_ptr(), img.as_ptr(), 16, 16, &mut v), FmStatus::Ok);
        assert_eq!(v, f64::INFINITY);
        assert_eq!(fm_psnr_y(img.as_ptr(), noisy.as_ptr(), 16, 16, &mut v), FmStatus::Ok);
        assert!(v.is_finite() && v > 30.0);
        assert_eq!(fm_ssim_y(img.as_ptr(), img.as_ptr(), 16, 16, &mut v), FmStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(fm_ssim_y(img.as_ptr(), img.as_ptr(), 8, 8, &mut v), FmStatus::Shape);
        assert!(last_error().contains("SSIM"));
    }
}

#[test]
fn scan_order_coords() {
    let name = CString::new("progressive-zigzag").unwrap();
    unsafe {
        let mut o = ptr::null_mut();
        assert_eq!(fm_scan_order_new(name.as_ptr(), 8, 8, &mut o), FmStatus::Ok);
        let mut n = 0;
        assert_eq!(fm_scan_order_len(o, &mut n), FmStatus::Ok);
        assert_eq!(n, 34);
        let (mut r, mut c) = (vec![0usize; n], vec![0usize; n]);
        assert_eq!(
            fm_scan_order_coords(o, r.as_mut_ptr(), c.as_mut_ptr(), n - 1),
            FmStatus::InvalidArgument
        );
        assert_eq!(fm_scan_order_coords(o, r.as_mut_ptr(), c.as_mut_ptr(), n), FmStatus::Ok);
        assert_eq!((r[0], c[0]), (4, 4));
        fm_scan_order_free(o);

        let odd = CString::new("bilateral-zigzag").unwrap();
        assert_eq!(fm_scan_order_new(odd.as_ptr(), 6, 8, &mut o), FmStatus::NotPowerOfTwo);
        let bad = CString::new("spiral").unwrap();
        assert_ne!(fm_scan_order_new(bad.as_ptr(), 8, 8, &mut o), FmStatus::Ok);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(fm_weights_init(ptr::null(), 0, &mut w), FmStatus::NullPointer);
        assert!(last_error().contains("preset"));
        let nope = CString::new("huge").unwrap();
        assert_eq!(fm_weights_init(nope.as_ptr(), 0, &mut w), FmStatus::InvalidArgument);
        let missing = CString::new("/nonexistent/w.fmw").unwrap();
        assert_eq!(fm_weights_load(missing.as_ptr(), &mut w), FmStatus::Io);
        assert!(w.is_null());
        fm_weights_free(ptr::null_mut());
        fm_scan_order_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(fm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/fouriermamba.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("FM_STATUS_OK = 0"));
}
