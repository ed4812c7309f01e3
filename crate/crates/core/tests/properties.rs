//! Property tests over randomly drawn shapes and values.

use fouriermamba::fourier::{
    amp_phase, fft2, fft_channel, half_values, hermitian_reconstruct, ifft2, ifft_channel, recompose,
};
use fouriermamba::harness::image_io::{crop, pad_pow2};
use fouriermamba::harness::metrics::{psnr_y, ssim_y};
use fouriermamba::harness::rain::{add_rain, clean_image, streak_layer, RainParams};
use fouriermamba::net::loss_total;
use fouriermamba::rng;
use fouriermamba::ssm::{selective_scan_parallel, selective_scan_seq, SsmParams};
use fouriermamba::{ScanOrder, ScanVariant, Tensor};
use proptest::prelude::*;

fn image(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[h, w, c], 0.0, 1.0, &mut rng::seeded(seed)).unwrap()
}

fn pow2() -> impl Strategy<Value = usize> {
    (1u32..=5).prop_map(|k| 1usize << k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft2_roundtrip_and_parseval(h in pow2(), w in pow2(), c in 1usize..4, seed in any::<u64>()) {
        let x = image(h, w, c, seed);
        let s = fft2(&x).unwrap();
        prop_assert!(ifft2(&s).unwrap().max_abs_diff(&x).unwrap() < 1e-10);
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let es: f64 = s.re.data().iter().chain(s.im.data()).map(|v| v * v).sum();
        prop_assert!((ex - es).abs() <= 1e-9 * ex.max(1.0));
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric(h in pow2(), w in pow2(), seed in any::<u64>()) {
        let s = fft2(&image(h, w, 2, seed)).unwrap();
        for r in 0..h {
            for c in 0..w {
                for ch in 0..2 {
                    let d = s.get((h - r) % h, (w - c) % w, ch) - s.get(r, c, ch).conj();
                    prop_assert!(d.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn half_spectrum_determines_the_whole(h in pow2(), w in pow2(), seed in any::<u64>()) {
        let s = fft2(&image(h, w, 3, seed)).unwrap();
        let (re, im) = half_values(&s).unwrap();
        prop_assert_eq!(re.shape()[0], h * w / 2 + 2);
        let full = hermitian_reconstruct(h, w, &re, &im).unwrap();
        prop_assert!(full.re.max_abs_diff(&s.re).unwrap() < 1e-9);
        prop_assert!(full.im.max_abs_diff(&s.im).unwrap() < 1e-9);
    }

    #[test]
    fn recompose_inverts_amp_phase(h in pow2(), w in pow2(), seed in any::<u64>()) {
        let s = fft2(&image(h, w, 2, seed)).unwrap();
        let back = recompose(&amp_phase(&s)).unwrap();
        prop_assert!(back.re.max_abs_diff(&s.re).unwrap() < 1e-12);
        prop_assert!(back.im.max_abs_diff(&s.im).unwrap() < 1e-12);
    }

    #[test]
    fn channel_dc_is_the_mean(k in 1u32..=6, seed in any::<u64>()) {
        let c = 1usize << k;
        let y = image(1, 1, c, seed);
        let z = fft_channel(&y).unwrap();
        let mean = y.data().iter().sum::<f64>() / c as f64;
        prop_assert!((z.bins[0].re - mean).abs() < 1e-12);
        prop_assert_eq!(z.bins[0].im, 0.0);
        prop_assert!(ifft_channel(&z).unwrap().max_abs_diff(&y).unwrap() < 1e-10);
    }

    #[test]
    fn scans_roundtrip_exactly(h in pow2(), w in pow2(), vi in 0usize..8, seed in any::<u64>()) {
        let v = ScanVariant::ALL[vi];
        prop_assume!(!(v.is_spectral() && (h < 2 || w < 2)));
        let o = ScanOrder::build(v, h, w).unwrap();
        let vals = if v.is_classic() { image(h, w, 3, seed) } else { Tensor::uniform(&[o.len(), 3], -1.0, 1.0, &mut rng::seeded(seed)).unwrap() };
        let seq = o.encode(&vals).unwrap();
        prop_assert_eq!(seq.shape(), &[o.len(), 3][..]);
        prop_assert_eq!(o.decode(&seq).unwrap(), vals);
        let mut p = o.permutation().to_vec();
        p.sort_unstable();
        prop_assert!(p.iter().enumerate().all(|(i, &v)| i == v));
    }

    #[test]
    fn parallel_scan_equals_sequential(l in 1usize..200, c in 1usize..6, n in 1usize..9, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let p = SsmParams::init(c, n, &mut r).unwrap();
        let u = Tensor::uniform(&[l, c], -2.0, 2.0, &mut r).unwrap();
        let a = selective_scan_seq(&p, &u).unwrap();
        let b = selective_scan_parallel(&p, &u).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-10 * a.max_abs().max(1e-300));
    }

    #[test]
    fn pad_then_crop_is_identity(h in 1usize..40, w in 1usize..40, min in 1usize..20, seed in any::<u64>()) {
        let x = image(h, w, 3, seed);
        let (p, (oh, ow)) = pad_pow2(&x, min).unwrap();
        let (ph, pw, _) = p.dims3().unwrap();
        prop_assert!(ph.is_power_of_two() && pw.is_power_of_two() && ph >= h.max(min) && pw >= w.max(min));
        prop_assert_eq!((oh, ow), (h, w));
        prop_assert_eq!(crop(&p, h, w).unwrap(), x);
    }

    #[test]
    fn rain_adds_at_most_the_peak_intensity(seed in any::<u64>(), count in 0usize..40, hi in 0.0f64..1.0) {
        let params = RainParams { count, intensity: [0.0, hi], ..RainParams::default() };
        let clean = clean_image(24, 20, &mut rng::seeded(seed)).unwrap();
        let layer = streak_layer(24, 20, &params, &mut rng::stream(seed, 1)).unwrap();
        prop_assert!(layer.iter().all(|&v| (0.0..=hi).contains(&v)));
        let rainy = add_rain(&clean, &params, &mut rng::stream(seed, 1)).unwrap();
        for (i, (r, c)) in rainy.data().iter().zip(clean.data()).enumerate() {
            prop_assert!(*r >= *c && (0.0..=1.0).contains(r));
            prop_assert!(*r - *c <= layer[i / 3] + 1e-15);
        }
    }

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>(), h in 11usize..24, w in 11usize..24) {
        let (a, b) = (image(h, w, 3, seed), image(h, w, 3, seed ^ 1));
        prop_assert_eq!(psnr_y(&a, &b).unwrap(), psnr_y(&b, &a).unwrap());
        let (s1, s2) = (ssim_y(&a, &b).unwrap(), ssim_y(&b, &a).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-15 && s1 <= 1.0);
    }

    #[test]
    fn loss_is_nonnegative_and_zero_on_match(h in pow2(), w in pow2(), seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let (a, b) = (image(h, w, 3, seed), image(h, w, 3, seed ^ 7));
        prop_assert!(loss_total(&a, &b, lambda).unwrap() >= 0.0);
        prop_assert_eq!(loss_total(&a, &a, lambda).unwrap(), 0.0);
    }
}
