use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::fourier::fft2;
use crate::tensor::Tensor;

/// `mean |out - gt| + lambda * mean |F(out) - F(gt)|`, the second term over
/// complex moduli of the unitary 2D spectra.
pub fn loss_total(out: &Tensor, gt: &Tensor, lambda: f64) -> Result<f64> {
    out.expect_same_shape(gt, "loss_total")?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let pixel = out.sub(gt)?.map(f64::abs).mean();
    let (fo, fg) = (fft2(out)?, fft2(gt)?);
    let dre = fo.re.sub(&fg.re)?;
    let dim = fo.im.sub(&fg.im)?;
    let freq = dre.zip_map(&dim, f64::hypot)?.mean();
    Ok(pixel + lambda * freq)
}

/// [`loss_total`] recorded on a graph. The spectrum of the difference is
/// used, which equals the difference of spectra by linearity.
pub fn loss_total_graph(g: &mut Graph, out: Var, gt: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = g.sub(out, gt)?;
    let a = g.abs(d);
    let pixel = g.mean(a);
    let s = g.fft2(d)?;
    let m = g.amplitude(s)?;
    let freq = g.mean(m);
    let weighted = g.scale(freq, lambda);
    g.add(pixel, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_zero() {
        let x = Tensor::from_fn(&[4, 4, 3], |i| (i as f64 * 0.37).sin()).unwrap();
        assert_eq!(loss_total(&x, &x, 0.02).unwrap(), 0.0);
    }

    #[test]
    fn zero_lambda_is_mean_abs() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::uniform(&[8, 8, 3], 0.0, 1.0, &mut r).unwrap();
        let b = Tensor::uniform(&[8, 8, 3], 0.0, 1.0, &mut r).unwrap();
        let direct: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 192.0;
        assert!((loss_total(&a, &b, 0.0).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn graph_matches_pure() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::uniform(&[8, 4, 2], 0.0, 1.0, &mut r).unwrap();
        let b = Tensor::uniform(&[8, 4, 2], 0.0, 1.0, &mut r).unwrap();
        let mut g = Graph::new();
        let (va, vb) = (g.leaf(a.clone()), g.leaf(b.clone()));
        let l = loss_total_graph(&mut g, va, vb, 0.02).unwrap();
        assert!((g.value(l).data()[0] - loss_total(&a, &b, 0.02).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn mismatch_rejected() {
        let a = Tensor::zeros(&[4, 4, 3]).unwrap();
        let b = Tensor::zeros(&[4, 4, 1]).unwrap();
        assert!(loss_total(&a, &b, 0.02).is_err());
        assert!(loss_total(&a, &a, -1.0).is_err());
    }
}
