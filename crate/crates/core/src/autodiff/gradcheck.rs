use rand::seq::index::sample;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckEntry {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: Option<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(build: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let root = build(&mut g, &vars)?;
    let v = g.value(root);
    if v.len() != 1 {
        return Err(Error::invalid(format!(
            "grad_check needs a scalar output, got {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

/// Compares reverse-mode gradients of `build` against central differences.
///
/// `build` receives one leaf per entry of `inputs` and must return a scalar.
/// At most `samples` entries (drawn without replacement across all inputs
/// by a generator seeded with `seed`) are perturbed; all entries are checked
/// when there are fewer.
pub fn grad_check<F>(build: F, inputs: &[Tensor], samples: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let root = build(&mut g, &vars)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();

    let offsets: Vec<usize> = inputs
        .iter()
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += t.len();
            Some(o)
        })
        .collect();
    let total: usize = inputs.iter().map(Tensor::len).sum();
    let picks: Vec<usize> = if total <= samples {
        (0..total).collect()
    } else {
        let mut rng = crate::rng::seeded(seed);
        let mut v = sample(&mut rng, total, samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut perturbed = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for flat in picks {
        let input = offsets.partition_point(|&o| o <= flat) - 1;
        let index = flat - offsets[input];
        let x0 = inputs[input].data()[index];
        let mut at = |dx: f64| -> Result<f64> {
            perturbed[input].data_mut()[index] = x0 + dx;
            let f = evaluate(&build, &perturbed);
            perturbed[input].data_mut()[index] = x0;
            f
        };
        let numeric = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
        let a = analytic[input].data()[index];
        let err = rel_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(GradCheckEntry {
                input,
                index,
                analytic: a,
                numeric,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let r = grad_check(
            |g, v| {
                let sq = g.mul(v[0], v[0])?;
                Ok(g.sum(sq))
            },
            &[x],
            50,
            0,
        )
        .unwrap();
        assert_eq!(r.checked, 4);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn rel_error_formula() {
        assert_eq!(rel_error(1.0, 2.0), 0.5);
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1e-9, 0.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn samples_across_inputs() {
        let a = Tensor::from_fn(&[30], |i| i as f64 * 0.1).unwrap();
        let b = Tensor::from_fn(&[40], |i| 1.0 - i as f64 * 0.05).unwrap();
        let r = grad_check(
            |g, v| {
                let e = g.exp(v[1]);
                let s = g.sum(e);
                let t = g.sum(v[0]);
                g.add(s, t)
            },
            &[a, b],
            50,
            3,
        )
        .unwrap();
        assert_eq!(r.checked, 50);
        assert!(r.passes(1e-6), "{r:?}");
    }
}
