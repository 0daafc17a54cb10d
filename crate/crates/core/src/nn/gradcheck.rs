//! Central finite differences, the independent oracle for the analytic backward pass.

use crate::error::{check_dim, Result};
use crate::nn::{MlpGrads, MlpParams};
use crate::scalar::Scalar;

/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate of `point`.
pub fn finite_diff<S: Scalar>(mut f: impl FnMut(&[S]) -> S, point: &[S], h: S) -> Vec<S> {
    let mut p = point.to_vec();
    let two_h = h + h;
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let plus = f(&p);
            p[i] = orig - h;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / two_h
        })
        .collect()
}

/// Finite-difference gradient of `loss` with respect to every network parameter.
pub fn finite_diff_grad<S: Scalar>(
    mut loss: impl FnMut(&MlpParams<S>) -> S,
    params: &MlpParams<S>,
    h: S,
) -> MlpGrads<S> {
    let mut probe = params.clone();
    let flat = finite_diff(
        |p| {
            probe.set_flat(p).expect("flat length is fixed");
            loss(&probe)
        },
        &params.to_flat(),
        h,
    );
    let mut grads = MlpGrads::zeros_like(params);
    let mut offset = 0;
    for s in grads.slices_mut() {
        let n = s.len();
        s.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    grads
}

/// Relative error with a floor on the denominator so that coordinates whose
/// true gradient is zero are judged by absolute error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Worst coordinate of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCoordinate {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_tensor: Vec<WorstCoordinate>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn compare_grads<S: Scalar>(
    analytic: &MlpGrads<S>,
    numeric: &MlpGrads<S>,
) -> Result<GradCheckReport> {
    let a = analytic.slices();
    let n = numeric.slices();
    check_dim("gradient tensors", a.len(), n.len())?;
    let mut per_tensor = Vec::with_capacity(a.len());
    let mut max_rel_error = 0.0f64;
    for (k, (sa, sn)) in a.iter().zip(&n).enumerate() {
        check_dim("gradient tensor length", sa.len(), sn.len())?;
        let mut worst = WorstCoordinate {
            layer: k / 2,
            kind: if k % 2 == 0 {
                ParamKind::Weight
            } else {
                ParamKind::Bias
            },
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_error: 0.0,
        };
        for (i, (&ga, &gn)) in sa.iter().zip(sn.iter()).enumerate() {
            let (ga, gn) = (ga.as_f64(), gn.as_f64());
            let e = relative_error(ga, gn);
            if e > worst.rel_error || i == 0 || e.is_nan() {
                worst.index = i;
                worst.analytic = ga;
                worst.numeric = gn;
                worst.rel_error = if e.is_nan() { f64::INFINITY } else { e };
            }
        }
        max_rel_error = max_rel_error.max(worst.rel_error);
        per_tensor.push(worst);
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Matrix};
    use crate::rng::SeededRng;

    #[test]
    fn quadratic_derivative() {
        let g = finite_diff(|p: &[f64]| p[0] * p[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff(|_: &[f64]| 4.2, &[1.0, -2.0, 0.5], 1e-5);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    /// Sum of squared outputs against a fixed random target.
    fn mse_setup(widths: &[usize], seed: u64) -> (MlpParams<f64>, Matrix<f64>, Matrix<f64>) {
        let mut rng = SeededRng::new(seed);
        let p = MlpParams::init(widths, Activation::Silu, &mut rng).unwrap();
        let batch = 5;
        let x = Matrix::from_vec(batch, widths[0], rng.normal_vec(batch * widths[0])).unwrap();
        let out_w = *widths.last().unwrap();
        let y = Matrix::from_vec(batch, out_w, rng.normal_vec(batch * out_w)).unwrap();
        (p, x, y)
    }

    fn mse(p: &MlpParams<f64>, x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
        let out = p.predict(x).unwrap();
        out.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / out.as_slice().len() as f64
    }

    fn analytic(p: &MlpParams<f64>, x: &Matrix<f64>, y: &Matrix<f64>) -> MlpGrads<f64> {
        let (out, cache) = p.forward(x).unwrap();
        let n = out.as_slice().len() as f64;
        let mut g = out.clone();
        for (gv, &t) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *gv = 2.0 * (*gv - t) / n;
        }
        p.backward(&cache, &g).unwrap().0
    }

    #[test]
    fn backward_matches_finite_differences_small_net() {
        let (p, x, y) = mse_setup(&[2, 2, 2], 3);
        let numeric = finite_diff_grad(|q| mse(q, &x, &y), &p, 1e-5);
        let report = compare_grads(&analytic(&p, &x, &y), &numeric).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
        assert_eq!(report.per_tensor.len(), 4);
    }

    #[test]
    fn backward_matches_finite_differences_three_layers() {
        for (seed, act) in [(1, Activation::Silu), (2, Activation::Tanh)] {
            let mut rng = SeededRng::new(seed);
            let p = MlpParams::init(&[4, 16, 16, 3], act, &mut rng).unwrap();
            let x = Matrix::from_vec(6, 4, rng.normal_vec(24)).unwrap();
            let y = Matrix::from_vec(6, 3, rng.normal_vec(18)).unwrap();
            let numeric = finite_diff_grad(|q| mse(q, &x, &y), &p, 1e-5);
            let report = compare_grads(&analytic(&p, &x, &y), &numeric).unwrap();
            assert!(report.passes(1e-4), "{act}: {}", report.max_rel_error);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (p, x, y) = mse_setup(&[3, 8, 2], 7);
        let (out, cache) = p.forward(&x).unwrap();
        let n = out.as_slice().len() as f64;
        let mut g = out.clone();
        for (gv, &t) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *gv = 2.0 * (*gv - t) / n;
        }
        let (_, dx) = p.backward(&cache, &g).unwrap();
        let numeric = finite_diff(
            |flat| mse(&p, &Matrix::from_vec(x.rows(), x.cols(), flat.to_vec()).unwrap(), &y),
            x.as_slice(),
            1e-5,
        );
        for (a, b) in dx.as_slice().iter().zip(&numeric) {
            assert!(relative_error(*a, *b) < 1e-4);
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (p, x, y) = mse_setup(&[2, 4, 2], 3);
        let numeric = finite_diff_grad(|q| mse(q, &x, &y), &p, 1e-5);
        let mut bad = analytic(&p, &x, &y);
        bad.layers[0].weight[(1, 0)] += 1e-2;
        let report = compare_grads(&bad, &numeric).unwrap();
        assert!(!report.passes(1e-4));
        assert_eq!(report.per_tensor[0].index, 2);
    }
}
