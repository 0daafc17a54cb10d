//! Accuracy, step sweeps, MMD and the per-class velocity-error classifier.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::codec::ClassCodebook;
use crate::error::{check_dim, invalid, Error, Result};
use crate::flow::{draw_noise, FlowModel, Objective};
use crate::nn::checkpoint::format_float;
use crate::nn::Matrix;
use crate::ode::{classify, Scheme, SolverConfig, VelocityField};
use crate::rng::SeededRng;
use crate::scalar::{squared_distance, Scalar};

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_dim("accuracy labels", predictions.len(), labels.len())?;
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub steps: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub scheme: Scheme,
    pub trajectories: usize,
}

impl SweepResult {
    /// `steps,accuracy` with 17-digit accuracies.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("steps,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{}", r.steps, format_float(r.accuracy));
        }
        out
    }

    pub fn accuracy_at(&self, steps: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.steps == steps).map(|r| r.accuracy)
    }
}

/// Classifies every test point at each step count.
///
/// Each row restarts from the same random stream, so all step counts see the
/// same initial label noise and differ only in the integration.
#[allow(clippy::too_many_arguments)]
pub fn sweep_steps<S, F>(
    field: &F,
    codebook: &ClassCodebook<S>,
    points: &[Vec<S>],
    labels: &[usize],
    steps_list: &[usize],
    scheme: Scheme,
    seed: u64,
    trajectories: usize,
) -> Result<SweepResult>
where
    S: Scalar,
    F: VelocityField<S> + ?Sized,
{
    check_dim("sweep labels", points.len(), labels.len())?;
    if steps_list.is_empty() {
        return Err(Error::Empty("steps list"));
    }
    if steps_list.windows(2).any(|w| w[0] >= w[1]) || steps_list[0] == 0 {
        return Err(invalid("steps_list", "must be positive and strictly increasing"));
    }
    let mut rows = Vec::with_capacity(steps_list.len());
    for &steps in steps_list {
        let mut rng = SeededRng::new(seed);
        let cfg = SolverConfig::with_scheme(scheme, steps);
        let preds = points
            .iter()
            .map(|x| classify(field, codebook, x, &mut rng, &cfg, trajectories).map(|c| c.class_idx))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow {
            steps,
            accuracy: accuracy(&preds, labels)?,
        });
    }
    Ok(SweepResult {
        rows,
        seed,
        scheme,
        trajectories,
    })
}

/// Median of all pairwise Euclidean distances within `points`.
pub fn median_pairwise_distance<S: Scalar>(points: &[Vec<S>]) -> Result<S> {
    if points.len() < 2 {
        return Err(invalid("points", "need at least two points"));
    }
    let mut d = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in 0..i {
            d.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = d.len();
    Ok(if m % 2 == 1 {
        d[m / 2]
    } else {
        (d[m / 2 - 1] + d[m / 2]) / S::lit(2.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdEstimate<S> {
    pub mmd2: S,
    pub bandwidth: S,
}

#[inline]
fn rbf<S: Scalar>(a: &[S], b: &[S], inv_two_h2: S) -> S {
    (-squared_distance(a, b) * inv_two_h2).exp()
}

/// Total order on point sets, used to fix the evaluation order of the cross
/// term so that swapping the arguments gives a bit-identical result.
fn set_order<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn within_sum<S: Scalar>(a: &[Vec<S>], inv_two_h2: S, diagonal: bool) -> S {
    let mut s = S::zero();
    for i in 0..a.len() {
        for j in 0..i {
            s += rbf(&a[i], &a[j], inv_two_h2);
        }
    }
    s = s + s;
    if diagonal {
        s += S::count(a.len());
    }
    s
}

fn cross_sum<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], inv_two_h2: S) -> S {
    let (p, q) = if set_order(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let mut s = S::zero();
    for u in p {
        for v in q {
            s += rbf(u, v, inv_two_h2);
        }
    }
    s
}

fn resolve_bandwidth<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], bandwidth: Option<S>) -> Result<S> {
    let h = match bandwidth {
        Some(h) => h,
        None => {
            let pooled: Vec<Vec<S>> = a.iter().chain(b).cloned().collect();
            median_pairwise_distance(&pooled)?
        }
    };
    if !(h > S::zero()) || !h.is_finite() {
        return Err(invalid("bandwidth", format!("must be positive, got {h}")));
    }
    Ok(h)
}

fn check_sets<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(invalid("mmd sets", "each set needs at least two points"));
    }
    let d = a[0].len();
    for p in a.iter().chain(b) {
        check_dim("mmd point", d, p.len())?;
    }
    Ok(())
}

/// Unbiased MMD² with the RBF kernel `exp(-|a-b|² / 2h²)`. Without an explicit
/// bandwidth, `h` is the median pairwise distance over the pooled sets.
pub fn mmd_rbf<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], bandwidth: Option<S>) -> Result<MmdEstimate<S>> {
    check_sets(a, b)?;
    let h = resolve_bandwidth(a, b, bandwidth)?;
    let inv = S::one() / (S::lit(2.0) * h * h);
    let (m, n) = (S::count(a.len()), S::count(b.len()));
    let kaa = within_sum(a, inv, false) / (m * (m - S::one()));
    let kbb = within_sum(b, inv, false) / (n * (n - S::one()));
    let kab = cross_sum(a, b, inv) / (m * n);
    Ok(MmdEstimate {
        mmd2: (kaa + kbb) - S::lit(2.0) * kab,
        bandwidth: h,
    })
}

/// Biased (V-statistic) MMD², diagonal terms included.
pub fn mmd_rbf_biased<S: Scalar>(
    a: &[Vec<S>],
    b: &[Vec<S>],
    bandwidth: Option<S>,
) -> Result<MmdEstimate<S>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("mmd set"));
    }
    let h = resolve_bandwidth(a, b, bandwidth)?;
    let inv = S::one() / (S::lit(2.0) * h * h);
    let (m, n) = (S::count(a.len()), S::count(b.len()));
    let kaa = within_sum(a, inv, true) / (m * m);
    let kbb = within_sum(b, inv, true) / (n * n);
    let kab = cross_sum(a, b, inv) / (m * n);
    Ok(MmdEstimate {
        mmd2: (kaa + kbb) - S::lit(2.0) * kab,
        bandwidth: h,
    })
}

/// One line of an MMD report.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdRow {
    pub pair: String,
    pub mmd2: f64,
    pub bandwidth: f64,
}

/// `pair,mmd2,bandwidth`
pub fn mmd_report_csv(rows: &[MmdRow]) -> String {
    let mut out = String::from("pair,mmd2,bandwidth\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.pair, format_float(r.mmd2), format_float(r.bandwidth));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
}

impl Posterior {
    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Softmax of negated per-class errors under a uniform class prior.
pub fn posterior_from_errors(errors: &[f64]) -> Result<Posterior> {
    if errors.is_empty() {
        return Err(Error::Empty("class errors"));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(invalid("errors", "NaN class error"));
    }
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = errors.iter().map(|&e| (-(e - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(Posterior {
        probs: weights.iter().map(|w| w / total).collect(),
    })
}

/// Per-class mean squared velocity error of the model on paths anchored at
/// `x_obs` and each class center; the `(t, ξ)` draws are shared by all classes.
pub fn class_velocity_errors<S: Scalar>(
    model: &FlowModel<S>,
    codebook: &ClassCodebook<S>,
    x_obs: &[S],
    n_mc: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let layout = model.layout;
    check_dim("x_obs", layout.dim_x, x_obs.len())?;
    check_dim("codebook dim_y", layout.dim_y, codebook.dim_y())?;
    if n_mc == 0 {
        return Err(invalid("n_mc", "must be at least 1"));
    }
    let draws = draw_noise::<S>(n_mc, layout.dim_x, layout.dim_y, rng);
    let baseline = model.objective == Objective::ConditionalBaseline;
    let penalised = if baseline {
        layout.dim_x
    } else {
        layout.output_width()
    };

    let mut errors = Vec::with_capacity(codebook.num_classes());
    for center in codebook.centers() {
        let mut inputs = Matrix::zeros(n_mc, layout.input_width());
        let mut targets = Matrix::zeros(n_mc, layout.output_width());
        for (r, d) in draws.iter().enumerate() {
            let s = S::one() - d.t;
            let xt: Vec<S> = d.xi_x.iter().zip(x_obs).map(|(&n, &x)| s * n + d.t * x).collect();
            let yt: Vec<S> = if baseline {
                center.clone()
            } else {
                center.iter().zip(&d.xi_y).map(|(&c, &n)| s * c + d.t * n).collect()
            };
            layout.write_input_row(&xt, &yt, d.t, inputs.row_mut(r));
            let row = targets.row_mut(r);
            for (k, (&x, &n)) in x_obs.iter().zip(&d.xi_x).enumerate() {
                row[k] = x - n;
            }
            for (k, (&n, &c)) in d.xi_y.iter().zip(center).enumerate() {
                row[layout.dim_x + k] = n - c;
            }
        }
        let out = model.raw_velocity_batch(&inputs)?;
        let mut err = S::zero();
        for r in 0..n_mc {
            for c in 0..penalised {
                let diff = out.row(r)[c] - targets.row(r)[c];
                err += diff * diff;
            }
        }
        errors.push((err / S::count(n_mc * penalised)).as_f64());
    }
    Ok(errors)
}

/// Generative Bayes classifier: softmax over classes of the negated velocity error.
pub fn bayes_classify<S: Scalar>(
    model: &FlowModel<S>,
    codebook: &ClassCodebook<S>,
    x_obs: &[S],
    n_mc: usize,
    rng: &mut SeededRng,
) -> Result<Posterior> {
    posterior_from_errors(&class_velocity_errors(model, codebook, x_obs, n_mc, rng)?)
}
