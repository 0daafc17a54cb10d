//! Seeded synthetic point clouds and splitting.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{check_dim, invalid, Error, Result};
use crate::nn::checkpoint::format_float;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SpiralConfig {
    pub n_per_class: usize,
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Gaussian jitter before standardization.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self {
            n_per_class: 1000,
            theta_lo: PI,
            theta_hi: 4.0 * PI,
            noise_sigma: 0.02,
            seed: 7,
        }
    }
}

impl SpiralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(invalid("n_per_class", "must be at least 1"));
        }
        if !(self.theta_lo > 0.0) || !(self.theta_hi > self.theta_lo) || !self.theta_hi.is_finite() {
            return Err(invalid(
                "theta",
                format!("need 0 < theta_lo < theta_hi, got [{}, {}]", self.theta_lo, self.theta_hi),
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(invalid("noise_sigma", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    TwoSpirals(SpiralConfig),
    GaussianMixture {
        k_components: usize,
        n_per_class: usize,
        num_classes: usize,
        std: f64,
        seed: u64,
    },
    Split {
        test_fraction: f64,
        seed: u64,
        part: &'static str,
    },
    Imported,
}

/// Labelled point cloud; points are stored row-major, `dim_x` per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    dim_x: usize,
    num_classes: usize,
    points: Vec<S>,
    labels: Vec<usize>,
    pub provenance: Provenance,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        dim_x: usize,
        num_classes: usize,
        points: Vec<Vec<S>>,
        labels: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_dim("dataset labels", points.len(), labels.len())?;
        if dim_x == 0 {
            return Err(invalid("dim_x", "must be at least 1"));
        }
        let mut flat = Vec::with_capacity(points.len() * dim_x);
        for p in &points {
            check_dim("dataset point", dim_x, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(invalid("points", "non-finite coordinate"));
            }
            flat.extend_from_slice(p);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                num_classes,
            });
        }
        Ok(Self {
            dim_x,
            num_classes,
            points: flat,
            labels,
            provenance,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[S] {
        &self.points[i * self.dim_x..(i + 1) * self.dim_x]
    }

    pub fn points(&self) -> impl Iterator<Item = &[S]> {
        self.points.chunks(self.dim_x)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Points of one class, in dataset order.
    pub fn class_points(&self, class: usize) -> Vec<Vec<S>> {
        self.points()
            .zip(&self.labels)
            .filter(|(_, &l)| l == class)
            .map(|(p, _)| p.to_vec())
            .collect()
    }

    pub fn subset(&self, indices: &[usize], provenance: Provenance) -> Self {
        let mut points = Vec::with_capacity(indices.len() * self.dim_x);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            points.extend_from_slice(self.point(i));
            labels.push(self.labels[i]);
        }
        Self {
            dim_x: self.dim_x,
            num_classes: self.num_classes,
            points,
            labels,
            provenance,
        }
    }

    /// Per-coordinate (mean, population variance).
    pub fn moments(&self) -> Vec<(f64, f64)> {
        let n = self.len() as f64;
        (0..self.dim_x)
            .map(|c| {
                let mean = self.points().map(|p| p[c].as_f64()).sum::<f64>() / n;
                let var = self
                    .points()
                    .map(|p| (p[c].as_f64() - mean).powi(2))
                    .sum::<f64>()
                    / n;
                (mean, var)
            })
            .collect()
    }

    /// CSV with header `x0,...,x{d-1},label` and 17-digit floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in 0..self.dim_x {
            let _ = write!(out, "x{c},");
        }
        out.push_str("label\n");
        for (p, l) in self.points().zip(&self.labels) {
            for v in p {
                out.push_str(&format_float(v.as_f64()));
                out.push(',');
            }
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

/// Parsed point file: labels are present only if the header has a `label` column.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable<S> {
    pub dim_x: usize,
    pub points: Vec<Vec<S>>,
    pub labels: Option<Vec<usize>>,
}

/// Reads `x0,...,x{d-1}[,label]` CSV. Errors carry 1-based line numbers.
pub fn parse_point_csv<S: Scalar>(text: &str) -> Result<PointTable<S>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() || l.starts_with('#') => continue,
            Some((i, l)) => break (i + 1, l.trim()),
            None => return Err(Error::Parse { line: 1, reason: "missing header".into() }),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    let labelled = cols.last() == Some(&"label");
    let dim_x = cols.len() - usize::from(labelled);
    for (c, name) in cols[..dim_x].iter().enumerate() {
        if *name != format!("x{c}") {
            return Err(Error::Parse {
                line: header.0,
                reason: format!("expected column `x{c}`, found `{name}`"),
            });
        }
    }
    if dim_x == 0 {
        return Err(Error::Parse { line: header.0, reason: "no coordinate columns".into() });
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let p = fields[..dim_x]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(S::lit(v)),
                _ => Err(Error::Parse { line: line_no, reason: format!("bad coordinate `{f}`") }),
            })
            .collect::<Result<Vec<S>>>()?;
        points.push(p);
        if labelled {
            let l = fields[dim_x].parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("bad label `{}`", fields[dim_x]),
            })?;
            labels.push(l);
        }
    }
    Ok(PointTable {
        dim_x,
        points,
        labels: labelled.then_some(labels),
    })
}

/// Labelled CSV into a dataset with `num_classes` classes.
pub fn dataset_from_csv<S: Scalar>(text: &str, num_classes: usize) -> Result<Dataset<S>> {
    let table = parse_point_csv::<S>(text)?;
    let labels = table
        .labels
        .ok_or_else(|| invalid("csv", "dataset file has no `label` column"))?;
    Dataset::new(table.dim_x, num_classes, table.points, labels, Provenance::Imported)
}

/// Point on the class-A arm at angle `theta`; class B is its negation.
pub fn spiral_arm_point(theta: f64, theta_hi: f64, class: usize) -> [f64; 2] {
    let r = theta / theta_hi;
    let p = [r * theta.cos(), r * theta.sin()];
    if class == 0 {
        p
    } else {
        [-p[0], -p[1]]
    }
}

/// Two interleaved spiral arms, class B being class A rotated by π,
/// standardized to zero mean and unit variance per coordinate.
pub fn two_spirals<S: Scalar>(config: &SpiralConfig) -> Result<Dataset<S>> {
    config.validate()?;
    let raw = raw_spirals(config);
    let standardized = standardize(&raw.0);
    Dataset::new(
        2,
        2,
        standardized
            .into_iter()
            .map(|p| p.iter().map(|&v| S::lit(v)).collect())
            .collect(),
        raw.1,
        Provenance::TwoSpirals(config.clone()),
    )
}

fn raw_spirals(config: &SpiralConfig) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = SeededRng::new(config.seed);
    let n = config.n_per_class;
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for class in 0..2 {
        for _ in 0..n {
            let u = rng.uniform();
            let theta = config.theta_lo + (config.theta_hi - config.theta_lo) * u;
            let [px, py] = spiral_arm_point(theta, config.theta_hi, class);
            let nx = config.noise_sigma * rng.normal();
            let ny = config.noise_sigma * rng.normal();
            points.push([px + nx, py + ny]);
            labels.push(class);
        }
    }
    (points, labels)
}

/// Shift and scale each coordinate to zero mean and unit population variance.
pub fn standardize<const D: usize>(points: &[[f64; D]]) -> Vec<[f64; D]> {
    let n = points.len() as f64;
    let mut out = points.to_vec();
    for c in 0..D {
        let mean = points.iter().map(|p| p[c]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for p in out.iter_mut() {
            p[c] = (p[c] - mean) / sd;
        }
    }
    out
}

pub const MIXTURE_STD: f64 = 0.05;

/// Component means of [`gaussian_mixture`]: equally spaced on the unit circle.
pub fn mixture_means(k_components: usize) -> Vec<[f64; 2]> {
    (0..k_components)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / k_components as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Isotropic Gaussian blobs (std 0.05) on the unit circle. Component `j`
/// belongs to class `j % num_classes`; each class spreads its points over
/// its components round-robin.
pub fn gaussian_mixture<S: Scalar>(
    k_components: usize,
    n_per_class: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Dataset<S>> {
    if num_classes == 0 || n_per_class == 0 {
        return Err(invalid("counts", "num_classes and n_per_class must be positive"));
    }
    if k_components < num_classes {
        return Err(invalid(
            "k_components",
            format!("need at least num_classes = {num_classes}, got {k_components}"),
        ));
    }
    let means = mixture_means(k_components);
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(n_per_class * num_classes);
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for class in 0..num_classes {
        let comps: Vec<usize> = (class..k_components).step_by(num_classes).collect();
        for i in 0..n_per_class {
            let m = means[comps[i % comps.len()]];
            let p = vec![
                S::lit(m[0] + MIXTURE_STD * rng.normal()),
                S::lit(m[1] + MIXTURE_STD * rng.normal()),
            ];
            points.push(p);
            labels.push(class);
        }
    }
    Dataset::new(
        2,
        num_classes,
        points,
        labels,
        Provenance::GaussianMixture {
            k_components,
            n_per_class,
            num_classes,
            std: MIXTURE_STD,
            seed,
        },
    )
}

/// Seeded shuffle, then the first `round(n · test_fraction)` points go to test.
pub fn split<S: Scalar>(
    dataset: &Dataset<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(
            "test_fraction",
            format!("must lie strictly between 0 and 1, got {test_fraction}"),
        ));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let n_test = (dataset.len() as f64 * test_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    let prov = |part| Provenance::Split {
        test_fraction,
        seed,
        part,
    };
    Ok((
        dataset.subset(train_idx, prov("train")),
        dataset.subset(test_idx, prov("test")),
    ))
}
