use symmflow::datasets::{dataset_from_csv, gaussian_mixture, mixture_means, split, two_spirals, SpiralConfig, MIXTURE_STD};
use symmflow::Dataset;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Leave-one-out 1-NN label agreement, brute force.
fn loo_purity(ds: &Dataset) -> f64 {
    let pts: Vec<&[f64]> = ds.points().collect();
    let labels = ds.labels();
    let mut hits = 0;
    for i in 0..pts.len() {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..pts.len() {
            if i != j {
                let d = sq(pts[i], pts[j]);
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
        if labels[best.1] == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / pts.len() as f64
}

#[test]
fn default_spirals_are_nearest_neighbour_separable() {
    let ds: Dataset = two_spirals(&SpiralConfig::default()).unwrap();
    assert_eq!(ds.len(), 2000);
    let purity = loo_purity(&ds);
    assert!(purity >= 0.99, "1-NN purity {purity}");
}

#[test]
fn default_spirals_are_standardized() {
    let ds: Dataset = two_spirals(&SpiralConfig::default()).unwrap();
    for (mean, var) in ds.moments() {
        assert!(mean.abs() < 1e-12, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-12, "var {var}");
    }
}

#[test]
fn spirals_are_reproducible_and_seed_sensitive() {
    let cfg = SpiralConfig::default();
    let a: Dataset = two_spirals(&cfg).unwrap();
    let b: Dataset = two_spirals(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let c: Dataset = two_spirals(&SpiralConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let ds: Dataset = two_spirals(&SpiralConfig::default()).unwrap();
    let back: Dataset = dataset_from_csv(&ds.to_csv(), 2).unwrap();
    assert_eq!(back.labels(), ds.labels());
    for (p, q) in back.points().zip(ds.points()) {
        for (a, b) in p.iter().zip(q) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn split_partitions_the_dataset() {
    let ds: Dataset = two_spirals(&SpiralConfig::default()).unwrap();
    let (train, test) = split(&ds, 0.25, 1).unwrap();
    assert_eq!((train.len(), test.len()), (1500, 500));
    let mut all: Vec<String> = train
        .points()
        .chain(test.points())
        .map(|p| format!("{:?}", p))
        .collect();
    let mut orig: Vec<String> = ds.points().map(|p| format!("{:?}", p)).collect();
    all.sort();
    orig.sort();
    assert_eq!(all, orig);
}

#[test]
fn mixture_points_sit_near_their_component() {
    let ds: Dataset = gaussian_mixture(6, 300, 3, 11).unwrap();
    let means = mixture_means(6);
    for (p, &l) in ds.points().zip(ds.labels()) {
        let nearest = (0..6)
            .min_by(|&a, &b| sq(p, &means[a]).partial_cmp(&sq(p, &means[b])).unwrap())
            .unwrap();
        assert_eq!(nearest % 3, l);
        assert!(sq(p, &means[nearest]).sqrt() < 6.0 * MIXTURE_STD);
    }
    for c in 0..3 {
        assert_eq!(ds.class_points(c).len(), 300);
    }
}
