//! Synthetic Gaussian-cluster classification data and label corruption.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{Dataset, Sample};
use crate::numerics::{DenseVector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    /// Per-coordinate standard deviation of the class means.
    pub separation: f64,
}

/// Draws `classes` means from `N(0, separation² I)`, then labels uniformly at
/// random and features `mean[label] + N(0, noise² I)`. Train and test share
/// the means; labels are class indices.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut RngStream) -> (Dataset, Dataset) {
    let means: Vec<DenseVector> = (0..spec.classes)
        .map(|_| rng.gaussian_vector(spec.d, spec.separation))
        .collect();
    let mut draw = |count: usize| {
        let samples = (0..count)
            .map(|_| {
                let label = rng.below(spec.classes);
                let mut x = rng.gaussian_vector(spec.d, spec.noise);
                x.axpy(1.0, &means[label]);
                Sample::new(x, label as f64)
            })
            .collect();
        Dataset::new(samples).expect("generated samples share one dimension")
    };
    let train = draw(spec.n_train);
    let test = draw(spec.n_test);
    (train, test)
}

/// Picks exactly `round(fraction · n)` samples without replacement and gives
/// each a label drawn uniformly from all `classes` (so it may keep its old
/// one). Features are untouched.
pub fn corrupt_labels(
    ds: &Dataset,
    fraction: f64,
    classes: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "corruption fraction {fraction} outside [0, 1]"
        )));
    }
    if classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    let n = ds.len();
    let count = (fraction * n as f64).round() as usize;
    let chosen = rng.sample_indices(n, count);
    let mut labels = ds.labels();
    for &i in &chosen {
        labels[i] = rng.below(classes) as f64;
    }
    ds.with_labels(labels, chosen.into_iter().collect::<BTreeSet<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 10,
            n_train: 200,
            n_test: 50,
            d: 5,
            noise: 1.0,
            separation: 1.0,
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&spec(), &mut RngStream::new(4));
        let b = generate_synthetic(&spec(), &mut RngStream::new(4));
        assert_eq!(a, b);
        let c = generate_synthetic(&spec(), &mut RngStream::new(5));
        assert_ne!(a, c);
        assert_eq!(a.0.len(), 200);
        assert_eq!(a.1.dim(), Some(5));
        assert!(a
            .0
            .labels()
            .iter()
            .all(|&y| (0.0..10.0).contains(&y) && y.fract() == 0.0));
    }

    #[test]
    fn empty_test_set() {
        let s = SyntheticSpec {
            n_test: 0,
            ..spec()
        };
        let (_, test) = generate_synthetic(&s, &mut RngStream::new(1));
        assert!(test.is_empty());
    }

    #[test]
    fn zero_fraction_is_identity() {
        let (train, _) = generate_synthetic(&spec(), &mut RngStream::new(1));
        let c = corrupt_labels(&train, 0.0, 10, &mut RngStream::new(2)).unwrap();
        assert_eq!(c.labels(), train.labels());
        assert!(c.corrupted_indices().is_empty());
    }

    #[test]
    fn exact_count_and_features_untouched() {
        let s = SyntheticSpec {
            n_train: 1000,
            ..spec()
        };
        let (train, _) = generate_synthetic(&s, &mut RngStream::new(1));
        let c = corrupt_labels(&train, 0.25, 10, &mut RngStream::new(2)).unwrap();
        assert_eq!(c.corrupted_indices().len(), 250);
        for (a, b) in train.samples().iter().zip(c.samples()) {
            assert_eq!(a.x, b.x);
        }
        let changed = (0..1000).filter(|&i| train.labels()[i] != c.labels()[i]);
        assert!(changed.clone().all(|i| c.corrupted_indices().contains(&i)));
    }

    #[test]
    fn full_corruption_wrong_rate_near_nine_tenths() {
        let s = SyntheticSpec {
            n_train: 10_000,
            n_test: 0,
            ..spec()
        };
        let (train, _) = generate_synthetic(&s, &mut RngStream::new(8));
        let c = corrupt_labels(&train, 1.0, 10, &mut RngStream::new(9)).unwrap();
        let wrong = (0..10_000)
            .filter(|&i| train.labels()[i] != c.labels()[i])
            .count();
        let rate = wrong as f64 / 10_000.0;
        assert!((rate - 0.9).abs() < 0.03, "{rate}");
    }

    #[test]
    fn rejects_bad_fraction() {
        let (train, _) = generate_synthetic(&spec(), &mut RngStream::new(1));
        assert!(corrupt_labels(&train, -0.1, 10, &mut RngStream::new(2)).is_err());
        assert!(corrupt_labels(&train, 1.1, 10, &mut RngStream::new(2)).is_err());
    }
}
