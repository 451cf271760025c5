use super::kmeans::{assign, plus_plus_init};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Streaming k-means fitted one batch at a time with per-centroid
/// learning rates `1 / n_c` (Sculley's mini-batch rule).
#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatchKMeans {
    k: usize,
    seed: u64,
    centroids: Option<Matrix>,
    counts: Vec<u64>,
}

impl MiniBatchKMeans {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("mini-batch k-means needs k >= 1"));
        }
        Ok(Self { k, seed, centroids: None, counts: vec![0; k] })
    }

    /// Restores a fitted state (e.g. from a checkpoint).
    pub fn from_centroids(centroids: Matrix, counts: Vec<u64>, seed: u64) -> Result<Self> {
        if counts.len() != centroids.rows() || centroids.rows() == 0 {
            return Err(Error::shape("centroid/count length mismatch"));
        }
        Ok(Self { k: centroids.rows(), seed, centroids: Some(centroids), counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> Option<&Matrix> {
        self.centroids.as_ref()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Folds one batch into the running centroids. The first non-empty
    /// batch also seeds them with k-means++.
    pub fn partial_fit(&mut self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Ok(());
        }
        if let Some(c) = &self.centroids {
            if c.cols() != batch.cols() {
                return Err(Error::shape(format!(
                    "batch has {} features, state has {}",
                    batch.cols(),
                    c.cols()
                )));
            }
        } else {
            if batch.rows() < self.k {
                return Err(Error::invalid(format!(
                    "first batch has {} points, fewer than k={}",
                    batch.rows(),
                    self.k
                )));
            }
            let mut rng = rng::seeded(self.seed);
            self.centroids = Some(plus_plus_init(batch, self.k, &mut rng));
        }
        let centroids = self.centroids.as_mut().expect("seeded above");
        let (labels, _) = assign(batch, centroids);
        for (x, &c) in batch.iter_rows().zip(&labels) {
            self.counts[c] += 1;
            let eta = 1.0 / self.counts[c] as f64;
            for (m, v) in centroids.row_mut(c).iter_mut().zip(x) {
                *m += eta * (v - *m);
            }
        }
        Ok(())
    }

    /// Nearest-centroid labels for `points`.
    pub fn predict(&self, points: &Matrix) -> Result<Vec<usize>> {
        let c = self
            .centroids
            .as_ref()
            .ok_or_else(|| Error::invalid("mini-batch k-means has not been fitted"))?;
        if c.cols() != points.cols() {
            return Err(Error::shape("predict: feature dimension mismatch"));
        }
        Ok(assign(points, c).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column_vector(v).unwrap()
    }

    #[test]
    fn running_mean_for_single_centroid() {
        let mut s = MiniBatchKMeans::new(1, 0).unwrap();
        s.partial_fit(&col(&[0.0])).unwrap();
        assert_eq!(s.centroids().unwrap().data(), &[0.0]);
        s.partial_fit(&col(&[2.0])).unwrap();
        assert_eq!(s.centroids().unwrap().data(), &[1.0]);
        assert_eq!(s.counts(), &[2]);
    }

    #[test]
    fn empty_batch_leaves_state() {
        let mut s = MiniBatchKMeans::new(2, 4).unwrap();
        s.partial_fit(&col(&[0.0, 5.0])).unwrap();
        let before = s.clone();
        s.partial_fit(&Matrix::zeros(0, 1)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = MiniBatchKMeans::new(1, 0).unwrap();
        s.partial_fit(&col(&[1.0])).unwrap();
        assert!(matches!(s.partial_fit(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn deterministic_stream() {
        let run = || {
            let mut s = MiniBatchKMeans::new(3, 17).unwrap();
            for b in 0..4 {
                let data: Vec<f64> = (0..10).map(|i| ((i * 13 + b * 7) % 11) as f64).collect();
                s.partial_fit(&Matrix::from_vec(5, 2, data).unwrap()).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn counts_never_decrease() {
        let mut s = MiniBatchKMeans::new(2, 1).unwrap();
        let mut prev = vec![0; 2];
        for b in 0..5 {
            s.partial_fit(&col(&[b as f64, 10.0 + b as f64, 0.5])).unwrap();
            assert!(s.counts().iter().zip(&prev).all(|(n, p)| n >= p));
            prev = s.counts().to_vec();
        }
        assert_eq!(prev.iter().sum::<u64>(), 15);
    }
}
