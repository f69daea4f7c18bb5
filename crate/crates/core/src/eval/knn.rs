use rayon::prelude::*;

use crate::data::{fit_pca, project, Domain, FeatureSpace};
use crate::error::{Error, Result};
use crate::matrix::{euclidean, Matrix};

use super::Predictor;

/// k-nearest-neighbour vote in a PCA basis refit on source plus unlabeled
/// target windows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    space: FeatureSpace,
    points: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    k: usize,
}

impl KnnClassifier {
    /// `pca_dims` is clipped to what the pooled data supports.
    pub fn fit(source: &Domain, target_train: &Domain, k_neighbors: usize, pca_dims: usize) -> Result<Self> {
        let labels = source
            .labels()
            .ok_or_else(|| Error::invalid(format!("source {} has no labels", source.subject_id())))?;
        if k_neighbors == 0 || k_neighbors > source.len() {
            return Err(Error::invalid(format!(
                "k_neighbors {k_neighbors} must lie in 1..={}",
                source.len()
            )));
        }
        if source.dim() != target_train.dim() {
            return Err(Error::shape("knn_pca", "source and target dimensions differ"));
        }
        let pooled = Matrix::vstack(&[source.features(), target_train.features()])?;
        let dims = pca_dims.min(pooled.cols()).min(pooled.rows() - 1).max(1);
        let space = fit_pca(&pooled, dims)?;
        let points = project(&space, source.features())?;
        Ok(Self {
            space,
            points,
            labels: labels.to_vec(),
            n_classes: source.n_classes(),
            k: k_neighbors,
        })
    }

    fn vote(&self, q: &[f64]) -> usize {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, p)| (euclidean(q, p), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        let mut dist = vec![0.0; self.n_classes];
        for &(di, i) in &d[..self.k] {
            votes[self.labels[i]] += 1;
            dist[self.labels[i]] += di;
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            let better = votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best]);
            if better {
                best = c;
            }
        }
        best
    }
}

impl Predictor for KnnClassifier {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let q = project(&self.space, x)?;
        Ok((0..q.rows()).into_par_iter().map(|i| self.vote(q.row(i))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Role;
    use rand::Rng;

    fn dom(x: Matrix, labels: Vec<usize>, k: usize) -> Domain {
        Domain::new(x, Some(labels), k, "s", Role::Source).unwrap()
    }

    #[test]
    fn one_neighbour_memorises() {
        let mut rng = crate::rng::stream(1, &[]);
        let x = Matrix::new(40, 5, (0..200).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let d = dom(x.clone(), y.clone(), 3);
        let knn = KnnClassifier::fit(&d, &d.as_target(), 1, 5).unwrap();
        assert_eq!(knn.predict(&x).unwrap(), y);
    }

    #[test]
    fn matches_linear_scan_oracle_for_k1() {
        let mut rng = crate::rng::stream(2, &[]);
        let x = Matrix::new(30, 4, (0..120).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..30).map(|i| (i * 7) % 4).collect();
        let q = Matrix::new(25, 4, (0..100).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let d = dom(x.clone(), y.clone(), 4);
        let knn = KnnClassifier::fit(&d, &d.as_target(), 1, 4).unwrap();
        // Full-rank PCA is a rigid motion, so raw-space distances decide.
        let oracle: Vec<usize> = q
            .iter_rows()
            .map(|r| {
                let mut best = (f64::INFINITY, 0);
                for (i, p) in x.iter_rows().enumerate() {
                    let dd = euclidean(r, p);
                    if dd < best.0 {
                        best = (dd, i);
                    }
                }
                y[best.1]
            })
            .collect();
        assert_eq!(knn.predict(&q).unwrap(), oracle);
    }

    #[test]
    fn vote_ties_go_to_the_closer_class() {
        // Two neighbours of each class; class 1 sits closer.
        let x = Matrix::from_rows(&[vec![-3.0, 0.0], vec![-3.1, 0.0], vec![1.0, 0.0], vec![1.1, 0.0]]).unwrap();
        let d = dom(x, vec![0, 0, 1, 1], 2);
        let knn = KnnClassifier::fit(&d, &d.as_target(), 4, 2).unwrap();
        let q = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(knn.predict(&q).unwrap(), vec![1]);
    }

    #[test]
    fn too_many_neighbours_rejected() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let d = dom(x, vec![0, 1], 2);
        assert!(KnnClassifier::fit(&d, &d.as_target(), 3, 2).is_err());
    }
}
