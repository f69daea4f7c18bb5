//! Principal component basis shared by every domain.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Container;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub mean: Vec<f64>,
    /// `[k, d_raw]`, orthonormal rows ordered by explained variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

impl FeatureSpace {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn d_raw(&self) -> usize {
        self.mean.len()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push("mean", vec![self.d_raw()], self.mean.clone());
        c.push(
            "components",
            vec![self.k(), self.d_raw()],
            self.components.data().to_vec(),
        );
        c.push("explained_variance", vec![self.k()], self.explained_variance.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let get = |n: &str| c.record(n).ok_or_else(|| Error::Format(format!("missing record {n}")));
        let (_, mean) = get("mean")?;
        let (cs, comps) = get("components")?;
        let (_, ev) = get("explained_variance")?;
        if cs.len() != 2 || cs[1] != mean.len() || cs[0] != ev.len() {
            return Err(Error::Format(format!("inconsistent feature space shapes {cs:?}")));
        }
        Ok(Self {
            mean: mean.to_vec(),
            components: Matrix::new(cs[0], cs[1], comps.to_vec())?,
            explained_variance: ev.to_vec(),
        })
    }
}

/// Fits the top-`k` principal components of `data` (rows are samples).
///
/// Uses the `d x d` covariance when `d <= n`, and the `n x n` Gram matrix of
/// the centred data otherwise; both give the same non-zero spectrum.
pub fn fit_pca(data: &Matrix, k: usize) -> Result<FeatureSpace> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={} for {n} rows of dimension {d}",
            (n - 1).min(d)
        )));
    }
    let mean = data.column_means();
    let centred = DMatrix::from_fn(n, d, |i, j| data.get(i, j) - mean[j]);
    let denom = (n - 1) as f64;

    let (values, vectors) = if d <= n {
        let cov = (centred.transpose() * &centred) / denom;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let gram = (&centred * centred.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        (eig.eigenvalues, eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k * d);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = values[idx].max(0.0);
        let mut v: Vec<f64> = if d <= n {
            vectors.column(idx).iter().copied().collect()
        } else {
            if lambda <= 1e-12 * values[order[0]].abs().max(f64::MIN_POSITIVE) {
                return Err(Error::invalid(format!(
                    "data has rank below k = {k}; reduce the number of components"
                )));
            }
            let u = vectors.column(idx);
            let v = centred.transpose() * u;
            let norm = v.norm();
            v.iter().map(|x| x / norm).collect()
        };
        orient(&mut v);
        components.extend_from_slice(&v);
        explained.push(lambda);
    }
    Ok(FeatureSpace {
        mean,
        components: Matrix::new(k, d, components)?,
        explained_variance: explained,
    })
}

/// Flips `v` so its largest-magnitude coordinate is positive (first such
/// coordinate on ties).
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `(x - mean) * components^T`.
pub fn project(space: &FeatureSpace, windows: &Matrix) -> Result<Matrix> {
    if windows.cols() != space.d_raw() {
        return Err(Error::shape(
            "project",
            format!(
                "windows have {} columns, feature space expects {}",
                windows.cols(),
                space.d_raw()
            ),
        ));
    }
    let k = space.k();
    let mut out = Vec::with_capacity(windows.rows() * k);
    let mut centred = vec![0.0; space.d_raw()];
    for row in windows.iter_rows() {
        centred
            .iter_mut()
            .zip(row.iter().zip(&space.mean))
            .for_each(|(c, (x, m))| *c = x - m);
        for comp in space.components.iter_rows() {
            out.push(comp.iter().zip(&centred).map(|(a, b)| a * b).sum());
        }
    }
    Matrix::new(windows.rows(), k, out)
}

/// Maps projected coordinates back into window space.
pub fn reconstruct(space: &FeatureSpace, coords: &Matrix) -> Result<Matrix> {
    if coords.cols() != space.k() {
        return Err(Error::shape(
            "reconstruct",
            format!(
                "coordinates have {} columns, feature space has {}",
                coords.cols(),
                space.k()
            ),
        ));
    }
    let d = space.d_raw();
    let mut out = Vec::with_capacity(coords.rows() * d);
    for row in coords.iter_rows() {
        let mut x = space.mean.clone();
        for (c, comp) in row.iter().zip(space.components.iter_rows()) {
            x.iter_mut().zip(comp).for_each(|(xi, vi)| *xi += c * vi);
        }
        out.extend_from_slice(&x);
    }
    Matrix::new(coords.rows(), d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::stream(seed, &[]);
        Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Cyclic Jacobi eigenvalue iteration, kept independent of nalgebra.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let x = random(6, 4, 11);
        let mean = x.column_means();
        let mut cov = vec![vec![0.0; 4]; 4];
        for r in x.iter_rows() {
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / 5.0;
                }
            }
        }
        let oracle = jacobi_eigenvalues(cov);
        let fs = fit_pca(&x, 4).unwrap();
        for (a, b) in fs.explained_variance.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn full_basis_reconstructs() {
        let x = random(20, 5, 3);
        let fs = fit_pca(&x, 5).unwrap();
        let back = reconstruct(&fs, &project(&fs, &x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn diagonal_line_gives_diagonal_component() {
        let mut rng = crate::rng::stream(5, &[]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let t: f64 = rng.random_range(-3.0..3.0);
                vec![t + rng.random_range(-0.01..0.01), t + rng.random_range(-0.01..0.01)]
            })
            .collect();
        let fs = fit_pca(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        let c = fs.components.row(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - s).abs() < 1e-3 && (c[1] - s).abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        // n < d uses the Gram route; compare against the covariance route on the transposed problem size.
        let x = random(10, 30, 8);
        let fs = fit_pca(&x, 6).unwrap();
        let mean = x.column_means();
        let centred = DMatrix::from_fn(10, 30, |i, j| x.get(i, j) - mean[j]);
        let cov = (centred.transpose() * &centred) / 9.0;
        let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in fs.explained_variance.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-9);
        }
        let gram = DMatrix::from_fn(6, 6, |i, j| {
            fs.components
                .row(i)
                .iter()
                .zip(fs.components.row(j))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        });
        assert!((gram - DMatrix::identity(6, 6)).abs().max() < 1e-8);
    }

    #[test]
    fn projection_variance_equals_explained_variance() {
        let x = random(50, 8, 21);
        let fs = fit_pca(&x, 5).unwrap();
        let p = project(&fs, &x).unwrap();
        let m = p.column_means();
        for j in 0..5 {
            let var: f64 = p.iter_rows().map(|r| (r[j] - m[j]).powi(2)).sum::<f64>() / 49.0;
            assert!((var - fs.explained_variance[j]).abs() < 1e-6);
            assert!(m[j].abs() < 1e-10);
        }
        assert!(fs.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruction_error_non_increasing_in_k() {
        let x = random(30, 6, 4);
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let fs = fit_pca(&x, k).unwrap();
            let back = reconstruct(&fs, &project(&fs, &x).unwrap()).unwrap();
            let err: f64 = back.data().iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn mean_projects_to_zero_and_matches_direct_product() {
        let x = random(12, 4, 9);
        let fs = fit_pca(&x, 3).unwrap();
        let p = project(&fs, &Matrix::new(1, 4, fs.mean.clone()).unwrap()).unwrap();
        assert!(p.data().iter().all(|v| v.abs() < 1e-15));
        let p = project(&fs, &x).unwrap();
        for i in 0..12 {
            for j in 0..3 {
                let mut s = 0.0;
                for c in 0..4 {
                    s += (x.get(i, c) - fs.mean[c]) * fs.components.get(j, c);
                }
                assert!((s - p.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let fs = fit_pca(&random(15, 5, 2), 3).unwrap();
        for r in fs.components.iter_rows() {
            let big = r
                .iter()
                .cloned()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rejects_bad_k_and_dimension() {
        let x = random(5, 4, 1);
        assert!(fit_pca(&x, 5).is_err());
        assert!(fit_pca(&x, 0).is_err());
        let fs = fit_pca(&x, 2).unwrap();
        assert!(project(&fs, &random(2, 3, 1)).is_err());
    }
}
