//! Empirical Wasserstein-1 distance between feature domains.
//!
//! Between two uniform empirical measures with the same number of points the
//! optimal coupling is a permutation, so the exact distance is the mean cost
//! of a min-cost perfect matching under Euclidean ground cost.

mod assignment;

use rand::seq::index;

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::matrix::{euclidean, Matrix};

pub use assignment::solve as solve_assignment;

pub const MAX_EXACT_POINTS: usize = 1024;
pub const DEFAULT_N_SUB: usize = 256;
pub const DEFAULT_REPEATS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `pairing[i]` is the target index matched to source point `i`.
    pub pairing: Vec<usize>,
    /// Mean matched Euclidean cost.
    pub cost: f64,
}

pub fn cost_matrix(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.rows() * b.rows());
    for ra in a.iter_rows() {
        for rb in b.iter_rows() {
            c.push(euclidean(ra, rb));
        }
    }
    c
}

/// Exact W1 between two equally sized point clouds.
pub fn w1_exact(a: &Matrix, b: &Matrix) -> Result<(f64, TransportPlan)> {
    if a.rows() != b.rows() {
        return Err(Error::invalid(format!(
            "exact W1 needs equal sample counts, got {} and {}; subsample first",
            a.rows(),
            b.rows()
        )));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape(
            "w1_exact",
            format!("feature dimensions {} and {} differ", a.cols(), b.cols()),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::invalid("exact W1 of empty point sets"));
    }
    if n > MAX_EXACT_POINTS {
        return Err(Error::invalid(format!(
            "exact W1 limited to {MAX_EXACT_POINTS} points, got {n}"
        )));
    }
    let cost = cost_matrix(a, b);
    let pairing = assignment::solve(&cost, n);
    let total: f64 = pairing.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    let mean = total / n as f64;
    Ok((mean, TransportPlan { pairing, cost: mean }))
}

/// Mean exact W1 over `n_repeats` balanced subsamples of `n_sub` points.
///
/// Both sides are drawn from the same per-repeat random stream, so equally
/// sized inputs are subsampled at identical indices.
pub fn w1_estimate(a: &Matrix, b: &Matrix, n_sub: usize, n_repeats: usize, seed: u64) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::invalid("W1 of an empty domain"));
    }
    if n_sub == 0 || n_sub > a.rows().min(b.rows()) {
        return Err(Error::invalid(format!(
            "subsample size {n_sub} must lie in 1..={}",
            a.rows().min(b.rows())
        )));
    }
    if n_repeats == 0 {
        return Err(Error::invalid("need at least one repeat"));
    }
    let mut total = 0.0;
    for r in 0..n_repeats {
        let draw = |m: &Matrix| {
            let mut rng = crate::rng::stream(seed, &[crate::rng::tag("w1"), r as u64]);
            let mut idx = index::sample(&mut rng, m.rows(), n_sub).into_vec();
            idx.sort_unstable();
            m.select_rows(&idx)
        };
        let (d, _) = w1_exact(&draw(a), &draw(b))?;
        total += d;
    }
    Ok(total / n_repeats as f64)
}

/// Candidates ordered by ascending estimated distance to `target`; ties keep
/// subject-id order.
pub fn rank_sources(
    target: &Domain,
    candidates: &[Domain],
    n_sub: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.dim() != target.dim() {
            return Err(Error::shape(
                "rank_sources",
                format!(
                    "candidate {} has dimension {}, target {}",
                    c.subject_id(),
                    c.dim(),
                    target.dim()
                ),
            ));
        }
        let n = n_sub.min(c.len()).min(target.len());
        let d = w1_estimate(c.features(), target.features(), n, n_repeats, seed)?;
        out.push((c.subject_id().to_string(), d));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Role;
    use rand::Rng;

    fn cloud(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::stream(seed, &[]);
        Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn sorted_coupling_1d(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn identity_and_singletons() {
        let a = cloud(10, 3, 1);
        assert_eq!(w1_exact(&a, &a).unwrap().0, 0.0);
        let x = Matrix::new(1, 1, vec![0.0]).unwrap();
        let y = Matrix::new(1, 1, vec![5.0]).unwrap();
        assert_eq!(w1_exact(&x, &y).unwrap().0, 5.0);
    }

    #[test]
    fn plan_is_a_permutation() {
        let (_, plan) = w1_exact(&cloud(30, 4, 2), &cloud(30, 4, 3)).unwrap();
        let mut seen = plan.pairing.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn unequal_sizes_rejected() {
        assert!(w1_exact(&cloud(3, 2, 1), &cloud(4, 2, 1)).is_err());
        assert!(w1_estimate(&cloud(3, 2, 1), &Matrix::zeros(0, 2), 1, 1, 0).is_err());
    }

    #[test]
    fn estimate_on_grids_matches_sorted_coupling() {
        let a = Matrix::new(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let b = Matrix::new(10, 1, (10..20).map(f64::from).collect()).unwrap();
        assert_eq!(sorted_coupling_1d(a.data(), b.data()), 10.0);
        let est = w1_estimate(&a, &b, 10, 3, 4).unwrap();
        assert!((est - 10.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_estimate_zero() {
        let a = cloud(50, 3, 9);
        assert_eq!(w1_estimate(&a, &a, 17, 4, 1).unwrap(), 0.0);
    }

    #[test]
    fn estimate_is_deterministic() {
        let (a, b) = (cloud(80, 3, 1), cloud(90, 3, 2));
        assert_eq!(
            w1_estimate(&a, &b, 40, 3, 5).unwrap(),
            w1_estimate(&a, &b, 40, 3, 5).unwrap()
        );
    }

    fn dom(m: Matrix, id: &str) -> Domain {
        let n = m.rows();
        Domain::new(m, Some(vec![0; n]), 1, id, Role::Source).unwrap()
    }

    #[test]
    fn ranking_orders_translations() {
        let base = cloud(64, 4, 7);
        let target = dom(base.clone(), "t");
        let cands: Vec<Domain> = [(9.0, "a"), (1.0, "b"), (5.0, "c")]
            .iter()
            .map(|&(s, id)| dom(base.translated(&[s, 0.0, 0.0, 0.0]).unwrap(), id))
            .collect();
        let ranked = rank_sources(&target, &cands, 64, 1, 0).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert!((ranked[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ranking_prefers_self_and_checks_dimension() {
        let base = cloud(32, 3, 1);
        let target = dom(base.clone(), "t");
        let cands = vec![
            dom(base.translated(&[50.0, 0.0, 0.0]).unwrap(), "far"),
            dom(base.clone(), "self"),
        ];
        assert_eq!(rank_sources(&target, &cands, 32, 2, 0).unwrap()[0].0, "self");
        assert_eq!(rank_sources(&target, &cands[..1], 32, 2, 0).unwrap().len(), 1);
        let bad = vec![dom(cloud(32, 2, 1), "x")];
        assert!(rank_sources(&target, &bad, 32, 1, 0).is_err());
    }
}
