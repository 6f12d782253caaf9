//! Distribution statistics over latent codes.
//!
//! All three metrics treat codes as points in R^d: FID compares Gaussian
//! fits of two sets, diversity is the mean distance between two disjoint
//! seeded subsets, and R-precision ranks label centroids by distance.
//! None of them look at the decoded motions.

use std::collections::BTreeMap;

use forge_core::seeding::{rng_for, Stage};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::latent::LatentCode;
use crate::GenError;

/// Sample mean and unbiased covariance of a code set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

/// Fits mean and (n-1)-normalized covariance.  The covariance is assembled
/// from its upper triangle, so it is symmetric bit for bit.
pub fn summarize(codes: &[LatentCode]) -> Result<GaussianSummary, GenError> {
    if codes.len() < 2 {
        return Err(GenError::InvalidArgument(format!(
            "need at least 2 codes to fit a Gaussian, got {}",
            codes.len()
        )));
    }
    let d = codes[0].values.len();
    for (i, c) in codes.iter().enumerate() {
        if c.values.len() != d {
            return Err(GenError::ShapeMismatch(format!(
                "code {i} has dimension {}, expected {d}",
                c.values.len()
            )));
        }
    }
    let n = codes.len();
    let mut mean = DVector::zeros(d);
    for c in codes {
        for k in 0..d {
            mean[k] += c.values[k];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for c in codes {
        for i in 0..d {
            let ci = c.values[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (c.values[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    Ok(GaussianSummary { mean, cov, n })
}

/// Symmetric PSD square root; negative eigenvalues are clamped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut root = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &val) in eig.eigenvalues.iter().enumerate() {
        let s = val.max(0.0).sqrt();
        let u = eig.eigenvectors.column(i);
        root += u * u.transpose() * s;
    }
    (&root + root.transpose()) * 0.5
}

/// Frechet distance between Gaussian fits of the two sets.
pub fn fid(a: &[LatentCode], b: &[LatentCode]) -> Result<f64, GenError> {
    let sa = summarize(a)?;
    let sb = summarize(b)?;
    if sa.mean.len() != sb.mean.len() {
        return Err(GenError::ShapeMismatch(format!(
            "code dimensions differ: {} vs {}",
            sa.mean.len(),
            sb.mean.len()
        )));
    }
    let dm = &sa.mean - &sb.mean;
    let root_a = sqrt_psd(&sa.cov);
    let cross = sqrt_psd(&(&root_a * &sb.cov * &root_a));
    let val = dm.norm_squared() + sa.cov.trace() + sb.cov.trace() - 2.0 * cross.trace();
    Ok(val.max(0.0))
}

/// Mean distance between aligned pairs of two disjoint seeded subsets.
/// `subset_size` defaults to min(30, |x| / 2).
pub fn diversity(x: &[LatentCode], subset_size: Option<usize>, seed: u64) -> Result<f64, GenError> {
    let k = subset_size.unwrap_or_else(|| (x.len() / 2).min(30));
    if k == 0 {
        return Err(GenError::InvalidArgument("subset_size must be >= 1".into()));
    }
    if x.len() < 2 * k {
        return Err(GenError::InvalidArgument(format!(
            "need at least {} codes for subset_size {k}, got {}",
            2 * k,
            x.len()
        )));
    }
    let d = x[0].values.len();
    for (i, c) in x.iter().enumerate() {
        if c.values.len() != d {
            return Err(GenError::ShapeMismatch(format!(
                "code {i} has dimension {}, expected {d}",
                c.values.len()
            )));
        }
    }
    let mut rng = rng_for(seed, &[Stage::Diversity as u64]);
    let picks: Vec<usize> = rand::seq::index::sample(&mut rng, x.len(), 2 * k).into_vec();
    let mut total = 0.0;
    for i in 0..k {
        let a = &x[picks[i]].values;
        let b = &x[picks[k + i]].values;
        let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        total += sq.sqrt();
    }
    Ok(total / k as f64)
}

/// Mean code per label, keyed by label.
pub fn label_centroids(codes: &[LatentCode]) -> Result<BTreeMap<String, Vec<f64>>, GenError> {
    if codes.is_empty() {
        return Err(GenError::InvalidArgument("cannot build centroids of an empty set".into()));
    }
    let d = codes[0].values.len();
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, c) in codes.iter().enumerate() {
        if c.values.len() != d {
            return Err(GenError::ShapeMismatch(format!(
                "code {i} has dimension {}, expected {d}",
                c.values.len()
            )));
        }
        let entry = sums.entry(c.label.clone()).or_insert_with(|| (vec![0.0; d], 0));
        for k in 0..d {
            entry.0[k] += c.values[k];
        }
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(label, (sum, n))| (label, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Fraction of samples whose true-label centroid ranks within the top 1, 2
/// and 3 of a pool of itself plus `pool_size - 1` seeded distractor
/// centroids.  Ties go to the true centroid.  `pool_size` defaults to
/// min(32, number of labels).
pub fn r_precision(
    samples: &[LatentCode],
    centroids: &BTreeMap<String, Vec<f64>>,
    pool_size: Option<usize>,
    seed: u64,
) -> Result<(f64, f64, f64), GenError> {
    if samples.is_empty() {
        return Err(GenError::InvalidArgument("no samples to rank".into()));
    }
    let labels: Vec<&String> = centroids.keys().collect();
    let pool = pool_size.unwrap_or_else(|| labels.len().min(32));
    if pool == 0 || pool > labels.len() {
        return Err(GenError::InvalidArgument(format!(
            "pool_size must lie in 1..={}, got {pool}",
            labels.len()
        )));
    }
    let mut hits = [0usize; 3];
    for (i, sample) in samples.iter().enumerate() {
        let true_centroid = centroids
            .get(&sample.label)
            .ok_or_else(|| GenError::InvalidArgument(format!("unknown label `{}`", sample.label)))?;
        if true_centroid.len() != sample.values.len() {
            return Err(GenError::ShapeMismatch(format!(
                "sample {i} has dimension {}, centroid has {}",
                sample.values.len(),
                true_centroid.len()
            )));
        }
        let d_true = sq_dist(&sample.values, true_centroid);
        let others: Vec<&String> = labels.iter().copied().filter(|l| **l != sample.label).collect();
        let mut rng = rng_for(seed, &[Stage::RPrecision as u64, i as u64]);
        let picks = rand::seq::index::sample(&mut rng, others.len(), pool - 1);
        let ahead = picks
            .iter()
            .filter(|&p| sq_dist(&sample.values, &centroids[others[p]]) < d_true)
            .count();
        let rank = ahead + 1;
        for (k, hit) in hits.iter_mut().enumerate() {
            if rank <= k + 1 {
                *hit += 1;
            }
        }
    }
    let n = samples.len() as f64;
    Ok((hits[0] as f64 / n, hits[1] as f64 / n, hits[2] as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn code(values: Vec<f64>, label: &str) -> LatentCode {
        LatentCode { values, label: label.into() }
    }

    fn random_codes(n: usize, d: usize, seed: u64, label: &str) -> Vec<LatentCode> {
        let mut rng = rng_for(seed, &[]);
        (0..n)
            .map(|_| {
                code(
                    (0..d)
                        .map(|_| {
                            let v: f64 = StandardNormal.sample(&mut rng);
                            v
                        })
                        .collect(),
                    label,
                )
            })
            .collect()
    }

    #[test]
    fn summary_covariance_is_unbiased_and_symmetric() {
        let codes = vec![
            code(vec![1.0, 0.0], "x"),
            code(vec![-1.0, 0.0], "x"),
            code(vec![0.0, 2.0], "x"),
            code(vec![0.0, -2.0], "x"),
        ];
        let s = summarize(&codes).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.mean, DVector::from_column_slice(&[0.0, 0.0]));
        // Divisor n-1 = 3.
        assert_abs_diff_eq!(s.cov[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.cov[(1, 1)], 8.0 / 3.0, epsilon = 1e-12);
        assert_eq!(s.cov[(0, 1)], s.cov[(1, 0)]);
        let eig = SymmetricEigen::new(s.cov.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn fid_of_a_set_with_itself_vanishes() {
        let x = random_codes(50, 5, 3, "x");
        let v = fid(&x, &x).unwrap();
        assert!(v < 1e-6, "fid(X, X) = {v}");
    }

    #[test]
    fn fid_of_translated_set_is_the_squared_shift() {
        let x = random_codes(80, 4, 5, "x");
        let shift = [0.7, -0.3, 0.2, 1.1];
        let y: Vec<LatentCode> = x
            .iter()
            .map(|c| {
                code(c.values.iter().zip(&shift).map(|(v, s)| v + s).collect(), "x")
            })
            .collect();
        let want: f64 = shift.iter().map(|s| s * s).sum();
        assert_abs_diff_eq!(fid(&x, &y).unwrap(), want, epsilon = 1e-6);
    }

    #[test]
    fn one_dimensional_fid_matches_the_closed_form() {
        let n = 200_000;
        let (mu1, s1) = (1.5, 1.0);
        let (mu2, s2) = (0.3, 0.6);
        let mut rng = rng_for(7, &[]);
        let a: Vec<LatentCode> = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                code(vec![mu1 + s1 * v], "x")
            })
            .collect();
        let b: Vec<LatentCode> = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                code(vec![mu2 + s2 * v], "x")
            })
            .collect();
        let want = (mu1 - mu2) * (mu1 - mu2) + (s1 - s2) * (s1 - s2);
        assert_abs_diff_eq!(fid(&a, &b).unwrap(), want, epsilon = 0.02);
    }

    #[test]
    fn fid_is_symmetric_and_non_negative() {
        let a = random_codes(40, 3, 11, "x");
        let mut b = random_codes(40, 3, 13, "x");
        for c in &mut b {
            c.values[0] += 0.5;
        }
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-8, "asymmetry {}", (ab - ba).abs());
        assert!(ab >= 0.0);
    }

    #[test]
    fn diversity_of_identical_codes_is_zero() {
        let x = vec![code(vec![1.0, 2.0], "x"); 10];
        assert_eq!(diversity(&x, None, 0).unwrap(), 0.0);
    }

    #[test]
    fn two_point_diversity_takes_values_from_the_support() {
        let c = 3.0_f64;
        let x = vec![code(vec![0.0], "x"), code(vec![c], "x")];
        for seed in 0..20 {
            let v = diversity(&x, Some(1), seed).unwrap();
            // Disjoint singletons always pick both points.
            assert_abs_diff_eq!(v, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn diversity_matches_a_brute_force_recomputation() {
        let x = random_codes(100, 6, 17, "x");
        let got = diversity(&x, Some(20), 9).unwrap();
        let mut rng = rng_for(9, &[Stage::Diversity as u64]);
        let picks: Vec<usize> = rand::seq::index::sample(&mut rng, 100, 40).into_vec();
        let mut total = 0.0;
        for i in 0..20 {
            let a = &x[picks[i]].values;
            let b = &x[picks[20 + i]].values;
            total += sq_dist(a, b).sqrt();
        }
        assert_eq!(got, total / 20.0);
    }

    #[test]
    fn diversity_is_translation_invariant() {
        let x = random_codes(64, 4, 21, "x");
        let y: Vec<LatentCode> =
            x.iter().map(|c| code(c.values.iter().map(|v| v + 5.0).collect(), "x")).collect();
        let a = diversity(&x, None, 3).unwrap();
        let b = diversity(&y, None, 3).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn single_label_pool_of_one_is_always_right() {
        let samples = random_codes(25, 3, 23, "only");
        let centroids = label_centroids(&samples).unwrap();
        let (t1, t2, t3) = r_precision(&samples, &centroids, Some(1), 0).unwrap();
        assert_eq!((t1, t2, t3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn samples_exactly_at_centroids_always_rank_first() {
        let mut centroids = BTreeMap::new();
        let mut rng = rng_for(31, &[]);
        let mut samples = Vec::new();
        for label in ["a", "b", "c", "d", "e"] {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            samples.push(code(c.clone(), label));
            centroids.insert(label.to_string(), c);
        }
        let (t1, _, _) = r_precision(&samples, &centroids, Some(5), 7).unwrap();
        assert_eq!(t1, 1.0);
    }

    #[test]
    fn ranking_matches_a_brute_force_oracle() {
        let mut rng = rng_for(37, &[]);
        let labels = ["a", "b", "c", "d", "e", "f"];
        let mut centroids = BTreeMap::new();
        for label in labels {
            centroids
                .insert(label.to_string(), (0..3).map(|_| rng.random_range(-3.0..3.0)).collect());
        }
        let samples: Vec<LatentCode> = (0..60)
            .map(|i| {
                code(
                    (0..3).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    labels[i % labels.len()],
                )
            })
            .collect();
        let pool = 4;
        let seed = 13;
        let got = r_precision(&samples, &centroids, Some(pool), seed).unwrap();

        let sorted: Vec<&String> = centroids.keys().collect();
        let mut hits = [0usize; 3];
        for (i, s) in samples.iter().enumerate() {
            let others: Vec<&String> =
                sorted.iter().copied().filter(|l| **l != s.label).collect();
            let mut rng = rng_for(seed, &[Stage::RPrecision as u64, i as u64]);
            let picks = rand::seq::index::sample(&mut rng, others.len(), pool - 1);
            let mut dists: Vec<(f64, bool)> = vec![(sq_dist(&s.values, &centroids[&s.label]), true)];
            for p in picks.iter() {
                dists.push((sq_dist(&s.values, &centroids[others[p]]), false));
            }
            dists.sort_by(|x, y| {
                x.0.partial_cmp(&y.0).unwrap().then(y.1.cmp(&x.1))
            });
            let rank = dists.iter().position(|(_, t)| *t).unwrap() + 1;
            for k in 0..3 {
                if rank <= k + 1 {
                    hits[k] += 1;
                }
            }
        }
        let n = samples.len() as f64;
        assert_eq!(got, (hits[0] as f64 / n, hits[1] as f64 / n, hits[2] as f64 / n));
    }

    #[test]
    fn rejects_undersized_or_mismatched_inputs() {
        let one = vec![code(vec![1.0], "x")];
        assert!(fid(&one, &one).is_err());
        assert!(diversity(&one, Some(1), 0).is_err());
        let x = random_codes(10, 2, 41, "x");
        let centroids = label_centroids(&x).unwrap();
        let stranger = vec![code(vec![0.0, 0.0], "ghost")];
        assert!(matches!(
            r_precision(&stranger, &centroids, Some(1), 0),
            Err(GenError::InvalidArgument(_))
        ));
        assert!(r_precision(&x, &centroids, Some(2), 0).is_err());
        assert!(r_precision(&x, &centroids, Some(0), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn top_k_fractions_are_monotone(
            seed in 0u64..1000,
            n_labels in 1usize..6,
            n_samples in 1usize..40,
        ) {
            let mut rng = rng_for(seed, &[50]);
            let labels: Vec<String> = (0..n_labels).map(|i| format!("l{i}")).collect();
            let mut centroids = BTreeMap::new();
            for l in &labels {
                centroids.insert(
                    l.clone(),
                    (0..3).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>(),
                );
            }
            let samples: Vec<LatentCode> = (0..n_samples)
                .map(|i| {
                    code(
                        (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                        &labels[i % n_labels],
                    )
                })
                .collect();
            let pool = 1 + (seed as usize) % n_labels;
            let (t1, t2, t3) = r_precision(&samples, &centroids, Some(pool), seed).unwrap();
            prop_assert!(t1 <= t2 + 1e-15);
            prop_assert!(t2 <= t3 + 1e-15);
            prop_assert!((0.0..=1.0).contains(&t1));
            prop_assert!((0.0..=1.0).contains(&t3));
        }
    }
}
