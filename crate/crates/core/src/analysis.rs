//! Evaluation metrics and statistical diagnostics: accuracy, MCC, Pearson,
//! k-means with purity and silhouette, a one-sided Welch t-test, the
//! noise-sensitivity score, and Spearman rank correlation.
//!
//! All functions are pure and safe to call concurrently.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;
use rand::Rng;

/// Fraction of predictions equal to their labels.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_paired(predictions.len(), labels.len(), 1)?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Matthews correlation coefficient for binary predictions. Any zero factor
/// in the denominator yields 0 by convention.
pub fn mcc(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_paired(predictions.len(), labels.len(), 1)?;
    if predictions.iter().chain(labels).any(|&v| v > 1) {
        return Err(Error::Data(
            "MCC requires binary (0/1) predictions and labels".into(),
        ));
    }
    let mut tp = 0.0f64;
    let mut tn = 0.0f64;
    let mut fp = 0.0f64;
    let mut fn_ = 0.0f64;
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / denom.sqrt())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x.len(), y.len(), 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numeric(
            "Pearson correlation undefined for zero-variance input".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation: Pearson on average-ranked values.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x.len(), y.len(), 2)?;
    pearson(&ranks(x), &ranks(y))
}

/// Average ranks (1-based), ties sharing the mean of their rank range.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// K-means clustering result.
#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub iterations: usize,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

/// Lloyd's algorithm with k-means++ seeding. Runs until the largest centroid
/// shift drops below 1e-6 or 100 iterations. Deterministic given the seed.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || n < k {
        return Err(Error::Parameter(format!(
            "k-means needs 1 <= k <= points, got k={k} for {n} points"
        )));
    }
    let d = points.cols();
    let mut rng = rng::stream(seed, "kmeans");

    // k-means++ seeding: first centroid uniform, the rest proportional to
    // squared distance from the nearest chosen centroid.
    let mut centroid_rows: Vec<usize> = vec![rng.random_range(0..n)];
    let mut d2 = vec![0.0f64; n];
    while centroid_rows.len() < k {
        let mut total = 0.0;
        for i in 0..n {
            let best = centroid_rows
                .iter()
                .map(|&c| sq_dist(points.row(i), points.row(c)))
                .fold(f64::INFINITY, f64::min);
            d2[i] = best;
            total += best;
        }
        let next = if total == 0.0 {
            rng.random_range(0..n)
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroid_rows.push(next);
    }
    let mut centroids = points.gather_rows(&centroid_rows)?;

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    for iter in 0..100 {
        iterations = iter + 1;
        for i in 0..n {
            let mut best = (0usize, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(points.row(i), centroids.row(c));
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            assignments[i] = best.0;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for j in 0..d {
                sums.set(c, j, sums.get(c, j) + points.get(i, j));
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue; // empty cluster keeps its centroid
            }
            let mut moved = 0.0;
            for j in 0..d {
                let new = sums.get(c, j) / counts[c] as f64;
                let delta = new - centroids.get(c, j);
                moved += delta * delta;
                centroids.set(c, j, new);
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < 1e-6 {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(assignments[i])))
        .sum();
    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
        inertia,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fraction of points whose cluster's majority label matches their own:
/// `(1/N) * sum_k max_y |{i in cluster k with label y}|`.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    check_paired(assignments.len(), labels.len(), 1)?;
    let k = assignments.iter().max().unwrap() + 1;
    let classes = labels.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; classes]; k];
    for (&c, &y) in assignments.iter().zip(labels) {
        counts[c][y] += 1;
    }
    let majority: usize = counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / labels.len() as f64)
}

/// Mean silhouette score over points grouped by label, Euclidean distances.
/// Points in singleton groups score 0 by convention.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Result<f64> {
    check_paired(points.rows(), labels.len(), 1)?;
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 distinct labels".into(),
        ));
    }
    let n = points.rows();
    let groups: Vec<usize> = distinct.into_iter().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&y| y == own).count();
        if own_size == 1 {
            continue; // contributes 0
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for &g in &groups {
            let mut sum = 0.0;
            let mut count = 0usize;
            for j in 0..n {
                if j == i || labels[j] != g {
                    continue;
                }
                sum += sq_dist(points.row(i), points.row(j)).sqrt();
                count += 1;
            }
            if g == own {
                a = sum / count as f64;
            } else if count > 0 {
                b = b.min(sum / count as f64);
            }
        }
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// One-sided Welch t-test result for `mean(a) > mean(b)`.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Welch {
    pub t: f64,
    pub dof: f64,
    /// One-sided p-value, `P(T_dof >= t)`.
    pub p: f64,
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom; one-sided alternative `mean(a) > mean(b)`.
pub fn welch_t_one_sided(a: &[f64], b: &[f64]) -> Result<Welch> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Parameter(format!(
            "Welch t-test needs at least 2 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Err(Error::Numeric(
            "Welch t-test undefined: both samples have zero variance".into(),
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let p = t_sf(t, dof);
    Ok(Welch { t, dof, p })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Survival function of Student's t: `P(T_dof > t)`.
fn t_sf(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    let half_tail = 0.5 * reg_inc_beta(0.5 * dof, 0.5, x);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Ratio of sample variances `Var(performance) / Var(sigma)`, both with the
/// `n - 1` denominator.
pub fn sensitivity_score(performances: &[f64], sigmas: &[f64]) -> Result<f64> {
    check_paired(performances.len(), sigmas.len(), 2)?;
    let (_, vp) = mean_var(performances);
    let (_, vs) = mean_var(sigmas);
    if vs == 0.0 {
        return Err(Error::Numeric(
            "sensitivity score undefined: noise levels have zero variance".into(),
        ));
    }
    Ok(vp / vs)
}

fn check_paired(a: usize, b: usize, min: usize) -> Result<()> {
    if a != b {
        return Err(Error::Data(format!(
            "paired inputs differ in length: {a} vs {b}"
        )));
    }
    if a < min {
        return Err(Error::Parameter(format!(
            "need at least {min} observations, got {a}"
        )));
    }
    Ok(())
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function `I_x(a, b)` by Lentz's continued
/// fraction, absolute tolerance 1e-10.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1], got {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // Use the symmetry for the branch where the fraction converges fast.
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - reg_inc_beta(b, a, 1.0 - x);
    }
    let front =
        (a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)).exp() / a;
    // Modified Lentz evaluation of the standard continued fraction.
    const TINY: f64 = 1e-300;
    let mut f = 1.0f64;
    let mut c = 1.0f64;
    let mut d = 0.0f64;
    for m in 0..400 {
        let numerator = if m == 0 {
            1.0
        } else if m % 2 == 0 {
            let k = (m / 2) as f64;
            k * (b - k) * x / ((a + 2.0 * k - 1.0) * (a + 2.0 * k))
        } else {
            let k = ((m - 1) / 2) as f64;
            -(a + k) * (a + b + k) * x / ((a + 2.0 * k) * (a + 2.0 * k + 1.0))
        };
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-10 {
            break;
        }
    }
    front * (f - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn accuracy_counts_hits() {
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn mcc_hand_value() {
        // TP=2, TN=2, FP=1, FN=1 -> 3/9.
        let preds = [1, 1, 0, 0, 1, 0];
        let labels = [1, 1, 0, 0, 0, 1];
        assert_relative_eq!(
            mcc(&preds, &labels).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mcc_extremes_and_conventions() {
        let labels = [0, 1, 0, 1];
        assert_eq!(mcc(&labels, &labels).unwrap(), 1.0);
        let flipped = [1, 0, 1, 0];
        assert_eq!(mcc(&flipped, &labels).unwrap(), -1.0);
        // Constant predictor: zero factor -> 0.
        assert_eq!(mcc(&[1, 1, 1, 1], &labels).unwrap(), 0.0);
        assert!(mcc(&[0, 2], &[0, 1]).is_err());
    }

    #[test]
    fn mcc_and_purity_relabel_invariance() {
        let preds = [1, 1, 0, 0, 1, 0];
        let labels = [1, 1, 0, 0, 0, 1];
        let flip = |v: &[usize]| v.iter().map(|&x| 1 - x).collect::<Vec<_>>();
        assert_relative_eq!(
            mcc(&preds, &labels).unwrap(),
            mcc(&flip(&preds), &flip(&labels)).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            cluster_purity(&preds, &labels).unwrap(),
            cluster_purity(&flip(&preds), &flip(&labels)).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pearson_hand_value_and_extremes() {
        let x = [1.0, 2.0, 3.0];
        assert_relative_eq!(
            pearson(&x, &[1.0, 2.0, 4.0]).unwrap(),
            0.98198,
            max_relative = 1e-5
        );
        assert_relative_eq!(pearson(&x, &x).unwrap(), 1.0, max_relative = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&x, &neg).unwrap(), -1.0, max_relative = 1e-12);
        assert!(pearson(&x, &[2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_rank_behaviour() {
        // Monotone but nonlinear -> rank correlation exactly 1.
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 8.0, 27.0, 1000.0];
        assert_relative_eq!(spearman(&x, &y).unwrap(), 1.0, max_relative = 1e-12);
        // Ties get average ranks.
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn purity_hand_count_and_k1() {
        // Cluster A: 3 of class 0 + 1 of class 1; cluster B: 2 of class 1.
        let assignments = [0, 0, 0, 0, 1, 1];
        let labels = [0, 0, 0, 1, 1, 1];
        assert_relative_eq!(
            cluster_purity(&assignments, &labels).unwrap(),
            5.0 / 6.0,
            max_relative = 1e-12
        );
        // Single cluster: purity equals the largest class share exactly.
        let one = [0usize; 6];
        assert_eq!(cluster_purity(&one, &labels).unwrap(), 0.5);
        let skewed = [0, 0, 0, 0, 1, 1];
        assert_eq!(cluster_purity(&[0; 6], &skewed).unwrap(), 4.0 / 6.0);
    }

    fn blobs(n_per: usize, centers: &[(f64, f64)], spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng::stream(seed, "test.blobs");
        let normal = Normal::new(0.0, spread).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..n_per {
                rows.push(vec![
                    cx + normal.sample(&mut rng),
                    cy + normal.sample(&mut rng),
                ]);
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let (points, labels) = blobs(20, &[(0.0, 0.0), (10.0, 10.0)], 0.2, 3);
        let result = kmeans(&points, 2, 7).unwrap();
        // Up to a label swap, assignments match blob membership.
        let direct: usize = result
            .assignments
            .iter()
            .zip(&labels)
            .filter(|(a, b)| a == b)
            .count();
        let agreement = direct.max(labels.len() - direct);
        assert_eq!(agreement, labels.len());
    }

    #[test]
    fn kmeans_k1_centroid_is_mean_and_determinism() {
        let (points, _) = blobs(15, &[(2.0, -1.0)], 1.0, 5);
        let result = kmeans(&points, 1, 9).unwrap();
        let mean = points.col_mean();
        for j in 0..2 {
            assert_relative_eq!(result.centroids.get(0, j), mean.get(0, j), epsilon = 1e-9);
        }
        let again = kmeans(&points, 1, 9).unwrap();
        assert_eq!(result.assignments, again.assignments);

        let (points2, _) = blobs(10, &[(0.0, 0.0), (5.0, 5.0)], 0.3, 11);
        let a = kmeans(&points2, 2, 13).unwrap();
        let b = kmeans(&points2, 2, 13).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn kmeans_rejects_more_clusters_than_points() {
        let points = Matrix::zeros(2, 2);
        assert!(kmeans(&points, 3, 1).is_err());
        assert!(kmeans(&points, 0, 1).is_err());
    }

    #[test]
    fn kmeans_objective_non_increasing() {
        // Run Lloyd manually via decreasing-iteration observation: inertia of
        // the final result never exceeds the inertia right after seeding.
        let (points, _) = blobs(30, &[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)], 1.0, 21);
        let result = kmeans(&points, 3, 2).unwrap();
        // Assign to seeded centroids (re-derive by rerunning with 100-iter
        // cap disabled isn't exposed; instead check the weaker but real
        // monotone fact: final inertia <= inertia of any single-cluster fit).
        let single = kmeans(&points, 1, 2).unwrap();
        assert!(result.inertia <= single.inertia);
        assert!(result.iterations <= 100);
    }

    #[test]
    fn silhouette_conventions() {
        let (points, labels) = blobs(20, &[(0.0, 0.0), (20.0, 20.0)], 0.1, 17);
        assert!(silhouette(&points, &labels).unwrap() > 0.95);

        // Random labels on one isotropic blob: near zero.
        let (points, _) = blobs(200, &[(0.0, 0.0)], 1.0, 19);
        let mut rng = rng::stream(23, "test.rand-labels");
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
        assert!(silhouette(&points, &labels).unwrap().abs() < 0.1);

        // All singletons: 0 by convention.
        let points = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(silhouette(&points, &[0, 1, 2]).unwrap(), 0.0);

        assert!(silhouette(&points, &[0, 0, 0]).is_err());
    }

    #[test]
    fn welch_hand_value() {
        let w = welch_t_one_sided(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(w.t, 3.67423, max_relative = 1e-5);
        assert_relative_eq!(w.dof, 4.0, max_relative = 1e-9);
        assert!((w.p - 0.0107).abs() < 1e-3, "p = {}", w.p);
    }

    #[test]
    fn welch_symmetry_and_edges() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let w = welch_t_one_sided(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_relative_eq!(w.p, 0.5, max_relative = 1e-9);

        let b = [0.0, 1.0, 2.0, 5.0];
        let ab = welch_t_one_sided(&a, &b).unwrap();
        let ba = welch_t_one_sided(&b, &a).unwrap();
        assert_relative_eq!(ab.t, -ba.t, max_relative = 1e-12);
        assert_relative_eq!(ab.p, 1.0 - ba.p, max_relative = 1e-9);

        assert!(welch_t_one_sided(&[1.0], &a).is_err());
        assert!(welch_t_one_sided(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn t_distribution_spot_values() {
        // P(T_1 > 1) = 1/4 exactly (Cauchy).
        assert_relative_eq!(t_sf(1.0, 1.0), 0.25, max_relative = 1e-8);
        // Classic table entries.
        assert!((t_sf(4.303, 2.0) - 0.025).abs() < 2e-4);
        assert!((t_sf(1.812, 10.0) - 0.05).abs() < 2e-4);
        assert!((t_sf(2.042, 30.0) - 0.025).abs() < 2e-4);
        assert_relative_eq!(t_sf(0.0, 7.0), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ln_gamma(5.0), 24.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn p_values_under_null_are_uniform() {
        // Two samples from the same normal, 1000 repeats: the one-sided
        // p-value should be approximately Uniform(0,1).
        let mut rng = rng::stream(31, "test.null");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut ps = Vec::with_capacity(1000);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
            ps.push(welch_t_one_sided(&a, &b).unwrap().p);
        }
        ps.sort_by(f64::total_cmp);
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let lo = (p - i as f64 / 1000.0).abs();
                let hi = (p - (i + 1) as f64 / 1000.0).abs();
                lo.max(hi)
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.06, "Kolmogorov distance {ks}");
    }

    #[test]
    fn sensitivity_hand_value_and_scaling() {
        let perfs = [0.9, 0.8, 0.7, 0.6];
        let sigmas = [0.0, 1.0, 2.0, 5.0];
        let s = sensitivity_score(&perfs, &sigmas).unwrap();
        assert!((s - 0.003571).abs() < 1e-6, "score {s}");

        let scaled: Vec<f64> = perfs.iter().map(|v| v * 3.0).collect();
        assert_relative_eq!(
            sensitivity_score(&scaled, &sigmas).unwrap(),
            9.0 * s,
            max_relative = 1e-9
        );

        assert_eq!(
            sensitivity_score(&[0.5, 0.5, 0.5], &[0.0, 1.0, 2.0]).unwrap(),
            0.0
        );
        assert!(sensitivity_score(&perfs, &[1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
