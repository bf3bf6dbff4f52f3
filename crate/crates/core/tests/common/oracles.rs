use super::dense::Mat;

/// Sorts every strict-upper pair by (score desc, i asc, j asc) and keeps the
/// first `round(density · N² / 2)`, capped at the number of pairs.
pub fn brute_force_sparsify(scores: &Mat, density: f64) -> Vec<(usize, usize)> {
    let n = scores.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((scores[i][j], i, j));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let k = ((density * (n * n) as f64 / 2.0).round() as usize).min(pairs.len());
    let mut kept: Vec<(usize, usize)> = pairs[..k].iter().map(|&(_, i, j)| (i, j)).collect();
    kept.sort_unstable();
    kept
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Mat) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
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
    (0..n).map(|i| a[i][i]).collect()
}

/// Optimal rank-`k` Frobenius error of a symmetric matrix: the singular
/// values are the absolute eigenvalues, and the error is the norm of the
/// `n − k` smallest.
pub fn optimal_rank_k_error(m: &Mat, k: usize) -> f64 {
    let mut sv: Vec<f64> = jacobi_eigenvalues(m).into_iter().map(f64::abs).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt()
}
