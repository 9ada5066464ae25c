//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Minimum over all active subsets of the equality-constrained minimizer
/// that is feasible for the full system.
pub fn brute_force(rows: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = rows[0].len();
    let m = rows.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let delta = if idx.is_empty() {
            vec![0.0; n]
        } else {
            let gram: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| dot(&rows[i], &rows[j])).collect())
                .collect();
            let Some(lam) = solve_dense(gram, idx.iter().map(|&i| b[i]).collect()) else {
                continue;
            };
            let mut d = vec![0.0; n];
            for (l, &i) in lam.iter().zip(&idx) {
                for k in 0..n {
                    d[k] += l * rows[i][k];
                }
            }
            d
        };
        let feasible = rows.iter().zip(b).all(|(r, &bp)| dot(r, &delta) >= bp - 1e-9);
        if feasible {
            let norm = dot(&delta, &delta);
            if best.as_ref().is_none_or(|(bn, _)| norm < *bn) {
                best = Some((norm, delta));
            }
        }
    }
    best.map(|(_, d)| d)
}

