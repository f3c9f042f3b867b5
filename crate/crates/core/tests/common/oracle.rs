//! Independent reference computations for the statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// α from the full covariance matrix: k/(k−1) · (1 − tr Σ / 1ᵀΣ1).
pub fn alpha_by_covariance(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let k = rows[0].len();
    let means: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for r in rows {
                s += (r[a] - means[a]) * (r[b] - means[b]);
            }
            cov[a][b] = s / (n as f64 - 1.0);
        }
    }
    let trace: f64 = (0..k).map(|i| cov[i][i]).sum();
    let total: f64 = cov.iter().flatten().sum();
    k as f64 / (k as f64 - 1.0) * (1.0 - trace / total)
}

/// ICC(A,1) with every sum of squares accumulated cell by cell.
pub fn icc_by_double_loop(rows: &[Vec<f64>]) -> (f64, f64) {
    let n = rows.len();
    let k = rows[0].len();
    let mut grand = 0.0;
    for r in rows {
        for &x in r {
            grand += x;
        }
    }
    grand /= (n * k) as f64;
    let mut row_mean = vec![0.0; n];
    let mut col_mean = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            row_mean[i] += rows[i][j] / k as f64;
            col_mean[j] += rows[i][j] / n as f64;
        }
    }
    let (mut ssr, mut ssc, mut sse) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..k {
            ssr += (row_mean[i] - grand).powi(2);
            ssc += (col_mean[j] - grand).powi(2);
            sse += (rows[i][j] - row_mean[i] - col_mean[j] + grand).powi(2);
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    ((msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf), msr / mse)
}

pub fn t_density(x: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Composite Simpson on [0, |t|].
pub fn t_cdf_by_quadrature(t: f64, df: f64) -> f64 {
    let m = 20_000;
    let h = t.abs() / m as f64;
    let mut s = t_density(0.0, df) + t_density(t.abs(), df);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * t_density(i as f64 * h, df);
    }
    let half = s * h / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn fixture_matrices() -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![
        // Six targets rated by four judges, a classic worked example.
        vec![
            vec![9.0, 2.0, 5.0, 8.0],
            vec![6.0, 1.0, 3.0, 2.0],
            vec![8.0, 4.0, 6.0, 8.0],
            vec![7.0, 1.0, 2.0, 6.0],
            vec![10.0, 5.0, 6.0, 9.0],
            vec![6.0, 2.0, 4.0, 7.0],
        ],
        vec![
            vec![4.0, 4.5, 4.0, 3.5, 4.0],
            vec![2.0, 2.5, 2.0, 2.5, 3.0],
            vec![3.0, 3.5, 3.5, 3.0, 3.0],
            vec![5.0, 4.5, 5.0, 4.5, 4.5],
            vec![1.5, 2.0, 1.5, 2.0, 1.0],
        ],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, k) in [(10, 5), (60, 5), (300, 10), (7, 2)] {
        out.push((0..n).map(|_| (0..k).map(|_| rng.random_range(1.0..5.0)).collect()).collect());
    }
    out
}
