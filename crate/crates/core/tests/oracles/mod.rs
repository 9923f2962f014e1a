//! Reference computations that share no code path with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::PI;

/// Lanczos approximation (g = 7, n = 9) of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Two-sided Student-t p-value by quadrature of the density.
/// The tail is integrated after the substitution u = 1/t, which maps it to a finite interval.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let t = t.abs();
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
    let density = |x: f64| (log_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    if t <= 1.0 {
        let central = simpson(density, 0.0, t, 4000);
        return (1.0 - 2.0 * central).clamp(0.0, 1.0);
    }
    // ∫_t^∞ f(x) dx = ∫_0^{1/t} f(1/u) / u² du
    let tail = simpson(
        |u| if u == 0.0 { 0.0 } else { density(1.0 / u) / (u * u) },
        0.0,
        1.0 / t,
        4000,
    );
    (2.0 * tail).clamp(0.0, 1.0)
}

/// Textbook single-pass-sums Pearson formula.
pub fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub fn correlation_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// O(n²) mid-rank: 1 + #smaller + (#equal - 1) / 2.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let smaller = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Rejection set straight from the definition: find the largest k with
/// p_(k) <= kα/m and reject every hypothesis whose p is at most p_(k).
pub fn bh_reject(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut threshold = None;
    for k in (1..=m).rev() {
        if sorted[k - 1] <= k as f64 * alpha / m as f64 {
            threshold = Some(sorted[k - 1]);
            break;
        }
    }
    p.iter().map(|&v| threshold.is_some_and(|t| v <= t)).collect()
}

/// Adjusted p_(i) = min over j >= i of m p_(j) / j, capped at 1, by brute force.
pub fn bh_adjusted(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut out = vec![0.0; m];
    for i in 0..m {
        let mut best = f64::INFINITY;
        for j in i..m {
            best = best.min(m as f64 * p[idx[j]] / (j + 1) as f64);
        }
        out[idx[i]] = best.min(1.0);
    }
    out
}

pub struct OlsOracle {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
}

fn zscore(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter().map(|x| (x - m) / sd).collect()
}

/// Standardized OLS via modified Gram-Schmidt QR and back-substitution.
pub fn ols_standardized(y: &[f64], columns: &[Vec<f64>]) -> OlsOracle {
    let n = y.len();
    let k = columns.len() + 1;
    let zy = zscore(y);
    let mut q: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
        .chain(columns.iter().map(|c| zscore(c)))
        .collect();
    let mut r = vec![vec![0.0; k]; k];
    for j in 0..k {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = q[j].iter().map(|a| a * a).sum::<f64>().sqrt();
        r[j][j] = norm;
        q[j].iter_mut().for_each(|a| *a /= norm);
    }
    let qty: Vec<f64> = q.iter().map(|qi| qi.iter().zip(&zy).map(|(a, b)| a * b).sum()).collect();
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r[i][j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        for i in (0..k).rev() {
            let target = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..k).map(|j| r[i][j] * rinv[j][c]).sum();
            rinv[i][c] = (target - s) / r[i][i];
        }
    }
    let fitted: Vec<f64> = (0..n)
        .map(|row| {
            beta[0]
                + columns
                    .iter()
                    .enumerate()
                    .map(|(j, _)| beta[j + 1] * zscore(&columns[j])[row])
                    .sum::<f64>()
        })
        .collect();
    let ssr: f64 = zy.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst: f64 = zy.iter().map(|a| a * a).sum();
    let df = (n - k) as f64;
    let sigma2 = ssr / df;
    let std_errors: Vec<f64> = (0..k)
        .map(|i| (sigma2 * (0..k).map(|j| rinv[i][j] * rinv[i][j]).sum::<f64>()).sqrt())
        .collect();
    let p_values = beta
        .iter()
        .zip(&std_errors)
        .map(|(b, s)| t_two_sided_p(b / s, df))
        .collect();
    OlsOracle {
        coefficients: beta,
        std_errors,
        p_values,
        r_squared: 1.0 - ssr / sst,
    }
}

/// Regularized lower incomplete gamma by series expansion, for the chi-squared CDF.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    let a = df / 2.0;
    let z = x / 2.0;
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..10_000 {
        term *= z / (a + n as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    let lower = (a * z.ln() - z - ln_gamma(a)).exp() * sum;
    (1.0 - lower).clamp(0.0, 1.0)
}
