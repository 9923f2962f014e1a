//! Statistics over per-type score columns: correlation tests, Benjamini-Hochberg
//! adjustment, standardized OLS, White's heteroscedasticity test and a Huber
//! robust line fit.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, have {have}")]
    TooFew { needed: usize, have: usize },
    #[error("correlation undefined: {0} has zero variance")]
    ConstantInput(&'static str),
    #[error("p-value {value} at index {index} is outside [0, 1]")]
    BadPValue { index: usize, value: f64 },
    #[error("predictor column {0} is constant")]
    ConstantPredictor(usize),
    #[error("response is constant")]
    ConstantResponse,
    #[error("rank-deficient design: column {column} is collinear with columns {with:?}")]
    RankDeficient { column: usize, with: Vec<usize> },
    #[error("non-finite value in input")]
    NonFinite,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub method: CorrelationMethod,
    pub rho: f64,
    pub n: usize,
    pub p_value: f64,
    pub p_adjusted: Option<f64>,
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::TooFew {
            needed: min,
            have: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Upper-tail probability of the chi-squared distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive degrees of freedom").sf(x)
}

fn correlation_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    t_two_sided_p(r * (df / denom).sqrt(), df)
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantInput("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ConstantInput("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample correlation with a two-sided t-test p-value on `n - 2` df.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y, 3)?;
    let rho = pearson_r(x, y)?;
    Ok(CorrelationResult {
        method: CorrelationMethod::Pearson,
        rho,
        n: x.len(),
        p_value: correlation_p(rho, x.len()),
        p_adjusted: None,
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of average ranks, p-value via the same t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y, 3)?;
    let rho = pearson_r(&average_ranks(x), &average_ranks(y))?;
    Ok(CorrelationResult {
        method: CorrelationMethod::Spearman,
        rho,
        n: x.len(),
        p_value: correlation_p(rho, x.len()),
        p_adjusted: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BhResult {
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment. Outputs are in input order.
pub fn bh_adjust(p_values: &[f64], alpha: f64) -> Result<BhResult> {
    for (index, &value) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(StatsError::BadPValue { index, value });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let rank = (pos + 1) as f64;
        running = running.min(p_values[i] * m as f64 / rank);
        adjusted[i] = running.min(1.0);
    }

    let cutoff = order
        .iter()
        .enumerate()
        .filter(|&(pos, &i)| p_values[i] <= (pos + 1) as f64 * alpha / m as f64)
        .map(|(pos, _)| pos + 1)
        .max()
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    Ok(BhResult { adjusted, rejected })
}

/// `**` below 0.01, `*` below 0.1.
pub fn significance_mark(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Ordinary least squares with an intercept, in the units of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    /// Intercept first, then one entry per predictor column.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub df_resid: usize,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub sst: f64,
}

fn design(columns: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}

/// Relative residual variance below which a column counts as a linear
/// combination of the ones before it.
const COLLINEARITY_TOL: f64 = 1e-10;

fn check_rank(columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    for (j, col) in centered.iter().enumerate() {
        let ss: f64 = col.iter().map(|v| v * v).sum();
        let scale: f64 = columns[j].iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if ss <= 1e-24 * scale || ss == 0.0 {
            return Err(StatsError::ConstantPredictor(j));
        }
        if j == 0 {
            continue;
        }
        let prev = DMatrix::from_fn(n, j, |i, k| centered[k][i]);
        let target = DVector::from_column_slice(col);
        let gram = prev.transpose() * &prev;
        let rhs = prev.transpose() * &target;
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => continue,
        };
        let resid = &target - &prev * &beta;
        if resid.norm_squared() < COLLINEARITY_TOL * ss {
            let with = (0..j).filter(|&k| beta[k].abs() > 1e-8).collect();
            return Err(StatsError::RankDeficient { column: j, with });
        }
    }
    Ok(())
}

fn ols_impl(y: &[f64], columns: &[&[f64]], inference: bool) -> Result<OlsFit> {
    let n = y.len();
    let k = columns.len();
    for c in columns {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(n, c.len()));
        }
    }
    if n < k + 2 {
        return Err(StatsError::TooFew { needed: k + 2, have: n });
    }
    if y.iter().chain(columns.iter().flat_map(|c| c.iter())).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    check_rank(columns)?;

    let x = design(columns, n);
    let yv = DVector::from_column_slice(y);
    let xt = x.transpose();
    let chol = (&xt * &x).cholesky().ok_or(StatsError::RankDeficient {
        column: k.saturating_sub(1),
        with: (0..k.saturating_sub(1)).collect(),
    })?;
    let beta = chol.solve(&(&xt * &yv));
    let residuals: Vec<f64> = (&yv - &x * &beta).iter().copied().collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    let df_resid = n - k - 1;

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let (std_errors, t_values, p_values) = if inference {
        let sigma2 = ssr / df_resid as f64;
        let inv = chol.inverse();
        let se: Vec<f64> = (0..=k).map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt()).collect();
        let t: Vec<f64> = coefficients
            .iter()
            .zip(&se)
            .map(|(&b, &s)| match (b == 0.0, s == 0.0) {
                (true, true) => 0.0,
                (false, true) => b.signum() * f64::INFINITY,
                _ => b / s,
            })
            .collect();
        let p = t.iter().map(|&t| t_two_sided_p(t, df_resid as f64)).collect();
        (se, t, p)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    Ok(OlsFit {
        coefficients,
        std_errors,
        t_values,
        p_values,
        r_squared,
        df_resid,
        residuals,
        ssr,
        sst,
    })
}

/// OLS with intercept and classical standard errors.
pub fn ols_fit(y: &[f64], columns: &[&[f64]]) -> Result<OlsFit> {
    ols_impl(y, columns, true)
}

/// Z-scores using the sample standard deviation.
pub fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    if v.len() < 2 || ss == 0.0 {
        return None;
    }
    let sd = (ss / (v.len() - 1) as f64).sqrt();
    Some(v.iter().map(|x| (x - m) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Intercept first, then one entry per standardized predictor.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
    pub df_resid: usize,
}

/// OLS after z-scoring the response and every predictor, so slopes are in
/// standard deviations per standard deviation.
pub fn ols_standardized(y: &[f64], columns: &[&[f64]]) -> Result<RegressionResult> {
    let zy = zscore(y).ok_or(StatsError::ConstantResponse)?;
    let zx: Vec<Vec<f64>> = columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if c.len() != y.len() {
                return Err(StatsError::LengthMismatch(y.len(), c.len()));
            }
            zscore(c).ok_or(StatsError::ConstantPredictor(j))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = zx.iter().map(Vec::as_slice).collect();
    let fit = ols_fit(&zy, &refs)?;
    Ok(RegressionResult {
        coefficients: fit.coefficients,
        std_errors: fit.std_errors,
        t_values: fit.t_values,
        p_values: fit.p_values,
        r_squared: fit.r_squared,
        n: y.len(),
        df_resid: fit.df_resid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeteroTestResult {
    pub lm_statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub p_adjusted: Option<f64>,
}

/// Sum of squared residuals below this fraction of the response's total sum
/// of squares is treated as an exact fit.
const EXACT_FIT_TOL: f64 = 1e-20;

/// White's test: `n * R^2` of squared OLS residuals regressed on the
/// predictors, their squares and pairwise products.
pub fn white_test(y: &[f64], columns: &[&[f64]]) -> Result<HeteroTestResult> {
    let k = columns.len();
    let df = 2 * k + k * (k - 1) / 2;
    // Standardizing leaves the auxiliary column span, hence LM, unchanged.
    let z: Vec<Vec<f64>> = columns
        .iter()
        .enumerate()
        .map(|(j, c)| zscore(c).ok_or(StatsError::ConstantPredictor(j)))
        .collect::<Result<_>>()?;
    let zr: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let fit = ols_impl(y, &zr, false)?;
    let n = y.len();
    let no_signal = HeteroTestResult {
        lm_statistic: 0.0,
        df,
        p_value: 1.0,
        p_adjusted: None,
    };
    if fit.sst == 0.0 || fit.ssr <= EXACT_FIT_TOL * fit.sst {
        return Ok(no_signal);
    }

    let u: Vec<f64> = fit.residuals.iter().map(|e| e * e).collect();
    let mut aux: Vec<Vec<f64>> = z.clone();
    for a in 0..k {
        for b in a..k {
            aux.push(z[a].iter().zip(&z[b]).map(|(p, q)| p * q).collect());
        }
    }
    let aux_refs: Vec<&[f64]> = aux.iter().map(Vec::as_slice).collect();
    let aux_fit = ols_impl(&u, &aux_refs, false)?;
    let mean_u = mean(&u);
    if aux_fit.sst <= EXACT_FIT_TOL * mean_u * mean_u * n as f64 {
        return Ok(no_signal);
    }
    let lm = n as f64 * aux_fit.r_squared;
    Ok(HeteroTestResult {
        lm_statistic: lm,
        df,
        p_value: chi2_sf(lm, df as f64),
        p_adjusted: None,
    })
}

pub const HUBER_C: f64 = 1.345;
const MAD_TO_SIGMA: f64 = 0.6745;
const HUBER_MAX_ITER: usize = 50;
const HUBER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HuberFit {
    pub slope: f64,
    pub intercept: f64,
    /// Weighted least-squares solves, counting the initial OLS fit.
    pub iterations: usize,
    pub converged: bool,
    /// Residual scale collapsed to zero on non-constant data; the OLS line is returned.
    pub ols_fallback: bool,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((a, b), wi) in x.iter().zip(y).zip(w) {
        sxy += wi * (a - mx) * (b - my);
        sxx += wi * (a - mx) * (a - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mad_scale(r: &[f64]) -> f64 {
    let mut tmp = r.to_vec();
    let med = median(&mut tmp);
    let mut dev: Vec<f64> = r.iter().map(|v| (v - med).abs()).collect();
    median(&mut dev) / MAD_TO_SIGMA
}

/// Huber M-estimate of a straight line by iteratively reweighted least
/// squares, starting from OLS.
pub fn huber_fit(x: &[f64], y: &[f64]) -> Result<HuberFit> {
    check_pair(x, y, 3)?;
    let n = x.len();
    let mut w = vec![1.0; n];
    let (mut slope, mut intercept) = weighted_line(x, y, &w).ok_or(StatsError::ConstantInput("x"))?;
    let residuals = |s: f64, b: f64| -> Vec<f64> { x.iter().zip(y).map(|(xi, yi)| yi - (b + s * xi)).collect() };

    let y_constant = y.iter().all(|v| *v == y[0]);
    let scale = mad_scale(&residuals(slope, intercept));
    if scale == 0.0 {
        return Ok(HuberFit {
            slope,
            intercept,
            iterations: 1,
            converged: true,
            ols_fallback: !y_constant,
        });
    }

    let mut iterations = 1;
    let mut converged = false;
    while iterations < HUBER_MAX_ITER {
        let r = residuals(slope, intercept);
        let s = mad_scale(&r);
        if s == 0.0 {
            // more than half the points are fitted exactly
            converged = true;
            break;
        }
        for (wi, ri) in w.iter_mut().zip(&r) {
            let u = (ri / s).abs();
            *wi = if u <= HUBER_C { 1.0 } else { HUBER_C / u };
        }
        let Some((ns, ni)) = weighted_line(x, y, &w) else { break };
        iterations += 1;
        let change = (ns - slope).abs().max((ni - intercept).abs());
        slope = ns;
        intercept = ni;
        if change < HUBER_TOL {
            converged = true;
            break;
        }
    }
    Ok(HuberFit {
        slope,
        intercept,
        iterations,
        converged,
        ols_fallback: false,
    })
}
