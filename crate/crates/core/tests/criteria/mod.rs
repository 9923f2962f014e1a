//! Acceptance criteria as plain functions. Each returns a one-line detail on
//! success and a description of the violation on failure, so the same checks
//! back both the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::time::Instant;

use lexamb_core::ambiguity::TypeMoments;
use lexamb_core::embedstore::{StoreHeader, StoreKind};
use lexamb_core::probe::{loss_and_grad, train_probe, MaskedSet, ProbeHyper, ProbeParams};
use lexamb_core::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::oracles;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples from N(0, diag(σ²)) must yield a bound within 0.05 bits of the
/// analytic entropy, in under a second.
pub fn gaussian_bound_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigmas = [0.5, 1.0, 2.0, 0.1, 3.0, 1.5, 0.7, 1.2];
    let mut acc = TypeMoments::new(sigmas.len());
    let mut x = vec![0.0; sigmas.len()];
    for _ in 0..10_000 {
        for (xi, s) in x.iter_mut().zip(&sigmas) {
            *xi = s * normal(&mut rng);
        }
        acc.accumulate(&x).map_err(|e| e.to_string())?;
    }
    let est = acc.entropy_bound(1e-10).map_err(|e| e.to_string())?.entropy_bits;
    let analytic: f64 = sigmas
        .iter()
        .map(|s| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s * s).log2())
        .sum();
    let elapsed = start.elapsed().as_secs_f64();
    ensure((est - analytic).abs() <= 0.05, || format!("estimate {est:.4} vs analytic {analytic:.4}"))?;
    ensure(elapsed < 1.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("estimate {est:.4} bits, analytic {analytic:.4} bits, {elapsed:.3}s"))
}

fn two_pass(data: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let d = data[0].len();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var = (0..d)
        .map(|j| data.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    (mean, var)
}

fn close_all(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max)
}

/// Streaming moments must match the two-pass reference, and merging seven
/// shards must match the sequential pass, both at relative error 1e-9.
pub fn streaming_matches_two_pass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..6).map(|j| 1e3 + j as f64 + (0.01 + j as f64) * normal(&mut rng)).collect())
        .collect();
    let (mean, var) = two_pass(&data);
    let mut whole = TypeMoments::new(6);
    for r in &data {
        whole.accumulate(r).map_err(|e| e.to_string())?;
    }
    let wvar = whole.variance().map_err(|e| e.to_string())?;
    let streaming_err = max_rel_err(&wvar, &var);
    ensure(max_rel_err(whole.mean(), &mean) < 1e-9, || "streaming mean disagrees".into())?;
    ensure(streaming_err < 1e-9, || format!("streaming variance relative error {streaming_err:.2e}"))?;

    let bounds = [0, 3, 1_400, 1_401, 4_000, 6_666, 9_999, 10_000];
    let mut merged = TypeMoments::new(6);
    for w in bounds.windows(2) {
        let mut shard = TypeMoments::new(6);
        for r in &data[w[0]..w[1]] {
            shard.accumulate(r).map_err(|e| e.to_string())?;
        }
        merged = merged.merge(&shard).map_err(|e| e.to_string())?;
    }
    let mvar = merged.variance().map_err(|e| e.to_string())?;
    let merge_err = max_rel_err(&mvar, &wvar);
    ensure(max_rel_err(merged.mean(), whole.mean()) < 1e-9, || "merged mean disagrees".into())?;
    ensure(merge_err < 1e-9, || format!("merged variance relative error {merge_err:.2e}"))?;
    Ok(format!(
        "variance relative error {streaming_err:.1e} streaming, {merge_err:.1e} for the 7-way merge"
    ))
}

/// Analytic gradients must match central differences to relative error 1e-4.
pub fn probe_gradient_check() -> Outcome {
    let (dim, hidden, vocab) = (8, 5, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut params = ProbeParams::init(dim, hidden, vocab, &mut rng);
    // Shift biases so that no hidden unit sits on the relu kink.
    params.b1.iter_mut().for_each(|b| *b = 0.3);
    let inputs: Vec<Vec<f64>> = (0..6).map(|_| (0..dim).map(|_| normal(&mut rng)).collect()).collect();
    let targets: Vec<u32> = (0..6).map(|i| (i * 3 % vocab) as u32).collect();
    let batch = || targets.iter().copied().zip(inputs.iter().map(|v| v.as_slice()));
    let loss_of = |p: &ProbeParams| loss_and_grad(p, batch()).map(|(l, _)| l);
    let (_, grad) = loss_and_grad(&params, batch()).map_err(|e| e.to_string())?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    type Field = fn(&mut ProbeParams) -> &mut Vec<f64>;
    let fields: [Field; 4] = [|p| &mut p.w1, |p| &mut p.b1, |p| &mut p.w2, |p| &mut p.b2];
    let mut g = grad;
    for field in fields {
        let len = field(&mut params.clone()).len();
        for i in 0..len {
            let mut plus = params.clone();
            field(&mut plus)[i] += h;
            let mut minus = params.clone();
            field(&mut minus)[i] -= h;
            let numeric = (loss_of(&plus).map_err(|e| e.to_string())? - loss_of(&minus).map_err(|e| e.to_string())?) / (2.0 * h);
            let analytic = field(&mut g)[i];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            let rel = (numeric - analytic).abs() / denom;
            if numeric.abs().max(analytic.abs()) > 1e-7 {
                worst = worst.max(rel);
            }
            checked += 1;
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.2e}"))?;
    Ok(format!("{checked} parameters, max relative error {worst:.2e}"))
}

fn masked_header(vocab: usize, dim: u32) -> StoreHeader {
    let pairs: Vec<(String, u64)> = (0..vocab).map(|i| (format!("w{i}"), 1000)).collect();
    StoreHeader::from_pairs(StoreKind::MaskedStates, dim, pairs).unwrap()
}

fn mean_ce_bits(params: &ProbeParams, data: &MaskedSet) -> Result<f64, String> {
    let mut total = 0.0;
    for (t, x) in data.iter() {
        let lp = params.forward_log2(x).map_err(|e| e.to_string())?;
        total -= lp[t as usize];
    }
    Ok(total / data.len() as f64)
}

/// Five well-separated clusters in 16 dimensions; the probe must reach a
/// held-in cross-entropy below 0.1 bits.
pub fn probe_separable() -> Outcome {
    let start = Instant::now();
    let (vocab, dim) = (5, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let centers: Vec<Vec<f64>> = (0..vocab).map(|_| (0..dim).map(|_| 3.0 * normal(&mut rng)).collect()).collect();
    let mut data = MaskedSet::new(dim);
    for i in 0..20_000 {
        let w = i % vocab;
        let x: Vec<f32> = centers[w].iter().map(|c| (c + 0.3 * normal(&mut rng)) as f32).collect();
        data.push(w as u32, &x);
    }
    let header = masked_header(vocab, dim as u32);
    let trained = train_probe(&header, &data, &ProbeHyper::default()).map_err(|e| e.to_string())?;
    let ce = mean_ce_bits(&trained.params, &data)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(ce < 0.1, || format!("held-in cross-entropy {ce:.4} bits"))?;
    ensure(elapsed < 30.0, || format!("took {elapsed:.1}s"))?;
    Ok(format!("held-in cross-entropy {ce:.4} bits, {elapsed:.2}s"))
}

/// Labels independent of inputs over 8 balanced words: cross-entropy must
/// stay within 0.2 bits of log2 8 = 3.
pub fn probe_shuffled_labels() -> Outcome {
    let start = Instant::now();
    let (vocab, dim) = (8, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut data = MaskedSet::new(dim);
    for i in 0..20_000 {
        let x: Vec<f32> = (0..dim).map(|_| normal(&mut rng) as f32).collect();
        data.push((i % vocab) as u32, &x);
    }
    let header = masked_header(vocab, dim as u32);
    let trained = train_probe(&header, &data, &ProbeHyper::default()).map_err(|e| e.to_string())?;
    let ce = mean_ce_bits(&trained.params, &data)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure((ce - 3.0).abs() <= 0.2, || format!("cross-entropy {ce:.4} bits"))?;
    ensure(elapsed < 30.0, || format!("took {elapsed:.1}s"))?;
    Ok(format!("cross-entropy {ce:.4} bits, {elapsed:.2}s"))
}

/// Pearson must recover a planted correlation of -0.4 at n = 2000 within
/// 0.05, with Spearman agreeing in sign.
pub fn planted_correlation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let rho: f64 = -0.4;
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|&a| rho * a + (1.0 - rho * rho).sqrt() * normal(&mut rng)).collect();
    let p = stats::pearson(&x, &y).map_err(|e| e.to_string())?;
    let s = stats::spearman(&x, &y).map_err(|e| e.to_string())?;
    ensure((p.rho - rho).abs() <= 0.05, || format!("pearson {:.4}", p.rho))?;
    ensure(s.rho < 0.0, || format!("spearman {:.4} has the wrong sign", s.rho))?;
    Ok(format!("pearson {:.4}, spearman {:.4}", p.rho, s.rho))
}

/// Residual variance proportional to x² must be detected by White's test
/// at p < 0.01 with n = 500.
pub fn planted_heteroscedasticity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x: Vec<f64> = (0..500).map(|_| rng.random_range(0.5..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|&a| 1.0 + 2.0 * a + a * normal(&mut rng)).collect();
    let w = stats::white_test(&y, &[&x]).map_err(|e| e.to_string())?;
    ensure(w.p_value < 0.01, || format!("p = {:.4}", w.p_value))?;
    Ok(format!("LM {:.2} on {} df, p = {:.2e}", w.lm_statistic, w.df, w.p_value))
}

/// Hand-frozen high-precision values for a fixed 12-point sample.
pub fn frozen_reference_values() -> Result<(), String> {
    let x = [0.52, 1.93, -0.41, 3.07, 2.2, -1.15, 0.88, 4.31, 1.6, -0.27, 2.74, 0.05];
    let y = [1.1, 2.35, 0.2, 2.9, 1.7, -0.4, 0.3, 3.8, 2.6, 0.9, 1.95, -0.6];
    let p = stats::pearson(&x, &y).map_err(|e| e.to_string())?;
    let s = stats::spearman(&x, &y).map_err(|e| e.to_string())?;
    ensure((p.rho - 0.901_239_802_003_922).abs() < 1e-10, || format!("frozen pearson rho {}", p.rho))?;
    ensure((p.p_value - 6.256_057_806_719_567e-5).abs() < 1e-6, || format!("frozen pearson p {}", p.p_value))?;
    ensure((s.rho - 0.867_132_867_132_867_1).abs() < 1e-10, || format!("frozen spearman rho {}", s.rho))?;
    ensure((s.p_value - 2.598_118_498_614_826_6e-4).abs() < 1e-6, || format!("frozen spearman p {}", s.p_value))?;
    Ok(())
}

fn with_ties(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.random_range(0..15) as f64) * 0.5).collect()
}

/// 100 random instances of each statistic against the brute-force oracles.
pub fn statistical_oracles() -> Outcome {
    frozen_reference_values()?;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for trial in 0..100 {
        let n = rng.random_range(10..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|&a| 0.3 * a + 4.0 * normal(&mut rng)).collect();
        let p = stats::pearson(&x, &y).map_err(|e| e.to_string())?;
        let r = oracles::pearson_r(&x, &y);
        ensure((p.rho - r).abs() < 1e-6, || format!("trial {trial}: pearson {} vs {r}", p.rho))?;
        let op = oracles::correlation_p(r, n);
        ensure((p.p_value - op).abs() < 1e-6, || format!("trial {trial}: pearson p {} vs {op}", p.p_value))?;

        let (tx, ty) = (with_ties(&mut rng, n), with_ties(&mut rng, n));
        ensure(stats::average_ranks(&tx) == oracles::brute_ranks(&tx), || format!("trial {trial}: ranks"))?;
        if let Ok(s) = stats::spearman(&tx, &ty) {
            let r = oracles::pearson_r(&oracles::brute_ranks(&tx), &oracles::brute_ranks(&ty));
            ensure((s.rho - r).abs() < 1e-6, || format!("trial {trial}: spearman {} vs {r}", s.rho))?;
            let op = oracles::correlation_p(r, n);
            ensure((s.p_value - op).abs() < 1e-6, || format!("trial {trial}: spearman p {} vs {op}", s.p_value))?;
        }

        let m = rng.random_range(1..=1000);
        let pv: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.2) { rng.random_range(0.0..0.001) } else { rng.random::<f64>() })
            .collect();
        let bh = stats::bh_adjust(&pv, 0.05).map_err(|e| e.to_string())?;
        ensure(bh.rejected == oracles::bh_reject(&pv, 0.05), || format!("trial {trial}: BH rejection set differs"))?;
        ensure(close_all(&bh.adjusted, &oracles::bh_adjusted(&pv), 1e-12), || format!("trial {trial}: BH adjusted"))?;

        let n = rng.random_range(20..300);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 * cols[0][i] - 0.2 * cols[1][i] + 0.1 * cols[0][i] * cols[2][i] + normal(&mut rng))
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let fit = stats::ols_standardized(&y, &refs).map_err(|e| e.to_string())?;
        let o = oracles::ols_standardized(&y, &cols);
        let pairs = [
            (&fit.coefficients, &o.coefficients, "coefficients"),
            (&fit.std_errors, &o.std_errors, "standard errors"),
            (&fit.p_values, &o.p_values, "p-values"),
        ];
        for (a, b, what) in pairs {
            ensure(a.iter().zip(b.iter()).all(|(u, v)| (u - v).abs() < 1e-6), || {
                format!("trial {trial}: OLS {what} {a:?} vs {b:?}")
            })?;
        }
        ensure((fit.r_squared - o.r_squared).abs() < 1e-6, || format!("trial {trial}: R²"))?;
    }
    Ok("100 instances each of pearson, spearman, BH and OLS agree with oracles".into())
}

/// Under the null, nominal 5% tests must reject in 5% ± 2% of 1000 trials.
pub fn null_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let trials = 1000;
    let (mut pearson_rej, mut white_rej) = (0, 0);
    for _ in 0..trials {
        let x: Vec<f64> = (0..100).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..100).map(|_| normal(&mut rng)).collect();
        if stats::pearson(&x, &y).map_err(|e| e.to_string())?.p_value < 0.05 {
            pearson_rej += 1;
        }
        let x2: Vec<f64> = (0..200).map(|_| normal(&mut rng)).collect();
        let y2: Vec<f64> = x2.iter().map(|&a| 1.0 + 0.5 * a + normal(&mut rng)).collect();
        if stats::white_test(&y2, &[&x2]).map_err(|e| e.to_string())?.p_value < 0.05 {
            white_rej += 1;
        }
    }
    let pr = pearson_rej as f64 / trials as f64;
    let wr = white_rej as f64 / trials as f64;
    ensure((pr - 0.05).abs() <= 0.02, || format!("pearson rejection rate {pr:.3}"))?;
    ensure((wr - 0.05).abs() <= 0.02, || format!("white rejection rate {wr:.3}"))?;
    Ok(format!("rejection rates: pearson {pr:.3}, white {wr:.3}"))
}
