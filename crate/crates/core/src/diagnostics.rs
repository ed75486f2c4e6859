//! Test battery: recursive-residual CUSUM stability test, SSR-based Granger
//! causality F-test, augmented Dickey-Fuller unit-root test, and descriptive
//! statistics.

use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::ols::{fit_ols, Design};

/// Recursive residuals starting after the first `start` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveResiduals {
    /// Number of leading rows used for the initial fit (`k` unless the
    /// leading `k x k` block was singular).
    pub start: usize,
    pub values: Vec<f64>,
}

fn rows_of(design: &Design) -> Vec<Vec<f64>> {
    let x = design.matrix();
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Standardized one-step prediction errors
/// `w_t = (y_t - x_t' b_{t-1}) / sqrt(1 + x_t' (X'X)_{t-1}^{-1} x_t)`.
///
/// If the leading `k` rows are singular the start index advances to the
/// first invertible prefix.
pub fn recursive_residuals(y: &[f64], design: &Design) -> Result<RecursiveResiduals> {
    let n = y.len();
    let k = design.ncols();
    if n != design.nrows() {
        return Err(Error::Data("regressand and design lengths differ".into()));
    }
    if n <= k {
        return Err(Error::InsufficientData { needed: k + 1, got: n });
    }
    let rows = rows_of(design);
    let x = design.matrix();

    let mut start = k;
    let (mut p, mut b) = loop {
        if start >= n {
            return Err(Error::DegenerateStart(k));
        }
        let xs = x.rows(0, start).into_owned();
        let xtx = xs.transpose() * &xs;
        let svd = xtx.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smax > 0.0 && smin > smax * 1e-12 {
            if let Some(inv) = xtx.try_inverse() {
                let ys = DVector::from_column_slice(&y[..start]);
                let b = &inv * (xs.transpose() * ys);
                break (inv, b);
            }
        }
        start += 1;
    };

    let mut values = Vec::with_capacity(n - start);
    for t in start..n {
        let xt = DVector::from_column_slice(&rows[t]);
        let px = &p * &xt;
        let f = 1.0 + xt.dot(&px);
        let err = y[t] - xt.dot(&b);
        values.push(err / f.sqrt());
        let gain = &px / f;
        b += &gain * err;
        p -= &gain * px.transpose();
        p = (&p + p.transpose()) * 0.5;
    }
    Ok(RecursiveResiduals { start, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CusumLevel {
    One,
    #[default]
    Five,
    Ten,
}

impl CusumLevel {
    /// Boundary scale `a` for the lines `+-a [sqrt(T-k) + 2 (t-k) / sqrt(T-k)]`.
    pub fn boundary_scale(self) -> f64 {
        match self {
            CusumLevel::One => 1.143,
            CusumLevel::Five => 0.948,
            CusumLevel::Ten => 0.850,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumResult {
    pub recursive_residuals: Vec<f64>,
    /// Starts with the origin `W = 0`, then one point per residual.
    pub cusum_path: Vec<f64>,
    pub boundary_scale: f64,
    pub crossed: bool,
    /// Observation index (0-based, into `y`) of the first boundary crossing.
    pub first_crossing: Option<usize>,
    /// `max_t |W_t| / boundary_t`; above one means the test rejects.
    pub max_boundary_ratio: f64,
    pub start: usize,
}

pub fn cusum_test(y: &[f64], design: &Design, level: CusumLevel) -> Result<CusumResult> {
    let rr = recursive_residuals(y, design)?;
    let w = &rr.values;
    let m = w.len();
    let mean = w.iter().sum::<f64>() / m as f64;
    let mut sigma = if m > 1 {
        (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
    } else {
        0.0
    };
    // an exact fit leaves only rounding noise in w; scaling that up to unit
    // variance would manufacture a random walk
    let y_scale = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if sigma <= 1e-10 * y_scale {
        sigma = 0.0;
    }
    let a = level.boundary_scale();
    let root = (m as f64).sqrt();
    let mut path = Vec::with_capacity(m + 1);
    path.push(0.0);
    let mut acc = 0.0;
    let mut first_crossing = None;
    let mut max_ratio: f64 = 0.0;
    for (j, v) in w.iter().enumerate() {
        if sigma > 0.0 {
            acc += v / sigma;
        }
        path.push(acc);
        let bound = a * (root + 2.0 * (j + 1) as f64 / root);
        let ratio = acc.abs() / bound;
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 && first_crossing.is_none() {
            first_crossing = Some(rr.start + j);
        }
    }
    Ok(CusumResult {
        recursive_residuals: rr.values,
        cusum_path: path,
        boundary_scale: a,
        crossed: first_crossing.is_some(),
        first_crossing,
        max_boundary_ratio: max_ratio,
        start: rr.start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrangerResult {
    pub f_stat: f64,
    pub p_value: f64,
    pub lags: usize,
    pub df_num: usize,
    pub df_den: usize,
    pub ssr_restricted: f64,
    pub ssr_unrestricted: f64,
}

pub const DEFAULT_GRANGER_LAGS: usize = 4;

/// Lag matrix rows for `t = lags..n`: `[1, effect_{t-1..t-lags}, cause_{t-1..t-lags}]`.
fn granger_designs(cause: &[f64], effect: &[f64], lags: usize) -> (Vec<f64>, Design, Design) {
    let n = effect.len();
    let y: Vec<f64> = effect[lags..].to_vec();
    let own: Vec<Vec<f64>> = (1..=lags).map(|l| (lags..n).map(|t| effect[t - l]).collect()).collect();
    let other: Vec<Vec<f64>> = (1..=lags).map(|l| (lags..n).map(|t| cause[t - l]).collect()).collect();
    let own_refs: Vec<&[f64]> = own.iter().map(|c| c.as_slice()).collect();
    let all_refs: Vec<&[f64]> = own.iter().chain(&other).map(|c| c.as_slice()).collect();
    (
        y,
        Design::from_columns(&own_refs, true),
        Design::from_columns(&all_refs, true),
    )
}

/// Does `cause` help predict `effect` beyond `effect`'s own lags? Both
/// regressions use the same lag-trimmed rows.
pub fn granger_test(cause: &[f64], effect: &[f64], lags: usize) -> Result<GrangerResult> {
    if lags == 0 {
        return Err(Error::Data("Granger test needs at least one lag".into()));
    }
    if cause.len() != effect.len() {
        return Err(Error::Data("Granger series are not aligned".into()));
    }
    let n = effect.len();
    if n <= 3 * lags + 1 {
        return Err(Error::InsufficientData {
            needed: 3 * lags + 2,
            got: n,
        });
    }
    let t_eff = n - lags;
    let df_num = lags;
    let df_den = t_eff - 2 * lags - 1;
    if effect.iter().all(|&v| v == effect[0]) {
        return Ok(GrangerResult {
            f_stat: 0.0,
            p_value: 1.0,
            lags,
            df_num,
            df_den,
            ssr_restricted: 0.0,
            ssr_unrestricted: 0.0,
        });
    }
    let (y, restricted, unrestricted) = granger_designs(cause, effect, lags);
    let ssr_r = fit_ols(&y, &restricted)?.ssr;
    let ssr_u = fit_ols(&y, &unrestricted)?.ssr.min(ssr_r);
    let (f_stat, p_value) = if ssr_u > 0.0 {
        let f = ((ssr_r - ssr_u) / df_num as f64) / (ssr_u / df_den as f64);
        let dist = FisherSnedecor::new(df_num as f64, df_den as f64).map_err(|e| Error::Data(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    } else if ssr_r > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(GrangerResult {
        f_stat,
        p_value,
        lags,
        df_num,
        df_den,
        ssr_restricted: ssr_r,
        ssr_unrestricted: ssr_u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdfSpec {
    #[default]
    Constant,
    ConstantTrend,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub t_stat: f64,
    pub cv_1pct: f64,
    pub cv_5pct: f64,
    pub cv_10pct: f64,
    pub lags: usize,
    pub n_obs: usize,
    pub reject_unit_root_5pct: bool,
}

/// MacKinnon (2010) response-surface coefficients `b0 + b1/T + b2/T^2 + b3/T^3`
/// for the single-series tau statistic at 1%, 5%, 10%.
const TAU_C: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];
const TAU_CT: [[f64; 4]; 3] = [
    [-3.95877, -9.0531, -28.428, -134.155],
    [-3.41049, -4.3904, -9.036, -45.374],
    [-3.12705, -2.5856, -3.925, -22.380],
];

/// Finite-sample critical values at 1%, 5% and 10% for `n_obs` regression rows.
pub fn adf_critical_values(spec: AdfSpec, n_obs: usize) -> [f64; 3] {
    let table = match spec {
        AdfSpec::Constant => &TAU_C,
        AdfSpec::ConstantTrend => &TAU_CT,
    };
    let inv = 1.0 / n_obs as f64;
    table.map(|b| b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv)
}

/// `floor(12 (T/100)^(1/4))`.
pub fn default_adf_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub const MIN_ADF_OBS: usize = 25;

struct AdfFit {
    t_stat: f64,
    aic: f64,
    n_obs: usize,
}

/// Regression rows `t = first..n-1` (0-based in `y`) with `p` lagged differences.
fn adf_fit(y: &[f64], p: usize, first: usize, spec: AdfSpec) -> Result<AdfFit> {
    let n = y.len();
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[t-1] = y[t] - y[t-1]
    let rows = first..n;
    let target: Vec<f64> = rows.clone().map(|t| dy[t - 1]).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    cols.push(rows.clone().map(|t| y[t - 1]).collect());
    if spec == AdfSpec::ConstantTrend {
        cols.push(rows.clone().map(|t| t as f64).collect());
    }
    for i in 1..=p {
        cols.push(rows.clone().map(|t| dy[t - 1 - i]).collect());
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let fit = fit_ols(&target, &Design::from_columns(&refs, true))?;
    let m = fit.n_obs as f64;
    let aic = m * (fit.ssr / m).ln() + 2.0 * fit.n_params as f64;
    Ok(AdfFit {
        t_stat: fit.coefficients[1] / fit.stderrs[1],
        aic,
        n_obs: fit.n_obs,
    })
}

/// Augmented Dickey-Fuller test with AIC lag choice over `0..=max_lags` on
/// a common sample, then a refit on the longest sample for the chosen lag.
pub fn adf_test(series: &[f64], max_lags: usize, spec: AdfSpec) -> Result<AdfResult> {
    let n = series.len();
    if n < MIN_ADF_OBS {
        return Err(Error::InsufficientData {
            needed: MIN_ADF_OBS,
            got: n,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in ADF series".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::InsufficientVariation);
    }
    let dy_const = series.windows(2).all(|w| w[1] - w[0] == series[1] - series[0]);
    if dy_const {
        return Err(Error::InsufficientVariation);
    }
    let params = 2 + (spec == AdfSpec::ConstantTrend) as usize;
    // largest lag that still leaves more rows than parameters plus a margin
    let feasible = n.saturating_sub(params + 2 + 5) / 2;
    let max_lags = max_lags.min(feasible);
    let common_first = max_lags + 1;
    if n - common_first <= params + max_lags {
        return Err(Error::InsufficientData {
            needed: common_first + params + max_lags + 1,
            got: n,
        });
    }
    let mut best = (0usize, f64::INFINITY);
    for p in 0..=max_lags {
        let fit = adf_fit(series, p, common_first, spec)?;
        if fit.aic < best.1 {
            best = (p, fit.aic);
        }
    }
    let lags = best.0;
    let fit = adf_fit(series, lags, lags + 1, spec)?;
    let [cv1, cv5, cv10] = adf_critical_values(spec, fit.n_obs);
    Ok(AdfResult {
        t_stat: fit.t_stat,
        cv_1pct: cv1,
        cv_5pct: cv5,
        cv_10pct: cv10,
        lags,
        n_obs: fit.n_obs,
        reject_unit_root_5pct: fit.t_stat < cv5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
    pub n: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(series: &[f64]) -> Result<StatsSummary> {
    if series.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = series.len();
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(StatsSummary {
        mean,
        std,
        min: sorted[0],
        p25: quantile_sorted(&sorted, 0.25),
        p50: quantile_sorted(&sorted, 0.5),
        p75: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
        n,
    })
}

/// Design rows helper for tests and callers holding row-major data.
pub fn design_from_rows<R: AsRef<[f64]>>(rows: &[R], has_intercept: bool) -> Design {
    Design::from_rows(rows, has_intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::simulation::std_normal;

    fn line_design(n: usize, seed: u64) -> (Design, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        (Design::from_columns(&[&x], true), x)
    }

    #[test]
    fn recursive_residuals_by_hand() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rr = recursive_residuals(&y, &Design::intercept_only(5)).unwrap();
        assert_eq!(rr.start, 1);
        assert_eq!(rr.values.len(), 4);
        assert_abs_diff_eq!(rr.values[0], 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        // w_3: mean of [1,2] = 1.5, (3 - 1.5) / sqrt(1 + 1/2)
        assert_abs_diff_eq!(rr.values[1], 1.5 / 1.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn recursive_residuals_match_refits() {
        let (d, x) = line_design(40, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v + std_normal(&mut rng)).collect();
        let rr = recursive_residuals(&y, &d).unwrap();
        for t in 3..40 {
            let prefix = Design::from_columns(&[&x[..t]], true);
            let fit = fit_ols(&y[..t], &prefix).unwrap();
            let m = prefix.matrix();
            let inv = (m.transpose() * m).try_inverse().unwrap();
            let xt = DVector::from_vec(vec![1.0, x[t]]);
            let pred = fit.coefficients[0] + fit.coefficients[1] * x[t];
            let w = (y[t] - pred) / (1.0 + (xt.transpose() * &inv * &xt)[0]).sqrt();
            assert_abs_diff_eq!(rr.values[t - 2], w, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_fit_gives_zero_residuals_and_flat_cusum() {
        let (d, x) = line_design(50, 1);
        let y: Vec<f64> = x.iter().map(|v| 0.5 - 1.5 * v).collect();
        let rr = recursive_residuals(&y, &d).unwrap();
        assert!(rr.values.iter().all(|w| w.abs() < 1e-12));
        let c = cusum_test(&y, &d, CusumLevel::Five).unwrap();
        assert!(!c.crossed);
        assert!(c.cusum_path.iter().all(|w| w.abs() < 1e-9));
    }

    #[test]
    fn null_residual_mean_is_small() {
        let (d, x) = line_design(200, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v + 0.5 * std_normal(&mut rng)).collect();
        let rr = recursive_residuals(&y, &d).unwrap();
        let m = rr.values.len() as f64;
        let mean = rr.values.iter().sum::<f64>() / m;
        assert!(mean.abs() < 3.0 * 0.5 / m.sqrt());
    }

    #[test]
    fn degenerate_start_advances() {
        // first two rows share x, so the leading 2x2 block is singular
        let x = [1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 1.1, 2.0, 3.2, 3.9, 5.1];
        let rr = recursive_residuals(&y, &Design::from_columns(&[&x], true)).unwrap();
        assert_eq!(rr.start, 3);
        assert_eq!(rr.values.len(), 3);
        let x = [1.0; 4];
        let err = recursive_residuals(&[1.0, 2.0, 3.0, 4.0], &Design::from_columns(&[&x], true)).unwrap_err();
        assert!(matches!(err, Error::DegenerateStart(2)));
    }

    #[test]
    fn cusum_translation_covariant() {
        let (d, x) = line_design(60, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y: Vec<f64> = x.iter().map(|v| v + std_normal(&mut rng)).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.25).collect();
        let a = cusum_test(&y, &d, CusumLevel::Five).unwrap();
        let b = cusum_test(&shifted, &d, CusumLevel::Five).unwrap();
        for (p, q) in a.cusum_path.iter().zip(&b.cusum_path) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-9);
        }
        assert_eq!(a.crossed, b.crossed);
    }

    #[test]
    fn cusum_boundaries() {
        assert_eq!(CusumLevel::Five.boundary_scale(), 0.948);
        assert_eq!(CusumLevel::One.boundary_scale(), 1.143);
        assert_eq!(CusumLevel::Ten.boundary_scale(), 0.850);
    }

    #[test]
    fn granger_zero_effect() {
        let cause: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let g = granger_test(&cause, &[0.0; 30], 4).unwrap();
        assert_eq!(g.f_stat, 0.0);
        assert_eq!(g.p_value, 1.0);
    }

    #[test]
    fn granger_matches_two_regressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cause: Vec<f64> = (0..120).map(|_| std_normal(&mut rng)).collect();
        let mut effect = vec![0.0; 120];
        for t in 2..120 {
            effect[t] = 0.3 * effect[t - 1] + 0.4 * cause[t - 2] + std_normal(&mut rng);
        }
        let g = granger_test(&cause, &effect, 4).unwrap();
        // oracle: explicit lag matrices
        let n = 120;
        let m = 4;
        let y: Vec<f64> = effect[m..].to_vec();
        let mut r_rows = Vec::new();
        let mut u_rows = Vec::new();
        for t in m..n {
            let mut r = vec![1.0];
            r.extend((1..=m).map(|l| effect[t - l]));
            let mut u = r.clone();
            u.extend((1..=m).map(|l| cause[t - l]));
            r_rows.push(r);
            u_rows.push(u);
        }
        let rss = fit_ols(&y, &Design::from_rows(&r_rows, true)).unwrap().ssr;
        let uss = fit_ols(&y, &Design::from_rows(&u_rows, true)).unwrap().ssr;
        let df = (n - m - 2 * m - 1) as f64;
        let f = ((rss - uss) / m as f64) / (uss / df);
        assert_abs_diff_eq!(g.f_stat, f, epsilon = 1e-8);
        assert_eq!(g.df_den, 107);
        assert!(g.p_value < 0.01);
        assert!(g.ssr_restricted >= g.ssr_unrestricted);
    }

    #[test]
    fn granger_input_checks() {
        assert!(granger_test(&[1.0; 13], &[2.0; 13], 4).is_err());
        assert!(granger_test(&[1.0; 20], &[2.0; 19], 4).is_err());
        assert!(granger_test(&[1.0; 20], &[2.0; 20], 0).is_err());
    }

    #[test]
    fn adf_critical_value_table() {
        let cv = adf_critical_values(AdfSpec::Constant, 100);
        assert_abs_diff_eq!(cv[1], -2.86154 - 0.028903 - 0.0004234 - 0.00004004, epsilon = 1e-12);
        for spec in [AdfSpec::Constant, AdfSpec::ConstantTrend] {
            for n in [25, 100, 500, 10_000] {
                let cv = adf_critical_values(spec, n);
                assert!(cv[0] < cv[1] && cv[1] < cv[2]);
            }
        }
        assert_eq!(default_adf_lags(100), 12);
        assert_eq!(default_adf_lags(500), 17);
    }

    #[test]
    fn adf_constant_series() {
        assert!(matches!(
            adf_test(&[3.0; 40], 4, AdfSpec::Constant),
            Err(Error::InsufficientVariation)
        ));
        assert!(matches!(
            adf_test(&[3.0; 10], 4, AdfSpec::Constant),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn adf_stationary_vs_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ar = vec![0.0; 500];
        let mut rw = vec![0.0; 500];
        for t in 1..500 {
            ar[t] = 0.5 * ar[t - 1] + std_normal(&mut rng);
            rw[t] = rw[t - 1] + std_normal(&mut rng);
        }
        let a = adf_test(&ar, default_adf_lags(500), AdfSpec::Constant).unwrap();
        assert!(a.reject_unit_root_5pct, "{a:?}");
        assert_eq!(a.reject_unit_root_5pct, a.t_stat < a.cv_5pct);
        let t = adf_test(&ar, 4, AdfSpec::ConstantTrend).unwrap();
        assert!(t.reject_unit_root_5pct);
        let w = adf_test(&rw, 4, AdfSpec::Constant).unwrap();
        assert_eq!(w.reject_unit_root_5pct, w.t_stat < w.cv_5pct);
    }

    #[test]
    fn describe_small_cases() {
        let s = describe(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.p50, 2.5);
        assert_eq!(s.p25, 1.75);
        assert_eq!(s.p75, 3.25);
        assert_abs_diff_eq!(s.std, 1.2909944487358056, epsilon = 1e-12);
        let s = describe(&[7.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.p50, s.std, s.n), (7.0, 7.0, 7.0, 7.0, 0.0, 1));
        assert!(describe(&[]).is_err());
    }

    #[test]
    fn describe_permutation_invariant() {
        let v = [0.3, 0.1, 0.9, 0.4, 0.2, 0.8];
        let mut w = v;
        w.reverse();
        let a = describe(&v).unwrap();
        let b = describe(&w).unwrap();
        assert_eq!(a.p25, b.p25);
        assert_eq!(a.max, b.max);
        assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-15);
        let mut longer = v.to_vec();
        longer.push(5.0);
        let c = describe(&longer).unwrap();
        assert!(c.min <= c.p25 && c.p25 <= c.p50 && c.p50 <= c.p75 && c.p75 <= c.max);
        assert_eq!(c.min, a.min);
    }
}
