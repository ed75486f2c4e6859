//! Constant-coefficient regressions: income and expense beta equations, the
//! NIM identity, and the beta-uncertainty pricing regression.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::{DecilePanel, DecileSeries};

/// A regression design. When `intercept` is set, column 0 is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    matrix: DMatrix<f64>,
    intercept: bool,
}

impl Design {
    /// Builds from regressor columns, prepending a ones column if asked.
    pub fn from_columns(columns: &[&[f64]], add_intercept: bool) -> Self {
        let n = columns.first().map(|c| c.len()).unwrap_or(0);
        let k = columns.len() + add_intercept as usize;
        let off = add_intercept as usize;
        let matrix = DMatrix::from_fn(n, k, |i, j| {
            if add_intercept && j == 0 {
                1.0
            } else {
                columns[j - off][i]
            }
        });
        Design {
            matrix,
            intercept: add_intercept,
        }
    }

    /// Uses `rows` verbatim; `has_intercept` records whether column 0 is a
    /// constant (affects only R-squared centering).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], has_intercept: bool) -> Self {
        let n = rows.len();
        let k = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        Design {
            matrix: DMatrix::from_fn(n, k, |i, j| rows[i].as_ref()[j]),
            intercept: has_intercept,
        }
    }

    pub fn intercept_only(n: usize) -> Self {
        Design {
            matrix: DMatrix::from_element(n, 1, 1.0),
            intercept: true,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Covariance {
    #[default]
    Spherical,
    /// Bartlett-kernel HAC with the given number of lags.
    NeweyWest { lags: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub coef_covariance: DMatrix<f64>,
    pub stderrs: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub n_params: usize,
}

impl RegressionResult {
    pub fn df_resid(&self) -> usize {
        self.n_obs - self.n_params
    }

    pub fn sigma2(&self) -> f64 {
        self.ssr / self.df_resid() as f64
    }
}

pub fn fit_ols(y: &[f64], design: &Design) -> Result<RegressionResult> {
    fit_ols_with(y, design, Covariance::Spherical)
}

pub fn fit_ols_with(y: &[f64], design: &Design, cov: Covariance) -> Result<RegressionResult> {
    let x = design.matrix();
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Data(format!("regressand has {} rows, design has {n}", y.len())));
    }
    if n <= k {
        return Err(Error::InsufficientData { needed: k + 1, got: n });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression input".into()));
    }

    let svd = x.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let tol = s_max * n.max(k) as f64 * f64::EPSILON;
    let rank = s.iter().filter(|&&v| v > tol).count();
    if rank < k || s_max == 0.0 {
        return Err(Error::Singular { rank, cols: k });
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let yv = DVector::from_column_slice(y);

    let uty = u.transpose() * &yv;
    let scaled = DVector::from_fn(k, |i, _| uty[i] / s[i]);
    let beta = v_t.transpose() * scaled;
    // (X'X)^-1 = V S^-2 V'
    let v = v_t.transpose();
    let xtx_inv = DMatrix::from_fn(k, k, |i, j| (0..k).map(|m| v[(i, m)] * v[(j, m)] / (s[m] * s[m])).sum());

    let fitted = x * &beta;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let df = (n - k) as f64;

    let coef_covariance = match cov {
        Covariance::Spherical => &xtx_inv * (ssr / df),
        Covariance::NeweyWest { lags } => {
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for t in 0..n {
                let xt = x.row(t);
                meat += xt.transpose() * xt * (resid[t] * resid[t]);
            }
            for l in 1..=lags.min(n - 1) {
                let w = 1.0 - l as f64 / (lags as f64 + 1.0);
                let mut g = DMatrix::<f64>::zeros(k, k);
                for t in l..n {
                    g += x.row(t).transpose() * x.row(t - l) * (resid[t] * resid[t - l]);
                }
                meat += (&g + g.transpose()) * w;
            }
            &xtx_inv * meat * &xtx_inv
        }
    };
    let coef_covariance = (&coef_covariance + coef_covariance.transpose()) * 0.5;

    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Data(e.to_string()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let stderrs: Vec<f64> = (0..k).map(|i| coef_covariance[(i, i)].max(0.0).sqrt()).collect();
    let mut t_stats = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for (&b, &se) in coefficients.iter().zip(&stderrs) {
        let (t, p) = if se > 0.0 {
            let t = b / se;
            (t, (2.0 * dist.sf(t.abs())).min(1.0))
        } else if b == 0.0 {
            (0.0, 1.0)
        } else {
            (b.signum() * f64::INFINITY, 0.0)
        };
        t_stats.push(t);
        p_values.push(p);
    }

    let tss = if design.has_intercept() {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        y.iter().map(|v| v * v).sum::<f64>()
    };
    let intercept_only = design.has_intercept() && k == 1;
    let (r2, adj_r2) = if intercept_only || tss == 0.0 {
        (0.0, 0.0)
    } else {
        let r2 = 1.0 - ssr / tss;
        let n_adj = if design.has_intercept() {
            n as f64 - 1.0
        } else {
            n as f64
        };
        (r2, 1.0 - (1.0 - r2) * n_adj / df)
    };

    Ok(RegressionResult {
        coefficients,
        coef_covariance,
        stderrs,
        t_stats,
        p_values,
        residuals: resid,
        ssr,
        r2,
        adj_r2,
        n_obs: n,
        n_params: k,
    })
}

/// The reported beta: contemporaneous plus one-quarter-lagged coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub beta0: f64,
    pub beta1: f64,
    pub beta_sum: f64,
    pub sum_stderr: f64,
}

impl BetaEstimate {
    /// Reads coefficients 1 and 2 of a `[1, dFF_t, dFF_{t-1}]` regression.
    pub fn from_regression(fit: &RegressionResult) -> Self {
        let v = &fit.coef_covariance;
        let beta0 = fit.coefficients[1];
        let beta1 = fit.coefficients[2];
        let var = v[(1, 1)] + v[(2, 2)] + 2.0 * v[(1, 2)];
        BetaEstimate {
            beta0,
            beta1,
            beta_sum: beta0 + beta1,
            sum_stderr: var.max(0.0).sqrt(),
        }
    }
}

/// Minimum number of change observations for a beta regression.
pub const MIN_BETA_OBS: usize = 10;

/// Regresses `y` on an intercept, `d_ff` and `d_ff_lag`.
pub fn estimate_beta(y: &[f64], d_ff: &[f64], d_ff_lag: &[f64]) -> Result<(BetaEstimate, RegressionResult)> {
    if y.len() < MIN_BETA_OBS {
        return Err(Error::InsufficientData {
            needed: MIN_BETA_OBS,
            got: y.len(),
        });
    }
    let design = Design::from_columns(&[d_ff, d_ff_lag], true);
    let fit = fit_ols(y, &design)?;
    Ok((BetaEstimate::from_regression(&fit), fit))
}

fn decile_series(panel: &DecilePanel, decile: u8) -> Result<&DecileSeries> {
    panel
        .decile(decile)
        .ok_or_else(|| Error::Data(format!("panel has no decile {decile}")))
}

pub fn estimate_income_beta(panel: &DecilePanel, decile: u8) -> Result<(BetaEstimate, RegressionResult)> {
    let s = decile_series(panel, decile)?;
    estimate_beta(&s.d_int_inc, &s.d_ff, &s.d_ff_lag)
}

pub fn estimate_expense_beta(panel: &DecilePanel, decile: u8) -> Result<(BetaEstimate, RegressionResult)> {
    let s = decile_series(panel, decile)?;
    estimate_beta(&s.d_int_exp, &s.d_ff, &s.d_ff_lag)
}

pub fn nim_beta(income: &BetaEstimate, expense: &BetaEstimate) -> f64 {
    income.beta_sum - expense.beta_sum
}

/// Financial-sector returns on an intercept, the expense and income
/// conditional-volatility changes, and the market return, in that order.
pub fn pricing_regression(
    xlf_ret: &[f64],
    d_cv_exp: &[f64],
    d_cv_inc: &[f64],
    mkt_ret: &[f64],
) -> Result<RegressionResult> {
    let n = xlf_ret.len();
    if d_cv_exp.len() != n || d_cv_inc.len() != n || mkt_ret.len() != n {
        return Err(Error::Data("pricing regression inputs are not aligned".into()));
    }
    fit_ols(xlf_ret, &Design::from_columns(&[d_cv_exp, d_cv_inc, mkt_ret], true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockEffect {
    pub fraction: f64,
    pub currency: Option<f64>,
}

/// Effect of a `shock_sd` move in a regressor with slope `coefficient`.
pub fn shock_effect(coefficient: f64, shock_sd: f64, base_value: Option<f64>) -> ShockEffect {
    let fraction = coefficient * shock_sd;
    ShockEffect {
        fraction,
        currency: base_value.map(|b| fraction * b),
    }
}

/// Significance stars: `*` 10%, `**` 5%, `***` 1%, `****` 0.1%.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "****"
    } else if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}
