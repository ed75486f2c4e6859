//! Time-varying-parameter regression as a linear Gaussian state-space model.
//!
//! Observation: `y_t = x_t' b_t + e_t`, `e_t ~ N(0, r)`.
//! State: `b_t = mu + diag(gamma) b_{t-1} + v_t`, `v_t ~ N(0, diag(q))`,
//! with the random walk (`mu = 0`, `gamma = 1`) as the default law.
//!
//! The one-step-ahead innovation variance `H_t = x_t' P_{t|t-1} x_t + r` is the
//! conditional forecast-error variance; its square root is reported as the
//! conditional volatility of the beta forecast.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quarter::Quarter;
use crate::simulation::derive_seed;

/// Innovation variances below this are clamped.
pub const H_FLOOR: f64 = 1e-12;
pub const DEFAULT_BURN_IN: usize = 8;
pub const DEFAULT_DIFFUSE_SCALE: f64 = 1e6;
pub const DEFAULT_STARTS: usize = 8;
/// Fewest post-burn-in observations accepted by the likelihood fit.
pub const MIN_MLE_OBS: usize = 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Transition {
    #[default]
    RandomWalk,
    /// Per-state `b_i,t = mu_i + gamma_i b_i,t-1 + v_i,t`.
    Ar1 { mu: Vec<f64>, gamma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// `a_0 = 0`, `P_0 = scale * var(y) * I`.
    Diffuse { scale: f64 },
    /// Explicit mean and row-major covariance.
    Explicit { mean: Vec<f64>, cov: Vec<f64> },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Diffuse {
            scale: DEFAULT_DIFFUSE_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Diagonal of the state noise covariance.
    pub q: Vec<f64>,
    /// Observation noise variance.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSpec {
    pub y: Vec<f64>,
    /// Regressor rows, one per observation.
    pub x: Vec<Vec<f64>>,
    pub transition: Transition,
    pub hyper: Hyperparams,
    pub prior: Prior,
    /// Leading observations left out of the likelihood.
    pub burn_in: usize,
}

impl StateSpaceSpec {
    /// Random-walk coefficients, diffuse prior and the default burn-in.
    pub fn new<R: AsRef<[f64]>>(y: &[f64], x: &[R], hyper: Hyperparams) -> Self {
        StateSpaceSpec {
            y: y.to_vec(),
            x: x.iter().map(|r| r.as_ref().to_vec()).collect(),
            transition: Transition::RandomWalk,
            hyper,
            prior: Prior::default(),
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.state_dim();
        if k == 0 || self.y.is_empty() {
            return Err(Error::Data(
                "state-space model needs observations and regressors".into(),
            ));
        }
        if self.x.len() != self.y.len() || self.x.iter().any(|r| r.len() != k) {
            return Err(Error::Data("regressor rows do not match observations".into()));
        }
        if self.y.iter().chain(self.x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite observation or regressor".into()));
        }
        if self.hyper.q.len() != k || self.hyper.q.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::Data(
                "state noise variances must be finite and nonnegative".into(),
            ));
        }
        if !(self.hyper.r > 0.0 && self.hyper.r.is_finite()) {
            return Err(Error::Data("observation variance must be positive".into()));
        }
        if let Transition::Ar1 { mu, gamma } = &self.transition {
            if mu.len() != k || gamma.len() != k {
                return Err(Error::Data("AR(1) transition dimension mismatch".into()));
            }
        }
        match &self.prior {
            Prior::Diffuse { scale } if !(*scale > 0.0) => {
                return Err(Error::Data("diffuse prior scale must be positive".into()))
            }
            Prior::Explicit { mean, cov } if mean.len() != k || cov.len() != k * k => {
                return Err(Error::Data("prior dimension mismatch".into()))
            }
            _ => {}
        }
        Ok(())
    }

    fn initial(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.state_dim();
        match &self.prior {
            Prior::Diffuse { scale } => {
                let v = sample_variance(&self.y);
                let kappa = scale * if v > 0.0 { v } else { 1.0 };
                let mut p = vec![0.0; k * k];
                for i in 0..k {
                    p[i * k + i] = kappa;
                }
                (vec![0.0; k], p)
            }
            Prior::Explicit { mean, cov } => (mean.clone(), cov.clone()),
        }
    }
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    pub predicted_state: Vec<Vec<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered_state: Vec<Vec<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub innovations: Vec<f64>,
    pub innovation_variance: Vec<f64>,
    pub log_likelihood: f64,
    pub burn_in: usize,
    /// Observation variance the filter ran with.
    pub r: f64,
}

impl KalmanOutput {
    pub fn len(&self) -> usize {
        self.innovations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.innovations.is_empty()
    }

    pub fn standardized_innovations(&self) -> Vec<f64> {
        self.innovations
            .iter()
            .zip(&self.innovation_variance)
            .map(|(e, h)| e / h.sqrt())
            .collect()
    }
}

struct Step<'a> {
    a_pred: &'a [f64],
    p_pred: &'a [f64],
    a_filt: &'a [f64],
    p_filt: &'a [f64],
    eta: f64,
    h: f64,
}

/// Runs the recursions, handing every step to `sink`; returns the
/// post-burn-in log-likelihood.
fn run_filter(spec: &StateSpaceSpec, mut sink: impl FnMut(Step<'_>)) -> Result<f64> {
    let k = spec.state_dim();
    let (mut a, mut p) = spec.initial();
    let (mu, gamma): (Vec<f64>, Vec<f64>) = match &spec.transition {
        Transition::RandomWalk => (vec![0.0; k], vec![1.0; k]),
        Transition::Ar1 { mu, gamma } => (mu.clone(), gamma.clone()),
    };
    let q = &spec.hyper.q;
    let r = spec.hyper.r;
    let mut a_pred = vec![0.0; k];
    let mut p_pred = vec![0.0; k * k];
    let mut xp = vec![0.0; k];
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut loglik = 0.0;

    for (t, (&y, x)) in spec.y.iter().zip(&spec.x).enumerate() {
        for i in 0..k {
            a_pred[i] = mu[i] + gamma[i] * a[i];
            for j in 0..k {
                p_pred[i * k + j] = gamma[i] * gamma[j] * p[i * k + j];
            }
            p_pred[i * k + i] += q[i];
        }
        let mut h = r;
        let mut fit = 0.0;
        for i in 0..k {
            xp[i] = (0..k).map(|j| p_pred[i * k + j] * x[j]).sum();
            h += x[i] * xp[i];
            fit += x[i] * a_pred[i];
        }
        if !h.is_finite() {
            return Err(Error::CovarianceDegeneracy { t, value: h });
        }
        if h < H_FLOOR {
            if t >= spec.burn_in {
                return Err(Error::CovarianceDegeneracy { t, value: h });
            }
            h = H_FLOOR;
        }
        let eta = y - fit;
        for i in 0..k {
            a[i] = a_pred[i] + xp[i] / h * eta;
        }
        for i in 0..k {
            for j in i..k {
                let v = 0.5 * (p_pred[i * k + j] + p_pred[j * k + i]) - xp[i] * xp[j] / h;
                p[i * k + j] = v;
                p[j * k + i] = v;
            }
        }
        if t >= spec.burn_in {
            loglik -= 0.5 * (ln2pi + h.ln() + eta * eta / h);
        }
        sink(Step {
            a_pred: &a_pred,
            p_pred: &p_pred,
            a_filt: &a,
            p_filt: &p,
            eta,
            h,
        });
    }
    Ok(loglik)
}

pub fn kalman_filter(spec: &StateSpaceSpec) -> Result<KalmanOutput> {
    spec.validate()?;
    let k = spec.state_dim();
    let n = spec.len();
    let mut out = KalmanOutput {
        predicted_state: Vec::with_capacity(n),
        predicted_cov: Vec::with_capacity(n),
        filtered_state: Vec::with_capacity(n),
        filtered_cov: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        innovation_variance: Vec::with_capacity(n),
        log_likelihood: 0.0,
        burn_in: spec.burn_in,
        r: spec.hyper.r,
    };
    let loglik = run_filter(spec, |s| {
        out.predicted_state.push(s.a_pred.to_vec());
        out.predicted_cov.push(DMatrix::from_row_slice(k, k, s.p_pred));
        out.filtered_state.push(s.a_filt.to_vec());
        out.filtered_cov.push(DMatrix::from_row_slice(k, k, s.p_filt));
        out.innovations.push(s.eta);
        out.innovation_variance.push(s.h);
    })?;
    out.log_likelihood = loglik;
    Ok(out)
}

/// Likelihood only, without storing the filtered path.
pub fn log_likelihood(spec: &StateSpaceSpec) -> Result<f64> {
    spec.validate()?;
    run_filter(spec, |_| {})
}

/// `sqrt(H_t)` for every observation.
pub fn conditional_volatility(output: &KalmanOutput) -> Vec<f64> {
    output.innovation_variance.iter().map(|h| h.sqrt()).collect()
}

/// Post-burn-in filtered coefficient paths for a `[1, dFF_t, dFF_{t-1}]` model.
#[derive(Debug, Clone, PartialEq)]
pub struct TvpBetaSeries {
    pub quarters: Vec<Quarter>,
    pub alpha: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta_sum: Vec<f64>,
    pub cond_vol: Vec<f64>,
}

impl TvpBetaSeries {
    pub fn len(&self) -> usize {
        self.quarters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quarters.is_empty()
    }
}

/// `quarters` labels every filter step; rows inside the burn-in are dropped.
pub fn tvp_beta_series(output: &KalmanOutput, quarters: &[Quarter]) -> Result<TvpBetaSeries> {
    if quarters.len() != output.len() {
        return Err(Error::Data(format!(
            "{} quarter labels for {} filter steps",
            quarters.len(),
            output.len()
        )));
    }
    if output.filtered_state.first().map(|s| s.len()).unwrap_or(0) < 3 {
        return Err(Error::Data("beta paths need a three-dimensional state".into()));
    }
    let vol = conditional_volatility(output);
    let skip = output.burn_in.min(output.len());
    let mut s = TvpBetaSeries {
        quarters: quarters[skip..].to_vec(),
        alpha: Vec::new(),
        beta0: Vec::new(),
        beta1: Vec::new(),
        beta_sum: Vec::new(),
        cond_vol: vol[skip..].to_vec(),
    };
    for state in &output.filtered_state[skip..] {
        s.alpha.push(state[0]);
        s.beta0.push(state[1]);
        s.beta1.push(state[2]);
        s.beta_sum.push(state[1] + state[2]);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub transition: Transition,
    pub prior: Prior,
    pub burn_in: usize,
    pub starts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            transition: Transition::RandomWalk,
            prior: Prior::default(),
            burn_in: DEFAULT_BURN_IN,
            starts: DEFAULT_STARTS,
            seed: 0,
            optimizer: NelderMeadOptions {
                x_tol: 1e-6,
                ..NelderMeadOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartRecord {
    /// Initial log-variance vector `[ln q_1.., ln r]`.
    pub theta0: Vec<f64>,
    pub initial_loglik: f64,
    pub final_loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub spec: StateSpaceSpec,
    pub log_likelihood: f64,
    pub starts: Vec<StartRecord>,
}

/// Log-variance reparameterization with data-driven scales.
struct Params {
    /// Per-state scale `var(y) / mean(x_i^2)`, in logs.
    ln_q_scale: Vec<f64>,
    ln_r_scale: f64,
}

/// Log-variances this far below the scale map to exactly zero.
const ZERO_BELOW: f64 = 30.0;
const MAX_ABOVE: f64 = 10.0;

impl Params {
    fn new<R: AsRef<[f64]>>(y: &[f64], x: &[R], k: usize) -> Self {
        let v = sample_variance(y);
        let v = if v > 0.0 { v } else { 1.0 };
        let ln_q_scale = (0..k)
            .map(|i| {
                let m = x.iter().map(|r| r.as_ref()[i].powi(2)).sum::<f64>() / x.len() as f64;
                (v / if m > 0.0 { m } else { 1.0 }).ln()
            })
            .collect();
        Params {
            ln_q_scale,
            ln_r_scale: v.ln(),
        }
    }

    fn hyper(&self, theta: &[f64]) -> Hyperparams {
        let k = self.ln_q_scale.len();
        let q = (0..k)
            .map(|i| {
                let s = self.ln_q_scale[i];
                if theta[i] < s - ZERO_BELOW {
                    0.0
                } else {
                    theta[i].min(s + MAX_ABOVE).exp()
                }
            })
            .collect();
        let s = self.ln_r_scale;
        Hyperparams {
            q,
            r: theta[k].clamp(s - ZERO_BELOW, s + MAX_ABOVE).exp(),
        }
    }

    fn random_start(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut theta: Vec<f64> = self
            .ln_q_scale
            .iter()
            .map(|s| s + rng.random_range(-12.0..-2.0))
            .collect();
        theta.push(self.ln_r_scale + rng.random_range(-3.0..0.0));
        theta
    }
}

/// Maximum-likelihood state and observation variances from `starts` seeded
/// random initializations; the best local optimum wins. Afterwards each
/// state variance is tried at exactly zero and kept there when the
/// likelihood does not drop.
pub fn estimate_hyperparameters<R: AsRef<[f64]> + Sync>(y: &[f64], x: &[R], opts: &MleOptions) -> Result<MleFit> {
    if y.len() < opts.burn_in + MIN_MLE_OBS {
        return Err(Error::InsufficientData {
            needed: opts.burn_in + MIN_MLE_OBS,
            got: y.len(),
        });
    }
    let k = x.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let template = StateSpaceSpec {
        y: y.to_vec(),
        x: x.iter().map(|r| r.as_ref().to_vec()).collect(),
        transition: opts.transition.clone(),
        hyper: Hyperparams {
            q: vec![0.0; k],
            r: 1.0,
        },
        prior: opts.prior.clone(),
        burn_in: opts.burn_in,
    };
    template.validate()?;
    let params = Params::new(y, x, k);
    let eval = |hyper: Hyperparams| -> f64 {
        let spec = StateSpaceSpec {
            hyper,
            ..template.clone()
        };
        log_likelihood(&spec).unwrap_or(f64::NEG_INFINITY)
    };

    let results: Vec<(StartRecord, Vec<f64>)> = (0..opts.starts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, i as u64));
            let theta0 = params.random_start(&mut rng);
            let initial_loglik = eval(params.hyper(&theta0));
            let m = nelder_mead(|th| -eval(params.hyper(th)), &theta0, opts.optimizer);
            (
                StartRecord {
                    theta0,
                    initial_loglik,
                    final_loglik: -m.f,
                    converged: m.converged,
                },
                m.x,
            )
        })
        .collect();

    let (best_idx, _) = results
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bf), (i, (rec, _))| {
            if rec.final_loglik > bf {
                (i, rec.final_loglik)
            } else {
                (bi, bf)
            }
        });
    let best_theta = results[best_idx].1.clone();
    let mut best_hyper = params.hyper(&best_theta);
    let mut best_ll = results[best_idx].0.final_loglik;
    let starts: Vec<StartRecord> = results.into_iter().map(|r| r.0).collect();

    if !best_ll.is_finite() || !starts.iter().any(|s| s.converged) {
        return Err(Error::Optimization {
            best_point: best_theta,
            best_loglik: best_ll,
        });
    }

    for i in 0..k {
        if best_hyper.q[i] == 0.0 {
            continue;
        }
        let mut trial = best_hyper.clone();
        trial.q[i] = 0.0;
        let ll = eval(trial.clone());
        if ll >= best_ll {
            best_hyper = trial;
            best_ll = ll;
        }
    }

    Ok(MleFit {
        spec: StateSpaceSpec {
            hyper: best_hyper,
            ..template
        },
        log_likelihood: best_ll,
        starts,
    })
}
