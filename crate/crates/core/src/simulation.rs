//! Synthetic data and a seeded Monte Carlo harness.
//!
//! Every random draw comes from `ChaCha8Rng`; normals use `rand_distr`'s
//! ziggurat sampler, so fixtures are identical across platforms. Per-rep
//! seeds are `derive_seed(seed, rep)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kalman::Transition;
use crate::quarter::Quarter;

/// SplitMix64 finalizer over `seed + (index + 1) * golden`. Stable across
/// releases; recorded seeds replay individual reps.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn std_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateProcess {
    IidNormal {
        sd: f64,
    },
    /// AR(1) in rate changes.
    Ar1 {
        phi: f64,
        sd: f64,
    },
}

impl Default for RateProcess {
    fn default() -> Self {
        RateProcess::Ar1 { phi: 0.8, sd: 0.5 }
    }
}

impl RateProcess {
    /// `n` consecutive rate changes, started from the stationary law.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match *self {
            RateProcess::IidNormal { sd } => (0..n).map(|_| sd * std_normal(rng)).collect(),
            RateProcess::Ar1 { phi, sd } => {
                let mut out = Vec::with_capacity(n);
                let stat_sd = if phi.abs() < 1.0 {
                    sd / (1.0 - phi * phi).sqrt()
                } else {
                    sd
                };
                let mut d = stat_sd * std_normal(rng);
                for _ in 0..n {
                    out.push(d);
                    d = phi * d + sd * std_normal(rng);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvpSimConfig {
    pub n_obs: usize,
    pub true_q: [f64; 3],
    /// Observation variance; zero gives noiseless observations.
    pub true_r: f64,
    pub transition: Transition,
    pub initial_state: [f64; 3],
    pub rate_process: RateProcess,
    pub seed: u64,
}

impl Default for TvpSimConfig {
    fn default() -> Self {
        TvpSimConfig {
            n_obs: 500,
            true_q: [0.0, 1e-4, 1e-4],
            true_r: 1e-3,
            transition: Transition::RandomWalk,
            initial_state: [0.0, 0.1, 0.05],
            rate_process: RateProcess::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvpSample {
    pub y: Vec<f64>,
    /// Rows `[1, dFF_t, dFF_{t-1}]`.
    pub x: Vec<Vec<f64>>,
    /// True state per observation.
    pub betas: Vec<[f64; 3]>,
}

/// Draws from the random-coefficient regression: states move once per
/// observation (including the first) before `y_t` is emitted.
pub fn simulate_tvp(config: &TvpSimConfig) -> Result<TvpSample> {
    if config.n_obs < 2 {
        return Err(Error::Data("simulation needs at least two observations".into()));
    }
    if config.true_q.iter().any(|&q| !(q >= 0.0)) || !(config.true_r >= 0.0) {
        return Err(Error::Data("simulation variances must be nonnegative".into()));
    }
    let (mu, gamma) = match &config.transition {
        Transition::RandomWalk => ([0.0; 3], [1.0; 3]),
        Transition::Ar1 { mu, gamma } => {
            if mu.len() != 3 || gamma.len() != 3 {
                return Err(Error::Data("AR(1) transition dimension mismatch".into()));
            }
            ([mu[0], mu[1], mu[2]], [gamma[0], gamma[1], gamma[2]])
        }
    };
    let mut rng = rng_from_seed(config.seed);
    let d = config.rate_process.sample(config.n_obs + 1, &mut rng);
    let mut state = config.initial_state;
    let q_sd = config.true_q.map(f64::sqrt);
    let r_sd = config.true_r.sqrt();
    let mut out = TvpSample {
        y: Vec::with_capacity(config.n_obs),
        x: Vec::with_capacity(config.n_obs),
        betas: Vec::with_capacity(config.n_obs),
    };
    for t in 0..config.n_obs {
        for i in 0..3 {
            let z = std_normal(&mut rng);
            if q_sd[i] > 0.0 || mu[i] != 0.0 || gamma[i] != 1.0 {
                state[i] = mu[i] + gamma[i] * state[i] + q_sd[i] * z;
            }
        }
        let x = [1.0, d[t + 1], d[t]];
        let e = std_normal(&mut rng);
        let mean: f64 = x.iter().zip(&state).map(|(a, b)| a * b).sum();
        out.y.push(if r_sd > 0.0 { mean + r_sd * e } else { mean });
        out.x.push(x.to_vec());
        out.betas.push(state);
    }
    Ok(out)
}

/// One Monte Carlo replication's statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct RepStat {
    pub reject: Option<bool>,
    pub values: Vec<f64>,
}

impl RepStat {
    pub fn verdict(reject: bool) -> Self {
        RepStat {
            reject: Some(reject),
            values: Vec::new(),
        }
    }

    pub fn values(values: Vec<f64>) -> Self {
        RepStat { reject: None, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub n_reps: usize,
    pub seeds: Vec<u64>,
    /// `Err` holds the failure message of that rep.
    pub reps: Vec<std::result::Result<RepStat, String>>,
}

impl MonteCarloReport {
    pub fn failed(&self) -> usize {
        self.reps.iter().filter(|r| r.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = &RepStat> {
        self.reps.iter().filter_map(|r| r.as_ref().ok())
    }

    /// Share of successful verdict-bearing reps that rejected.
    pub fn rejection_rate(&self) -> Option<f64> {
        let verdicts: Vec<bool> = self.successes().filter_map(|s| s.reject).collect();
        (!verdicts.is_empty()).then(|| verdicts.iter().filter(|&&r| r).count() as f64 / verdicts.len() as f64)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.successes().filter_map(|s| s.values.get(j).copied()).collect()
    }

    pub fn mean(&self, j: usize) -> Option<f64> {
        let c = self.column(j);
        (!c.is_empty()).then(|| c.iter().sum::<f64>() / c.len() as f64)
    }

    pub fn median(&self, j: usize) -> Option<f64> {
        let mut c = self.column(j);
        if c.is_empty() {
            return None;
        }
        c.sort_by(f64::total_cmp);
        let n = c.len();
        Some(if n % 2 == 1 {
            c[n / 2]
        } else {
            0.5 * (c[n / 2 - 1] + c[n / 2])
        })
    }

    pub fn bias(&self, j: usize, truth: f64) -> Option<f64> {
        self.mean(j).map(|m| m - truth)
    }

    pub fn rmse(&self, j: usize, truth: f64) -> Option<f64> {
        let c = self.column(j);
        (!c.is_empty()).then(|| (c.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / c.len() as f64).sqrt())
    }

    /// Share of successful reps whose value `j` satisfies `pred`.
    pub fn fraction(&self, j: usize, pred: impl Fn(f64) -> bool) -> Option<f64> {
        let c = self.column(j);
        (!c.is_empty()).then(|| c.iter().filter(|&&v| pred(v)).count() as f64 / c.len() as f64)
    }
}

/// Runs `statistic(generator(rng))` for one rep seed.
pub fn run_rep<D, G, S>(rep_seed: u64, generator: &G, statistic: &S) -> std::result::Result<RepStat, String>
where
    G: Fn(&mut ChaCha8Rng) -> D,
    S: Fn(&D) -> Result<RepStat>,
{
    let mut rng = rng_from_seed(rep_seed);
    let data = generator(&mut rng);
    statistic(&data).map_err(|e| e.to_string())
}

/// Independent seeded replications in parallel; a failing rep is recorded,
/// not fatal.
pub fn mc_experiment<D, G, S>(generator: G, statistic: S, n_reps: usize, seed: u64) -> Result<MonteCarloReport>
where
    G: Fn(&mut ChaCha8Rng) -> D + Sync,
    S: Fn(&D) -> Result<RepStat> + Sync,
{
    if n_reps == 0 {
        return Err(Error::Data("Monte Carlo experiment needs at least one rep".into()));
    }
    let seeds: Vec<u64> = (0..n_reps as u64).map(|i| derive_seed(seed, i)).collect();
    let reps = seeds.par_iter().map(|&s| run_rep(s, &generator, &statistic)).collect();
    Ok(MonteCarloReport { n_reps, seeds, reps })
}

/// Bank-level synthetic panel written in the call-report, rate and market
/// file formats.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub n_banks: usize,
    pub n_quarters: usize,
    pub first_quarter: Quarter,
    pub seed: u64,
    /// State noise variances for the coefficient walks (percent units).
    pub q: [f64; 3],
    /// Observation noise variance (percent units).
    pub r: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            n_banks: 50,
            n_quarters: 72,
            first_quarter: Quarter::new(2006, 1).expect("valid quarter"),
            seed: 7,
            q: [0.0, 1e-4, 1e-4],
            r: 9e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub call_report: PathBuf,
    pub rates: PathBuf,
    pub market: PathBuf,
    pub config: PathBuf,
}

fn walk_levels(start: f64, init: [f64; 3], q: [f64; 3], r: f64, d_ff: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut state = init;
    let mut level = start;
    let mut out = vec![level];
    for t in 1..d_ff.len() {
        for i in 0..3 {
            state[i] += q[i].sqrt() * std_normal(rng);
        }
        let change = state[0] + state[1] * d_ff[t] + state[2] * d_ff[t - 1] + r.sqrt() * std_normal(rng);
        level = (level + change).max(0.05);
        out.push(level);
    }
    out
}

/// Writes `call_report.csv`, `rates.csv`, `market.csv` and a `fixture.conf`
/// pointing at them. Generated ratios are in annualized percent divided by
/// 400, so the config sets `ratio-scale = 400`.
pub fn write_fixture(dir: &Path, cfg: &FixtureConfig) -> Result<FixturePaths> {
    if cfg.n_banks < 10 || cfg.n_quarters < 3 {
        return Err(Error::Config("fixture needs at least 10 banks and 3 quarters".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = rng_from_seed(cfg.seed);
    let quarters: Vec<Quarter> = (0..cfg.n_quarters as i64)
        .map(|i| Quarter::from_ordinal(cfg.first_quarter.ordinal() + i))
        .collect();

    // rate levels at the lead quarter plus each sample quarter
    let mut levels = Vec::with_capacity(cfg.n_quarters + 1);
    let mut level: f64 = 3.0;
    let mut change: f64 = 0.0;
    levels.push(level);
    for _ in 0..cfg.n_quarters {
        change = 0.8 * change + 0.25 * std_normal(&mut rng) - 0.05 * (level - 3.0);
        level = (level + change).max(0.05);
        levels.push(level);
    }
    // d_ff[t] aligns with levels[t]; the first entry is a dummy zero
    let mut d_ff = vec![0.0];
    d_ff.extend(levels.windows(2).map(|w| w[1] - w[0]));

    let mut rates = String::from("date,value\n");
    let lead = cfg.first_quarter.pred();
    for (i, &lv) in levels.iter().enumerate() {
        let q = Quarter::from_ordinal(lead.ordinal() + i as i64);
        let prev = if i == 0 { lv } else { levels[i - 1] };
        for m in 1..=3u32 {
            let month = (q.q() as u32 - 1) * 3 + m;
            let v = prev + (lv - prev) * m as f64 / 3.0;
            let v = if m == 3 { lv } else { v };
            writeln!(rates, "{:04}-{month:02}-01,{v}", q.year()).expect("string write");
        }
    }

    let per = cfg.n_banks / 10;
    let mut income = Vec::with_capacity(10);
    let mut expense = Vec::with_capacity(10);
    for d in 0..10 {
        let df = d as f64;
        // level paths over the lead quarter and the sample; index 0 = lead
        let inc = walk_levels(
            6.0,
            [0.0, 0.05 + 0.003 * df, 0.04 + 0.002 * df],
            cfg.q,
            cfg.r,
            &d_ff,
            &mut rng,
        );
        let exp = walk_levels(
            2.5,
            [0.0, 0.12 + 0.01 * df, 0.07 + 0.005 * df],
            cfg.q,
            cfg.r,
            &d_ff,
            &mut rng,
        );
        income.push(inc);
        expense.push(exp);
    }

    let mut call = String::from("cert,date,intincy,eintexp,asset\n");
    for b in 0..cfg.n_banks {
        let decile = (b * 10 / cfg.n_banks).min(9);
        let within = b - decile * per.max(1);
        let offset = within as f64 - (per.max(1) as f64 - 1.0) / 2.0;
        let base_assets = 1.0e5 * 1.25f64.powi(b as i32);
        let mut cum = 0.0;
        for (t, q) in quarters.iter().enumerate() {
            let assets = (base_assets * 1.01f64.powi(t as i32)).round();
            let inc_pct = income[decile][t + 1] + 0.1 * offset;
            let exp_pct = (expense[decile][t + 1] + 0.05 * offset).max(0.0);
            if q.q() == 1 {
                cum = 0.0;
            }
            cum += exp_pct / 400.0 * assets;
            writeln!(
                call,
                "{:06},{},{},{},{}",
                10000 + b,
                q.end_date(),
                inc_pct / 100.0,
                cum,
                assets
            )
            .expect("string write");
        }
    }

    let mut market = String::from("date,xlf_ret,spy_ret\n");
    for q in &quarters {
        let spy = 0.02 + 0.07 * std_normal(&mut rng);
        let xlf = 1.1 * spy + 0.03 * std_normal(&mut rng);
        writeln!(market, "{},{xlf},{spy}", q.end_date()).expect("string write");
    }

    let paths = FixturePaths {
        call_report: dir.join("call_report.csv"),
        rates: dir.join("rates.csv"),
        market: dir.join("market.csv"),
        config: dir.join("fixture.conf"),
    };
    let conf = "# synthetic fixture; paths are relative to this file\n\
                call-report = call_report.csv\n\
                rates = rates.csv\n\
                market = market.csv\n\
                ratio-scale = 400\n";
    for (path, body) in [
        (&paths.call_report, call.as_str()),
        (&paths.rates, rates.as_str()),
        (&paths.market, market.as_str()),
        (&paths.config, conf),
    ] {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}
