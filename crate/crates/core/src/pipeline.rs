//! Batch orchestration: configuration, the staged end-to-end run, and the
//! run manifest.
//!
//! Stages run in a fixed order (ingest, betas, tvp, tests, pricing); each
//! requested stage pulls in the ones it depends on. Outputs land in one
//! directory together with `manifest.json`, which is written even when a
//! stage fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    adf_test, cusum_test, default_adf_lags, describe, granger_test, AdfSpec, CusumLevel, GrangerResult, StatsSummary,
};
use crate::error::{Error, Result};
use crate::figures::{default_bin_width, histogram, histogram_grid, line_chart, LineSeries};
use crate::ingest::{
    build_decile_panel, deannualize_expense, parse_call_report, parse_market, parse_rates, write_error_report,
    DecilePanel, MarketReturn, PanelOptions, RateSampling, Weighting, NUM_DECILES,
};
use crate::kalman::{
    estimate_hyperparameters, kalman_filter, tvp_beta_series, MleFit, MleOptions, TvpBetaSeries, DEFAULT_BURN_IN,
    DEFAULT_STARTS,
};
use crate::ols::{estimate_beta, nim_beta, pricing_regression, shock_effect, stars, Design};
use crate::quarter::Quarter;
use crate::simulation::derive_seed;
use crate::table::{decimal_difference, fmt_num, Cell, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Output directory used when no `--out` flag is given.
pub const OUT_DIR_ENV: &str = "BANKBETA_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_MARKET_CAP_BASE: f64 = 2.0e12;
pub const DEFAULT_BETA_YLIM: (f64, f64) = (-0.2, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Betas,
    Tvp,
    Tests,
    Pricing,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Betas => "betas",
            Stage::Tvp => "tvp",
            Stage::Tests => "tests",
            Stage::Pricing => "pricing",
            Stage::All => "all",
        }
    }

    /// Whether running `self` requires running `other`.
    pub fn includes(self, other: Stage) -> bool {
        use Stage::*;
        match self {
            All => true,
            Ingest => other == Ingest,
            Betas => matches!(other, Ingest | Betas),
            Tvp => matches!(other, Ingest | Tvp),
            Tests => matches!(other, Ingest | Tvp | Tests),
            Pricing => matches!(other, Ingest | Tvp | Pricing),
        }
    }
}

/// Every recognized configuration key. Each is also a command-line flag.
pub const CONFIG_KEYS: [&str; 14] = [
    "call-report",
    "rates",
    "market",
    "weighting",
    "rate-sampling",
    "burn-in",
    "granger-lags",
    "starts",
    "seed",
    "ratio-scale",
    "market-cap-base",
    "full-precision",
    "beta-ylim",
    "adf-max-lags",
];
const PATH_KEYS: [&str; 3] = ["call-report", "rates", "market"];

/// Raw `key = value` settings. Path values read from a file are resolved
/// against that file's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> Result<String> {
    let k = key.trim().replace('_', "-").to_ascii_lowercase();
    if CONFIG_KEYS.contains(&k.as_str()) {
        Ok(k)
    } else {
        Err(Error::Config(format!("unknown configuration key `{}`", key.trim())))
    }
}

impl ConfigMap {
    pub fn parse_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = normalize_key(k)?;
            let mut value = v.trim().to_string();
            if PATH_KEYS.contains(&key.as_str()) {
                if let Some(base) = base_dir {
                    value = base.join(&value).display().to_string();
                }
            }
            map.entries.insert(key, value);
        }
        Ok(map)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text, path.parent())
    }

    /// Sets or overrides one key; used for command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key)?;
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub call_report: PathBuf,
    pub rates: PathBuf,
    pub market: Option<PathBuf>,
    pub weighting: Weighting,
    pub rate_sampling: RateSampling,
    pub burn_in: usize,
    pub granger_lags: usize,
    pub starts: usize,
    pub seed: u64,
    pub ratio_scale: f64,
    pub market_cap_base: f64,
    pub full_precision: bool,
    pub beta_ylim: (f64, f64),
    /// ADF lag cap; `None` uses `floor(12 (T/100)^(1/4))`.
    pub adf_max_lags: Option<usize>,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

impl PipelineConfig {
    pub fn new(call_report: impl Into<PathBuf>, rates: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            call_report: call_report.into(),
            rates: rates.into(),
            market: None,
            weighting: Weighting::Equal,
            rate_sampling: RateSampling::LastObservation,
            burn_in: DEFAULT_BURN_IN,
            granger_lags: crate::diagnostics::DEFAULT_GRANGER_LAGS,
            starts: DEFAULT_STARTS,
            seed: 0,
            ratio_scale: 1.0,
            market_cap_base: DEFAULT_MARKET_CAP_BASE,
            full_precision: false,
            beta_ylim: DEFAULT_BETA_YLIM,
            adf_max_lags: None,
        }
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let required = |k: &str| {
            map.get(k)
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config(format!("missing required setting `{k}`")))
        };
        let mut cfg = PipelineConfig::new(required("call-report")?, required("rates")?);
        cfg.market = map.get("market").map(PathBuf::from);
        if let Some(v) = map.get("weighting") {
            cfg.weighting = match v.to_ascii_lowercase().as_str() {
                "equal" => Weighting::Equal,
                "asset" | "assets" => Weighting::Asset,
                _ => {
                    return Err(Error::Config(format!(
                        "weighting must be `equal` or `asset`, got `{v}`"
                    )))
                }
            };
        }
        if let Some(v) = map.get("rate-sampling") {
            cfg.rate_sampling = match v.to_ascii_lowercase().as_str() {
                "last" => RateSampling::LastObservation,
                "average" | "mean" => RateSampling::QuarterlyAverage,
                _ => {
                    return Err(Error::Config(format!(
                        "rate-sampling must be `last` or `average`, got `{v}`"
                    )))
                }
            };
        }
        if let Some(v) = map.get("burn-in") {
            cfg.burn_in = parse_value("burn-in", v)?;
        }
        if let Some(v) = map.get("granger-lags") {
            cfg.granger_lags = parse_value("granger-lags", v)?;
        }
        if let Some(v) = map.get("starts") {
            cfg.starts = parse_value("starts", v)?;
        }
        if let Some(v) = map.get("seed") {
            cfg.seed = parse_value("seed", v)?;
        }
        if let Some(v) = map.get("ratio-scale") {
            cfg.ratio_scale = parse_value("ratio-scale", v)?;
        }
        if let Some(v) = map.get("market-cap-base") {
            cfg.market_cap_base = parse_value("market-cap-base", v)?;
        }
        if let Some(v) = map.get("full-precision") {
            cfg.full_precision = parse_value("full-precision", v)?;
        }
        if let Some(v) = map.get("beta-ylim") {
            let (a, b) = v
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("beta-ylim must be `low,high`, got `{v}`")))?;
            cfg.beta_ylim = (parse_value("beta-ylim", a.trim())?, parse_value("beta-ylim", b.trim())?);
        }
        if let Some(v) = map.get("adf-max-lags") {
            cfg.adf_max_lags = Some(parse_value("adf-max-lags", v)?);
        }
        Ok(cfg)
    }

    /// Checks settings and input files for `stage` without touching the
    /// output directory.
    pub fn validate(&self, stage: Stage) -> Result<()> {
        if self.granger_lags < 1 {
            return Err(Error::Config("granger-lags must be at least 1".into()));
        }
        if self.starts < 1 {
            return Err(Error::Config("starts must be at least 1".into()));
        }
        if !(self.ratio_scale.is_finite() && self.ratio_scale > 0.0) {
            return Err(Error::Config("ratio-scale must be positive".into()));
        }
        if !self.market_cap_base.is_finite() {
            return Err(Error::Config("market-cap-base must be finite".into()));
        }
        if !(self.beta_ylim.0 < self.beta_ylim.1) {
            return Err(Error::Config("beta-ylim low must be below high".into()));
        }
        let mut inputs = vec![("call-report", Some(&self.call_report)), ("rates", Some(&self.rates))];
        if stage.includes(Stage::Pricing) {
            inputs.push(("market", self.market.as_ref()));
        }
        for (key, path) in inputs {
            match path {
                None => {
                    return Err(Error::Config(format!(
                        "stage `{}` needs the `{key}` setting",
                        stage.name()
                    )))
                }
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!("{key} file {} is not readable", p.display())))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Settings that shape the outputs, one `key=value` per line. Input
    /// paths are left out; their contents enter the manifest as digests.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let w = match self.weighting {
            Weighting::Equal => "equal",
            Weighting::Asset => "asset",
        };
        let rs = match self.rate_sampling {
            RateSampling::LastObservation => "last",
            RateSampling::QuarterlyAverage => "average",
        };
        let _ = writeln!(
            s,
            "adf-max-lags={}",
            self.adf_max_lags.map(|v| v.to_string()).unwrap_or_default()
        );
        let _ = writeln!(s, "beta-ylim={:?},{:?}", self.beta_ylim.0, self.beta_ylim.1);
        let _ = writeln!(s, "burn-in={}", self.burn_in);
        let _ = writeln!(s, "full-precision={}", self.full_precision);
        let _ = writeln!(s, "granger-lags={}", self.granger_lags);
        let _ = writeln!(s, "market-cap-base={:?}", self.market_cap_base);
        let _ = writeln!(s, "rate-sampling={rs}");
        let _ = writeln!(s, "ratio-scale={:?}", self.ratio_scale);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "starts={}", self.starts);
        let _ = writeln!(s, "weighting={w}");
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub stage: String,
    pub config_hash: String,
    /// Input role to sha256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to sha256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
    pub warnings: Vec<String>,
    /// `ok` or `failed`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// A failed run: the error plus the manifest that was written for it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub manifest: Option<RunManifest>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, manifest: None }
    }
}

struct Outputs {
    dir: PathBuf,
    full_precision: bool,
    files: BTreeSet<String>,
    warnings: Vec<String>,
}

impl Outputs {
    fn record(&mut self, path: &Path) {
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            self.files.insert(name.to_string());
        }
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        for p in table.write(&self.dir.join(name), self.full_precision)? {
            self.record(&p);
        }
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.record(&path);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Equation {
    Income,
    Expense,
}

impl Equation {
    fn name(self) -> &'static str {
        match self {
            Equation::Income => "income",
            Equation::Expense => "expense",
        }
    }
}

struct TvpFit {
    equation: Equation,
    decile: u8,
    fit: MleFit,
    series: TvpBetaSeries,
}

#[derive(Default)]
struct State {
    panel: Option<DecilePanel>,
    market: Vec<MarketReturn>,
    /// Income fits for deciles 1..=10, then expense fits.
    tvp: Vec<TvpFit>,
}

impl State {
    fn panel(&self) -> &DecilePanel {
        self.panel.as_ref().expect("ingest runs first")
    }

    fn tvp(&self, eq: Equation, decile: u8) -> &TvpFit {
        self.tvp
            .iter()
            .find(|f| f.equation == eq && f.decile == decile)
            .expect("tvp runs first")
    }
}

fn stage_ingest(cfg: &PipelineConfig, stage: Stage, out: &mut Outputs, st: &mut State) -> Result<()> {
    let calls = parse_call_report(&cfg.call_report)?;
    let (rates, rate_errors) = parse_rates(&cfg.rates, cfg.rate_sampling)?;
    let mut errors = calls.errors.clone();
    errors.extend(rate_errors);
    if stage.includes(Stage::Pricing) {
        let market = parse_market(cfg.market.as_ref().expect("validated"))?;
        errors.extend(market.errors);
        st.market = market.records;
    }
    let path = out.dir.join("parse_errors.jsonl");
    write_error_report(&path, &errors)?;
    out.record(&path);
    if !errors.is_empty() {
        out.warnings
            .push(format!("{} input rows rejected; see parse_errors.jsonl", errors.len()));
    }
    let flagged = deannualize_expense(&calls.records).flagged;
    if !flagged.is_empty() {
        out.warnings.push(format!(
            "{} institution-quarters left out of expense aggregates (first: {} {}: {})",
            flagged.len(),
            flagged[0].institution_id,
            flagged[0].quarter,
            flagged[0].reason
        ));
    }
    let panel = build_decile_panel(
        &calls.records,
        &rates,
        PanelOptions {
            weighting: cfg.weighting,
            ratio_scale: cfg.ratio_scale,
        },
    )?;
    let mut t = Table::new(&["decile", "quarter", "d_int_inc", "d_int_exp", "d_ff", "d_ff_lag"]);
    for s in &panel.deciles {
        for i in 0..s.len() {
            t.push(vec![
                s.decile.into(),
                s.quarters[i].to_string().into(),
                s.d_int_inc[i].into(),
                s.d_int_exp[i].into(),
                s.d_ff[i].into(),
                s.d_ff_lag[i].into(),
            ]);
        }
    }
    out.table("panel.csv", &t)?;
    st.panel = Some(panel);
    Ok(())
}

fn deciles() -> impl Iterator<Item = u8> {
    1..=NUM_DECILES as u8
}

fn stage_betas(_cfg: &PipelineConfig, out: &mut Outputs, st: &mut State) -> Result<()> {
    let panel = st.panel();
    let mut table1 = Table::new(&["decile", "income_beta", "expense_beta", "nim_beta"]);
    let mut cusum = Table::new(&[
        "decile",
        "equation",
        "crossed",
        "first_crossing",
        "max_boundary_ratio",
        "n_residuals",
    ]);
    for d in deciles() {
        let s = panel
            .decile(d)
            .ok_or_else(|| Error::Data(format!("panel has no decile {d}")))?;
        let (inc, _) = estimate_beta(&s.d_int_inc, &s.d_ff, &s.d_ff_lag)?;
        let (exp, _) = estimate_beta(&s.d_int_exp, &s.d_ff, &s.d_ff_lag)?;
        let (inc_txt, exp_txt) = (fmt_num(inc.beta_sum), fmt_num(exp.beta_sum));
        let nim_txt = decimal_difference(&inc_txt, &exp_txt)?;
        table1.push(vec![
            d.into(),
            Cell::Exact {
                text: inc_txt,
                full: inc.beta_sum,
            },
            Cell::Exact {
                text: exp_txt,
                full: exp.beta_sum,
            },
            Cell::Exact {
                text: nim_txt,
                full: nim_beta(&inc, &exp),
            },
        ]);
        let design = Design::from_columns(&[&s.d_ff, &s.d_ff_lag], true);
        for (eq, y) in [(Equation::Income, &s.d_int_inc), (Equation::Expense, &s.d_int_exp)] {
            let c = cusum_test(y, &design, CusumLevel::Five)?;
            let first = c
                .first_crossing
                .map(|i| Cell::Text(s.quarters[i].to_string()))
                .unwrap_or(Cell::Empty);
            cusum.push(vec![
                d.into(),
                eq.name().into(),
                c.crossed.into(),
                first,
                c.max_boundary_ratio.into(),
                c.recursive_residuals.len().into(),
            ]);
        }
    }
    out.table("table1.csv", &table1)?;
    out.table("cusum.csv", &cusum)?;
    Ok(())
}

fn fit_tvp(cfg: &PipelineConfig, panel: &DecilePanel, job: usize) -> Result<TvpFit> {
    let equation = if job < NUM_DECILES {
        Equation::Income
    } else {
        Equation::Expense
    };
    let decile = (job % NUM_DECILES) as u8 + 1;
    let s = panel
        .decile(decile)
        .ok_or_else(|| Error::Data(format!("panel has no decile {decile}")))?;
    let y = match equation {
        Equation::Income => &s.d_int_inc,
        Equation::Expense => &s.d_int_exp,
    };
    let x = s.regressors();
    let opts = MleOptions {
        burn_in: cfg.burn_in,
        starts: cfg.starts,
        seed: derive_seed(cfg.seed, job as u64),
        ..MleOptions::default()
    };
    let fit = estimate_hyperparameters(y, &x, &opts)?;
    let output = kalman_filter(&fit.spec)?;
    let series = tvp_beta_series(&output, &s.quarters)?;
    Ok(TvpFit {
        equation,
        decile,
        fit,
        series,
    })
}

fn nim_path(inc: &TvpBetaSeries, exp: &TvpBetaSeries) -> Vec<f64> {
    inc.beta_sum.iter().zip(&exp.beta_sum).map(|(a, b)| a - b).collect()
}

fn stage_tvp(cfg: &PipelineConfig, out: &mut Outputs, st: &mut State) -> Result<()> {
    let panel = st.panel();
    let fits: Vec<TvpFit> = (0..2 * NUM_DECILES)
        .into_par_iter()
        .map(|job| fit_tvp(cfg, panel, job))
        .collect::<Result<_>>()?;
    st.tvp = fits;

    let mut hyper = Table::new(&[
        "equation",
        "decile",
        "q_alpha",
        "q_beta0",
        "q_beta1",
        "r",
        "log_likelihood",
    ]);
    for f in &st.tvp {
        let mut t = Table::new(&["quarter", "beta0", "beta1", "beta_sum", "cond_vol"]);
        let s = &f.series;
        for i in 0..s.len() {
            t.push(vec![
                s.quarters[i].to_string().into(),
                s.beta0[i].into(),
                s.beta1[i].into(),
                s.beta_sum[i].into(),
                s.cond_vol[i].into(),
            ]);
        }
        out.table(&format!("tvp_{}_d{}.csv", f.equation.name(), f.decile), &t)?;
        let h = &f.fit.spec.hyper;
        hyper.push(vec![
            f.equation.name().into(),
            f.decile.into(),
            h.q[0].into(),
            h.q[1].into(),
            h.q[2].into(),
            h.r.into(),
            f.fit.log_likelihood.into(),
        ]);
    }
    out.table("tvp_hyperparams.csv", &hyper)?;

    let mut adf = Table::new(&["series", "decile", "t_stat", "cv_5pct", "lags", "n_obs", "reject_5pct"]);
    for d in deciles() {
        let inc = &st.tvp(Equation::Income, d).series;
        let exp = &st.tvp(Equation::Expense, d).series;
        let nim = nim_path(inc, exp);
        for (name, path) in [("income", &inc.beta_sum), ("expense", &exp.beta_sum), ("nim", &nim)] {
            let max_lags = cfg.adf_max_lags.unwrap_or_else(|| default_adf_lags(path.len()));
            match adf_test(path, max_lags, AdfSpec::Constant) {
                Ok(r) => adf.push(vec![
                    name.into(),
                    d.into(),
                    r.t_stat.into(),
                    r.cv_5pct.into(),
                    r.lags.into(),
                    r.n_obs.into(),
                    r.reject_unit_root_5pct.into(),
                ]),
                Err(e) => out
                    .warnings
                    .push(format!("ADF skipped for {name} beta, decile {d}: {e}")),
            }
        }
    }
    out.table("adf.csv", &adf)?;
    emit_figures(cfg, out, st)
}

fn quarter_labels(q: &[Quarter]) -> Vec<String> {
    q.iter().map(Quarter::to_string).collect()
}

fn emit_figures(cfg: &PipelineConfig, out: &mut Outputs, st: &State) -> Result<()> {
    let labels = quarter_labels(&st.tvp(Equation::Income, 1).series.quarters);
    let paths = |f: &dyn Fn(u8) -> Vec<f64>| -> Vec<LineSeries> {
        deciles()
            .map(|d| LineSeries {
                label: format!("D{d}"),
                values: f(d),
            })
            .collect()
    };
    let beta = |eq| move |d: u8| st.tvp(eq, d).series.beta_sum.clone();
    let vol = |eq| move |d: u8| st.tvp(eq, d).series.cond_vol.clone();
    let nim = |d: u8| {
        nim_path(
            &st.tvp(Equation::Income, d).series,
            &st.tvp(Equation::Expense, d).series,
        )
    };
    let inc_beta = paths(&beta(Equation::Income));
    let exp_beta = paths(&beta(Equation::Expense));
    let nim_beta = paths(&nim);
    let inc_vol = paths(&vol(Equation::Income));
    let exp_vol = paths(&vol(Equation::Expense));
    let ends = |v: &[LineSeries]| vec![v[0].clone(), v[NUM_DECILES - 1].clone()];
    let ylim = Some(cfg.beta_ylim);

    let lines: [(&str, &str, Vec<LineSeries>, Option<(f64, f64)>); 7] = [
        ("fig1.svg", "Time-varying interest income beta", inc_beta.clone(), ylim),
        ("fig2.svg", "Time-varying interest expense beta", exp_beta.clone(), ylim),
        ("fig3.svg", "Time-varying NIM beta", nim_beta.clone(), ylim),
        (
            "fig7.svg",
            "Conditional volatility of the interest income beta",
            inc_vol.clone(),
            None,
        ),
        (
            "fig8.svg",
            "Conditional volatility of the interest expense beta",
            exp_vol.clone(),
            None,
        ),
        (
            "fig9.svg",
            "Interest income beta volatility, smallest vs largest decile",
            ends(&inc_vol),
            None,
        ),
        (
            "fig10.svg",
            "Interest expense beta volatility, smallest vs largest decile",
            ends(&exp_vol),
            None,
        ),
    ];
    for (name, title, series, ylim) in lines {
        match line_chart(title, &labels, &series, ylim) {
            Ok(svg) => out.text(name, &svg)?,
            Err(e) => out.warnings.push(format!("{name} skipped: {e}")),
        }
    }
    let hists = [
        ("fig4.svg", "Interest income beta by decile", &inc_beta),
        ("fig5.svg", "Interest expense beta by decile", &exp_beta),
        ("fig6.svg", "NIM beta by decile", &nim_beta),
    ];
    for (name, title, series) in hists {
        let data: Vec<&[f64]> = series.iter().map(|s| s.values.as_slice()).collect();
        let width = default_bin_width(&data);
        let panels: Result<Vec<(String, _)>> = series
            .iter()
            .map(|s| histogram(&s.values, width).map(|h| (s.label.clone(), h)))
            .collect();
        match panels {
            Ok(p) => out.text(name, &histogram_grid(title, &p))?,
            Err(e) => out.warnings.push(format!("{name} skipped: {e}")),
        }
    }
    Ok(())
}

struct GrangerRow {
    decile: u8,
    inc_to_exp: GrangerResult,
    exp_to_inc: GrangerResult,
}

fn granger_rows(
    cfg: &PipelineConfig,
    st: &State,
    pick: impl Fn(&TvpBetaSeries) -> &Vec<f64>,
) -> Result<Vec<GrangerRow>> {
    deciles()
        .map(|d| {
            let inc = pick(&st.tvp(Equation::Income, d).series);
            let exp = pick(&st.tvp(Equation::Expense, d).series);
            Ok(GrangerRow {
                decile: d,
                inc_to_exp: granger_test(inc, exp, cfg.granger_lags)?,
                exp_to_inc: granger_test(exp, inc, cfg.granger_lags)?,
            })
        })
        .collect()
}

/// `ii` is interest income, `ie` interest expense.
fn granger_table(rows: &[GrangerRow]) -> Table {
    let mut t = Table::new(&["decile", "f_ii_to_ie", "p_ii_to_ie", "f_ie_to_ii", "p_ie_to_ii"]);
    for r in rows {
        t.push(vec![
            r.decile.into(),
            r.inc_to_exp.f_stat.into(),
            r.inc_to_exp.p_value.into(),
            r.exp_to_inc.f_stat.into(),
            r.exp_to_inc.p_value.into(),
        ]);
    }
    t
}

fn p_with_stars(p: f64) -> String {
    format!("{p:.4}{}", stars(p))
}

fn granger_report(title: &str, rows: &[GrangerRow], lags: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title} (SSR F-test, {lags} lags)");
    let _ = writeln!(
        s,
        "{:<8}{:>12}{:>14}{:>12}{:>14}",
        "decile", "F inc->exp", "p", "F exp->inc", "p"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8}{:>12.4}{:>14}{:>12.4}{:>14}",
            r.decile,
            r.inc_to_exp.f_stat,
            p_with_stars(r.inc_to_exp.p_value),
            r.exp_to_inc.f_stat,
            p_with_stars(r.exp_to_inc.p_value)
        );
    }
    s
}

fn stats_table(st: &State, eq: Equation) -> Result<Table> {
    let summaries: Vec<StatsSummary> = deciles()
        .map(|d| describe(&st.tvp(eq, d).series.cond_vol))
        .collect::<Result<_>>()?;
    let mut header = vec!["stat".to_string()];
    header.extend(deciles().map(|d| format!("d{d}")));
    let mut t = Table::new(&header);
    let rows: [(&str, fn(&StatsSummary) -> f64); 7] = [
        ("mean", |s| s.mean),
        ("std", |s| s.std),
        ("min", |s| s.min),
        ("p25", |s| s.p25),
        ("p50", |s| s.p50),
        ("p75", |s| s.p75),
        ("max", |s| s.max),
    ];
    for (name, get) in rows {
        let mut row = vec![Cell::from(name)];
        row.extend(summaries.iter().map(|s| Cell::Num(get(s))));
        t.push(row);
    }
    let mut row = vec![Cell::from("n")];
    row.extend(summaries.iter().map(|s| Cell::from(s.n)));
    t.push(row);
    Ok(t)
}

fn stage_tests(cfg: &PipelineConfig, out: &mut Outputs, st: &mut State) -> Result<()> {
    let betas = granger_rows(cfg, st, |s| &s.beta_sum)?;
    out.table("granger_betas.csv", &granger_table(&betas))?;
    out.table("vol_income_stats.csv", &stats_table(st, Equation::Income)?)?;
    out.table("vol_expense_stats.csv", &stats_table(st, Equation::Expense)?)?;
    let vols = granger_rows(cfg, st, |s| &s.cond_vol)?;
    out.table("granger_vol.csv", &granger_table(&vols))?;
    let mut report = granger_report("Granger causality between beta paths", &betas, cfg.granger_lags);
    report.push('\n');
    report.push_str(&granger_report(
        "Granger causality between beta volatilities",
        &vols,
        cfg.granger_lags,
    ));
    report.push_str(STAR_LEGEND);
    out.text("granger_report.txt", &report)
}

const STAR_LEGEND: &str = "\n* p<0.10  ** p<0.05  *** p<0.01  **** p<0.001\n";

fn vol_changes(s: &TvpBetaSeries) -> BTreeMap<Quarter, f64> {
    s.quarters
        .windows(2)
        .zip(s.cond_vol.windows(2))
        .filter(|(q, _)| q[0].succ() == q[1])
        .map(|(q, v)| (q[1], v[1] - v[0]))
        .collect()
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn stage_pricing(cfg: &PipelineConfig, out: &mut Outputs, st: &mut State) -> Result<()> {
    let top = NUM_DECILES as u8;
    let d_exp = vol_changes(&st.tvp(Equation::Expense, top).series);
    let d_inc = vol_changes(&st.tvp(Equation::Income, top).series);
    let (mut xlf, mut cv_exp, mut cv_inc, mut mkt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for m in &st.market {
        if let (Some(e), Some(i)) = (d_exp.get(&m.quarter), d_inc.get(&m.quarter)) {
            xlf.push(m.xlf_ret);
            cv_exp.push(*e);
            cv_inc.push(*i);
            mkt.push(m.spy_ret);
        }
    }
    if xlf.len() < 8 {
        return Err(Error::InsufficientData {
            needed: 8,
            got: xlf.len(),
        });
    }
    let fit = pricing_regression(&xlf, &cv_exp, &cv_inc, &mkt)?;
    let mut t = Table::new(&["param", "coefficient", "p_value"]);
    for (i, name) in ["gamma0", "gamma1", "gamma2", "gamma3"].iter().enumerate() {
        t.push(vec![(*name).into(), fit.coefficients[i].into(), fit.p_values[i].into()]);
    }
    t.push(vec!["adj_r2".into(), fit.adj_r2.into(), Cell::Empty]);
    out.table("pricing.csv", &t)?;
    let mut report = String::new();
    let _ = writeln!(report, "{:<10}{:>14}{:>14}", "param", "coefficient", "p");
    for (i, name) in ["gamma0", "gamma1", "gamma2", "gamma3"].iter().enumerate() {
        let _ = writeln!(
            report,
            "{:<10}{:>14.4}{:>14}",
            name,
            fit.coefficients[i],
            p_with_stars(fit.p_values[i])
        );
    }
    let _ = writeln!(report, "{:<10}{:>14.4}", "adj_r2", fit.adj_r2);
    let _ = writeln!(report, "n_obs = {}", fit.n_obs);
    report.push_str(STAR_LEGEND);
    out.text("pricing_report.txt", &report)?;

    let sd = sample_sd(&cv_exp);
    let effect = shock_effect(fit.coefficients[1], sd, Some(cfg.market_cap_base));
    let mut body = String::new();
    let _ = writeln!(body, "coefficient = {}", fmt_num(fit.coefficients[1]));
    let _ = writeln!(body, "shock_sd = {}", fmt_num(sd));
    let _ = writeln!(body, "fraction = {}", fmt_num(effect.fraction));
    let _ = writeln!(body, "base_value = {}", fmt_num(cfg.market_cap_base));
    let _ = writeln!(body, "currency = {}", fmt_num(effect.currency.unwrap_or(f64::NAN)));
    let _ = writeln!(body, "n_obs = {}", fit.n_obs);
    out.text("effect_size.txt", &body)
}

type StageFn = fn(&PipelineConfig, &mut Outputs, &mut State) -> Result<()>;

/// Runs `stage` and everything it depends on, writing into `out_dir`.
///
/// Configuration problems are reported before the output directory is
/// created. After that, a failing stage still leaves its predecessors'
/// outputs and a manifest marked `failed`.
pub fn run(cfg: &PipelineConfig, stage: Stage, out_dir: &Path) -> std::result::Result<RunManifest, RunFailure> {
    cfg.validate(stage)?;
    if out_dir.exists() && !out_dir.is_dir() {
        return Err(Error::Config(format!("output path {} is not a directory", out_dir.display())).into());
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("call-report".to_string(), file_digest(&cfg.call_report)?);
    inputs.insert("rates".to_string(), file_digest(&cfg.rates)?);
    if let Some(m) = cfg.market.as_ref().filter(|_| stage.includes(Stage::Pricing)) {
        inputs.insert("market".to_string(), file_digest(m)?);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        full_precision: cfg.full_precision,
        files: BTreeSet::new(),
        warnings: Vec::new(),
    };
    let mut state = State::default();
    let mut timings = Vec::new();
    let mut failure = None;
    let plan: [(Stage, StageFn); 4] = [
        (Stage::Betas, stage_betas),
        (Stage::Tvp, stage_tvp),
        (Stage::Tests, stage_tests),
        (Stage::Pricing, stage_pricing),
    ];
    let start = Instant::now();
    let res = stage_ingest(cfg, stage, &mut out, &mut state);
    timings.push(StageTiming {
        stage: Stage::Ingest.name().into(),
        micros: start.elapsed().as_micros() as u64,
    });
    if let Err(e) = res {
        failure = Some((Stage::Ingest, e));
    }
    for (s, f) in plan {
        if failure.is_some() || !stage.includes(s) {
            continue;
        }
        let start = Instant::now();
        let res = f(cfg, &mut out, &mut state);
        timings.push(StageTiming {
            stage: s.name().into(),
            micros: start.elapsed().as_micros() as u64,
        });
        if let Err(e) = res {
            failure = Some((s, e));
        }
    }

    let mut outputs = BTreeMap::new();
    for name in &out.files {
        match file_digest(&out_dir.join(name)) {
            Ok(d) => {
                outputs.insert(name.clone(), d);
            }
            Err(e) => out.warnings.push(format!("cannot digest {name}: {e}")),
        }
    }
    let manifest = RunManifest {
        version: VERSION.to_string(),
        stage: stage.name().to_string(),
        config_hash: cfg.hash(),
        inputs,
        outputs,
        timings,
        warnings: out.warnings,
        status: if failure.is_some() { "failed" } else { "ok" }.to_string(),
        failed_stage: failure.as_ref().map(|(s, _)| s.name().to_string()),
        error: failure.as_ref().map(|(_, e)| e.to_string()),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    match failure {
        None => Ok(manifest),
        Some((_, error)) => Err(RunFailure {
            error,
            manifest: Some(manifest),
        }),
    }
}
