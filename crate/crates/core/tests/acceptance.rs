//! Acceptance criteria, one pass/fail line each.
//!
//! Runs as a plain binary (`harness = false`). Set `ACCEPTANCE_ONLY=3,7` to
//! run a subset. The process fails when any criterion fails, except those
//! listed in `KNOWN_UNATTAINABLE`, which are still run and reported.

use std::time::{Duration, Instant};

use bankbeta::diagnostics::{adf_test, cusum_test, default_adf_lags, granger_test, AdfSpec, CusumLevel};
use bankbeta::kalman::{
    conditional_volatility, estimate_hyperparameters, kalman_filter, Hyperparams, MleOptions, Prior, StateSpaceSpec,
    Transition,
};
use bankbeta::ols::{fit_ols, nim_beta, shock_effect, BetaEstimate, Design};
use bankbeta::pipeline::{run, ConfigMap, PipelineConfig, Stage};
use bankbeta::simulation::{
    mc_experiment, simulate_tvp, std_normal, write_fixture, FixtureConfig, RepStat, TvpSimConfig,
};
use bankbeta::table::{decimal_difference, read_csv};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Criterion 11's worked value 0.0531125 does not equal its own formula
/// 0.04 + 0.01 * (1 + 0.25 + 0.0625) = 0.053125, so no correct filter can
/// match it to 1e-12.
const KNOWN_UNATTAINABLE: [usize; 1] = [11];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn n01(rng: &mut ChaCha8Rng) -> f64 {
    std_normal(rng)
}

/// Table 1 rows: decile, income beta, expense beta, NIM beta.
const TABLE1: [(u8, &str, &str, &str); 10] = [
    (1, "0.09143", "0.1966", "-0.10517"),
    (2, "0.09294", "0.2212", "-0.12826"),
    (3, "0.09576", "0.2396", "-0.14384"),
    (4, "0.10307", "0.2471", "-0.14403"),
    (5, "0.10133", "0.2587", "-0.15737"),
    (6, "0.10187", "0.2624", "-0.16053"),
    (7, "0.10519", "0.2769", "-0.17171"),
    (8, "0.10974", "0.2796", "-0.16986"),
    (9, "0.11214", "0.2993", "-0.18716"),
    (10, "0.12661", "0.3423", "-0.21569"),
];

fn point_beta(v: f64) -> BetaEstimate {
    BetaEstimate {
        beta0: v,
        beta1: 0.0,
        beta_sum: v,
        sum_stderr: 0.0,
    }
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

fn c1_nim_identity() -> Outcome {
    let mut bad = Vec::new();
    let mut max_ulps = 0;
    for (d, inc, exp, nim) in TABLE1 {
        let v = nim_beta(&point_beta(inc.parse().unwrap()), &point_beta(exp.parse().unwrap()));
        let target: f64 = nim.parse().unwrap();
        max_ulps = max_ulps.max(ulps(v, target));
        let printed = format!("{v:.5}");
        let exact = decimal_difference(inc, exp).unwrap();
        if printed != nim || exact != nim || ulps(v, target) > 4 {
            bad.push(format!("decile {d}: f64 {printed}, decimal {exact}"));
        }
    }
    let first = nim_beta(&point_beta(0.09143), &point_beta(0.19660));
    outcome(
        bad.is_empty(),
        format!(
            "0.09143 - 0.19660 = {first:.5}; 10/10 rows equal in decimal, f64 within {max_ulps} ulp{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; mismatches: {}", bad.join(", "))
            }
        ),
    )
}

fn c2_effect_size() -> Outcome {
    let e = shock_effect(-1.1454, 0.0205, Some(2.0e12));
    let cur = e.currency.unwrap();
    let pass = (-0.0236..=-0.0233).contains(&e.fraction) && (46e9..=48e9).contains(&cur.abs()) && cur < 0.0;
    outcome(pass, format!("fraction {:.7}, currency {:.4e}", e.fraction, cur))
}

fn c3_kalman_ols() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(303);
    for _ in 0..20 {
        let truth = [
            rng.random_range(0.2..1.0),
            rng.random_range(0.5..1.5),
            rng.random_range(-1.0..-0.3),
        ];
        let x: Vec<Vec<f64>> = (0..120).map(|_| vec![1.0, n01(&mut rng), n01(&mut rng)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + n01(&mut rng))
            .collect();
        let ols = fit_ols(&y, &Design::from_rows(&x, true)).unwrap();
        let spec = StateSpaceSpec::new(
            &y,
            &x,
            Hyperparams {
                q: vec![0.0; 3],
                r: 1.0,
            },
        );
        let out = kalman_filter(&spec).unwrap();
        let last = out.filtered_state.last().unwrap();
        for i in 0..3 {
            worst = worst.max((last[i] - ols.coefficients[i]).abs() / ols.coefficients[i].abs());
        }
    }
    outcome(
        worst <= 1e-6,
        format!("worst relative gap {worst:.2e} over 20 fixtures"),
    )
}

fn c4_hand_recursion() -> Outcome {
    let spec = StateSpaceSpec {
        y: vec![1.0],
        x: vec![vec![1.0]],
        transition: Transition::Ar1 {
            mu: vec![0.0],
            gamma: vec![1.0],
        },
        hyper: Hyperparams { q: vec![0.1], r: 0.2 },
        prior: Prior::Explicit {
            mean: vec![0.0],
            cov: vec![1.0],
        },
        burn_in: 0,
    };
    let out = kalman_filter(&spec).unwrap();
    let p = out.predicted_cov[0][(0, 0)];
    let h = out.innovation_variance[0];
    let a = out.filtered_state[0][0];
    let k = (a - out.predicted_state[0][0]) / out.innovations[0];
    let errs = [
        (p - 1.1).abs(),
        (h - 1.3).abs(),
        (k - 11.0 / 13.0).abs(),
        (a - 11.0 / 13.0).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!("P={p}, H={h}, K={k:.15}, a={a:.15}; max error {worst:.1e}"),
    )
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn tvp_draw(rng: &mut ChaCha8Rng) -> (TvpSimConfig, bankbeta::simulation::TvpSample) {
    let cfg = TvpSimConfig {
        seed: rng.random(),
        ..TvpSimConfig::default()
    };
    let s = simulate_tvp(&cfg).expect("valid simulation config");
    (cfg, s)
}

fn c5_calibration() -> Outcome {
    let report = mc_experiment(
        tvp_draw,
        |(cfg, s)| {
            let spec = StateSpaceSpec::new(
                &s.y,
                &s.x,
                Hyperparams {
                    q: cfg.true_q.to_vec(),
                    r: cfg.true_r,
                },
            );
            let out = kalman_filter(&spec)?;
            let z = out.standardized_innovations();
            Ok(RepStat::values(vec![sample_variance(&z[out.burn_in..])]))
        },
        200,
        5,
    )
    .unwrap();
    let frac = report.fraction(0, |v| (0.85..=1.15).contains(&v)).unwrap_or(0.0);
    outcome(
        frac >= 0.90 && report.failed() == 0,
        format!(
            "{:.1}% of 200 reps in [0.85, 1.15], median variance {:.4}",
            100.0 * frac,
            report.median(0).unwrap_or(f64::NAN)
        ),
    )
}

fn c6_mle_recovery() -> Outcome {
    let report = mc_experiment(
        tvp_draw,
        |(cfg, s)| {
            let opts = MleOptions {
                seed: cfg.seed,
                ..MleOptions::default()
            };
            let fit = estimate_hyperparameters(&s.y, &s.x, &opts)?;
            let h = &fit.spec.hyper;
            Ok(RepStat::values(vec![h.q[0], h.q[1], h.q[2], h.r]))
        },
        200,
        6,
    )
    .unwrap();
    let med_r = report.median(3).unwrap_or(f64::NAN);
    let q1_small = report.fraction(0, |q| q < 1e-6).unwrap_or(0.0);
    let rel = (med_r - 1e-3).abs() / 1e-3;
    outcome(
        rel <= 0.30 && q1_small >= 0.80 && report.failed() == 0,
        format!(
            "median r {med_r:.4e} ({:+.1}%), q_1 < 1e-6 in {:.1}%, median q_2 {:.3e}, median q_3 {:.3e}, {} failed reps",
            100.0 * (med_r - 1e-3) / 1e-3,
            100.0 * q1_small,
            report.median(1).unwrap_or(f64::NAN),
            report.median(2).unwrap_or(f64::NAN),
            report.failed()
        ),
    )
}

const CUSUM_T: usize = 200;

fn cusum_draw(rng: &mut ChaCha8Rng, break_at: Option<usize>) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..CUSUM_T).map(|_| n01(rng)).collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(t, xv)| {
            let alpha = if break_at.is_some_and(|b| t >= b) { 2.0 } else { 1.0 };
            alpha + 0.5 * xv + n01(rng)
        })
        .collect();
    (x, y)
}

fn cusum_stat((x, y): &(Vec<f64>, Vec<f64>)) -> bankbeta::Result<RepStat> {
    let c = cusum_test(y, &Design::from_columns(&[x], true), CusumLevel::Five)?;
    Ok(RepStat::verdict(c.crossed))
}

fn c7_cusum() -> Outcome {
    let size = mc_experiment(|r| cusum_draw(r, None), cusum_stat, 1000, 71).unwrap();
    let power = mc_experiment(|r| cusum_draw(r, Some(CUSUM_T / 2)), cusum_stat, 1000, 72).unwrap();
    let (s, p) = (size.rejection_rate().unwrap(), power.rejection_rate().unwrap());
    outcome(
        (0.03..=0.07).contains(&s) && p >= 0.80,
        format!(
            "size {:.1}% (T={CUSUM_T}), power {:.1}% for intercept 1 -> 2 at mid-sample, noise sd 1",
            100.0 * s,
            100.0 * p
        ),
    )
}

/// SSR from normal equations solved by Gaussian elimination with partial
/// pivoting, independent of the SVD path in the library.
fn normal_equation_ssr(y: &[f64], rows: &[Vec<f64>]) -> f64 {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, yv) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * yv;
        }
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for i in c + 1..k {
            let f = a[i][c] / a[c][c];
            for j in c..=k {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    let mut b = vec![0.0; k];
    for i in (0..k).rev() {
        b[i] = (a[i][k] - (i + 1..k).map(|j| a[i][j] * b[j]).sum::<f64>()) / a[i][i];
    }
    rows.iter()
        .zip(y)
        .map(|(r, yv)| (yv - r.iter().zip(&b).map(|(x, c)| x * c).sum::<f64>()).powi(2))
        .sum()
}

fn granger_oracle(cause: &[f64], effect: &[f64], m: usize) -> f64 {
    let n = effect.len();
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
    let rss = normal_equation_ssr(&y, &r_rows);
    let uss = normal_equation_ssr(&y, &u_rows);
    let df = (n - m - 2 * m - 1) as f64;
    ((rss - uss) / m as f64) / (uss / df)
}

fn c8_granger() -> Outcome {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for (i, m) in [1usize, 2, 4, 4, 6, 8].iter().cycle().take(24).enumerate() {
        let n = 60 + 10 * i;
        let cause: Vec<f64> = (0..n).map(|_| n01(&mut rng)).collect();
        let mut effect = vec![0.0; n];
        for t in 2..n {
            effect[t] = 0.4 * effect[t - 1] + 0.3 * cause[t - 2] + n01(&mut rng);
        }
        let f = granger_test(&cause, &effect, *m).unwrap().f_stat;
        let o = granger_oracle(&cause, &effect, *m);
        worst = worst.max((f - o).abs() / o.abs().max(1.0));
    }
    let size = mc_experiment(
        |r| {
            let a: Vec<f64> = (0..200).map(|_| n01(r)).collect();
            let b: Vec<f64> = (0..200).map(|_| n01(r)).collect();
            (a, b)
        },
        |(a, b)| Ok(RepStat::verdict(granger_test(a, b, 4)?.p_value < 0.05)),
        1000,
        81,
    )
    .unwrap();
    let s = size.rejection_rate().unwrap();
    outcome(
        worst <= 1e-8 && (0.03..=0.07).contains(&s),
        format!(
            "oracle gap {worst:.1e} on 24 fixtures, size {:.1}% (T=200, 4 lags)",
            100.0 * s
        ),
    )
}

fn ar_path(rng: &mut ChaCha8Rng, phi: f64, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = phi * y[t - 1] + n01(rng);
    }
    y
}

fn adf_reject(y: &Vec<f64>) -> bankbeta::Result<RepStat> {
    let r = adf_test(y, default_adf_lags(y.len()), AdfSpec::Constant)?;
    Ok(RepStat::verdict(r.reject_unit_root_5pct))
}

fn c9_adf() -> Outcome {
    let walk = mc_experiment(|r| ar_path(r, 1.0, 500), adf_reject, 1000, 91).unwrap();
    let ar = mc_experiment(|r| ar_path(r, 0.5, 500), adf_reject, 1000, 92).unwrap();
    let (s, p) = (walk.rejection_rate().unwrap(), ar.rejection_rate().unwrap());
    outcome(
        s <= 0.07 && p >= 0.95,
        format!(
            "random walk rejected in {:.1}%, AR(0.5) in {:.1}% (T=500)",
            100.0 * s,
            100.0 * p
        ),
    )
}

fn fixture_run() -> (tempfile::TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&dir.path().join("fixture"), &FixtureConfig::default()).unwrap();
    let cfg = PipelineConfig::from_map(&ConfigMap::from_file(&paths.config).unwrap()).unwrap();
    (dir, cfg)
}

fn c10_determinism() -> Outcome {
    let (dir, cfg) = fixture_run();
    let a = run(&cfg, Stage::All, &dir.path().join("a"));
    let b = run(&cfg, Stage::All, &dir.path().join("b"));
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("run failed: {}", e.error)),
    };
    let t1 = read_csv(&dir.path().join("a/table1.csv")).unwrap();
    let (inc, exp, nim) = (
        t1.column("income_beta").unwrap(),
        t1.column("expense_beta").unwrap(),
        t1.column("nim_beta").unwrap(),
    );
    let nim_ok = (0..t1.rows.len()).all(|i| decimal_difference(inc[i], exp[i]).unwrap() == nim[i]);
    outcome(
        a.outputs == b.outputs && nim_ok && t1.rows.len() == 10,
        format!(
            "{} output digests {}; table1 NIM = income - expense on {} rows: {nim_ok}",
            a.outputs.len(),
            if a.outputs == b.outputs { "identical" } else { "differ" },
            t1.rows.len()
        ),
    )
}

fn c11_volatility() -> Outcome {
    let spec = StateSpaceSpec {
        y: vec![0.3],
        x: vec![vec![1.0, 0.5, 0.25]],
        transition: Transition::RandomWalk,
        hyper: Hyperparams {
            q: vec![0.0; 3],
            r: 0.04,
        },
        prior: Prior::Explicit {
            mean: vec![0.0; 3],
            cov: vec![0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.01],
        },
        burn_in: 0,
    };
    let h = kalman_filter(&spec).unwrap().innovation_variance[0];
    let worked_ok = (h - 0.0531125).abs() <= 1e-12;
    let formula_ok = (h - (0.04 + 0.01 * (1.0 + 0.25 + 0.0625))).abs() <= 1e-12;

    let (dir, cfg) = fixture_run();
    let out = dir.path().join("out");
    if let Err(e) = run(&cfg, Stage::Tvp, &out) {
        return outcome(false, format!("tvp run failed: {}", e.error));
    }
    // the files carry six significant digits, so compare against the
    // filter's own output for the fitted r
    let hyper = read_csv(&out.join("tvp_hyperparams.csv")).unwrap();
    let r_col = hyper.column_f64("r").unwrap();
    let mut floor_ok = true;
    let mut checked = 0;
    for (row, r) in hyper.rows.iter().zip(&r_col) {
        let t = read_csv(&out.join(format!("tvp_{}_d{}.csv", row[0], row[1]))).unwrap();
        for v in t.column_f64("cond_vol").unwrap() {
            checked += 1;
            floor_ok &= v >= r.sqrt() * (1.0 - 5e-6);
        }
    }
    // unrounded check on a simulated fit
    let s = simulate_tvp(&TvpSimConfig::default()).unwrap();
    let fit = estimate_hyperparameters(&s.y, &s.x, &MleOptions::default()).unwrap();
    let vol = conditional_volatility(&kalman_filter(&fit.spec).unwrap());
    let exact_floor = vol.iter().all(|v| *v >= fit.spec.hyper.r.sqrt());
    outcome(
        worked_ok && floor_ok && exact_floor,
        format!(
            "H = {h:.10} vs worked value 0.0531125 (gap {:.2e}); formula 0.04 + 0.01*1.3125 matched: {formula_ok}; \
             vol >= sqrt(r) on {checked} emitted values: {floor_ok}, on simulated fit: {exact_floor}",
            (h - 0.0531125).abs()
        ),
    )
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "NIM identity on Table 1", Duration::from_secs(1), c1_nim_identity),
        (2, "effect size arithmetic", Duration::from_secs(1), c2_effect_size),
        (3, "Kalman-OLS equivalence", Duration::from_secs(5), c3_kalman_ols),
        (4, "hand recursion", Duration::from_secs(1), c4_hand_recursion),
        (5, "filter calibration", Duration::from_secs(60), c5_calibration),
        (6, "MLE recovery", Duration::from_secs(600), c6_mle_recovery),
        (7, "CUSUM size and power", Duration::from_secs(300), c7_cusum),
        (8, "Granger oracle and size", Duration::from_secs(300), c8_granger),
        (9, "ADF size and power", Duration::from_secs(300), c9_adf),
        (10, "end-to-end determinism", Duration::from_secs(120), c10_determinism),
        (
            11,
            "conditional volatility arithmetic",
            Duration::from_secs(60),
            c11_volatility,
        ),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());

    let mut unexpected = 0;
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        let tag = if pass { "PASS" } else { "FAIL" };
        let timing = format!("{:.2}s of {}s", elapsed.as_secs_f64(), budget.as_secs());
        let known = !pass && KNOWN_UNATTAINABLE.contains(&id);
        println!(
            "[{tag}] criterion {id:>2}: {name} ({timing}) {}{}",
            o.detail,
            if known { " [known unattainable]" } else { "" }
        );
        if !pass && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
