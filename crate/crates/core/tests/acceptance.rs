//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line each and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use consensus_svm::admm_engine::{
    beta_stationarity, beta_update, gamma_update_detailed, run_dwpa, AdmmConfig, DwpaOutcome,
};
use consensus_svm::cli_harness::{
    run_accuracy_sweep, run_convergence_trace, run_convergence_trace_with, Data, ExperimentConfig,
    Method, RunReport,
};
use consensus_svm::data_io::{augment_bias, partition, Label, LabeledDataset, LabeledExample, ToyMixture};
use consensus_svm::linalg;
use consensus_svm::local_svm::{self, SolverSettings};
use consensus_svm::stability_lab::{
    bias_experiment_with_reference, reference_model, stability_experiment, BiasAlgorithm, BiasSettings,
    StabilitySettings,
};
use consensus_svm::wpa_core::{self, combine, pa_weights, project_dataset, solve_wpa_central, Ridge, WpaSettings};

/// Facts gathered while other criteria run; the dual-box and
/// beta-stationarity criteria hold over every run, not one fixture.
#[derive(Default)]
struct Shared {
    box_checks: usize,
    box_violations: usize,
    stationarity_runs: usize,
    max_stationarity: f64,
}

impl Shared {
    fn check_box(&mut self, dual: &[f64], upper: f64) {
        self.box_checks += dual.len();
        self.box_violations += dual.iter().filter(|&&a| !(0.0..=upper).contains(&a)).count();
    }

    fn record_dwpa(&mut self, out: &DwpaOutcome) {
        self.stationarity_runs += 1;
        self.max_stationarity = self.max_stationarity.max(out.max_stationarity);
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn toy(n: usize, seed: u64) -> Result<LabeledDataset> {
    Ok(augment_bias(&ToyMixture::standard().sample(n, seed, 0).dataset)?)
}

/// Gaussian features with labels from a noisy random hyperplane.
fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<LabeledDataset> {
    let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let examples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = linalg::dot(&x, &truth) + rng.random_range(-0.5..0.5);
            LabeledExample::from_dense(&x, Label::from_sign(s))
        })
        .collect();
    Ok(augment_bias(&LabeledDataset::new(examples, d)?)?)
}

fn tight(lambda: f64, seed: u64) -> SolverSettings {
    SolverSettings {
        lambda,
        tolerance: 1e-11,
        max_epochs: 200_000,
        seed,
    }
}

fn base_config(methods: &[Method]) -> ExperimentConfig {
    ExperimentConfig {
        methods: methods.to_vec(),
        ..ExperimentConfig::default()
    }
}

fn projection_equivalence(sh: &mut Shared) -> Result<Verdict> {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA1 + k);
        let m = rng.random_range(1..=5);
        let d = rng.random_range(m.max(2)..=29);
        let n = rng.random_range(20 * m..=200);
        let lambda = 10f64.powf(rng.random_range(-3.0..-1.0));
        let data = random_dataset(&mut rng, n, d)?;
        let part = partition(&data, m, k)?;
        let s = tight(lambda, k);
        let bank = wpa_core::train_bank(&data, &part, &s)?;
        let central = solve_wpa_central(&bank, &data, &part, &WpaSettings { solver: s, ridge: Ridge::None })?;
        sh.check_box(&central.alpha, central.upper);

        let union = part.union(&data);
        let projected = project_dataset(&bank, &union, 0.0)?;
        let svm = local_svm::train_linear_svm_detailed(&projected, &s)?;
        sh.check_box(&svm.alpha, svm.upper);

        let f_wpa = local_svm::objective(&combine(&bank, &central.beta)?, &union, lambda)?;
        let f_svm = local_svm::objective(&svm.weights, &projected, lambda)?;
        worst = worst.max(rel(f_wpa, f_svm));
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-5 && secs < 10.0,
        format!("worst relative gap {worst:.2e} (<= 1e-5), {secs:.1}s (< 10s)"),
    )
}

fn dual_box(sh: &mut Shared) -> Result<Verdict> {
    verdict(
        sh.box_checks > 0 && sh.box_violations == 0,
        format!("{} violations among {} dual variables", sh.box_violations, sh.box_checks),
    )
}

fn single_partition_collapse(sh: &mut Shared) -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    for seed in 0..4u64 {
        let data = toy(250, seed)?;
        let lambda = 1e-3;
        let s = tight(lambda, seed);
        let part = partition(&data, 1, seed)?;
        let bank = wpa_core::train_bank(&data, &part, &s)?;
        let pa = combine(&bank, &pa_weights(1)?)?;
        let central = solve_wpa_central(&bank, &data, &part, &WpaSettings { solver: s, ridge: Ridge::None })?;
        sh.check_box(&central.alpha, central.upper);
        let admm = AdmmConfig {
            subproblem: SolverSettings { tolerance: 1e-10, ..s },
            ..AdmmConfig::default()
        };
        let dwpa = run_dwpa(&data, &part, &bank, &admm, None)?;
        sh.record_dwpa(&dwpa);
        let svm = local_svm::train_linear_svm_detailed(&data, &s)?;
        sh.check_box(&svm.alpha, svm.upper);

        let objs = [
            local_svm::objective(&pa, &data, lambda)?,
            local_svm::objective(&dwpa.weights, &data, lambda)?,
            local_svm::objective(&combine(&bank, &central.beta)?, &data, lambda)?,
            svm.primal_objective,
        ];
        let lo = objs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = objs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(rel(hi, lo));
    }
    verdict(worst <= 1e-4, format!("largest relative spread {worst:.2e} (<= 1e-4) over 4 seeds"))
}

fn dwpa_matches_central(sh: &mut Shared) -> Result<Verdict> {
    let t0 = Instant::now();
    let cfg = base_config(&[Method::Dwpa]);
    let data = toy(2000, 0)?;
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for m in [10, 50] {
        let part = partition(&data, m, 0)?;
        let bank = wpa_core::train_bank(&data, &part, &cfg.solver(0))?;
        let central = solve_wpa_central(
            &bank,
            &data,
            &part,
            &WpaSettings { solver: tight(cfg.lambda, 0), ridge: Ridge::Auto },
        )?;
        sh.check_box(&central.alpha, central.upper);
        let dwpa = run_dwpa(&data, &part, &bank, &cfg.admm(Method::Dwpa, 0), None)?;
        sh.record_dwpa(&dwpa);
        let union = part.union(&data);
        let f_dwpa = local_svm::objective(&dwpa.weights, &union, cfg.lambda)?;
        let f_central = local_svm::objective(&combine(&bank, &central.beta)?, &union, cfg.lambda)?;
        let r = rel(f_dwpa, f_central);
        worst = worst.max(r);
        parts.push(format!("M={m}: {r:.2e}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-3 && secs < 60.0,
        format!("{} (<= 1e-3), {secs:.1}s (< 60s)", parts.join(", ")),
    )
}

fn beta_stationarity_bound(sh: &mut Shared) -> Result<Verdict> {
    // Direct solves against random Gram matrices, on top of the DWPA runs.
    let mut direct: f64 = 0.0;
    for k in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB5 + k);
        let m = rng.random_range(1..=50);
        let d = rng.random_range(1..=60);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| linalg::dot(&cols[i], &cols[j]));
        let target: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rho = 10f64.powf(rng.random_range(-1.0..1.0));
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let beta = beta_update(&gram, &target, m, rho, lambda)?;
        direct = direct.max(beta_stationarity(&gram, &beta, &target, m, rho, lambda));
    }
    let worst = direct.max(sh.max_stationarity);
    verdict(
        worst <= 1e-9 && sh.stationarity_runs > 0,
        format!(
            "max residual {worst:.2e} (<= 1e-9) over 200 direct solves and {} DWPA runs",
            sh.stationarity_runs
        ),
    )
}

fn toy_degradation(_: &mut Shared) -> Result<Verdict> {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        seeds: (0..10).collect(),
        ..base_config(&[Method::Pa, Method::Dwpa, Method::SvmCentral])
    };
    let report = run_accuracy_sweep(&cfg)?;
    let mut acc: BTreeMap<(u64, usize, String), f64> = BTreeMap::new();
    for r in &report.rows {
        ensure!(r.status == "ok", "cell {} failed: {}", r.experiment, r.status);
        acc.insert((r.seed, r.m, r.method.clone()), r.test_accuracy.context("test accuracy")?);
    }
    let get = |s, m, name: &str| acc[&(s, m, name.to_string())];
    let mut good = 0;
    let mut drops = Vec::new();
    for s in 0..10 {
        let drop = get(s, 1, "pa") - get(s, 50, "pa");
        let close = [1, 10, 50]
            .iter()
            .all(|&m| (get(s, m, "dwpa") - get(s, m, "svm_central")).abs() <= 0.02);
        drops.push(format!("{:.1}", 100.0 * drop));
        if drop >= 0.05 && close {
            good += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        good >= 8 && secs < 300.0,
        format!(
            "{good}/10 seeds (>= 8); PA drop in points per seed [{}]; {secs:.1}s (< 300s)",
            drops.join(" ")
        ),
    )
}

/// Data rows keyed by column, without the id and method columns.
fn trace_body(report: &RunReport, method: &str) -> Result<Vec<String>> {
    let mut only = report.clone();
    only.rows.retain(|r| r.method == method);
    let csv = only.to_csv(false)?;
    Ok(csv
        .lines()
        .skip(1)
        .map(|l| l.splitn(3, ',').nth(2).unwrap_or_default().to_string())
        .collect())
}

fn overrelaxation_identity(_: &mut Shared) -> Result<Verdict> {
    let cfg = ExperimentConfig {
        alpha: 1.0,
        iterations: 100,
        partitions: vec![1, 10],
        seeds: vec![0, 1],
        ..base_config(&[Method::Dwpa, Method::DwpaAcc, Method::Dsvm, Method::DsvmAcc])
    };
    let report = run_convergence_trace(&cfg)?;
    let mut lines = 0;
    let mut identical = true;
    for (plain, acc) in [("dwpa", "dwpa_acc"), ("dsvm", "dsvm_acc")] {
        let a = trace_body(&report, plain)?;
        let b = trace_body(&report, acc)?;
        lines += a.len();
        identical &= !a.is_empty() && a == b;
    }
    verdict(identical, format!("{lines} trace rows compared byte for byte"))
}

fn stability_slope(_: &mut Shared) -> Result<Verdict> {
    let t0 = Instant::now();
    let report = stability_experiment(&[(2, 32), (4, 64), (8, 128)], 20, 0, &StabilitySettings::default())?;
    let secs = t0.elapsed().as_secs_f64();
    let slope = report.slope;
    verdict(
        (-1.5..=-0.5).contains(&slope) && secs < 180.0,
        format!("slope {slope:.3} in [-1.5, -0.5], {secs:.1}s (< 180s)"),
    )
}

fn bias_ordering(_: &mut Shared) -> Result<Verdict> {
    let settings = BiasSettings::default();
    let sizes = [3000, 6000];
    let reference = reference_model(6000, 0, &settings)?;
    let mut ordered = 0;
    let mut dwpa_by_n = [0.0; 2];
    let mut dwpa_batches_down = 0;
    for seed in 0..10u64 {
        let pa = bias_experiment_with_reference(BiasAlgorithm::Pa, &sizes, 10, seed, &settings, &reference)?;
        let dw = bias_experiment_with_reference(BiasAlgorithm::Dwpa, &sizes, 10, seed, &settings, &reference)?;
        if pa[0].mean_bias > dw[0].mean_bias {
            ordered += 1;
        }
        if dw[1].mean_bias <= dw[0].mean_bias {
            dwpa_batches_down += 1;
        }
        dwpa_by_n[0] += dw[0].mean_bias / 10.0;
        dwpa_by_n[1] += dw[1].mean_bias / 10.0;
    }
    verdict(
        ordered >= 8 && dwpa_by_n[1] <= dwpa_by_n[0] && dwpa_batches_down >= 8,
        format!(
            "PA > DWPA at N=3000 in {ordered}/10 batches (>= 8); DWPA mean bias {:.4} -> {:.4} \
             (non-increasing, and in {dwpa_batches_down}/10 batches individually, >= 8)",
            dwpa_by_n[0], dwpa_by_n[1]
        ),
    )
}

fn communication_ratio(_: &mut Shared) -> Result<Verdict> {
    let mut checked = 0;
    let mut exact = true;
    let synthetic = |seed| -> consensus_svm::Result<Data> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_dataset(&mut rng, 240, 39).map_err(|e| consensus_svm::Error::Setup(e.to_string()))?;
        Data::new(train, None)
    };
    let toy_cfg = ExperimentConfig {
        iterations: 20,
        partitions: vec![2, 5, 10],
        ..base_config(&[Method::Dwpa, Method::Dsvm, Method::DwpaAcc, Method::DsvmAcc])
    };
    let toy_report = run_convergence_trace(&toy_cfg)?;
    let syn_report = run_convergence_trace_with(
        &ExperimentConfig { partitions: vec![3, 8], ..toy_cfg.clone() },
        synthetic,
    )?;
    for (report, d) in [(toy_report, 3u64), (syn_report, 40u64)] {
        let mut bytes: BTreeMap<(usize, u64, usize, bool), Vec<u64>> = BTreeMap::new();
        for r in &report.rows {
            let is_wpa = r.method.starts_with("dwpa");
            let acc = r.method.ends_with("_acc");
            bytes.entry((r.m, r.seed, r.iteration, acc)).or_default().push(r.bytes * if is_wpa { d } else { r.m as u64 });
        }
        for v in bytes.values() {
            checked += 1;
            // dsvm * M == dwpa * d, i.e. dsvm : dwpa == d : M
            exact &= v.len() == 2 && v[0] == v[1] && v[0] > 0;
        }
    }
    verdict(exact, format!("{checked} iteration pairs with DSVM:DWPA == d:M exactly"))
}

/// Best value of projected subgradient descent with steps `1/(mu t)` on a
/// `mu`-strongly convex function over a ball.
fn subgradient_oracle(
    f: impl Fn(&[f64], &mut [f64]) -> f64,
    start: &[f64],
    center: &[f64],
    radius: f64,
    mu: f64,
    steps: usize,
) -> f64 {
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut best = f64::INFINITY;
    for t in 1..=steps {
        best = best.min(f(&x, &mut g));
        let eta = 1.0 / (mu * t as f64);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        let dist = linalg::dist_sq(&x, center).sqrt();
        if dist > radius {
            for (xi, ci) in x.iter_mut().zip(center) {
                *xi = ci + (*xi - ci) * radius / dist;
            }
        }
    }
    best.min(f(&x, &mut g))
}

fn inner_solver_oracles(sh: &mut Shared) -> Result<Verdict> {
    const STEPS: usize = 1_000_000;
    let t0 = Instant::now();
    let mut worst_svm: f64 = 0.0;
    let mut worst_gamma: f64 = 0.0;
    for k in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC11 + k);
        let l = rng.random_range(2..=8);
        let d = rng.random_range(1..=7);

        // Linear SVM; with the bias column the dimension is at most 8.
        let data = random_dataset(&mut rng, l, d)?;
        let lambda = 10f64.powf(rng.random_range(-1.3..0.0));
        let fit = local_svm::train_linear_svm_detailed(&data, &tight(lambda, k))?;
        sh.check_box(&fit.alpha, fit.upper);
        let dim = data.dimension();
        let rows: Vec<Vec<f64>> = data.examples().iter().map(|e| e.to_dense(dim)).collect();
        let ys = data.labels();
        let svm_f = |w: &[f64], g: &mut [f64]| {
            let mut val = lambda * linalg::norm_sq(w);
            for (gi, wi) in g.iter_mut().zip(w) {
                *gi = 2.0 * lambda * wi;
            }
            for (x, y) in rows.iter().zip(&ys) {
                let slack = 1.0 - y * linalg::dot(x, w);
                if slack > 0.0 {
                    val += slack / l as f64;
                    linalg::axpy(-y / l as f64, x, g);
                }
            }
            val
        };
        let zero = vec![0.0; dim];
        let oracle = subgradient_oracle(svm_f, &zero, &zero, 1.0 / lambda.sqrt(), 2.0 * lambda, STEPS);
        worst_svm = worst_svm.max(rel(local_svm::objective(&fit.weights, &data, lambda)?, oracle));

        // Slave prox step: scale * sum max(0, (A g)_l + 1) + rho/2 |g - v|^2.
        let dg = rng.random_range(1..=8);
        let a: Vec<Vec<f64>> = (0..l)
            .map(|_| (0..dg).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let v: Vec<f64> = (0..dg).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = 10f64.powf(rng.random_range(-0.5..0.5));
        let scale = rng.random_range(0.1..1.0);
        let sol = gamma_update_detailed(&a, &v, rho, scale, &tight(1.0, k))?;
        sh.check_box(&sol.dual, scale);
        let prox_f = |x: &[f64], g: &mut [f64]| {
            let mut val = 0.5 * rho * linalg::dist_sq(x, &v);
            for ((gi, xi), vi) in g.iter_mut().zip(x).zip(&v) {
                *gi = rho * (xi - vi);
            }
            for row in &a {
                let h = linalg::dot(row, x) + 1.0;
                if h > 0.0 {
                    val += scale * h;
                    linalg::axpy(scale, row, g);
                }
            }
            val
        };
        let mut scratch = vec![0.0; dg];
        let f_solver = prox_f(&sol.point, &mut scratch);
        let radius = (2.0 * prox_f(&v, &mut scratch) / rho).sqrt();
        let oracle = subgradient_oracle(prox_f, &v, &v, radius, rho, STEPS);
        worst_gamma = worst_gamma.max(rel(f_solver, oracle));
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst_svm <= 1e-4 && worst_gamma <= 1e-4 && secs < 120.0,
        format!("worst relative gap svm {worst_svm:.2e}, slave step {worst_gamma:.2e} (<= 1e-4), {secs:.1}s (< 120s)"),
    )
}

fn determinism(_: &mut Shared) -> Result<Verdict> {
    let mut compared = 0;
    let mut same = true;
    let runs = |workers: usize| -> Result<Vec<String>> {
        let sweep = ExperimentConfig {
            workers,
            iterations: 60,
            partitions: vec![1, 10],
            seeds: vec![0, 1],
            ..base_config(&[Method::Pa, Method::WpaCentral, Method::Dwpa, Method::Dsvm, Method::SvmCentral])
        };
        let trace = ExperimentConfig {
            methods: vec![Method::Dwpa, Method::DwpaAcc, Method::Dsvm, Method::DsvmAcc],
            ..sweep.clone()
        };
        Ok(vec![
            run_accuracy_sweep(&sweep)?.to_csv(false)?,
            run_convergence_trace(&trace)?.to_csv(false)?,
        ])
    };
    let baseline = runs(1)?;
    for workers in [1, 2, 4, 0] {
        compared += baseline.len();
        same &= runs(workers)? == baseline;
    }
    // The stability lab parallelizes over trials on the ambient pool.
    let stability = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        let r = pool.install(|| stability_experiment(&[(2, 8), (4, 8), (4, 16)], 4, 7, &StabilitySettings::default()))?;
        Ok(format!("{:?} {:?}", r.trials, r.slope))
    };
    let one = stability(1)?;
    for threads in [1, 4] {
        compared += 1;
        same &= stability(threads)? == one;
    }
    verdict(same, format!("{compared} outputs byte-identical across 1, 2, 4 and pool-default workers"))
}

type Criterion = (&'static str, fn(&mut Shared) -> Result<Verdict>);

fn main() -> ExitCode {
    // Criteria 2 and 5 aggregate over the other runs, so they go last.
    let order = [0, 2, 3, 5, 6, 7, 8, 9, 10, 11, 1, 4];
    let criteria: [Criterion; 12] = [
        ("projection equivalence", projection_equivalence),
        ("dual box", dual_box),
        ("single-partition collapse", single_partition_collapse),
        ("distributed WPA matches central", dwpa_matches_central),
        ("beta-update stationarity", beta_stationarity_bound),
        ("toy degradation", toy_degradation),
        ("overrelaxation identity", overrelaxation_identity),
        ("stability slope", stability_slope),
        ("bias ordering", bias_ordering),
        ("communication ratio", communication_ratio),
        ("inner solver oracles", inner_solver_oracles),
        ("determinism", determinism),
    ];
    let mut shared = Shared::default();
    let mut lines: Vec<Option<(bool, String)>> = vec![None; criteria.len()];
    for i in order {
        let (name, check) = criteria[i];
        let t0 = Instant::now();
        let (pass, detail) = match check(&mut shared) {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let secs = t0.elapsed().as_secs_f64();
        eprintln!("  [{:>2}] {name} finished in {secs:.1}s", i + 1);
        lines[i] = Some((pass, format!("criterion {:>2} {tag} {name}: {detail}", i + 1)));
    }
    let mut failed = 0;
    for (pass, line) in lines.into_iter().flatten() {
        println!("{line}");
        failed += usize::from(!pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
