//! Acceptance suite. Runs every criterion at full size, prints one
//! PASS/FAIL line each and exits non-zero if any failed.
//!
//! `cargo test -p kvtune-core --test acceptance -- 4 7` runs a subset.

use std::collections::HashSet;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use kvtune::dataset::Dataset;
use kvtune::domain::{ConfigurationPoint, Param, Physical, SubdomainSpec, TuningDomain, Workload};
use kvtune::experiments::{
    learning_curve, median_mae, subdomain_study, train_model, tune_with_model, SearchSettings, StudyConfig, TrainSpec,
};
use kvtune::harness::{
    generate_dataset, generate_dataset_with, BackendFailure, BenchmarkBackend, ExternalBackend, ExternalBackendConfig,
    PlanCell, SamplingPlan, Status, Step, SyntheticBackend,
};
use kvtune::optimizer::{hill_climb, simulated_annealing, AnnealingSchedule, Objective, SearchContext};
use kvtune::oracle::{Metrics, OracleParams, SyntheticOracle, Target};
use kvtune::rng::SplitMix64;
use kvtune::surrogate::{
    quality, spearman, Algorithm, FeatureMatrix, GbdtModel, HyperParams, ModelFile, Node, Predictor, RegressionTree,
};

/// Hyperparameter trials per model in the accuracy and end-to-end criteria.
const TUNING_BUDGET: usize = 60;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn domain() -> TuningDomain {
    TuningDomain::cassandra(1, 8192).unwrap()
}

/// `total` examples spread as evenly as possible over the 24 reference cells.
fn spread_plan(total: usize, seed: u64) -> SamplingPlan {
    let mut plan = SamplingPlan::reference(0, seed);
    let k = plan.cells.len();
    for (i, cell) in plan.cells.iter_mut().enumerate() {
        cell.count = total / k + usize::from(i < total % k);
    }
    plan
}

fn generate(plan: &SamplingPlan, sigma: f64, oracle_seed: u64) -> Dataset {
    let params = OracleParams { noise_sigma: sigma, seed: oracle_seed, ..OracleParams::default() };
    let backend = SyntheticBackend::new(domain(), params).unwrap();
    let g = generate_dataset(&backend, &domain(), plan).unwrap();
    assert_eq!(g.failures(), 0);
    g.dataset
}

fn noiseless_oracle() -> SyntheticOracle {
    SyntheticOracle::new(domain(), OracleParams::noiseless()).unwrap()
}

fn better(target: Target, a: f64, b: f64) -> bool {
    if target.maximize() {
        a > b
    } else {
        a < b
    }
}

/// Relative improvement of `tuned` over `base`, positive when better.
fn gain(target: Target, base: f64, tuned: f64) -> f64 {
    if target.maximize() {
        (tuned - base) / base
    } else {
        (base - tuned) / base
    }
}

/// Best oracle value over every knob combination at a context, by plain enumeration.
fn brute_force_optimum(oracle: &SyntheticOracle, target: Target, w: Workload, p: Physical) -> (ConfigurationPoint, f64, usize) {
    let d = domain();
    let lists: Vec<&Vec<i64>> = Param::KNOBS.iter().map(|&k| &d.spec(k).values).collect();
    let mut idx = [0usize; 7];
    let mut best: Option<(ConfigurationPoint, f64)> = None;
    let mut count = 0;
    loop {
        let mut point = d.default_configuration(w, p);
        for (k, &param) in Param::KNOBS.iter().enumerate() {
            point.set(param, lists[k][idx[k]]);
        }
        let v = oracle.value(&point, target).unwrap();
        count += 1;
        if best.as_ref().is_none_or(|(_, b)| better(target, v, *b)) {
            best = Some((point, v));
        }
        let mut k = 6;
        loop {
            idx[k] += 1;
            if idx[k] < lists[k].len() {
                break;
            }
            idx[k] = 0;
            if k == 0 {
                let (point, v) = best.unwrap();
                return (point, v, count);
            }
            k -= 1;
        }
    }
}

fn c1_metrics() -> Check {
    let q = quality(&[13.0, 17.0], &[10.0, 20.0]).unwrap();
    if (q.mae, q.rmse, q.mae_pct) != (3.0, 3.0, 20.0) {
        return Err(format!("two-point case gave {q:?}"));
    }
    let q = quality(&[1.0, 5.0, 6.0, 11.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
    if (q.mae, q.rmse, q.mae_pct) != (1.25, (11.0f64 / 4.0).sqrt(), 25.0) {
        return Err(format!("four-point case gave {q:?}"));
    }
    let q = quality(&[7.0; 3], &[7.0; 3]).unwrap();
    if (q.mae, q.rmse, q.mae_pct) != (0.0, 0.0, 0.0) {
        return Err(format!("perfect case gave {q:?}"));
    }
    let mut rng = SplitMix64::new(1);
    for case in 0..1000 {
        let n = 1 + rng.below(50);
        let targets: Vec<f64> = (0..n).map(|_| 1.0 + 1000.0 * rng.unit()).collect();
        let preds: Vec<f64> = targets.iter().map(|t| t + 200.0 * rng.standard_normal() * rng.unit()).collect();
        let q = quality(&preds, &targets).unwrap();
        if q.rmse < q.mae {
            return Err(format!("set {case}: rmse {} < mae {}", q.rmse, q.mae));
        }
    }
    Ok("hand cases exact; rmse ≥ mae on 1000 random sets".into())
}

/// Lowest-SSE split of `rows` by direct enumeration: every feature, every
/// midpoint between consecutive distinct values, child SSE from scratch.
#[allow(clippy::needless_range_loop)]
fn brute_split(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> Option<(usize, f64)> {
    let sse = |rs: &[usize]| {
        let m = rs.iter().map(|&i| y[i]).sum::<f64>() / rs.len() as f64;
        rs.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let s = sse(&l) + sse(&r);
            if best.is_none_or(|(b, _, _)| s < b - 1e-9 * b.abs().max(1.0)) {
                best = Some((s, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn c2_tree() -> Check {
    let sub = SubdomainSpec::td1();
    let plan = spread_plan(600, 21);
    let data = generate(&plan, 0.02, 21);
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..data.len()).filter(|&i| seen.insert(*data.examples()[i].point.values())).take(500).collect();
    if keep.len() < 500 {
        return Err(format!("only {} distinct points", keep.len()));
    }
    let data = data.select(&keep);
    let x = data.features::<f64>(&sub).unwrap();
    let y = data.targets::<f64>(Target::ReadLatency);
    let tree = RegressionTree::fit(&x, &y, &HyperParams::single_tree(sub.width()), &mut SplitMix64::new(0)).unwrap();
    let mae = x.rows().zip(&y).map(|(r, t)| (tree.predict(r).unwrap() - t).abs()).sum::<f64>() / y.len() as f64;
    if mae != 0.0 {
        return Err(format!("unlimited tree training MAE {mae} on 500 distinct points"));
    }

    for seed in 0..20u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.unit()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + (6.0 * r[1]).sin() + r[2] * r[3] + 0.1 * rng.unit()).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let params = HyperParams { max_depth: Some(2), ..HyperParams::single_tree(4) };
        let tree = RegressionTree::fit(&fm, &y, &params, &mut SplitMix64::new(seed)).unwrap();
        let nodes = tree.nodes();

        let all: Vec<usize> = (0..50).collect();
        let mut queue = vec![(0usize, all, 0usize)];
        while let Some((node, members, depth)) = queue.pop() {
            let expect = if depth < 2 && members.len() >= 2 { brute_split(&rows, &y, &members) } else { None };
            match (nodes[node], expect) {
                (Node::Split { feature, threshold, left, right }, Some((f, t))) => {
                    if feature != f || (threshold - t).abs() > 1e-12 {
                        return Err(format!("seed {seed} depth {depth}: tree split x{feature}<={threshold}, oracle x{f}<={t}"));
                    }
                    let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| rows[i][f] <= t);
                    queue.push((left, l, depth + 1));
                    queue.push((right, r, depth + 1));
                }
                (Node::Leaf { value, samples }, None) => {
                    let mean = members.iter().map(|&i| y[i]).sum::<f64>() / members.len() as f64;
                    if samples != members.len() || (value - mean).abs() > 1e-12 {
                        return Err(format!("seed {seed}: leaf {value} over {samples}, oracle {mean} over {}", members.len()));
                    }
                }
                (n, e) => return Err(format!("seed {seed} depth {depth}: tree {n:?}, oracle {e:?}")),
            }
        }
    }
    Ok("training MAE 0 on 500 points; depth-2 splits match enumeration on 20 seeds".into())
}

fn c3_gbdt_monotone() -> Check {
    let sub = SubdomainSpec::td1();
    let mut rounds_checked = 0;
    for seed in 0..5u64 {
        let data = generate(&spread_plan(200, 30 + seed), 0.02, seed);
        let x = data.features::<f64>(&sub).unwrap();
        for target in Target::ALL {
            let y = data.targets::<f64>(target);
            let params = HyperParams { n_trees: 100, learning_rate: 0.1, seed, ..HyperParams::default_for(Algorithm::Gbdt) };
            let model = GbdtModel::fit(&x, &y, &params).unwrap();
            // staged predictions rebuilt from the fitted trees
            let mut pred = vec![model.init_value(); y.len()];
            let mse = |p: &[f64]| p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
            let mut prev = mse(&pred);
            for (round, tree) in model.trees().iter().enumerate() {
                for (p, row) in pred.iter_mut().zip(x.rows()) {
                    *p += 0.1 * tree.predict(row).unwrap();
                }
                let cur = mse(&pred);
                if cur > prev {
                    return Err(format!("seed {seed} {target}: round {round} MSE rose {prev} -> {cur}"));
                }
                prev = cur;
                rounds_checked += 1;
            }
            let final_pred = model.predict_matrix(&x).unwrap();
            if final_pred.iter().zip(&pred).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0)) {
                return Err(format!("seed {seed} {target}: staged sum disagrees with the model"));
            }
        }
    }
    Ok(format!("{rounds_checked} rounds over 5 seeds and 3 targets, none increased training MSE"))
}

fn c4_accuracy() -> Check {
    let sub = SubdomainSpec::td1();
    let train = generate(&spread_plan(8192, 41), 0.0, 0);
    let test = generate(&spread_plan(2000, 42), 0.0, 0);
    let tx = test.features::<f64>(&sub).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for algorithm in [Algorithm::RandomForest, Algorithm::Gbdt] {
        for target in Target::ALL {
            let spec = TrainSpec { algorithm, target, subdomain: sub, tuning_budget: TUNING_BUDGET, seed: 4 };
            let model = train_model::<f64>(&train, &spec).unwrap();
            let ty = test.targets::<f64>(target);
            let preds = model.model.predict_matrix(&tx).unwrap();
            let q = quality(&preds, &ty).unwrap();
            let rho = spearman(&preds, &ty).unwrap();
            let limit = if target == Target::Throughput { 8.0 } else { 5.0 };
            let pass = q.mae_pct <= limit && rho >= 0.9;
            ok &= pass;
            lines.push(format!("{algorithm}/{target} mae%={:.2} rho={rho:.3}{}", q.mae_pct, if pass { "" } else { " FAIL" }));
        }
    }
    ensure(ok, lines.join(", "))
}

fn c5_learning_curve() -> Check {
    let data = generate(&spread_plan(8192 + 2000, 51), 0.02, 51);
    let mut lines = Vec::new();
    let mut ok = true;
    for algorithm in [Algorithm::RandomForest, Algorithm::Gbdt] {
        let cfg = StudyConfig {
            sizes: vec![128, 1024, 8192],
            test_size: 2000,
            algorithm,
            target: Target::Throughput,
            repeats: 3,
            tuning_budget: TUNING_BUDGET,
            seed: 5,
        };
        let report = learning_curve::<f64>(&data, &cfg).unwrap();
        let medians = median_mae(&report, None);
        let decreasing = medians.windows(2).all(|w| w[1].1 < w[0].1);
        ok &= decreasing && medians.len() == 3;
        let shown: Vec<String> = medians.iter().map(|(s, m)| format!("{s}:{m:.0}")).collect();
        lines.push(format!("{algorithm} {}", shown.join(" > ")));
    }
    ensure(ok, format!("median throughput MAE {}", lines.join("; ")))
}

fn c6_subdomain() -> Check {
    let data = generate(&SamplingPlan::reference(200, 61), 0.02, 61);
    let cfg = StudyConfig {
        sizes: vec![128],
        test_size: 250,
        algorithm: Algorithm::Gbdt,
        target: Target::WriteLatency,
        repeats: 3,
        tuning_budget: TUNING_BUDGET,
        seed: 6,
    };
    let subs = [SubdomainSpec::td1(), SubdomainSpec::td2(Workload::WRITEHEAVY)];
    let report = subdomain_study::<f64>(&data, &subs, &cfg).unwrap();
    let td1 = median_mae(&report, Some("TD1"))[0].1;
    let td2 = median_mae(&report, Some("TD2"))[0].1;
    ensure(td2 < td1, format!("median write-latency MAE at 128: TD1 {td1:.4}, TD2 {td2:.4}"))
}

fn c7_optimizer() -> Check {
    let d = domain();
    let (w, p) = (Workload::WRITEHEAVY, Physical::new(4, 3).unwrap());
    let ctx = SearchContext::new(d.clone(), w, p).unwrap();
    let oracle = noiseless_oracle();
    let mut lines = Vec::new();
    let mut ok = true;
    for target in Target::ALL {
        let (_, opt, count) = brute_force_optimum(&oracle, target, w, p);
        if count != 154_000 {
            return Err(format!("enumerated {count} configurations"));
        }
        let obj = Objective::new(target, |pt: &ConfigurationPoint| oracle.value(pt, target).unwrap());
        let mut hits = 0;
        for seed in 0..10 {
            let schedule = AnnealingSchedule::calibrated(&obj, &ctx, 5000, seed).unwrap();
            let sa = simulated_annealing(&obj, &ctx, &schedule).unwrap();
            if gain(target, opt, sa.value) >= -0.02 {
                hits += 1;
            }
            let hc = hill_climb(&obj, &ctx, None, 5000, seed).unwrap();
            if better(target, hc.value, opt) {
                return Err(format!("{target} seed {seed}: hill climbing {} beat the optimum {opt}", hc.value));
            }
            let cold = simulated_annealing(&obj, &ctx, &AnnealingSchedule::new(0.0, 5000, seed)).unwrap();
            let same = cold.best == hc.best
                && cold.value == hc.value
                && hc.trace.iter().zip(&cold.trace).all(|(a, b)| (a.candidate, a.accepted) == (b.candidate, b.accepted));
            if !same {
                return Err(format!("{target} seed {seed}: T0=0 annealing diverged from hill climbing"));
            }
        }
        ok &= hits >= 9;
        lines.push(format!("{target} {hits}/10 within 2% of {opt:.4}"));
    }
    ensure(ok, lines.join(", "))
}

fn c8_end_to_end() -> Check {
    let d = domain();
    let (w, p) = (Workload::WRITEHEAVY, Physical::new(4, 3).unwrap());
    let train = generate(&spread_plan(8192, 81), 0.02, 81);
    let oracle = noiseless_oracle();
    let default = d.default_configuration(w, p);
    let mut lines = Vec::new();
    let mut ok = true;
    for (target, needed) in [(Target::ReadLatency, 0.15), (Target::WriteLatency, 0.08), (Target::Throughput, 0.05)] {
        let spec = TrainSpec {
            algorithm: Algorithm::Gbdt,
            target,
            subdomain: SubdomainSpec::td1(),
            tuning_budget: TUNING_BUDGET,
            seed: 8,
        };
        let model = train_model::<f64>(&train, &spec).unwrap();
        let settings = SearchSettings { seed: 8, ..SearchSettings::default() };
        let outcome = tune_with_model(&model, w, p, &settings).unwrap();
        let base = oracle.value(&default, target).unwrap();
        let tuned = oracle.value(&outcome.result.best, target).unwrap();
        let (_, opt, _) = brute_force_optimum(&oracle, target, w, p);
        let g = gain(target, base, tuned);
        ok &= g >= needed;
        lines.push(format!(
            "{target} {:+.1}% (needs {:.0}%, headroom {:.1}%)",
            100.0 * g,
            100.0 * needed,
            100.0 * gain(target, base, opt)
        ));
    }
    ensure(ok, lines.join(", "))
}

fn c9_unseen() -> Check {
    let unseen = Physical::new(2, 1).unwrap();
    let data = generate(&SamplingPlan::reference(40, 91).excluding(unseen), 0.02, 91);
    if data.examples().iter().any(|e| e.point.physical() == unseen) {
        return Err("excluded design present in the dataset".into());
    }
    let spec = TrainSpec { algorithm: Algorithm::Gbdt, target: Target::Throughput, subdomain: SubdomainSpec::td1(), tuning_budget: 10, seed: 9 };
    let model = train_model::<f64>(&data, &spec).unwrap();
    let settings = SearchSettings { seed: 9, ..SearchSettings::default() };
    let outcome = tune_with_model(&model, Workload::READHEAVY, unseen, &settings).unwrap();
    if !outcome.extrapolated || outcome.report.get("extrapolated") != Some("true") {
        return Err("unseen (2, 1) not flagged".into());
    }
    if outcome.report.rows.is_empty() || domain().check(&outcome.result.best).is_err() {
        return Err("no valid recommendation in the report".into());
    }
    let seen = tune_with_model(&model, Workload::READHEAVY, Physical::new(2, 2).unwrap(), &settings).unwrap();
    if seen.extrapolated {
        return Err("seen (2, 2) flagged as extrapolation".into());
    }
    Ok(format!("(2,1) flagged, {} report rows; (2,2) not flagged", outcome.report.rows.len()))
}

fn pipeline_bytes() -> Vec<String> {
    let data = generate(&SamplingPlan::reference(12, 101), 0.02, 101);
    let spec = TrainSpec { algorithm: Algorithm::RandomForest, target: Target::ReadLatency, subdomain: SubdomainSpec::td1(), tuning_budget: 4, seed: 10 };
    let model = train_model::<f64>(&data, &spec).unwrap();
    let settings = SearchSettings { seed: 10, budget: 2000, ..SearchSettings::default() };
    let outcome = tune_with_model(&model, Workload::READWRITE, Physical::new(3, 2).unwrap(), &settings).unwrap();
    let cfg = StudyConfig {
        sizes: vec![32, 64],
        test_size: 50,
        algorithm: Algorithm::Gbdt,
        target: Target::WriteLatency,
        repeats: 2,
        tuning_budget: 3,
        seed: 10,
    };
    let curve = learning_curve::<f64>(&data, &cfg).unwrap();
    vec![
        data.to_csv_string(),
        model.to_json(),
        outcome.report.to_csv(),
        outcome.report.render_table(),
        outcome.result.trace_csv(),
        curve.to_csv(),
    ]
}

fn c10_determinism() -> Check {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let first = pool.install(pipeline_bytes);
    let second = pool.install(pipeline_bytes);
    if first != second {
        return Err("single-threaded pipeline outputs differ between runs".into());
    }

    let d = domain();
    let sub = SubdomainSpec::td1();
    let data = generate(&SamplingPlan::reference(15, 102), 0.02, 102);
    let text = data.to_csv_string();
    let back = Dataset::read_csv(&d, text.as_bytes(), std::path::Path::new("<memory>")).unwrap();
    if back.examples() != data.examples() || back.to_csv_string() != text {
        return Err("dataset CSV round trip changed the data".into());
    }
    let x = data.features::<f64>(&sub).unwrap();
    let x32 = data.features::<f32>(&sub).unwrap();
    for algorithm in [Algorithm::RandomForest, Algorithm::Gbdt] {
        let spec = TrainSpec { algorithm, target: Target::Throughput, subdomain: sub, tuning_budget: 0, seed: 11 };
        let model = train_model::<f64>(&data, &spec).unwrap();
        let loaded = ModelFile::<f64>::from_json(&model.to_json()).unwrap();
        let (a, b) = (model.model.predict_matrix(&x).unwrap(), loaded.model.predict_matrix(&x).unwrap());
        if a.iter().zip(&b).any(|(p, q)| p.to_bits() != q.to_bits()) {
            return Err(format!("{algorithm} f64 model predictions changed after reload"));
        }
        let model32 = train_model::<f32>(&data, &spec).unwrap();
        let loaded32 = ModelFile::<f32>::from_json(&model32.to_json()).unwrap();
        let (a, b) = (model32.model.predict_matrix(&x32).unwrap(), loaded32.model.predict_matrix(&x32).unwrap());
        if a.iter().zip(&b).any(|(p, q)| p.to_bits() != q.to_bits()) {
            return Err(format!("{algorithm} f32 model predictions changed after reload"));
        }
    }
    Ok(format!("{} artifacts byte-identical across runs; CSV and model round trips exact", first.len()))
}

/// Wraps the external backend and appends `capture` once metrics come back.
struct Recording<'a> {
    inner: ExternalBackend,
    log: &'a std::path::Path,
    captured: Mutex<Vec<Metrics>>,
}

impl BenchmarkBackend for Recording<'_> {
    fn requires_exclusive_access(&self) -> bool {
        self.inner.requires_exclusive_access()
    }

    fn prepare(&self, point: &ConfigurationPoint) -> Result<(), BackendFailure> {
        self.inner.prepare(point)
    }

    fn measure(&self, point: &ConfigurationPoint, invocation: u64) -> Result<Metrics, BackendFailure> {
        let m = self.inner.measure(point, invocation)?;
        let mut text = std::fs::read_to_string(self.log).unwrap();
        text.push_str("capture\n");
        std::fs::write(self.log, text).unwrap();
        self.captured.lock().unwrap().push(m);
        Ok(m)
    }
}

fn c11_harness_protocol() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("steps.log");
    let metrics = dir.path().join("metrics.txt");
    let d = domain();
    let plan = SamplingPlan {
        cells: vec![PlanCell { workload: Workload::READHEAVY, physical: Physical::new(3, 2).unwrap(), count: 3 }],
        seed: 111,
    };
    let say = |step: &str| format!("echo {step} >> {}", log.display());
    let write_metrics = "printf 'throughput_ops=1000\\nread_latency_ms={row_cache_size_in_mb}.5\\nwrite_latency_ms=3\\n' > {metrics_path}";
    let config = |fail: Option<Step>| {
        let cmd = |step: Step, extra: &str| {
            let mut c = say(step.name());
            if !extra.is_empty() {
                c = format!("{c} && {extra}");
            }
            if fail == Some(step) {
                c.push_str(" && exit 7");
            }
            c
        };
        let workload_extra = if fail == Some(Step::Capture) {
            "echo garbage > {metrics_path}".to_string()
        } else {
            write_metrics.to_string()
        };
        ExternalBackendConfig {
            stop_cmd: cmd(Step::Stop, ""),
            configure_cmd: cmd(Step::Configure, ""),
            start_cmd: cmd(Step::Start, ""),
            workload_cmd: cmd(Step::Workload, &workload_extra),
            metrics_path: metrics.clone(),
            timeout_s: 5.0,
            duration_s: 1,
        }
    };

    std::fs::write(&log, "").unwrap();
    let backend = Recording { inner: ExternalBackend::new(&d, config(None)).unwrap(), log: &log, captured: Mutex::new(vec![]) };
    let g = generate_dataset_with(&backend, &d, &plan, 1).unwrap();
    let steps: Vec<String> = std::fs::read_to_string(&log).unwrap().lines().map(str::to_string).collect();
    let expected: Vec<String> = (0..3).flat_map(|_| Step::ORDER.iter().map(|s| s.name().to_string())).collect();
    if steps != expected {
        return Err(format!("step log {steps:?}"));
    }
    if g.dataset.len() != 3 || g.failures() != 0 {
        return Err(format!("{} rows, {} failures", g.dataset.len(), g.failures()));
    }
    for (e, m) in g.dataset.examples().iter().zip(backend.captured.lock().unwrap().iter()) {
        let want = e.point.get(Param::RowCacheSizeInMb) as f64 + 0.5;
        if m.read_latency_ms != want || e.metrics.read_latency_ms != want {
            return Err(format!("captured {} for row cache {}", m.read_latency_ms, want - 0.5));
        }
    }

    for failing in Step::ORDER {
        std::fs::write(&log, "").unwrap();
        let backend = ExternalBackend::new(&d, config(Some(failing))).unwrap();
        let g = generate_dataset_with(&backend, &d, &plan, 1).unwrap();
        if !g.dataset.is_empty() || g.log.iter().any(|r| r.status != Status::Failed || r.step != Some(failing)) {
            return Err(format!("failure in {} attributed as {:?}", failing.name(), g.log.iter().map(|r| r.step).collect::<Vec<_>>()));
        }
        let ran: Vec<String> = std::fs::read_to_string(&log).unwrap().lines().map(str::to_string).collect();
        let upto = Step::ORDER.iter().position(|&s| s == failing).unwrap().min(3);
        let per_example: Vec<String> = Step::ORDER[..=upto].iter().map(|s| s.name().to_string()).collect();
        let want: Vec<String> = (0..3).flat_map(|_| per_example.clone()).collect();
        if ran != want {
            return Err(format!("after a {} failure the commands run were {ran:?}", failing.name()));
        }
    }
    Ok("strict stop→configure→start→workload→capture on 3 examples; failures attributed to each of 5 steps".into())
}

type Criterion = (u32, &'static str, u64, fn() -> Check);

const CRITERIA: [Criterion; 11] = [
    (1, "metrics unit suite", 1, c1_metrics),
    (2, "tree correctness", 10, c2_tree),
    (3, "gbdt monotone training loss", 30, c3_gbdt_monotone),
    (4, "surrogate accuracy", 300, c4_accuracy),
    (5, "learning-curve shape", 300, c5_learning_curve),
    (6, "subdomain effect", 120, c6_subdomain),
    (7, "optimizer soundness", 120, c7_optimizer),
    (8, "end-to-end tuning", 480, c8_end_to_end),
    (9, "unseen-combination protocol", 180, c9_unseen),
    (10, "determinism and round trips", 120, c10_determinism),
    (11, "harness protocol", 5, c11_harness_protocol),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        for (id, name, ..) in CRITERIA {
            println!("criterion_{id}: test ({name})");
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (id, name, limit_s, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit_s);
        let (pass, detail) = match result {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over the time limit")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "{} {id:>2} {name} ({:.1} s of {limit_s} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
