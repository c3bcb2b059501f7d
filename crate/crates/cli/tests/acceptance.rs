//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its own PASS/FAIL line; exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use pfedbred::data::{partition_dirichlet, partition_label_shard, synth_gaussian_mixture, DirichletOptions};
use pfedbred::fl::{aggregate, run_rounds, sample_clients, FederatedMethod, PFedBreD, RunConfig, StrategyKind};
use pfedbred::metrics::{gce, loss_deviation, savitzky_golay};
use pfedbred::mirror::{
    bregman_divergence, bregman_prox, conjugate_divergence, envelope_gradient, envelope_value, mirror_map_by_name,
    MirrorMap, ProxConfig, SquaredNorm, MIRROR_NAMES,
};
use pfedbred::model::{loss_gradient, loss_value, Dnn, LossOracle, Mclr, Model, QuadraticLoss};
use pfedbred::rng::{stream, Purpose};
use pfedbred::ParamVector;
use pfedbred_cli::{resolve, run_spec, Entry};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec())
}

fn e(k: &str, v: impl ToString) -> Entry {
    Entry { key: k.into(), value: v.to_string() }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let ds = synth_gaussian_mixture(5, 8, 6, 1.0, 3).unwrap();
    let batch: Vec<usize> = (0..ds.len()).collect();
    let models: [Box<dyn Model>; 2] = [Box::new(Mclr::new(8, 5)), Box::new(Dnn::new(8, 12, 5))];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for model in &models {
        for (si, scale) in [0.01, 1.0, 10.0].into_iter().enumerate() {
            let mut rng = stream(41, Purpose::Evaluation, &[si as u64]);
            let base = model.init_params(&mut rng);
            let params = base.scale(scale / base.max_abs().max(1e-12));
            let grad = loss_gradient(model.as_ref(), &params, &ds, &batch).unwrap();
            for _ in 0..20 {
                let j = rng.random_range(0..params.len());
                let mut plus = params.clone();
                plus.as_mut_slice()[j] += h;
                let mut minus = params.clone();
                minus.as_mut_slice()[j] -= h;
                let fd = (loss_value(model.as_ref(), &plus, &ds, &batch).unwrap()
                    - loss_value(model.as_ref(), &minus, &ds, &batch).unwrap())
                    / (2.0 * h);
                let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 10.0,
        format!("{checked} coordinates over mclr/dnn x 3 scales, worst relative error {worst:.2e}, {secs:.2}s"),
    )
}

fn prox_check() -> Outcome {
    let loss = QuadraticLoss::isotropic(vec![1.0, 0.0]);
    let cfg = ProxConfig { inner_steps: 200, inner_step_size: 0.1, batch_size: 1 };
    let theta = bregman_prox(&SquaredNorm, 1.0, &loss, &pv(&[0.0, 0.0]), &cfg, &mut stream(0, Purpose::Prox, &[])).unwrap();
    let prox_err = (theta[0] - 0.5).abs().max(theta[1].abs());

    let mut env_err: f64 = 0.0;
    let quad = QuadraticLoss { center: vec![0.4, -0.3], curvature: vec![2.0, 0.5] };
    let fine = ProxConfig { inner_steps: 4000, inner_step_size: 0.05, batch_size: 1 };
    for name in ["squared_norm", "logistic"] {
        let map = mirror_map_by_name(name).unwrap();
        let lambda = 1.5;
        let envelope = |mu: &ParamVector| {
            let t = bregman_prox(map.as_ref(), lambda, &quad, mu, &fine, &mut stream(0, Purpose::Prox, &[])).unwrap();
            (t.clone(), envelope_value(map.as_ref(), lambda, &quad, mu, &t).unwrap())
        };
        let mu = pv(&[0.2, 0.1]);
        let (theta, _) = envelope(&mu);
        let analytic = envelope_gradient(map.as_ref(), lambda, &mu, &theta).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            let mut plus = mu.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = mu.clone();
            minus.as_mut_slice()[j] -= h;
            let fd = (envelope(&plus).1 - envelope(&minus).1) / (2.0 * h);
            env_err = env_err.max((fd - analytic[j]).abs());
        }
    }
    outcome(
        prox_err <= 1e-6 && env_err <= 1e-5,
        format!("prox error {prox_err:.2e}, envelope-gradient finite-difference error {env_err:.2e}"),
    )
}

/// Straight-line pFedMe on per-client quadratics.
fn pfedme_reference(cfg: &RunConfig, losses: &[QuadraticLoss], w0: [f64; 2]) -> Vec<[f64; 2]> {
    let mut w = w0;
    let mut thetas: Vec<Option<[f64; 2]>> = vec![None; losses.len()];
    let mut history = Vec::new();
    for round in 1..=cfg.rounds {
        let picked = sample_clients(cfg.seed, round, losses.len(), cfg.clients_per_round);
        let mut sum = [0.0; 2];
        for &i in &picked {
            let q = &losses[i];
            let mut local = w;
            let mut theta = thetas[i].unwrap_or(w);
            for _ in 0..cfg.local_epochs {
                let mu = local;
                theta = mu;
                for _ in 0..cfg.prox_steps {
                    for j in 0..2 {
                        let g = q.curvature[j] * (theta[j] - q.center[j]);
                        theta[j] -= cfg.alpha * (g + cfg.lambda * (theta[j] - mu[j]));
                    }
                }
                for j in 0..2 {
                    local[j] -= cfg.alpha_m * (cfg.lambda * (mu[j] - theta[j]));
                }
            }
            thetas[i] = Some(theta);
            for j in 0..2 {
                sum[j] += local[j];
            }
        }
        let inv = 1.0 / picked.len() as f64;
        for j in 0..2 {
            w[j] = (1.0 - cfg.beta) * w[j] + cfg.beta * (sum[j] * inv);
        }
        history.push(w);
    }
    history
}

fn pfedme_equivalence() -> Outcome {
    let cfg = RunConfig {
        rounds: 3,
        local_epochs: 2,
        prox_steps: 2,
        num_clients: 2,
        clients_per_round: 2,
        alpha_m: 0.05,
        alpha: 0.1,
        lambda: 2.0,
        strategy: StrategyKind::Vanilla,
        seed: 9,
        ..RunConfig::default()
    };
    let losses = [
        QuadraticLoss { center: vec![1.0, -2.0], curvature: vec![1.5, 0.5] },
        QuadraticLoss { center: vec![-0.5, 3.0], curvature: vec![0.8, 2.0] },
    ];
    let oracles: Vec<&dyn LossOracle> = losses.iter().map(|q| q as &dyn LossOracle).collect();
    let method = PFedBreD { strategy: cfg.strategy.build(&cfg.strategy_params), mirror: Box::new(SquaredNorm) };
    let w0 = [0.25, -0.75];
    let mut ours = Vec::new();
    run_rounds(&cfg, &method as &dyn FederatedMethod, &oracles, pv(&w0), |v| {
        ours.push(v.server.w.clone());
        Ok(())
    })
    .unwrap();
    let reference = pfedme_reference(&cfg, &losses, w0);
    let same = ours.len() == reference.len() && ours.iter().zip(&reference).all(|(a, b)| a.as_slice() == &b[..]);
    outcome(same, format!("T=3 R=2 K=2, final w {:?} vs reference {:?}", ours.last().map(|w| w.as_slice().to_vec()), reference.last()))
}

fn mnist_files() -> Option<(PathBuf, PathBuf)> {
    let dir = PathBuf::from(std::env::var_os("PFB_MNIST_DIR")?);
    let images = dir.join("train-images-idx3-ubyte");
    let labels = dir.join("train-labels-idx1-ubyte");
    (images.exists() && labels.exists()).then_some((images, labels))
}

fn dataset_entry() -> (Entry, &'static str) {
    match mnist_files() {
        Some((i, l)) => (e("dataset_idx", format!("{},{}", i.display(), l.display())), "mnist"),
        None => (e("synth", "10,10,300,2.0"), "10-class synthetic mixture"),
    }
}

struct SeriesRun {
    global: f64,
    personalized: f64,
    gce: Vec<f64>,
}

fn run_final(entries: Vec<Entry>) -> SeriesRun {
    let spec = resolve(&[], &entries).unwrap();
    let h = run_spec(&spec).unwrap().remove(0);
    let last = h.rounds.last().unwrap();
    SeriesRun {
        global: last.global_acc_globaltest,
        personalized: last.personalized_acc_localtest,
        gce: h.rounds.iter().map(|r| r.gce.unwrap_or(f64::NAN)).collect(),
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn ablation(gce_out: &mut Vec<(String, Vec<f64>)>) -> Outcome {
    let (data, data_name) = dataset_entry();
    let run = |method: &str, strategy: &str, seed: u64| {
        run_final(vec![
            data.clone(),
            e("N", 20),
            e("S", 4),
            e("partition", "label_shard:3"),
            e("T", 100),
            e("R", 20),
            e("lambda", 30),
            e("batch", 20),
            e("alpha_m", 0.1),
            e("method", method),
            e("strategy", strategy),
            e("seed", seed),
            e("global_deviation", false),
        ])
    };
    let seeds = [0, 1, 2];
    let mut per = Vec::new();
    for (method, strategy) in [("fedavg", "vanilla"), ("pfedbred", "vanilla"), ("pfedbred", "meg"), ("pfedbred", "mh")] {
        let runs: Vec<SeriesRun> = seeds.iter().map(|&s| run(method, strategy, s)).collect();
        if method == "pfedbred" && strategy != "meg" {
            let rounds = runs[0].gce.len();
            let avg: Vec<f64> = (0..rounds).map(|t| mean(runs.iter().map(|r| r.gce[t]))).collect();
            gce_out.push((strategy.to_string(), avg));
        }
        per.push((
            format!("{method}/{strategy}"),
            mean(runs.iter().map(|r| r.global)),
            mean(runs.iter().map(|r| r.personalized)),
        ));
    }
    let fedavg_global = per[0].1;
    let (vanilla, meg, mh) = (per[1].2, per[2].2, per[3].2);
    let pass = mh >= vanilla && mh >= meg && mh - fedavg_global >= 0.05;
    outcome(
        pass,
        format!(
            "{data_name}: personalized mh {:.2}%, vanilla {:.2}%, meg {:.2}%; fedavg global {:.2}% (gap {:+.2} points)",
            100.0 * mh,
            100.0 * vanilla,
            100.0 * meg,
            100.0 * fedavg_global,
            100.0 * (mh - fedavg_global)
        ),
    )
}

fn heterogeneity_trend() -> Outcome {
    let (data, data_name) = dataset_entry();
    let alphas = [0.01, 1.0, 100.0];
    let accs: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            mean([0u64, 1, 2].into_iter().map(|seed| {
                run_final(vec![
                    data.clone(),
                    e("N", 20),
                    e("S", 20),
                    e("R", 1),
                    e("T", 100),
                    e("partition", format!("dirichlet:{a}")),
                    e("lambda", 5),
                    e("alpha", 0.1),
                    e("alpha_m", 0.1),
                    e("seed", seed),
                    e("global_deviation", false),
                ])
                .personalized
            }))
        })
        .collect();
    let inversions: Vec<f64> = accs.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    let pass = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.01);
    let shown: Vec<String> = alphas.iter().zip(&accs).map(|(a, p)| format!("alpha {a}: {:.2}%", 100.0 * p)).collect();
    outcome(pass, format!("{data_name}: {}", shown.join(", ")))
}

fn gce_units(series: &[(String, Vec<f64>)]) -> Outcome {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let orth = gce(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])]).unwrap();
    let same = gce(&[pv(&[0.3, -2.0]), pv(&[0.3, -2.0])]).unwrap();
    let half = gce(&[pv(&[1.0, 0.0]), pv(&[s, s])]).unwrap();
    let units = orth.abs() <= 1e-9 && (same - 1.0).abs() <= 1e-9 && (half - 0.5).abs() <= 1e-9;

    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("gce_series.csv");
    let mut summary = Vec::new();
    let mut columns = Vec::new();
    for (name, raw) in series {
        let finite: Vec<f64> = raw.iter().copied().filter(|x| x.is_finite()).collect();
        let smooth = savitzky_golay(&finite, 11, 3).unwrap_or_else(|_| finite.clone());
        summary.push(format!("{name} mean smoothed GCE {:.4}", mean(smooth.iter().copied())));
        columns.push((name.clone(), finite, smooth));
    }
    let written = write_series(&path, &columns).is_ok();
    outcome(
        units && written,
        format!("orthogonal {orth:.1e}, identical {same:.12}, 45deg {half:.12}; {}; series in {}", summary.join(", "), path.display()),
    )
}

fn write_series(path: &Path, columns: &[(String, Vec<f64>, Vec<f64>)]) -> std::io::Result<()> {
    let mut out = String::from("round");
    for (name, _, _) in columns {
        out.push_str(&format!(",{name}_raw,{name}_smoothed"));
    }
    out.push('\n');
    let rounds = columns.iter().map(|c| c.1.len()).min().unwrap_or(0);
    for t in 0..rounds {
        out.push_str(&(t + 1).to_string());
        for (_, raw, smooth) in columns {
            out.push_str(&format!(",{},{}", raw[t], smooth[t]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_pfedbred");
    let root = tempfile::tempdir().unwrap();
    let args = [
        "--synth", "6,8,60,2", "--N", "8", "--S", "3", "--T", "6", "--R", "4", "--partition", "dirichlet:0.5", "--strategy",
        "mh_variant", "--seed", "21", "--repeats", "2", "--ft",
    ];
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = root.path().join(threads);
        let out = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(&out_dir)
            .env("PFB_THREADS", threads)
            .output()
            .unwrap();
        if !out.status.success() {
            return outcome(false, format!("run with {threads} threads failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        let dir = String::from_utf8(out.stdout).unwrap();
        outputs.push(std::fs::read(Path::new(dir.trim()).join("metrics.jsonl")).unwrap());
    }
    let lines = outputs[0].iter().filter(|&&b| b == b'\n').count();
    outcome(
        outputs[0] == outputs[1] && lines == 12,
        format!("metrics.jsonl byte-identical under PFB_THREADS 1 and 4 ({lines} records, {} bytes)", outputs[0].len()),
    )
}

fn property(name: &str, failures: &mut Vec<String>, result: Result<(), String>) {
    if let Err(msg) = result {
        failures.push(format!("{name}: {msg}"));
    }
}

fn run_prop<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    TestRunner::new(Config { cases: 128, failure_persistence: None, ..Config::default() })
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn point_in(map: &dyn MirrorMap, raw: &[f64]) -> ParamVector {
    use pfedbred::mirror::Domain;
    ParamVector::new(
        raw.iter()
            .map(|&x| match map.domain() {
                Domain::Reals => x,
                Domain::PositiveOrthant => x.abs() + 0.01,
                Domain::NegativeOrthant => -(x.abs() + 0.01),
                Domain::UnitInterval => 0.01 + 0.98 * (x.abs() / 5.0).min(1.0),
            })
            .collect(),
    )
}

fn property_suites() -> Outcome {
    let mut failures = Vec::new();
    let vec3 = || prop::collection::vec(-5.0f64..5.0, 3);

    property("bregman nonnegativity and identity", &mut failures, run_prop((vec3(), vec3(), 0..MIRROR_NAMES.len()), |(x, y, m)| {
        let map = mirror_map_by_name(MIRROR_NAMES[m]).unwrap();
        let (x, y) = (point_in(map.as_ref(), &x), point_in(map.as_ref(), &y));
        prop_assert!(bregman_divergence(map.as_ref(), &x, &y).unwrap() >= 0.0);
        prop_assert!(bregman_divergence(map.as_ref(), &x, &x).unwrap().abs() <= 1e-12);
        Ok(())
    }));

    property("conjugacy round trip", &mut failures, run_prop((vec3(), 0..MIRROR_NAMES.len()), |(x, m)| {
        let map = mirror_map_by_name(MIRROR_NAMES[m]).unwrap();
        let x = point_in(map.as_ref(), &x);
        let back = map.grad_g_conj(&map.grad_g(&x));
        for j in 0..3 {
            prop_assert!((back[j] - x[j]).abs() <= 1e-8 * (1.0 + x[j].abs()));
        }
        let d = conjugate_divergence(map.as_ref(), &map.grad_g(&x), &map.grad_g(&x)).unwrap();
        prop_assert!(d.abs() <= 1e-12);
        Ok(())
    }));

    property("partition no leakage and determinism", &mut failures, run_prop((any::<u64>(), 1usize..4, 0.05f64..50.0), |(seed, k, alpha)| {
        let ds = synth_gaussian_mixture(4, 4, 25, 1.0, seed).unwrap();
        for p in [
            partition_label_shard(&ds, 5, k, 0.75, seed).unwrap(),
            partition_dirichlet(&ds, 5, alpha, 0.75, seed, &DirichletOptions::default()).unwrap(),
        ] {
            p.validate(&ds).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut all: Vec<usize> = p.clients.iter().flat_map(|c| c.train.iter().chain(&c.test).copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        }
        prop_assert_eq!(
            partition_dirichlet(&ds, 5, alpha, 0.75, seed, &DirichletOptions::default()).unwrap(),
            partition_dirichlet(&ds, 5, alpha, 0.75, seed, &DirichletOptions::default()).unwrap()
        );
        Ok(())
    }));

    property("aggregation permutation invariance", &mut failures, run_prop((prop::collection::vec(vec3(), 1..8), any::<usize>()), |(vs, shift)| {
        let collected: Vec<ParamVector> = vs.iter().map(|v| pv(v)).collect();
        let mut permuted = collected.clone();
        permuted.rotate_left(shift % collected.len());
        permuted.reverse();
        let w_old = pv(&[0.5, -0.5, 1.0]);
        let a = aggregate(&w_old, &collected, 1.0).unwrap();
        let b = aggregate(&w_old, &permuted, 1.0).unwrap();
        for j in 0..3 {
            prop_assert!((a[j] - b[j]).abs() <= 1e-12 * (1.0 + a[j].abs()));
        }
        Ok(())
    }));

    property("deviation zero sum", &mut failures, run_prop(
        (prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 2..6), prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 6)),
        |(losses, weights)| {
            let weights = &weights[..losses.len()];
            let dev = loss_deviation(&losses, weights).unwrap();
            for c in 0..4 {
                let wsum: f64 = weights.iter().map(|w| w[c]).sum();
                if wsum > 0.0 {
                    let s: f64 = dev.iter().zip(weights).map(|(d, w)| w[c] * d[c]).sum();
                    prop_assert!(s.abs() <= 1e-9 * (1.0 + wsum * 10.0));
                }
            }
            Ok(())
        },
    ));

    property("savitzky-golay polynomial reproduction", &mut failures, run_prop(
        (prop::collection::vec(-2.0f64..2.0, 4), 2usize..5, 12usize..40),
        |(coef, half, len)| {
            let window = 2 * half + 1;
            let order = 3.min(window - 1);
            let series: Vec<f64> = (0..len)
                .map(|t| {
                    let x = t as f64 / len as f64;
                    coef.iter().take(order + 1).rev().fold(0.0, |acc, c| acc * x + c)
                })
                .collect();
            let smooth = savitzky_golay(&series, window, order).unwrap();
            for (a, b) in series.iter().zip(&smooth) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            Ok(())
        },
    ));

    outcome(
        failures.is_empty(),
        if failures.is_empty() { "6 property suites, 128 cases each".to_string() } else { failures.join("; ") },
    )
}

fn main() {
    let mut gce_series = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "gradient correctness", gradient_check()),
        (2, "proximal oracle and envelope gradient", prox_check()),
        (3, "pFedMe equivalence", pfedme_equivalence()),
        (4, "ablation ordering", ablation(&mut gce_series)),
        (5, "heterogeneity trend", heterogeneity_trend()),
    ];
    results.push((6, "GCE unit values and series", gce_units(&gce_series)));
    results.push((7, "determinism across thread counts", determinism()));
    results.push((8, "property suites", property_suites()));
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
