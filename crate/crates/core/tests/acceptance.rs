//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails that is not listed in `KNOWN_UNMET`.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fedetf_core::data::{dirichlet_partition, generate_gaussian_mixture, PartitionSpec};
use fedetf_core::etf::{balanced_feature_loss, etf_geometry_error, synthesize_etf, vanilla_feature_loss};
use fedetf_core::experiment::{prepare_data, run_algorithm, run_experiment, AlgorithmRun};
use fedetf_core::federation::{
    aggregate, history_csv, personalized_finetune_observed, run_federated_training, Diagnostics, FederationConfig,
    SamplingList,
};
use fedetf_core::nn::{finite_difference_gradient, max_relative_error, ParamSet};
use fedetf_core::rng::substream;
use fedetf_core::{Algorithm, Model, Objective};
use rand::Rng;

use common::{desk_config, entropy, etf_gram_deviation, standalone_training, weighted_mean_oracle};

/// Criteria that the desk-scale setup does not reproduce. They are still
/// evaluated and reported as FAIL.
const KNOWN_UNMET: &[usize] = &[7, 9];

const DESK_SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn etf_geometry() -> Outcome {
    let start = Instant::now();
    let mut worst_gram: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut worst_lib: f64 = 0.0;
    for c in [2usize, 5, 10, 26] {
        for d in [c, 2 * c] {
            for seed in 0..10 {
                let etf = synthesize_etf(c, d, &mut substream(seed, &[c as u64, d as u64])).unwrap();
                let cols: Vec<Vec<f64>> = (0..c).map(|i| etf.column(i)).collect();
                worst_gram = worst_gram.max(etf_gram_deviation(&cols));
                worst_lib = worst_lib.max(etf_geometry_error(etf.matrix()));
                for col in &cols {
                    let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                    worst_norm = worst_norm.max((n - 1.0).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_gram < 1e-9 && worst_lib < 1e-9 && worst_norm < 1e-9 && elapsed < Duration::from_secs(1),
        format!("gram dev {worst_gram:.2e}, reported error {worst_lib:.2e}, norm dev {worst_norm:.2e}, {elapsed:.2?}"),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut rng = substream(2024, &[]);
    for &c in &[3usize, 10] {
        for _ in 0..15 {
            for balanced in [true, false] {
                let etf = synthesize_etf(c, c, &mut rng).unwrap();
                let mut model = Model::init(Algorithm::FedEtf, 8, &[6], c, Some(etf), &mut rng).unwrap();
                if let fedetf_core::model::Head::Etf(h) = &mut model.head {
                    h.beta = rng.random_range(0.5..3.0);
                    h.projection.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
                }
                let batch = 5;
                let x: Vec<f64> = (0..batch * 8).map(|_| rng.random_range(-2.0..2.0)).collect();
                let x = fedetf_core::nn::Tensor2::from_vec(batch, 8, x).unwrap();
                let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..c)).collect();
                let objective = if balanced {
                    let mut counts: Vec<usize> = (0..c).map(|_| rng.random_range(0..20)).collect();
                    labels.iter().for_each(|&y| counts[y] = counts[y].max(1));
                    Objective::Balanced { counts, gamma: rng.random_range(0.0..2.0) }
                } else {
                    Objective::Vanilla
                };
                let (_, grads) = model.loss_and_grad(&x, &labels, &objective).unwrap();
                let analytic = grads.to_canonical();
                let layout = model.layout();
                let numeric = finite_difference_gradient(
                    |theta| layout.from_canonical(theta).unwrap().loss_and_grad(&x, &labels, &objective).unwrap().0,
                    &model.to_canonical(),
                    1e-5,
                );
                worst = worst.max(max_relative_error(&analytic, &numeric, 1e-4));
                instances += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && instances >= 50 && elapsed < Duration::from_secs(10),
        format!("{instances} instances (u, p, β, V), max rel. error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn loss_identities() -> Outcome {
    let mut rng = substream(99, &[]);
    let mut worst_uniform: f64 = 0.0;
    for _ in 0..1000 {
        let c = rng.random_range(2..=12);
        let products: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = rng.random_range(0..c);
        let n = rng.random_range(1..50);
        let beta = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.0..3.0);
        let b = balanced_feature_loss(&products, y, &vec![n; c], gamma, beta).unwrap();
        let v = vanilla_feature_loss(&products, y, beta).unwrap();
        worst_uniform = worst_uniform.max((b.loss - v.loss).abs());
    }
    let mut worst_sym: f64 = 0.0;
    for c in [2usize, 3, 10, 26] {
        for beta in [0.0, 0.5, 1.0, 7.0] {
            let l = balanced_feature_loss(&vec![0.3; c], 0, &vec![4; c], 1.0, beta).unwrap().loss;
            worst_sym = worst_sym.max((l - (c as f64).ln()).abs());
        }
    }
    let skew = balanced_feature_loss(&[0.2, 0.2], 1, &[9, 1], 1.0, 1.0).unwrap().loss;
    // 2.302585 is ln 10 printed to six decimals.
    outcome(
        worst_uniform < 1e-12 && worst_sym < 1e-12 && (skew - 10f64.ln()).abs() < 1e-9,
        format!("uniform vs vanilla {worst_uniform:.1e}, symmetric vs ln C {worst_sym:.1e}, skewed {skew:.9}"),
    )
}

fn aggregation_oracle() -> Outcome {
    let mut rng = substream(5, &[]);
    let mut worst: f64 = 0.0;
    let mut scale_dev: f64 = 0.0;
    let mut identity = true;
    let mut etf_kept = true;
    for trial in 0..20 {
        let algorithm = if trial % 2 == 0 { Algorithm::FedEtf } else { Algorithm::FedAvg };
        let etf = (algorithm == Algorithm::FedEtf).then(|| synthesize_etf(4, 6, &mut rng).unwrap());
        let k = rng.random_range(1..=6);
        let models: Vec<Model> = (0..k)
            .map(|_| {
                let mut m = Model::init(algorithm, 5, &[7, 3], 4, etf.clone(), &mut rng).unwrap();
                if let fedetf_core::model::Head::Etf(h) = &mut m.head {
                    h.beta = rng.random_range(0.1..4.0);
                }
                m
            })
            .collect();
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..500)).collect();
        let agg = aggregate(&models, &sizes).unwrap();
        let vectors: Vec<Vec<f64>> = models.iter().map(|m| m.flatten_groups(m.federated_groups())).collect();
        let expected = weighted_mean_oracle(&vectors, &sizes);
        let got = agg.flatten_groups(agg.federated_groups());
        for (a, b) in got.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
        etf_kept &= agg.etf() == models[0].etf();
        let scaled: Vec<usize> = sizes.iter().map(|n| n * 7).collect();
        let agg2 = aggregate(&models, &scaled).unwrap();
        for (a, b) in agg2.to_canonical().iter().zip(agg.to_canonical()) {
            scale_dev = scale_dev.max((a - b).abs());
        }
        let single = aggregate(&models[..1], &sizes[..1]).unwrap();
        identity &= single.to_canonical().iter().zip(models[0].to_canonical()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    outcome(
        worst < 1e-12 && scale_dev < 1e-12 && identity && etf_kept,
        format!("oracle dev {worst:.1e}, size-scaling dev {scale_dev:.1e}, K=1 bitwise {identity}, ETF passed through {etf_kept}"),
    )
}

fn partition_suite() -> Outcome {
    let data = generate_gaussian_mixture(10, 4, 60, 2.0, &mut substream(11, &[])).unwrap();
    let mut rng = substream(12, &[]);
    let mut covers = 0;
    let mut failures = Vec::new();
    for _ in 0..100 {
        let alpha = 10f64.powf(rng.random_range(-1.3..2.0));
        let k = rng.random_range(1..=20);
        let seed = rng.random::<u64>();
        match dirichlet_partition(&data, &PartitionSpec::new(k, alpha, seed)) {
            Ok(sets) => {
                let mut seen = vec![0u32; data.len()];
                sets.iter().flatten().for_each(|&i| seen[i] += 1);
                if sets.len() == k && seen.iter().all(|&s| s == 1) {
                    covers += 1;
                } else {
                    failures.push(format!("α={alpha:.3} K={k}"));
                }
            }
            Err(e) => failures.push(format!("α={alpha:.3} K={k}: {e}")),
        }
    }

    let pool = generate_gaussian_mixture(10, 4, 200, 2.0, &mut substream(13, &[])).unwrap();
    let mean_entropy = |alpha: f64| {
        let mut total = 0.0;
        let mut n = 0;
        for seed in 100..120u64 {
            let sets = dirichlet_partition(&pool, &PartitionSpec::new(10, alpha, seed)).unwrap();
            for s in &sets {
                let mut counts = vec![0usize; 10];
                s.iter().for_each(|&i| counts[pool.labels()[i]] += 1);
                total += entropy(&counts);
                n += 1;
            }
        }
        total / n as f64
    };
    let (e1, e2, e3) = (mean_entropy(0.05), mean_entropy(0.1), mean_entropy(100.0));

    let sets = dirichlet_partition(&pool, &PartitionSpec::new(20, 0.05, 7)).unwrap();
    let missing = sets
        .iter()
        .filter(|s| {
            let mut present = [false; 10];
            s.iter().for_each(|&i| present[pool.labels()[i]] = true);
            present.contains(&false)
        })
        .count();
    outcome(
        covers == 100 && e1 < e2 && e2 < e3 && missing >= 1,
        format!(
            "exact cover {covers}/100{}, mean entropy {e1:.3} < {e2:.3} < {e3:.3}, {missing}/20 clients missing a class",
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) }
        ),
    )
}

fn centralized_equivalence() -> Outcome {
    let data = generate_gaussian_mixture(4, 6, 40, 2.5, &mut substream(21, &[])).unwrap();
    let all: Vec<usize> = (0..data.len()).collect();
    let client = fedetf_core::data::split_client(0, &data, &all, 0.7, &mut substream(22, &[])).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for algorithm in [Algorithm::FedAvg, Algorithm::FedEtf] {
        let mut cfg = FederationConfig::new(algorithm, 1, 5, 4);
        cfg.hidden = vec![8, 5];
        cfg.batch_size = 16;
        cfg.seed = 23;
        let etf = (algorithm == Algorithm::FedEtf).then(|| synthesize_etf(4, 4, &mut substream(24, &[])).unwrap());
        let init = Model::init(algorithm, 6, &cfg.hidden, 4, etf, &mut substream(25, &[])).unwrap();
        let sampling = SamplingList::generate(1, 5, 1.0, 23).unwrap();
        let fed = run_federated_training(
            &cfg,
            std::slice::from_ref(&client),
            init.clone(),
            &sampling,
            &client.test,
            Diagnostics { collapse: false, wall_time: false },
            |_, _| Ok(()),
        )
        .unwrap();
        let objective = match algorithm {
            Algorithm::FedEtf => Objective::Balanced { counts: client.counts.clone(), gamma: cfg.gamma },
            Algorithm::FedAvg => Objective::CrossEntropy,
        };
        let central = standalone_training(&init, &client.train, &objective, &cfg);
        let same = fed.model.to_canonical().iter().zip(central.to_canonical()).all(|(a, b)| a.to_bits() == b.to_bits());
        let moved = fed.model.to_canonical() != init.to_canonical();
        ok &= same && moved;
        notes.push(format!("{algorithm}: bitwise {same}"));
    }
    outcome(ok, format!("K=1, 5 rounds; {}", notes.join(", ")))
}

/// Both algorithms of the desk setup for one seed.
struct DeskRun {
    seed: u64,
    fedavg: AlgorithmRun,
    fedetf: AlgorithmRun,
    frozen_ok: bool,
    elapsed: Duration,
}

fn desk_runs() -> Vec<DeskRun> {
    DESK_SEEDS
        .iter()
        .map(|&seed| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = desk_config(seed, dir.path());
            let start = Instant::now();
            let data = prepare_data(&cfg).unwrap();
            let fedavg = run_algorithm(&cfg, &data, Algorithm::FedAvg, |_, _| Ok(())).unwrap();
            let fedetf = run_algorithm(&cfg, &data, Algorithm::FedEtf, |_, _| Ok(())).unwrap();
            let elapsed = start.elapsed();
            let fc = cfg.federation_config(Algorithm::FedEtf);
            let mut frozen_ok = true;
            for (client, done) in data.clients.iter().zip(&fedetf.personalization) {
                let replay = personalized_finetune_observed(
                    &fedetf.federated.model,
                    client,
                    &fc,
                    &cfg.finetune,
                    |stage, before, after| {
                        for ((group, a), (_, b)) in before.slices().iter().zip(after.slices()) {
                            if !stage.trainable.contains(group) {
                                frozen_ok &= a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
                            }
                        }
                    },
                )
                .unwrap();
                frozen_ok &= replay.trace == done.trace;
            }
            DeskRun { seed, fedavg, fedetf, frozen_ok, elapsed }
        })
        .collect()
}

fn last<T: Copy>(run: &AlgorithmRun, f: impl Fn(&fedetf_core::federation::RoundRecord) -> T) -> T {
    f(run.history().last().unwrap())
}

fn directional_accuracy(runs: &[DeskRun]) -> Outcome {
    let gaps: Vec<f64> =
        runs.iter().map(|r| 100.0 * (last(&r.fedetf, |x| x.global_acc) - last(&r.fedavg, |x| x.global_acc))).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap();
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {}: {:.3} vs {:.3}",
                r.seed,
                last(&r.fedetf, |x| x.global_acc),
                last(&r.fedavg, |x| x.global_acc)
            )
        })
        .collect();
    outcome(
        mean >= 3.0 && slowest < Duration::from_secs(300),
        format!(
            "mean gap {mean:+.2} points (need >= +3); fedetf vs fedavg {}; slowest seed {slowest:.2?}",
            per_seed.join(", ")
        ),
    )
}

fn collapse_trend(runs: &[DeskRun]) -> Outcome {
    let pairs: Vec<(Option<f64>, Option<f64>)> = runs
        .iter()
        .map(|r| (last(&r.fedetf, |x| x.nc_error_uncentered), last(&r.fedavg, |x| x.nc_error_uncentered)))
        .collect();
    let pass = pairs.iter().all(|(e, a)| matches!((e, a), (Some(e), Some(a)) if e < a));
    outcome(pass, format!("round-50 NC error fedetf vs fedavg: {}", fmt_pairs(&pairs)))
}

fn alignment_trend(runs: &[DeskRun]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for r in runs {
        let mut violations = 0;
        for (e, a) in r.fedetf.history().iter().zip(r.fedavg.history()).filter(|(e, _)| e.round >= 10) {
            match (e.proto_consistency, a.proto_consistency) {
                (Some(e), Some(a)) if e > a => {}
                _ => violations += 1,
            }
        }
        pass &= violations == 0;
        notes.push(format!("seed {}: {violations} rounds violate", r.seed));
    }
    outcome(pass, format!("prototype consistency fedetf > fedavg for t >= 10; {}", notes.join(", ")))
}

fn drift_trend(runs: &[DeskRun]) -> Outcome {
    let pairs: Vec<(Option<f64>, Option<f64>)> = runs
        .iter()
        .map(|r| (last(&r.fedetf, |x| x.model_consistency), last(&r.fedavg, |x| x.model_consistency)))
        .collect();
    let pass = pairs.iter().all(|(e, a)| matches!((e, a), (Some(e), Some(a)) if e >= a));
    outcome(pass, format!("round-50 model consistency fedetf vs fedavg: {}", fmt_pairs(&pairs)))
}

fn personalization_trace(runs: &[DeskRun]) -> Outcome {
    let mut above_init = true;
    let mut above_extractor = 0;
    let mut frozen = true;
    let mut notes = Vec::new();
    for r in runs {
        let means = r.fedetf.personalization_means();
        let get = |label: &str| means.iter().find(|(l, _)| l == label).map(|(_, m)| *m).unwrap();
        let (init, extractor, last) = (get("init"), get("extractor"), means.last().unwrap().1);
        above_init &= last >= init;
        if last >= extractor {
            above_extractor += 1;
        }
        frozen &= r.frozen_ok;
        notes.push(format!("seed {}: init {init:.3}, extractor {extractor:.3}, final {last:.3}", r.seed));
    }
    outcome(
        above_init && above_extractor >= 2 && frozen,
        format!("{}; frozen groups bitwise {frozen}", notes.join(", ")),
    )
}

fn reproducibility(runs: &[DeskRun]) -> Outcome {
    let mut identical = true;
    for r in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&desk_config(r.seed, a.path())).unwrap();
        run_experiment(&desk_config(r.seed, b.path())).unwrap();
        for (alg, run) in [("fedavg", &r.fedavg), ("fedetf", &r.fedetf)] {
            let first = fs::read(a.path().join(alg).join("metrics.csv")).unwrap();
            let second = fs::read(b.path().join(alg).join("metrics.csv")).unwrap();
            identical &= first == second && first == history_csv(run.history()).into_bytes();
        }
    }
    outcome(identical, format!("metrics.csv byte-identical across reruns and in-memory runs: {identical}"))
}

fn fmt_pairs(pairs: &[(Option<f64>, Option<f64>)]) -> String {
    let f = |v: &Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    pairs.iter().map(|(e, a)| format!("{} vs {}", f(e), f(a))).collect::<Vec<_>>().join(", ")
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "ETF geometry", etf_geometry()),
        (2, "gradient suite", gradient_suite()),
        (3, "loss identities", loss_identities()),
        (4, "aggregation oracle", aggregation_oracle()),
        (5, "partition suite", partition_suite()),
        (6, "centralized equivalence", centralized_equivalence()),
    ];
    let runs = desk_runs();
    results.push((7, "desk-scale accuracy", directional_accuracy(&runs)));
    results.push((8, "neural-collapse trend", collapse_trend(&runs)));
    results.push((9, "alignment trend", alignment_trend(&runs)));
    results.push((10, "model-drift trend", drift_trend(&runs)));
    results.push((11, "personalization trace", personalization_trace(&runs)));
    results.push((12, "reproducibility", reproducibility(&runs)));

    let mut unexpected = Vec::new();
    for (n, name, o) in &results {
        let status = match (o.pass, KNOWN_UNMET.contains(n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(*n);
                "FAIL"
            }
        };
        println!("criterion {n:>2} [{name}]: {status} - {}", o.detail);
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
