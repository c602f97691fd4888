use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{DatasetSpec, ExperimentConfig, RESOLVED_CONFIG_FILE};
use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::data::{
    dirichlet_partition, format_partition, load_idx, partition_counts, split_client, ClientDataset, GaussianMixture,
    LabeledDataset,
};
use crate::error::{Error, Result};
use crate::etf::synthesize_etf;
use crate::federation::{
    history_csv, personalized_finetune, run_federated_training, Diagnostics, FederatedRun, FederationConfig,
    FinetuneOutcome, RoundRecord, SamplingList,
};
use crate::model::{Algorithm, Head, Model};
use crate::rng::{substream, tag};

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const PERSONALIZATION_CSV: &str = "personalization.csv";
pub const PARTITION_FILE: &str = "partition.txt";
pub const SAMPLING_FILE: &str = "sampling_list.txt";

/// Everything both algorithms of a run share.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    /// Balanced global test set.
    pub test: LabeledDataset,
    pub partition: Vec<Vec<usize>>,
    pub clients: Vec<ClientDataset>,
    pub sampling: SamplingList,
}

impl PreparedData {
    pub fn input_dim(&self) -> usize {
        self.train.dim()
    }

    pub fn classes(&self) -> usize {
        self.train.classes()
    }
}

fn load_datasets(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.dataset {
        DatasetSpec::Synthetic(s) => {
            let seed = s.seed.unwrap_or(cfg.federation.seed);
            let mut rng = substream(seed, &[tag::DATA]);
            let mixture = GaussianMixture::new(s.classes, s.dim, s.class_sep, &mut rng)?;
            let train = mixture.sample(s.per_class, &mut rng)?;
            let test = mixture.sample(s.test_per_class, &mut substream(seed, &[tag::TEST_DATA]))?;
            Ok((train, test))
        }
        DatasetSpec::Idx(s) => {
            let train = load_idx(&s.train_images, &s.train_labels, s.classes)?;
            let test = load_idx(&s.test_images, &s.test_labels, Some(train.classes()))?;
            if test.dim() != train.dim() {
                return Err(Error::Dimension(format!("train dim {} but test dim {}", train.dim(), test.dim())));
            }
            Ok((train, test))
        }
    }
}

/// Builds the datasets, partition, client splits and sampling list.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test) = load_datasets(cfg)?;
    let seed = cfg.federation.seed;
    let partition = dirichlet_partition(&train, &cfg.partition_spec())?;
    let clients = partition
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            let mut rng = substream(seed, &[tag::SPLIT, k as u64]);
            split_client(k, &train, idx, cfg.partition.train_fraction, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let f = &cfg.federation;
    let sampling = SamplingList::generate(f.clients, f.rounds, f.sampling_rate, seed)?;
    Ok(PreparedData { train, test, partition, clients, sampling })
}

/// Initial global model. The extractor initialization is the same for both
/// algorithms under one seed.
pub fn initial_model(fc: &FederationConfig, input_dim: usize, classes: usize, initial_beta: f64) -> Result<Model> {
    let etf = match fc.algorithm {
        Algorithm::FedEtf => Some(synthesize_etf(classes, fc.feature_dim, &mut substream(fc.seed, &[tag::ETF]))?),
        Algorithm::FedAvg => None,
    };
    let mut model =
        Model::init(fc.algorithm, input_dim, &fc.hidden, classes, etf, &mut substream(fc.seed, &[tag::MODEL_INIT]))?;
    if let Head::Etf(h) = &mut model.head {
        h.beta = initial_beta;
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub initial: Model,
    pub federated: FederatedRun,
    /// One finetuning outcome per client.
    pub personalization: Vec<FinetuneOutcome>,
}

impl AlgorithmRun {
    pub fn history(&self) -> &[RoundRecord] {
        &self.federated.history
    }

    pub fn final_global_acc(&self) -> Option<f64> {
        self.federated.history.last().map(|r| r.global_acc)
    }

    /// Mean local-test accuracy per finetuning stage, in stage order.
    pub fn personalization_means(&self) -> Vec<(String, f64)> {
        mean_trace(&self.personalization)
    }
}

pub fn mean_trace(outcomes: &[FinetuneOutcome]) -> Vec<(String, f64)> {
    let Some(first) = outcomes.first() else {
        return Vec::new();
    };
    (0..first.trace.len())
        .map(|s| {
            let mean = outcomes.iter().map(|o| o.trace[s].local_test_acc).sum::<f64>() / outcomes.len() as f64;
            (first.trace[s].label.clone(), mean)
        })
        .collect()
}

/// Federated training followed by per-client finetuning, in memory.
/// `on_round` receives every aggregated model.
pub fn run_algorithm<F>(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    algorithm: Algorithm,
    on_round: F,
) -> Result<AlgorithmRun>
where
    F: FnMut(usize, &Model) -> Result<()>,
{
    let fc = cfg.federation_config(algorithm);
    fc.validate(data.classes())?;
    let initial = initial_model(&fc, data.input_dim(), data.classes(), cfg.federation.initial_beta)?;
    let diagnostics = Diagnostics { collapse: cfg.diagnostics.collapse, wall_time: cfg.diagnostics.wall_time };
    let federated =
        run_federated_training(&fc, &data.clients, initial.clone(), &data.sampling, &data.test, diagnostics, on_round)?;
    let personalization = data
        .clients
        .par_iter()
        .map(|c| personalized_finetune(&federated.model, c, &fc, &cfg.finetune))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlgorithmRun { algorithm, initial, federated, personalization })
}

#[derive(Serialize)]
struct StageMean<'a> {
    stage: &'a str,
    mean_local_test_acc: f64,
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    algorithm: Algorithm,
    seed: u64,
    rounds: &'a [RoundRecord],
    final_global_acc: Option<f64>,
    personalization: Vec<StageMean<'a>>,
    final_personalized_acc: Option<f64>,
    warnings: &'a [String],
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_name(round: usize) -> String {
    format!("round_{round:04}.bin")
}

fn write_algorithm_outputs(dir: &Path, cfg: &ExperimentConfig, run: &AlgorithmRun) -> Result<()> {
    write_file(&dir.join(METRICS_CSV), history_csv(run.history()))?;
    let means = run.personalization_means();
    let json = MetricsJson {
        algorithm: run.algorithm,
        seed: cfg.federation.seed,
        rounds: run.history(),
        final_global_acc: run.final_global_acc(),
        personalization: means.iter().map(|(s, m)| StageMean { stage: s, mean_local_test_acc: *m }).collect(),
        final_personalized_acc: means.last().map(|(_, m)| *m),
        warnings: &run.federated.warnings,
    };
    let mut text = serde_json::to_string_pretty(&json).expect("metrics serialize");
    text.push('\n');
    write_file(&dir.join(METRICS_JSON), text)?;
    let mut trace = String::from("client_id,stage,local_test_acc\n");
    for (k, o) in run.personalization.iter().enumerate() {
        for s in &o.trace {
            trace.push_str(&format!("{k},{},{}\n", s.label, s.local_test_acc));
        }
    }
    write_file(&dir.join(PERSONALIZATION_CSV), trace)?;
    write_checkpoint(&dir.join("final.bin"), &run.federated.model.to_canonical())?;
    if let Some(etf) = run.federated.model.etf() {
        let m = etf.matrix();
        let values: Vec<f64> = (0..m.cols()).flat_map(|c| m.column(c)).collect();
        write_checkpoint(&dir.join("etf.bin"), &values)?;
    }
    Ok(())
}

/// Summary of one algorithm's run on disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub dir: PathBuf,
    pub final_global_acc: Option<f64>,
    pub final_personalized_acc: Option<f64>,
    pub warnings: Vec<String>,
}

/// Runs every configured algorithm and writes the run directory:
/// resolved config, partition export and sampling list at the top level,
/// and per algorithm (in a subdirectory in compare mode) `metrics.csv`,
/// `metrics.json`, `personalization.csv`, `final.bin`, `etf.bin` and
/// periodic `checkpoints/round_XXXX.bin`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let out = &cfg.output_dir;
    create_dir(out)?;
    write_file(&out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
    let data = prepare_data(cfg)?;
    write_file(&out.join(PARTITION_FILE), format_partition(&data.partition))?;
    data.sampling.save(&out.join(SAMPLING_FILE))?;

    let algorithms = cfg.federation.algorithm.algorithms();
    let mut summaries = Vec::new();
    for &algorithm in algorithms {
        let dir = if algorithms.len() > 1 { out.join(algorithm.as_str()) } else { out.clone() };
        create_dir(&dir)?;
        let ckpt_dir = dir.join("checkpoints");
        let interval = cfg.checkpoint_interval;
        if interval > 0 {
            create_dir(&ckpt_dir)?;
            let fc = cfg.federation_config(algorithm);
            let init = initial_model(&fc, data.input_dim(), data.classes(), cfg.federation.initial_beta)?;
            write_checkpoint(&ckpt_dir.join(checkpoint_name(0)), &init.to_canonical())?;
        }
        let run = run_algorithm(cfg, &data, algorithm, |round, model| {
            if interval > 0 && round % interval == 0 {
                write_checkpoint(&ckpt_dir.join(checkpoint_name(round)), &model.to_canonical())?;
            }
            Ok(())
        })?;
        write_algorithm_outputs(&dir, cfg, &run)?;
        let means = run.personalization_means();
        summaries.push(RunSummary {
            algorithm,
            dir,
            final_global_acc: run.final_global_acc(),
            final_personalized_acc: means.last().map(|(_, m)| *m),
            warnings: run.federated.warnings.clone(),
        });
    }
    Ok(summaries)
}

/// Per-client per-class train+test counts as CSV with a totals row.
pub fn partition_preview(cfg: &ExperimentConfig) -> Result<String> {
    let (train, _) = load_datasets(cfg)?;
    let sets = dirichlet_partition(&train, &cfg.partition_spec())?;
    let counts = partition_counts(&train, &sets);
    let classes = train.classes();
    let mut out = String::from("client,total");
    for c in 0..classes {
        out.push_str(&format!(",class_{c}"));
    }
    out.push('\n');
    let mut totals = vec![0usize; classes];
    for (k, row) in counts.iter().enumerate() {
        out.push_str(&format!("{k},{}", row.iter().sum::<usize>()));
        for (c, n) in row.iter().enumerate() {
            out.push_str(&format!(",{n}"));
            totals[c] += n;
        }
        out.push('\n');
    }
    out.push_str(&format!("total,{}", totals.iter().sum::<usize>()));
    for n in &totals {
        out.push_str(&format!(",{n}"));
    }
    out.push('\n');
    Ok(out)
}

/// What a checkpoint holds, as far as can be told.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub params: usize,
    /// Known when a matching resolved config was found.
    pub algorithm: Option<Algorithm>,
    pub beta: Option<f64>,
}

/// Reads a checkpoint; with a resolved config, identifies the algorithm by
/// parameter count and extracts `β`.
pub fn inspect_checkpoint(path: &Path, cfg: Option<&ExperimentConfig>) -> Result<CheckpointInfo> {
    let values = read_checkpoint(path)?;
    let mut info = CheckpointInfo { params: values.len(), algorithm: None, beta: None };
    let Some(cfg) = cfg else {
        return Ok(info);
    };
    let input_dim = match &cfg.dataset {
        DatasetSpec::Synthetic(s) => s.dim,
        DatasetSpec::Idx(s) => crate::data::idx::idx_item_dim(&s.train_images)?,
    };
    for &algorithm in cfg.federation.algorithm.algorithms() {
        let fc = cfg.federation_config(algorithm);
        let layout = crate::model::ModelLayout {
            algorithm,
            input_dim,
            hidden: fc.hidden.clone(),
            classes: cfg.classes(),
            feature_dim: if algorithm == Algorithm::FedEtf { fc.feature_dim } else { 0 },
        };
        if layout.param_count() == values.len() {
            let model = layout.from_canonical(&values)?;
            info.algorithm = Some(algorithm);
            info.beta = model.beta();
            break;
        }
    }
    Ok(info)
}

/// Nearest `resolved_config.toml` in the checkpoint's directory or up to
/// two levels above it.
pub fn find_resolved_config(checkpoint: &Path) -> Option<PathBuf> {
    let start = checkpoint.parent()?;
    start.ancestors().take(3).map(|d| d.join(RESOLVED_CONFIG_FILE)).find(|p| p.is_file())
}
