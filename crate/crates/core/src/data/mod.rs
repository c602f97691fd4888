//! Client datasets: synthetic mixtures, IDX ingestion, non-IID partitioning.

pub mod dataset;
pub mod idx;
pub mod partition;
pub mod split;
pub mod synthetic;

pub use dataset::{ClientDataset, LabeledDataset};
pub use idx::{decode_idx, encode_idx, load_idx, write_idx};
pub use partition::{
    dirichlet_partition, format_partition, label_entropy, parse_partition, partition_counts, PartitionSpec,
};
pub use split::{split_client, train_size, DEFAULT_TRAIN_FRACTION};
pub use synthetic::{generate_gaussian_mixture, GaussianMixture};
