pub mod collapse;

pub use collapse::{
    classifier_similarity, compute_prototypes, mean_pairwise_cosine, model_consistency, nc1_within_class_scatter,
    nc3_alignment, neural_collapse_error, prototype_consistency, within_class_scatter, ClassifierSimilarity,
    CosineSummary, Nc3Alignment, PrototypeSet, WithinClassScatter,
};
