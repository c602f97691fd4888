use serde::{Deserialize, Serialize};

/// Metrics of one completed round. Optional values are blank in CSV and
/// `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub global_acc: f64,
    pub mean_train_loss: f64,
    pub lr: f64,
    pub beta: Option<f64>,
    pub proto_consistency: Option<f64>,
    pub nc_error_uncentered: Option<f64>,
    pub nc_error_centered: Option<f64>,
    pub model_consistency: Option<f64>,
    pub classifier_similarity: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl RoundRecord {
    pub const CSV_HEADER: &'static str = "round,global_acc,mean_train_loss,lr,beta,proto_consistency,\
nc_error_uncentered,nc_error_centered,model_consistency,classifier_similarity,wall_ms";

    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.global_acc,
            self.mean_train_loss,
            self.lr,
            opt(self.beta),
            opt(self.proto_consistency),
            opt(self.nc_error_uncentered),
            opt(self.nc_error_centered),
            opt(self.model_consistency),
            opt(self.classifier_similarity),
            opt(self.wall_ms),
        )
    }
}

pub fn history_csv(history: &[RoundRecord]) -> String {
    let mut out = String::from(RoundRecord::CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
