//! Generalization protocols, metrics, the self-assessed bias probe and the
//! long-term hindcast experiment.

mod bias;
mod hindcast;
mod metrics;
mod run;
mod split;

pub use bias::{bias_probe, self_assessed_bias, BiasProbe, BIAS_PROBE_MESSAGE, BIAS_PROBE_THRESHOLD};
pub use hindcast::{
    hindcast_windows, run_hindcast_experiment, run_hindcast_on, score_hindcast, HindcastConfig, HindcastModelResult,
    HindcastReport, HindcastWindow,
};
pub use metrics::{
    compute_metrics, monthly_anomalies, MetricSummary, MetricsReport, Percentiles, Phase, PixelMetrics, PixelRecord,
};
pub use run::{
    evaluate_models, evaluate_predictor, fit_model, predict_split, run_experiment, write_reports, ExperimentConfig, ExperimentOutcome,
    ModelFailure, Predictor, AR_PROTOCOL_NOTE,
};
pub use split::{make_split, DateWindow, Split, SplitSpec};
