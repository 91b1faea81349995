//! Forecasters, error metrics, regional summaries and exports.

mod export;
mod forecast;
mod metrics;
mod regions;

pub use export::{export_predictions, export_station_errors, station_errors_geojson, ExportFormat};
pub use forecast::{
    autoregressive_rollout, persistence_forecast, Forecaster, MignForecaster, Persistence,
    Prediction, RolloutForecaster,
};
pub use metrics::{
    evaluate, ErrorSums, EvalOptions, MetricsReport, PredictionRecord, SampleMetrics, StationErrors,
};
pub use regions::{
    default_regions, load_regions, parse_regions, regional_breakdown, RegionMetrics, RegionSpec,
    OTHER_REGION,
};
