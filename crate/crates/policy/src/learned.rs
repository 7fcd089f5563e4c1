//! Scoring with trained models loaded from a parameter store.

use vantage_core::features::{
    aggregate, aggregate_schema, mlp_input, per_landmark_features, token_schema, AggregateShape,
    PerLandmarkFeature, TOKEN_HEAD_DIM,
};
use vantage_core::geom::Pose;
use vantage_core::mapping::LandmarkMap;
use vantage_core::{CameraModel, OccupancyGrid};
use vantage_learn::{tokens_from_features, DatasetExample, ParamStore, TrainedParams};

use crate::error::PolicyError;
use crate::Result;

/// Positive-class probability a trained model assigns to a precomputed
/// feature set. The store's schema hash must match the features the model
/// would see: the default aggregate layout for flat models, the token
/// layout (with the store's descriptor width) for token models.
pub fn score_features(store: &ParamStore, features: &[PerLandmarkFeature]) -> Result<f64> {
    let ranges = &store.meta.norm_ranges;
    match &store.params {
        TrainedParams::Mlp(_) => {
            let shape = AggregateShape::default();
            store.check_schema(&aggregate_schema(&shape))?;
            let agg = aggregate(features, &shape, ranges);
            let input = mlp_input(&agg, ranges);
            Ok(store.params.score_example(&DatasetExample::Aggregate(&input))?)
        }
        TrainedParams::Vpt(p) => {
            let config = p.config;
            let d_app = config.token_dim.checked_sub(TOKEN_HEAD_DIM).ok_or_else(|| {
                PolicyError::Schema(format!(
                    "token model expects token_dim >= {TOKEN_HEAD_DIM}, got {}",
                    config.token_dim
                ))
            })?;
            store.check_schema(&token_schema(d_app))?;
            let batch = tokens_from_features(features, ranges, &config, false)?;
            Ok(store.params.score_example(&DatasetExample::Tokens(&batch))?)
        }
    }
}

/// Positive-class probability a trained model assigns to the view from
/// `pose`: features are computed for the mapped landmarks under the
/// chosen visibility mode, then scored with [`score_features`].
pub fn score_learned(
    store: &ParamStore,
    map: &LandmarkMap,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
) -> Result<f64> {
    let features = per_landmark_features(map, pose, cam, grid, occlusion_filter);
    score_features(store, &features)
}
