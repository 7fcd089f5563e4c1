//! Viewpoint features: per-landmark tokens for set models and fixed-size
//! histogram aggregates for flat models, plus the normalization machinery
//! shared by training and inference.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{principal_axis_angle_deg, project, CameraModel, Pose};
use crate::mapping::LandmarkMap;
use crate::rng::splitmix64;
use crate::scene::{ray_occluded, OccupancyGrid};
use crate::Result;

/// Angular slack added to a landmark's observation cone when deciding
/// whether a candidate view falls inside the seen range.
pub const CONE_SLACK_DEG: f64 = 5.0;
/// Distance window factors around the observed [dist_min, dist_max].
pub const DIST_SLACK_LO: f64 = 0.8;
pub const DIST_SLACK_HI: f64 = 1.25;

/// Features of one mapped landmark as seen from one candidate viewpoint.
/// All geometry is computed from the *mapped* landmark position: policies
/// only know the map.
#[derive(Debug, Clone, PartialEq)]
pub struct PerLandmarkFeature {
    pub landmark_id: u32,
    /// Camera-to-landmark distance, meters.
    pub distance: f64,
    /// Principal-axis angle at the candidate pose, degrees.
    pub view_angle_deg: f64,
    pub dist_min: f64,
    pub dist_max: f64,
    pub ang_min: f64,
    pub ang_max: f64,
    /// Projected pixel normalized by image size, in [0, 1).
    pub pixel_u: f64,
    pub pixel_v: f64,
    /// Angle between the candidate's viewing direction and the mean
    /// mapping view direction, degrees.
    pub dir_deviation_deg: f64,
    /// Whether the candidate view falls inside the mapping cone (plus
    /// slack) and the mapping distance window.
    pub in_seen_range: bool,
    pub descriptor: Vec<f64>,
    /// Set once the feature has been min-max normalized; normalization is
    /// idempotent.
    pub normalized: bool,
}

/// Number of scalar fields in a token before the descriptor.
pub const TOKEN_HEAD_DIM: usize = 10;

pub fn token_dim(d_app: usize) -> usize {
    TOKEN_HEAD_DIM + d_app
}

/// Compute features for every mapped landmark that projects into the
/// candidate view. With `occlusion_filter`, landmarks whose sight line is
/// blocked in the occupancy grid are dropped as well.
pub fn per_landmark_features(
    map: &LandmarkMap,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
) -> Vec<PerLandmarkFeature> {
    let mut out = Vec::new();
    for lm in &map.landmarks {
        let Some((u, v)) = project(&lm.position, pose, cam) else {
            continue;
        };
        if occlusion_filter {
            // A mapped position outside the grid volume counts as blocked.
            match ray_occluded(grid, &pose.position, &lm.position) {
                Ok(false) => {}
                _ => continue,
            }
        }
        let distance = (lm.position - pose.position).norm();
        // Projection succeeded, so distance >= near > 0.
        let view_angle_deg = principal_axis_angle_deg(pose, &lm.position).unwrap();
        let dir = (pose.position - lm.position) / distance;
        let dir_deviation_deg = dir
            .dot(&lm.stats.mean_view_dir)
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees();
        let in_seen_range = dir_deviation_deg
            <= lm.stats.cone_half_angle_deg + CONE_SLACK_DEG
            && distance >= DIST_SLACK_LO * lm.stats.dist_min
            && distance <= DIST_SLACK_HI * lm.stats.dist_max;
        out.push(PerLandmarkFeature {
            landmark_id: lm.id,
            distance,
            view_angle_deg,
            dist_min: lm.stats.dist_min,
            dist_max: lm.stats.dist_max,
            ang_min: lm.stats.ang_min,
            ang_max: lm.stats.ang_max,
            pixel_u: u / cam.width as f64,
            pixel_v: v / cam.height as f64,
            dir_deviation_deg,
            in_seen_range,
            descriptor: lm.descriptor.clone(),
            normalized: false,
        });
    }
    out
}

/// Number of features whose view falls inside the landmark's seen range
/// (observation cone plus slack, distance window). This is the Davison-
/// style visibility count used by the angle policy.
pub fn count_in_seen_range(features: &[PerLandmarkFeature]) -> usize {
    features.iter().filter(|f| f.in_seen_range).count()
}

/// Histogram layout for aggregated features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateShape {
    pub bins: usize,
    pub heat_rows: usize,
    pub heat_cols: usize,
}

impl Default for AggregateShape {
    fn default() -> Self {
        AggregateShape { bins: 16, heat_rows: 8, heat_cols: 8 }
    }
}

impl AggregateShape {
    /// Flattened input width: six histograms, the pixel heatmap, and the
    /// seen-range count.
    pub fn input_dim(&self) -> usize {
        6 * self.bins + self.heat_rows * self.heat_cols + 1
    }
}

/// Fixed-size summary of a candidate view for flat models: histograms
/// over distance, view angle, and their margins to the mapping ranges, a
/// pixel-position heatmap, and the seen-range count. Cell values are
/// exact landmark counts until normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeature {
    pub shape: AggregateShape,
    pub dist_hist: Vec<f64>,
    pub angle_hist: Vec<f64>,
    /// distance - dist_min
    pub dist_margin_lo_hist: Vec<f64>,
    /// dist_max - distance
    pub dist_margin_hi_hist: Vec<f64>,
    /// view_angle - ang_min
    pub ang_margin_lo_hist: Vec<f64>,
    /// ang_max - view_angle
    pub ang_margin_hi_hist: Vec<f64>,
    /// Row-major heat_rows x heat_cols counts over (pixel_v, pixel_u).
    pub heatmap: Vec<f64>,
    pub seen_count: f64,
    pub normalized: bool,
}

/// Min-max ranges frozen from a training corpus. Everything downstream of
/// feature extraction (tokens, aggregates) is scaled by these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRanges {
    pub distance: [f64; 2],
    pub view_angle: [f64; 2],
    pub dist_min: [f64; 2],
    pub dist_max: [f64; 2],
    pub ang_min: [f64; 2],
    pub ang_max: [f64; 2],
    pub dir_deviation: [f64; 2],
    pub dist_margin_lo: [f64; 2],
    pub dist_margin_hi: [f64; 2],
    pub ang_margin_lo: [f64; 2],
    pub ang_margin_hi: [f64; 2],
    pub hist_cell_max: f64,
    pub heat_cell_max: f64,
    pub seen_count_max: f64,
}

fn scale(x: f64, r: [f64; 2]) -> f64 {
    if r[1] - r[0] < 1e-12 {
        log::warn!("degenerate normalization range {r:?}; emitting 0");
        return 0.0;
    }
    ((x - r[0]) / (r[1] - r[0])).clamp(0.0, 1.0)
}

fn hist_bin(x: f64, r: [f64; 2], bins: usize) -> usize {
    if r[1] - r[0] < 1e-12 {
        return 0;
    }
    let f = (x - r[0]) / (r[1] - r[0]) * bins as f64;
    (f.floor() as i64).clamp(0, bins as i64 - 1) as usize
}

/// Build the histogram aggregate of a feature set. Bin edges come from
/// `ranges`; out-of-range values land in the edge bins, so every histogram
/// sums exactly to the landmark count.
pub fn aggregate(
    features: &[PerLandmarkFeature],
    shape: &AggregateShape,
    ranges: &NormRanges,
) -> AggregatedFeature {
    let b = shape.bins;
    let mut agg = AggregatedFeature {
        shape: *shape,
        dist_hist: vec![0.0; b],
        angle_hist: vec![0.0; b],
        dist_margin_lo_hist: vec![0.0; b],
        dist_margin_hi_hist: vec![0.0; b],
        ang_margin_lo_hist: vec![0.0; b],
        ang_margin_hi_hist: vec![0.0; b],
        heatmap: vec![0.0; shape.heat_rows * shape.heat_cols],
        seen_count: 0.0,
        normalized: false,
    };
    for f in features {
        agg.dist_hist[hist_bin(f.distance, ranges.distance, b)] += 1.0;
        agg.angle_hist[hist_bin(f.view_angle_deg, ranges.view_angle, b)] += 1.0;
        agg.dist_margin_lo_hist[hist_bin(f.distance - f.dist_min, ranges.dist_margin_lo, b)] += 1.0;
        agg.dist_margin_hi_hist[hist_bin(f.dist_max - f.distance, ranges.dist_margin_hi, b)] += 1.0;
        agg.ang_margin_lo_hist[hist_bin(f.view_angle_deg - f.ang_min, ranges.ang_margin_lo, b)] += 1.0;
        agg.ang_margin_hi_hist[hist_bin(f.ang_max - f.view_angle_deg, ranges.ang_margin_hi, b)] += 1.0;
        let row = ((f.pixel_v * shape.heat_rows as f64).floor() as i64)
            .clamp(0, shape.heat_rows as i64 - 1) as usize;
        let col = ((f.pixel_u * shape.heat_cols as f64).floor() as i64)
            .clamp(0, shape.heat_cols as i64 - 1) as usize;
        agg.heatmap[row * shape.heat_cols + col] += 1.0;
        if f.in_seen_range {
            agg.seen_count += 1.0;
        }
    }
    agg
}

/// Min-max normalize a feature into [0, 1] per coordinate. Already-
/// normalized features pass through unchanged.
pub fn normalize_feature(f: &PerLandmarkFeature, r: &NormRanges) -> PerLandmarkFeature {
    if f.normalized {
        return f.clone();
    }
    PerLandmarkFeature {
        landmark_id: f.landmark_id,
        distance: scale(f.distance, r.distance),
        view_angle_deg: scale(f.view_angle_deg, r.view_angle),
        dist_min: scale(f.dist_min, r.dist_min),
        dist_max: scale(f.dist_max, r.dist_max),
        ang_min: scale(f.ang_min, r.ang_min),
        ang_max: scale(f.ang_max, r.ang_max),
        pixel_u: f.pixel_u.clamp(0.0, 1.0),
        pixel_v: f.pixel_v.clamp(0.0, 1.0),
        dir_deviation_deg: scale(f.dir_deviation_deg, r.dir_deviation),
        in_seen_range: f.in_seen_range,
        // Descriptors are unit-norm, so coordinates lie in [-1, 1].
        descriptor: f.descriptor.iter().map(|x| ((x + 1.0) / 2.0).clamp(0.0, 1.0)).collect(),
        normalized: true,
    }
}

/// Normalized token vector for set models:
/// `[distance, view_angle, dist_min, dist_max, ang_min, ang_max, pixel_u,
/// pixel_v, dir_deviation, in_seen_range, descriptor...]`.
pub fn token_vector(f: &PerLandmarkFeature, r: &NormRanges) -> Vec<f64> {
    let g = normalize_feature(f, r);
    let mut t = Vec::with_capacity(token_dim(g.descriptor.len()));
    t.extend_from_slice(&[
        g.distance,
        g.view_angle_deg,
        g.dist_min,
        g.dist_max,
        g.ang_min,
        g.ang_max,
        g.pixel_u,
        g.pixel_v,
        g.dir_deviation_deg,
        g.in_seen_range as u8 as f64,
    ]);
    t.extend_from_slice(&g.descriptor);
    t
}

/// Min-max normalize an aggregate into [0, 1] per cell (idempotent).
pub fn normalize_aggregate(a: &AggregatedFeature, r: &NormRanges) -> AggregatedFeature {
    if a.normalized {
        return a.clone();
    }
    let cell = |v: &[f64], m: f64| -> Vec<f64> { v.iter().map(|&x| scale(x, [0.0, m])).collect() };
    AggregatedFeature {
        shape: a.shape,
        dist_hist: cell(&a.dist_hist, r.hist_cell_max),
        angle_hist: cell(&a.angle_hist, r.hist_cell_max),
        dist_margin_lo_hist: cell(&a.dist_margin_lo_hist, r.hist_cell_max),
        dist_margin_hi_hist: cell(&a.dist_margin_hi_hist, r.hist_cell_max),
        ang_margin_lo_hist: cell(&a.ang_margin_lo_hist, r.hist_cell_max),
        ang_margin_hi_hist: cell(&a.ang_margin_hi_hist, r.hist_cell_max),
        heatmap: cell(&a.heatmap, r.heat_cell_max),
        seen_count: scale(a.seen_count, [0.0, r.seen_count_max]),
        normalized: true,
    }
}

/// Flattened, normalized input for flat models: the six histograms in
/// declaration order, the heatmap row-major, then the seen count.
pub fn mlp_input(a: &AggregatedFeature, r: &NormRanges) -> Vec<f64> {
    let n = normalize_aggregate(a, r);
    let mut out = Vec::with_capacity(n.shape.input_dim());
    out.extend_from_slice(&n.dist_hist);
    out.extend_from_slice(&n.angle_hist);
    out.extend_from_slice(&n.dist_margin_lo_hist);
    out.extend_from_slice(&n.dist_margin_hi_hist);
    out.extend_from_slice(&n.ang_margin_lo_hist);
    out.extend_from_slice(&n.ang_margin_hi_hist);
    out.extend_from_slice(&n.heatmap);
    out.push(n.seen_count);
    out
}

impl NormRanges {
    /// Freeze normalization ranges from a training corpus: pass one finds
    /// per-field extents, pass two finds the histogram/heatmap cell maxima
    /// any single view reaches.
    pub fn from_corpus(records: &[Vec<PerLandmarkFeature>], shape: &AggregateShape) -> Result<NormRanges> {
        let mut any = false;
        let empty = [f64::INFINITY, f64::NEG_INFINITY];
        let (mut distance, mut view_angle) = (empty, empty);
        let (mut dist_min, mut dist_max) = (empty, empty);
        let (mut ang_min, mut ang_max) = (empty, empty);
        let mut dir_dev = empty;
        let (mut dml, mut dmh, mut aml, mut amh) = (empty, empty, empty, empty);
        let upd = |r: &mut [f64; 2], x: f64| {
            r[0] = r[0].min(x);
            r[1] = r[1].max(x);
        };
        for rec in records {
            for f in rec {
                if f.normalized {
                    return Err(CoreError::InvalidConfig(
                        "normalization ranges must be built from raw features".into(),
                    ));
                }
                any = true;
                upd(&mut distance, f.distance);
                upd(&mut view_angle, f.view_angle_deg);
                upd(&mut dist_min, f.dist_min);
                upd(&mut dist_max, f.dist_max);
                upd(&mut ang_min, f.ang_min);
                upd(&mut ang_max, f.ang_max);
                upd(&mut dir_dev, f.dir_deviation_deg);
                upd(&mut dml, f.distance - f.dist_min);
                upd(&mut dmh, f.dist_max - f.distance);
                upd(&mut aml, f.view_angle_deg - f.ang_min);
                upd(&mut amh, f.ang_max - f.view_angle_deg);
            }
        }
        if !any {
            return Err(CoreError::EmptyInput("feature corpus is empty".into()));
        }
        let mut ranges = NormRanges {
            distance,
            view_angle,
            dist_min,
            dist_max,
            ang_min,
            ang_max,
            dir_deviation: dir_dev,
            dist_margin_lo: dml,
            dist_margin_hi: dmh,
            ang_margin_lo: aml,
            ang_margin_hi: amh,
            hist_cell_max: 1.0,
            heat_cell_max: 1.0,
            seen_count_max: 1.0,
        };
        let (mut hist_max, mut heat_max, mut seen_max) = (0.0f64, 0.0f64, 0.0f64);
        for rec in records {
            let a = aggregate(rec, shape, &ranges);
            for h in [
                &a.dist_hist,
                &a.angle_hist,
                &a.dist_margin_lo_hist,
                &a.dist_margin_hi_hist,
                &a.ang_margin_lo_hist,
                &a.ang_margin_hi_hist,
            ] {
                hist_max = h.iter().fold(hist_max, |m, &x| m.max(x));
            }
            heat_max = a.heatmap.iter().fold(heat_max, |m, &x| m.max(x));
            seen_max = seen_max.max(a.seen_count);
        }
        ranges.hist_cell_max = hist_max.max(1.0);
        ranges.heat_cell_max = heat_max.max(1.0);
        ranges.seen_count_max = seen_max.max(1.0);
        Ok(ranges)
    }
}

/// Stable description of the token layout; hashed into model files so a
/// model cannot be applied to features with a different schema.
pub fn token_schema(d_app: usize) -> String {
    format!(
        "token/v1:distance,view_angle,dist_min,dist_max,ang_min,ang_max,\
         pixel_u,pixel_v,dir_deviation,in_seen_range,descriptor[{d_app}]"
    )
}

pub fn aggregate_schema(shape: &AggregateShape) -> String {
    format!(
        "agg/v1:bins={},heat={}x{},families=dist,angle,dist_margin_lo,dist_margin_hi,\
         ang_margin_lo,ang_margin_hi,heatmap,seen_count",
        shape.bins, shape.heat_rows, shape.heat_cols
    )
}

/// Order-sensitive 64-bit hash of a schema string.
pub fn schema_hash(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in s.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h
}
