//! Dataset records and the per-scene shard format: a compact binary record
//! stream plus a JSON sidecar describing it.
//!
//! Each record stores the raw (unnormalized) per-landmark features of one
//! candidate viewpoint together with an occlusion flag per landmark, so
//! both feature modes — occlusion-filtered and unfiltered — are recovered
//! from one payload. Aggregates and tokens are materialized downstream
//! from frozen normalization ranges, keeping shards independent of any
//! training corpus statistics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use vantage_core::features::PerLandmarkFeature;
use vantage_core::geom::Pose;

use crate::config::ThresholdPair;
use crate::error::{HarnessError, Result};
use crate::seeds::Split;

pub const SHARD_MAGIC: &[u8; 4] = b"VGDS";
pub const SHARD_VERSION: u32 = 1;

/// One candidate viewpoint's outcome: where it looked, what it saw, and
/// how localizing from it went.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub waypoint_id: u32,
    pub candidate_index: u32,
    pub position: [f64; 3],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub pos_error_m: f64,
    pub rot_error_deg: f64,
    pub success: bool,
    /// 1 iff both errors are within the configured label threshold.
    pub label: bool,
    /// Raw per-landmark features of every landmark that projects into the
    /// view (the unfiltered mode), index-aligned with `blocked`.
    pub features: Vec<PerLandmarkFeature>,
    /// Whether the sight line to each landmark is occluded; dropping the
    /// blocked rows yields exactly the occlusion-filtered feature set.
    pub blocked: Vec<bool>,
}

impl DatasetRecord {
    pub fn pose(&self) -> Pose {
        Pose::from_yaw_pitch_deg(
            nalgebra::Vector3::new(self.position[0], self.position[1], self.position[2]),
            self.yaw_deg,
            self.pitch_deg,
        )
    }

    /// The feature set for the requested occlusion mode.
    pub fn features_for(&self, occlusion_filter: bool) -> Vec<PerLandmarkFeature> {
        if occlusion_filter {
            self.features
                .iter()
                .zip(&self.blocked)
                .filter(|(_, &b)| !b)
                .map(|(f, _)| f.clone())
                .collect()
        } else {
            self.features.clone()
        }
    }

    /// Whether the stored label agrees with the stored errors at `thr`.
    pub fn label_consistent(&self, thr: &ThresholdPair) -> bool {
        self.label == thr.passes(self.pos_error_m, self.rot_error_deg)
    }
}

/// Sidecar metadata written next to each binary shard. Its presence marks
/// the shard complete; generation skips scenes whose sidecar matches the
/// current configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardMeta {
    pub format_version: u32,
    pub scene_id: String,
    pub split: Split,
    pub scene_index: usize,
    pub scene_seed: u64,
    pub master_seed: u64,
    pub config_hash: String,
    pub d_app: usize,
    pub record_count: u64,
    pub waypoints: usize,
    pub views_per_waypoint: usize,
    pub label_threshold: ThresholdPair,
    pub data_file: String,
    pub data_bytes: u64,
    /// Human-readable description of the binary record layout.
    pub record_layout: Vec<String>,
}

pub fn record_layout_doc(d_app: usize) -> Vec<String> {
    vec![
        "header: magic 'VGDS', u32 version, u32 d_app, u64 record_count; all little-endian".into(),
        "record: u32 waypoint_id, u32 candidate_index, f64[3] position, f64 yaw_deg, f64 pitch_deg, \
         f64 pos_error_m, f64 rot_error_deg, u8 success, u8 label, u32 n_landmarks, rows"
            .into(),
        format!(
            "row: u32 landmark_id, u8 blocked, u8 in_seen_range, f64 distance, f64 view_angle_deg, \
             f64 dist_min, f64 dist_max, f64 ang_min, f64 ang_max, f64 pixel_u, f64 pixel_v, \
             f64 dir_deviation_deg, f64[{d_app}] descriptor"
        ),
    ]
}

fn corrupt(path: &Path, what: &str) -> HarnessError {
    HarnessError::Generation(format!("shard {} is corrupt: {what}", path.display()))
}

/// Write one scene's records to `<dir>/<scene_id>.bin` (atomically, via a
/// temporary file) and return the byte length written.
pub fn write_shard(dir: &Path, scene_id: &str, d_app: usize, records: &[DatasetRecord]) -> Result<u64> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{scene_id}.bin.tmp"));
    let path = dir.join(format!("{scene_id}.bin"));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(SHARD_MAGIC)?;
        w.write_u32::<LittleEndian>(SHARD_VERSION)?;
        w.write_u32::<LittleEndian>(d_app as u32)?;
        w.write_u64::<LittleEndian>(records.len() as u64)?;
        for r in records {
            debug_assert_eq!(r.features.len(), r.blocked.len());
            w.write_u32::<LittleEndian>(r.waypoint_id)?;
            w.write_u32::<LittleEndian>(r.candidate_index)?;
            for &c in &r.position {
                w.write_f64::<LittleEndian>(c)?;
            }
            w.write_f64::<LittleEndian>(r.yaw_deg)?;
            w.write_f64::<LittleEndian>(r.pitch_deg)?;
            w.write_f64::<LittleEndian>(r.pos_error_m)?;
            w.write_f64::<LittleEndian>(r.rot_error_deg)?;
            w.write_u8(u8::from(r.success))?;
            w.write_u8(u8::from(r.label))?;
            w.write_u32::<LittleEndian>(r.features.len() as u32)?;
            for (f, &b) in r.features.iter().zip(&r.blocked) {
                if f.normalized {
                    return Err(HarnessError::Generation(
                        "refusing to store normalized features; shards hold raw values".into(),
                    ));
                }
                if f.descriptor.len() != d_app {
                    return Err(HarnessError::Generation(format!(
                        "descriptor width {} does not match shard d_app {d_app}",
                        f.descriptor.len()
                    )));
                }
                w.write_u32::<LittleEndian>(f.landmark_id)?;
                w.write_u8(u8::from(b))?;
                w.write_u8(u8::from(f.in_seen_range))?;
                for v in [
                    f.distance,
                    f.view_angle_deg,
                    f.dist_min,
                    f.dist_max,
                    f.ang_min,
                    f.ang_max,
                    f.pixel_u,
                    f.pixel_v,
                    f.dir_deviation_deg,
                ] {
                    w.write_f64::<LittleEndian>(v)?;
                }
                for &d in &f.descriptor {
                    w.write_f64::<LittleEndian>(d)?;
                }
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(std::fs::metadata(&path)?.len())
}

/// Read a shard back. Returns the descriptor width and the records.
pub fn read_shard(path: &Path) -> Result<(usize, Vec<DatasetRecord>)> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| HarnessError::Generation(format!("cannot open shard {}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt(path, "truncated header"))?;
    if &magic != SHARD_MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated header"))?;
    if version != SHARD_VERSION {
        return Err(corrupt(path, &format!("unsupported version {version}")));
    }
    let d_app = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated header"))? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(|_| corrupt(path, "truncated header"))?;
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let waypoint_id = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let candidate_index = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let mut position = [0.0; 3];
        for c in &mut position {
            *c = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        }
        let yaw_deg = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let pitch_deg = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let pos_error_m = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let rot_error_deg = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let success = r.read_u8().map_err(|_| corrupt(path, "truncated record"))? != 0;
        let label = r.read_u8().map_err(|_| corrupt(path, "truncated record"))? != 0;
        let n = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated record"))?;
        let mut features = Vec::with_capacity(n as usize);
        let mut blocked = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let landmark_id = r.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated row"))?;
            let b = r.read_u8().map_err(|_| corrupt(path, "truncated row"))? != 0;
            let in_seen_range = r.read_u8().map_err(|_| corrupt(path, "truncated row"))? != 0;
            let mut s = [0.0f64; 9];
            for v in &mut s {
                *v = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated row"))?;
            }
            let mut descriptor = vec![0.0f64; d_app];
            for d in &mut descriptor {
                *d = r.read_f64::<LittleEndian>().map_err(|_| corrupt(path, "truncated row"))?;
            }
            features.push(PerLandmarkFeature {
                landmark_id,
                distance: s[0],
                view_angle_deg: s[1],
                dist_min: s[2],
                dist_max: s[3],
                ang_min: s[4],
                ang_max: s[5],
                pixel_u: s[6],
                pixel_v: s[7],
                dir_deviation_deg: s[8],
                in_seen_range,
                descriptor,
                normalized: false,
            });
            blocked.push(b);
        }
        records.push(DatasetRecord {
            waypoint_id,
            candidate_index,
            position,
            yaw_deg,
            pitch_deg,
            pos_error_m,
            rot_error_deg,
            success,
            label,
            features,
            blocked,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt(path, "trailing bytes"));
    }
    Ok((d_app, records))
}

impl ShardMeta {
    pub fn sidecar_path(dir: &Path, scene_id: &str) -> PathBuf {
        dir.join(format!("{scene_id}.json"))
    }

    pub fn data_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.data_file)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| {
            HarnessError::Generation(format!("cannot serialize shard sidecar: {e}"))
        })?;
        std::fs::write(Self::sidecar_path(dir, &self.scene_id), text)?;
        Ok(())
    }

    pub fn load(dir: &Path, scene_id: &str) -> Result<Self> {
        let path = Self::sidecar_path(dir, scene_id);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Generation(format!("cannot read sidecar {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Generation(format!("sidecar {} is corrupt: {e}", path.display())))
    }

    /// Whether a previously written shard can be reused as-is for the
    /// given configuration state.
    pub fn matches(&self, config_hash: &str, master_seed: u64, dir: &Path) -> bool {
        self.format_version == SHARD_VERSION
            && self.config_hash == config_hash
            && self.master_seed == master_seed
            && std::fs::metadata(self.data_path(dir)).map(|m| m.len()) .ok() == Some(self.data_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(id: u32, seedling: f64, d_app: usize) -> PerLandmarkFeature {
        PerLandmarkFeature {
            landmark_id: id,
            distance: 1.5 + seedling,
            view_angle_deg: 10.0 * seedling,
            dist_min: 0.5,
            dist_max: 6.0,
            ang_min: 2.0,
            ang_max: 40.0,
            pixel_u: 0.25,
            pixel_v: 0.75,
            dir_deviation_deg: 12.5 * seedling,
            in_seen_range: id % 2 == 0,
            descriptor: (0..d_app).map(|i| (i as f64 + seedling) / 10.0).collect(),
            normalized: false,
        }
    }

    fn record(w: u32, c: u32, rows: usize) -> DatasetRecord {
        DatasetRecord {
            waypoint_id: w,
            candidate_index: c,
            position: [1.0, 2.0, 0.5],
            yaw_deg: 33.0,
            pitch_deg: -4.0,
            pos_error_m: if c == 0 { 0.05 } else { f64::INFINITY },
            rot_error_deg: if c == 0 { 0.2 } else { f64::INFINITY },
            success: c == 0,
            label: c == 0,
            features: (0..rows).map(|i| feature(i as u32, i as f64 * 0.3, 4)).collect(),
            blocked: (0..rows).map(|i| i % 3 == 0).collect(),
        }
    }

    #[test]
    fn shard_roundtrip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(0, 0, 5), record(0, 1, 0), record(1, 0, 3)];
        let bytes = write_shard(dir.path(), "train-0", 4, &records).unwrap();
        let (d_app, back) = read_shard(&dir.path().join("train-0.bin")).unwrap();
        assert_eq!(d_app, 4);
        assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a, b);
            // Infinite errors survive the roundtrip bit-exactly.
            assert_eq!(a.pos_error_m.to_bits(), b.pos_error_m.to_bits());
        }
        // Rewriting produces byte-identical output.
        let again = write_shard(dir.path(), "copy", 4, &records).unwrap();
        assert_eq!(bytes, again);
        let b1 = std::fs::read(dir.path().join("train-0.bin")).unwrap();
        let b2 = std::fs::read(dir.path().join("copy.bin")).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn occlusion_modes_recover_from_one_payload() {
        let r = record(2, 0, 6);
        let unf = r.features_for(false);
        let fil = r.features_for(true);
        assert_eq!(unf.len(), 6);
        assert_eq!(fil.len(), 4); // rows 0 and 3 are blocked
        assert!(fil.iter().all(|f| {
            let i = r.features.iter().position(|g| g == f).unwrap();
            !r.blocked[i]
        }));
    }

    #[test]
    fn label_consistency_is_re_derivable() {
        let thr = ThresholdPair::new(0.1, 1.0);
        let good = record(0, 0, 1);
        let failed = record(0, 1, 1);
        assert!(good.label_consistent(&thr));
        assert!(failed.label_consistent(&thr));
        let mut lying = good.clone();
        lying.label = false;
        assert!(!lying.label_consistent(&thr));
    }

    #[test]
    fn corrupt_shards_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_shard(dir.path(), "s", 4, &[record(0, 0, 2)]).unwrap();
        let path = dir.path().join("s.bin");

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_shard(&path), Err(HarnessError::Generation(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'V';
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_shard(&path), Err(HarnessError::Generation(_))));

        bytes.pop();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_shard(&path), Err(HarnessError::Generation(_))));
    }

    #[test]
    fn sidecar_matching_guards_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(0, 0, 2)];
        let bytes = write_shard(dir.path(), "train-1", 4, &records).unwrap();
        let meta = ShardMeta {
            format_version: SHARD_VERSION,
            scene_id: "train-1".into(),
            split: Split::Train,
            scene_index: 1,
            scene_seed: 99,
            master_seed: 7,
            config_hash: "abcd".into(),
            d_app: 4,
            record_count: 1,
            waypoints: 1,
            views_per_waypoint: 1,
            label_threshold: ThresholdPair::new(0.1, 1.0),
            data_file: "train-1.bin".into(),
            data_bytes: bytes,
            record_layout: record_layout_doc(4),
        };
        meta.save(dir.path()).unwrap();
        let loaded = ShardMeta::load(dir.path(), "train-1").unwrap();
        assert_eq!(loaded, meta);
        assert!(loaded.matches("abcd", 7, dir.path()));
        assert!(!loaded.matches("ffff", 7, dir.path()));
        assert!(!loaded.matches("abcd", 8, dir.path()));
        std::fs::remove_file(dir.path().join("train-1.bin")).unwrap();
        assert!(!loaded.matches("abcd", 7, dir.path()));
    }
}
