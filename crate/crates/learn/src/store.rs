//! Single-file parameter artifact: a small JSON header (architecture,
//! feature schema + hash, normalization ranges, label threshold, training
//! config, tensor directory) followed by the tensor data as little-endian
//! `f64` in row-major order, in directory order. Writing is deterministic:
//! identical parameters and metadata produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use vantage_core::features::{schema_hash, NormRanges};

use crate::error::LearnError;
use crate::graph::Value;
use crate::mlp::MlpParams;
use crate::train::{Arch, TrainConfig, TrainedParams};
use crate::vpt::VptParams;
use crate::Result;

pub const STORE_MAGIC: &[u8; 8] = b"VPSTORE1";
pub const STORE_VERSION: u32 = 1;

/// Upper bound on the JSON header; a corrupt length field fails fast
/// instead of attempting a giant allocation.
const MAX_META_BYTES: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: u64,
    pub cols: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format_version: u32,
    pub arch: Arch,
    /// Human-readable feature schema the model was trained against.
    pub feature_schema: String,
    pub feature_schema_hash: u64,
    pub norm_ranges: NormRanges,
    pub threshold_pos_m: f64,
    pub threshold_rot_deg: f64,
    pub train: TrainConfig,
    /// Tensor directory in file order (sorted by name).
    pub tensors: Vec<TensorMeta>,
}

/// A trained scorer plus everything inference needs to reproduce its
/// feature pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub meta: StoreMeta,
    pub params: TrainedParams,
}

impl ParamStore {
    pub fn new(
        params: TrainedParams,
        feature_schema: String,
        norm_ranges: NormRanges,
        threshold: (f64, f64),
        train: TrainConfig,
    ) -> Self {
        let mut tensors: Vec<TensorMeta> = params
            .named_tensors()
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.clone(),
                rows: t.nrows() as u64,
                cols: t.ncols() as u64,
            })
            .collect();
        tensors.sort_by(|a, b| a.name.cmp(&b.name));
        let meta = StoreMeta {
            format_version: STORE_VERSION,
            arch: params.arch(),
            feature_schema_hash: schema_hash(&feature_schema),
            feature_schema,
            norm_ranges,
            threshold_pos_m: threshold.0,
            threshold_rot_deg: threshold.1,
            train,
            tensors,
        };
        ParamStore { meta, params }
    }

    /// Error unless the model was trained against exactly this feature
    /// schema.
    pub fn check_schema(&self, expected_schema: &str) -> Result<()> {
        if self.meta.feature_schema_hash != schema_hash(expected_schema) {
            return Err(LearnError::Schema(format!(
                "model was trained against schema '{}', input uses '{}'",
                self.meta.feature_schema, expected_schema
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let by_name: BTreeMap<String, &Value> = self.params.named_tensors().into_iter().collect();
        let meta_json = serde_json::to_string(&self.meta)?;
        w.write_all(STORE_MAGIC)?;
        w.write_u32::<LittleEndian>(meta_json.len() as u32)?;
        w.write_all(meta_json.as_bytes())?;
        for t in &self.meta.tensors {
            let m = by_name
                .get(&t.name)
                .ok_or_else(|| LearnError::Serialization(format!("directory lists unknown tensor {}", t.name)))?;
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_f64::<LittleEndian>(m[(r, c)])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(LearnError::Serialization("bad magic; not a parameter file".into()));
        }
        let meta_len = r.read_u32::<LittleEndian>()?;
        if meta_len == 0 || meta_len > MAX_META_BYTES {
            return Err(LearnError::Serialization(format!("implausible header length {meta_len}")));
        }
        let mut meta_bytes = vec![0u8; meta_len as usize];
        r.read_exact(&mut meta_bytes)?;
        let meta: StoreMeta = serde_json::from_slice(&meta_bytes)?;
        if meta.format_version != STORE_VERSION {
            return Err(LearnError::Serialization(format!(
                "unsupported parameter format version {}",
                meta.format_version
            )));
        }
        if schema_hash(&meta.feature_schema) != meta.feature_schema_hash {
            return Err(LearnError::Serialization("schema hash does not match schema text".into()));
        }

        let mut tensors: BTreeMap<String, Value> = BTreeMap::new();
        for t in &meta.tensors {
            let (rows, cols) = (t.rows as usize, t.cols as usize);
            if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 100_000_000 {
                return Err(LearnError::Serialization(format!(
                    "implausible tensor shape {}x{} for {}",
                    t.rows, t.cols, t.name
                )));
            }
            let mut m = Value::zeros(rows, cols);
            for r_i in 0..rows {
                for c_i in 0..cols {
                    m[(r_i, c_i)] = r.read_f64::<LittleEndian>()?;
                }
            }
            if tensors.insert(t.name.clone(), m).is_some() {
                return Err(LearnError::Serialization(format!("duplicate tensor {}", t.name)));
            }
        }

        let params = match meta.arch {
            Arch::Mlp => TrainedParams::Mlp(MlpParams::from_named(|n| tensors.remove(n))?),
            Arch::Vpt => {
                TrainedParams::Vpt(VptParams::from_named(meta.train.vpt, |n| tensors.remove(n))?)
            }
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(LearnError::Serialization(format!("unexpected tensor {extra}")));
        }
        Ok(ParamStore { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let store = Self::read_from(&mut r)?;
        // Trailing garbage means the file is not what we wrote.
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(LearnError::Serialization("trailing bytes after tensor data".into()));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vpt::VptConfig;
    use vantage_core::features::{aggregate_schema, token_schema, AggregateShape};
    use vantage_core::rng::derive_rng;

    fn ranges() -> NormRanges {
        NormRanges {
            distance: [0.1234567890123457, 9.87654321e2],
            view_angle: [0.0, 38.7],
            dist_min: [0.3, 7.7],
            dist_max: [0.9, 13.1],
            ang_min: [0.0, 21.5],
            ang_max: [0.0, 44.2],
            dir_deviation: [0.0, 173.2],
            dist_margin_lo: [-2.5, 6.1],
            dist_margin_hi: [-3.0, 9.4],
            ang_margin_lo: [-50.0, 120.0],
            ang_margin_hi: [-60.0, 130.0],
            hist_cell_max: 41.0,
            heat_cell_max: 17.0,
            seen_count_max: 123.0,
        }
    }

    fn mlp_store() -> ParamStore {
        let mut rng = derive_rng(31, &[70]);
        let params = MlpParams::init(12, (6, 5), &mut rng);
        ParamStore::new(
            TrainedParams::Mlp(params),
            aggregate_schema(&AggregateShape::default()),
            ranges(),
            (0.1, 1.0),
            TrainConfig::default_for(Arch::Mlp),
        )
    }

    fn vpt_store() -> ParamStore {
        let mut rng = derive_rng(32, &[71]);
        let config = VptConfig { token_dim: 12, d_model: 8, n_heads: 2, d_ff: 10, n_blocks: 2, n_max: 16 };
        let params = VptParams::init(config, &mut rng).unwrap();
        let train = TrainConfig { vpt: config, ..TrainConfig::default_for(Arch::Vpt) };
        ParamStore::new(TrainedParams::Vpt(params), token_schema(4), ranges(), (0.1, 1.0), train)
    }

    #[test]
    fn mlp_roundtrip_is_exact() {
        let store = mlp_store();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let back = ParamStore::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(store, back);
    }

    #[test]
    fn vpt_roundtrip_is_exact() {
        let store = vpt_store();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let back = ParamStore::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(store, back);
        assert_eq!(back.meta.norm_ranges, ranges());
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let store = vpt_store();
        let mut a = Vec::new();
        let mut b = Vec::new();
        store.write_to(&mut a).unwrap();
        store.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let store = mlp_store();
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xff;
        assert!(ParamStore::read_from(&mut bad_magic.as_slice()).is_err());

        let truncated = &bytes[..bytes.len() - 9];
        assert!(ParamStore::read_from(&mut &truncated[..]).is_err());

        // Flip a byte inside the JSON header.
        let mut bad_meta = bytes.clone();
        bad_meta[14] = b'\x01';
        assert!(ParamStore::read_from(&mut bad_meta.as_slice()).is_err());
    }

    #[test]
    fn schema_check_distinguishes_models() {
        let store = mlp_store();
        assert!(store.check_schema(&aggregate_schema(&AggregateShape::default())).is_ok());
        assert!(store.check_schema(&token_schema(8)).is_err());
    }

    #[test]
    fn save_load_via_file() {
        let dir = std::env::temp_dir().join("vantage-learn-store-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.vps");
        let store = vpt_store();
        store.save(&path).unwrap();
        let back = ParamStore::load(&path).unwrap();
        assert_eq!(store, back);
        std::fs::remove_file(&path).ok();
    }
}
