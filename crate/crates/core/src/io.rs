//! Dataset and checkpoint files.
//!
//! A dataset is a directory with three files:
//!
//! - `manifest.json`: [`DatasetManifest`];
//! - `metadata.jsonl`: one [`PathRecord`] per reasoning path;
//! - `features.bin`: little-endian `f32` rows of length `feature_dim`,
//!   row-major, addressed by the `pos_row` / `neg_row` of each record.
//!
//! A checkpoint is a single little-endian binary file, see
//! [`write_checkpoint`]. Every write goes to a temporary name in the target
//! directory and is renamed into place.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::answer::AnswerKey;
use crate::error::{Error, Result};
use crate::model::{VerifierModel, Widths};
use crate::trainer::{OptimizerState, TrainedVerifier};
use crate::types::{dataset_dim, group_by_answer, AssertionPair, FeatureVector, NormalizationMode, NormalizationStats, QuestionInstance};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LVRFCKPT";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "metadata.jsonl";
pub const FEATURES_FILE: &str = "features.bin";

pub const DEFAULT_TEMPLATE_POS: &str = "This is a true answer.";
pub const DEFAULT_TEMPLATE_NEG: &str = "This is a false answer.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Decoding {
    NaturalCot { branches: usize },
    Temperature { temperature: f64, samples: usize },
    Beam { width: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceAggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub feature_dim: usize,
    pub pair_count: usize,
    pub model_name: String,
    pub layer_index: i64,
    pub template_pos: String,
    pub template_neg: String,
    /// Joins question, solution and template when building assertions.
    #[serde(default = "default_separator")]
    pub separator: String,
    pub decoding: Decoding,
    pub confidence_aggregation: ConfidenceAggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationStats>,
    #[serde(default)]
    pub creation: BTreeMap<String, serde_json::Value>,
}

fn default_separator() -> String {
    " ".to_string()
}

impl DatasetManifest {
    /// Manifest describing `instances` with default templates.
    pub fn for_instances(instances: &[QuestionInstance], model_name: impl Into<String>) -> Result<Self> {
        let feature_dim = dataset_dim(instances)?;
        let branches = instances.iter().map(|q| q.num_paths()).max().unwrap_or(0);
        Ok(DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            feature_dim,
            pair_count: instances.iter().map(|q| q.num_paths()).sum(),
            model_name: model_name.into(),
            layer_index: 0,
            template_pos: DEFAULT_TEMPLATE_POS.to_string(),
            template_neg: DEFAULT_TEMPLATE_NEG.to_string(),
            separator: default_separator(),
            decoding: Decoding::NaturalCot { branches },
            confidence_aggregation: ConfidenceAggregation::Mean,
            normalization: None,
            creation: BTreeMap::new(),
        })
    }

    pub fn blob_len(&self) -> u64 {
        self.pair_count as u64 * self.feature_dim as u64 * 2 * 4
    }
}

/// One line of `metadata.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub question_id: String,
    pub path_index: usize,
    pub answer_key: AnswerKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    pub pos_row: u64,
    pub neg_row: u64,
}

fn tmp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

/// Write `bytes` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("in-memory serialization cannot fail")
}

pub fn write_dataset(dir: &Path, instances: &[QuestionInstance], manifest: &DatasetManifest) -> Result<()> {
    let dim = dataset_dim(instances)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::VersionUnsupported(manifest.format_version));
    }
    if manifest.feature_dim != dim {
        return Err(Error::InconsistentManifest(format!(
            "feature_dim {} but data has {dim}",
            manifest.feature_dim
        )));
    }
    let pairs: usize = instances.iter().map(|q| q.num_paths()).sum();
    if manifest.pair_count != pairs {
        return Err(Error::InconsistentManifest(format!(
            "pair_count {} but data has {pairs}",
            manifest.pair_count
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut blob = Vec::with_capacity(manifest.blob_len() as usize);
    let mut meta = Vec::new();
    let mut row = 0u64;
    for q in instances {
        for p in q.pairs() {
            for v in p.pos.values().iter().chain(p.neg.values()) {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            let rec = PathRecord {
                question_id: p.question_id.clone(),
                path_index: p.path_index,
                answer_key: p.answer.clone(),
                answer_confidence: p.answer_confidence,
                gold_label: p.gold_label,
                gold_answer: q.gold_answer().map(str::to_string),
                pos_row: row,
                neg_row: row + 1,
            };
            meta.extend(to_json(&rec));
            meta.push(b'\n');
            row += 2;
        }
    }
    write_atomic(&dir.join(FEATURES_FILE), &blob)?;
    write_atomic(&dir.join(METADATA_FILE), &meta)?;
    let mut manifest_bytes = serde_json::to_vec_pretty(manifest).expect("in-memory serialization cannot fail");
    manifest_bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &manifest_bytes)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let version = raw.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Malformed {
        path: path.clone(),
        message: "missing format_version".into(),
    })?;
    if version != u64::from(DATASET_FORMAT_VERSION) {
        return Err(Error::VersionUnsupported(version.min(u64::from(u32::MAX)) as u32));
    }
    serde_json::from_value(raw).map_err(|e| Error::Malformed {
        path,
        message: e.to_string(),
    })
}

/// Read and validate a dataset directory. Questions come back in order of
/// first appearance in the metadata.
pub fn read_dataset(dir: &Path) -> Result<(Vec<QuestionInstance>, DatasetManifest)> {
    let manifest = read_manifest(dir)?;
    let d = manifest.feature_dim;
    if d == 0 {
        return Err(Error::InconsistentManifest("feature_dim must be >= 1".into()));
    }

    let blob_path = dir.join(FEATURES_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if blob.len() as u64 != manifest.blob_len() {
        return Err(Error::BlobSizeMismatch {
            expected: manifest.blob_len(),
            actual: blob.len() as u64,
        });
    }
    let rows = manifest.pair_count as u64 * 2;
    let read_row = |row: u64| -> Result<FeatureVector> {
        if row >= rows {
            return Err(Error::BadRowIndex { row, rows });
        }
        let start = row as usize * d * 4;
        let values = blob[start..start + d * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        FeatureVector::new(values)
    };

    let meta_path = dir.join(METADATA_FILE);
    let file = fs::File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_question: HashMap<String, (Vec<AssertionPair>, Option<String>)> = HashMap::new();
    let mut count = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&meta_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PathRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: meta_path.clone(),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        count += 1;
        let mut pair = AssertionPair::new(
            rec.question_id.clone(),
            rec.path_index,
            read_row(rec.pos_row)?,
            read_row(rec.neg_row)?,
            rec.answer_key,
        )?;
        if let Some(c) = rec.answer_confidence {
            pair = pair.with_confidence(c)?;
        }
        pair.gold_label = rec.gold_label;
        let entry = by_question.entry(rec.question_id.clone()).or_insert_with(|| {
            order.push(rec.question_id.clone());
            (Vec::new(), None)
        });
        entry.0.push(pair);
        if entry.1.is_none() {
            entry.1 = rec.gold_answer;
        }
    }
    if count != manifest.pair_count {
        return Err(Error::InconsistentManifest(format!(
            "pair_count {} but metadata has {count} records",
            manifest.pair_count
        )));
    }

    let instances = order
        .into_iter()
        .map(|qid| {
            let (pairs, gold) = by_question.remove(&qid).expect("recorded on insert");
            let q = group_by_answer(pairs)?;
            Ok(match gold {
                Some(g) => q.with_gold_answer(g),
                None => q,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((instances, manifest))
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a checkpoint:
///
/// ```text
/// magic "LVRFCKPT" | u32 version | u32 d | u32 h1 | u32 h2 | u64 n_params
/// f64 x n_params
/// u8 normalization (0 none, 1 center-scale) [+ f64 x d pos_mean, neg_mean, scale]
/// u8 has_optimizer [+ u64 t, f64 x n_params m, f64 x n_params v]
/// ```
pub fn encode_checkpoint(verifier: &TrainedVerifier, optimizer: Option<&OptimizerState>) -> Result<Vec<u8>> {
    let model = &verifier.model;
    let w = model.widths();
    let mut buf = Vec::with_capacity(64 + model.param_count() * 8 * 3);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    for dim in [w.input, w.hidden1, w.hidden2] {
        put_u32(&mut buf, dim as u32);
    }
    put_u64(&mut buf, model.param_count() as u64);
    put_f64s(&mut buf, model.params());

    let stats = &verifier.normalization;
    match stats.mode {
        NormalizationMode::None => buf.push(0),
        NormalizationMode::PerTemplateCenterScale => {
            if stats.scale.len() != w.input || stats.pos_mean.len() != w.input || stats.neg_mean.len() != w.input {
                return Err(Error::DimMismatch {
                    expected: w.input,
                    actual: stats.scale.len(),
                });
            }
            buf.push(1);
            put_f64s(&mut buf, &stats.pos_mean);
            put_f64s(&mut buf, &stats.neg_mean);
            put_f64s(&mut buf, &stats.scale);
        }
    }
    match optimizer {
        None => buf.push(0),
        Some(state) => {
            if state.m.len() != model.param_count() || state.v.len() != model.param_count() {
                return Err(Error::ShapeMismatch {
                    expected: model.param_count(),
                    actual: state.m.len(),
                });
            }
            buf.push(1);
            put_u64(&mut buf, state.t);
            put_f64s(&mut buf, &state.m);
            put_f64s(&mut buf, &state.v);
        }
    }
    Ok(buf)
}

pub fn write_checkpoint(path: &Path, verifier: &TrainedVerifier, optimizer: Option<&OptimizerState>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(verifier, optimizer)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::ShapeCorruption(format!("truncated while reading {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::ShapeCorruption(format!("{what} length overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TrainedVerifier, Option<OptimizerState>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::ShapeCorruption("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let d = c.u32("input width")? as usize;
    let h1 = c.u32("hidden1 width")? as usize;
    let h2 = c.u32("hidden2 width")? as usize;
    let widths = Widths::new(d, h1, h2).map_err(|_| Error::ShapeCorruption(format!("widths ({d}, {h1}, {h2})")))?;
    let n = c.u64("parameter count")?;
    if n != widths.param_count() as u64 {
        return Err(Error::ShapeCorruption(format!(
            "parameter count {n} does not match widths ({d}, {h1}, {h2})"
        )));
    }
    let n = n as usize;
    let params = c.f64s(n, "parameters")?;
    let model = VerifierModel::from_params(widths, params)?;

    let normalization = match c.u8("normalization tag")? {
        0 => NormalizationStats::identity(),
        1 => NormalizationStats {
            mode: NormalizationMode::PerTemplateCenterScale,
            pos_mean: c.f64s(d, "positive mean")?,
            neg_mean: c.f64s(d, "negative mean")?,
            scale: c.f64s(d, "scale")?,
        },
        t => return Err(Error::ShapeCorruption(format!("unknown normalization tag {t}"))),
    };
    let optimizer = match c.u8("optimizer tag")? {
        0 => None,
        1 => {
            let t = c.u64("step counter")?;
            let m = c.f64s(n, "first moments")?;
            let v = c.f64s(n, "second moments")?;
            Some(OptimizerState { m, v, t })
        }
        t => return Err(Error::ShapeCorruption(format!("unknown optimizer tag {t}"))),
    };
    if c.pos != bytes.len() {
        return Err(Error::ShapeCorruption(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::ShapeCorruption("non-finite parameter".into()));
    }
    Ok((TrainedVerifier { model, normalization }, optimizer))
}

pub fn read_checkpoint(path: &Path) -> Result<(TrainedVerifier, Option<OptimizerState>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn data() -> Vec<QuestionInstance> {
        generate(&SyntheticSpec {
            dim: 4,
            questions: 3,
            paths: 2,
            groups: crate::synthetic::GroupLayout {
                min_groups: 1,
                max_groups: 2,
                balanced: false,
            },
            minority_correct_rate: 0.0,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn blob_size_law() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        let m = DatasetManifest::for_instances(&d, "synthetic").unwrap();
        assert_eq!(m.pair_count, 6);
        write_dataset(dir.path(), &d, &m).unwrap();
        // 6 pairs at d = 4: 6 * 4 * 2 * 4 bytes.
        assert_eq!(fs::metadata(dir.path().join(FEATURES_FILE)).unwrap().len(), 192);
        assert_eq!(m.blob_len(), 192);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        let m = DatasetManifest::for_instances(&d, "synthetic").unwrap();
        write_dataset(dir.path(), &d, &m).unwrap();
        let (back, m2) = read_dataset(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(m2, m);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        write_dataset(dir.path(), &d, &DatasetManifest::for_instances(&d, "s").unwrap()).unwrap();
        let path = dir.path().join(FEATURES_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::BlobSizeMismatch { expected, actual }) => {
                assert_eq!((expected, actual), (192, 188));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_row_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        write_dataset(dir.path(), &d, &DatasetManifest::for_instances(&d, "s").unwrap()).unwrap();
        let meta = dir.path().join(METADATA_FILE);
        let text = fs::read_to_string(&meta).unwrap();
        fs::write(&meta, text.replacen("\"pos_row\":0", "\"pos_row\":12", 1)).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::BadRowIndex { row: 12, rows: 12 })
        ));

        let man = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&man).unwrap();
        fs::write(&man, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::VersionUnsupported(7))));
    }

    #[test]
    fn inconsistent_manifest_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        let mut m = DatasetManifest::for_instances(&d, "s").unwrap();
        m.pair_count += 1;
        assert!(matches!(
            write_dataset(dir.path(), &d, &m),
            Err(Error::InconsistentManifest(_))
        ));
    }

    #[test]
    fn manifest_defaults() {
        let m = DatasetManifest::for_instances(&data(), "s").unwrap();
        assert_eq!(m.template_pos, "This is a true answer.");
        assert_eq!(m.template_neg, "This is a false answer.");
    }

    fn verifier() -> TrainedVerifier {
        TrainedVerifier {
            model: VerifierModel::init(3, 4, 2, 7).unwrap(),
            normalization: NormalizationStats {
                mode: NormalizationMode::PerTemplateCenterScale,
                pos_mean: vec![0.1, 0.2, 0.3],
                neg_mean: vec![-0.1, 0.0, 1.0],
                scale: vec![1.0, 2.0, 1e-6],
            },
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let v = verifier();
        let opt = OptimizerState {
            m: vec![0.5; v.model.param_count()],
            v: vec![0.25; v.model.param_count()],
            t: 9,
        };
        let bytes = encode_checkpoint(&v, Some(&opt)).unwrap();
        let (back, back_opt) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, v);
        assert_eq!(back_opt, Some(opt));

        let bare = encode_checkpoint(&v, None).unwrap();
        assert_eq!(decode_checkpoint(&bare).unwrap().1, None);
    }

    #[test]
    fn tampered_width_is_corruption() {
        let mut bytes = encode_checkpoint(&verifier(), None).unwrap();
        // hidden1 width lives at offset 16.
        bytes[16] = 5;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::ShapeCorruption(_))));

        let mut bytes = encode_checkpoint(&verifier(), None).unwrap();
        bytes.push(0);
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::ShapeCorruption(_))));

        let mut bytes = encode_checkpoint(&verifier(), None).unwrap();
        bytes[8] = 2;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::VersionUnsupported(2))));
    }

    #[test]
    fn checkpoint_file_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let fresh = TrainedVerifier {
            model: VerifierModel::init(4, 6, 3, 11).unwrap(),
            normalization: NormalizationStats::identity(),
        };
        write_checkpoint(&path, &fresh, None).unwrap();
        let (back, _) = read_checkpoint(&path).unwrap();
        for q in data() {
            assert_eq!(back.score(&q).unwrap(), fresh.score(&q).unwrap());
        }
        assert!(!tmp_path(&path).exists());
    }
}
