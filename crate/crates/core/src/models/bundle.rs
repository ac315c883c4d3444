//! Versioned binary container for model bundles and intermediate artifacts.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "FITFORGE"
//! version  u32
//! mlen     u64      manifest length in bytes
//! manifest mlen bytes of UTF-8 JSON
//! count    u64      number of f64 payload values
//! payload  count × f64 (IEEE 754, little-endian)
//! sha256   32 bytes over everything above
//! ```
//!
//! The manifest is `{"kind": K, "value": V}` where `V` is the JSON form of the
//! stored value with every array made only of floating-point numbers replaced
//! by `{"$f64": [offset, len]}` pointing into the payload, so parameters
//! round-trip bit for bit. Model bundles have kind `model-bundle`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use super::distance::DistanceModel;
use super::features::ContextLayout;
use super::pipeline::PipelineConfig;
use super::sequence::SequenceModel;
use crate::cluster::ClusterModel;
use crate::data::{Gender, NormStats, Sport};
use crate::error::{FitError, Result};
use crate::nn::Params;
use crate::tensor::{CoreConsistencyReport, CpFactors, Embeddings};

pub const BUNDLE_MAGIC: &[u8; 8] = b"FITFORGE";
pub const BUNDLE_VERSION: u32 = 1;
pub const BUNDLE_KIND: &str = "model-bundle";
const REF_KEY: &str = "$f64";

/// A stored workout route offered for recommendations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub route_id: String,
    pub cluster: usize,
    pub sport: Sport,
    pub distance_km: f64,
    pub altitude_seq: Vec<f64>,
    pub distance_seq: Vec<f64>,
}

/// Everything needed to serve recommendations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub sequence_length: usize,
    pub config: PipelineConfig,
    pub clusters: ClusterModel,
    pub factors: CpFactors,
    pub rank_report: CoreConsistencyReport,
    pub embeddings: Embeddings,
    pub stats: NormStats,
    pub layout: ContextLayout,
    pub distance: DistanceModel,
    pub sequence: SequenceModel,
    pub routes: Vec<RouteEntry>,
    /// Recorded gender per user; used only as a model input, never served.
    pub user_gender: BTreeMap<String, Gender>,
}

impl ModelBundle {
    pub fn route(&self, route_id: &str) -> Result<&RouteEntry> {
        self.routes
            .iter()
            .find(|r| r.route_id == route_id)
            .ok_or_else(|| FitError::NotFound { kind: "route", id: route_id.to_string() })
    }

    pub fn rank(&self) -> usize {
        self.layout.rank
    }

    /// True when every learned parameter is a finite number.
    pub fn all_finite(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        self.distance.mlp.all_finite()
            && self.sequence.net.all_finite()
            && finite(self.factors.a.as_slice())
            && finite(self.factors.b.as_slice())
            && finite(self.factors.c.as_slice())
            && finite(&self.factors.lambda)
            && finite(&self.embeddings.users)
            && finite(&self.embeddings.routes)
            && self.clusters.centroids.iter().all(|c| finite(c))
    }
}

fn is_float_array(items: &[Value]) -> bool {
    !items.is_empty() && items.iter().all(|v| matches!(v, Value::Number(n) if n.is_f64()))
}

fn extract(value: Value, payload: &mut Vec<f64>) -> Value {
    match value {
        Value::Array(items) if is_float_array(&items) => {
            let offset = payload.len();
            payload.extend(items.iter().map(|v| v.as_f64().expect("checked float")));
            let mut m = Map::new();
            m.insert(REF_KEY.into(), Value::Array(vec![offset.into(), items.len().into()]));
            Value::Object(m)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(|v| extract(v, payload)).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, extract(v, payload))).collect()),
        other => other,
    }
}

fn restore(value: Value, payload: &[f64]) -> Result<Value> {
    match value {
        Value::Object(m) if m.len() == 1 && m.contains_key(REF_KEY) => {
            let bad = || FitError::Checksum("malformed payload reference".into());
            let span = m[REF_KEY].as_array().ok_or_else(bad)?;
            let (off, len) = match span.as_slice() {
                [a, b] => (a.as_u64().ok_or_else(bad)? as usize, b.as_u64().ok_or_else(bad)? as usize),
                _ => return Err(bad()),
            };
            let slice = payload.get(off..off.checked_add(len).ok_or_else(bad)?).ok_or_else(bad)?;
            Ok(Value::Array(
                slice
                    .iter()
                    .map(|&v| Number::from_f64(v).map(Value::Number).ok_or_else(bad))
                    .collect::<Result<_>>()?,
            ))
        }
        Value::Object(m) => Ok(Value::Object(
            m.into_iter().map(|(k, v)| Ok((k, restore(v, payload)?))).collect::<Result<_>>()?,
        )),
        Value::Array(items) => Ok(Value::Array(
            items.into_iter().map(|v| restore(v, payload)).collect::<Result<_>>()?,
        )),
        other => Ok(other),
    }
}

/// Serializes `value` under `kind` to the layout described in the module docs.
pub fn encode_artifact<T: Serialize>(kind: &str, value: &T) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut top = Map::new();
    top.insert("kind".into(), Value::String(kind.into()));
    top.insert("value".into(), extract(serde_json::to_value(value)?, &mut payload));
    let manifest = serde_json::to_vec(&Value::Object(top))?;
    let mut out = Vec::with_capacity(8 + 4 + 8 + manifest.len() + 8 + 8 * payload.len() + 32);
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in &payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FitError::Checksum("bundle is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses and verifies container bytes holding a value of `kind`.
pub fn decode_artifact<T: serde::de::DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<T> {
    if bytes.len() < 8 + 4 + 32 || &bytes[..8] != BUNDLE_MAGIC {
        return Err(FitError::Checksum("not a model bundle (bad magic header)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != BUNDLE_VERSION {
        return Err(FitError::VersionMismatch { found: version, expected: BUNDLE_VERSION });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(FitError::Checksum("bundle checksum does not match its contents".into()));
    }
    let mut r = Reader { bytes: body, pos: 12 };
    let mlen = r.u64()? as usize;
    let manifest = r.take(mlen)?;
    let count = r.u64()? as usize;
    let raw = r.take(count.checked_mul(8).ok_or_else(|| FitError::Checksum("payload size".into()))?)?;
    if r.pos != body.len() {
        return Err(FitError::Checksum("trailing bytes after payload".into()));
    }
    let payload: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut top: Map<String, Value> = serde_json::from_slice(manifest)?;
    let found = top.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    if found != kind {
        return Err(FitError::InvalidArgument(format!("file holds a {found:?}, expected a {kind:?}")));
    }
    let value = top.remove("value").unwrap_or(Value::Null);
    Ok(serde_json::from_value(restore(value, &payload)?)?)
}

pub fn save_artifact<T: Serialize>(kind: &str, value: &T, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_artifact(kind, value)?)?;
    Ok(())
}

pub fn load_artifact<T: serde::de::DeserializeOwned>(kind: &str, path: impl AsRef<Path>) -> Result<T> {
    decode_artifact(kind, &std::fs::read(path)?)
}

pub fn encode_bundle(bundle: &ModelBundle) -> Result<Vec<u8>> {
    if !bundle.all_finite() {
        return Err(FitError::NonFinite("bundle parameters".into()));
    }
    encode_artifact(BUNDLE_KIND, bundle)
}

pub fn decode_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    decode_artifact(BUNDLE_KIND, bytes)
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    save_artifact(BUNDLE_KIND, bundle, path)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    load_artifact(BUNDLE_KIND, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_arrays_move_to_payload_and_back() {
        let v = serde_json::json!({
            "dims": [3, 4],
            "w": [0.1, -2.5, 1e-300],
            "nested": [[1.5, 2.0], []],
            "name": "x",
        });
        let mut payload = Vec::new();
        let m = extract(v.clone(), &mut payload);
        // keys are visited in sorted order: "nested" before "w"
        assert_eq!(payload, vec![1.5, 2.0, 0.1, -2.5, 1e-300]);
        assert_eq!(m["dims"], serde_json::json!([3, 4]));
        assert_eq!(m["w"], serde_json::json!({"$f64": [2, 3]}));
        assert_eq!(restore(m, &payload).unwrap(), v);
    }

    #[test]
    fn bad_references_are_rejected() {
        let m = serde_json::json!({"w": {"$f64": [2, 5]}});
        assert!(restore(m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn artifact_round_trip_and_kind_check() {
        let v: Vec<(String, Vec<f64>)> = vec![("a".into(), vec![0.1 + 0.2, -0.0, f64::MIN_POSITIVE])];
        let bytes = encode_artifact("thing", &v).unwrap();
        let back: Vec<(String, Vec<f64>)> = decode_artifact("thing", &bytes).unwrap();
        assert_eq!(back[0].1[0].to_bits(), v[0].1[0].to_bits());
        assert_eq!(back[0].1[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, v);
        assert!(decode_artifact::<Vec<(String, Vec<f64>)>>("other", &bytes).is_err());
        let mut tampered = bytes.clone();
        let k = tampered.len() - 40;
        tampered[k] ^= 1;
        assert!(matches!(decode_artifact::<Vec<(String, Vec<f64>)>>("thing", &tampered), Err(FitError::Checksum(_))));
        let mut old = bytes;
        old[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_artifact::<Vec<(String, Vec<f64>)>>("thing", &old),
            Err(FitError::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(decode_bundle(b"NOTABUNDLE0000000000000000000000000000000000000"), Err(FitError::Checksum(_))));
        assert!(matches!(decode_bundle(b"FITFORGE"), Err(FitError::Checksum(_))));
    }
}
