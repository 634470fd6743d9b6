//! Feature vectors for one `(graph, workload, old storage, new storage)` tuple.
//!
//! Layout is frozen: `[dataset | workload | old storage | new storage]`,
//! right-padded with [`PAD_VALUE`]. Reordering any block breaks every
//! corpus and parameter file written so far.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{AaeError, Result};
use crate::graphmodel::{GraphStats, OperationKind, WorkloadProfile};

pub const DEFAULT_MAX_LEN: usize = 256;
pub const PAD_VALUE: f64 = -1.0;
/// Fixed-width prefix of the dataset block before per-property cardinalities.
pub const DATASET_HEADER_LEN: usize = 6;
pub const ENGINE_SLOTS: usize = 2;
/// Significant digits kept in assembled vectors and corpus files.
pub const VECTOR_SIG_DIGITS: usize = 12;

/// Base storage schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    NativeGraph,
    Columnar,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::NativeGraph => "native-graph",
            Engine::Columnar => "columnar",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Engine::NativeGraph => Engine::Columnar,
            Engine::Columnar => Engine::NativeGraph,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Engine {
    type Err = AaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native-graph" => Ok(Engine::NativeGraph),
            "columnar" => Ok(Engine::Columnar),
            other => Err(AaeError::Config(format!("unknown engine '{other}'"))),
        }
    }
}

/// Storage engine plus one index bit per property.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StorageConfig {
    pub engine: Engine,
    pub index_bits: Vec<bool>,
}

impl StorageConfig {
    pub fn new(engine: Engine, index_bits: Vec<bool>) -> Self {
        StorageConfig { engine, index_bits }
    }

    pub fn unindexed(engine: Engine, num_properties: usize) -> Self {
        StorageConfig::new(engine, vec![false; num_properties])
    }

    pub fn indexes_set(&self) -> usize {
        self.index_bits.iter().filter(|b| **b).count()
    }

    pub fn check_against(&self, g: &GraphStats) -> Result<()> {
        if self.index_bits.len() != g.num_properties() {
            return Err(AaeError::validation(format!(
                "storage has {} index bits but the graph has {} properties",
                self.index_bits.len(),
                g.num_properties()
            )));
        }
        Ok(())
    }

    /// Compact identifier such as `columnar:0100`.
    pub fn id(&self) -> String {
        let bits: String = self.index_bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
        format!("{}:{}", self.engine.name(), bits)
    }
}

impl fmt::Display for StorageConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for StorageConfig {
    type Err = AaeError;

    fn from_str(s: &str) -> Result<Self> {
        let (engine, bits) = s
            .split_once(':')
            .ok_or_else(|| AaeError::Config(format!("storage id '{s}' lacks ':'")))?;
        let index_bits = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(AaeError::Config(format!("bad index bit '{c}' in '{s}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StorageConfig::new(engine.parse()?, index_bits))
    }
}

/// Which inputs produced an instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub stats: String,
    pub workload: String,
    pub s_old: String,
    pub s_new: String,
}

impl Provenance {
    pub fn new(g: &GraphStats, w: &WorkloadProfile, s_old: &StorageConfig, s_new: &StorageConfig) -> Self {
        Provenance {
            stats: format!("g-{:016x}", fnv1a(g.to_json_line().as_bytes())),
            workload: format!("w-{:016x}", fnv1a(w.to_json_line().as_bytes())),
            s_old: s_old.id(),
            s_new: s_new.id(),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Padded feature vector with its mask and optional label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationInstance {
    #[serde(serialize_with = "serialize_vector")]
    pub vector: Vec<f64>,
    #[serde(with = "bits")]
    pub mask: Vec<bool>,
    #[serde(with = "opt_bit")]
    pub label: Option<bool>,
    pub provenance: Provenance,
}

impl EvaluationInstance {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// Number of real (unpadded) entries.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector.len() != self.mask.len() {
            return Err(AaeError::validation("vector and mask lengths differ"));
        }
        for (i, (v, m)) in self.vector.iter().zip(&self.mask).enumerate() {
            if !v.is_finite() {
                return Err(AaeError::validation(format!("non-finite feature at {i}")));
            }
            if !*m && *v != PAD_VALUE {
                return Err(AaeError::validation(format!("padding slot {i} holds {v}")));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instance serialises")
    }

    pub fn from_json_line(line: &str, line_no: usize) -> Result<Self> {
        let inst: EvaluationInstance =
            serde_json::from_str(line).map_err(|e| AaeError::parse(line_no, e.to_string()))?;
        inst.validate()
            .map_err(|e| AaeError::parse(line_no, e.to_string()))?;
        Ok(inst)
    }
}

/// Rounds to [`VECTOR_SIG_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", VECTOR_SIG_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

fn serialize_vector<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| round_sig(*x)))
}

mod bits {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|b| u8::from(*b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
        let raw = Vec::<u8>::deserialize(d)?;
        raw.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("mask bit {other} is not 0/1"))),
            })
            .collect()
    }
}

mod opt_bit {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<bool>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(serde::de::Error::custom(format!("label {other} is not 0/1"))),
        }
    }
}

/// `[log1p(size), log1p(nodes), log1p(edges), node types, edge types,
/// property types, log1p(cardinality)...]`
pub fn extract_dataset_features(g: &GraphStats) -> Vec<f64> {
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + g.num_properties());
    out.push((g.data_size as f64).ln_1p());
    out.push((g.num_nodes as f64).ln_1p());
    out.push((g.num_edges as f64).ln_1p());
    out.push(f64::from(g.num_node_types));
    out.push(f64::from(g.num_edge_types));
    out.push(f64::from(g.num_property_types));
    out.extend(g.property_cardinalities.iter().map(|&(_, c)| (c as f64).ln_1p()));
    out
}

/// The 19 operation rates followed by per-property access frequencies.
pub fn extract_workload_features(w: &WorkloadProfile) -> Vec<f64> {
    let mut out = Vec::with_capacity(OperationKind::COUNT + w.property_freq.len());
    out.extend_from_slice(&w.op_rates);
    out.extend_from_slice(&w.property_freq);
    out
}

/// Engine one-hot then index bits.
pub fn encode_storage(s: &StorageConfig) -> Vec<f64> {
    let mut out = vec![0.0; ENGINE_SLOTS];
    out[s.engine.index()] = 1.0;
    out.extend(s.index_bits.iter().map(|b| if *b { 1.0 } else { 0.0 }));
    out
}

/// Unpadded vector length for a graph with `num_properties` properties.
pub fn unpadded_len(num_properties: usize) -> usize {
    DATASET_HEADER_LEN
        + num_properties
        + OperationKind::COUNT
        + num_properties
        + 2 * (ENGINE_SLOTS + num_properties)
}

pub fn assemble(
    g: &GraphStats,
    w: &WorkloadProfile,
    s_old: &StorageConfig,
    s_new: &StorageConfig,
    max_len: usize,
) -> Result<EvaluationInstance> {
    s_old.check_against(g)?;
    s_new.check_against(g)?;
    if w.property_freq.len() != g.num_properties() {
        return Err(AaeError::validation(format!(
            "workload has {} property frequencies but the graph has {} properties",
            w.property_freq.len(),
            g.num_properties()
        )));
    }
    let required = unpadded_len(g.num_properties());
    if required > max_len {
        return Err(AaeError::Capacity { required, max_len });
    }
    let mut vector = Vec::with_capacity(max_len);
    vector.extend(extract_dataset_features(g));
    vector.extend(extract_workload_features(w));
    vector.extend(encode_storage(s_old));
    vector.extend(encode_storage(s_new));
    debug_assert_eq!(vector.len(), required);
    // stored precision, so a corpus round trip is exact
    vector.iter_mut().for_each(|v| *v = round_sig(*v));
    let mut mask = vec![true; required];
    vector.resize(max_len, PAD_VALUE);
    mask.resize(max_len, false);
    Ok(EvaluationInstance {
        vector,
        mask,
        label: None,
        provenance: Provenance::new(g, w, s_old, s_new),
    })
}
