//! Synthetic graph datasets and workloads at the level of summary statistics.
//!
//! No graph is ever materialised: the estimator only consumes counts, type
//! cardinalities and per-operation rates, so that is all we generate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AaeError, Result};

/// Bytes charged per node or edge when deriving `data_size`.
pub const BYTES_PER_ELEMENT: u64 = 64;
/// Exponent of the Zipf skew used for property access frequencies.
pub const ZIPF_EXPONENT: f64 = 1.1;
pub const DEFAULT_TOTAL_QUERIES: u64 = 10_000;
const SUM_TOLERANCE: f64 = 1e-9;

/// Summary of a graph dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: u64,
    pub num_edges: u64,
    pub data_size: u64,
    pub num_node_types: u32,
    pub num_edge_types: u32,
    pub num_property_types: u32,
    /// `(property_id, distinct values)`, sorted by id, ids `0..num_property_types`.
    pub property_cardinalities: Vec<(u32, u64)>,
}

impl GraphStats {
    /// Builds stats with `data_size` derived from the element count.
    pub fn new(
        num_nodes: u64,
        num_edges: u64,
        num_node_types: u32,
        num_edge_types: u32,
        cardinalities: Vec<u64>,
    ) -> Result<Self> {
        let stats = GraphStats {
            num_nodes,
            num_edges,
            data_size: BYTES_PER_ELEMENT * (num_nodes + num_edges),
            num_node_types,
            num_edge_types,
            num_property_types: cardinalities.len() as u32,
            property_cardinalities: cardinalities
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i as u32, c))
                .collect(),
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_node_types == 0 || self.num_edge_types == 0 || self.num_property_types == 0 {
            return Err(AaeError::validation(
                "graph stats need at least one node, edge and property type",
            ));
        }
        if self.property_cardinalities.len() != self.num_property_types as usize {
            return Err(AaeError::validation(format!(
                "{} property cardinalities for {} property types",
                self.property_cardinalities.len(),
                self.num_property_types
            )));
        }
        for (expected, &(id, card)) in self.property_cardinalities.iter().enumerate() {
            if id as usize != expected {
                return Err(AaeError::validation(format!(
                    "property ids must be 0..n in order, found {id} at position {expected}"
                )));
            }
            if card == 0 {
                return Err(AaeError::validation(format!("property {id} has zero cardinality")));
            }
        }
        Ok(())
    }

    pub fn num_properties(&self) -> usize {
        self.num_property_types as usize
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("graph stats serialise")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Create,
    Read,
    Update,
    Delete,
    Traverse,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Create,
        Category::Read,
        Category::Update,
        Category::Delete,
        Category::Traverse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn kinds(self) -> &'static [OperationKind] {
        use OperationKind::*;
        match self {
            Category::Create => &[AddVertex, AddEdge, AddProperty],
            Category::Read => &[GetCount, GetProperty, FindProperty, Find],
            Category::Update => &[SetProperty],
            Category::Delete => &[RemoveVertex, RemoveEdge, RemoveProperty],
            Category::Traverse => &[
                In,
                Out,
                All,
                TFilter,
                AllInPathBfs,
                AllInPathBfsLabeled,
                ShortPath,
                ShortPathLabeled,
            ],
        }
    }
}

/// The basic graph query operations. Discriminants are the serialised indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperationKind {
    AddVertex = 0,
    AddEdge,
    AddProperty,
    GetCount,
    GetProperty,
    FindProperty,
    Find,
    SetProperty,
    RemoveVertex,
    RemoveEdge,
    RemoveProperty,
    In,
    Out,
    All,
    TFilter,
    AllInPathBfs,
    AllInPathBfsLabeled,
    ShortPath,
    ShortPathLabeled,
}

impl OperationKind {
    pub const COUNT: usize = 19;

    pub const ALL: [OperationKind; Self::COUNT] = {
        use OperationKind::*;
        [
            AddVertex,
            AddEdge,
            AddProperty,
            GetCount,
            GetProperty,
            FindProperty,
            Find,
            SetProperty,
            RemoveVertex,
            RemoveEdge,
            RemoveProperty,
            In,
            Out,
            All,
            TFilter,
            AllInPathBfs,
            AllInPathBfsLabeled,
            ShortPath,
            ShortPathLabeled,
        ]
    };

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn category(self) -> Category {
        match self.index() {
            0..=2 => Category::Create,
            3..=6 => Category::Read,
            7 => Category::Update,
            8..=10 => Category::Delete,
            _ => Category::Traverse,
        }
    }

    /// Operations that look up or touch a specific property and so can use
    /// (or must maintain) a property index.
    pub fn targets_property(self) -> bool {
        use OperationKind::*;
        matches!(
            self,
            FindProperty | Find | SetProperty | RemoveProperty | AddProperty | GetProperty
        )
    }

    pub fn name(self) -> &'static str {
        use OperationKind::*;
        match self {
            AddVertex => "addVertex",
            AddEdge => "addEdge",
            AddProperty => "addProperty",
            GetCount => "getCount",
            GetProperty => "getProperty",
            FindProperty => "findProperty",
            Find => "find",
            SetProperty => "setProperty",
            RemoveVertex => "removeVertex",
            RemoveEdge => "removeEdge",
            RemoveProperty => "removeProperty",
            In => "in",
            Out => "out",
            All => "all",
            TFilter => "TFilter",
            AllInPathBfs => "allinPathBFS",
            AllInPathBfsLabeled => "allinPathBFSLabeled",
            ShortPath => "shortPath",
            ShortPathLabeled => "shortPathLabeled",
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operation mix and property access pattern of a workload of
/// `total_queries` equally weighted queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub op_rates: [f64; OperationKind::COUNT],
    pub property_freq: Vec<f64>,
    pub total_queries: u64,
}

impl WorkloadProfile {
    pub fn new(
        op_rates: [f64; OperationKind::COUNT],
        property_freq: Vec<f64>,
        total_queries: u64,
    ) -> Result<Self> {
        let w = WorkloadProfile {
            op_rates,
            property_freq,
            total_queries,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_queries == 0 {
            return Err(AaeError::validation("workload needs at least one query"));
        }
        if let Some(r) = self.op_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(AaeError::validation(format!("operation rate {r} outside [0,1]")));
        }
        let total: f64 = self.op_rates.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(AaeError::validation(format!("operation rates sum to {total}, not 1")));
        }
        if let Some(f) = self.property_freq.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(AaeError::validation(format!("property frequency {f} outside [0,1]")));
        }
        Ok(())
    }

    pub fn rate(&self, kind: OperationKind) -> f64 {
        self.op_rates[kind.index()]
    }

    pub fn category_sums(&self) -> [f64; 5] {
        let mut sums = [0.0; 5];
        for kind in OperationKind::ALL {
            sums[kind.category().index()] += self.rate(kind);
        }
        sums
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("workload serialises")
    }
}

/// Named dataset presets plus a seeded random generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphProfile {
    FreebaseSmall,
    FreebaseMiddle,
    Ldbc,
    Random,
}

impl GraphProfile {
    pub fn name(self) -> &'static str {
        match self {
            GraphProfile::FreebaseSmall => "freebase-small",
            GraphProfile::FreebaseMiddle => "freebase-middle",
            GraphProfile::Ldbc => "ldbc",
            GraphProfile::Random => "random",
        }
    }

    /// Padded vector length that fits every instance of this profile.
    pub fn default_max_len(self) -> usize {
        match self {
            GraphProfile::Ldbc => 320,
            _ => crate::features::DEFAULT_MAX_LEN,
        }
    }
}

impl FromStr for GraphProfile {
    type Err = AaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freebase-small" => Ok(GraphProfile::FreebaseSmall),
            "freebase-middle" => Ok(GraphProfile::FreebaseMiddle),
            "ldbc" => Ok(GraphProfile::Ldbc),
            "random" => Ok(GraphProfile::Random),
            other => Err(AaeError::Config(format!("unknown graph profile '{other}'"))),
        }
    }
}

impl fmt::Display for GraphProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn seeded_cardinalities(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.gen_range(2..=10_000u64)).collect()
}

/// Stats for a profile. Named profiles carry the published dataset counts;
/// only their property cardinalities depend on `seed`.
pub fn generate_graph_stats(profile: GraphProfile, seed: u64) -> GraphStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nodes, edges, node_types, edge_types, props) = match profile {
        GraphProfile::FreebaseSmall => (480_577, 314_753, 1, 1814, 3),
        GraphProfile::FreebaseMiddle => (4_264_156, 3_147_537, 1, 2912, 3),
        GraphProfile::Ldbc => (184_328, 767_894, 8, 15, 62),
        GraphProfile::Random => {
            // log-uniform node count over [1e3, 1e7]
            let nodes = 10f64.powf(rng.gen_range(3.0..=7.0)).round() as u64;
            let edges = (nodes as f64 * rng.gen_range(0.5..=5.0)).round() as u64;
            (
                nodes,
                edges,
                rng.gen_range(1..=10u32),
                rng.gen_range(1..=100u32),
                rng.gen_range(1..=8u32),
            )
        }
    };
    let cards = seeded_cardinalities(&mut rng, props as usize);
    GraphStats::new(nodes, edges, node_types, edge_types, cards)
        .expect("generated stats satisfy invariants")
}

/// Parses a mix and checks it is a distribution over the five categories.
pub fn validate_mix(mix: &[f64; 5]) -> Result<()> {
    if mix.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(AaeError::validation(format!("mix entries must be >= 0: {mix:?}")));
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(AaeError::validation(format!("mix sums to {total}, not 1")));
    }
    Ok(())
}

/// Zipf-shaped access frequencies over `n` properties with a seeded rank
/// assignment. Frequencies sum to one.
fn zipf_frequencies(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut ranks: Vec<usize> = (1..=n).collect();
    // Fisher-Yates with explicit draws so the permutation is stable across rand versions.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        ranks.swap(i, j);
    }
    let weights: Vec<f64> = ranks.iter().map(|&r| (r as f64).powf(-ZIPF_EXPONENT)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Spreads each category's mass over its operations by a seeded uniform
/// simplex draw and attaches Zipf property frequencies.
pub fn generate_workload(stats: &GraphStats, mix: &[f64; 5], seed: u64) -> Result<WorkloadProfile> {
    validate_mix(mix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut op_rates = [0.0; OperationKind::COUNT];
    for category in Category::ALL {
        let mass = mix[category.index()];
        let kinds = category.kinds();
        // normalised exponentials are a flat Dirichlet draw
        let draws: Vec<f64> = kinds
            .iter()
            .map(|_| -(1.0 - rng.gen::<f64>()).ln() + f64::MIN_POSITIVE)
            .collect();
        let total: f64 = draws.iter().sum();
        for (kind, d) in kinds.iter().zip(&draws) {
            op_rates[kind.index()] = mass * d / total;
        }
    }
    let property_freq = zipf_frequencies(&mut rng, stats.num_properties());
    WorkloadProfile::new(op_rates, property_freq, DEFAULT_TOTAL_QUERIES)
}
