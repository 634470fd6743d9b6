//! Closed-form workload cost model and the strict-improvement labeling rule.
//!
//! Real labels would come from executing each workload on each storage for
//! hours. The parametric model here gives reproducible costs in microseconds
//! of CPU instead; every constant lives in [`CostParams`] and is written into
//! corpus headers so labels can be audited.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_traits::Num;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AaeError, Result};
use crate::features::{Engine, Provenance, StorageConfig};
use crate::graphmodel::{Category, GraphStats, OperationKind, WorkloadProfile};
use crate::scalar::Scalar;

/// Index-maintenance surcharge per index bit on Create operations.
pub const INDEX_MAINTENANCE_PER_BIT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct CostParams<T> {
    /// `[engine][operation]` base cost, model microseconds per operation.
    pub base_cost: [[T; OperationKind::COUNT]; 2],
    /// Multiplier for a property-targeting op on an indexed property.
    pub index_speedup: T,
    /// Multiplier for traversals on a native graph engine.
    pub traversal_native_discount: T,
    /// Exponent on the logarithmic size factor.
    pub size_exponent: T,
}

impl<T: Scalar> Default for CostParams<T> {
    fn default() -> Self {
        let mut row = [T::one(); OperationKind::COUNT];
        for kind in OperationKind::ALL {
            row[kind.index()] = T::of(match kind.category() {
                Category::Create => 2.0,
                Category::Traverse => 5.0,
                _ => 1.0,
            });
        }
        CostParams {
            base_cost: [row; 2],
            index_speedup: T::of(0.2),
            traversal_native_discount: T::of(0.5),
            size_exponent: T::one(),
        }
    }
}

impl<T: Scalar> CostParams<T> {
    /// Every factor neutral: costs reduce to the base table.
    pub fn neutral() -> Self {
        CostParams {
            index_speedup: T::one(),
            traversal_native_discount: T::one(),
            size_exponent: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x <= T::one();
        if self.base_cost.iter().flatten().any(|c| !(*c > T::zero()) || !c.is_finite()) {
            return Err(AaeError::validation("base costs must be positive and finite"));
        }
        if !unit(self.index_speedup) || !unit(self.traversal_native_discount) {
            return Err(AaeError::validation("index speedup and traversal discount must lie in (0,1]"));
        }
        if !(self.size_exponent >= T::zero()) {
            return Err(AaeError::validation("size exponent must be >= 0"));
        }
        Ok(())
    }

    pub fn base(&self, engine: Engine, kind: OperationKind) -> T {
        self.base_cost[engine.index()][kind.index()]
    }
}

/// `(1 + log10(1 + nodes + edges))^gamma`
pub fn size_factor<T: Scalar>(g: &GraphStats, params: &CostParams<T>) -> T {
    let elements = T::of((g.num_nodes + g.num_edges) as f64);
    (T::one() + (T::one() + elements).log10()).powf(params.size_exponent)
}

/// Frequency-weighted mean over properties of `alpha` (indexed) or 1.
/// All-zero frequencies fall back to an unweighted mean.
pub fn index_factor<T: Scalar>(s: &StorageConfig, prop_freq: &[f64], params: &CostParams<T>) -> T {
    let alpha = params.index_speedup;
    let per_prop = |indexed: bool| if indexed { alpha } else { T::one() };
    let total: f64 = prop_freq.iter().sum();
    if s.index_bits.is_empty() {
        return T::one();
    }
    if total > 0.0 {
        let weighted: T = s
            .index_bits
            .iter()
            .zip(prop_freq)
            .map(|(b, f)| T::of(*f) * per_prop(*b))
            .sum();
        weighted / T::of(total)
    } else {
        let sum: T = s.index_bits.iter().map(|b| per_prop(*b)).sum();
        sum / T::of(s.index_bits.len() as f64)
    }
}

/// Cost of one operation of `kind` on storage `s`.
pub fn op_cost<T: Scalar>(
    kind: OperationKind,
    g: &GraphStats,
    s: &StorageConfig,
    prop_freq: &[f64],
    params: &CostParams<T>,
) -> T {
    let base = params.base(s.engine, kind);
    let category = kind.category();
    let index = if category == Category::Create {
        T::one() + T::of(INDEX_MAINTENANCE_PER_BIT) * T::of(s.indexes_set() as f64)
    } else if kind.targets_property() {
        index_factor(s, prop_freq, params)
    } else {
        T::one()
    };
    let traversal = if category == Category::Traverse && s.engine == Engine::NativeGraph {
        params.traversal_native_discount
    } else {
        T::one()
    };
    base * size_factor(g, params) * index * traversal
}

/// `sum_k rate_k * cost_k * n`, summed in ascending kind order.
///
/// Only needs ring operations, so it also runs over exact rationals.
pub fn aggregate_cost<T: Num + Clone>(rates: &[T], op_costs: &[T], total_queries: T) -> T {
    rates
        .iter()
        .zip(op_costs)
        .fold(T::zero(), |acc, (r, c)| {
            acc + r.clone() * c.clone() * total_queries.clone()
        })
}

pub fn op_cost_table<T: Scalar>(
    g: &GraphStats,
    w: &WorkloadProfile,
    s: &StorageConfig,
    params: &CostParams<T>,
) -> [T; OperationKind::COUNT] {
    let mut out = [T::zero(); OperationKind::COUNT];
    for kind in OperationKind::ALL {
        out[kind.index()] = op_cost(kind, g, s, &w.property_freq, params);
    }
    out
}

/// Total cost of running `w` on `s`: uniform per-query weights, so the
/// rate-weighted operation cost times the query count.
pub fn workload_cost<T: Scalar>(
    g: &GraphStats,
    w: &WorkloadProfile,
    s: &StorageConfig,
    params: &CostParams<T>,
) -> T {
    let rates: Vec<T> = w.op_rates.iter().map(|r| T::of(*r)).collect();
    let costs = op_cost_table(g, w, s, params);
    aggregate_cost(&rates, &costs, T::of(w.total_queries as f64))
}

/// 1 iff the old storage is strictly more expensive than the new one.
pub fn label<T: Scalar>(
    g: &GraphStats,
    w: &WorkloadProfile,
    s_old: &StorageConfig,
    s_new: &StorageConfig,
    params: &CostParams<T>,
) -> bool {
    workload_cost(g, w, s_old, params) > workload_cost(g, w, s_new, params)
}

/// Measured runtimes keyed by `(provenance id, storage id)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceTable {
    runtimes: BTreeMap<(String, String), f64>,
}

impl TraceTable {
    pub fn len(&self) -> usize {
        self.runtimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runtimes.is_empty()
    }

    pub fn runtime(&self, provenance: &str, storage: &str) -> Option<f64> {
        self.runtimes
            .get(&(provenance.to_owned(), storage.to_owned()))
            .copied()
    }

    /// Parses `provenance_id,storage_id,runtime_seconds` lines. Blank lines
    /// and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut runtimes = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [prov, storage, secs] = fields[..] else {
                return Err(AaeError::parse(
                    line_no,
                    format!("expected 3 comma-separated fields, found {}", fields.len()),
                ));
            };
            if prov.is_empty() || storage.is_empty() {
                return Err(AaeError::parse(line_no, "empty identifier"));
            }
            let secs: f64 = secs
                .parse()
                .map_err(|_| AaeError::parse(line_no, format!("runtime '{secs}' is not a number")))?;
            if !secs.is_finite() || secs < 0.0 {
                return Err(AaeError::parse(line_no, format!("runtime {secs} must be finite and >= 0")));
            }
            let key = (prov.to_owned(), storage.to_owned());
            if runtimes.insert(key, secs).is_some() {
                return Err(AaeError::validation(format!(
                    "duplicate trace entry for ({prov}, {storage}) at line {line_no}"
                )));
            }
        }
        Ok(TraceTable { runtimes })
    }

    /// Label from measurements: 1 iff the old storage ran strictly longer.
    pub fn label(&self, provenance: &str, s_old: &str, s_new: &str) -> Result<bool> {
        let lookup = |s: &str| {
            self.runtime(provenance, s).ok_or_else(|| {
                AaeError::validation(format!("no measured runtime for ({provenance}, {s})"))
            })
        };
        Ok(lookup(s_old)? > lookup(s_new)?)
    }
}

pub fn ingest_trace(path: &Path) -> Result<TraceTable> {
    TraceTable::parse(&fs::read_to_string(path)?)
}

/// Source of ground-truth labels: the cost model or measured runtimes.
#[derive(Clone, Debug)]
pub enum Labeler {
    Model(CostParams<f64>),
    Measured(TraceTable),
}

impl Labeler {
    pub fn label(
        &self,
        g: &GraphStats,
        w: &WorkloadProfile,
        s_old: &StorageConfig,
        s_new: &StorageConfig,
    ) -> Result<bool> {
        match self {
            Labeler::Model(params) => Ok(label(g, w, s_old, s_new, params)),
            Labeler::Measured(table) => {
                let prov = Provenance::new(g, w, s_old, s_new);
                table.label(&prov.workload, &prov.s_old, &prov.s_new)
            }
        }
    }
}
