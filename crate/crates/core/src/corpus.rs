//! Seeded corpus generation and the JSON-lines corpus file.
//!
//! A corpus file starts with one header line carrying the generator settings
//! and the cost parameters used for labeling, followed by one
//! [`EvaluationInstance`] per line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AaeError, Result};
use crate::features::{assemble, Engine, EvaluationInstance, StorageConfig};
use crate::graphmodel::{generate_graph_stats, generate_workload, GraphProfile};
use crate::oracle::{self, CostParams, TraceTable};

pub const CORPUS_FORMAT: &str = "aae-corpus v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format: String,
    pub profile: GraphProfile,
    pub seed: u64,
    pub count: usize,
    pub max_len: usize,
    pub cost_params: CostParams<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub instances: Vec<EvaluationInstance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub profile: GraphProfile,
    pub count: usize,
    pub seed: u64,
    pub max_len: usize,
    pub cost_params: CostParams<f64>,
}

impl GenConfig {
    pub fn new(profile: GraphProfile, count: usize, seed: u64) -> Self {
        GenConfig {
            profile,
            count,
            seed,
            max_len: profile.default_max_len(),
            cost_params: CostParams::default(),
        }
    }
}

/// Draws a storage pair: `s_new` flips the engine, toggles index bits, or both.
fn storage_pair(rng: &mut ChaCha8Rng, props: usize) -> (StorageConfig, StorageConfig) {
    let engine = if rng.gen_bool(0.5) { Engine::NativeGraph } else { Engine::Columnar };
    let bits: Vec<bool> = (0..props).map(|_| rng.gen_bool(0.5)).collect();
    let old = StorageConfig::new(engine, bits);
    let mut new = old.clone();
    let mode = rng.gen_range(0..3u8);
    if mode != 1 {
        new.engine = new.engine.flipped();
    }
    if mode != 0 {
        let mut toggled = false;
        for b in new.index_bits.iter_mut() {
            if rng.gen_bool(0.5) {
                *b = !*b;
                toggled = true;
            }
        }
        if !toggled {
            let i = rng.gen_range(0..props);
            new.index_bits[i] = !new.index_bits[i];
        }
    }
    (old, new)
}

/// Flat Dirichlet draw over the five operation categories.
fn category_mix(rng: &mut ChaCha8Rng) -> [f64; 5] {
    let mut mix = [0.0; 5];
    for m in mix.iter_mut() {
        *m = -(1.0 - rng.gen::<f64>()).ln() + f64::MIN_POSITIVE;
    }
    let total: f64 = mix.iter().sum();
    mix.iter_mut().for_each(|m| *m /= total);
    // absorb rounding so the mix sums to one
    let drift = 1.0 - mix.iter().sum::<f64>();
    mix[4] += drift;
    mix
}

/// Generates `cfg.count` instances labeled by the cost model.
pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus> {
    if cfg.count == 0 {
        return Err(AaeError::validation("count must be >= 1"));
    }
    cfg.cost_params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let stats = generate_graph_stats(cfg.profile, rng.gen());
        let mix = category_mix(&mut rng);
        let workload = generate_workload(&stats, &mix, rng.gen())?;
        let (old, new) = storage_pair(&mut rng, stats.num_properties());
        let label = oracle::label(&stats, &workload, &old, &new, &cfg.cost_params);
        instances.push(assemble(&stats, &workload, &old, &new, cfg.max_len)?.with_label(label));
    }
    Ok(Corpus {
        header: CorpusHeader {
            format: CORPUS_FORMAT.to_owned(),
            profile: cfg.profile,
            seed: cfg.seed,
            count: cfg.count,
            max_len: cfg.max_len,
            cost_params: cfg.cost_params.clone(),
        },
        instances,
    })
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Fraction of labeled instances with label 1.
    pub fn positive_rate(&self) -> f64 {
        let labeled: Vec<bool> = self.instances.iter().filter_map(|i| i.label).collect();
        if labeled.is_empty() {
            return 0.0;
        }
        labeled.iter().filter(|l| **l).count() as f64 / labeled.len() as f64
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        for inst in &self.instances {
            out.push_str(&inst.to_json_line());
            out.push('\n');
        }
        out
    }

    /// Parses a corpus file; errors carry 1-based line numbers.
    pub fn parse(text: &str) -> Result<Corpus> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| AaeError::parse(1, "empty corpus file"))?;
        let header: CorpusHeader =
            serde_json::from_str(first).map_err(|e| AaeError::parse(1, format!("bad corpus header: {e}")))?;
        if header.format != CORPUS_FORMAT {
            return Err(AaeError::parse(1, format!("unsupported corpus format '{}'", header.format)));
        }
        let mut instances = Vec::new();
        for (i, line) in lines {
            let inst = EvaluationInstance::from_json_line(line, i + 1)?;
            if inst.len() != header.max_len {
                return Err(AaeError::parse(
                    i + 1,
                    format!("instance length {} differs from header max_len {}", inst.len(), header.max_len),
                ));
            }
            instances.push(inst);
        }
        if instances.is_empty() {
            return Err(AaeError::parse(1, "corpus has no instances"));
        }
        Ok(Corpus { header, instances })
    }

    /// Replaces every label with one derived from measured runtimes.
    pub fn relabel(&mut self, trace: &TraceTable) -> Result<()> {
        for inst in self.instances.iter_mut() {
            let p = &inst.provenance;
            inst.label = Some(trace.label(&p.workload, &p.s_old, &p.s_new)?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_count_is_rejected() {
        let cfg = GenConfig::new(GraphProfile::FreebaseSmall, 0, 1);
        assert!(matches!(generate_corpus(&cfg), Err(AaeError::Validation(_))));
    }

    #[test]
    fn storages_always_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for props in 1..6 {
            for _ in 0..200 {
                let (old, new) = storage_pair(&mut rng, props);
                assert_ne!(old, new);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = GenConfig::new(GraphProfile::Random, 25, 7);
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let back = Corpus::parse(&a.to_jsonl()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn labels_match_the_cost_model() {
        let cfg = GenConfig::new(GraphProfile::FreebaseSmall, 40, 3);
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(corpus.instances.iter().all(|i| i.label.is_some()));
        assert!(corpus.instances.iter().all(|i| i.len() == 256));
    }

    #[test]
    fn label_balance_on_default_generators() {
        for profile in [GraphProfile::FreebaseSmall, GraphProfile::Ldbc, GraphProfile::Random] {
            let corpus = generate_corpus(&GenConfig::new(profile, 1000, 11)).unwrap();
            let rate = corpus.positive_rate();
            assert!((0.3..=0.7).contains(&rate), "{profile}: {rate}");
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let corpus = generate_corpus(&GenConfig::new(GraphProfile::FreebaseSmall, 3, 1)).unwrap();
        let mut lines: Vec<String> = corpus.to_jsonl().lines().map(str::to_owned).collect();
        lines[2] = "{not json".into();
        match Corpus::parse(&lines.join("\n")) {
            Err(AaeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Corpus::parse(""), Err(AaeError::Parse { line: 1, .. })));
    }
}
