//! Active-learning driver plus the evaluation protocols built on it:
//! accuracy, k-fold cross-validation and train-fraction sweeps.
//!
//! The driver repeats sample, reveal, retrain and retire until the unlabeled
//! pool is empty or the round budget runs out. An instance is retired when the
//! model's confidence `max(p, 1 - p)` reaches the threshold; retiring spends no
//! label.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{build, check_corpus, predict, train, ArchitectureId, TrainConfig, TrainLog};
use crate::error::{AaeError, Result};
use crate::features::EvaluationInstance;
use crate::nn::Network;
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ROUNDS: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    Uniform,
    /// Lowest confidence first.
    Uncertainty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub threshold: f64,
    pub sample_fraction: f64,
    pub max_rounds: usize,
    pub sampling: SamplingMode,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            threshold: DEFAULT_THRESHOLD,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            max_rounds: DEFAULT_MAX_ROUNDS,
            sampling: SamplingMode::Uniform,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.5 && self.threshold <= 1.0) {
            return Err(AaeError::validation(format!("threshold {} must lie in (0.5, 1]", self.threshold)));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(AaeError::validation(format!(
                "sample fraction {} must lie in (0, 1]",
                self.sample_fraction
            )));
        }
        if self.max_rounds == 0 {
            return Err(AaeError::validation("max_rounds must be >= 1"));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub retired: usize,
    pub accuracy_labeled: f64,
    /// Accuracy on every pool instance outside the labeled set, against the
    /// hidden labels. `None` once everything is labeled.
    pub accuracy_unlabeled: Option<f64>,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveReport {
    pub architecture: ArchitectureId,
    pub pool_size: usize,
    pub rounds: Vec<RoundRecord>,
}

impl ActiveReport {
    pub fn labels_used(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.labeled)
    }

    pub fn label_fraction(&self) -> f64 {
        self.labels_used() as f64 / self.pool_size as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,labeled,unlabeled,retired,accuracy_labeled,accuracy_unlabeled,epochs\n");
        for r in &self.rounds {
            let acc_u = r.accuracy_unlabeled.map_or_else(String::new, |a| format!("{a:.6}"));
            out.push_str(&format!(
                "{},{},{},{},{:.6},{},{}\n",
                r.round, r.labeled, r.unlabeled, r.retired, r.accuracy_labeled, acc_u, r.epochs
            ));
        }
        out
    }
}

/// Working state of one active run over a pool whose labels stay hidden
/// until sampled.
pub struct ActiveState<'a, T> {
    pool: &'a [EvaluationInstance],
    network: Network<T>,
    unlabeled: Vec<usize>,
    labeled: Vec<usize>,
    retired: Vec<usize>,
    round: usize,
    config: ActiveConfig,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> ActiveState<'a, T> {
    pub fn new(pool: &'a [EvaluationInstance], network: Network<T>, config: ActiveConfig) -> Result<Self> {
        config.validate()?;
        check_corpus(pool, network.input_len(), true)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(ActiveState {
            pool,
            network,
            unlabeled: (0..pool.len()).collect(),
            labeled: Vec::new(),
            retired: Vec::new(),
            round: 0,
            config,
            rng,
        })
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn into_network(self) -> Network<T> {
        self.network
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn retired(&self) -> &[usize] {
        &self.retired
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn labels_used(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_done(&self) -> bool {
        self.unlabeled.is_empty() || self.round >= self.config.max_rounds
    }

    fn confidence(&self, i: usize) -> Result<f64> {
        let p = predict(&self.network, &self.pool[i])?.as_f64();
        Ok(p.max(1.0 - p))
    }

    /// Moves every unlabeled instance the model is confident about into the
    /// retired set; returns how many moved.
    pub fn retire(&mut self) -> Result<usize> {
        let mut keep = Vec::with_capacity(self.unlabeled.len());
        let mut moved = 0;
        for &i in &self.unlabeled {
            if self.confidence(i)? >= self.config.threshold {
                self.retired.push(i);
                moved += 1;
            } else {
                keep.push(i);
            }
        }
        self.unlabeled = keep;
        Ok(moved)
    }

    fn sample(&mut self) -> Result<Vec<usize>> {
        let want = (self.config.sample_fraction * self.pool.len() as f64).ceil() as usize;
        let k = want.clamp(1, self.unlabeled.len());
        match self.config.sampling {
            SamplingMode::Uniform => {
                let (picked, _) = self.unlabeled.partial_shuffle(&mut self.rng, k);
                Ok(picked.to_vec())
            }
            SamplingMode::Uncertainty => {
                let mut scored = Vec::with_capacity(self.unlabeled.len());
                for &i in &self.unlabeled {
                    scored.push((self.confidence(i)?, i));
                }
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
            }
        }
    }

    /// One round: sample and reveal, retrain on all labels, retire.
    pub fn step(&mut self) -> Result<RoundRecord> {
        if self.is_done() {
            return Err(AaeError::validation("active run already finished"));
        }
        self.round += 1;
        let mut picked = self.sample()?;
        picked.sort_unstable();
        self.unlabeled.retain(|i| picked.binary_search(i).is_err());
        self.labeled.extend(&picked);

        let train_set: Vec<EvaluationInstance> = self.labeled.iter().map(|&i| self.pool[i].clone()).collect();
        let cfg = TrainConfig {
            seed: self.config.train.seed.wrapping_add(self.round as u64),
            ..self.config.train.clone()
        };
        let log: TrainLog = train(&mut self.network, &train_set, &cfg)?;
        self.retire()?;

        let outside: Vec<&EvaluationInstance> = self
            .unlabeled
            .iter()
            .chain(&self.retired)
            .map(|&i| &self.pool[i])
            .collect();
        let accuracy_unlabeled = if outside.is_empty() {
            None
        } else {
            Some(accuracy(&self.network, outside)?)
        };
        Ok(RoundRecord {
            round: self.round,
            labeled: self.labeled.len(),
            unlabeled: self.unlabeled.len(),
            retired: self.retired.len(),
            accuracy_labeled: evaluate(&self.network, &train_set)?,
            accuracy_unlabeled,
            epochs: log.records.len(),
        })
    }
}

/// Runs the active loop from a freshly built network seeded with `config.seed`.
pub fn active_loop<T: Scalar>(
    pool: &[EvaluationInstance],
    arch: ArchitectureId,
    config: &ActiveConfig,
) -> Result<(Network<T>, ActiveReport)> {
    config.validate()?;
    let first = pool.first().ok_or_else(|| AaeError::validation("pool is empty"))?;
    let network = build::<T>(arch, first.len(), config.seed)?;
    run_active(pool, network, arch, config)
}

/// Same as [`active_loop`] over a caller-supplied starting network.
pub fn run_active<T: Scalar>(
    pool: &[EvaluationInstance],
    network: Network<T>,
    arch: ArchitectureId,
    config: &ActiveConfig,
) -> Result<(Network<T>, ActiveReport)> {
    let mut state = ActiveState::new(pool, network, config.clone())?;
    let mut rounds = Vec::new();
    while !state.is_done() {
        rounds.push(state.step()?);
    }
    let report = ActiveReport {
        architecture: arch,
        pool_size: pool.len(),
        rounds,
    };
    Ok((state.into_network(), report))
}

fn accuracy<'b, T: Scalar>(
    net: &Network<T>,
    instances: impl IntoIterator<Item = &'b EvaluationInstance>,
) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for inst in instances {
        let label = inst
            .label
            .ok_or_else(|| AaeError::validation("cannot evaluate on an unlabeled instance"))?;
        let p = predict(net, inst)?;
        correct += usize::from((p >= T::of(0.5)) == label);
        total += 1;
    }
    if total == 0 {
        return Err(AaeError::validation("evaluation set is empty"));
    }
    Ok(correct as f64 / total as f64)
}

/// Fraction of instances whose hard label matches the known label.
pub fn evaluate<T: Scalar>(net: &Network<T>, instances: &[EvaluationInstance]) -> Result<f64> {
    accuracy(net, instances)
}

fn seeded_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Contiguous fold boundaries; sizes differ by at most one.
pub fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let span = (start, start + len);
            start += len;
            span
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub architecture: ArchitectureId,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl CrossValidation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,accuracy\n");
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            out.push_str(&format!("{},{a:.6}\n", i + 1));
        }
        out.push_str(&format!("mean,{:.6}\nstd,{:.6}\n", self.mean, self.std));
        out
    }
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seeded shuffle, `k` contiguous folds, train on `k - 1` and test on the rest.
pub fn cross_validate<T: Scalar>(
    corpus: &[EvaluationInstance],
    arch: ArchitectureId,
    k: usize,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<CrossValidation> {
    if k < 2 {
        return Err(AaeError::validation("cross-validation needs k >= 2"));
    }
    if corpus.len() < k {
        return Err(AaeError::validation(format!(
            "corpus of {} instances is smaller than k = {k}",
            corpus.len()
        )));
    }
    let order = seeded_order(corpus.len(), seed);
    let mut fold_accuracies = Vec::with_capacity(k);
    for (fold, (lo, hi)) in fold_bounds(corpus.len(), k).into_iter().enumerate() {
        let test: Vec<EvaluationInstance> = order[lo..hi].iter().map(|&i| corpus[i].clone()).collect();
        let train_set: Vec<EvaluationInstance> = order[..lo]
            .iter()
            .chain(&order[hi..])
            .map(|&i| corpus[i].clone())
            .collect();
        let mut net = build::<T>(arch, corpus[0].len(), seed.wrapping_add(fold as u64))?;
        train(&mut net, &train_set, train_cfg)?;
        fold_accuracies.push(evaluate(&net, &test)?);
    }
    let (mean, std) = mean_and_std(&fold_accuracies);
    Ok(CrossValidation {
        architecture: arch,
        fold_accuracies,
        mean,
        std,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub labeled: usize,
    pub unlabeled: usize,
    /// `(accuracy on the training split, accuracy on the remainder)` per architecture.
    pub accuracies: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub architectures: Vec<ArchitectureId>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,labeled,unlabeled");
        for a in &self.architectures {
            out.push_str(&format!(",{a}_L,{a}_U"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.fraction, r.labeled, r.unlabeled));
            for (l, u) in &r.accuracies {
                out.push_str(&format!(",{l:.6},{u:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Number of training instances for a split fraction.
pub fn split_size(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(AaeError::validation(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let k = (fraction * n as f64).round() as usize;
    if k == 0 || k >= n {
        return Err(AaeError::validation(format!(
            "fraction {fraction} of {n} instances leaves an empty side"
        )));
    }
    Ok(k)
}

/// For each fraction, train on that share of one seeded permutation and
/// evaluate on the remainder.
pub fn train_fraction_sweep<T: Scalar>(
    corpus: &[EvaluationInstance],
    architectures: &[ArchitectureId],
    fractions: &[f64],
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<SweepTable> {
    if corpus.is_empty() || architectures.is_empty() || fractions.is_empty() {
        return Err(AaeError::validation("sweep needs a corpus, architectures and fractions"));
    }
    let sizes = fractions
        .iter()
        .map(|f| split_size(corpus.len(), *f))
        .collect::<Result<Vec<_>>>()?;
    let order = seeded_order(corpus.len(), seed);
    let shuffled: Vec<EvaluationInstance> = order.iter().map(|&i| corpus[i].clone()).collect();
    let mut rows = Vec::with_capacity(fractions.len());
    for (&fraction, &k) in fractions.iter().zip(&sizes) {
        let (train_set, rest) = shuffled.split_at(k);
        let mut accuracies = Vec::with_capacity(architectures.len());
        for &arch in architectures {
            let mut net = build::<T>(arch, corpus[0].len(), seed)?;
            train(&mut net, train_set, train_cfg)?;
            accuracies.push((evaluate(&net, train_set)?, evaluate(&net, rest)?));
        }
        rows.push(SweepRow {
            fraction,
            labeled: k,
            unlabeled: corpus.len() - k,
            accuracies,
        });
    }
    Ok(SweepTable {
        architectures: architectures.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::layer_specs;
    use crate::features::Provenance;

    fn provenance() -> Provenance {
        Provenance {
            stats: "g".into(),
            workload: "w".into(),
            s_old: "a".into(),
            s_new: "b".into(),
        }
    }

    fn instance(values: Vec<f64>, label: bool) -> EvaluationInstance {
        EvaluationInstance {
            mask: vec![true; values.len()],
            vector: values,
            label: Some(label),
            provenance: provenance(),
        }
    }

    /// Label is the sign of the first feature, with a margin.
    fn separable(n: usize, len: usize, seed: u64) -> Vec<EvaluationInstance> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.9..0.9)).collect();
                let label = i % 2 == 0;
                v[0] = if label { rng.gen_range(0.3..0.9) } else { rng.gen_range(-0.9..-0.3) };
                instance(v, label)
            })
            .collect()
    }

    fn zeroed(arch: ArchitectureId, len: usize) -> Network<f64> {
        Network::zeroed(arch.name(), layer_specs(arch, 8), len).unwrap()
    }

    #[test]
    fn config_validation() {
        let pool = separable(10, 32, 0);
        for (t, f) in [(0.5, 0.1), (1.01, 0.1), (0.9, 0.0), (0.9, 1.5)] {
            let cfg = ActiveConfig {
                threshold: t,
                sample_fraction: f,
                ..ActiveConfig::default()
            };
            assert!(matches!(
                active_loop::<f64>(&pool, ArchitectureId::Gru, &cfg),
                Err(AaeError::Validation(_))
            ));
        }
        assert!(matches!(
            active_loop::<f64>(&[], ArchitectureId::Gru, &ActiveConfig::default()),
            Err(AaeError::Validation(_))
        ));
    }

    #[test]
    fn zero_model_retires_nothing() {
        let pool = separable(20, 32, 1);
        let cfg = ActiveConfig {
            threshold: 0.5000001,
            ..ActiveConfig::default()
        };
        let mut state = ActiveState::new(&pool, zeroed(ArchitectureId::Gru, 32), cfg).unwrap();
        assert_eq!(state.retire().unwrap(), 0);
        assert_eq!(state.unlabeled().len(), 20);
        let record = state.step().unwrap();
        assert_eq!(record.labeled, 2);
        assert_eq!(state.labels_used(), 2);
    }

    #[test]
    fn full_fraction_is_plain_supervision() {
        let pool = separable(30, 32, 2);
        let cfg = ActiveConfig {
            sample_fraction: 1.0,
            ..ActiveConfig::default()
        };
        let (_, report) = active_loop::<f64>(&pool, ArchitectureId::Scnn, &cfg).unwrap();
        assert_eq!(report.rounds.len(), 1);
        assert_eq!(report.labels_used(), 30);
        assert_eq!(report.rounds[0].accuracy_unlabeled, None);
    }

    #[test]
    fn label_accounting_and_termination() {
        let pool = separable(40, 32, 3);
        for sampling in [SamplingMode::Uniform, SamplingMode::Uncertainty] {
            let cfg = ActiveConfig {
                threshold: 1.0,
                sample_fraction: 0.05,
                max_rounds: 6,
                sampling,
                train: TrainConfig {
                    epochs: 3,
                    ..TrainConfig::default()
                },
                seed: 9,
            };
            let mut state = ActiveState::new(&pool, build::<f64>(ArchitectureId::Scnn, 32, 4).unwrap(), cfg).unwrap();
            let mut rounds = 0;
            while !state.is_done() {
                let r = state.step().unwrap();
                rounds += 1;
                assert_eq!(r.labeled, state.labels_used());
                assert_eq!(r.labeled + r.unlabeled + r.retired, pool.len());
                let mut all: Vec<usize> = state
                    .labeled()
                    .iter()
                    .chain(state.unlabeled())
                    .chain(state.retired())
                    .copied()
                    .collect();
                all.sort_unstable();
                assert_eq!(all, (0..pool.len()).collect::<Vec<_>>(), "sets stay disjoint");
            }
            assert!(rounds <= 6);
            assert!(state.labels_used() <= pool.len());
        }
    }

    #[test]
    fn evaluate_examples() {
        let set = separable(10, 32, 5);
        assert!(matches!(evaluate(&zeroed(ArchitectureId::Scnn, 32), &[]), Err(AaeError::Validation(_))));
        // a zero network predicts exactly 0.5, which reads as label 1
        let net = zeroed(ArchitectureId::Scnn, 32);
        assert_eq!(evaluate(&net, &set).unwrap(), 0.5);
        let positives: Vec<_> = set.iter().filter(|i| i.label == Some(true)).cloned().collect();
        assert_eq!(evaluate(&net, &positives).unwrap(), 1.0);
        let negative = [set.iter().find(|i| i.label == Some(false)).unwrap().clone()];
        assert_eq!(evaluate(&net, &negative).unwrap(), 0.0);
    }

    #[test]
    fn constant_model_on_balanced_set() {
        let set = separable(1000, 32, 6);
        let net = build::<f64>(ArchitectureId::Gru, 32, 6).unwrap();
        let acc = evaluate(&net, &set).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn fold_partition() {
        for n in 5..40 {
            for k in 2..=5 {
                let bounds = fold_bounds(n, k);
                assert_eq!(bounds.len(), k);
                assert_eq!(bounds[0].0, 0);
                assert_eq!(bounds[k - 1].1, n);
                let sizes: Vec<usize> = bounds.iter().map(|(a, b)| b - a).collect();
                assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                assert!(bounds.windows(2).all(|w| w[0].1 == w[1].0));
            }
        }
    }

    #[test]
    fn cross_validation_on_duplicates() {
        let base = separable(2, 32, 7);
        let corpus: Vec<_> = (0..20).map(|i| base[i % 2].clone()).collect();
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let cv = cross_validate::<f64>(&corpus, ArchitectureId::Scnn, 4, &cfg, 1).unwrap();
        assert_eq!(cv.fold_accuracies, vec![1.0; 4]);
        assert_eq!(cv.std, 0.0);
        assert!(matches!(
            cross_validate::<f64>(&corpus[..3], ArchitectureId::Scnn, 4, &cfg, 1),
            Err(AaeError::Validation(_))
        ));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_and_std(&[0.8, 0.9, 1.0, 0.9]);
        assert!((m - 0.9).abs() < 1e-12);
        assert!((s - 0.005f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let corpus = separable(40, 96, 8);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let run = || {
            train_fraction_sweep::<f64>(&corpus, &ArchitectureId::ALL, &[0.41, 0.49, 0.58], &cfg, 3).unwrap()
        };
        let table = run();
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.rows[0].labeled, 16);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("fraction,labeled,unlabeled,SCNN_L,SCNN_U,DCNN_L,DCNN_U,GRU_L,GRU_U\n"));
        assert_eq!(csv, run().to_csv());
        assert!(train_fraction_sweep::<f64>(&corpus, &ArchitectureId::ALL, &[0.001], &cfg, 3).is_err());
        assert!(train_fraction_sweep::<f64>(&corpus, &ArchitectureId::ALL, &[1.0], &cfg, 3).is_err());
    }
}
