//! The three estimator architectures and their mini-batch SGD training loop.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AaeError, Result};
use crate::features::{EvaluationInstance, PAD_VALUE};
use crate::nn::{read_params, sgd_step, write_params, Activation, ClassifierParams, LayerSpec, Network, ParamsHeader};
use crate::scalar::Scalar;

pub const DEFAULT_GRU_HIDDEN: usize = 32;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
const CONV_FILTERS: usize = 16;
const KERNEL: usize = 3;
const POOL: usize = 3;
const PLATEAU_DELTA: f64 = 1e-6;
const PLATEAU_EPOCHS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureId {
    #[serde(rename = "SCNN")]
    Scnn,
    #[serde(rename = "DCNN")]
    Dcnn,
    #[serde(rename = "GRU")]
    Gru,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 3] = [ArchitectureId::Scnn, ArchitectureId::Dcnn, ArchitectureId::Gru];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureId::Scnn => "SCNN",
            ArchitectureId::Dcnn => "DCNN",
            ArchitectureId::Gru => "GRU",
        }
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureId {
    type Err = AaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scnn" => Ok(ArchitectureId::Scnn),
            "dcnn" => Ok(ArchitectureId::Dcnn),
            "gru" => Ok(ArchitectureId::Gru),
            _ => Err(AaeError::validation(format!("unknown architecture '{s}' (expected scnn, dcnn or gru)"))),
        }
    }
}

fn conv(activation: Activation) -> LayerSpec {
    LayerSpec::conv(CONV_FILTERS, KERNEL, activation)
}

/// Layer stack for an architecture.
pub fn layer_specs(arch: ArchitectureId, gru_hidden: usize) -> Vec<LayerSpec> {
    let head = [LayerSpec::Flatten, LayerSpec::dense(1, Activation::Sigmoid)];
    match arch {
        ArchitectureId::Scnn | ArchitectureId::Dcnn => {
            // the first convolution has no activation
            let mut specs = vec![
                conv(Activation::Linear),
                conv(Activation::Tanh),
                LayerSpec::pool(POOL),
                conv(Activation::Tanh),
                conv(Activation::Tanh),
                LayerSpec::pool(POOL),
            ];
            if arch == ArchitectureId::Dcnn {
                specs.extend([conv(Activation::Tanh), conv(Activation::Tanh), LayerSpec::pool(POOL)]);
            }
            specs.extend(head);
            specs
        }
        ArchitectureId::Gru => vec![
            LayerSpec::Mask { sentinel: PAD_VALUE },
            LayerSpec::Gru { hidden: gru_hidden },
            LayerSpec::dense(1, Activation::Sigmoid),
        ],
    }
}

pub fn build<T: Scalar>(arch: ArchitectureId, input_len: usize, seed: u64) -> Result<Network<T>> {
    build_with_hidden(arch, input_len, DEFAULT_GRU_HIDDEN, seed)
}

pub fn build_with_hidden<T: Scalar>(
    arch: ArchitectureId,
    input_len: usize,
    gru_hidden: usize,
    seed: u64,
) -> Result<Network<T>> {
    Network::new(arch.name(), layer_specs(arch, gru_hidden), input_len, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Rescale each batch gradient to at most this global L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(AaeError::validation("epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(AaeError::validation("learning rate must be finite and >= 0"));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(AaeError::validation("clip norm must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EpochBudget,
    PerfectAccuracy,
    Plateau,
}

/// Per-epoch loss and accuracy, measured on each example just before the
/// update that uses it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,train_accuracy\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.9},{:.6}\n", r.epoch, r.mean_loss, r.accuracy));
        }
        out
    }
}

/// Checks a training or evaluation set against a network input length.
pub fn check_corpus(corpus: &[EvaluationInstance], input_len: usize, need_labels: bool) -> Result<()> {
    if corpus.is_empty() {
        return Err(AaeError::validation("corpus is empty"));
    }
    for (i, inst) in corpus.iter().enumerate() {
        if inst.len() != input_len {
            return Err(AaeError::validation(format!(
                "instance {i} has length {} but the network expects {input_len}",
                inst.len()
            )));
        }
        if need_labels && inst.label.is_none() {
            return Err(AaeError::validation(format!("instance {i} is unlabeled")));
        }
    }
    Ok(())
}

pub(crate) fn to_input<T: Scalar>(inst: &EvaluationInstance) -> Vec<T> {
    inst.vector.iter().map(|v| T::of(*v)).collect()
}

/// Mini-batch SGD over a seeded shuffle of `corpus`; batch gradients are averaged.
///
/// Stops early when an epoch classifies every example correctly or when the
/// epoch loss stops improving.
pub fn train<T: Scalar>(net: &mut Network<T>, corpus: &[EvaluationInstance], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    check_corpus(corpus, net.input_len(), true)?;
    let inputs: Vec<Vec<T>> = corpus.iter().map(to_input).collect();
    let labels: Vec<bool> = corpus.iter().map(|i| i.label.expect("checked")).collect();
    let lr = T::of(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut records: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut stop = StopReason::EpochBudget;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = ClassifierParams::zeros_like(net.params());
            for &i in batch {
                let (loss, p, grads) = net.loss_and_grad(&inputs[i], labels[i])?;
                loss_sum += loss.as_f64();
                correct += usize::from((p >= T::of(0.5)) == labels[i]);
                acc.add_scaled(&grads, T::one())?;
            }
            acc.scale(T::one() / T::of(batch.len() as f64));
            if let Some(limit) = cfg.clip_norm {
                let norm = acc.tensors().flat_map(|t| t.data()).map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
                if norm > limit {
                    acc.scale(T::of(limit / norm));
                }
            }
            sgd_step(net.params_mut(), &acc, lr)?;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / corpus.len() as f64,
            accuracy: correct as f64 / corpus.len() as f64,
        };
        records.push(record);
        if !net.params().is_finite() {
            return Err(AaeError::validation(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        if correct == corpus.len() {
            stop = StopReason::PerfectAccuracy;
            break;
        }
        if plateaued(&records) {
            stop = StopReason::Plateau;
            break;
        }
    }
    Ok(TrainLog { records, stop })
}

/// True when the mean loss of the last [`PLATEAU_EPOCHS`] epochs improves on
/// the mean of the window before it by less than [`PLATEAU_DELTA`].
fn plateaued(records: &[EpochRecord]) -> bool {
    let n = records.len();
    if n < 2 * PLATEAU_EPOCHS {
        return false;
    }
    let mean = |r: &[EpochRecord]| r.iter().map(|e| e.mean_loss).sum::<f64>() / r.len() as f64;
    let before = mean(&records[n - 2 * PLATEAU_EPOCHS..n - PLATEAU_EPOCHS]);
    before - mean(&records[n - PLATEAU_EPOCHS..]) < PLATEAU_DELTA
}

/// Probability that the new storage is cheaper.
pub fn predict<T: Scalar>(net: &Network<T>, instance: &EvaluationInstance) -> Result<T> {
    if instance.len() != net.input_len() {
        return Err(AaeError::shape(format!(
            "instance length {} differs from network input length {}",
            instance.len(),
            net.input_len()
        )));
    }
    net.predict(&to_input(instance))
}

pub fn predict_label<T: Scalar>(net: &Network<T>, instance: &EvaluationInstance) -> Result<bool> {
    Ok(predict(net, instance)? >= T::of(0.5))
}

/// Serialises a trained network in the parameter text format.
pub fn save_network<T: Scalar>(net: &Network<T>) -> String {
    let header = ParamsHeader {
        architecture: net.name().to_owned(),
        input_len: net.input_len(),
        seed: net.params().seed,
    };
    write_params(&header, net.specs(), net.params())
}

/// Rebuilds a network from [`save_network`] output.
pub fn load_network<T: Scalar>(text: &str) -> Result<(ArchitectureId, Network<T>)> {
    let (header, params) = read_params::<T>(text)?;
    let arch: ArchitectureId = header
        .architecture
        .parse()
        .map_err(|_| AaeError::parse(2, format!("unknown architecture '{}'", header.architecture)))?;
    let hidden = match arch {
        ArchitectureId::Gru => params
            .layers
            .get(1)
            .and_then(|l| l.get(1))
            .map(|b| b.len())
            .ok_or_else(|| AaeError::parse(2, "GRU parameters missing"))?,
        _ => DEFAULT_GRU_HIDDEN,
    };
    let net = Network::with_params(arch.name(), layer_specs(arch, hidden), header.input_len, params)?;
    Ok((arch, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble, Engine, StorageConfig};
    use crate::graphmodel::{generate_graph_stats, generate_workload, GraphProfile};

    fn conv_lengths(net: &Network<f64>) -> Vec<usize> {
        net.specs()
            .iter()
            .zip(&net.shapes()[1..])
            .filter(|(s, _)| matches!(s, LayerSpec::Conv1d { .. } | LayerSpec::Maxpool1d { .. }))
            .map(|(_, shape)| shape.len)
            .collect()
    }

    #[test]
    fn scnn_and_dcnn_layer_lengths() {
        let scnn = build::<f64>(ArchitectureId::Scnn, 256, 0).unwrap();
        assert_eq!(conv_lengths(&scnn), vec![254, 252, 84, 82, 80, 26]);
        assert_eq!(scnn.params().layers[7][0].shape(), &[1, 416]);

        let dcnn = build::<f64>(ArchitectureId::Dcnn, 256, 0).unwrap();
        assert_eq!(conv_lengths(&dcnn), vec![254, 252, 84, 82, 80, 26, 24, 22, 7]);
        assert_eq!(dcnn.params().layers[10][0].shape(), &[1, 112]);
    }

    #[test]
    fn conv_layer_counts() {
        let count = |arch| {
            layer_specs(arch, 8)
                .iter()
                .filter(|s| matches!(s, LayerSpec::Conv1d { .. }))
                .count()
        };
        assert_eq!(count(ArchitectureId::Scnn), 4);
        assert_eq!(count(ArchitectureId::Dcnn), 6);
        assert_eq!(count(ArchitectureId::Gru), 0);
    }

    #[test]
    fn short_input_fails_at_a_named_layer() {
        let err = build::<f64>(ArchitectureId::Scnn, 8, 0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, AaeError::Shape(_)));
        assert!(msg.contains("layer 4 (conv1d)"), "{msg}");
    }

    #[test]
    fn architecture_names_parse() {
        for arch in ArchitectureId::ALL {
            assert_eq!(arch.name().parse::<ArchitectureId>().unwrap(), arch);
            assert_eq!(arch.name().to_lowercase().parse::<ArchitectureId>().unwrap(), arch);
        }
        assert!(matches!("lstm".parse::<ArchitectureId>(), Err(AaeError::Validation(_))));
    }

    fn sample_instance(label: bool) -> EvaluationInstance {
        let g = generate_graph_stats(GraphProfile::FreebaseSmall, 0);
        let w = generate_workload(&g, &[0.38, 0.15, 0.02, 0.13, 0.32], 1).unwrap();
        let old = StorageConfig::unindexed(Engine::Columnar, 3);
        let new = StorageConfig::new(Engine::NativeGraph, vec![true, false, false]);
        assemble(&g, &w, &old, &new, 96).unwrap().with_label(label)
    }

    #[test]
    fn zero_head_predicts_one_half() {
        for arch in ArchitectureId::ALL {
            let mut net = build::<f64>(arch, 96, 3).unwrap();
            let head = net.params().layers.len() - 1;
            for t in net.params_mut().layers[head].iter_mut() {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            assert_eq!(predict(&net, &sample_instance(true)).unwrap(), 0.5, "{arch}");
        }
    }

    #[test]
    fn prediction_is_pure() {
        let net = build::<f64>(ArchitectureId::Gru, 96, 3).unwrap();
        let inst = sample_instance(false);
        let a = predict(&net, &inst).unwrap();
        assert_eq!(a, predict(&net, &inst).unwrap());
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let net = build::<f64>(ArchitectureId::Scnn, 128, 3).unwrap();
        assert!(matches!(predict(&net, &sample_instance(true)), Err(AaeError::Shape(_))));
        let mut net = build::<f64>(ArchitectureId::Scnn, 96, 3).unwrap();
        let mut short = sample_instance(true);
        short.vector.pop();
        short.mask.pop();
        let corpus = vec![sample_instance(true), short];
        assert!(matches!(train(&mut net, &corpus, &TrainConfig::default()), Err(AaeError::Validation(_))));
        assert!(matches!(train(&mut net, &[], &TrainConfig::default()), Err(AaeError::Validation(_))));
    }

    #[test]
    fn memorises_a_single_instance() {
        for arch in ArchitectureId::ALL {
            for label in [true, false] {
                let mut net = build::<f64>(arch, 96, 11).unwrap();
                let inst = sample_instance(label);
                let corpus = vec![inst.clone(); 4];
                let log = train(&mut net, &corpus, &TrainConfig { epochs: 50, ..TrainConfig::default() }).unwrap();
                let mut memorised = predict_label(&net, &inst).unwrap() == label;
                if !memorised {
                    // keep going past a perfect-accuracy stop that happened before the last update
                    train(&mut net, &corpus, &TrainConfig { epochs: 50, ..TrainConfig::default() }).unwrap();
                    memorised = predict_label(&net, &inst).unwrap() == label;
                }
                assert!(memorised, "{arch} label {label}: {:?}", log.last());
            }
        }
    }

    #[test]
    fn single_instance_loss_never_increases() {
        let mut net = build::<f64>(ArchitectureId::Scnn, 96, 5).unwrap();
        let inst = sample_instance(false);
        // force a miss first so the run does not stop on epoch one
        let head = net.params().layers.len() - 1;
        net.params_mut().layers[head][1].data_mut()[0] = 2.0;
        let log = train(&mut net, &[inst], &TrainConfig { epochs: 30, batch_size: 1, ..TrainConfig::default() }).unwrap();
        for pair in log.records.windows(2) {
            assert!(pair[1].mean_loss <= pair[0].mean_loss, "{pair:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus: Vec<EvaluationInstance> = (0..10).map(|i| sample_instance(i % 2 == 0)).collect();
        let run = || {
            let mut net = build::<f64>(ArchitectureId::Scnn, 96, 5).unwrap();
            let log = train(&mut net, &corpus, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
            (log, save_network(&net))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn save_and_load_round_trip() {
        for arch in ArchitectureId::ALL {
            let net = build_with_hidden::<f64>(arch, 96, 6, 21).unwrap();
            let text = save_network(&net);
            let (got_arch, back) = load_network::<f64>(&text).unwrap();
            assert_eq!(got_arch, arch);
            assert_eq!(back, net);
        }
    }

    #[test]
    fn f32_networks_train_too() {
        let mut net = build::<f32>(ArchitectureId::Scnn, 96, 2).unwrap();
        let corpus = vec![sample_instance(true); 2];
        let log = train(&mut net, &corpus, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
        assert!(log.records.iter().all(|r| r.mean_loss.is_finite()));
    }
}
