use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use fmn_autodiff::{AdamConfig, AdamState, Scalar, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{det_loss, seg_loss, soiling_loss};
use super::weights::{gradnorm_update, total_loss_var, GradNormConfig, PerTask, TaskWeights, TrainMode};
use crate::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_network, DecodeSettings, EvalReport};
use crate::model::{Network, NetworkConfig, OutputVars};

fn default_batch_size() -> usize {
    4
}

fn default_seed() -> u64 {
    42
}

fn default_learning_rate() -> f64 {
    AdamConfig::default().learning_rate
}

fn default_lambda_box() -> f64 {
    1.0
}

fn default_probe_batch() -> usize {
    4
}

fn default_validate() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Dataset manifest, or the directory holding it.
    pub manifest: PathBuf,
    /// Overrides the desk network; input size always follows the dataset.
    #[serde(default)]
    pub network: Option<NetworkConfig>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub gradnorm: GradNormConfig,
    #[serde(default = "default_lambda_box")]
    pub lambda_box: f64,
    /// Training images used to measure shared-layer gradient norms.
    #[serde(default = "default_probe_batch")]
    pub probe_batch: usize,
    #[serde(default)]
    pub decode: DecodeSettings,
    /// Score the validation split after every epoch.
    #[serde(default = "default_validate")]
    pub validate: bool,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, epochs: usize, manifest: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            epochs,
            batch_size: default_batch_size(),
            seed: default_seed(),
            manifest: manifest.into(),
            network: None,
            learning_rate: default_learning_rate(),
            gradnorm: GradNormConfig::default(),
            lambda_box: default_lambda_box(),
            probe_batch: default_probe_batch(),
            decode: DecodeSettings::default(),
            validate: default_validate(),
        }
    }

    /// Network configuration for images of the given size.
    pub fn network_config(&self, width: usize, height: usize) -> NetworkConfig {
        let mut net = self.network.clone().unwrap_or_else(NetworkConfig::desk);
        net.input_width = width;
        net.input_height = height;
        net.tasks = self.mode.tasks();
        net
    }
}

/// Mean unweighted task losses of one epoch plus the components used by the
/// overfit checks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSummary {
    pub seg: Option<f64>,
    pub det: Option<f64>,
    pub soil: Option<f64>,
    pub det_class_ce: Option<f64>,
    pub soil_tile_ce: Option<f64>,
}

impl LossSummary {
    pub fn per_task(&self) -> PerTask<f64> {
        [self.seg, self.det, self.soil]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Weights in force during the epoch.
    pub weights: TaskWeights,
    pub losses: LossSummary,
    pub val: Option<EvalReport>,
}

pub const LOG_HEADER: &str =
    "epoch,w_seg,w_det,w_soil,L_seg,L_det,L_soil,val_mIoU,val_mAP,val_TPR,val_FPR";

/// Renders the training log as CSV; inactive tasks and missing metrics are blank.
pub fn log_csv(log: &[EpochLog], mode: TrainMode) -> String {
    let tasks = mode.tasks();
    let active = [tasks.seg, tasks.det, tasks.soil];
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for row in log {
        let w = row.weights.as_array();
        let mut fields = vec![row.epoch.to_string()];
        fields.extend((0..3).map(|i| cell(active[i].then_some(w[i]))));
        fields.extend(row.losses.per_task().iter().map(|&l| cell(l)));
        let val = row.val.as_ref();
        fields.push(cell(val.and_then(|v| v.mean_iou)));
        fields.push(cell(val.and_then(|v| v.mean_ap)));
        fields.push(cell(val.and_then(|v| v.tpr)));
        fields.push(cell(val.and_then(|v| v.fpr)));
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct RecordedLosses {
    tasks: PerTask<Var>,
    det_class_ce: Option<Var>,
    soil_tile_ce: Option<Var>,
}

fn record_losses<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Network<T>,
    out: &OutputVars,
    sample: &Sample,
    lambda_box: f64,
) -> Result<RecordedLosses> {
    let seg = match out.seg_logits {
        Some(v) => Some(seg_loss(tape, v, &sample.mask, sample.horizon_row)?),
        None => None,
    };
    let det = match out.det_grid {
        Some(v) => Some(det_loss(tape, v, &sample.boxes, net.config(), lambda_box)?),
        None => None,
    };
    let soil = match (out.soiling_grid, out.soiling_indicators) {
        (Some(g), Some(s)) => Some(soiling_loss(tape, g, s, &sample.soiling)?),
        _ => None,
    };
    Ok(RecordedLosses {
        tasks: [seg, det.map(|d| d.total), soil.map(|s| s.total)],
        det_class_ce: det.map(|d| d.class_ce),
        soil_tile_ce: soil.map(|s| s.tile_ce),
    })
}

/// Records the forward pass and all task losses of one sample.
pub fn sample_losses<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Network<T>,
    sample: &Sample,
    lambda_box: f64,
    with_grad: bool,
) -> Result<(Vec<Var>, PerTask<Var>)> {
    let (params, out) = net.record(tape, &sample.image.to_tensor().cast(), with_grad)?;
    let losses = record_losses(tape, net, &out, sample, lambda_box)?;
    Ok((params, losses.tasks))
}

/// Stateful training loop over in-memory samples.
pub struct Trainer {
    config: TrainConfig,
    net: Network<f32>,
    adam: AdamState<f32>,
    weights: TaskWeights,
    initial_losses: Option<Vec<f64>>,
    shuffle_rng: ChaCha8Rng,
    log: Vec<EpochLog>,
}

impl Trainer {
    pub fn new(config: TrainConfig, net_config: NetworkConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let net = Network::build(net_config, config.seed)?;
        let adam = AdamState::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            net.params(),
        );
        Ok(Self {
            weights: config.mode.initial_weights(),
            shuffle_rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            net,
            adam,
            initial_losses: None,
            log: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn into_network(self) -> Network<f32> {
        self.net
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn weights(&self) -> TaskWeights {
        self.weights
    }

    /// One pass over `train` in seeded random order, then validation and the
    /// epoch-level weight update.
    pub fn run_epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<&EpochLog> {
        if train.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);

        let mut sums = [0.0f64; 5];
        let weights_used = self.weights;
        for batch in order.chunks(self.config.batch_size) {
            let mut grads: Vec<Vec<f32>> =
                self.net.params().iter().map(|p| vec![0.0; p.len()]).collect();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let mut tape = Tape::new();
                let (params, out) = self.net.record(&mut tape, &train[i].image.to_tensor(), true)?;
                let losses = record_losses(&mut tape, &self.net, &out, &train[i], self.config.lambda_box)?;
                let total = total_loss_var(&mut tape, losses.tasks, &self.weights)?;
                tape.backward(total)?;
                for (acc, &p) in grads.iter_mut().zip(&params) {
                    if let Some(g) = tape.grad(p) {
                        for (a, &v) in acc.iter_mut().zip(g) {
                            *a += v * scale;
                        }
                    }
                }
                let scalars = [
                    losses.tasks[0],
                    losses.tasks[1],
                    losses.tasks[2],
                    losses.det_class_ce,
                    losses.soil_tile_ce,
                ];
                for (s, v) in sums.iter_mut().zip(scalars) {
                    if let Some(v) = v {
                        *s += tape.value(v).item() as f64;
                    }
                }
            }
            self.adam.step(self.net.params_mut(), &grads)?;
        }

        let n = train.len() as f64;
        let tasks = self.config.mode.tasks();
        let mean = |i: usize, on: bool| on.then(|| sums[i] / n);
        let losses = LossSummary {
            seg: mean(0, tasks.seg),
            det: mean(1, tasks.det),
            soil: mean(2, tasks.soil),
            det_class_ce: mean(3, tasks.det),
            soil_tile_ce: mean(4, tasks.soil),
        };

        let val_report = if self.config.validate && !val.is_empty() {
            Some(evaluate_network(&self.net, val, &self.config.decode, "val")?)
        } else {
            None
        };

        if self.config.mode.is_adaptive() {
            self.update_weights(train, &losses)?;
        }

        self.log.push(EpochLog {
            epoch: self.log.len() + 1,
            weights: weights_used,
            losses,
            val: val_report,
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Gradient norm of each unweighted task loss with respect to the last
    /// shared encoder kernel, averaged over the probe batch.
    pub fn shared_gradient_norms(&self, probe: &[Sample]) -> Result<Vec<f64>> {
        let layer = self.net.last_shared_layer();
        let active: Vec<usize> = active_tasks(self.config.mode);
        let len = self.net.params()[layer].len();
        let mut grads = vec![vec![0.0f64; len]; active.len()];
        for sample in probe {
            let mut tape = Tape::new();
            let (params, losses) =
                sample_losses(&mut tape, &self.net, sample, self.config.lambda_box, true)?;
            for (acc, &task) in grads.iter_mut().zip(&active) {
                let loss = losses[task].expect("active task has a loss");
                tape.backward(loss)?;
                if let Some(g) = tape.grad(params[layer]) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v as f64 / probe.len() as f64;
                    }
                }
            }
        }
        Ok(grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect())
    }

    fn update_weights(&mut self, train: &[Sample], losses: &LossSummary) -> Result<()> {
        let active = active_tasks(self.config.mode);
        let per_task = losses.per_task();
        let current: Vec<f64> = active
            .iter()
            .map(|&t| per_task[t].expect("active task has a loss"))
            .collect();
        let initial = self
            .initial_losses
            .get_or_insert_with(|| current.clone())
            .clone();
        if initial.iter().any(|&l| l <= 0.0) {
            return Ok(());
        }
        let probe = &train[..self.config.probe_batch.clamp(1, train.len())];
        let norms = self.shared_gradient_norms(probe)?;
        let w = self.weights.as_array();
        let old: Vec<f64> = active.iter().map(|&t| w[t]).collect();
        let new = gradnorm_update(&old, &current, &initial, &norms, &self.config.gradnorm);
        let mut all = w;
        for (&t, v) in active.iter().zip(new) {
            all[t] = v;
        }
        self.weights = TaskWeights::from_array(all);
        Ok(())
    }
}

fn active_tasks(mode: TrainMode) -> Vec<usize> {
    let t = mode.tasks();
    [t.seg, t.det, t.soil]
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    pub log: Vec<EpochLog>,
}

/// Trains on in-memory splits. `observer` sees every epoch and may stop early.
pub fn train_on(
    config: &TrainConfig,
    net_config: NetworkConfig,
    train: &[Sample],
    val: &[Sample],
    mut observer: impl FnMut(&EpochLog, &Network<f32>) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), net_config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch(train, val)?;
        let last = trainer.log.last().expect("epoch logged");
        if observer(last, &trainer.net).is_break() {
            break;
        }
    }
    Ok(TrainOutcome {
        log: trainer.log.clone(),
        network: trainer.into_network(),
    })
}

/// Loads the dataset named by `config.manifest` and trains on its train split.
pub fn train(
    config: &TrainConfig,
    observer: impl FnMut(&EpochLog, &Network<f32>) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    let dataset = Dataset::open(&config.manifest)?;
    let m = &dataset.manifest;
    let net_config = config.network_config(m.width, m.height);
    net_config.validate()?;
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            network: Network::build(net_config, config.seed)?,
            log: Vec::new(),
        });
    }
    if m.train.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: training split is empty",
            config.manifest.display()
        )));
    }
    let train = dataset.load_split(Split::Train)?;
    let val = if config.validate {
        dataset.load_split(Split::Val)?
    } else {
        Vec::new()
    };
    train_on(config, net_config, &train, &val, observer)
}

pub fn write_log(path: &Path, log: &[EpochLog], mode: TrainMode) -> Result<()> {
    std::fs::write(path, log_csv(log, mode)).map_err(|e| Error::io(path, e))
}
