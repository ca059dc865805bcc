//! Epoch loop, evaluation and gradient checking for the full model.

mod gradcheck;
mod loss;
mod model;
mod optimizer;

pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckEntry, GradcheckReport};
pub use loss::{bce_loss, PROB_EPS};
pub use model::{encoder_input, Head, Model, ModelDims, ModelKind, Supervision, PIXEL_CENTER};
pub use optimizer::{OptimizerKind, OptimizerState};

use crate::error::{Error, Result};
use crate::metrics::{confusion, ppv_npv_f, MetricsReport};
use crate::rng::Rng;
use crate::simulator::{Dataset, DIGITS};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dims: ModelDims,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Divide δ by `delta_max` before it enters the cell.
    pub delta_normalize: bool,
    pub delta_max: f64,
    pub supervision: Supervision,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::TlstmV1,
            dims: ModelDims::default(),
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            epochs: 30,
            batch_size: 16,
            seed: 0,
            delta_normalize: true,
            delta_max: 10.0,
            supervision: Supervision::FinalStep,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        for (name, v) in [
            ("hidden", d.hidden),
            ("labels", d.labels),
            ("features", d.features),
            ("encoder_hidden", d.encoder_hidden),
            ("input", d.input),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::Config(format!("delta_max {}", self.delta_max)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::Config(format!(
                    "adam parameters beta1={beta1} beta2={beta2} epsilon={epsilon}"
                )));
            }
        }
        Ok(())
    }

    pub fn delta_divisor(&self) -> f64 {
        if self.delta_normalize {
            self.delta_max
        } else {
            1.0
        }
    }

    /// Canonical `key=value` listing, used for hashing.
    pub fn canonical(&self) -> String {
        let d = &self.dims;
        let optimizer = match self.optimizer {
            OptimizerKind::Sgd => "sgd".to_string(),
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                format!("adam({beta1:?},{beta2:?},{epsilon:?})")
            }
        };
        let supervision = match self.supervision {
            Supervision::FinalStep => "final",
            Supervision::AllSteps => "all",
        };
        format!(
            "model={}\nhidden={}\nlabels={}\nfeatures={}\nencoder_hidden={}\ninput={}\n\
             learning_rate={:?}\noptimizer={optimizer}\nepochs={}\nbatch_size={}\nseed={}\n\
             delta_normalize={}\ndelta_max={:?}\nsupervision={supervision}\nthreshold={:?}\n",
            self.model.name(),
            d.hidden,
            d.labels,
            d.features,
            d.encoder_hidden,
            d.input,
            self.learning_rate,
            self.epochs,
            self.batch_size,
            self.seed,
            self.delta_normalize,
            self.delta_max,
            self.threshold,
        )
    }

    pub fn hash(&self) -> String {
        crate::simulator::short_hash(&self.canonical())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub split: &'static str,
    pub mean_loss: f64,
}

/// CSV with header `epoch,split,mean_loss`.
pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,split,mean_loss\n");
    for e in log {
        out.push_str(&format!("{},{},{:.10}\n", e.epoch, e.split, e.mean_loss));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLoss>,
    pub optimizer_steps: u64,
}

pub fn initial_model(config: &TrainConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = Rng::substream(config.seed, "init", 0);
    Ok(Model::init(config.model, config.dims, config.delta_divisor(), &mut rng))
}

/// Trains from a fresh initialisation. The loss log has one `train` row per
/// epoch (mean loss over the epoch's minibatches, measured before each
/// update) and, when `held_out` is given, one `test` row per epoch.
pub fn train(dataset: &Dataset, config: &TrainConfig, held_out: Option<&Dataset>) -> Result<TrainOutcome> {
    let model = initial_model(config)?;
    train_from(model, dataset, config, held_out)
}

pub fn train_from(
    mut model: Model,
    dataset: &Dataset,
    config: &TrainConfig,
    held_out: Option<&Dataset>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if model.kind() != config.model || model.dims() != config.dims {
        return Err(Error::Incompatible(format!(
            "model {} {:?} vs config {} {:?}",
            model.kind().name(),
            model.dims(),
            config.model.name(),
            config.dims
        )));
    }
    for s in dataset.sequences.iter().chain(held_out.into_iter().flat_map(|d| &d.sequences)) {
        model.check_sample(s)?;
    }
    let mut optimizer = OptimizerState::new(config.optimizer, &model.block_sizes());
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::new();
    for epoch in 1..=config.epochs {
        let mut rng = Rng::substream(config.seed, "shuffle", epoch as u64);
        order.sort_unstable();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for (_, g) in grads.blocks_mut() {
                g.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss = model.accumulate_grad(&dataset.sequences[i], config.supervision, scale, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss of sequence {}", dataset.sequences[i].id)));
                }
                total += loss;
            }
            optimizer.apply(model.blocks_mut(), grads.blocks(), config.learning_rate)?;
        }
        log.push(EpochLoss {
            epoch,
            split: "train",
            mean_loss: total / dataset.len() as f64,
        });
        if let Some(test) = held_out {
            log.push(EpochLoss {
                epoch,
                split: "test",
                mean_loss: mean_loss(&model, test, config.supervision)?,
            });
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        optimizer_steps: optimizer.steps(),
    })
}

pub fn mean_loss(model: &Model, dataset: &Dataset, supervision: Supervision) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut total = 0.0;
    for s in &dataset.sequences {
        total += model.loss(s, supervision)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Final-step probabilities for every sequence, in dataset order.
pub fn predict_all(model: &Model, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset.sequences.iter().map(|s| model.predict(s)).collect()
}

/// Final-step label targets for every sequence.
pub fn final_targets(dataset: &Dataset) -> Vec<Vec<u8>> {
    dataset.sequences.iter().map(|s| s.last_labels().to_vec()).collect()
}

pub fn digit_names() -> Vec<String> {
    DIGITS.iter().map(|d| d.to_string()).collect()
}

/// Thresholded final-step predictions scored against the final labels.
pub fn evaluate(model: &Model, dataset: &Dataset, threshold: f64) -> Result<MetricsReport> {
    let preds = predict_all(model, dataset)?;
    let targets = final_targets(dataset);
    let counts = confusion(&preds, &targets, threshold)?;
    Ok(ppv_npv_f(&counts, &digit_names()))
}
