use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Flags, RunConfig};
use crate::codec::{BucketingScheme, EncodedTarget};
use crate::data::{Dataset, Discretizer, FeatureEncoder, FeatureSchema};
use crate::error::{Error, Result};
use crate::io::{mix64, read_versioned_json, write_versioned_json};
use crate::losses::{mse_loss, total_loss, BatchTargets, LossBreakdown, LossSwitches};
use crate::metrics::{evaluate_predictions, EvalReport};
use crate::model::{BaselineNet, Components, OdmnNet};
use crate::nn::{adam_step, AdamState, ParamStore, Tape};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Odmn(OdmnNet),
    Baseline(BaselineNet),
}

/// Deterministic train/validation partition of row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// A row goes to validation when its seeded hash falls below `fraction`.
pub fn split_rows(n: usize, seed: u64, fraction: f64) -> Split {
    let key = mix64(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for i in 0..n {
        let u = (mix64(key ^ i as u64) >> 11) as f64 / (1u64 << 53) as f64;
        if u < fraction {
            validation.push(i);
        } else {
            train.push(i);
        }
    }
    Split { train, validation }
}

/// Everything needed to turn raw rows into estimates.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: RunConfig,
    pub flags: Flags,
    /// Indices into the schema's horizons of the modeled tasks.
    pub tasks: Vec<usize>,
    pub schema: FeatureSchema,
    pub discretizer: Discretizer,
    pub scheme: BucketingScheme,
    pub network: Network,
    pub store: ParamStore,
    encoder: FeatureEncoder,
}

impl TrainedModel {
    fn build(
        config: &RunConfig,
        tasks: Vec<usize>,
        schema: FeatureSchema,
        discretizer: Discretizer,
        scheme: BucketingScheme,
    ) -> Result<Self> {
        let flags = config.flags();
        if scheme.num_tasks() != tasks.len() {
            return Err(Error::Config(format!(
                "scheme has {} tasks, the run models {}",
                scheme.num_tasks(),
                tasks.len()
            )));
        }
        let encoder = FeatureEncoder::new(&schema, &discretizer)?;
        let mut store = ParamStore::new();
        let network = if config.baseline {
            Network::Baseline(BaselineNet::new(
                &mut store,
                encoder.slots(),
                tasks.len(),
                &config.model,
                config.seed,
            )?)
        } else {
            Network::Odmn(OdmnNet::new(
                &mut store,
                encoder.slots(),
                &scheme,
                &config.model,
                Components {
                    mono: flags.mono,
                    bias_tower: flags.bias_tower,
                },
                config.seed,
            )?)
        };
        Ok(Self {
            config: config.clone(),
            flags,
            tasks,
            schema,
            discretizer,
            scheme,
            network,
            store,
            encoder,
        })
    }

    pub fn horizons(&self) -> Vec<u32> {
        self.tasks
            .iter()
            .map(|&t| self.schema.horizons[t])
            .collect()
    }

    /// Encoded ids of every row; refuses data written under another schema.
    pub fn encode(&self, dataset: &Dataset) -> Result<Vec<Vec<usize>>> {
        let (expected, found) = (self.schema.hash(), dataset.schema.hash());
        if expected != found {
            return Err(Error::HashMismatch {
                what: "schema",
                expected,
                found,
            });
        }
        Ok(dataset
            .rows
            .iter()
            .map(|r| self.encoder.encode(r))
            .collect())
    }

    pub fn predict_ids(&self, ids: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        match &self.network {
            Network::Odmn(net) => net.predict(&self.store, ids),
            Network::Baseline(net) => net.predict(&self.store, ids),
        }
    }

    /// Estimates `[row][task]` for the modeled horizons.
    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        let ids = self.encode(dataset)?;
        self.predict_ids(&ids)
    }

    fn labels_of(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        if !dataset.has_labels() {
            return Err(Error::Config("evaluation needs labelled rows".into()));
        }
        Ok(dataset
            .rows
            .iter()
            .map(|r| self.tasks.iter().map(|&t| r.labels[t]).collect())
            .collect())
    }

    pub fn evaluate(&self, dataset: &Dataset) -> Result<EvalReport> {
        let estimates = self.predict(dataset)?;
        let labels = self.labels_of(dataset)?;
        evaluate_predictions(&labels, &estimates, &self.scheme, &self.horizons())
    }

    /// Loads the inference half of a checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.verify()?;
        let mut model = Self::build(
            &ckpt.config,
            ckpt.tasks.clone(),
            ckpt.schema.clone(),
            ckpt.discretizer.clone(),
            ckpt.scheme.clone(),
        )?;
        for (_, p) in ckpt.params.iter() {
            if p.value.data().len() != p.value.rows() * p.value.cols() || !p.value.is_finite() {
                return Err(Error::Format(format!("malformed parameter `{}`", p.name)));
            }
        }
        model.store.copy_values_from(&ckpt.params)?;
        Ok(model)
    }
}

/// One epoch's training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    /// Sample-weighted mean of every loss component.
    pub train: LossBreakdown,
    pub validation: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: String,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub scheme: BucketingScheme,
    pub scheme_hash: String,
    pub discretizer: Discretizer,
    pub discretizer_hash: String,
    pub tasks: Vec<usize>,
    pub params: ParamStore,
    pub adam: AdamState,
    pub epoch: usize,
    pub log: Vec<EpochLog>,
}

impl Checkpoint {
    /// Recomputes every stored hash.
    pub fn verify(&self) -> Result<()> {
        let checks = [
            ("config", &self.config_hash, self.config.hash()),
            ("schema", &self.schema_hash, self.schema.hash()),
            ("scheme", &self.scheme_hash, self.scheme.hash()),
            (
                "discretizer",
                &self.discretizer_hash,
                self.discretizer.hash(),
            ),
        ];
        for (what, expected, found) in checks {
            if *expected != found {
                return Err(Error::HashMismatch {
                    what,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_versioned_json(path, CHECKPOINT_FORMAT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = read_versioned_json(path, CHECKPOINT_FORMAT_VERSION)?;
        ckpt.verify()?;
        Ok(ckpt)
    }
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_versioned_json(path, REPORT_FORMAT_VERSION, report)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    read_versioned_json(path, REPORT_FORMAT_VERSION)
}

/// Mini-batch Adam training of one configuration on one dataset.
pub struct Trainer {
    pub model: TrainedModel,
    pub adam: AdamState,
    pub epoch: usize,
    pub log: Vec<EpochLog>,
    pub split: Split,
    ids: Vec<Vec<usize>>,
    labels: Vec<Vec<f64>>,
    /// `targets[task][row]`.
    targets: Vec<Vec<EncodedTarget>>,
}

impl Trainer {
    /// Splits the data, fits the discretizer and (unless given) the bucketing
    /// scheme on the training rows, and initializes parameters.
    pub fn new(
        config: &RunConfig,
        dataset: &Dataset,
        scheme: Option<BucketingScheme>,
    ) -> Result<Self> {
        config.validate()?;
        dataset.schema.validate()?;
        if dataset.is_empty() || !dataset.has_labels() {
            return Err(Error::Config(
                "training needs a non-empty labelled dataset".into(),
            ));
        }
        let split = split_rows(dataset.len(), config.seed, config.validation_fraction);
        if split.train.is_empty() || split.validation.is_empty() {
            return Err(Error::Config(format!(
                "{} rows leave an empty train or validation split",
                dataset.len()
            )));
        }
        let flags = config.flags();
        let tasks: Vec<usize> = if flags.single_task {
            vec![dataset.schema.num_tasks() - 1]
        } else {
            (0..dataset.schema.num_tasks()).collect()
        };
        let train_rows = dataset.subset(&split.train).rows;
        let (discretizer, _) = Discretizer::fit(&train_rows, &dataset.schema)?;
        let scheme = match scheme {
            Some(s) => s,
            None => {
                let labels: Vec<Vec<f64>> = tasks
                    .iter()
                    .map(|&t| train_rows.iter().map(|r| r.labels[t]).collect())
                    .collect();
                BucketingScheme::fit(&labels, &config.bucket_configs(tasks.len())?)?.0
            }
        };
        let model =
            TrainedModel::build(config, tasks, dataset.schema.clone(), discretizer, scheme)?;
        let adam = AdamState::new(&model.store);
        Self::assemble(model, adam, 0, Vec::new(), split, dataset)
    }

    fn assemble(
        model: TrainedModel,
        adam: AdamState,
        epoch: usize,
        log: Vec<EpochLog>,
        split: Split,
        dataset: &Dataset,
    ) -> Result<Self> {
        let ids = model.encode(dataset)?;
        let labels = model.labels_of(dataset)?;
        let mut targets = Vec::with_capacity(model.tasks.len());
        for t in 0..model.tasks.len() {
            let column: Vec<f64> = labels.iter().map(|r| r[t]).collect();
            let (encoded, _) = model.scheme.encode_all(t, &column);
            let clamps = split.train.iter().filter(|&&i| encoded[i].clamped).count();
            if clamps > 0 {
                warn!(
                    "task {t}: {clamps} training labels fall outside the scheme and were clamped"
                );
            }
            targets.push(encoded);
        }
        Ok(Self {
            model,
            adam,
            epoch,
            log,
            split,
            ids,
            labels,
            targets,
        })
    }

    /// Continues a run from a checkpoint on the dataset it was trained on.
    pub fn resume(ckpt: &Checkpoint, dataset: &Dataset) -> Result<Self> {
        let model = TrainedModel::from_checkpoint(ckpt)?;
        if ckpt.adam.first_moments().len() != model.store.len() {
            return Err(Error::Format(
                "optimizer state does not match parameters".into(),
            ));
        }
        let split = split_rows(
            dataset.len(),
            ckpt.config.seed,
            ckpt.config.validation_fraction,
        );
        Self::assemble(
            model,
            ckpt.adam.clone(),
            ckpt.epoch,
            ckpt.log.clone(),
            split,
            dataset,
        )
    }

    pub fn config(&self) -> &RunConfig {
        &self.model.config
    }

    /// Number of clamped labels among training rows, per task.
    pub fn training_clamps(&self) -> Vec<usize> {
        self.targets
            .iter()
            .map(|enc| self.split.train.iter().filter(|&&i| enc[i].clamped).count())
            .collect()
    }

    fn step(&mut self, batch: &[usize]) -> Result<LossBreakdown> {
        let ids: Vec<Vec<usize>> = batch.iter().map(|&i| self.ids[i].clone()).collect();
        let mut tape = Tape::new();
        let model = &self.model;
        let (loss, parts) = match &model.network {
            Network::Odmn(net) => {
                let fwd = net.forward(&mut tape, &model.store, &ids)?;
                let targets = BatchTargets {
                    targets: self
                        .targets
                        .iter()
                        .map(|enc| batch.iter().map(|&i| enc[i]).collect())
                        .collect(),
                };
                let switches = LossSwitches {
                    distillation: model.flags.distillation,
                    calibration: model.flags.calibration,
                };
                total_loss(&mut tape, net, &fwd, &targets, &model.config.loss, switches)?
            }
            Network::Baseline(net) => {
                let heads = net.forward(&mut tape, &model.store, &ids)?;
                let mut terms = Vec::with_capacity(heads.len());
                for (t, &h) in heads.iter().enumerate() {
                    let y: Vec<f64> = batch.iter().map(|&i| self.labels[i][t]).collect();
                    terms.push((mse_loss(&mut tape, h, &y)?, 1.0));
                }
                let total = tape.weighted_sum(&terms)?;
                let parts = LossBreakdown {
                    total: tape.value(total).item(),
                    ..LossBreakdown::default()
                };
                (total, parts)
            }
        };
        if !parts.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss in epoch {}",
                self.epoch + 1
            )));
        }
        let grads = tape.backward(loss)?;
        adam_step(
            &mut self.model.store,
            &grads,
            &mut self.adam,
            &self.model.config.learning_rates,
        )?;
        Ok(parts)
    }

    /// One pass over the shuffled training rows followed by validation.
    pub fn train_epoch(&mut self) -> Result<&EpochLog> {
        let seed = self.model.config.seed;
        let mut order = self.split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(mix64(seed) ^ self.epoch as u64));
        order.shuffle(&mut rng);
        let mut mean = LossBreakdown::default();
        let mut steps = 0;
        let n = order.len() as f64;
        for batch in order.chunks(self.model.config.batch_size) {
            let parts = self.step(batch)?;
            mean.add_scaled(&parts, batch.len() as f64 / n);
            steps += 1;
        }
        self.epoch += 1;
        let validation = match self.validation_report() {
            Ok(r) => Some(strip_curves(r)),
            Err(Error::UndefinedMetric(m)) => {
                warn!("epoch {}: validation metrics undefined: {m}", self.epoch);
                None
            }
            Err(e) => return Err(e),
        };
        info!(
            "epoch {} loss {:.6} val mutual gini {}",
            self.epoch,
            mean.total,
            validation.as_ref().map_or("n/a".to_string(), |r| format!(
                "{:.6}",
                r.last_task().mutual_gini
            ))
        );
        self.log.push(EpochLog {
            epoch: self.epoch,
            steps,
            train: mean,
            validation,
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Trains until the configured epoch budget is reached.
    pub fn train(&mut self) -> Result<()> {
        while self.epoch < self.model.config.epochs {
            self.train_epoch()?;
        }
        Ok(())
    }

    fn report_on(&self, rows: &[usize]) -> Result<EvalReport> {
        let ids: Vec<Vec<usize>> = rows.iter().map(|&i| self.ids[i].clone()).collect();
        let labels: Vec<Vec<f64>> = rows.iter().map(|&i| self.labels[i].clone()).collect();
        let estimates = self.model.predict_ids(&ids)?;
        evaluate_predictions(
            &labels,
            &estimates,
            &self.model.scheme,
            &self.model.horizons(),
        )
    }

    pub fn validation_report(&self) -> Result<EvalReport> {
        self.report_on(&self.split.validation)
    }

    pub fn train_report(&self) -> Result<EvalReport> {
        self.report_on(&self.split.train)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let m = &self.model;
        Checkpoint {
            config: m.config.clone(),
            config_hash: m.config.hash(),
            schema: m.schema.clone(),
            schema_hash: m.schema.hash(),
            scheme: m.scheme.clone(),
            scheme_hash: m.scheme.hash(),
            discretizer: m.discretizer.clone(),
            discretizer_hash: m.discretizer.hash(),
            tasks: m.tasks.clone(),
            params: m.store.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            log: self.log.clone(),
        }
    }
}

fn strip_curves(mut r: EvalReport) -> EvalReport {
    for t in &mut r.tasks {
        t.true_curve = None;
        t.model_curve = None;
    }
    r
}

/// Trains the plain-MSE regressor for `config`.
pub fn train_baseline(config: &RunConfig, dataset: &Dataset) -> Result<Checkpoint> {
    let config = RunConfig {
        baseline: true,
        ..config.clone()
    };
    let mut trainer = Trainer::new(&config, dataset, None)?;
    trainer.train()?;
    Ok(trainer.checkpoint())
}

/// Trains `config` from scratch.
pub fn train(config: &RunConfig, dataset: &Dataset) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(config, dataset, None)?;
    trainer.train()?;
    Ok(trainer.checkpoint())
}

/// Evaluates a checkpoint on labelled data.
pub fn evaluate(ckpt: &Checkpoint, dataset: &Dataset) -> Result<EvalReport> {
    TrainedModel::from_checkpoint(ckpt)?.evaluate(dataset)
}
