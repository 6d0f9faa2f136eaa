//! The order dependency monotonic network.
//!
//! Shared embeddings feed a shared bottom whose output `v` drives, for every
//! task `t`, one multi-distribution multi-expert block:
//!
//! * a distribution classification tower (softmax over sub-distributions)
//!   and a distribution ordinal tower (sigmoids over the same classes);
//! * per sub-distribution a bucket classification tower, a bucket ordinal
//!   tower and, for buckets with width, a bucket bias tower.
//!
//! The normalized bucket distribution `o_t` weights each sub-distribution's
//! bucket probabilities by the sub-distribution probability. From the second
//! task on, `o_{t-1}` (gradient stopped) passes through non-negative Mono
//! Units whose outputs are added to the classification logits of task `t`.

use serde::{Deserialize, Serialize};

use crate::codec::{BucketingScheme, DecodeMode, TaskScheme};
use crate::data::Slot;
use crate::error::{Error, Result};
use crate::nn::{embedding_table, Activation, DenseLayer, ParamId, ParamStore, Tape, Tensor2, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// Widths of the shared-bottom layers.
    pub bottom_dims: Vec<usize>,
    /// Hidden width of every two-layer tower.
    pub tower_hidden: usize,
    /// Lower bound on the Mono Unit hidden width, which is
    /// `max(mono_hidden_min, M_{t-1})`.
    pub mono_hidden_min: usize,
    pub hidden_activation: Activation,
    pub embedding_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 4,
            bottom_dims: vec![32],
            tower_hidden: 16,
            mono_hidden_min: 4,
            hidden_activation: Activation::Relu,
            embedding_init_std: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.tower_hidden == 0 || self.bottom_dims.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if matches!(self.hidden_activation, Activation::Softmax) {
            return Err(Error::Config("softmax is not a hidden activation".into()));
        }
        Ok(())
    }
}

/// Structural switches of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub mono: bool,
    pub bias_tower: bool,
}

/// Shared embedding tables followed by the shared-bottom perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBottom {
    pub slots: Vec<Slot>,
    pub embeddings: Vec<ParamId>,
    pub layers: Vec<DenseLayer>,
    pub embedding_dim: usize,
}

impl SharedBottom {
    pub fn new(
        store: &mut ParamStore,
        slots: &[Slot],
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Config(
                "at least one feature slot is required".into(),
            ));
        }
        let embeddings = slots
            .iter()
            .map(|s| {
                embedding_table(
                    store,
                    &format!("emb.{}", s.name),
                    s.vocab,
                    config.embedding_dim,
                    config.embedding_init_std,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(config.bottom_dims.len());
        let mut width = slots.len() * config.embedding_dim;
        for (i, &d) in config.bottom_dims.iter().enumerate() {
            layers.push(DenseLayer::new(
                store,
                &format!("bottom.{i}"),
                width,
                d,
                config.hidden_activation,
                false,
                seed,
            )?);
            width = d;
        }
        Ok(Self {
            slots: slots.to_vec(),
            embeddings,
            layers,
            embedding_dim: config.embedding_dim,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.slots.len() * self.embedding_dim, |l| l.out_dim)
    }

    /// Concatenated embedding lookups, one row per sample.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, ids: &[Vec<usize>]) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.slots.len());
        for (j, (slot, &table)) in self.slots.iter().zip(&self.embeddings).enumerate() {
            let mut column = Vec::with_capacity(ids.len());
            for row in ids {
                let id = *row.get(j).ok_or_else(|| Error::Dimension {
                    op: "embed",
                    left: format!("{} ids", row.len()),
                    right: format!("{} slots", self.slots.len()),
                })?;
                if id >= slot.vocab {
                    return Err(Error::OutOfRange(
                        "feature id",
                        format!("slot `{}`: id {id} >= vocabulary {}", slot.name, slot.vocab),
                    ));
                }
                column.push(id);
            }
            let t = tape.param(store, table);
            parts.push(tape.gather(t, &column)?);
        }
        tape.concat_cols(&parts)
    }

    /// The user representation `v` after the shared bottom.
    pub fn represent(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[Vec<usize>],
    ) -> Result<Var> {
        let mut h = self.embed(tape, store, ids)?;
        for layer in &self.layers {
            h = layer.apply(tape, store, h)?;
        }
        Ok(h)
    }
}

/// Two-layer perceptron producing raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl Tower {
    fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        config: &ModelConfig,
        out: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            hidden: DenseLayer::new(
                store,
                &format!("{name}.hidden"),
                input,
                config.tower_hidden,
                config.hidden_activation,
                false,
                seed,
            )?,
            output: DenseLayer::new(
                store,
                &format!("{name}.out"),
                config.tower_hidden,
                out,
                Activation::Identity,
                false,
                seed,
            )?,
        })
    }

    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, v: Var) -> Result<Var> {
        let h = self.hidden.apply(tape, store, v)?;
        self.output.apply(tape, store, h)
    }
}

/// Non-negative one-hidden-layer perceptron with a monotone activation:
/// every output coordinate is non-decreasing in every input coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoUnit {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl MonoUnit {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden_min: usize,
        out: usize,
        seed: u64,
    ) -> Result<Self> {
        let hidden = hidden_min.max(input);
        Ok(Self {
            hidden: DenseLayer::new(
                store,
                &format!("{name}.hidden"),
                input,
                hidden,
                Activation::Relu,
                true,
                seed,
            )?,
            output: DenseLayer::new(
                store,
                &format!("{name}.out"),
                hidden,
                out,
                Activation::Identity,
                true,
                seed,
            )?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, o_prev: Var) -> Result<Var> {
        let h = self.hidden.apply(tape, store, o_prev)?;
        self.output.apply(tape, store, h)
    }

    /// Logit offsets for a batch of upstream distributions.
    pub fn forward(&self, store: &ParamStore, o_prev: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let x = tape.constant(o_prev.clone());
        let y = self.apply(&mut tape, store, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [
            self.hidden.weight,
            self.hidden.bias,
            self.output.weight,
            self.output.bias,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubDistTowers {
    pub bct: Tower,
    pub bot: Tower,
    /// Absent when the sub-distribution has no bucket with width or the
    /// bias tower is switched off.
    pub bbt: Option<Tower>,
    pub mono_bct: Option<MonoUnit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTowers {
    pub dct: Tower,
    pub dot: Tower,
    pub mono_dct: Option<MonoUnit>,
    pub subs: Vec<SubDistTowers>,
}

impl TaskTowers {
    pub fn mono_units(&self) -> impl Iterator<Item = &MonoUnit> {
        self.mono_dct
            .iter()
            .chain(self.subs.iter().filter_map(|s| s.mono_bct.as_ref()))
    }
}

/// Tape handles of one task's outputs.
#[derive(Debug, Clone)]
pub struct TaskVars {
    pub p_c: Var,
    pub p_o: Var,
    pub q_c: Vec<Var>,
    pub q_o: Vec<Var>,
    pub q_b: Vec<Option<Var>>,
    pub o: Var,
}

#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub v: Var,
    pub tasks: Vec<TaskVars>,
}

/// Plain values of one task's outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutputs {
    pub p_c: Tensor2,
    pub p_o: Tensor2,
    pub q_c: Vec<Tensor2>,
    pub q_o: Vec<Tensor2>,
    pub q_b: Vec<Option<Tensor2>>,
    pub o: Tensor2,
}

impl TaskOutputs {
    fn read(tape: &Tape, vars: &TaskVars) -> Self {
        let val = |v: Var| tape.value(v).clone();
        Self {
            p_c: val(vars.p_c),
            p_o: val(vars.p_o),
            q_c: vars.q_c.iter().map(|&v| val(v)).collect(),
            q_o: vars.q_o.iter().map(|&v| val(v)).collect(),
            q_b: vars.q_b.iter().map(|v| v.map(val)).collect(),
            o: val(vars.o),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdmnNet {
    pub bottom: SharedBottom,
    pub tasks: Vec<TaskTowers>,
    pub scheme: BucketingScheme,
    pub components: Components,
}

impl OdmnNet {
    /// Registers every parameter in `store`. Tower output sizes follow the
    /// scheme: `S_t` for the distribution towers, `m_s` for the bucket
    /// classification and ordinal towers, `r_s` for the bias towers.
    pub fn new(
        store: &mut ParamStore,
        slots: &[Slot],
        scheme: &BucketingScheme,
        config: &ModelConfig,
        components: Components,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if scheme.num_tasks() == 0 {
            return Err(Error::Config("scheme has no tasks".into()));
        }
        let bottom = SharedBottom::new(store, slots, config, seed)?;
        let v_dim = bottom.output_dim();
        let mut tasks = Vec::with_capacity(scheme.num_tasks());
        for (t, ts) in scheme.tasks.iter().enumerate() {
            let prefix = format!("task{t}");
            let s_count = ts.num_sub_dists();
            let dct = Tower::new(
                store,
                &format!("{prefix}.dct"),
                v_dim,
                config,
                s_count,
                seed,
            )?;
            let dot = Tower::new(
                store,
                &format!("{prefix}.dot"),
                v_dim,
                config,
                s_count,
                seed,
            )?;
            let mut subs = Vec::with_capacity(s_count);
            for (s, sd) in ts.sub_dists.iter().enumerate() {
                let name = format!("{prefix}.sub{s}");
                let m = sd.num_buckets();
                let r = sd.num_bias_slots();
                let bct = Tower::new(store, &format!("{name}.bct"), v_dim, config, m, seed)?;
                let bot = Tower::new(store, &format!("{name}.bot"), v_dim, config, m, seed)?;
                let bbt = if components.bias_tower && r > 0 {
                    Some(Tower::new(
                        store,
                        &format!("{name}.bbt"),
                        v_dim,
                        config,
                        r,
                        seed,
                    )?)
                } else {
                    None
                };
                subs.push(SubDistTowers {
                    bct,
                    bot,
                    bbt,
                    mono_bct: None,
                });
            }
            tasks.push(TaskTowers {
                dct,
                dot,
                mono_dct: None,
                subs,
            });
        }
        // Mono Units are registered last and keyed by name, so every other
        // parameter is identical with or without them.
        if components.mono {
            for (t, task) in tasks.iter_mut().enumerate().skip(1) {
                let upstream = scheme.tasks[t - 1].num_buckets();
                let ts = &scheme.tasks[t];
                task.mono_dct = Some(MonoUnit::new(
                    store,
                    &format!("task{t}.mono_dct"),
                    upstream,
                    config.mono_hidden_min,
                    ts.num_sub_dists(),
                    seed,
                )?);
                for (s, sd) in ts.sub_dists.iter().enumerate() {
                    task.subs[s].mono_bct = Some(MonoUnit::new(
                        store,
                        &format!("task{t}.sub{s}.mono_bct"),
                        upstream,
                        config.mono_hidden_min,
                        sd.num_buckets(),
                        seed,
                    )?);
                }
            }
        }
        Ok(Self {
            bottom,
            tasks,
            scheme: scheme.clone(),
            components,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn decode_mode(&self) -> DecodeMode {
        if self.components.bias_tower {
            DecodeMode::Bias
        } else {
            DecodeMode::Midpoint
        }
    }

    pub fn mono_param_ids(&self) -> Vec<ParamId> {
        self.tasks
            .iter()
            .flat_map(|t| t.mono_units().flat_map(|m| m.param_ids()))
            .collect()
    }

    /// One task's block given the representation and, from the second task
    /// on, the upstream normalized bucket distribution.
    pub fn mdme_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        t: usize,
        v: Var,
        o_prev: Option<Var>,
    ) -> Result<TaskVars> {
        let towers = &self.tasks[t];
        let scheme = &self.scheme.tasks[t];
        if towers.subs.len() != scheme.num_sub_dists() {
            return Err(Error::Dimension {
                op: "mdme_forward",
                left: format!("{} sub-distribution towers", towers.subs.len()),
                right: format!("{} in scheme", scheme.num_sub_dists()),
            });
        }
        let upstream = match o_prev {
            Some(o) if towers.mono_dct.is_some() => Some(tape.stop_gradient(o)),
            _ => None,
        };

        let mut dct = towers.dct.logits(tape, store, v)?;
        if let (Some(mono), Some(o)) = (&towers.mono_dct, upstream) {
            let offset = mono.apply(tape, store, o)?;
            dct = tape.add(dct, offset)?;
        }
        let p_c = tape.softmax(dct);
        let dot = towers.dot.logits(tape, store, v)?;
        let p_o = tape.sigmoid(dot);

        let mut q_c = Vec::with_capacity(towers.subs.len());
        let mut q_o = Vec::with_capacity(towers.subs.len());
        let mut q_b = Vec::with_capacity(towers.subs.len());
        for sub in &towers.subs {
            let mut bct = sub.bct.logits(tape, store, v)?;
            if let (Some(mono), Some(o)) = (&sub.mono_bct, upstream) {
                let offset = mono.apply(tape, store, o)?;
                bct = tape.add(bct, offset)?;
            }
            q_c.push(tape.softmax(bct));
            let bot = sub.bot.logits(tape, store, v)?;
            q_o.push(tape.sigmoid(bot));
            q_b.push(match &sub.bbt {
                Some(tower) => {
                    let z = tower.logits(tape, store, v)?;
                    Some(tape.sigmoid(z))
                }
                None => None,
            });
        }

        let weighted = q_c
            .iter()
            .enumerate()
            .map(|(s, &q)| tape.mul_col(q, p_c, s))
            .collect::<Result<Vec<_>>>()?;
        let o = tape.concat_cols(&weighted)?;
        Ok(TaskVars {
            p_c,
            p_o,
            q_c,
            q_o,
            q_b,
            o,
        })
    }

    /// Records the full network for a batch of encoded rows.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[Vec<usize>],
    ) -> Result<ForwardVars> {
        self.forward_detached(tape, store, ids, None)
    }

    /// Like [`OdmnNet::forward`], but task `t ≥ 1` reads its upstream
    /// distribution from `upstream[t - 1]` instead of the live `o_{t-1}`.
    ///
    /// The upstream input is gradient-stopped either way; supplying it fixes
    /// its value too, which a finite-difference check needs.
    pub fn forward_detached(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[Vec<usize>],
        upstream: Option<&[Tensor2]>,
    ) -> Result<ForwardVars> {
        let v = self.bottom.represent(tape, store, ids)?;
        let mut tasks: Vec<TaskVars> = Vec::with_capacity(self.tasks.len());
        for t in 0..self.tasks.len() {
            let o_prev = match (t, upstream) {
                (0, _) => None,
                (_, Some(fixed)) => {
                    let o = fixed.get(t - 1).ok_or_else(|| Error::Dimension {
                        op: "forward_detached",
                        left: format!("{} upstream tensors", fixed.len()),
                        right: format!("{} tasks", self.tasks.len()),
                    })?;
                    Some(tape.constant(o.clone()))
                }
                (_, None) => tasks.last().map(|prev| prev.o),
            };
            tasks.push(self.mdme_forward(tape, store, t, v, o_prev)?);
        }
        Ok(ForwardVars { v, tasks })
    }

    /// Plain output values of every task.
    pub fn outputs(&self, store: &ParamStore, ids: &[Vec<usize>]) -> Result<Vec<TaskOutputs>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, store, ids)?;
        Ok(fwd
            .tasks
            .iter()
            .map(|t| TaskOutputs::read(&tape, t))
            .collect())
    }

    /// Hard-decoded estimates, `[row][task]`.
    pub fn predict(&self, store: &ParamStore, ids: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let outputs = self.outputs(store, ids)?;
        let mode = self.decode_mode();
        let mut estimates = vec![Vec::with_capacity(self.tasks.len()); ids.len()];
        for (out, scheme) in outputs.iter().zip(&self.scheme.tasks) {
            for (i, row) in estimates.iter_mut().enumerate() {
                row.push(decode_row(scheme, out, i, mode));
            }
        }
        Ok(estimates)
    }
}

fn decode_row(scheme: &TaskScheme, out: &TaskOutputs, i: usize, mode: DecodeMode) -> f64 {
    let q_c: Vec<&[f64]> = out.q_c.iter().map(|q| q.row(i)).collect();
    let q_b: Vec<Option<&[f64]>> = out
        .q_b
        .iter()
        .map(|q| q.as_ref().map(|q| q.row(i)))
        .collect();
    scheme.decode(out.p_c.row(i), &q_c, &q_b, mode)
}

/// `o = concat_s p_c[s]·q_c^{(s)}` in global bucket order.
pub fn normalized_bucket_distribution(p_c: &[f64], q_c: &[&[f64]]) -> Vec<f64> {
    p_c.iter()
        .zip(q_c)
        .flat_map(|(&p, q)| q.iter().map(move |&x| p * x))
        .collect()
}
