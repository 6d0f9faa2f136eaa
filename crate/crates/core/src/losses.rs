//! Training objectives.
//!
//! Every tape loss is a `1 x 1` scalar averaged over the samples its mask
//! admits; an empty mask yields a constant zero. Logs are taken of
//! probabilities floored at [`PROB_FLOOR`], and the floored region carries
//! zero gradient.

use serde::{Deserialize, Serialize};

use crate::codec::{BucketLayout, EncodedTarget, TaskScheme};
use crate::error::{Error, Result};
use crate::model::{ForwardVars, OdmnNet, TaskVars};
use crate::nn::{Function, Tape, Tensor2, Var};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Calibration strength.
    pub alpha: f64,
    /// Distillation weight at the sub-distribution level.
    pub beta: f64,
    /// Distillation weight at the bucket level, shared by all sub-distributions.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `−ln p[target]`.
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -floored_ln(probs[target])
}

/// `−[Σ_{u<y} ln P^u + Σ_{u≥y} ln(1 − P^u)]` for one sample.
pub fn ordinal_nll(p: &[f64], target: usize) -> f64 {
    p.iter()
        .enumerate()
        .map(|(u, &pu)| {
            if u < target {
                -floored_ln(pu)
            } else {
                -floored_ln(1.0 - pu)
            }
        })
        .sum()
}

/// Number of ordinal outputs with `P^u ≥ 0.5`.
pub fn ordinal_point_estimate(p: &[f64]) -> usize {
    p.iter().filter(|&&x| x >= 0.5).count()
}

/// Categorical distribution implied by ordinal outputs `P^u = P(l > u)`.
///
/// First differences with the last class absorbing `P^{U−2}`; negative
/// entries clamp to zero before renormalizing, and an all-zero result falls
/// back to uniform.
pub fn soft_label_from_ordinal(p: &[f64]) -> Vec<f64> {
    let u = p.len();
    if u <= 1 {
        return vec![1.0; u];
    }
    let mut pi = Vec::with_capacity(u);
    pi.push(1.0 - p[0]);
    for k in 1..u - 1 {
        pi.push(p[k - 1] - p[k]);
    }
    pi.push(p[u - 2]);
    for x in &mut pi {
        *x = x.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    if total > 0.0 {
        for x in &mut pi {
            *x /= total;
        }
    } else {
        pi.fill(1.0 / u as f64);
    }
    pi
}

/// `(1/B)·Σ_i Σ_t max(ŷ_t − ŷ_{t+1}, 0)` over rows of per-task estimates.
pub fn calibration_penalty(estimates: &[Vec<f64>]) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    let total: f64 = estimates
        .iter()
        .map(|row| row.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum::<f64>())
        .sum();
    total / estimates.len() as f64
}

fn check_rows(op: &'static str, value: &Tensor2, n: usize) -> Result<()> {
    if value.rows() != n {
        return Err(Error::Dimension {
            op,
            left: value.shape_str(),
            right: format!("{n} targets"),
        });
    }
    Ok(())
}

fn check_index(op: &'static str, value: &Tensor2, idx: usize) -> Result<()> {
    if idx >= value.cols() {
        return Err(Error::OutOfRange(
            op,
            format!("class {idx} of {}", value.shape_str()),
        ));
    }
    Ok(())
}

struct CrossEntropy {
    targets: Vec<Option<usize>>,
    count: usize,
}

impl Function for CrossEntropy {
    fn backward(&self, inputs: &[&Tensor2], _: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let p = inputs[0];
        let g = grad.item() / self.count as f64;
        let mut out = Tensor2::zeros(p.rows(), p.cols());
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(y) = *t {
                let v = p.get(i, y);
                if v > PROB_FLOOR {
                    out.set(i, y, -g / v);
                }
            }
        }
        vec![Some(out)]
    }
}

/// Mean cross-entropy over samples with a target.
pub fn ce_loss(tape: &mut Tape, probs: Var, targets: &[Option<usize>]) -> Result<Var> {
    let p = tape.value(probs);
    check_rows("ce_loss", p, targets.len())?;
    let mut total = 0.0;
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        if let Some(y) = *t {
            check_index("ce_loss", p, y)?;
            total += cross_entropy(p.row(i), y);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(tape.constant(Tensor2::scalar(0.0)));
    }
    let value = Tensor2::scalar(total / count as f64);
    Ok(tape.custom(
        &[probs],
        value,
        CrossEntropy {
            targets: targets.to_vec(),
            count,
        },
    ))
}

struct Ordinal {
    targets: Vec<Option<usize>>,
    count: usize,
}

impl Function for Ordinal {
    fn backward(&self, inputs: &[&Tensor2], _: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let p = inputs[0];
        let g = grad.item() / self.count as f64;
        let mut out = Tensor2::zeros(p.rows(), p.cols());
        for (i, t) in self.targets.iter().enumerate() {
            let Some(y) = *t else { continue };
            for u in 0..p.cols() {
                let v = p.get(i, u);
                let d = if u < y {
                    if v > PROB_FLOOR {
                        -1.0 / v
                    } else {
                        0.0
                    }
                } else if 1.0 - v > PROB_FLOOR {
                    1.0 / (1.0 - v)
                } else {
                    0.0
                };
                out.set(i, u, g * d);
            }
        }
        vec![Some(out)]
    }
}

/// Mean ordinal negative log-likelihood over samples with a target.
pub fn ordinal_loss(tape: &mut Tape, p: Var, targets: &[Option<usize>]) -> Result<Var> {
    let pv = tape.value(p);
    check_rows("ordinal_loss", pv, targets.len())?;
    let mut total = 0.0;
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        if let Some(y) = *t {
            check_index("ordinal_loss", pv, y)?;
            total += ordinal_nll(pv.row(i), y);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(tape.constant(Tensor2::scalar(0.0)));
    }
    let value = Tensor2::scalar(total / count as f64);
    Ok(tape.custom(
        &[p],
        value,
        Ordinal {
            targets: targets.to_vec(),
            count,
        },
    ))
}

struct Distill {
    teacher: Tensor2,
    mask: Vec<bool>,
    count: usize,
}

impl Function for Distill {
    fn backward(&self, inputs: &[&Tensor2], _: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let s = inputs[0];
        let g = grad.item() / self.count as f64;
        let mut out = Tensor2::zeros(s.rows(), s.cols());
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                continue;
            }
            for k in 0..s.cols() {
                let v = s.get(i, k);
                if v > PROB_FLOOR {
                    out.set(i, k, -g * self.teacher.get(i, k) / v);
                }
            }
        }
        vec![Some(out)]
    }
}

/// Mean `−Σ teacher·ln(student)` over masked samples. The teacher is a plain
/// value, so no gradient can reach whatever produced it.
pub fn distill_loss(
    tape: &mut Tape,
    student: Var,
    teacher: &Tensor2,
    mask: &[bool],
) -> Result<Var> {
    let s = tape.value(student);
    check_rows("distill_loss", s, mask.len())?;
    if !s.same_shape(teacher) {
        return Err(Error::Dimension {
            op: "distill_loss",
            left: s.shape_str(),
            right: teacher.shape_str(),
        });
    }
    let mut total = 0.0;
    let mut count = 0;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            total -= teacher
                .row(i)
                .iter()
                .zip(s.row(i))
                .map(|(t, &p)| t * floored_ln(p))
                .sum::<f64>();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(tape.constant(Tensor2::scalar(0.0)));
    }
    let value = Tensor2::scalar(total / count as f64);
    Ok(tape.custom(
        &[student],
        value,
        Distill {
            teacher: teacher.clone(),
            mask: mask.to_vec(),
            count,
        },
    ))
}

/// Soft labels for every row of an ordinal output tensor.
pub fn soft_labels(p: &Tensor2) -> Tensor2 {
    let rows: Vec<Vec<f64>> = (0..p.rows())
        .map(|i| soft_label_from_ordinal(p.row(i)))
        .collect();
    Tensor2::from_vec(p.rows(), p.cols(), rows.concat()).expect("soft labels keep the shape")
}

struct SquaredError {
    targets: Vec<Option<(usize, f64)>>,
    count: usize,
}

impl Function for SquaredError {
    fn backward(&self, inputs: &[&Tensor2], _: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let q = inputs[0];
        let g = grad.item() / self.count as f64;
        let mut out = Tensor2::zeros(q.rows(), q.cols());
        for (i, t) in self.targets.iter().enumerate() {
            if let Some((slot, y)) = *t {
                out.set(i, slot, 2.0 * g * (q.get(i, slot) - y));
            }
        }
        vec![Some(out)]
    }
}

/// Mean squared error between `q[i, slot]` and the target over masked
/// samples; one `(slot, target)` per admitted sample.
pub fn bias_loss(tape: &mut Tape, q_b: Var, targets: &[Option<(usize, f64)>]) -> Result<Var> {
    let q = tape.value(q_b);
    check_rows("bias_loss", q, targets.len())?;
    let mut total = 0.0;
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        if let Some((slot, y)) = *t {
            check_index("bias_loss", q, slot)?;
            total += (q.get(i, slot) - y).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(tape.constant(Tensor2::scalar(0.0)));
    }
    let value = Tensor2::scalar(total / count as f64);
    Ok(tape.custom(
        &[q_b],
        value,
        SquaredError {
            targets: targets.to_vec(),
            count,
        },
    ))
}

/// Mean squared error of a `B x 1` prediction against raw labels.
pub fn mse_loss(tape: &mut Tape, pred: Var, labels: &[f64]) -> Result<Var> {
    let targets: Vec<Option<(usize, f64)>> = labels.iter().map(|&y| Some((0, y))).collect();
    bias_loss(tape, pred, &targets)
}

struct SoftEstimate {
    layout: Vec<BucketLayout>,
    /// Input position of each sub-distribution's bias output, if any.
    bias_input: Vec<Option<usize>>,
}

impl SoftEstimate {
    fn bias(&self, inputs: &[&Tensor2], b: &BucketLayout, i: usize) -> Option<(usize, f64)> {
        let slot = b.bias_slot?;
        let pos = self.bias_input[b.sub_dist]?;
        Some((pos, inputs[pos].get(i, slot)))
    }

    fn value(&self, inputs: &[&Tensor2]) -> Tensor2 {
        let o = inputs[0];
        let mut out = Tensor2::zeros(o.rows(), 1);
        for i in 0..o.rows() {
            let mut acc = 0.0;
            for (k, b) in self.layout.iter().enumerate() {
                let r = self.bias(inputs, b, i).map_or(0.5, |(_, r)| r);
                acc += o.get(i, k) * (b.left + b.width * r);
            }
            out.set(i, 0, acc);
        }
        out
    }
}

impl Function for SoftEstimate {
    fn backward(&self, inputs: &[&Tensor2], _: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let o = inputs[0];
        let mut grads: Vec<Tensor2> = inputs
            .iter()
            .map(|x| Tensor2::zeros(x.rows(), x.cols()))
            .collect();
        for i in 0..o.rows() {
            let g = grad.get(i, 0);
            for (k, b) in self.layout.iter().enumerate() {
                match self.bias(inputs, b, i) {
                    Some((pos, r)) => {
                        grads[0].set(i, k, g * (b.left + b.width * r));
                        let slot = b.bias_slot.expect("bias implies slot");
                        let prev = grads[pos].get(i, slot);
                        grads[pos].set(i, slot, prev + g * o.get(i, k) * b.width);
                    }
                    None => grads[0].set(i, k, g * (b.left + b.width * 0.5)),
                }
            }
        }
        grads.into_iter().map(Some).collect()
    }
}

/// Differentiable `B x 1` estimate: the expected decode under `o`, with the
/// in-bucket position read from the bias tower (0.5 without one).
pub fn soft_estimate(tape: &mut Tape, scheme: &TaskScheme, task: &TaskVars) -> Result<Var> {
    let layout = scheme.layout();
    if tape.value(task.o).cols() != layout.len() {
        return Err(Error::Dimension {
            op: "soft_estimate",
            left: tape.value(task.o).shape_str(),
            right: format!("{} buckets", layout.len()),
        });
    }
    let mut inputs = vec![task.o];
    let mut bias_input = Vec::with_capacity(task.q_b.len());
    for q in &task.q_b {
        bias_input.push(q.map(|v| {
            inputs.push(v);
            inputs.len() - 1
        }));
    }
    let f = SoftEstimate { layout, bias_input };
    let values: Vec<&Tensor2> = inputs.iter().map(|&v| tape.value(v)).collect();
    let value = f.value(&values);
    Ok(tape.custom(&inputs, value, f))
}

/// Calibration penalty over adjacent `B x 1` estimates, recorded on the tape.
pub fn calibration_loss(tape: &mut Tape, estimates: &[Var]) -> Result<Var> {
    if estimates.len() < 2 {
        return Ok(tape.constant(Tensor2::scalar(0.0)));
    }
    let batch = tape.value(estimates[0]).rows();
    let mut terms = Vec::with_capacity(estimates.len() - 1);
    for w in estimates.windows(2) {
        let diff = tape.sub(w[0], w[1])?;
        let hinge = tape.relu(diff);
        terms.push((tape.scaled_sum(hinge, 1.0 / batch as f64), 1.0));
    }
    tape.weighted_sum(&terms)
}

/// Per-task encoded targets for one batch, `targets[t][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets {
    pub targets: Vec<Vec<EncodedTarget>>,
}

impl BatchTargets {
    pub fn batch_size(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Sub-distribution classes, all samples admitted.
    pub fn sub_dist_classes(&self, t: usize) -> Vec<Option<usize>> {
        self.targets[t].iter().map(|e| Some(e.sub_dist)).collect()
    }

    /// Local bucket classes, admitting only samples inside sub-distribution `s`.
    pub fn bucket_classes(&self, t: usize, s: usize) -> Vec<Option<usize>> {
        self.targets[t]
            .iter()
            .map(|e| (e.sub_dist == s).then_some(e.bucket))
            .collect()
    }

    pub fn membership(&self, t: usize, s: usize) -> Vec<bool> {
        self.targets[t].iter().map(|e| e.sub_dist == s).collect()
    }

    /// `(bias slot, bias)` for samples of sub-distribution `s` whose bucket
    /// has a bias slot.
    pub fn bias_targets(
        &self,
        scheme: &TaskScheme,
        t: usize,
        s: usize,
    ) -> Vec<Option<(usize, f64)>> {
        let buckets = &scheme.sub_dists[s].buckets;
        self.targets[t]
            .iter()
            .map(|e| {
                if e.sub_dist != s {
                    return None;
                }
                Some((buckets[e.bucket].bias_slot?, e.bias?))
            })
            .collect()
    }
}

/// Which objective families take part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSwitches {
    /// Ordinal towers are trained and distilled into the classifiers.
    pub distillation: bool,
    pub calibration: bool,
}

/// Summed component values of one evaluation of the joint loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub dist_ce: f64,
    pub dist_ordinal: f64,
    pub dist_distill: f64,
    pub bucket_ce: f64,
    pub bucket_ordinal: f64,
    pub bucket_distill: f64,
    pub bias: f64,
    pub calibration: f64,
}

impl LossBreakdown {
    pub fn add_scaled(&mut self, other: &LossBreakdown, w: f64) {
        self.total += w * other.total;
        self.dist_ce += w * other.dist_ce;
        self.dist_ordinal += w * other.dist_ordinal;
        self.dist_distill += w * other.dist_distill;
        self.bucket_ce += w * other.bucket_ce;
        self.bucket_ordinal += w * other.bucket_ordinal;
        self.bucket_distill += w * other.bucket_distill;
        self.bias += w * other.bias;
        self.calibration += w * other.calibration;
    }
}

/// The joint objective recorded on `tape`:
/// `Σ_t [L^c + L^o + β·L^dis + Σ_s (L^c + L^o + γ·L^dis + L^b)] + α·L^cali`.
///
/// Sub-distribution terms use every sample; bucket-level terms only the
/// samples of their sub-distribution. Calibration is taken once over all
/// adjacent task pairs on soft estimates.
pub fn total_loss(
    tape: &mut Tape,
    net: &OdmnNet,
    fwd: &ForwardVars,
    targets: &BatchTargets,
    weights: &LossWeights,
    switches: LossSwitches,
) -> Result<(Var, LossBreakdown)> {
    let teachers = Teachers::from_forward(tape, fwd);
    total_loss_with_teachers(tape, net, fwd, targets, weights, switches, &teachers)
}

/// Distillation targets derived from the ordinal towers of one forward pass.
/// They carry no gradient, so fixing them changes nothing but their value.
#[derive(Debug, Clone, PartialEq)]
pub struct Teachers {
    /// `dist[t]`: soft labels over the sub-distributions of task `t`.
    pub dist: Vec<Tensor2>,
    /// `bucket[t][s]`: soft labels over the buckets of sub-distribution `s`.
    pub bucket: Vec<Vec<Tensor2>>,
}

impl Teachers {
    pub fn from_forward(tape: &Tape, fwd: &ForwardVars) -> Self {
        Self {
            dist: fwd
                .tasks
                .iter()
                .map(|t| soft_labels(tape.value(t.p_o)))
                .collect(),
            bucket: fwd
                .tasks
                .iter()
                .map(|t| t.q_o.iter().map(|&q| soft_labels(tape.value(q))).collect())
                .collect(),
        }
    }
}

/// [`total_loss`] with externally supplied distillation targets.
pub fn total_loss_with_teachers(
    tape: &mut Tape,
    net: &OdmnNet,
    fwd: &ForwardVars,
    targets: &BatchTargets,
    weights: &LossWeights,
    switches: LossSwitches,
    teachers: &Teachers,
) -> Result<(Var, LossBreakdown)> {
    let (terms, mut parts) = loss_terms(tape, net, fwd, targets, weights, switches, teachers)?;
    let total = tape.weighted_sum(&terms)?;
    parts.total = tape.value(total).item();
    Ok((total, parts))
}

/// The weighted summands of the joint objective, before summation, with
/// zero-weight terms dropped.
pub fn loss_terms(
    tape: &mut Tape,
    net: &OdmnNet,
    fwd: &ForwardVars,
    targets: &BatchTargets,
    weights: &LossWeights,
    switches: LossSwitches,
    teachers: &Teachers,
) -> Result<(Vec<(Var, f64)>, LossBreakdown)> {
    let shape_ok = teachers.dist.len() == fwd.tasks.len()
        && teachers
            .bucket
            .iter()
            .zip(&fwd.tasks)
            .all(|(b, t)| b.len() == t.q_o.len());
    if !shape_ok {
        return Err(Error::Dimension {
            op: "total_loss",
            left: format!("{} task outputs", fwd.tasks.len()),
            right: format!("{} teacher sets", teachers.dist.len()),
        });
    }
    if targets.targets.len() != fwd.tasks.len() {
        return Err(Error::Dimension {
            op: "total_loss",
            left: format!("{} task outputs", fwd.tasks.len()),
            right: format!("{} target sets", targets.targets.len()),
        });
    }
    let mut terms: Vec<(Var, f64)> = Vec::new();
    let mut parts = LossBreakdown::default();
    let record = |tape: &Tape, terms: &mut Vec<(Var, f64)>, v: Var, w: f64, slot: &mut f64| {
        *slot += tape.value(v).item();
        if w != 0.0 {
            terms.push((v, w));
        }
    };

    for (t, task) in fwd.tasks.iter().enumerate() {
        let scheme = &net.scheme.tasks[t];
        let classes = targets.sub_dist_classes(t);
        let all = vec![true; classes.len()];
        let l = ce_loss(tape, task.p_c, &classes)?;
        record(tape, &mut terms, l, 1.0, &mut parts.dist_ce);
        if switches.distillation {
            let l = ordinal_loss(tape, task.p_o, &classes)?;
            record(tape, &mut terms, l, 1.0, &mut parts.dist_ordinal);
            let l = distill_loss(tape, task.p_c, &teachers.dist[t], &all)?;
            record(tape, &mut terms, l, weights.beta, &mut parts.dist_distill);
        }
        for s in 0..scheme.num_sub_dists() {
            let classes = targets.bucket_classes(t, s);
            let l = ce_loss(tape, task.q_c[s], &classes)?;
            record(tape, &mut terms, l, 1.0, &mut parts.bucket_ce);
            if switches.distillation {
                let l = ordinal_loss(tape, task.q_o[s], &classes)?;
                record(tape, &mut terms, l, 1.0, &mut parts.bucket_ordinal);
                let mask = targets.membership(t, s);
                let l = distill_loss(tape, task.q_c[s], &teachers.bucket[t][s], &mask)?;
                record(
                    tape,
                    &mut terms,
                    l,
                    weights.gamma,
                    &mut parts.bucket_distill,
                );
            }
            if let Some(q_b) = task.q_b[s] {
                let bias = targets.bias_targets(scheme, t, s);
                let l = bias_loss(tape, q_b, &bias)?;
                record(tape, &mut terms, l, 1.0, &mut parts.bias);
            }
        }
    }
    if switches.calibration && fwd.tasks.len() > 1 {
        let estimates = fwd
            .tasks
            .iter()
            .zip(&net.scheme.tasks)
            .map(|(task, scheme)| soft_estimate(tape, scheme, task))
            .collect::<Result<Vec<_>>>()?;
        let l = calibration_loss(tape, &estimates)?;
        record(tape, &mut terms, l, weights.alpha, &mut parts.calibration);
    }
    Ok((terms, parts))
}
