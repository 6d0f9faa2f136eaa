//! Distribution segmentation and bucketing of LTV labels.
//!
//! Each task's label range is cut into sub-distributions: configured
//! high-frequency values (typically `0`) become singleton sub-distributions,
//! and the remaining values are split at configured cut points into ranges.
//! Ranges are bucketed at equal frequency. Inside a bucket a label is
//! described by its min-max normalized position (the bias coefficient),
//! using the smallest and largest training label that fell in the bucket.
//! A bucket whose training labels are all equal is a singleton bucket and
//! carries no bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::equal_frequency_cuts;
use crate::error::{Error, Result};
use crate::io::{read_versioned_json, sha256_hex, write_versioned_json};

pub const SCHEME_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BucketConfig {
    /// Values that form their own sub-distribution.
    pub singletons: Vec<f64>,
    /// Boundaries between range sub-distributions; a cut `c` puts `c` in the
    /// lower range.
    pub cut_points: Vec<f64>,
    /// Requested bucket count for the `j`-th interval between cut points;
    /// a single entry applies to every interval.
    pub buckets_per_range: Vec<usize>,
}

impl Default for BucketConfig {
    fn default() -> Self {
        Self {
            singletons: vec![0.0],
            cut_points: Vec::new(),
            buckets_per_range: vec![8],
        }
    }
}

impl BucketConfig {
    fn buckets_for(&self, interval: usize) -> usize {
        match self.buckets_per_range.as_slice() {
            [one] => *one,
            many => many.get(interval).copied().unwrap_or(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.buckets_per_range.is_empty() || self.buckets_per_range.contains(&0) {
            return Err(Error::Config(
                "buckets_per_range entries must be >= 1".into(),
            ));
        }
        if self.buckets_per_range.len() > 1
            && self.buckets_per_range.len() != self.cut_points.len() + 1
        {
            return Err(Error::Config(format!(
                "{} cut points define {} ranges but {} bucket counts were given",
                self.cut_points.len(),
                self.cut_points.len() + 1,
                self.buckets_per_range.len()
            )));
        }
        if self
            .singletons
            .iter()
            .chain(&self.cut_points)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config(
                "singletons and cut points must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub global_index: usize,
    /// Exclusive nominal lower edge; `None` is unbounded.
    pub lower_edge: Option<f64>,
    /// Inclusive nominal upper edge; `None` is unbounded.
    pub upper_edge: Option<f64>,
    /// Smallest training label in the bucket.
    pub min: f64,
    /// Largest training label in the bucket.
    pub max: f64,
    pub count: usize,
    /// Output slot of the bias tower, absent for singleton buckets.
    pub bias_slot: Option<usize>,
}

impl Bucket {
    pub fn is_singleton(&self) -> bool {
        self.bias_slot.is_none()
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn value_at(&self, bias: f64) -> f64 {
        self.min + bias * self.width()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubDistKind {
    Singleton {
        value: f64,
    },
    Range {
        lower: Option<f64>,
        upper: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubDistribution {
    pub kind: SubDistKind,
    pub buckets: Vec<Bucket>,
}

impl SubDistribution {
    /// Number of buckets `m`.
    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// Number of non-singleton buckets `r`.
    pub fn num_bias_slots(&self) -> usize {
        self.buckets.iter().filter(|b| !b.is_singleton()).count()
    }

    fn contains(&self, v: f64) -> bool {
        match self.kind {
            SubDistKind::Singleton { value } => v == value,
            SubDistKind::Range { lower, upper } => {
                lower.is_none_or(|lo| v > lo) && upper.is_none_or(|hi| v <= hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScheme {
    pub sub_dists: Vec<SubDistribution>,
}

/// Targets derived from one raw label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedTarget {
    pub sub_dist: usize,
    /// Bucket index local to the sub-distribution.
    pub bucket: usize,
    pub global_bucket: usize,
    /// In-bucket bias coefficient in `[0, 1]`, absent for singleton buckets.
    pub bias: Option<f64>,
    /// The label fell outside the fitted ranges and was clamped.
    pub clamped: bool,
}

/// Location and decode constants of one global bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketLayout {
    pub sub_dist: usize,
    pub local: usize,
    pub left: f64,
    pub width: f64,
    pub bias_slot: Option<usize>,
}

/// How the in-bucket position is chosen when decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// `min + bias·(max − min)` with the bias read from the bias tower.
    Bias,
    /// `(min + max) / 2`, used when no bias tower is trained.
    Midpoint,
}

impl TaskScheme {
    pub fn num_sub_dists(&self) -> usize {
        self.sub_dists.len()
    }

    /// Total bucket count `M` across sub-distributions.
    pub fn num_buckets(&self) -> usize {
        self.sub_dists
            .iter()
            .map(SubDistribution::num_buckets)
            .sum()
    }

    pub fn buckets(&self) -> impl Iterator<Item = &Bucket> {
        self.sub_dists.iter().flat_map(|s| s.buckets.iter())
    }

    /// Global bucket order with decode constants.
    pub fn layout(&self) -> Vec<BucketLayout> {
        let mut out = Vec::with_capacity(self.num_buckets());
        for (s, sd) in self.sub_dists.iter().enumerate() {
            for (k, b) in sd.buckets.iter().enumerate() {
                out.push(BucketLayout {
                    sub_dist: s,
                    local: k,
                    left: b.min,
                    width: b.width(),
                    bias_slot: b.bias_slot,
                });
            }
        }
        out
    }

    /// Locates `ltv` and computes its bias; never fails, out-of-range
    /// values are clamped and flagged.
    pub fn encode(&self, ltv: f64) -> EncodedTarget {
        let located = self
            .sub_dists
            .iter()
            .position(|s| s.contains(ltv))
            .map(|s| {
                let buckets = &self.sub_dists[s].buckets;
                let k = buckets
                    .iter()
                    .position(|b| b.upper_edge.is_none_or(|hi| ltv <= hi))
                    .unwrap_or(buckets.len() - 1);
                (s, k, false)
            });
        let (s, k, mut clamped) = located.unwrap_or_else(|| self.nearest_bucket(ltv));
        let bucket = &self.sub_dists[s].buckets[k];
        let bias = if bucket.is_singleton() {
            if ltv != bucket.min {
                clamped = true;
            }
            None
        } else {
            let raw = (ltv - bucket.min) / bucket.width();
            if !(0.0..=1.0).contains(&raw) {
                clamped = true;
            }
            Some(raw.clamp(0.0, 1.0))
        };
        EncodedTarget {
            sub_dist: s,
            bucket: k,
            global_bucket: bucket.global_index,
            bias,
            clamped,
        }
    }

    fn nearest_bucket(&self, ltv: f64) -> (usize, usize, bool) {
        let mut best = (0, 0);
        let mut best_gap = f64::INFINITY;
        for (s, sd) in self.sub_dists.iter().enumerate() {
            for (k, b) in sd.buckets.iter().enumerate() {
                let gap = if ltv < b.min {
                    b.min - ltv
                } else if ltv > b.max {
                    ltv - b.max
                } else {
                    0.0
                };
                if gap < best_gap {
                    best_gap = gap;
                    best = (s, k);
                }
            }
        }
        (best.0, best.1, true)
    }

    /// Global bucket index of a value, used as the class partition for Gini.
    pub fn class_of(&self, ltv: f64) -> usize {
        self.encode(ltv).global_bucket
    }

    /// Hard decode: argmax sub-distribution, argmax bucket inside it, then
    /// the in-bucket value. Ties go to the lowest index.
    ///
    /// `q_b[s]` is the bias-tower output of sub-distribution `s`, or `None`
    /// when that sub-distribution has no bias slots or no bias tower exists.
    pub fn decode(
        &self,
        p_c: &[f64],
        q_c: &[&[f64]],
        q_b: &[Option<&[f64]>],
        mode: DecodeMode,
    ) -> f64 {
        let s = argmax(p_c);
        let k = argmax(q_c[s]);
        let bucket = &self.sub_dists[s].buckets[k];
        match (bucket.bias_slot, mode) {
            (None, _) => bucket.min,
            (Some(slot), DecodeMode::Bias) => match q_b.get(s).copied().flatten() {
                Some(bias) => bucket.value_at(bias[slot]),
                None => bucket.midpoint(),
            },
            (Some(_), DecodeMode::Midpoint) => bucket.midpoint(),
        }
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-task segmentation and bucketing of the LTV range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketingScheme {
    pub tasks: Vec<TaskScheme>,
}

impl BucketingScheme {
    /// Fits one task scheme per label list. `configs` holds either one
    /// config for every task or one per task.
    pub fn fit(labels: &[Vec<f64>], configs: &[BucketConfig]) -> Result<(Self, Vec<String>)> {
        if labels.is_empty() {
            return Err(Error::Config("no tasks to bucket".into()));
        }
        if configs.len() != 1 && configs.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} bucket configs for {} tasks",
                configs.len(),
                labels.len()
            )));
        }
        let mut warnings = Vec::new();
        let mut tasks = Vec::with_capacity(labels.len());
        for (t, task_labels) in labels.iter().enumerate() {
            let config = if configs.len() == 1 {
                &configs[0]
            } else {
                &configs[t]
            };
            let (scheme, w) = fit_task(task_labels, config)?;
            warnings.extend(w.into_iter().map(|m| format!("task {t}: {m}")));
            tasks.push(scheme);
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok((Self { tasks }, warnings))
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn encode(&self, task: usize, ltv: f64) -> EncodedTarget {
        self.tasks[task].encode(ltv)
    }

    /// Encodes a label list, returning the targets and the clamp count.
    pub fn encode_all(&self, task: usize, labels: &[f64]) -> (Vec<EncodedTarget>, usize) {
        let targets: Vec<EncodedTarget> = labels.iter().map(|&v| self.encode(task, v)).collect();
        let clamps = targets.iter().filter(|t| t.clamped).count();
        (targets, clamps)
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("scheme serializes"))
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_versioned_json(SCHEME_FORMAT_VERSION, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::io::from_versioned_json(text, SCHEME_FORMAT_VERSION)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_versioned_json(path, SCHEME_FORMAT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned_json(path, SCHEME_FORMAT_VERSION)
    }
}

fn fit_task(labels: &[f64], config: &BucketConfig) -> Result<(TaskScheme, Vec<String>)> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::Config("cannot bucket an empty label list".into()));
    }
    if let Some(bad) = labels.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::OutOfRange(
            "label",
            format!("{bad} (labels must be finite and >= 0)"),
        ));
    }
    let mut warnings = Vec::new();

    let mut singletons: Vec<f64> = Vec::new();
    for &s in &config.singletons {
        if labels.contains(&s) {
            if !singletons.contains(&s) {
                singletons.push(s);
            }
        } else {
            warnings.push(format!("singleton value {s} absent from labels, dropped"));
        }
    }
    singletons.sort_by(f64::total_cmp);
    let mut cuts = config.cut_points.clone();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // Delimiters split the value line; each open-closed interval between
    // consecutive delimiters is one candidate range.
    let mut delimiters: Vec<f64> = cuts.iter().chain(&singletons).copied().collect();
    delimiters.sort_by(f64::total_cmp);
    delimiters.dedup();

    struct Pending {
        key: f64,
        sub: SubDistribution,
    }
    let mut pending: Vec<Pending> = singletons
        .iter()
        .map(|&value| Pending {
            key: value,
            sub: SubDistribution {
                kind: SubDistKind::Singleton { value },
                buckets: vec![Bucket {
                    global_index: 0,
                    lower_edge: None,
                    upper_edge: None,
                    min: value,
                    max: value,
                    count: labels.iter().filter(|&&v| v == value).count(),
                    bias_slot: None,
                }],
            },
        })
        .collect();

    for j in 0..=delimiters.len() {
        let lower = (j > 0).then(|| delimiters[j - 1]);
        let upper = delimiters.get(j).copied();
        let values: Vec<f64> = labels
            .iter()
            .copied()
            .filter(|v| {
                !singletons.contains(v)
                    && lower.is_none_or(|lo| *v > lo)
                    && upper.is_none_or(|hi| *v <= hi)
            })
            .collect();
        if values.is_empty() {
            continue;
        }
        let interval = cuts.partition_point(|&c| c < values[0]);
        let requested = config.buckets_for(interval);
        let bucket_cuts = equal_frequency_cuts(&values, requested);
        let got = bucket_cuts.len() + 1;
        if got < requested {
            let mut distinct = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            warnings.push(format!(
                "range ({}, {}] has {} distinct values: {} of {} buckets kept",
                lower.map_or("-inf".into(), |v| v.to_string()),
                upper.map_or("inf".into(), |v| v.to_string()),
                distinct.len(),
                got,
                requested
            ));
        }
        let mut buckets = Vec::with_capacity(got);
        let mut slot = 0;
        for k in 0..got {
            let lo = if k == 0 {
                lower
            } else {
                Some(bucket_cuts[k - 1])
            };
            let hi = if k + 1 == got {
                upper
            } else {
                Some(bucket_cuts[k])
            };
            let members: Vec<f64> = values
                .iter()
                .copied()
                .filter(|v| lo.is_none_or(|l| *v > l) && hi.is_none_or(|h| *v <= h))
                .collect();
            let min = members.iter().copied().fold(f64::INFINITY, f64::min);
            let max = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bias_slot = (max > min).then(|| {
                slot += 1;
                slot - 1
            });
            buckets.push(Bucket {
                global_index: 0,
                lower_edge: lo,
                upper_edge: hi,
                min,
                max,
                count: members.len(),
                bias_slot,
            });
        }
        let key = values.iter().copied().fold(f64::INFINITY, f64::min);
        pending.push(Pending {
            key,
            sub: SubDistribution {
                kind: SubDistKind::Range { lower, upper },
                buckets,
            },
        });
    }

    pending.sort_by(|a, b| a.key.total_cmp(&b.key));
    let mut sub_dists: Vec<SubDistribution> = pending.into_iter().map(|p| p.sub).collect();
    let mut g = 0;
    for sd in &mut sub_dists {
        for b in &mut sd.buckets {
            b.global_index = g;
            g += 1;
        }
    }
    if g == 1 {
        warnings.push("all labels identical: single singleton bucket".into());
    }
    Ok((TaskScheme { sub_dists }, warnings))
}

/// Binary targets for `P(l > u)`, `u = 0..U-1`: entry `u` is 1 iff `u < label`.
pub fn ordinal_targets(label: usize, size: usize) -> Result<Vec<f64>> {
    if label >= size {
        return Err(Error::OutOfRange(
            "ordinal label",
            format!("{label} not below {size}"),
        ));
    }
    Ok((0..size)
        .map(|u| if u < label { 1.0 } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_labels() -> Vec<f64> {
        vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 10.0, 20.0, 100.0]
    }

    fn example_scheme() -> BucketingScheme {
        let config = BucketConfig {
            singletons: vec![0.0],
            cut_points: vec![],
            buckets_per_range: vec![3],
        };
        BucketingScheme::fit(&[example_labels()], &[config])
            .unwrap()
            .0
    }

    #[test]
    fn fits_zero_singleton_and_equal_frequency_buckets() {
        let scheme = example_scheme();
        let task = &scheme.tasks[0];
        assert_eq!(task.num_sub_dists(), 2);
        assert_eq!(
            task.sub_dists[0].kind,
            SubDistKind::Singleton { value: 0.0 }
        );
        let b = &task.sub_dists[1].buckets;
        assert_eq!(b.len(), 3);
        // nearest-rank ceil(k/3·6) over [1,2,3,10,20,100] gives cuts 2 and 10
        assert_eq!(b[0].upper_edge, Some(2.0));
        assert_eq!(b[1].lower_edge, Some(2.0));
        assert_eq!(b[1].upper_edge, Some(10.0));
        assert_eq!(b[2].lower_edge, Some(10.0));
        assert_eq!((b[0].min, b[0].max), (1.0, 2.0));
        assert_eq!((b[1].min, b[1].max), (3.0, 10.0));
        assert_eq!((b[2].min, b[2].max), (20.0, 100.0));
        assert_eq!(
            task.buckets().map(|b| b.global_index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(task.sub_dists[1].num_bias_slots(), 3);
    }

    #[test]
    fn encodes_example_values() {
        let scheme = example_scheme();
        let zero = scheme.encode(0, 0.0);
        assert_eq!((zero.sub_dist, zero.bucket, zero.bias), (0, 0, None));
        let ten = scheme.encode(0, 10.0);
        assert_eq!((ten.sub_dist, ten.bucket, ten.global_bucket), (1, 1, 2));
        assert_eq!(ten.bias, Some((10.0 - 3.0) / (10.0 - 3.0)));
        let huge = scheme.encode(0, 1e9);
        assert_eq!((huge.sub_dist, huge.bucket, huge.bias), (1, 2, Some(1.0)));
        assert!(huge.clamped);
        let (_, clamps) = scheme.encode_all(0, &[1e9, 5.0, 1e10]);
        assert_eq!(clamps, 2);
        let (_, clamps) = scheme.encode_all(0, &example_labels());
        assert_eq!(clamps, 0);
    }

    #[test]
    fn decode_examples() {
        let scheme = example_scheme();
        let task = &scheme.tasks[0];
        let zero_q: &[f64] = &[1.0];
        let bias_none: [Option<&[f64]>; 2] = [None, Some(&[0.5, 0.25, 0.5])];
        let y = task.decode(
            &[0.9, 0.1],
            &[zero_q, &[0.2, 0.3, 0.5]],
            &bias_none,
            DecodeMode::Bias,
        );
        assert_eq!(y, 0.0);
        let y = task.decode(
            &[0.3, 0.7],
            &[zero_q, &[0.4, 0.6, 0.0]],
            &bias_none,
            DecodeMode::Bias,
        );
        assert!((y - 4.75).abs() < 1e-12);
        // uniform: lowest index everywhere
        let y = task.decode(
            &[0.5, 0.5],
            &[zero_q, &[1.0 / 3.0; 3]],
            &bias_none,
            DecodeMode::Bias,
        );
        assert_eq!(y, 0.0);
        let y = task.decode(
            &[0.0, 1.0],
            &[zero_q, &[1.0 / 3.0; 3]],
            &bias_none,
            DecodeMode::Bias,
        );
        assert_eq!(y, 1.5);
        let y = task.decode(
            &[0.0, 1.0],
            &[zero_q, &[0.0, 1.0, 0.0]],
            &bias_none,
            DecodeMode::Midpoint,
        );
        assert_eq!(y, 6.5);
    }

    #[test]
    fn identical_labels_single_bucket_with_warning() {
        let (scheme, warnings) =
            BucketingScheme::fit(&[vec![5.0; 10]], &[BucketConfig::default()]).unwrap();
        let task = &scheme.tasks[0];
        assert_eq!(task.num_buckets(), 1);
        assert!(task.buckets().next().unwrap().is_singleton());
        // singleton 0 absent, then single bucket
        assert!(warnings.iter().any(|w| w.contains("absent")));
        assert!(warnings.iter().any(|w| w.contains("identical")));

        let (scheme, warnings) =
            BucketingScheme::fit(&[vec![0.0; 10]], &[BucketConfig::default()]).unwrap();
        assert_eq!(scheme.tasks[0].num_buckets(), 1);
        assert!(warnings.iter().any(|w| w.contains("identical")));
    }

    #[test]
    fn fewer_distinct_values_than_buckets() {
        let config = BucketConfig {
            singletons: vec![],
            cut_points: vec![],
            buckets_per_range: vec![5],
        };
        let (scheme, warnings) =
            BucketingScheme::fit(&[vec![1.0, 2.0, 3.0, 1.0, 2.0]], &[config]).unwrap();
        assert_eq!(scheme.tasks[0].num_buckets(), 3);
        assert!(scheme.tasks[0].buckets().all(|b| b.is_singleton()));
        assert!(warnings.iter().any(|w| w.contains("3 of 5")));
    }

    #[test]
    fn cut_points_make_range_sub_dists() {
        let labels: Vec<f64> = (1..=60).map(f64::from).collect();
        let config = BucketConfig {
            singletons: vec![],
            cut_points: vec![30.0],
            buckets_per_range: vec![3],
        };
        let (scheme, _) = BucketingScheme::fit(std::slice::from_ref(&labels), &[config]).unwrap();
        let task = &scheme.tasks[0];
        assert_eq!(task.num_sub_dists(), 2);
        assert_eq!(task.sub_dists[0].buckets.last().unwrap().max, 30.0);
        assert_eq!(task.sub_dists[1].buckets[0].min, 31.0);
        let e = task.encode(30.5);
        assert_eq!(e.sub_dist, 1);
        assert!(e.clamped);
        for &v in &labels {
            assert!(!task.encode(v).clamped);
        }
    }

    #[test]
    fn singleton_at_top_orders_last() {
        let mut labels: Vec<f64> = (0..40).map(|i| f64::from(i % 20)).collect();
        labels.extend([365.0; 10]);
        let config = BucketConfig {
            singletons: vec![0.0, 365.0],
            cut_points: vec![],
            buckets_per_range: vec![4],
        };
        let (scheme, _) = BucketingScheme::fit(&[labels], &[config]).unwrap();
        let task = &scheme.tasks[0];
        assert_eq!(task.num_sub_dists(), 3);
        assert_eq!(
            task.sub_dists[2].kind,
            SubDistKind::Singleton { value: 365.0 }
        );
        let mins: Vec<f64> = task.buckets().map(|b| b.min).collect();
        assert!(mins.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ordinal_target_cases() {
        assert_eq!(ordinal_targets(0, 3).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(ordinal_targets(2, 3).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(ordinal_targets(3, 4).unwrap(), vec![1.0, 1.0, 1.0, 0.0]);
        assert!(ordinal_targets(3, 3).is_err());
    }

    #[test]
    fn scheme_text_round_trip_is_bit_exact() {
        let labels: Vec<f64> = (0..200)
            .map(|i| (f64::from(i) * 0.37).sin().abs() * 17.3)
            .collect();
        let (scheme, _) = BucketingScheme::fit(&[labels], &[BucketConfig::default()]).unwrap();
        let text = scheme.to_json().unwrap();
        let back = BucketingScheme::from_json(&text).unwrap();
        assert_eq!(back, scheme);
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.hash(), scheme.hash());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
