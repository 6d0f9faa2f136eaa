//! Point-error metrics, Lorenz curves, class Gini and Mutual Gini.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::BucketingScheme;
use crate::error::{Error, Result};

pub const LORENZ_FORMAT_VERSION: u32 = 1;

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension {
            op: "metric",
            left: format!("{} labels", y.len()),
            right: format!("{} estimates", y_hat.len()),
        });
    }
    if y.is_empty() {
        return Err(Error::UndefinedMetric("empty input".into()));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn positive_mean(y: &[f64]) -> Result<f64> {
    let m = mean(y);
    if m > 0.0 {
        Ok(m)
    } else {
        Err(Error::UndefinedMetric(format!(
            "label mean is {m}, normalization needs > 0"
        )))
    }
}

/// `sqrt(mean((ŷ − y)²)) / mean(y)`.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let m = positive_mean(y)?;
    let mse = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    Ok(mse.sqrt() / m)
}

/// `mean(|ŷ − y|) / mean(y)`.
pub fn nmae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let m = positive_mean(y)?;
    let mae = y.iter().zip(y_hat).map(|(a, b)| (b - a).abs()).sum::<f64>() / y.len() as f64;
    Ok(mae / m)
}

/// `|mean(ŷ) − mean(y)|`, in label units.
pub fn ambe(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok((mean(y_hat) - mean(y)).abs())
}

/// Class-imbalance Gini `Σ_i (2i − C − 1)·N_i / (C·Σ N_i)` with the counts
/// ranked ascending, so the value lies in `[0, (C−1)/C]` whatever the class
/// order.
pub fn gini(class_counts: &[usize]) -> Result<f64> {
    let c = class_counts.len();
    let total: usize = class_counts.iter().sum();
    if c == 0 || total == 0 {
        return Err(Error::UndefinedMetric("gini of an empty partition".into()));
    }
    let mut ranked = class_counts.to_vec();
    ranked.sort_unstable();
    let c_i = c as i64;
    let numerator: i64 = ranked
        .iter()
        .enumerate()
        .map(|(i, &n)| (2 * (i as i64 + 1) - c_i - 1) * n as i64)
        .sum();
    Ok(numerator as f64 / (c as f64 * total as f64))
}

/// Counts of `values` per global bucket of one task's scheme.
pub fn class_counts(scheme: &BucketingScheme, task: usize, values: &[f64]) -> Vec<usize> {
    let ts = &scheme.tasks[task];
    let mut counts = vec![0; ts.num_buckets()];
    for &v in values {
        counts[ts.class_of(v)] += 1;
    }
    counts
}

/// Piecewise-linear Lorenz curve from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    pub points: Vec<(f64, f64)>,
}

impl LorenzCurve {
    /// Curve value at `x ∈ [0, 1]` by linear interpolation.
    pub fn at(&self, x: f64) -> f64 {
        let pts = &self.points;
        let k = pts.partition_point(|p| p.0 < x);
        if k == 0 {
            return pts[0].1;
        }
        if k == pts.len() {
            return pts[k - 1].1;
        }
        let (x0, y0) = pts[k - 1];
        let (x1, y1) = pts[k];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Normalized Gini of the curve, `2·∫(Φ(x) − x) dx`.
    pub fn gini(&self) -> f64 {
        let area: f64 = self
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum();
        2.0 * (area - 0.5)
    }

    /// Two-column `x,y` text with a leading format-version comment.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "# odmn-lorenz format_version={LORENZ_FORMAT_VERSION}")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["x", "y"])?;
        for &(x, y) in &self.points {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Users sorted by `order` descending (stable), accumulating `mass`.
///
/// The true curve is `lorenz(y, y)`; the model curve is `lorenz(ŷ, y)`.
pub fn lorenz(order: &[f64], mass: &[f64]) -> Result<LorenzCurve> {
    if order.len() != mass.len() {
        return Err(Error::Dimension {
            op: "lorenz",
            left: format!("{} ordering values", order.len()),
            right: format!("{} mass values", mass.len()),
        });
    }
    if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::UndefinedMetric(
            "lorenz mass must be finite and >= 0".into(),
        ));
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedMetric(
            "lorenz curve of zero total mass".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..order.len()).collect();
    idx.sort_by(|&a, &b| order[b].total_cmp(&order[a]));
    let n = idx.len() as f64;
    let mut points = Vec::with_capacity(idx.len() + 1);
    points.push((0.0, 0.0));
    let mut acc = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        acc += mass[i];
        points.push(((k + 1) as f64 / n, acc / total));
    }
    let last = points.len() - 1;
    points[last] = (1.0, 1.0);
    Ok(LorenzCurve { points })
}

/// `∫₀¹ |Φ(x) − Ψ(x)| dx`, exact for piecewise-linear curves.
///
/// Both curves are linear between consecutive merged breakpoints, so the
/// difference is too; segments where it changes sign are split at the root.
pub fn mutual_gini(a: &LorenzCurve, b: &LorenzCurve) -> f64 {
    let mut xs: Vec<f64> = a.points.iter().chain(&b.points).map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let d0 = a.at(x0) - b.at(x0);
        let d1 = a.at(x1) - b.at(x1);
        let width = x1 - x0;
        area += if d0 * d1 >= 0.0 {
            width * (d0.abs() + d1.abs()) / 2.0
        } else {
            width * (d0 * d0 + d1 * d1) / (2.0 * (d0.abs() + d1.abs()))
        };
    }
    area
}

/// Fraction of rows with `ŷ_t > ŷ_{t+1}` for each adjacent pair, and for any pair.
pub fn violation_rates(estimates: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let tasks = estimates.first().map_or(0, Vec::len);
    if estimates.is_empty() || tasks < 2 {
        return (vec![0.0; tasks.saturating_sub(1)], 0.0);
    }
    let mut pairs = vec![0usize; tasks - 1];
    let mut any = 0usize;
    for row in estimates {
        let mut violated = false;
        for (t, w) in row.windows(2).enumerate() {
            if w[0] > w[1] {
                pairs[t] += 1;
                violated = true;
            }
        }
        any += usize::from(violated);
    }
    let n = estimates.len() as f64;
    (
        pairs.iter().map(|&c| c as f64 / n).collect(),
        any as f64 / n,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub horizon: u32,
    pub nrmse: f64,
    pub nmae: f64,
    pub ambe: f64,
    pub gini_true: f64,
    pub gini_model: f64,
    pub mutual_gini: f64,
    /// Ratio of model-curve to true-curve normalized Gini; display only.
    pub normalized_gini: f64,
    #[serde(skip)]
    pub true_curve: Option<LorenzCurve>,
    #[serde(skip)]
    pub model_curve: Option<LorenzCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: usize,
    pub tasks: Vec<TaskReport>,
    /// Violation rate for each adjacent horizon pair.
    pub violation_rate_pairs: Vec<f64>,
    /// Fraction of users with any inverted adjacent pair.
    pub violation_rate: f64,
}

impl EvalReport {
    pub fn last_task(&self) -> &TaskReport {
        self.tasks.last().expect("report has at least one task")
    }
}

/// Full report from `labels[row][task]` and `estimates[row][task]`.
pub fn evaluate_predictions(
    labels: &[Vec<f64>],
    estimates: &[Vec<f64>],
    scheme: &BucketingScheme,
    horizons: &[u32],
) -> Result<EvalReport> {
    if labels.len() != estimates.len() {
        return Err(Error::Dimension {
            op: "evaluate",
            left: format!("{} label rows", labels.len()),
            right: format!("{} estimate rows", estimates.len()),
        });
    }
    let tasks = horizons.len();
    if scheme.num_tasks() != tasks || labels.iter().chain(estimates).any(|r| r.len() != tasks) {
        return Err(Error::Dimension {
            op: "evaluate",
            left: format!("{tasks} horizons"),
            right: format!("scheme with {} tasks or ragged rows", scheme.num_tasks()),
        });
    }
    let mut reports = Vec::with_capacity(tasks);
    for (t, &horizon) in horizons.iter().enumerate() {
        let y: Vec<f64> = labels.iter().map(|r| r[t]).collect();
        let y_hat: Vec<f64> = estimates.iter().map(|r| r[t]).collect();
        if y_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("estimates for horizon {horizon}")));
        }
        let true_curve = lorenz(&y, &y)?;
        let model_curve = lorenz(&y_hat, &y)?;
        let true_gini = true_curve.gini();
        let normalized_gini = if true_gini != 0.0 {
            model_curve.gini() / true_gini
        } else {
            0.0
        };
        reports.push(TaskReport {
            horizon,
            nrmse: nrmse(&y, &y_hat)?,
            nmae: nmae(&y, &y_hat)?,
            ambe: ambe(&y, &y_hat)?,
            gini_true: gini(&class_counts(scheme, t, &y))?,
            gini_model: gini(&class_counts(scheme, t, &y_hat))?,
            mutual_gini: mutual_gini(&true_curve, &model_curve),
            normalized_gini,
            true_curve: Some(true_curve),
            model_curve: Some(model_curve),
        });
    }
    let (violation_rate_pairs, violation_rate) = violation_rates(estimates);
    Ok(EvalReport {
        rows: labels.len(),
        tasks: reports,
        violation_rate_pairs,
        violation_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_metrics_by_hand() {
        let y = [0.0, 4.0];
        let p = [2.0, 2.0];
        assert_eq!(nrmse(&y, &p).unwrap(), 1.0);
        assert_eq!(nmae(&y, &p).unwrap(), 1.0);
        assert_eq!(ambe(&y, &p).unwrap(), 0.0);
        assert_eq!(ambe(&[1.0, 1.0], &[2.0, 4.0]).unwrap(), 2.0);
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        assert_eq!(nmae(&y, &y).unwrap(), 0.0);
        assert!(matches!(
            nrmse(&[0.0, 0.0], &p),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            nmae(&[0.0, 0.0], &p),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(nrmse(&y, &[1.0]).is_err());
    }

    #[test]
    fn gini_cases() {
        assert_eq!(gini(&[50, 50]).unwrap(), 0.0);
        assert_eq!(gini(&[0, 0, 0, 100]).unwrap(), 0.75);
        assert_eq!(gini(&[7]).unwrap(), 0.0);
        assert!(gini(&[]).is_err());
        for c in 2..=10 {
            let mut counts = vec![0; c];
            counts[c - 1] = 13;
            assert_eq!(gini(&counts).unwrap(), (c as f64 - 1.0) / c as f64);
            assert_eq!(gini(&vec![9; c]).unwrap(), 0.0);
        }
    }

    #[test]
    fn gini_ignores_class_order() {
        assert_eq!(gini(&[100, 0, 0, 0]).unwrap(), 0.75);
        assert_eq!(gini(&[30, 10, 20]).unwrap(), gini(&[10, 20, 30]).unwrap());
    }

    proptest! {
        /// Oracle: half the mean absolute difference between class counts.
        #[test]
        fn gini_matches_mean_difference_form(counts in prop::collection::vec(0usize..500, 1..12)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let c = counts.len() as f64;
            let total = counts.iter().sum::<usize>() as f64;
            let pairs: f64 = counts
                .iter()
                .flat_map(|&a| counts.iter().map(move |&b| (a as f64 - b as f64).abs()))
                .sum();
            let g = gini(&counts).unwrap();
            prop_assert!((g - pairs / (2.0 * c * total)).abs() < 1e-12);
            prop_assert!(g >= 0.0 && g <= (c - 1.0) / c + 1e-15);
        }
    }

    #[test]
    fn two_user_reversed_order() {
        let y = [3.0, 1.0];
        let truth = lorenz(&y, &y).unwrap();
        let model = lorenz(&[1.0, 3.0], &y).unwrap();
        assert_eq!(truth.points, vec![(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)]);
        assert_eq!(model.points, vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]);
        assert!((mutual_gini(&truth, &model) - 0.25).abs() < 1e-12);
        assert_eq!(mutual_gini(&truth, &truth), 0.0);
    }

    #[test]
    fn uniform_truth_is_diagonal_and_perfect_model_matches() {
        let y = [2.0; 5];
        let c = lorenz(&y, &y).unwrap();
        for &(x, v) in &c.points {
            assert!((x - v).abs() < 1e-15);
        }
        let y = [5.0, 0.0, 2.0, 9.0];
        assert_eq!(lorenz(&y, &y).unwrap(), lorenz(&y, &y).unwrap());
        assert!(lorenz(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn crossing_curves_do_not_cancel() {
        let a = LorenzCurve {
            points: vec![(0.0, 0.0), (0.5, 0.7), (1.0, 1.0)],
        };
        let b = LorenzCurve {
            points: vec![(0.0, 0.0), (0.25, 0.1), (0.75, 0.9), (1.0, 1.0)],
        };
        let signed: f64 = {
            let n = 100_000;
            (0..n)
                .map(|k| {
                    let x = (k as f64 + 0.5) / n as f64;
                    a.at(x) - b.at(x)
                })
                .sum::<f64>()
                / n as f64
        };
        assert!(mutual_gini(&a, &b) > signed.abs());
    }

    #[test]
    fn violation_rates_count_pairs() {
        let est = vec![
            vec![5.0, 3.0, 8.0],
            vec![1.0, 2.0, 3.0],
            vec![2.0, 1.0, 0.0],
        ];
        let (pairs, any) = violation_rates(&est);
        assert_eq!(pairs, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(any, 2.0 / 3.0);
    }

    #[test]
    fn lorenz_csv_has_version_and_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        lorenz(&[3.0, 1.0], &[3.0, 1.0])
            .unwrap()
            .write_csv(&path)
            .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            "# odmn-lorenz format_version=1\nx,y\n0,0\n0.5,0.75\n1,1\n"
        );
    }

    fn arb_curve() -> impl Strategy<Value = LorenzCurve> {
        prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..12).prop_map(|pairs| {
            let (order, mass): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mut mass = mass;
            mass[0] += 1.0;
            lorenz(&order, &mass).unwrap()
        })
    }

    proptest! {
        #[test]
        fn mutual_gini_properties(a in arb_curve(), b in arb_curve()) {
            let ab = mutual_gini(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - mutual_gini(&b, &a)).abs() < 1e-15);
            prop_assert_eq!(mutual_gini(&a, &a), 0.0);
        }

        #[test]
        fn lorenz_shape(pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..30)) {
            let (order, mut mass): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            mass[0] += 0.5;
            let c = lorenz(&order, &mass).unwrap();
            prop_assert_eq!(c.points[0], (0.0, 0.0));
            prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
            prop_assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        }
    }
}
