use super::params::ParamStore;
use super::tape::Gradients;

/// Worst finite-difference disagreement within one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.tensors
            .iter()
            .filter(|t| t.max_rel_error >= self.tolerance)
            .collect()
    }
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` with step
/// `step`, perturbing one scalar at a time.
pub fn finite_diff_check<F>(
    store: &ParamStore,
    analytic: &Gradients,
    loss: F,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&ParamStore) -> f64,
{
    finite_diff_check_terms(store, analytic, |s| vec![loss(s)], step, tolerance)
}

/// [`finite_diff_check`] for a loss given as a list of summands.
///
/// Each summand is differenced on its own before the slopes are added, so
/// rounding at the scale of the full sum does not swamp small gradients.
/// `terms` must return the same number of summands at every point.
pub fn finite_diff_check_terms<F>(
    store: &ParamStore,
    analytic: &Gradients,
    terms: F,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&ParamStore) -> Vec<f64>,
{
    let mut work = store.clone();
    let mut tensors = Vec::with_capacity(store.len());
    for (id, param) in store.iter() {
        let grad = analytic.get_or_zeros(id, store);
        let mut check = TensorCheck {
            name: param.name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..param.value.data().len() {
            let original = param.value.data()[k];
            work.get_mut(id).value.data_mut()[k] = original + step;
            let up = terms(&work);
            work.get_mut(id).value.data_mut()[k] = original - step;
            let down = terms(&work);
            work.get_mut(id).value.data_mut()[k] = original;

            let numeric: f64 = up
                .iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * step))
                .sum();
            let a = grad.data()[k];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error {
                check = TensorCheck {
                    name: check.name,
                    max_rel_error: err,
                    worst_index: k,
                    analytic: a,
                    numeric,
                };
            }
        }
        tensors.push(check);
    }
    GradCheckReport { tensors, tolerance }
}
