use super::param::{Gradients, ParamId, ParamStore};
use super::NnError;

/// Denominator floor for the relative error, so that gradients that are
/// zero in both routes do not divide by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare every analytic gradient entry with a central finite difference.
///
/// `loss_and_grads` must be a deterministic function of the store.
pub fn grad_check<F, E>(store: &mut ParamStore, eps: f64, mut loss_and_grads: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients), E>,
    E: From<NnError>,
{
    let (loss, grads) = loss_and_grads(store)?;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss(loss).into());
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for ti in 0..store.len() {
        let id = ParamId(ti);
        for k in 0..store.tensor(id).len() {
            let original = store.tensor(id).values[k];
            store.tensor_mut(id).values[k] = original + eps;
            let plus = loss_and_grads(store)?.0;
            store.tensor_mut(id).values[k] = original - eps;
            let minus = loss_and_grads(store)?.0;
            store.tensor_mut(id).values[k] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFiniteLoss(if plus.is_finite() { minus } else { plus }).into());
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(id)[k];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.tensor(id).name.clone();
                report.worst_index = k;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    /// 0.5 * ||A w - y||^2 with analytic gradient A^T (A w - y).
    fn least_squares(store: &ParamStore) -> Result<(f64, Gradients), NnError> {
        let a = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.25]];
        let y = array![1.0, -2.0, 0.5];
        let w = Array1::from(store.tensors()[0].values.clone());
        let r = a.dot(&w) - &y;
        let mut g = store.zero_grads();
        g.get_mut(ParamId(0)).copy_from_slice(a.t().dot(&r).as_slice().unwrap());
        Ok((0.5 * r.dot(&r), g))
    }

    #[test]
    fn quadratic_model_is_exact() {
        let mut store = ParamStore::new();
        store.add("w", &[2], vec![0.3, -0.7]);
        let report = grad_check(&mut store, 1e-5, least_squares).unwrap();
        assert_eq!(report.checked, 2);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert_eq!(store.tensors()[0].values, vec![0.3, -0.7]);
    }

    #[test]
    fn nan_loss_is_reported() {
        let mut store = ParamStore::new();
        store.add("w", &[1], vec![0.0]);
        let err = grad_check::<_, NnError>(&mut store, 1e-5, |s| Ok((f64::NAN, s.zero_grads()))).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteLoss(_)));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut store = ParamStore::new();
        store.add("w", &[1], vec![2.0]);
        let report = grad_check::<_, NnError>(&mut store, 1e-5, |s| {
            let w = s.tensors()[0].values[0];
            let mut g = s.zero_grads();
            g.get_mut(ParamId(0))[0] = w; // true gradient of w^2 is 2w
            Ok((w * w, g))
        })
        .unwrap();
        assert!(report.max_rel_error > 0.4);
    }
}
