use super::{Graph, ParamId, ParameterStore, TensorError, Var};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const FD_MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `f` against central differences over
/// every coordinate of every parameter in `store`.
///
/// `f` must be pure in the parameter values. Points where `f` is not
/// differentiable (relu exactly at 0) are the caller's responsibility.
pub fn finite_difference_check<F, E>(
    store: &mut ParameterStore,
    f: F,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Graph<'a>) -> Result<Var, E>,
    E: From<TensorError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let eval = |store: &ParameterStore| -> Result<f64, E> {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        Ok(g.value(loss).item()?)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + FD_STEP;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - FD_STEP;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let exact = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            let denom = exact.abs().max(numeric.abs()).max(FD_MAGNITUDE_FLOOR);
            let err = (exact - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}
