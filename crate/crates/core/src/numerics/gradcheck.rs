use super::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};

/// Largest disagreement found by [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `loss` against central differences
/// `(f(x + eps) - f(x - eps)) / (2 eps)` at every scalar of every parameter.
///
/// Relative error is `|a - n| / max(1e-8, |a| + |n|)`. Frozen rows are skipped.
pub fn gradient_check<F>(params: &mut ParamStore, eps: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<NodeId>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let eval = |params: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(params);
        let l = loss(&mut tape)?;
        let v = tape.value(l).scalar_value();
        if !v.is_finite() {
            return Err(Error::NonFinite("gradient_check loss"));
        }
        Ok(v)
    };

    let analytic = {
        let mut tape = Tape::new(params);
        let l = loss(&mut tape)?;
        if !tape.value(l).scalar_value().is_finite() {
            return Err(Error::NonFinite("gradient_check loss"));
        }
        tape.backward(l)?.flatten(params)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut flat = 0;
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = params.get(id).value.len();
        for idx in 0..n {
            let a = analytic[flat + idx];
            if params.get(id).is_frozen(idx) {
                continue;
            }
            let original = params.get(id).value.data()[idx];
            params.get_mut(id).value.data_mut()[idx] = original + eps;
            let plus = eval(params);
            params.get_mut(id).value.data_mut()[idx] = original - eps;
            let minus = eval(params);
            params.get_mut(id).value.data_mut()[idx] = original;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = params.get(id).name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        flat += n;
    }
    Ok(report)
}
