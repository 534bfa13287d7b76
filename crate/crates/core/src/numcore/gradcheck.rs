use crate::error::{Error, Result};
use crate::numcore::{Gradients, ParamSet};

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Worst relative error per parameter tensor, in parameter order.
    pub per_param: Vec<(String, f64)>,
    pub entries_checked: usize,
}

/// Relative error with the `1e-8` floor used throughout the test suite.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the gradients returned by `loss_fn` against central differences
/// with step `eps`, entry by entry over every parameter.
///
/// `loss_fn` must be a deterministic function of the parameters; it is
/// evaluated twice at the base point and rejected if the two disagree.
/// Parameters are restored to their original values before returning.
pub fn finite_difference_check<F>(
    mut loss_fn: F,
    params: &mut ParamSet,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<(f64, Gradients)>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("finite-difference step {eps}")));
    }
    let (l0, analytic) = loss_fn(params)?;
    let (l1, _) = loss_fn(params)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::Nondeterministic {
            first: l0,
            second: l1,
        });
    }
    if !l0.is_finite() {
        return Err(Error::NonFinite("loss at the base point".into()));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        per_param: Vec::with_capacity(params.len()),
        entries_checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let mut worst_here: f64 = 0.0;
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + eps;
            let plus = loss_fn(params).map(|r| r.0);
            params.get_mut(id).data_mut()[j] = orig - eps;
            let minus = loss_fn(params).map(|r| r.0);
            params.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = relative_error(analytic.get(id).data()[j], numeric);
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), j));
            }
            worst_here = worst_here.max(err);
            report.entries_checked += 1;
        }
        report.per_param.push((name, worst_here));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Tape, Tensor};

    #[test]
    fn square_at_three() {
        let mut p = ParamSet::new();
        let id = p.insert("w", Tensor::scalar(3.0)).unwrap();
        let f = |ps: &ParamSet| {
            let mut t = Tape::new(ps);
            let w = t.param(id);
            let l = t.square(w)?;
            Ok((t.value(l).item(), t.backprop(l)?))
        };
        let (_, g) = f(&p).unwrap();
        assert_eq!(g.get(id).item(), 6.0);
        let w = 3.0f64;
        let eps = 1e-5;
        let fd = ((w + eps).powi(2) - (w - eps).powi(2)) / (2.0 * eps);
        assert!((fd - 6.0).abs() < 1e-6);
        let r = finite_difference_check(f, &mut p, eps).unwrap();
        assert!(r.max_relative_error < 1e-9);
        assert_eq!(p.by_name("w").unwrap().item(), 3.0);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::row(&[1.0, 2.0])).unwrap();
        let f = |ps: &ParamSet| Ok((4.0, Gradients::zeros_like(ps)));
        let r = finite_difference_check(f, &mut p, 1e-5).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.entries_checked, 2);
    }

    #[test]
    fn nondeterministic_loss_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut calls = 0.0;
        let f = |ps: &ParamSet| {
            calls += 1.0;
            Ok((calls, Gradients::zeros_like(ps)))
        };
        assert!(matches!(
            finite_difference_check(f, &mut p, 1e-5),
            Err(Error::Nondeterministic { .. })
        ));
    }
}
