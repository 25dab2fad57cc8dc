use crate::error::{Error, Result};

use super::store::ParamStore;

/// Central-difference verification of the analytic gradients held in the
/// store. For every parameter entry the loss is evaluated at +/- eps and
/// the numeric slope is compared against the stored gradient; the maximum
/// relative error |a-n| / max(1e-8, |a|+|n|) is returned.
///
/// The loss must be deterministic (dropout disabled, fixed data). The
/// store's parameter values are restored on exit.
pub fn finite_diff_check<F>(store: &mut ParamStore, eps: f64, loss: F) -> Result<f64>
where
    F: Fn(&ParamStore) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    let mut max_rel = 0.0f64;

    for name in names {
        let n_entries = store.get(&name).len();
        for idx in 0..n_entries {
            let original = store.get(&name).values()[idx];

            store.get_mut(&name).values_mut()[idx] = original + eps;
            let plus = loss(store);
            store.get_mut(&name).values_mut()[idx] = original - eps;
            let minus = loss(store);
            store.get_mut(&name).values_mut()[idx] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at perturbed {name}[{idx}]"
                )));
            }

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = store.grad(&name).values()[idx];
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
