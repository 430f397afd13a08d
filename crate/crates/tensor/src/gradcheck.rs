//! Central finite-difference checks against tape gradients.
//!
//! The numerical side only re-evaluates a loss closure on perturbed copies of
//! the parameter store; it never touches `Tape::backward`.
//!
//! Piecewise-linear ops (ReLU, the contrastive hinge) make a central
//! difference meaningless when `x - h` and `x + h` straddle a kink. The
//! piecewise variant detects that from the ReLU on/off pattern, retries with
//! a smaller step, and skips (and counts) entries that still straddle one.

use crate::params::{ParamId, ParamStore};
use crate::tape::Gradients;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Smallest step tried when a perturbation crosses a kink.
    pub min_step: f64,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    /// Upper bound on checked entries per parameter (evenly strided).
    pub max_entries: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-4,
            min_step: 1e-6,
            floor: 1e-6,
            max_entries: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
    /// Entries left unchecked because every tried step crossed a kink.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

impl GradCheck {
    /// Compares `grads` with central differences of `loss` for every
    /// parameter in `ids`. A parameter missing from `grads` is compared as
    /// an all-zero gradient.
    pub fn run<F>(&self, store: &ParamStore, ids: &[ParamId], grads: &Gradients, loss: F) -> GradCheckReport
    where
        F: Fn(&ParamStore) -> f64,
    {
        self.run_piecewise(store, ids, grads, |s| (loss(s), Vec::new()))
    }

    /// Like [`GradCheck::run`], but `loss` also returns its kink pattern
    /// (see `Tape::relu_pattern`). A difference is only used when both
    /// perturbed patterns equal the unperturbed one; the step shrinks
    /// tenfold down to `min_step` until they do.
    pub fn run_piecewise<F>(&self, store: &ParamStore, ids: &[ParamId], grads: &Gradients, loss: F) -> GradCheckReport
    where
        F: Fn(&ParamStore) -> (f64, Vec<bool>),
    {
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            skipped: 0,
        };
        let (_, base) = loss(store);
        let mut probe = store.clone();
        for &id in ids {
            let n = store.get(id).len();
            let stride = n.div_ceil(self.max_entries).max(1);
            let analytic = grads.param(id).map(|t| t.data().to_vec());
            for i in (0..n).step_by(stride) {
                let orig = store.get(id).data()[i];
                let mut step = self.step;
                let numeric = loop {
                    probe.get_mut(id).data_mut()[i] = orig + step;
                    let (plus, p_plus) = loss(&probe);
                    probe.get_mut(id).data_mut()[i] = orig - step;
                    let (minus, p_minus) = loss(&probe);
                    probe.get_mut(id).data_mut()[i] = orig;
                    if p_plus == base && p_minus == base {
                        break Some((plus - minus) / (2.0 * step));
                    }
                    step /= 10.0;
                    if step < self.min_step * (1.0 - 1e-9) {
                        break None;
                    }
                };
                let Some(numeric) = numeric else {
                    report.skipped += 1;
                    continue;
                };
                let a = analytic.as_ref().map_or(0.0, |g| g[i]);
                let err = relative_error(a, numeric, self.floor);
                report.checked += 1;
                if report.worst.is_none() || err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some((store.name(id).to_string(), i, a, numeric));
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use crate::tensor::Tensor;

    fn relu_sum(s: &ParamStore, id: ParamId) -> (f64, Vec<bool>) {
        let mut tape = Tape::new(s);
        let x = tape.param(id);
        let r = tape.relu(x).unwrap();
        let l = tape.sum(r).unwrap();
        (tape.value(l).data()[0], tape.relu_pattern())
    }

    #[test]
    fn kink_inside_the_step_is_refined_or_skipped() {
        let mut store = ParamStore::new();
        // 5e-5 sits within the default step of the kink, 1e-9 within every step
        let id = store.add("x", Tensor::from_vec(vec![5e-5, 1e-9, -0.3, 0.7]));
        let grads = {
            let mut tape = Tape::new(&store);
            let x = tape.param(id);
            let r = tape.relu(x).unwrap();
            let l = tape.sum(r).unwrap();
            tape.backward(l).unwrap()
        };
        let check = GradCheck::default();
        let plain = check.run(&store, &[id], &grads, |s| relu_sum(s, id).0);
        assert!(plain.max_rel_error > 0.1);
        let piecewise = check.run_piecewise(&store, &[id], &grads, |s| relu_sum(s, id));
        assert_eq!((piecewise.checked, piecewise.skipped), (3, 1));
        assert!(piecewise.max_rel_error < 1e-9, "{piecewise:?}");
    }
}
