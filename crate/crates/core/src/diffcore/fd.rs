//! Central finite-difference verification of tape gradients.

use super::store::ParameterStore;
use super::tape::{Tape, Tensor};

/// Default probe step.
pub const FD_STEP: f64 = 1e-5;

/// Compare analytic gradients of a scalar-valued computation against central
/// finite differences over every parameter in the store.
///
/// `f` rebuilds the computation from scratch on the given tape and must be
/// deterministic. Returns the worst relative error
/// `|fd - analytic| / max(|fd|, |analytic|, 1e-6)` over all parameter
/// entries.
pub fn finite_difference_check<F>(store: &mut ParameterStore, h: f64, mut f: F) -> f64
where
    F: FnMut(&mut Tape, &ParameterStore) -> Tensor,
{
    let analytic: Vec<(String, Vec<f64>)> = {
        let mut tape = Tape::new();
        let out = f(&mut tape, store);
        let grads = tape.backward(out);
        tape.param_grads(&grads)
    };
    let eval = |store: &ParameterStore, f: &mut F| -> f64 {
        let mut tape = Tape::new();
        let out = f(&mut tape, store);
        tape.scalar_value(out)
    };

    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let base = store.entry(&name).expect("registered").2.to_vec();
        let an = analytic
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| vec![0.0; base.len()]);
        for k in 0..base.len() {
            let mut probe = base.clone();
            probe[k] = base[k] + h;
            store.set_values(&name, &probe);
            let plus = eval(store, &mut f);
            probe[k] = base[k] - h;
            store.set_values(&name, &probe);
            let minus = eval(store, &mut f);
            let fd = (plus - minus) / (2.0 * h);
            let err = (fd - an[k]).abs() / fd.abs().max(an[k].abs()).max(1e-6);
            worst = worst.max(err);
        }
        store.set_values(&name, &base);
    }
    worst
}
