//! Central-difference gradient checks.

use super::graph::{Graph, Var};
use super::params::ParamStore;

/// Gradient components smaller than this are compared in absolute terms
/// scaled by it, since central differences carry ~1e-11 of round-off.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Maximum relative error between the gradient returned by `f` at `x0` and
/// central differences with step `delta`. `f` returns (value, gradient).
pub fn grad_check(x0: &[f64], delta: f64, mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>)) -> f64 {
    let (_, analytic) = f(x0);
    assert_eq!(analytic.len(), x0.len(), "gradient length");
    let mut x = x0.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        x[i] = x0[i] + delta;
        let fp = f(&x).0;
        x[i] = x0[i] - delta;
        let fm = f(&x).0;
        x[i] = x0[i];
        worst = worst.max(rel_error(analytic[i], (fp - fm) / (2.0 * delta)));
    }
    worst
}

/// Gradient check over every scalar of `store`. `build` records a graph
/// whose returned node is the scalar loss.
pub fn grad_check_store(store: &mut ParamStore, delta: f64, mut build: impl FnMut(&ParamStore) -> (Graph, Var)) -> f64 {
    let x0 = store.flatten();
    let mut work = store.clone();
    let err = grad_check(&x0, delta, |x| {
        work.unflatten(x).expect("same layout");
        let (g, out) = build(&work);
        let value = g.value(out).data()[0];
        let bw = g.backward(out, None).expect("scalar output");
        let mut acc = work.zero_grads();
        g.accumulate(&bw, &mut acc);
        (value, acc.flatten())
    });
    store.unflatten(&x0).expect("same layout");
    err
}
