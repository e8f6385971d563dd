//! Central finite-difference checks of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

fn eval_scalar(out: Var<'_>) -> Result<f64> {
    let v = out.value();
    if v.numel() != 1 {
        return Err(Error::shape("grad_check (needs a scalar)", v.shape(), &[1]));
    }
    let y = v.data()[0];
    if !y.is_finite() {
        return Err(Error::Domain(format!("function value {y} is not finite")));
    }
    Ok(y)
}

/// Largest relative error between the reverse-mode gradient of `f` at `x`
/// and central differences with step 1e-5.
pub fn grad_check<F>(f: F, x: &Tensor) -> Result<f64>
where
    F: for<'g> Fn(Var<'g>) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let xv = g.var(x.clone());
    let out = f(xv)?;
    eval_scalar(out)?;
    let analytic = g.backward(out)?.wrt(xv).expect("leaf gradient");

    let value_at = |t: Tensor| -> Result<f64> {
        let g = Graph::new();
        let v = g.var(t);
        eval_scalar(f(v)?)
    };
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let num = (value_at(plus)? - value_at(minus)?) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic.data()[i], num));
    }
    Ok(worst)
}

/// Same check over every entry of every parameter in `store`.
pub fn grad_check_params<F>(store: &ParamStore, f: F) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &ParamStore) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let out = f(&g, store)?;
    eval_scalar(out)?;
    let grads = g.backward(out)?;

    let value_of = |s: &ParamStore| -> Result<f64> {
        let g = Graph::new();
        eval_scalar(f(&g, s)?)
    };
    let mut work = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.get(id).numel();
        let zeros = vec![0.0; n];
        let analytic = grads.param(id).unwrap_or(&zeros).to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + STEP;
            let fp = value_of(&work)?;
            work.get_mut(id).data_mut()[i] = orig - STEP;
            let fm = value_of(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            worst = worst.max(rel_err(a, (fp - fm) / (2.0 * STEP)));
        }
    }
    Ok(worst)
}
