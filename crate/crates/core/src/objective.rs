//! Gradients and Hessian-vector products of scalar functions of a
//! [`ParamSet`].

use crate::error::{dim_err, Result, TensorError};
use crate::params::ParamSet;
use crate::scalar::{Dual, Scalar};
use crate::tape::{Tape, Var};

/// A scalar function of the parameters, evaluable on any [`Scalar`].
pub trait Objective {
    fn eval<S: Scalar>(&self, tape: &mut Tape<S>, params: &[Var]) -> Result<Var>;
}

/// Loss value and flat gradient.
pub fn value_and_grad<O: Objective>(obj: &O, params: &ParamSet) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::<f64>::new();
    let vars = params.load(&mut tape);
    let root = obj.eval(&mut tape, &vars)?;
    tape.backward(root)?;
    let loss = tape.value(root).item();
    Ok((loss, flat_grad(&tape, &vars, params.numel())))
}

pub(crate) fn flat_grad<S: Scalar>(tape: &Tape<S>, vars: &[Var], total: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(total);
    for &v in vars {
        match tape.grad(v) {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(std::iter::repeat_n(S::zero(), tape.value(v).numel())),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvpMethod {
    /// Tangent propagated through forward and backward sweeps; exact.
    Exact,
    /// Central difference of gradients.
    FiniteDifference,
}

/// `H·v` where `H` is the Hessian of `obj` at `params`.
///
/// The exact route loads every parameter as a dual number with tangent `v`
/// and differentiates; the tangent of the resulting gradient is the
/// directional derivative of the gradient along `v`, i.e. `H·v`.
pub fn hvp<O: Objective>(obj: &O, params: &ParamSet, v: &[f64]) -> Result<Vec<f64>> {
    hvp_with(obj, params, v, HvpMethod::Exact)
}

pub fn hvp_with<O: Objective>(
    obj: &O,
    params: &ParamSet,
    v: &[f64],
    method: HvpMethod,
) -> Result<Vec<f64>> {
    if v.len() != params.numel() {
        return dim_err(format!(
            "hvp: vector has {} entries, parameter count is {}",
            v.len(),
            params.numel()
        ));
    }
    match method {
        HvpMethod::Exact => {
            let mut tape = Tape::<Dual>::new();
            let vars = params.load_dual(&mut tape, v)?;
            let root = obj.eval(&mut tape, &vars)?;
            tape.backward(root)?;
            let g = flat_grad(&tape, &vars, params.numel());
            Ok(g.into_iter().map(|d| d.du).collect())
        }
        HvpMethod::FiniteDifference => hvp_finite_difference(obj, params, v),
    }
}

/// `(∇L(θ + h v) − ∇L(θ − h v)) / 2h` with `h = 1e-3·‖θ‖/‖v‖`.
pub fn hvp_finite_difference<O: Objective>(
    obj: &O,
    params: &ParamSet,
    v: &[f64],
) -> Result<Vec<f64>> {
    let vn = norm(v);
    if vn == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let tn = norm(&params.flat());
    let h = if tn > 0.0 { 1e-3 * tn / vn } else { 1e-3 / vn };
    hvp_finite_difference_step(obj, params, v, h)
}

/// Central difference of gradients with an explicit step `h`.
///
/// On ReLU networks the default step of [`hvp_finite_difference`] can move
/// parameters across activation kinks; a smaller step tracks the exact route.
pub fn hvp_finite_difference_step<O: Objective>(
    obj: &O,
    params: &ParamSet,
    v: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if v.len() != params.numel() {
        return dim_err(format!(
            "hvp: vector has {} entries, parameter count is {}",
            v.len(),
            params.numel()
        ));
    }
    let theta = params.flat();
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let mut p = params.clone();
        let moved: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + sign * h * d).collect();
        p.set_flat(&moved)?;
        Ok(value_and_grad(obj, &p)?.1)
    };
    let gp = shifted(1.0)?;
    let gm = shifted(-1.0)?;
    let out: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(TensorError::NonFinite("hvp_finite_difference"));
    }
    Ok(out)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
