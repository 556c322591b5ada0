//! Central finite-difference gradient verification.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{backward, no_grad, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Check at most this many evenly spaced entries per parameter.
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-4,
            max_entries_per_param: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamError {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradReport {
    pub tol: f64,
    pub params: Vec<ParamError>,
    pub pass: bool,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

fn entry_indices(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < len => (0..c).map(|k| k * len / c).collect(),
        _ => (0..len).collect(),
    }
}

/// Finite-difference gradient for the selected entries of every parameter.
/// Returned vectors are dense; unselected entries are NaN.
pub fn numeric_gradient<F>(
    store: &mut ParamStore,
    forward: &F,
    step: f64,
    max_entries_per_param: Option<usize>,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&ParamStore) -> Result<Tensor>,
{
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let len = store.get(id).numel();
        let mut g = vec![f64::NAN; len];
        for i in entry_indices(len, max_entries_per_param) {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + step;
            let plus = no_grad(|| forward(store))?.item();
            store.get_mut(id).data_mut()[i] = orig - step;
            let minus = no_grad(|| forward(store))?.item();
            store.get_mut(id).data_mut()[i] = orig;
            g[i] = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares analytic against numeric gradients; NaN numeric entries are skipped.
pub fn compare_gradients(
    store: &ParamStore,
    analytic: &[Vec<f64>],
    numeric: &[Vec<f64>],
    tol: f64,
) -> GradReport {
    let params: Vec<ParamError> = store
        .iter()
        .zip(analytic.iter().zip(numeric))
        .map(|((_, p), (a, n))| {
            let mut checked = 0;
            let mut worst: f64 = 0.0;
            for (&ga, &gn) in a.iter().zip(n) {
                if gn.is_nan() {
                    continue;
                }
                checked += 1;
                let e = rel_error(ga, gn);
                worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
            }
            ParamError {
                name: p.name.clone(),
                entries_checked: checked,
                max_rel_error: worst,
            }
        })
        .collect();
    let pass = params.iter().all(|p| p.max_rel_error < tol);
    GradReport { tol, params, pass }
}

/// Checks the gradient of `forward` (a deterministic scalar function of the
/// store) with step 1e-4 and the given tolerance.
pub fn grad_check<F>(store: &mut ParamStore, forward: F, tol: f64) -> Result<GradReport>
where
    F: Fn(&ParamStore) -> Result<Tensor>,
{
    grad_check_with(
        store,
        forward,
        GradCheckOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn grad_check_with<F>(store: &mut ParamStore, forward: F, opts: GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&ParamStore) -> Result<Tensor>,
{
    let analytic = {
        let loss = forward(store)?;
        backward(&loss)?.aligned(store)
    };
    let numeric = numeric_gradient(store, &forward, opts.step, opts.max_entries_per_param)?;
    Ok(compare_gradients(store, &analytic, &numeric, opts.tol))
}
