//! Reconstruction error, process fidelity and the error-scaling functional.

use serde::{Deserialize, Serialize};

use crate::channels::ProcessMatrix;
use crate::detectors::{design_metrics_c, PovmCollection};
use crate::ensembles::{design_metrics_v, InputEnsemble};
use crate::error::{QptError, Result};
use crate::tensorkit::{hermitian_eig, psd_sqrt, CMatrix};

/// `[Tr √(√X̂ X √X̂)]^2 / (Tr X Tr X̂)`
pub fn fidelity(x_hat: &CMatrix, x: &CMatrix) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(QptError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let (ta, tb) = (x_hat.trace().re, x.trace().re);
    if ta.abs() <= f64::MIN_POSITIVE || tb.abs() <= f64::MIN_POSITIVE {
        return Err(QptError::ZeroTrace);
    }
    let s = psd_sqrt(x_hat)?;
    let inner = hermitian_eig(&(&s * x * &s))?;
    let root: f64 = inner.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(root * root / (ta * tb))
}

/// `√d Tr(F) √(J Tr((C^†C)^{-1})) √(M Tr((V̄V^T)^{-1})) / √N`, the scaling of
/// the expected reconstruction error without its hidden constant.
pub fn error_bound_functional(
    d: usize,
    trace_f: f64,
    j: usize,
    trace_c_inv: f64,
    m: usize,
    trace_v_inv: f64,
    copies: f64,
) -> f64 {
    (d as f64).sqrt()
        * trace_f
        * (j as f64 * trace_c_inv).sqrt()
        * (m as f64 * trace_v_inv).sqrt()
        / copies.sqrt()
}

/// [`error_bound_functional`] for a concrete process and design with
/// `copies` copies per input state.
pub fn design_bound(x: &ProcessMatrix, e: &InputEnsemble, p: &PovmCollection, copies: u64) -> Result<f64> {
    let c = design_metrics_c(p)?;
    let v = design_metrics_v(e)?;
    Ok(error_bound_functional(
        x.dim(),
        x.success_operator().trace().re,
        c.j,
        c.cost / c.j as f64,
        v.m,
        v.cost / v.m as f64,
        copies as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `‖X̂ - X‖`
    pub frob_error: f64,
    /// `‖X̂ - X‖^2`
    pub mse: f64,
    pub fidelity: f64,
    pub infidelity: f64,
    pub bound_functional: f64,
}

impl ErrorReport {
    pub fn new(x_hat: &CMatrix, x: &CMatrix, bound_functional: f64) -> Result<Self> {
        let frob_error = (x_hat - x).norm();
        let fid = fidelity(x_hat, x)?;
        Ok(Self {
            frob_error,
            mse: frob_error * frob_error,
            fidelity: fid,
            infidelity: 1.0 - fid,
            bound_functional,
        })
    }
}
