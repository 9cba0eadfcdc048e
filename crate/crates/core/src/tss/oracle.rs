//! Brute-force reference implementation with fully materialized matrices.
//! Only meant for `d ≤ 3`.

use crate::detectors::PovmCollection;
use crate::ensembles::InputEnsemble;
use crate::error::{QptError, Result};
use crate::simulator::MeasurementRecord;
use crate::tensorkit::{self, commutation_map, kron, r_map, CMatrix, C64};

pub const MAX_ORACLE_DIM: usize = 3;

/// Dense estimates for cross-checking the structured pipeline.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    /// `R^T (I ⊗ W) K^T (I ⊗ C^+) vec(P̂^T)`, reshaped.
    pub two_step: CMatrix,
    /// One-shot least squares `(Y^† Y)^{-1} Y^† vec(P̂^T)` with `Y = (I ⊗ C) K B`.
    pub global_ls: CMatrix,
}

fn guard(d: usize) -> Result<()> {
    if d > MAX_ORACLE_DIM {
        Err(QptError::OracleTooLarge(d))
    } else {
        Ok(())
    }
}

/// `|j><k|` for row-major index `i = j d + k`.
fn basis_op(d: usize, i: usize) -> CMatrix {
    let mut e = CMatrix::zeros(d, d);
    e[(i / d, i % d)] = C64::new(1.0, 0.0);
    e
}

/// `B` (`M d^2 x d^4`): column `j + k d^2` stacks `vec(E_j ρ_m E_k^†)` over `m`,
/// row index `m + n M`.
pub fn dense_b(e: &InputEnsemble) -> Result<CMatrix> {
    let d = e.dim();
    guard(d)?;
    let (m_count, d2) = (e.len(), d * d);
    let ops: Vec<CMatrix> = (0..d2).map(|i| basis_op(d, i)).collect();
    let mut b = CMatrix::zeros(m_count * d2, d2 * d2);
    for j in 0..d2 {
        for k in 0..d2 {
            for (m, rho) in e.states().iter().enumerate() {
                let v = tensorkit::vec(&(&ops[j] * rho * ops[k].adjoint()));
                for n in 0..d2 {
                    b[(m + n * m_count, j + k * d2)] = v[n];
                }
            }
        }
    }
    Ok(b)
}

/// Inverse of a Hermitian positive-definite normal matrix.
fn normal_inverse(g: CMatrix) -> Result<CMatrix> {
    g.try_inverse()
        .ok_or_else(|| QptError::NotInformationallyComplete("singular normal matrix".into()))
}

pub fn dense_oracle_estimate(
    rec: &MeasurementRecord,
    e: &InputEnsemble,
    p: &PovmCollection,
) -> Result<DenseOracle> {
    let d = e.dim();
    guard(d)?;
    let (m_count, l, d2) = (e.len(), p.num_outcomes(), d * d);
    if rec.num_states() != m_count || rec.num_outcomes() != l || p.dim() != d {
        return Err(QptError::DimensionMismatch("record, ensemble and POVM disagree".into()));
    }
    let c = p.c_matrix();
    let v = e.v_matrix();
    let c_pinv = normal_inverse(c.adjoint() * &c)? * c.adjoint();
    let w = normal_inverse(v.conjugate() * v.transpose())? * v.conjugate();

    // vec(P̂^T): entry l + m L
    let mut p_vec = tensorkit::CVector::zeros(l * m_count);
    for m in 0..m_count {
        for li in 0..l {
            p_vec[li + m * l] = C64::new(rec.freq[(m, li)], 0.0);
        }
    }

    let k = commutation_map(m_count, d2).to_dense();
    let r = r_map(d).to_dense();
    let eye_m = CMatrix::identity(m_count, m_count);
    let eye_d2 = CMatrix::identity(d2, d2);
    let two = r.transpose() * kron(&eye_d2, &w) * k.transpose() * kron(&eye_m, &c_pinv) * &p_vec;

    let y = kron(&eye_m, &c) * &k * dense_b(e)?;
    let y_adj = y.adjoint();
    let global = normal_inverse(&y_adj * &y)? * y_adj * &p_vec;

    Ok(DenseOracle {
        two_step: tensorkit::unvec(two.as_slice(), d2, d2)?,
        global_ls: tensorkit::unvec(global.as_slice(), d2, d2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::random_channel;
    use crate::detectors::{cube_povm, random_bases_povm};
    use crate::ensembles::{random_states, sic_states};
    use crate::simulator::{ideal_probabilities, sample_record};
    use crate::tensorkit::testutil::max_abs_diff;
    use crate::tss::tss_estimate;

    fn structured_b(e: &InputEnsemble) -> CMatrix {
        let d2 = e.dim() * e.dim();
        kron(&CMatrix::identity(d2, d2), &e.v_matrix().transpose()) * r_map(e.dim()).to_dense()
    }

    #[test]
    fn b_factorizes() {
        for e in [sic_states(2).unwrap(), random_states(3, 9, 4).unwrap()] {
            let diff = max_abs_diff(&dense_b(&e).unwrap(), &structured_b(&e));
            assert!(diff <= 1e-12, "d = {}: {diff}", e.dim());
        }
    }

    #[test]
    fn dense_agrees_with_structured() {
        let cases = [
            (random_channel(2, false, 1).unwrap(), random_states(2, 7, 2).unwrap(), cube_povm(1).unwrap()),
            (random_channel(3, true, 3).unwrap(), random_states(3, 11, 4).unwrap(), random_bases_povm(3, 4, 5).unwrap()),
        ];
        for (ch, e, p) in cases {
            let x = ch.process_matrix();
            let probs = ideal_probabilities(&x, &e, &p).unwrap();
            let rec = sample_record(&probs, &p.sizes(), 2000, 6).unwrap();
            let dense = dense_oracle_estimate(&rec, &e, &p).unwrap();
            let est = tss_estimate(&rec, &e, &p, false).unwrap();
            assert!(max_abs_diff(&dense.two_step, &est.d_hat) <= 1e-10);

            let exact = MeasurementRecord::exact(probs, p.sizes(), 2000).unwrap();
            let dense = dense_oracle_estimate(&exact, &e, &p).unwrap();
            assert!((&dense.two_step - x.matrix()).norm() <= 1e-9);
            assert!((&dense.global_ls - x.matrix()).norm() <= 1e-9);
        }
    }

    #[test]
    fn refuses_large_dimensions() {
        let e = sic_states(4).unwrap();
        assert!(matches!(dense_b(&e), Err(QptError::OracleTooLarge(4))));
    }
}
