//! Two-stage reconstruction: per-state linear inversion, structured least
//! squares, PSD projection and the partial-trace correction.

pub mod oracle;

use nalgebra::DMatrix;

use crate::detectors::PovmCollection;
use crate::ensembles::InputEnsemble;
use crate::error::{QptError, Result};
use crate::simulator::MeasurementRecord;
use crate::tensorkit::{
    self, from_spectrum, hermitian_eig, left_pinv, partial_trace_first, r_map, CMatrix,
    PermutationMap, C64,
};

/// Eigenvalues of `F̂` at or below `RANK_RTOL * max(f̂_1, 1)` count as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// Below this smallest eigenvalue of `F̂` the trace-preserving correction is
/// abandoned in favour of the general one.
pub const TP_PRIOR_MIN_EIG: f64 = 1e-8;

/// Pseudo-inverses for one (ensemble, POVM) pair, reusable across records.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    d: usize,
    m: usize,
    set_sizes: Vec<usize>,
    /// `C^+` (`d^2 x L`)
    c_pinv: CMatrix,
    /// `(V^T)^+` (`d^2 x M`)
    w: CMatrix,
    r: PermutationMap,
}

impl Reconstructor {
    pub fn new(e: &InputEnsemble, p: &PovmCollection) -> Result<Self> {
        if e.dim() != p.dim() {
            return Err(QptError::DimensionMismatch(format!(
                "ensemble d = {}, POVM d = {}",
                e.dim(),
                p.dim()
            )));
        }
        let d = e.dim();
        Ok(Self {
            d,
            m: e.len(),
            set_sizes: p.sizes(),
            c_pinv: left_pinv(&p.c_matrix())?,
            w: left_pinv(&e.v_matrix().transpose())?,
            r: r_map(d),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn c_pinv(&self) -> &CMatrix {
        &self.c_pinv
    }

    pub fn v_pinv(&self) -> &CMatrix {
        &self.w
    }

    /// Step 1: `Â = P̂ (C^+)^T`; row `m` is `vec(ρ̂_m^out)^T`.
    pub fn step1(&self, rec: &MeasurementRecord) -> Result<CMatrix> {
        if rec.num_states() != self.m || rec.set_sizes != self.set_sizes {
            return Err(QptError::DimensionMismatch(format!(
                "record is {}x{} with sets {:?}; expected {} states and sets {:?}",
                rec.num_states(),
                rec.num_outcomes(),
                rec.set_sizes,
                self.m,
                self.set_sizes
            )));
        }
        Ok(step1_with(&rec.freq, &self.c_pinv))
    }

    /// Step 2 on the cached `(V^T)^+`.
    pub fn step2(&self, a_hat: &CMatrix) -> Result<CMatrix> {
        step2_with(a_hat, &self.w, &self.r)
    }

    /// All four steps.
    pub fn estimate(&self, rec: &MeasurementRecord, tp_prior: bool) -> Result<TssEstimate> {
        let a_hat = self.step1(rec)?;
        let d_hat = self.step2(&a_hat)?;
        let (g_hat, clipped) = step3_psd_project(&d_hat)?;
        let s4 = step4_trace_correct(&g_hat, self.d, rec.copies as f64, tp_prior)?;
        Ok(TssEstimate {
            x_hat: s4.x_hat,
            a_hat,
            d_hat,
            g_hat,
            f_hat: s4.f_hat,
            f_vectors: s4.f_vectors,
            f_bar: s4.f_bar,
            f_tilde: s4.f_tilde,
            tp_prior,
            tp_fallback: s4.tp_fallback,
            rank: s4.rank,
            clipped,
        })
    }
}

/// Result of the full pipeline with all intermediates.
#[derive(Debug, Clone)]
pub struct TssEstimate {
    pub x_hat: CMatrix,
    /// `M x d^2`
    pub a_hat: CMatrix,
    /// Unconstrained least-squares process matrix.
    pub d_hat: CMatrix,
    /// Nearest PSD matrix to `D̂`.
    pub g_hat: CMatrix,
    /// Spectrum of `F̂ = Tr_1(Ĝ)`, descending, with eigenvectors as columns of `f_vectors`.
    pub f_hat: Vec<f64>,
    pub f_vectors: CMatrix,
    pub f_bar: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub tp_prior: bool,
    /// Set when `tp_prior` was requested but `F̂` was too close to singular.
    pub tp_fallback: bool,
    /// Numerical rank `c` of `F̂`.
    pub rank: usize,
    /// Number of negative eigenvalues of `D̂` set to zero.
    pub clipped: usize,
}

/// One-shot helper that builds a [`Reconstructor`] and runs it.
pub fn tss_estimate(
    rec: &MeasurementRecord,
    e: &InputEnsemble,
    p: &PovmCollection,
    tp_prior: bool,
) -> Result<TssEstimate> {
    Reconstructor::new(e, p)?.estimate(rec, tp_prior)
}

pub fn step1_reconstruct_a(rec: &MeasurementRecord, p: &PovmCollection) -> Result<CMatrix> {
    if rec.set_sizes != p.sizes() {
        return Err(QptError::DimensionMismatch(format!(
            "record sets {:?} vs POVM sets {:?}",
            rec.set_sizes,
            p.sizes()
        )));
    }
    Ok(step1_with(&rec.freq, &left_pinv(&p.c_matrix())?))
}

fn step1_with(freq: &DMatrix<f64>, c_pinv: &CMatrix) -> CMatrix {
    freq.map(|v| C64::new(v, 0.0)) * c_pinv.transpose()
}

pub fn step2_least_squares(a_hat: &CMatrix, e: &InputEnsemble) -> Result<CMatrix> {
    let w = left_pinv(&e.v_matrix().transpose())?;
    step2_with(a_hat, &w, &r_map(e.dim()))
}

/// `vec(D̂) = R^T vec(W Â)` for a left inverse `W` of `V^T`.
pub fn step2_with(a_hat: &CMatrix, w: &CMatrix, r: &PermutationMap) -> Result<CMatrix> {
    let d2 = a_hat.ncols();
    if w.ncols() != a_hat.nrows() || w.nrows() != d2 || r.size() != d2 * d2 {
        return Err(QptError::DimensionMismatch(format!(
            "Â is {}x{}, W is {}x{}",
            a_hat.nrows(),
            d2,
            w.nrows(),
            w.ncols()
        )));
    }
    let y = w * a_hat;
    let vec_d = r.apply_inverse(y.as_slice());
    tensorkit::unvec(&vec_d, d2, d2)
}

/// Frobenius-nearest PSD matrix: clip the negative spectrum of `(D̂ + D̂^†)/2`.
/// Returns the projection and the number of clipped eigenvalues.
pub fn step3_psd_project(d_hat: &CMatrix) -> Result<(CMatrix, usize)> {
    let eig = hermitian_eig(d_hat)?;
    let clipped = eig.values.iter().filter(|&&k| k < 0.0).count();
    let b: Vec<f64> = eig.values.iter().map(|&k| k.max(0.0)).collect();
    Ok((from_spectrum(&eig.vectors, &b), clipped))
}

/// Output of the partial-trace correction.
#[derive(Debug, Clone)]
pub struct Step4Output {
    pub x_hat: CMatrix,
    pub f_hat: Vec<f64>,
    pub f_vectors: CMatrix,
    pub f_bar: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub rank: usize,
    pub tp_fallback: bool,
}

/// Rescale `Ĝ` so that `Tr_1(X̂) ≤ I`: `X̂ = (I ⊗ T) Ĝ (I ⊗ T)^†` with
/// `T = F̃^{1/2} F̄^{-1/2}` (or `T = F̂^{-1/2}` under the trace-preserving prior).
pub fn step4_trace_correct(
    g_hat: &CMatrix,
    d: usize,
    copies: f64,
    tp_prior: bool,
) -> Result<Step4Output> {
    let f = partial_trace_first(g_hat, d)?;
    let eig = hermitian_eig(&f)?;
    let f_hat = eig.values.clone();
    let top = f_hat[0].max(1.0);
    let rank = f_hat.iter().filter(|&&v| v > RANK_RTOL * top).count();

    let mut f_bar = f_hat.clone();
    if rank > 0 {
        let fill = f_hat[rank - 1] / copies;
        for v in &mut f_bar[rank..] {
            *v = fill;
        }
    }
    let f_tilde: Vec<f64> = f_bar.iter().map(|&v| v.min(1.0)).collect();
    let out = |x_hat: CMatrix, tp_fallback| Step4Output {
        x_hat,
        f_hat: f_hat.clone(),
        f_vectors: eig.vectors.clone(),
        f_bar: f_bar.clone(),
        f_tilde: f_tilde.clone(),
        rank,
        tp_fallback,
    };

    let mut tp_fallback = false;
    if tp_prior {
        if eig.min() >= TP_PRIOR_MIN_EIG {
            let scale: Vec<f64> = f_hat.iter().map(|v| 1.0 / v.sqrt()).collect();
            let t = from_spectrum(&eig.vectors, &scale);
            return Ok(out(conjugate_blocks(g_hat, &t, d), false));
        }
        tp_fallback = true;
    }
    if rank == 0 || f_bar.iter().all(|&v| v <= 1.0) {
        return Ok(out(g_hat.clone(), tp_fallback));
    }
    let scale: Vec<f64> = f_tilde
        .iter()
        .zip(&f_bar)
        .map(|(t, b)| (t / b).sqrt())
        .collect();
    let t = from_spectrum(&eig.vectors, &scale);
    Ok(out(conjugate_blocks(g_hat, &t, d), tp_fallback))
}

/// `(I_d ⊗ T) G (I_d ⊗ T)^†`, computed block by block.
fn conjugate_blocks(g: &CMatrix, t: &CMatrix, d: usize) -> CMatrix {
    let mut out = CMatrix::zeros(d * d, d * d);
    let t_adj = t.adjoint();
    for b in 0..d {
        for bp in 0..d {
            let block = g.view((b * d, bp * d), (d, d));
            let conj = t * block * &t_adj;
            out.view_mut((b * d, bp * d), (d, d)).copy_from(&conj);
        }
    }
    tensorkit::hermitian_part(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{identity_channel, random_channel};
    use crate::detectors::cube_povm;
    use crate::ensembles::{mub_states, natural_basis_coefficients, natural_basis_states, random_states, sic_states};
    use crate::simulator::{ideal_probabilities, sample_record};
    use crate::tensorkit::c;
    use crate::tensorkit::testutil::{max_abs_diff, random_hermitian, random_psd, rng};
    use proptest::prelude::*;

    fn exact(
        x: &crate::channels::ProcessMatrix,
        e: &InputEnsemble,
        p: &PovmCollection,
    ) -> MeasurementRecord {
        let probs = ideal_probabilities(x, e, p).unwrap();
        MeasurementRecord::exact(probs, p.sizes(), 10_000).unwrap()
    }

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { c(v[i], 0.0) } else { c(0.0, 0.0) })
    }

    fn max_tr1_eig(x: &CMatrix, d: usize) -> f64 {
        hermitian_eig(&partial_trace_first(x, d).unwrap()).unwrap().max()
    }

    #[test]
    fn step1_noiseless_recovers_outputs() {
        let ch = identity_channel(2);
        let x = ch.process_matrix();
        let e = mub_states(2).unwrap();
        let p = cube_povm(1).unwrap();
        let a = step1_reconstruct_a(&exact(&x, &e, &p), &p).unwrap();
        for (m, rho) in e.states().iter().enumerate() {
            let row: Vec<C64> = a.row(m).iter().copied().collect();
            let out = tensorkit::unvec(&row, 2, 2).unwrap();
            assert!(max_abs_diff(&out, rho) <= 1e-10);
        }
    }

    #[test]
    fn step2_noiseless_is_exact() {
        let x = random_channel(4, false, 21).unwrap().process_matrix();
        let p = cube_povm(2).unwrap();
        for e in [sic_states(4).unwrap(), mub_states(4).unwrap(), natural_basis_states(4).unwrap()] {
            let a = step1_reconstruct_a(&exact(&x, &e, &p), &p).unwrap();
            let d = step2_least_squares(&a, &e).unwrap();
            assert!((d - x.matrix()).norm() <= 1e-9);
        }
    }

    #[test]
    fn natural_basis_step2_is_isometric() {
        // With inputs recombined into |j><k|, V = I and D̂ is a permutation of Â.
        let d = 2;
        let x = random_channel(d, true, 2).unwrap().process_matrix();
        let e = natural_basis_states(d).unwrap();
        let p = cube_povm(1).unwrap();
        let t = natural_basis_coefficients(d);
        let truth = step1_reconstruct_a(&exact(&x, &e, &p), &p).unwrap();
        let probs = ideal_probabilities(&x, &e, &p).unwrap();
        let noisy = sample_record(&probs, &p.sizes(), 3000, 4).unwrap();
        let a_hat = step1_reconstruct_a(&noisy, &p).unwrap();
        let (a_true, a_est) = (t.transpose() * truth, t.transpose() * a_hat);
        let eye = CMatrix::identity(d * d, d * d);
        let r = r_map(d);
        let d_true = step2_with(&a_true, &eye, &r).unwrap();
        let d_est = step2_with(&a_est, &eye, &r).unwrap();
        assert!((d_true - x.matrix()).norm() <= 1e-10);
        assert!(((&d_est - x.matrix()).norm() - (&a_est - &a_true).norm()).abs() <= 1e-10);
    }

    #[test]
    fn psd_projection_examples() {
        let (g, k) = step3_psd_project(&diag(&[2.0, -1.0])).unwrap();
        assert!(max_abs_diff(&g, &diag(&[2.0, 0.0])) <= 1e-15);
        assert_eq!(k, 1);
        let mut r = rng(1);
        let a = random_psd(6, &mut r);
        let (g, k) = step3_psd_project(&a).unwrap();
        assert!(max_abs_diff(&g, &a) <= 1e-12);
        assert_eq!(k, 0);
    }

    #[test]
    fn psd_projection_is_optimal() {
        let mut r = rng(2);
        let dh = random_hermitian(5, &mut r);
        let (g, _) = step3_psd_project(&dh).unwrap();
        let best = (&g - &dh).norm();
        for _ in 0..100 {
            let z = random_psd(5, &mut r);
            assert!(best <= (z - &dh).norm());
        }
    }

    #[test]
    fn step4_leaves_feasible_g_alone() {
        // Tr_1(vec(I) vec(I)^†) = I, so this G has F̂ = 0.9 I
        let d = 3;
        let v = tensorkit::vec(&CMatrix::identity(d, d));
        let g = (&v * v.adjoint()).scale(0.9);
        let f = partial_trace_first(&g, d).unwrap();
        assert!(max_abs_diff(&f, &CMatrix::identity(d, d).scale(0.9)) < 1e-12);
        let s = step4_trace_correct(&g, d, 1000.0, false).unwrap();
        assert_eq!(s.x_hat, g);
        assert_eq!(s.rank, d);
    }

    #[test]
    fn step4_caps_large_eigenvalues() {
        let mut r = rng(9);
        let d = 2;
        let mut g = random_psd(4, &mut r);
        let top = max_tr1_eig(&g, d);
        g = g.scale(1.2 / top);
        let s = step4_trace_correct(&g, d, 1e4, false).unwrap();
        assert!(max_tr1_eig(&s.x_hat, d) <= 1.0 + 1e-9);
        assert!(s.f_tilde.iter().all(|&v| v <= 1.0));
        assert!(hermitian_eig(&s.x_hat).unwrap().min() >= -1e-12);
    }

    #[test]
    fn step4_rank_deficient_fill() {
        // F̂ of rank 1: filler f̂_c / N for the null direction
        let d = 2;
        let v = tensorkit::vec(&diag(&[1.5, 0.0]));
        let g = &v * v.adjoint();
        let s = step4_trace_correct(&g, d, 100.0, false).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.f_bar[1] - 2.25 / 100.0).abs() < 1e-15);
        assert!(max_tr1_eig(&s.x_hat, d) <= 1.0 + 1e-9);
        let zero = step4_trace_correct(&CMatrix::zeros(4, 4), d, 100.0, false).unwrap();
        assert_eq!(zero.rank, 0);
        assert_eq!(zero.x_hat, CMatrix::zeros(4, 4));
    }

    #[test]
    fn tp_prior_on_noisy_data() {
        let x = random_channel(2, true, 13).unwrap().process_matrix();
        let e = mub_states(2).unwrap();
        let p = cube_povm(1).unwrap();
        let probs = ideal_probabilities(&x, &e, &p).unwrap();
        let rec = sample_record(&probs, &p.sizes(), 3000, 3).unwrap();
        let est = tss_estimate(&rec, &e, &p, true).unwrap();
        assert!(!est.tp_fallback);
        let f = partial_trace_first(&est.x_hat, 2).unwrap();
        assert!((f - CMatrix::identity(2, 2)).norm() <= 1e-9);
    }

    #[test]
    fn tp_prior_falls_back_when_singular() {
        let v = tensorkit::vec(&diag(&[1.0, 0.0]));
        let g = &v * v.adjoint();
        let s = step4_trace_correct(&g, 2, 100.0, true).unwrap();
        assert!(s.tp_fallback);
        assert!(max_tr1_eig(&s.x_hat, 2) <= 1.0 + 1e-9);
    }

    #[test]
    fn noiseless_pipeline_is_identity() {
        let e = mub_states(4).unwrap();
        let p = cube_povm(2).unwrap();
        let rc = Reconstructor::new(&e, &p).unwrap();
        for (seed, tp) in [(1, true), (2, false)] {
            let x = random_channel(4, tp, seed).unwrap().process_matrix();
            let est = rc.estimate(&exact(&x, &e, &p), false).unwrap();
            assert!((&est.x_hat - x.matrix()).norm() <= 1e-8);
        }
    }

    #[test]
    fn projection_chain_bound() {
        let x = random_channel(2, true, 5).unwrap().process_matrix();
        let e = random_states(2, 6, 3).unwrap();
        let p = cube_povm(1).unwrap();
        let probs = ideal_probabilities(&x, &e, &p).unwrap();
        for seed in 0..20 {
            let rec = sample_record(&probs, &p.sizes(), 300, seed).unwrap();
            let est = tss_estimate(&rec, &e, &p, false).unwrap();
            assert!((&est.g_hat - &est.d_hat).norm() <= (x.matrix() - &est.d_hat).norm() + 1e-12);
        }
    }

    #[test]
    fn record_shape_is_checked() {
        let e = mub_states(2).unwrap();
        let p = cube_povm(1).unwrap();
        let rec = MeasurementRecord::from_frequencies(DMatrix::zeros(5, 6), p.sizes(), 10).unwrap();
        assert!(matches!(tss_estimate(&rec, &e, &p, false), Err(QptError::DimensionMismatch(_))));
        assert!(Reconstructor::new(&e, &cube_povm(2).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn arbitrary_frequencies_give_physical_output(seed in any::<u64>(), tp in any::<bool>(), scale in 0.0f64..5.0) {
            let e = mub_states(2).unwrap();
            let p = cube_povm(1).unwrap();
            let mut r = rng(seed);
            let freq = DMatrix::from_fn(6, 6, |_, _| scale * rand::Rng::random::<f64>(&mut r));
            let rec = MeasurementRecord::from_frequencies(freq, p.sizes(), 600).unwrap();
            let est = tss_estimate(&rec, &e, &p, tp).unwrap();
            prop_assert!(tensorkit::is_hermitian(&est.x_hat, 1e-9));
            prop_assert!(hermitian_eig(&est.x_hat).unwrap().min() >= -1e-9);
            prop_assert!(max_tr1_eig(&est.x_hat, 2) <= 1.0 + 1e-9);
        }
    }
}
