//! Ground-truth channels and their process matrices in the natural basis.
//!
//! The operator basis is `E_i = |j><k|` with `i = j d + k` (row-major), so the
//! coordinates of a Kraus operator `A` are `vec(A^T)`. With that choice
//! `Tr_1(X) = (Σ A^† A)^T`, whose spectrum is the success-probability spectrum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{QptError, Result};
use crate::tensorkit::{
    self, c, check_density_matrix, hermitian_eig, outer, partial_trace_first, psd_sqrt, CMatrix,
    C64,
};

/// Absolute tolerance for channel and process-matrix validity checks.
pub const CHANNEL_TOL: f64 = 1e-9;

/// Kraus representation `ρ ↦ Σ A_i ρ A_i^†` with `Σ A_i^† A_i ≤ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    d: usize,
    kraus: Vec<CMatrix>,
    label: Option<String>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let d = kraus
            .first()
            .ok_or_else(|| QptError::InvalidChannel("no Kraus operators".into()))?
            .nrows();
        if d == 0 {
            return Err(QptError::InvalidChannel("zero dimension".into()));
        }
        for (i, a) in kraus.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(QptError::InvalidChannel(format!(
                    "Kraus operator {i} is {}x{}, expected {d}x{d}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if !tensorkit::all_finite(a) {
                return Err(QptError::InvalidChannel(format!(
                    "Kraus operator {i} has a non-finite entry"
                )));
            }
        }
        let ch = Self {
            d,
            kraus,
            label: None,
        };
        let top = hermitian_eig(&ch.completeness())?.max();
        if top > 1.0 + CHANNEL_TOL {
            return Err(QptError::InvalidChannel(format!(
                "Σ A†A has eigenvalue {top} > 1"
            )));
        }
        Ok(ch)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// `Σ A_i^† A_i`
    pub fn completeness(&self) -> CMatrix {
        self.kraus
            .iter()
            .fold(CMatrix::zeros(self.d, self.d), |acc, a| acc + a.adjoint() * a)
    }

    pub fn is_trace_preserving(&self) -> bool {
        let e = hermitian_eig(&self.completeness()).expect("square");
        e.values.iter().all(|v| (v - 1.0).abs() <= CHANNEL_TOL)
    }

    /// Linear extension of the channel to an arbitrary `d x d` operator.
    pub fn map_operator(&self, op: &CMatrix) -> CMatrix {
        self.kraus
            .iter()
            .fold(CMatrix::zeros(self.d, self.d), |acc, a| acc + a * op * a.adjoint())
    }

    /// Output state for a validated input state.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        check_input(self.d, rho)?;
        Ok(self.map_operator(rho))
    }

    pub fn process_matrix(&self) -> ProcessMatrix {
        process_from_kraus(self)
    }
}

/// Process matrix `X` (`d^2 x d^2`, Hermitian PSD, `Tr_1(X) ≤ I`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    d: usize,
    x: CMatrix,
}

impl ProcessMatrix {
    pub fn new(d: usize, x: CMatrix) -> Result<Self> {
        let d2 = d * d;
        if x.nrows() != d2 || x.ncols() != d2 {
            return Err(QptError::DimensionMismatch(format!(
                "process matrix must be {d2}x{d2}, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if !tensorkit::all_finite(&x) {
            return Err(QptError::InvalidProcess("non-finite entry".into()));
        }
        if (&x - x.adjoint()).norm() > CHANNEL_TOL {
            return Err(QptError::InvalidProcess("not Hermitian".into()));
        }
        let min = hermitian_eig(&x)?.min();
        if min < -CHANNEL_TOL {
            return Err(QptError::InvalidProcess(format!(
                "eigenvalue {min:e} < 0"
            )));
        }
        let f_max = hermitian_eig(&partial_trace_first(&x, d)?)?.max();
        if f_max > 1.0 + CHANNEL_TOL {
            return Err(QptError::InvalidProcess(format!(
                "Tr_1(X) has eigenvalue {f_max} > 1"
            )));
        }
        Ok(Self { d, x })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.x
    }

    pub fn into_matrix(self) -> CMatrix {
        self.x
    }

    /// `F = Tr_1(X)`.
    pub fn success_operator(&self) -> CMatrix {
        success_operator(self)
    }

    pub fn is_trace_preserving(&self) -> bool {
        let f = self.success_operator();
        (f - CMatrix::identity(self.d, self.d)).norm() <= CHANNEL_TOL
    }

    /// `Σ_{jk} X_jk E_j op E_k^†`, evaluated entrywise:
    /// with `j = x d + y`, `k = u d + v`, the term is `X_jk op[y,v] |x><u|`.
    pub fn map_operator(&self, op: &CMatrix) -> CMatrix {
        let d = self.d;
        let mut out = CMatrix::zeros(d, d);
        for u in 0..d {
            for x in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for v in 0..d {
                    for y in 0..d {
                        acc += self.x[(x * d + y, u * d + v)] * op[(y, v)];
                    }
                }
                out[(x, u)] = acc;
            }
        }
        out
    }

    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        check_input(self.d, rho)?;
        Ok(self.map_operator(rho))
    }
}

fn check_input(d: usize, rho: &CMatrix) -> Result<()> {
    if rho.nrows() != d || rho.ncols() != d {
        return Err(QptError::DimensionMismatch(format!(
            "state is {}x{}, channel acts on dimension {d}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    check_density_matrix(rho, CHANNEL_TOL)
}

/// `X = Σ_i c_i c_i^†` with `c_i = vec(A_i^T)`, the row-major coordinates of `A_i`.
pub fn process_from_kraus(ch: &KrausChannel) -> ProcessMatrix {
    let d2 = ch.d * ch.d;
    let mut x = CMatrix::zeros(d2, d2);
    for a in &ch.kraus {
        let coords = tensorkit::vec(&a.transpose());
        x += outer(&coords, &coords);
    }
    ProcessMatrix { d: ch.d, x }
}

pub fn success_operator(x: &ProcessMatrix) -> CMatrix {
    partial_trace_first(&x.x, x.d).expect("shape validated at construction")
}

pub fn identity_channel(d: usize) -> KrausChannel {
    KrausChannel::new(vec![CMatrix::identity(d, d)])
        .expect("identity is a channel")
        .with_label(format!("identity-{d}"))
}

/// Two-qubit CNOT in the basis order `|00>, |01>, |10>, |11>`:
/// basis index 1 maps to index 3 and index 2 is fixed.
pub fn cnot_channel() -> KrausChannel {
    let one = c(1.0, 0.0);
    let mut u = CMatrix::zeros(4, 4);
    u[(0, 0)] = one;
    u[(3, 1)] = one;
    u[(2, 2)] = one;
    u[(1, 3)] = one;
    KrausChannel::new(vec![u]).expect("unitary").with_label("cnot")
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..d {
        let rii = r[(i, i)];
        if rii.norm() > 0.0 {
            let mut col = q.column_mut(i);
            col *= rii / rii.norm();
        }
    }
    q
}

/// Kraus-operator diagonals of the four-dimensional reference process,
/// truncated or zero-padded to dimension `d`.
const DIAG_A1: [f64; 2] = [0.5, 0.4];
const DIAG_A2: [f64; 2] = [0.1, 0.2];

/// Default target spectrum of `Σ A^† A` for trace-decreasing channels.
pub fn default_loss_spectrum(d: usize) -> Vec<f64> {
    if d == 4 {
        vec![1.0, 0.8, 0.7, 0.5]
    } else {
        (0..d)
            .map(|i| 1.0 - 0.5 * i as f64 / (d - 1) as f64)
            .collect()
    }
}

/// Three-Kraus random channel:
/// `A1 = U1 diag(0.5, 0.4, 0..)`, `A2 = U2 diag(0.1, 0.2, 0..)`,
/// `A3 = U3 sqrt(T - A1^†A1 - A2^†A2)` with `T = I` when `tp` is set and
/// `T = U4 diag(loss spectrum) U4^†` otherwise.
pub fn random_channel(d: usize, tp: bool, seed: u64) -> Result<KrausChannel> {
    if tp {
        random_channel_with_target(d, None, seed)
    } else {
        random_channel_with_target(d, Some(&default_loss_spectrum(d)), seed)
    }
}

/// As [`random_channel`], with an explicit spectrum for `Σ A^† A`
/// (`None` means trace preserving).
pub fn random_channel_with_target(
    d: usize,
    spectrum: Option<&[f64]>,
    seed: u64,
) -> Result<KrausChannel> {
    if d < 2 {
        return Err(QptError::UnsupportedDimension {
            what: "random channel",
            d,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = |vals: &[f64]| {
        CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                c(vals.get(i).copied().unwrap_or(0.0), 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    };
    let u1 = random_unitary(d, &mut rng);
    let u2 = random_unitary(d, &mut rng);
    let u3 = random_unitary(d, &mut rng);
    let a1 = u1 * diag(&DIAG_A1);
    let a2 = u2 * diag(&DIAG_A2);
    let target = match spectrum {
        None => CMatrix::identity(d, d),
        Some(s) => {
            if s.len() != d || s.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(QptError::InvalidChannel(format!(
                    "target spectrum must have {d} entries in [0, 1]"
                )));
            }
            let u4 = random_unitary(d, &mut rng);
            &u4 * diag(s) * u4.adjoint()
        }
    };
    let residual = target - a1.adjoint() * &a1 - a2.adjoint() * &a2;
    let root = psd_sqrt(&tensorkit::hermitian_part(&residual)).map_err(|_| {
        QptError::InvalidChannel("target spectrum too small for the fixed Kraus operators".into())
    })?;
    let a3 = u3 * root;
    let label = if spectrum.is_none() { "random-tp" } else { "random-nontp" };
    Ok(KrausChannel::new(vec![a1, a2, a3])?.with_label(format!("{label}-{d}-{seed}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorkit::testutil::*;
    use crate::tensorkit::identity;
    use proptest::prelude::*;
    use rand::Rng;

    fn ket(d: usize, i: usize) -> CMatrix {
        let mut k = CMatrix::zeros(d, 1);
        k[(i, 0)] = c(1.0, 0.0);
        k
    }

    fn proj(d: usize, i: usize) -> CMatrix {
        let k = ket(d, i);
        &k * k.adjoint()
    }

    fn random_state(d: usize, r: &mut impl Rng) -> CMatrix {
        let p = random_psd(d, r);
        let t = p.trace();
        p / t
    }

    #[test]
    fn identity_channel_process() {
        let x = identity_channel(2).process_matrix();
        assert!((x.matrix().trace().re - 2.0).abs() < 1e-12);
        let e = hermitian_eig(x.matrix()).unwrap();
        assert!(e.values[1].abs() < 1e-12, "rank one");
        assert!(max_abs_diff(&x.success_operator(), &identity(2)) < 1e-12);
        // E(ρ) = ρ on a basis of density matrices
        let mut r = rng(10);
        for _ in 0..4 {
            let rho = random_state(2, &mut r);
            assert!(max_abs_diff(&x.apply(&rho).unwrap(), &rho) < 1e-12);
        }
    }

    #[test]
    fn cnot_process_is_rank_one() {
        let ch = cnot_channel();
        let x = ch.process_matrix();
        assert!((x.matrix().trace().re - 4.0).abs() < 1e-12);
        let sq = x.matrix() * x.matrix();
        assert!(max_abs_diff(&sq, &x.matrix().scale(4.0)) < 1e-12);
        let e = hermitian_eig(x.matrix()).unwrap();
        assert!(e.values[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((x.matrix().norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cnot_truth_table() {
        let ch = cnot_channel();
        // index 1 -> 3, index 3 -> 1, indices 0 and 2 fixed
        for (from, to) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
            let out = ch.apply(&proj(4, from)).unwrap();
            assert!(max_abs_diff(&out, &proj(4, to)) < 1e-15);
            let out_x = ch.process_matrix().apply(&proj(4, from)).unwrap();
            assert!(max_abs_diff(&out_x, &proj(4, to)) < 1e-15);
        }
    }

    #[test]
    fn reference_tp_channel() {
        let ch = random_channel(4, true, 7).unwrap();
        assert_eq!(ch.kraus().len(), 3);
        assert!(ch.is_trace_preserving());
        let x = ch.process_matrix();
        assert!((x.success_operator() - identity(4)).norm() <= 1e-9);
    }

    #[test]
    fn kraus_and_process_paths_agree() {
        let ch = random_channel(4, true, 11).unwrap();
        let x = ch.process_matrix();
        let mut r = rng(12);
        for _ in 0..20 {
            let rho = random_state(4, &mut r);
            let a = ch.apply(&rho).unwrap();
            let b = x.apply(&rho).unwrap();
            assert!(max_abs_diff(&a, &b) <= 1e-10);
        }
    }

    #[test]
    fn nontp_success_operator() {
        let ch = random_channel(4, false, 3).unwrap();
        assert!(!ch.is_trace_preserving());
        let f = ch.process_matrix().success_operator();
        assert!((f.trace().re - 3.0).abs() <= 1e-6);
        let e = hermitian_eig(&f).unwrap();
        for (got, want) in e.values.iter().zip([1.0, 0.8, 0.7, 0.5]) {
            assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn success_operator_of_tp_is_identity() {
        for seed in 0..5 {
            let f = random_channel(3, true, seed).unwrap().process_matrix().success_operator();
            assert!((f - identity(3)).norm() <= 1e-9);
        }
    }

    #[test]
    fn random_channel_is_deterministic() {
        assert_eq!(random_channel(4, false, 99).unwrap(), random_channel(4, false, 99).unwrap());
        assert_ne!(random_channel(4, true, 1).unwrap(), random_channel(4, true, 2).unwrap());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(KrausChannel::new(vec![]).is_err());
        assert!(KrausChannel::new(vec![identity(2).scale(1.1)]).is_err());
        assert!(KrausChannel::new(vec![identity(2), CMatrix::zeros(3, 3)]).is_err());
        let ch = identity_channel(2);
        assert!(matches!(ch.apply(&identity(3)), Err(QptError::DimensionMismatch(_))));
        assert!(matches!(ch.apply(&identity(2)), Err(QptError::InvalidState(_))));
        assert!(random_channel_with_target(4, Some(&[0.1; 4]), 0).is_err());
        assert!(ProcessMatrix::new(2, identity(4).scale(2.0)).is_err());
        assert!(ProcessMatrix::new(2, identity(3)).is_err());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut r = rng(5);
        let u = random_unitary(6, &mut r);
        assert!((u.adjoint() * &u - identity(6)).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generated_processes_are_valid(d in 2usize..5, tp in any::<bool>(), seed in any::<u64>()) {
            let ch = random_channel(d, tp, seed).unwrap();
            let x = ch.process_matrix();
            prop_assert!(ProcessMatrix::new(d, x.matrix().clone()).is_ok());
            let f = x.success_operator();
            prop_assert!((f.trace() - x.matrix().trace()).norm() < 1e-10);
            let mut r = rng(seed ^ 0xabc);
            let rho = random_state(d, &mut r);
            prop_assert!(max_abs_diff(&ch.apply(&rho).unwrap(), &x.apply(&rho).unwrap()) < 1e-10);
        }

        #[test]
        fn unitary_channels_have_norm_d(d in 2usize..6, seed in any::<u64>()) {
            let u = random_unitary(d, &mut rng(seed));
            let x = KrausChannel::new(vec![u]).unwrap().process_matrix();
            prop_assert!((x.matrix().norm() - d as f64).abs() < 1e-10);
            let e = hermitian_eig(x.matrix()).unwrap();
            prop_assert!(e.values[1].abs() < 1e-10);
        }
    }
}
