//! POVM collections, the stacked parameterization `C` and its design metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channels::random_unitary;
use crate::ensembles::{basis_ket, full_rank, mub_bases, projector, qubit_axis_kets, rel_close, sic_kets};
use crate::error::{QptError, Result};
use crate::tensorkit::{self, hermitian_eig, kron, singular_values, CMatrix, RANK_TOL};

pub const POVM_TOL: f64 = 1e-9;

/// `J` POVM sets; set `j` has `n_j` elements summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmCollection {
    d: usize,
    sets: Vec<Vec<CMatrix>>,
    label: String,
}

impl PovmCollection {
    pub fn new(sets: Vec<Vec<CMatrix>>, label: impl Into<String>) -> Result<Self> {
        let d = sets
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| QptError::InvalidPovm("empty collection".into()))?
            .nrows();
        let id = CMatrix::identity(d, d);
        for (j, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(QptError::InvalidPovm(format!("set {j} is empty")));
            }
            let mut sum = CMatrix::zeros(d, d);
            for (i, p) in set.iter().enumerate() {
                if p.nrows() != d || p.ncols() != d {
                    return Err(QptError::DimensionMismatch(format!(
                        "element {i} of set {j} is {}x{}, expected {d}x{d}",
                        p.nrows(),
                        p.ncols()
                    )));
                }
                if !tensorkit::all_finite(p) || !tensorkit::is_hermitian(p, POVM_TOL) {
                    return Err(QptError::InvalidPovm(format!(
                        "element {i} of set {j} is not Hermitian"
                    )));
                }
                let min = hermitian_eig(p)?.min();
                if min < -POVM_TOL {
                    return Err(QptError::InvalidPovm(format!(
                        "element {i} of set {j} has eigenvalue {min:e}"
                    )));
                }
                sum += p;
            }
            let dev = (sum - &id).norm();
            if dev > POVM_TOL {
                return Err(QptError::InvalidPovm(format!(
                    "set {j} sums to identity only within {dev:e}"
                )));
            }
        }
        let p = Self {
            d,
            sets,
            label: label.into(),
        };
        if p.num_outcomes() < d * d || !full_rank(&p.c_matrix()) {
            return Err(QptError::NotInformationallyComplete(format!(
                "{} POVM elements do not span the operator space of dimension {d}",
                p.num_outcomes()
            )));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of sets `J`.
    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    /// Total number of elements `L = Σ n_j`.
    pub fn num_outcomes(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn sets(&self) -> &[Vec<CMatrix>] {
        &self.sets
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Column ranges of each set in the flattened outcome order.
    pub fn set_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.sets
            .iter()
            .map(|s| {
                let r = start..start + s.len();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn elements(&self) -> impl Iterator<Item = &CMatrix> {
        self.sets.iter().flatten()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `C` (`L x d^2`) with row `l` equal to `vec(P_l)^†`, so that
    /// `C vec(ρ)` lists the Born probabilities `Tr(P_l ρ)`.
    pub fn c_matrix(&self) -> CMatrix {
        let d2 = self.d * self.d;
        let mut c = CMatrix::zeros(self.num_outcomes(), d2);
        for (l, p) in self.elements().enumerate() {
            c.row_mut(l).copy_from(&tensorkit::vec(p).adjoint());
        }
        c
    }

    /// `(1 - ε) P + ε Tr(P) I / d` applied to every element.
    pub fn perturbed(&self, eps: f64) -> Result<Self> {
        let d = self.d;
        let sets = self
            .sets
            .iter()
            .map(|s| {
                s.iter()
                    .map(|p| p.scale(1.0 - eps) + CMatrix::identity(d, d) * (p.trace() * eps / d as f64))
                    .collect()
            })
            .collect();
        Self::new(sets, format!("{}~{eps}", self.label))
    }
}

/// Pauli eigenprojector sets `Z, X, Y` (each as `+, -`) and their `m`-fold
/// tensor products, sets ordered lexicographically with the first qubit slowest.
pub fn cube_povm(m: usize) -> Result<PovmCollection> {
    if m == 0 {
        return Err(QptError::UnsupportedDimension { what: "cube POVM qubit count", d: 0 });
    }
    let single: Vec<Vec<CMatrix>> = qubit_axis_kets()
        .chunks(2)
        .map(|pair| pair.iter().map(projector).collect())
        .collect();
    let mut sets = single.clone();
    for _ in 1..m {
        sets = sets
            .iter()
            .flat_map(|a| {
                single.iter().map(move |b| {
                    a.iter()
                        .flat_map(|x| b.iter().map(move |y| kron(x, y)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
    }
    PovmCollection::new(sets, format!("cube-{m}"))
}

/// Projective measurements in the `d + 1` mutually unbiased bases, `d ∈ {2, 4}`.
pub fn mub_povm(d: usize) -> Result<PovmCollection> {
    let sets = mub_bases(d)?
        .iter()
        .map(|b| b.iter().map(projector).collect())
        .collect();
    PovmCollection::new(sets, format!("mub-povm-{d}"))
}

/// Single set `{ρ_n / d}` built from the SIC states, `d ∈ {2, 4}`.
pub fn sic_povm(d: usize) -> Result<PovmCollection> {
    let set = sic_kets(d)?
        .iter()
        .map(|k| projector(k).unscale(d as f64))
        .collect();
    PovmCollection::new(vec![set], format!("sic-povm-{d}"))
}

/// Projective measurements in `j` Haar-random orthonormal bases.
pub fn random_bases_povm(d: usize, j: usize, seed: u64) -> Result<PovmCollection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..j)
        .map(|_| {
            let u = random_unitary(d, &mut rng);
            (0..d)
                .map(|i| projector(&u.column(i).into_owned()))
                .collect()
        })
        .collect();
    PovmCollection::new(sets, format!("random-bases-{d}-{j}-{seed}"))
}

/// Computational-basis measurement alone; never informationally complete,
/// kept for error-path tests.
pub fn computational_set(d: usize) -> Vec<CMatrix> {
    (0..d).map(|i| projector(&basis_ket(d, i))).collect()
}

/// Optimality report for a POVM collection.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DesignReportC {
    pub d: usize,
    pub j: usize,
    pub sizes: Vec<usize>,
    /// `J Tr((C^† C)^{-1})`
    pub cost: f64,
    /// `cond(C)`
    pub cond: f64,
    /// Eigenvalues of `C^† C`, descending.
    pub eigs: Vec<f64>,
    /// `Σ_j d / n_j`
    pub s: f64,
    /// `J (1/s + (d^2 - 1)^2 / (J d - s))`
    pub lower_cost: f64,
    /// `√((d^2 - 1) s / (J d - s))`
    pub lower_cond: f64,
    pub achieves: bool,
}

pub fn design_metrics_c(p: &PovmCollection) -> Result<DesignReportC> {
    let c = p.c_matrix();
    let sv = singular_values(&c);
    let (smax, smin) = (sv[0], *sv.last().expect("non-empty"));
    if smin.partial_cmp(&(RANK_TOL * smax)) != Some(std::cmp::Ordering::Greater) {
        return Err(QptError::NotInformationallyComplete(format!(
            "C is singular (σ_min/σ_max = {:e})",
            smin / smax
        )));
    }
    let eigs = hermitian_eig(&(c.adjoint() * &c))?.values;
    let d = p.dim() as f64;
    let jn = p.num_sets() as f64;
    let s: f64 = p.sizes().iter().map(|&n| d / n as f64).sum();
    let cost = jn * eigs.iter().map(|v| 1.0 / v).sum::<f64>();
    let d2m1 = d * d - 1.0;
    let rest = (jn * d - s) / d2m1;
    let achieves = rel_close(eigs[0], s) && eigs[1..].iter().all(|&v| rel_close(v, rest));
    Ok(DesignReportC {
        d: p.dim(),
        j: p.num_sets(),
        sizes: p.sizes(),
        cost,
        cond: smax / smin,
        eigs,
        s,
        lower_cost: jn * (1.0 / s + d2m1 * d2m1 / (jn * d - s)),
        lower_cond: (d2m1 * s / (jn * d - s)).sqrt(),
        achieves,
    })
}
