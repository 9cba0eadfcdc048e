//! Input-state ensembles, the stacked parameterization `V` and its design metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{QptError, Result};
use crate::tensorkit::{
    self, c, check_density_matrix, hermitian_eig, kron, singular_values, CMatrix, CVector, C64,
    RANK_TOL,
};

pub const STATE_TOL: f64 = 1e-9;

/// Relative tolerance for the optimal-design equality test.
pub const ACHIEVE_RTOL: f64 = 1e-6;

/// Re-draw budget for random ensembles that come out rank deficient.
pub const MAX_REDRAWS: usize = 10;

/// `M` density matrices whose vectorizations span the `d^2`-dimensional
/// operator space.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEnsemble {
    d: usize,
    states: Vec<CMatrix>,
    label: String,
}

impl InputEnsemble {
    pub fn new(states: Vec<CMatrix>, label: impl Into<String>) -> Result<Self> {
        let d = states
            .first()
            .ok_or_else(|| QptError::InvalidState("empty ensemble".into()))?
            .nrows();
        for (m, rho) in states.iter().enumerate() {
            if rho.nrows() != d || rho.ncols() != d {
                return Err(QptError::DimensionMismatch(format!(
                    "state {m} is {}x{}, expected {d}x{d}",
                    rho.nrows(),
                    rho.ncols()
                )));
            }
            check_density_matrix(rho, STATE_TOL)
                .map_err(|e| QptError::InvalidState(format!("state {m}: {e}")))?;
        }
        let e = Self {
            d,
            states,
            label: label.into(),
        };
        if e.len() < d * d || !full_rank(&e.v_matrix()) {
            return Err(QptError::NotInformationallyComplete(format!(
                "{} states of dimension {d} do not span the operator space",
                e.len()
            )));
        }
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `V = [vec(ρ_1), ..., vec(ρ_M)]`, a `d^2 x M` matrix.
    pub fn v_matrix(&self) -> CMatrix {
        let d2 = self.d * self.d;
        let mut v = CMatrix::zeros(d2, self.len());
        for (m, rho) in self.states.iter().enumerate() {
            v.column_mut(m).copy_from(&tensorkit::vec(rho));
        }
        v
    }

    /// Same states in a different order (`order[i]` is the old index of new state `i`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let states = order
            .iter()
            .map(|&i| {
                self.states
                    .get(i)
                    .cloned()
                    .ok_or_else(|| QptError::DimensionMismatch(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, self.label.clone())
    }
}

pub(crate) fn full_rank(a: &CMatrix) -> bool {
    let s = singular_values(a);
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    max > 0.0 && min > RANK_TOL * max
}

/// `|ψ><ψ| / <ψ|ψ>`
pub fn projector(psi: &CVector) -> CMatrix {
    let p = psi * psi.adjoint();
    let t = psi.norm_squared();
    p.unscale(t)
}

fn ket(entries: &[C64]) -> CVector {
    CVector::from_column_slice(entries)
}

pub(crate) fn basis_ket(d: usize, i: usize) -> CVector {
    let mut k = CVector::zeros(d);
    k[i] = c(1.0, 0.0);
    k
}

/// Qubit kets in the order `Z+, Z-, X+, X-, Y+, Y-`.
pub(crate) fn qubit_axis_kets() -> Vec<CVector> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        ket(&[c(1.0, 0.0), c(0.0, 0.0)]),
        ket(&[c(0.0, 0.0), c(1.0, 0.0)]),
        ket(&[c(h, 0.0), c(h, 0.0)]),
        ket(&[c(h, 0.0), c(-h, 0.0)]),
        ket(&[c(h, 0.0), c(0.0, h)]),
        ket(&[c(h, 0.0), c(0.0, -h)]),
    ]
}

/// The five two-qubit mutually unbiased bases, as `d + 1` lists of kets.
/// `|R> = (|0> - i|1>)/√2` and `|L> = (|0> + i|1>)/√2`.
pub(crate) fn mub4_bases() -> Vec<Vec<CVector>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
    let one = ket(&[c(0.0, 0.0), c(1.0, 0.0)]);
    let plus = ket(&[c(h, 0.0), c(h, 0.0)]);
    let minus = ket(&[c(h, 0.0), c(-h, 0.0)]);
    let r = ket(&[c(h, 0.0), c(0.0, -h)]);
    let l = ket(&[c(h, 0.0), c(0.0, h)]);
    let k2 = |a: &CVector, b: &CVector| -> CVector {
        let m = kron(&CMatrix::from_column_slice(2, 1, a.as_slice()), &CMatrix::from_column_slice(2, 1, b.as_slice()));
        CVector::from_column_slice(m.as_slice())
    };
    let i = c(0.0, 1.0);
    // (|ab> ± i|ce>)/√2
    let pair = |a: &CVector, b: &CVector, x: &CVector, y: &CVector, sign: f64| -> CVector {
        (k2(a, b) + k2(x, y) * (i * sign)).unscale(2f64.sqrt())
    };
    vec![
        vec![k2(&zero, &zero), k2(&zero, &one), k2(&one, &zero), k2(&one, &one)],
        vec![k2(&r, &plus), k2(&r, &minus), k2(&l, &plus), k2(&l, &minus)],
        vec![k2(&plus, &r), k2(&minus, &r), k2(&plus, &l), k2(&minus, &l)],
        vec![
            pair(&r, &zero, &l, &one, 1.0),
            pair(&r, &zero, &l, &one, -1.0),
            pair(&r, &one, &l, &zero, 1.0),
            pair(&r, &one, &l, &zero, -1.0),
        ],
        vec![
            pair(&r, &r, &l, &l, 1.0),
            pair(&r, &r, &l, &l, -1.0),
            pair(&r, &l, &l, &r, 1.0),
            pair(&r, &l, &l, &r, -1.0),
        ],
    ]
}

/// Mutually unbiased bases for `d ∈ {2, 4}`.
pub(crate) fn mub_bases(d: usize) -> Result<Vec<Vec<CVector>>> {
    match d {
        2 => Ok(qubit_axis_kets().chunks(2).map(|c| c.to_vec()).collect()),
        4 => Ok(mub4_bases()),
        _ => Err(QptError::UnsupportedDimension { what: "MUB", d }),
    }
}

/// Unnormalized SIC fiducial kets for `d ∈ {2, 4}`.
pub(crate) fn sic_kets(d: usize) -> Result<Vec<CVector>> {
    match d {
        2 => {
            let s2 = 2f64.sqrt();
            let bloch = [
                [0.0, 0.0, 1.0],
                [2.0 * s2 / 3.0, 0.0, -1.0 / 3.0],
                [-s2 / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
                [-s2 / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
            ];
            Ok(bloch
                .iter()
                .map(|&[x, y, z]| {
                    // |ψ> = cos(θ/2)|0> + e^{iφ} sin(θ/2)|1>
                    let theta = z.clamp(-1.0, 1.0).acos();
                    let phi = y.atan2(x);
                    ket(&[
                        c((theta / 2.0).cos(), 0.0),
                        C64::from_polar((theta / 2.0).sin(), phi),
                    ])
                })
                .collect())
        }
        4 => {
            let x = (2.0 + 5f64.sqrt()).sqrt();
            let (o, i) = (c(1.0, 0.0), c(0.0, 1.0));
            let xx = c(x, 0.0);
            let rows: [[C64; 16]; 4] = [
                [xx, xx, xx, xx, i, i, -i, -i, i, i, -i, -i, i, i, -i, -i],
                [o, o, -o, -o, xx, xx, xx, xx, i, -i, i, -i, o, -o, o, -o],
                [o, -o, o, -o, o, -o, o, -o, xx, xx, xx, xx, -i, i, i, -i],
                [o, -o, -o, o, -i, i, i, -i, -o, o, o, -o, xx, xx, xx, xx],
            ];
            Ok((0..16)
                .map(|n| {
                    let col = ket(&[rows[0][n], rows[1][n], rows[2][n], rows[3][n]]);
                    let norm = col.norm();
                    col.unscale(norm)
                })
                .collect())
        }
        _ => Err(QptError::UnsupportedDimension { what: "SIC", d }),
    }
}

pub fn sic_states(d: usize) -> Result<InputEnsemble> {
    let states = sic_kets(d)?.iter().map(projector).collect();
    InputEnsemble::new(states, format!("sic-{d}"))
}

/// All `d(d+1)` states of the mutually unbiased bases, basis by basis.
/// For `d = 2` the order is `Z+, Z-, X+, X-, Y+, Y-`.
pub fn mub_states(d: usize) -> Result<InputEnsemble> {
    let states = mub_bases(d)?.iter().flatten().map(projector).collect();
    InputEnsemble::new(states, format!("mub-{d}"))
}

/// `d` computational projectors followed by `|+><+|, |-><-|` for each pair
/// `j < k`, with `|+> = (|j> + |k>)/√2` and `|-> = (|j> + i|k>)/√2`.
pub fn natural_basis_states(d: usize) -> Result<InputEnsemble> {
    if d < 2 {
        return Err(QptError::UnsupportedDimension {
            what: "natural basis",
            d,
        });
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut states: Vec<CMatrix> = (0..d).map(|j| projector(&basis_ket(d, j))).collect();
    for (j, k) in natural_pairs(d) {
        let (bj, bk) = (basis_ket(d, j), basis_ket(d, k));
        states.push(projector(&(&bj + &bk).scale(h)));
        states.push(projector(&(&bj + bk * c(0.0, 1.0)).scale(h)));
    }
    InputEnsemble::new(states, format!("natural-{d}"))
}

fn natural_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
        .collect()
}

/// Coefficients `T` (`d^2 x d^2`) with `Σ_m T[m, i] ρ_m = |j><k|` for
/// `i = j + k d`, i.e. `V T = I` for [`natural_basis_states`]:
/// `|j><k| = ρ_+ + i ρ_- - (1+i)/2 (|j><j| + |k><k|)`, and the complex
/// conjugate coefficients give `|k><j|`.
pub fn natural_basis_coefficients(d: usize) -> CMatrix {
    let d2 = d * d;
    let mut t = CMatrix::zeros(d2, d2);
    for j in 0..d {
        t[(j, j + j * d)] = c(1.0, 0.0);
    }
    let w = c(-0.5, -0.5);
    for (p, (j, k)) in natural_pairs(d).into_iter().enumerate() {
        let (plus, minus) = (d + 2 * p, d + 2 * p + 1);
        for (col, conj) in [(j + k * d, false), (k + j * d, true)] {
            let f = |z: C64| if conj { z.conj() } else { z };
            t[(plus, col)] = c(1.0, 0.0);
            t[(minus, col)] = f(c(0.0, 1.0));
            t[(j, col)] = f(w);
            t[(k, col)] = f(w);
        }
    }
    t
}

/// Hilbert-Schmidt random density matrix `G G^† / Tr(G G^†)` with Ginibre `G`.
pub fn random_density_matrix(d: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let p = &g * g.adjoint();
    let t = p.trace().re;
    p.unscale(t)
}

/// `M` Hilbert-Schmidt random states, re-drawn (up to [`MAX_REDRAWS`] times)
/// if the draw is not informationally complete.
pub fn random_states(d: usize, m: usize, seed: u64) -> Result<InputEnsemble> {
    if d < 1 || m < d * d {
        return Err(QptError::NotInformationallyComplete(format!(
            "need at least {} random states for d = {d}, got {m}",
            d * d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..=MAX_REDRAWS {
        let states = (0..m).map(|_| random_density_matrix(d, &mut rng)).collect();
        match InputEnsemble::new(states, format!("random-{d}-{m}-{seed}")) {
            Ok(e) => return Ok(e),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

/// Tensor products `ρ_{j1} ⊗ ... ⊗ ρ_{jm}` of qubit ensembles, first part's
/// index varying slowest.
pub fn product_ensemble(parts: &[InputEnsemble]) -> Result<InputEnsemble> {
    let first = parts
        .first()
        .ok_or_else(|| QptError::InvalidState("no parts".into()))?;
    for p in parts {
        if p.dim() != 2 {
            return Err(QptError::UnsupportedDimension {
                what: "product ensemble part",
                d: p.dim(),
            });
        }
    }
    let mut states = first.states.clone();
    for p in &parts[1..] {
        states = states
            .iter()
            .flat_map(|a| p.states.iter().map(move |b| kron(a, b)))
            .collect();
    }
    let label = parts
        .iter()
        .map(|p| p.label.as_str())
        .collect::<Vec<_>>()
        .join("x");
    InputEnsemble::new(states, label)
}

/// Optimality report for an input ensemble.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DesignReportV {
    pub d: usize,
    pub m: usize,
    /// `M Tr((V̄ V^T)^{-1})`
    pub cost: f64,
    /// `cond(V)`
    pub cond: f64,
    /// Eigenvalues of `V̄ V^T`, descending.
    pub eigs: Vec<f64>,
    /// `d^4 + d^3 - d^2`
    pub lower_cost: f64,
    /// `√(d + 1)`
    pub lower_cond: f64,
    pub achieves: bool,
}

pub fn design_metrics_v(e: &InputEnsemble) -> Result<DesignReportV> {
    let v = e.v_matrix();
    let s = singular_values(&v);
    let (smax, smin) = (s[0], *s.last().expect("non-empty"));
    if smin.partial_cmp(&(RANK_TOL * smax)) != Some(std::cmp::Ordering::Greater) {
        return Err(QptError::NotInformationallyComplete(format!(
            "V is singular (σ_min/σ_max = {:e})",
            smin / smax
        )));
    }
    let g = v.conjugate() * v.transpose();
    let eigs = hermitian_eig(&g)?.values;
    let (d, m) = (e.dim() as f64, e.len() as f64);
    let cost = m * eigs.iter().map(|t| 1.0 / t).sum::<f64>();
    let top = m / d;
    let rest = m / (d * (d + 1.0));
    let achieves = rel_close(eigs[0], top) && eigs[1..].iter().all(|&t| rel_close(t, rest));
    Ok(DesignReportV {
        d: e.dim(),
        m: e.len(),
        cost,
        cond: smax / smin,
        eigs,
        lower_cost: d.powi(4) + d.powi(3) - d * d,
        lower_cond: (d + 1.0).sqrt(),
        achieves,
    })
}

/// Lower bounds `(20^m, √(3^m))` for products of `m` single-qubit ensembles.
pub fn product_lower_bounds(m: u32) -> (f64, f64) {
    (20f64.powi(m as i32), 3f64.powi(m as i32).sqrt())
}

pub(crate) fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ACHIEVE_RTOL * b.abs().max(1e-300)
}
