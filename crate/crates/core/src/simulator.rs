//! Born-rule probabilities and finite-shot sampling of frequency matrices.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::channels::ProcessMatrix;
use crate::detectors::PovmCollection;
use crate::ensembles::InputEnsemble;
use crate::error::{QptError, Result};
use crate::tensorkit;

/// Probabilities below this are rejected; values in `[-NEG_TOL, 0)` are treated as 0.
pub const NEG_TOL: f64 = 1e-12;

/// Empirical (or exact) frequency matrix `P̂` (`M x L`) plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    /// `freq[(m, l)] = count / shots_per_set`.
    pub freq: DMatrix<f64>,
    /// Raw outcome counts, `None` for exact records.
    pub counts: Option<DMatrix<u64>>,
    /// Lost shots per `(state, set)` for trace-decreasing processes.
    pub no_click: Option<DMatrix<u64>>,
    /// `n_j` for each POVM set, in column order.
    pub set_sizes: Vec<usize>,
    /// Copies per input state `N`.
    pub copies: u64,
    /// `floor(N / J)`
    pub shots_per_set: u64,
    pub seed: Option<u64>,
    pub ideal: Option<DMatrix<f64>>,
}

impl MeasurementRecord {
    pub fn num_states(&self) -> usize {
        self.freq.nrows()
    }

    pub fn num_outcomes(&self) -> usize {
        self.freq.ncols()
    }

    pub fn num_sets(&self) -> usize {
        self.set_sizes.len()
    }

    /// Record whose frequencies are the exact probabilities.
    pub fn exact(ideal: DMatrix<f64>, set_sizes: Vec<usize>, copies: u64) -> Result<Self> {
        check_layout(&ideal, &set_sizes)?;
        let j = set_sizes.len() as u64;
        Ok(Self {
            freq: ideal.clone(),
            counts: None,
            no_click: None,
            shots_per_set: copies / j,
            set_sizes,
            copies,
            seed: None,
            ideal: Some(ideal),
        })
    }

    /// Record from arbitrary frequencies (used for fuzzing and imports).
    pub fn from_frequencies(freq: DMatrix<f64>, set_sizes: Vec<usize>, copies: u64) -> Result<Self> {
        check_layout(&freq, &set_sizes)?;
        let j = set_sizes.len() as u64;
        Ok(Self {
            freq,
            counts: None,
            no_click: None,
            shots_per_set: copies / j,
            set_sizes,
            copies,
            seed: None,
            ideal: None,
        })
    }
}

fn check_layout(p: &DMatrix<f64>, set_sizes: &[usize]) -> Result<()> {
    let l: usize = set_sizes.iter().sum();
    if set_sizes.is_empty() || set_sizes.contains(&0) || p.ncols() != l {
        return Err(QptError::DimensionMismatch(format!(
            "{} columns do not match set sizes {set_sizes:?}",
            p.ncols()
        )));
    }
    if p.nrows() == 0 {
        return Err(QptError::DimensionMismatch("no input states".into()));
    }
    Ok(())
}

/// `P[(m, l)] = Tr(E(ρ_m) P_l)`
pub fn ideal_probabilities(
    x: &ProcessMatrix,
    e: &InputEnsemble,
    p: &PovmCollection,
) -> Result<DMatrix<f64>> {
    let d = x.dim();
    if e.dim() != d || p.dim() != d {
        return Err(QptError::DimensionMismatch(format!(
            "process d = {d}, ensemble d = {}, POVM d = {}",
            e.dim(),
            p.dim()
        )));
    }
    let c = p.c_matrix();
    let mut out = DMatrix::zeros(e.len(), p.num_outcomes());
    for (m, rho) in e.states().iter().enumerate() {
        let probs = &c * tensorkit::vec(&x.map_operator(rho));
        for (l, v) in probs.iter().enumerate() {
            out[(m, l)] = v.re;
        }
    }
    Ok(out)
}

/// Multinomial sampling of `floor(N / J)` shots for every (state, set) cell.
///
/// Probability mass missing from a set (trace-decreasing processes) is drawn
/// as an extra no-click outcome whose counts are kept in the record but not in
/// `freq`. Cell `(m, j)` uses the ChaCha stream `m J + j` of `seed`, so the
/// draws do not depend on evaluation order.
pub fn sample_record(
    ideal: &DMatrix<f64>,
    set_sizes: &[usize],
    copies: u64,
    seed: u64,
) -> Result<MeasurementRecord> {
    check_layout(ideal, set_sizes)?;
    for col in 0..ideal.ncols() {
        for row in 0..ideal.nrows() {
            let v = ideal[(row, col)];
            if v.is_nan() || v < -NEG_TOL {
                return Err(QptError::NegativeProbability { row, col, value: v });
            }
        }
    }
    let jn = set_sizes.len();
    let shots = copies / jn as u64;
    let (m_count, l) = ideal.shape();
    let mut offsets = Vec::with_capacity(jn);
    let mut acc = 0;
    for &n in set_sizes {
        offsets.push(acc);
        acc += n;
    }

    let rows: Vec<(Vec<u64>, Vec<u64>)> = (0..m_count)
        .into_par_iter()
        .map(|m| {
            let mut counts = vec![0u64; l];
            let mut lost = vec![0u64; jn];
            for (j, &n) in set_sizes.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((m * jn + j) as u64);
                let probs: Vec<f64> = (0..n).map(|i| ideal[(m, offsets[j] + i)].max(0.0)).collect();
                let (cell, rest) = multinomial(shots, &probs, &mut rng);
                counts[offsets[j]..offsets[j] + n].copy_from_slice(&cell);
                lost[j] = rest;
            }
            (counts, lost)
        })
        .collect();

    let mut counts = DMatrix::zeros(m_count, l);
    let mut no_click = DMatrix::zeros(m_count, jn);
    for (m, (c, lost)) in rows.into_iter().enumerate() {
        for (i, v) in c.into_iter().enumerate() {
            counts[(m, i)] = v;
        }
        for (j, v) in lost.into_iter().enumerate() {
            no_click[(m, j)] = v;
        }
    }
    let freq = if shots == 0 {
        DMatrix::zeros(m_count, l)
    } else {
        counts.map(|k| k as f64 / shots as f64)
    };
    Ok(MeasurementRecord {
        freq,
        counts: Some(counts),
        no_click: Some(no_click),
        set_sizes: set_sizes.to_vec(),
        copies,
        shots_per_set: shots,
        seed: Some(seed),
        ideal: Some(ideal.clone()),
    })
}

/// Chain-of-binomials multinomial draw. Returns the outcome counts and the
/// number of shots assigned to the residual mass `1 - Σ p`.
fn multinomial(shots: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> (Vec<u64>, u64) {
    let mut remaining = shots;
    let mut mass = 1.0f64.max(probs.iter().sum());
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let k = if remaining == 0 || mass <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("q in [0, 1]").sample(rng)
        };
        out.push(k);
        remaining -= k;
        mass -= p;
    }
    (out, remaining)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{identity_channel, random_channel};
    use crate::detectors::cube_povm;
    use crate::ensembles::{mub_states, projector, random_states, basis_ket};
    use crate::tss::oracle::dense_b;
    use crate::tensorkit::{commutation_map, kron, CMatrix, C64};

    #[test]
    fn identity_channel_on_zero_state() {
        let x = identity_channel(2).process_matrix();
        let rho0 = projector(&basis_ket(2, 0));
        let mut states = vec![rho0];
        states.extend(mub_states(2).unwrap().states().iter().cloned());
        let e = InputEnsemble::new(states, "zero-first").unwrap();
        let p = ideal_probabilities(&x, &e, &cube_povm(1).unwrap()).unwrap();
        let want = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        for (l, w) in want.iter().enumerate() {
            assert!((p[(0, l)] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_linear_model() {
        let ch = random_channel(2, false, 4).unwrap();
        let x = ch.process_matrix();
        let e = random_states(2, 6, 1).unwrap();
        let povm = cube_povm(1).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        let (m, l) = (e.len(), povm.num_outcomes());
        let i_c = kron(&CMatrix::identity(m, m), &povm.c_matrix());
        let k = commutation_map(m, 4).to_dense();
        let y = i_c * k * dense_b(&e).unwrap();
        let pv = y * tensorkit::vec(x.matrix());
        // pv = vec(P^T): entry l + m L
        for mi in 0..m {
            for li in 0..l {
                assert!((pv[li + mi * l] - C64::new(p[(mi, li)], 0.0)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn trace_decreasing_row_sums() {
        let x = random_channel(4, false, 2).unwrap().process_matrix();
        let e = mub_states(4).unwrap();
        let povm = cube_povm(2).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        for m in 0..e.len() {
            let sums: Vec<f64> = povm.set_ranges().into_iter().map(|r| r.map(|l| p[(m, l)]).sum()).collect();
            assert!(sums[0] < 1.0);
            assert!(sums.iter().all(|s| (s - sums[0]).abs() < 1e-12));
            let out_tr = x.map_operator(&e.states()[m]).trace().re;
            assert!((sums[0] - out_tr).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let x = random_channel(2, false, 8).unwrap().process_matrix();
        let e = mub_states(2).unwrap();
        let povm = cube_povm(1).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        let a = sample_record(&p, &povm.sizes(), 3001, 17).unwrap();
        let b = sample_record(&p, &povm.sizes(), 3001, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shots_per_set, 1000);
        let counts = a.counts.as_ref().unwrap();
        let lost = a.no_click.as_ref().unwrap();
        for m in 0..e.len() {
            for (j, r) in povm.set_ranges().into_iter().enumerate() {
                let total: u64 = r.clone().map(|l| counts[(m, l)]).sum::<u64>() + lost[(m, j)];
                assert_eq!(total, 1000);
                let f: f64 = r.map(|l| a.freq[(m, l)]).sum();
                assert!((f - (1000 - lost[(m, j)]) as f64 / 1000.0).abs() < 1e-12);
            }
        }
        assert_ne!(a, sample_record(&p, &povm.sizes(), 3001, 18).unwrap());
    }

    #[test]
    fn tp_rows_sum_to_one() {
        let x = random_channel(2, true, 8).unwrap().process_matrix();
        let e = mub_states(2).unwrap();
        let povm = cube_povm(1).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        let rec = sample_record(&p, &povm.sizes(), 999, 1).unwrap();
        for m in 0..e.len() {
            for r in povm.set_ranges() {
                let f: f64 = r.map(|l| rec.freq[(m, l)]).sum();
                assert!((f - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn large_n_approaches_probabilities() {
        let x = random_channel(2, true, 3).unwrap().process_matrix();
        let e = mub_states(2).unwrap();
        let povm = cube_povm(1).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        let rec = sample_record(&p, &povm.sizes(), 300_000_000, 5).unwrap();
        assert!((&rec.freq - &p).abs().max() <= 5e-4);
    }

    #[test]
    fn variance_matches_binomial() {
        let x = random_channel(2, true, 6).unwrap().process_matrix();
        let e = mub_states(2).unwrap();
        let povm = cube_povm(1).unwrap();
        let p = ideal_probabilities(&x, &e, &povm).unwrap();
        let (n, reps) = (3000u64, 1000);
        let shots = (n / 3) as f64;
        let (mut s1, mut s2) = (DMatrix::<f64>::zeros(6, 6), DMatrix::<f64>::zeros(6, 6));
        for r in 0..reps {
            let f = sample_record(&p, &povm.sizes(), n, 1000 + r).unwrap().freq;
            s1 += &f;
            s2 += f.component_mul(&f);
        }
        let reps = reps as f64;
        for i in 0..36 {
            let pv = p[i];
            let mean = s1[i] / reps;
            let var = (s2[i] - reps * mean * mean) / (reps - 1.0);
            let want = (pv - pv * pv) / shots;
            // unbiased at 3σ
            assert!((mean - pv).abs() <= 3.0 * (want / reps).sqrt() + 1e-12);
            if want > 1e-6 {
                assert!((var / want - 1.0).abs() <= 0.15, "cell {i}: {var} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_negative_probabilities() {
        let mut p = DMatrix::from_element(1, 2, 0.5);
        p[(0, 1)] = -1e-6;
        assert!(matches!(
            sample_record(&p, &[2], 10, 0),
            Err(QptError::NegativeProbability { row: 0, col: 1, .. })
        ));
        p[(0, 1)] = -1e-13;
        assert!(sample_record(&p, &[2], 10, 0).is_ok());
        assert!(sample_record(&p, &[3], 10, 0).is_err());
    }
}
