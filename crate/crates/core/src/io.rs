//! JSON documents for channels, ensembles, POVMs, records and estimates, plus
//! a delimited-text export of frequency matrices.
//!
//! Complex matrices are stored as separate `re` and `im` row arrays. Floats are
//! written in shortest round-trip form, so load(save(x)) is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::detectors::PovmCollection;
use crate::ensembles::InputEnsemble;
use crate::error::{QptError, Result};
use crate::simulator::MeasurementRecord;
use crate::tensorkit::{CMatrix, C64};
use crate::tss::TssEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrixDoc {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        check_rows(&self.re, self.rows, self.cols, "re")?;
        check_rows(&self.im, self.rows, self.cols, "im")?;
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            C64::new(self.re[i][j], self.im[i][j])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrixDoc<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<T>>,
}

impl<T: nalgebra::Scalar + Copy> RealMatrixDoc<T> {
    pub fn from_matrix(m: &DMatrix<T>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<T>> {
        check_rows(&self.data, self.rows, self.cols, "data")?;
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }
}

fn check_rows<T>(rows: &[Vec<T>], r: usize, c: usize, what: &str) -> Result<()> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(QptError::Format(format!("{what} is not a {r}x{c} array")));
    }
    Ok(())
}

fn check_kind(found: &str, want: &str) -> Result<()> {
    if found != want {
        return Err(QptError::Format(format!(
            "expected a {want} document, found {found}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDoc {
    pub kind: String,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kraus: Vec<ComplexMatrixDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDoc {
    pub kind: String,
    pub d: usize,
    pub label: String,
    pub states: Vec<ComplexMatrixDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmDoc {
    pub kind: String,
    pub d: usize,
    pub label: String,
    pub sets: Vec<Vec<ComplexMatrixDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDoc {
    pub kind: String,
    pub set_sizes: Vec<usize>,
    pub copies: u64,
    pub shots_per_set: u64,
    pub seed: Option<u64>,
    pub freq: RealMatrixDoc<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<RealMatrixDoc<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_click: Option<RealMatrixDoc<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<RealMatrixDoc<f64>>,
}

/// Reconstructed process matrix with diagnostics; intermediates are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub kind: String,
    pub d: usize,
    pub x_hat: ComplexMatrixDoc,
    pub tp_prior: bool,
    pub tp_fallback: bool,
    pub rank: usize,
    pub clipped: usize,
    pub f_hat: Vec<f64>,
    pub f_bar: Vec<f64>,
    pub f_tilde: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<IntermediatesDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediatesDoc {
    pub a_hat: ComplexMatrixDoc,
    pub d_hat: ComplexMatrixDoc,
    pub g_hat: ComplexMatrixDoc,
    pub f_vectors: ComplexMatrixDoc,
}

impl EstimateDoc {
    pub fn new(est: &TssEstimate, with_intermediates: bool) -> Self {
        Self {
            kind: "estimate".into(),
            d: est.f_hat.len(),
            x_hat: ComplexMatrixDoc::from_matrix(&est.x_hat),
            tp_prior: est.tp_prior,
            tp_fallback: est.tp_fallback,
            rank: est.rank,
            clipped: est.clipped,
            f_hat: est.f_hat.clone(),
            f_bar: est.f_bar.clone(),
            f_tilde: est.f_tilde.clone(),
            intermediates: with_intermediates.then(|| IntermediatesDoc {
                a_hat: ComplexMatrixDoc::from_matrix(&est.a_hat),
                d_hat: ComplexMatrixDoc::from_matrix(&est.d_hat),
                g_hat: ComplexMatrixDoc::from_matrix(&est.g_hat),
                f_vectors: ComplexMatrixDoc::from_matrix(&est.f_vectors),
            }),
        }
    }

    pub fn x_hat(&self) -> Result<CMatrix> {
        check_kind(&self.kind, "estimate")?;
        self.x_hat.to_matrix()
    }
}

/// Types with a JSON document form.
pub trait JsonDocument: Sized {
    type Doc: Serialize + DeserializeOwned;

    fn to_doc(&self) -> Self::Doc;
    fn from_doc(doc: Self::Doc) -> Result<Self>;

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn matrices(docs: &[ComplexMatrixDoc]) -> Result<Vec<CMatrix>> {
    docs.iter().map(ComplexMatrixDoc::to_matrix).collect()
}

fn check_dim(found: usize, declared: usize) -> Result<()> {
    if found != declared {
        return Err(QptError::Format(format!(
            "declared d = {declared}, matrices have d = {found}"
        )));
    }
    Ok(())
}

impl JsonDocument for KrausChannel {
    type Doc = ChannelDoc;

    fn to_doc(&self) -> ChannelDoc {
        ChannelDoc {
            kind: "channel".into(),
            d: self.dim(),
            label: self.label().map(str::to_owned),
            kraus: self.kraus().iter().map(ComplexMatrixDoc::from_matrix).collect(),
        }
    }

    fn from_doc(doc: ChannelDoc) -> Result<Self> {
        check_kind(&doc.kind, "channel")?;
        let ch = KrausChannel::new(matrices(&doc.kraus)?)?;
        check_dim(ch.dim(), doc.d)?;
        Ok(match doc.label {
            Some(l) => ch.with_label(l),
            None => ch,
        })
    }
}

impl JsonDocument for InputEnsemble {
    type Doc = EnsembleDoc;

    fn to_doc(&self) -> EnsembleDoc {
        EnsembleDoc {
            kind: "ensemble".into(),
            d: self.dim(),
            label: self.label().to_owned(),
            states: self.states().iter().map(ComplexMatrixDoc::from_matrix).collect(),
        }
    }

    fn from_doc(doc: EnsembleDoc) -> Result<Self> {
        check_kind(&doc.kind, "ensemble")?;
        let e = InputEnsemble::new(matrices(&doc.states)?, doc.label)?;
        check_dim(e.dim(), doc.d)?;
        Ok(e)
    }
}

impl JsonDocument for PovmCollection {
    type Doc = PovmDoc;

    fn to_doc(&self) -> PovmDoc {
        PovmDoc {
            kind: "povm".into(),
            d: self.dim(),
            label: self.label().to_owned(),
            sets: self
                .sets()
                .iter()
                .map(|s| s.iter().map(ComplexMatrixDoc::from_matrix).collect())
                .collect(),
        }
    }

    fn from_doc(doc: PovmDoc) -> Result<Self> {
        check_kind(&doc.kind, "povm")?;
        let sets = doc.sets.iter().map(|s| matrices(s)).collect::<Result<Vec<_>>>()?;
        let p = PovmCollection::new(sets, doc.label)?;
        check_dim(p.dim(), doc.d)?;
        Ok(p)
    }
}

impl JsonDocument for MeasurementRecord {
    type Doc = RecordDoc;

    fn to_doc(&self) -> RecordDoc {
        RecordDoc {
            kind: "record".into(),
            set_sizes: self.set_sizes.clone(),
            copies: self.copies,
            shots_per_set: self.shots_per_set,
            seed: self.seed,
            freq: RealMatrixDoc::from_matrix(&self.freq),
            counts: self.counts.as_ref().map(RealMatrixDoc::from_matrix),
            no_click: self.no_click.as_ref().map(RealMatrixDoc::from_matrix),
            ideal: self.ideal.as_ref().map(RealMatrixDoc::from_matrix),
        }
    }

    fn from_doc(doc: RecordDoc) -> Result<Self> {
        check_kind(&doc.kind, "record")?;
        let freq = doc.freq.to_matrix()?;
        let mut rec =
            MeasurementRecord::from_frequencies(freq, doc.set_sizes, doc.copies)?;
        rec.shots_per_set = doc.shots_per_set;
        rec.seed = doc.seed;
        rec.counts = doc.counts.map(|m| m.to_matrix()).transpose()?;
        rec.no_click = doc.no_click.map(|m| m.to_matrix()).transpose()?;
        rec.ideal = doc.ideal.map(|m| m.to_matrix()).transpose()?;
        Ok(rec)
    }
}

/// Frequency matrix as comma-separated text with a `#` provenance header.
pub fn record_to_csv(rec: &MeasurementRecord) -> String {
    let mut s = String::new();
    let seed = rec.seed.map_or_else(|| "none".to_owned(), |v| v.to_string());
    let _ = writeln!(
        s,
        "# M={} L={} J={} N={} shots_per_set={} seed={seed}",
        rec.num_states(),
        rec.num_outcomes(),
        rec.num_sets(),
        rec.copies,
        rec.shots_per_set
    );
    let sizes: Vec<String> = rec.set_sizes.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(s, "# set_sizes={}", sizes.join(","));
    for m in 0..rec.num_states() {
        let row: Vec<String> = rec.freq.row(m).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Parse the output of [`record_to_csv`] (counts and ideal values are not kept).
pub fn record_from_csv(text: &str) -> Result<MeasurementRecord> {
    let mut copies = None;
    let mut shots = None;
    let mut seed = None;
    let mut sizes = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(h) = line.strip_prefix('#') {
            for kv in h.split_whitespace() {
                let Some((k, v)) = kv.split_once('=') else { continue };
                let bad = |_| QptError::Format(format!("bad header field {kv}"));
                match k {
                    "N" => copies = Some(v.parse::<u64>().map_err(bad)?),
                    "shots_per_set" => shots = Some(v.parse::<u64>().map_err(bad)?),
                    "seed" if v != "none" => seed = Some(v.parse::<u64>().map_err(bad)?),
                    "set_sizes" => {
                        sizes = Some(
                            v.split(',')
                                .map(|x| x.parse::<usize>().map_err(bad))
                                .collect::<Result<Vec<_>>>()?,
                        )
                    }
                    _ => {}
                }
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| QptError::Format(format!("bad number {x:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let sizes = sizes.ok_or_else(|| QptError::Format("missing set_sizes header".into()))?;
    let copies = copies.ok_or_else(|| QptError::Format("missing N header".into()))?;
    let cols = rows.first().map_or(0, Vec::len);
    check_rows(&rows, rows.len(), cols, "frequency table")?;
    let freq = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let mut rec = MeasurementRecord::from_frequencies(freq, sizes, copies)?;
    if let Some(s) = shots {
        rec.shots_per_set = s;
    }
    rec.seed = seed;
    Ok(rec)
}
