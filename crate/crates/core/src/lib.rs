//! Quantum process tomography with closed-form least-squares reconstruction.
//!
//! The pipeline is: simulate or load a frequency matrix, invert each input's
//! measurement statistics, solve the structured least-squares problem for the
//! process matrix, then project onto PSD matrices with `Tr_1(X) ≤ I`.

pub mod channels;
pub mod detectors;
pub mod ensembles;
pub mod experiment;
pub mod io;
pub mod error;
pub mod metrics;
pub mod simulator;
pub mod tensorkit;
pub mod tss;

pub use channels::{KrausChannel, ProcessMatrix};
pub use detectors::{DesignReportC, PovmCollection};
pub use ensembles::{DesignReportV, InputEnsemble};
pub use error::{QptError, Result};
pub use metrics::ErrorReport;
pub use simulator::MeasurementRecord;
pub use tensorkit::{CMatrix, CVector, PermutationMap, C64};
pub use tss::{Reconstructor, TssEstimate};
