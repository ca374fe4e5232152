//! Spectral analysis of a Sturm–Liouville operator on a two-segment graph with
//! a weighted junction: perturbation determinants, transformation-operator
//! kernels, root localization certificates and independent numerical oracles.

pub mod bounds;
pub mod determinant;
pub mod error;
pub mod exec;
pub mod localize;
pub mod oracle;
pub mod problem;
pub(crate) mod quadrature;
pub mod transform;
pub mod unperturbed;

pub use bounds::{rouche_count, smallness_condition, ConstantSet, ContourCount, ContourOptions, SmallnessReport};
pub use determinant::{DeterminantEval, Evaluator, Method};
pub use error::{Error, Result};
pub use exec::Execution;
pub use localize::{localize, LocalizationReport, LocalizeOptions, LocalizedRoot};
pub use oracle::{compare_spectra, fd_eigenvalues, DeviationTable};
pub use problem::{derive_shape, potential_norms, DerivedShape, PotentialNorms, PotentialProfile, Segment, SegmentGraphProblem};
pub use transform::{boundary_integrals, build_kernel_series, KernelSeries, KernelSettings};
pub use unperturbed::{eval_delta0, eval_secular_f, simplicity_margin, unperturbed_spectrum, SpectrumEntry, SpectrumTable};
