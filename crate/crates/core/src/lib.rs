//! Output-feedback stabilization of port-Hamiltonian descriptor systems.
//!
//! Every decision procedure and synthesis routine works from the
//! coefficient quadruple `(E, A, B, C)` only. The structure matrix `Q` of
//! the port-Hamiltonian factorization appears solely in [`model`] (to
//! synthesize test systems) and in the oracle checks of [`verify`].
//!
//! ```
//! use phstab::analysis::order_range_pd_stabilizing;
//! use phstab::model::random_ph_system;
//! use phstab::synthesis::synthesize_pd;
//! use phstab::verify::verify_design;
//! use phstab::{DesignPolicy, GeneratorRecipe, ToleranceProfile};
//!
//! let tol = ToleranceProfile::default();
//! let g = random_ph_system(&GeneratorRecipe::new(5, 2, 7).dims([1, 1, 1, 1, 1]))?;
//! let sys = g.realize(&tol)?;
//! let range = order_range_pd_stabilizing(&sys, &tol)?;
//! let design = synthesize_pd(&sys, range.r_max, &tol, &DesignPolicy::default())?;
//! assert!(verify_design(&sys, &design, Some(&g), &tol)?.all_true());
//! # Ok::<(), phstab::Error>(())
//! ```

pub mod analysis;
pub mod condensed;
pub mod error;
pub mod io;
pub mod model;
pub mod numeric;
pub mod synthesis;
pub mod verify;

pub use analysis::{ConditionVerdict, OrderRange};
pub use condensed::{BlockDims, EliminatedCondensedForm, UnitaryCondensedForm};
pub use error::{Error, Result};
pub use model::{DescriptorSystem, GeneratorRecipe, PhGenerator};
pub use numeric::{ComplexMatrix, ToleranceProfile, C64};
pub use synthesis::{DesignPolicy, FeedbackDesign, KPolicy, PsdFactoryPolicy};
pub use verify::{AnalysisReport, StructureStatus};
