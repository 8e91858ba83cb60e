use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds shared by every rank, residual and sign decision.
///
/// One profile is threaded through a whole analysis so that cascaded rank
/// cuts (condensed form, predicates, synthesis) never disagree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceProfile {
    /// Singular values `<= rank_rel * max(rows, cols) * sigma_max` count as zero.
    pub rank_rel: f64,
    /// Eigenvalue floor for semidefiniteness, scaled by `1 + ||M||`.
    pub psd_abs: f64,
    /// Relative bound on zero-pattern, Hermitian and unitarity residuals.
    pub residual_rel: f64,
    /// Real parts in `(-stability_margin, stability_margin)` count as on the imaginary axis.
    pub stability_margin: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            rank_rel: 1e-10,
            psd_abs: 1e-9,
            residual_rel: 1e-9,
            stability_margin: 1e-8,
        }
    }
}

impl ToleranceProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_rel", self.rank_rel),
            ("psd_abs", self.psd_abs),
            ("residual_rel", self.residual_rel),
            ("stability_margin", self.stability_margin),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::ContractViolation(format!(
                    "tolerance {name} = {v} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn with_rank_rel(mut self, rank_rel: f64) -> Self {
        self.rank_rel = rank_rel;
        self
    }
}
