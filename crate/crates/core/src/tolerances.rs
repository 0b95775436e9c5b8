use serde::{Deserialize, Serialize};

/// Numerical thresholds shared across the pipeline. Relative values are
/// scaled by the quantity named in each field's comment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute per-entry Hermiticity defect.
    pub hermiticity: f64,
    /// Degeneracy threshold, times `max(1, spectral diameter)`.
    pub degeneracy: f64,
    /// Gap-distinctness margin, times the spectral diameter.
    pub resonance: f64,
    /// Coupling-graph edge threshold, times `max_l ||H_l||`.
    pub edge: f64,
    /// Rank tolerance for Lie closure growth, relative to the bracket norm.
    pub lie_rank: f64,
    /// Brackets below this times `||A|| ||B||` count as zero.
    pub lie_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            degeneracy: 1e-8,
            resonance: 1e-6,
            edge: 1e-9,
            lie_rank: 1e-9,
            lie_zero: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn degeneracy_threshold(&self, spectral_diameter: f64) -> f64 {
        self.degeneracy * spectral_diameter.max(1.0)
    }

    pub fn resonance_threshold(&self, spectral_diameter: f64) -> f64 {
        self.resonance * spectral_diameter
    }
}
