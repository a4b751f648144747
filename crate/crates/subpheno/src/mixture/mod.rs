//! Parameterized Gaussian finite mixture models.
//!
//! Each component covariance is factored as
//! `Sigma_k = lambda_k * D_k * diag(A_k) * D_k^T` — a positive volume
//! scalar, a positive diagonal shape with unit determinant, and an
//! orthonormal orientation. The ten parameterizations constrain which
//! factors vary across components:
//!
//! | id  | distribution | volume   | shape    | orientation     |
//! |-----|--------------|----------|----------|-----------------|
//! | EII | spherical    | equal    | equal    | —               |
//! | VII | spherical    | variable | equal    | —               |
//! | EEI | diagonal     | equal    | equal    | coordinate axes |
//! | VEI | diagonal     | variable | equal    | coordinate axes |
//! | EVI | diagonal     | equal    | variable | coordinate axes |
//! | VVI | diagonal     | variable | variable | coordinate axes |
//! | EEE | ellipsoidal  | equal    | equal    | equal           |
//! | EEV | ellipsoidal  | equal    | equal    | variable        |
//! | VEV | ellipsoidal  | variable | equal    | variable        |
//! | VVV | ellipsoidal  | variable | variable | variable        |
//!
//! Fitting is EM with k-means++ seeding ([`em_fit`]); model selection
//! maximizes `BIC = 2*loglik - n_params*ln(n)` over a grid of component
//! counts and parameterizations ([`model_search`]).

mod em;
mod search;

pub use em::{e_step, m_step, CovarianceFactors, EmOptions, InitStrategy, MStepResult};
pub use search::{
    adjusted_rand_index, assign, model_search, ModelSelectionTable, SearchOptions, SelectionEntry,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariance constraint scheme identifier.
#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovarianceParameterization {
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
    EEE,
    EEV,
    VEV,
    VVV,
}

/// Component-density geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Spherical,
    Diagonal,
    Ellipsoidal,
}

/// Whether a factor is shared across components or free per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variability {
    Equal,
    Variable,
}

/// Orientation constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrientationKind {
    /// Spherical models have no orientation.
    None,
    /// Diagonal models are aligned with the coordinate axes.
    CoordinateAxes,
    /// One orthonormal basis shared by all components.
    Equal,
    /// A free orthonormal basis per component.
    Variable,
}

/// Decoded structure of a parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureFlags {
    pub distribution: Distribution,
    pub volume: Variability,
    pub shape: Variability,
    pub orientation: OrientationKind,
}

impl CovarianceParameterization {
    pub const ALL: [CovarianceParameterization; 10] = [
        CovarianceParameterization::EII,
        CovarianceParameterization::VII,
        CovarianceParameterization::EEI,
        CovarianceParameterization::VEI,
        CovarianceParameterization::EVI,
        CovarianceParameterization::VVI,
        CovarianceParameterization::EEE,
        CovarianceParameterization::EEV,
        CovarianceParameterization::VEV,
        CovarianceParameterization::VVV,
    ];

    /// Position in the canonical ordering above; used for deterministic
    /// tie-breaking and seed derivation.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|p| *p == self).unwrap()
    }

    pub fn decode(self) -> StructureFlags {
        use CovarianceParameterization::*;
        use Distribution::*;
        use OrientationKind as O;
        use Variability::*;
        let (distribution, volume, shape, orientation) = match self {
            EII => (Spherical, Equal, Equal, O::None),
            VII => (Spherical, Variable, Equal, O::None),
            EEI => (Diagonal, Equal, Equal, O::CoordinateAxes),
            VEI => (Diagonal, Variable, Equal, O::CoordinateAxes),
            EVI => (Diagonal, Equal, Variable, O::CoordinateAxes),
            VVI => (Diagonal, Variable, Variable, O::CoordinateAxes),
            EEE => (Ellipsoidal, Equal, Equal, O::Equal),
            EEV => (Ellipsoidal, Equal, Equal, O::Variable),
            VEV => (Ellipsoidal, Variable, Equal, O::Variable),
            VVV => (Ellipsoidal, Variable, Variable, O::Variable),
        };
        StructureFlags {
            distribution,
            volume,
            shape,
            orientation,
        }
    }

    /// Free parameters of the full model: `K-1` mixing weights, `K*d`
    /// means, plus the covariance parameters this scheme leaves free.
    pub fn n_free_params(self, k: usize, d: usize) -> usize {
        use CovarianceParameterization::*;
        let shape = d - 1; // positive diagonal with unit determinant
        let orient = d * (d - 1) / 2; // orthonormal basis
        let cov = match self {
            EII => 1,
            VII => k,
            EEI => 1 + shape,
            VEI => k + shape,
            EVI => 1 + k * shape,
            VVI => k + k * shape,
            EEE => 1 + shape + orient,
            EEV => 1 + shape + k * orient,
            VEV => k + shape + k * orient,
            VVV => k + k * shape + k * orient,
        };
        (k - 1) + k * d + cov
    }
}

impl fmt::Display for CovarianceParameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for CovarianceParameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|p| format!("{p:?}").eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown parameterization `{s}`")))
    }
}

/// `BIC = 2*loglik - n_params*ln(n)`; larger is better.
pub fn bic(loglik: f64, n_params: usize, n: usize) -> f64 {
    2.0 * loglik - (n_params as f64) * (n as f64).ln()
}

/// Posterior component probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(pub Array2<f64>);

impl Responsibilities {
    pub fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.0.ncols()
    }

    /// One-hot responsibilities from hard labels (0-based).
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut gamma = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            gamma[(i, l)] = 1.0;
        }
        Responsibilities(gamma)
    }
}

/// A fitted mixture model.
///
/// Factors are stored per component even when a parameterization shares
/// them, so consumers can reconstruct any `Sigma_k` without consulting the
/// constraint scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureModel {
    pub parameterization: CovarianceParameterization,
    /// Mixing weights, summing to one.
    pub weights: Vec<f64>,
    /// K x d component means.
    pub means: Array2<f64>,
    /// Volume scalars `lambda_k`.
    pub volumes: Vec<f64>,
    /// Shape diagonals `A_k`, each with unit determinant.
    pub shapes: Vec<Array1<f64>>,
    /// Orthonormal orientation bases `D_k` (columns are axes).
    pub orientations: Vec<Array2<f64>>,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Observed-data log-likelihood after each EM iteration of the final
    /// (post-reseed) run segment.
    pub loglik_trace: Vec<f64>,
}

pub const MODEL_FORMAT: &str = "subpheno-mixture-v1";

#[derive(Serialize)]
struct VersionedModelRef<'a> {
    format: &'a str,
    model: &'a MixtureModel,
}

#[derive(Deserialize)]
struct VersionedModel {
    format: String,
    model: MixtureModel,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Reconstruct `Sigma_k = lambda_k * D_k * diag(A_k) * D_k^T`.
    pub fn covariance(&self, k: usize) -> Array2<f64> {
        let d = self.dim();
        let dk = &self.orientations[k];
        let mut scaled = Array2::zeros((d, d));
        for j in 0..d {
            let s = self.volumes[k] * self.shapes[k][j];
            for i in 0..d {
                scaled[(i, j)] = dk[(i, j)] * s;
            }
        }
        scaled.dot(&dk.t())
    }

    /// Swap component order; densities, log-likelihood and BIC are
    /// unaffected, labels permute accordingly.
    pub fn permuted(&self, perm: &[usize]) -> Result<MixtureModel> {
        if perm.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: perm.len(),
            });
        }
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.k()).collect::<Vec<_>>() {
            return Err(Error::Data("not a permutation".into()));
        }
        let mut out = self.clone();
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            out.weights[new_idx] = self.weights[old_idx];
            out.volumes[new_idx] = self.volumes[old_idx];
            out.shapes[new_idx] = self.shapes[old_idx].clone();
            out.orientations[new_idx] = self.orientations[old_idx].clone();
            out.means
                .row_mut(new_idx)
                .assign(&self.means.row(old_idx));
        }
        Ok(out)
    }

    /// Verify the parameterization's equality constraints, the unit-
    /// determinant shape normalization, and the weight simplex, all within
    /// `rtol` relative tolerance.
    pub fn check_constraints(&self, rtol: f64) -> Result<()> {
        let flags = self.parameterization.decode();
        let k = self.k();
        let d = self.dim();
        let close = |a: f64, b: f64| (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1e-300);

        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("weights sum to {wsum}")));
        }
        if self.weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Data("nonpositive mixing weight".into()));
        }
        for kk in 0..k {
            if self.volumes[kk] <= 0.0 || !self.volumes[kk].is_finite() {
                return Err(Error::NotPositiveDefinite(kk));
            }
            if self.shapes[kk].iter().any(|a| *a <= 0.0 || !a.is_finite()) {
                return Err(Error::NotPositiveDefinite(kk));
            }
            let logdet: f64 = self.shapes[kk].iter().map(|a| a.ln()).sum();
            if logdet.abs() > rtol * d as f64 + 1e-8 {
                return Err(Error::Data(format!(
                    "shape determinant off unity for component {kk}: exp({logdet})"
                )));
            }
            // Orthonormality of the orientation basis.
            let dk = &self.orientations[kk];
            let gram = dk.t().dot(dk);
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (gram[(i, j)] - expect).abs() > 1e-6 {
                        return Err(Error::Data(format!(
                            "orientation basis not orthonormal for component {kk}"
                        )));
                    }
                }
            }
        }
        if flags.volume == Variability::Equal {
            for kk in 1..k {
                if !close(self.volumes[kk], self.volumes[0]) {
                    return Err(Error::Data(format!(
                        "volumes differ under {}: {} vs {}",
                        self.parameterization, self.volumes[0], self.volumes[kk]
                    )));
                }
            }
        }
        if flags.shape == Variability::Equal {
            for kk in 1..k {
                for j in 0..d {
                    if !close(self.shapes[kk][j], self.shapes[0][j]) {
                        return Err(Error::Data(format!(
                            "shapes differ under {}",
                            self.parameterization
                        )));
                    }
                }
            }
        }
        match flags.orientation {
            OrientationKind::None | OrientationKind::CoordinateAxes => {
                for kk in 0..k {
                    for i in 0..d {
                        for j in 0..d {
                            let expect = if i == j { 1.0 } else { 0.0 };
                            if (self.orientations[kk][(i, j)] - expect).abs() > 1e-12 {
                                return Err(Error::Data(format!(
                                    "axis-aligned model has rotated component {kk}"
                                )));
                            }
                        }
                    }
                }
            }
            OrientationKind::Equal => {
                for kk in 1..k {
                    for i in 0..d {
                        for j in 0..d {
                            if (self.orientations[kk][(i, j)] - self.orientations[0][(i, j)]).abs()
                                > 1e-8
                            {
                                return Err(Error::Data(format!(
                                    "orientations differ under {}",
                                    self.parameterization
                                )));
                            }
                        }
                    }
                }
            }
            OrientationKind::Variable => {}
        }
        Ok(())
    }

    /// Versioned JSON encoding; floats survive a round-trip bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&VersionedModelRef {
            format: MODEL_FORMAT,
            model: self,
        })
        .map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<MixtureModel> {
        let v: VersionedModel =
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if v.format != MODEL_FORMAT {
            return Err(Error::Serde(format!(
                "unsupported model format `{}` (expected {MODEL_FORMAT})",
                v.format
            )));
        }
        Ok(v.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_table_matches_row_for_row() {
        use CovarianceParameterization::*;
        use Distribution::*;
        use OrientationKind as O;
        use Variability::*;
        let expected = [
            (EII, Spherical, Equal, Equal, O::None),
            (VII, Spherical, Variable, Equal, O::None),
            (EEI, Diagonal, Equal, Equal, O::CoordinateAxes),
            (VEI, Diagonal, Variable, Equal, O::CoordinateAxes),
            (EVI, Diagonal, Equal, Variable, O::CoordinateAxes),
            (VVI, Diagonal, Variable, Variable, O::CoordinateAxes),
            (EEE, Ellipsoidal, Equal, Equal, O::Equal),
            (EEV, Ellipsoidal, Equal, Equal, O::Variable),
            (VEV, Ellipsoidal, Variable, Equal, O::Variable),
            (VVV, Ellipsoidal, Variable, Variable, O::Variable),
        ];
        assert_eq!(CovarianceParameterization::ALL.len(), expected.len());
        for (i, (p, dist, vol, shape, orient)) in expected.into_iter().enumerate() {
            assert_eq!(CovarianceParameterization::ALL[i], p);
            let f = p.decode();
            assert_eq!(f.distribution, dist, "{p}");
            assert_eq!(f.volume, vol, "{p}");
            assert_eq!(f.shape, shape, "{p}");
            assert_eq!(f.orientation, orient, "{p}");
        }
    }

    #[test]
    fn param_counts_forced_cases() {
        use CovarianceParameterization::*;
        // 2 weights + 6 means + 3 * d(d+1)/2 covariances.
        assert_eq!(VVV.n_free_params(3, 2), 2 + 6 + 9);
        assert_eq!(EII.n_free_params(3, 2), 2 + 6 + 1);
        // A single univariate Gaussian: mean + variance.
        for p in CovarianceParameterization::ALL {
            assert_eq!(p.n_free_params(1, 1), 2, "{p}");
        }
    }

    /// Independent count from the decoded structure flags rather than the
    /// per-scheme formulas.
    fn count_oracle(p: CovarianceParameterization, k: usize, d: usize) -> usize {
        let f = p.decode();
        let volume = match f.volume {
            Variability::Equal => 1,
            Variability::Variable => k,
        };
        let shape = match (f.distribution, f.shape) {
            (Distribution::Spherical, _) => 0,
            (_, Variability::Equal) => d - 1,
            (_, Variability::Variable) => k * (d - 1),
        };
        let orientation = match f.orientation {
            OrientationKind::None | OrientationKind::CoordinateAxes => 0,
            OrientationKind::Equal => d * (d - 1) / 2,
            OrientationKind::Variable => k * d * (d - 1) / 2,
        };
        (k - 1) + k * d + volume + shape + orientation
    }

    #[test]
    fn param_counts_match_structural_oracle() {
        for p in CovarianceParameterization::ALL {
            for k in 1..=5 {
                for d in 1..=10 {
                    assert_eq!(
                        p.n_free_params(k, d),
                        count_oracle(p, k, d),
                        "{p} k={k} d={d}"
                    );
                }
            }
        }
    }

    #[test]
    fn param_counts_increase_along_nesting_chain() {
        use CovarianceParameterization::*;
        for k in 2..=5 {
            for d in 2..=8 {
                let chain = [EII, VII, VVI, VVV].map(|p| p.n_free_params(k, d));
                assert!(chain.windows(2).all(|w| w[0] < w[1]), "k={k} d={d}");
            }
        }
    }

    #[test]
    fn bic_forced_arithmetic() {
        assert_eq!(bic(0.0, 0, 1), 0.0);
        // 2*loglik - n_params*ln(n); at n = e^2 this gives
        // 2*(-100) - 10*2 = -220, and integral n follows the same formula.
        for n in [1usize, 2, 7, 100] {
            assert_eq!(bic(-100.0, 10, n), -200.0 - 10.0 * (n as f64).ln());
        }
    }

    #[test]
    fn parameterization_parses_from_text() {
        assert_eq!(
            "vev".parse::<CovarianceParameterization>().unwrap(),
            CovarianceParameterization::VEV
        );
        assert!("XYZ".parse::<CovarianceParameterization>().is_err());
    }
}
