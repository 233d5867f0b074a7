//! Linear array geometries on the half-wavelength grid.
//!
//! An array is described by its occupied slot set `Ω ⊆ {1, …, N}` with
//! `Ω₁ = 1` and `Ω_M = N`; the uniform linear array (ULA) is the special
//! case `Ω = {1, …, N}`. Inter-slot spacing is fixed at half a wavelength.
//! Angles are degrees from broadside at the public API and converted to
//! radians internally.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{DoaError, Result};
use crate::linalg::{CMat, CVec, C64};

/// Occupied slot indices of a uniform or sparse linear array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayGeometry {
    omega: Vec<usize>,
}

impl ArrayGeometry {
    /// Builds a geometry from 1-based slot indices (any order, no duplicates).
    /// The smallest index must be 1 so the physical and grid apertures agree.
    pub fn new(indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(DoaError::Geometry("index set is empty".into()));
        }
        let mut omega = indices.to_vec();
        omega.sort_unstable();
        if omega[0] == 0 {
            return Err(DoaError::Geometry("indices are 1-based; got 0".into()));
        }
        if omega.windows(2).any(|w| w[0] == w[1]) {
            return Err(DoaError::Geometry("duplicate antenna index".into()));
        }
        if omega[0] != 1 {
            return Err(DoaError::Geometry(format!(
                "first antenna must occupy slot 1, got {}",
                omega[0]
            )));
        }
        Ok(Self { omega })
    }

    /// The `N`-element uniform linear array `Ω = {1, …, N}`.
    pub fn ula(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DoaError::Geometry("aperture must be at least 1".into()));
        }
        Ok(Self {
            omega: (1..=n).collect(),
        })
    }

    /// Sorted 1-based slot indices.
    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    /// Grid aperture `N` (largest occupied slot).
    pub fn n_aperture(&self) -> usize {
        *self.omega.last().unwrap()
    }

    /// Number of physical antennas `M`.
    pub fn m_elements(&self) -> usize {
        self.omega.len()
    }

    pub fn is_ula(&self) -> bool {
        self.m_elements() == self.n_aperture()
    }

    /// Selection matrix `Γ_Ω ∈ {0,1}^{M×N}`: row `i` picks slot `Ω_i`, so
    /// `Γ_Ω A` restricts a full-aperture quantity to the physical antennas.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let (m, n) = (self.m_elements(), self.n_aperture());
        let mut gamma = DMatrix::zeros(m, n);
        for (i, &slot) in self.omega.iter().enumerate() {
            gamma[(i, slot - 1)] = 1.0;
        }
        gamma
    }

    /// Steering vector `a_Ω(θ)` with entries `exp(jπ(Ω_i − 1) sin θ)`.
    pub fn steering_vector(&self, theta_deg: f64) -> Result<CVec> {
        let s = sin_of_checked(theta_deg)?;
        Ok(CVec::from_iterator(
            self.m_elements(),
            self.omega
                .iter()
                .map(|&slot| C64::from_polar(1.0, PI * (slot as f64 - 1.0) * s)),
        ))
    }

    /// Array manifold `[a_Ω(θ_1), …, a_Ω(θ_P)]`, one column per source.
    pub fn manifold(&self, thetas_deg: &[f64]) -> Result<CMat> {
        let mut a = CMat::zeros(self.m_elements(), thetas_deg.len());
        for (p, &theta) in thetas_deg.iter().enumerate() {
            a.set_column(p, &self.steering_vector(theta)?);
        }
        Ok(a)
    }
}

impl fmt::Display for ArrayGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.omega.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for ArrayGeometry {
    type Err = DoaError;

    /// Parses the config-file form, a comma-separated index list such as
    /// `"1,2,5,7"`.
    fn from_str(s: &str) -> Result<Self> {
        let indices: Vec<usize> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| DoaError::Geometry(format!("bad antenna index {t:?}")))
            })
            .collect::<Result<_>>()?;
        Self::new(&indices)
    }
}

fn sin_of_checked(theta_deg: f64) -> Result<f64> {
    if !theta_deg.is_finite() || theta_deg.abs() >= 90.0 {
        return Err(DoaError::InvalidArgument(format!(
            "DOA must satisfy |theta| < 90 deg, got {theta_deg}"
        )));
    }
    Ok((theta_deg * PI / 180.0).sin())
}

/// Steering vector of a virtual centered uniform array with `len` (odd)
/// elements at integer positions `-(len-1)/2 … (len-1)/2`.
fn centered_steering(len: usize, theta_deg: f64) -> Result<CVec> {
    debug_assert!(len % 2 == 1);
    let s = sin_of_checked(theta_deg)?;
    let half = (len as i64 - 1) / 2;
    Ok(CVec::from_iterator(
        len,
        (-half..=half).map(|m| C64::from_polar(1.0, PI * m as f64 * s)),
    ))
}

/// Virtual steering vector `d(θ)` of length `4N−3` over the fourth-order
/// difference coarray of an aperture-`N` array: entry for virtual position
/// `m ∈ {−(2N−2), …, 2N−2}` is `exp(jπ m sin θ)`.
pub fn virtual_steering(n_aperture: usize, theta_deg: f64) -> Result<CVec> {
    if n_aperture == 0 {
        return Err(DoaError::InvalidArgument("aperture must be at least 1".into()));
    }
    centered_steering(4 * n_aperture - 3, theta_deg)
}

/// Steering vector `b(θ)` of length `2N−1` on the (second-stage) centered
/// virtual array, the manifold of the lag-averaged cumulant matrix.
pub fn rc_steering(n_aperture: usize, theta_deg: f64) -> Result<CVec> {
    if n_aperture == 0 {
        return Err(DoaError::InvalidArgument("aperture must be at least 1".into()));
    }
    centered_steering(2 * n_aperture - 1, theta_deg)
}
