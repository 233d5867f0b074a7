//! DOA retrieval from the recovered Toeplitz matrix (rotational
//! invariance) and the grid-search baseline on the coarray matrix.

use crate::cumulants::RcFocMatrix;
use crate::error::{DoaError, Result};
use crate::geometry::rc_steering;
use crate::linalg::{complex_eigenvalues, hermitian_eig, CMat};

/// Sorted DOA estimates in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimates {
    pub thetas_deg: Vec<f64>,
    /// Set when an eigenvalue phase had to be clamped onto the visible
    /// region (numerically |sin θ| marginally above 1).
    pub clamped: bool,
}

impl DoaEstimates {
    fn from_unsorted(mut thetas: Vec<f64>, clamped: bool) -> Self {
        thetas.sort_by(f64::total_cmp);
        Self {
            thetas_deg: thetas,
            clamped,
        }
    }

    pub fn len(&self) -> usize {
        self.thetas_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas_deg.is_empty()
    }
}

/// Number of dominant eigenvalues of a Hermitian PSD matrix: eigenvalues at
/// least `threshold_rel` times the largest one, capped at `dim − 1` (the
/// identifiable source count for a `(4N−3)`-dimensional Toeplitz matrix is
/// `4N−4`). An all-zero matrix has order 0.
pub fn model_order(t: &CMat, threshold_rel: f64) -> usize {
    let (vals, _) = hermitian_eig(t);
    let max = vals[0];
    if max <= 0.0 {
        return 0;
    }
    let count = vals.iter().filter(|&&v| v >= threshold_rel * max).count();
    count.min(vals.len() - 1)
}

/// Rotational-invariance retrieval: the `p` principal eigenvectors of the
/// (virtual uniform array) Toeplitz matrix span the signal subspace; the
/// maximally overlapping subarrays (drop-last vs drop-first row) differ by
/// a rotation whose eigenvalue phases are `π sin θ_p`.
pub fn esprit(t: &CMat, p: usize) -> Result<DoaEstimates> {
    let dim = t.nrows();
    if p == 0 {
        return Err(DoaError::InvalidArgument("need at least one source".into()));
    }
    if p + 1 > dim {
        return Err(DoaError::InvalidArgument(format!(
            "{p} sources need a virtual aperture of at least {} (got {dim})",
            p + 1
        )));
    }
    let (_, vecs) = hermitian_eig(t);
    let signal = vecs.columns(0, p).clone_owned();
    let e1 = signal.rows(0, dim - 1).clone_owned();
    let e2 = signal.rows(1, dim - 1).clone_owned();
    // Least-squares rotation psi = E1^+ E2.
    let gram = e1.adjoint() * &e1;
    let rhs = e1.adjoint() * &e2;
    let psi = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DoaError::Numerical("signal subspace is rank deficient".into()))?;
    let eigs = complex_eigenvalues(&psi)?;
    let mut clamped = false;
    let thetas = eigs
        .iter()
        .map(|lambda| {
            let mut s = lambda.arg() / std::f64::consts::PI;
            if s.abs() > 1.0 {
                clamped = true;
                s = s.clamp(-1.0, 1.0);
            }
            s.asin().to_degrees()
        })
        .collect();
    Ok(DoaEstimates::from_unsorted(thetas, clamped))
}

/// Pseudo-spectrum of the subspace grid search.
#[derive(Debug, Clone)]
pub struct MusicSpectrum {
    pub grid_deg: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MusicResult {
    pub estimates: DoaEstimates,
    pub spectrum: MusicSpectrum,
    /// True when fewer than `p` local maxima exist on the grid.
    pub shortfall: bool,
}

/// Subspace grid search on the coarray matrix: evaluates
/// `1 / ‖E_n^H b(θ)‖²` over a uniform grid in `(−90°, 90°)` and returns the
/// `p` largest local maxima, sorted by angle.
pub fn foc_music(r4: &RcFocMatrix, p: usize, grid_step_deg: f64) -> Result<MusicResult> {
    if !(grid_step_deg > 0.0) {
        return Err(DoaError::InvalidArgument("grid step must be positive".into()));
    }
    let dim = r4.data.nrows();
    if p >= dim {
        return Err(DoaError::InvalidArgument(format!(
            "noise subspace is empty for {p} sources in dimension {dim}"
        )));
    }
    let (_, vecs) = hermitian_eig(&r4.data);
    let noise = vecs.columns(p, dim - p).clone_owned();
    let mut grid = Vec::new();
    let mut theta = -90.0 + grid_step_deg;
    while theta < 90.0 - 1e-12 {
        grid.push(theta);
        theta += grid_step_deg;
    }
    let power: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let b = rc_steering(r4.n_aperture, t).expect("grid angle is interior");
            let proj = noise.adjoint() * b;
            1.0 / proj.norm_squared().max(1e-300)
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 1..grid.len().saturating_sub(1) {
        if power[i] > power[i - 1] && power[i] > power[i + 1] {
            peaks.push((power[i], grid[i]));
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let shortfall = peaks.len() < p;
    let thetas: Vec<f64> = peaks.iter().take(p).map(|&(_, t)| t).collect();
    Ok(MusicResult {
        estimates: DoaEstimates::from_unsorted(thetas, false),
        spectrum: MusicSpectrum {
            grid_deg: grid,
            power,
        },
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{population_c4, rc_foc, reduction_operators};
    use crate::geometry::{virtual_steering, ArrayGeometry};
    use crate::linalg::C64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toeplitz_of_atoms(n_aperture: usize, thetas: &[f64], gammas: &[f64]) -> CMat {
        let dim = 4 * n_aperture - 3;
        let mut t = CMat::zeros(dim, dim);
        for (&theta, &gamma) in thetas.iter().zip(gammas) {
            let d = virtual_steering(n_aperture, theta).unwrap();
            t.gerc(C64::new(gamma, 0.0), &d, &d, C64::new(1.0, 0.0));
        }
        t
    }

    #[test]
    fn model_order_counts_dominant_eigenvalues() {
        let t = toeplitz_of_atoms(4, &[-23.0, 17.0], &[1.0, 0.5]);
        assert_eq!(model_order(&t, 1e-3), 2);
        assert_eq!(model_order(&CMat::identity(13, 13), 1e-3), 12);
        assert_eq!(model_order(&CMat::zeros(13, 13), 1e-3), 0);
    }

    #[test]
    fn esprit_recovers_two_atoms_exactly() {
        let t = toeplitz_of_atoms(4, &[-23.0, 17.0], &[4.0, 4.0]);
        let est = esprit(&t, 2).unwrap();
        assert!(!est.clamped);
        assert!((est.thetas_deg[0] + 23.0).abs() < 1e-8);
        assert!((est.thetas_deg[1] - 17.0).abs() < 1e-8);
    }

    #[test]
    fn esprit_single_broadside_atom() {
        let t = toeplitz_of_atoms(4, &[0.0], &[1.0]);
        let est = esprit(&t, 1).unwrap();
        assert!(est.thetas_deg[0].abs() < 1e-8);
    }

    #[test]
    fn esprit_output_is_sorted_and_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let p = rng.random_range(1..=12usize);
            let mut thetas: Vec<f64> = Vec::new();
            while thetas.len() < p {
                let cand = rng.random::<f64>() * 160.0 - 80.0;
                if thetas.iter().all(|&t| {
                    let ds = (cand.to_radians().sin() - t.to_radians().sin()).abs();
                    ds > 0.08
                }) {
                    thetas.push(cand);
                }
            }
            let gammas: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 0.5).collect();
            let t = toeplitz_of_atoms(4, &thetas, &gammas);
            let est = esprit(&t, p).unwrap();
            let est_scaled = esprit(&t.scale(37.5), p).unwrap();
            thetas.sort_by(f64::total_cmp);
            for i in 0..p {
                assert!(
                    (est.thetas_deg[i] - thetas[i]).abs() < 1e-6,
                    "atom {i}: {} vs {}",
                    est.thetas_deg[i],
                    thetas[i]
                );
                assert!((est.thetas_deg[i] - est_scaled.thetas_deg[i]).abs() < 1e-9);
            }
            if p >= 2 {
                assert!(est.thetas_deg.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn esprit_rejects_excess_sources() {
        let t = toeplitz_of_atoms(2, &[0.0], &[1.0]);
        assert!(esprit(&t, 0).is_err());
        assert!(esprit(&t, 5).is_err());
        assert!(esprit(&t, 4).is_ok());
    }

    #[test]
    fn music_finds_population_peaks() {
        let geom = ArrayGeometry::ula(4).unwrap();
        let ops = reduction_operators(4, None).unwrap();
        let thetas = [-23.0, 17.0];
        let c4 = population_c4(&geom.manifold(&thetas).unwrap(), &[4.0, 4.0]).unwrap();
        let r4 = rc_foc(&c4, &ops).unwrap();
        let result = foc_music(&r4, 2, 0.01).unwrap();
        assert!(!result.shortfall);
        assert!((result.estimates.thetas_deg[0] + 23.0).abs() <= 0.011);
        assert!((result.estimates.thetas_deg[1] - 17.0).abs() <= 0.011);
    }

    #[test]
    fn music_spectrum_poles_on_grid_hits() {
        // Put the true angle exactly on the grid: orthogonality makes the
        // pseudo-spectrum blow up there.
        let geom = ArrayGeometry::ula(4).unwrap();
        let ops = reduction_operators(4, None).unwrap();
        let theta = 17.0;
        let c4 = population_c4(&geom.manifold(&[theta]).unwrap(), &[1.0]).unwrap();
        let r4 = rc_foc(&c4, &ops).unwrap();
        let result = foc_music(&r4, 1, 1.0).unwrap();
        let idx = result
            .spectrum
            .grid_deg
            .iter()
            .position(|&g| (g - theta).abs() < 1e-9)
            .expect("grid hits 17 deg");
        assert!(result.spectrum.power[idx] > 1e10);
    }

    #[test]
    fn music_with_zero_sources_returns_spectrum_only() {
        let geom = ArrayGeometry::ula(3).unwrap();
        let ops = reduction_operators(3, None).unwrap();
        let c4 = population_c4(&geom.manifold(&[5.0]).unwrap(), &[1.0]).unwrap();
        let r4 = rc_foc(&c4, &ops).unwrap();
        let result = foc_music(&r4, 0, 0.5).unwrap();
        assert!(result.estimates.is_empty());
        assert!(!result.shortfall);
        assert_eq!(result.spectrum.grid_deg.len(), result.spectrum.power.len());
        assert!(!result.spectrum.grid_deg.is_empty());
    }

    #[test]
    fn music_flags_peak_shortfall() {
        // A single atom cannot produce two separated local maxima on a
        // coarse grid.
        let geom = ArrayGeometry::ula(2).unwrap();
        let ops = reduction_operators(2, None).unwrap();
        let c4 = population_c4(&geom.manifold(&[0.0]).unwrap(), &[1.0]).unwrap();
        let r4 = rc_foc(&c4, &ops).unwrap();
        let result = foc_music(&r4, 2, 10.0).unwrap();
        assert!(result.shortfall);
        assert!(result.estimates.len() < 2);
        // And an oversized subspace request is rejected outright.
        assert!(foc_music(&r4, 3, 10.0).is_err());
    }

    #[test]
    fn estimates_come_out_sorted() {
        let est = DoaEstimates::from_unsorted(vec![30.0, -10.0, 5.0], false);
        assert_eq!(est.thetas_deg, vec![-10.0, 5.0, 30.0]);
    }
}
