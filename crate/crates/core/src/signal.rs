//! Source, noise, and snapshot generation for the simulation model.
//!
//! Sources are non-Gaussian by construction: each sample is the product
//! `s_p(t) = f_p(t) e_p(t)` of an independent real standard Gaussian and an
//! independent circular complex Gaussian of variance `σ_s²`, giving a
//! fourth-order cumulant of `4σ_s⁴`. Noise is zero-mean Gaussian, spatially
//! colored by an autoregressive filter run across the sensor index, so its
//! fourth-order cumulants vanish while its spatial covariance is structured
//! and unknown to the estimators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{CMat, C64};

/// Samples discarded per snapshot before reading the AR recursion, so the
/// spatial process is stationary to well below test tolerances.
const AR_BURN_IN: usize = 50;

/// Stream tag mixed into the snapshot seed for the source substream.
pub const SOURCE_STREAM_TAG: u64 = 1;
/// Stream tag mixed into the snapshot seed for the noise substream.
pub const NOISE_STREAM_TAG: u64 = 2;

/// Source ensemble: distinct DOAs (degrees) and per-source power.
#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub thetas_deg: Vec<f64>,
    pub sigma_s2: f64,
}

impl SourceConfig {
    pub fn new(thetas_deg: Vec<f64>, sigma_s2: f64) -> Result<Self> {
        if thetas_deg.is_empty() {
            return Err(DoaError::InvalidArgument("at least one source required".into()));
        }
        for &t in &thetas_deg {
            if !t.is_finite() || t.abs() >= 90.0 {
                return Err(DoaError::InvalidArgument(format!(
                    "DOA must satisfy |theta| < 90 deg, got {t}"
                )));
            }
        }
        for i in 0..thetas_deg.len() {
            for k in i + 1..thetas_deg.len() {
                if thetas_deg[i] == thetas_deg[k] {
                    return Err(DoaError::InvalidArgument(format!(
                        "duplicate DOA {} deg",
                        thetas_deg[i]
                    )));
                }
            }
        }
        if !(sigma_s2 > 0.0) {
            return Err(DoaError::InvalidArgument("source power must be positive".into()));
        }
        Ok(Self { thetas_deg, sigma_s2 })
    }

    pub fn p_sources(&self) -> usize {
        self.thetas_deg.len()
    }
}

/// Noise model: AR coefficients `[1, a_1, …, a_q]` of the spatial coloring
/// filter and the average per-sensor power after rescaling.
#[derive(Debug, Clone)]
pub struct NoiseConfig {
    pub ar_coeffs: Vec<f64>,
    pub sigma_n2: f64,
}

impl NoiseConfig {
    pub fn new(ar_coeffs: Vec<f64>, sigma_n2: f64) -> Result<Self> {
        if ar_coeffs.is_empty() || ar_coeffs[0] != 1.0 {
            return Err(DoaError::InvalidArgument(
                "AR coefficients must start with 1".into(),
            ));
        }
        if !(sigma_n2 >= 0.0) {
            return Err(DoaError::InvalidArgument("noise power must be nonnegative".into()));
        }
        let cfg = Self { ar_coeffs, sigma_n2 };
        // Stationarity requires every AR pole strictly inside the unit circle.
        let poles = cfg.poles()?;
        if let Some(bad) = poles.iter().find(|p| p.norm() >= 1.0 - 1e-12) {
            return Err(DoaError::InvalidArgument(format!(
                "unstable AR filter: pole at |z| = {:.6}",
                bad.norm()
            )));
        }
        Ok(cfg)
    }

    /// Spatially white noise of the given power.
    pub fn white(sigma_n2: f64) -> Self {
        Self {
            ar_coeffs: vec![1.0],
            sigma_n2,
        }
    }

    fn order(&self) -> usize {
        self.ar_coeffs.len() - 1
    }

    /// Recursion weights `φ_i = -a_i` of `x_k = Σ φ_i x_{k-i} + w_k`.
    fn phi(&self) -> Vec<f64> {
        self.ar_coeffs[1..].iter().map(|a| -a).collect()
    }

    fn poles(&self) -> Result<Vec<C64>> {
        let q = self.order();
        if q == 0 {
            return Ok(Vec::new());
        }
        let phi = self.phi();
        let mut companion = DMatrix::<f64>::zeros(q, q);
        for (i, &p) in phi.iter().enumerate() {
            companion[(0, i)] = p;
        }
        for i in 1..q {
            companion[(i, i - 1)] = 1.0;
        }
        Ok(companion.complex_eigenvalues().iter().copied().collect())
    }

    /// Stationary variance of the AR process driven by unit-variance noise,
    /// from the Yule-Walker equations.
    pub fn stationary_variance(&self) -> Result<f64> {
        let q = self.order();
        if q == 0 {
            return Ok(1.0);
        }
        let phi = self.phi();
        // Unknowns gamma_0..gamma_q: gamma_k - sum_i phi_i gamma_{|k-i|} = delta_k0.
        let mut a = DMatrix::<f64>::zeros(q + 1, q + 1);
        let mut b = nalgebra::DVector::<f64>::zeros(q + 1);
        b[0] = 1.0;
        for k in 0..=q {
            a[(k, k)] += 1.0;
            for (i, &p) in phi.iter().enumerate() {
                let lag = (k as i64 - (i as i64 + 1)).unsigned_abs() as usize;
                a[(k, lag)] -= p;
            }
        }
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| DoaError::Numerical("Yule-Walker system is singular".into()))?;
        if sol[0] <= 0.0 {
            return Err(DoaError::Numerical("nonpositive stationary variance".into()));
        }
        Ok(sol[0])
    }
}

/// Complex snapshots `Y_Ω ∈ C^{M×J}` together with the geometry that
/// produced them.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub data: CMat,
    pub geom: ArrayGeometry,
}

impl SnapshotMatrix {
    pub fn j_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed from a base seed and a tag list.
/// Used to split one experiment seed into independent per-trial and
/// per-substream (source/noise) streams.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = base ^ 0xD6E8_FEB8_6659_FD93;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xA24B_AED4_963E_E407);
        out = splitmix64(&mut state);
    }
    out
}

fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Circular complex Gaussian with unit variance (`E|w|² = 1`).
fn complex_normal(rng: &mut ChaCha12Rng) -> C64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(standard_normal(rng) * scale, standard_normal(rng) * scale)
}

/// Draws `P×J` source samples `s_p(t) = f_p(t) e_p(t)`; sources are mutually
/// independent and i.i.d. across snapshots. Identical seeds give identical
/// output.
pub fn gen_sources(cfg: &SourceConfig, j: usize, seed: u64) -> Result<CMat> {
    if j == 0 {
        return Err(DoaError::InvalidArgument("snapshot count must be positive".into()));
    }
    let p = cfg.p_sources();
    let amp = cfg.sigma_s2.sqrt();
    let mut rng = rng_from(seed);
    let mut s = CMat::zeros(p, j);
    for t in 0..j {
        for src in 0..p {
            let f = standard_normal(&mut rng);
            let e = complex_normal(&mut rng) * amp;
            s[(src, t)] = e * f;
        }
    }
    Ok(s)
}

/// Draws `M×J` Gaussian noise snapshots: per snapshot, a length-`N` white
/// complex vector is colored by the AR recursion across the sensor index
/// (after a burn-in), rescaled so the average per-sensor power is
/// `σ_n²`, then restricted to the physical antennas.
pub fn gen_colored_noise(
    geom: &ArrayGeometry,
    cfg: &NoiseConfig,
    j: usize,
    seed: u64,
) -> Result<CMat> {
    if j == 0 {
        return Err(DoaError::InvalidArgument("snapshot count must be positive".into()));
    }
    let n = geom.n_aperture();
    let m = geom.m_elements();
    let scale = (cfg.sigma_n2 / cfg.stationary_variance()?).sqrt();
    let mut rng = rng_from(seed);
    let phi = cfg.phi();
    let total = AR_BURN_IN + n;
    let mut line = vec![C64::new(0.0, 0.0); total];
    let mut out = CMat::zeros(m, j);
    for t in 0..j {
        for k in 0..total {
            let mut v = complex_normal(&mut rng);
            for (i, &p) in phi.iter().enumerate() {
                if k > i {
                    v += line[k - i - 1] * p;
                }
            }
            line[k] = v;
        }
        for (row, &slot) in geom.omega().iter().enumerate() {
            out[(row, t)] = line[AR_BURN_IN + slot - 1] * scale;
        }
    }
    Ok(out)
}

/// Generates `Y_Ω = A_Ω S + N_Ω`. The seed is split into a source substream
/// ([`SOURCE_STREAM_TAG`]) and a noise substream ([`NOISE_STREAM_TAG`]), so
/// the same seed produces the same sources regardless of the noise settings,
/// and restricting a full-aperture realization through the selection matrix
/// reproduces the sparse-array realization exactly.
pub fn gen_snapshots(
    geom: &ArrayGeometry,
    src_cfg: &SourceConfig,
    noise_cfg: &NoiseConfig,
    j: usize,
    seed: u64,
) -> Result<SnapshotMatrix> {
    let a = geom.manifold(&src_cfg.thetas_deg)?;
    let s = gen_sources(src_cfg, j, derive_seed(seed, &[SOURCE_STREAM_TAG]))?;
    let noise = gen_colored_noise(geom, noise_cfg, j, derive_seed(seed, &[NOISE_STREAM_TAG]))?;
    Ok(SnapshotMatrix {
        data: a * s + noise,
        geom: geom.clone(),
    })
}
