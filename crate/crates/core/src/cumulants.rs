//! Fourth-order cumulant matrices and their reduction to the
//! non-redundant single measurement vector (SMV).
//!
//! For snapshots `y` the cumulant matrix collects
//! `cum(y_a, y_b*, y_c*, y_d)` over all index pairs; for uncorrelated
//! sources it factors through the Khatri-Rao manifold, and for
//! (arbitrarily colored) Gaussian noise it vanishes. Because the entry
//! for pair `(a, b)` depends on the slots only through the difference
//! `a − b`, averaging entries that share a lag compresses the
//! `M²×M²` matrix to a `(2N−1)×(2N−1)` matrix `R4` on the difference
//! coarray, and vectorizing plus a second lag-averaging pass yields the
//! length-`4N−3` vector `z = Σ_p γ_p d(θ_p)` on the fourth-order virtual
//! array.
//!
//! The 0/1 averaging operators are kept as lag→position index maps; dense
//! copies are only materialized for test oracles.

use crate::error::{DoaError, Result};
use crate::geometry::{virtual_steering, ArrayGeometry};
use crate::linalg::{hermitian_part, kron_vec, CMat, CVec, C64};
use crate::signal::SnapshotMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulantKind {
    Population,
    Sample { j_snapshots: usize },
}

/// Hermitian fourth-order cumulant matrix (`N²×N²` on a ULA, `M²×M²` on an
/// SLA) indexed by antenna pairs: row `a·M + b` stands for `y_a y_b*`.
#[derive(Debug, Clone)]
pub struct CumulantMatrix {
    pub data: CMat,
    pub kind: CumulantKind,
}

impl CumulantMatrix {
    /// Number of physical antennas behind the pair indexing.
    pub fn side(&self) -> usize {
        (self.data.nrows() as f64).sqrt().round() as usize
    }
}

/// Lag-averaged cumulant matrix on the difference coarray,
/// `(2N−1)×(2N−1)` regardless of how sparse the physical array is.
#[derive(Debug, Clone)]
pub struct RcFocMatrix {
    pub data: CMat,
    pub n_aperture: usize,
}

/// The non-redundant single measurement vector `z ∈ C^{4N−3}`; entry for
/// virtual lag `m` is `Σ_p γ_p exp(jπ m sin θ_p)` in population.
#[derive(Debug, Clone)]
pub struct NonRedundantVector {
    pub z: CVec,
    pub n_aperture: usize,
}

impl NonRedundantVector {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Lag-averaging operators for one geometry: the first stage groups antenna
/// pairs of the cumulant matrix by physical slot difference, the second
/// groups entries of the reduced matrix by virtual lag. Both are stored as
/// index maps; `dense_*` materializes the equivalent 0/1 matrices.
#[derive(Debug, Clone)]
pub struct ReductionOperators {
    n_aperture: usize,
    sla: bool,
    /// Physical pair side: N for a ULA, M for an SLA.
    pair_side: usize,
    /// Physical slot (1-based) of each array element.
    slots: Vec<usize>,
    /// Flat pair indices `a·side + b` per slot lag; length 2N−1.
    stage1: Vec<Vec<usize>>,
    /// `(row, col)` of R4 per virtual lag; length 4N−3.
    stage2: Vec<Vec<(usize, usize)>>,
}

impl ReductionOperators {
    pub fn n_aperture(&self) -> usize {
        self.n_aperture
    }

    pub fn is_sla(&self) -> bool {
        self.sla
    }

    pub fn pair_side(&self) -> usize {
        self.pair_side
    }

    /// Diagonal of the first-stage Gram matrix: pair counts per slot lag
    /// ({1,…,N,…,1} on a ULA, the coarray weight function on an SLA).
    pub fn stage1_counts(&self) -> Vec<f64> {
        self.stage1.iter().map(|g| g.len() as f64).collect()
    }

    /// Diagonal of the second-stage Gram matrix: {1,…,2N−1,…,1}.
    pub fn stage2_counts(&self) -> Vec<f64> {
        self.stage2.iter().map(|g| g.len() as f64).collect()
    }

    pub(crate) fn stage1_groups(&self) -> &[Vec<usize>] {
        &self.stage1
    }

    /// Slot-lag group of a flat pair index.
    pub(crate) fn stage1_lag_of(&self, flat: usize) -> usize {
        let side = self.pair_side;
        let (a, b) = (flat / side, flat % side);
        (self.slot(a) as i64 - self.slot(b) as i64 + self.n_aperture as i64 - 1) as usize
    }

    fn slot(&self, element: usize) -> usize {
        self.slots[element]
    }

    /// Dense first-stage selector (`side²×(2N−1)`), the 0/1 matrix whose
    /// Gram diagonal is [`Self::stage1_counts`]. On a ULA this is the
    /// pair-to-lag stacking operator; on an SLA it is the same operator
    /// restricted through the selection matrix.
    pub fn dense_stage1(&self) -> nalgebra::DMatrix<f64> {
        let side2 = self.pair_side * self.pair_side;
        let width = 2 * self.n_aperture - 1;
        let mut h = nalgebra::DMatrix::zeros(side2, width);
        for (lag, group) in self.stage1.iter().enumerate() {
            for &flat in group {
                h[(flat, lag)] = 1.0;
            }
        }
        h
    }

    /// Dense second-stage selector (`(2N−1)²×(4N−3)`), acting on the
    /// column-major vectorization of R4.
    pub fn dense_stage2(&self) -> nalgebra::DMatrix<f64> {
        let nn = 2 * self.n_aperture - 1;
        let width = 4 * self.n_aperture - 3;
        let mut h = nalgebra::DMatrix::zeros(nn * nn, width);
        for (lag, group) in self.stage2.iter().enumerate() {
            for &(r, c) in group {
                h[(c * nn + r, lag)] = 1.0;
            }
        }
        h
    }
}

/// Builds the reduction operators for an aperture, optionally restricted to
/// a sparse geometry. Fails with [`DoaError::CoarrayHole`] when some slot
/// lag has no antenna pair, which makes the first-stage averaging singular.
pub fn reduction_operators(
    n_aperture: usize,
    geom: Option<&ArrayGeometry>,
) -> Result<ReductionOperators> {
    if n_aperture == 0 {
        return Err(DoaError::InvalidArgument("aperture must be at least 1".into()));
    }
    let slots: Vec<usize> = match geom {
        Some(g) => {
            if g.n_aperture() != n_aperture {
                return Err(DoaError::DimensionMismatch(format!(
                    "geometry aperture {} vs requested {}",
                    g.n_aperture(),
                    n_aperture
                )));
            }
            g.omega().to_vec()
        }
        None => (1..=n_aperture).collect(),
    };
    let side = slots.len();
    let n = n_aperture;
    let mut stage1 = vec![Vec::new(); 2 * n - 1];
    for a in 0..side {
        for b in 0..side {
            let lag = slots[a] as i64 - slots[b] as i64;
            stage1[(lag + n as i64 - 1) as usize].push(a * side + b);
        }
    }
    if let Some(hole) = stage1.iter().position(|g| g.is_empty()) {
        return Err(DoaError::CoarrayHole {
            lag: hole as i64 - (n as i64 - 1),
        });
    }
    let nn = 2 * n - 1;
    let mut stage2 = vec![Vec::new(); 4 * n - 3];
    for r in 0..nn {
        for c in 0..nn {
            let lag = r as i64 - c as i64;
            stage2[(lag + nn as i64 - 1) as usize].push((r, c));
        }
    }
    Ok(ReductionOperators {
        n_aperture,
        sla: geom.map(|g| !g.is_ula()).unwrap_or(false),
        pair_side: side,
        stage1,
        stage2,
        slots,
    })
}

/// Population cumulant matrix `Σ_p γ_p (a_p ⊗ a_p*)(a_p ⊗ a_p*)^H` for a
/// manifold with one column per source and real source kurtoses `γ_p`.
/// This is the noiseless oracle the sample estimate converges to.
pub fn population_c4(manifold: &CMat, gammas: &[f64]) -> Result<CumulantMatrix> {
    if manifold.ncols() != gammas.len() {
        return Err(DoaError::DimensionMismatch(format!(
            "{} manifold columns vs {} kurtoses",
            manifold.ncols(),
            gammas.len()
        )));
    }
    let side = manifold.nrows();
    let dim = side * side;
    let mut c4 = CMat::zeros(dim, dim);
    for (p, &gamma) in gammas.iter().enumerate() {
        let a = manifold.column(p).clone_owned();
        let b = kron_vec(&a, &a.map(|v| v.conj()));
        c4.gerc(C64::new(gamma, 0.0), &b, &b, C64::new(1.0, 0.0));
    }
    Ok(CumulantMatrix {
        data: c4,
        kind: CumulantKind::Population,
    })
}

/// Sample cumulant matrix: every expectation of the population definition is
/// replaced by its sample mean over snapshots, and the result is Hermitian
/// symmetrized (finite-sample asymmetry is O(rounding) but downstream cone
/// projections assume exact Hermitian input).
pub fn sample_c4(y: &SnapshotMatrix) -> Result<CumulantMatrix> {
    let j = y.j_snapshots();
    if j < 2 {
        return Err(DoaError::InvalidArgument(format!(
            "need at least 2 snapshots, got {j}"
        )));
    }
    let m = y.data.nrows();
    let dim = m * m;
    let mut m2 = CMat::zeros(dim, dim);
    let mut m1 = CVec::zeros(dim);
    let mut r = CMat::zeros(m, m);
    let one = C64::new(1.0, 0.0);
    for t in 0..j {
        let col = y.data.column(t).clone_owned();
        let u = kron_vec(&col, &col.map(|v| v.conj()));
        m2.gerc(one, &u, &u, one);
        m1 += &u;
        r.gerc(one, &col, &col, one);
    }
    let jf = j as f64;
    m2.unscale_mut(jf);
    m1.unscale_mut(jf);
    r.unscale_mut(jf);
    let mut c4 = m2;
    c4.gerc(-one, &m1, &m1, one);
    let r_conj = r.map(|v| v.conj());
    c4 -= r.kronecker(&r_conj);
    Ok(CumulantMatrix {
        data: hermitian_part(&c4),
        kind: CumulantKind::Sample { j_snapshots: j },
    })
}

/// First-stage reduction: averages cumulant-matrix entries sharing a (row,
/// column) slot-lag pair, producing the `(2N−1)×(2N−1)` coarray matrix.
pub fn rc_foc(c4: &CumulantMatrix, ops: &ReductionOperators) -> Result<RcFocMatrix> {
    let dim = ops.pair_side() * ops.pair_side();
    if c4.data.nrows() != dim || c4.data.ncols() != dim {
        return Err(DoaError::DimensionMismatch(format!(
            "cumulant matrix is {}x{}, operators expect {}x{}",
            c4.data.nrows(),
            c4.data.ncols(),
            dim,
            dim
        )));
    }
    let nn = 2 * ops.n_aperture() - 1;
    let counts = ops.stage1_counts();
    let mut r4 = CMat::zeros(nn, nn);
    for (ri, rg) in ops.stage1_groups().iter().enumerate() {
        for (ci, cg) in ops.stage1_groups().iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &k in rg {
                for &l in cg {
                    acc += c4.data[(k, l)];
                }
            }
            r4[(ri, ci)] = acc / (counts[ri] * counts[ci]);
        }
    }
    Ok(RcFocMatrix {
        data: r4,
        n_aperture: ops.n_aperture(),
    })
}

/// Second-stage reduction: per-lag averaging of the coarray matrix yields
/// the SMV, whose entries follow the virtual Vandermonde model.
pub fn smv(r4: &RcFocMatrix, ops: &ReductionOperators) -> Result<NonRedundantVector> {
    let nn = 2 * ops.n_aperture() - 1;
    if r4.data.nrows() != nn || r4.data.ncols() != nn {
        return Err(DoaError::DimensionMismatch(format!(
            "coarray matrix is {}x{}, expected {}x{}",
            r4.data.nrows(),
            r4.data.ncols(),
            nn,
            nn
        )));
    }
    let counts = ops.stage2_counts();
    let mut z = CVec::zeros(4 * ops.n_aperture() - 3);
    for (j, group) in ops.stage2.iter().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for &(r, c) in group {
            acc += r4.data[(r, c)];
        }
        z[j] = acc / counts[j];
    }
    Ok(NonRedundantVector {
        z,
        n_aperture: ops.n_aperture(),
    })
}

/// Population SMV `Σ_p γ_p d(θ_p)` — the model the sample pipeline estimates.
pub fn population_smv(n_aperture: usize, thetas_deg: &[f64], gammas: &[f64]) -> Result<CVec> {
    if thetas_deg.len() != gammas.len() {
        return Err(DoaError::DimensionMismatch(
            "every DOA needs a kurtosis".into(),
        ));
    }
    let mut z = CVec::zeros(4 * n_aperture - 3);
    for (&theta, &gamma) in thetas_deg.iter().zip(gammas) {
        z += virtual_steering(n_aperture, theta)?.scale(gamma);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rc_steering;
    use crate::linalg::{hermitian_defect, hermitian_eig};
    use crate::signal::{gen_colored_noise, gen_snapshots, NoiseConfig, SourceConfig};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Scalar-loop estimator of cum(y_a, y_b*, y_c*, y_d) for circular data,
    /// kept deliberately free of any Kronecker/matrix machinery.
    fn brute_force_c4(y: &CMat) -> CMat {
        let m = y.nrows();
        let j = y.ncols();
        let jf = j as f64;
        let mean_prod = |f: &dyn Fn(usize) -> C64| -> C64 {
            (0..j).map(f).sum::<C64>() / jf
        };
        let r = |a: usize, b: usize| mean_prod(&|t| y[(a, t)] * y[(b, t)].conj());
        let mut out = CMat::zeros(m * m, m * m);
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let q = mean_prod(&|t| {
                            y[(a, t)] * y[(b, t)].conj() * y[(c, t)].conj() * y[(d, t)]
                        });
                        out[(a * m + b, c * m + d)] = q - r(a, b) * r(d, c) - r(a, c) * r(d, b);
                    }
                }
            }
        }
        hermitian_part(&out)
    }

    fn random_doas(rng: &mut StdRng, p: usize) -> Vec<f64> {
        loop {
            let thetas: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 160.0 - 80.0).collect();
            let mut ok = true;
            for i in 0..p {
                for k in i + 1..p {
                    if (thetas[i] - thetas[k]).abs() < 5.0 {
                        ok = false;
                    }
                }
            }
            if ok {
                return thetas;
            }
        }
    }

    #[test]
    fn population_single_broadside_source_is_all_ones() {
        let geom = ArrayGeometry::ula(2).unwrap();
        let a = geom.manifold(&[0.0]).unwrap();
        let c4 = population_c4(&a, &[1.0]).unwrap();
        assert_eq!(c4.data.nrows(), 4);
        for v in c4.data.iter() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn population_rank_equals_source_count() {
        let geom = ArrayGeometry::ula(4).unwrap();
        let thetas = [-23.0, 17.0, 41.0];
        let a = geom.manifold(&thetas).unwrap();
        let c4 = population_c4(&a, &[1.0, 2.0, 0.5]).unwrap();
        let (vals, _) = hermitian_eig(&c4.data);
        let rank = vals.iter().filter(|&&v| v > 1e-10 * vals[0]).count();
        assert_eq!(rank, 3);
    }

    #[test]
    fn population_is_linear_in_kurtosis() {
        let geom = ArrayGeometry::ula(3).unwrap();
        let a = geom.manifold(&[-10.0, 30.0]).unwrap();
        let c1 = population_c4(&a, &[1.0, 0.7]).unwrap();
        let c2 = population_c4(&a, &[3.0, 2.1]).unwrap();
        assert!((c2.data - c1.data.scale(3.0)).norm() < 1e-12);
        assert!(population_c4(&a, &[1.0]).is_err());
    }

    #[test]
    fn sample_matches_brute_force_quadruple_loop() {
        let geom = ArrayGeometry::ula(2).unwrap();
        let src = SourceConfig::new(vec![-15.0, 40.0], 1.0).unwrap();
        let noise = NoiseConfig::new(vec![1.0, -1.0, 0.8], 0.5).unwrap();
        let y = gen_snapshots(&geom, &src, &noise, 50, 77).unwrap();
        let fast = sample_c4(&y).unwrap();
        let slow = brute_force_c4(&y.data);
        let diff = (&fast.data - &slow).norm();
        assert!(diff < 1e-12, "matrix-path vs scalar-path diff {diff}");
        assert!(hermitian_defect(&fast.data) < 1e-14);
    }

    #[test]
    fn sample_rejects_single_snapshot() {
        let geom = ArrayGeometry::ula(2).unwrap();
        let src = SourceConfig::new(vec![0.0], 1.0).unwrap();
        let y = gen_snapshots(&geom, &src, &NoiseConfig::white(0.0), 1, 1).unwrap();
        assert!(sample_c4(&y).is_err());
    }

    #[test]
    fn gaussian_noise_cumulants_shrink_with_snapshots() {
        let geom = ArrayGeometry::ula(3).unwrap();
        let noise = NoiseConfig::new(vec![1.0, -1.0, 0.8], 1.0).unwrap();
        let mut norms = Vec::new();
        for &j in &[1000usize, 10_000] {
            let mut acc = 0.0;
            for trial in 0..4u64 {
                let n = gen_colored_noise(&geom, &noise, j, 31 + trial).unwrap();
                let y = SnapshotMatrix {
                    data: n,
                    geom: geom.clone(),
                };
                acc += sample_c4(&y).unwrap().data.norm();
            }
            norms.push(acc / 4.0);
        }
        let ratio = norms[0] / norms[1];
        // Entries shrink like 1/sqrt(J); allow a generous Monte Carlo band.
        assert!(ratio > 1.8 && ratio < 5.5, "shrink ratio {ratio}");
    }

    #[test]
    fn sample_converges_to_population() {
        let geom = ArrayGeometry::ula(3).unwrap();
        let src = SourceConfig::new(vec![12.0], 1.0).unwrap();
        let y = gen_snapshots(&geom, &src, &NoiseConfig::white(0.0), 100_000, 5).unwrap();
        let est = sample_c4(&y).unwrap();
        let a = geom.manifold(&src.thetas_deg).unwrap();
        let gamma = 4.0 * src.sigma_s2 * src.sigma_s2;
        let pop = population_c4(&a, &[gamma]).unwrap();
        let (vals_diff, _) = hermitian_eig(&(&est.data - &pop.data));
        let (vals_pop, _) = hermitian_eig(&pop.data);
        let rel = vals_diff.amax() / vals_pop.amax();
        assert!(rel < 0.05, "relative spectral error {rel}");
    }

    #[test]
    fn stage1_counts_follow_triangular_profile() {
        let ops = reduction_operators(4, None).unwrap();
        assert_eq!(ops.stage1_counts(), vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]);
        let h = ops.dense_stage1();
        assert_eq!((h.nrows(), h.ncols()), (16, 7));
        // Gram matrix of the selector is exactly diag(counts).
        let gram = h.transpose() * &h;
        for r in 0..7 {
            for c in 0..7 {
                let expect = if r == c { ops.stage1_counts()[r] } else { 0.0 };
                assert_eq!(gram[(r, c)], expect);
            }
        }
    }

    #[test]
    fn stage2_selector_has_documented_shape() {
        let ops = reduction_operators(4, None).unwrap();
        let h = ops.dense_stage2();
        assert_eq!((h.nrows(), h.ncols()), (49, 13));
        let gram = h.transpose() * &h;
        let expected: Vec<f64> = (1..=7).chain((1..=6).rev()).map(|v| v as f64).collect();
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(gram[(i, i)], *e);
        }
        assert_eq!(ops.stage2_counts(), expected);
    }

    #[test]
    fn sla_coarray_weights_and_holes() {
        let sla = ArrayGeometry::new(&[1, 2, 5, 7]).unwrap();
        let ops = reduction_operators(7, Some(&sla)).unwrap();
        // Differences of {1,2,5,7} cover every lag in -6..6.
        assert!(ops.stage1_counts().iter().all(|&c| c > 0.0));
        assert_eq!(ops.stage1_counts()[6], 4.0); // lag 0: one pair per antenna

        let holey = ArrayGeometry::new(&[1, 4, 7]).unwrap();
        match reduction_operators(7, Some(&holey)) {
            Err(DoaError::CoarrayHole { lag }) => assert!(lag.abs() <= 6),
            other => panic!("expected coarray hole, got {other:?}"),
        }
    }

    #[test]
    fn rc_foc_reproduces_coarray_manifold_factorization() {
        // Population R4 must equal B diag(gamma) B^H with B built directly
        // from the centered coarray steering vectors.
        let mut rng = StdRng::seed_from_u64(2);
        for geom in [ArrayGeometry::ula(4).unwrap(), ArrayGeometry::new(&[1, 2, 5, 7]).unwrap()] {
            let n = geom.n_aperture();
            let thetas = random_doas(&mut rng, 2);
            let gammas = [1.3, 0.6];
            let a = geom.manifold(&thetas).unwrap();
            let c4 = population_c4(&a, &gammas).unwrap();
            let ops = reduction_operators(n, if geom.is_ula() { None } else { Some(&geom) }).unwrap();
            let r4 = rc_foc(&c4, &ops).unwrap();
            let nn = 2 * n - 1;
            assert_eq!(r4.data.nrows(), nn);
            let mut direct = CMat::zeros(nn, nn);
            for (p, &theta) in thetas.iter().enumerate() {
                let b = rc_steering(n, theta).unwrap();
                direct.gerc(C64::new(gammas[p], 0.0), &b, &b, C64::new(1.0, 0.0));
            }
            assert!((&r4.data - &direct).norm() < 1e-10);
            let (vals, _) = hermitian_eig(&r4.data);
            let rank = vals.iter().filter(|&&v| v.abs() > 1e-8 * vals[0].abs()).count();
            assert_eq!(rank, 2);
        }
    }

    #[test]
    fn rc_foc_sizes_scale_with_aperture_not_antennas() {
        let ula = ArrayGeometry::ula(4).unwrap();
        let sla = ArrayGeometry::new(&[1, 2, 5, 7]).unwrap();
        let thetas = [-23.0, 17.0];
        let gammas = [1.0, 1.0];
        let ops_u = reduction_operators(4, None).unwrap();
        let ops_s = reduction_operators(7, Some(&sla)).unwrap();
        let r4_u = rc_foc(&population_c4(&ula.manifold(&thetas).unwrap(), &gammas).unwrap(), &ops_u).unwrap();
        let r4_s = rc_foc(&population_c4(&sla.manifold(&thetas).unwrap(), &gammas).unwrap(), &ops_s).unwrap();
        // Same antenna count, very different virtual apertures.
        assert_eq!(r4_u.data.nrows(), 7);
        assert_eq!(r4_s.data.nrows(), 13);
    }

    #[test]
    fn rc_foc_preserves_hermitian_structure() {
        let mut rng = StdRng::seed_from_u64(8);
        let ops = reduction_operators(4, None).unwrap();
        let raw = CMat::from_fn(16, 16, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let c4 = CumulantMatrix {
            data: hermitian_part(&raw),
            kind: CumulantKind::Population,
        };
        let r4 = rc_foc(&c4, &ops).unwrap();
        assert!(hermitian_defect(&r4.data) < 1e-12);
    }

    #[test]
    fn smv_of_broadside_source_is_all_ones() {
        let geom = ArrayGeometry::ula(4).unwrap();
        let ops = reduction_operators(4, None).unwrap();
        let c4 = population_c4(&geom.manifold(&[0.0]).unwrap(), &[1.0]).unwrap();
        let z = smv(&rc_foc(&c4, &ops).unwrap(), &ops).unwrap();
        assert_eq!(z.len(), 13);
        for v in z.z.iter() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn smv_has_vandermonde_ratios() {
        let geom = ArrayGeometry::ula(4).unwrap();
        let ops = reduction_operators(4, None).unwrap();
        let theta = -37.3;
        let c4 = population_c4(&geom.manifold(&[theta]).unwrap(), &[2.0]).unwrap();
        let z = smv(&rc_foc(&c4, &ops).unwrap(), &ops).unwrap();
        let s = (theta * std::f64::consts::PI / 180.0).sin();
        let mid = (z.len() - 1) / 2;
        for m in 0..z.len() {
            let expect = C64::from_polar(1.0, std::f64::consts::PI * (m as f64 - mid as f64) * s);
            let ratio = z.z[m] / z.z[mid];
            assert!((ratio - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn pipeline_composition_matches_virtual_model() {
        let mut rng = StdRng::seed_from_u64(4);
        for geom in [ArrayGeometry::ula(4).unwrap(), ArrayGeometry::new(&[1, 2, 5, 7]).unwrap()] {
            let n = geom.n_aperture();
            let ops = reduction_operators(n, if geom.is_ula() { None } else { Some(&geom) }).unwrap();
            for _ in 0..5 {
                let p = rng.random_range(1..=3usize);
                let thetas = random_doas(&mut rng, p);
                let gammas: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 1.5 + 0.5).collect();
                let c4 = population_c4(&geom.manifold(&thetas).unwrap(), &gammas).unwrap();
                let z = smv(&rc_foc(&c4, &ops).unwrap(), &ops).unwrap();
                let expect = population_smv(n, &thetas, &gammas).unwrap();
                assert!((&z.z - &expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn smv_averages_coarray_diagonals() {
        // The two-stage reduction of R4 is plain per-diagonal averaging.
        let mut rng = StdRng::seed_from_u64(6);
        let ops = reduction_operators(4, None).unwrap();
        let raw = CMat::from_fn(7, 7, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let r4 = RcFocMatrix {
            data: hermitian_part(&raw),
            n_aperture: 4,
        };
        let z = smv(&r4, &ops).unwrap();
        for lag in -6i64..=6 {
            let mut acc = C64::new(0.0, 0.0);
            let mut count = 0.0;
            for r in 0..7i64 {
                let c = r - lag;
                if (0..7).contains(&c) {
                    acc += r4.data[(r as usize, c as usize)];
                    count += 1.0;
                }
            }
            let expect = acc / count;
            assert!((z.z[(lag + 6) as usize] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn sample_pipeline_error_decays_with_snapshots() {
        let geom = ArrayGeometry::ula(4).unwrap();
        let src = SourceConfig::new(vec![-23.0, 17.0], 1.0).unwrap();
        let ops = reduction_operators(4, None).unwrap();
        let gamma = 4.0 * src.sigma_s2 * src.sigma_s2;
        let z_pop = population_smv(4, &src.thetas_deg, &[gamma, gamma]).unwrap();
        let mut errs = Vec::new();
        for &j in &[2000usize, 32_000] {
            let mut acc = 0.0;
            for trial in 0..3u64 {
                let y = gen_snapshots(&geom, &src, &NoiseConfig::white(0.0), j, 100 + trial).unwrap();
                let z = smv(&rc_foc(&sample_c4(&y).unwrap(), &ops).unwrap(), &ops).unwrap();
                acc += (&z.z - &z_pop).norm();
            }
            errs.push(acc / 3.0);
        }
        // x16 snapshots should shrink the error by roughly 4.
        let ratio = errs[0] / errs[1];
        assert!(ratio > 2.0 && ratio < 8.0, "error decay ratio {ratio}");
    }
}
