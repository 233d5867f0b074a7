//! Built-in oracle battery behind the `verify` CLI subcommand: quick
//! closed-form and population-identity checks that exercise the full
//! pipeline without any Monte Carlo budget.

use crate::cumulants::{population_c4, population_smv, rc_foc, reduction_operators, smv};
use crate::error_stats::{chi2_threshold, w_matrix, WhiteningModel};
use crate::geometry::ArrayGeometry;
use crate::linalg::{vec_col_major, CVec};
use crate::retrieval::esprit;
use crate::solver::{solve_et_anm, verify_solution, AnmProblem, SolverParams};

/// One named check with its outcome and a short diagnostic.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match run() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

/// Runs the whole battery; every entry is independent.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("population-pipeline-ula", || {
            pipeline_identity(&ArrayGeometry::ula(4).map_err(|e| e.to_string())?)
        }),
        check("population-pipeline-sla", || {
            pipeline_identity(&ArrayGeometry::new(&[1, 2, 5, 7]).map_err(|e| e.to_string())?)
        }),
        check("chi-square-median", || {
            let eta = chi2_threshold(0.5, 2).map_err(|e| e.to_string())?;
            let expect = 2.0 * std::f64::consts::LN_2;
            if (eta - expect).abs() < 1e-9 {
                Ok(format!("chi2inv(0.5, 2) = {eta:.12}"))
            } else {
                Err(format!("chi2inv(0.5, 2) = {eta}, want {expect}"))
            }
        }),
        check("chi-square-table-point", || {
            let eta = chi2_threshold(0.001, 13).map_err(|e| e.to_string())?;
            if (eta - 34.528178974871).abs() < 1e-6 {
                Ok(format!("chi2inv(0.999, 13) = {eta:.9}"))
            } else {
                Err(format!("chi2inv(0.999, 13) = {eta}"))
            }
        }),
        check("error-map-consistency", || {
            let geom = ArrayGeometry::ula(4).map_err(|e| e.to_string())?;
            let ops = reduction_operators(4, None).map_err(|e| e.to_string())?;
            let w = w_matrix(&ops);
            let c4 = population_c4(&geom.manifold(&[-23.0, 17.0]).map_err(|e| e.to_string())?, &[4.0, 4.0])
                .map_err(|e| e.to_string())?;
            let direct = w.apply(&vec_col_major(&c4.data));
            let pipeline = smv(
                &rc_foc(&c4, &ops).map_err(|e| e.to_string())?,
                &ops,
            )
            .map_err(|e| e.to_string())?;
            let diff = (direct - pipeline.z).norm();
            if diff < 1e-10 {
                Ok(format!("compressed map matches pipeline to {diff:.2e}"))
            } else {
                Err(format!("map/pipeline mismatch {diff:.2e}"))
            }
        }),
        check("noiseless-recovery", || {
            let z = population_smv(4, &[-23.0, 17.0], &[4.0, 4.0]).map_err(|e| e.to_string())?;
            let whitening = WhiteningModel::identity(13, 1e-10).map_err(|e| e.to_string())?;
            let problem = AnmProblem::new(z, whitening).map_err(|e| e.to_string())?;
            let sol = solve_et_anm(&problem, &SolverParams::high_accuracy()).map_err(|e| e.to_string())?;
            let report = verify_solution(&sol, &problem);
            if !report.feasible {
                return Err(format!("solution infeasible: {report:?}"));
            }
            let est = esprit(&sol.toeplitz(), 2).map_err(|e| e.to_string())?;
            let err = (est.thetas_deg[0] + 23.0).abs().max((est.thetas_deg[1] - 17.0).abs());
            if err < 0.01 {
                Ok(format!("max DOA error {err:.2e} deg"))
            } else {
                Err(format!("max DOA error {err:.3} deg"))
            }
        }),
        check("coarray-hole-detection", || {
            let holey = ArrayGeometry::new(&[1, 4, 7]).map_err(|e| e.to_string())?;
            match reduction_operators(7, Some(&holey)) {
                Err(crate::error::DoaError::CoarrayHole { lag }) => {
                    Ok(format!("hole reported at lag {lag}"))
                }
                other => Err(format!("expected coarray-hole error, got {other:?}")),
            }
        }),
    ]
}

fn pipeline_identity(geom: &ArrayGeometry) -> Result<String, String> {
    let n = geom.n_aperture();
    let ops = reduction_operators(n, if geom.is_ula() { None } else { Some(geom) })
        .map_err(|e| e.to_string())?;
    let thetas = [-23.0, 17.0, 48.0];
    let gammas = [4.0, 2.0, 1.0];
    let c4 = population_c4(&geom.manifold(&thetas).map_err(|e| e.to_string())?, &gammas)
        .map_err(|e| e.to_string())?;
    let z = smv(&rc_foc(&c4, &ops).map_err(|e| e.to_string())?, &ops).map_err(|e| e.to_string())?;
    let expect: CVec = population_smv(n, &thetas, &gammas).map_err(|e| e.to_string())?;
    let diff = (&z.z - &expect).norm();
    if diff < 1e-10 {
        Ok(format!("virtual model reproduced to {diff:.2e}"))
    } else {
        Err(format!("virtual model mismatch {diff:.2e}"))
    }
}
