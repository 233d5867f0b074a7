// Temporary diagnostic (deleted before ship): subgradient reference tuning.

use doa_core::cumulants::population_smv;
use doa_core::error_stats::WhiteningModel;
use doa_core::linalg::{hermitian_eig, CMat, CVec, C64};

fn subgradient_reference_traced(
    z: &CVec,
    whitening: &WhiteningModel,
    iters: usize,
    kappa: f64,
    step0: f64,
) -> f64 {
    let n = z.len();
    let eta = whitening.eta();
    let mut x = z.clone();
    let mut q = z.norm();
    let mut mu = CVec::zeros(n);
    mu[0] = C64::new(z.norm(), 0.0);
    let mut best = f64::INFINITY;

    let block = |x: &CVec, q: f64, mu: &CVec| -> CMat {
        let mut m = CMat::zeros(n + 1, n + 1);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = if r >= c { mu[r - c] } else { mu[c - r].conj() };
            }
        }
        for r in 0..n {
            m[(r, n)] = x[r];
            m[(n, r)] = x[r].conj();
        }
        m[(n, n)] = C64::new(q, 0.0);
        m
    };

    let stages = 16usize;
    let per_stage = iters / stages;
    let mut best_state = (x.clone(), q, mu.clone());
    for stage in 0..stages {
        let step = step0 * 0.5f64.powi(stage as i32);
        let (bx, bq, bmu) = best_state.clone();
        x = bx;
        q = bq;
        mu = bmu;
    for k in 0..per_stage {
        let m = block(&x, q, &mu);
        let (vals, vecs) = hermitian_eig(&m);
        let lam_min = vals[n];
        let diff = &x - z;
        let g = whitening.mahalanobis2(&diff) - eta;

        let x_f = if g > 0.0 {
            z + diff.scale((eta / (g + eta)).sqrt())
        } else {
            x.clone()
        };
        let m_f = block(&x_f, q, &mu);
        let (vals_f, _) = hermitian_eig(&m_f);
        let lift = (-vals_f[n]).max(0.0);
        let bound = 0.5 * (q + lift) + 0.5 * (mu[0].re + lift);
        if bound < best {
            best = bound;
            best_state = (x.clone(), q, mu.clone());
        }
        let _ = k;

        let mut gx = CVec::zeros(n);
        let mut gq = 0.5;
        let mut gmu = CVec::zeros(n);
        gmu[0] = C64::new(0.5, 0.0);
        let _ = lam_min;
        for e in 0..=n {
            if vals[e] >= 0.0 {
                continue;
            }
            let u = vecs.column(e).clone_owned();
            let un = u[n];
            for i in 0..n {
                let w = u[i].conj() * un;
                gx[i] += C64::new(-2.0 * kappa * w.re, 2.0 * kappa * w.im);
            }
            gq += -kappa * un.norm_sqr();
            for d in 0..n {
                let mut t = C64::new(0.0, 0.0);
                for r in d..n {
                    t += u[r].conj() * u[r - d];
                }
                if d == 0 {
                    gmu[0] += C64::new(-kappa * t.re, 0.0);
                } else {
                    gmu[d] += C64::new(-2.0 * kappa * t.re, 2.0 * kappa * t.im);
                }
            }
        }
        if g > 0.0 {
            // Distance-form penalty: gradient of ||S^-1/2 (x-z)|| has unit
            // whitened magnitude, keeping the exact-penalty threshold O(1)
            // even for tiny radii.
            let m2 = g + eta;
            let v = whitening.inv_sqrt() * whitening.whiten(&diff);
            let scale = 1.0 / m2.sqrt();
            for i in 0..n {
                gx[i] += C64::new(kappa * scale * v[i].re, kappa * scale * v[i].im);
            }
        }
        for i in 0..n {
            x[i] -= C64::new(step * gx[i].re, step * gx[i].im);
            mu[i] -= C64::new(step * gmu[i].re, step * gmu[i].im);
        }
        mu[0] = C64::new(mu[0].re, 0.0);
        q -= step * gq;
    }
    }
    best
}

#[test]
fn tune_reference() {
    let gamma = 1.7;
    let z = population_smv(2, &[21.0], &[gamma]).unwrap();
    for (kappa, step0) in [(10.0, 0.03), (3.0, 0.03), (3.0, 0.1), (10.0, 0.1), (3.0, 0.3)] {
        let whitening = WhiteningModel::identity(5, 1e-8).unwrap();
        println!("kappa {kappa} step0 {step0}:");
        let best = subgradient_reference_traced(&z, &whitening, 120_000, kappa, step0);
        println!("  -> best {best:.6} vs gamma {gamma} (rel {:.2e})", (best - gamma).abs() / gamma);
    }
}
