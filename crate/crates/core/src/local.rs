//! Local analysis at the critical points: Jacobians, eigenstructure,
//! center-manifold expansion at the tail point, and series seeding of the
//! invariant-manifold trajectories.

use crate::dynsys::Chart;
use crate::error::{Error, Result};
use crate::exponents::Regime;
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

/// Upper bound on Z/X (sigma > 0) or on the series correction relative to K
/// (sigma < 0) at an unstable-manifold seed. Requested offsets are shrunk
/// until the expansion used to place the seed is accurate to this ratio.
pub const SEED_SERIES_CAP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CriticalPoint {
    P0,
    P1,
    P2,
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    /// The distinguished point of the one-parameter family on the equator,
    /// at gamma = gamma0.
    QGamma,
}

/// Eigen-data of one critical point in its natural chart.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointReport {
    pub id: CriticalPoint,
    pub chart: Chart,
    pub location: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<(f64, f64)>,
    /// Eigenvectors for the real eigenvalues, in eigenvalue order; `None`
    /// for members of a complex pair.
    pub eigenvectors: Vec<Option<Vec<f64>>>,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub center_dim: usize,
}

fn classify_dims(eigs: &[Complex64], scale: f64) -> (usize, usize, usize) {
    let tol = 1e-10 * scale.max(1.0);
    let mut dims = (0, 0, 0);
    for e in eigs {
        if e.re > tol {
            dims.1 += 1;
        } else if e.re < -tol {
            dims.0 += 1;
        } else {
            dims.2 += 1;
        }
    }
    dims
}

/// Right null vector of (M - lambda I) via SVD.
fn eigenvector_for(m: &Matrix3<f64>, lambda: f64) -> Option<Vec<f64>> {
    let shifted = m - Matrix3::identity() * lambda;
    let svd = shifted.svd(true, true);
    let v_t = svd.v_t?;
    let mut idx = 0;
    for i in 1..3 {
        if svd.singular_values[i] < svd.singular_values[idx] {
            idx = i;
        }
    }
    let v = v_t.row(idx);
    // Normalize so the largest component is +1 for readable output.
    let mut vec = [v[0], v[1], v[2]];
    let (mut imax, mut vmax) = (0, vec[0].abs());
    for i in 1..3 {
        if vec[i].abs() > vmax {
            imax = i;
            vmax = vec[i].abs();
        }
    }
    if vmax > 0.0 {
        let s = vec[imax];
        for x in &mut vec {
            *x /= s;
        }
    }
    Some(vec.to_vec())
}

/// Analytic Jacobian and expected eigenvalues of the named point.
fn analytic_data(id: CriticalPoint, regime: &Regime) -> Result<(Chart, Vec<f64>, Matrix3<f64>, Vec<Complex64>)> {
    let n = regime.nf();
    let sigma = regime.sigma();
    let p = regime.p();
    let s2 = sigma + 2.0;
    let pm1 = p - 1.0;
    let re = |v: f64| Complex64::new(v, 0.0);
    match id {
        CriticalPoint::P0 => {
            let m = Matrix3::new(
                2.0, 0.0, 0.0,
                1.0, -(n - 2.0), -1.0,
                0.0, 0.0, s2,
            );
            Ok((Chart::FullPhase, vec![0.0, 0.0, 0.0], m, vec![re(2.0), re(-(n - 2.0)), re(s2)]))
        }
        CriticalPoint::P1 => {
            let lam3 = n + sigma - p * (n - 2.0);
            let m = Matrix3::new(
                2.0, 0.0, 0.0,
                lam3 / s2, n - 2.0, -1.0,
                0.0, 0.0, lam3,
            );
            Ok((Chart::FullPhase, vec![0.0, -(n - 2.0), 0.0], m, vec![re(2.0), re(n - 2.0), re(lam3)]))
        }
        CriticalPoint::P2 => {
            let trace = (n - 2.0) * (regime.p_s() - p) / pm1;
            let det = s2 * (p * (n - 2.0) - (n + sigma)) / pm1;
            let m = Matrix3::new(
                2.0, 0.0, 0.0,
                0.0, trace, -1.0,
                0.0, det, 0.0,
            );
            let disc = trace * trace - 4.0 * det;
            let pair = if disc >= 0.0 {
                let r = disc.sqrt();
                vec![re((trace + r) / 2.0), re((trace - r) / 2.0)]
            } else {
                let r = (-disc).sqrt() / 2.0;
                vec![Complex64::new(trace / 2.0, r), Complex64::new(trace / 2.0, -r)]
            };
            let mut eigs = vec![re(2.0)];
            eigs.extend(pair);
            Ok((
                Chart::FullPhase,
                vec![0.0, regime.y_stat(), regime.consts.z0],
                m,
                eigs,
            ))
        }
        CriticalPoint::Q1 => {
            let m = Matrix3::new(
                0.0, 0.0, 0.0,
                1.0, pm1 / s2, 0.0,
                0.0, 0.0, 0.0,
            );
            Ok((Chart::InfX, vec![0.0, 0.0, 0.0], m, vec![re(0.0), re(pm1 / s2), re(0.0)]))
        }
        CriticalPoint::Q5 => {
            let y5 = pm1 / s2;
            let m = Matrix3::new(
                0.0, 0.0, 0.0,
                1.0 - n * y5, -y5, 0.0,
                0.0, 0.0, pm1 * y5,
            );
            Ok((Chart::InfX, vec![0.0, y5, 0.0], m, vec![re(0.0), re(-y5), re(pm1 * y5)]))
        }
        CriticalPoint::QGamma => {
            let g = gamma_special(regime);
            let kappa = g.kappa0;
            let m = Matrix3::new(
                0.0, 0.0, 0.0,
                1.0 - kappa, pm1 / s2, 0.0,
                sigma * kappa, pm1 * kappa, 0.0,
            );
            Ok((Chart::InfX, vec![0.0, 0.0, kappa], m, vec![re(0.0), re(pm1 / s2), re(0.0)]))
        }
        CriticalPoint::Q2 => {
            let m = Matrix3::new(
                1.0, 0.0, 0.0,
                0.0, p, 0.0,
                0.0, 0.0, 1.0,
            );
            Ok((Chart::InfYMinus, vec![0.0, 0.0, 0.0], m, vec![re(1.0), re(p), re(1.0)]))
        }
        CriticalPoint::Q3 => {
            let m = Matrix3::new(
                -1.0, 0.0, 0.0,
                0.0, -p, 0.0,
                0.0, 0.0, -1.0,
            );
            Ok((Chart::InfYPlus, vec![0.0, 0.0, 0.0], m, vec![re(-1.0), re(-p), re(-1.0)]))
        }
        CriticalPoint::Q4 => Err(Error::UnsupportedPoint(
            "Q4 has no adapted projection chart; no orbits connect it to the finite region".into(),
        )),
    }
}

/// Eigen-report of the named critical point in its natural chart. The
/// analytic eigenvalues are cross-checked against a numeric decomposition of
/// the hard-coded Jacobian.
pub fn report(id: CriticalPoint, regime: &Regime) -> Result<CriticalPointReport> {
    let (chart, location, m, analytic) = analytic_data(id, regime)?;
    let numeric = m.complex_eigenvalues();
    let mut numeric: Vec<Complex64> = numeric.iter().copied().collect();
    let mut ordered = analytic.clone();
    let key = |c: &Complex64| (c.re, c.im);
    numeric.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    ordered.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    let scale = analytic.iter().map(|c| c.norm()).fold(1.0f64, f64::max);
    // Near a double root the numeric splitting is O(sqrt(eps)), so the
    // cross-check tolerance cannot be tighter than ~1e-7.
    for (a, b) in ordered.iter().zip(numeric.iter()) {
        if (a - b).norm() > 1e-6 * scale {
            return Err(Error::Domain(format!(
                "eigenvalue cross-check failed at {id:?}: analytic {a}, numeric {b}"
            )));
        }
    }
    let eigenvectors = analytic
        .iter()
        .map(|c| {
            if c.im == 0.0 {
                eigenvector_for(&m, c.re)
            } else {
                None
            }
        })
        .collect();
    let (stable_dim, unstable_dim, center_dim) = classify_dims(&analytic, scale);
    Ok(CriticalPointReport {
        id,
        chart,
        location,
        jacobian: (0..3)
            .map(|i| (0..3).map(|j| m[(i, j)]).collect())
            .collect(),
        eigenvalues: analytic.iter().map(|c| (c.re, c.im)).collect(),
        eigenvectors,
        stable_dim,
        unstable_dim,
        center_dim,
    })
}

/// Quadratic approximation of the center manifold of the tail point in the
/// X-projection chart: y as a function of (x, z), truncated to the printed
/// terms.
pub fn center_manifold_y(x: f64, z: f64, regime: &Regime) -> f64 {
    let n = regime.nf();
    let sigma = regime.sigma();
    let p = regime.p();
    let s2 = sigma + 2.0;
    let pm1 = p - 1.0;
    let c = s2 / pm1;
    let d = s2 * s2 * (n + sigma - p * (n - 2.0)) / (pm1 * pm1 * pm1);
    -c * x + d * x * x + c * x * z
}

/// Starting state for one trajectory of a shooting family.
#[derive(Debug, Clone, Serialize)]
pub struct SeedPoint {
    pub chart: Chart,
    pub state: Vec<f64>,
    pub family_parameter: f64,
    /// Scalar offset from the critical point the seed expands around.
    pub offset: f64,
    pub warning: Option<String>,
}

/// Seed on the center manifold of the tail point for the trajectory whose Z
/// limit is `k`, placed at X = x0 (backward integration start).
pub fn seed_center_q1(k: f64, x0: f64, regime: &Regime) -> Result<SeedPoint> {
    if k <= 0.0 {
        return Err(Error::Domain(format!("center-manifold family needs k > 0, got {k}")));
    }
    if x0 <= 0.0 {
        return Err(Error::Domain(format!("seed placement needs x0 > 0, got {x0}")));
    }
    let y = center_manifold_y(1.0 / x0, k / x0, regime) * x0;
    let warning = (x0 < 1e3)
        .then(|| format!("x0 = {x0} below 1e3: dropped expansion terms may exceed 1e-6"));
    Ok(SeedPoint {
        chart: Chart::FullPhase,
        state: vec![x0, y, k],
        family_parameter: k,
        offset: 1.0 / x0,
        warning,
    })
}

/// Amplitude constant of the unstable-manifold trajectory through the
/// profile value f(0) = f0 (the sigma > 0 branch parameterization).
pub fn amplitude_from_f0(f0: f64, regime: &Regime) -> f64 {
    let s2 = regime.sigma() + 2.0;
    let pm1 = regime.p() - 1.0;
    f0.powf(pm1) * (2.0 * pm1 / s2).powf(s2 / 2.0)
}

pub fn f0_from_amplitude(c: f64, regime: &Regime) -> f64 {
    let s2 = regime.sigma() + 2.0;
    let pm1 = regime.p() - 1.0;
    (c * (s2 / (2.0 * pm1)).powf(s2 / 2.0)).powf(1.0 / pm1)
}

/// Seed on the unstable manifold of the origin. For sigma > 0 the family
/// parameter is the amplitude constant C and `eps` is the X offset; for
/// sigma < 0 the parameter is f0 = f(0) and `eps` is the xi^(sigma+2)
/// offset. Offsets are shrunk when needed to keep the placing series
/// accurate to `SEED_SERIES_CAP`.
pub fn seed_unstable_p0(c_or_f0: f64, eps: f64, regime: &Regime) -> Result<SeedPoint> {
    if c_or_f0 <= 0.0 {
        return Err(Error::Domain(format!(
            "unstable-manifold family parameter must be positive, got {c_or_f0}"
        )));
    }
    if eps <= 0.0 || eps > 1e-2 {
        return Err(Error::Domain(format!("seed offset {eps} outside (0, 1e-2]")));
    }
    let n = regime.nf();
    let sigma = regime.sigma();
    let p = regime.p();
    if sigma > 0.0 {
        let c = c_or_f0;
        // Keep Z/X = C X^(sigma/2) at or below the cap.
        let eps_cap = (SEED_SERIES_CAP / c).powf(2.0 / sigma);
        let x = eps.min(eps_cap);
        let z = c * x.powf((sigma + 2.0) / 2.0);
        let y = x / n - z / (n + sigma);
        Ok(SeedPoint {
            chart: Chart::FullPhase,
            state: vec![x, y, z],
            family_parameter: c,
            offset: x,
            warning: (x < eps).then(|| {
                format!("seed offset reduced to {x:.3e} to keep the origin series valid")
            }),
        })
    } else if sigma < 0.0 {
        let f0 = c_or_f0;
        let pm1 = p - 1.0;
        let k = f0.powf(1.0 - p);
        let cc = pm1 / ((n + sigma) * (sigma + 2.0));
        // Keep the series correction c*xi^(sigma+2) at or below cap*K.
        let t = eps.min(SEED_SERIES_CAP * k / cc);
        let xi0 = t.powf(1.0 / (sigma + 2.0));
        let base = k + cc * t;
        let f = base.powf(-1.0 / pm1);
        let fp = -xi0.powf(sigma + 1.0) * base.powf(-p / pm1) / (n + sigma);
        let pt = crate::dynsys::to_phase(&crate::dynsys::ProfileState { xi: xi0, f, fp }, regime)?;
        Ok(SeedPoint {
            chart: Chart::FullPhase,
            state: vec![pt.x, pt.y, pt.z],
            family_parameter: f0,
            offset: t,
            warning: (t < eps).then(|| {
                format!("seed offset reduced to {t:.3e} to keep the origin series valid")
            }),
        })
    } else {
        // sigma == 0: Z and X scale together; the two-term expansion applies
        // with no cap.
        let c = c_or_f0;
        let x = eps;
        let z = c * x;
        Ok(SeedPoint {
            chart: Chart::FullPhase,
            state: vec![x, x / n - z / n, z],
            family_parameter: c,
            offset: x,
            warning: None,
        })
    }
}

/// Data of the distinguished equator point: its location parameter and the
/// slow-decay tail law used to label escaping orbits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaReport {
    pub gamma0: f64,
    /// z = Z/X level of the point in the X-projection chart.
    pub kappa0: f64,
    /// Tail decay exponent sigma/(p-1) of the slow family.
    pub tail_exponent: f64,
    pub tail_amplitude: f64,
}

pub fn gamma_special(regime: &Regime) -> GammaReport {
    let alpha = regime.consts.alpha;
    let pm1 = regime.p() - 1.0;
    let a = alpha * pm1;
    GammaReport {
        gamma0: a / (1.0 + a * a).sqrt(),
        kappa0: 1.0 / a,
        tail_exponent: regime.sigma() / pm1,
        tail_amplitude: (1.0 / pm1).powf(1.0 / pm1),
    }
}
