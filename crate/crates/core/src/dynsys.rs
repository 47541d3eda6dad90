//! Vector fields for every coordinate system used in the analysis and the
//! exact transforms between them.

use crate::error::{Error, Result};
use crate::exponents::Regime;
use serde::Serialize;

/// Smallest radius at which the singular weight is evaluated for sigma < 0.
/// Callers must seed closer orbits from the origin series instead.
pub const XI_MIN_SINGULAR: f64 = 1e-8;

/// Point in the autonomous phase space (X, Y, Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PhasePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Membership in the open region X > 0, Z > 0 where profiles live.
    pub fn in_region(&self) -> bool {
        self.x > 0.0 && self.z > 0.0
    }
}

/// Profile-side state (xi, f, f').
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileState {
    pub xi: f64,
    pub f: f64,
    pub fp: f64,
}

/// Identifies one coordinate system. Second-order scalar equations are
/// exposed as first-order pairs (value, derivative) so a single integrator
/// serves every chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Chart {
    /// Autonomous system in (X, Y, Z), time eta = ln(xi).
    FullPhase,
    /// Profile equation in (f, f'), time xi.
    ProfileOde,
    /// Projection on the X variable: (x, y, z) = (1/X, Y/X, Z/X), time eta1.
    InfX,
    /// Projection on the Y variable with the plus sign (flow near Q3).
    InfYPlus,
    /// Projection on the Y variable with the minus sign (flow near Q2).
    InfYMinus,
    /// Restriction to the invariant plane X = 0: state (Y, Z).
    PlaneX0,
    /// Restriction to the invariant plane Z = 0: state (X, Y).
    PlaneZ0,
    /// Reduced system in (y, w) with w = x*z on the x = 0 sphere at infinity.
    WPlane,
    /// Weighted-profile equation in (g, g'), time s = ln(xi).
    GEquation,
    /// Linearization of the weighted-profile equation around the stationary
    /// level, state (y, y'), time s.
    Linearized,
}

impl Chart {
    pub fn dim(&self) -> usize {
        match self {
            Chart::FullPhase | Chart::InfX | Chart::InfYPlus | Chart::InfYMinus => 3,
            _ => 2,
        }
    }

    /// Column names for CSV output.
    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            Chart::FullPhase => &["X", "Y", "Z"],
            Chart::ProfileOde => &["f", "fprime"],
            Chart::InfX => &["x", "y", "z"],
            Chart::InfYPlus | Chart::InfYMinus => &["xt", "zt", "wt"],
            Chart::PlaneX0 => &["Y", "Z"],
            Chart::PlaneZ0 => &["X", "Y"],
            Chart::WPlane => &["y", "w"],
            Chart::GEquation => &["g", "gprime"],
            Chart::Linearized => &["y", "yprime"],
        }
    }

    pub fn time_name(&self) -> &'static str {
        match self {
            Chart::ProfileOde => "xi",
            Chart::InfX | Chart::WPlane => "eta1",
            Chart::InfYPlus | Chart::InfYMinus => "eta2",
            Chart::GEquation | Chart::Linearized => "s",
            _ => "eta",
        }
    }
}

/// Odd power extension v |v|^(p-1): smooth at zero, agrees with v^p for
/// v >= 0. Keeps the profile fields finite when a shot dips below zero
/// before the vanishing event is localized.
#[inline]
fn pow_signed(v: f64, p: f64) -> f64 {
    v.signum() * v.abs().powf(p)
}

/// Right-hand side of the selected chart. `t` is the chart's independent
/// variable (only the profile and weighted-profile charts are
/// non-autonomous). Writes into `out`, which must match the chart dimension.
pub fn eval_field(regime: &Regime, chart: Chart, t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
    let dim = chart.dim();
    if state.len() != dim || out.len() != dim {
        return Err(Error::DimensionMismatch {
            chart: chart.state_names()[0],
            expected: dim,
            got: state.len(),
        });
    }
    let n = regime.nf();
    let sigma = regime.sigma();
    let p = regime.p();
    let s2 = sigma + 2.0;
    let pm1 = p - 1.0;
    let ratio = pm1 / s2;

    match chart {
        Chart::FullPhase => {
            let (x, y, z) = (state[0], state[1], state[2]);
            out[0] = 2.0 * x;
            out[1] = x - (n - 2.0) * y - z - y * y + ratio * x * y;
            out[2] = z * (s2 + pm1 * y);
        }
        Chart::ProfileOde => {
            let (f, fp) = (state[0], state[1]);
            if t <= 0.0 {
                return Err(Error::Singular(format!("profile equation at xi={t} <= 0")));
            }
            if sigma < 0.0 && t < XI_MIN_SINGULAR {
                return Err(Error::Singular(format!(
                    "singular weight: xi={t} below {XI_MIN_SINGULAR} with sigma={sigma} < 0"
                )));
            }
            out[0] = fp;
            out[1] = -(n - 1.0) / t * fp + 0.5 * t * fp + regime.consts.alpha * f
                - t.powf(sigma) * pow_signed(f, p);
        }
        Chart::InfX => {
            let (x, y, z) = (state[0], state[1], state[2]);
            out[0] = -2.0 * x * x;
            out[1] = -y * y + ratio * y + x - n * x * y - x * z;
            out[2] = z * (pm1 * y + sigma * x);
        }
        Chart::InfYPlus | Chart::InfYMinus => {
            let (xt, zt, wt) = (state[0], state[1], state[2]);
            let e0 = -xt - n * xt * wt + ratio * xt * xt + xt * xt * wt - xt * zt * wt;
            let e1 = -p * zt - (n + sigma) * zt * wt + ratio * xt * zt + xt * zt * wt - zt * zt * wt;
            let e2 = -wt - (n - 2.0) * wt * wt + ratio * xt * wt + xt * wt * wt - zt * wt * wt;
            let sgn = if chart == Chart::InfYPlus { 1.0 } else { -1.0 };
            out[0] = sgn * e0;
            out[1] = sgn * e1;
            out[2] = sgn * e2;
        }
        Chart::PlaneX0 => {
            let (y, z) = (state[0], state[1]);
            out[0] = -(n - 2.0) * y - z - y * y;
            out[1] = z * (s2 + pm1 * y);
        }
        Chart::PlaneZ0 => {
            let (x, y) = (state[0], state[1]);
            out[0] = 2.0 * x;
            out[1] = x - (n - 2.0) * y - y * y + ratio * x * y;
        }
        Chart::WPlane => {
            let (y, w) = (state[0], state[1]);
            out[0] = -y * y + ratio * y - w;
            out[1] = pm1 * y * w;
        }
        Chart::GEquation => {
            let (g, gp) = (state[0], state[1]);
            out[0] = gp;
            out[1] = -regime.consts.a * gp + regime.consts.b / pm1 * g - pow_signed(g, p)
                + 0.5 * (2.0 * t).exp() * gp;
        }
        Chart::Linearized => {
            let (y, yp) = (state[0], state[1]);
            out[0] = yp;
            out[1] = -regime.consts.a * yp - regime.consts.b * y + 0.5 * (2.0 * t).exp() * yp;
        }
    }
    Ok(())
}

/// Map a profile state to phase coordinates.
pub fn to_phase(state: &ProfileState, regime: &Regime) -> Result<PhasePoint> {
    if state.xi <= 0.0 {
        return Err(Error::Domain(format!("to_phase needs xi > 0, got {}", state.xi)));
    }
    if state.f <= 0.0 {
        return Err(Error::Domain(format!("to_phase needs f > 0, got {}", state.f)));
    }
    let (sigma, p) = (regime.sigma(), regime.p());
    Ok(PhasePoint {
        x: (sigma + 2.0) / (2.0 * (p - 1.0)) * state.xi * state.xi,
        y: state.xi * state.fp / state.f,
        z: state.xi.powf(sigma + 2.0) * state.f.powf(p - 1.0),
    })
}

/// Invert the phase map on X > 0, Z > 0, recovering (xi, f).
pub fn from_phase(pt: &PhasePoint, regime: &Regime) -> Result<(f64, f64)> {
    if pt.x <= 0.0 || pt.z <= 0.0 {
        return Err(Error::Domain(format!(
            "from_phase needs X > 0 and Z > 0, got ({}, {})",
            pt.x, pt.z
        )));
    }
    let (sigma, p) = (regime.sigma(), regime.p());
    let u = 2.0 * (p - 1.0) * pt.x / (sigma + 2.0);
    let xi = u.sqrt();
    let f = u.powf(-(sigma + 2.0) / (2.0 * (p - 1.0))) * pt.z.powf(1.0 / (p - 1.0));
    Ok((xi, f))
}

/// Derivative f'(xi) recovered from a phase point via Y = xi f'/f.
pub fn fp_from_phase(pt: &PhasePoint, regime: &Regime) -> Result<f64> {
    let (xi, f) = from_phase(pt, regime)?;
    Ok(pt.y * f / xi)
}

/// Coordinates of the projection chart on the X variable.
pub fn chart_x(pt: &PhasePoint) -> Result<(f64, f64, f64)> {
    if pt.x <= 0.0 {
        return Err(Error::Domain(format!("chart_x needs X > 0, got {}", pt.x)));
    }
    Ok((1.0 / pt.x, pt.y / pt.x, pt.z / pt.x))
}

/// Coordinates of the projection chart on the Y variable.
pub fn chart_y(pt: &PhasePoint) -> Result<(f64, f64, f64)> {
    if pt.y == 0.0 {
        return Err(Error::Domain("chart_y needs Y != 0".into()));
    }
    Ok((pt.x / pt.y, pt.z / pt.y, 1.0 / pt.y))
}

/// Dulac divergence of the X = 0 plane system with multiplier Z^a,
/// a = (3-p)/(1-p): strictly negative for p > p_S(sigma), ruling out
/// limit cycles there.
pub fn dulac_divergence(y: f64, z: f64, regime: &Regime) -> Result<f64> {
    let _ = y;
    if z <= 0.0 {
        return Err(Error::Domain(format!("dulac multiplier needs Z > 0, got {z}")));
    }
    let (n, p) = (regime.nf(), regime.p());
    let a = (3.0 - p) / (1.0 - p);
    Ok((n - 2.0) / (p - 1.0) * (regime.p_s() - p) * z.powf(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn regime() -> Regime {
        Regime::new(20, 1.5, 10.0).unwrap()
    }

    fn field(r: &Regime, chart: Chart, t: f64, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; chart.dim()];
        eval_field(r, chart, t, state, &mut out).unwrap();
        out
    }

    #[test]
    fn origin_is_critical() {
        let r = regime();
        let out = field(&r, Chart::FullPhase, 0.0, &[0.0, 0.0, 0.0]);
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn stationary_line_is_invariant() {
        let r = regime();
        let y = r.y_stat();
        let z0 = r.consts.z0;
        for x in [0.5, 1.0, 42.0, 1e5] {
            let out = field(&r, Chart::FullPhase, 0.0, &[x, y, z0]);
            assert_relative_eq!(out[0], 2.0 * x);
            assert!(out[1].abs() <= 1e-12 * x.max(z0), "Y' = {} at X = {x}", out[1]);
            assert!(out[2].abs() <= 1e-12 * z0 * 10.0, "Z' = {} at X = {x}", out[2]);
        }
    }

    #[test]
    fn coordinate_planes_are_exactly_invariant() {
        let r = regime();
        for (y, z) in [(0.3, 1.0), (-2.0, 5.5), (-0.1, 0.01)] {
            let out = field(&r, Chart::FullPhase, 0.0, &[0.0, y, z]);
            assert_eq!(out[0], 0.0);
            let out = field(&r, Chart::FullPhase, 0.0, &[z, y, 0.0]);
            assert_eq!(out[2], 0.0);
        }
    }

    #[test]
    fn plane_restrictions_match_full_field() {
        let r = regime();
        for (a, b) in [(0.7, 2.0), (-1.3, 0.4), (3.0, 0.02)] {
            let full = field(&r, Chart::FullPhase, 0.0, &[0.0, a, b]);
            let red = field(&r, Chart::PlaneX0, 0.0, &[a, b]);
            assert_eq!(full[1], red[0]);
            assert_eq!(full[2], red[1]);

            let full = field(&r, Chart::FullPhase, 0.0, &[a.abs(), b, 0.0]);
            let red = field(&r, Chart::PlaneZ0, 0.0, &[a.abs(), b]);
            assert_eq!(full[0], red[0]);
            assert_eq!(full[1], red[1]);
        }
    }

    #[test]
    fn w_plane_matches_inf_x_with_w_substitution() {
        // With w = x*z the second equation of the X-projection at x = 0
        // reads ydot = -y^2 + ((p-1)/(sigma+2)) y - w, and
        // wdot = (xz)dot = (p-1) y w at x = 0.
        let r = regime();
        for (y, w) in [(0.1, 0.5), (-0.4, 0.02), (2.0, 3.0)] {
            let red = field(&r, Chart::WPlane, 0.0, &[y, w]);
            let expect0 = -y * y + r.y_over_x_q5() * y - w;
            assert_relative_eq!(red[0], expect0, max_relative = 1e-15);
            assert_relative_eq!(red[1], (r.p() - 1.0) * y * w, max_relative = 1e-15);
        }
    }

    #[test]
    fn linearized_carries_tail_coefficients() {
        let r = regime();
        // y'' + A y' + B y - e^{2s} y'/2 = 0 with A = 155/9, B = 554.75/9.
        let out = field(&r, Chart::Linearized, 0.0, &[1.0, 0.0]);
        assert_relative_eq!(out[1], -554.75 / 9.0, max_relative = 1e-14);
        let out = field(&r, Chart::Linearized, 0.0, &[0.0, 1.0]);
        assert_relative_eq!(out[1], -155.0 / 9.0 + 0.5, max_relative = 1e-14);
    }

    #[test]
    fn g_equation_has_constant_solution_at_stationary_level() {
        let r = regime();
        let c = r.consts.c_sigma;
        for s in [-3.0, 0.0, 2.0] {
            let out = field(&r, Chart::GEquation, s, &[c, 0.0]);
            assert!(out[1].abs() < 1e-12 * c.max(1.0), "residual {} at s={s}", out[1]);
        }
    }

    #[test]
    fn phase_transform_round_trip() {
        let r = regime();
        let st = ProfileState { xi: 1.0, f: 1.0, fp: 0.0 };
        let pt = to_phase(&st, &r).unwrap();
        assert_relative_eq!(pt.x, 3.5 / 18.0, max_relative = 1e-15);
        assert_eq!(pt.y, 0.0);
        assert_relative_eq!(pt.z, 1.0);
        let (xi, f) = from_phase(&pt, &r).unwrap();
        assert_relative_eq!(xi, 1.0, max_relative = 1e-12);
        assert_relative_eq!(f, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn stationary_profile_maps_to_the_line() {
        let r = regime();
        let c = r.consts.c_sigma;
        let expo = -(r.sigma() + 2.0) / (r.p() - 1.0);
        for xi in [0.3f64, 1.0, 4.2] {
            let f = c * xi.powf(expo);
            let fp = expo * f / xi;
            let pt = to_phase(&ProfileState { xi, f, fp }, &r).unwrap();
            assert_relative_eq!(pt.y, r.y_stat(), max_relative = 1e-13);
            assert_relative_eq!(pt.z, r.consts.z0, max_relative = 1e-12);
            // Inverse direction: any point on the line recovers the amplitude.
            let (xi2, f2) = from_phase(&pt, &r).unwrap();
            assert_relative_eq!(f2 * xi2.powf(-expo), c, max_relative = 1e-12);
        }
    }

    #[test]
    fn from_phase_derived_example() {
        let r = regime();
        let pt = PhasePoint::new(1.0, r.y_stat(), r.consts.z0);
        let (xi, f) = from_phase(&pt, &r).unwrap();
        assert_relative_eq!(xi, (18.0f64 / 3.5).sqrt(), max_relative = 1e-13);
        let expo = -(r.sigma() + 2.0) / (r.p() - 1.0);
        assert_relative_eq!(f, r.consts.c_sigma * xi.powf(expo), max_relative = 1e-12);
    }

    #[test]
    fn chart_maps() {
        let pt = PhasePoint::new(1.0, 0.0, 0.0);
        assert_eq!(chart_x(&pt).unwrap(), (1.0, 0.0, 0.0));
        let pt = PhasePoint::new(0.0, -1.0, 0.0);
        assert_eq!(chart_y(&pt).unwrap(), (0.0, 0.0, -1.0));
        // Stationary line enters the X-projection origin as X grows.
        let r = regime();
        for x in [10.0, 1e3, 1e6] {
            let (cx, cy, cz) = chart_x(&PhasePoint::new(x, r.y_stat(), r.consts.z0)).unwrap();
            assert!(cx.abs() <= 1.0 / x && cy.abs() <= 1.0 / x && cz <= r.consts.z0 / x);
        }
        assert!(chart_x(&PhasePoint::new(0.0, 1.0, 1.0)).is_err());
        assert!(chart_y(&PhasePoint::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn dulac_examples() {
        let r = regime();
        // Supercritical p: strictly negative.
        assert!(dulac_divergence(-1.0, 0.7, &r).unwrap() < 0.0);
        assert_relative_eq!(
            dulac_divergence(0.0, 1.0, &r).unwrap(),
            -155.0 / 9.0,
            max_relative = 1e-13
        );
        // p = p_S: divergence vanishes identically.
        let ps = r.p_s();
        let rc = Regime::new(20, 1.5, ps).unwrap();
        assert_relative_eq!(dulac_divergence(1.0, 2.0, &rc).unwrap(), 0.0);
        assert!(dulac_divergence(0.0, 0.0, &r).is_err());
    }

    #[test]
    fn profile_field_rejects_singular_points() {
        let r = regime();
        let mut out = [0.0; 2];
        assert!(eval_field(&r, Chart::ProfileOde, 0.0, &[1.0, 0.0], &mut out).is_err());
        let rneg = Regime::new(8, -0.6, 20.0).unwrap();
        assert!(eval_field(&rneg, Chart::ProfileOde, 1e-9, &[1.0, 0.0], &mut out).is_err());
        assert!(eval_field(&rneg, Chart::ProfileOde, 1e-6, &[1.0, 0.0], &mut out).is_ok());
    }
}
