//! Profile reconstruction from phase trajectories, direct integration of the
//! profile equation as an independent oracle, tail and intersection
//! diagnostics, the linearized zero-count oracle, and evaluation of the
//! space-time solution.

use crate::dynsys::{from_phase, Chart};
use crate::error::{Error, Result};
use crate::exponents::Regime;
use crate::integrator::{
    integrate, Controls, Crossing, EventKind, EventSpec, Terminal, Thresholds, TimeDirection,
    Trajectory,
};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntersectionCount {
    /// The weighted profile coincides with the stationary level everywhere.
    Identical,
    Count(u32),
}

/// A radial profile: ordered (xi, f, f') samples plus tail and origin
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub samples: Vec<(f64, f64, f64)>,
    /// Second derivative at each sample, carried through from the source
    /// route (phase map or profile field).
    pub fpp: Vec<f64>,
    /// Origin value extrapolated through the appropriate origin series.
    pub f0: Option<f64>,
    /// Tail amplitude estimate from the largest-xi sample.
    pub tail_k: f64,
    pub intersections: IntersectionCount,
    pub monotone_decreasing: bool,
    /// Whether the large-xi end of the source trajectory is a genuine tail
    /// (seeded on the center manifold or terminated by the strip criterion).
    pub tail_qualified: bool,
}

impl Profile {
    pub fn xi_range(&self) -> (f64, f64) {
        (self.samples.first().unwrap().0, self.samples.last().unwrap().0)
    }

    /// Weighted value g = xi^((sigma+2)/(p-1)) f at sample index i.
    pub fn g_at(&self, i: usize, regime: &Regime) -> f64 {
        let (xi, f, _) = self.samples[i];
        xi.powf((regime.sigma() + 2.0) / (regime.p() - 1.0)) * f
    }
}

/// Count sign changes of g - C(sigma) over the samples; detects the
/// degenerate case where the profile is the stationary one.
pub fn count_stationary_intersections(profile: &Profile, regime: &Regime) -> IntersectionCount {
    let c = regime.consts.c_sigma;
    let scale = c.abs().max(1.0);
    let mut sup = 0.0f64;
    let mut count = 0u32;
    let mut prev: Option<f64> = None;
    for i in 0..profile.samples.len() {
        let d = profile.g_at(i, regime) - c;
        sup = sup.max(d.abs());
        if let Some(p) = prev {
            if p * d < 0.0 {
                count += 1;
            }
        }
        if d != 0.0 {
            prev = Some(d);
        }
    }
    if sup < 1e-9 * scale {
        IntersectionCount::Identical
    } else {
        IntersectionCount::Count(count)
    }
}

fn build_profile(
    points: Vec<(f64, f64, f64)>,
    fpp: Vec<f64>,
    regime: &Regime,
    tail_qualified: bool,
) -> Result<Profile> {
    if points.len() < 2 {
        return Err(Error::Domain("profile needs at least two samples".into()));
    }
    debug_assert_eq!(points.len(), fpp.len());
    let sigma = regime.sigma();
    let p = regime.p();
    let n = regime.nf();
    let (xi_min, f_min, _) = points[0];
    let f0 = if sigma > 0.0 {
        Some(f_min * (-(sigma + 2.0) * xi_min * xi_min / (4.0 * n * (p - 1.0))).exp())
    } else if sigma < 0.0 {
        let k0 = f_min.powf(1.0 - p)
            - (p - 1.0) * xi_min.powf(sigma + 2.0) / ((n + sigma) * (sigma + 2.0));
        (k0 > 0.0).then(|| k0.powf(-1.0 / (p - 1.0)))
    } else {
        Some(f_min)
    };
    let (xi_max, f_max, _) = *points.last().unwrap();
    let tail_k = xi_max.powf((sigma + 2.0) / (p - 1.0)) * f_max;
    let monotone = points.windows(2).all(|w| w[1].1 < w[0].1);
    let mut profile = Profile {
        samples: points,
        fpp,
        f0,
        tail_k,
        intersections: IntersectionCount::Count(0),
        monotone_decreasing: monotone,
        tail_qualified,
    };
    profile.intersections = count_stationary_intersections(&profile, regime);
    Ok(profile)
}

/// Map a full-phase trajectory through the inverse phase transform,
/// producing samples ordered by increasing xi. Every sample must have X > 0.
pub fn reconstruct_profile(traj: &Trajectory, regime: &Regime) -> Result<Profile> {
    reconstruct_profile_prefix(traj, regime, traj.samples.len())
}

/// As `reconstruct_profile`, keeping only the first `len` samples in march
/// order (used to drop the portion of a shot past its trust horizon).
pub fn reconstruct_profile_prefix(traj: &Trajectory, regime: &Regime, len: usize) -> Result<Profile> {
    if traj.chart != Chart::FullPhase {
        return Err(Error::Domain(format!(
            "profile reconstruction needs the full phase chart, got {:?}",
            traj.chart
        )));
    }
    let len = len.min(traj.samples.len());
    let n = regime.nf();
    let ratio = (regime.p() - 1.0) / (regime.sigma() + 2.0);
    let mut points = Vec::with_capacity(len);
    let mut fpp = Vec::with_capacity(len);
    for (_, s) in &traj.samples[..len] {
        if s[0] <= 0.0 || s[2] < 0.0 {
            return Err(Error::Domain(
                "trajectory leaves the X > 0, Z >= 0 region; cannot invert the phase map".into(),
            ));
        }
        if s[2] == 0.0 {
            continue;
        }
        let (x, y, z) = (s[0], s[1], s[2]);
        let pt = crate::dynsys::PhasePoint::new(x, y, z);
        let (xi, f) = from_phase(&pt, regime)?;
        points.push((xi, f, y * f / xi));
        // f'' carried through the change of variables: with Y' from the
        // phase field, f'' = f (Y' + Y^2 - Y) / xi^2.
        let yp = x - (n - 2.0) * y - z - y * y + ratio * x * y;
        fpp.push(f * (yp + y * y - y) / (xi * xi));
    }
    if traj.direction == TimeDirection::Backward {
        points.reverse();
        fpp.reverse();
    }
    let tail_qualified =
        traj.direction == TimeDirection::Backward || traj.terminal == Terminal::HitQ1;
    build_profile(points, fpp, regime, tail_qualified)
}

/// Tail diagnostics of a profile whose large-xi end is a genuine tail.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailReport {
    /// Amplitude from the last sample.
    pub k: f64,
    /// Mean of the weighted profile over the last decade of xi.
    pub k_mean_last_decade: f64,
    /// xi^((sigma+2)/(p-1)+1) f'(xi) at the last sample; the tail law gives
    /// -(sigma+2)/(p-1) * K in the limit.
    pub derivative_limit: f64,
}

pub fn tail_constant(profile: &Profile, regime: &Regime) -> Result<TailReport> {
    if !profile.tail_qualified {
        return Err(Error::Domain(
            "profile's large-xi end is not a tail (no center-manifold seed or strip terminal)".into(),
        ));
    }
    let expo = (regime.sigma() + 2.0) / (regime.p() - 1.0);
    let (xi_max, _, fp_last) = *profile.samples.last().unwrap();
    let k = profile.tail_k;
    let lo = xi_max / 10.0;
    let mut sum = 0.0;
    let mut cnt = 0usize;
    for i in 0..profile.samples.len() {
        if profile.samples[i].0 >= lo {
            sum += profile.g_at(i, regime);
            cnt += 1;
        }
    }
    let mean = sum / cnt.max(1) as f64;
    if (mean - k).abs() > 0.01 * k.abs().max(1e-12) {
        return Err(Error::Domain(format!(
            "tail not converged: last-sample amplitude {k} vs last-decade mean {mean}"
        )));
    }
    Ok(TailReport {
        k,
        k_mean_last_decade: mean,
        derivative_limit: xi_max.powf(expo + 1.0) * fp_last,
    })
}

/// Outcome of a direct shot of the profile equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProfileFate {
    /// f reached zero at finite xi with the recorded slope.
    Vanished { xi0: f64, slope: f64 },
    /// f positive and decreasing through the end of the span.
    Decay,
    /// f increasing at the end of the span (slow-tail side).
    Growth,
}

/// Integrate the profile equation directly from the origin series at f0, as
/// an oracle independent of the phase-space route.
pub fn direct_shoot_ssode(
    f0: f64,
    regime: &Regime,
    xi_end: f64,
    controls: &Controls,
) -> Result<(Profile, ProfileFate)> {
    if f0 <= 0.0 {
        return Err(Error::Domain(format!("direct shot needs f0 > 0, got {f0}")));
    }
    let sigma = regime.sigma();
    let p = regime.p();
    let n = regime.nf();
    let (xi0, f, fp) = if sigma > 0.0 {
        let xi0 = 1e-4;
        let grow = ((sigma + 2.0) * xi0 * xi0 / (4.0 * n * (p - 1.0))).exp();
        let f = f0 * grow;
        (xi0, f, f * (sigma + 2.0) * xi0 / (2.0 * n * (p - 1.0)))
    } else if sigma < 0.0 {
        let k = f0.powf(1.0 - p);
        let cc = (p - 1.0) / ((n + sigma) * (sigma + 2.0));
        let t = (1e-6f64).powf(sigma + 2.0).min(crate::local::SEED_SERIES_CAP * k / cc);
        let xi0 = t.powf(1.0 / (sigma + 2.0));
        let base = k + cc * t;
        let f = base.powf(-1.0 / (p - 1.0));
        (xi0, f, -xi0.powf(sigma + 1.0) * base.powf(-p / (p - 1.0)) / (n + sigma))
    } else {
        let xi0 = 1e-4;
        (xi0, f0, f0 * (sigma + 2.0) * xi0 / (2.0 * n * (p - 1.0)))
    };

    let vanish = EventSpec::new(
        EventKind::Custom {
            label: "fzero".into(),
            f: Arc::new(|_t: f64, s: &[f64]| s[0]),
        },
        Crossing::Down,
    )
    .stop_after(1);

    let mut ctl = *controls;
    ctl.max_span = xi_end - xi0;
    let traj = integrate(
        regime,
        Chart::ProfileOde,
        &[f, fp],
        xi0,
        TimeDirection::Forward,
        &[vanish],
        &ctl,
        &Thresholds::default(),
    )?;

    // Route classification: an excursion with xi f'/f beyond +1 past the
    // origin hump is the slow-tail (grow-up) side even if f eventually
    // vanishes much further out; a vanishing before any such excursion is
    // the steep side; otherwise the profile decays through the span.
    let stop = traj.events.first().map(|e| e.t).unwrap_or(f64::INFINITY);
    let mut fate = ProfileFate::Decay;
    for (t, s) in &traj.samples {
        if *t > 1.0 && s[0] > 0.0 && *t * s[1] / s[0] > 1.0 {
            fate = ProfileFate::Growth;
            break;
        }
        if *t >= stop || s[0] <= 0.0 {
            if let Some(ev) = traj.events.first() {
                fate = ProfileFate::Vanished {
                    xi0: ev.t,
                    slope: ev.state[1],
                };
            }
            break;
        }
    }

    // Collect samples up to the vanishing point or growth excursion.
    let mut points = Vec::with_capacity(traj.samples.len());
    let mut fpp = Vec::with_capacity(traj.samples.len());
    let alpha = regime.consts.alpha;
    for (t, s) in &traj.samples {
        if *t > stop || s[0] <= 0.0 {
            break;
        }
        points.push((*t, s[0], s[1]));
        fpp.push(
            -(n - 1.0) / t * s[1] + 0.5 * t * s[1] + alpha * s[0]
                - t.powf(sigma) * s[0].abs().powf(p) * s[0].signum(),
        );
    }
    let profile = build_profile(points, fpp, regime, fate == ProfileFate::Decay)?;
    Ok((profile, fate))
}

/// Result of the zero-count oracle for the linearized tail equation.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroCountReport {
    pub zeros: u32,
    /// Set when a sign change fell within one unit of the lower end of the
    /// integration window (the window may be too short).
    pub warning: Option<String>,
}

/// Integrate y'' + A y' + B y - e^{2s} y'/2 = 0 backward from s_max with the
/// tail normalization y -> K, counting sign changes of y down to s_min. The
/// equation is linear, so the state is renormalized whenever it grows past
/// 1e100.
pub fn linear_zero_count(regime: &Regime, k: f64, s_max: f64, s_min: f64) -> Result<ZeroCountReport> {
    if k <= 0.0 {
        return Err(Error::Domain(format!("tail constant must be positive, got {k}")));
    }
    let (a, b) = (regime.consts.a, regime.consts.b);
    if a * a <= 4.0 * b {
        return Err(Error::Domain(
            "zero-count bracket needs A^2 > 4B (p above the Joseph-Lundgren exponent)".into(),
        ));
    }
    let mut s = s_max;
    let mut state = [k, 2.0 * b * k * (-2.0 * s_max).exp()];
    let mut zeros = 0u32;
    let mut last_zero_s = f64::INFINITY;
    let zero = EventSpec::new(
        EventKind::Custom {
            label: "yzero".into(),
            f: Arc::new(|_t: f64, st: &[f64]| st[0]),
        },
        Crossing::Any,
    );
    let controls = Controls {
        rtol: 1e-10,
        atol: 1e-14,
        max_span: 2.0,
        max_steps: 400_000,
        ..Controls::default()
    };
    while s > s_min {
        let seg = (s - s_min).min(2.0);
        let mut ctl = controls;
        ctl.max_span = seg;
        let traj = integrate(
            regime,
            Chart::Linearized,
            &state,
            s,
            TimeDirection::Backward,
            &[zero.clone()],
            &ctl,
            &Thresholds::default(),
        )?;
        zeros += traj.event_count(0);
        if let Some(e) = traj.events.last() {
            last_zero_s = last_zero_s.min(e.t);
        }
        let last = traj.samples.last().unwrap();
        s = last.0;
        state = [last.1[0], last.1[1]];
        let m = state[0].abs().max(state[1].abs());
        if m > 1e100 {
            state[0] /= m;
            state[1] /= m;
        }
        if traj.terminal == Terminal::StepFailure {
            return Err(Error::Domain(format!("zero-count integration stalled at s = {s}")));
        }
    }
    let warning = (last_zero_s < s_min + 1.0).then(|| {
        format!("sign change at s = {last_zero_s:.3} within one unit of the window end {s_min}")
    });
    Ok(ZeroCountReport { zeros, warning })
}

/// Evaluate the space-time solution u(x, t) = (T-t)^(-alpha) f(|x| (T-t)^(-1/2))
/// by cubic Hermite interpolation on the profile samples, with the origin
/// series below the first sample and the power tail beyond the last.
pub fn evaluate_solution(
    profile: &Profile,
    regime: &Regime,
    x_norm: f64,
    t: f64,
    t_blowup: f64,
) -> Result<f64> {
    if t >= t_blowup {
        return Err(Error::Domain(format!(
            "solution is defined for t < T = {t_blowup}, got t = {t}"
        )));
    }
    if x_norm < 0.0 {
        return Err(Error::Domain("x_norm must be nonnegative".into()));
    }
    let tau = t_blowup - t;
    let xi = x_norm * tau.powf(-0.5);
    let f = profile_value(profile, regime, xi)?;
    Ok(tau.powf(-regime.consts.alpha) * f)
}

/// f(xi) from the sampled profile with series/tail continuation.
pub fn profile_value(profile: &Profile, regime: &Regime, xi: f64) -> Result<f64> {
    let sigma = regime.sigma();
    let p = regime.p();
    let n = regime.nf();
    let (xi_lo, xi_hi) = profile.xi_range();
    if xi >= xi_hi {
        // Power-law tail with the fitted amplitude.
        return Ok(profile.tail_k * xi.powf(-(sigma + 2.0) / (p - 1.0)));
    }
    if xi < xi_lo {
        let f0 = profile.f0.ok_or_else(|| {
            Error::Domain("profile has no origin extrapolation for xi below its samples".into())
        })?;
        if sigma > 0.0 || sigma == 0.0 {
            return Ok(f0 * ((sigma + 2.0) * xi * xi / (4.0 * n * (p - 1.0))).exp());
        }
        let k0 = f0.powf(1.0 - p);
        let cc = (p - 1.0) / ((n + sigma) * (sigma + 2.0));
        return Ok((k0 + cc * xi.powf(sigma + 2.0)).powf(-1.0 / (p - 1.0)));
    }
    // Binary search for the bracketing samples, then cubic Hermite.
    let samples = &profile.samples;
    let mut lo = 0usize;
    let mut hi = samples.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if samples[mid].0 <= xi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x0, f0, d0) = samples[lo];
    let (x1, f1, d1) = samples[hi];
    let h = x1 - x0;
    if h <= 0.0 {
        return Ok(f0);
    }
    let th = (xi - x0) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    Ok((2.0 * th3 - 3.0 * th2 + 1.0) * f0
        + (th3 - 2.0 * th2 + th) * h * d0
        + (-2.0 * th3 + 3.0 * th2) * f1
        + (th3 - th2) * h * d1)
}

/// Maximum scaled residual of the profile equation over the samples, using
/// the carried second derivative. For a phase-route profile this checks the
/// equivalence of the autonomous system with the profile equation.
pub fn ssode_residual_max(profile: &Profile, regime: &Regime) -> f64 {
    let n = regime.nf();
    let sigma = regime.sigma();
    let p = regime.p();
    let alpha = regime.consts.alpha;
    let mut worst = 0.0f64;
    for (i, &(xi, f, fp)) in profile.samples.iter().enumerate() {
        let fpp = profile.fpp[i];
        let res = fpp + (n - 1.0) / xi * fp - 0.5 * xi * fp - alpha * f
            + xi.powf(sigma) * f.abs().powf(p) * f.signum();
        worst = worst.max(res.abs() / fpp.abs().max(1.0));
    }
    worst
}

/// Maximum scaled residual of the weighted-profile equation
/// g'' + A g' - B/(p-1) g + g^p - e^{2s} g'/2 = 0 along the profile. The
/// derivatives of g(s) = e^{a s} f(e^s) follow from the carried f' and f'':
/// checks the change of variable and the coefficient pair.
pub fn g_equation_residual_max(profile: &Profile, regime: &Regime) -> f64 {
    let (a_coef, b_coef) = (regime.consts.a, regime.consts.b);
    let p = regime.p();
    let a = (regime.sigma() + 2.0) / (p - 1.0);
    let mut worst = 0.0f64;
    for (i, &(xi, f, fp)) in profile.samples.iter().enumerate() {
        let fpp = profile.fpp[i];
        let w = xi.powf(a);
        let g = w * f;
        let gp = w * (a * f + xi * fp);
        let gpp = w * (a * a * f + (2.0 * a + 1.0) * xi * fp + xi * xi * fpp);
        let res = gpp + a_coef * gp - b_coef / (p - 1.0) * g + g.abs().powf(p) * g.signum()
            - 0.5 * xi * xi * gp;
        let scale = (b_coef / (p - 1.0) * g).abs().max(gpp.abs()).max(1.0);
        worst = worst.max(res.abs() / scale);
    }
    worst
}
