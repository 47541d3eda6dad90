//! Critical exponents, derived constants, and closed-form theory predictions
//! for the reaction term `|x|^sigma u^p` in dimension `N`.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;

/// A critical exponent that may be unbounded. Case splits in the theory are
/// on finiteness, so infinity is a tagged value rather than a float sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum Exponent {
    Finite(f64),
    Unbounded,
}

impl Exponent {
    pub fn is_unbounded(&self) -> bool {
        matches!(self, Exponent::Unbounded)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Exponent::Finite(v) => Some(*v),
            Exponent::Unbounded => None,
        }
    }

    /// Total comparison against a finite value: Unbounded exceeds everything.
    pub fn gt(&self, x: f64) -> bool {
        match self {
            Exponent::Finite(v) => *v > x,
            Exponent::Unbounded => true,
        }
    }

    pub fn le(&self, x: f64) -> bool {
        !self.gt(x)
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use Exponent::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Some(a.total_cmp(b)),
            (Finite(_), Unbounded) => Some(std::cmp::Ordering::Less),
            (Unbounded, Finite(_)) => Some(std::cmp::Ordering::Greater),
            (Unbounded, Unbounded) => Some(std::cmp::Ordering::Equal),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Unbounded => write!(f, "inf"),
        }
    }
}

impl From<Exponent> for String {
    fn from(e: Exponent) -> String {
        e.to_string()
    }
}

/// Validated problem parameters (N, sigma, p).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegimeParams {
    pub n: u32,
    pub sigma: f64,
    pub p: f64,
}

impl RegimeParams {
    pub fn new(n: u32, sigma: f64, p: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("dimension N={n} must be >= 3")));
        }
        if !(sigma > -2.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma={sigma} must lie in (-2, inf)")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p={p} must exceed 1")));
        }
        Ok(Self { n, sigma, p })
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    /// True when N > 10 + 4*sigma and p > p_JL(sigma): the regime in which
    /// the stationary point's contraction eigenvalues are real.
    pub fn supercritical_high_dim(&self) -> bool {
        if self.nf() <= 10.0 + 4.0 * self.sigma {
            return false;
        }
        p_joseph_lundgren(self.n, self.sigma)
            .ok()
            .and_then(|pjl| pjl.finite())
            .map_or(false, |v| self.p > v)
    }
}

/// Constants derived from (N, sigma, p): the similarity exponent, the
/// stationary amplitude, its phase-space level, and the two coefficients of
/// the linearized tail equation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub c_sigma: f64,
    pub z0: f64,
    pub a: f64,
    pub b: f64,
}

/// Sobolev critical exponent.
pub fn p_sobolev(n: u32, sigma: f64) -> Result<Exponent> {
    if !(sigma > -2.0) {
        return Err(Error::Domain(format!("sigma={sigma} must exceed -2")));
    }
    if n < 1 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    if n <= 2 {
        return Ok(Exponent::Unbounded);
    }
    let nf = f64::from(n);
    Ok(Exponent::Finite((nf + 2.0 * sigma + 2.0) / (nf - 2.0)))
}

/// Joseph-Lundgren exponent. Both printed forms are evaluated and
/// cross-checked; they are algebraically identical via
/// (N+sigma)^2 - (N-2)^2 = (2N+sigma-2)(sigma+2).
pub fn p_joseph_lundgren(n: u32, sigma: f64) -> Result<Exponent> {
    if n < 3 || !(sigma > -2.0) {
        return Err(Error::Domain(format!(
            "p_JL requires N >= 3 and sigma > -2 (got N={n}, sigma={sigma})"
        )));
    }
    let nf = f64::from(n);
    if nf <= 10.0 + 4.0 * sigma {
        return Ok(Exponent::Unbounded);
    }
    let s2 = sigma + 2.0;
    let rad = (nf + sigma).powi(2) - (nf - 2.0).powi(2);
    let form1 = ((nf - 2.0).powi(2) - 2.0 * (nf + sigma) * s2 + 2.0 * s2 * rad.sqrt())
        / ((nf - 2.0) * (nf - 10.0 - 4.0 * sigma));
    let form2 = 1.0 + 2.0 * s2 / (nf - 4.0 - sigma - ((2.0 * nf + sigma - 2.0) * s2).sqrt());
    let rel = (form1 - form2).abs() / form1.abs().max(1.0);
    if rel > 1e-11 {
        return Err(Error::Domain(format!(
            "p_JL forms disagree: {form1} vs {form2} (rel {rel:.3e})"
        )));
    }
    Ok(Exponent::Finite(form1))
}

/// Threshold for the gap inequality A - sqrt(A^2 - 4B) > 4*(level+1),
/// written as a condition on p. `Finite(v)` with positive leading
/// coefficient means the inequality holds for p > v (v may lie below p_S,
/// in which case it holds throughout the supercritical range); with
/// negative leading coefficient the inequality holds for p < v, making v a
/// genuine upper (Lepin-type) threshold. `Unbounded` means it holds for
/// every admissible p.
fn lepin_level(n: u32, sigma: f64, level: u32) -> LepinThreshold {
    let nf = f64::from(n);
    let j = f64::from(level);
    let lead = (nf - 2.0) * (sigma - 2.0 * j) + 4.0 * (j + 1.0) * (j + 1.0);
    let rhs = (sigma + 2.0) * (sigma - 4.0 * j - 2.0);
    if lead > 0.0 {
        LepinThreshold::LowerBound(1.0 + rhs / lead)
    } else if lead < 0.0 {
        LepinThreshold::UpperBound(1.0 + rhs / lead)
    } else if rhs < 0.0 {
        LepinThreshold::Always
    } else {
        LepinThreshold::Never
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LepinThreshold {
    /// Inequality holds for p above the value (unconditional in practice).
    LowerBound(f64),
    /// Inequality holds for p strictly below the value.
    UpperBound(f64),
    Always,
    Never,
}

/// Lepin-type exponent of multiplicity level `j >= 1`. For sigma in (0,2)
/// and j=1 this is the generalized Lepin exponent; for sigma in (-2,0) it is
/// the barred variant; for sigma >= 2j the returned finite value lies below
/// p_S, signalling that the corresponding gap inequality holds for every
/// supercritical p.
pub fn p_lepin(n: u32, sigma: f64, j: u32) -> Result<Exponent> {
    if !(sigma > -2.0) {
        return Err(Error::Domain(format!("sigma={sigma} must exceed -2")));
    }
    if j == 0 {
        return Err(Error::Domain("multiplicity level j must be >= 1".into()));
    }
    if n < 3 {
        return Err(Error::Domain("dimension must be >= 3".into()));
    }
    let threshold = if sigma < 0.0 {
        if j != 1 {
            return Err(Error::Domain(
                "for sigma in (-2,0) only the base level j=1 is defined".into(),
            ));
        }
        // Two-zero condition A - sqrt(A^2-4B) > 4.
        lepin_level(n, sigma, 0)
    } else {
        lepin_level(n, sigma, j)
    };
    Ok(match threshold {
        // A genuine upper threshold: existence proved only below it.
        LepinThreshold::UpperBound(v) => Exponent::Finite(v),
        // A lower bound means the gap inequality holds throughout the
        // supercritical range. For sigma >= 2j the value itself (below p_S)
        // is the conventional closed form; otherwise the threshold is
        // vacuous and the Lepin-type exponent is unbounded.
        LepinThreshold::LowerBound(v) => {
            if sigma >= 2.0 * f64::from(j) {
                Exponent::Finite(v)
            } else {
                Exponent::Unbounded
            }
        }
        LepinThreshold::Always | LepinThreshold::Never => Exponent::Unbounded,
    })
}

/// True when the gap inequality of the given level holds at these exact
/// parameters (used by the multiplicity predictor).
fn gap_inequality_holds(params: &RegimeParams, level: u32) -> bool {
    match lepin_level(params.n, params.sigma, level) {
        LepinThreshold::LowerBound(v) => params.p > v,
        LepinThreshold::UpperBound(v) => params.p < v,
        LepinThreshold::Always => true,
        LepinThreshold::Never => false,
    }
}

/// Derived constants for a parameter set with (N-2)p > N+sigma.
pub fn profile_constants(params: &RegimeParams) -> Result<DerivedConstants> {
    let (nf, sigma, p) = (params.nf(), params.sigma, params.p);
    let pm1 = p - 1.0;
    let s2 = sigma + 2.0;
    let num = p * (nf - 2.0) - (nf + sigma);
    if num <= 0.0 {
        return Err(Error::Domain(format!(
            "stationary amplitude undefined: (N-2)p <= N+sigma at N={}, sigma={sigma}, p={p}",
            params.n
        )));
    }
    let z0 = s2 * num / (pm1 * pm1);
    Ok(DerivedConstants {
        alpha: s2 / (2.0 * pm1),
        c_sigma: z0.powf(1.0 / pm1),
        z0,
        a: nf - 2.0 - 2.0 * s2 / pm1,
        b: s2 * (nf - 2.0 - s2 / pm1),
    })
}

/// Validated parameters together with their derived constants; the working
/// context for every dynamical computation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regime {
    pub params: RegimeParams,
    pub consts: DerivedConstants,
}

impl Regime {
    pub fn new(n: u32, sigma: f64, p: f64) -> Result<Self> {
        let params = RegimeParams::new(n, sigma, p)?;
        let consts = profile_constants(&params)?;
        Ok(Self { params, consts })
    }

    pub fn nf(&self) -> f64 {
        self.params.nf()
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn p(&self) -> f64 {
        self.params.p
    }

    /// Logarithmic slope of the stationary solution: Y = -(sigma+2)/(p-1).
    pub fn y_stat(&self) -> f64 {
        -(self.sigma() + 2.0) / (self.p() - 1.0)
    }

    /// Slope (p-1)/(sigma+2) of the Y/X ratio at the fast critical point at
    /// infinity.
    pub fn y_over_x_q5(&self) -> f64 {
        (self.p() - 1.0) / (self.sigma() + 2.0)
    }

    pub fn p_s(&self) -> f64 {
        (self.nf() + 2.0 * self.sigma() + 2.0) / (self.nf() - 2.0)
    }
}

/// Gap statistics of the linearized tail equation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapReport {
    pub discriminant: f64,
    /// A - sqrt(A^2 - 4B), defined when the discriminant is nonnegative.
    pub gap: Option<f64>,
    /// Predicted zero count of the tail-normalized linearized solution:
    /// j+2 where 4(j+1) < gap <= 4(j+2), and 1 when gap <= 4.
    pub zero_count: Option<u32>,
    /// Whether the base existence inequality gap > 8 holds.
    pub existence: bool,
}

/// Gap of the linearized equation and the zero-count bracket it implies.
pub fn lepin_gap(regime: &Regime) -> GapReport {
    let (a, b) = (regime.consts.a, regime.consts.b);
    let disc = a * a - 4.0 * b;
    if disc < 0.0 {
        return GapReport {
            discriminant: disc,
            gap: None,
            zero_count: None,
            existence: false,
        };
    }
    let gap = a - disc.sqrt();
    let zero_count = if gap <= 4.0 {
        1
    } else {
        (gap / 4.0).ceil() as u32
    };
    GapReport {
        discriminant: disc,
        gap: Some(gap),
        zero_count: Some(zero_count),
        existence: gap > 8.0,
    }
}

/// Full closed-form prediction for one parameter set.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryPrediction {
    pub p_s: Exponent,
    pub p_jl: Exponent,
    /// p_L(sigma) for sigma >= 0, the barred variant for sigma < 0.
    pub p_l: Exponent,
    pub gap: GapReport,
    /// Lower bound on the number of distinct profiles guaranteed by theory;
    /// 0 means no theorem applies.
    pub multiplicity_lower_bound: u32,
    /// Set when the parameters lie in the range where non-existence is
    /// conjectured (p at or beyond the Lepin-type threshold).
    pub nonexistence_conjectured: bool,
    /// Set for sigma in (-2,0) when N violates the dimensional hypothesis
    /// N >= 2(2-sigma)/(sigma+2) of the existence theorem.
    pub outside_theorem_hypotheses: bool,
}

/// Largest k such that sigma >= 4k-2, i.e. the guaranteed multiplicity for
/// sigma >= 2 (each level k corresponds to the gap inequality of level 2k-1).
fn multiplicity_from_sigma(sigma: f64) -> u32 {
    if sigma < 2.0 {
        0
    } else {
        ((sigma + 2.0) / 4.0).floor() as u32
    }
}

pub fn predict(regime: &Regime) -> Result<TheoryPrediction> {
    let params = &regime.params;
    let p_s = p_sobolev(params.n, params.sigma)?;
    let p_jl = p_joseph_lundgren(params.n, params.sigma)?;
    let p_l = p_lepin(params.n, params.sigma, 1)?;
    let gap = lepin_gap(regime);
    let above_jl = !p_jl.gt(params.p);

    let sigma = params.sigma;
    let mut outside = false;
    let multiplicity = if !above_jl {
        0
    } else if sigma >= 2.0 {
        // Every guaranteed level k satisfies the gap inequality of level
        // 2k-1 unconditionally; double-checked against the closed form.
        let k = multiplicity_from_sigma(sigma);
        debug_assert!(k == 0 || gap_inequality_holds(params, 2 * k - 1));
        k
    } else if sigma > 0.0 {
        u32::from(p_l.gt(params.p))
    } else {
        // sigma in (-2, 0): the existence theorem also needs
        // N >= 2(2 - sigma)/(sigma + 2).
        if params.nf() < 2.0 * (2.0 - sigma) / (sigma + 2.0) {
            outside = true;
            0
        } else {
            u32::from(p_l.gt(params.p))
        }
    };

    let nonexistence_conjectured = sigma < 2.0 && above_jl && !p_l.gt(params.p);

    Ok(TheoryPrediction {
        p_s,
        p_jl,
        p_l,
        gap,
        multiplicity_lower_bound: multiplicity,
        nonexistence_conjectured,
        outside_theorem_hypotheses: outside,
    })
}
