//! Problem instances: per-site laws, utilities, costs, and the exact payoff.
//!
//! A [`ProblemSpec`] holds two [`SiteModel`]s and a horizon `t0`. Site 1 is
//! fished from time 0 until the switch time `s`; site 2 from `s` until the
//! quit time `t`. The realised payoff is
//!
//! ```text
//! Z(s, t) = g1(M_t) - c1(t)                              t < s <= t0
//!         = g1(M_s) - c1(s) + g2(M_t - M_s) - c2(t - s)  s <= t <= t0
//!         = -C                                           t > t0
//! ```
//!
//! with `C = C1 + C2` the sum of the cost bounds over `[0, t0]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Probability mass beyond the practical upper support cut-off of an
/// unbounded law.
const TAIL_CUTOFF: f64 = 1e-14;

/// Catalog of continuous laws on `[0, inf)`.
///
/// Used both for inter-arrival times (time units) and catch sizes (mass
/// units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl DistributionSpec {
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            DistributionSpec::Exponential { rate } => -(-rate * x).exp_m1(),
            DistributionSpec::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
            DistributionSpec::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            DistributionSpec::Gamma { shape, rate } => gamma_lr(shape, rate * x),
        }
    }

    /// Survival function `1 - F(x)`, computed without cancellation where the
    /// closed form allows it.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            DistributionSpec::Exponential { rate } => (-rate * x).exp(),
            DistributionSpec::Weibull { shape, scale } => (-(x / scale).powf(shape)).exp(),
            DistributionSpec::Uniform { .. } => 1.0 - self.cdf(x),
            DistributionSpec::Gamma { shape, rate } => gamma_ur(shape, rate * x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            DistributionSpec::Exponential { rate } => rate * (-rate * x).exp(),
            DistributionSpec::Weibull { shape, scale } => {
                if x == 0.0 {
                    return match shape {
                        k if k < 1.0 => f64::INFINITY,
                        k if k == 1.0 => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                let z = x / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            DistributionSpec::Uniform { low, high } => {
                if x >= low && x <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            DistributionSpec::Gamma { shape, rate } => {
                if x == 0.0 {
                    return match shape {
                        k if k < 1.0 => f64::INFINITY,
                        k if k == 1.0 => rate,
                        _ => 0.0,
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
        }
    }

    /// Inverse cdf on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            DistributionSpec::Exponential { rate } => -(-u).ln_1p() / rate,
            DistributionSpec::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            DistributionSpec::Uniform { low, high } => low + u * (high - low),
            DistributionSpec::Gamma { shape, rate } => gamma_quantile(shape, u) / rate,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
            DistributionSpec::Uniform { low, high } => 0.5 * (low + high),
            DistributionSpec::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => 1.0 / (rate * rate),
            DistributionSpec::Weibull { shape, scale } => {
                let m1 = gamma(1.0 + 1.0 / shape);
                scale * scale * (gamma(1.0 + 2.0 / shape) - m1 * m1)
            }
            DistributionSpec::Uniform { low, high } => (high - low).powi(2) / 12.0,
            DistributionSpec::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    /// Lower end of the support and the point beyond which at most
    /// `1e-14` of the mass lies.
    pub fn effective_support(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::Uniform { low, high } => (low, high),
            _ => (0.0, self.quantile(1.0 - TAIL_CUTOFF)),
        }
    }

    /// Points in `(0, inf)` where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            DistributionSpec::Uniform { low, high } => {
                if low > 0.0 {
                    vec![low, high]
                } else {
                    vec![high]
                }
            }
            _ => Vec::new(),
        }
    }

    /// Breakpoints for quadrature over `[0, scale]`-sized panels: the
    /// density's kinks plus, when the density is not smooth at 0, a dyadic
    /// grading `scale * 2^-j` towards the origin.
    pub fn quadrature_breaks(&self, scale: f64) -> Vec<f64> {
        let mut out = self.breakpoints();
        if !self.is_smooth_at_zero() {
            out.extend((1..=40).map(|j| scale * 0.5f64.powi(j)));
        }
        out.sort_by(f64::total_cmp);
        out
    }

    fn is_smooth_at_zero(&self) -> bool {
        let integral = |k: f64| k.fract() == 0.0;
        match *self {
            DistributionSpec::Exponential { .. } | DistributionSpec::Uniform { .. } => true,
            DistributionSpec::Weibull { shape, .. } | DistributionSpec::Gamma { shape, .. } => integral(shape),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, DistributionSpec::Exponential { .. })
    }

    /// The constant hazard rate of an exponential law.
    pub fn exponential_rate(&self) -> Option<f64> {
        match *self {
            DistributionSpec::Exponential { rate } => Some(rate),
            _ => None,
        }
    }

    fn check(&self, role: &str, out: &mut Vec<Diagnostic>) {
        let ok = match *self {
            DistributionSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            DistributionSpec::Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            DistributionSpec::Uniform { low, high } => low >= 0.0 && high > low && high.is_finite(),
            DistributionSpec::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
        };
        if !ok {
            out.push(Diagnostic::error(
                "bad-distribution",
                format!("{role}: parameters out of range in {self:?}"),
            ));
        }
    }
}

/// Standard-gamma quantile by safeguarded Newton iteration on the cdf.
fn gamma_quantile(shape: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    // Wilson-Hilferty start
    let z = normal_quantile(u);
    let c = 1.0 / (9.0 * shape);
    let mut x = (shape * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-3 * shape.min(1.0));
    if shape < 1.0 {
        // small-x series: F(x) ~ x^k / Gamma(k+1)
        let guess = (u * gamma(shape + 1.0)).powf(1.0 / shape);
        if guess < x {
            x = guess;
        }
    }
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let ln_g = ln_gamma(shape);
    for _ in 0..100 {
        let f = gamma_lr(shape, x) - u;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dens = ((shape - 1.0) * x.ln() - x - ln_g).exp();
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1e-300) };
        }
        if (next - x).abs() <= 1e-14 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Acklam's rational approximation, accurate to ~1e-9; only used to seed
/// Newton.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Utility of the accumulated catch, `g: [0, inf) -> [0, G]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// `g(x) = slope * x`. Unbounded; the solver's mass truncation bounds it
    /// in practice.
    Linear { slope: f64 },
    /// `g(x) = bound * (1 - exp(-rate * x))`.
    SaturatingExp { bound: f64, rate: f64 },
    /// `g(x) = min(scale * x^exponent, cap)`.
    PowerCapped { scale: f64, exponent: f64, cap: f64 },
}

impl UtilitySpec {
    pub fn value(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match *self {
            UtilitySpec::Linear { slope } => slope * x,
            UtilitySpec::SaturatingExp { bound, rate } => -bound * (-rate * x).exp_m1(),
            UtilitySpec::PowerCapped { scale, exponent, cap } => (scale * x.powf(exponent)).min(cap),
        }
    }

    /// The bound `G`; infinite for the linear utility.
    pub fn bound(&self) -> f64 {
        match *self {
            UtilitySpec::Linear { .. } => f64::INFINITY,
            UtilitySpec::SaturatingExp { bound, .. } => bound,
            UtilitySpec::PowerCapped { cap, .. } => cap,
        }
    }

    /// Mass beyond which `g` is within `rel` of its bound, if it saturates.
    pub fn saturation_mass(&self, rel: f64) -> Option<f64> {
        match *self {
            UtilitySpec::Linear { .. } => None,
            UtilitySpec::SaturatingExp { rate, .. } => Some(-rel.ln() / rate),
            UtilitySpec::PowerCapped { scale, exponent, cap } => Some((cap / scale).powf(1.0 / exponent)),
        }
    }

    /// Kinks of `g` on `(0, inf)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            UtilitySpec::PowerCapped { .. } => self.saturation_mass(0.0).into_iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_concave(&self) -> bool {
        match *self {
            UtilitySpec::Linear { .. } | UtilitySpec::SaturatingExp { .. } => true,
            UtilitySpec::PowerCapped { exponent, .. } => exponent <= 1.0,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, UtilitySpec::Linear { .. })
    }

    fn check(&self, role: &str, out: &mut Vec<Diagnostic>) {
        let (monotone, bounded_ok) = match *self {
            UtilitySpec::Linear { slope } => (slope >= 0.0, slope.is_finite()),
            UtilitySpec::SaturatingExp { bound, rate } => (bound >= 0.0 && rate >= 0.0, bound.is_finite() && rate > 0.0),
            UtilitySpec::PowerCapped { scale, exponent, cap } => {
                (scale >= 0.0 && exponent >= 0.0, cap >= 0.0 && cap.is_finite() && scale > 0.0 && exponent > 0.0)
            }
        };
        if !monotone {
            out.push(Diagnostic::error(
                "non-monotone-utility",
                format!("{role}: utility is not nondecreasing: {self:?}"),
            ));
        } else if !bounded_ok {
            out.push(Diagnostic::error(
                "bad-utility",
                format!("{role}: parameters out of range in {self:?}"),
            ));
        }
    }
}

/// Time cost `c: [0, t0] -> [0, C]`, differentiable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `c(t) = offset + rate * t`.
    Linear {
        rate: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `c(t) = offset + linear * t + quadratic * t^2`.
    Quadratic {
        linear: f64,
        quadratic: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `c(t) = offset + bound * (1 - exp(-t / scale))`, concave.
    SaturatingExp {
        bound: f64,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl CostSpec {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            CostSpec::Linear { rate, offset } => offset + rate * t,
            CostSpec::Quadratic { linear, quadratic, offset } => offset + t * (linear + quadratic * t),
            CostSpec::SaturatingExp { bound, scale, offset } => offset - bound * (-t / scale).exp_m1(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            CostSpec::Linear { rate, .. } => rate,
            CostSpec::Quadratic { linear, quadratic, .. } => linear + 2.0 * quadratic * t,
            CostSpec::SaturatingExp { bound, scale, .. } => bound / scale * (-t / scale).exp(),
        }
    }

    /// `C_i = sup_{[0, t0]} c`; every catalog cost is nondecreasing.
    pub fn bound(&self, horizon: f64) -> f64 {
        self.value(horizon)
    }

    /// True when `c'` is constant, so values cannot depend on elapsed time.
    pub fn is_time_homogeneous(&self) -> bool {
        matches!(self, CostSpec::Linear { .. })
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, CostSpec::SaturatingExp { .. })
    }

    pub fn is_concave(&self) -> bool {
        match *self {
            CostSpec::Linear { .. } => true,
            CostSpec::Quadratic { quadratic, .. } => quadratic == 0.0,
            CostSpec::SaturatingExp { .. } => true,
        }
    }

    fn check(&self, role: &str, out: &mut Vec<Diagnostic>) {
        let ok = match *self {
            CostSpec::Linear { rate, offset } => rate >= 0.0 && offset >= 0.0,
            CostSpec::Quadratic { linear, quadratic, offset } => linear >= 0.0 && quadratic >= 0.0 && offset >= 0.0,
            CostSpec::SaturatingExp { bound, scale, offset } => bound >= 0.0 && scale > 0.0 && offset >= 0.0,
        };
        if !ok {
            out.push(Diagnostic::error(
                "bad-cost",
                format!("{role}: negative or degenerate cost parameters in {self:?}"),
            ));
        }
    }
}

/// One fishing site: arrival law `F`, catch law `H`, utility `g`, cost `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteModel {
    pub inter_arrival: DistributionSpec,
    pub catch_size: DistributionSpec,
    pub utility: UtilitySpec,
    pub cost: CostSpec,
}

/// The full instance: two sites and the horizon `t0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub site1: SiteModel,
    pub site2: SiteModel,
    pub horizon: f64,
}

impl ProblemSpec {
    /// `C = C1 + C2`.
    pub fn penalty(&self) -> f64 {
        self.site1.cost.bound(self.horizon) + self.site2.cost.bound(self.horizon)
    }

    /// Contraction modulus of the after-switch operator, `F2(t0)`.
    pub fn modulus_stage2(&self) -> f64 {
        self.site2.inter_arrival.cdf(self.horizon)
    }

    /// Contraction modulus of the before-switch operator, `F1(t0)`.
    pub fn modulus_stage1(&self) -> f64 {
        self.site1.inter_arrival.cdf(self.horizon)
    }

    pub fn site(&self, stage: Stage) -> &SiteModel {
        match stage {
            Stage::One => &self.site1,
            Stage::Two => &self.site2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

/// After-switch state in reduced coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateStage2 {
    /// Mass caught at site 2 so far.
    pub a: f64,
    /// Time elapsed since the switch.
    pub b: f64,
    /// Remaining horizon.
    pub c: f64,
}

/// Before-switch state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateStage1 {
    /// Mass caught at site 1.
    pub a: f64,
    /// Remaining horizon; the current time is `t0 - c`.
    pub c: f64,
}

impl StateStage1 {
    /// The equivalent three-coordinate state, with elapsed time measured from 0.
    pub fn lift(&self, horizon: f64) -> StateStage2 {
        StateStage2 {
            a: self.a,
            b: (horizon - self.c).max(0.0),
            c: self.c,
        }
    }
}

/// `w1(m, t) = g1(m) - c1(t)`.
pub fn payoff_w1(spec: &ProblemSpec, m: f64, t: f64) -> Result<f64> {
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, {}]", spec.horizon)));
    }
    if !(m >= 0.0) {
        return Err(Error::Domain(format!("negative mass {m}")));
    }
    Ok(spec.site1.utility.value(m) - spec.site1.cost.value(t))
}

/// `w2(m, s, m_total, t) = w1(m, s) + g2(m_total - m) - c2(t - s)`, no range checks.
pub fn payoff_w2(spec: &ProblemSpec, m: f64, s: f64, m_total: f64, t: f64) -> f64 {
    spec.site1.utility.value(m) - spec.site1.cost.value(s) + spec.site2.utility.value(m_total - m)
        - spec.site2.cost.value(t - s)
}

/// Realised payoff `Z(s, t)` for switching at `s` with mass `m` and stopping
/// at `t` with total mass `m_total`.
///
/// On the `t < s` branch `m_total` is the site-1 mass at `t`.
pub fn payoff_z(spec: &ProblemSpec, s: f64, t: f64, m: f64, m_total: f64) -> f64 {
    let t0 = spec.horizon;
    if t > t0 {
        -spec.penalty()
    } else if t < s {
        spec.site1.utility.value(m_total) - spec.site1.cost.value(t)
    } else {
        payoff_w2(spec, m, s, m_total, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    fn error(code: &str, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message,
        }
    }

    fn warning(code: &str, message: String) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code: code.to_string(),
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

/// Warn when the contraction modulus is this close to 1.
pub const SLOW_CONTRACTION: f64 = 0.99;

/// Check an instance; errors make it unsolvable, warnings do not.
pub fn validate(spec: &ProblemSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
        out.push(Diagnostic::error(
            "bad-horizon",
            format!("horizon must be positive and finite, got {}", spec.horizon),
        ));
        return out;
    }
    for (name, site) in [("site1", &spec.site1), ("site2", &spec.site2)] {
        site.inter_arrival.check(&format!("{name}.inter_arrival"), &mut out);
        site.catch_size.check(&format!("{name}.catch_size"), &mut out);
        site.utility.check(&format!("{name}.utility"), &mut out);
        site.cost.check(&format!("{name}.cost"), &mut out);
    }
    if out.iter().any(Diagnostic::is_error) {
        return out;
    }
    for (name, q) in [("site2", spec.modulus_stage2()), ("site1", spec.modulus_stage1())] {
        if q >= 1.0 {
            out.push(Diagnostic::error(
                "contraction-violated",
                format!("contraction violated: {name} inter-arrival cdf at the horizon is {q}, must be < 1"),
            ));
        } else if q > SLOW_CONTRACTION {
            out.push(Diagnostic::warning(
                "slow-contraction",
                format!("{name} contraction modulus {q:.6} is close to 1; expect many sweeps"),
            ));
        }
    }
    out
}

/// Turn validation errors into an [`Error::Validation`].
pub fn ensure_valid(spec: &ProblemSpec) -> Result<()> {
    let errors: Vec<_> = validate(spec).into_iter().filter(Diagnostic::is_error).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errors))
    }
}


#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;

    fn any_spec() -> impl Strategy<Value = ProblemSpec> {
        (0.1f64..3.0, 0.1f64..3.0, 0.0f64..2.0, 0.0f64..2.0, 0.5f64..5.0, 0.1f64..3.0).prop_map(
            |(r1, r2, k1, k2, t0, g)| ProblemSpec {
                site1: SiteModel {
                    inter_arrival: DistributionSpec::Exponential { rate: r1 },
                    catch_size: DistributionSpec::Gamma { shape: 2.0, rate: 1.0 },
                    utility: UtilitySpec::SaturatingExp { bound: g, rate: 0.7 },
                    cost: CostSpec::Linear { rate: k1, offset: 0.0 },
                },
                site2: SiteModel {
                    inter_arrival: DistributionSpec::Weibull { shape: 1.5, scale: 1.0 / r2 },
                    catch_size: DistributionSpec::Exponential { rate: 1.0 },
                    utility: UtilitySpec::PowerCapped { scale: 1.0, exponent: 0.5, cap: g },
                    cost: CostSpec::Quadratic { linear: k2, quadratic: 0.1, offset: 0.0 },
                },
                horizon: t0,
            },
        )
    }

    proptest! {
        #[test]
        fn z_is_bounded(p in any_spec(), s in 0.0f64..1.0, dt in 0.0f64..1.0, m in 0.0f64..10.0, extra in 0.0f64..10.0) {
            let t0 = p.horizon;
            let s = s * t0;
            let t = s + dt * (t0 - s);
            let z = payoff_z(&p, s, t, m, m + extra);
            let hi = p.site1.utility.bound() + p.site2.utility.bound();
            prop_assert!(z >= -p.penalty() - 1e-12 && z <= hi + 1e-12);
        }

        #[test]
        fn z_nondecreasing_in_total_mass(p in any_spec(), m in 0.0f64..5.0, x in 0.0f64..5.0, dx in 0.0f64..2.0) {
            let t0 = p.horizon;
            let a = payoff_z(&p, 0.3 * t0, 0.7 * t0, m, m + x);
            let b = payoff_z(&p, 0.3 * t0, 0.7 * t0, m, m + x + dx);
            prop_assert!(b >= a);
        }
    }
}
