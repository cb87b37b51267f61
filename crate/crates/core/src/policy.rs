//! Executable stopping rules.
//!
//! A stage policy maps the state right after a catch (or at the stage start)
//! to a planned delay `R ∈ [0, c]`: stop at `T + R` unless another catch
//! arrives first, in which case the delay is recomputed from the new state.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostSpec, DistributionSpec, ProblemSpec, SiteModel, Stage};
use crate::numerics::{expect_field, Axis, AxisKind, DeltaEvaluator, GaussLegendre, GridSpec, ValueField};
use crate::stage1::Stage1Solution;
use crate::stage2::Stage2Solution;
use crate::sweep::maximise_profile;

/// Delays within this fraction of the horizon of the remaining time are
/// treated as "wait until the horizon".
pub const HORIZON_SNAP: f64 = 1e-9;

/// Closed-form rule for exponential arrivals: stop as soon as
/// `α Δ(a) <= c'(t)`.
#[derive(Clone, Debug)]
pub struct ThresholdRule {
    pub rate: f64,
    pub delta: DeltaEvaluator,
    pub cost: CostSpec,
}

impl ThresholdRule {
    /// Smallest `r ∈ [0, c]` with `α Δ(a) <= c'(b + r)`, or `c` if none.
    /// Requires `c'` nondecreasing.
    pub fn delay(&self, a: f64, b: f64, c: f64, horizon: f64) -> f64 {
        let gain = self.rate * self.delta.at(a);
        if gain <= self.cost.derivative(b) {
            return 0.0;
        }
        if gain > self.cost.derivative(b + c) {
            return c;
        }
        let (mut lo, mut hi) = (0.0, c);
        let tol = 1e-9 * horizon;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if gain <= self.cost.derivative(b + mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Re-maximises the delay profile at the exact post-catch state, using the
/// solved continuation value: the same maximisation the solver performs at
/// grid nodes, carried out off the grid.
#[derive(Clone, Debug)]
pub struct LookaheadRule {
    /// `E y(a + X, b, c)` at the grid nodes.
    continuation: ValueField,
    delta: DeltaEvaluator,
    arrival: DistributionSpec,
    arrival_breaks: Vec<f64>,
    cost: CostSpec,
    /// Left-difference slopes of the after-switch value (stage 1 only).
    slope: Option<Vec<f64>>,
    time: Axis,
    rule: GaussLegendre,
}

impl LookaheadRule {
    fn new(site: &SiteModel, y: &ValueField, slope: Option<Vec<f64>>, grid: &GridSpec) -> Self {
        let time = *y.axis(AxisKind::Remaining).expect("value fields carry a remaining-time axis");
        LookaheadRule {
            continuation: expect_field(&site.catch_size, y, grid.quadrature_nodes),
            delta: DeltaEvaluator::new(site),
            arrival: site.inter_arrival.clone(),
            arrival_breaks: site.inter_arrival.quadrature_breaks(time.step()),
            cost: site.cost.clone(),
            slope,
            time,
            rule: GaussLegendre::new(grid.quadrature_nodes),
        }
    }

    fn drift(&self, b: f64, c: f64, z: f64) -> f64 {
        let base = self.cost.derivative(b + z);
        match &self.slope {
            Some(s) => {
                let j = (((c - z) / self.time.step()).ceil() as usize).clamp(1, self.time.n - 1);
                base + s[j]
            }
            None => base,
        }
    }

    pub fn delay(&self, a: f64, b: f64, c: f64) -> f64 {
        if !(c > 0.0) {
            return 0.0;
        }
        let h = self.time.step();
        let cells = ((c / h) - 1e-9).ceil().max(1.0) as usize;
        let hc = c / cells as f64;
        let delta = self.delta.at(a);
        let node = |k: usize| if k == cells { c } else { k as f64 * hc };
        let ey: Vec<f64> = (0..=cells)
            .map(|k| self.continuation.eval_state(a, b + node(k), c - node(k)))
            .collect();
        let integrand = |k: usize, z: f64| {
            let u = ((z - node(k)) / (node(k + 1) - node(k))).clamp(0.0, 1.0);
            self.arrival.pdf(z) * (delta + (1.0 - u) * ey[k] + u * ey[k + 1]) - self.arrival.sf(z) * self.drift(b, c, z)
        };
        let partial = |k: usize, r: f64| self.rule.integrate_split(node(k), r, &self.arrival_breaks, |z| integrand(k, z));
        let mut cums = vec![0.0];
        for k in 0..cells {
            cums.push(cums[k] + partial(k, node(k + 1)));
        }
        maximise_profile(node, &cums, integrand, partial).1
    }
}

#[derive(Clone, Debug)]
pub enum StagePolicy {
    /// Interpolated maximiser field from a solver.
    Gridded { r_star: ValueField, stage: Stage },
    /// Maximiser recomputed at the exact state from a solved value.
    Lookahead(Box<LookaheadRule>),
    Threshold(ThresholdRule),
    NeverStop,
    StopNow,
    /// Another policy's delay multiplied by `factor`, then clamped.
    Scaled { inner: Box<StagePolicy>, factor: f64 },
}

impl StagePolicy {
    pub fn scaled(self, factor: f64) -> StagePolicy {
        StagePolicy::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    fn raw_delay(&self, a: f64, b: f64, c: f64, horizon: f64) -> f64 {
        match self {
            StagePolicy::Gridded { r_star, .. } => r_star.eval_state(a, b, c),
            StagePolicy::Lookahead(rule) => rule.delay(a, b, c),
            StagePolicy::Threshold(rule) => rule.delay(a, b, c, horizon),
            StagePolicy::NeverStop => c,
            StagePolicy::StopNow => 0.0,
            StagePolicy::Scaled { inner, factor } => factor * inner.delay(a, b, c, horizon),
        }
    }

    /// Planned delay at mass `a`, stage-elapsed time `b` and remaining time
    /// `c`, clamped to `[0, c]`; values within `HORIZON_SNAP * t0` of `c`
    /// become `c` exactly.
    pub fn delay(&self, a: f64, b: f64, c: f64, horizon: f64) -> f64 {
        let r = self.raw_delay(a, b, c, horizon).clamp(0.0, c.max(0.0));
        if r >= c - HORIZON_SNAP * horizon {
            c
        } else {
            r
        }
    }
}

/// Threshold rule for one site, valid for exponential arrivals.
///
/// Concave utility with convex cost gives the myopic threshold rule (a
/// linear pair is both and falls here). Convex utility with concave cost
/// never stops early. Anything else is unsupported.
pub fn threshold_policy(site: &SiteModel, stage: Stage) -> Result<StagePolicy> {
    let Some(rate) = site.inter_arrival.exponential_rate() else {
        return Err(Error::Unsupported(format!(
            "threshold rule for stage {stage:?} needs exponential inter-arrivals, got {:?}",
            site.inter_arrival
        )));
    };
    if site.utility.is_concave() && site.cost.is_convex() {
        Ok(StagePolicy::Threshold(ThresholdRule {
            rate,
            delta: DeltaEvaluator::new(site),
            cost: site.cost.clone(),
        }))
    } else if site.utility.is_convex() && site.cost.is_concave() {
        Ok(StagePolicy::NeverStop)
    } else {
        Err(Error::Unsupported(format!(
            "threshold rule for stage {stage:?} needs concave utility with convex cost or the reverse"
        )))
    }
}

/// Rules for both stages.
#[derive(Clone, Debug)]
pub struct DoublePolicy {
    pub stage1: StagePolicy,
    pub stage2: StagePolicy,
}

impl DoublePolicy {
    /// The solver's policy: both delays re-maximised at the exact state
    /// from the solved values.
    pub fn solved(spec: &ProblemSpec, grid: &GridSpec, s1: &Stage1Solution, s2: &Stage2Solution) -> Self {
        Self::from_values(spec, grid, &s1.y1, &s2.y2, &s1.y2_bar)
    }

    /// As [`Self::solved`], from the value fields alone: `y1` on
    /// `(mass, remaining)`, `y2` on the after-switch grid and `ȳ2` on the
    /// remaining-time axis.
    pub fn from_values(spec: &ProblemSpec, grid: &GridSpec, y1: &ValueField, y2: &ValueField, y2_bar: &ValueField) -> Self {
        let time = *y2_bar.axis(AxisKind::Remaining).expect("ȳ2 lives on the remaining-time axis");
        let v = y2_bar.values();
        let mut slope = vec![0.0; v.len()];
        for j in 1..v.len() {
            slope[j] = (v[j] - v[j - 1]) / time.step();
        }
        DoublePolicy {
            stage1: StagePolicy::Lookahead(Box::new(LookaheadRule::new(&spec.site1, y1, Some(slope), grid))),
            stage2: StagePolicy::Lookahead(Box::new(LookaheadRule::new(&spec.site2, y2, None, grid))),
        }
    }

    /// The solver's maximiser fields, interpolated between nodes.
    pub fn interpolated(s1: &Stage1Solution, s2: &Stage2Solution) -> Self {
        DoublePolicy {
            stage1: StagePolicy::Gridded {
                r_star: s1.r_star1.clone(),
                stage: Stage::One,
            },
            stage2: StagePolicy::Gridded {
                r_star: s2.r_star2.clone(),
                stage: Stage::Two,
            },
        }
    }

    pub fn threshold(spec: &ProblemSpec) -> Result<Self> {
        Ok(DoublePolicy {
            stage1: threshold_policy(&spec.site1, Stage::One)?,
            stage2: threshold_policy(&spec.site2, Stage::Two)?,
        })
    }

    pub fn stop_now() -> Self {
        DoublePolicy {
            stage1: StagePolicy::StopNow,
            stage2: StagePolicy::StopNow,
        }
    }

    pub fn never_stop() -> Self {
        DoublePolicy {
            stage1: StagePolicy::NeverStop,
            stage2: StagePolicy::NeverStop,
        }
    }

    /// Both delays scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        DoublePolicy {
            stage1: self.stage1.clone().scaled(factor),
            stage2: self.stage2.clone().scaled(factor),
        }
    }
}

/// A catch: absolute time and mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Claim {
    pub time: f64,
    pub mass: f64,
}

/// Where a stage policy stops.
#[derive(Clone, Debug, PartialEq)]
pub struct StopOutcome {
    /// Number of catches taken before stopping.
    pub index: usize,
    pub time: f64,
    /// Mass caught during the stage.
    pub mass: f64,
    /// The catches taken, in order.
    pub claims: Vec<Claim>,
}

/// Walk the catches of one stage: after catch `i` (or at the start, `i = 0`)
/// plan the delay `R_i`; stop at the first `i` whose delay ends before the
/// next catch. Catches past the horizon never arrive. A delay equal to the
/// remaining time stops exactly at the horizon.
pub fn stop_index(
    policy: &StagePolicy,
    claims: impl IntoIterator<Item = Claim>,
    start: f64,
    horizon: f64,
) -> StopOutcome {
    let mut claims = claims.into_iter();
    let mut taken = Vec::new();
    let mut now = start;
    let mut mass = 0.0;
    loop {
        let c = (horizon - now).max(0.0);
        let r = policy.delay(mass, now - start, c, horizon);
        let stop = if r >= c { horizon } else { now + r };
        match claims.next() {
            Some(next) if next.time <= horizon && next.time <= stop && !(r < next.time - now) => {
                now = next.time;
                mass += next.mass;
                taken.push(next);
            }
            _ => {
                return StopOutcome {
                    index: taken.len(),
                    time: stop,
                    mass,
                    claims: taken,
                }
            }
        }
    }
}

/// One point of a stop/continue boundary: the smallest mass node at which
/// the policy stops at once, `inf` when it never does on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub elapsed: f64,
    pub remaining: f64,
    pub mass: f64,
}

/// Trace the stop-now boundary of `policy` over the grid. Stage 1 uses
/// elapsed time `t0 - c`; stage 2 takes every `(b, c)` with `b + c <= t0`.
pub fn stop_boundary(policy: &StagePolicy, stage: Stage, mass: Axis, time: Axis, horizon: f64) -> Vec<BoundaryPoint> {
    let mut out = Vec::new();
    let last = time.n - 1;
    let mut push = |b: f64, c: f64| {
        let m = (0..mass.n)
            .map(|i| mass.node(i))
            .find(|&a| policy.delay(a, b, c, horizon) <= 0.0)
            .unwrap_or(f64::INFINITY);
        out.push(BoundaryPoint {
            elapsed: b,
            remaining: c,
            mass: m,
        });
    };
    match stage {
        Stage::One => {
            for ic in 0..time.n {
                push(time.node(last - ic), time.node(ic));
            }
        }
        Stage::Two => {
            for ib in 0..time.n {
                for ic in 0..(time.n - ib) {
                    push(time.node(ib), time.node(ic));
                }
            }
        }
    }
    out
}

/// CSV with columns `elapsed,remaining,mass`.
pub fn write_boundary_csv<W: std::io::Write>(points: &[BoundaryPoint], mut w: W) -> Result<()> {
    let mut s = String::from("elapsed,remaining,mass\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.elapsed, p.remaining, p.mass));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}
