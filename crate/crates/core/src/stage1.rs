//! Before-switch problem: the value `y1(a, c)` of continuing at site 1 with
//! mass `a` and remaining horizon `c`, its maximising delay `r1*(a, c)`,
//! and the overall value `V`.
//!
//! Switching at time `s` with mass `m` is worth
//!
//! ```text
//! u(m, s) = g1(m) - c1(s) + g2(0) - c2(0) + ȳ2(t0 - s),   ȳ2(c) = y2(0, 0, c)
//! ```
//!
//! since site 2 restarts with no mass and no elapsed time. Between catches
//! the deterministic part of `u` falls at rate `c1'(s) + ȳ2'(t0 - s)`, which
//! takes the place of the cost derivative in the after-switch operator.
//! `ȳ2'` is the left difference on the time grid, i.e. the exact derivative
//! of the piecewise-linear `ȳ2`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ensure_valid, ProblemSpec};
use crate::numerics::{expect_over_catch, Axis, AxisKind, DeltaEvaluator, GridSpec, ValueField};
use crate::stage2::{gamma_value, generic_profile, Profile, Stage2Solution};
use crate::sweep::{self, Drift, Layout, SweepKernel};

/// `ȳ2` sampled on the time grid and its left-difference slopes;
/// `slope[j]` covers `((j - 1) h, j h]`, `slope[0] = 0`.
fn switch_value_samples(s2: &Stage2Solution, time: Axis) -> (Vec<f64>, Vec<f64>) {
    let bar: Vec<f64> = (0..time.n).map(|j| s2.y2_at(0.0, 0.0, time.node(j))).collect();
    let h = time.step();
    let mut slope = vec![0.0; time.n];
    for j in 1..time.n {
        slope[j] = (bar[j] - bar[j - 1]) / h;
    }
    (bar, slope)
}

/// The before-switch operator on a fixed grid.
#[derive(Clone, Debug)]
pub struct Stage1Operator {
    kernel: SweepKernel,
    modulus: f64,
    y2_bar: Vec<f64>,
    y2_bar_slope: Vec<f64>,
}

impl Stage1Operator {
    pub fn new(spec: &ProblemSpec, s2: &Stage2Solution, grid: &GridSpec) -> Result<Self> {
        grid.check()?;
        let time = grid.time_axis(spec.horizon);
        let (y2_bar, y2_bar_slope) = switch_value_samples(s2, time);
        let drift = Drift {
            cost: spec.site1.cost.clone(),
            slope: Some(y2_bar_slope.clone()),
        };
        Ok(Stage1Operator {
            kernel: SweepKernel::new(&spec.site1, grid, spec.horizon, Layout::StageOne, drift),
            modulus: spec.modulus_stage1(),
            y2_bar,
            y2_bar_slope,
        })
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn axes(&self) -> Vec<(AxisKind, Axis)> {
        self.kernel.axes()
    }

    pub fn zero_field(&self) -> ValueField {
        self.kernel.zero_field()
    }

    /// `(Φ1 δ, argmax r)`. `delta` must live on [`Self::axes`].
    pub fn apply(&self, delta: &ValueField) -> (ValueField, ValueField) {
        assert_eq!(delta.axes(), &self.axes()[..], "field is not on the operator grid");
        let (v, r) = self.kernel.apply(delta.values());
        let axes = self.axes();
        (
            ValueField::new(axes.clone(), v).expect("operator output is finite"),
            ValueField::new(axes, r).expect("operator output is finite"),
        )
    }

    /// Profile at the node `(ia, ic)`, sampled at `r = k h`.
    pub fn node_profile(&self, delta: &ValueField, ia: usize, ic: usize) -> Profile {
        let phi = self.kernel.node_profile(delta.values(), ia, 0, ic);
        let t = self.kernel.time_axis();
        Profile {
            r: (0..phi.len()).map(|k| t.node(k)).collect(),
            phi,
        }
    }
}

/// `u(m, s) = g1(m) - c1(s) + g2(0) - c2(0) + ȳ2(t0 - s)`.
pub fn u_payoff(spec: &ProblemSpec, s2: &Stage2Solution, m: f64, s: f64) -> f64 {
    spec.site1.utility.value(m) - spec.site1.cost.value(s) + spec.site2.utility.value(0.0)
        - spec.site2.cost.value(0.0)
        + s2.y2_at(0.0, 0.0, spec.horizon - s)
}

/// Expected payoff of switching at `s` with mass `m` and then stopping
/// optimally; identical to [`u_payoff`].
pub fn j_value(spec: &ProblemSpec, s2: &Stage2Solution, m: f64, s: f64) -> f64 {
    gamma_value(spec, s2, m, s, m, s)
}

/// `r -> φ1,δ(a, c, r)` at an arbitrary state by direct quadrature,
/// independently of the node sweep. `delta` lives on `(mass, remaining)`.
pub fn phi1_profile(
    spec: &ProblemSpec,
    s2: &Stage2Solution,
    grid: &GridSpec,
    delta: &ValueField,
    a: f64,
    c: f64,
) -> Result<Profile> {
    grid.check()?;
    let site = &spec.site1;
    let t0 = spec.horizon;
    let time = grid.time_axis(t0);
    let h = time.step();
    let (_, slope) = switch_value_samples(s2, time);
    let last = time.n - 1;
    let cost = &site.cost;
    let drift = |z: f64| {
        let j = (((c - z) / h).ceil() as usize).clamp(1, last);
        cost.derivative(t0 - c + z) + slope[j]
    };
    let breaks: Vec<f64> = (1..time.n).map(|j| c - time.node(j)).filter(|z| *z > 0.0 && *z < c).collect();
    generic_profile(
        spec,
        grid,
        c,
        |z| expect_over_catch(site, delta, t0 - c + z, c - z, a),
        DeltaEvaluator::new(site).at(a),
        &site.inter_arrival,
        drift,
        &breaks,
    )
}

/// Solution of the before-switch problem.
#[derive(Clone, Debug)]
pub struct Stage1Solution {
    pub y1: ValueField,
    pub r_star1: ValueField,
    /// `ȳ2` on the remaining-time axis.
    pub y2_bar: ValueField,
    /// Left-difference slopes of `ȳ2`; entry `j` covers `((j - 1) h, j h]`.
    pub y2_bar_slope: Vec<f64>,
    /// `V = u(0, 0) + y1(0, t0)`.
    pub total_value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub modulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Meta {
    pub modulus: f64,
    pub iterations: usize,
    pub residual: f64,
    pub total_value: f64,
}

impl Stage1Solution {
    pub fn meta(&self) -> Stage1Meta {
        Stage1Meta {
            modulus: self.modulus,
            iterations: self.iterations,
            residual: self.residual,
            total_value: self.total_value,
        }
    }

    pub fn y1_at(&self, a: f64, c: f64) -> f64 {
        self.y1.eval_state(a, 0.0, c)
    }
}

/// Iterate `y <- Φ1 y` from zero with the same stopping rule as the
/// after-switch solver, then assemble `V`.
pub fn solve_y1(spec: &ProblemSpec, s2: &Stage2Solution, grid: &GridSpec, eps: f64) -> Result<Stage1Solution> {
    ensure_valid(spec)?;
    let op = Stage1Operator::new(spec, s2, grid)?;
    solve_with(spec, s2, &op, eps)
}

pub fn solve_with(spec: &ProblemSpec, s2: &Stage2Solution, op: &Stage1Operator, eps: f64) -> Result<Stage1Solution> {
    solve_capped(spec, s2, op, eps, None)
}

/// As [`solve_with`], failing with a convergence error after
/// `max_iterations` sweeps (default `10 ⌈ln eps / ln q⌉`).
pub fn solve_capped(
    spec: &ProblemSpec,
    s2: &Stage2Solution,
    op: &Stage1Operator,
    eps: f64,
    max_iterations: Option<usize>,
) -> Result<Stage1Solution> {
    let fp = sweep::iterate(&op.kernel, eps, op.modulus, max_iterations)?;
    let axes = op.axes();
    let y1 = ValueField::new(axes.clone(), fp.values).expect("finite");
    let time = op.kernel.time_axis();
    let total_value = u_payoff(spec, s2, 0.0, 0.0) + y1.eval_state(0.0, 0.0, spec.horizon);
    Ok(Stage1Solution {
        y1,
        r_star1: ValueField::new(axes, fp.argmax).expect("finite"),
        y2_bar: ValueField::new(vec![(AxisKind::Remaining, time)], op.y2_bar.clone()).expect("finite"),
        y2_bar_slope: op.y2_bar_slope.clone(),
        total_value,
        iterations: fp.iterations,
        residual: fp.residual,
        modulus: op.modulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostSpec, DistributionSpec, SiteModel, UtilitySpec};
    use crate::stage2::solve_y2;

    fn site(alpha: f64, nu: f64, kappa: f64) -> SiteModel {
        SiteModel {
            inter_arrival: DistributionSpec::Exponential { rate: alpha },
            catch_size: DistributionSpec::Exponential { rate: 1.0 / nu },
            utility: UtilitySpec::Linear { slope: 1.0 },
            cost: CostSpec::Linear { rate: kappa, offset: 0.0 },
        }
    }

    fn spec(s1: (f64, f64, f64), s2: (f64, f64, f64), t0: f64) -> ProblemSpec {
        ProblemSpec {
            site1: site(s1.0, s1.1, s1.2),
            site2: site(s2.0, s2.1, s2.2),
            horizon: t0,
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(12.0, 13, 9, 16).unwrap()
    }

    fn solve(p: &ProblemSpec) -> (Stage2Solution, Stage1Solution) {
        let s2 = solve_y2(p, &grid(), 1e-10).unwrap();
        let s1 = solve_y1(p, &s2, &grid(), 1e-10).unwrap();
        (s2, s1)
    }

    #[test]
    fn linear_value_is_horizon_times_best_rate() {
        let t0 = 2.0;
        for (a, b) in [((1.0, 1.0, 0.2), (1.0, 1.0, 0.5)), ((1.0, 1.0, 0.6), (1.2, 1.0, 0.3))] {
            let p = spec(a, b, t0);
            let (_, s1) = solve(&p);
            let rho1 = a.0 * a.1 - a.2;
            let rho2 = b.0 * b.1 - b.2;
            let want = t0 * rho1.max(rho2).max(0.0);
            assert!((s1.total_value - want).abs() < 1e-8, "{} vs {want}", s1.total_value);
            let t = grid().time_axis(t0);
            for ic in 0..t.n {
                let r = s1.r_star1.get(&[4, ic]);
                let c = t.node(ic);
                if rho1 > rho2 {
                    assert!((r - c).abs() < 1e-12);
                } else {
                    assert_eq!(r, 0.0);
                }
            }
        }
    }

    #[test]
    fn unprofitable_sites_switch_and_stop_at_once() {
        let p = spec((1.0, 0.5, 0.8), (1.0, 0.3, 0.9), 2.0);
        let (_, s1) = solve(&p);
        assert_eq!(s1.y1.sup_norm(), 0.0);
        assert_eq!(s1.r_star1.sup_norm(), 0.0);
        assert_eq!(s1.total_value, 0.0);
    }

    #[test]
    fn j_value_equals_u_and_terminal_form() {
        let mut p = spec((1.0, 1.0, 0.3), (1.0, 1.0, 0.2), 2.0);
        p.site2.utility = UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.5 };
        p.site2.cost = CostSpec::Linear { rate: 0.2, offset: 0.1 };
        let (s2, _) = solve(&p);
        for m in [0.0, 1.0, 3.0] {
            for s in [0.0, 0.75, 2.0] {
                assert_eq!(j_value(&p, &s2, m, s), u_payoff(&p, &s2, m, s));
            }
            let end = u_payoff(&p, &s2, m, 2.0);
            assert!((end - (m - 0.3 * 2.0 + 0.0 - 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn node_profile_matches_direct_quadrature() {
        let mut p = spec((1.0, 1.0, 0.3), (0.8, 1.0, 0.2), 2.0);
        p.site1.utility = UtilitySpec::SaturatingExp { bound: 3.0, rate: 0.6 };
        p.site1.cost = CostSpec::Quadratic { linear: 0.1, quadratic: 0.2, offset: 0.0 };
        p.site1.inter_arrival = DistributionSpec::Weibull { shape: 1.5, scale: 1.1 };
        p.site2.utility = UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.5 };
        let g = grid();
        let s2 = solve_y2(&p, &g, 1e-10).unwrap();
        let op = Stage1Operator::new(&p, &s2, &g).unwrap();
        let delta = ValueField::from_fn(op.axes(), |x| 0.3 * (x[0] * 0.4).cos() + 0.2 * x[1]);
        let t = g.time_axis(p.horizon);
        for (ia, ic) in [(0, 8), (5, 4), (12, 1)] {
            let nodes = op.node_profile(&delta, ia, ic);
            let direct = phi1_profile(&p, &s2, &g, &delta, g.mass_axis().node(ia), t.node(ic)).unwrap();
            assert_eq!(nodes.phi.len(), direct.phi.len());
            for (x, y) in nodes.phi.iter().zip(&direct.phi) {
                assert!((x - y).abs() < 1e-9, "({ia},{ic}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn continuing_never_hurts() {
        let mut p = spec((1.0, 1.0, 0.3), (0.8, 1.0, 0.2), 2.0);
        p.site1.utility = UtilitySpec::SaturatingExp { bound: 3.0, rate: 0.6 };
        p.site2.cost = CostSpec::Quadratic { linear: 0.1, quadratic: 0.2, offset: 0.0 };
        let (s2, s1) = solve(&p);
        assert!(s1.total_value >= u_payoff(&p, &s2, 0.0, 0.0));
        assert!(s1.y1.values().iter().all(|v| *v >= 0.0));
        let t = grid().time_axis(p.horizon);
        for ia in 0..13 {
            for ic in 1..t.n {
                assert!(s1.y1.get(&[ia, ic]) >= s1.y1.get(&[ia, ic - 1]) - 1e-9);
                let r = s1.r_star1.get(&[ia, ic]);
                assert!((0.0..=t.node(ic)).contains(&r));
            }
        }
    }
}
