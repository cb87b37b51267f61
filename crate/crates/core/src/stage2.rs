//! After-switch problem: the continuation value `y2(a, b, c)` and its
//! maximising delay `r2*(a, b, c)`.
//!
//! `a` is the mass caught at site 2 since the switch, `b` the time elapsed
//! since the switch and `c` the remaining horizon. The operator
//!
//! ```text
//! (Φ2 δ)(a, b, c) = max_{0 <= r <= c} ∫_0^r F̄2(z) { α2(z) [Δ2(a) + E δ(a + X2, b + z, c - z)] - c2'(b + z) } dz
//! ```
//!
//! is a contraction with modulus `F2(t0)`. Starting from `y = 0`, the
//! `j`-th iterate is the value with at most `j` further catches; the fixed
//! point is the value with no limit on catches.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ensure_valid, payoff_w2, ProblemSpec};
use crate::numerics::{expect_over_catch, Axis, AxisKind, DeltaEvaluator, GaussLegendre, GridSpec, ValueField};
use crate::sweep::{self, Drift, Layout, SweepKernel};

/// A sampled profile `r -> φ(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Profile {
    /// Largest value, smallest maximiser on ties.
    pub fn max(&self) -> (f64, f64) {
        let max = self.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = self.phi.iter().position(|&v| v >= max - sweep::TIE).unwrap_or(0);
        (self.phi[k], self.r[k])
    }
}

/// The after-switch operator on a fixed grid.
#[derive(Clone, Debug)]
pub struct Stage2Operator {
    kernel: SweepKernel,
    modulus: f64,
    collapsed: bool,
}

impl Stage2Operator {
    /// Linear site-2 cost drops the elapsed-time axis.
    pub fn new(spec: &ProblemSpec, grid: &GridSpec) -> Result<Self> {
        grid.check()?;
        let collapsed = spec.site2.cost.is_time_homogeneous();
        Self::with_layout(spec, grid, collapsed)
    }

    /// Keep the elapsed-time axis even when the cost is linear.
    pub fn full(spec: &ProblemSpec, grid: &GridSpec) -> Result<Self> {
        grid.check()?;
        Self::with_layout(spec, grid, false)
    }

    fn with_layout(spec: &ProblemSpec, grid: &GridSpec, collapsed: bool) -> Result<Self> {
        let layout = if collapsed { Layout::Collapsed } else { Layout::Full };
        let drift = Drift {
            cost: spec.site2.cost.clone(),
            slope: None,
        };
        Ok(Stage2Operator {
            kernel: SweepKernel::new(&spec.site2, grid, spec.horizon, layout, drift),
            modulus: spec.modulus_stage2(),
            collapsed,
        })
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn axes(&self) -> Vec<(AxisKind, Axis)> {
        self.kernel.axes()
    }

    pub fn zero_field(&self) -> ValueField {
        self.kernel.zero_field()
    }

    /// `(Φ2 δ, argmax r)`. `delta` must live on [`Self::axes`].
    pub fn apply(&self, delta: &ValueField) -> (ValueField, ValueField) {
        assert_eq!(delta.axes(), &self.axes()[..], "field is not on the operator grid");
        let (v, r) = self.kernel.apply(delta.values());
        let axes = self.axes();
        (
            ValueField::new(axes.clone(), v).expect("operator output is finite"),
            ValueField::new(axes, r).expect("operator output is finite"),
        )
    }

    /// Profile at the node `(ia, ib, ic)`, sampled at `r = k h`.
    /// `ib` is ignored on a collapsed grid.
    pub fn node_profile(&self, delta: &ValueField, ia: usize, ib: usize, ic: usize) -> Profile {
        let ib = if self.collapsed { 0 } else { ib };
        let phi = self.kernel.node_profile(delta.values(), ia, ib, ic);
        let t = self.kernel.time_axis();
        Profile {
            r: (0..phi.len()).map(|k| t.node(k)).collect(),
            phi,
        }
    }
}

/// `r -> φ2,δ(a, b, c, r)` at an arbitrary state, sampled on a uniform
/// `r`-grid over `[0, c]` with spacing at most the grid's time step.
///
/// This evaluates the catch expectation by direct quadrature with
/// interpolated lookups, independently of the node sweep.
pub fn phi2_profile(spec: &ProblemSpec, grid: &GridSpec, delta: &ValueField, a: f64, b: f64, c: f64) -> Result<Profile> {
    grid.check()?;
    let site = &spec.site2;
    let cost = &site.cost;
    generic_profile(spec, grid, c, |z| expect_over_catch(site, delta, b + z, c - z, a), DeltaEvaluator::new(site).at(a), &spec.site2.inter_arrival, |z| {
        cost.derivative(b + z)
    }, &[])
}

/// Shared by both stages: cell-wise quadrature of
/// `f(z) [Δ + Ey(z)] - F̄(z) d(z)` with `Ey` linear between r-nodes.
pub(crate) fn generic_profile(
    _spec: &ProblemSpec,
    grid: &GridSpec,
    c: f64,
    ey_at: impl Fn(f64) -> Result<f64>,
    delta: f64,
    arrival: &crate::model::DistributionSpec,
    drift: impl Fn(f64) -> f64,
    drift_breaks: &[f64],
) -> Result<Profile> {
    if !(c > 0.0) {
        return Ok(Profile {
            r: vec![0.0],
            phi: vec![0.0],
        });
    }
    let h = _spec.horizon / (grid.time_nodes - 1) as f64;
    let cells = ((c / h) - 1e-9).ceil().max(1.0) as usize;
    let hc = c / cells as f64;
    let rule = GaussLegendre::new(grid.quadrature_nodes);
    let mut breaks = arrival.quadrature_breaks(hc);
    breaks.extend_from_slice(drift_breaks);
    breaks.sort_by(f64::total_cmp);
    let mut r = vec![0.0];
    let mut phi = vec![0.0];
    let mut ey0 = ey_at(0.0)?;
    let mut acc = 0.0;
    for k in 0..cells {
        let z0 = k as f64 * hc;
        let z1 = if k + 1 == cells { c } else { (k + 1) as f64 * hc };
        let ey1 = ey_at(z1)?;
        acc += rule.integrate_split(z0, z1, &breaks, |z| {
            let u = (z - z0) / (z1 - z0);
            arrival.pdf(z) * (delta + (1.0 - u) * ey0 + u * ey1) - arrival.sf(z) * drift(z)
        });
        r.push(z1);
        phi.push(acc);
        ey0 = ey1;
    }
    Ok(Profile { r, phi })
}

/// `(Φ2 δ, argmax r)` on the operator grid for `spec`.
pub fn apply_phi2(spec: &ProblemSpec, grid: &GridSpec, delta: &ValueField) -> Result<(ValueField, ValueField)> {
    let op = Stage2Operator::new(spec, grid)?;
    Ok(op.apply(delta))
}

/// Solution of the after-switch problem.
#[derive(Clone, Debug)]
pub struct Stage2Solution {
    pub y2: ValueField,
    pub r_star2: ValueField,
    pub iterations: usize,
    pub residual: f64,
    pub modulus: f64,
}

/// Run metadata written next to the fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Meta {
    pub modulus: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl Stage2Solution {
    pub fn meta(&self) -> Stage2Meta {
        Stage2Meta {
            modulus: self.modulus,
            iterations: self.iterations,
            residual: self.residual,
        }
    }

    /// `y2(a, b, c)`; `b` is ignored on a collapsed grid.
    pub fn y2_at(&self, a: f64, b: f64, c: f64) -> f64 {
        self.y2.eval_state(a, b, c)
    }
}

/// Iterate `y <- Φ2 y` from zero until the a-priori bound guarantees
/// `‖y - y2‖ <= eps`.
pub fn solve_y2(spec: &ProblemSpec, grid: &GridSpec, eps: f64) -> Result<Stage2Solution> {
    ensure_valid(spec)?;
    let op = Stage2Operator::new(spec, grid)?;
    solve_with(&op, eps)
}

pub fn solve_with(op: &Stage2Operator, eps: f64) -> Result<Stage2Solution> {
    solve_capped(op, eps, None)
}

/// As [`solve_with`], failing with a convergence error after
/// `max_iterations` sweeps (default `10 ⌈ln eps / ln q⌉`).
pub fn solve_capped(op: &Stage2Operator, eps: f64, max_iterations: Option<usize>) -> Result<Stage2Solution> {
    let fp = sweep::iterate(&op.kernel, eps, op.modulus, max_iterations)?;
    let axes = op.axes();
    Ok(Stage2Solution {
        y2: ValueField::new(axes.clone(), fp.values).expect("finite"),
        r_star2: ValueField::new(axes, fp.argmax).expect("finite"),
        iterations: fp.iterations,
        residual: fp.residual,
        modulus: op.modulus,
    })
}

/// `y_{2,0} = 0, y_{2,j} = Φ2 y_{2,j-1}` for `j = 1..=k`.
pub fn finite_k_y2(spec: &ProblemSpec, grid: &GridSpec, k: usize) -> Result<Vec<ValueField>> {
    let op = Stage2Operator::new(spec, grid)?;
    Ok(finite_k_with(&op, k))
}

pub fn finite_k_with(op: &Stage2Operator, k: usize) -> Vec<ValueField> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(op.zero_field());
    for j in 0..k {
        let (next, _) = op.apply(&out[j]);
        out.push(next);
    }
    out
}

/// `γ^{s,m}(m_total, t) = w2(m, s, m_total, t) + y2(m_total - m, t - s, t0 - t)`
/// for `t <= t0`, and `-C` past the horizon.
pub fn gamma_value(spec: &ProblemSpec, sol: &Stage2Solution, m: f64, s: f64, m_total: f64, t: f64) -> f64 {
    let t0 = spec.horizon;
    if t > t0 {
        return -spec.penalty();
    }
    payoff_w2(spec, m, s, m_total, t) + sol.y2_at(m_total - m, t - s, t0 - t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostSpec, DistributionSpec, SiteModel, UtilitySpec};

    /// Exp(alpha) arrivals, Exp catches with mean nu, g = id, c = kappa t.
    fn linear_spec(alpha: f64, nu: f64, kappa: f64, t0: f64) -> ProblemSpec {
        let site = SiteModel {
            inter_arrival: DistributionSpec::Exponential { rate: alpha },
            catch_size: DistributionSpec::Exponential { rate: 1.0 / nu },
            utility: UtilitySpec::Linear { slope: 1.0 },
            cost: CostSpec::Linear { rate: kappa, offset: 0.0 },
        };
        ProblemSpec {
            site1: site.clone(),
            site2: site,
            horizon: t0,
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(10.0, 11, 9, 16).unwrap()
    }

    #[test]
    fn profile_closed_form_with_zero_continuation() {
        let (alpha, nu, kappa) = (1.5, 0.8, 0.5);
        let spec = linear_spec(alpha, nu, kappa, 2.0);
        let op = Stage2Operator::new(&spec, &grid()).unwrap();
        let zero = op.zero_field();
        let p = op.node_profile(&zero, 3, 0, 8);
        assert_eq!(p.phi[0], 0.0);
        let rho = alpha * nu - kappa;
        for (r, v) in p.r.iter().zip(&p.phi) {
            let want = rho * (1.0 - (-alpha * r).exp()) / alpha;
            assert!((v - want).abs() < 1e-12, "r={r}: {v} vs {want}");
        }
        // the direct-quadrature route agrees at nodes and off-grid
        let g = phi2_profile(&spec, &grid(), &zero, 0.37, 0.3, 1.3).unwrap();
        for (r, v) in g.r.iter().zip(&g.phi) {
            let want = rho * (1.0 - (-alpha * r).exp()) / alpha;
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn node_profile_matches_direct_quadrature() {
        let mut spec = linear_spec(1.0, 1.0, 0.3, 2.0);
        spec.site2.utility = UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.7 };
        spec.site2.cost = CostSpec::Quadratic { linear: 0.2, quadratic: 0.3, offset: 0.0 };
        spec.site2.inter_arrival = DistributionSpec::Weibull { shape: 1.5, scale: 1.2 };
        let g = grid();
        let op = Stage2Operator::new(&spec, &g).unwrap();
        let delta = ValueField::from_fn(op.axes(), |p| 0.2 * (p[0] * 0.5).sin() + 0.1 * p[1] + 0.3 * p[2]);
        let t = op.kernel.time_axis();
        for (ia, ib, ic) in [(0, 0, 8), (4, 2, 5), (10, 7, 1)] {
            let nodes = op.node_profile(&delta, ia, ib, ic);
            let a = g.mass_axis().node(ia);
            let direct = phi2_profile(&spec, &g, &delta, a, t.node(ib), t.node(ic)).unwrap();
            assert_eq!(nodes.phi.len(), direct.phi.len());
            for (x, y) in nodes.phi.iter().zip(&direct.phi) {
                assert!((x - y).abs() < 1e-9, "({ia},{ib},{ic}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn apply_closed_forms_from_zero() {
        // unprofitable: alpha nu <= kappa
        let spec = linear_spec(1.0, 0.5, 0.8, 2.0);
        let (v, r) = apply_phi2(&spec, &grid(), &Stage2Operator::new(&spec, &grid()).unwrap().zero_field()).unwrap();
        assert_eq!(v.sup_norm(), 0.0);
        assert_eq!(r.sup_norm(), 0.0);

        // profitable: r* = c and value (αν-κ)(1-e^{-αc})/α
        let (alpha, nu, kappa) = (1.0, 1.0, 0.4);
        let spec = linear_spec(alpha, nu, kappa, 2.0);
        let op = Stage2Operator::new(&spec, &grid()).unwrap();
        let (v, r) = op.apply(&op.zero_field());
        let t = op.kernel.time_axis();
        for ic in 0..t.n {
            let c = t.node(ic);
            let want = (alpha * nu - kappa) * (1.0 - (-alpha * c).exp()) / alpha;
            assert!((v.get(&[3, ic]) - want).abs() < 1e-12);
            assert!((r.get(&[3, ic]) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_fixed_point_is_rho_times_c() {
        let (alpha, nu, kappa) = (1.0, 1.0, 0.4);
        let spec = linear_spec(alpha, nu, kappa, 2.0);
        let sol = solve_y2(&spec, &grid(), 1e-9).unwrap();
        let rho = alpha * nu - kappa;
        for a in [0.0, 2.5, 9.0] {
            for c in [0.0, 0.7, 2.0] {
                assert!((sol.y2_at(a, 0.0, c) - rho * c).abs() < 1e-8);
            }
        }
        assert!(sol.residual <= 1e-9 * (1.0 - sol.modulus) / sol.modulus);

        let spec = linear_spec(1.0, 0.5, 0.8, 2.0);
        let sol = solve_y2(&spec, &grid(), 1e-9).unwrap();
        assert_eq!(sol.y2.sup_norm(), 0.0);
        assert_eq!(sol.r_star2.sup_norm(), 0.0);
    }

    #[test]
    fn full_layout_agrees_with_collapsed_for_linear_cost() {
        let spec = linear_spec(1.2, 0.9, 0.5, 2.0);
        let mut s = spec.clone();
        s.site2.utility = UtilitySpec::SaturatingExp { bound: 3.0, rate: 0.5 };
        let g = grid();
        let a = solve_with(&Stage2Operator::new(&s, &g).unwrap(), 1e-10).unwrap();
        let b = solve_with(&Stage2Operator::full(&s, &g).unwrap(), 1e-10).unwrap();
        assert!(a.y2.axes().len() == 2 && b.y2.axes().len() == 3);
        let t = g.time_axis(s.horizon);
        for ia in 0..g.mass_nodes {
            for ic in 0..t.n {
                for ib in 0..(t.n - ic) {
                    let x = a.y2.get(&[ia, ic]);
                    let y = b.y2.get(&[ia, ib, ic]);
                    assert!((x - y).abs() < 1e-10, "{ia},{ib},{ic}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn finite_k_starts_at_zero_and_increases() {
        let mut spec = linear_spec(1.0, 1.0, 0.3, 2.0);
        spec.site2.utility = UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.7 };
        spec.site2.cost = CostSpec::Quadratic { linear: 0.1, quadratic: 0.2, offset: 0.0 };
        let ys = finite_k_y2(&spec, &grid(), 5).unwrap();
        assert_eq!(ys.len(), 6);
        assert_eq!(ys[0].sup_norm(), 0.0);
        for w in ys.windows(2) {
            for (lo, hi) in w[0].values().iter().zip(w[1].values()) {
                assert!(hi >= &(lo - 1e-12));
            }
        }
        assert_eq!(finite_k_y2(&spec, &grid(), 0).unwrap().len(), 1);
    }

    #[test]
    fn gamma_value_examples() {
        let (alpha, nu, kappa) = (1.0, 1.0, 0.4);
        let spec = linear_spec(alpha, nu, kappa, 2.0);
        let sol = solve_y2(&spec, &grid(), 1e-10).unwrap();
        assert_eq!(gamma_value(&spec, &sol, 1.0, 0.5, 2.0, 2.1), -spec.penalty());
        let at_end = gamma_value(&spec, &sol, 1.0, 0.5, 2.0, 2.0);
        assert!((at_end - payoff_w2(&spec, 1.0, 0.5, 2.0, 2.0)).abs() < 1e-12);
        let s = 0.5;
        let got = gamma_value(&spec, &sol, 1.0, s, 1.0, s);
        let want = 1.0 - kappa * s + (alpha * nu - kappa) * (2.0 - s);
        assert!((got - want).abs() < 1e-8);
    }
}
