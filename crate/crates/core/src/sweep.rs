//! Node-parallel sweep of the continuation operator shared by both stages.
//!
//! At a node with remaining horizon `c = ic * h` the profile
//!
//! ```text
//! phi(r) = ∫_0^r  f(z) [Δ(a) + E y(a + X, b + z, c - z)] - F̄(z) d(b + z) dz
//! ```
//!
//! is accumulated cell by cell along the anti-diagonal `(b + z, c - z)`,
//! which passes through grid nodes at every multiple of `h`. Between those
//! nodes the catch expectation `E y` is linear in `z`, so each cell
//! contributes
//!
//! ```text
//! (p0[k] + p1[k]) Δ(a) + p0[k] Ey[node k] + p1[k] Ey[node k+1] - D[e][k]
//! ```
//!
//! with `p0`, `p1` the arrival-density moments of the cell and `D` the
//! survival-weighted drift integral. The maximum over `r` is taken over the
//! cell boundaries, then refined by golden-section search inside the
//! adjacent cell when the integrand's sign says the maximum is interior.

use rayon::prelude::*;

use crate::model::{CostSpec, DistributionSpec, SiteModel};
use crate::numerics::{Axis, AxisKind, CatchKernel, DeltaEvaluator, GaussLegendre, GridSpec, ValueField};

/// Profiles flat to within this are treated as ties; the smallest `r` wins.
pub(crate) const TIE: f64 = 1e-10;

/// Gauss–Legendre points for partial cells during refinement.
const PARTIAL_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    /// `(mass, elapsed, remaining)` with `elapsed + remaining <= t0`.
    Full,
    /// `(mass, remaining)`; the drift does not depend on elapsed time.
    Collapsed,
    /// `(mass, remaining)` with elapsed time `t0 - remaining`.
    StageOne,
}

/// Drift rate `d(t)`: the cost derivative plus, for stage 1, the slope of
/// the after-switch continuation value.
#[derive(Clone, Debug)]
pub(crate) struct Drift {
    pub cost: CostSpec,
    /// Left-difference slopes of `ȳ2` on the time grid, index `j` covering
    /// `((j - 1) h, j h]`.
    pub slope: Option<Vec<f64>>,
}

impl Drift {
    fn rate(&self, last: usize, e: usize, k: usize, t: f64) -> f64 {
        let base = self.cost.derivative(t);
        match &self.slope {
            Some(s) => base + s[last - e - k],
            None => base,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SweepKernel {
    layout: Layout,
    mass: Axis,
    time: Axis,
    arrival: DistributionSpec,
    arrival_breaks: Vec<f64>,
    catch: CatchKernel,
    delta: Vec<f64>,
    p0: Vec<f64>,
    p1: Vec<f64>,
    /// `drift_table[e * last + k]`
    drift_table: Vec<f64>,
    drift: Drift,
    partial: GaussLegendre,
}

impl SweepKernel {
    pub fn new(site: &SiteModel, grid: &GridSpec, horizon: f64, layout: Layout, drift: Drift) -> Self {
        let mass = grid.mass_axis();
        let time = grid.time_axis(horizon);
        let last = time.n - 1;
        let h = time.step();
        let rule = GaussLegendre::new(grid.quadrature_nodes);
        let arrival = site.inter_arrival.clone();
        let arrival_breaks = arrival.quadrature_breaks(h);

        let mut p0 = Vec::with_capacity(last);
        let mut p1 = Vec::with_capacity(last);
        for k in 0..last {
            let z0 = time.node(k);
            let z1 = time.node(k + 1);
            let total = arrival.cdf(z1) - arrival.cdf(z0);
            let upper = rule
                .integrate_split(z0, z1, &arrival_breaks, |z| (z - z0) / h * arrival.pdf(z))
                .clamp(0.0, total.max(0.0));
            p1.push(upper);
            p0.push(total - upper);
        }

        let n_elapsed = match layout {
            Layout::Collapsed => 1,
            _ => time.n,
        };
        let mut drift_table = vec![0.0; n_elapsed * last];
        for e in 0..n_elapsed {
            let start = if layout == Layout::Collapsed { 0.0 } else { time.node(e) };
            for k in 0..last.saturating_sub(if layout == Layout::Collapsed { 0 } else { e }) {
                let z0 = time.node(k);
                let z1 = time.node(k + 1);
                drift_table[e * last + k] = rule.integrate_split(z0, z1, &arrival_breaks, |z| {
                    arrival.sf(z) * drift.rate(last, if layout == Layout::Collapsed { 0 } else { e }, k, start + z)
                });
            }
        }

        let delta_eval = DeltaEvaluator::new(site);
        let delta = (0..mass.n).map(|i| delta_eval.at(mass.node(i))).collect();
        let catch = CatchKernel::new(&site.catch_size, &mass, grid.quadrature_nodes);

        SweepKernel {
            layout,
            mass,
            time,
            arrival,
            arrival_breaks,
            catch,
            delta,
            p0,
            p1,
            drift_table,
            drift,
            partial: GaussLegendre::new(PARTIAL_POINTS),
        }
    }

    fn n_elapsed(&self) -> usize {
        match self.layout {
            Layout::Full => self.time.n,
            _ => 1,
        }
    }

    fn last(&self) -> usize {
        self.time.n - 1
    }

    pub fn axes(&self) -> Vec<(AxisKind, Axis)> {
        match self.layout {
            Layout::Full => vec![
                (AxisKind::Mass, self.mass),
                (AxisKind::Elapsed, self.time),
                (AxisKind::Remaining, self.time),
            ],
            _ => vec![(AxisKind::Mass, self.mass), (AxisKind::Remaining, self.time)],
        }
    }

    pub fn zero_field(&self) -> ValueField {
        ValueField::zeros(self.axes())
    }

    fn flat(&self, ia: usize, ib: usize, ic: usize) -> usize {
        (ia * self.n_elapsed() + ib) * self.time.n + ic
    }

    fn is_valid(&self, ib: usize, ic: usize) -> bool {
        self.layout != Layout::Full || ib + ic <= self.last()
    }

    /// Elapsed-time index that selects the drift row.
    fn elapsed_index(&self, ib: usize, ic: usize) -> usize {
        match self.layout {
            Layout::Full => ib,
            Layout::Collapsed => 0,
            Layout::StageOne => self.last() - ic,
        }
    }

    fn elapsed_time(&self, e: usize) -> f64 {
        match self.layout {
            Layout::Collapsed => 0.0,
            _ => self.time.node(e),
        }
    }

    fn advance(&self, ib: usize, k: usize) -> usize {
        match self.layout {
            Layout::Full => ib + k,
            _ => ib,
        }
    }

    /// `E y(a_i + X, ., .)` at every node.
    fn expected(&self, y: &[f64]) -> Vec<f64> {
        let na = self.mass.n;
        let nb = self.n_elapsed();
        let nc = self.time.n;
        let lines: Vec<Vec<f64>> = (0..nb * nc)
            .into_par_iter()
            .map(|bc| {
                let (ib, ic) = (bc / nc, bc % nc);
                let line: Vec<f64> = (0..na).map(|ia| y[self.flat(ia, ib, ic)]).collect();
                let mut out = vec![0.0; na];
                if self.is_valid(ib, ic) {
                    self.catch.apply_line(&line, &mut out);
                }
                out
            })
            .collect();
        let mut ey = vec![0.0; y.len()];
        for (bc, line) in lines.into_iter().enumerate() {
            let (ib, ic) = (bc / nc, bc % nc);
            for (ia, v) in line.into_iter().enumerate() {
                ey[self.flat(ia, ib, ic)] = v;
            }
        }
        ey
    }

    /// Cumulative profile `phi(k h)`, `k = 0..=ic`, at one node.
    fn cumulative(&self, ey: &[f64], ia: usize, ib: usize, ic: usize) -> Vec<f64> {
        let last = self.last();
        let e = self.elapsed_index(ib, ic);
        let delta = self.delta[ia];
        let mut cums = Vec::with_capacity(ic + 1);
        let mut acc = 0.0;
        cums.push(0.0);
        for k in 0..ic {
            let n0 = self.flat(ia, self.advance(ib, k), ic - k);
            let n1 = self.flat(ia, self.advance(ib, k + 1), ic - k - 1);
            acc += (self.p0[k] + self.p1[k]) * delta + self.p0[k] * ey[n0] + self.p1[k] * ey[n1]
                - self.drift_table[e * last + k];
            cums.push(acc);
        }
        cums
    }

    /// Integrand at `z` inside cell `k`.
    fn integrand(&self, ey0: f64, ey1: f64, delta: f64, e: usize, k: usize, z: f64) -> f64 {
        let h = self.time.step();
        let u = ((z - self.time.node(k)) / h).clamp(0.0, 1.0);
        let ey = (1.0 - u) * ey0 + u * ey1;
        self.arrival.pdf(z) * (delta + ey)
            - self.arrival.sf(z) * self.drift.rate(self.last(), e, k, self.elapsed_time(e) + z)
    }

    fn partial(&self, ey0: f64, ey1: f64, delta: f64, e: usize, k: usize, r: f64) -> f64 {
        let z0 = self.time.node(k);
        self.partial
            .integrate_split(z0, r, &self.arrival_breaks, |z| self.integrand(ey0, ey1, delta, e, k, z))
    }

    /// Maximise the profile at one node: `(value, maximiser)`.
    fn maximise(&self, ey: &[f64], ia: usize, ib: usize, ic: usize) -> (f64, f64) {
        let cums = self.cumulative(ey, ia, ib, ic);
        let e = self.elapsed_index(ib, ic);
        let delta = self.delta[ia];
        let cell = |k: usize| {
            let n0 = self.flat(ia, self.advance(ib, k), ic - k);
            let n1 = self.flat(ia, self.advance(ib, k + 1), ic - k - 1);
            (ey[n0], ey[n1])
        };
        maximise_profile(
            |k| self.time.node(k),
            &cums,
            |k, z| {
                let (ey0, ey1) = cell(k);
                self.integrand(ey0, ey1, delta, e, k, z)
            },
            |k, r| {
                let (ey0, ey1) = cell(k);
                self.partial(ey0, ey1, delta, e, k, r)
            },
        )
    }

    /// One application of the operator: `(Φ y, argmax r)` at every node.
    pub fn apply(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ey = self.expected(y);
        let nb = self.n_elapsed();
        let nc = self.time.n;
        let block = nb * nc;
        let mut values = vec![0.0; y.len()];
        let mut argmax = vec![0.0; y.len()];
        values
            .par_chunks_mut(block)
            .zip(argmax.par_chunks_mut(block))
            .enumerate()
            .for_each(|(ia, (vals, rs))| {
                for ib in 0..nb {
                    for ic in 0..nc {
                        if !self.is_valid(ib, ic) {
                            continue;
                        }
                        let (v, r) = self.maximise(&ey, ia, ib, ic);
                        vals[ib * nc + ic] = v;
                        rs[ib * nc + ic] = r;
                    }
                }
                if self.layout == Layout::Full {
                    // outside b + c <= t0: copy the value at c = t0 - b
                    let last = self.last();
                    for ib in 0..nb {
                        for ic in (last - ib + 1)..nc {
                            vals[ib * nc + ic] = vals[ib * nc + last - ib];
                            rs[ib * nc + ic] = rs[ib * nc + last - ib];
                        }
                    }
                }
            });
        (values, argmax)
    }

    /// The profile at a grid node, sampled at the cell boundaries.
    pub fn node_profile(&self, y: &[f64], ia: usize, ib: usize, ic: usize) -> Vec<f64> {
        let ey = self.expected(y);
        self.cumulative(&ey, ia, ib, ic)
    }

    pub fn time_axis(&self) -> Axis {
        self.time
    }
}

/// Maximise a profile given at the cell boundaries `node(0..=n)` by its
/// cumulative values. Each cell where the integrand turns from positive to
/// negative holds an interior local maximum, located by golden section
/// with `partial(k, r)` the integral from `node(k)` to `r`. Returns
/// `(value, r)` for the smallest `r` within [`TIE`] of the overall maximum.
///
/// Refining every such cell, not just those next to the best boundary,
/// keeps the result the true maximum of a profile that is monotone and
/// affine in the continuation values, which is what makes the operator a
/// contraction on arbitrary bounded inputs.
pub(crate) fn maximise_profile(
    node: impl Fn(usize) -> f64,
    cums: &[f64],
    integrand: impl Fn(usize, f64) -> f64,
    partial: impl Fn(usize, f64) -> f64,
) -> (f64, f64) {
    let mut candidates: Vec<(f64, f64)> = cums.iter().enumerate().map(|(k, &v)| (v, node(k))).collect();
    for k in 0..cums.len().saturating_sub(1) {
        let (z0, z1) = (node(k), node(k + 1));
        if integrand(k, z0) > 0.0 && integrand(k, z1) < 0.0 {
            let (r, v) = golden_max(z0, z1, |r| cums[k] + partial(k, r));
            candidates.push((v, r));
        }
    }
    let max = candidates.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    candidates
        .into_iter()
        .filter(|c| c.0 >= max - TIE)
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("the profile has at least one node")
}

/// Golden-section maximisation of a unimodal `f` on `[lo, hi]`; the
/// endpoints are candidates too.
pub(crate) fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = 1e-9 * (hi - lo).abs().max(f64::MIN_POSITIVE);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Outcome of a fixed-point run.
pub(crate) struct FixedPoint {
    pub values: Vec<f64>,
    pub argmax: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Stop threshold on successive updates that bounds the distance to the
/// fixed point by `eps` (Banach a-priori bound).
pub(crate) fn update_threshold(eps: f64, q: f64) -> f64 {
    if q <= 0.0 {
        f64::INFINITY
    } else {
        eps * (1.0 - q) / q
    }
}

pub(crate) fn iteration_cap(eps: f64, q: f64) -> usize {
    if q <= 0.0 {
        return 2;
    }
    let n = (eps.ln() / q.ln()).ceil();
    (10.0 * n.max(1.0)) as usize
}

/// `max_iterations` overrides the default [`iteration_cap`].
pub(crate) fn iterate(kernel: &SweepKernel, eps: f64, q: f64, max_iterations: Option<usize>) -> crate::Result<FixedPoint> {
    let target = update_threshold(eps, q);
    let cap = max_iterations.unwrap_or_else(|| iteration_cap(eps, q)).max(1);
    let mut y = vec![0.0; kernel.zero_field().values().len()];
    let mut iterations = 0;
    loop {
        let (next, argmax) = kernel.apply(&y);
        iterations += 1;
        let residual = next.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        y = next;
        if residual <= target {
            return Ok(FixedPoint {
                values: y,
                argmax,
                iterations,
                residual,
            });
        }
        if iterations >= cap {
            return Err(crate::Error::Convergence {
                iterations,
                residual,
                target,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_maximum() {
        let (x, v) = golden_max(0.0, 2.0, |x| -(x - 0.7f64).powi(2) + 1.0);
        assert!((x - 0.7).abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-15);
        let (x, _) = golden_max(0.0, 1.0, |x| x);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn every_interior_maximum_is_refined() {
        // integrand cos(z) on [0, 4π] split into unit cells: the interior
        // maxima at π/2 and 5π/2 tie, and the smaller wins
        let node = |k: usize| k as f64;
        let cums: Vec<f64> = (0..=12).map(|k| (k as f64).sin()).collect();
        let (v, r) = maximise_profile(node, &cums, |_, z| z.cos(), |k, r| r.sin() - (k as f64).sin());
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "{r}");
        // a flat profile stops at once
        let (v, r) = maximise_profile(node, &[0.0; 4], |_, _| 0.0, |_, _| 0.0);
        assert_eq!((v, r), (0.0, 0.0));
    }

    #[test]
    fn cap_and_threshold() {
        assert_eq!(update_threshold(1e-6, 0.0), f64::INFINITY);
        assert!((update_threshold(1e-6, 0.5) - 1e-6).abs() < 1e-20);
        assert_eq!(iteration_cap(1e-6, 0.5), 200);
    }
}
