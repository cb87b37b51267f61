use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DistributionSpec, ProblemSpec};
use crate::numerics::expect::expect_with;

/// A uniform axis `lo, lo + h, ..., hi` with `n` nodes. `n == 1` is a
/// collapsed axis that carries a single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 1, "axis needs at least one node");
        Axis { lo, hi, n }
    }

    pub fn collapsed(at: f64) -> Self {
        Axis { lo: at, hi: at, n: 1 }
    }

    pub fn step(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Cell index and weight of the upper node for linear interpolation,
    /// clamping `x` into `[lo, hi]`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        if self.n <= 1 || !(x > self.lo) {
            return (0, 0.0);
        }
        if x >= self.hi {
            return (self.n - 2, 1.0);
        }
        let u = (x - self.lo) / self.step();
        let i = (u.floor() as usize).min(self.n - 2);
        (i, u - i as f64)
    }
}

/// Discretisation of the `(mass, elapsed, remaining)` domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Mass truncation `A`; queries above it clamp.
    pub mass_max: f64,
    pub mass_nodes: usize,
    /// Shared by the elapsed and remaining axes over `[0, t0]`.
    pub time_nodes: usize,
    /// Gauss–Legendre points per quadrature panel.
    pub quadrature_nodes: usize,
}

impl GridSpec {
    pub fn new(mass_max: f64, mass_nodes: usize, time_nodes: usize, quadrature_nodes: usize) -> Result<Self> {
        let g = GridSpec {
            mass_max,
            mass_nodes,
            time_nodes,
            quadrature_nodes,
        };
        g.check()?;
        Ok(g)
    }

    /// A grid whose mass truncation comes from [`default_mass_max`].
    pub fn for_problem(spec: &ProblemSpec, mass_nodes: usize, time_nodes: usize, quadrature_nodes: usize) -> Result<Self> {
        GridSpec::new(default_mass_max(spec), mass_nodes, time_nodes, quadrature_nodes)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.mass_max > 0.0 && self.mass_max.is_finite()) {
            return Err(Error::Domain(format!("mass_max must be positive, got {}", self.mass_max)));
        }
        if self.mass_nodes < 2 || self.time_nodes < 2 {
            return Err(Error::Domain("grids need at least two nodes per axis".into()));
        }
        if self.quadrature_nodes < 1 {
            return Err(Error::Domain("quadrature_nodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mass_axis(&self) -> Axis {
        Axis::new(0.0, self.mass_max, self.mass_nodes)
    }

    pub fn time_axis(&self, horizon: f64) -> Axis {
        Axis::new(0.0, horizon, self.time_nodes)
    }

    /// The grid with every node count doubled (in intervals).
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            mass_nodes: 2 * self.mass_nodes - 1,
            time_nodes: 2 * self.time_nodes - 1,
            quadrature_nodes: 2 * self.quadrature_nodes,
            ..*self
        }
    }
}

/// Tail probability targeted by the default mass truncation.
const MASS_TAIL: f64 = 1e-4;

/// `ln E e^{θX}` where finite, and the open range of `θ` it is used on.
fn log_mgf(dist: &DistributionSpec, theta: f64) -> f64 {
    match *dist {
        DistributionSpec::Exponential { rate } => (rate / (rate - theta)).ln(),
        DistributionSpec::Gamma { shape, rate } => shape * (rate / (rate - theta)).ln(),
        DistributionSpec::Uniform { low, high } => {
            ((theta * high).exp() - (theta * low).exp()).ln() - (theta * (high - low)).ln()
        }
        DistributionSpec::Weibull { .. } => expect_with(dist, &[], |x| (theta * x).exp()).ln(),
    }
}

fn mgf_radius(dist: &DistributionSpec) -> Option<f64> {
    match *dist {
        DistributionSpec::Exponential { rate } | DistributionSpec::Gamma { rate, .. } => Some(rate),
        DistributionSpec::Uniform { high, .. } => Some(20.0 / high),
        // keep the numerically integrated mgf well inside its domain
        DistributionSpec::Weibull { shape, scale } if shape >= 1.0 => Some(0.5 / scale),
        DistributionSpec::Weibull { .. } => None,
    }
}

/// Chernoff bound: smallest `A` with `inf_θ e^{-θA} M(θ)^n <= tail`, with
/// `M` the larger of the catch mgfs.
fn chernoff_mass(laws: &[&DistributionSpec], n: usize, tail: f64) -> Option<f64> {
    let radius = laws.iter().map(|d| mgf_radius(d)).collect::<Option<Vec<_>>>()?;
    let radius = radius.into_iter().fold(f64::INFINITY, f64::min);
    (1..64)
        .map(|k| radius * k as f64 / 64.0)
        .map(|theta| {
            let lm = laws.iter().map(|d| log_mgf(d, theta)).fold(f64::NEG_INFINITY, f64::max);
            (n as f64 * lm - tail.ln()) / theta
        })
        .filter(|a| a.is_finite())
        .reduce(f64::min)
}

/// Mass truncation with `P(M_t0 > A) < 1e-4`: the catch count is bounded
/// by a Poisson quantile at the faster site's rate, and the sum of that
/// many catches by a Chernoff bound (or a union bound over single catches
/// for laws without a usable moment generating function).
/// When both utilities saturate, `A` is capped at the mass where both are
/// within `1e-6` of their bounds, since clamping past that point changes
/// payoffs by at most that much.
pub fn default_mass_max(spec: &ProblemSpec) -> f64 {
    let sites = [&spec.site1, &spec.site2];
    let rate = sites
        .iter()
        .map(|s| 1.0 / s.inter_arrival.mean())
        .fold(0.0, f64::max);
    let mean_count = rate * spec.horizon;
    let half = 0.5 * MASS_TAIL;
    // smallest n with P(N > n) < half
    let mut pmf = (-mean_count).exp();
    let mut cdf = pmf;
    let mut n = 0usize;
    while 1.0 - cdf >= half && n < 100_000 {
        n += 1;
        pmf *= mean_count / n as f64;
        cdf += pmf;
    }
    let n = n.max(1);
    let per_catch = sites
        .iter()
        .map(|s| s.catch_size.quantile(1.0 - half / n as f64))
        .fold(0.0, f64::max);
    let union = n as f64 * per_catch;
    let laws = [&spec.site1.catch_size, &spec.site2.catch_size];
    let tail = chernoff_mass(&laws, n, half).map_or(union, |a| a.min(union));

    let sat: Option<Vec<f64>> = sites.iter().map(|s| s.utility.saturation_mass(1e-6)).collect();
    let a = match sat {
        Some(v) => tail.min(v.into_iter().fold(0.0, f64::max)),
        None => tail,
    };
    if a > 0.0 && a.is_finite() {
        a
    } else {
        1.0
    }
}
