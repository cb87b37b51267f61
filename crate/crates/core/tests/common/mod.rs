//! Instances shared by the integration tests.
#![allow(dead_code)]

use twostop::model::{CostSpec, DistributionSpec, ProblemSpec, SiteModel, UtilitySpec};
use twostop::numerics::GridSpec;
use twostop::policy::DoublePolicy;
use twostop::stage1::{solve_y1, Stage1Solution};
use twostop::stage2::{solve_y2, Stage2Solution};

pub fn exp(rate: f64) -> DistributionSpec {
    DistributionSpec::Exponential { rate }
}

pub fn linear_cost(rate: f64) -> CostSpec {
    CostSpec::Linear { rate, offset: 0.0 }
}

/// Exponential arrivals at `alpha`, unit-mean exponential catches, `g(x) = x`,
/// `c(t) = kappa t`: the net rate is `alpha - kappa`.
pub fn linear_site(alpha: f64, kappa: f64) -> SiteModel {
    SiteModel {
        inter_arrival: exp(alpha),
        catch_size: exp(1.0),
        utility: UtilitySpec::Linear { slope: 1.0 },
        cost: linear_cost(kappa),
    }
}

pub fn linear_pair(site1: (f64, f64), site2: (f64, f64), horizon: f64) -> ProblemSpec {
    ProblemSpec {
        site1: linear_site(site1.0, site1.1),
        site2: linear_site(site2.0, site2.1),
        horizon,
    }
}

/// Exponential arrivals, `g(x) = 1 - e^{-x}`, unit exponential catches and
/// linear cost: stopping is optimal once `alpha e^{-a} / 2 <= kappa`.
pub fn saturating_site(alpha: f64, kappa: f64) -> SiteModel {
    SiteModel {
        inter_arrival: exp(alpha),
        catch_size: exp(1.0),
        utility: UtilitySpec::SaturatingExp { bound: 1.0, rate: 1.0 },
        cost: linear_cost(kappa),
    }
}

pub fn threshold_instance() -> ProblemSpec {
    ProblemSpec {
        site1: saturating_site(1.5, 0.2),
        site2: saturating_site(2.0, 0.25),
        horizon: 2.0,
    }
}

/// Weibull arrivals after the switch and a quadratic cost.
pub fn weibull_instance() -> ProblemSpec {
    ProblemSpec {
        site1: SiteModel {
            inter_arrival: exp(1.5),
            catch_size: exp(1.0),
            utility: UtilitySpec::SaturatingExp { bound: 3.0, rate: 0.5 },
            cost: linear_cost(0.3),
        },
        site2: SiteModel {
            inter_arrival: DistributionSpec::Weibull { shape: 1.5, scale: 0.8 },
            catch_size: exp(1.0),
            utility: UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.8 },
            cost: CostSpec::Quadratic { linear: 0.1, quadratic: 0.1, offset: 0.0 },
        },
        horizon: 3.0,
    }
}

/// Gamma arrivals and a capped power utility before the switch.
pub fn gamma_instance() -> ProblemSpec {
    ProblemSpec {
        site1: SiteModel {
            inter_arrival: DistributionSpec::Gamma { shape: 2.0, rate: 2.0 },
            catch_size: exp(1.0),
            utility: UtilitySpec::PowerCapped { scale: 1.0, exponent: 0.5, cap: 2.5 },
            cost: CostSpec::Quadratic { linear: 0.2, quadratic: 0.05, offset: 0.0 },
        },
        site2: SiteModel {
            inter_arrival: exp(2.0),
            catch_size: exp(1.0),
            utility: UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.6 },
            cost: linear_cost(0.5),
        },
        horizon: 3.0,
    }
}

/// One instance per catalog entry of every family, so each distribution,
/// utility and cost kind appears at least once at site 2.
pub fn catalog() -> Vec<(&'static str, ProblemSpec)> {
    let base = weibull_instance();
    let with2 = |site2: SiteModel| ProblemSpec {
        site2,
        ..base.clone()
    };
    vec![
        ("linear", linear_pair((1.5, 0.5), (1.0, 0.4), 2.0)),
        ("linear-unprofitable", linear_pair((0.5, 0.8), (0.5, 0.9), 2.0)),
        ("threshold", threshold_instance()),
        ("weibull", base.clone()),
        ("gamma", gamma_instance()),
        (
            "weibull-decreasing-hazard",
            with2(SiteModel {
                inter_arrival: DistributionSpec::Weibull { shape: 0.8, scale: 1.5 },
                catch_size: DistributionSpec::Gamma { shape: 2.0, rate: 2.0 },
                utility: UtilitySpec::PowerCapped { scale: 1.0, exponent: 0.7, cap: 2.0 },
                cost: CostSpec::SaturatingExp { bound: 1.0, scale: 1.0, offset: 0.0 },
            }),
        ),
        (
            "uniform",
            with2(SiteModel {
                inter_arrival: DistributionSpec::Uniform { low: 0.1, high: 4.0 },
                catch_size: DistributionSpec::Uniform { low: 0.5, high: 1.5 },
                utility: UtilitySpec::SaturatingExp { bound: 2.0, rate: 0.5 },
                cost: linear_cost(0.2),
            }),
        ),
        (
            "weibull-catch",
            with2(SiteModel {
                inter_arrival: DistributionSpec::Gamma { shape: 1.5, rate: 1.0 },
                catch_size: DistributionSpec::Weibull { shape: 2.0, scale: 1.0 },
                utility: UtilitySpec::Linear { slope: 0.8 },
                cost: CostSpec::Quadratic { linear: 0.1, quadratic: 0.2, offset: 0.0 },
            }),
        ),
    ]
}

pub struct Solved {
    pub grid: GridSpec,
    pub s2: Stage2Solution,
    pub s1: Stage1Solution,
}

impl Solved {
    pub fn new(spec: &ProblemSpec, mass_nodes: usize, time_nodes: usize, eps: f64) -> Self {
        let grid = GridSpec::for_problem(spec, mass_nodes, time_nodes, 8).expect("grid");
        let s2 = solve_y2(spec, &grid, eps).expect("stage 2 converges");
        let s1 = solve_y1(spec, &s2, &grid, eps).expect("stage 1 converges");
        Solved { grid, s2, s1 }
    }

    pub fn value(&self) -> f64 {
        self.s1.total_value
    }

    pub fn policy(&self, spec: &ProblemSpec) -> DoublePolicy {
        DoublePolicy::solved(spec, &self.grid, &self.s1, &self.s2)
    }
}
