//! Expectations against the catch law, the marginal gain `Δ(a)`, and the
//! arrival hazard.

use super::field::ValueField;
use super::grid::Axis;
use super::quad::GaussLegendre;
use crate::error::{Error, Result};
use crate::model::{DistributionSpec, SiteModel, UtilitySpec};

/// Points per panel for the generic expectation.
const EXPECT_POINTS: usize = 16;

/// Hazard `f(z) / (1 - F(z))`.
pub fn hazard(dist: &DistributionSpec, z: f64) -> Result<f64> {
    let sf = dist.sf(z);
    if !(sf > 0.0) {
        return Err(Error::Domain(format!("hazard undefined at z = {z}: survival is zero")));
    }
    Ok(dist.pdf(z) / sf)
}

/// Panel boundaries that follow the law's own scale: dyadic quantiles on
/// both tails plus the density's kinks.
fn panels(dist: &DistributionSpec) -> Vec<f64> {
    let (lo, hi) = dist.effective_support();
    let mut pts = vec![lo];
    if let DistributionSpec::Uniform { .. } = dist {
        pts.push(hi);
        return pts;
    }
    for k in (1..=24).rev() {
        pts.push(dist.quantile(0.5f64.powi(k)));
    }
    let mut k = 1;
    loop {
        let u = 1.0 - 0.5f64.powi(k);
        if 1.0 - u < 1e-14 {
            break;
        }
        pts.push(dist.quantile(u));
        k += 1;
    }
    pts.push(hi);
    pts.extend(dist.breakpoints());
    pts.retain(|p| p.is_finite() && *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
    pts
}

/// `E f(X)` over the effective support, split at `extra` kinks of `f`.
pub fn expect_with(dist: &DistributionSpec, extra: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(EXPECT_POINTS);
    let mut pts = panels(dist);
    let (lo, hi) = (pts[0], *pts.last().unwrap());
    pts.extend(extra.iter().copied().filter(|p| *p > lo && *p < hi));
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| rule.integrate(w[0], w[1], |x| f(x) * dist.pdf(x)))
        .sum()
}

/// `E exp(-k X)`.
fn laplace(dist: &DistributionSpec, k: f64) -> f64 {
    match *dist {
        DistributionSpec::Exponential { rate } => rate / (rate + k),
        DistributionSpec::Gamma { shape, rate } => (rate / (rate + k)).powf(shape),
        DistributionSpec::Uniform { low, high } => {
            if k == 0.0 {
                1.0
            } else {
                ((-k * low).exp() - (-k * high).exp()) / (k * (high - low))
            }
        }
        DistributionSpec::Weibull { .. } => expect_with(dist, &[], |x| (-k * x).exp()),
    }
}

/// Evaluates `Δ(a) = E[g(a + X) - g(a)]` for one site, using closed forms
/// where the utility allows.
#[derive(Clone, Debug)]
pub struct DeltaEvaluator {
    kind: DeltaKind,
}

#[derive(Clone, Debug)]
enum DeltaKind {
    Constant(f64),
    /// `bound * (1 - E e^{-kX}) * e^{-k a}`
    Exponential { scale: f64, rate: f64 },
    Quadrature { utility: UtilitySpec, catch: DistributionSpec },
}

impl DeltaEvaluator {
    pub fn new(site: &SiteModel) -> Self {
        let kind = match site.utility {
            UtilitySpec::Linear { slope } => DeltaKind::Constant(slope * site.catch_size.mean()),
            UtilitySpec::SaturatingExp { bound, rate } => DeltaKind::Exponential {
                scale: bound * (1.0 - laplace(&site.catch_size, rate)),
                rate,
            },
            UtilitySpec::PowerCapped { .. } => DeltaKind::Quadrature {
                utility: site.utility.clone(),
                catch: site.catch_size.clone(),
            },
        };
        DeltaEvaluator { kind }
    }

    pub fn at(&self, a: f64) -> f64 {
        match &self.kind {
            DeltaKind::Constant(v) => *v,
            DeltaKind::Exponential { scale, rate } => scale * (-rate * a).exp(),
            DeltaKind::Quadrature { utility, catch } => {
                let base = utility.value(a);
                let kinks: Vec<f64> = utility.breakpoints().into_iter().map(|p| p - a).collect();
                expect_with(catch, &kinks, |x| utility.value(a + x) - base)
            }
        }
    }
}

/// `Δ(a)` for one site.
pub fn delta_expect(site: &SiteModel, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("negative mass {a}")));
    }
    let v = DeltaEvaluator::new(site).at(a);
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "E[g(a+X) - g(a)] is not finite at a = {a} for {:?} with {:?}",
            site.utility, site.catch_size
        )));
    }
    Ok(v)
}

/// `E field(a + X, b, c)` by quadrature against the catch density, with
/// interpolated lookups and clamping above the mass truncation.
pub fn expect_over_catch(site: &SiteModel, field: &ValueField, b: f64, c: f64, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("negative mass {a}")));
    }
    let catch = &site.catch_size;
    let Some(mass) = field.axis(super::AxisKind::Mass).copied() else {
        // no mass dependence
        return Ok(field.eval_state(a, b, c));
    };
    let top = mass.hi - a;
    let at_top = field.eval_state(mass.hi, b, c);
    if top <= 0.0 {
        return Ok(at_top);
    }
    let kinks: Vec<f64> = (0..mass.n).map(|j| mass.node(j) - a).filter(|x| *x > 0.0).collect();
    let rule = GaussLegendre::new(EXPECT_POINTS);
    let mut pts = panels(catch);
    pts.extend(kinks);
    pts.push(top);
    pts.retain(|p| *p <= top);
    pts.sort_by(f64::total_cmp);
    let body: f64 = pts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| rule.integrate(w[0], w[1], |x| field.eval_state(a + x, b, c) * catch.pdf(x)))
        .sum();
    let v = body + catch.sf(top) * at_top;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite catch expectation at a = {a}")));
    }
    Ok(v)
}

/// Catch-expectation weights aligned with a uniform mass axis.
///
/// For a piecewise-linear function `y` on the axis (constant past the top
/// node), `E y(a_i + X) = Σ_d [w0[d] y[i+d] + w1[d] y[i+d+1]] + sf_i y[top]`,
/// where the sum runs over the cells above `a_i`. The weights depend on the
/// offset `d` only.
#[derive(Clone, Debug)]
pub struct CatchKernel {
    w0: Vec<f64>,
    w1: Vec<f64>,
    /// `P(X > j h)` for `j = 0..n`.
    tail: Vec<f64>,
}

impl CatchKernel {
    pub fn new(catch: &DistributionSpec, mass: &Axis, points: usize) -> Self {
        let n = mass.n;
        let h = mass.step();
        let rule = GaussLegendre::new(points);
        let breaks = catch.quadrature_breaks(h);
        let mut w0 = Vec::with_capacity(n.saturating_sub(1));
        let mut w1 = Vec::with_capacity(n.saturating_sub(1));
        let (_, support_hi) = catch.effective_support();
        for d in 0..n.saturating_sub(1) {
            let x0 = d as f64 * h;
            let x1 = (d + 1) as f64 * h;
            let total = catch.cdf(x1) - catch.cdf(x0);
            let upper = if x0 >= support_hi {
                0.0
            } else {
                rule.integrate_split(x0, x1.min(support_hi), &breaks, |x| (x - x0) / h * catch.pdf(x))
            };
            let upper = upper.clamp(0.0, total.max(0.0));
            w1.push(upper);
            w0.push(total - upper);
        }
        let tail = (0..n).map(|j| catch.sf(j as f64 * h)).collect();
        CatchKernel { w0, w1, tail }
    }

    /// Expectation along one line of mass values.
    pub fn apply_line(&self, line: &[f64], out: &mut [f64]) {
        let n = line.len();
        let top = line[n - 1];
        for i in 0..n {
            let mut acc = 0.0;
            for d in 0..(n - 1 - i) {
                acc += self.w0[d] * line[i + d] + self.w1[d] * line[i + d + 1];
            }
            out[i] = acc + self.tail[n - 1 - i] * top;
        }
    }
}

/// `E field(a + X, ...)` at every node of a field whose first axis is mass.
pub fn expect_field(catch: &DistributionSpec, field: &ValueField, points: usize) -> ValueField {
    let (kind, mass) = field.axes()[0];
    assert_eq!(kind, super::AxisKind::Mass, "first axis must be mass");
    let kernel = CatchKernel::new(catch, &mass, points);
    let na = mass.n;
    let stride = field.values().len() / na;
    let src = field.values();
    let mut out = vec![0.0; src.len()];
    let mut line = vec![0.0; na];
    let mut res = vec![0.0; na];
    for j in 0..stride {
        for i in 0..na {
            line[i] = src[i * stride + j];
        }
        kernel.apply_line(&line, &mut res);
        for i in 0..na {
            out[i * stride + j] = res[i];
        }
    }
    ValueField::new(field.axes().to_vec(), out).expect("expectation of a finite field is finite")
}
