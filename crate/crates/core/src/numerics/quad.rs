//! Gauss–Legendre rules and cumulative trapezoid sums.

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        if b == a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `∫_a^b f`, one panel per piece between sorted `breaks` inside `(a, b)`.
    pub fn integrate_split(&self, a: f64, b: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        for &p in breaks {
            if p > lo && p < b {
                total += self.integrate(lo, p, &f);
                lo = p;
            }
        }
        total + self.integrate(lo, b, &f)
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cumulative trapezoid integral of `integrand[i] * weights[i]` on a
/// uniform grid with spacing `h`. `out[0] = 0`.
pub fn running_integral(integrand: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
    assert_eq!(integrand.len(), weights.len(), "integrand and weights differ in length");
    let mut out = Vec::with_capacity(integrand.len());
    if integrand.is_empty() {
        return out;
    }
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..integrand.len() {
        acc += 0.5 * h * (integrand[i - 1] * weights[i - 1] + integrand[i] * weights[i]);
        out.push(acc);
    }
    out
}
