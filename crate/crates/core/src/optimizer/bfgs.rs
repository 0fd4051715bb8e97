//! Dense BFGS with a strong-Wolfe line search.

/// Why a BFGS run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BfgsStatus {
    /// Gradient infinity-norm fell below the tolerance.
    Converged,
    /// Accepted step became shorter than the step tolerance.
    StepCollapse,
    MaxIterations,
    MaxEvaluations,
    /// No step along the search direction reduced the objective.
    LineSearchFailed,
    /// The starting point has a non-finite value or gradient.
    NonFiniteStart,
}

#[derive(Clone, Debug)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Stop when `‖s‖∞ ≤ step_tol`.
    pub step_tol: f64,
    /// Cap on objective evaluations; `None` for unlimited.
    pub max_evals: Option<usize>,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 50,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            max_evals: None,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub status: BfgsStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start and after every accepted iterate.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counted<'a, F> {
    f: &'a mut F,
    evals: usize,
    max: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Counted<'_, F> {
    fn exhausted(&self) -> bool {
        self.evals >= self.max
    }

    fn call(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evals += 1;
        let (f, g) = (self.f)(x);
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            (f, g)
        } else {
            (f64::INFINITY, g)
        }
    }
}

struct Point {
    a: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

fn trial<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(obj: &mut Counted<F>, x: &[f64], p: &[f64], a: f64) -> Point {
    let xt: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + a * pi).collect();
    let (f, g) = obj.call(&xt);
    let d = if f.is_finite() { dot(&g, p) } else { f64::NAN };
    Point { a, f, d, g }
}

/// Minimizer of the quadratic through `(lo.a, lo.f)` with slope `lo.d`, and `(hi.a, hi.f)`,
/// safeguarded to the interior of the bracket.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a0, a1) = (lo.a, hi.a);
    let w = a1 - a0;
    let mut a = 0.5 * (a0 + a1);
    if hi.f.is_finite() && lo.d.is_finite() {
        let denom = 2.0 * (hi.f - lo.f - lo.d * w);
        if denom > 0.0 {
            a = a0 - lo.d * w * w / denom;
        }
    }
    let (l, h) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let margin = 0.1 * (h - l);
    a.clamp(l + margin, h - margin)
}

/// Strong-Wolfe search along `p`. Returns the accepted point, or `None` when no
/// point with sufficient decrease was found.
fn line_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    d0: f64,
    p: &[f64],
    a_init: f64,
    opt: &BfgsOptions,
) -> Option<Point> {
    let armijo = |pt: &Point| pt.f <= f0 + opt.c1 * pt.a * d0;
    let curvature = |pt: &Point| pt.d.abs() <= -opt.c2 * d0;
    let mut prev = Point { a: 0.0, f: f0, d: d0, g: Vec::new() };
    let mut a = a_init;
    let mut best: Option<Point> = None;
    let keep = |pt: &Point, best: &mut Option<Point>| {
        if armijo(pt) && best.as_ref().is_none_or(|b| pt.f < b.f) {
            *best = Some(Point { a: pt.a, f: pt.f, d: pt.d, g: pt.g.clone() });
        }
    };
    let (mut lo, mut hi);
    let mut i = 0;
    loop {
        if obj.exhausted() {
            return best;
        }
        let cur = trial(obj, x, p, a);
        keep(&cur, &mut best);
        if !armijo(&cur) || (i > 0 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        i += 1;
        if i >= 20 {
            return best;
        }
        prev = cur;
        a *= 2.0;
    }
    for _ in 0..30 {
        if obj.exhausted() || (hi.a - lo.a).abs() < 1e-16 * lo.a.abs().max(1.0) {
            break;
        }
        let cur = trial(obj, x, p, interpolate(&lo, &hi));
        keep(&cur, &mut best);
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.d * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    best
}

/// Minimizes `fg`, which returns the value and gradient at a point. Non-finite
/// values are treated as `+∞` and rejected by the line search.
pub fn bfgs_minimize<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(mut fg: F, x0: &[f64], opt: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut obj = Counted { f: &mut fg, evals: 0, max: opt.max_evals.unwrap_or(usize::MAX) };
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.call(&x);
    let mut trace = vec![f];
    let done = |status, x, f, iterations, obj: &Counted<F>, trace| BfgsResult {
        x,
        f,
        status,
        iterations,
        evaluations: obj.evals,
        trace,
    };
    if !f.is_finite() {
        return done(BfgsStatus::NonFiniteStart, x, f, 0, &obj, trace);
    }
    // Inverse Hessian approximation, row-major; `None` means a scaled identity.
    let mut h: Option<Vec<f64>> = None;
    let mut h_scale = 1.0;
    let mut status = BfgsStatus::MaxIterations;
    let mut it = 0;
    while it < opt.max_iters {
        if inf_norm(&g) <= opt.grad_tol {
            status = BfgsStatus::Converged;
            break;
        }
        if obj.exhausted() {
            status = BfgsStatus::MaxEvaluations;
            break;
        }
        let mut p = match &h {
            Some(m) => (0..n).map(|i| -dot(&m[i * n..(i + 1) * n], &g)).collect::<Vec<_>>(),
            None => g.iter().map(|v| -h_scale * v).collect(),
        };
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) {
            h = None;
            p = g.iter().map(|v| -h_scale * v).collect();
            d0 = dot(&g, &p);
        }
        let a_init = if it == 0 && h.is_none() { (1.0 / dot(&g, &g).sqrt()).min(1.0) } else { 1.0 };
        let mut found = line_search(&mut obj, &x, f, d0, &p, a_init, opt);
        if found.is_none() && h.is_some() && !obj.exhausted() {
            // Retry along steepest descent with a fresh approximation.
            h = None;
            p = g.iter().map(|v| -h_scale * v).collect();
            d0 = dot(&g, &p);
            found = line_search(&mut obj, &x, f, d0, &p, (1.0 / dot(&g, &g).sqrt()).min(1.0), opt);
        }
        let Some(pt) = found else {
            status = if obj.exhausted() { BfgsStatus::MaxEvaluations } else { BfgsStatus::LineSearchFailed };
            break;
        };
        let s: Vec<f64> = p.iter().map(|v| pt.a * v).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        f = pt.f;
        g = pt.g;
        trace.push(f);
        it += 1;
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            let m = h.get_or_insert_with(|| {
                h_scale = sy / dot(&y, &y);
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = h_scale;
                }
                m
            });
            let hy: Vec<f64> = (0..n).map(|i| dot(&m[i * n..(i + 1) * n], &y)).collect();
            let rho = 1.0 / sy;
            let c = rho + rho * rho * dot(&y, &hy);
            for i in 0..n {
                let row = &mut m[i * n..(i + 1) * n];
                for j in 0..n {
                    row[j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if inf_norm(&s) <= opt.step_tol {
            status = BfgsStatus::StepCollapse;
            break;
        }
    }
    if it >= opt.max_iters && status == BfgsStatus::MaxIterations && inf_norm(&g) <= opt.grad_tol {
        status = BfgsStatus::Converged;
    }
    done(status, x, f, it, &obj, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(a: Vec<f64>) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) {
        move |x: &[f64]| {
            let f = x.iter().zip(&a).map(|(xi, ai)| (xi - ai).powi(2)).sum();
            let g = x.iter().zip(&a).map(|(xi, ai)| 2.0 * (xi - ai)).collect();
            (f, g)
        }
    }

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let a = vec![1.0, -2.0, 0.5];
        let r = bfgs_minimize(quadratic(a.clone()), &[10.0, 3.0, -7.0], &BfgsOptions::default());
        assert!(r.iterations <= 3, "{} iterations", r.iterations);
        for (x, e) in r.x.iter().zip(&a) {
            assert!((x - e).abs() < 1e-8);
        }
        assert_eq!(r.status, BfgsStatus::Converged);
    }

    #[test]
    fn rosenbrock_benchmark() {
        let opt = BfgsOptions { max_iters: 200, ..BfgsOptions::default() };
        let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], &opt);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?} {:?}", r.x, r.status);
    }

    #[test]
    fn trace_is_monotone() {
        let opt = BfgsOptions { max_iters: 200, ..BfgsOptions::default() };
        let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], &opt);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_region() {
        // log barrier undefined for x ≤ 0; minimum at x = 1 of x - ln x plus a pull toward -3
        let f = |x: &[f64]| {
            let v = x[0];
            if v <= 0.0 {
                (f64::NAN, vec![f64::NAN])
            } else {
                (v - v.ln() + 0.1 * (v + 3.0).powi(2), vec![1.0 - 1.0 / v + 0.2 * (v + 3.0)])
            }
        };
        let r = bfgs_minimize(f, &[5.0], &BfgsOptions::default());
        assert!(r.f.is_finite());
        assert!(r.x[0] > 0.0);
        let start = bfgs_minimize(f, &[-1.0], &BfgsOptions::default());
        assert_eq!(start.status, BfgsStatus::NonFiniteStart);
        assert_eq!(start.x, vec![-1.0]);
    }

    #[test]
    fn zero_iterations_keep_seed() {
        let opt = BfgsOptions { max_iters: 0, ..BfgsOptions::default() };
        let r = bfgs_minimize(quadratic(vec![1.0]), &[4.0], &opt);
        assert_eq!(r.x, vec![4.0]);
        assert_eq!(r.f, 9.0);
    }

    #[test]
    fn evaluation_budget() {
        let opt = BfgsOptions { max_iters: 1000, max_evals: Some(15), ..BfgsOptions::default() };
        let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], &opt);
        assert!(r.evaluations <= 15);
        assert_eq!(r.status, BfgsStatus::MaxEvaluations);
    }

    #[test]
    fn skips_update_without_curvature() {
        // Linear objective bounded below by a kink never produces positive sᵀy.
        let f = |x: &[f64]| (x[0].abs(), vec![x[0].signum()]);
        let r = bfgs_minimize(f, &[3.0], &BfgsOptions::default());
        assert!(r.f <= 3.0 && r.f.is_finite());
    }

    proptest! {
        #[test]
        fn quadratic_any_start(x0 in prop::collection::vec(-100.0f64..100.0, 4)) {
            let a = vec![0.3, -1.0, 2.0, 7.5];
            let r = bfgs_minimize(quadratic(a.clone()), &x0, &BfgsOptions::default());
            for (x, e) in r.x.iter().zip(&a) {
                prop_assert!((x - e).abs() < 1e-8);
            }
        }
    }
}
