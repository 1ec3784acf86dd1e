//! Gauss-Legendre quadrature: fixed-order tensor rules plus an adaptive
//! two-dimensional panel scheme.

/// Nodes and weights of the `q`-point Gauss-Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre recurrence; accurate to
/// machine precision for the orders used here.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let m = q.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_q and P_q' at x by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // q == 1 special case: p1 = x, p0 = 1
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    (nodes, weights)
}

/// A reusable rule scaled to arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }

    /// Integrate `f` over the rectangle [ax, bx] x [ay, by].
    pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
        &self,
        ax: f64,
        bx: f64,
        ay: f64,
        by: f64,
        mut f: F,
    ) -> f64 {
        let cx = 0.5 * (ax + bx);
        let hx = 0.5 * (bx - ax);
        let cy = 0.5 * (ay + by);
        let hy = 0.5 * (by - ay);
        let mut acc = 0.0;
        for (&sx, &wx) in self.nodes.iter().zip(&self.weights) {
            let x = cx + hx * sx;
            let mut row = 0.0;
            for (&sy, &wy) in self.nodes.iter().zip(&self.weights) {
                row += wy * f(x, cy + hy * sy);
            }
            acc += wx * row;
        }
        acc * hx * hy
    }

    /// Integrate `f` over an axis-aligned box given by per-axis bounds.
    pub fn integrate_nd<F: FnMut(&[f64]) -> f64>(&self, lo: &[f64], hi: &[f64], mut f: F) -> f64 {
        assert_eq!(lo.len(), hi.len());
        let d = lo.len();
        let q = self.nodes.len();
        let mut point = vec![0.0; d];
        let mut idx = vec![0usize; d];
        let mut acc = crate::stats::KahanSum::new();
        loop {
            let mut w = 1.0;
            for k in 0..d {
                let c = 0.5 * (lo[k] + hi[k]);
                let h = 0.5 * (hi[k] - lo[k]);
                point[k] = c + h * self.nodes[idx[k]];
                w *= self.weights[idx[k]] * h;
            }
            acc.add(w * f(&point));
            // odometer
            let mut k = 0;
            loop {
                if k == d {
                    return acc.total();
                }
                idx[k] += 1;
                if idx[k] < q {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// Adaptive 2-D quadrature by quadrant subdivision.
///
/// Each panel is estimated with the base rule and with the rule applied to
/// its four quadrants; panels whose discrepancy exceeds the local tolerance
/// are split. Suitable for smooth integrands such as copula densities.
pub fn adaptive_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    tol: f64,
) -> f64 {
    let rule = GaussRule::new(8);
    let mut total = crate::stats::KahanSum::new();
    // explicit stack of (panel, tol, depth)
    let mut stack = vec![(ax, bx, ay, by, tol, 0u32)];
    while let Some((x0, x1, y0, y1, tol, depth)) = stack.pop() {
        let coarse = rule.integrate_2d(x0, x1, y0, y1, f);
        let mx = 0.5 * (x0 + x1);
        let my = 0.5 * (y0 + y1);
        let quads = [
            (x0, mx, y0, my),
            (mx, x1, y0, my),
            (x0, mx, my, y1),
            (mx, x1, my, y1),
        ];
        let fine: f64 = quads
            .iter()
            .map(|&(a, b, c, d)| rule.integrate_2d(a, b, c, d, f))
            .sum();
        if (fine - coarse).abs() <= tol || depth >= 24 {
            total.add(fine);
        } else {
            for &(a, b, c, d) in &quads {
                stack.push((a, b, c, d, tol / 4.0, depth + 1));
            }
        }
    }
    total.total()
}
