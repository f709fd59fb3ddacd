//! Quadrature building blocks: adaptive 1-D Simpson, Gauss-Legendre nodes,
//! tensor midpoint grids over boxes, the Duffy map from the cube to the
//! standard simplex, and interval contraction of parameter boxes against
//! axis-aligned target regions.

use rayon::prelude::*;

use crate::geometry::Aabb;

/// Controls grid sizes for all tensor-product integrations.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Midpoint nodes per unit length along each axis.
    pub resolution: f64,
    /// Lower bound on nodes per axis, regardless of interval width.
    pub min_nodes: usize,
    /// Upper bound on nodes per axis.
    pub max_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            resolution: 24.0,
            min_nodes: 16,
            max_nodes: 220,
        }
    }
}

impl QuadratureConfig {
    pub fn with_resolution(resolution: f64) -> Self {
        QuadratureConfig {
            resolution,
            ..Default::default()
        }
    }

    /// Node count for an interval of the given width.
    pub fn nodes_for(&self, width: f64) -> usize {
        if !width.is_finite() || width <= 0.0 {
            return self.min_nodes;
        }
        ((width * self.resolution).ceil() as usize)
            .max(self.min_nodes)
            .min(self.max_nodes)
    }
}

/// Midpoint nodes and the common weight for `[lo, hi]` with `n` cells.
pub fn midpoint_nodes(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let h = (hi - lo) / n as f64;
    let nodes = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    (nodes, h)
}

/// Midpoint-rule integral of `f` over a bounded box, with per-axis node
/// counts from `cfg`. Evaluations run in parallel; the final sum is taken
/// in a fixed order so results are bit-reproducible.
pub fn integrate_box<F>(f: F, bounds: &Aabb, cfg: &QuadratureConfig) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if bounds.is_empty() || !bounds.is_bounded() {
        return 0.0;
    }
    let dim = bounds.dim();
    if dim == 0 {
        return f(&[]);
    }
    let mut axes = Vec::with_capacity(dim);
    let mut weight = 1.0;
    let mut total: usize = 1;
    for i in 0..dim {
        let n = cfg.nodes_for(bounds.width(i));
        let (nodes, h) = midpoint_nodes(bounds.lo[i], bounds.hi[i], n);
        weight *= h;
        total = total.saturating_mul(n);
        axes.push(nodes);
    }
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut x = vec![0.0; dim];
            for i in (0..dim).rev() {
                let n = axes[i].len();
                x[i] = axes[i][rem % n];
                rem /= n;
            }
            f(&x)
        })
        .collect();
    weight * values.iter().sum::<f64>()
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' at x by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Duffy map from the unit cube to the standard simplex
/// `{t : t_i >= 0, sum t_i <= 1}`: returns the image point and the Jacobian.
pub fn duffy(u: &[f64]) -> (Vec<f64>, f64) {
    let d = u.len();
    let mut t = vec![0.0; d];
    let mut remaining = 1.0;
    let mut jac = 1.0;
    for i in 0..d {
        t[i] = u[i] * remaining;
        jac *= remaining;
        remaining -= t[i];
    }
    (t, jac)
}

/// Shrinks `params` to the sub-box whose image under `p -> M p + t`
/// meets `target`, by Gauss-Seidel interval propagation of the row
/// constraints. Returns `None` when the image provably misses the target.
pub fn contract_box(
    matrix: &[Vec<f64>],
    translation: &[f64],
    params: &Aabb,
    target: &Aabb,
) -> Option<Aabb> {
    let mut lo = params.lo.clone();
    let mut hi = params.hi.clone();
    let d = lo.len();
    for _pass in 0..4 {
        let mut changed = false;
        for (row, &t) in matrix.iter().zip(translation) {
            // interval image of the row over the current parameter box
            for j in 0..d {
                let a = row[j];
                if a == 0.0 {
                    continue;
                }
                // bound of the row excluding term j
                let mut rest_lo = t;
                let mut rest_hi = t;
                for (k, &c) in row.iter().enumerate() {
                    if k == j || c == 0.0 {
                        continue;
                    }
                    let (u, v) = (c * lo[k], c * hi[k]);
                    rest_lo += u.min(v);
                    rest_hi += u.max(v);
                }
                let r = matrix.iter().position(|x| std::ptr::eq(x, row)).unwrap();
                // a * p_j must land in [target.lo - rest_hi, target.hi - rest_lo]
                let want_lo = target.lo[r] - rest_hi;
                let want_hi = target.hi[r] - rest_lo;
                let (mut nl, mut nh) = (want_lo / a, want_hi / a);
                if a < 0.0 {
                    std::mem::swap(&mut nl, &mut nh);
                }
                if nl > lo[j] {
                    lo[j] = nl;
                    changed = true;
                }
                if nh < hi[j] {
                    hi[j] = nh;
                    changed = true;
                }
                if lo[j] > hi[j] {
                    return None;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Some(Aabb::new(lo, hi))
}

/// Fits `y = a + b x` by least squares; returns `(a, b, rms_residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return None;
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (a + b * x);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Some((a, b, rms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let g = adaptive_simpson(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-12);
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        for n in [2usize, 4, 6] {
            let nodes = gauss_legendre_01(n);
            assert!((nodes.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-13);
            // exact for degree 2n-1
            let p = 2 * n - 1;
            let approx: f64 = nodes.iter().map(|(x, w)| w * x.powi(p as i32)).sum();
            assert!((approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_box_integral() {
        let b = Aabb::new(vec![0.0, 0.0], vec![1.0, 2.0]);
        let cfg = QuadratureConfig::with_resolution(64.0);
        let v = integrate_box(|x| x[0] * x[1], &b, &cfg);
        // exact value 0.5 * 2 = 1; midpoint is exact for bilinear integrands
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duffy_covers_simplex() {
        // area of the standard triangle via the cube
        let cfg = QuadratureConfig::with_resolution(64.0);
        let b = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let area = integrate_box(
            |u| {
                let (_, j) = duffy(u);
                j
            },
            &b,
            &cfg,
        );
        assert!((area - 0.5).abs() < 1e-12);
        // centroid x-coordinate: (1/area) * ∫ t_0
        let m = integrate_box(
            |u| {
                let (t, j) = duffy(u);
                t[0] * j
            },
            &b,
            &cfg,
        );
        assert!((m / area - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn contraction_finds_preimage() {
        // p -> (p0 + p1, p0 - p1) over [0,1]^2, target x in [1.5, 2] x [-0.1, 0.1]
        let m = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let t = vec![0.0, 0.0];
        let params = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let target = Aabb::new(vec![1.5, -0.1], vec![2.0, 0.1]);
        let c = contract_box(&m, &t, &params, &target).unwrap();
        // hull consistency guarantees at least p0, p1 >= 0.5
        assert!(c.lo[0] >= 0.5 - 1e-12);
        assert!(c.lo[1] >= 0.5 - 1e-12);
        assert!(c.hi[0] <= 1.0 + 1e-12);
        // disjoint target gives None
        let far = Aabb::new(vec![5.0, 5.0], vec![6.0, 6.0]);
        assert!(contract_box(&m, &t, &params, &far).is_none());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r) = linear_fit(&xs, &ys).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!((b - 2.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}
