//! Smoothing of currents by convolution with a compactly supported product
//! kernel, the associated homotopy operator, and the dual operators on test
//! forms.
//!
//! The kernel is a product of `m` one-dimensional normalized bumps
//! `f1(u) = exp(-R^2/(R^2 - u^2)) / c` supported in `|u| < R`; the scaled
//! kernel is `f^ε(x) = ε^{-m} Π f1(x_i/ε)`.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::currents::{Current, DynForm, FormSum, TestForm};
use crate::error::{Error, Result};
use crate::expr::{Expr, ScalarField};
use crate::forms::{combinations, DifferentialForm, Multiindex};
use crate::geometry::{Aabb, Support};
use crate::quad::{adaptive_simpson, gauss_legendre_01, midpoint_nodes, QuadratureConfig};

/// Which one-dimensional bump profile builds the product kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Bump supported in `|u| < 1`.
    BumpProduct,
    /// Twice as wide: bump supported in `|u| < 2`.
    BumpProductWide,
}

impl KernelKind {
    /// Support radius of the 1-D profile.
    pub fn radius(self) -> f64 {
        match self {
            KernelKind::BumpProduct => 1.0,
            KernelKind::BumpProductWide => 2.0,
        }
    }
}

/// Normalization and moments of the 1-D profile, computed once per kind by
/// adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct KernelConstants {
    /// `1/c` where `c = ∫ exp(-R^2/(R^2-u^2)) du`.
    pub norm: f64,
    /// `f1(0) = e^{-1} / c`.
    pub f1_zero: f64,
    /// Second moment `∫ u^2 f1(u) du`.
    pub second_moment: f64,
}

fn raw_profile(radius: f64, u: f64) -> f64 {
    let q = u * u;
    let r2 = radius * radius;
    if q >= r2 {
        return 0.0;
    }
    let e = -r2 / (r2 - q);
    if e < -700.0 {
        0.0
    } else {
        e.exp()
    }
}

fn compute_constants(kind: KernelKind) -> KernelConstants {
    let r = kind.radius();
    let c = adaptive_simpson(&|u| raw_profile(r, u), -r, r, 1e-12);
    let norm = 1.0 / c;
    let second_moment = adaptive_simpson(&|u| u * u * raw_profile(r, u), -r, r, 1e-12) * norm;
    KernelConstants {
        norm,
        f1_zero: (-1.0f64).exp() * norm,
        second_moment,
    }
}

static STANDARD: OnceLock<KernelConstants> = OnceLock::new();
static WIDE: OnceLock<KernelConstants> = OnceLock::new();

impl KernelKind {
    pub fn constants(self) -> &'static KernelConstants {
        match self {
            KernelKind::BumpProduct => STANDARD.get_or_init(|| compute_constants(self)),
            KernelKind::BumpProductWide => WIDE.get_or_init(|| compute_constants(self)),
        }
    }

    /// Normalized 1-D profile.
    pub fn f1(self, u: f64) -> f64 {
        raw_profile(self.radius(), u) * self.constants().norm
    }

    /// Scaled kernel `f^ε(x)`.
    pub fn density(self, x: &[f64], eps: f64) -> f64 {
        let m = x.len();
        let mut v = eps.powi(-(m as i32));
        for &xi in x {
            v *= self.f1(xi / eps);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// Symbolic scalar field `y -> f^ε(y - center)` on `R^m`.
    pub fn field_at(self, center: &[f64], eps: f64) -> Result<ScalarField> {
        if eps <= 0.0 {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        let m = center.len();
        let consts = self.constants();
        let mut expr = Expr::Const(1.0);
        for (i, &c) in center.iter().enumerate() {
            let arg = Expr::mul(
                Expr::Const(1.0 / eps),
                Expr::sub(Expr::var(i), Expr::Const(c)),
            );
            let factor = Expr::Bump {
                radius: self.radius(),
                args: vec![arg],
                factor: Box::new(Expr::Const(consts.norm / eps)),
            };
            expr = Expr::mul(expr, factor);
        }
        Ok(ScalarField::new(expr.simplified(), m))
    }

    /// The m-form `θ_ε = f^ε(x) vol` centered at the origin.
    pub fn theta_form(self, dim: usize, eps: f64) -> Result<DifferentialForm> {
        let field = self.field_at(&vec![0.0; dim], eps)?;
        DifferentialForm::monomial(
            dim,
            Multiindex::new((0..dim).collect()).unwrap(),
            field,
        )
    }

    /// Midpoint stencil for integrals `∫ f^ε(x) g(x) dx`: offsets and
    /// weights with `Σ w ≈ 1`.
    pub fn stencil(self, dim: usize, eps: f64, nodes_per_axis: usize) -> Vec<(Vec<f64>, f64)> {
        let r = self.radius() * eps;
        let mut axes = Vec::with_capacity(dim);
        let mut cell = 1.0;
        for _ in 0..dim {
            let (ns, h) = midpoint_nodes(-r, r, nodes_per_axis);
            cell *= h;
            axes.push(ns);
        }
        let total: usize = nodes_per_axis.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut x = vec![0.0; dim];
            for i in (0..dim).rev() {
                x[i] = axes[i][rem % nodes_per_axis];
                rem /= nodes_per_axis;
            }
            let w = cell * self.density(&x, eps);
            if w != 0.0 {
                out.push((x, w));
            }
        }
        // renormalize so the discrete kernel has exactly unit mass
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        if total > 0.0 {
            for (_, w) in &mut out {
                *w /= total;
            }
        }
        out
    }
}

/// Default stencil resolution for the dual operators.
pub const STENCIL_NODES: usize = 24;

/// The smooth form representing a smoothed current: coefficient `I` of the
/// result at `x` is `σ(I, I^c) · T(y ↦ f^ε(x - y) dy_{I^c})`.
pub struct SmoothedCurrent<'a> {
    current: &'a Current,
    eps: f64,
    kernel: KernelKind,
    cfg: QuadratureConfig,
}

impl<'a> SmoothedCurrent<'a> {
    pub fn new(
        current: &'a Current,
        eps: f64,
        kernel: KernelKind,
        cfg: QuadratureConfig,
    ) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        Ok(SmoothedCurrent {
            current,
            eps,
            kernel,
            cfg,
        })
    }

    /// Degree of the resulting form: the codimension of the current.
    pub fn degree(&self) -> usize {
        self.current.codimension()
    }

    /// Single coefficient of the smoothed form at a point.
    pub fn coefficient_at(&self, x: &[f64], idx: &Multiindex) -> Result<f64> {
        let m = self.current.dim();
        let comp = idx.complement(m);
        let sign = idx.complement_sign(m);
        let field = self.kernel.field_at(x, self.eps)?;
        let probe = DifferentialForm::monomial(m, comp, field)?;
        Ok(sign * self.current.evaluate_form(&probe, &self.cfg)?)
    }

    /// All coefficients at a point, keyed by multiindex.
    pub fn coefficients_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let m = self.current.dim();
        let mut out = Vec::new();
        for i in combinations(m, self.degree()) {
            let idx = Multiindex::new(i).unwrap();
            let v = self.coefficient_at(x, &idx)?;
            out.push((idx, v));
        }
        Ok(out)
    }

    /// Support of the smoothed form.
    pub fn support(&self) -> Support {
        match self.current.support() {
            Support::Box(b) => Support::Box(b.inflate(self.kernel.radius() * self.eps)),
            Support::Unbounded => Support::Unbounded,
        }
    }

    /// Pairing of the smoothed current with a test form through its form
    /// representation: `∫ (r_ε T) ∧ φ`. Cross-checks the dual pairing
    /// `T(r_ε φ)`.
    pub fn pair(&self, phi: &DifferentialForm) -> Result<f64> {
        let m = self.current.dim();
        if phi.dim() != m {
            return Err(Error::DimensionMismatch(
                "smoothed-current pairing dimension mismatch".into(),
            ));
        }
        if phi.degree() != self.current.dimension() {
            return Err(Error::DegreeMismatch(
                "smoothed-current pairing degree mismatch".into(),
            ));
        }
        let domain = self
            .support()
            .intersect(&DifferentialForm::support(phi))
            .as_box(m);
        if domain.is_empty() {
            return Ok(0.0);
        }
        if !domain.is_bounded() {
            return Err(Error::NonCompactPairing);
        }
        let indices: Vec<Multiindex> = combinations(m, self.degree())
            .into_iter()
            .map(|i| Multiindex::new(i).unwrap())
            .collect();
        let value = crate::quad::integrate_box(
            |x| {
                let mut s = 0.0;
                let pv = match phi.eval(x) {
                    Ok(p) => p,
                    Err(_) => return f64::NAN,
                };
                if pv.is_empty() {
                    return 0.0;
                }
                for i in &indices {
                    let comp = i.complement(m);
                    let Some(pc) = pv.get(&comp) else { continue };
                    let c = match self.coefficient_at(x, i) {
                        Ok(c) => c,
                        Err(_) => return f64::NAN,
                    };
                    s += c * i.complement_sign(m) * pc;
                }
                s
            },
            &domain,
            &self.cfg,
        );
        if value.is_nan() {
            return Err(Error::Eval(
                "smoothed-current coefficient evaluation failed".into(),
            ));
        }
        Ok(value)
    }
}

/// Coefficient table of the smooth form `r_ε T` at a point.
pub fn r_eps_form(
    current: &Current,
    eps: f64,
    x: &[f64],
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<Vec<(Multiindex, f64)>> {
    SmoothedCurrent::new(current, eps, kernel, *cfg)?.coefficients_at(x)
}

/// Spec-level residual of the homotopy identity.
pub fn homotopy_residual(
    current: &Current,
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    Ok(homotopy_check(current, phi, eps, kernel, cfg)?.residual)
}

/// Dual smoothing operator on test forms: coefficientwise convolution
/// `b_J(y) ↦ ∫ b_J(y + x) f^ε(x) dx`.
pub struct MollifiedForm {
    inner: DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    stencil: Vec<(Vec<f64>, f64)>,
}

impl MollifiedForm {
    pub fn new(inner: DifferentialForm, eps: f64, kernel: KernelKind) -> Result<Self> {
        Self::with_nodes(inner, eps, kernel, STENCIL_NODES)
    }

    pub fn with_nodes(
        inner: DifferentialForm,
        eps: f64,
        kernel: KernelKind,
        nodes: usize,
    ) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        let stencil = kernel.stencil(inner.dim(), eps, nodes);
        Ok(MollifiedForm {
            inner,
            eps,
            kernel,
            stencil,
        })
    }
}

impl TestForm for MollifiedForm {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn coeffs_at(&self, y: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let mut out = Vec::with_capacity(self.inner.terms().len());
        for (idx, b) in self.inner.terms() {
            let mut v = 0.0;
            let mut pt = vec![0.0; y.len()];
            for (x, w) in &self.stencil {
                for i in 0..y.len() {
                    pt[i] = y[i] + x[i];
                }
                v += w * b.eval(&pt)?;
            }
            if v != 0.0 {
                out.push((idx.clone(), v));
            }
        }
        Ok(out)
    }

    fn support(&self) -> Support {
        match DifferentialForm::support(&self.inner) {
            Support::Box(b) => Support::Box(b.inflate(self.kernel.radius() * self.eps)),
            Support::Unbounded => Support::Unbounded,
        }
    }

    fn d(&self) -> Result<DynForm> {
        // smoothing commutes with the exterior derivative
        Ok(Arc::new(MollifiedForm {
            inner: self.inner.exterior_derivative(),
            eps: self.eps,
            kernel: self.kernel,
            stencil: self.stencil.clone(),
        }))
    }
}

/// Dual homotopy operator on test forms. The coefficient on `dy_K` is
///
/// `c_K(y) = Σ_pieces coeff · ∫ f^ε(x) x_i ∫_0^1 g(y + t x) dt dx`,
///
/// where each piece `(coeff, i, g)` records a signed contraction of an
/// original coefficient. Closed under `d` by differentiating under the
/// integral sign, which keeps the homotopy identity an honest numerical
/// check.
pub struct HomotopyForm {
    dim: usize,
    degree: usize,
    eps: f64,
    kernel: KernelKind,
    entries: Vec<(Multiindex, Vec<(f64, usize, ScalarField)>)>,
    stencil: Vec<(Vec<f64>, f64)>,
    t_nodes: Vec<(f64, f64)>,
}

impl HomotopyForm {
    /// Applies the dual homotopy operator to a symbolic `p`-form, lowering
    /// the degree to `p - 1`. For 0-forms the result is the zero form.
    pub fn new(inner: &DifferentialForm, eps: f64, kernel: KernelKind) -> Result<Self> {
        Self::with_nodes(inner, eps, kernel, STENCIL_NODES)
    }

    pub fn with_nodes(
        inner: &DifferentialForm,
        eps: f64,
        kernel: KernelKind,
        nodes: usize,
    ) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::NonpositiveEpsilon(eps));
        }
        let m = inner.dim();
        let p = inner.degree();
        let mut by_target: BTreeMap<Multiindex, Vec<(f64, usize, ScalarField)>> = BTreeMap::new();
        if p > 0 {
            for (j, b) in inner.terms() {
                for (pos, &i) in j.indices().iter().enumerate() {
                    let k: Vec<usize> = j
                        .indices()
                        .iter()
                        .copied()
                        .filter(|&v| v != i)
                        .collect();
                    // moving i to the front of (i1..ip) costs (-1)^pos
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    by_target
                        .entry(Multiindex::new(k).unwrap())
                        .or_default()
                        .push((sign, i, b.clone()));
                }
            }
        }
        Ok(HomotopyForm {
            dim: m,
            degree: p.saturating_sub(1),
            eps,
            kernel,
            entries: by_target.into_iter().collect(),
            stencil: kernel.stencil(m, eps, nodes),
            t_nodes: gauss_legendre_01(6),
        })
    }
}

impl TestForm for HomotopyForm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn coeffs_at(&self, y: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let m = self.dim;
        let mut out = Vec::with_capacity(self.entries.len());
        for (k, pieces) in &self.entries {
            let mut total = 0.0;
            let mut pt = vec![0.0; m];
            for (coeff, axis, g) in pieces {
                let mut v = 0.0;
                for (x, w) in &self.stencil {
                    let xi = x[*axis];
                    if xi == 0.0 {
                        continue;
                    }
                    let mut line = 0.0;
                    for (t, wt) in &self.t_nodes {
                        for i in 0..m {
                            pt[i] = y[i] + t * x[i];
                        }
                        line += wt * g.eval(&pt)?;
                    }
                    v += w * xi * line;
                }
                total += coeff * v;
            }
            if total != 0.0 {
                out.push((k.clone(), total));
            }
        }
        Ok(out)
    }

    fn support(&self) -> Support {
        let pad = self.kernel.radius() * self.eps;
        let mut s: Option<Support> = None;
        for (_, pieces) in &self.entries {
            for (_, _, g) in pieces {
                let gs = match g.support() {
                    Support::Box(b) => Support::Box(b.inflate(pad)),
                    Support::Unbounded => Support::Unbounded,
                };
                s = Some(match s {
                    None => gs,
                    Some(p) => p.hull(&gs),
                });
            }
        }
        s.unwrap_or(Support::Box(Aabb::new(
            vec![1.0; self.dim],
            vec![-1.0; self.dim],
        )))
    }

    fn d(&self) -> Result<DynForm> {
        // d_y passes under both integrals: ∂_l of g(y + t x) in y is
        // (∂_l g)(y + t x)
        let mut by_target: BTreeMap<Multiindex, Vec<(f64, usize, ScalarField)>> = BTreeMap::new();
        for (k, pieces) in &self.entries {
            for l in 0..self.dim {
                if k.contains(l) {
                    continue;
                }
                let mut all = vec![l];
                all.extend_from_slice(k.indices());
                let (target, sign) = match Multiindex::sort_with_sign(all) {
                    Some(p) => p,
                    None => continue,
                };
                let slot = by_target.entry(target).or_default();
                for (coeff, axis, g) in pieces {
                    let dg = g.derivative(l);
                    if dg.is_zero() {
                        continue;
                    }
                    slot.push((sign * coeff, *axis, dg));
                }
            }
        }
        Ok(Arc::new(HomotopyForm {
            dim: self.dim,
            degree: self.degree + 1,
            eps: self.eps,
            kernel: self.kernel,
            entries: by_target.into_iter().collect(),
            stencil: self.stencil.clone(),
            t_nodes: self.t_nodes.clone(),
        }))
    }
}

/// Both sides of the homotopy identity
/// `(r_ε T - T)(φ) = (b a_ε T)(φ) + (a_ε b T)(φ)`
/// evaluated by independent quadratures, and their difference.
#[derive(Debug, Clone, Copy)]
pub struct HomotopyCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluates the homotopy identity for a current against a symbolic test
/// form. The left side uses the dual smoothing operator; the right side
/// pairs `T` with `a_ε(dφ)` and the boundary of `T` (geometric where
/// available) with `a_ε φ`.
pub fn homotopy_check(
    current: &Current,
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<HomotopyCheck> {
    let smoothed: DynForm = Arc::new(MollifiedForm::new(phi.clone(), eps, kernel)?);
    let lhs = current.evaluate(&smoothed, cfg)? - current.evaluate_form(phi, cfg)?;

    let a_dphi: DynForm = Arc::new(HomotopyForm::new(&phi.exterior_derivative(), eps, kernel)?);
    let term1 = current.evaluate(&a_dphi, cfg)?;
    let term2 = if current.dimension() == 0 {
        0.0
    } else {
        let a_phi: DynForm = Arc::new(HomotopyForm::new(phi, eps, kernel)?);
        current.boundary().evaluate(&a_phi, cfg)?
    };
    let rhs = term1 + term2;
    Ok(HomotopyCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Convenience: the difference form `r_ε φ - φ - a_ε dφ - d(a_ε φ)` as a
/// single test form (useful for probing the identity against currents).
pub fn homotopy_defect_form(
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
) -> Result<DynForm> {
    let dim = phi.dim();
    let degree = phi.degree();
    let r: DynForm = Arc::new(MollifiedForm::new(phi.clone(), eps, kernel)?);
    let id: DynForm = Arc::new(phi.clone());
    let a_d: DynForm = Arc::new(HomotopyForm::new(&phi.exterior_derivative(), eps, kernel)?);
    let d_a = HomotopyForm::new(phi, eps, kernel)?.d()?;
    Ok(Arc::new(FormSum::new(
        dim,
        degree,
        vec![(1.0, r), (-1.0, id), (-1.0, a_d), (-1.0, d_a)],
    )))
}
