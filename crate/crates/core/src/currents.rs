//! Currents on Euclidean space: polyhedral chains, currents represented by
//! smooth forms, Dirac-type point currents, and the closure of these under
//! sums, Cartesian products, wedge with a smooth form, and boundary.
//!
//! A current of dimension `p` on `R^m` pairs with compactly supported
//! `p`-forms. All pairings are evaluated numerically through
//! [`Current::evaluate`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{AffineMap, DifferentialForm, Multiindex};
use crate::geometry::{Aabb, Support};
use crate::quad::{contract_box, duffy, integrate_box, QuadratureConfig};

/// A test form that can be paired with currents. Implementations range from
/// fully symbolic forms to forms whose coefficients are themselves defined
/// by quadrature (mollified and homotopy forms).
pub trait TestForm: Send + Sync {
    fn dim(&self) -> usize;
    fn degree(&self) -> usize;
    /// Nonzero coefficients at a point, keyed by sorted multiindex.
    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>>;
    fn support(&self) -> Support;
    /// Exterior derivative, when available for this representation.
    fn d(&self) -> Result<DynForm>;
}

pub type DynForm = Arc<dyn TestForm>;

impl TestForm for DifferentialForm {
    fn dim(&self) -> usize {
        DifferentialForm::dim(self)
    }

    fn degree(&self) -> usize {
        DifferentialForm::degree(self)
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        Ok(self.eval(x)?.into_iter().collect())
    }

    fn support(&self) -> Support {
        DifferentialForm::support(self)
    }

    fn d(&self) -> Result<DynForm> {
        Ok(Arc::new(self.exterior_derivative()))
    }
}

/// Linear combination of test forms; closes the trait under the Leibniz
/// rule and homotopy identities.
pub struct FormSum {
    dim: usize,
    degree: usize,
    parts: Vec<(f64, DynForm)>,
}

impl FormSum {
    pub fn new(dim: usize, degree: usize, parts: Vec<(f64, DynForm)>) -> Self {
        FormSum { dim, degree, parts }
    }
}

impl TestForm for FormSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let mut acc: std::collections::BTreeMap<Multiindex, f64> = Default::default();
        for (c, f) in &self.parts {
            for (idx, v) in f.coeffs_at(x)? {
                *acc.entry(idx).or_insert(0.0) += c * v;
            }
        }
        Ok(acc.into_iter().filter(|(_, v)| *v != 0.0).collect())
    }

    fn support(&self) -> Support {
        let mut s: Option<Support> = None;
        for (_, f) in &self.parts {
            let fs = f.support();
            s = Some(match s {
                None => fs,
                Some(p) => p.hull(&fs),
            });
        }
        s.unwrap_or(Support::Box(Aabb::new(
            vec![1.0; self.dim],
            vec![-1.0; self.dim],
        )))
    }

    fn d(&self) -> Result<DynForm> {
        let mut parts = Vec::with_capacity(self.parts.len());
        for (c, f) in &self.parts {
            parts.push((*c, f.d()?));
        }
        Ok(Arc::new(FormSum::new(self.dim, self.degree + 1, parts)))
    }
}

/// Lazy wedge `omega ∧ phi` of a symbolic form with an arbitrary test form.
pub struct WedgeForm {
    omega: DifferentialForm,
    phi: DynForm,
}

impl WedgeForm {
    pub fn new(omega: DifferentialForm, phi: DynForm) -> Result<Self> {
        if omega.dim() != phi.dim() {
            return Err(Error::DimensionMismatch(
                "wedge of forms on different spaces".into(),
            ));
        }
        Ok(WedgeForm { omega, phi })
    }
}

impl TestForm for WedgeForm {
    fn dim(&self) -> usize {
        self.omega.dim()
    }

    fn degree(&self) -> usize {
        self.omega.degree() + self.phi.degree()
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let a = self.omega.eval(x)?;
        if a.is_empty() {
            return Ok(Vec::new());
        }
        let b = self.phi.coeffs_at(x)?;
        let mut acc: std::collections::BTreeMap<Multiindex, f64> = Default::default();
        for (i1, v1) in &a {
            for (i2, v2) in &b {
                if let Some((merged, sign)) = i1.merge_sign(i2) {
                    *acc.entry(merged).or_insert(0.0) += sign * v1 * v2;
                }
            }
        }
        Ok(acc.into_iter().filter(|(_, v)| *v != 0.0).collect())
    }

    fn support(&self) -> Support {
        DifferentialForm::support(&self.omega).intersect(&self.phi.support())
    }

    fn d(&self) -> Result<DynForm> {
        // d(ω∧φ) = dω∧φ + (-1)^{deg ω} ω∧dφ
        let dim = self.dim();
        let degree = self.degree() + 1;
        let sign = if self.omega.degree() % 2 == 0 { 1.0 } else { -1.0 };
        let left: DynForm = Arc::new(WedgeForm::new(
            self.omega.exterior_derivative(),
            Arc::clone(&self.phi),
        )?);
        let right: DynForm = Arc::new(WedgeForm::new(self.omega.clone(), self.phi.d()?)?);
        Ok(Arc::new(FormSum::new(
            dim,
            degree,
            vec![(1.0, left), (sign, right)],
        )))
    }
}

/// Parameter domain of a polyhedral cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellDomain {
    /// Standard simplex `{t : t_i >= 0, sum t_i <= 1}`.
    Simplex,
    /// Unit cube `[0, 1]^k`.
    Cube,
}

/// Weighted affine image of the standard simplex or cube.
#[derive(Debug, Clone)]
pub struct PolyhedralCell {
    pub domain: CellDomain,
    pub map: AffineMap,
    pub weight: f64,
}

impl PolyhedralCell {
    pub fn new(domain: CellDomain, map: AffineMap, weight: f64) -> Result<Self> {
        let k = map.n_in();
        if k > map.n_out() {
            return Err(Error::DimensionMismatch(
                "cell dimension exceeds ambient dimension".into(),
            ));
        }
        if k > 0 && map.gram_determinant().abs() < 1e-12 {
            return Err(Error::Other(
                "degenerate cell: parameterization is not full rank".into(),
            ));
        }
        Ok(PolyhedralCell {
            domain,
            map,
            weight,
        })
    }

    /// Simplex cell through the given vertices (first vertex is the base
    /// point).
    pub fn simplex(vertices: &[Vec<f64>], weight: f64) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Other("simplex needs at least one vertex".into()));
        }
        let m = vertices[0].len();
        let k = vertices.len() - 1;
        let matrix: Vec<Vec<f64>> = (0..m)
            .map(|row| (0..k).map(|j| vertices[j + 1][row] - vertices[0][row]).collect())
            .collect();
        PolyhedralCell::new(
            CellDomain::Simplex,
            AffineMap::new(matrix, vertices[0].clone())?,
            weight,
        )
    }

    /// Axis-aligned box cell `[lo, hi]` with the identity orientation.
    pub fn axis_box(lo: &[f64], hi: &[f64], weight: f64) -> Result<Self> {
        let m = lo.len();
        let matrix: Vec<Vec<f64>> = (0..m)
            .map(|row| {
                (0..m)
                    .map(|j| if row == j { hi[row] - lo[row] } else { 0.0 })
                    .collect()
            })
            .collect();
        PolyhedralCell::new(
            CellDomain::Cube,
            AffineMap::new(matrix, lo.to_vec())?,
            weight,
        )
    }

    pub fn dimension(&self) -> usize {
        self.map.n_in()
    }

    pub fn ambient_dim(&self) -> usize {
        self.map.n_out()
    }

    /// Bounding box of the cell image.
    pub fn bounding_box(&self) -> Aabb {
        let k = self.dimension();
        let m = self.ambient_dim();
        let mut lo = self.map.translation.clone();
        let mut hi = self.map.translation.clone();
        match self.domain {
            CellDomain::Cube => {
                for r in 0..m {
                    for j in 0..k {
                        let a = self.map.matrix[r][j];
                        if a < 0.0 {
                            lo[r] += a;
                        } else {
                            hi[r] += a;
                        }
                    }
                }
            }
            CellDomain::Simplex => {
                // hull of the k+1 vertices
                for j in 0..k {
                    for r in 0..m {
                        let v = self.map.translation[r] + self.map.matrix[r][j];
                        lo[r] = lo[r].min(v);
                        hi[r] = hi[r].max(v);
                    }
                }
            }
        }
        Aabb::new(lo, hi)
    }

    /// Pairing of this cell with a test form of degree equal to the cell
    /// dimension: the integral over the parameter domain of the numeric
    /// pullback.
    pub fn pair(&self, phi: &dyn TestForm, cfg: &QuadratureConfig) -> Result<f64> {
        let k = self.dimension();
        if phi.degree() != k {
            return Err(Error::DegreeMismatch(format!(
                "cell of dimension {k} paired with a {}-form",
                phi.degree()
            )));
        }
        if k == 0 {
            let x = self.map.translation.clone();
            let coeffs = phi.coeffs_at(&x)?;
            let v = coeffs
                .iter()
                .find(|(i, _)| i.is_empty())
                .map_or(0.0, |(_, v)| *v);
            return Ok(self.weight * v);
        }
        let all_cols: Vec<usize> = (0..k).collect();
        let integrand = |t: &[f64]| -> f64 {
            let x = self.map.apply(t);
            let coeffs = match phi.coeffs_at(&x) {
                Ok(c) => c,
                Err(_) => return f64::NAN,
            };
            coeffs
                .iter()
                .map(|(idx, v)| v * self.map.minor(idx.indices(), &all_cols))
                .sum()
        };
        let unit = Aabb::new(vec![0.0; k], vec![1.0; k]);
        // restrict the parameter box to the preimage of the test form's
        // support (padded slightly to keep the smooth decay inside)
        let target = phi
            .support()
            .as_box(self.ambient_dim())
            .inflate(1e-9);
        let params = match contract_box(&self.map.matrix, &self.map.translation, &unit, &target) {
            None => return Ok(0.0),
            Some(b) => b,
        };
        let value = match self.domain {
            CellDomain::Cube => integrate_box(integrand, &params, cfg),
            CellDomain::Simplex => {
                if k == 1 {
                    // the 1-simplex is the unit interval
                    integrate_box(integrand, &params, cfg)
                } else if params.hi.iter().sum::<f64>() <= 1.0 {
                    // contracted box lies inside the simplex: plain grid
                    integrate_box(integrand, &params, cfg)
                } else {
                    // Duffy transform over the full simplex; scale the grid
                    // up when the relevant region is small
                    let frac = (0..k)
                        .map(|i| params.width(i))
                        .fold(1.0f64, f64::min)
                        .max(1e-3);
                    let scaled = QuadratureConfig {
                        resolution: cfg.resolution / frac,
                        ..*cfg
                    };
                    let cube = Aabb::new(vec![0.0; k], vec![1.0; k]);
                    integrate_box(
                        |u| {
                            let (t, jac) = duffy(u);
                            integrand(&t) * jac
                        },
                        &cube,
                        &scaled,
                    )
                }
            }
        };
        if value.is_nan() {
            return Err(Error::Eval("test form evaluation failed on a cell".into()));
        }
        Ok(self.weight * value)
    }

    /// Oriented faces of the cell, with boundary weights folded in.
    pub fn boundary_cells(&self) -> Vec<PolyhedralCell> {
        let k = self.dimension();
        if k == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        match self.domain {
            CellDomain::Simplex => {
                // vertices v_0, .., v_k; face i omits v_i, sign (-1)^i
                let m = self.ambient_dim();
                let mut vertices = vec![self.map.translation.clone()];
                for j in 0..k {
                    let v: Vec<f64> = (0..m)
                        .map(|r| self.map.translation[r] + self.map.matrix[r][j])
                        .collect();
                    vertices.push(v);
                }
                for omit in 0..=k {
                    let face: Vec<Vec<f64>> = vertices
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != omit)
                        .map(|(_, v)| v.clone())
                        .collect();
                    let sign = if omit % 2 == 0 { 1.0 } else { -1.0 };
                    if let Ok(cell) = PolyhedralCell::simplex(&face, sign * self.weight) {
                        out.push(cell);
                    }
                }
            }
            CellDomain::Cube => {
                // ∂[0,1]^k = Σ_i (-1)^{i-1} (face at t_i = 1  -  face at t_i = 0)
                let m = self.ambient_dim();
                for i in 0..k {
                    for (at, face_sign) in [(1.0, 1.0), (0.0, -1.0)] {
                        let sign = if i % 2 == 0 { face_sign } else { -face_sign };
                        // insert t_i = at, keep the other parameters in order
                        let matrix: Vec<Vec<f64>> = (0..m)
                            .map(|r| {
                                (0..k)
                                    .filter(|j| *j != i)
                                    .map(|j| self.map.matrix[r][j])
                                    .collect()
                            })
                            .collect();
                        let translation: Vec<f64> = (0..m)
                            .map(|r| self.map.translation[r] + at * self.map.matrix[r][i])
                            .collect();
                        if let Ok(map) = AffineMap::new(matrix, translation) {
                            if let Ok(cell) =
                                PolyhedralCell::new(CellDomain::Cube, map, sign * self.weight)
                            {
                                out.push(cell);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Finite weighted chain of polyhedral cells of a common dimension.
#[derive(Debug, Clone)]
pub struct PolyChain {
    dim: usize,
    dimension: usize,
    pub cells: Vec<PolyhedralCell>,
}

impl PolyChain {
    pub fn new(dim: usize, dimension: usize, cells: Vec<PolyhedralCell>) -> Result<Self> {
        for c in &cells {
            if c.ambient_dim() != dim || c.dimension() != dimension {
                return Err(Error::DimensionMismatch(
                    "all cells must share the ambient dimension and cell dimension".into(),
                ));
            }
        }
        Ok(PolyChain {
            dim,
            dimension,
            cells,
        })
    }

    /// Oriented segment from `a` to `b`.
    pub fn segment(a: &[f64], b: &[f64], weight: f64) -> Result<Self> {
        let cell = PolyhedralCell::simplex(&[a.to_vec(), b.to_vec()], weight)?;
        PolyChain::new(a.len(), 1, vec![cell])
    }

    pub fn bounding_box(&self) -> Aabb {
        let mut b: Option<Aabb> = None;
        for c in &self.cells {
            let cb = c.bounding_box();
            b = Some(match b {
                None => cb,
                Some(p) => p.hull(&cb),
            });
        }
        b.unwrap_or(Aabb::new(vec![1.0; self.dim], vec![-1.0; self.dim]))
    }

    /// Geometric boundary chain.
    pub fn boundary(&self) -> PolyChain {
        if self.dimension == 0 {
            return PolyChain {
                dim: self.dim,
                dimension: 0,
                cells: Vec::new(),
            };
        }
        let cells = self
            .cells
            .iter()
            .flat_map(|c| c.boundary_cells())
            .collect();
        PolyChain {
            dim: self.dim,
            dimension: self.dimension - 1,
            cells,
        }
    }
}

/// A current on `R^m`.
#[derive(Debug, Clone)]
pub enum Current {
    /// The zero current with explicit dimension bookkeeping.
    Zero { dim: usize, dimension: usize },
    /// Integration over a polyhedral chain.
    PolyChain(PolyChain),
    /// Current represented by a smooth form: `T(φ) = ∫ ω ∧ φ`.
    Smooth(DifferentialForm),
    /// Point current `w · δ_a dx_K`, pairing to `w σ(K, K^c) φ_{K^c}(a)`.
    Dirac {
        point: Vec<f64>,
        idx: Multiindex,
        weight: f64,
    },
    /// Finite linear combination.
    Sum(Vec<(f64, Current)>),
    /// Cartesian product, living on the product space.
    Product(Box<Current>, Box<Current>),
    /// `T ∧ ω`, defined by `(T ∧ ω)(φ) = T(ω ∧ φ)`.
    WedgeSmooth(Box<Current>, DifferentialForm),
    /// Boundary by duality: `(bT)(φ) = T(dφ)`.
    Boundary(Box<Current>),
}

impl Current {
    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        match self {
            Current::Zero { dim, .. } => *dim,
            Current::PolyChain(c) => c.dim,
            Current::Smooth(f) => f.dim(),
            Current::Dirac { point, .. } => point.len(),
            Current::Sum(parts) => parts.first().map_or(0, |(_, t)| t.dim()),
            Current::Product(a, b) => a.dim() + b.dim(),
            Current::WedgeSmooth(t, _) => t.dim(),
            Current::Boundary(t) => t.dim(),
        }
    }

    /// Dimension `p`: the current pairs with `p`-forms.
    pub fn dimension(&self) -> usize {
        match self {
            Current::Zero { dimension, .. } => *dimension,
            Current::PolyChain(c) => c.dimension,
            Current::Smooth(f) => f.dim() - f.degree(),
            Current::Dirac { point, idx, .. } => point.len() - idx.len(),
            Current::Sum(parts) => parts.first().map_or(0, |(_, t)| t.dimension()),
            Current::Product(a, b) => a.dimension() + b.dimension(),
            Current::WedgeSmooth(t, w) => t.dimension() - w.degree(),
            Current::Boundary(t) => t.dimension().saturating_sub(1),
        }
    }

    /// Codimension `m - p`.
    pub fn codimension(&self) -> usize {
        self.dim() - self.dimension()
    }

    /// Support bounding box, when known to be bounded.
    pub fn support(&self) -> Support {
        match self {
            Current::Zero { dim, .. } => {
                Support::Box(Aabb::new(vec![1.0; *dim], vec![-1.0; *dim]))
            }
            Current::PolyChain(c) => Support::Box(c.bounding_box()),
            Current::Smooth(f) => DifferentialForm::support(f),
            Current::Dirac { point, .. } => {
                Support::Box(Aabb::new(point.clone(), point.clone()))
            }
            Current::Sum(parts) => {
                let mut s: Option<Support> = None;
                for (_, t) in parts {
                    let ts = t.support();
                    s = Some(match s {
                        None => ts,
                        Some(p) => p.hull(&ts),
                    });
                }
                s.unwrap_or(Support::Unbounded)
            }
            Current::Product(a, b) => {
                match (a.support(), b.support()) {
                    (Support::Box(x), Support::Box(y)) => Support::Box(x.product(&y)),
                    _ => Support::Unbounded,
                }
            }
            Current::WedgeSmooth(t, w) => t.support().intersect(&DifferentialForm::support(w)),
            Current::Boundary(t) => t.support(),
        }
    }

    pub fn is_compactly_supported(&self) -> bool {
        self.support().is_bounded()
    }

    /// Sum with explicit coefficients; empty input gives the zero current.
    pub fn sum(parts: Vec<(f64, Current)>) -> Result<Current> {
        if let Some((_, first)) = parts.first() {
            let (m, p) = (first.dim(), first.dimension());
            for (_, t) in &parts {
                if t.dim() != m || t.dimension() != p {
                    return Err(Error::DimensionMismatch(
                        "summands must share ambient dimension and current dimension".into(),
                    ));
                }
            }
        }
        Ok(Current::Sum(parts))
    }

    /// Boundary. Polyhedral chains get the geometric boundary; sums and
    /// products distribute; everything else falls back to duality. The
    /// boundary of a 0-dimensional current is zero.
    pub fn boundary(&self) -> Current {
        if self.dimension() == 0 {
            return Current::Zero {
                dim: self.dim(),
                dimension: 0,
            };
        }
        match self {
            Current::Zero { dim, dimension } => Current::Zero {
                dim: *dim,
                dimension: dimension - 1,
            },
            Current::PolyChain(c) => Current::PolyChain(c.boundary()),
            Current::Sum(parts) => {
                Current::Sum(parts.iter().map(|(c, t)| (*c, t.boundary())).collect())
            }
            Current::Product(a, b) => {
                // under the codegree pairing convention the Leibniz rule is
                // b(S × T) = (-1)^{codim T} bS × T + S × bT
                // (the classical (-1)^{dim S} is absorbed into the slice sign)
                let sign = if b.codimension() % 2 == 0 { 1.0 } else { -1.0 };
                Current::Sum(vec![
                    (
                        sign,
                        Current::Product(Box::new(a.boundary()), b.clone()),
                    ),
                    (
                        1.0,
                        Current::Product(a.clone(), Box::new(b.boundary())),
                    ),
                ])
            }
            other => Current::Boundary(Box::new(other.clone())),
        }
    }

    /// `T ∧ ω`.
    pub fn wedge_smooth(&self, omega: &DifferentialForm) -> Result<Current> {
        if omega.dim() != self.dim() {
            return Err(Error::DimensionMismatch(
                "wedge with a form on a different space".into(),
            ));
        }
        if omega.degree() > self.dimension() {
            return Err(Error::DegreeMismatch(
                "wedge degree exceeds current dimension".into(),
            ));
        }
        Ok(Current::WedgeSmooth(
            Box::new(self.clone()),
            omega.clone(),
        ))
    }

    /// Pair the current with a test form.
    pub fn evaluate(&self, phi: &DynForm, cfg: &QuadratureConfig) -> Result<f64> {
        if phi.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "current on R^{} paired with a form on R^{}",
                self.dim(),
                phi.dim()
            )));
        }
        if phi.degree() != self.dimension() {
            return Err(Error::DegreeMismatch(format!(
                "current of dimension {} paired with a {}-form",
                self.dimension(),
                phi.degree()
            )));
        }
        if !self.is_compactly_supported() && !phi.support().is_bounded() {
            return Err(Error::NonCompactPairing);
        }
        self.evaluate_unchecked(phi, cfg)
    }

    fn evaluate_unchecked(&self, phi: &DynForm, cfg: &QuadratureConfig) -> Result<f64> {
        match self {
            Current::Zero { .. } => Ok(0.0),
            Current::PolyChain(chain) => {
                let mut total = 0.0;
                for cell in &chain.cells {
                    total += cell.pair(phi.as_ref(), cfg)?;
                }
                Ok(total)
            }
            Current::Smooth(omega) => {
                let m = omega.dim();
                let domain = DifferentialForm::support(omega)
                    .intersect(&phi.support())
                    .as_box(m);
                if !domain.is_bounded() {
                    return Err(Error::NonCompactPairing);
                }
                if domain.is_empty() {
                    return Ok(0.0);
                }
                // volume coefficient of ω ∧ φ
                let mut failed = std::sync::atomic::AtomicBool::new(false);
                let value = integrate_box(
                    |x| {
                        let a = match omega.eval(x) {
                            Ok(a) => a,
                            Err(_) => {
                                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                                return 0.0;
                            }
                        };
                        if a.is_empty() {
                            return 0.0;
                        }
                        let b = match phi.coeffs_at(x) {
                            Ok(b) => b,
                            Err(_) => {
                                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                                return 0.0;
                            }
                        };
                        let mut s = 0.0;
                        for (i, vi) in &a {
                            let comp = i.complement(m);
                            if let Some((_, vj)) = b.iter().find(|(j, _)| *j == comp) {
                                s += i.complement_sign(m) * vi * vj;
                            }
                        }
                        s
                    },
                    &domain,
                    cfg,
                );
                if *failed.get_mut() {
                    return Err(Error::Eval(
                        "form evaluation failed inside a smooth-current pairing".into(),
                    ));
                }
                Ok(value)
            }
            Current::Dirac { point, idx, weight } => {
                let m = point.len();
                let comp = idx.complement(m);
                let coeffs = phi.coeffs_at(point)?;
                let v = coeffs
                    .iter()
                    .find(|(j, _)| *j == comp)
                    .map_or(0.0, |(_, v)| *v);
                Ok(weight * idx.complement_sign(m) * v)
            }
            Current::Sum(parts) => {
                let mut total = 0.0;
                for (c, t) in parts {
                    total += c * t.evaluate_unchecked(phi, cfg)?;
                }
                Ok(total)
            }
            Current::Product(t1, t2) => {
                // T1(ψ) where ψ_I(x) = s(I) T2( y -> Σ_J φ_{merge(I, J)}(x, y) dy_J )
                // with s(I) = (-1)^{|I| (m2 - dim T2)}
                let slice = SliceForm {
                    t2: t2.as_ref().clone(),
                    phi: Arc::clone(phi),
                    m1: t1.dim(),
                    p1: t1.dimension(),
                    cfg: *cfg,
                };
                t1.evaluate_unchecked(&(Arc::new(slice) as DynForm), cfg)
            }
            Current::WedgeSmooth(t, omega) => {
                let wedge: DynForm = Arc::new(WedgeForm::new(omega.clone(), Arc::clone(phi))?);
                t.evaluate_unchecked(&wedge, cfg)
            }
            Current::Boundary(t) => t.evaluate_unchecked(&phi.d()?, cfg),
        }
    }

    /// Convenience wrapper for symbolic test forms.
    pub fn evaluate_form(&self, phi: &DifferentialForm, cfg: &QuadratureConfig) -> Result<f64> {
        self.evaluate(&(Arc::new(phi.clone()) as DynForm), cfg)
    }
}

/// First factor's test form when pairing with a product current: each
/// coefficient is itself a pairing of the second factor.
struct SliceForm {
    t2: Current,
    phi: DynForm,
    m1: usize,
    p1: usize,
    cfg: QuadratureConfig,
}

impl TestForm for SliceForm {
    fn dim(&self) -> usize {
        self.m1
    }

    fn degree(&self) -> usize {
        self.p1
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let codeg2 = self.t2.codimension();
        let mut out = Vec::new();
        for i in crate::forms::combinations(self.m1, self.p1) {
            let idx = Multiindex::new(i).unwrap();
            let inner = InnerForm {
                phi: Arc::clone(&self.phi),
                x: x.to_vec(),
                i: idx.clone(),
                m2: self.t2.dim(),
                p2: self.t2.dimension(),
            };
            let v = self
                .t2
                .evaluate_unchecked(&(Arc::new(inner) as DynForm), &self.cfg)?;
            if v != 0.0 {
                let s = if (idx.len() * codeg2) % 2 == 0 { 1.0 } else { -1.0 };
                out.push((idx, s * v));
            }
        }
        Ok(out)
    }

    fn support(&self) -> Support {
        match self.phi.support() {
            Support::Unbounded => Support::Unbounded,
            Support::Box(b) => Support::Box(Aabb::new(
                b.lo[..self.m1].to_vec(),
                b.hi[..self.m1].to_vec(),
            )),
        }
    }

    fn d(&self) -> Result<DynForm> {
        Err(Error::Other(
            "derivative of a product slice form is not defined".into(),
        ))
    }
}

/// Second-factor test form at a frozen first-factor point.
struct InnerForm {
    phi: DynForm,
    x: Vec<f64>,
    i: Multiindex,
    m2: usize,
    p2: usize,
}

impl TestForm for InnerForm {
    fn dim(&self) -> usize {
        self.m2
    }

    fn degree(&self) -> usize {
        self.p2
    }

    fn coeffs_at(&self, y: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let m1 = self.x.len();
        let mut point = self.x.clone();
        point.extend_from_slice(y);
        let coeffs = self.phi.coeffs_at(&point)?;
        let mut out = Vec::new();
        for j in crate::forms::combinations(self.m2, self.p2) {
            let shifted = Multiindex::new(j.iter().map(|v| v + m1).collect()).unwrap();
            // i precedes shifted, so the merge sign is +1
            let (merged, sign) = match self.i.merge_sign(&shifted) {
                Some(p) => p,
                None => continue,
            };
            if let Some((_, v)) = coeffs.iter().find(|(k, _)| *k == merged) {
                let val = sign * v;
                if val != 0.0 {
                    out.push((Multiindex::new(j).unwrap(), val));
                }
            }
        }
        Ok(out)
    }

    fn support(&self) -> Support {
        match self.phi.support() {
            Support::Unbounded => Support::Unbounded,
            Support::Box(b) => {
                let m1 = self.x.len();
                // empty when the frozen point lies outside the projection
                for r in 0..m1 {
                    if self.x[r] < b.lo[r] || self.x[r] > b.hi[r] {
                        return Support::Box(Aabb::new(
                            vec![1.0; self.m2],
                            vec![-1.0; self.m2],
                        ));
                    }
                }
                Support::Box(Aabb::new(b.lo[m1..].to_vec(), b.hi[m1..].to_vec()))
            }
        }
    }

    fn d(&self) -> Result<DynForm> {
        Err(Error::Other(
            "derivative of a frozen slice form is not defined".into(),
        ))
    }
}
