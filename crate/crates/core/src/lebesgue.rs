//! Density diagnostics for currents: pushforward to coordinate planes,
//! ball-ratio density estimation, radial (polar) limits, and an
//! atom-detection verdict separating absolutely continuous behavior from
//! point masses.

use serde::Serialize;

use crate::currents::Current;
use crate::error::{Error, Result};
use crate::expr::{Expr, ScalarField};
use crate::forms::{AffineMap, DifferentialForm, Multiindex};
use crate::geometry::{ball_volume, Aabb, Support};
use crate::quad::{linear_fit, QuadratureConfig};

/// Coordinate plane spanned by a subset of the axes.
#[derive(Debug, Clone)]
pub struct PlaneSelector {
    retained: Multiindex,
    ambient: usize,
}

impl PlaneSelector {
    pub fn new(retained: Multiindex, ambient: usize) -> Result<Self> {
        if retained.indices().iter().any(|&i| i >= ambient) {
            return Err(Error::DimensionMismatch(format!(
                "plane axes {retained} exceed ambient dimension {ambient}"
            )));
        }
        Ok(PlaneSelector { retained, ambient })
    }

    /// Plane dimension.
    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn retained(&self) -> &Multiindex {
        &self.retained
    }

    /// The projection `π : R^m -> plane` as an affine map.
    pub fn projection(&self) -> AffineMap {
        let matrix = self
            .retained
            .indices()
            .iter()
            .map(|&k| {
                (0..self.ambient)
                    .map(|j| if j == k { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        AffineMap::new(matrix, vec![0.0; self.dim()]).unwrap()
    }

    pub fn project_point(&self, x: &[f64]) -> Vec<f64> {
        self.retained.indices().iter().map(|&k| x[k]).collect()
    }
}

/// Per-radius ball-ratio trace at one anchor.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub anchor: Vec<f64>,
    pub radii: Vec<f64>,
    /// Smoothed ball mass divided by the Lebesgue ball volume, per radius.
    pub ratios: Vec<f64>,
    /// Present only when the last two ratios satisfy the Cauchy criterion.
    pub converged: Option<f64>,
}

impl DensityEstimate {
    /// Best available value: the converged limit, else the finest ratio.
    pub fn value(&self) -> f64 {
        self.converged
            .unwrap_or_else(|| *self.ratios.last().unwrap_or(&0.0))
    }
}

/// Density values along a ray toward the anchor.
#[derive(Debug, Clone, Serialize)]
pub struct PolarEstimate {
    pub anchor: Vec<f64>,
    pub direction: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AtomVerdict {
    AcConsistent,
    AtomDetected,
    Inconclusive,
}

/// Result of the ball-mass growth fit.
#[derive(Debug, Clone, Serialize)]
pub struct AtomDiagnostic {
    pub verdict: AtomVerdict,
    /// Fitted exponent of `r ↦ mass(B_r)`; absent when the mass vanishes
    /// identically.
    pub exponent: Option<f64>,
    pub masses: Vec<f64>,
}

fn cauchy_ok(prev: f64, last: f64) -> bool {
    (last - prev).abs() < (1e-3f64).max(0.01 * last.abs())
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|r| *r <= 0.0) {
        return Err(Error::BadRadiiSchedule);
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::BadRadiiSchedule);
    }
    Ok(())
}

/// Default cutoff: exactly 1 on the support box of `T` inflated by 0.5,
/// falling smoothly to 0 over a further shoulder of width 0.5.
pub fn default_cutoff(current: &Current) -> Result<ScalarField> {
    let m = current.dim();
    let b = match current.support() {
        Support::Box(b) if b.is_bounded() => b,
        _ => {
            return Err(Error::Other(
                "default cutoff requires a compactly supported current".into(),
            ))
        }
    };
    let mut expr = Expr::Const(1.0);
    for i in 0..m {
        let lo = b.lo[i] - 0.5;
        let hi = b.hi[i] + 0.5;
        // rises over [lo-0.5, lo], falls over [hi, hi+0.5]
        let up = Expr::SmoothStep(Box::new(Expr::mul(
            Expr::Const(2.0),
            Expr::sub(Expr::var(i), Expr::Const(lo - 0.5)),
        )));
        let down = Expr::SmoothStep(Box::new(Expr::mul(
            Expr::Const(2.0),
            Expr::sub(Expr::Const(hi + 0.5), Expr::var(i)),
        )));
        expr = Expr::mul(expr, Expr::mul(up, down));
    }
    Ok(ScalarField::new(expr, m).with_support_box(b.inflate(1.0)))
}

/// Smoothed indicator of the ball `|y - a| <= r` on the plane, with the
/// transition straddling `r` over a shoulder of width `r/8`.
pub fn smoothed_ball_indicator(center: &[f64], r: f64) -> ScalarField {
    let d = center.len();
    let w = r / 8.0;
    let r_in = r - 0.5 * w;
    let r_out = r + 0.5 * w;
    let mut rho2 = Expr::Const(0.0);
    for (i, &c) in center.iter().enumerate() {
        let diff = Expr::sub(Expr::var(i), Expr::Const(c));
        rho2 = Expr::add(rho2, Expr::mul(diff.clone(), diff));
    }
    let denom = r_out * r_out - r_in * r_in;
    let gate = Expr::mul(
        Expr::Const(1.0 / denom),
        Expr::sub(Expr::Const(r_out * r_out), rho2),
    );
    ScalarField::new(Expr::SmoothStep(Box::new(gate)), d)
        .with_support_box(Aabb::ball(center, r_out))
}

/// `(π_*(ξT))(φ) = (ξT)(π^* φ)` for a form `φ` on the plane.
pub fn pushforward_eval(
    current: &Current,
    cutoff: &ScalarField,
    plane: &PlaneSelector,
    phi: &DifferentialForm,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if plane.ambient() != current.dim() {
        return Err(Error::DimensionMismatch(
            "plane and current ambient dimensions differ".into(),
        ));
    }
    if plane.dim() != current.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "plane dimension {} does not match current dimension {}",
            plane.dim(),
            current.dimension()
        )));
    }
    if phi.dim() != plane.dim() || phi.degree() != plane.dim() {
        return Err(Error::DegreeMismatch(
            "pushforward pairs only with top-degree forms on the plane".into(),
        ));
    }
    if !cutoff.support().is_bounded() && !current.is_compactly_supported() {
        return Err(Error::NonCompactPairing);
    }
    let xi_form = DifferentialForm::scalar(cutoff.clone());
    let cut = current.wedge_smooth(&xi_form)?;
    let pulled = phi.pullback(&plane.projection())?;
    cut.evaluate_form(&pulled, cfg)
}

/// Ball mass `π_*(ξT)(B_r)` with the smoothed indicator.
pub fn ball_mass(
    current: &Current,
    cutoff: &ScalarField,
    plane: &PlaneSelector,
    anchor: &[f64],
    r: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let d = plane.dim();
    let chi = smoothed_ball_indicator(anchor, r);
    let phi = if d == 0 {
        DifferentialForm::scalar(chi)
    } else {
        DifferentialForm::monomial(
            d,
            Multiindex::new((0..d).collect()).unwrap(),
            chi,
        )?
    };
    pushforward_eval(current, cutoff, plane, &phi, cfg)
}

/// Ball-ratio density estimation along a decreasing radius schedule.
pub fn density(
    current: &Current,
    cutoff: &ScalarField,
    plane: &PlaneSelector,
    anchor: &[f64],
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<DensityEstimate> {
    check_radii(radii)?;
    let d = plane.dim();
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        let mass = ball_mass(current, cutoff, plane, anchor, r, cfg)?;
        ratios.push(mass / ball_volume(d, r));
    }
    let converged = match ratios.as_slice() {
        [.., prev, last] if cauchy_ok(*prev, *last) => Some(*last),
        _ => None,
    };
    Ok(DensityEstimate {
        anchor: anchor.to_vec(),
        radii: radii.to_vec(),
        ratios,
        converged,
    })
}

/// Density along the ray `λ ↦ a + λ x`.
pub fn polar(
    current: &Current,
    cutoff: &ScalarField,
    plane: &PlaneSelector,
    anchor: &[f64],
    direction: &[f64],
    lambdas: &[f64],
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<PolarEstimate> {
    if lambdas.is_empty()
        || lambdas.iter().any(|l| *l <= 0.0)
        || lambdas.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::BadSchedule(
            "lambda schedule must be strictly decreasing and positive".into(),
        ));
    }
    let mut values = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let point: Vec<f64> = anchor
            .iter()
            .zip(direction)
            .map(|(a, x)| a + lambda * x)
            .collect();
        // shrink the measuring balls together with the ray parameter so the
        // probe stays on the correct side of the anchor
        let scaled: Vec<f64> = radii.iter().map(|r| r * lambda).collect();
        let est = density(current, cutoff, plane, &point, &scaled, cfg)?;
        values.push(est.value());
    }
    let limit = match values.as_slice() {
        [.., prev, last] if cauchy_ok(*prev, *last) => Some(*last),
        _ => None,
    };
    Ok(PolarEstimate {
        anchor: anchor.to_vec(),
        direction: direction.to_vec(),
        lambdas: lambdas.to_vec(),
        values,
        limit,
    })
}

/// Fits the growth of the ball mass in `r` and classifies the anchor.
pub fn atom_diagnostic(
    current: &Current,
    cutoff: &ScalarField,
    plane: &PlaneSelector,
    anchor: &[f64],
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<AtomDiagnostic> {
    check_radii(radii)?;
    if radii.len() < 3 {
        return Err(Error::DegenerateFit(
            "atom diagnostic needs at least 3 radii".into(),
        ));
    }
    let mut masses = Vec::with_capacity(radii.len());
    for &r in radii {
        masses.push(ball_mass(current, cutoff, plane, anchor, r, cfg)?);
    }
    let d = plane.dim() as f64;
    // negligible mass at every radius: nothing concentrates here
    let scale = masses.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-9 {
        return Ok(AtomDiagnostic {
            verdict: AtomVerdict::AcConsistent,
            exponent: None,
            masses,
        });
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = masses.iter().map(|v| v.abs().max(1e-300).ln()).collect();
    let (_, slope, _) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::DegenerateFit("log-log fit failed".into()))?;
    let verdict = if slope >= d - 0.5 {
        AtomVerdict::AcConsistent
    } else if slope < (0.5f64).min(d - 0.5) {
        AtomVerdict::AtomDetected
    } else {
        AtomVerdict::Inconclusive
    };
    Ok(AtomDiagnostic {
        verdict,
        exponent: Some(slope),
        masses,
    })
}

/// Default geometric radius schedule `r0 · factor^k`.
pub fn radius_schedule(r0: f64, factor: f64, count: usize) -> Result<Vec<f64>> {
    if r0 <= 0.0 || factor <= 0.0 || factor >= 1.0 || count == 0 {
        return Err(Error::BadRadiiSchedule);
    }
    Ok((0..count).map(|k| r0 * factor.powi(k as i32)).collect())
}
