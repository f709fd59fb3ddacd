//! Regularized intersection pairing of two currents: the level values
//! `I_ε = ∫_{T₁} (r_ε T₂) ∧ φ` along a geometric ε schedule, Richardson
//! extrapolation of the limit, divergence-rate fitting, and the graded
//! commutativity residual.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::currents::{Current, DynForm, TestForm};
use crate::error::{Error, Result};
use crate::forms::{combinations, DifferentialForm, Multiindex};
use crate::geometry::Support;
use crate::mollifier::{KernelKind, SmoothedCurrent};
use crate::quad::{linear_fit, QuadratureConfig};

/// Geometric schedule `ε_k = ε₀ ρ^k`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub levels: usize,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule {
            eps0: 0.5,
            ratio: 0.5,
            levels: 8,
        }
    }
}

impl EpsSchedule {
    pub fn new(eps0: f64, ratio: f64, levels: usize) -> Result<Self> {
        if eps0 <= 0.0 {
            return Err(Error::BadSchedule(format!(
                "initial epsilon must be positive, got {eps0}"
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::BadSchedule(format!(
                "schedule ratio must lie in (0, 1), got {ratio}"
            )));
        }
        if levels < 4 {
            return Err(Error::BadSchedule(format!(
                "schedule needs at least 4 levels, got {levels}"
            )));
        }
        Ok(EpsSchedule {
            eps0,
            ratio,
            levels,
        })
    }

    pub fn eps_values(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|k| self.eps0 * self.ratio.powi(k as i32))
            .collect()
    }
}

/// Classification of the level sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    /// Differences settled; `limit` is the extrapolated value when the
    /// sequence looked second-order, else the finest raw value.
    Converged { limit: f64, error: f64 },
    /// `log|I|` grows like `exponent · log ε` with a clean linear fit.
    Diverged { exponent: f64 },
    Inconclusive,
}

/// One ε level with running diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub eps: f64,
    pub value: f64,
    /// `|I_k - I_{k-1}|`, absent on the first level.
    pub diff: Option<f64>,
    /// Log-log slope fitted over levels `0..=k`, present from the third.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntersectionResult {
    pub levels: Vec<LevelRow>,
    pub verdict: Verdict,
    /// Second-order extrapolation, present when the difference ratio
    /// matched `ρ²`.
    pub richardson: Option<f64>,
    pub finest: f64,
}

fn parity(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Shared preconditions: equal ambient spaces, `deg φ = i + j − m ≥ 0`,
/// and at least one compact support.
fn validate(t1: &Current, t2: &Current, phi: &DifferentialForm) -> Result<usize> {
    let m = t1.dim();
    if t2.dim() != m || phi.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "intersection operands live on R^{m}, R^{} and R^{}",
            t2.dim(),
            phi.dim()
        )));
    }
    let (i, j) = (t1.dimension(), t2.dimension());
    if i + j < m {
        return Err(Error::DegreeMismatch(format!(
            "currents of dimensions {i} and {j} in R^{m} have no intersection pairing"
        )));
    }
    let d = i + j - m;
    if phi.degree() != d {
        return Err(Error::DegreeMismatch(format!(
            "intersection of dimensions ({i}, {j}) in R^{m} pairs with {d}-forms, got degree {}",
            phi.degree()
        )));
    }
    if !t1.is_compactly_supported() && !t2.is_compactly_supported() {
        return Err(Error::NonCompactPairing);
    }
    Ok(d)
}

/// Localization of the slice form in the first factor: `x` must lie
/// within the kernel radius of `supp T₂` and inside `supp φ`.
fn slice_support(
    t2: &Current,
    phi: &DifferentialForm,
    kernel: KernelKind,
    eps: f64,
) -> Support {
    let near_t2 = match t2.support() {
        Support::Box(b) if b.is_empty() => return Support::Box(b),
        Support::Box(b) => Support::Box(b.inflate(kernel.radius() * eps)),
        Support::Unbounded => Support::Unbounded,
    };
    near_t2.intersect(&DifferentialForm::support(phi))
}

/// The form `x ↦ Σ_A ±θ-coefficients · T₂(f^ε(x−·) dy_{A^c}) dx_A ∧ φ(x)`,
/// from expanding `θ_ε(x−y) ∧ φ(x)` over the product and slicing in the
/// first factor.  Carries the full sign telescope of that expansion:
/// the `(dx − dy)` reordering, the φ transposition, the product-slice
/// convention, and the global orientation correction.
struct ThetaSlice {
    t2: Current,
    phi: DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: QuadratureConfig,
    m: usize,
    dim1: usize,
}

impl TestForm for ThetaSlice {
    fn dim(&self) -> usize {
        self.m
    }

    fn degree(&self) -> usize {
        self.dim1
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let m = self.m;
        let (i, j) = (self.dim1, self.t2.dimension());
        let jp = m - j;
        let d = self.phi.degree();
        // global correction relating the product pairing of θ_ε ∧ φ back
        // to ∫_{T₁} (r_ε T₂) ∧ φ
        let s_glob = parity(j * (1 + d) + i * jp);
        // first-factor slice convention of the product pairing
        let s_slice = parity(i * jp);
        // transposing φ(x) past the dy block
        let s_phi = parity(d * j);
        let field = self.kernel.field_at(x, self.eps)?;
        let phi_vals = self.phi.eval(x)?;
        let mut acc: BTreeMap<Multiindex, f64> = BTreeMap::new();
        for a in combinations(m, jp) {
            let a_idx = Multiindex::new(a).unwrap();
            let ac = a_idx.complement(m);
            // the `dx_A ∧ dy_{A^c}` term of `Π (dx_k − dy_k)`
            let s_theta = parity(j) * a_idx.complement_sign(m);
            let probe = DifferentialForm::monomial(m, ac, field.clone())?;
            let v = self.t2.evaluate_form(&probe, &self.cfg)?;
            if v == 0.0 {
                continue;
            }
            for (j_idx, g) in &phi_vals {
                let Some((merged, msign)) = a_idx.merge_sign(j_idx) else {
                    continue;
                };
                *acc.entry(merged).or_insert(0.0) +=
                    s_glob * s_slice * s_theta * s_phi * msign * v * g;
            }
        }
        Ok(acc.into_iter().filter(|(_, v)| *v != 0.0).collect())
    }

    fn support(&self) -> Support {
        slice_support(&self.t2, &self.phi, self.kernel, self.eps)
    }

    fn d(&self) -> Result<DynForm> {
        Err(Error::Other(
            "derivative of an intersection slice form is not defined".into(),
        ))
    }
}

/// Composition route: the coefficient table of the smooth form `r_ε T₂`
/// wedged with `φ`, through the complement-sign representation.
struct ComposedSlice {
    t2: Current,
    phi: DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: QuadratureConfig,
    m: usize,
    dim1: usize,
}

impl TestForm for ComposedSlice {
    fn dim(&self) -> usize {
        self.m
    }

    fn degree(&self) -> usize {
        self.dim1
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<Vec<(Multiindex, f64)>> {
        let smoothed = SmoothedCurrent::new(&self.t2, self.eps, self.kernel, self.cfg)?;
        let omega = smoothed.coefficients_at(x)?;
        let phi_vals = self.phi.eval(x)?;
        let mut acc: BTreeMap<Multiindex, f64> = BTreeMap::new();
        for (w_idx, wv) in &omega {
            if *wv == 0.0 {
                continue;
            }
            for (j_idx, g) in &phi_vals {
                let Some((merged, msign)) = w_idx.merge_sign(j_idx) else {
                    continue;
                };
                *acc.entry(merged).or_insert(0.0) += msign * wv * g;
            }
        }
        Ok(acc.into_iter().filter(|(_, v)| *v != 0.0).collect())
    }

    fn support(&self) -> Support {
        slice_support(&self.t2, &self.phi, self.kernel, self.eps)
    }

    fn d(&self) -> Result<DynForm> {
        Err(Error::Other(
            "derivative of an intersection slice form is not defined".into(),
        ))
    }
}

/// One level of the regularized intersection, via the product-expansion
/// slice form.
pub fn i_eps(
    t1: &Current,
    t2: &Current,
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    validate(t1, t2, phi)?;
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    let slice: DynForm = Arc::new(ThetaSlice {
        t2: t2.clone(),
        phi: phi.clone(),
        eps,
        kernel,
        cfg: *cfg,
        m: t1.dim(),
        dim1: t1.dimension(),
    });
    t1.evaluate(&slice, cfg)
}

/// Independent route for the same level value, going through the
/// smoothed-form coefficient representation instead of the product
/// expansion.  Used as a cross-check of the sign bookkeeping.
pub fn i_eps_composition(
    t1: &Current,
    t2: &Current,
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    validate(t1, t2, phi)?;
    if eps <= 0.0 {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    let slice: DynForm = Arc::new(ComposedSlice {
        t2: t2.clone(),
        phi: phi.clone(),
        eps,
        kernel,
        cfg: *cfg,
        m: t1.dim(),
        dim1: t1.dimension(),
    });
    t1.evaluate(&slice, cfg)
}

/// Runs the schedule (levels in parallel, merged by index) and classifies
/// the sequence.
pub fn intersect(
    t1: &Current,
    t2: &Current,
    phi: &DifferentialForm,
    schedule: &EpsSchedule,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<IntersectionResult> {
    validate(t1, t2, phi)?;
    let eps_values = schedule.eps_values();
    let values = eps_values
        .par_iter()
        .map(|&e| i_eps(t1, t2, phi, e, kernel, cfg))
        .collect::<Result<Vec<f64>>>()?;
    Ok(classify(&eps_values, &values, schedule.ratio))
}

fn classify(eps: &[f64], values: &[f64], ratio: f64) -> IntersectionResult {
    let n = values.len();
    let mut levels = Vec::with_capacity(n);
    for k in 0..n {
        let diff = (k > 0).then(|| (values[k] - values[k - 1]).abs());
        let slope = (k >= 2).then(|| {
            let xs: Vec<f64> = eps[..=k].iter().map(|e| e.ln()).collect();
            let ys: Vec<f64> = values[..=k]
                .iter()
                .map(|v| v.abs().max(1e-300).ln())
                .collect();
            linear_fit(&xs, &ys).map(|(_, b, _)| b)
        });
        levels.push(LevelRow {
            eps: eps[k],
            value: values[k],
            diff,
            slope: slope.flatten(),
        });
    }
    let finest = values[n - 1];
    let diffs: Vec<f64> = (1..n).map(|k| (values[k] - values[k - 1]).abs()).collect();
    let final_diff = *diffs.last().unwrap();
    let tol = 1e-3f64.max(0.01 * finest.abs());
    // small additive slack so exactly-converged sequences (all-zero
    // differences) still count as nonincreasing
    let settled = diffs.len() >= 3
        && diffs[diffs.len() - 3..]
            .windows(2)
            .all(|w| w[1] <= w[0] * 1.05 + 1e-12)
        && final_diff < tol;
    if settled {
        let rho2 = ratio * ratio;
        let prev_diff = diffs[diffs.len() - 2];
        let richardson = if prev_diff > 0.0 {
            let r = final_diff / prev_diff;
            (r > 0.4 * rho2 && r < 2.5 * rho2)
                .then(|| (values[n - 1] - rho2 * values[n - 2]) / (1.0 - rho2))
        } else {
            None
        };
        let limit = richardson.unwrap_or(finest);
        return IntersectionResult {
            levels,
            verdict: Verdict::Converged {
                limit,
                error: final_diff,
            },
            richardson,
            finest,
        };
    }
    // divergence: clean power law in ε with negative exponent
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.abs().max(1e-300).ln()).collect();
    let verdict = match linear_fit(&xs, &ys) {
        Some((_, slope, rms)) if slope < -0.5 && rms < 0.1 => {
            Verdict::Diverged { exponent: slope }
        }
        _ => Verdict::Inconclusive,
    };
    IntersectionResult {
        levels,
        verdict,
        richardson: None,
        finest,
    }
}

/// `|I_ε(T₁,T₂,φ) − (−1)^{ij} I_ε(T₂,T₁,φ)|` where `i, j` are the current
/// dimensions; tends to zero with ε on fixtures whose intersection exists.
pub fn commutativity_residual(
    t1: &Current,
    t2: &Current,
    phi: &DifferentialForm,
    eps: f64,
    kernel: KernelKind,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let forward = i_eps(t1, t2, phi, eps, kernel, cfg)?;
    let backward = i_eps(t2, t1, phi, eps, kernel, cfg)?;
    let sign = parity(t1.dimension() * t2.dimension());
    Ok((forward - sign * backward).abs())
}
