//! Scalar coefficient functions as symbolic expression trees.
//!
//! Coefficients of differential forms are kept symbolic so that exterior
//! derivatives are exact rather than finite-differenced. The grammar is
//! fixed: `+ - * / ^ exp sin cos bump(r)` over variables `x1..xm`.
//!
//! Two extra node kinds exist only as closure of the tree under
//! differentiation and as building blocks for smooth cutoffs:
//! `Bump` carries a polynomial-like cofactor so that derivatives of the
//! standard bump stay exactly zero outside their support, and
//! `SmoothStep`/`StepWindow` realize the C-infinity transition used for
//! smoothed ball indicators and plateau cutoffs.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Support};

/// Expression tree over variables `x1..xm` (0-based indices internally).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Base raised to a fixed real exponent.
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    /// `factor * exp(-r^2 / (r^2 - q))` where `q = sum args_j^2 < r^2`,
    /// exactly zero where `q >= r^2` (the factor is not evaluated there).
    Bump {
        radius: f64,
        args: Vec<Expr>,
        factor: Box<Expr>,
    },
    /// Monotone C-infinity step: 0 for `u <= 0`, 1 for `u >= 1`.
    SmoothStep(Box<Expr>),
    /// `factor` where `0 < gate < 1`, exactly zero elsewhere.
    StepWindow {
        gate: Box<Expr>,
        factor: Box<Expr>,
    },
    /// Hard clamp: `factor` where `gate >= 0`, exactly zero elsewhere.
    /// Carries declared support through affine substitution.
    PosWindow {
        gate: Box<Expr>,
        factor: Box<Expr>,
    },
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, e: f64) -> Expr {
        Expr::Pow(Box::new(a), e)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Evaluate at a point. Total on the declared domain; division by zero
    /// and invalid powers are rejected.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => Ok(x[*i]),
            Expr::Add(a, b) => Ok(a.eval(x)? + b.eval(x)?),
            Expr::Sub(a, b) => Ok(a.eval(x)? - b.eval(x)?),
            Expr::Mul(a, b) => Ok(a.eval(x)? * b.eval(x)?),
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d == 0.0 {
                    return Err(Error::Eval("division by zero".into()));
                }
                Ok(a.eval(x)? / d)
            }
            Expr::Pow(a, e) => {
                let base = a.eval(x)?;
                let v = if e.fract() == 0.0 && e.abs() < 1e9 {
                    base.powi(*e as i32)
                } else {
                    base.powf(*e)
                };
                if v.is_nan() {
                    return Err(Error::Eval(format!("invalid power {base}^{e}")));
                }
                Ok(v)
            }
            Expr::Exp(a) => Ok(a.eval(x)?.exp()),
            Expr::Sin(a) => Ok(a.eval(x)?.sin()),
            Expr::Cos(a) => Ok(a.eval(x)?.cos()),
            Expr::Bump {
                radius,
                args,
                factor,
            } => {
                let r2 = radius * radius;
                let mut q = 0.0;
                for a in args {
                    let v = a.eval(x)?;
                    q += v * v;
                }
                if q >= r2 {
                    return Ok(0.0);
                }
                let exponent = -r2 / (r2 - q);
                // the exp underflows before any rational cofactor can overflow
                if exponent < -700.0 {
                    return Ok(0.0);
                }
                Ok(factor.eval(x)? * exponent.exp())
            }
            Expr::SmoothStep(u) => Ok(smooth_step(u.eval(x)?)),
            Expr::StepWindow { gate, factor } => {
                let g = gate.eval(x)?;
                if g <= 1e-9 || g >= 1.0 - 1e-9 {
                    return Ok(0.0);
                }
                factor.eval(x)
            }
            Expr::PosWindow { gate, factor } => {
                if gate.eval(x)? < 0.0 {
                    return Ok(0.0);
                }
                factor.eval(x)
            }
        }
    }

    /// Exact partial derivative with respect to `x_{axis}`.
    pub fn derivative(&self, axis: usize) -> Expr {
        let d = match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => {
                if *i == axis {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Add(a, b) => Expr::add(a.derivative(axis), b.derivative(axis)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(axis), b.derivative(axis)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(axis), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(axis)),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.derivative(axis), (**b).clone()),
                    Expr::mul((**a).clone(), b.derivative(axis)),
                ),
                Expr::pow((**b).clone(), 2.0),
            ),
            Expr::Pow(a, e) => Expr::mul(
                Expr::mul(Expr::Const(*e), Expr::pow((**a).clone(), e - 1.0)),
                a.derivative(axis),
            ),
            Expr::Exp(a) => Expr::mul(Expr::Exp(a.clone()), a.derivative(axis)),
            Expr::Sin(a) => Expr::mul(Expr::Cos(a.clone()), a.derivative(axis)),
            Expr::Cos(a) => Expr::mul(
                Expr::sub(Expr::Const(0.0), Expr::Sin(a.clone())),
                a.derivative(axis),
            ),
            Expr::Bump {
                radius,
                args,
                factor,
            } => {
                // d/dx (factor * e^E) = (factor * dE/dx + dfactor/dx) e^E
                // with E = -r^2/(r^2 - q), dE/dx = -2 r^2 (sum a_j a_j') / (r^2 - q)^2.
                let r2 = radius * radius;
                let mut q = Expr::Const(0.0);
                let mut num = Expr::Const(0.0);
                for a in args {
                    q = Expr::add(q, Expr::pow(a.clone(), 2.0));
                    num = Expr::add(num, Expr::mul(a.clone(), a.derivative(axis)));
                }
                let weight = Expr::div(
                    Expr::mul(Expr::Const(-2.0 * r2), num),
                    Expr::pow(Expr::sub(Expr::Const(r2), q), 2.0),
                );
                Expr::Bump {
                    radius: *radius,
                    args: args.clone(),
                    factor: Box::new(Expr::add(
                        Expr::mul((**factor).clone(), weight),
                        factor.derivative(axis),
                    )),
                }
            }
            Expr::SmoothStep(u) => {
                // h'(u) = h (1 - h) (1/u^2 - 1/(1-u)^2) on 0 < u < 1, zero outside
                let h = Expr::SmoothStep(u.clone());
                let shape = Expr::mul(
                    Expr::mul(h.clone(), Expr::sub(Expr::Const(1.0), h)),
                    Expr::sub(
                        Expr::pow((**u).clone(), -2.0),
                        Expr::pow(Expr::sub(Expr::Const(1.0), (**u).clone()), -2.0),
                    ),
                );
                Expr::StepWindow {
                    gate: u.clone(),
                    factor: Box::new(Expr::mul(shape, u.derivative(axis))),
                }
            }
            Expr::StepWindow { gate, factor } => {
                // the gate contributes nothing: the factor already vanishes to
                // all orders at the window edges
                Expr::StepWindow {
                    gate: gate.clone(),
                    factor: Box::new(factor.derivative(axis)),
                }
            }
            Expr::PosWindow { gate, factor } => Expr::PosWindow {
                gate: gate.clone(),
                factor: Box::new(factor.derivative(axis)),
            },
        };
        d.simplified()
    }

    /// Light structural simplification (constant folding, unit elimination).
    pub fn simplified(&self) -> Expr {
        match self {
            Expr::Add(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                    (Expr::Const(c), _) if *c == 0.0 => b,
                    (_, Expr::Const(c)) if *c == 0.0 => a,
                    _ => Expr::add(a, b),
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
                    (_, Expr::Const(c)) if *c == 0.0 => a,
                    _ => Expr::sub(a, b),
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                match (&a, &b) {
                    (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                    (Expr::Const(c), _) | (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(0.0),
                    (Expr::Const(c), _) if *c == 1.0 => b,
                    (_, Expr::Const(c)) if *c == 1.0 => a,
                    _ => Expr::mul(a, b),
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                match (&a, &b) {
                    (_, Expr::Const(c)) if *c != 0.0 => {
                        Expr::mul(Expr::Const(1.0 / c), a).simplified()
                    }
                    _ => Expr::div(a, b),
                }
            }
            Expr::Pow(a, e) => {
                let a = a.simplified();
                match (&a, e) {
                    (Expr::Const(x), _) if x.powf(*e).is_finite() => Expr::Const(x.powf(*e)),
                    (_, e) if *e == 1.0 => a,
                    _ => Expr::pow(a, *e),
                }
            }
            Expr::Exp(a) => Expr::Exp(Box::new(a.simplified())),
            Expr::Sin(a) => Expr::Sin(Box::new(a.simplified())),
            Expr::Cos(a) => Expr::Cos(Box::new(a.simplified())),
            Expr::Bump {
                radius,
                args,
                factor,
            } => {
                let factor = factor.simplified();
                if factor.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::Bump {
                        radius: *radius,
                        args: args.iter().map(|a| a.simplified()).collect(),
                        factor: Box::new(factor),
                    }
                }
            }
            Expr::SmoothStep(u) => Expr::SmoothStep(Box::new(u.simplified())),
            Expr::StepWindow { gate, factor } => {
                let factor = factor.simplified();
                if factor.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::StepWindow {
                        gate: Box::new(gate.simplified()),
                        factor: Box::new(factor),
                    }
                }
            }
            Expr::PosWindow { gate, factor } => {
                let factor = factor.simplified();
                if factor.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::PosWindow {
                        gate: Box::new(gate.simplified()),
                        factor: Box::new(factor),
                    }
                }
            }
            leaf => leaf.clone(),
        }
    }

    /// Substitute `x_i := sum_j matrix[i][j] t_j + translation[i]`.
    /// The result lives over the `t` variables.
    pub fn substitute_affine(&self, matrix: &[Vec<f64>], translation: &[f64]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => {
                let mut e = Expr::Const(translation[*i]);
                for (j, &a) in matrix[*i].iter().enumerate() {
                    if a != 0.0 {
                        e = Expr::add(e, Expr::mul(Expr::Const(a), Expr::Var(j)));
                    }
                }
                e.simplified()
            }
            Expr::Add(a, b) => Expr::add(
                a.substitute_affine(matrix, translation),
                b.substitute_affine(matrix, translation),
            ),
            Expr::Sub(a, b) => Expr::sub(
                a.substitute_affine(matrix, translation),
                b.substitute_affine(matrix, translation),
            ),
            Expr::Mul(a, b) => Expr::mul(
                a.substitute_affine(matrix, translation),
                b.substitute_affine(matrix, translation),
            ),
            Expr::Div(a, b) => Expr::div(
                a.substitute_affine(matrix, translation),
                b.substitute_affine(matrix, translation),
            ),
            Expr::Pow(a, e) => Expr::pow(a.substitute_affine(matrix, translation), *e),
            Expr::Exp(a) => Expr::Exp(Box::new(a.substitute_affine(matrix, translation))),
            Expr::Sin(a) => Expr::Sin(Box::new(a.substitute_affine(matrix, translation))),
            Expr::Cos(a) => Expr::Cos(Box::new(a.substitute_affine(matrix, translation))),
            Expr::Bump {
                radius,
                args,
                factor,
            } => Expr::Bump {
                radius: *radius,
                args: args
                    .iter()
                    .map(|a| a.substitute_affine(matrix, translation))
                    .collect(),
                factor: Box::new(factor.substitute_affine(matrix, translation)),
            },
            Expr::SmoothStep(u) => {
                Expr::SmoothStep(Box::new(u.substitute_affine(matrix, translation)))
            }
            Expr::StepWindow { gate, factor } => Expr::StepWindow {
                gate: Box::new(gate.substitute_affine(matrix, translation)),
                factor: Box::new(factor.substitute_affine(matrix, translation)),
            },
            Expr::PosWindow { gate, factor } => Expr::PosWindow {
                gate: Box::new(gate.substitute_affine(matrix, translation)),
                factor: Box::new(factor.substitute_affine(matrix, translation)),
            },
        }
    }

    /// Affine form `c + sum coeffs_i x_i` of the expression, if it is affine.
    fn as_affine(&self, dim: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            Expr::Const(c) => Some((vec![0.0; dim], *c)),
            Expr::Var(i) => {
                let mut v = vec![0.0; dim];
                v[*i] = 1.0;
                Some((v, 0.0))
            }
            Expr::Add(a, b) => {
                let (ca, ka) = a.as_affine(dim)?;
                let (cb, kb) = b.as_affine(dim)?;
                Some((
                    ca.iter().zip(&cb).map(|(x, y)| x + y).collect(),
                    ka + kb,
                ))
            }
            Expr::Sub(a, b) => {
                let (ca, ka) = a.as_affine(dim)?;
                let (cb, kb) = b.as_affine(dim)?;
                Some((
                    ca.iter().zip(&cb).map(|(x, y)| x - y).collect(),
                    ka - kb,
                ))
            }
            Expr::Mul(a, b) => {
                let (ca, ka) = a.as_affine(dim)?;
                let (cb, kb) = b.as_affine(dim)?;
                if ca.iter().all(|&v| v == 0.0) {
                    Some((cb.iter().map(|v| v * ka).collect(), ka * kb))
                } else if cb.iter().all(|&v| v == 0.0) {
                    Some((ca.iter().map(|v| v * kb).collect(), ka * kb))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let (cb, kb) = b.as_affine(dim)?;
                if cb.iter().all(|&v| v == 0.0) && kb != 0.0 {
                    let (ca, ka) = a.as_affine(dim)?;
                    Some((ca.iter().map(|v| v / kb).collect(), ka / kb))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Conservative bounding box of the support (the set where the
    /// expression can be nonzero). Sound, not tight.
    pub fn support(&self, dim: usize) -> Support {
        match self {
            Expr::Const(c) if *c == 0.0 => {
                Support::Box(Aabb::new(vec![1.0; dim], vec![-1.0; dim]))
            }
            Expr::Mul(a, b) => a.support(dim).intersect(&b.support(dim)),
            Expr::Add(a, b) | Expr::Sub(a, b) => a.support(dim).hull(&b.support(dim)),
            Expr::Div(a, _) => a.support(dim),
            Expr::Pow(a, e) if *e > 0.0 => a.support(dim),
            Expr::Bump {
                radius,
                args,
                factor,
            } => {
                // an arg affine in a single variable bounds that axis
                let mut bx = Aabb::unbounded(dim);
                for a in args {
                    if let Some((coeffs, k)) = a.as_affine(dim) {
                        let nz: Vec<usize> =
                            (0..dim).filter(|&i| coeffs[i] != 0.0).collect();
                        if nz.len() == 1 {
                            let i = nz[0];
                            let c = coeffs[i];
                            // |c x_i + k| <= radius
                            let (mut lo, mut hi) =
                                ((-radius - k) / c, (radius - k) / c);
                            if lo > hi {
                                std::mem::swap(&mut lo, &mut hi);
                            }
                            bx.lo[i] = bx.lo[i].max(lo);
                            bx.hi[i] = bx.hi[i].min(hi);
                        }
                    }
                }
                Support::Box(bx).intersect(&factor.support(dim))
            }
            Expr::StepWindow { factor, .. } | Expr::PosWindow { factor, .. } => {
                factor.support(dim)
            }
            _ => Support::Unbounded,
        }
    }
}

/// C-infinity monotone step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// A scalar coefficient function on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    dim: usize,
    /// Declared support radius: evaluation outside the closed ball of this
    /// radius about the origin returns exactly zero.
    declared_radius: Option<f64>,
    /// Support box declared by a constructor when inference cannot see it.
    support_override: Option<Aabb>,
}

impl ScalarField {
    pub fn new(expr: Expr, dim: usize) -> Self {
        ScalarField {
            expr: expr.simplified(),
            dim,
            declared_radius: None,
            support_override: None,
        }
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new(Expr::Const(c), dim)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    /// Declare a support radius; evaluation outside is clamped to zero.
    pub fn with_support_radius(mut self, r: f64) -> Self {
        assert!(r >= 0.0, "support radius must be nonnegative");
        self.declared_radius = Some(r);
        self
    }

    pub fn with_support_box(mut self, b: Aabb) -> Self {
        assert_eq!(b.dim(), self.dim);
        self.support_override = Some(b);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn declared_radius(&self) -> Option<f64> {
        self.declared_radius
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, field has dimension {}",
                x.len(),
                self.dim
            )));
        }
        if let Some(r) = self.declared_radius {
            let n2: f64 = x.iter().map(|v| v * v).sum();
            if n2 > r * r {
                return Ok(0.0);
            }
        }
        if let Some(b) = &self.support_override {
            if !b.contains(x) {
                return Ok(0.0);
            }
        }
        self.expr.eval(x)
    }

    pub fn derivative(&self, axis: usize) -> ScalarField {
        ScalarField {
            expr: self.expr.derivative(axis),
            dim: self.dim,
            declared_radius: self.declared_radius,
            support_override: self.support_override.clone(),
        }
    }

    /// Support of the field: inferred from the tree, narrowed by any
    /// declared radius or override box.
    pub fn support(&self) -> Support {
        let mut s = self.expr.support(self.dim);
        if let Some(r) = self.declared_radius {
            s = s.intersect(&Support::Box(Aabb::centered_cube(self.dim, r)));
        }
        if let Some(b) = &self.support_override {
            s = s.intersect(&Support::Box(b.clone()));
        }
        s
    }

    /// Precompose with an affine map: the result is `x -> self(A x + t)`
    /// over `n_in` variables.
    pub fn compose_affine(
        &self,
        matrix: &[Vec<f64>],
        translation: &[f64],
        n_in: usize,
    ) -> Result<ScalarField> {
        if matrix.len() != self.dim || translation.len() != self.dim {
            return Err(Error::DimensionMismatch(
                "affine map output dimension does not match field dimension".into(),
            ));
        }
        let mut expr = self.expr.substitute_affine(matrix, translation);
        // image variables as expressions over t, for rebuilding clamps
        let image_row = |i: usize| {
            let mut row = Expr::Const(translation[i]);
            for (j, &a) in matrix[i].iter().enumerate() {
                if a != 0.0 {
                    row = Expr::add(row, Expr::mul(Expr::Const(a), Expr::Var(j)));
                }
            }
            row.simplified()
        };
        if let Some(r) = self.declared_radius {
            // |A t + b| <= r, as a hard window
            let mut q = Expr::Const(0.0);
            for i in 0..self.dim {
                q = Expr::add(q, Expr::pow(image_row(i), 2.0));
            }
            expr = Expr::PosWindow {
                gate: Box::new(Expr::sub(Expr::Const(r * r), q)),
                factor: Box::new(expr),
            };
        }
        if let Some(b) = &self.support_override {
            for i in 0..self.dim {
                if b.lo[i].is_finite() || b.hi[i].is_finite() {
                    // (hi - row)(row - lo) >= 0 within the slab
                    let hi = if b.hi[i].is_finite() { b.hi[i] } else { 1e300 };
                    let lo = if b.lo[i].is_finite() { b.lo[i] } else { -1e300 };
                    let row = image_row(i);
                    expr = Expr::PosWindow {
                        gate: Box::new(Expr::mul(
                            Expr::sub(Expr::Const(hi), row.clone()),
                            Expr::sub(row, Expr::Const(lo)),
                        )),
                        factor: Box::new(expr),
                    };
                }
            }
        }
        // Localize: the composition vanishes outside the preimage of the
        // original support box, which interval contraction bounds.
        let mut out = ScalarField::new(expr, n_in);
        if let Support::Box(b) = self.support() {
            match crate::quad::contract_box(matrix, translation, &Aabb::unbounded(n_in), &b) {
                Some(pre) => out = out.with_support_box(pre),
                None => return Ok(ScalarField::zero(n_in)),
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.pos,
            message: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat(b'+') {
                e = Expr::add(e, self.term()?);
            } else if self.eat(b'-') {
                e = Expr::sub(e, self.term()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.power()?;
        loop {
            if self.eat(b'*') {
                e = Expr::mul(e, self.power()?);
            } else if self.eat(b'/') {
                e = Expr::div(e, self.power()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.eat(b'^') {
            let e = self.signed_number()?;
            Ok(Expr::pow(base, e))
        } else {
            Ok(base)
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::sub(Expr::Const(0.0), self.unary()?))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let v = self.number()?;
                Ok(Expr::Const(v))
            }
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "exp" | "sin" | "cos" => {
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(match name {
                    "exp" => Expr::Exp(Box::new(arg)),
                    "sin" => Expr::Sin(Box::new(arg)),
                    _ => Expr::Cos(Box::new(arg)),
                })
            }
            "pow" => {
                self.expect(b'(')?;
                let base = self.expr()?;
                self.expect(b',')?;
                let e = self.signed_number()?;
                self.expect(b')')?;
                Ok(Expr::pow(base, e))
            }
            "bump" => {
                self.expect(b'(')?;
                let r = self.signed_number()?;
                self.expect(b')')?;
                if r <= 0.0 {
                    self.pos = start;
                    return self.err("bump radius must be positive");
                }
                Ok(Expr::Bump {
                    radius: r,
                    args: (0..self.dim).map(Expr::Var).collect(),
                    factor: Box::new(Expr::Const(1.0)),
                })
            }
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(idx) = rest.parse::<usize>() {
                        if idx >= 1 && idx <= self.dim {
                            return Ok(Expr::Var(idx - 1));
                        }
                        return Err(Error::UnknownVariable {
                            name: name.into(),
                            dim: self.dim,
                        });
                    }
                }
                self.pos = start;
                self.err(format!("unknown identifier `{name}`"))
            }
        }
    }

    fn signed_number(&mut self) -> Result<f64> {
        if self.eat(b'-') {
            Ok(-self.number()?)
        } else {
            self.number()
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && {
            let c = self.src[self.pos];
            c.is_ascii_digit() || c == b'.'
        } {
            self.pos += 1;
        }
        // exponent suffix
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                position: start,
                message: format!("bad number: {e}"),
            })
    }
}

/// Parse an expression over `x1..xm` into a [`ScalarField`].
///
/// `bump(r)` denotes the standard unnormalized bump of support radius `r`
/// about the origin, evaluated on the full point.
pub fn parse_scalar_expr(text: &str, m: usize) -> Result<ScalarField> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        dim: m,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input");
    }
    Ok(ScalarField::new(e, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, m: usize, x: &[f64]) -> f64 {
        parse_scalar_expr(text, m).unwrap().eval(x).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(eval("exp(-x1)*x2", 2, &[0.0, 1.0]), 1.0);
        assert_eq!(eval("x1*x1 - x2", 2, &[2.0, 1.0]), 3.0);
        assert_eq!(eval("bump(1)", 2, &[1.0, 0.3]), 0.0);
        assert_eq!(eval("bump(1)", 2, &[0.8, 0.6]), 0.0);
        assert!(eval("bump(1)", 2, &[0.0, 0.0]) > 0.3);
        assert_eq!(eval("2*x1^3", 1, &[2.0]), 16.0);
        assert_eq!(eval("pow(x1, -1)", 1, &[4.0]), 0.25);
        assert_eq!(eval("1.5e2 + x1", 1, &[1.0]), 151.0);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_scalar_expr("x1 + ", 2) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_scalar_expr("x1 * y", 2) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_scalar_expr("x3 + 1", 2),
            Err(Error::UnknownVariable { .. })
        ));
    }

    #[test]
    fn division_by_zero_rejected() {
        let f = parse_scalar_expr("1/x1", 1).unwrap();
        assert!(f.eval(&[0.0]).is_err());
        assert_eq!(f.eval(&[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn declared_support_clamps() {
        let f = parse_scalar_expr("x1 + 10", 1)
            .unwrap()
            .with_support_radius(2.0);
        assert_eq!(f.eval(&[3.0]).unwrap(), 0.0);
        assert_eq!(f.eval(&[1.0]).unwrap(), 11.0);
    }

    #[test]
    fn symbolic_derivative_matches_finite_difference() {
        let cases = [
            ("x1*x1*x2 + sin(x1)", 2),
            ("exp(-x1*x2)*cos(x2)", 2),
            ("bump(1.5)", 2),
            ("x1^3 / (x2 + 2)", 2),
        ];
        for (text, m) in cases {
            let f = parse_scalar_expr(text, m).unwrap();
            for axis in 0..m {
                let df = f.derivative(axis);
                let x = [0.3, -0.4];
                let h = 1e-6;
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[axis] += h;
                xm[axis] -= h;
                let fd =
                    (f.eval(&xp).unwrap() - f.eval(&xm).unwrap()) / (2.0 * h);
                let sym = df.eval(&x).unwrap();
                assert!(
                    (fd - sym).abs() < 1e-6 * (1.0 + sym.abs()),
                    "{text} axis {axis}: fd={fd} sym={sym}"
                );
            }
        }
    }

    #[test]
    fn bump_derivative_vanishes_outside_support() {
        let f = parse_scalar_expr("bump(1)", 2).unwrap();
        let df = f.derivative(0).derivative(0).derivative(1);
        assert_eq!(df.eval(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(df.eval(&[2.0, 3.0]).unwrap(), 0.0);
        assert!(df.eval(&[0.3, 0.1]).unwrap().is_finite());
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        assert!(smooth_step(0.3) > 0.0 && smooth_step(0.3) < 0.5);
    }

    #[test]
    fn support_inference() {
        let f = parse_scalar_expr("bump(2) * x1", 2).unwrap();
        match f.support() {
            Support::Box(b) => {
                assert_eq!(b.lo, vec![-2.0, -2.0]);
                assert_eq!(b.hi, vec![2.0, 2.0]);
            }
            _ => panic!("expected box support"),
        }
        let g = parse_scalar_expr("x1 + x2", 2).unwrap();
        assert_eq!(g.support(), Support::Unbounded);
    }
}
