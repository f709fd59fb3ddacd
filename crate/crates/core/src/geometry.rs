//! Axis-aligned boxes and small geometric helpers shared across modules.

/// Axis-aligned box in `R^m`. Individual axes may be unbounded (`-inf`/`inf`).
#[derive(Debug, Clone, PartialEq)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Aabb { lo, hi }
    }

    /// The whole space.
    pub fn unbounded(dim: usize) -> Self {
        Aabb {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    /// Cube `[-r, r]^dim`.
    pub fn centered_cube(dim: usize, r: f64) -> Self {
        Aabb {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    /// Box enclosing the ball `|x - c| <= r`.
    pub fn ball(center: &[f64], r: f64) -> Self {
        Aabb {
            lo: center.iter().map(|c| c - r).collect(),
            hi: center.iter().map(|c| c + r).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().all(|v| v.is_finite()) && self.hi.iter().all(|v| v.is_finite())
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn intersect(&self, other: &Aabb) -> Aabb {
        Aabb {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| a.max(*b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| a.min(*b))
                .collect(),
        }
    }

    pub fn hull(&self, other: &Aabb) -> Aabb {
        Aabb {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| a.min(*b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| a.max(*b))
                .collect(),
        }
    }

    /// Inflate every axis by `pad`.
    pub fn inflate(&self, pad: f64) -> Aabb {
        Aabb {
            lo: self.lo.iter().map(|v| v - pad).collect(),
            hi: self.hi.iter().map(|v| v + pad).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    /// Radius of the smallest origin-centered ball containing the box.
    /// `None` if unbounded.
    pub fn enclosing_radius(&self) -> Option<f64> {
        if !self.is_bounded() {
            return None;
        }
        let mut s = 0.0;
        for i in 0..self.dim() {
            let m = self.lo[i].abs().max(self.hi[i].abs());
            s += m * m;
        }
        Some(s.sqrt())
    }

    /// Cartesian product of two boxes.
    pub fn product(&self, other: &Aabb) -> Aabb {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        Aabb { lo, hi }
    }
}

/// Support metadata of a function or form: either contained in a box or unknown.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Box(Aabb),
    Unbounded,
}

impl Support {
    pub fn is_bounded(&self) -> bool {
        matches!(self, Support::Box(b) if b.is_bounded())
    }

    pub fn as_box(&self, dim: usize) -> Aabb {
        match self {
            Support::Box(b) => b.clone(),
            Support::Unbounded => Aabb::unbounded(dim),
        }
    }

    pub fn intersect(&self, other: &Support) -> Support {
        match (self, other) {
            (Support::Unbounded, s) => s.clone(),
            (s, Support::Unbounded) => s.clone(),
            (Support::Box(a), Support::Box(b)) => Support::Box(a.intersect(b)),
        }
    }

    pub fn hull(&self, other: &Support) -> Support {
        match (self, other) {
            (Support::Box(a), Support::Box(b)) => Support::Box(a.hull(b)),
            _ => Support::Unbounded,
        }
    }
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = pi^{d/2} / Gamma(d/2 + 1), built up by the recursion V_d = V_{d-2} * 2 pi / d
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Volume of the ball of radius `r` in dimension `d`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    unit_ball_volume(d) * r.powi(d as i32)
}
