//! Exterior algebra of differential forms on `R^m` with symbolic
//! coefficients.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::geometry::Support;

/// Strictly increasing list of coordinate indices (0-based internally,
/// 1-based in display and serialization).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiindex(Vec<usize>);

impl Multiindex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Other(format!(
                    "multiindex must be strictly increasing, got {indices:?}"
                )));
            }
        }
        Ok(Multiindex(indices))
    }

    pub fn empty() -> Self {
        Multiindex(Vec::new())
    }

    /// Sorts arbitrary indices, returning the permutation sign.
    /// `None` when an index repeats (the term vanishes).
    pub fn sort_with_sign(mut indices: Vec<usize>) -> Option<(Self, f64)> {
        let mut sign = 1.0;
        // insertion sort, counting transpositions
        for i in 1..indices.len() {
            let mut j = i;
            while j > 0 && indices[j - 1] > indices[j] {
                indices.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return None;
            }
        }
        Some((Multiindex(indices), sign))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Complementary indices within ambient dimension `m`.
    pub fn complement(&self, m: usize) -> Multiindex {
        Multiindex((0..m).filter(|i| !self.contains(*i)).collect())
    }

    /// Sign of the permutation `(self, other)` relative to the sorted union.
    /// `None` when the two overlap.
    pub fn merge_sign(&self, other: &Multiindex) -> Option<(Multiindex, f64)> {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        Multiindex::sort_with_sign(all)
    }

    /// Permutation sign of `(self, complement)` against `(0..m)`.
    pub fn complement_sign(&self, m: usize) -> f64 {
        self.merge_sign(&self.complement(m))
            .expect("complement never overlaps")
            .1
    }
}

impl fmt::Display for Multiindex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, ")")
    }
}

/// All k-element strictly increasing index tuples in `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Affine map `x -> M x + t` from `R^{n_in}` to `R^{n_out}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    /// `n_out` rows of `n_in` entries.
    pub matrix: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl AffineMap {
    pub fn new(matrix: Vec<Vec<f64>>, translation: Vec<f64>) -> Result<Self> {
        if matrix.len() != translation.len() {
            return Err(Error::DimensionMismatch(
                "matrix rows and translation length differ".into(),
            ));
        }
        let n_in = matrix.first().map_or(0, |r| r.len());
        if matrix.iter().any(|r| r.len() != n_in) {
            return Err(Error::DimensionMismatch("ragged matrix".into()));
        }
        Ok(AffineMap {
            matrix,
            translation,
        })
    }

    pub fn identity(n: usize) -> Self {
        AffineMap {
            matrix: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            translation: vec![0.0; n],
        }
    }

    /// Pure translation `x -> x + y`.
    pub fn translation_by(y: &[f64]) -> Self {
        let mut t = AffineMap::identity(y.len());
        t.translation = y.to_vec();
        t
    }

    pub fn n_in(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }

    pub fn n_out(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.translation)
            .map(|(row, t)| t + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    /// `self` after `other`: `x -> self(other(x))`.
    pub fn compose(&self, other: &AffineMap) -> Result<AffineMap> {
        if self.n_in() != other.n_out() {
            return Err(Error::DimensionMismatch(
                "affine composition dimension mismatch".into(),
            ));
        }
        let n_in = other.n_in();
        let matrix: Vec<Vec<f64>> = self
            .matrix
            .iter()
            .map(|row| {
                (0..n_in)
                    .map(|j| {
                        row.iter()
                            .zip(&other.matrix)
                            .map(|(a, orow)| a * orow[j])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let translation = self.apply(&other.translation);
        Ok(AffineMap {
            matrix,
            translation,
        })
    }

    /// Determinant of the Gram matrix of the linear part's columns.
    pub fn gram_determinant(&self) -> f64 {
        let n = self.n_in();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = self
                    .matrix
                    .iter()
                    .map(|row| row[i] * row[j])
                    .sum();
            }
        }
        determinant(&g)
    }

    /// Minor of the linear part: rows `rows`, columns `cols`.
    pub fn minor(&self, rows: &[usize], cols: &[usize]) -> f64 {
        let sub: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| cols.iter().map(|&c| self.matrix[r][c]).collect())
            .collect();
        determinant(&sub)
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// Degree-k differential form on `R^m` with symbolic coefficients.
#[derive(Debug, Clone)]
pub struct DifferentialForm {
    dim: usize,
    degree: usize,
    terms: Vec<(Multiindex, ScalarField)>,
}

impl DifferentialForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        DifferentialForm {
            dim,
            degree,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(
        dim: usize,
        degree: usize,
        terms: Vec<(Multiindex, ScalarField)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<Multiindex, ScalarField> = BTreeMap::new();
        for (idx, coeff) in terms {
            if idx.len() != degree {
                return Err(Error::DegreeMismatch(format!(
                    "multiindex {idx} has length {}, form degree is {degree}",
                    idx.len()
                )));
            }
            if idx.indices().iter().any(|&i| i >= dim) {
                return Err(Error::DimensionMismatch(format!(
                    "index {idx} out of range for dimension {dim}"
                )));
            }
            if coeff.dim() != dim {
                return Err(Error::DimensionMismatch(
                    "coefficient dimension differs from form dimension".into(),
                ));
            }
            match map.remove(&idx) {
                None => {
                    map.insert(idx, coeff);
                }
                Some(prev) => {
                    let sum = ScalarField::new(
                        crate::expr::Expr::add(prev.expr().clone(), coeff.expr().clone()),
                        dim,
                    );
                    map.insert(idx, sum);
                }
            }
        }
        Ok(DifferentialForm {
            dim,
            degree,
            terms: map.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        })
    }

    /// Single-term form `coeff dx_I`.
    pub fn monomial(dim: usize, idx: Multiindex, coeff: ScalarField) -> Result<Self> {
        let degree = idx.len();
        Self::from_terms(dim, degree, vec![(idx, coeff)])
    }

    /// 0-form from a scalar field.
    pub fn scalar(field: ScalarField) -> Self {
        let dim = field.dim();
        DifferentialForm {
            dim,
            degree: 0,
            terms: if field.is_zero() {
                Vec::new()
            } else {
                vec![(Multiindex::empty(), field)]
            },
        }
    }

    /// Top-degree volume form `dx_1 ∧ … ∧ dx_m`.
    pub fn volume(dim: usize) -> Self {
        DifferentialForm {
            dim,
            degree: dim,
            terms: vec![(
                Multiindex::new((0..dim).collect()).unwrap(),
                ScalarField::constant(1.0, dim),
            )],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> &[(Multiindex, ScalarField)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(i, f)| {
                (
                    i.clone(),
                    ScalarField::new(
                        crate::expr::Expr::mul(
                            crate::expr::Expr::Const(c),
                            f.expr().clone(),
                        ),
                        self.dim,
                    ),
                )
            })
            .collect();
        DifferentialForm::from_terms(self.dim, self.degree, terms).unwrap()
    }

    pub fn add(&self, other: &DifferentialForm) -> Result<Self> {
        if self.dim != other.dim || self.degree != other.degree {
            return Err(Error::DegreeMismatch(
                "cannot add forms of different dimension or degree".into(),
            ));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        DifferentialForm::from_terms(self.dim, self.degree, terms)
    }

    /// Exterior product. Degrees exceeding the ambient dimension give the
    /// zero form.
    pub fn wedge(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(
                "wedge of forms on different spaces".into(),
            ));
        }
        let degree = self.degree + other.degree;
        if degree > self.dim {
            return Ok(DifferentialForm::zero(self.dim, degree.min(self.dim + 1)));
        }
        let mut terms = Vec::new();
        for (i1, c1) in &self.terms {
            for (i2, c2) in &other.terms {
                if let Some((merged, sign)) = i1.merge_sign(i2) {
                    let coeff = ScalarField::new(
                        crate::expr::Expr::mul(
                            crate::expr::Expr::Const(sign),
                            crate::expr::Expr::mul(c1.expr().clone(), c2.expr().clone()),
                        ),
                        self.dim,
                    );
                    terms.push((merged, coeff));
                }
            }
        }
        DifferentialForm::from_terms(self.dim, degree, terms)
    }

    /// Exterior derivative, exact via symbolic differentiation.
    pub fn exterior_derivative(&self) -> DifferentialForm {
        let degree = self.degree + 1;
        if degree > self.dim {
            return DifferentialForm::zero(self.dim, degree.min(self.dim + 1));
        }
        let mut terms = Vec::new();
        for (idx, coeff) in &self.terms {
            for axis in 0..self.dim {
                if idx.contains(axis) {
                    continue;
                }
                let dc = coeff.derivative(axis);
                if dc.is_zero() {
                    continue;
                }
                let mut all = vec![axis];
                all.extend_from_slice(idx.indices());
                if let Some((merged, sign)) = Multiindex::sort_with_sign(all) {
                    let c = ScalarField::new(
                        crate::expr::Expr::mul(
                            crate::expr::Expr::Const(sign),
                            dc.expr().clone(),
                        ),
                        self.dim,
                    );
                    terms.push((merged, c));
                }
            }
        }
        DifferentialForm::from_terms(self.dim, degree, terms).unwrap()
    }

    /// Pullback along an affine map `A: R^{n_in} -> R^{n_out}`; `self` must
    /// live on `R^{n_out}`.
    pub fn pullback(&self, map: &AffineMap) -> Result<DifferentialForm> {
        if map.n_out() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "pullback: form on R^{} but map lands in R^{}",
                self.dim,
                map.n_out()
            )));
        }
        let n_in = map.n_in();
        if self.degree > n_in {
            return Ok(DifferentialForm::zero(n_in, self.degree.min(n_in + 1)));
        }
        let cols = combinations(n_in, self.degree);
        let mut terms = Vec::new();
        for (idx, coeff) in &self.terms {
            let pulled = coeff.compose_affine(&map.matrix, &map.translation, n_in)?;
            for k in &cols {
                let det = map.minor(idx.indices(), k);
                if det == 0.0 {
                    continue;
                }
                let mut c = ScalarField::new(
                    crate::expr::Expr::mul(crate::expr::Expr::Const(det), pulled.expr().clone()),
                    n_in,
                );
                if let crate::geometry::Support::Box(b) = pulled.support() {
                    c = c.with_support_box(b);
                }
                terms.push((Multiindex::new(k.clone()).unwrap(), c));
            }
        }
        DifferentialForm::from_terms(n_in, self.degree, terms)
    }

    /// Evaluate every coefficient at a point.
    pub fn eval(&self, point: &[f64]) -> Result<BTreeMap<Multiindex, f64>> {
        let mut out = BTreeMap::new();
        for (idx, coeff) in &self.terms {
            let v = coeff.eval(point)?;
            if v != 0.0 {
                out.insert(idx.clone(), v);
            }
        }
        Ok(out)
    }

    /// Hull of the coefficient supports.
    pub fn support(&self) -> Support {
        let mut s: Option<Support> = None;
        for (_, coeff) in &self.terms {
            let cs = coeff.support();
            s = Some(match s {
                None => cs,
                Some(prev) => prev.hull(&cs),
            });
        }
        // the zero form is supported nowhere; an empty box encodes that
        s.unwrap_or(Support::Box(crate::geometry::Aabb::new(
            vec![1.0; self.dim],
            vec![-1.0; self.dim],
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_scalar_expr;

    fn form1(dim: usize, idx: Vec<usize>, expr: &str) -> DifferentialForm {
        DifferentialForm::monomial(
            dim,
            Multiindex::new(idx).unwrap(),
            parse_scalar_expr(expr, dim).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn multiindex_signs() {
        let (idx, sign) = Multiindex::sort_with_sign(vec![1, 0]).unwrap();
        assert_eq!(idx.indices(), &[0, 1]);
        assert_eq!(sign, -1.0);
        assert!(Multiindex::sort_with_sign(vec![2, 2]).is_none());
        let k = Multiindex::new(vec![0]).unwrap();
        assert_eq!(k.complement_sign(2), 1.0);
        let k2 = Multiindex::new(vec![1]).unwrap();
        assert_eq!(k2.complement_sign(2), -1.0);
    }

    #[test]
    fn wedge_antisymmetry_and_nilpotence() {
        let dx = form1(2, vec![0], "1");
        let dy = form1(2, vec![1], "1");
        let w1 = dx.wedge(&dy).unwrap();
        let w2 = dy.wedge(&dx).unwrap();
        let p = [0.7, -0.3];
        let v1 = *w1.eval(&p).unwrap().values().next().unwrap();
        let v2 = *w2.eval(&p).unwrap().values().next().unwrap();
        assert_eq!(v1, 1.0);
        assert_eq!(v2, -1.0);

        let a = form1(2, vec![0], "x1");
        assert!(a.wedge(&dx).unwrap().is_zero());

        // (x1 dx2) ∧ (x2 dx1) = -x1 x2 dx1∧dx2
        let f = form1(2, vec![1], "x1");
        let g = form1(2, vec![0], "x2");
        let w = f.wedge(&g).unwrap();
        let v = *w.eval(&[2.0, 3.0]).unwrap().values().next().unwrap();
        assert_eq!(v, -6.0);
    }

    #[test]
    fn exterior_derivative_examples() {
        // d(x1^2 dx2) = 2 x1 dx1∧dx2
        let a = form1(2, vec![1], "x1*x1");
        let da = a.exterior_derivative();
        let v = *da.eval(&[3.0, 0.0]).unwrap().values().next().unwrap();
        assert_eq!(v, 6.0);

        // d(d(f)) = 0 for f = x1*x2
        let f = DifferentialForm::scalar(parse_scalar_expr("x1*x2", 2).unwrap());
        let ddf = f.exterior_derivative().exterior_derivative();
        assert!(ddf.eval(&[0.4, 0.9]).unwrap().is_empty());

        // d(x1 dx1) = 0
        let g = form1(2, vec![0], "x1");
        assert!(g.exterior_derivative().eval(&[1.0, 2.0]).unwrap().is_empty());
    }

    #[test]
    fn pullback_examples() {
        // A(t) = (t, 2t): dy -> 2 dt
        let a = AffineMap::new(vec![vec![1.0], vec![2.0]], vec![0.0; 2]).unwrap();
        let dy = form1(2, vec![1], "1");
        let p = dy.pullback(&a).unwrap();
        assert_eq!(*p.eval(&[0.3]).unwrap().values().next().unwrap(), 2.0);

        // identity leaves forms unchanged
        let idf = form1(2, vec![0, 1], "x1*x2");
        let same = idf.pullback(&AffineMap::identity(2)).unwrap();
        assert_eq!(
            *same.eval(&[2.0, 5.0]).unwrap().values().next().unwrap(),
            10.0
        );

        // x dy pulls back to 2t dt
        let xdy = form1(2, vec![1], "x1");
        let p2 = xdy.pullback(&a).unwrap();
        assert!((p2.eval(&[0.5]).unwrap().values().next().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_form_examples() {
        let f = form1(2, vec![1], "x1");
        let t = f.eval(&[3.0, 0.0]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[&Multiindex::new(vec![1]).unwrap()], 3.0);

        assert!(DifferentialForm::zero(2, 1).eval(&[1.0, 1.0]).unwrap().is_empty());

        let g = form1(2, vec![0, 1], "x1*x1");
        assert_eq!(
            g.eval(&[2.0, 5.0]).unwrap()[&Multiindex::new(vec![0, 1]).unwrap()],
            4.0
        );
    }

    #[test]
    fn combinations_enumeration() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(2, 3).len(), 0);
    }
}
