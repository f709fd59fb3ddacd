//! Built-in fixture catalog: the standard configurations used by the
//! reproduction experiments and available for quick inspection from the
//! command line.

use serde::Serialize;

use derham_core::currents::{CellDomain, Current, PolyChain, PolyhedralCell};
use derham_core::expr::{Expr, ScalarField};
use derham_core::forms::{AffineMap, DifferentialForm, Multiindex};

/// Catalog entry; `tag` groups fixtures by the part of the theory they
/// exercise.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub tag: &'static str,
    pub description: &'static str,
}

pub fn catalog() -> Vec<FixtureInfo> {
    vec![
        FixtureInfo {
            name: "cell-chain",
            tag: "2.3",
            description: "weighted polyhedral chain in the plane; its plane \
                          density is a step function of the weights",
        },
        FixtureInfo {
            name: "smooth-density",
            tag: "2.4",
            description: "current given by a compactly supported smooth form; \
                          density equals the fiber integral of the coefficient",
        },
        FixtureInfo {
            name: "point-mass",
            tag: "2.5",
            description: "Dirac current in the plane; carries an atom, so it \
                          has no density with respect to Lebesgue measure",
        },
        FixtureInfo {
            name: "point-line",
            tag: "4.6",
            description: "point current against a coordinate line; the \
                          regularized intersection diverges like a power of 1/ε",
        },
        FixtureInfo {
            name: "transverse-axes",
            tag: "kronecker",
            description: "two transverse coordinate axes in the plane; the \
                          regularized intersection converges to the signed \
                          intersection index",
        },
    ]
}

/// Smooth radial cutoff with value exactly 1 at `center`, supported in the
/// closed ball of radius `r`.
pub fn unit_bump(m: usize, center: &[f64], r: f64) -> ScalarField {
    let args: Vec<Expr> = (0..m)
        .map(|i| Expr::sub(Expr::var(i), Expr::constant(center[i])))
        .collect();
    ScalarField::new(
        Expr::Bump {
            radius: r,
            args,
            factor: Box::new(Expr::constant(std::f64::consts::E)),
        },
        m,
    )
}

/// Segment along the first axis through the origin.
pub fn first_axis(m: usize, half_len: f64, weight: f64) -> Current {
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    a[0] = -half_len;
    b[0] = half_len;
    Current::PolyChain(PolyChain::segment(&a, &b, weight).unwrap())
}

/// Transverse axes in the plane with a 0-form test bump equal to 1 at the
/// origin: the signed-intersection-index configuration.
pub fn kronecker_pair() -> (Current, Current, DifferentialForm) {
    let t1 = first_axis(2, 2.0, 1.0);
    let t2 = Current::PolyChain(
        PolyChain::segment(&[0.0, -2.0], &[0.0, 2.0], 1.0).unwrap(),
    );
    let phi = DifferentialForm::scalar(unit_bump(2, &[0.0, 0.0], 1.0));
    (t1, t2, phi)
}

/// The divergent family: a point current of complementary covector against
/// a coordinate line (m = 2) or the coordinate plane patch (m = 3 keeps
/// the line, doubling the missing directions).
pub fn point_line_pair(m: usize) -> (Current, Current, DifferentialForm) {
    assert!(m == 2 || m == 3, "built-in family covers dimensions 2 and 3");
    let t1 = Current::Dirac {
        point: vec![0.0; m],
        idx: Multiindex::new(vec![0]).unwrap(),
        weight: 1.0,
    };
    let t2 = first_axis(m, 2.0, 1.0);
    let phi = DifferentialForm::scalar(unit_bump(m, &vec![0.0; m], 1.0));
    (t1, t2, phi)
}

/// Weighted polyhedral chain in the plane: the unit square plus a wider
/// half-weight square, giving a three-valued plane density.
pub fn cell_chain() -> Current {
    let unit = PolyhedralCell::axis_box(&[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap();
    let wide = PolyhedralCell::axis_box(&[1.0, 0.0], &[2.0, 1.0], 0.5).unwrap();
    Current::PolyChain(PolyChain::new(2, 2, vec![unit, wide]).unwrap())
}

/// Smooth-form current in the plane with a compactly supported coefficient.
pub fn smooth_density_current() -> Current {
    let h = unit_bump(2, &[0.0, 0.0], 2.0);
    Current::Smooth(
        DifferentialForm::monomial(2, Multiindex::new(vec![1]).unwrap(), h).unwrap(),
    )
}

/// Unit point mass at the origin of the plane.
pub fn point_mass() -> Current {
    Current::Dirac {
        point: vec![0.0, 0.0],
        idx: Multiindex::new(vec![0]).unwrap(),
        weight: 1.0,
    }
}

/// `[-2, 2]² × {0}`: a plane patch used by the three-dimensional members
/// of the divergent family.
pub fn plane_patch() -> Current {
    let map = AffineMap::new(
        vec![vec![4.0, 0.0], vec![0.0, 4.0], vec![0.0, 0.0]],
        vec![-2.0, -2.0, 0.0],
    )
    .unwrap();
    Current::PolyChain(
        PolyChain::new(
            3,
            2,
            vec![PolyhedralCell::new(CellDomain::Cube, map, 1.0).unwrap()],
        )
        .unwrap(),
    )
}
