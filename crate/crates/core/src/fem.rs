//! Reference-element machinery for P1/P2 Lagrange triangles.
//!
//! The reference triangle has vertices `(0,0)`, `(1,0)`, `(0,1)`. P2 nodes are
//! ordered as the three vertices followed by the midpoints of the edges
//! `(0,1)`, `(1,2)` and `(2,0)`.

use crate::error::{Error, Result};
use crate::mesh::Point;

const REF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    P1,
    P2,
}

impl Family {
    pub fn n_basis(self) -> usize {
        match self {
            Family::P1 => 3,
            Family::P2 => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients with respect to reference coordinates.
    pub gradients: Vec<[f64; 2]>,
}

const GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

#[inline]
fn barycentric(p: Point) -> [f64; 3] {
    [1.0 - p[0] - p[1], p[0], p[1]]
}

#[inline]
pub fn p1_values(p: Point) -> [f64; 3] {
    barycentric(p)
}

#[inline]
pub fn p1_gradients() -> [[f64; 2]; 3] {
    GRAD_LAMBDA
}

#[inline]
pub fn p2_values(p: Point) -> [f64; 6] {
    let l = barycentric(p);
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

#[inline]
pub fn p2_gradients(p: Point) -> [[f64; 2]; 6] {
    let l = barycentric(p);
    let g = GRAD_LAMBDA;
    let vertex = |i: usize| {
        let s = 4.0 * l[i] - 1.0;
        [s * g[i][0], s * g[i][1]]
    };
    let edge = |a: usize, b: usize| {
        [
            4.0 * (l[b] * g[a][0] + l[a] * g[b][0]),
            4.0 * (l[b] * g[a][1] + l[a] * g[b][1]),
        ]
    };
    [vertex(0), vertex(1), vertex(2), edge(0, 1), edge(1, 2), edge(2, 0)]
}

/// Evaluate the Lagrange basis of `family` at a point of the closed reference
/// triangle.
pub fn eval_basis(family: Family, point: Point) -> Result<BasisEval> {
    let [x, y] = point;
    if !(x >= -REF_EPS && y >= -REF_EPS && x + y <= 1.0 + REF_EPS) {
        return Err(Error::OutsideReference { x, y });
    }
    Ok(match family {
        Family::P1 => BasisEval {
            values: p1_values(point).to_vec(),
            gradients: p1_gradients().to_vec(),
        },
        Family::P2 => BasisEval {
            values: p2_values(point).to_vec(),
            gradients: p2_gradients(point).to_vec(),
        },
    })
}

/// P2 trace basis on an edge parametrised by `t in [0,1]`: start vertex, end
/// vertex, midpoint.
#[inline]
pub fn edge_p2_values(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Reference coordinates; the second component is unused for edge rules.
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

fn symmetric_orbit(a: f64) -> [Point; 3] {
    [[a, a], [1.0 - 2.0 * a, a], [a, 1.0 - 2.0 * a]]
}

/// The lowest-order tabulated triangle rule that is exact to `degree`.
pub fn triangle_quadrature(degree: usize) -> Result<QuadratureRule> {
    let third = 1.0 / 3.0;
    match degree {
        0 | 1 => Ok(QuadratureRule {
            degree: 1,
            points: vec![[third, third]],
            weights: vec![0.5],
        }),
        2 => Ok(QuadratureRule {
            degree: 2,
            points: symmetric_orbit(1.0 / 6.0).to_vec(),
            weights: vec![1.0 / 6.0; 3],
        }),
        3 | 4 => {
            // Strang-Fix / Dunavant 6-point rule.
            let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011 / 2.0);
            let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322 / 2.0);
            let mut points = symmetric_orbit(a).to_vec();
            points.extend(symmetric_orbit(b));
            Ok(QuadratureRule {
                degree: 4,
                points,
                weights: vec![wa, wa, wa, wb, wb, wb],
            })
        }
        5 => {
            // Radon's 7-point rule.
            let s = 15f64.sqrt();
            let (a, wa) = ((6.0 - s) / 21.0, (155.0 - s) / 2400.0);
            let (b, wb) = ((6.0 + s) / 21.0, (155.0 + s) / 2400.0);
            let mut points = vec![[third, third]];
            points.extend(symmetric_orbit(a));
            points.extend(symmetric_orbit(b));
            Ok(QuadratureRule {
                degree: 5,
                points,
                weights: vec![9.0 / 80.0, wa, wa, wa, wb, wb, wb],
            })
        }
        d => Err(Error::UnsupportedDegree(d)),
    }
}

const MAX_GAUSS_POINTS: usize = 16;

/// Gauss-Legendre rule on `[0,1]` exact to `degree`.
pub fn edge_quadrature(degree: usize) -> Result<QuadratureRule> {
    let m = degree / 2 + 1;
    if m > MAX_GAUSS_POINTS {
        return Err(Error::UnsupportedDegree(degree));
    }
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        // Newton iteration on P_m from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points.push([0.5 * (1.0 - x), 0.0]);
        weights.push(0.5 * w);
    }
    Ok(QuadratureRule {
        degree: 2 * m - 1,
        points,
        weights,
    })
}

/// Legendre polynomial `P_m(x)` and its derivative.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are the edge vectors `p1 - p0` and `p2 - p0`.
    pub jac: [[f64; 2]; 2],
    /// Inverse transpose of `jac`; maps reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
    /// `|det jac|`, twice the triangle area.
    pub det: f64,
}

impl AffineMap {
    pub fn new(tri: &[Point; 3]) -> Result<Self> {
        let [p0, p1, p2] = *tri;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateTriangle(0.5 * det));
        }
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Ok(AffineMap {
            origin: p0,
            jac,
            inv_t,
            det: det.abs(),
        })
    }

    #[inline]
    pub fn point(&self, r: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    #[inline]
    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Physical image of `ref_point`, the Jacobian and `|det|`.
pub fn map_to_physical(tri: &[Point; 3], ref_point: Point) -> Result<(Point, [[f64; 2]; 2], f64)> {
    let map = AffineMap::new(tri)?;
    Ok((map.point(ref_point), map.jac, map.det))
}
