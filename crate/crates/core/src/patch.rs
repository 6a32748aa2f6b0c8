//! Initial tumor regions and their truncated signed distance functions.

use crate::grid::{Grid, Point, ScalarField};

/// Compact initial region.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchShape {
    Empty,
    Ball { center: Point, radius: f64 },
    /// Union of balls.
    Balls(Vec<(Point, f64)>),
    Annulus { center: Point, inner: f64, outer: f64 },
}

impl PatchShape {
    /// Signed distance to the boundary, positive inside, periodic metric.
    ///
    /// Exact for a single ball, an annulus, and unions of non-overlapping
    /// balls; for overlapping balls the value is the max of the individual
    /// distances, which has the right sign but underestimates the distance
    /// near the seams between balls.
    pub fn signed_distance(&self, grid: &Grid, x: Point) -> f64 {
        match self {
            PatchShape::Empty => f64::NEG_INFINITY,
            PatchShape::Ball { center, radius } => radius - grid.distance(*center, x),
            PatchShape::Balls(balls) => balls
                .iter()
                .map(|(c, r)| r - grid.distance(*c, x))
                .fold(f64::NEG_INFINITY, f64::max),
            PatchShape::Annulus {
                center,
                inner,
                outer,
            } => {
                let d = grid.distance(*center, x);
                (d - inner).min(outer - d)
            }
        }
    }

    /// `dist(x, boundary)` truncated to `[-1, 1]`, with sign.
    pub fn level_set(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(*grid, |x| self.signed_distance(grid, x).clamp(-1.0, 1.0))
    }

    /// Smallest distance from the region to the faces of the box.
    pub fn seam_margin(&self, grid: &Grid) -> f64 {
        let l = grid.extent();
        let ball = |c: &Point, r: f64| {
            (0..grid.dim())
                .map(|a| (c[a] - r).min(l - c[a] - r))
                .fold(f64::INFINITY, f64::min)
        };
        match self {
            PatchShape::Empty => f64::INFINITY,
            PatchShape::Ball { center, radius } => ball(center, *radius),
            PatchShape::Balls(balls) => balls
                .iter()
                .map(|(c, r)| ball(c, *r))
                .fold(f64::INFINITY, f64::min),
            PatchShape::Annulus { center, outer, .. } => ball(center, *outer),
        }
    }

    /// Diameter of the bounding region.
    pub fn diameter(&self) -> f64 {
        match self {
            PatchShape::Empty => 0.0,
            PatchShape::Ball { radius, .. } => 2.0 * radius,
            PatchShape::Annulus { outer, .. } => 2.0 * outer,
            PatchShape::Balls(balls) => {
                let mut d = 0.0_f64;
                for (ci, ri) in balls {
                    for (cj, rj) in balls {
                        let sep = (ci[0] - cj[0]).hypot(ci[1] - cj[1]);
                        d = d.max(sep + ri + rj);
                    }
                }
                d
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            PatchShape::Empty => true,
            PatchShape::Balls(b) => b.is_empty(),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_level_set_center_value() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let small = PatchShape::Ball {
            center: [4.0, 4.0],
            radius: 0.5,
        };
        assert!((small.signed_distance(&g, [4.0, 4.0]) - 0.5).abs() < 1e-15);
        let big = PatchShape::Ball {
            center: [4.0, 4.0],
            radius: 2.0,
        };
        let theta = big.level_set(&g);
        assert_eq!(theta.max(), 1.0);
        assert_eq!(theta.min(), -1.0);
    }

    #[test]
    fn seam_margin_and_diameter() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let b = PatchShape::Ball {
            center: [4.0, 0.0],
            radius: 1.0,
        };
        assert_eq!(b.seam_margin(&g), 3.0);
        assert_eq!(b.diameter(), 2.0);
        let two = PatchShape::Balls(vec![([2.0, 0.0], 0.5), ([6.0, 0.0], 0.5)]);
        assert_eq!(two.diameter(), 5.0);
        assert_eq!(two.seam_margin(&g), 1.5);
    }

    #[test]
    fn annulus_distance() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let a = PatchShape::Annulus {
            center: [4.0, 4.0],
            inner: 0.5,
            outer: 1.5,
        };
        assert!((a.signed_distance(&g, [5.0, 4.0]) - 0.5).abs() < 1e-15);
        assert!((a.signed_distance(&g, [4.0, 4.0]) + 0.5).abs() < 1e-15);
    }
}
