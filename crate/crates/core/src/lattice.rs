use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point of the integer lattice Z².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn norm(self) -> f64 {
        ((self.x * self.x + self.y * self.y) as f64).sqrt()
    }

    pub fn norm_sq(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn sup_norm(self) -> i64 {
        self.x.abs().max(self.y.abs())
    }

    /// Dot product with a real frequency vector.
    pub fn dot(self, p: [f64; 2]) -> f64 {
        self.x as f64 * p[0] + self.y as f64 * p[1]
    }

    /// Lattice point whose Euclidean norm is closest to `target`, ties broken
    /// toward the smaller norm and then lexicographically. Only points with
    /// `x >= y >= 0` are considered, so the result lies in the first octant.
    pub fn nearest_with_norm(target: f64) -> Site {
        let r = target.ceil() as i64 + 1;
        let mut best = Site::ORIGIN;
        let mut best_gap = f64::INFINITY;
        for x in 0..=r {
            for y in 0..=x {
                let s = Site::new(x, y);
                let gap = (s.norm() - target).abs();
                if gap < best_gap - 1e-12 {
                    best = s;
                    best_gap = gap;
                }
            }
        }
        best
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, o: Site) -> Site {
        Site::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Site {
    fn add_assign(&mut self, o: Site) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, o: Site) -> Site {
        Site::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site::new(-self.x, -self.y)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<(i64, i64)> for Site {
    fn from((x, y): (i64, i64)) -> Self {
        Site::new(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Site::new(1, -2);
        let b = Site::new(3, 4);
        assert_eq!(a + b, Site::new(4, 2));
        assert_eq!(b - a, Site::new(2, 6));
        assert_eq!(-a, Site::new(-1, 2));
        assert_eq!(b.norm(), 5.0);
        assert_eq!(a.sup_norm(), 2);
    }

    #[test]
    fn nearest_norm_points() {
        assert_eq!(Site::nearest_with_norm(1.349), Site::new(1, 1));
        assert_eq!(Site::nearest_with_norm(1.82), Site::new(2, 0));
        assert_eq!(Site::nearest_with_norm(2.456), Site::new(2, 1));
        assert_eq!(Site::nearest_with_norm(3.23), Site::new(3, 1));
    }
}
