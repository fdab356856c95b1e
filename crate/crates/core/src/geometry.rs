//! Planar polygon primitives shared by ingest, cartogram and render.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// A closed ring: the first and last points coincide.
pub type Ring = Vec<Point>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring) -> Self {
        Polygon {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Unsigned area with holes subtracted.
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        ring_signed_area(&self.exterior).abs() - holes
    }

    pub fn contains(&self, p: Point) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn empty() -> Self {
        BoundingBox {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn extend(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(mut self, other: &BoundingBox) -> Self {
        self.extend(other.min);
        self.extend(other.max);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

pub fn is_closed(ring: &[Point]) -> bool {
    ring.len() >= 4 && ring.first() == ring.last()
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
        .sum::<f64>()
        / 2.0
}

/// Returns `(signed area, first moments)` of a ring, relative to `origin`.
///
/// Working relative to an origin near the data keeps the cross products small
/// for projected coordinates in the millions.
fn ring_moments(ring: &[Point], origin: Point) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for w in ring.windows(2) {
        let (x0, y0) = (w[0].x - origin.x, w[0].y - origin.y);
        let (x1, y1) = (w[1].x - origin.x, w[1].y - origin.y);
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        mx += (x0 + x1) * cross;
        my += (y0 + y1) * cross;
    }
    (a / 2.0, mx / 6.0, my / 6.0)
}

/// Area-weighted centroid of a set of polygons (holes subtract).
///
/// Falls back to the vertex mean when the total area is zero.
pub fn centroid(polygons: &[Polygon]) -> Option<Point> {
    let origin = polygons.first()?.exterior.first().copied()?;
    let mut area = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for poly in polygons {
        let (a, x, y) = ring_moments(&poly.exterior, origin);
        // orient every exterior positive and every hole negative
        let sign = a.signum();
        area += a * sign;
        mx += x * sign;
        my += y * sign;
        for hole in &poly.holes {
            let (a, x, y) = ring_moments(hole, origin);
            let sign = -a.signum();
            area += a * sign;
            mx += x * sign;
            my += y * sign;
        }
    }
    let extent = bbox(polygons);
    if area.abs() > f64::EPSILON * extent.width().max(extent.height()).powi(2) {
        return Some(Point::new(origin.x + mx / area, origin.y + my / area));
    }
    let mut n = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for poly in polygons {
        for p in &poly.exterior[..poly.exterior.len().saturating_sub(1)] {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
    }
    (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
}

pub fn bbox(polygons: &[Polygon]) -> BoundingBox {
    let mut b = BoundingBox::empty();
    for p in polygons.iter().flat_map(|poly| poly.exterior.iter()) {
        b.extend(*p);
    }
    b
}

/// Even-odd point-in-ring test. Points on the boundary may go either way.
pub fn ring_contains(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}
