//! Axis-aligned rectangles in layout units.

use serde::{Deserialize, Serialize};

/// Rectangle given by lower-left corner and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn center_y(&self) -> f64 {
        self.y + self.h / 2.0
    }

    /// Intersection with another rectangle, `None` if the overlap area is zero
    /// (rectangles that only share an edge or corner do not intersect).
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        if x1 > x0 && y1 > y0 {
            Some(Rect::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    /// True iff `self` lies inside `outer`, boundary inclusive.
    pub fn contained_in(&self, outer: &Rect) -> bool {
        self.x >= outer.x && self.y >= outer.y && self.x1() <= outer.x1() && self.y1() <= outer.y1()
    }
}

/// Area of the union of a set of rectangles, by sweeping compressed x-strips
/// and merging y-intervals inside each strip. Exact up to f64 arithmetic.
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.w > 0.0 && r.h > 0.0).collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(rects.len() * 2);
    for r in &rects {
        xs.push(r.x);
        xs.push(r.x1());
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();

    let mut total = 0.0;
    for win in xs.windows(2) {
        let (x0, x1) = (win[0], win[1]);
        if x1 <= x0 {
            continue;
        }
        let xm = 0.5 * (x0 + x1);
        let mut spans: Vec<(f64, f64)> = rects
            .iter()
            .filter(|r| r.x <= xm && xm < r.x1())
            .map(|r| (r.y, r.y1()))
            .collect();
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(a, b) in &spans[1..] {
            if a > hi {
                covered += hi - lo;
                lo = a;
                hi = b;
            } else if b > hi {
                hi = b;
            }
        }
        covered += hi - lo;
        total += covered * (x1 - x0);
    }
    total
}
