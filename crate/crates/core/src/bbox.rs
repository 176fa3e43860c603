/// Axis-aligned box in center form. Units are whatever the caller uses:
/// pixels of a frame, or fractions of a search region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// From top-left corner and size.
    pub fn from_corner(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    /// `[x, y, w, h]` with `(x, y)` the top-left corner.
    pub fn to_corner(&self) -> [f64; 4] {
        [self.x0(), self.y0(), self.w, self.h]
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn intersection(&self, other: &Self) -> f64 {
        let iw = (self.x1().min(other.x1()) - self.x0().max(other.x0())).max(0.0);
        let ih = (self.y1().min(other.y1()) - self.y0().max(other.y0())).max(0.0);
        iw * ih
    }

    /// Areas are taken from the corner extents, the same arithmetic as the
    /// intersection, so `a.iou(&a)` is exactly 1.
    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection(other);
        let extent = |b: &Self| (b.x1() - b.x0()) * (b.y1() - b.y0());
        let union = extent(self) + extent(other) - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Smallest box containing both.
    pub fn enclosure(&self, other: &Self) -> Self {
        let x0 = self.x0().min(other.x0());
        let y0 = self.y0().min(other.y0());
        let x1 = self.x1().max(other.x1());
        let y1 = self.y1().max(other.y1());
        Self::from_corner(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn center_distance(&self, other: &Self) -> f64 {
        ((self.cx - other.cx).powi(2) + (self.cy - other.cy).powi(2)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_round_trip() {
        let b = BBox::from_corner(10.0, 20.0, 4.0, 6.0);
        assert_eq!((b.cx, b.cy), (12.0, 23.0));
        assert_eq!(b.to_corner(), [10.0, 20.0, 4.0, 6.0]);
    }

    #[test]
    fn iou_cases() {
        let a = BBox::from_corner(0.0, 0.0, 2.0, 1.0);
        let b = BBox::from_corner(1.0, 0.0, 2.0, 1.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        let far = BBox::from_corner(5.0, 5.0, 1.0, 1.0);
        assert_eq!(a.iou(&far), 0.0);
        assert_eq!(a.enclosure(&b).to_corner(), [0.0, 0.0, 3.0, 1.0]);
    }
}
