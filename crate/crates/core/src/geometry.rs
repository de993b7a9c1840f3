//! Boxes, anchor-relative encoding, cropping and crop-consistent box sampling.
//!
//! A [`BBox`] is stored by its corners so that cropping (a pure min/max on
//! the corners) is exact and idempotent. Center/size accessors are derived.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pair of per-axis values, `[x, y]`.
pub type Vec2 = [f64; 2];

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    lo: Vec2,
    hi: Vec2,
}

impl BBox {
    /// Builds a box from its center and (positive) dimensions.
    pub fn new(center: Vec2, dims: Vec2) -> Result<Self> {
        for axis in 0..2 {
            if !(dims[axis] > 0.0 && dims[axis].is_finite() && center[axis].is_finite()) {
                return Err(Error::invalid(format!(
                    "box needs finite center and positive dims, got center={center:?} dims={dims:?}"
                )));
            }
        }
        Self::from_corners([
            center[0] - dims[0] / 2.0,
            center[1] - dims[1] / 2.0,
            center[0] + dims[0] / 2.0,
            center[1] + dims[1] / 2.0,
        ])
    }

    /// Builds a box from `[x0, y0, x1, y1]` with `x0 < x1`, `y0 < y1`.
    pub fn from_corners(c: [f64; 4]) -> Result<Self> {
        if !c.iter().all(|v| v.is_finite()) || !(c[0] < c[2] && c[1] < c[3]) {
            return Err(Error::invalid(format!("degenerate box corners {c:?}")));
        }
        Ok(BBox {
            lo: [c[0], c[1]],
            hi: [c[2], c[3]],
        })
    }

    /// Builds a box from the `(x, y, w, h)` convention used by annotation files.
    pub fn from_xywh(b: [f64; 4]) -> Result<Self> {
        Self::from_corners([b[0], b[1], b[0] + b[2], b[1] + b[3]])
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.lo[0], self.lo[1], self.hi[0], self.hi[1]]
    }

    pub fn center(&self) -> Vec2 {
        [
            (self.lo[0] + self.hi[0]) / 2.0,
            (self.lo[1] + self.hi[1]) / 2.0,
        ]
    }

    pub fn dims(&self) -> Vec2 {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    /// Lower edge along `axis` (left for x, top for y).
    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn area(&self) -> f64 {
        let d = self.dims();
        d[0] * d[1]
    }

    /// Object scale, `sqrt(area)`.
    pub fn scale(&self) -> f64 {
        self.area().sqrt()
    }

    /// Multiplies all coordinates by `factor` (image rescaling).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_corners(self.corners().map(|v| v * factor))
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        BBox {
            lo: [self.lo[0] + offset[0], self.lo[1] + offset[1]],
            hi: [self.hi[0] + offset[0], self.hi[1] + offset[1]],
        }
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        (0..2).all(|a| self.lo[a] <= p[a] && p[a] <= self.hi[a])
    }

    /// Parses `"a,b,c,d"` in the given format.
    pub fn parse(s: &str, format: BoxFormat) -> Result<Self> {
        let v = parse_floats::<4>(s)?;
        match format {
            BoxFormat::Center => Self::new([v[0], v[1]], [v[2], v[3]]),
            BoxFormat::Corners => Self::from_corners(v),
        }
    }

    /// Renders the box as `"a,b,c,d"` in the given format.
    pub fn format(&self, format: BoxFormat) -> String {
        let v = match format {
            BoxFormat::Center => {
                let (c, d) = (self.center(), self.dims());
                [c[0], c[1], d[0], d[1]]
            }
            BoxFormat::Corners => self.corners(),
        };
        format!("{},{},{},{}", v[0], v[1], v[2], v[3])
    }
}

/// Text layout of a box: `cx,cy,w,h` or `x0,y0,x1,y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoxFormat {
    #[default]
    Center,
    Corners,
}

impl FromStr for BoxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" | "cxcywh" => Ok(BoxFormat::Center),
            "corners" | "xyxy" => Ok(BoxFormat::Corners),
            other => Err(Error::invalid(format!("unknown box format {other:?}"))),
        }
    }
}

/// Parses exactly `N` comma-separated floats.
pub(crate) fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::invalid(format!(
            "expected {N} comma-separated numbers, got {s:?}"
        )));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::invalid(format!("not a number: {p:?}")))?;
    }
    Ok(out)
}

/// Anchor-relative box encoding `(delta, omega)`.
///
/// `delta` is the center offset in anchor units and `omega` the size ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub delta: Vec2,
    pub omega: Vec2,
}

impl Delta {
    pub fn new(delta: Vec2, omega: Vec2) -> Result<Self> {
        let d = Delta { delta, omega };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..2 {
            if !self.delta[axis].is_finite() {
                return Err(Error::invalid(format!("non-finite delta {:?}", self.delta)));
            }
            if !(self.omega[axis] > 0.0 && self.omega[axis].is_finite()) {
                return Err(Error::invalid(format!(
                    "omega must be positive, got {:?}",
                    self.omega
                )));
            }
        }
        Ok(())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let v = parse_floats::<4>(s)?;
        Self::new([v[0], v[1]], [v[2], v[3]])
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.delta[0], self.delta[1], self.omega[0], self.omega[1]
        )
    }
}

/// Encodes `g` relative to anchor `a`.
pub fn encode(g: &BBox, a: &BBox) -> Result<Delta> {
    let (cg, dg) = (g.center(), g.dims());
    let (ca, da) = (a.center(), a.dims());
    Delta::new(
        [(cg[0] - ca[0]) / da[0], (cg[1] - ca[1]) / da[1]],
        [dg[0] / da[0], dg[1] / da[1]],
    )
}

/// Decodes `p` relative to anchor `a`; inverse of [`encode`].
pub fn decode(a: &BBox, p: &Delta) -> Result<BBox> {
    p.validate()?;
    let (ca, da) = (a.center(), a.dims());
    BBox::new(
        [ca[0] + p.delta[0] * da[0], ca[1] + p.delta[1] * da[1]],
        [p.omega[0] * da[0], p.omega[1] * da[1]],
    )
}

/// Rectangular crop window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRect {
    pub origin: Vec2,
    pub extent: Vec2,
}

impl CropRect {
    pub fn new(origin: Vec2, extent: Vec2) -> Result<Self> {
        if !(extent[0] > 0.0 && extent[1] > 0.0) || !origin.iter().chain(&extent).all(|v| v.is_finite())
        {
            return Err(Error::invalid(format!(
                "crop extent must be positive, got {extent:?}"
            )));
        }
        Ok(CropRect { origin, extent })
    }

    /// A crop anchored at the origin.
    pub fn from_extent(extent: Vec2) -> Result<Self> {
        Self::new([0.0, 0.0], extent)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.origin[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.origin[axis] + self.extent[axis]
    }

    pub fn as_box(&self) -> BBox {
        BBox {
            lo: self.origin,
            hi: [self.hi(0), self.hi(1)],
        }
    }
}

/// Intersection of `g` with the crop, or `None` when it has zero area.
pub fn crop_box(g: &BBox, c: &CropRect) -> Option<BBox> {
    intersect(g, &c.as_box())
}

fn intersect(a: &BBox, b: &BBox) -> Option<BBox> {
    let lo = [a.lo[0].max(b.lo[0]), a.lo[1].max(b.lo[1])];
    let hi = [a.hi[0].min(b.hi[0]), a.hi[1].min(b.hi[1])];
    (lo[0] < hi[0] && lo[1] < hi[1]).then_some(BBox { lo, hi })
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    match intersect(a, b) {
        None => 0.0,
        Some(i) => {
            let inter = i.area();
            inter / (a.area() + b.area() - inter)
        }
    }
}

/// Which sides of a box are cut by the crop: `open[axis] = [lower, upper]`.
///
/// A side is open when the box reaches or crosses the crop border there.
pub fn open_sides(g: &BBox, c: &CropRect) -> [[bool; 2]; 2] {
    [0, 1].map(|a| [g.lo(a) <= c.lo(a), g.hi(a) >= c.hi(a)])
}

/// Like [`open_sides`], but for a crop taken from an image with known extent
/// (both in the same coordinates as `g`).
///
/// A side that only touches the crop border was not cut by it; it stays open
/// only if it also reaches the image border, where the annotation itself may
/// have been truncated.
pub fn open_sides_in_image(g: &BBox, c: &CropRect, image: &CropRect) -> [[bool; 2]; 2] {
    [0, 1].map(|a| {
        [
            g.lo(a) < c.lo(a) || (g.lo(a) <= c.lo(a) && g.lo(a) <= image.lo(a)),
            g.hi(a) > c.hi(a) || (g.hi(a) >= c.hi(a) && g.hi(a) >= image.hi(a)),
        ]
    })
}

/// True when `x` crops to the same box as `g`, up to `tol` per coordinate.
pub fn in_rho(x: &BBox, g: &BBox, c: &CropRect, tol: f64) -> bool {
    match (crop_box(x, c), crop_box(g, c)) {
        (Some(a), Some(b)) => a
            .corners()
            .iter()
            .zip(b.corners())
            .all(|(u, v)| (u - v).abs() <= tol),
        _ => false,
    }
}

/// Draws a random box whose crop equals the crop of `g`.
///
/// Every side of the cropped box that lies on the crop border is pushed
/// outwards by an exponentially distributed amount with mean half the crop
/// extent along that axis.
pub fn sample_rho_member<R: Rng + ?Sized>(g: &BBox, c: &CropRect, rng: &mut R) -> Result<BBox> {
    sample_rho_member_with_mean(g, c, [c.extent[0] / 2.0, c.extent[1] / 2.0], rng)
}

/// [`sample_rho_member`] with an explicit mean extension per axis.
pub fn sample_rho_member_with_mean<R: Rng + ?Sized>(
    g: &BBox,
    c: &CropRect,
    mean: Vec2,
    rng: &mut R,
) -> Result<BBox> {
    let cropped =
        crop_box(g, c).ok_or_else(|| Error::invalid("box does not intersect the crop"))?;
    let open = open_sides(g, c);
    let mut lo = cropped.lo;
    let mut hi = cropped.hi;
    for axis in 0..2 {
        if !(mean[axis] > 0.0) {
            return Err(Error::invalid(format!("extension mean must be positive, got {mean:?}")));
        }
        let exp = Exp::new(1.0 / mean[axis]).map_err(|e| Error::invalid(e.to_string()))?;
        if open[axis][0] {
            lo[axis] -= exp.sample(rng);
        }
        if open[axis][1] {
            hi[axis] += exp.sample(rng);
        }
    }
    Ok(BBox { lo, hi })
}
