//! One-line text form of a solvable instance, used for replaying fuzz
//! failures and by the `solve` command:
//!
//! ```text
//! gt=cx,cy,w,h anchor=cx,cy,w,h crop=W,H pred=dx,dy,wx,wy beta=B
//! ```
//!
//! Boxes are in center form and in crop coordinates (the crop spans
//! `[0, W] x [0, H]`). Numbers are printed in shortest round-trip form so a
//! parsed line reproduces the instance bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{crop_box, encode, parse_floats, BBox, CropRect, Delta};
use crate::loss::{l_bb, HuberParam};
use crate::solver::{cabb_loss, CabbSolution, SolverConfig};

/// Boxes are kept in the center form they were written in, so printing a
/// record and parsing it back yields the same boxes bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceRecord {
    gt: [f64; 4],
    anchor: [f64; 4],
    gt_box: BBox,
    anchor_box: BBox,
    pub crop: CropRect,
    pub pred: Delta,
    pub beta: HuberParam,
}

impl InstanceRecord {
    /// `gt` and `anchor` are `[cx, cy, w, h]` in crop coordinates.
    pub fn new(
        gt: [f64; 4],
        anchor: [f64; 4],
        crop: [f64; 2],
        pred: Delta,
        beta: HuberParam,
    ) -> Result<Self> {
        pred.validate()?;
        Ok(InstanceRecord {
            gt,
            anchor,
            gt_box: BBox::new([gt[0], gt[1]], [gt[2], gt[3]])?,
            anchor_box: BBox::new([anchor[0], anchor[1]], [anchor[2], anchor[3]])?,
            crop: CropRect::from_extent(crop)?,
            pred,
            beta,
        })
    }

    pub fn gt(&self) -> &BBox {
        &self.gt_box
    }

    pub fn anchor(&self) -> &BBox {
        &self.anchor_box
    }

    pub fn with_pred(&self, pred: Delta) -> Self {
        InstanceRecord { pred, ..*self }
    }

    /// Solves with `cfg`, except that the record's `beta` is used.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<CabbSolution> {
        let cfg = SolverConfig {
            beta: self.beta,
            ..*cfg
        };
        cabb_loss(&self.pred, &self.gt_box, &self.anchor_box, &self.crop, &cfg)
    }

    /// Plain regression loss against the cropped ground truth.
    pub fn cropped_l_bb(&self) -> Result<f64> {
        let cropped = crop_box(&self.gt_box, &self.crop)
            .ok_or_else(|| Error::invalid("ground truth does not overlap the crop"))?;
        l_bb(&self.pred, &encode(&cropped, &self.anchor_box)?, self.beta)
    }
}

impl FromStr for InstanceRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut gt, mut anchor, mut crop, mut pred, mut beta) = (None, None, None, None, None);
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got {token:?}")))?;
            match key {
                "gt" => gt = Some(parse_floats::<4>(value)?),
                "anchor" => anchor = Some(parse_floats::<4>(value)?),
                "crop" => crop = Some(parse_floats::<2>(value)?),
                "pred" => pred = Some(Delta::parse(value)?),
                "beta" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad beta {value:?}")))?;
                    beta = Some(HuberParam::new(v)?);
                }
                other => return Err(Error::invalid(format!("unknown field {other:?}"))),
            }
        }
        let missing = |name: &str| Error::invalid(format!("instance is missing {name}="));
        InstanceRecord::new(
            gt.ok_or_else(|| missing("gt"))?,
            anchor.ok_or_else(|| missing("anchor"))?,
            crop.ok_or_else(|| missing("crop"))?,
            pred.ok_or_else(|| missing("pred"))?,
            beta.unwrap_or_default(),
        )
    }
}

impl fmt::Display for InstanceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gt={},{},{},{} anchor={},{},{},{} crop={},{} pred={} beta={}",
            self.gt[0],
            self.gt[1],
            self.gt[2],
            self.gt[3],
            self.anchor[0],
            self.anchor[1],
            self.anchor[2],
            self.anchor[3],
            self.crop.extent[0],
            self.crop.extent[1],
            self.pred,
            self.beta.get()
        )
    }
}
