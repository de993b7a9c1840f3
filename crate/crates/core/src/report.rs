//! Sampler runs and their CSV tables.
//!
//! | file           | columns                                                   |
//! |----------------|-----------------------------------------------------------|
//! | `decisions.csv`| `index,class_id,is_thing,image_id,instance_id,target_level,assigned_level,base_scale,sigma,sigma_clamped,total_scale,crop_x,crop_y,crop_w,crop_h` |
//! | `levels.csv`   | `level,count`                                             |
//! | `crop_iou.csv` | `scale_lo,scale_hi,count,mean_iou` (empty when no boxes)  |
//! | `scales.csv`   | `scale_lo,scale_hi,count`                                 |
//!
//! All files have a header row, use `,` as separator and `.` as decimal
//! point. Optional values are written as empty fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::annotations::{crop_iou_by_size, scale_histogram, AnnotationSet, IouBucket, ScaleHistogram};
use crate::error::{Error, Result};
use crate::isus::{draw_many, level_histogram, DatasetIndex, PyramidSpec, SampleDecision, SampleMode, SamplerConfig};

/// Everything `cabb sample` computes for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRun {
    pub decisions: Vec<SampleDecision>,
    pub levels: BTreeMap<i32, u64>,
    pub crop_iou: Vec<IouBucket>,
    pub scales: ScaleHistogram,
}

impl SampleRun {
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        set: &AnnotationSet,
        cfg: &SamplerConfig,
        spec: &PyramidSpec,
        mode: SampleMode,
        n_draws: usize,
        iou_edges: &[f64],
        scale_edges: &[f64],
    ) -> Result<Self> {
        if n_draws == 0 {
            return Err(Error::invalid("need at least one draw"));
        }
        let index = DatasetIndex::new(set)?;
        let decisions = draw_many(&index, cfg, spec, mode, n_draws)?;
        let levels = level_histogram(&decisions, spec);
        let crop_iou = crop_iou_by_size(set, cfg, spec, mode, n_draws, iou_edges)?;
        let scales = scale_histogram(set, scale_edges)?;
        Ok(SampleRun {
            decisions,
            levels,
            crop_iou,
            scales,
        })
    }

    pub fn thing_draws(&self) -> u64 {
        self.decisions.iter().filter(|d| d.is_thing).count() as u64
    }

    /// Writes the four tables into `dir`, which must exist.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        write_rows(&dir.join("decisions.csv"), self.decisions.iter().map(DecisionRow::from))?;
        write_rows(
            &dir.join("levels.csv"),
            self.levels.iter().map(|(&level, &count)| LevelRow { level, count }),
        )?;
        write_rows(&dir.join("crop_iou.csv"), self.crop_iou.iter().map(|b| IouRow {
            scale_lo: b.lo,
            scale_hi: b.hi,
            count: b.count,
            mean_iou: b.mean_iou,
        }))?;
        let s = &self.scales;
        write_rows(
            &dir.join("scales.csv"),
            s.counts.iter().enumerate().map(|(k, &count)| ScaleRow {
                scale_lo: s.bin_edges[k],
                scale_hi: s.bin_edges[k + 1],
                count,
            }),
        )
    }
}

#[derive(Serialize)]
struct DecisionRow {
    index: u64,
    class_id: u64,
    is_thing: bool,
    image_id: u64,
    instance_id: Option<u64>,
    target_level: Option<i32>,
    assigned_level: Option<i32>,
    base_scale: f64,
    sigma: f64,
    sigma_clamped: bool,
    total_scale: f64,
    crop_x: f64,
    crop_y: f64,
    crop_w: f64,
    crop_h: f64,
}

impl From<&SampleDecision> for DecisionRow {
    fn from(d: &SampleDecision) -> Self {
        DecisionRow {
            index: d.index,
            class_id: d.class_id,
            is_thing: d.is_thing,
            image_id: d.image_id,
            instance_id: d.instance_id,
            target_level: d.target_level,
            assigned_level: d.assigned_level,
            base_scale: d.base_scale,
            sigma: d.sigma,
            sigma_clamped: d.sigma_clamped,
            total_scale: d.total_scale,
            crop_x: d.crop_rect.origin[0],
            crop_y: d.crop_rect.origin[1],
            crop_w: d.crop_rect.extent[0],
            crop_h: d.crop_rect.extent[1],
        }
    }
}

#[derive(Serialize)]
struct LevelRow {
    level: i32,
    count: u64,
}

#[derive(Serialize)]
struct IouRow {
    scale_lo: f64,
    scale_hi: f64,
    count: u64,
    mean_iou: Option<f64>,
}

#[derive(Serialize)]
struct ScaleRow {
    scale_lo: f64,
    scale_hi: f64,
    count: u64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{synth_dataset, SynthSpec};
    use std::fs;

    #[test]
    fn writes_headers_and_rows() {
        let set = synth_dataset(&SynthSpec {
            n_images: 4,
            n_instances: 30,
            ..Default::default()
        })
        .unwrap();
        let run = SampleRun::run(
            &set,
            &SamplerConfig::default(),
            &PyramidSpec::default(),
            SampleMode::Isus,
            50,
            &[0.0, 64.0, 1e5],
            &[0.0, 32.0, 1e4],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        run.write_csv(dir.path()).unwrap();
        let decisions = fs::read_to_string(dir.path().join("decisions.csv")).unwrap();
        assert!(decisions.starts_with("index,class_id,is_thing,image_id,instance_id,"));
        assert_eq!(decisions.lines().count(), 51);
        let levels = fs::read_to_string(dir.path().join("levels.csv")).unwrap();
        assert_eq!(levels.lines().next(), Some("level,count"));
        assert_eq!(levels.lines().count(), 6);
        let scales = fs::read_to_string(dir.path().join("scales.csv")).unwrap();
        assert_eq!(scales.lines().count(), 3);
    }
}
