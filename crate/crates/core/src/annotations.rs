//! Annotation sets: a small JSON subset of the usual detection layout,
//! synthetic datasets, and the scale / crop statistics.
//!
//! ```json
//! {
//!   "images":      [{"id": 1, "width": 2048, "height": 1024}],
//!   "annotations": [{"id": 7, "image_id": 1, "category_id": 3,
//!                    "bbox": [x, y, w, h], "area": 1234.0}],
//!   "categories":  [{"id": 3, "name": "car", "isthing": 1}]
//! }
//! ```
//!
//! `isthing` may be a boolean or 0/1, `area` is optional and unknown fields
//! are ignored. The scale of an annotation is always `sqrt(w * h)` of its box.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{crop_box, iou, BBox};
use crate::isus::{draw_sample, PyramidSpec, SampleMode, SamplerConfig};
use crate::oracle::fuzz::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub id: u64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub image_id: u64,
    #[serde(rename = "category_id")]
    pub class_id: u64,
    /// `[x, y, w, h]` in image pixels.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
}

impl Instance {
    pub fn bbox(&self) -> Result<BBox> {
        BBox::from_xywh(self.bbox)
    }

    pub fn scale(&self) -> f64 {
        (self.bbox[2] * self.bbox[3]).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Class {
    pub id: u64,
    pub name: String,
    #[serde(rename = "isthing", deserialize_with = "bool_or_int", serialize_with = "as_int")]
    pub is_thing: bool,
}

fn bool_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(i64),
    }
    match Flag::deserialize(d)? {
        Flag::Bool(b) => Ok(b),
        Flag::Int(0) => Ok(false),
        Flag::Int(1) => Ok(true),
        Flag::Int(other) => Err(serde::de::Error::custom(format!(
            "isthing must be 0 or 1, got {other}"
        ))),
    }
}

fn as_int<S: Serializer>(b: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(*b as u8)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<Image>,
    #[serde(rename = "annotations")]
    pub instances: Vec<Instance>,
    #[serde(rename = "categories")]
    pub classes: Vec<Class>,
}

impl AnnotationSet {
    /// Checks id uniqueness, references, box bounds and areas.
    pub fn validate(&self) -> Result<()> {
        let mut images = HashMap::new();
        for im in &self.images {
            let name = format!("image {}", im.id);
            if images.insert(im.id, im).is_some() {
                return Err(Error::data(name, "duplicate id"));
            }
            if !(im.width > 0.0 && im.height > 0.0) {
                return Err(Error::data(name, format!("size {}x{} is not positive", im.width, im.height)));
            }
        }
        let mut classes = HashSet::new();
        for c in &self.classes {
            if !classes.insert(c.id) {
                return Err(Error::data(format!("category {}", c.id), "duplicate id"));
            }
        }
        let mut seen = HashSet::new();
        for inst in &self.instances {
            let name = format!("annotation {}", inst.id);
            if !seen.insert(inst.id) {
                return Err(Error::data(name, "duplicate id"));
            }
            let im = images
                .get(&inst.image_id)
                .ok_or_else(|| Error::data(&name, format!("unknown image {}", inst.image_id)))?;
            if !classes.contains(&inst.class_id) {
                return Err(Error::data(&name, format!("unknown category {}", inst.class_id)));
            }
            let [x, y, w, h] = inst.bbox;
            if !(w > 0.0 && h > 0.0) || !inst.bbox.iter().all(|v| v.is_finite()) {
                return Err(Error::data(&name, format!("bbox {:?} has no area", inst.bbox)));
            }
            if x < 0.0 || y < 0.0 || x + w > im.width || y + h > im.height {
                return Err(Error::data(
                    &name,
                    format!("bbox {:?} exceeds image {} ({}x{})", inst.bbox, im.id, im.width, im.height),
                ));
            }
            if let Some(a) = inst.area {
                if !(a > 0.0) {
                    return Err(Error::data(&name, format!("area {a} is not positive")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let set: AnnotationSet = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.into(),
            source,
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation sets serialize")
    }

    pub fn class(&self, id: u64) -> Option<&Class> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn image(&self, id: u64) -> Option<&Image> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn thing_instances(&self) -> impl Iterator<Item = &Instance> {
        let things: HashSet<u64> = self.classes.iter().filter(|c| c.is_thing).map(|c| c.id).collect();
        self.instances.iter().filter(move |i| things.contains(&i.class_id))
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    AnnotationSet::from_json(&text, &path.display().to_string())
}

pub fn save_annotations(set: &AnnotationSet, path: &Path) -> Result<()> {
    fs::write(path, set.to_json()).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Parameters of [`synth_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_images: usize,
    /// Number of thing instances; stuff segments come on top.
    pub n_instances: usize,
    pub n_thing_classes: usize,
    pub n_stuff_classes: usize,
    pub image_width: f64,
    pub image_height: f64,
    /// Median instance scale in pixels.
    pub scale_median: f64,
    /// Standard deviation of the log scale.
    pub scale_log_std: f64,
    /// Standard deviation of the log aspect ratio; 0 gives square boxes.
    pub aspect_log_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_images: 200,
            n_instances: 5000,
            n_thing_classes: 8,
            n_stuff_classes: 4,
            image_width: 4000.0,
            image_height: 3000.0,
            scale_median: 40.0,
            scale_log_std: 1.0,
            aspect_log_std: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 || self.n_thing_classes + self.n_stuff_classes == 0 {
            return Err(Error::invalid("need at least one image and one class"));
        }
        if self.n_instances > 0 && self.n_thing_classes == 0 {
            return Err(Error::invalid("thing instances need a thing class"));
        }
        if !(self.image_width >= 1.0 && self.image_height >= 1.0) {
            return Err(Error::invalid("images must be at least one pixel wide"));
        }
        if !(self.scale_median > 0.0 && self.scale_log_std >= 0.0 && self.aspect_log_std >= 0.0) {
            return Err(Error::invalid("scale parameters must be positive"));
        }
        Ok(())
    }
}

/// Round to 1/64 px so the JSON form is short and stable.
fn px(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

/// Generates a dataset with log-normally distributed thing scales. Thing
/// classes are assigned round-robin first so each one occurs; every image
/// gets one band-shaped segment per stuff class.
pub fn synth_dataset(spec: &SynthSpec) -> Result<AnnotationSet> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 0);
    let (w_img, h_img) = (spec.image_width, spec.image_height);
    let images: Vec<Image> = (0..spec.n_images)
        .map(|i| Image {
            id: i as u64 + 1,
            width: w_img,
            height: h_img,
        })
        .collect();
    let mut classes = Vec::new();
    for c in 0..spec.n_thing_classes {
        classes.push(Class {
            id: c as u64 + 1,
            name: format!("thing{c}"),
            is_thing: true,
        });
    }
    for c in 0..spec.n_stuff_classes {
        classes.push(Class {
            id: (spec.n_thing_classes + c) as u64 + 1,
            name: format!("stuff{c}"),
            is_thing: false,
        });
    }

    let scale = LogNormal::new(spec.scale_median.ln(), spec.scale_log_std)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let aspect = Normal::new(0.0, spec.aspect_log_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut instances = Vec::with_capacity(spec.n_instances);
    for k in 0..spec.n_instances {
        let image_id = if k < spec.n_images { k } else { rng.random_range(0..spec.n_images) } as u64 + 1;
        let class_id = if k < spec.n_thing_classes {
            k
        } else {
            rng.random_range(0..spec.n_thing_classes)
        } as u64
            + 1;
        let s = scale.sample(&mut rng);
        let r = (0.5 * aspect.sample(&mut rng)).exp();
        let w = px((s * r).clamp(1.0, w_img));
        let h = px((s / r).clamp(1.0, h_img));
        let x = px(rng.random_range(0.0..=(w_img - w)));
        let y = px(rng.random_range(0.0..=(h_img - h)));
        instances.push(Instance {
            id: k as u64 + 1,
            image_id,
            class_id,
            bbox: [x, y, w, h],
            area: Some(w * h),
        });
    }
    let mut next_id = spec.n_instances as u64 + 1;
    for im in &images {
        for c in 0..spec.n_stuff_classes {
            let h = px(rng.random_range(0.1..0.5) * h_img).max(1.0);
            let y = px(rng.random_range(0.0..=(h_img - h)));
            instances.push(Instance {
                id: next_id,
                image_id: im.id,
                class_id: (spec.n_thing_classes + c) as u64 + 1,
                bbox: [0.0, y, w_img, h],
                area: Some(w_img * h),
            });
            next_id += 1;
        }
    }
    let set = AnnotationSet {
        images,
        instances,
        classes,
    };
    set.validate()?;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Thing instances whose scale falls outside `[first, last]` edge.
    pub outside: u64,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if !edges.windows(2).all(|w| w[0] < w[1]) || !edges.iter().all(|e| e.is_finite()) {
        return Err(Error::invalid(format!("bin edges must increase strictly: {edges:?}")));
    }
    Ok(())
}

/// Bin of `v` for half-open bins with the last bin closed on the right.
fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[last]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= v).saturating_sub(1).min(last - 1))
}

/// Histogram of thing-instance scales (`sqrt(w * h)`, pixels).
pub fn scale_histogram(set: &AnnotationSet, bin_edges: &[f64]) -> Result<ScaleHistogram> {
    check_edges(bin_edges)?;
    let mut counts = vec![0; bin_edges.len() - 1];
    let mut outside = 0;
    for inst in set.thing_instances() {
        match bin_of(bin_edges, inst.scale()) {
            Some(b) => counts[b] += 1,
            None => outside += 1,
        }
    }
    Ok(ScaleHistogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        outside,
    })
}

/// One row of [`crop_iou_by_size`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IouBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// `None` when no box fell in the bucket.
    pub mean_iou: Option<f64>,
}

/// Mean IoU between cropped and full (scaled) thing boxes, bucketed by the
/// scaled box scale. Every thing box of the drawn image that intersects the
/// crop contributes once per draw.
pub fn crop_iou_by_size(
    set: &AnnotationSet,
    cfg: &SamplerConfig,
    spec: &PyramidSpec,
    mode: SampleMode,
    n_draws: usize,
    bin_edges: &[f64],
) -> Result<Vec<IouBucket>> {
    check_edges(bin_edges)?;
    if n_draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let things: HashSet<u64> = set.classes.iter().filter(|c| c.is_thing).map(|c| c.id).collect();
    let mut by_image: BTreeMap<u64, Vec<BBox>> = BTreeMap::new();
    for inst in set.instances.iter().filter(|i| things.contains(&i.class_id)) {
        by_image.entry(inst.image_id).or_default().push(inst.bbox()?);
    }
    let index = crate::isus::DatasetIndex::new(set)?;
    let partial: Vec<(Vec<u64>, Vec<f64>)> = (0..n_draws)
        .into_par_iter()
        .map(|i| -> Result<(Vec<u64>, Vec<f64>)> {
            let d = draw_sample(&index, cfg, spec, mode, i as u64)?;
            let mut count = vec![0u64; bin_edges.len() - 1];
            let mut sum = vec![0f64; bin_edges.len() - 1];
            let crop = d.crop_rect;
            for b in by_image.get(&d.image_id).map(Vec::as_slice).unwrap_or(&[]) {
                let scaled = b.scaled(d.total_scale)?;
                if let Some(cut) = crop_box(&scaled, &crop) {
                    if let Some(k) = bin_of(bin_edges, scaled.scale()) {
                        count[k] += 1;
                        sum[k] += iou(&cut, &scaled);
                    }
                }
            }
            Ok((count, sum))
        })
        .collect::<Result<_>>()?;

    // Summation in draw order keeps the result independent of scheduling.
    let mut count = vec![0u64; bin_edges.len() - 1];
    let mut sum = vec![0f64; bin_edges.len() - 1];
    for (c, s) in partial {
        for k in 0..count.len() {
            count[k] += c[k];
            sum[k] += s[k];
        }
    }
    Ok((0..count.len())
        .map(|k| IouBucket {
            lo: bin_edges[k],
            hi: bin_edges[k + 1],
            count: count[k],
            mean_iou: (count[k] > 0).then(|| sum[k] / count[k] as f64),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> AnnotationSet {
        AnnotationSet::from_json(
            r#"{"images": [{"id": 1, "width": 640, "height": 480, "file_name": "a.jpg"}],
                "annotations": [{"id": 5, "image_id": 1, "category_id": 2, "bbox": [10, 20, 100, 100]}],
                "categories": [{"id": 2, "name": "car", "isthing": true}]}"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn loads_minimal_file() {
        let set = minimal();
        assert_eq!(set.instances[0].scale(), 100.0);
        assert!(set.classes[0].is_thing);
    }

    #[test]
    fn isthing_accepts_integers() {
        let set = AnnotationSet::from_json(
            r#"{"images": [], "annotations": [], "categories": [{"id": 1, "name": "sky", "isthing": 0}]}"#,
            "inline",
        )
        .unwrap();
        assert!(!set.classes[0].is_thing);
    }

    #[test]
    fn missing_image_names_the_annotation() {
        let mut set = minimal();
        set.instances[0].image_id = 9;
        let err = set.validate().unwrap_err();
        assert!(matches!(&err, Error::Data { record, .. } if record == "annotation 5"), "{err}");
    }

    #[test]
    fn box_outside_image_is_rejected() {
        let mut set = minimal();
        set.instances[0].bbox = [600.0, 20.0, 100.0, 100.0];
        assert!(matches!(set.validate(), Err(Error::Data { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let set = synth_dataset(&SynthSpec {
            n_images: 5,
            n_instances: 40,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.json");
        save_annotations(&set, &path).unwrap();
        assert_eq!(load_annotations(&path).unwrap(), set);
    }

    #[test]
    fn synth_counts_and_determinism() {
        let spec = SynthSpec {
            n_instances: 1000,
            ..Default::default()
        };
        let a = synth_dataset(&spec).unwrap();
        assert_eq!(a.thing_instances().count(), 1000);
        assert_eq!(a.to_json(), synth_dataset(&spec).unwrap().to_json());
        for c in &a.classes {
            assert!(a.instances.iter().any(|i| i.class_id == c.id), "class {} unused", c.id);
        }
    }

    #[test]
    fn histogram_examples() {
        let mut set = minimal();
        let h = scale_histogram(&set, &[0.0, 128.0, 256.0]).unwrap();
        assert_eq!(h.counts, vec![1, 0]);
        set.instances.clear();
        let h = scale_histogram(&set, &[0.0, 128.0, 256.0]).unwrap();
        assert_eq!(h.counts, vec![0, 0]);
        assert!(scale_histogram(&set, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn histogram_edges_are_inclusive_at_the_top() {
        let set = minimal();
        let h = scale_histogram(&set, &[50.0, 100.0]).unwrap();
        assert_eq!((h.counts[0], h.outside), (1, 0));
        let h = scale_histogram(&set, &[10.0, 50.0, 99.0]).unwrap();
        assert_eq!((h.counts.iter().sum::<u64>(), h.outside), (0, 1));
    }
}
