//! Simulation of class-uniform (CUS) and instance scale-uniform (ISUS) crop
//! sampling over annotation metadata.
//!
//! One draw picks a class uniformly, then an image showing it, resizes the
//! image so its shortest side is `s0`, applies a random scale factor and
//! places a crop where the class is visible. ISUS additionally picks an
//! instance of a thing class and a pyramid level, and chooses the scale
//! factor so that the instance lands on that level.
//!
//! Draw `i` only depends on `(seed, i)`, so draws can be computed in any
//! order or in parallel.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::geometry::{crop_box, BBox, CropRect};
use crate::oracle::fuzz::stream;

/// Feature-pyramid levels and the rule assigning a box to one of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub level_min: i32,
    pub level_max: i32,
    /// Level of a box of `canonical_scale` pixels.
    pub k0: i32,
    pub canonical_scale: f64,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        PyramidSpec {
            level_min: 2,
            level_max: 6,
            k0: 4,
            canonical_scale: 224.0,
        }
    }
}

impl PyramidSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level_min <= self.k0 && self.k0 <= self.level_max) {
            return Err(Error::invalid(format!(
                "need level_min <= k0 <= level_max, got {} <= {} <= {}",
                self.level_min, self.k0, self.level_max
            )));
        }
        if !(self.canonical_scale > 0.0) {
            return Err(Error::invalid("canonical scale must be positive"));
        }
        Ok(())
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.level_min..=self.level_max
    }

    /// Scales `[lo, hi)` that the unclamped rule maps to `level`.
    pub fn band(&self, level: i32) -> (f64, f64) {
        let lo = self.canonical_scale * 2f64.powi(level - self.k0);
        (lo, 2.0 * lo)
    }
}

/// Pyramid level of a box of scale `sqrt(w * h)`:
/// `clamp(k0 + floor(log2(scale / canonical)), level_min, level_max)`.
pub fn level_for(scale: f64, spec: &PyramidSpec) -> i32 {
    let raw = (scale / spec.canonical_scale).log2().floor();
    let level = if raw.is_nan() {
        spec.level_min as f64
    } else {
        (spec.k0 as f64 + raw).clamp(spec.level_min as f64, spec.level_max as f64)
    };
    level as i32
}

/// Closed interval of scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScaleRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("scale range [{lo}, {hi}] is not a positive interval")));
        }
        Ok(ScaleRange { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl FromStr for ScaleRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let [lo, hi] = crate::geometry::parse_floats::<2>(s)?;
        ScaleRange::new(lo, hi)
    }
}

impl fmt::Display for ScaleRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Shortest image side after the initial resize, in pixels.
    pub s0: f64,
    /// Clamp range of thing scale factors.
    pub r_th: ScaleRange,
    /// Range of uniformly drawn scale factors.
    pub r_st: ScaleRange,
    /// Crop width and height in pixels.
    pub crop: [f64; 2],
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            s0: 2400.0,
            r_th: ScaleRange { lo: 0.25, hi: 4.0 },
            r_st: ScaleRange { lo: 0.8, hi: 1.25 },
            crop: [1024.0, 1024.0],
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ScaleRange::new(self.r_th.lo, self.r_th.hi)?;
        ScaleRange::new(self.r_st.lo, self.r_st.hi)?;
        if !(self.s0 > 0.0 && self.crop[0] > 0.0 && self.crop[1] > 0.0) {
            return Err(Error::invalid("s0 and crop size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleMode {
    Cus,
    Isus,
}

impl FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cus" => Ok(SampleMode::Cus),
            "isus" => Ok(SampleMode::Isus),
            _ => Err(Error::invalid(format!("unknown sampling mode {s:?} (cus|isus)"))),
        }
    }
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Cus => "cus",
            SampleMode::Isus => "isus",
        })
    }
}

/// A drawn target scale and the scale factor that reaches it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaDraw {
    pub target_scale: f64,
    /// `target_scale / instance_scale` before clamping.
    pub raw_sigma: f64,
    pub sigma: f64,
}

impl SigmaDraw {
    pub fn clamped(&self) -> bool {
        self.sigma != self.raw_sigma
    }
}

/// Scale factor taking an instance of `instance_scale` pixels to
/// `target_scale`, clamped to `r_th`.
pub fn sigma_for_target(instance_scale: f64, target_scale: f64, r_th: &ScaleRange) -> SigmaDraw {
    let raw_sigma = target_scale / instance_scale;
    SigmaDraw {
        target_scale,
        raw_sigma,
        sigma: r_th.clamp(raw_sigma),
    }
}

/// Draws a target scale log-uniformly in the band of `target_level` and
/// returns the clamped factor reaching it.
pub fn sigma_for_instance<R: Rng + ?Sized>(
    instance_scale: f64,
    target_level: i32,
    spec: &PyramidSpec,
    r_th: &ScaleRange,
    rng: &mut R,
) -> SigmaDraw {
    let (lo, _) = spec.band(target_level);
    let target = lo * 2f64.powf(rng.random_range(0.0..1.0));
    sigma_for_target(instance_scale, target, r_th)
}

/// Lookup tables for sampling from an annotation set.
#[derive(Debug, Clone)]
pub struct DatasetIndex<'a> {
    set: &'a AnnotationSet,
    /// `(class id, is_thing, images showing it)` in class order.
    classes: Vec<(u64, bool, Vec<u64>)>,
    /// Annotation indices per `(class, image)`.
    members: HashMap<(u64, u64), Vec<usize>>,
    image_size: HashMap<u64, (f64, f64)>,
}

impl<'a> DatasetIndex<'a> {
    /// Fails with a data error naming the first class no image shows.
    pub fn new(set: &'a AnnotationSet) -> Result<Self> {
        if set.classes.is_empty() {
            return Err(Error::invalid("annotation set has no classes"));
        }
        let image_size = set.images.iter().map(|im| (im.id, (im.width, im.height))).collect();
        let mut members: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
        let mut images: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for (k, inst) in set.instances.iter().enumerate() {
            let list = members.entry((inst.class_id, inst.image_id)).or_default();
            if list.is_empty() {
                images.entry(inst.class_id).or_default().push(inst.image_id);
            }
            list.push(k);
        }
        let mut classes = Vec::with_capacity(set.classes.len());
        for c in &set.classes {
            let shown = images.remove(&c.id).unwrap_or_default();
            if shown.is_empty() {
                return Err(Error::data(
                    format!("category {} ({})", c.id, c.name),
                    "no image contains this class",
                ));
            }
            classes.push((c.id, c.is_thing, shown));
        }
        Ok(DatasetIndex {
            set,
            classes,
            members,
            image_size,
        })
    }

    pub fn set(&self) -> &AnnotationSet {
        self.set
    }
}

/// One simulated draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleDecision {
    pub index: u64,
    pub class_id: u64,
    pub is_thing: bool,
    pub image_id: u64,
    /// The instance the crop is placed on (thing classes only).
    pub instance_id: Option<u64>,
    /// Drawn pyramid level (ISUS thing draws only).
    pub target_level: Option<i32>,
    /// Level of the selected instance after scaling and cropping.
    pub assigned_level: Option<i32>,
    /// Factor of the shortest-side resize to `s0`.
    pub base_scale: f64,
    pub sigma: f64,
    pub sigma_clamped: bool,
    /// `base_scale * sigma`: original pixels to scaled-image pixels.
    pub total_scale: f64,
    /// Crop in scaled-image coordinates.
    pub crop_rect: CropRect,
}

fn uniform_point<R: Rng + ?Sized>(b: &BBox, rng: &mut R) -> [f64; 2] {
    [0, 1].map(|k| b.lo(k) + (b.hi(k) - b.lo(k)) * rng.random_range(0.0..1.0))
}

/// Crop of size `crop` centered on `p`, shifted (and if needed shrunk) to
/// stay inside `[0, size]`.
fn place_crop(p: [f64; 2], crop: [f64; 2], size: [f64; 2]) -> Result<CropRect> {
    let mut origin = [0.0; 2];
    let mut extent = [0.0; 2];
    for k in 0..2 {
        extent[k] = crop[k].min(size[k]);
        origin[k] = (p[k] - extent[k] / 2.0).clamp(0.0, size[k] - extent[k]);
    }
    CropRect::new(origin, extent)
}

/// Draw number `index`; depends only on `(cfg.seed, index)`.
pub fn draw_sample(
    index: &DatasetIndex<'_>,
    cfg: &SamplerConfig,
    spec: &PyramidSpec,
    mode: SampleMode,
    draw: u64,
) -> Result<SampleDecision> {
    let mut rng = stream(cfg.seed, draw);
    let (class_id, is_thing, images) = &index.classes[rng.random_range(0..index.classes.len())];
    let image_id = images[rng.random_range(0..images.len())];
    let (w, h) = index.image_size[&image_id];
    let base = cfg.s0 / w.min(h);
    let members = &index.members[&(*class_id, image_id)];
    let set = index.set;

    let (anchor_inst, instance_id) = if *is_thing {
        let k = members[rng.random_range(0..members.len())];
        (k, Some(set.instances[k].id))
    } else {
        // A point of the stuff region: pick a segment box by area.
        let areas: Vec<f64> = members
            .iter()
            .map(|&k| set.instances[k].bbox[2] * set.instances[k].bbox[3])
            .collect();
        let mut u = rng.random_range(0.0..areas.iter().sum::<f64>());
        let mut pick = members[members.len() - 1];
        for (&k, a) in members.iter().zip(&areas) {
            if u < *a {
                pick = k;
                break;
            }
            u -= a;
        }
        (pick, None)
    };
    let instance_box = set.instances[anchor_inst].bbox()?;

    let (sigma, clamped, target_level) = match (mode, is_thing) {
        (SampleMode::Isus, true) => {
            let level = rng.random_range(spec.level_min..=spec.level_max);
            let s = sigma_for_instance(base * instance_box.scale(), level, spec, &cfg.r_th, &mut rng);
            (s.sigma, s.clamped(), Some(level))
        }
        _ => (cfg.r_st.sample(&mut rng), false, None),
    };

    let total = base * sigma;
    let scaled = instance_box.scaled(total)?;
    let p = uniform_point(&scaled, &mut rng);
    let crop_rect = place_crop(p, cfg.crop, [w * total, h * total])?;
    let assigned_level = if *is_thing {
        crop_box(&scaled, &crop_rect).map(|b| level_for(b.scale(), spec))
    } else {
        None
    };
    Ok(SampleDecision {
        index: draw,
        class_id: *class_id,
        is_thing: *is_thing,
        image_id,
        instance_id,
        target_level,
        assigned_level,
        base_scale: base,
        sigma,
        sigma_clamped: clamped,
        total_scale: total,
        crop_rect,
    })
}

/// Draws `0..n` in parallel, returned in draw order.
pub fn draw_many(
    index: &DatasetIndex<'_>,
    cfg: &SamplerConfig,
    spec: &PyramidSpec,
    mode: SampleMode,
    n: usize,
) -> Result<Vec<SampleDecision>> {
    cfg.validate()?;
    spec.validate()?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| draw_sample(index, cfg, spec, mode, i))
        .collect()
}

/// Assigned levels of the selected thing instances; every level of the
/// pyramid is present, possibly with a zero count.
pub fn level_histogram(decisions: &[SampleDecision], spec: &PyramidSpec) -> BTreeMap<i32, u64> {
    let mut hist: BTreeMap<i32, u64> = spec.levels().map(|l| (l, 0)).collect();
    for d in decisions {
        if let Some(l) = d.assigned_level {
            *hist.entry(l).or_default() += 1;
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{synth_dataset, AnnotationSet, Class, Image, Instance, SynthSpec};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_examples() {
        let spec = PyramidSpec::default();
        assert_eq!(level_for(224.0, &spec), 4);
        assert_eq!(level_for(448.0, &spec), 5);
        assert_eq!(level_for(100.0, &spec), 2);
        assert_eq!(level_for(1e6, &spec), 6);
        assert_eq!(level_for(1e-3, &spec), 2);
    }

    #[test]
    fn sigma_examples() {
        let r_th = ScaleRange::new(0.25, 4.0).unwrap();
        let s = sigma_for_target(100.0, 448.0, &r_th);
        assert!((s.raw_sigma - 4.48).abs() < 1e-12);
        assert_eq!(s.sigma, 4.0);
        assert!(s.clamped());
        let s = sigma_for_target(224.0, 224.0, &r_th);
        assert_eq!(s.sigma, 1.0);
        assert!(!s.clamped());
    }

    #[test]
    fn unclamped_draws_hit_their_level() {
        let spec = PyramidSpec::default();
        let wide = ScaleRange::new(1e-6, 1e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100_000 {
            let s = 10f64.powf(rng.random_range(0.0..3.5));
            let level = rng.random_range(spec.level_min..=spec.level_max);
            let d = sigma_for_instance(s, level, &spec, &wide, &mut rng);
            assert!(!d.clamped());
            assert_eq!(level_for(d.sigma * s, &spec), level, "scale {s} sigma {}", d.sigma);
        }
    }

    proptest! {
        #[test]
        fn level_is_monotone(a in 1e-3f64..1e7, b in 1e-3f64..1e7) {
            let spec = PyramidSpec::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(level_for(lo, &spec) <= level_for(hi, &spec));
            prop_assert!(spec.levels().contains(&level_for(lo, &spec)));
        }
    }

    fn one_stuff_image() -> AnnotationSet {
        AnnotationSet {
            images: vec![Image {
                id: 1,
                width: 800.0,
                height: 600.0,
            }],
            instances: vec![Instance {
                id: 1,
                image_id: 1,
                class_id: 1,
                bbox: [0.0, 300.0, 800.0, 300.0],
                area: None,
            }],
            classes: vec![Class {
                id: 1,
                name: "road".into(),
                is_thing: false,
            }],
        }
    }

    #[test]
    fn stuff_only_dataset_uses_the_uniform_range() {
        let set = one_stuff_image();
        let index = DatasetIndex::new(&set).unwrap();
        let cfg = SamplerConfig::default();
        for mode in [SampleMode::Cus, SampleMode::Isus] {
            for d in draw_many(&index, &cfg, &PyramidSpec::default(), mode, 500).unwrap() {
                assert!(cfg.r_st.contains(d.sigma));
                assert_eq!(d.instance_id, None);
                assert_eq!(d.assigned_level, None);
            }
        }
    }

    #[test]
    fn class_without_image_is_a_data_error() {
        let mut set = one_stuff_image();
        set.classes.push(Class {
            id: 2,
            name: "sky".into(),
            is_thing: false,
        });
        let err = DatasetIndex::new(&set).unwrap_err();
        assert!(matches!(&err, Error::Data { record, .. } if record.contains("sky")), "{err}");
    }

    #[test]
    fn thing_crops_show_their_instance() {
        let set = synth_dataset(&SynthSpec {
            n_images: 20,
            n_instances: 300,
            ..Default::default()
        })
        .unwrap();
        let index = DatasetIndex::new(&set).unwrap();
        let cfg = SamplerConfig::default();
        let spec = PyramidSpec::default();
        let by_id: HashMap<u64, &Instance> = set.instances.iter().map(|i| (i.id, i)).collect();
        for mode in [SampleMode::Cus, SampleMode::Isus] {
            let draws = draw_many(&index, &cfg, &spec, mode, 10_000).unwrap();
            for d in &draws {
                let (w, h) = index.image_size[&d.image_id];
                let r = &d.crop_rect;
                assert!(r.lo(0) >= 0.0 && r.lo(1) >= 0.0);
                assert!(r.hi(0) <= w * d.total_scale * (1.0 + 1e-12));
                assert!(r.hi(1) <= h * d.total_scale * (1.0 + 1e-12));
                if let Some(id) = d.instance_id {
                    assert!(cfg.r_th.contains(d.sigma) || mode == SampleMode::Cus);
                    let b = by_id[&id].bbox().unwrap().scaled(d.total_scale).unwrap();
                    assert!(crop_box(&b, r).is_some(), "draw {} misses its instance", d.index);
                } else {
                    assert!(cfg.r_st.contains(d.sigma));
                }
            }
            let hist = level_histogram(&draws, &spec);
            let things = draws.iter().filter(|d| d.is_thing).count() as u64;
            assert_eq!(hist.values().sum::<u64>(), things);
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let set = synth_dataset(&SynthSpec {
            n_images: 10,
            n_instances: 100,
            ..Default::default()
        })
        .unwrap();
        let index = DatasetIndex::new(&set).unwrap();
        let cfg = SamplerConfig {
            seed: 77,
            ..Default::default()
        };
        let spec = PyramidSpec::default();
        let a = draw_many(&index, &cfg, &spec, SampleMode::Isus, 1000).unwrap();
        let b = draw_many(&index, &cfg, &spec, SampleMode::Isus, 1000).unwrap();
        assert_eq!(a, b);
        assert_eq!(draw_sample(&index, &cfg, &spec, SampleMode::Isus, 500).unwrap(), a[500]);
    }

    #[test]
    fn ranges_parse_and_validate() {
        let r: ScaleRange = "0.5,2".parse().unwrap();
        assert_eq!((r.lo, r.hi), (0.5, 2.0));
        assert!("2,0.5".parse::<ScaleRange>().is_err());
        assert!("0,1".parse::<ScaleRange>().is_err());
        assert_eq!(ScaleRange::new(1.0, 1.0).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(0)), 1.0);
    }
}
