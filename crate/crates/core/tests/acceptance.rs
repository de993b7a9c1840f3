//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use cabb::annotations::{
    crop_iou_by_size, scale_histogram, synth_dataset, AnnotationSet, Class, Image, Instance, SynthSpec,
};
use cabb::bench::{bench_instances, run_bench};
use cabb::isus::{draw_many, level_for, level_histogram, DatasetIndex, PyramidSpec, SampleMode, SamplerConfig, ScaleRange};
use cabb::oracle::fuzz::{certify, feasible_prediction_check, gradcheck, spot_check, FuzzConfig, GradCheckConfig, ViolationKind};
use cabb::report::SampleRun;
use cabb::solver::SolverConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(id: &str, name: &str, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    println!(
        "{} {id} {name}: {} ({:.1}s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    out.pass
}

fn oracle_and_lower_bound() -> (Outcome, Outcome) {
    let cfg = FuzzConfig {
        n: 10_000,
        seed: 2024,
        ..Default::default()
    };
    let report = certify(&cfg).expect("valid fuzz configuration");
    let gaps = report.count(ViolationKind::OracleGap);
    let infeasible = report.count(ViolationKind::Infeasible);
    let errors = report.count(ViolationKind::Error);
    for v in report.violations.iter().take(5) {
        println!("  violation {:?} #{}: {} | {}", v.kind, v.index, v.detail, v.instance);
    }
    let c1 = Outcome {
        pass: gaps == 0 && infeasible == 0 && errors == 0,
        detail: format!(
            "{} instances, cases x {:?} y {:?}, worst gap {:.3e}, worst residual {:.3e}, {} gap / {} feasibility / {} error violations",
            report.n,
            report.per_kind_x,
            report.per_kind_y,
            report.worst_gap,
            report.worst_infeasibility,
            gaps,
            infeasible,
            errors
        ),
    };
    let lower = report.count(ViolationKind::LowerBound);
    let singleton = report.count(ViolationKind::SingletonMismatch);
    let c2 = Outcome {
        pass: lower == 0 && singleton == 0 && errors == 0 && report.singleton_instances > 0,
        detail: format!(
            "max excess over cropped loss {:.3e}, {} bound violations, {} of {} fixed-fixed instances inexact",
            report.worst_lower_bound_excess, lower, singleton, report.singleton_instances
        ),
    };
    (c1, c2)
}

fn feasible_zero() -> Outcome {
    let (loss, grad) = feasible_prediction_check(1000, 7, &[1.0 / 9.0, 1.0]).expect("valid instances");
    Outcome {
        pass: loss <= 1e-9 && grad <= 1e-6,
        detail: format!("max loss {loss:.3e}, max gradient norm {grad:.3e} over 1000 instances"),
    }
}

fn gradient() -> Outcome {
    let report = gradcheck(&GradCheckConfig {
        n: 1000,
        seed: 11,
        ..Default::default()
    })
    .expect("valid gradcheck configuration");
    for f in report.failures.iter().filter(|f| f.stable).take(5) {
        println!("  stable failure #{}: rel {:.3e} | {}", f.index, f.rel_error, f.instance);
    }
    Outcome {
        pass: report.pass_fraction_all() >= 0.95 && report.stable_ok(),
        detail: format!(
            "{:.1}% of {} within 1e-3 unfiltered (max {:.3e}); {}/{} stable probes pass (max {:.3e})",
            100.0 * report.pass_fraction_all(),
            report.n,
            report.max_rel_error_all,
            report.passed_stable,
            report.stable,
            report.max_rel_error_stable
        ),
    }
}

fn propositions() -> Outcome {
    let report = spot_check(1000, 5, 100).expect("valid spot check");
    for e in &report.examples {
        println!("  {e}");
    }
    Outcome {
        pass: report.passed(),
        detail: format!(
            "{} sign points / {} violations, {} monotone pairs / {} violations, nonempty J1..J5 {:?}",
            report.sign_points,
            report.sign_violations,
            report.monotone_pairs,
            report.monotone_violations,
            report.nonempty_intervals
        ),
    }
}

fn performance() -> Outcome {
    let records = bench_instances(4096, 3).expect("bench instances");
    let report = run_bench(&records, 200_000, 512, false, &SolverConfig::default()).expect("bench runs");
    Outcome {
        pass: report.solves_per_sec >= 20_000.0,
        detail: format!(
            "{:.0} solves/s single worker, {:.3} ms per 512-box batch (floor 20000, target 100000 {})",
            report.solves_per_sec,
            report.batch_ms,
            if report.solves_per_sec >= 100_000.0 { "met" } else { "missed" }
        ),
    }
}

/// Square boxes whose scale after the resize is log-normal around
/// sqrt(224 * 448), so that with `r_th = [1/8, 8]` almost no target of the
/// five levels needs a clamped factor, and 4096 px crops never cut them.
fn uniformity_setup() -> (AnnotationSet, SamplerConfig) {
    let set = synth_dataset(&SynthSpec {
        n_images: 400,
        n_instances: 6000,
        n_thing_classes: 6,
        n_stuff_classes: 2,
        image_width: 2048.0,
        image_height: 1024.0,
        scale_median: (224.0f64 * 448.0).sqrt(),
        scale_log_std: 0.1,
        aspect_log_std: 0.0,
        seed: 19,
    })
    .expect("synthetic dataset");
    let cfg = SamplerConfig {
        s0: 1024.0,
        r_th: ScaleRange::new(0.125, 8.0).unwrap(),
        r_st: ScaleRange::new(1.0, 1.0).unwrap(),
        crop: [4096.0, 4096.0],
        seed: 23,
    };
    (set, cfg)
}

fn level_uniformity() -> Outcome {
    let (set, cfg) = uniformity_setup();
    let spec = PyramidSpec::default();
    let index = DatasetIndex::new(&set).expect("every class is shown");
    let isus = draw_many(&index, &cfg, &spec, SampleMode::Isus, 100_000).expect("draws");
    let hist = level_histogram(&isus, &spec);
    let things = isus.iter().filter(|d| d.is_thing).count() as f64;
    let clamped = isus.iter().filter(|d| d.sigma_clamped).count() as f64 / things;
    let uniform = things / hist.len() as f64;
    let worst = hist
        .values()
        .map(|&c| (c as f64 - uniform).abs() / uniform)
        .fold(0.0, f64::max);

    // Under CUS with sigma = 1 each draw keeps the level of the raw
    // instance at the resized scale.
    let cus = draw_many(&index, &cfg, &spec, SampleMode::Cus, 100_000).expect("draws");
    let by_id: HashMap<u64, &Instance> = set.instances.iter().map(|i| (i.id, i)).collect();
    let mut raw: BTreeMap<i32, u64> = spec.levels().map(|l| (l, 0)).collect();
    for d in cus.iter().filter(|d| d.is_thing) {
        let inst = by_id[&d.instance_id.expect("thing draws select an instance")];
        *raw.get_mut(&level_for(d.base_scale * inst.scale(), &spec)).unwrap() += 1;
    }
    let cus_hist = level_histogram(&cus, &spec);
    let cus_uniform = cus_hist.values().sum::<u64>() as f64 / cus_hist.len() as f64;
    let cus_spread = cus_hist
        .values()
        .map(|&c| (c as f64 - cus_uniform).abs() / cus_uniform)
        .fold(0.0, f64::max);

    Outcome {
        pass: clamped < 0.01 && worst <= 0.10 && cus_hist == raw,
        detail: format!(
            "ISUS levels {:?} (max deviation {:.2}%, clamped {:.3}%); CUS levels {:?} equal raw {} (max deviation {:.0}%)",
            hist.values().collect::<Vec<_>>(),
            100.0 * worst,
            100.0 * clamped,
            cus_hist.values().collect::<Vec<_>>(),
            cus_hist == raw,
            100.0 * cus_spread
        ),
    }
}

fn sampler_contracts() -> Outcome {
    let set = synth_dataset(&SynthSpec {
        n_images: 100,
        n_instances: 3000,
        ..Default::default()
    })
    .expect("synthetic dataset");
    let spec = PyramidSpec::default();
    let cfg = SamplerConfig {
        seed: 31,
        ..Default::default()
    };
    let mut bad_thing = 0;
    let mut bad_stuff = 0;
    let mut identical = true;
    for mode in [SampleMode::Cus, SampleMode::Isus] {
        let iou_edges = [0.0, 32.0, 96.0, 256.0, 1e6];
        let scale_edges = [0.0, 16.0, 32.0, 64.0, 128.0, 256.0, 1e6];
        let run = |dir: &std::path::Path| {
            let r = SampleRun::run(&set, &cfg, &spec, mode, 20_000, &iou_edges, &scale_edges).expect("sample run");
            r.write_csv(dir).expect("csv written");
            r
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let run_a = run(a.path());
        run(b.path());
        for name in ["decisions.csv", "levels.csv", "crop_iou.csv", "scales.csv"] {
            identical &= fs::read(a.path().join(name)).unwrap() == fs::read(b.path().join(name)).unwrap();
        }
        for d in &run_a.decisions {
            if d.is_thing && mode == SampleMode::Isus {
                bad_thing += !cfg.r_th.contains(d.sigma) as usize;
            } else if !d.is_thing {
                bad_stuff += !cfg.r_st.contains(d.sigma) as usize;
            }
        }
    }
    Outcome {
        pass: bad_thing == 0 && bad_stuff == 0 && identical,
        detail: format!(
            "thing factors outside [0.25, 4]: {bad_thing}, stuff factors outside [0.8, 1.25]: {bad_stuff}, CSVs identical: {identical}"
        ),
    }
}

fn statistics() -> Outcome {
    let set = synth_dataset(&SynthSpec {
        n_images: 20,
        n_instances: 500,
        ..Default::default()
    })
    .expect("synthetic dataset");
    let cfg = SamplerConfig {
        crop: [1e6, 1e6],
        ..Default::default()
    };
    let buckets = crop_iou_by_size(&set, &cfg, &PyramidSpec::default(), SampleMode::Isus, 2000, &[0.0, 50.0, 200.0, 1e6])
        .expect("statistics");
    let full_crop_ok = buckets.iter().all(|b| b.mean_iou.is_none_or(|m| m == 1.0))
        && buckets.iter().any(|b| b.count > 0);

    let image = Image {
        id: 1,
        width: 1000.0,
        height: 1000.0,
    };
    let boxes = [[0.0, 0.0, 10.0, 10.0], [5.0, 5.0, 100.0, 100.0], [0.0, 0.0, 127.0, 129.0], [0.0, 0.0, 300.0, 300.0]];
    let constructed = AnnotationSet {
        images: vec![image],
        instances: boxes
            .iter()
            .enumerate()
            .map(|(k, &bbox)| Instance {
                id: k as u64 + 1,
                image_id: 1,
                class_id: 1,
                bbox,
                area: None,
            })
            .collect(),
        classes: vec![Class {
            id: 1,
            name: "thing".into(),
            is_thing: true,
        }],
    };
    // Scales 10, 100, sqrt(127 * 129) ~ 127.996 and 300.
    let h = scale_histogram(&constructed, &[0.0, 64.0, 128.0, 256.0]).expect("histogram");
    let hist_ok = h.counts == vec![1, 2, 0] && h.outside == 1;
    Outcome {
        pass: full_crop_ok && hist_ok,
        detail: format!(
            "full-image crop IoU per bucket {:?}; constructed histogram {:?} + {} outside",
            buckets.iter().map(|b| b.mean_iou).collect::<Vec<_>>(),
            h.counts,
            h.outside
        ),
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    let mut lower_bound = None;
    ok &= criterion("C1", "oracle equivalence", || {
        let (c1, c2) = oracle_and_lower_bound();
        lower_bound = Some(c2);
        c1
    });
    ok &= criterion("C2", "lower bound", || lower_bound.expect("C1 ran first"));
    ok &= criterion("C3", "feasible prediction costs nothing", feasible_zero);
    ok &= criterion("C4", "envelope gradient", gradient);
    ok &= criterion("C5", "monotonicity spot checks", propositions);
    ok &= criterion("C6", "throughput", performance);
    ok &= criterion("C7", "ISUS level uniformity", level_uniformity);
    ok &= criterion("C8", "sampler contracts", sampler_contracts);
    ok &= criterion("C9", "statistics emitters", statistics);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
