use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cabb::annotations::{load_annotations, save_annotations, synth_dataset, AnnotationSet, SynthSpec};
use cabb::bench::{bench_instances, run_bench};
use cabb::geometry::{encode, BBox, BoxFormat, Delta};
use cabb::instance::InstanceRecord;
use cabb::isus::{PyramidSpec, SampleMode, SamplerConfig, ScaleRange};
use cabb::loss::{l_bb, HuberParam};
use cabb::oracle::fuzz::{certify, gradcheck, FuzzConfig, GradCheckConfig};
use cabb::oracle::OracleConfig;
use cabb::report::SampleRun;
use cabb::solver::SolverConfig;
use cabb::Error;

const SAMPLE_HELP: &str = "\
Output files (header row, ',' separator, '.' decimal, empty field = none):
  decisions.csv  index,class_id,is_thing,image_id,instance_id,target_level,
                 assigned_level,base_scale,sigma,sigma_clamped,total_scale,
                 crop_x,crop_y,crop_w,crop_h
  levels.csv     level,count            (thing draws per pyramid level)
  crop_iou.csv   scale_lo,scale_hi,count,mean_iou
  scales.csv     scale_lo,scale_hi,count (thing instances of the dataset)";

#[derive(Parser)]
#[command(name = "cabb", version, about = "Crop-aware bounding box loss tools")]
struct Cli {
    /// Worker threads for fuzz, gradcheck and sample (0 = all cores).
    #[arg(long, global = true, env = "CABB_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the target, loss and gradient.
    Solve(SolveArgs),
    /// Certify the solver against the brute-force oracle.
    Fuzz(FuzzArgs),
    /// Compare the analytic gradient with central differences.
    Gradcheck(GradArgs),
    /// Measure solver throughput.
    Bench(BenchArgs),
    /// Simulate crop sampling and write CSV statistics.
    #[command(after_help = SAMPLE_HELP)]
    Sample(SampleArgs),
    /// Write a synthetic annotation file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Whole instance, as printed by `fuzz`:
    /// "gt=cx,cy,w,h anchor=cx,cy,w,h crop=W,H pred=dx,dy,wx,wy beta=B".
    #[arg(long, conflicts_with_all = ["gt", "anchor", "crop", "pred"])]
    instance: Option<String>,
    /// Ground-truth box in crop coordinates.
    #[arg(long, allow_hyphen_values = true)]
    gt: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<String>,
    /// Crop size "W,H"; the crop spans [0,W] x [0,H].
    #[arg(long)]
    crop: Option<String>,
    /// Prediction "dx,dy,wx,wy" in anchor units.
    #[arg(long, allow_hyphen_values = true)]
    pred: Option<String>,
    #[arg(long, default_value_t = 1.0 / 9.0)]
    beta: f64,
    /// Layout of --gt and --anchor: center (cx,cy,w,h) or corners (x0,y0,x1,y1).
    #[arg(long, default_value = "center")]
    box_format: BoxFormat,
    /// Also print the solution as one JSON line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated Huber parameters to cycle through.
    #[arg(long, default_value = "0.1111111111111111,1", value_delimiter = ',')]
    betas: Vec<f64>,
    /// Allowed excess of the solver objective over the oracle.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    grid_points: usize,
    #[arg(long, default_value_t = 3)]
    refine_passes: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    #[arg(long, default_value = "0.1111111111111111,1", value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of timed solves.
    #[arg(long, default_value_t = 200_000)]
    n: usize,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    /// Workers per batch; 1 solves on the calling thread.
    #[arg(long = "workers", default_value_t = 1)]
    workers: usize,
    /// Exit with status 1 when fewer solves per second are reached.
    #[arg(long)]
    min_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthFlags {
    #[arg(long, default_value_t = 200)]
    images: usize,
    /// Thing instances in total.
    #[arg(long, default_value_t = 5000)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    thing_classes: usize,
    #[arg(long, default_value_t = 4)]
    stuff_classes: usize,
    #[arg(long, default_value_t = 4000.0)]
    width: f64,
    #[arg(long, default_value_t = 3000.0)]
    height: f64,
    #[arg(long, default_value_t = 40.0)]
    scale_median: f64,
    #[arg(long, default_value_t = 1.0)]
    scale_log_std: f64,
    #[arg(long, default_value_t = 0.3)]
    aspect_log_std: f64,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl SynthFlags {
    fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_images: self.images,
            n_instances: self.instances,
            n_thing_classes: self.thing_classes,
            n_stuff_classes: self.stuff_classes,
            image_width: self.width,
            image_height: self.height,
            scale_median: self.scale_median,
            scale_log_std: self.scale_log_std,
            aspect_log_std: self.aspect_log_std,
            seed: self.synth_seed,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// COCO-style annotation JSON; a synthetic dataset is used when absent.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long, default_value = "isus")]
    mode: SampleMode,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length of the shorter image side after the base resize.
    #[arg(long, default_value_t = 2400.0)]
    s0: f64,
    /// Allowed thing rescale factors "lo,hi".
    #[arg(long, default_value = "0.25,4")]
    r_th: ScaleRange,
    /// Stuff rescale factors "lo,hi", drawn log-uniformly.
    #[arg(long, default_value = "0.8,1.25")]
    r_st: ScaleRange,
    /// Crop size "W,H".
    #[arg(long, default_value = "1024,1024")]
    crop: String,
    #[arg(long, default_value = "0,32,96,256,100000", value_delimiter = ',')]
    iou_edges: Vec<f64>,
    #[arg(
        long,
        default_value = "0,8,16,32,64,128,256,512,1024,100000",
        value_delimiter = ','
    )]
    scale_edges: Vec<f64>,
    /// Output directory, created if missing.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Fuzz(a) => fuzz(a),
        Command::Gradcheck(a) => grad(a),
        Command::Bench(a) => bench(a),
        Command::Sample(a) => sample(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but a checked property failed.
type Outcome = cabb::Result<bool>;

fn parse_box(s: &str, format: BoxFormat) -> cabb::Result<[f64; 4]> {
    let b = BBox::parse(s, format)?;
    let (c, d) = (b.center(), b.dims());
    Ok([c[0], c[1], d[0], d[1]])
}

fn parse_pair(s: &str) -> cabb::Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("expected W,H, got {s:?}")))?;
    match v[..] {
        [w, h] => Ok([w, h]),
        _ => Err(Error::InvalidArgument(format!("expected W,H, got {s:?}"))),
    }
}

fn instance_from(a: &SolveArgs) -> cabb::Result<InstanceRecord> {
    if let Some(line) = &a.instance {
        return line.parse();
    }
    let need = |v: &Option<String>, name: &str| {
        v.clone()
            .ok_or_else(|| Error::InvalidArgument(format!("--{name} is required without --instance")))
    };
    InstanceRecord::new(
        parse_box(&need(&a.gt, "gt")?, a.box_format)?,
        parse_box(&need(&a.anchor, "anchor")?, a.box_format)?,
        parse_pair(&need(&a.crop, "crop")?)?,
        Delta::parse(&need(&a.pred, "pred")?)?,
        HuberParam::new(a.beta)?,
    )
}

fn solve(a: SolveArgs) -> Outcome {
    let rec = instance_from(&a)?;
    let sol = rec.solve(&SolverConfig::default())?;
    let full = l_bb(&rec.pred, &encode(rec.gt(), rec.anchor())?, rec.beta)?;
    println!("instance={rec}");
    println!("delta_star={}", sol.delta_star);
    println!("loss={}", sol.loss);
    println!("l_bb={full}");
    println!("l_bb_cropped={}", rec.cropped_l_bb()?);
    println!("case_x={}", sol.per_dim_case[0].name());
    println!("case_y={}", sol.per_dim_case[1].name());
    println!("grad_delta={},{}", sol.grad_delta[0], sol.grad_delta[1]);
    println!("grad_omega={},{}", sol.grad_omega[0], sol.grad_omega[1]);
    if a.json {
        println!("{}", serde_json::to_string(&sol).expect("solutions serialize"));
    }
    Ok(true)
}

fn require_n(n: usize) -> cabb::Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    Ok(())
}

fn fuzz(a: FuzzArgs) -> Outcome {
    require_n(a.n)?;
    let cfg = FuzzConfig {
        n: a.n,
        seed: a.seed,
        betas: a.betas,
        tolerance: a.tolerance,
        oracle: OracleConfig {
            grid_points: a.grid_points,
            refine_passes: a.refine_passes,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = certify(&cfg)?;
    if a.json {
        println!("{}", serde_json::to_string(&report).expect("reports serialize"));
    } else {
        println!("instances={} seed={}", report.n, report.seed);
        println!("cases_x={:?} cases_y={:?} (fixed, left-open, right-open, both-open)", report.per_kind_x, report.per_kind_y);
        println!("worst_gap={:e}", report.worst_gap);
        if let Some(inst) = &report.worst_gap_instance {
            println!("worst_gap_instance={inst}");
        }
        println!("worst_infeasibility={:e}", report.worst_infeasibility);
        println!("worst_lower_bound_excess={:e}", report.worst_lower_bound_excess);
        println!("violations={}", report.violations.len());
        for v in &report.violations {
            println!("violation #{} {:?}: {}", v.index, v.kind, v.detail);
            println!("  {}", v.instance);
        }
    }
    Ok(report.passed())
}

fn grad(a: GradArgs) -> Outcome {
    require_n(a.n)?;
    let cfg = GradCheckConfig {
        n: a.n,
        seed: a.seed,
        h: a.h,
        tolerance: a.tolerance,
        betas: a.betas,
        ..Default::default()
    };
    let report = gradcheck(&cfg)?;
    if a.json {
        println!("{}", serde_json::to_string(&report).expect("reports serialize"));
    } else {
        println!("instances={} h={:e} tolerance={:e}", report.n, cfg.h, cfg.tolerance);
        println!("passed_all={} max_rel_error_all={:e}", report.passed_all, report.max_rel_error_all);
        println!(
            "stable={} passed_stable={} max_rel_error_stable={:e}",
            report.stable, report.passed_stable, report.max_rel_error_stable
        );
        for f in report.failures.iter().filter(|f| f.stable) {
            println!("failure #{} rel_error={:e}", f.index, f.rel_error);
            println!("  {}", f.instance);
        }
    }
    Ok(report.stable_ok())
}

fn bench(a: BenchArgs) -> Outcome {
    require_n(a.n)?;
    let records = bench_instances(4096.min(a.n), a.seed)?;
    let cfg = SolverConfig::default();
    let report = if a.workers <= 1 {
        run_bench(&records, a.n, a.batch, false, &cfg)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {} workers: {e}", a.workers)))?;
        pool.install(|| run_bench(&records, a.n, a.batch, true, &cfg))?
    };
    if a.json {
        println!("{}", serde_json::to_string(&report).expect("reports serialize"));
    } else {
        println!("solves={} batch={} workers={}", report.solves, report.batch, a.workers.max(1));
        println!("seconds={:.6}", report.seconds);
        println!("solves_per_sec={:.0}", report.solves_per_sec);
        println!("us_per_solve={:.4}", 1e6 / report.solves_per_sec);
        println!("ms_per_batch={:.4}", report.batch_ms);
    }
    Ok(a.min_rate.is_none_or(|r| report.solves_per_sec >= r))
}

fn dataset(a: &SampleArgs) -> cabb::Result<AnnotationSet> {
    match &a.annotations {
        Some(path) => load_annotations(path),
        None => synth_dataset(&a.synth.spec()),
    }
}

fn create_dir(path: &Path) -> cabb::Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn sample(a: SampleArgs) -> Outcome {
    require_n(a.n)?;
    let set = dataset(&a)?;
    let cfg = SamplerConfig {
        s0: a.s0,
        r_th: a.r_th,
        r_st: a.r_st,
        crop: parse_pair(&a.crop)?,
        seed: a.seed,
    };
    let run = SampleRun::run(&set, &cfg, &PyramidSpec::default(), a.mode, a.n, &a.iou_edges, &a.scale_edges)?;
    create_dir(&a.out)?;
    run.write_csv(&a.out)?;
    let clamped = run.decisions.iter().filter(|d| d.is_thing && d.sigma_clamped).count();
    println!("mode={} draws={} thing_draws={} clamped={}", a.mode, a.n, run.thing_draws(), clamped);
    for (level, count) in &run.levels {
        println!("level {level}: {count}");
    }
    println!("wrote {}", a.out.display());
    Ok(true)
}

fn synth(a: SynthArgs) -> Outcome {
    let set = synth_dataset(&a.synth.spec())?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_annotations(&set, &a.out)?;
    println!(
        "images={} instances={} classes={} wrote {}",
        set.images.len(),
        set.instances.len(),
        set.classes.len(),
        a.out.display()
    );
    Ok(true)
}
