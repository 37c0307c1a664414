//! Command-line front end for the region-based feature extraction
//! library: fit projections, apply them, and run the evaluation
//! experiments.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pixelclust::clustering::{kmeans_restarts, load_partition, save_partition, wcss, KMeansConfig};
use pixelclust::dataset::{
    dataset_checksum, load_dataset, load_dataset_resized, ImageFormat, LabeledDataset,
};
use pixelclust::evaluation::{
    load_experiment_config, nn1_classify, run_few_classes, run_k_sweep, run_overcluster,
    summarize, write_results_csv, write_run_manifest, write_summary_csv, DatasetProvenance,
    EvalContext, RunManifest,
};
use pixelclust::pgm::{read_pgm, write_pgm};
use pixelclust::pixelspace::{
    devectorize, pixel_vectors_by_position, pixel_vectors_by_value, vectorize,
};
use pixelclust::projection::{
    build_projection, load_projection, project, reconstruct, region_map_image, save_projection,
};

#[derive(Parser)]
#[command(
    name = "pixelclust",
    version,
    about = "Region-based feature extraction for grayscale images"
)]
struct Cli {
    /// Worker threads for parallel sections (0 or omitted: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset's pixels and write the partition and projection.
    Fit(FitArgs),
    /// Project one image through a fitted model and print its features.
    Project(ProjectArgs),
    /// Round-trip one image through a model and write the result as PGM.
    Reconstruct(ReconstructArgs),
    /// Classify an image against a labeled dataset by nearest neighbor.
    Classify(ClassifyArgs),
    /// Run the repeated-split evaluation experiments from a JSON config.
    Experiment(ExperimentArgs),
    /// Render a pixel partition as a grayscale region map.
    RegionMap(RegionMapArgs),
}

/// Which per-pixel descriptor the clustering sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Descriptor {
    /// Intensities of the pixel position across the dataset's images.
    Value,
    /// The pixel position's own (column, row) coordinates.
    Position,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory, or a name resolved under $PIXELCLUST_DATA.
    #[arg(long)]
    dataset: String,
    /// Number of clusters (regions) to form.
    #[arg(long = "clusters-formed", visible_alias = "n")]
    clusters_formed: usize,
    /// Resize every image on load, e.g. 92x112.
    #[arg(long, value_name = "WIDTHxHEIGHT")]
    resize: Option<String>,
    /// Pixel descriptor to cluster.
    #[arg(long, value_enum, default_value_t = Descriptor::Value)]
    descriptor: Descriptor,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent clustering runs; the best objective wins.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 300)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Output directory for partition.txt, projection.txt, manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    /// Projection file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Image to project (PGM).
    #[arg(long)]
    image: PathBuf,
    /// Write features here, one per line, instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Projection file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Image to round-trip (PGM).
    #[arg(long)]
    image: PathBuf,
    /// Output PGM path. Pixels outside every region (possible with a
    /// reduced model) take the input image's mean intensity.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Projection file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Labeled reference dataset directory, or a name under
    /// $PIXELCLUST_DATA.
    #[arg(long)]
    dataset: String,
    /// Resize reference images on load, e.g. 92x112.
    #[arg(long, value_name = "WIDTHxHEIGHT")]
    resize: Option<String>,
    /// Image to classify (PGM).
    #[arg(long)]
    image: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Families to run: all, k_sweep, few_classes, overcluster.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    families: Vec<String>,
    /// Output directory for results.csv, summary.csv, manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegionMapArgs {
    /// Partition file written by `fit`.
    #[arg(long)]
    partition: PathBuf,
    /// Output PGM path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    pool.install(|| run(cli.command))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => fit(args),
        Command::Project(args) => project_cmd(args),
        Command::Reconstruct(args) => reconstruct_cmd(args),
        Command::Classify(args) => classify(args),
        Command::Experiment(args) => experiment(args),
        Command::RegionMap(args) => region_map(args),
    }
}

/// A dataset argument is either a directory path or a name under
/// $PIXELCLUST_DATA.
fn resolve_dataset_root(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_dir() {
        return Ok(direct);
    }
    if let Ok(base) = std::env::var("PIXELCLUST_DATA") {
        let nested = Path::new(&base).join(name);
        if nested.is_dir() {
            return Ok(nested);
        }
        bail!("dataset `{name}` is not a directory and was not found under PIXELCLUST_DATA={base}");
    }
    bail!("dataset `{name}` is not a directory (set PIXELCLUST_DATA to resolve names)");
}

fn parse_resize(arg: &str) -> Result<(usize, usize)> {
    let (w, h) = arg
        .split_once(['x', 'X'])
        .with_context(|| format!("`{arg}` is not WIDTHxHEIGHT"))?;
    let w: usize = w.trim().parse().with_context(|| format!("bad width in `{arg}`"))?;
    let h: usize = h.trim().parse().with_context(|| format!("bad height in `{arg}`"))?;
    if w == 0 || h == 0 {
        bail!("resize target must be at least 1x1, got {w}x{h}");
    }
    Ok((w, h))
}

fn load_resolved(root: &Path, resize: Option<&str>) -> Result<LabeledDataset> {
    let ds = match resize {
        Some(spec) => {
            let (w, h) = parse_resize(spec)?;
            load_dataset_resized(root, ImageFormat::Pgm, w, h)?
        }
        None => load_dataset(root, ImageFormat::Pgm)?,
    };
    Ok(ds)
}

fn fit(args: FitArgs) -> Result<()> {
    let root = resolve_dataset_root(&args.dataset)?;
    let ds = load_resolved(&root, args.resize.as_deref())?;

    let set = match args.descriptor {
        Descriptor::Value => pixel_vectors_by_value(ds.samples())?,
        Descriptor::Position => pixel_vectors_by_position(ds.width(), ds.height())?,
    };
    let cfg = KMeansConfig {
        clusters: args.clusters_formed,
        seed: args.seed,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
    };
    let partition = kmeans_restarts(&set, &cfg, args.restarts)?;
    let objective = wcss(&set, &partition)?;
    let w = build_projection(&partition);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_partition(&partition, &args.out.join("partition.txt"))?;
    save_projection(&w, &args.out.join("projection.txt"))?;

    let manifest = serde_json::json!({
        "command": "fit",
        "dataset": {
            "root": root.display().to_string(),
            "sha256": dataset_checksum(&root)?,
            "classes": ds.class_count(),
            "samples": ds.len(),
            "width": ds.width(),
            "height": ds.height(),
        },
        "descriptor": match args.descriptor {
            Descriptor::Value => "value",
            Descriptor::Position => "position",
        },
        "clusters_formed": args.clusters_formed,
        "seed": args.seed,
        "restarts": args.restarts,
        "max_iterations": args.max_iterations,
        "tolerance": args.tolerance,
        "resize": args.resize,
    });
    write_json(&manifest, &args.out.join("manifest.json"))?;

    println!(
        "formed {} regions over {}x{} pixels from {} images (objective {objective:.6})",
        partition.cluster_count(),
        ds.width(),
        ds.height(),
        ds.len()
    );
    println!("wrote {}", args.out.join("partition.txt").display());
    println!("wrote {}", args.out.join("projection.txt").display());
    println!("wrote {}", args.out.join("manifest.json").display());
    Ok(())
}

fn project_features(model: &Path, image: &Path) -> Result<Vec<f64>> {
    let w = load_projection(model)?;
    let img = read_pgm(image)?;
    if (img.width(), img.height()) != (w.width(), w.height()) {
        bail!(
            "image is {}x{} but the model expects {}x{}; resize it the same way the model was fitted",
            img.width(),
            img.height(),
            w.width(),
            w.height()
        );
    }
    Ok(project(&w, &vectorize(&img))?)
}

fn project_cmd(args: ProjectArgs) -> Result<()> {
    let features = project_features(&args.model, &args.image)?;
    let mut text = String::new();
    for f in &features {
        text.push_str(&format!("{f}\n"));
    }
    match &args.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} features to {}", features.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn reconstruct_cmd(args: ReconstructArgs) -> Result<()> {
    let w = load_projection(&args.model)?;
    let img = read_pgm(&args.image)?;
    if (img.width(), img.height()) != (w.width(), w.height()) {
        bail!(
            "image is {}x{} but the model expects {}x{}",
            img.width(),
            img.height(),
            w.width(),
            w.height()
        );
    }
    let x = vectorize(&img);
    let features = project(&w, &x)?;
    let back = reconstruct(&w, &features, img.mean())?;
    let out_img = devectorize(&back, w.width(), w.height())?;
    write_pgm(&out_img, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let root = resolve_dataset_root(&args.dataset)?;
    let ds = load_resolved(&root, args.resize.as_deref())?;
    let w = load_projection(&args.model)?;
    if (ds.width(), ds.height()) != (w.width(), w.height()) {
        bail!(
            "dataset images are {}x{} but the model expects {}x{}",
            ds.width(),
            ds.height(),
            w.width(),
            w.height()
        );
    }
    let reference: Vec<Vec<f64>> = ds
        .samples()
        .iter()
        .map(|img| project(&w, &vectorize(img)))
        .collect::<pixelclust::Result<_>>()?;
    let query = project_features(&args.model, &args.image)?;
    let label = nn1_classify(&reference, ds.labels(), &query)?;
    println!("{}", ds.class_name(label));
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let families = parse_families(&args.families)?;
    let config = load_experiment_config(&args.config)?;
    let root = resolve_dataset_root(&config.dataset_root.display().to_string())?;
    let ds = match config.resize {
        Some([w, h]) => load_dataset_resized(&root, ImageFormat::Pgm, w, h)?,
        None => load_dataset(&root, ImageFormat::Pgm)?,
    };
    println!(
        "dataset `{}`: {} classes, {} samples, {}x{} pixels",
        config.dataset_name,
        ds.class_count(),
        ds.len(),
        ds.width(),
        ds.height()
    );

    let ctx = EvalContext {
        dataset: &ds,
        dataset_name: &config.dataset_name,
        repetitions: config.repetitions,
        base_seed: config.base_seed,
        kmeans: config.kmeans.clone(),
    };

    let mut rows = Vec::new();
    if families.contains("k_sweep") {
        let batch = run_k_sweep(&ctx, &config.clusters_formed)?;
        println!("k_sweep: {} rows", batch.len());
        rows.extend(batch);
    }
    if families.contains("few_classes") {
        let batch = run_few_classes(
            &ctx,
            &config.projection_training_classes,
            config.few_classes_features,
        )?;
        println!("few_classes: {} rows", batch.len());
        rows.extend(batch);
    }
    if families.contains("overcluster") {
        let batch = run_overcluster(&ctx, &config.overcluster_formed, &config.overcluster_kept)?;
        println!("overcluster: {} rows", batch.len());
        rows.extend(batch);
    }
    if rows.is_empty() {
        bail!("no experiment family produced rows");
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let results_path = args.out.join("results.csv");
    let summary_path = args.out.join("summary.csv");
    let manifest_path = args.out.join("manifest.json");
    write_results_csv(&rows, &results_path)?;
    write_summary_csv(&summarize(&rows), &summary_path)?;

    let manifest = RunManifest {
        dataset: DatasetProvenance {
            name: config.dataset_name.clone(),
            root: root.display().to_string(),
            sha256: dataset_checksum(&root)?,
            classes: ds.class_count(),
            samples: ds.len(),
            width: ds.width(),
            height: ds.height(),
        },
        config,
    };
    write_run_manifest(&manifest, &manifest_path)?;

    println!("wrote {}", results_path.display());
    println!("wrote {}", summary_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn parse_families(spec: &[String]) -> Result<BTreeSet<String>> {
    let known = ["k_sweep", "few_classes", "overcluster"];
    let mut out = BTreeSet::new();
    for value in spec {
        match value.as_str() {
            "all" => out.extend(known.iter().map(|s| s.to_string())),
            v if known.contains(&v) => {
                out.insert(v.to_string());
            }
            other => bail!(
                "unknown experiment family `{other}` (expected all, k_sweep, few_classes, overcluster)"
            ),
        }
    }
    Ok(out)
}

fn region_map(args: RegionMapArgs) -> Result<()> {
    let partition = load_partition(&args.partition)?;
    let img = region_map_image(&partition);
    write_pgm(&img, &args.out)?;
    println!(
        "wrote {} ({} regions over {}x{})",
        args.out.display(),
        partition.cluster_count(),
        partition.width(),
        partition.height()
    );
    Ok(())
}

fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
