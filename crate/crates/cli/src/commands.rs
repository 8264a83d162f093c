//! Subcommand implementations.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sphx_core::colorize::{colorize_embedding, write_png, Colormap};
use sphx_core::container::KeyValues;
use sphx_core::eval::evaluate_levels;
use sphx_core::hierarchy::build_hierarchy;
use sphx_core::pipeline;
use sphx_core::sparse::SparseFile;
use sphx_core::walks::run_random_walks;
use sphx_core::{
    EvalCurve, GroundTruthLabels, HierarchyFile, HierarchyHeader, HierarchyParams, HighDimImage, ImageAdjacency,
    LayoutParams, PipelineConfig, RefinementRequest,
};

use crate::args::{
    test_mode, BuildArgs, ColorizeArgs, ConvertArgs, EmbedArgs, EvalArgs, PipelineArgs, RefineArgs, TEST_MODE_ENV,
};
use crate::error::{stage, CliError, CliResult};
use crate::manifest::{Manifest, RunRecord};
use crate::session::{canonical_ids, refinement_ref, RunDir, Session};

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("data-core: {}: {e}", path.display()))
}

pub fn convert(args: &ConvertArgs) -> CliResult<()> {
    let path = &args.csv;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(args.header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let names: Option<Vec<String>> = if args.header {
        let headers = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(headers.iter().map(str::to_string).collect())
    } else {
        None
    };
    let expected = args.width * args.height;
    if expected == 0 {
        return Err(CliError::Usage("width and height must be positive".into()));
    }
    let mut columns = None;
    let mut rows = 0usize;
    let mut values: Vec<f32> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let cols = *columns.get_or_insert(record.len());
        if record.len() != cols {
            return Err(CliError::Data(format!(
                "data-core: {}: row {r} has {} columns, expected {cols}",
                path.display(),
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let bad = || {
                CliError::Data(format!(
                    "data-core: {}: row {r}, column {c}: bad value '{field}'",
                    path.display()
                ))
            };
            if args.labels {
                labels.push(field.parse().map_err(|_| bad())?);
            } else {
                values.push(field.parse().map_err(|_| bad())?);
            }
        }
        rows += 1;
    }
    if rows != expected {
        return Err(CliError::Data(format!(
            "data-core: {}: {rows} rows for a {}x{} image",
            path.display(),
            args.width,
            args.height
        )));
    }
    let channels = columns.unwrap_or(0);
    if args.labels {
        if channels != 1 {
            return Err(CliError::Data(format!(
                "data-core: labels need one column, found {channels}"
            )));
        }
        let gt = GroundTruthLabels::new(args.width, args.height, labels).map_err(stage("data-core"))?;
        gt.save(&args.output).map_err(stage("data-core"))?;
    } else {
        let mut img = HighDimImage::new(args.width, args.height, channels, values).map_err(stage("data-core"))?;
        if let Some(names) = names {
            img = img.with_channel_names(names).map_err(stage("data-core"))?;
        }
        img.save(&args.output).map_err(stage("data-core"))?;
    }
    println!(
        "wrote {} ({}x{}x{channels})",
        args.output.display(),
        args.width,
        args.height
    );
    Ok(())
}

fn build_config(args: &PipelineArgs) -> CliResult<PipelineConfig> {
    let base = match &args.config {
        Some(path) => PipelineConfig::load(path).map_err(stage("config"))?,
        None => PipelineConfig::default(),
    };
    let config = args.apply(base)?;
    if config.input.as_os_str().is_empty() {
        return Err(CliError::Usage(
            "no input image; pass --input or set it in --config".into(),
        ));
    }
    Ok(config)
}

fn load_prepared(config: &PipelineConfig, record: &mut RunRecord) -> CliResult<HighDimImage> {
    let raw = record.time("load", || HighDimImage::load(&config.input).map_err(stage("data-core")))?;
    record.time("preprocess", || {
        pipeline::prepare_image(&raw, config).map_err(stage("data-core"))
    })
}

pub fn graph(args: &BuildArgs) -> CliResult<()> {
    let config = build_config(&args.pipeline)?;
    let dir = RunDir::new(&config.output);
    dir.create()?;
    config.save(&dir.config()).map_err(stage("config"))?;
    let mut record = RunRecord::new(&config);
    let img = load_prepared(&config, &mut record)?;
    let graph = record.time("graph", || {
        pipeline::build_graph(&img, &config).map_err(stage("neighbor-graph"))
    })?;
    graph
        .to_sparse_file()
        .write(&dir.graph())
        .map_err(stage("neighbor-graph"))?;
    record.output(&dir.graph());
    record.note("edges", graph.edge_count());
    record.note("bridges", graph.bridges().len());
    record.note("neighbors", graph.perplexity().neighbor_count());
    println!(
        "graph: {} vertices, {} edges, {} bridges",
        graph.len(),
        graph.edge_count(),
        graph.bridges().len()
    );
    Manifest::record(&dir.manifest(), "graph", record)
}

pub fn hierarchy(args: &BuildArgs) -> CliResult<()> {
    if test_mode() && args.pipeline.seed.is_none() {
        return Err(CliError::Usage(format!(
            "--seed is required when {TEST_MODE_ENV} is set"
        )));
    }
    let config = build_config(&args.pipeline)?;
    let dir = RunDir::new(&config.output);
    dir.create()?;
    config.save(&dir.config()).map_err(stage("config"))?;
    let mut record = RunRecord::new(&config);
    let img = load_prepared(&config, &mut record)?;
    let graph = record.time("graph", || {
        pipeline::build_graph(&img, &config).map_err(stage("neighbor-graph"))
    })?;
    graph
        .to_sparse_file()
        .write(&dir.graph())
        .map_err(stage("neighbor-graph"))?;
    let t0 = record.time("walks", || {
        run_random_walks(&graph, config.walks).map_err(stage("walk-features"))
    })?;
    t0.to_sparse_file()
        .write(&dir.walks())
        .map_err(stage("walk-features"))?;
    let adjacency =
        ImageAdjacency::build(img.width(), img.height(), config.connectivity).map_err(stage("data-core"))?;
    let params = HierarchyParams {
        max_levels: config.max_levels,
        merge_threshold: config.merge_threshold,
    };
    let hierarchy = record.time("hierarchy", || {
        build_hierarchy(&adjacency, t0, params).map_err(stage("hierarchy"))
    })?;
    let header = HierarchyHeader {
        width: img.width(),
        height: img.height(),
        connectivity: config.connectivity,
        provenance: config.to_key_values(),
    };
    HierarchyFile::from_hierarchy(&hierarchy, header)
        .write(&dir.hierarchy())
        .map_err(stage("hierarchy"))?;
    for path in [dir.graph(), dir.walks(), dir.hierarchy()] {
        record.output(&path);
    }
    record.level_sizes = hierarchy.level_sizes();
    record.note("stop", hierarchy.stop.as_str());
    println!(
        "hierarchy: {} levels, superpixels {:?}, stopped: {}",
        hierarchy.level_count(),
        record.level_sizes,
        hierarchy.stop.as_str()
    );
    Manifest::record(&dir.manifest(), "hierarchy", record)
}

pub fn embed(args: &EmbedArgs) -> CliResult<()> {
    if test_mode() && args.seed.is_none() {
        return Err(CliError::Usage(format!(
            "--seed is required when {TEST_MODE_ENV} is set"
        )));
    }
    let mut session = Session::load(&args.run)?;
    session.config = args.apply(session.config.clone());
    let levels: Vec<usize> = match args.level {
        Some(l) => {
            session.check_level(l)?;
            vec![l]
        }
        None => (0..session.level_count()).rev().collect(),
    };
    let out = session.dir.embedding_dir();
    create_dir(&out)?;
    let mut record = RunRecord::new(&session.config);
    let cap = LayoutParams::default().max_points;
    let mut previous: Option<(usize, Vec<[f64; 2]>)> = None;
    for level in levels {
        let m = session.hierarchy.levels[level].superpixel_count();
        if args.level.is_none() && m > cap {
            record.note(
                &format!("skipped_level_{level}"),
                format!("{m} superpixels exceed {cap}"),
            );
            continue;
        }
        let parent_coords = match previous.take() {
            Some((l, coords)) if l == level + 1 => Some(coords),
            _ if level + 1 < session.level_count() => session.saved_embedding(level + 1)?,
            _ => None,
        };
        let embedding = record.time(&format!("level_{level}"), || {
            session.embed(level, parent_coords.as_deref(), |it, total| {
                if it % 100 == 0 {
                    log::debug!("level {level}: iteration {it}/{total}");
                }
            })
        })?;
        let stem = RunDir::embedding_stem(level);
        embedding.write(&out, &stem).map_err(stage("embedding"))?;
        record.output(&out.join(format!("{stem}.csv")));
        record.level_sizes.push(m);
        let kl = embedding.objective_trace.last().copied().unwrap_or(0.0);
        println!("embedded level {level}: {m} points, final KL {kl:.6}");
        previous = Some((level, embedding.coords));
    }
    Manifest::record(&session.dir.manifest(), "embed", record)
}

fn read_ids(args: &RefineArgs) -> CliResult<Vec<u32>> {
    if let Some(ids) = &args.ids {
        return Ok(ids.clone());
    }
    let path = args.ids_file.as_ref().expect("clap requires ids or ids-file");
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Data(format!("bad superpixel id '{s}' in {}", path.display())))
        })
        .collect()
}

pub fn refine(args: &RefineArgs) -> CliResult<()> {
    let session = Session::load(&args.run)?;
    let gamma = if args.no_expand {
        None
    } else {
        args.gamma.or(session.config.gamma)
    };
    let request = RefinementRequest {
        level: args.level,
        selected: canonical_ids(&read_ids(args)?),
        gamma,
    };
    let iterations = args.iterations.unwrap_or(session.config.embed_iterations);
    let mut record = RunRecord::new(&session.config);
    let result = record.time("refine", || session.refine(&request))?;
    let parent_coords = session.saved_embedding(args.level)?;
    let embedding = record.time("embed", || {
        session.embed_refinement(&result, parent_coords.as_deref(), args.seed, iterations, |_, _| {})
    })?;
    let reference = refinement_ref(&session.provenance, &request, args.seed, iterations);
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| session.dir.refine_dir(&reference));
    create_dir(&out)?;

    let selected: HashSet<u32> = request.selected.iter().copied().collect();
    let parent = session.hierarchy.levels[result.level]
        .parent
        .as_ref()
        .expect("lower levels have parents");
    let mut subset = String::from("id,child\n");
    for &id in &result.subset {
        writeln!(subset, "{id},{}", u8::from(selected.contains(&parent[id as usize]))).unwrap();
    }
    write_file(&out.join("subset.csv"), subset)?;
    let mut meta = KeyValues::new();
    meta.set("kind", "refinement");
    meta.set("level", result.level);
    meta.set("gamma", gamma.map_or_else(|| "none".to_string(), |g| g.to_string()));
    meta.set("provenance", &session.provenance);
    let sims = out.join("similarities.sparse");
    SparseFile::from_matrix(&result.matrix, "p", meta)
        .write(&sims)
        .map_err(stage("refinement"))?;
    embedding.write(&out, "embedding").map_err(stage("embedding"))?;

    record.level_sizes = vec![request.selected.len(), result.subset.len()];
    record.note("reference", &reference);
    record.note("level", args.level);
    record.note("gamma", gamma.map_or_else(|| "none".to_string(), |g| g.to_string()));
    record.note("seed", args.seed);
    record.note("children", result.children);
    for name in ["subset.csv", "similarities.sparse", "embedding.csv"] {
        record.output(&out.join(name));
    }
    println!(
        "refined {} superpixels on level {} into {} on level {} ({} children): {}",
        request.selected.len(),
        args.level,
        result.subset.len(),
        result.level,
        result.children,
        out.display()
    );
    Manifest::record(&out.join("manifest.json"), "refine", record)
}

pub fn colorize(args: &ColorizeArgs) -> CliResult<()> {
    let session = Session::load(&args.run)?;
    session.check_level(args.level)?;
    let colormap = match &args.colormap {
        Some(spec) => Colormap::parse(spec).map_err(CliError::Usage)?,
        None => Colormap::default(),
    };
    let coords = session.saved_embedding(args.level)?.ok_or_else(|| {
        CliError::Data(format!(
            "no embedding for level {}; run `sphx embed --level {}` first",
            args.level, args.level
        ))
    })?;
    let labels = &session.hierarchy.levels[args.level].labels;
    let rgb = colorize_embedding(&coords, labels, &colormap).map_err(stage("colorize"))?;
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| session.dir.root.join(format!("colorized_{}.png", args.level)));
    write_png(&out, &rgb, session.width, session.height).map_err(stage("colorize"))?;
    let mut record = RunRecord::new(&session.config);
    record.output(&out);
    record.level_sizes = vec![coords.len()];
    record.note("level", args.level);
    println!("wrote {}", out.display());
    Manifest::record(&session.dir.manifest(), "colorize", record)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let session = Session::load(&args.run)?;
    let gt_path: PathBuf = args
        .gt
        .clone()
        .or_else(|| session.config.ground_truth.clone())
        .ok_or_else(|| CliError::Usage("no ground truth; pass --gt".into()))?;
    let gt = GroundTruthLabels::load(&gt_path).map_err(stage("data-core"))?;
    let mut record = RunRecord::new(&session.config);
    let points = record.time("eval", || {
        evaluate_levels(&session.hierarchy.levels, &gt, &session.image).map_err(stage("evaluation"))
    })?;
    let curve = EvalCurve::from_points(points).map_err(stage("evaluation"))?;
    let csv = curve.to_csv();
    let out = args.output.clone().unwrap_or_else(|| session.dir.root.join("eval.csv"));
    write_file(&out, &csv)?;
    print!("{csv}");
    println!("{}", curve.summary());
    record.output(&out);
    record.level_sizes = session.hierarchy.level_sizes();
    record.note("summary", curve.summary());
    record.note("ground_truth", gt_path.display());
    Manifest::record(&session.dir.manifest(), "eval", record)
}
