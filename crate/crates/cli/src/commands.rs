use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use sfr_core::data::{
    ladder_toy_26, parse_ratings, split_ratings, square_toy, write_split_manifest, RatingMatrix, Split, ToyFixture,
};
use sfr_core::estimators::{l0_oracle, Method, SolverConfig};
use sfr_core::eval::{
    evaluate_detailed, evaluate_toy as score_toy, examine_linearity, EvaluationReport, PredictionRow,
};
use sfr_core::graph::{build_item_graph, serialize_graph, ItemGraph};

use crate::config::ExperimentConfig;

/// Version of the `report.json` layout described in the README.
const REPORT_SCHEMA_VERSION: u32 = 1;

fn load_dataset(cfg: &ExperimentConfig) -> Result<RatingMatrix> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| anyhow!("no dataset configured (set `dataset`)"))?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let t = Instant::now();
    let m =
        parse_ratings(BufReader::new(file), cfg.format, cfg.bounds()).with_context(|| path.display().to_string())?;
    eprintln!(
        "loaded {} ratings from {} users on {} items in {:.1?}",
        m.len(),
        m.user_count(),
        m.item_count(),
        t.elapsed()
    );
    Ok(m)
}

fn build_graph_of(cfg: &ExperimentConfig, ratings: &RatingMatrix) -> Result<ItemGraph> {
    let t = Instant::now();
    let g = build_item_graph(ratings, cfg.threshold, cfg.min_support)?;
    eprintln!(
        "graph: nodes={} edges={} isolated={} ({:.1?})",
        g.len(),
        g.edge_count(),
        g.isolated_count(),
        t.elapsed()
    );
    Ok(g)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(&cfg.output_dir)
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    fill(&mut out)?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write_file(&dir.join("config.txt"), |w| Ok(w.write_all(cfg.to_text().as_bytes())?))
}

pub fn build_graph(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    cfg.validate().context("config")?;
    let ratings = load_dataset(cfg).context("stage load")?;
    let graph = build_graph_of(cfg, &ratings).context("stage graph")?;
    let path = match out {
        Some(p) => p,
        None => output_dir(cfg)?.join("graph.tsv"),
    };
    write_file(&path, |w| Ok(serialize_graph(&graph, w)?)).context("stage write")?;
    Ok(())
}

struct Prepared {
    split: Split,
    graph: ItemGraph,
}

fn prepare(cfg: &ExperimentConfig, dir: &Path) -> Result<Prepared> {
    cfg.validate().context("config")?;
    write_config(cfg, dir)?;
    let ratings = load_dataset(cfg).context("stage load")?;
    let split = split_ratings(&ratings, cfg.split_fraction, cfg.seed).context("stage split")?;
    drop(ratings);
    eprintln!("split: train={} test={}", split.train.len(), split.test.len());
    write_file(&dir.join("split_test.csv"), |w| Ok(write_split_manifest(&split, w)?)).context("stage split")?;
    let graph = build_graph_of(cfg, &split.train).context("stage graph")?;
    Ok(Prepared { split, graph })
}

fn run_evaluation(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(EvaluationReport, Vec<PredictionRow>)> {
    let t = Instant::now();
    let out = evaluate_detailed(&cfg.methods, &prep.split, &prep.graph, &cfg.solver).context("stage predict")?;
    eprintln!("predicted in {:.1?}", t.elapsed());
    Ok(out)
}

#[derive(Serialize)]
struct SplitSummary {
    fraction: f64,
    seed: u64,
    train_records: usize,
    test_records: usize,
}

#[derive(Serialize)]
struct GraphSummary {
    threshold: f64,
    min_support: usize,
    nodes: usize,
    edges: usize,
    isolated: usize,
    components: usize,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    schema_version: u32,
    dataset: String,
    format: &'static str,
    split: SplitSummary,
    graph: GraphSummary,
    solver: &'a SolverConfig,
    report: &'a EvaluationReport,
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg, dir)?;
    let (report, _) = run_evaluation(cfg, &prep)?;

    let doc = ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: cfg.get("dataset").unwrap_or_default(),
        format: cfg.format.as_str(),
        split: SplitSummary {
            fraction: prep.split.fraction,
            seed: prep.split.seed,
            train_records: prep.split.train.len(),
            test_records: prep.split.test.len(),
        },
        graph: GraphSummary {
            threshold: cfg.threshold,
            min_support: cfg.min_support,
            nodes: prep.graph.len(),
            edges: prep.graph.edge_count(),
            isolated: prep.graph.isolated_count(),
            components: prep.graph.component_count(),
        },
        solver: &cfg.solver,
        report: &report,
    };
    write_file(&dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        Ok(writeln!(w)?)
    })
    .context("stage report")?;
    write_file(&dir.join("rmse.tsv"), |w| Ok(report.write_rmse_tsv(w)?)).context("stage report")?;
    write_file(&dir.join("rmse_by_truth.tsv"), |w| Ok(report.write_truth_tsv(w)?)).context("stage report")?;

    let c = &report.class_counts;
    println!(
        "test examples {}: higher {} ({:.2}%), lower {} ({:.2}%), neither {}, unclassifiable {}",
        report.test_examples,
        c.higher,
        100.0 * report.higher_fraction,
        c.lower,
        100.0 * report.lower_fraction,
        c.neither,
        c.unclassifiable
    );
    print!("{}", report.table());
    Ok(())
}

pub fn predict(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg, dir)?;
    let (report, rows) = run_evaluation(cfg, &prep)?;
    let train = &prep.split.train;
    write_file(&dir.join("predictions.csv"), |w| {
        writeln!(w, "user,item,estimate,method,is_fallback")?;
        for r in rows.iter().filter(|r| cfg.methods.contains(&r.method)) {
            writeln!(
                w,
                "{},{},{},{},{}",
                train.users().id(r.user),
                train.items().id(r.item),
                r.estimate,
                r.method,
                r.is_fallback
            )?;
        }
        Ok(())
    })
    .context("stage write")?;

    println!("{:<8}{:>12}{:>12}", "method", "predictions", "fallbacks");
    for m in &report.methods {
        println!("{:<8}{:>12}{:>12}", m.method.as_str(), m.predictions, m.fallbacks);
    }
    Ok(())
}

pub fn examine(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate().context("config")?;
    let dir = output_dir(cfg)?;
    let ratings = load_dataset(cfg).context("stage load")?;
    let graph = build_graph_of(cfg, &ratings).context("stage graph")?;
    let hist = examine_linearity(&ratings, &graph, cfg.coverage, cfg.min_neighbor_ratings).context("stage examine")?;
    write_file(&dir.join("linearity.tsv"), |w| Ok(hist.write_tsv(w)?)).context("stage write")?;
    println!("samples {}", hist.samples);
    if let Some(k) = hist.modal_bin() {
        let b = &hist.bins[k];
        println!("modal bin [{:.3}, {:.3}) count {}", b.left, b.right, b.count);
    }
    Ok(())
}

fn fixture(ladder: bool) -> ToyFixture {
    if ladder {
        ladder_toy_26()
    } else {
        square_toy()
    }
}

pub fn evaluate_toy(cfg: &ExperimentConfig, ladder: bool) -> Result<()> {
    cfg.validate().context("config")?;
    let toy = fixture(ladder);
    let report = score_toy(&toy, &cfg.methods, &cfg.solver).context("stage predict")?;
    let dir = output_dir(cfg)?;
    write_config(cfg, dir)?;
    write_file(&dir.join("toy_report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })
    .context("stage report")?;

    println!("fixture {}", report.fixture);
    println!(
        "{:<8}{:>18}{:>13}{:>9}{:>12}",
        "method", "rmse_unobserved", "abstentions", "sources", "iterations"
    );
    for m in &report.methods {
        let rmse = if m.rmse_unobserved.is_finite() {
            format!("{:.2}", m.rmse_unobserved)
        } else {
            "-".into()
        };
        println!(
            "{:<8}{:>18}{:>13}{:>9}{:>12}",
            m.method.as_str(),
            rmse,
            m.abstentions,
            m.diagnostics.source_count,
            m.diagnostics.iterations_used
        );
    }
    Ok(())
}

fn second_derivative_partial(graph: &ItemGraph, values: &[Option<f64>], i: usize) -> Option<f64> {
    let own = values[i]?;
    let (mut num, mut den) = (0.0, 0.0);
    for &(j, w) in graph.neighbors(i) {
        num += w * values[j]?;
        den += w;
    }
    (den > 0.0).then(|| num / den - own)
}

fn cell(v: Option<f64>) -> String {
    match v.map(|x| format!("{x:.4}")) {
        Some(s) if s == "-0.0000" => "0.0000".into(),
        Some(s) => s,
        None => "-".into(),
    }
}

pub fn toy(cfg: &ExperimentConfig, ladder: bool, method: Method) -> Result<()> {
    let toy = fixture(ladder);
    let solver = SolverConfig {
        bounds: toy.bounds,
        ..cfg.solver.clone()
    };
    solver.validate().context("config")?;
    let n = toy.graph.len();

    let (estimates, ties): (Vec<Option<f64>>, Vec<Vec<usize>>) = if method == Method::L0Oracle {
        let out = l0_oracle(&toy.graph, &toy.observed, toy.bounds, 3, 1e-8).context("stage predict")?;
        let first = out
            .solutions
            .first()
            .ok_or_else(|| anyhow!("no feasible source set up to 3 sources"))?;
        (
            first.ratings.iter().map(|&x| Some(x)).collect(),
            out.solutions.iter().map(|s| s.sources.clone()).collect(),
        )
    } else {
        let rec = method
            .predict(&toy.graph, &toy.observed, &(0..n).collect(), &solver)
            .context("stage predict")?;
        (rec.rating_vector(n), Vec::new())
    };

    println!("fixture {} method {}", toy.name, method);
    println!(
        "{:<6}{:>8}{:>10}{:>10}{:>10}{:>8}",
        "node", "truth", "observed", "estimate", "d2", "source"
    );
    for i in 0..n {
        let truth = toy.ground_truth.as_ref().map(|t| t[i]);
        let d2 = second_derivative_partial(&toy.graph, &estimates, i);
        let source = d2.map_or("-", |x| if x.abs() > solver.source_tolerance { "yes" } else { "no" });
        println!(
            "{:<6}{:>8}{:>10}{:>10}{:>10}{:>8}",
            toy.graph.label(i),
            truth.map_or_else(|| "-".into(), |t| format!("{t}")),
            if toy.observed.contains_key(&i) { "yes" } else { "no" },
            cell(estimates[i]),
            cell(d2),
            source
        );
    }
    if !ties.is_empty() {
        println!("minimal source sets ({}):", ties.len());
        for set in ties {
            let names: Vec<&str> = set.iter().map(|&i| toy.graph.label(i)).collect();
            println!("  {{{}}}", names.join(", "));
        }
    }
    Ok(())
}
