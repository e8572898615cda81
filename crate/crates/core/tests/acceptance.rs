//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! The MovieLens criteria read `SFR_MOVIELENS_1M`, falling back to
//! `data/ml-1m/ratings.dat` under the workspace root.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfr_core::data::{
    ladder_toy_26, parse_ratings, split_ratings, square_toy, write_split_manifest, Bounds, Format, RatingMatrix,
};
use sfr_core::estimators::{
    l0_oracle, predict_hcp, predict_knn, predict_sfr, sfr_gradient, smoothed_sum, Method, SolverConfig,
};
use sfr_core::eval::{evaluate, evaluate_toy, examine_linearity, EvaluationReport, LinearityHistogram};
use sfr_core::graph::{build_item_graph, second_derivative, ItemGraph};

const BOUNDS: Bounds = Bounds { low: 1.0, high: 5.0 };
const METHODS: [Method; 3] = [Method::Knn, Method::Hcp, Method::Sfr];

/// Printed HCP labels of the ladder toy, v1..v26.
const LADDER_HCP_LABELS: [f64; 26] = [
    4.4, 4.2, 4.6, 4.6, 4.2, 4.0, 4.8, 4.8, 4.0, 5.0, 5.0, 5.0, 5.0, 6.0, 6.0, 6.0, 6.0, 7.0, 6.2, 6.2, 7.0, 6.8, 6.4,
    6.4, 6.8, 6.6,
];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn all_items(n: usize) -> BTreeSet<usize> {
    (0..n).collect()
}

fn square_hcp() -> Outcome {
    let toy = square_toy();
    let (rec, took) = timed(|| predict_hcp(&toy.graph, &toy.observed, &all_items(4), toy.bounds));
    let rec = rec.map_err(|e| e.to_string())?;
    let (b, d) = (rec.estimate(1).unwrap(), rec.estimate(3).unwrap());
    let detail = format!("B={b:.12} D={d:.12} in {:.3} ms", ms(took));
    if (b - 13.0 / 3.0).abs() < 1e-9 && (d - 11.0 / 3.0).abs() < 1e-9 && took < Duration::from_millis(1) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ladder_hcp() -> Outcome {
    let toy = ladder_toy_26();
    let (rec, took) = timed(|| predict_hcp(&toy.graph, &toy.observed, &all_items(26), toy.bounds));
    let rec = rec.map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, label) in LADDER_HCP_LABELS.iter().enumerate() {
        let rounded = (rec.estimate(i).unwrap() * 10.0).round() / 10.0;
        worst = worst.max((rounded - label).abs());
    }
    let detail = format!("max label gap {worst:.3} in {:.3} ms", ms(took));
    if worst <= 0.05 && took < Duration::from_millis(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ladder_sfr() -> Outcome {
    let toy = ladder_toy_26();
    let truth = toy.ground_truth.clone().unwrap();
    let config = SolverConfig::with_bounds(toy.bounds);
    let (rec, took) = timed(|| predict_sfr(&toy.graph, &toy.observed, &all_items(26), &config));
    let rec = rec.map_err(|e| e.to_string())?;
    let ratings: Vec<f64> = (0..26).map(|i| rec.estimate(i).unwrap()).collect();
    let worst = (0..26)
        .filter(|i| !toy.observed.contains_key(i))
        .map(|i| (ratings[i] - truth[i]).abs())
        .fold(0.0, f64::max);
    let sources = second_derivative(&toy.graph, &ratings, 1e-3).sources();
    let names: Vec<&str> = sources.iter().map(|&i| toy.graph.label(i)).collect();
    let detail = format!(
        "max error {worst:.2e}, v1={:.4} v26={:.4}, sources {names:?}, {:.0} ms",
        ratings[0],
        ratings[25],
        ms(took)
    );
    if worst < 1e-2 && sources == [0, 25] && took < Duration::from_secs(5) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ladder_oracle() -> Outcome {
    let toy = ladder_toy_26();
    let truth = toy.ground_truth.clone().unwrap();
    let (outcome, took) = timed(|| l0_oracle(&toy.graph, &toy.observed, toy.bounds, 2, 1e-8));
    let outcome = outcome.map_err(|e| e.to_string())?;
    let hit = outcome.solutions.iter().find(|s| s.sources == [0, 25]);
    let matches =
        hit.is_some_and(|s| s.residual < 1e-8 && s.ratings.iter().zip(&truth).all(|(a, b)| (a - b).abs() < 1e-8));
    let detail = format!(
        "min sources {:?}, {} solutions, {} candidates, truth solution found: {matches}, {:.0} ms",
        outcome.min_source_count,
        outcome.solutions.len(),
        outcome.candidates_checked,
        ms(took)
    );
    if outcome.min_source_count == Some(2) && matches && took < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random graph on `n` nodes with edge density `density`, possibly disconnected.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> ItemGraph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                edges.push((a, b, rng.random_range(0.05..1.0)));
            }
        }
    }
    ItemGraph::from_edges((0..n).map(|i| format!("i{i}")).collect(), &edges).unwrap()
}

fn random_observed(rng: &mut ChaCha8Rng, n: usize) -> BTreeMap<usize, f64> {
    let mut observed = BTreeMap::new();
    for i in 0..n {
        if rng.random_bool(0.35) {
            observed.insert(i, rng.random_range(1..=5) as f64);
        }
    }
    if observed.is_empty() {
        observed.insert(rng.random_range(0..n), rng.random_range(1..=5) as f64);
    }
    observed
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = SolverConfig::default();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut coords = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=20);
        let density = rng.random_range(0.15..0.6);
        let graph = random_graph(&mut rng, n, density);
        let observed = random_observed(&mut rng, n);
        let ratings: Vec<f64> = (0..n)
            .map(|i| observed.get(&i).copied().unwrap_or_else(|| rng.random_range(1.0..5.0)))
            .collect();
        let free: Vec<usize> = (0..n).filter(|i| !observed.contains_key(i)).collect();
        let analytic = sfr_gradient(&graph, &ratings, &free, &config);
        for (&i, &a) in free.iter().zip(&analytic) {
            let mut up = ratings.clone();
            let mut down = ratings.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (smoothed_sum(&graph, &up, &config) - smoothed_sum(&graph, &down, &config)) / (2.0 * h);
            let scale = a.abs().max(fd.abs());
            let rel = if scale < 1e-8 { 0.0 } else { (a - fd).abs() / scale };
            worst = worst.max(rel);
            coords += 1;
        }
    }
    let detail = format!("{coords} coordinates, worst relative error {worst:.2e}");
    if worst < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn component_ranges(graph: &ItemGraph, observed: &BTreeMap<usize, f64>) -> Vec<Option<(f64, f64)>> {
    let comp = graph.components();
    let mut range: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (&i, &r) in observed {
        let e = range.entry(comp[i]).or_insert((r, r));
        *e = (e.0.min(r), e.1.max(r));
    }
    (0..graph.len()).map(|i| range.get(&comp[i]).copied()).collect()
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let config = SolverConfig::default();
    let mut violations = Vec::new();
    let mut checked = [0usize; 3];
    for instance in 0..1000 {
        let n = rng.random_range(3..=20);
        let density = rng.random_range(0.1..0.5);
        let graph = random_graph(&mut rng, n, density);
        let observed = random_observed(&mut rng, n);
        let targets = all_items(n);

        let knn = predict_knn(&graph, &observed, &targets, BOUNDS).map_err(|e| e.to_string())?;
        for (&i, &e) in &knn.estimates {
            if observed.contains_key(&i) {
                continue;
            }
            let rated: Vec<f64> = graph
                .neighbors(i)
                .iter()
                .filter_map(|(j, _)| observed.get(j).copied())
                .collect();
            let (lo, hi) = rated
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
            checked[0] += 1;
            if e < lo - 1e-12 || e > hi + 1e-12 {
                violations.push(format!("instance {instance}: knn item {i} = {e} outside [{lo}, {hi}]"));
            }
        }

        let hcp = predict_hcp(&graph, &observed, &targets, BOUNDS).map_err(|e| e.to_string())?;
        let ranges = component_ranges(&graph, &observed);
        for (&i, &e) in &hcp.estimates {
            if observed.contains_key(&i) {
                continue;
            }
            let (lo, hi) = ranges[i].expect("estimated item has an observed component");
            checked[1] += 1;
            if e < lo - 1e-9 || e > hi + 1e-9 {
                violations.push(format!("instance {instance}: hcp item {i} = {e} outside [{lo}, {hi}]"));
            }
        }

        let sfr = predict_sfr(&graph, &observed, &targets, &config).map_err(|e| e.to_string())?;
        let fill = |rec: &sfr_core::estimators::UserRecovery| -> Vec<f64> {
            (0..n).map(|i| rec.estimate(i).unwrap_or(3.0)).collect()
        };
        let (at_sfr, at_hcp) = (
            smoothed_sum(&graph, &fill(&sfr), &config),
            smoothed_sum(&graph, &fill(&hcp), &config),
        );
        checked[2] += 1;
        if at_sfr > at_hcp + 1e-9 {
            violations.push(format!(
                "instance {instance}: sfr objective {at_sfr} above hcp {at_hcp}"
            ));
        }
    }
    let detail = format!(
        "{} knn, {} hcp estimates, {} sfr solves, {} violations",
        checked[0],
        checked[1],
        checked[2],
        violations.len()
    );
    if violations.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", violations[0]))
    }
}

fn movielens_path() -> Option<PathBuf> {
    let path = match std::env::var_os("SFR_MOVIELENS_1M") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-1m/ratings.dat"),
    };
    path.is_file().then_some(path)
}

const MISSING: &str = "MovieLens 1M ratings.dat not found (set SFR_MOVIELENS_1M or place it at data/ml-1m/ratings.dat)";

fn load_movielens() -> Result<RatingMatrix, String> {
    let path = movielens_path().ok_or(MISSING)?;
    let file = File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_ratings(BufReader::new(file), Format::MovielensDat, BOUNDS).map_err(|e| e.to_string())
}

/// Every report file of one evaluation run, as bytes.
fn report_files(ratings: &RatingMatrix) -> Result<(EvaluationReport, Vec<Vec<u8>>), String> {
    let err = |e: sfr_core::Error| e.to_string();
    let split = split_ratings(ratings, 0.8, 42).map_err(err)?;
    let graph = build_item_graph(&split.train, 0.5, 3).map_err(err)?;
    let report = evaluate(&METHODS, &split, &graph, &SolverConfig::default()).map_err(err)?;
    let mut rmse = Vec::new();
    let mut by_truth = Vec::new();
    let mut manifest = Vec::new();
    report.write_rmse_tsv(&mut rmse).map_err(err)?;
    report.write_truth_tsv(&mut by_truth).map_err(err)?;
    write_split_manifest(&split, &mut manifest).map_err(err)?;
    let json = serde_json::to_vec_pretty(&report).unwrap();
    Ok((report, vec![json, rmse, by_truth, manifest]))
}

fn linearity(ratings: &RatingMatrix) -> Result<LinearityHistogram, String> {
    let graph = build_item_graph(ratings, 0.5, 3).map_err(|e| e.to_string())?;
    examine_linearity(ratings, &graph, 0.9, 5).map_err(|e| e.to_string())
}

fn movielens_end_to_end() -> Outcome {
    let ratings = load_movielens()?;
    let (files, took) = timed(|| report_files(&ratings));
    let (report, _) = files?;
    let rmse = |m| report.method(m).and_then(|r| r.rmse_all).unwrap_or(f64::NAN);
    let (knn, hcp, sfr) = (rmse(Method::Knn), rmse(Method::Hcp), rmse(Method::Sfr));
    let gain = 1.0 - sfr / knn;
    let detail = format!(
        "bound fraction {:.2}% (higher {:.2}%, lower {:.2}%), rmse knn {knn:.4} hcp {hcp:.4} sfr {sfr:.4}, gain {:.1}%, {:.1} min",
        100.0 * report.bound_fraction,
        100.0 * report.higher_fraction,
        100.0 * report.lower_fraction,
        100.0 * gain,
        took.as_secs_f64() / 60.0
    );
    let band = (0.12..=0.22).contains(&report.bound_fraction);
    if band && knn > hcp && hcp > sfr && gain >= 0.2 && took <= Duration::from_secs(7200) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn movielens_linearity() -> Outcome {
    let ratings = load_movielens()?;
    let hist = linearity(&ratings)?;
    let counts = hist.counts();
    let zero = hist.zero_bin();
    let modal = hist.modal_bin() == Some(zero);
    let falls = (0..4).all(|k| counts[zero + k + 1] <= counts[zero + k] && counts[zero - k - 1] <= counts[zero - k]);
    let window: Vec<u64> = counts[zero - 4..=zero + 4].to_vec();
    let detail = format!("zero bin modal: {modal}, counts around zero {window:?}");
    if modal && falls {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Many-user synthetic dataset with three taste groups and rating noise.
fn synthetic_ratings() -> RatingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut csv = String::from("user,item,rating\n");
    for u in 0..150 {
        let taste: [f64; 3] = [
            rng.random_range(1.0..5.0),
            rng.random_range(1.0..5.0),
            rng.random_range(1.0..5.0),
        ];
        for i in 0..40 {
            if rng.random_bool(0.4) {
                continue;
            }
            let r = (taste[i % 3] + rng.random_range(-0.8..0.8)).round().clamp(1.0, 5.0);
            csv.push_str(&format!("u{u},m{i},{r}\n"));
        }
    }
    parse_ratings(csv.as_bytes(), Format::Csv, BOUNDS).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn determinism() -> Outcome {
    let run = || -> Result<Vec<Vec<u8>>, String> {
        let mut files = Vec::new();
        for toy in [square_toy(), ladder_toy_26()] {
            let report = evaluate_toy(&toy, &METHODS, &SolverConfig::default()).map_err(|e| e.to_string())?;
            files.push(serde_json::to_vec_pretty(&report).unwrap());
        }
        let synthetic = synthetic_ratings();
        files.extend(report_files(&synthetic)?.1);
        let mut tsv = Vec::new();
        linearity(&synthetic)?.write_tsv(&mut tsv).map_err(|e| e.to_string())?;
        files.push(tsv);
        Ok(files)
    };
    let (one, eight) = (in_pool(1, run)?, in_pool(8, run)?);
    if one != eight {
        return Err("toy or synthetic report files differ between 1 and 8 threads".into());
    }
    let local = format!(
        "{} toy and synthetic report files identical across 1 and 8 threads",
        one.len()
    );

    let ratings = load_movielens().map_err(|e| format!("{local}; {e}"))?;
    let run = || -> Result<Vec<Vec<u8>>, String> {
        let mut files = report_files(&ratings)?.1;
        let mut tsv = Vec::new();
        linearity(&ratings)?.write_tsv(&mut tsv).map_err(|e| e.to_string())?;
        files.push(tsv);
        Ok(files)
    };
    if in_pool(1, run)? != in_pool(8, run)? {
        return Err(format!(
            "{local}; MovieLens report files differ between 1 and 8 threads"
        ));
    }
    Ok(format!("{local}; MovieLens report files identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("square toy HCP exactness", square_hcp),
        ("ladder toy HCP labels", ladder_hcp),
        ("ladder toy SFR recovery", ladder_sfr),
        ("ladder toy l0 oracle", ladder_oracle),
        ("SFR gradient against finite differences", gradient_check),
        ("estimator bound invariants", invariants),
        ("MovieLens 1M end to end", movielens_end_to_end),
        ("MovieLens 1M linearity", movielens_linearity),
        ("determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
